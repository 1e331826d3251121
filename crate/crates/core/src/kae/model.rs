use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{ensure_dim, Error, Result};
use crate::koopman::{apply_blocks, KoopmanSpectrum};
use crate::tensor_nn::{init_svd_linear, init_xavier, Activation, DenseLayer, NetworkParams};

/// Layer widths of the encoder. The decoder uses the same widths in reverse.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Architecture {
    pub input_dim: usize,
    /// Hidden widths; the first entry is the output width of the
    /// SVD-initialised input layer.
    pub hidden: Vec<usize>,
    /// Number of conjugate eigenvalue pairs `f`; the latent layer has `2f` units.
    pub pairs: usize,
}

impl Architecture {
    pub fn new(input_dim: usize, hidden: Vec<usize>, pairs: usize) -> Result<Self> {
        let arch = Self {
            input_dim,
            hidden,
            pairs,
        };
        arch.validate()?;
        Ok(arch)
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.pairs == 0 {
            return Err(Error::Config(
                "input dimension and pair count must be positive".into(),
            ));
        }
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            return Err(Error::Config(
                "at least one positive hidden width is required".into(),
            ));
        }
        Ok(())
    }

    pub fn latent_dim(&self) -> usize {
        2 * self.pairs
    }

    /// `n -> h0 -> ... -> h_last` with ReLU, then `h_last -> 2f` with no
    /// activation.
    fn encoder_layers(&self) -> Vec<DenseLayer> {
        let mut layers = vec![DenseLayer::zeros(
            self.input_dim,
            self.hidden[0],
            Activation::Relu,
        )];
        for w in self.hidden.windows(2) {
            layers.push(DenseLayer::zeros(w[0], w[1], Activation::Relu));
        }
        let last = *self.hidden.last().expect("validated non-empty");
        layers.push(DenseLayer::zeros(
            last,
            self.latent_dim(),
            Activation::Identity,
        ));
        layers
    }

    /// Mirror image: ReLU on every layer except the final `h0 -> n`.
    fn decoder_layers(&self) -> Vec<DenseLayer> {
        let rev: Vec<usize> = self.hidden.iter().rev().copied().collect();
        let mut layers = vec![DenseLayer::zeros(
            self.latent_dim(),
            rev[0],
            Activation::Relu,
        )];
        for w in rev.windows(2) {
            layers.push(DenseLayer::zeros(w[0], w[1], Activation::Relu));
        }
        layers.push(DenseLayer::zeros(
            rev[rev.len() - 1],
            self.input_dim,
            Activation::Identity,
        ));
        layers
    }
}

/// Encoder, decoder, Koopman spectrum and the centring mean.
#[derive(Debug, Clone, PartialEq)]
pub struct KaeModel {
    pub encoder: NetworkParams,
    pub decoder: NetworkParams,
    pub spectrum: KoopmanSpectrum,
    pub mean: DVector<f64>,
}

impl KaeModel {
    pub fn from_parts(
        encoder: NetworkParams,
        decoder: NetworkParams,
        spectrum: KoopmanSpectrum,
        mean: DVector<f64>,
    ) -> Result<Self> {
        let nz = spectrum.latent_dim();
        ensure_dim("encoder output", nz, encoder.output_dim())?;
        ensure_dim("decoder input", nz, decoder.input_dim())?;
        ensure_dim("decoder output", encoder.input_dim(), decoder.output_dim())?;
        ensure_dim("data mean", encoder.input_dim(), mean.len())?;
        Ok(Self {
            encoder,
            decoder,
            spectrum,
            mean,
        })
    }

    /// All-zero networks with unit moduli; mainly for tests and loading.
    pub fn zeros(arch: &Architecture, theta: Vec<f64>) -> Result<Self> {
        arch.validate()?;
        ensure_dim("initial arguments", arch.pairs, theta.len())?;
        Self::from_parts(
            NetworkParams::new(arch.encoder_layers())?,
            NetworkParams::new(arch.decoder_layers())?,
            KoopmanSpectrum::unit(theta)?,
            DVector::zeros(arch.input_dim),
        )
    }

    /// Xavier everywhere, then truncated-SVD weights on the encoder's first
    /// and the decoder's last layer. `centred` is the `n x m` spin-up matrix
    /// after mean removal.
    pub fn initialise(
        arch: &Architecture,
        centred: &DMatrix<f64>,
        mean: DVector<f64>,
        theta: Vec<f64>,
        rng: &mut crate::Rng,
    ) -> Result<Self> {
        ensure_dim("spin-up rows", arch.input_dim, centred.nrows())?;
        let mut model = Self::zeros(arch, theta)?;
        model.mean = mean;
        init_xavier(&mut model.encoder, rng);
        init_xavier(&mut model.decoder, rng);
        let svd = init_svd_linear(centred, arch.hidden[0])?;
        model.encoder.layers_mut()[0].weights = svd.encoder_weights;
        let last = model.decoder.layers().len() - 1;
        model.decoder.layers_mut()[last].weights = svd.decoder_weights;
        Ok(model)
    }

    pub fn input_dim(&self) -> usize {
        self.encoder.input_dim()
    }

    pub fn latent_dim(&self) -> usize {
        self.spectrum.latent_dim()
    }

    pub fn pairs(&self) -> usize {
        self.spectrum.pairs()
    }

    pub fn center(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        ensure_dim("raw state", self.mean.len(), x.len())?;
        Ok(x - &self.mean)
    }

    pub fn uncenter(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        ensure_dim("centred state", self.mean.len(), x.len())?;
        Ok(x + &self.mean)
    }

    /// Subtract the mean from every column.
    pub fn center_columns(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        ensure_dim("raw state rows", self.mean.len(), x.nrows())?;
        let mut out = x.clone();
        for mut col in out.column_iter_mut() {
            col -= &self.mean;
        }
        Ok(out)
    }

    /// Encode a centred state.
    pub fn encode(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        self.encoder.forward(x)
    }

    pub fn decode(&self, z: &DVector<f64>) -> Result<DVector<f64>> {
        self.decoder.forward(z)
    }

    pub fn encode_batch(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        self.encoder.forward_batch(x)
    }

    pub fn decode_batch(&self, z: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        self.decoder.forward_batch(z)
    }

    /// `decode(K^dt encode(x))` on a centred state.
    pub fn forecast(&self, x: &DVector<f64>, dt: u32) -> Result<DVector<f64>> {
        let z = self.encode(x)?;
        self.decode(&self.spectrum.apply(&z, dt)?)
    }

    /// Rescale each latent pair to unit RMS radius over `centred` columns.
    /// The map `x -> decode(K^dt encode(x))` is unchanged because a scalar
    /// multiple of a `2x2` block commutes with the rotation.
    pub fn normalise_latent(&mut self, centred: &DMatrix<f64>) -> Result<Vec<f64>> {
        let z = self.encode_batch(centred)?;
        let m = z.ncols().max(1) as f64;
        let mut scales = Vec::with_capacity(self.pairs());
        let enc_last = self.encoder.layers().len() - 1;
        for i in 0..self.pairs() {
            let r2 = (z.row(2 * i).norm_squared() + z.row(2 * i + 1).norm_squared()) / m;
            let c = r2.sqrt();
            if !(c.is_finite() && c > 1e-12) {
                scales.push(1.0);
                continue;
            }
            let enc = &mut self.encoder.layers_mut()[enc_last];
            for row in [2 * i, 2 * i + 1] {
                enc.weights.row_mut(row).scale_mut(1.0 / c);
                enc.bias[row] /= c;
            }
            let dec = &mut self.decoder.layers_mut()[0];
            for col in [2 * i, 2 * i + 1] {
                dec.weights.column_mut(col).scale_mut(c);
            }
            scales.push(c);
        }
        Ok(scales)
    }

    pub fn num_params(&self) -> usize {
        self.encoder.num_params() + self.decoder.num_params() + 2 * self.pairs()
    }

    /// Encoder, decoder, moduli, arguments.
    pub fn write_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        self.encoder.write_flat(&mut out);
        self.decoder.write_flat(&mut out);
        out.extend_from_slice(self.spectrum.tau());
        out.extend_from_slice(self.spectrum.theta());
        out
    }

    /// Inverse of [`Self::write_flat`]. Moduli are floored at `1e-6` and
    /// arguments re-wrapped.
    pub fn read_flat(&mut self, src: &[f64]) -> Result<()> {
        ensure_dim("flat model parameters", self.num_params(), src.len())?;
        let mut at = self.encoder.read_flat(src)?;
        at += self.decoder.read_flat(&src[at..])?;
        let f = self.pairs();
        for i in 0..f {
            self.spectrum.set_tau(i, src[at + i].max(TAU_FLOOR))?;
            self.spectrum.set_theta(i, src[at + f + i]);
        }
        Ok(())
    }
}

/// Lower bound on eigenvalue moduli after any update.
pub const TAU_FLOOR: f64 = 1e-6;

/// Apply `K^{dt_j}` to column `j` of `z`.
pub fn propagate_columns(
    spectrum: &KoopmanSpectrum,
    z: &DMatrix<f64>,
    dts: &[u32],
) -> Result<DMatrix<f64>> {
    ensure_dim("latent rows", spectrum.latent_dim(), z.nrows())?;
    ensure_dim("horizon count", z.ncols(), dts.len())?;
    let mut out = DMatrix::zeros(z.nrows(), z.ncols());
    for (j, &dt) in dts.iter().enumerate() {
        apply_blocks(
            spectrum.tau(),
            spectrum.theta(),
            z.column(j).as_slice(),
            dt,
            out.column_mut(j).as_mut_slice(),
        );
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng as _;

    fn arch() -> Architecture {
        Architecture::new(6, vec![4, 3], 1).unwrap()
    }

    #[test]
    fn layer_shapes_mirror() {
        let m = KaeModel::zeros(&arch(), vec![0.5]).unwrap();
        let enc: Vec<(usize, usize)> = m
            .encoder
            .layers()
            .iter()
            .map(|l| (l.in_dim(), l.out_dim()))
            .collect();
        let dec: Vec<(usize, usize)> = m
            .decoder
            .layers()
            .iter()
            .map(|l| (l.in_dim(), l.out_dim()))
            .collect();
        assert_eq!(enc, vec![(6, 4), (4, 3), (3, 2)]);
        assert_eq!(dec, vec![(2, 3), (3, 4), (4, 6)]);
        assert_eq!(m.encoder.layers()[0].activation, Activation::Relu);
        assert_eq!(m.encoder.layers()[2].activation, Activation::Identity);
        assert_eq!(m.decoder.layers()[2].activation, Activation::Identity);
    }

    #[test]
    fn zero_input_zero_latent() {
        let mut rng = crate::seeded_rng(1);
        let x = DMatrix::from_fn(6, 20, |_, _| rng.random_range(-1.0..1.0));
        let m = KaeModel::initialise(&arch(), &x, DVector::zeros(6), vec![0.5], &mut rng).unwrap();
        assert_eq!(m.encode(&DVector::zeros(6)).unwrap(), DVector::zeros(2));
    }

    #[test]
    fn forecast_dt_zero_is_round_trip() {
        let mut rng = crate::seeded_rng(2);
        let x = DMatrix::from_fn(6, 20, |_, _| rng.random_range(-1.0..1.0));
        let m = KaeModel::initialise(&arch(), &x, DVector::zeros(6), vec![0.5], &mut rng).unwrap();
        let v = x.column(3).into_owned();
        let round = m.decode(&m.encode(&v).unwrap()).unwrap();
        assert_eq!(m.forecast(&v, 0).unwrap(), round);
    }

    #[test]
    fn normalisation_preserves_forecasts() {
        let mut rng = crate::seeded_rng(3);
        let x = DMatrix::from_fn(6, 30, |_, _| rng.random_range(-1.0..1.0));
        let a = Architecture::new(6, vec![4, 5], 2).unwrap();
        let mut m =
            KaeModel::initialise(&a, &x, DVector::zeros(6), vec![0.4, 1.3], &mut rng).unwrap();
        for l in m.encoder.layers_mut() {
            l.bias.apply(|b| *b = 0.1);
        }
        let before: Vec<_> = (0..5)
            .map(|dt| m.forecast(&x.column(7).into_owned(), dt).unwrap())
            .collect();
        m.normalise_latent(&x).unwrap();
        for (dt, b) in before.iter().enumerate() {
            let after = m.forecast(&x.column(7).into_owned(), dt as u32).unwrap();
            assert!((after - b).amax() < 1e-12);
        }
        let z = m.encode_batch(&x).unwrap();
        for i in 0..2 {
            let r2 = (z.row(2 * i).norm_squared() + z.row(2 * i + 1).norm_squared()) / 30.0;
            assert!((r2 - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn flat_round_trip() {
        let mut rng = crate::seeded_rng(4);
        let x = DMatrix::from_fn(6, 20, |_, _| rng.random_range(-1.0..1.0));
        let m = KaeModel::initialise(&arch(), &x, DVector::zeros(6), vec![0.5], &mut rng).unwrap();
        let flat = m.write_flat();
        assert_eq!(flat.len(), m.num_params());
        let mut other = KaeModel::zeros(&arch(), vec![0.0]).unwrap();
        other.read_flat(&flat).unwrap();
        assert_eq!(other.encoder, m.encoder);
        assert_eq!(other.spectrum, m.spectrum);
    }

    #[test]
    fn bad_architecture_rejected() {
        assert!(Architecture::new(5, vec![], 1).is_err());
        assert!(Architecture::new(5, vec![3], 0).is_err());
    }
}
