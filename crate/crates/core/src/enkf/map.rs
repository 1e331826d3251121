use nalgebra::{DMatrix, DVector};

use crate::error::{ensure_dim, Result};
use crate::kae::KaeModel;

/// Encoder/decoder pair acting on raw (uncentred) measurements.
pub trait LatentMap {
    fn input_dim(&self) -> usize;
    fn latent_dim(&self) -> usize;
    fn encode(&self, x: &DVector<f64>) -> Result<DVector<f64>>;
    fn decode(&self, z: &DVector<f64>) -> Result<DVector<f64>>;
    /// `∂encode/∂x` at `x`.
    fn encode_jacobian(&self, x: &DVector<f64>) -> Result<DMatrix<f64>>;

    fn decode_batch(&self, z: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let cols = z
            .column_iter()
            .map(|c| self.decode(&c.into_owned()))
            .collect::<Result<Vec<_>>>()?;
        Ok(DMatrix::from_columns(&cols))
    }

    fn encode_batch(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let cols = x
            .column_iter()
            .map(|c| self.encode(&c.into_owned()))
            .collect::<Result<Vec<_>>>()?;
        Ok(DMatrix::from_columns(&cols))
    }
}

impl LatentMap for KaeModel {
    fn input_dim(&self) -> usize {
        KaeModel::input_dim(self)
    }

    fn latent_dim(&self) -> usize {
        KaeModel::latent_dim(self)
    }

    fn encode(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        KaeModel::encode(self, &self.center(x)?)
    }

    fn decode(&self, z: &DVector<f64>) -> Result<DVector<f64>> {
        self.uncenter(&KaeModel::decode(self, z)?)
    }

    fn encode_jacobian(&self, x: &DVector<f64>) -> Result<DMatrix<f64>> {
        self.encoder.jacobian(&self.center(x)?)
    }

    fn decode_batch(&self, z: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let mut out = KaeModel::decode_batch(self, z)?;
        for mut c in out.column_iter_mut() {
            c += &self.mean;
        }
        Ok(out)
    }

    fn encode_batch(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        KaeModel::encode_batch(self, &self.center_columns(x)?)
    }
}

/// Affine map `z = E (x - μ)`, `x = D z + μ`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearMap {
    pub encoder: DMatrix<f64>,
    pub decoder: DMatrix<f64>,
    pub mean: DVector<f64>,
}

impl LinearMap {
    pub fn new(encoder: DMatrix<f64>, decoder: DMatrix<f64>, mean: DVector<f64>) -> Result<Self> {
        ensure_dim("linear decoder rows", encoder.ncols(), decoder.nrows())?;
        ensure_dim("linear decoder columns", encoder.nrows(), decoder.ncols())?;
        ensure_dim("linear map mean", encoder.ncols(), mean.len())?;
        Ok(Self {
            encoder,
            decoder,
            mean,
        })
    }

    pub fn identity(n: usize) -> Self {
        Self {
            encoder: DMatrix::identity(n, n),
            decoder: DMatrix::identity(n, n),
            mean: DVector::zeros(n),
        }
    }
}

impl LatentMap for LinearMap {
    fn input_dim(&self) -> usize {
        self.encoder.ncols()
    }

    fn latent_dim(&self) -> usize {
        self.encoder.nrows()
    }

    fn encode(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        ensure_dim("linear map input", self.input_dim(), x.len())?;
        Ok(&self.encoder * (x - &self.mean))
    }

    fn decode(&self, z: &DVector<f64>) -> Result<DVector<f64>> {
        ensure_dim("linear map latent", self.latent_dim(), z.len())?;
        Ok(&self.decoder * z + &self.mean)
    }

    fn encode_jacobian(&self, x: &DVector<f64>) -> Result<DMatrix<f64>> {
        ensure_dim("linear map input", self.input_dim(), x.len())?;
        Ok(self.encoder.clone())
    }
}

/// Measurement variance `σ²` pushed through the encoder: `σ²` times the mean
/// squared Frobenius norm of the encoder Jacobian over `samples`, divided by
/// the latent dimension.
pub fn latent_observation_variance<M: LatentMap + ?Sized>(
    map: &M,
    samples: &DMatrix<f64>,
    sigma: f64,
) -> Result<f64> {
    ensure_dim("sample rows", map.input_dim(), samples.nrows())?;
    if samples.ncols() == 0 {
        return Ok(sigma * sigma);
    }
    let mut total = 0.0;
    for c in samples.column_iter() {
        total += map.encode_jacobian(&c.into_owned())?.norm_squared();
    }
    Ok(sigma * sigma * total / (samples.ncols() * map.latent_dim()) as f64)
}
