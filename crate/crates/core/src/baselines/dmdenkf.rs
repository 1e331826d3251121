use nalgebra::{DMatrix, DVector};

use super::dmd::dmd_fit;
use super::hankel::{hankel_embed, HankelBuffer};
use crate::enkf::{FilterKind, KaeFilter, LatentMap, LinearMap, NoiseConfig};
use crate::error::{Error, Result};

/// Latent EnKF whose encoder and decoder are the real rotation basis of a
/// spin-up Hankel-DMD fit.
#[derive(Debug, Clone)]
pub struct HankelDmdEnkf {
    pub buffer: HankelBuffer,
    pub filter: KaeFilter<LinearMap>,
    n: usize,
}

/// Real rotation basis of a rank-`r` Hankel-DMD of `spinup` (`n x m`), with
/// each latent pair scaled to unit RMS radius over the spin-up.
pub fn hankel_dmd_map(
    spinup: &DMatrix<f64>,
    d: usize,
    r: usize,
) -> Result<(LinearMap, Vec<f64>, Vec<f64>)> {
    let h = hankel_embed(spinup, d)?;
    let m = h.ncols();
    if m < 2 {
        return Err(Error::Config(
            "spin-up too short for a Hankel-DMD fit".into(),
        ));
    }
    let dmd = dmd_fit(
        &h.columns(0, m - 1).into_owned(),
        &h.columns(1, m - 1).into_owned(),
        r,
    )?;
    let (mut basis, tau, theta) = dmd.real_rotation_basis()?;
    let mut enc = basis
        .clone()
        .pseudo_inverse(1e-12)
        .map_err(|e| Error::Numerical(format!("basis pseudo-inverse failed: {e}")))?;
    let z = &enc * &h;
    for p in 0..tau.len() {
        let r2 = (z.row(2 * p).norm_squared() + z.row(2 * p + 1).norm_squared()) / m as f64;
        let c = r2.sqrt();
        if c > 1e-12 && c.is_finite() {
            for k in [2 * p, 2 * p + 1] {
                enc.row_mut(k).scale_mut(1.0 / c);
                basis.column_mut(k).scale_mut(c);
            }
        }
    }
    let map = LinearMap::new(enc, basis, DVector::zeros(h.nrows()))?;
    Ok((map, tau, theta))
}

impl HankelDmdEnkf {
    pub fn fit(
        spinup: &DMatrix<f64>,
        d: usize,
        r: usize,
        noise: NoiseConfig,
        members: usize,
        rng: &mut crate::Rng,
    ) -> Result<Self> {
        let (map, tau, theta) = hankel_dmd_map(spinup, d, r)?;
        let n = spinup.nrows();
        let mut buffer = HankelBuffer::new(n, d)?;
        buffer.prime(spinup)?;
        let last = hankel_embed(&spinup.columns(spinup.ncols() - d, d).into_owned(), d)?;
        let filter = KaeFilter::new(
            map,
            FilterKind::Latent,
            &last.column(0).into_owned(),
            &tau,
            &theta,
            noise,
            members,
            rng,
        )?;
        Ok(Self { buffer, filter, n })
    }

    /// Hankel-embed the raw measurement and assimilate it.
    pub fn step(&mut self, x_new: &DVector<f64>, rng: &mut crate::Rng) -> Result<()> {
        let h = self
            .buffer
            .push(x_new)?
            .ok_or_else(|| Error::State("delay buffer not primed".into()))?;
        self.filter.step(&h, rng)
    }

    /// Mean forecast of the measurement `dt` steps ahead (the top block of
    /// the forecast Hankel state).
    pub fn forecast(&self, dt: u32) -> Result<DVector<f64>> {
        Ok(self.filter.forecast(dt)?.mean.rows(0, self.n).into_owned())
    }

    pub fn estimates(&self) -> (Vec<f64>, Vec<f64>) {
        self.filter.estimates()
    }

    pub fn map(&self) -> &LinearMap {
        &self.filter.map
    }

    pub fn latent_dim(&self) -> usize {
        self.filter.map.latent_dim()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::koopman::circular_distance;

    #[test]
    fn linear_rotation_tracked() {
        let theta = 0.2;
        let lift = DMatrix::from_fn(4, 2, |i, j| ((i + 2 * j) as f64 * 0.9).cos());
        let latent = DMatrix::from_fn(2, 300, |i, k| {
            let a = theta * k as f64;
            if i == 0 {
                a.cos()
            } else {
                a.sin()
            }
        });
        let data = lift * latent;
        let mut rng = crate::seeded_rng(0);
        let noise = NoiseConfig {
            alpha5: 1e-6,
            ..Default::default()
        };
        let mut f = HankelDmdEnkf::fit(
            &data.columns(0, 100).into_owned(),
            2,
            2,
            noise,
            50,
            &mut rng,
        )
        .unwrap();
        let mut errs = Vec::new();
        for k in 100..300 {
            let fc = f.forecast(1).unwrap();
            errs.push((fc - data.column(k)).amax());
            f.step(&data.column(k).into_owned(), &mut rng).unwrap();
        }
        let (_, th) = f.estimates();
        assert!(circular_distance(th[0], theta) < 1e-3, "{th:?}");
        assert!(errs[150..].iter().all(|e| *e < 1e-2));
    }
}
