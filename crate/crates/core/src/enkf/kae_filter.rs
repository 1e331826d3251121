use std::f64::consts::{PI, TAU};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::core::{
    enkf_step, init_ensemble, sample_covariance, FilterEnsemble, GaussianSampler, ObservationModel,
};
use super::map::LatentMap;
use super::NoiseConfig;
use crate::error::{ensure_dim, Error, Result};
use crate::kae::TAU_FLOOR;
use crate::koopman::{apply_blocks, wrap_angle};

/// Which block the filter carries in front of `[τ | θ]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FilterKind {
    /// Encoded state `x̃`, observed through the encoder.
    Latent,
    /// Raw state `x`, observed directly.
    FullState,
}

fn pairs_of<M: LatentMap + ?Sized>(map: &M) -> Result<usize> {
    let nz = map.latent_dim();
    if nz == 0 || !nz.is_multiple_of(2) {
        return Err(Error::Config(format!(
            "latent dimension {nz} is not a positive even number"
        )));
    }
    Ok(nz / 2)
}

fn state_dim<M: LatentMap + ?Sized>(map: &M, kind: FilterKind) -> usize {
    match kind {
        FilterKind::Latent => map.latent_dim(),
        FilterKind::FullState => map.input_dim(),
    }
}

fn circular_mean(values: impl Iterator<Item = f64>) -> f64 {
    let (s, c) = values.fold((0.0, 0.0), |(s, c), v| (s + v.sin(), c + v.cos()));
    wrap_angle(s.atan2(c))
}

/// Shift each member's arguments to within `π` of the ensemble circular mean
/// so that the sample covariance does not see the `2π` seam.
fn unwrap_arguments(ens: &mut FilterEnsemble, theta_start: usize, f: usize) -> Vec<f64> {
    (0..f)
        .map(|i| {
            let row = theta_start + i;
            let centre = circular_mean(ens.members.row(row).iter().copied());
            for v in ens.members.row_mut(row).iter_mut() {
                let mut d = (*v - centre).rem_euclid(TAU);
                if d > PI {
                    d -= TAU;
                }
                *v = centre + d;
            }
            centre
        })
        .collect()
}

fn finish_update(ens: &mut FilterEnsemble, s: usize, f: usize) {
    for i in 0..f {
        for v in ens.members.row_mut(s + i).iter_mut() {
            *v = v.max(TAU_FLOOR);
        }
        for v in ens.members.row_mut(s + f + i).iter_mut() {
            *v = wrap_angle(*v);
        }
    }
}

fn process_noise(s: usize, f: usize, noise: &NoiseConfig) -> Result<GaussianSampler> {
    let mut q = vec![noise.alpha4; s];
    q.extend(std::iter::repeat_n(noise.alpha2, f));
    q.extend(std::iter::repeat_n(noise.alpha3, f));
    GaussianSampler::diagonal(&q)
}

fn check_layout(ens: &FilterEnsemble, s: usize, f: usize) -> Result<()> {
    ensure_dim("ensemble layout", s + 2 * f, ens.dim())
}

/// One latent-filter cycle on a `[x̃ | τ | θ]` ensemble. `x_new` is a raw
/// measurement; the map handles centring.
pub fn latent_filter_step<M: LatentMap + ?Sized>(
    map: &M,
    ens: &mut FilterEnsemble,
    x_new: &DVector<f64>,
    noise: &NoiseConfig,
    rng: &mut crate::Rng,
) -> Result<()> {
    let f = pairs_of(map)?;
    let s = 2 * f;
    check_layout(ens, s, f)?;
    let y = map.encode(x_new)?;
    unwrap_arguments(ens, s + f, f);
    let q = process_noise(s, f, noise)?;
    let obs = ObservationModel::selector(s, s + 2 * f, noise.alpha5)?;
    let mut out = vec![0.0; s];
    enkf_step(
        ens,
        |m| {
            let (tau, theta) = (&m.as_slice()[s..s + f], &m.as_slice()[s + f..]);
            apply_blocks(tau, theta, &m.as_slice()[..s], 1, &mut out);
            let mut next = m.clone();
            next.rows_mut(0, s).copy_from_slice(&out);
            Ok(next)
        },
        &q,
        &obs,
        &y,
        rng,
    )?;
    finish_update(ens, s, f);
    Ok(())
}

/// One full-state cycle on a `[x | τ | θ]` ensemble: each member's state is
/// encoded, advanced by its own spectrum, and decoded; the raw measurement is
/// observed directly.
pub fn fullstate_filter_step<M: LatentMap + ?Sized>(
    map: &M,
    ens: &mut FilterEnsemble,
    x_new: &DVector<f64>,
    noise: &NoiseConfig,
    rng: &mut crate::Rng,
) -> Result<()> {
    let f = pairs_of(map)?;
    let n = map.input_dim();
    check_layout(ens, n, f)?;
    ensure_dim("measurement", n, x_new.len())?;
    unwrap_arguments(ens, n + f, f);
    let q = process_noise(n, f, noise)?;
    let obs = ObservationModel::selector(n, n + 2 * f, noise.alpha5)?;
    let mut out = vec![0.0; 2 * f];
    enkf_step(
        ens,
        |m| {
            let z = map.encode(&m.rows(0, n).into_owned())?;
            let (tau, theta) = (&m.as_slice()[n..n + f], &m.as_slice()[n + f..]);
            apply_blocks(tau, theta, z.as_slice(), 1, &mut out);
            let x = map.decode(&DVector::from_column_slice(&out))?;
            let mut next = m.clone();
            next.rows_mut(0, n).copy_from(&x);
            Ok(next)
        },
        &q,
        &obs,
        x_new,
        rng,
    )?;
    finish_update(ens, n, f);
    Ok(())
}

/// Per-member decoded forecasts with their mean and standard deviation.
#[derive(Debug, Clone)]
pub struct EnsembleForecast {
    /// `n x N`.
    pub members: DMatrix<f64>,
    pub mean: DVector<f64>,
    /// Unbiased per-coordinate standard deviation.
    pub std: DVector<f64>,
}

/// Encoded states of every member, `2f x N`.
fn latent_block<M: LatentMap + ?Sized>(
    map: &M,
    kind: FilterKind,
    ens: &FilterEnsemble,
) -> Result<DMatrix<f64>> {
    let s = state_dim(map, kind);
    let block = ens.members.rows(0, s).into_owned();
    match kind {
        FilterKind::Latent => Ok(block),
        FilterKind::FullState => map.encode_batch(&block),
    }
}

/// `dt`-step forecast of every member using that member's own `(τ, θ)`.
/// The mean is the mean of the decodes, not the decode of the mean.
pub fn forecast_ensemble<M: LatentMap + ?Sized>(
    map: &M,
    kind: FilterKind,
    ens: &FilterEnsemble,
    dt: u32,
) -> Result<EnsembleForecast> {
    let f = pairs_of(map)?;
    let s = state_dim(map, kind);
    check_layout(ens, s, f)?;
    let z = latent_block(map, kind, ens)?;
    let mut advanced = DMatrix::zeros(2 * f, ens.size());
    for j in 0..ens.size() {
        let m = ens.members.column(j);
        let tau: Vec<f64> = m.rows(s, f).iter().copied().collect();
        let theta: Vec<f64> = m.rows(s + f, f).iter().copied().collect();
        apply_blocks(
            &tau,
            &theta,
            z.column(j).as_slice(),
            dt,
            advanced.column_mut(j).as_mut_slice(),
        );
    }
    let members = map.decode_batch(&advanced)?;
    let mean = members.column_mean();
    let n = members.ncols() as f64;
    // shifted by the first member so identical members give exactly zero
    let std = DVector::from_iterator(
        members.nrows(),
        members.row_iter().map(|r| {
            let (s1, s2) = r.iter().fold((0.0, 0.0), |(a, b), v| {
                let d = v - r[0];
                (a + d, b + d * d)
            });
            ((s2 - s1 * s1 / n).max(0.0) / (n - 1.0)).sqrt()
        }),
    );
    Ok(EnsembleForecast { members, mean, std })
}

/// Determinant of the unbiased sample covariance of the columns of `x`.
pub fn generalized_variance(x: &DMatrix<f64>) -> f64 {
    if x.ncols() < 2 {
        return 0.0;
    }
    sample_covariance(x).determinant()
}

/// A running filter: the map, the layout, the noise levels and the ensemble.
#[derive(Debug, Clone)]
pub struct KaeFilter<M> {
    pub map: M,
    pub kind: FilterKind,
    pub noise: NoiseConfig,
    pub ensemble: FilterEnsemble,
}

impl<M: LatentMap> KaeFilter<M> {
    /// Draw `n` members around `[encode(x0) | τ | θ]` (latent) or
    /// `[x0 | τ | θ]` (full state) with `P₀ = diag(α₁I, α₂I, α₃I)`.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        map: M,
        kind: FilterKind,
        x0: &DVector<f64>,
        tau: &[f64],
        theta: &[f64],
        noise: NoiseConfig,
        members: usize,
        rng: &mut crate::Rng,
    ) -> Result<Self> {
        noise.validate()?;
        let f = pairs_of(&map)?;
        ensure_dim("initial moduli", f, tau.len())?;
        ensure_dim("initial arguments", f, theta.len())?;
        let head = match kind {
            FilterKind::Latent => map.encode(x0)?,
            FilterKind::FullState => {
                ensure_dim("initial state", map.input_dim(), x0.len())?;
                x0.clone()
            }
        };
        let s = head.len();
        let mut z0 = DVector::zeros(s + 2 * f);
        z0.rows_mut(0, s).copy_from(&head);
        for i in 0..f {
            z0[s + i] = tau[i];
            z0[s + f + i] = wrap_angle(theta[i]);
        }
        let mut p0 = vec![noise.alpha1; s];
        p0.extend(std::iter::repeat_n(noise.alpha2, f));
        p0.extend(std::iter::repeat_n(noise.alpha3, f));
        let mut ensemble = init_ensemble(&z0, &GaussianSampler::diagonal(&p0)?, members, rng)?;
        finish_update(&mut ensemble, s, f);
        Ok(Self {
            map,
            kind,
            noise,
            ensemble,
        })
    }

    pub fn pairs(&self) -> usize {
        self.map.latent_dim() / 2
    }

    fn offset(&self) -> usize {
        state_dim(&self.map, self.kind)
    }

    /// Assimilate one raw measurement.
    pub fn step(&mut self, x_new: &DVector<f64>, rng: &mut crate::Rng) -> Result<()> {
        match self.kind {
            FilterKind::Latent => {
                latent_filter_step(&self.map, &mut self.ensemble, x_new, &self.noise, rng)
            }
            FilterKind::FullState => {
                fullstate_filter_step(&self.map, &mut self.ensemble, x_new, &self.noise, rng)
            }
        }
    }

    /// Arithmetic mean of the moduli and circular mean of the arguments.
    pub fn estimates(&self) -> (Vec<f64>, Vec<f64>) {
        let (s, f) = (self.offset(), self.pairs());
        let tau = (0..f)
            .map(|i| self.ensemble.members.row(s + i).mean())
            .collect();
        let theta = (0..f)
            .map(|i| circular_mean(self.ensemble.members.row(s + f + i).iter().copied()))
            .collect();
        (tau, theta)
    }

    /// Encoded state of every member, `2f x N`.
    pub fn latent_members(&self) -> Result<DMatrix<f64>> {
        latent_block(&self.map, self.kind, &self.ensemble)
    }

    /// Ensemble mean of the encoded states.
    pub fn latent_mean(&self) -> Result<DVector<f64>> {
        Ok(self.latent_members()?.column_mean())
    }

    pub fn forecast(&self, dt: u32) -> Result<EnsembleForecast> {
        forecast_ensemble(&self.map, self.kind, &self.ensemble, dt)
    }

    /// Generalized variance of the encoded ensemble.
    pub fn generalized_variance(&self) -> Result<f64> {
        Ok(generalized_variance(&self.latent_members()?))
    }
}
