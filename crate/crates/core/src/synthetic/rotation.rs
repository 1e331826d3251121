use std::f64::consts::{PI, TAU};

use nalgebra::DMatrix;
use rand::distr::{Distribution, Uniform};
use serde::{Deserialize, Serialize};

use super::add_noise;
use crate::error::{Error, Result};

/// Linear schedule `θ_k = start + (k - 1)(end - start)/(steps - 1)`,
/// `k = 1..=steps`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThetaSchedule {
    pub start: f64,
    pub end: f64,
}

impl ThetaSchedule {
    pub fn constant(theta: f64) -> Self {
        Self {
            start: theta,
            end: theta,
        }
    }

    /// Argument for the transition out of step `k` (0-based).
    pub fn at(&self, k: usize, steps: usize) -> f64 {
        if steps <= 1 {
            return self.start;
        }
        self.start + k as f64 * (self.end - self.start) / (steps - 1) as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RotationGenConfig {
    pub steps: usize,
    /// One schedule per latent rotation pair.
    pub schedules: Vec<ThetaSchedule>,
    /// Odd element-wise power applied to the latent state before lifting.
    pub nu: u32,
    /// Full-state dimension `n`.
    pub dim: usize,
    pub sigma: f64,
    pub seed: u64,
}

impl RotationGenConfig {
    /// Single rotation with the argument rising linearly from π/128 to π/16.
    pub fn single(nu: u32, sigma: f64, seed: u64) -> Self {
        Self {
            steps: 1000,
            schedules: vec![ThetaSchedule {
                start: PI / 128.0,
                end: PI / 16.0,
            }],
            nu,
            dim: 100,
            sigma,
            seed,
        }
    }

    /// Weekly, yearly and a drifting monthly rotation.
    pub fn multi(sigma: f64, seed: u64) -> Self {
        Self {
            steps: 1000,
            schedules: vec![
                ThetaSchedule::constant(TAU / 7.0),
                ThetaSchedule::constant(TAU / 365.0),
                ThetaSchedule {
                    start: TAU / 30.0,
                    end: TAU / 30.0 + 4.0 * PI / 30.0,
                },
            ],
            nu: 3,
            dim: 100,
            sigma,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.nu == 0 || self.nu.is_multiple_of(2) {
            return Err(Error::Config(format!(
                "power nu = {} must be a positive odd integer",
                self.nu
            )));
        }
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return Err(Error::Config(
                "noise level must be finite and nonnegative".into(),
            ));
        }
        if self.schedules.is_empty() || self.steps == 0 || self.dim == 0 {
            return Err(Error::Config(
                "need at least one schedule, one step and one dimension".into(),
            ));
        }
        Ok(())
    }
}

/// Everything a run produces. Columns are time steps.
#[derive(Debug, Clone)]
pub struct SyntheticRun {
    /// `2f x steps` latent rotation states.
    pub latent: DMatrix<f64>,
    /// `n x steps` noise-free full states.
    pub states: DMatrix<f64>,
    /// `n x steps` noisy measurements.
    pub measurements: DMatrix<f64>,
    /// `f x steps` true arguments; column `k` drives the step `k -> k + 1`.
    pub theta: DMatrix<f64>,
    /// `n x 2f` lift.
    pub lift: DMatrix<f64>,
}

/// Stacked planar rotations from `[1, 0]`, raised element-wise to the power
/// `ν`, lifted by a `U[0, 1)` matrix and corrupted by Gaussian noise. The
/// lift is drawn first from the seeded stream, then the noise.
pub fn generate_rotation(cfg: &RotationGenConfig) -> Result<SyntheticRun> {
    cfg.validate()?;
    let f = cfg.schedules.len();
    let m = cfg.steps;
    let mut rng = crate::seeded_rng(cfg.seed);

    let unit = Uniform::new(0.0, 1.0).expect("unit interval");
    let lift = DMatrix::from_fn(cfg.dim, 2 * f, |_, _| unit.sample(&mut rng));

    let mut latent = DMatrix::zeros(2 * f, m);
    let mut theta = DMatrix::zeros(f, m);
    for (i, sched) in cfg.schedules.iter().enumerate() {
        let (mut a, mut b) = (1.0, 0.0);
        for k in 0..m {
            latent[(2 * i, k)] = a;
            latent[(2 * i + 1, k)] = b;
            let th = sched.at(k, m);
            theta[(i, k)] = th;
            let (s, c) = th.sin_cos();
            (a, b) = (c * a - s * b, s * a + c * b);
        }
    }
    let powered = latent.map(|v| v.powi(cfg.nu as i32));
    let states = &lift * powered;
    let measurements = add_noise(&states, cfg.sigma, &mut rng)?;
    Ok(SyntheticRun {
        latent,
        states,
        measurements,
        theta,
        lift,
    })
}

/// Single-frequency shorthand.
pub fn gen_single_freq(cfg: &RotationGenConfig) -> Result<SyntheticRun> {
    if cfg.schedules.len() != 1 {
        return Err(Error::Config(
            "single-frequency generator needs exactly one schedule".into(),
        ));
    }
    generate_rotation(cfg)
}

/// Three-frequency shorthand.
pub fn gen_multi_freq(cfg: &RotationGenConfig) -> Result<SyntheticRun> {
    if cfg.schedules.len() != 3 {
        return Err(Error::Config(
            "multi-frequency generator needs three schedules".into(),
        ));
    }
    generate_rotation(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedule_endpoints() {
        let cfg = RotationGenConfig::single(3, 0.05, 1);
        let run = gen_single_freq(&cfg).unwrap();
        assert!((run.theta[(0, 0)] - PI / 128.0).abs() < 1e-15);
        assert!((run.theta[(0, 999)] - PI / 16.0).abs() < 1e-15);
    }

    #[test]
    fn multi_endpoints_and_unit_norm() {
        let run = gen_multi_freq(&RotationGenConfig::multi(0.05, 2)).unwrap();
        assert!((run.theta[(2, 0)] - TAU / 30.0).abs() < 1e-15);
        assert!((run.theta[(2, 999)] - PI / 5.0).abs() < 1e-14);
        for k in 0..1000 {
            for i in 0..3 {
                let r = run.latent[(2 * i, k)].hypot(run.latent[(2 * i + 1, k)]);
                assert!((r - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn noise_free_is_lift_of_cubed_latent() {
        let mut cfg = RotationGenConfig::multi(0.0, 3);
        cfg.steps = 50;
        let run = gen_multi_freq(&cfg).unwrap();
        let expected = &run.lift * run.latent.map(|v| v * v * v);
        assert_eq!(run.measurements, expected);
    }

    #[test]
    fn rejects_even_power() {
        let mut cfg = RotationGenConfig::single(2, 0.0, 0);
        assert!(generate_rotation(&cfg).is_err());
        cfg.nu = 3;
        cfg.sigma = -1.0;
        assert!(generate_rotation(&cfg).is_err());
    }
}
