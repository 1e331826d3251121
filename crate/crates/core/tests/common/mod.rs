//! Independent oracles shared by the integration tests.
#![allow(dead_code)]

pub mod grad;

use kae_enkf::enkf::{enkf_step, init_ensemble, FilterEnsemble, GaussianSampler, ObservationModel};
use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, Normal};

/// Exact scalar Kalman recursion for `x' = a x + w`, `y = x + v`.
pub struct ScalarKalman {
    pub a: f64,
    pub q: f64,
    pub r: f64,
    pub mean: f64,
    pub var: f64,
}

impl ScalarKalman {
    pub fn step(&mut self, y: f64) {
        let m = self.a * self.mean;
        let p = self.a * self.a * self.var + self.q;
        let k = p / (p + self.r);
        self.mean = m + k * (y - m);
        self.var = (1.0 - k) * p;
    }
}

/// Per-step relative errors of a stochastic EnKF against the exact recursion
/// on a 50-step scalar run. Mean errors are relative to `max(|m|, sqrt(P))`
/// since the state decays through zero; variance errors are signed.
pub struct ScalarComparison {
    pub mean_err: Vec<f64>,
    pub var_err: Vec<f64>,
}

impl ScalarComparison {
    pub fn worst(&self) -> (f64, f64) {
        let w = |v: &[f64]| v.iter().fold(0.0f64, |a, e| a.max(e.abs()));
        (w(&self.mean_err), w(&self.var_err))
    }

    pub fn rms(&self) -> (f64, f64) {
        let r = |v: &[f64]| (v.iter().map(|e| e * e).sum::<f64>() / v.len() as f64).sqrt();
        (r(&self.mean_err), r(&self.var_err))
    }
}

pub fn scalar_enkf_vs_kalman(members: usize, seed: u64) -> ScalarComparison {
    let (a, q, r, steps): (f64, f64, f64, usize) = (0.9, 0.1, 0.5, 50);
    let (m0, p0) = (5.0, 1.0);
    let mut rng = kae_enkf::seeded_rng(seed);
    let mut truth_rng = kae_enkf::seeded_rng(seed ^ 0x5eed);
    let w = Normal::new(0.0, q.sqrt()).unwrap();
    let v = Normal::new(0.0, r.sqrt()).unwrap();

    let mut ens = init_ensemble(
        &DVector::from_element(1, m0),
        &GaussianSampler::diagonal(&[p0]).unwrap(),
        members,
        &mut rng,
    )
    .unwrap();
    let qs = GaussianSampler::diagonal(&[q]).unwrap();
    let obs =
        ObservationModel::new(DMatrix::identity(1, 1), DMatrix::from_element(1, 1, r)).unwrap();
    let mut kf = ScalarKalman {
        a,
        q,
        r,
        mean: m0,
        var: p0,
    };
    let mut x = m0 + w.sample(&mut truth_rng);
    let (mut mean_err, mut var_err) = (Vec::new(), Vec::new());
    for _ in 0..steps {
        x = a * x + w.sample(&mut truth_rng);
        let y = x + v.sample(&mut truth_rng);
        enkf_step(
            &mut ens,
            |m| Ok(m * a),
            &qs,
            &obs,
            &DVector::from_element(1, y),
            &mut rng,
        )
        .unwrap();
        kf.step(y);
        let em = ens.mean()[0];
        let ev = ens.covariance()[(0, 0)];
        mean_err.push((em - kf.mean) / kf.mean.abs().max(kf.var.sqrt()));
        var_err.push((ev - kf.var) / kf.var);
    }
    ScalarComparison { mean_err, var_err }
}

pub fn ensemble_from(members: DMatrix<f64>) -> FilterEnsemble {
    FilterEnsemble::new(members).unwrap()
}
