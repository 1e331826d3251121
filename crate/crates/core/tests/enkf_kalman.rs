mod common;

use kae_enkf::enkf::{enkf_step, init_ensemble, GaussianSampler, ObservationModel};
use nalgebra::{DMatrix, DVector};

#[test]
fn scalar_enkf_tracks_exact_kalman() {
    for seed in 0..3 {
        let (mean_err, var_err) = common::scalar_enkf_vs_kalman(5000, seed).rms();
        println!("seed {seed}: mean {mean_err:.4} var {var_err:.4}");
        assert!(
            mean_err < 0.05 && var_err < 0.05,
            "seed {seed}: {mean_err} {var_err}"
        );
    }
}

#[test]
fn innovations_have_zero_mean() {
    // observations generated noise-free from a member's own trajectory
    let theta: f64 = 0.3;
    let rot = DMatrix::from_row_slice(2, 2, &[theta.cos(), -theta.sin(), theta.sin(), theta.cos()]);
    let mut rng = kae_enkf::seeded_rng(11);
    let start = DVector::from_vec(vec![1.0, 0.0]);
    let mut ens = init_ensemble(
        &start,
        &GaussianSampler::diagonal(&[0.1, 0.1]).unwrap(),
        100,
        &mut rng,
    )
    .unwrap();
    let truth0 = ens.members.column(0).into_owned();
    let q = GaussianSampler::diagonal(&[0.0, 0.0]).unwrap();
    let obs = ObservationModel::selector(2, 2, 0.01).unwrap();
    let mut truth = truth0;
    let mut innovations = Vec::new();
    for _ in 0..200 {
        truth = &rot * truth;
        let forecast_mean = &rot * ens.mean();
        innovations.push(&truth - forecast_mean);
        enkf_step(&mut ens, |m| Ok(&rot * m), &q, &obs, &truth, &mut rng).unwrap();
    }
    let n = innovations.len() as f64;
    for c in 0..2 {
        let vals: Vec<f64> = innovations.iter().map(|v| v[c]).collect();
        let mean = vals.iter().sum::<f64>() / n;
        let sd = (vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
        assert!(
            mean.abs() < 3.0 * sd / n.sqrt(),
            "component {c}: mean {mean}, sd {sd}"
        );
    }
}

#[test]
#[ignore]
fn scalar_error_survey() {
    for seed in 0..20 {
        let c = common::scalar_enkf_vs_kalman(5000, seed);
        let (m, v) = c.worst();
        let (rm, rv) = c.rms();
        let bias = c.var_err.iter().sum::<f64>() / 50.0;
        println!("seed {seed}: worst {m:.4} {v:.4} rms {rm:.4} {rv:.4} var bias {bias:+.4}");
    }
}
