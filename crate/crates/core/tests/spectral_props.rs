//! Invariants of the Koopman block algebra and the frequency search.

use std::f64::consts::{PI, TAU};

use kae_enkf::freq_opt::{combine_scans, select_frequency, FrequencyScan, TotalFrequencyLoss};
use kae_enkf::koopman::{
    block_power, circular_distance, fold_argument, pair_distance, wrap_angle, KoopmanSpectrum,
};
use nalgebra::DVector;
use proptest::prelude::*;

fn spectrum() -> impl Strategy<Value = KoopmanSpectrum> {
    prop::collection::vec((0.5f64..1.5, -10.0f64..10.0), 1..5).prop_map(|p| {
        let (tau, theta) = p.into_iter().unzip();
        KoopmanSpectrum::new(tau, theta).unwrap()
    })
}

fn close(a: f64, b: f64, rel: f64) -> bool {
    (a - b).abs() <= rel * a.abs().max(b.abs()).max(1.0)
}

proptest! {
    #[test]
    fn powers_compose(k in spectrum(), a in 0u32..12, b in 0u32..12) {
        let lhs = k.operator_power(a + b);
        let rhs = k.operator_power(a) * k.operator_power(b);
        for (x, y) in lhs.iter().zip(rhs.iter()) {
            prop_assert!(close(*x, *y, 1e-11), "{x} vs {y}");
        }
    }

    #[test]
    fn determinant_is_product_of_squared_moduli(k in spectrum(), dt in 0u32..15) {
        let det = k.operator_power(dt).determinant();
        let expect: f64 = k.tau().iter().map(|t| t.powi(2 * dt as i32)).product();
        prop_assert!(close(det, expect, 1e-10), "{det} vs {expect}");
    }

    #[test]
    fn apply_matches_matrix(k in spectrum(), dt in 0u32..15, seed in any::<u64>()) {
        let x = DVector::from_fn(k.latent_dim(), |i, _| ((seed as f64) * 1e-19 + i as f64).sin());
        let direct = k.apply(&x, dt).unwrap();
        let via = k.operator_power(dt) * &x;
        prop_assert!((direct - via).amax() < 1e-12);
    }

    #[test]
    fn unit_modulus_preserves_norm(theta in -20.0f64..20.0, dt in 0u32..50, a in -3.0f64..3.0, b in -3.0f64..3.0) {
        let m = block_power(1.0, theta, dt);
        let (u, v) = (m[0] * a + m[1] * b, m[2] * a + m[3] * b);
        prop_assert!(close(u * u + v * v, a * a + b * b, 1e-12));
    }

    #[test]
    fn angle_helpers_ranges(a in -50.0f64..50.0, b in -50.0f64..50.0) {
        let w = wrap_angle(a);
        prop_assert!((0.0..TAU).contains(&w));
        prop_assert!(close(w.sin(), a.sin(), 1e-9) && close(w.cos(), a.cos(), 1e-9));
        let d = circular_distance(a, b);
        prop_assert!((0.0..=PI + 1e-12).contains(&d));
        prop_assert!(close(d, circular_distance(b, a), 1e-12));
        let f = fold_argument(a);
        prop_assert!((0.0..=PI).contains(&f));
        prop_assert!(close(fold_argument(-a), f, 1e-9));
        let p = pair_distance(a, b);
        prop_assert!(p <= d + 1e-9, "pair distance {p} exceeds circular {d}");
        prop_assert!(close(p, pair_distance(-a, b), 1e-9));
    }

    #[test]
    fn scan_periodicity_in_the_full_operator(tau in 0.7f64..1.3, theta in 0.0f64..TAU, dt in 1u32..8) {
        // θ and θ + 2π/dt give the same dt-th power.
        let a = block_power(tau, theta, dt);
        let b = block_power(tau, theta + TAU / dt as f64, dt);
        for (x, y) in a.iter().zip(&b) {
            prop_assert!((x - y).abs() < 1e-9);
        }
    }

    #[test]
    fn same_horizon_scans_add_pointwise(
        vals in prop::collection::vec(prop::collection::vec(-5.0f64..5.0, 16), 1..5),
    ) {
        let scans: Vec<FrequencyScan> = vals.iter().map(|v| FrequencyScan { dt: 1, values: v.clone() }).collect();
        let total = combine_scans(&scans, 16).unwrap();
        for j in 0..16 {
            let sum: f64 = vals.iter().map(|v| v[j]).sum();
            prop_assert!((total.values[j] - sum).abs() < 1e-12);
        }
    }

    #[test]
    fn selection_respects_grid_and_rejections(
        values in prop::collection::vec(-1.0f64..1.0, 8..64),
        others in prop::collection::vec(0.0f64..TAU, 0..3),
        tolerance in 0.0f64..0.8,
    ) {
        let total = TotalFrequencyLoss { values };
        let s = total.values.len();
        let mut thetas = vec![0.0];
        thetas.extend(others);
        if let Some(th) = select_frequency(&total, &thetas, 0, tolerance) {
            let j = (th / (TAU / s as f64)).round();
            prop_assert!((th - j * TAU / s as f64).abs() < 1e-12, "off grid: {th}");
            prop_assert!(circular_distance(th, 0.0) >= TAU / s as f64 * (1.0 - 1e-9));
            for &o in &thetas[1..] {
                prop_assert!(pair_distance(th, o) >= tolerance);
            }
        }
    }
}
