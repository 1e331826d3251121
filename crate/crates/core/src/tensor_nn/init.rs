use nalgebra::{DMatrix, DVector};
use rand::distr::{Distribution, Uniform};

use super::network::NetworkParams;
use super::svd::{complete_orthonormal, thin_svd};
use crate::error::{Error, Result};

pub fn xavier_bound(fan_in: usize, fan_out: usize) -> f64 {
    (6.0 / (fan_in + fan_out) as f64).sqrt()
}

/// Glorot-uniform weights on every layer, zero biases.
pub fn init_xavier(net: &mut NetworkParams, rng: &mut crate::Rng) {
    for layer in net.layers_mut() {
        let bound = xavier_bound(layer.in_dim(), layer.out_dim());
        let dist = Uniform::new(-bound, bound).expect("xavier bound is positive and finite");
        layer.weights.apply(|w| *w = dist.sample(rng));
        layer.bias.fill(0.0);
    }
}

/// Weights for the linear encoder input layer and decoder output layer.
#[derive(Debug, Clone)]
pub struct SvdInit {
    /// `r x n`: leading left singular vectors, transposed.
    pub encoder_weights: DMatrix<f64>,
    /// `n x r`: transpose of the encoder weights.
    pub decoder_weights: DMatrix<f64>,
    pub singular_values: DVector<f64>,
    /// How many of the `r` directions had to be filled from the orthogonal
    /// complement because the data's numerical rank was smaller than `r`.
    pub padded: usize,
}

/// Truncated-SVD initialisation from the column-stacked snapshot matrix
/// `x` (`n x m`).
pub fn init_svd_linear(x: &DMatrix<f64>, r: usize) -> Result<SvdInit> {
    let (n, m) = x.shape();
    if r == 0 || r > n.min(m) {
        return Err(Error::Config(format!(
            "svd rank {r} must lie in 1..={} for a {n}x{m} snapshot matrix",
            n.min(m)
        )));
    }
    let svd = thin_svd(x);
    let smax = svd.s.iter().copied().fold(0.0, f64::max);
    let tol = smax * 1e-10;
    let rank = svd.s.iter().take_while(|&&s| s > tol).count();

    let mut basis = svd.u.columns(0, r).into_owned();
    let mut padded = 0;
    if rank < r {
        padded = r - rank;
        log::warn!(
            "snapshot matrix has numerical rank {rank} < requested {r}; padding with orthogonal complement"
        );
        complete_orthonormal(&mut basis, rank);
    }
    Ok(SvdInit {
        encoder_weights: basis.transpose(),
        decoder_weights: basis,
        singular_values: svd.s.rows(0, r).into_owned(),
        padded,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor_nn::{Activation, DenseLayer};
    use rand::Rng as _;

    #[test]
    fn xavier_bound_for_equal_fans() {
        assert_eq!(xavier_bound(3, 3), 1.0);
    }

    #[test]
    fn xavier_sample_is_centred_and_bounded() {
        let mut net =
            NetworkParams::new(vec![DenseLayer::zeros(400, 250, Activation::Relu)]).unwrap();
        let mut rng = crate::seeded_rng(7);
        init_xavier(&mut net, &mut rng);
        let w = &net.layers()[0].weights;
        let bound = xavier_bound(400, 250);
        let n = w.len() as f64;
        let mean = w.iter().sum::<f64>() / n;
        // uniform(-a, a) has variance a^2 / 3
        let se = (bound * bound / 3.0 / n).sqrt();
        assert!(mean.abs() < 3.0 * se, "mean {mean} se {se}");
        assert!(w.iter().all(|v| v.abs() <= bound));
        assert!(net.layers()[0].bias.iter().all(|&b| b == 0.0));
    }

    #[test]
    fn exact_rank_two_reconstructs() {
        let mut rng = crate::seeded_rng(9);
        let basis = DMatrix::from_fn(8, 2, |_, _| rng.random_range(-1.0..1.0));
        let coeffs = DMatrix::from_fn(2, 30, |_, _| rng.random_range(-1.0..1.0));
        let x = &basis * coeffs;
        let init = init_svd_linear(&x, 2).unwrap();
        let recon = &init.decoder_weights * (&init.encoder_weights * &x);
        assert!((recon - &x).amax() < 1e-10);
        let gram = &init.encoder_weights * init.encoder_weights.transpose();
        assert!((gram - DMatrix::identity(2, 2)).amax() < 1e-10);
    }

    #[test]
    fn identity_snapshots_give_orthogonal_weights() {
        let init = init_svd_linear(&DMatrix::identity(5, 5), 5).unwrap();
        let w = &init.encoder_weights;
        assert!((w * w.transpose() - DMatrix::identity(5, 5)).amax() < 1e-12);
        assert!((w.transpose() * w - DMatrix::identity(5, 5)).amax() < 1e-12);
    }

    #[test]
    fn rank_above_numerical_rank_pads() {
        let col = DMatrix::from_fn(6, 1, |i, _| i as f64 - 2.0);
        let x = &col * DMatrix::from_fn(1, 10, |_, j| (j as f64).cos());
        let init = init_svd_linear(&x, 3).unwrap();
        assert_eq!(init.padded, 2);
        let gram = &init.encoder_weights * init.encoder_weights.transpose();
        assert!((gram - DMatrix::identity(3, 3)).amax() < 1e-10);
    }

    #[test]
    fn truncation_error_matches_discarded_spectrum() {
        let mut rng = crate::seeded_rng(11);
        let x = DMatrix::from_fn(10, 50, |_, _| rng.random_range(-1.0..1.0));
        let init = init_svd_linear(&x, 3).unwrap();
        let recon = &init.decoder_weights * (&init.encoder_weights * &x);
        let err = (recon - &x).norm_squared();
        let mut sv: Vec<f64> = x
            .clone()
            .svd(false, false)
            .singular_values
            .iter()
            .copied()
            .collect();
        sv.sort_by(|a, b| b.total_cmp(a));
        let discarded: f64 = sv[3..].iter().map(|s| s * s).sum();
        assert!(
            (err - discarded).abs() < 1e-9 * discarded.max(1.0),
            "{err} vs {discarded}"
        );
    }

    #[test]
    fn rank_out_of_range_is_rejected() {
        assert!(init_svd_linear(&DMatrix::identity(3, 4), 4).is_err());
        assert!(init_svd_linear(&DMatrix::identity(3, 4), 0).is_err());
    }
}
