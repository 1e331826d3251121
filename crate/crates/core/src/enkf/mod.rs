//! Stochastic ensemble Kalman filter and its Koopman-autoencoder assemblies.
//!
//! [`enkf_step`] is the generic perturbed-observation filter. [`KaeFilter`]
//! wraps it around a trained encoder/decoder in two layouts: the latent
//! filter `[x̃ | τ | θ]` that observes encoded measurements, and the
//! full-state filter `[x | τ | θ]` that observes raw measurements and
//! propagates by encode, rotate, decode.

mod core;
mod kae_filter;
mod map;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use self::core::{
    enkf_step, init_ensemble, kalman_gain, sample_covariance, FilterEnsemble, GaussianSampler,
    ObservationModel,
};
pub use kae_filter::{
    forecast_ensemble, fullstate_filter_step, generalized_variance, latent_filter_step,
    EnsembleForecast, FilterKind, KaeFilter,
};
pub use map::{latent_observation_variance, LatentMap, LinearMap};

/// The five variance scalars defining `P₀`, `Q` and `R`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseConfig {
    /// Initial state-block variance.
    pub alpha1: f64,
    /// Modulus variance, both initial and per step.
    pub alpha2: f64,
    /// Argument variance, both initial and per step.
    pub alpha3: f64,
    /// Per-step state-block variance.
    pub alpha4: f64,
    /// Observation variance.
    pub alpha5: f64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self {
            alpha1: 1e-2,
            alpha2: 1e-8,
            alpha3: 3e-6,
            alpha4: 1e-3,
            alpha5: 2.5e-3,
        }
    }
}

impl NoiseConfig {
    /// Rejects negative or non-finite values. Returns the ordering
    /// violations (`α₁ ≫ α₃ ≫ α₂`, `α₄ ≫ α₂`, `α₄ ≫ α₃`) as warnings.
    pub fn validate(&self) -> Result<Vec<String>> {
        let all = [
            self.alpha1,
            self.alpha2,
            self.alpha3,
            self.alpha4,
            self.alpha5,
        ];
        if all.iter().any(|a| !a.is_finite() || *a < 0.0) {
            return Err(Error::Config(format!(
                "noise variances must be finite and nonnegative: {all:?}"
            )));
        }
        let mut warnings = Vec::new();
        let mut order = |big: f64, small: f64, what: &str| {
            if big <= small {
                warnings.push(format!("expected {what}"));
            }
        };
        order(self.alpha1, self.alpha3, "alpha1 >> alpha3");
        order(self.alpha3, self.alpha2, "alpha3 >> alpha2");
        order(self.alpha4, self.alpha2, "alpha4 >> alpha2");
        order(self.alpha4, self.alpha3, "alpha4 >> alpha3");
        for w in &warnings {
            log::warn!("noise config: {w}");
        }
        Ok(warnings)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_respect_ordering() {
        assert!(NoiseConfig::default().validate().unwrap().is_empty());
    }

    #[test]
    fn ordering_violation_is_only_a_warning() {
        let cfg = NoiseConfig {
            alpha2: 1.0,
            ..Default::default()
        };
        assert_eq!(cfg.validate().unwrap().len(), 2);
    }

    #[test]
    fn negative_variance_rejected() {
        let cfg = NoiseConfig {
            alpha5: -1.0,
            ..Default::default()
        };
        assert!(cfg.validate().is_err());
    }
}
