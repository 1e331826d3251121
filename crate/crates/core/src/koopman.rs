//! Latent linear dynamics: conjugate eigenvalue pairs in polar form, the real
//! block-diagonal operator they define, and closed-form integer powers.

use std::f64::consts::TAU;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{ensure_dim, Error, Result};

/// Wrap an angle into `[0, 2π)`.
pub fn wrap_angle(theta: f64) -> f64 {
    let w = theta.rem_euclid(TAU);
    // rem_euclid can round up to exactly TAU for tiny negative inputs
    if w >= TAU {
        0.0
    } else {
        w
    }
}

/// Shortest distance between two angles on the circle, in `[0, π]`.
pub fn circular_distance(a: f64, b: f64) -> f64 {
    let d = wrap_angle(a - b);
    d.min(TAU - d)
}

/// Fold an argument onto `[0, π]`; `θ` and `2π - θ` describe the same
/// conjugate pair `τ e^{±iθ}`.
pub fn fold_argument(theta: f64) -> f64 {
    let w = wrap_angle(theta);
    w.min(TAU - w)
}

/// Distance between the conjugate pairs `{±a}` and `{±b}`.
pub fn pair_distance(a: f64, b: f64) -> f64 {
    (fold_argument(a) - fold_argument(b)).abs()
}

/// `f` conjugate pairs `τ_i e^{±iθ_i}`. Latent dimension is `2f`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KoopmanSpectrum {
    tau: Vec<f64>,
    theta: Vec<f64>,
}

/// Closed-form power of a single `2x2` block, `τ^dt R(θ dt)`, row-major.
#[inline]
pub fn block_power(tau: f64, theta: f64, dt: u32) -> [f64; 4] {
    let scale = tau.powi(dt as i32);
    let (s, c) = (theta * dt as f64).sin_cos();
    [scale * c, -scale * s, scale * s, scale * c]
}

impl KoopmanSpectrum {
    pub fn new(tau: Vec<f64>, theta: Vec<f64>) -> Result<Self> {
        ensure_dim("spectrum theta", tau.len(), theta.len())?;
        if tau.is_empty() {
            return Err(Error::Config("spectrum needs at least one pair".into()));
        }
        if tau.iter().any(|t| !t.is_finite() || *t <= 0.0) {
            return Err(Error::Config("moduli must be finite and positive".into()));
        }
        if theta.iter().any(|t| !t.is_finite()) {
            return Err(Error::Config("arguments must be finite".into()));
        }
        Ok(Self {
            tau,
            theta: theta.into_iter().map(wrap_angle).collect(),
        })
    }

    /// Unit moduli with the given arguments.
    pub fn unit(theta: Vec<f64>) -> Result<Self> {
        Self::new(vec![1.0; theta.len()], theta)
    }

    pub fn pairs(&self) -> usize {
        self.tau.len()
    }

    pub fn latent_dim(&self) -> usize {
        2 * self.tau.len()
    }

    pub fn tau(&self) -> &[f64] {
        &self.tau
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    pub fn set_theta(&mut self, i: usize, theta: f64) {
        self.theta[i] = wrap_angle(theta);
    }

    pub fn set_tau(&mut self, i: usize, tau: f64) -> Result<()> {
        if !tau.is_finite() || tau <= 0.0 {
            return Err(Error::Config(format!(
                "modulus {tau} must be finite and positive"
            )));
        }
        self.tau[i] = tau;
        Ok(())
    }

    pub fn build_operator(&self) -> DMatrix<f64> {
        self.operator_power(1)
    }

    /// `K^dt`, assembled block by block in `O(f)` trig evaluations.
    /// `dt = 0` gives the identity.
    pub fn operator_power(&self, dt: u32) -> DMatrix<f64> {
        let nz = self.latent_dim();
        let mut k = DMatrix::zeros(nz, nz);
        for (i, (&tau, &theta)) in self.tau.iter().zip(&self.theta).enumerate() {
            let b = block_power(tau, theta, dt);
            let o = 2 * i;
            k[(o, o)] = b[0];
            k[(o, o + 1)] = b[1];
            k[(o + 1, o)] = b[2];
            k[(o + 1, o + 1)] = b[3];
        }
        k
    }

    /// `K^dt x` without forming the matrix.
    pub fn apply(&self, x: &DVector<f64>, dt: u32) -> Result<DVector<f64>> {
        ensure_dim("latent vector", self.latent_dim(), x.len())?;
        let mut out = DVector::zeros(x.len());
        apply_blocks(&self.tau, &self.theta, x.as_slice(), dt, out.as_mut_slice());
        Ok(out)
    }
}

/// Apply block powers for raw moduli/arguments; used where the spectrum lives
/// inside a filter state vector rather than a [`KoopmanSpectrum`].
pub fn apply_blocks(tau: &[f64], theta: &[f64], x: &[f64], dt: u32, out: &mut [f64]) {
    for (i, (&t, &th)) in tau.iter().zip(theta).enumerate() {
        let b = block_power(t, th, dt);
        let (a0, a1) = (x[2 * i], x[2 * i + 1]);
        out[2 * i] = b[0] * a0 + b[1] * a1;
        out[2 * i + 1] = b[2] * a0 + b[3] * a1;
    }
}
