use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{ensure_dim, Error, Result};

/// Exact DMD: eigenvalues of the reduced operator and modes lifted to the
/// full space. Conjugate pairs are stored adjacently, upper half-plane
/// first, and are exact conjugates of each other.
#[derive(Debug, Clone)]
pub struct DmdModel {
    /// `n x r`.
    pub modes: DMatrix<Complex64>,
    pub eigenvalues: Vec<Complex64>,
    /// `r x r` reduced operator `Uᵀ X' V S⁻¹`.
    pub reduced: DMatrix<f64>,
    pinv: DMatrix<Complex64>,
}

/// Relative imaginary-part threshold below which an eigenvalue is real.
const REAL_TOL: f64 = 1e-10;

/// Null vectors of `A - λI`, as many as `k`, from the smallest singular
/// values. Unit norm.
fn null_vectors(a: &DMatrix<Complex64>, lambda: Complex64, k: usize) -> Vec<DVector<Complex64>> {
    let r = a.nrows();
    let shifted = a - DMatrix::<Complex64>::identity(r, r) * lambda;
    let svd = shifted.svd(false, true);
    let vt = svd.v_t.expect("requested V");
    (0..k)
        .map(|i| {
            let row = vt.row(r - 1 - i);
            DVector::from_iterator(r, row.iter().map(|c| c.conj()))
        })
        .collect()
}

impl DmdModel {
    /// Eigendecompose `reduced` and lift with `lift` (`n x r`, equal to
    /// `X' V S⁻¹`).
    pub fn from_reduced(reduced: DMatrix<f64>, lift: &DMatrix<f64>) -> Result<Self> {
        let r = reduced.nrows();
        ensure_dim("reduced operator columns", r, reduced.ncols())?;
        ensure_dim("lift columns", r, lift.ncols())?;
        if reduced.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical(
                "reduced DMD operator is not finite".into(),
            ));
        }
        let raw = reduced.complex_eigenvalues();
        let scale = raw.iter().map(|c| c.norm()).fold(1.0, f64::max);
        let mut uppers: Vec<Complex64> = raw
            .iter()
            .copied()
            .filter(|c| c.im > REAL_TOL * scale)
            .collect();
        let mut reals: Vec<f64> = raw
            .iter()
            .filter(|c| c.im.abs() <= REAL_TOL * scale)
            .map(|c| c.re)
            .collect();
        if 2 * uppers.len() + reals.len() != r {
            return Err(Error::Numerical(
                "DMD eigenvalues do not close under conjugation".into(),
            ));
        }
        uppers.sort_by(|a, b| {
            b.norm()
                .total_cmp(&a.norm())
                .then(a.arg().total_cmp(&b.arg()))
        });
        reals.sort_by(|a, b| b.abs().total_cmp(&a.abs()).then(b.total_cmp(a)));

        let ac = reduced.map(|v| Complex64::new(v, 0.0));
        let mut eigenvalues = Vec::with_capacity(r);
        let mut vectors = Vec::with_capacity(r);
        let mut i = 0;
        while i < uppers.len() {
            let mut j = i + 1;
            while j < uppers.len() && (uppers[j] - uppers[i]).norm() <= 1e-9 * scale {
                j += 1;
            }
            for (lam, v) in uppers[i..j].iter().zip(null_vectors(&ac, uppers[i], j - i)) {
                eigenvalues.push(*lam);
                eigenvalues.push(lam.conj());
                let conj = v.map(|c| c.conj());
                vectors.push(v);
                vectors.push(conj);
            }
            i = j;
        }
        let mut i = 0;
        while i < reals.len() {
            let mut j = i + 1;
            while j < reals.len() && (reals[j] - reals[i]).abs() <= 1e-9 * scale {
                j += 1;
            }
            let shifted = &reduced - DMatrix::<f64>::identity(r, r) * reals[i];
            let vt = shifted.svd(false, true).v_t.expect("requested V");
            for (k, lam) in reals[i..j].iter().enumerate() {
                let v = vt.row(r - 1 - k).transpose();
                eigenvalues.push(Complex64::new(*lam, 0.0));
                vectors.push(v.map(|c| Complex64::new(c, 0.0)));
            }
            i = j;
        }
        let w = DMatrix::from_columns(&vectors);
        let modes = lift.map(|v| Complex64::new(v, 0.0)) * w;
        let svd = modes.clone().svd(true, true);
        let smax = svd.singular_values.max();
        let pinv = svd
            .pseudo_inverse(smax * 1e-12 * modes.nrows().max(r) as f64)
            .map_err(|e| Error::Numerical(format!("mode pseudo-inverse failed: {e}")))?;
        Ok(Self {
            modes,
            eigenvalues,
            reduced,
            pinv,
        })
    }

    pub fn rank(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn state_dim(&self) -> usize {
        self.modes.nrows()
    }

    /// `Re(Φ Λ^dt Φ⁺ x)`.
    pub fn forecast(&self, x: &DVector<f64>, dt: u32) -> Result<DVector<f64>> {
        ensure_dim("dmd state", self.state_dim(), x.len())?;
        let mut b = &self.pinv * x.map(|v| Complex64::new(v, 0.0));
        for (bi, lam) in b.iter_mut().zip(&self.eigenvalues) {
            *bi *= lam.powu(dt);
        }
        Ok((&self.modes * b).map(|c| c.re))
    }

    /// True when at least one eigenvalue has a nonzero imaginary part.
    pub fn has_complex_pair(&self) -> bool {
        self.eigenvalues.iter().any(|c| c.im != 0.0)
    }

    /// `(τ, θ)` of the `f` largest-modulus eigenvalues taken one per
    /// conjugate pair, arguments in `[0, π]`.
    pub fn spectrum_estimates(&self, f: usize) -> (Vec<f64>, Vec<f64>) {
        let mut reps: Vec<Complex64> = self
            .eigenvalues
            .iter()
            .copied()
            .filter(|c| c.im >= 0.0)
            .collect();
        reps.sort_by(|a, b| b.norm().total_cmp(&a.norm()));
        reps.truncate(f);
        (
            reps.iter().map(|c| c.norm()).collect(),
            reps.iter().map(|c| c.arg().abs()).collect(),
        )
    }

    /// Real basis `[Re φ, -Im φ]` per conjugate pair, in which the dynamics
    /// are the block rotation `τ R(θ)`. Returns the basis with the pair
    /// moduli and arguments. Fails if any eigenvalue is real.
    pub fn real_rotation_basis(&self) -> Result<(DMatrix<f64>, Vec<f64>, Vec<f64>)> {
        if self.eigenvalues.iter().any(|c| c.im == 0.0) {
            return Err(Error::Numerical(
                "DMD spectrum contains real eigenvalues; no rotation basis".into(),
            ));
        }
        let pairs = self.rank() / 2;
        let n = self.state_dim();
        let mut basis = DMatrix::zeros(n, 2 * pairs);
        let (mut tau, mut theta) = (Vec::new(), Vec::new());
        for p in 0..pairs {
            let phi = self.modes.column(2 * p);
            basis.set_column(2 * p, &phi.map(|c| c.re));
            basis.set_column(2 * p + 1, &phi.map(|c| -c.im));
            tau.push(self.eigenvalues[2 * p].norm());
            theta.push(self.eigenvalues[2 * p].arg());
        }
        Ok((basis, tau, theta))
    }
}

/// Rank-`r` exact DMD of `X' ≈ A X`. A rank above the numerical rank of `X`
/// is truncated with a warning.
pub fn dmd_fit(x: &DMatrix<f64>, xp: &DMatrix<f64>, r: usize) -> Result<DmdModel> {
    if x.shape() != xp.shape() {
        return Err(Error::Config(format!(
            "snapshot shapes differ: {:?} vs {:?}",
            x.shape(),
            xp.shape()
        )));
    }
    if r == 0 {
        return Err(Error::Config("DMD rank must be at least 1".into()));
    }
    let svd = x.clone().svd(true, true);
    let s = &svd.singular_values;
    let cutoff = s.max() * x.nrows().max(x.ncols()) as f64 * f64::EPSILON;
    let rank = s.iter().filter(|&&v| v > cutoff).count();
    if rank == 0 {
        return Err(Error::Numerical("snapshot matrix is zero".into()));
    }
    let r = if r > rank {
        log::warn!("DMD rank {r} exceeds numerical rank {rank}; truncating");
        rank
    } else {
        r
    };
    let u = svd
        .u
        .as_ref()
        .expect("requested U")
        .columns(0, r)
        .into_owned();
    let v = svd
        .v_t
        .as_ref()
        .expect("requested V")
        .rows(0, r)
        .transpose();
    let s_inv = DMatrix::from_diagonal(&s.rows(0, r).map(|v| 1.0 / v));
    let lift = xp * v * s_inv;
    let reduced = u.transpose() * &lift;
    DmdModel::from_reduced(reduced, &lift)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rotation_data(theta: f64, m: usize, lift: &DMatrix<f64>) -> DMatrix<f64> {
        let latent = DMatrix::from_fn(2, m, |i, k| {
            let a = theta * k as f64;
            if i == 0 {
                a.cos()
            } else {
                a.sin()
            }
        });
        lift * latent
    }

    fn lift() -> DMatrix<f64> {
        DMatrix::from_fn(5, 2, |i, j| {
            ((i * 2 + j) as f64 * 0.7).sin() + 0.1 * j as f64
        })
    }

    #[test]
    fn recovers_rotation_argument() {
        let data = rotation_data(0.3, 40, &lift());
        let m = dmd_fit(
            &data.columns(0, 39).into_owned(),
            &data.columns(1, 39).into_owned(),
            2,
        )
        .unwrap();
        assert!((m.eigenvalues[0].arg() - 0.3).abs() < 1e-8);
        assert!((m.eigenvalues[1].arg() + 0.3).abs() < 1e-8);
        assert!((m.eigenvalues[0].norm() - 1.0).abs() < 1e-8);
        let x = data.column(5).into_owned();
        assert!((m.forecast(&x, 7).unwrap() - data.column(12)).amax() < 1e-8);
    }

    #[test]
    fn identity_dynamics() {
        let x = DMatrix::from_fn(4, 10, |i, j| ((i + 1) * (j + 2)) as f64 % 7.0 + i as f64);
        let m = dmd_fit(&x, &x, 4).unwrap();
        for l in &m.eigenvalues {
            assert!((l - Complex64::new(1.0, 0.0)).norm() < 1e-10);
        }
        let y = x.column(2).into_owned();
        assert!((m.forecast(&y, 5).unwrap() - &y).amax() < 1e-9);
    }

    #[test]
    fn scalar_decay() {
        let x = DMatrix::from_row_slice(1, 5, &[1.0, 0.5, 0.25, 0.125, 0.0625]);
        let m = dmd_fit(
            &x.columns(0, 4).into_owned(),
            &x.columns(1, 4).into_owned(),
            1,
        )
        .unwrap();
        assert!((m.eigenvalues[0].re - 0.5).abs() < 1e-14);
    }

    #[test]
    fn rank_is_truncated() {
        let data = rotation_data(0.3, 20, &lift());
        let m = dmd_fit(
            &data.columns(0, 19).into_owned(),
            &data.columns(1, 19).into_owned(),
            4,
        )
        .unwrap();
        assert_eq!(m.rank(), 2);
    }

    #[test]
    fn real_data_eigenvalues_are_conjugate() {
        let mut rng = crate::seeded_rng(0);
        use rand::Rng as _;
        let x = DMatrix::from_fn(6, 30, |_, _| rng.random_range(-1.0..1.0));
        let m = dmd_fit(
            &x.columns(0, 29).into_owned(),
            &x.columns(1, 29).into_owned(),
            6,
        )
        .unwrap();
        let mut k = 0;
        while k < m.rank() {
            let l = m.eigenvalues[k];
            if l.im != 0.0 {
                assert!((m.eigenvalues[k + 1] - l.conj()).norm() < 1e-10);
                k += 2;
            } else {
                k += 1;
            }
        }
    }

    #[test]
    fn rotation_basis_conjugates_to_blocks() {
        let data = rotation_data(0.4, 30, &lift());
        let m = dmd_fit(
            &data.columns(0, 29).into_owned(),
            &data.columns(1, 29).into_owned(),
            2,
        )
        .unwrap();
        let (basis, tau, theta) = m.real_rotation_basis().unwrap();
        let pinv = basis.clone().pseudo_inverse(1e-12).unwrap();
        let z0 = &pinv * data.column(3);
        let z1 = &pinv * data.column(4);
        let (s, c) = theta[0].sin_cos();
        let rotated =
            DVector::from_vec(vec![c * z0[0] - s * z0[1], s * z0[0] + c * z0[1]]) * tau[0];
        assert!((rotated - &z1).amax() < 1e-8);
        assert!((&basis * z1 - data.column(4)).amax() < 1e-8);
    }
}
