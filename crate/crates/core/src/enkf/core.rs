use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, StandardNormal};

use crate::error::{ensure_dim, Error, Result};

/// `N` members of dimension `d`, one per column.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterEnsemble {
    pub members: DMatrix<f64>,
}

impl FilterEnsemble {
    pub fn new(members: DMatrix<f64>) -> Result<Self> {
        if members.ncols() < 2 {
            return Err(Error::Config("an ensemble needs at least 2 members".into()));
        }
        if members.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical(
                "ensemble contains non-finite values".into(),
            ));
        }
        Ok(Self { members })
    }

    pub fn size(&self) -> usize {
        self.members.ncols()
    }

    pub fn dim(&self) -> usize {
        self.members.nrows()
    }

    pub fn mean(&self) -> DVector<f64> {
        self.members.column_mean()
    }

    /// Unbiased sample covariance.
    pub fn covariance(&self) -> DMatrix<f64> {
        sample_covariance(&self.members)
    }
}

/// Unbiased (`1/(N-1)`) covariance of the columns of `x`.
pub fn sample_covariance(x: &DMatrix<f64>) -> DMatrix<f64> {
    let n = x.ncols();
    let mean = x.column_mean();
    let mut anomalies = x.clone();
    for mut c in anomalies.column_iter_mut() {
        c -= &mean;
    }
    let denom = (n.max(2) - 1) as f64;
    &anomalies * anomalies.transpose() / denom
}

/// Zero-mean Gaussian draws with a fixed covariance. Diagonal covariances
/// skip the factorisation; every draw consumes exactly `dim` standard normals.
#[derive(Debug, Clone)]
pub struct GaussianSampler {
    factor: Factor,
}

#[derive(Debug, Clone)]
enum Factor {
    Diagonal(DVector<f64>),
    Dense(DMatrix<f64>),
}

impl GaussianSampler {
    pub fn diagonal(variances: &[f64]) -> Result<Self> {
        if variances.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::Config(
                "variances must be finite and nonnegative".into(),
            ));
        }
        Ok(Self {
            factor: Factor::Diagonal(DVector::from_iterator(
                variances.len(),
                variances.iter().map(|v| v.sqrt()),
            )),
        })
    }

    /// Any symmetric positive semidefinite covariance.
    pub fn new(cov: &DMatrix<f64>) -> Result<Self> {
        let (r, c) = cov.shape();
        ensure_dim("covariance columns", r, c)?;
        let off_diag = (0..r).any(|i| (0..c).any(|j| i != j && cov[(i, j)] != 0.0));
        if !off_diag {
            return Self::diagonal(cov.diagonal().as_slice());
        }
        let asym = (cov - cov.transpose()).amax();
        let scale = cov.amax().max(f64::MIN_POSITIVE);
        if asym > 1e-10 * scale {
            return Err(Error::Config("covariance is not symmetric".into()));
        }
        let eig = cov.clone().symmetric_eigen();
        let min = eig.eigenvalues.min();
        if min < -1e-10 * scale {
            return Err(Error::Config(format!(
                "covariance is not positive semidefinite (eigenvalue {min})"
            )));
        }
        let mut factor = eig.eigenvectors;
        for (j, &l) in eig.eigenvalues.iter().enumerate() {
            factor.column_mut(j).scale_mut(l.max(0.0).sqrt());
        }
        Ok(Self {
            factor: Factor::Dense(factor),
        })
    }

    pub fn dim(&self) -> usize {
        match &self.factor {
            Factor::Diagonal(d) => d.len(),
            Factor::Dense(m) => m.nrows(),
        }
    }

    pub fn sample(&self, rng: &mut crate::Rng) -> DVector<f64> {
        let e = DVector::from_fn(self.dim(), |_, _| StandardNormal.sample(rng));
        match &self.factor {
            Factor::Diagonal(d) => e.component_mul(d),
            Factor::Dense(m) => m * e,
        }
    }
}

/// `N` independent draws from `N(z0, P0)`.
pub fn init_ensemble(
    z0: &DVector<f64>,
    p0: &GaussianSampler,
    n: usize,
    rng: &mut crate::Rng,
) -> Result<FilterEnsemble> {
    ensure_dim("initial covariance", z0.len(), p0.dim())?;
    let mut members = DMatrix::zeros(z0.len(), n);
    for mut col in members.column_iter_mut() {
        col.copy_from(&(z0 + p0.sample(rng)));
    }
    FilterEnsemble::new(members)
}

/// Linear observation `y = H z + v`, `v ~ N(0, R)`.
#[derive(Debug, Clone)]
pub struct ObservationModel {
    pub h: DMatrix<f64>,
    pub r: DMatrix<f64>,
    sampler: GaussianSampler,
}

impl ObservationModel {
    pub fn new(h: DMatrix<f64>, r: DMatrix<f64>) -> Result<Self> {
        ensure_dim("observation noise rows", h.nrows(), r.nrows())?;
        let sampler = GaussianSampler::new(&r)?;
        Ok(Self { h, r, sampler })
    }

    /// `H = [I_l | 0]` with `R = variance * I_l`.
    pub fn selector(l: usize, d: usize, variance: f64) -> Result<Self> {
        if l > d {
            return Err(Error::Config(format!(
                "cannot observe {l} of {d} state entries"
            )));
        }
        let h = DMatrix::from_fn(l, d, |i, j| if i == j { 1.0 } else { 0.0 });
        Self::new(h, DMatrix::from_diagonal_element(l, l, variance))
    }

    pub fn obs_dim(&self) -> usize {
        self.h.nrows()
    }

    pub fn state_dim(&self) -> usize {
        self.h.ncols()
    }
}

/// `K = P Hᵀ (H P Hᵀ + R)⁻¹` via a Cholesky solve of the innovation
/// covariance.
pub fn kalman_gain(p: &DMatrix<f64>, h: &DMatrix<f64>, r: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    ensure_dim("gain covariance", h.ncols(), p.nrows())?;
    ensure_dim("gain noise", h.nrows(), r.nrows())?;
    let hp = h * p;
    let mut s = &hp * h.transpose() + r;
    // symmetrise against round-off before factorising
    s = (&s + s.transpose()) * 0.5;
    let chol = s.cholesky().ok_or_else(|| {
        Error::Numerical("innovation covariance H P Hᵀ + R is not positive definite".into())
    })?;
    // S Kᵀ = H P  (P symmetric)
    let kt = chol.solve(&hp);
    Ok(kt.transpose())
}

/// One stochastic EnKF cycle.
///
/// Every member is propagated and receives `N(0, Q)` noise; then the gain is
/// formed from the forecast ensemble and each member is nudged towards its
/// own perturbed copy of `y`. All propagation noise is drawn before any
/// observation perturbation.
pub fn enkf_step<F>(
    ens: &mut FilterEnsemble,
    mut propagate: F,
    q: &GaussianSampler,
    obs: &ObservationModel,
    y: &DVector<f64>,
    rng: &mut crate::Rng,
) -> Result<()>
where
    F: FnMut(&DVector<f64>) -> Result<DVector<f64>>,
{
    let d = ens.dim();
    ensure_dim("process noise", d, q.dim())?;
    ensure_dim("observation state", d, obs.state_dim())?;
    ensure_dim("observation", obs.obs_dim(), y.len())?;
    for j in 0..ens.size() {
        let member = ens.members.column(j).into_owned();
        let next = propagate(&member)? + q.sample(rng);
        if next.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical(format!(
                "member {j} became non-finite during propagation"
            )));
        }
        ens.members.set_column(j, &next);
    }
    let p = ens.covariance();
    let k = kalman_gain(&p, &obs.h, &obs.r)?;
    for j in 0..ens.size() {
        let member = ens.members.column(j).into_owned();
        let innovation = y + obs.sampler.sample(rng) - &obs.h * &member;
        ens.members.set_column(j, &(member + &k * innovation));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng as _;

    /// Independent inverse by Gauss-Jordan elimination with partial pivoting.
    fn gauss_jordan_inverse(a: &DMatrix<f64>) -> DMatrix<f64> {
        let n = a.nrows();
        let mut m = a.clone();
        let mut inv = DMatrix::<f64>::identity(n, n);
        for col in 0..n {
            let pivot = (col..n)
                .max_by(|&i, &j| m[(i, col)].abs().total_cmp(&m[(j, col)].abs()))
                .unwrap();
            m.swap_rows(col, pivot);
            inv.swap_rows(col, pivot);
            let d = m[(col, col)];
            for j in 0..n {
                m[(col, j)] /= d;
                inv[(col, j)] /= d;
            }
            for i in 0..n {
                if i != col {
                    let f = m[(i, col)];
                    for j in 0..n {
                        m[(i, j)] -= f * m[(col, j)];
                        inv[(i, j)] -= f * inv[(col, j)];
                    }
                }
            }
        }
        inv
    }

    #[test]
    fn scalar_gain_is_half() {
        let one = DMatrix::from_element(1, 1, 1.0);
        let k = kalman_gain(&one, &one, &one).unwrap();
        assert!((k[(0, 0)] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn zero_covariance_zero_gain() {
        let h = DMatrix::from_row_slice(1, 2, &[1.0, 0.0]);
        let k = kalman_gain(&DMatrix::zeros(2, 2), &h, &DMatrix::identity(1, 1)).unwrap();
        assert_eq!(k, DMatrix::zeros(2, 1));
    }

    #[test]
    fn gain_matches_explicit_inverse() {
        let mut rng = crate::seeded_rng(3);
        let a = DMatrix::from_fn(4, 6, |_, _| rng.random_range(-1.0..1.0));
        let p = &a * a.transpose();
        let h = DMatrix::from_fn(2, 4, |_, _| rng.random_range(-1.0..1.0));
        let b = DMatrix::from_fn(2, 2, |_, _| rng.random_range(-1.0..1.0));
        let r = &b * b.transpose() + DMatrix::identity(2, 2) * 0.1;
        let k = kalman_gain(&p, &h, &r).unwrap();
        let s = &h * &p * h.transpose() + &r;
        let expected = &p * h.transpose() * gauss_jordan_inverse(&s);
        assert!((k - expected).amax() < 1e-12);
    }

    #[test]
    fn singular_innovation_is_numerical_error() {
        let h = DMatrix::identity(2, 2);
        let err = kalman_gain(&DMatrix::zeros(2, 2), &h, &DMatrix::zeros(2, 2)).unwrap_err();
        assert!(matches!(err, Error::Numerical(_)));
    }

    #[test]
    fn zero_initial_covariance_gives_identical_members() {
        let mut rng = crate::seeded_rng(1);
        let z0 = DVector::from_vec(vec![1.0, -2.0, 0.5]);
        let p0 = GaussianSampler::diagonal(&[0.0; 3]).unwrap();
        let ens = init_ensemble(&z0, &p0, 10, &mut rng).unwrap();
        for c in ens.members.column_iter() {
            assert_eq!(c, z0.column(0));
        }
    }

    #[test]
    fn diagonal_initial_variances() {
        let mut rng = crate::seeded_rng(2);
        let vars = [0.5, 2.0];
        let p0 = GaussianSampler::diagonal(&vars).unwrap();
        let n = 100_000;
        let ens = init_ensemble(&DVector::zeros(2), &p0, n, &mut rng).unwrap();
        let cov = ens.covariance();
        for (i, v) in vars.iter().enumerate() {
            let se = v * (2.0 / (n - 1) as f64).sqrt();
            assert!((cov[(i, i)] - v).abs() < 3.0 * se);
        }
    }

    #[test]
    fn dense_sampler_matches_covariance() {
        let mut rng = crate::seeded_rng(4);
        let cov = DMatrix::from_row_slice(2, 2, &[1.0, 0.6, 0.6, 0.5]);
        let s = GaussianSampler::new(&cov).unwrap();
        let n = 100_000;
        let draws = DMatrix::from_columns(&(0..n).map(|_| s.sample(&mut rng)).collect::<Vec<_>>());
        assert!((sample_covariance(&draws) - cov).amax() < 0.02);
    }

    #[test]
    fn non_psd_rejected() {
        let cov = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(matches!(GaussianSampler::new(&cov), Err(Error::Config(_))));
    }

    #[test]
    fn huge_noise_leaves_members() {
        let mut rng = crate::seeded_rng(5);
        let p0 = GaussianSampler::diagonal(&[1.0, 1.0]).unwrap();
        let mut ens = init_ensemble(&DVector::zeros(2), &p0, 20, &mut rng).unwrap();
        let before = ens.clone();
        let q = GaussianSampler::diagonal(&[0.0, 0.0]).unwrap();
        let obs = ObservationModel::selector(2, 2, 1e16).unwrap();
        enkf_step(
            &mut ens,
            |m| Ok(m.clone()),
            &q,
            &obs,
            &DVector::from_vec(vec![5.0, 5.0]),
            &mut rng,
        )
        .unwrap();
        assert!((ens.members - before.members).amax() < 1e-5);
    }

    #[test]
    fn exact_observation_pins_members() {
        let mut rng = crate::seeded_rng(6);
        let p0 = GaussianSampler::diagonal(&[1.0, 1.0]).unwrap();
        let mut ens = init_ensemble(&DVector::zeros(2), &p0, 20, &mut rng).unwrap();
        let q = GaussianSampler::diagonal(&[0.0, 0.0]).unwrap();
        let obs = ObservationModel::selector(2, 2, 0.0).unwrap();
        let y = DVector::from_vec(vec![3.0, -1.0]);
        enkf_step(&mut ens, |m| Ok(m.clone()), &q, &obs, &y, &mut rng).unwrap();
        for c in ens.members.column_iter() {
            assert!((c - &y).amax() < 1e-10);
        }
    }

    #[test]
    fn non_finite_propagation_reports_member() {
        let mut rng = crate::seeded_rng(7);
        let mut ens = FilterEnsemble::new(DMatrix::zeros(1, 3)).unwrap();
        let q = GaussianSampler::diagonal(&[0.0]).unwrap();
        let obs = ObservationModel::selector(1, 1, 1.0).unwrap();
        let err = enkf_step(
            &mut ens,
            |_| Ok(DVector::from_element(1, f64::NAN)),
            &q,
            &obs,
            &DVector::zeros(1),
            &mut rng,
        )
        .unwrap_err();
        assert!(err.to_string().contains("member 0"));
    }
}
