use std::collections::VecDeque;

use nalgebra::{DMatrix, DVector};

use super::dmd::{dmd_fit, DmdModel};
use crate::error::{ensure_dim, Error, Result};

/// Equal-weight incremental DMD over every pair seen so far.
///
/// Keeps `G = Σ x xᵀ` and `C = Σ x' xᵀ`. The top-`r` eigenvectors of `G`
/// are the left singular vectors of the snapshot matrix, so the reduced
/// operator is `Uᵀ C U S⁻²` and the lift is `C U S⁻²`. The basis is
/// refreshed by subspace iteration warm-started from the previous step.
#[derive(Debug, Clone)]
pub struct StreamingEdmd {
    rank: usize,
    gram: DMatrix<f64>,
    cross: DMatrix<f64>,
    count: usize,
    basis: Option<DMatrix<f64>>,
    model: Option<DmdModel>,
}

/// Subspace iteration stops once the relative eigen-residual drops below
/// this, or after [`MAX_SWEEPS`].
const RESIDUAL_TOL: f64 = 1e-13;
const MAX_SWEEPS: usize = 500;

impl StreamingEdmd {
    pub fn new(dim: usize, rank: usize) -> Result<Self> {
        if rank == 0 || rank > dim {
            return Err(Error::Config(format!("rank {rank} must be in 1..={dim}")));
        }
        Ok(Self {
            rank,
            gram: DMatrix::zeros(dim, dim),
            cross: DMatrix::zeros(dim, dim),
            count: 0,
            basis: None,
            model: None,
        })
    }

    pub fn dim(&self) -> usize {
        self.gram.nrows()
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn model(&self) -> Option<&DmdModel> {
        self.model.as_ref()
    }

    /// Accumulate a block of pairs (columns) and refit.
    pub fn fit_initial(&mut self, x: &DMatrix<f64>, xp: &DMatrix<f64>) -> Result<&DmdModel> {
        ensure_dim("snapshot rows", self.dim(), x.nrows())?;
        if x.shape() != xp.shape() {
            return Err(Error::Config("snapshot shapes differ".into()));
        }
        self.gram += x * x.transpose();
        self.cross += xp * x.transpose();
        self.count += x.ncols();
        self.refit()
    }

    pub fn update(&mut self, x: &DVector<f64>, x_next: &DVector<f64>) -> Result<&DmdModel> {
        ensure_dim("snapshot", self.dim(), x.len())?;
        ensure_dim("next snapshot", self.dim(), x_next.len())?;
        self.gram.ger(1.0, x, x, 1.0);
        self.cross.ger(1.0, x_next, x, 1.0);
        self.count += 1;
        self.refit()
    }

    fn top_eigenvectors(&self) -> (DMatrix<f64>, DVector<f64>) {
        let r = self.rank;
        let g = &self.gram;
        let mut q = match &self.basis {
            Some(b) => b.clone(),
            None => {
                let eig = g.clone().symmetric_eigen();
                let mut idx: Vec<usize> = (0..g.nrows()).collect();
                idx.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
                DMatrix::from_columns(
                    &idx[..r]
                        .iter()
                        .map(|&i| eig.eigenvectors.column(i))
                        .collect::<Vec<_>>(),
                )
            }
        };
        let mut values = DVector::zeros(r);
        for _ in 0..MAX_SWEEPS {
            let z = g * &q;
            let qr = z.qr();
            q = qr.q();
            // Rayleigh-Ritz on the refreshed subspace
            let small = q.transpose() * g * &q;
            let eig = small.symmetric_eigen();
            let mut idx: Vec<usize> = (0..r).collect();
            idx.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
            let rot = DMatrix::from_columns(
                &idx.iter()
                    .map(|&i| eig.eigenvectors.column(i))
                    .collect::<Vec<_>>(),
            );
            q = &q * rot;
            values = DVector::from_iterator(r, idx.iter().map(|&i| eig.eigenvalues[i]));
            let resid = (g * &q - &q * DMatrix::from_diagonal(&values)).norm();
            if resid <= RESIDUAL_TOL * values[0].abs().max(f64::MIN_POSITIVE) {
                break;
            }
        }
        (q, values)
    }

    fn refit(&mut self) -> Result<&DmdModel> {
        let (u, values) = self.top_eigenvectors();
        if values.iter().any(|&v| !(v > 0.0)) {
            return Err(Error::Numerical(format!(
                "snapshot Gram matrix has rank below {} after {} pairs",
                self.rank, self.count
            )));
        }
        let s_inv2 = DMatrix::from_diagonal(&values.map(|v| 1.0 / v));
        let lift = &self.cross * &u * s_inv2;
        let reduced = u.transpose() * &lift;
        self.model = Some(DmdModel::from_reduced(reduced, &lift)?);
        self.basis = Some(u);
        Ok(self.model.as_ref().expect("just set"))
    }
}

/// Batch DMD on the last `w` pairs only.
#[derive(Debug, Clone)]
pub struct WindowedEdmd {
    window: usize,
    rank: usize,
    pairs: VecDeque<(DVector<f64>, DVector<f64>)>,
    /// Fits so far whose spectrum had no complex pair.
    pub all_real_fits: usize,
    pub fits: usize,
}

impl WindowedEdmd {
    pub fn new(window: usize, rank: usize) -> Result<Self> {
        if window == 0 || rank == 0 {
            return Err(Error::Config("window and rank must be positive".into()));
        }
        Ok(Self {
            window,
            rank,
            pairs: VecDeque::with_capacity(window + 1),
            all_real_fits: 0,
            fits: 0,
        })
    }

    /// Push a pair; returns `None` until the window is full.
    pub fn update(&mut self, x: &DVector<f64>, x_next: &DVector<f64>) -> Result<Option<DmdModel>> {
        self.pairs.push_back((x.clone(), x_next.clone()));
        if self.pairs.len() > self.window {
            self.pairs.pop_front();
        }
        if self.pairs.len() < self.window {
            return Ok(None);
        }
        let xs = DMatrix::from_columns(&self.pairs.iter().map(|p| p.0.clone()).collect::<Vec<_>>());
        let ys = DMatrix::from_columns(&self.pairs.iter().map(|p| p.1.clone()).collect::<Vec<_>>());
        let model = dmd_fit(&xs, &ys, self.rank)?;
        self.fits += 1;
        if !model.has_complex_pair() {
            self.all_real_fits += 1;
        }
        Ok(Some(model))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_complex::Complex64;
    use rand::Rng as _;

    fn sorted(m: &DmdModel) -> Vec<Complex64> {
        let mut v = m.eigenvalues.clone();
        v.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
        v
    }

    fn noisy_series(seed: u64, n: usize, m: usize) -> DMatrix<f64> {
        let mut rng = crate::seeded_rng(seed);
        DMatrix::from_fn(n, m, |i, k| {
            ((i + 1) as f64 * 0.3 + 0.25 * k as f64).sin() + 0.05 * rng.random_range(-1.0..1.0)
        })
    }

    #[test]
    fn single_update_equals_batch_refit() {
        let data = noisy_series(0, 5, 30);
        let mut s = StreamingEdmd::new(5, 3).unwrap();
        s.fit_initial(
            &data.columns(0, 20).into_owned(),
            &data.columns(1, 20).into_owned(),
        )
        .unwrap();
        for k in 20..29 {
            let m = s
                .update(
                    &data.column(k).into_owned(),
                    &data.column(k + 1).into_owned(),
                )
                .unwrap()
                .clone();
            let batch = dmd_fit(
                &data.columns(0, k + 1).into_owned(),
                &data.columns(1, k + 1).into_owned(),
                3,
            )
            .unwrap();
            for (a, b) in sorted(&m).iter().zip(sorted(&batch)) {
                assert!((a - b).norm() < 1e-10, "step {k}: {a} vs {b}");
            }
            let x = data.column(k).into_owned();
            assert!((m.forecast(&x, 3).unwrap() - batch.forecast(&x, 3).unwrap()).amax() < 1e-9);
        }
    }

    #[test]
    fn full_window_equals_streaming() {
        let data = noisy_series(1, 4, 16);
        let mut s = StreamingEdmd::new(4, 2).unwrap();
        let mut w = WindowedEdmd::new(15, 2).unwrap();
        s.fit_initial(
            &data.columns(0, 3).into_owned(),
            &data.columns(1, 3).into_owned(),
        )
        .unwrap();
        for k in 0..3 {
            w.update(
                &data.column(k).into_owned(),
                &data.column(k + 1).into_owned(),
            )
            .unwrap();
        }
        let mut last = None;
        for k in 3..15 {
            let (x, y) = (data.column(k).into_owned(), data.column(k + 1).into_owned());
            s.update(&x, &y).unwrap();
            last = w.update(&x, &y).unwrap();
        }
        let wm = last.expect("window full");
        for (a, b) in sorted(s.model().unwrap()).iter().zip(sorted(&wm)) {
            assert!((a - b).norm() < 1e-10);
        }
    }

    #[test]
    fn window_warm_up_emits_nothing() {
        let mut w = WindowedEdmd::new(3, 1).unwrap();
        let x = DVector::from_element(2, 1.0);
        assert!(w.update(&x, &x).unwrap().is_none());
        assert!(w.update(&x, &x).unwrap().is_none());
        assert!(w.update(&x, &x).unwrap().is_some());
    }
}
