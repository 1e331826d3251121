//! Thin SVD by one-sided (Hestenes) Jacobi rotations.

use nalgebra::{DMatrix, DVector};

/// `x = u * diag(s) * v^T` with `k = min(n, m)` columns, `s` descending.
#[derive(Debug, Clone)]
pub struct ThinSvd {
    pub u: DMatrix<f64>,
    pub s: DVector<f64>,
    pub v: DMatrix<f64>,
}

const MAX_SWEEPS: usize = 80;

/// Orthogonalise the columns of a column-major `rows x cols` buffer in place,
/// accumulating the rotations into `rot` (`cols x cols`, column-major).
fn orthogonalise_columns(a: &mut [f64], rows: usize, cols: usize, rot: &mut [f64]) {
    let eps = f64::EPSILON;
    for _ in 0..MAX_SWEEPS {
        let mut rotated = false;
        for i in 0..cols {
            for j in (i + 1)..cols {
                let (alpha, beta, gamma) = {
                    let ci = &a[i * rows..(i + 1) * rows];
                    let cj = &a[j * rows..(j + 1) * rows];
                    let mut alpha = 0.0;
                    let mut beta = 0.0;
                    let mut gamma = 0.0;
                    for (&p, &q) in ci.iter().zip(cj) {
                        alpha += p * p;
                        beta += q * q;
                        gamma += p * q;
                    }
                    (alpha, beta, gamma)
                };
                if gamma == 0.0 || gamma.abs() <= eps * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                rotate_pair(a, rows, i, j, c, s);
                rotate_pair(rot, cols, i, j, c, s);
            }
        }
        if !rotated {
            break;
        }
    }
}

#[inline]
fn rotate_pair(buf: &mut [f64], rows: usize, i: usize, j: usize, c: f64, s: f64) {
    let (head, tail) = buf.split_at_mut(j * rows);
    let ci = &mut head[i * rows..(i + 1) * rows];
    let cj = &mut tail[..rows];
    for (p, q) in ci.iter_mut().zip(cj.iter_mut()) {
        let (x, y) = (*p, *q);
        *p = c * x - s * y;
        *q = s * x + c * y;
    }
}

/// Complete orthonormal columns `from..` of `u` by Gram-Schmidt against the
/// earlier columns, drawing candidates from the standard basis.
pub(crate) fn complete_orthonormal(u: &mut DMatrix<f64>, from: usize) {
    let n = u.nrows();
    let mut candidate = 0;
    for col in from..u.ncols() {
        loop {
            assert!(
                candidate < n,
                "cannot complete more than n orthonormal columns"
            );
            let mut v = DVector::<f64>::zeros(n);
            v[candidate] = 1.0;
            candidate += 1;
            for _ in 0..2 {
                for k in 0..col {
                    let proj = u.column(k).dot(&v);
                    v.axpy(-proj, &u.column(k), 1.0);
                }
            }
            let norm = v.norm();
            if norm > 1e-8 {
                u.set_column(col, &(v / norm));
                break;
            }
        }
    }
}

pub fn thin_svd(x: &DMatrix<f64>) -> ThinSvd {
    let (n, m) = x.shape();
    let transpose = n < m;
    let work = if transpose { x.transpose() } else { x.clone() };
    let (rows, cols) = work.shape();
    let mut a: Vec<f64> = work.as_slice().to_vec();
    let mut rot = DMatrix::<f64>::identity(cols, cols);
    orthogonalise_columns(&mut a, rows, cols, rot.as_mut_slice());

    let a = DMatrix::from_vec(rows, cols, a);
    let norms: Vec<f64> = a.column_iter().map(|c| c.norm()).collect();
    let mut order: Vec<usize> = (0..cols).collect();
    order.sort_by(|&p, &q| norms[q].total_cmp(&norms[p]));

    let s = DVector::from_iterator(cols, order.iter().map(|&i| norms[i]));
    let smax = s.iter().copied().fold(0.0, f64::max);
    let tiny = smax * f64::EPSILON * (rows.max(cols) as f64);

    // Left factor of `work`: normalised rotated columns.
    let mut left = DMatrix::<f64>::zeros(rows, cols);
    let mut rank = 0;
    for (k, &i) in order.iter().enumerate() {
        if norms[i] > tiny && norms[i] > 0.0 {
            left.set_column(k, &(a.column(i) / norms[i]));
            rank = k + 1;
        }
    }
    if rank < cols {
        complete_orthonormal(&mut left, rank);
    }
    let mut right = DMatrix::<f64>::zeros(cols, cols);
    for (k, &i) in order.iter().enumerate() {
        right.set_column(k, &rot.column(i));
    }

    if transpose {
        ThinSvd {
            u: right,
            s,
            v: left,
        }
    } else {
        ThinSvd {
            u: left,
            s,
            v: right,
        }
    }
}
