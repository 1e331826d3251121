use std::collections::VecDeque;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Stack each state with its `d - 1` predecessors, current state on top.
/// Output column `j` holds `x_{j+d-1}, x_{j+d-2}, ..., x_j`.
pub fn hankel_embed(series: &DMatrix<f64>, d: usize) -> Result<DMatrix<f64>> {
    if d == 0 {
        return Err(Error::Config("delay dimension must be at least 1".into()));
    }
    let (n, m) = series.shape();
    if m < d {
        return Err(Error::Config(format!(
            "series of length {m} is shorter than delay dimension {d}"
        )));
    }
    let mut out = DMatrix::zeros(n * d, m - d + 1);
    for j in 0..out.ncols() {
        for lag in 0..d {
            out.view_mut((lag * n, j), (n, 1))
                .copy_from(&series.column(j + d - 1 - lag));
        }
    }
    Ok(out)
}

/// Streaming counterpart of [`hankel_embed`].
#[derive(Debug, Clone)]
pub struct HankelBuffer {
    d: usize,
    n: usize,
    recent: VecDeque<DVector<f64>>,
}

impl HankelBuffer {
    pub fn new(n: usize, d: usize) -> Result<Self> {
        if d == 0 || n == 0 {
            return Err(Error::Config(
                "delay dimension and state size must be positive".into(),
            ));
        }
        Ok(Self {
            d,
            n,
            recent: VecDeque::with_capacity(d),
        })
    }

    /// Seed with the last `d - 1` (or more) columns of `history`.
    pub fn prime(&mut self, history: &DMatrix<f64>) -> Result<()> {
        for c in history.column_iter() {
            self.push(&c.into_owned())?;
        }
        Ok(())
    }

    /// Append a state; once `d` states are held, return the stacked vector.
    pub fn push(&mut self, x: &DVector<f64>) -> Result<Option<DVector<f64>>> {
        crate::error::ensure_dim("hankel input", self.n, x.len())?;
        if self.recent.len() == self.d {
            self.recent.pop_back();
        }
        self.recent.push_front(x.clone());
        if self.recent.len() < self.d {
            return Ok(None);
        }
        let mut out = DVector::zeros(self.n * self.d);
        for (lag, v) in self.recent.iter().enumerate() {
            out.rows_mut(lag * self.n, self.n).copy_from(v);
        }
        Ok(Some(out))
    }

    pub fn output_dim(&self) -> usize {
        self.n * self.d
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn d1_is_identity() {
        let x = DMatrix::from_fn(3, 5, |i, j| (i * 5 + j) as f64);
        assert_eq!(hankel_embed(&x, 1).unwrap(), x);
    }

    #[test]
    fn scalar_example() {
        let x = DMatrix::from_row_slice(1, 4, &[1.0, 2.0, 3.0, 4.0]);
        let h = hankel_embed(&x, 2).unwrap();
        assert_eq!(
            h,
            DMatrix::from_row_slice(2, 3, &[2.0, 3.0, 4.0, 1.0, 2.0, 3.0])
        );
    }

    #[test]
    fn output_length() {
        let x = DMatrix::zeros(2, 1000);
        assert_eq!(hankel_embed(&x, 5).unwrap().ncols(), 996);
        assert!(hankel_embed(&DMatrix::zeros(2, 3), 5).is_err());
    }

    #[test]
    fn buffer_matches_batch() {
        let x = DMatrix::from_fn(2, 12, |i, j| (i as f64 + 1.0) * (j as f64).sin());
        let batch = hankel_embed(&x, 4).unwrap();
        let mut buf = HankelBuffer::new(2, 4).unwrap();
        let streamed: Vec<_> = x
            .column_iter()
            .filter_map(|c| buf.push(&c.into_owned()).unwrap())
            .collect();
        assert_eq!(DMatrix::from_columns(&streamed), batch);
    }

    proptest! {
        #[test]
        fn shift_equivariant(len in 6usize..20, d in 1usize..5, shift in 0usize..4) {
            let x = DMatrix::from_fn(2, len + shift, |i, j| ((i + 1) * (j + 3)) as f64 * 0.1);
            let whole = hankel_embed(&x, d).unwrap();
            let shifted = hankel_embed(&x.columns(shift, len).into_owned(), d).unwrap();
            prop_assert_eq!(shifted, whole.columns(shift, len - d + 1).into_owned());
        }
    }
}
