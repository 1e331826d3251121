use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One training pair: input column `index`, target column `index + dt`.
/// Stored as indices so batches reference the dataset instead of copying it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainSample {
    pub index: usize,
    pub dt: u32,
}

/// Draw `batch_size` pairs from a dataset of `len` columns. The start index
/// and the horizon are drawn independently, the index over `0..len - p` so
/// every horizon up to `p` stays in bounds.
pub fn sample_batch(
    len: usize,
    p: u32,
    batch_size: usize,
    rng: &mut crate::Rng,
) -> Result<Vec<TrainSample>> {
    if p == 0 {
        return Err(Error::Config("forecast horizon must be at least 1".into()));
    }
    if len <= p as usize {
        return Err(Error::Config(format!(
            "dataset of length {len} is too short for horizon {p}"
        )));
    }
    let last = len - p as usize;
    Ok((0..batch_size)
        .map(|_| TrainSample {
            index: rng.random_range(0..last),
            dt: rng.random_range(1..=p),
        })
        .collect())
}

/// Every valid pair with horizon up to `p`, in a fixed order.
pub fn all_pairs(len: usize, p: u32) -> Vec<TrainSample> {
    let mut out = Vec::new();
    for dt in 1..=p {
        for index in 0..len.saturating_sub(dt as usize) {
            out.push(TrainSample { index, dt });
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_horizon() {
        let mut rng = crate::seeded_rng(0);
        let b = sample_batch(50, 1, 200, &mut rng).unwrap();
        assert!(b.iter().all(|s| s.dt == 1 && s.index < 49));
    }

    #[test]
    fn bounds_respected() {
        let mut rng = crate::seeded_rng(1);
        for s in sample_batch(30, 10, 5000, &mut rng).unwrap() {
            assert!(s.index + s.dt as usize <= 29);
            assert!((1..=10).contains(&s.dt));
        }
    }

    #[test]
    fn short_dataset_rejected() {
        let mut rng = crate::seeded_rng(2);
        assert!(sample_batch(10, 10, 1, &mut rng).is_err());
        assert!(sample_batch(10, 0, 1, &mut rng).is_err());
    }

    #[test]
    fn all_pairs_count() {
        // sum over dt of (len - dt)
        assert_eq!(all_pairs(20, 3).len(), 19 + 18 + 17);
    }
}
