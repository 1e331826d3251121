use crate::error::{Error, Result};
use crate::koopman::{fold_argument, pair_distance};

/// Minimum-cost assignment on a rectangular cost matrix given row-major as
/// `rows x cols` with `rows <= cols`. Returns the column assigned to each row.
pub fn hungarian(cost: &[f64], rows: usize, cols: usize) -> Result<Vec<usize>> {
    if cost.len() != rows * cols {
        return Err(Error::dim("assignment cost", rows * cols, cost.len()));
    }
    if rows > cols {
        return Err(Error::Config(format!(
            "cannot assign {rows} rows to {cols} columns"
        )));
    }
    if cost.iter().any(|c| !c.is_finite()) {
        return Err(Error::Numerical("non-finite assignment cost".into()));
    }
    // Potentials method, 1-based with a virtual column 0.
    let mut u = vec![0.0; rows + 1];
    let mut v = vec![0.0; cols + 1];
    let mut owner = vec![0usize; cols + 1];
    let mut way = vec![0usize; cols + 1];
    for i in 1..=rows {
        owner[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; cols + 1];
        let mut used = vec![false; cols + 1];
        loop {
            used[j0] = true;
            let i0 = owner[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=cols {
                if used[j] {
                    continue;
                }
                let cur = cost[(i0 - 1) * cols + (j - 1)] - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=cols {
                if used[j] {
                    u[owner[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if owner[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            owner[j0] = owner[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut out = vec![0; rows];
    for j in 1..=cols {
        if owner[j] > 0 {
            out[owner[j] - 1] = j - 1;
        }
    }
    Ok(out)
}

/// Errors of one step's eigenvalue estimates against the truth, each true
/// pair matched to an estimate by minimum total argument distance.
#[derive(Debug, Clone, PartialEq)]
pub struct TrackingError {
    /// `|τ̂ - τ|` per true pair.
    pub modulus: Vec<f64>,
    /// Circular distance between folded arguments per true pair.
    pub argument: Vec<f64>,
    /// Folded estimate minus truth, per true pair.
    pub signed: Vec<f64>,
    /// Estimate index matched to each true pair.
    pub matching: Vec<usize>,
}

/// Arguments are compared as conjugate pairs (folded to `[0, π]`). When
/// there are fewer estimates than true pairs, unmatched pairs get NaN.
pub fn eigen_tracking_error(
    tau_est: &[f64],
    theta_est: &[f64],
    tau_true: &[f64],
    theta_true: &[f64],
) -> Result<TrackingError> {
    if tau_est.len() != theta_est.len() {
        return Err(Error::dim(
            "estimate arguments",
            tau_est.len(),
            theta_est.len(),
        ));
    }
    if tau_true.len() != theta_true.len() {
        return Err(Error::dim(
            "true arguments",
            tau_true.len(),
            theta_true.len(),
        ));
    }
    let (e, t) = (theta_est.len(), theta_true.len());
    let cols = e.max(t);
    let mut cost = vec![0.0; t * cols];
    for i in 0..t {
        for j in 0..e {
            cost[i * cols + j] = pair_distance(theta_est[j], theta_true[i]);
        }
    }
    let matching = hungarian(&cost, t, cols)?;
    let mut out = TrackingError {
        modulus: Vec::with_capacity(t),
        argument: Vec::with_capacity(t),
        signed: Vec::with_capacity(t),
        matching: matching.clone(),
    };
    for (i, &j) in matching.iter().enumerate() {
        if j < e {
            out.modulus.push((tau_est[j] - tau_true[i]).abs());
            out.argument
                .push(pair_distance(theta_est[j], theta_true[i]));
            out.signed
                .push(fold_argument(theta_est[j]) - fold_argument(theta_true[i]));
        } else {
            out.modulus.push(f64::NAN);
            out.argument.push(f64::NAN);
            out.signed.push(f64::NAN);
        }
    }
    Ok(out)
}

/// Rescale a series to `[0, 1]`; a constant series maps to zeros. Non-finite
/// entries are left as they are and ignored for the range.
pub fn normalise_minmax(series: &[f64]) -> Vec<f64> {
    let finite = series.iter().copied().filter(|v| v.is_finite());
    let lo = finite.clone().fold(f64::INFINITY, f64::min);
    let hi = finite.fold(f64::NEG_INFINITY, f64::max);
    series
        .iter()
        .map(|&v| {
            if !v.is_finite() {
                v
            } else if hi > lo {
                (v - lo) / (hi - lo)
            } else {
                0.0
            }
        })
        .collect()
}

/// Linear-interpolated quantile of unsorted data, `q` in `[0, 1]`.
pub fn quantile(samples: &[f64], q: f64) -> f64 {
    let mut s: Vec<f64> = samples.to_vec();
    s.sort_by(f64::total_cmp);
    sorted_quantile(&s, q)
}

fn sorted_quantile(s: &[f64], q: f64) -> f64 {
    if s.is_empty() {
        return f64::NAN;
    }
    let pos = q.clamp(0.0, 1.0) * (s.len() - 1) as f64;
    let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
    s[lo] + (s[hi] - s[lo]) * (pos - lo as f64)
}

pub fn median(samples: &[f64]) -> f64 {
    quantile(samples, 0.5)
}

/// Silverman's rule `0.9 min(sd, IQR/1.34) n^{-1/5}`, falling back to
/// whichever spread is nonzero.
pub fn silverman_bandwidth(samples: &[f64]) -> f64 {
    let n = samples.len() as f64;
    if samples.len() < 2 {
        return f64::NAN;
    }
    let mean = samples.iter().sum::<f64>() / n;
    let sd = (samples.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    let iqr = (quantile(samples, 0.75) - quantile(samples, 0.25)) / 1.34;
    let spread = match (sd > 0.0, iqr > 0.0) {
        (true, true) => sd.min(iqr),
        (true, false) => sd,
        (false, true) => iqr,
        (false, false) => 0.0,
    };
    0.9 * spread * n.powf(-0.2)
}

/// Density estimate on an evenly spaced grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Density {
    pub grid: Vec<f64>,
    pub density: Vec<f64>,
    pub bandwidth: f64,
}

impl Density {
    /// Grid point of highest density.
    pub fn mode(&self) -> f64 {
        let mut best = 0;
        for (i, d) in self.density.iter().enumerate() {
            if *d > self.density[best] {
                best = i;
            }
        }
        self.grid[best]
    }

    /// Trapezoid integral over the grid.
    pub fn integral(&self) -> f64 {
        self.grid
            .windows(2)
            .zip(self.density.windows(2))
            .map(|(x, d)| (x[1] - x[0]) * (d[0] + d[1]) / 2.0)
            .sum()
    }
}

fn gaussian_kde_at(samples: &[f64], h: f64, x: f64) -> f64 {
    let norm = 1.0 / (samples.len() as f64 * h * (2.0 * std::f64::consts::PI).sqrt());
    norm * samples
        .iter()
        .map(|s| (-0.5 * ((x - s) / h).powi(2)).exp())
        .sum::<f64>()
}

/// Plain Gaussian KDE at the given points.
pub fn kde(samples: &[f64], bandwidth: f64, points: &[f64]) -> Vec<f64> {
    points
        .iter()
        .map(|&x| gaussian_kde_at(samples, bandwidth, x))
        .collect()
}

/// Gaussian KDE of nonnegative samples reflected about 0, `f(x) + f(-x)`,
/// on 512 points from 0 to the 99.5th percentile. The bandwidth defaults to
/// Silverman's rule.
pub fn kde_reflected(samples: &[f64], bandwidth: Option<f64>) -> Result<Density> {
    const GRID: usize = 512;
    if samples.is_empty() {
        return Err(Error::Config(
            "density estimate needs at least one sample".into(),
        ));
    }
    if samples.iter().any(|s| !(*s >= 0.0) || !s.is_finite()) {
        return Err(Error::Config(
            "reflected density needs finite nonnegative samples".into(),
        ));
    }
    let h = match bandwidth {
        Some(h) => h,
        None => silverman_bandwidth(samples),
    };
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::Config(format!(
            "bandwidth {h} must be positive; supply one for degenerate samples"
        )));
    }
    let mut top = quantile(samples, 0.995);
    if !(top > 0.0) {
        top = 4.0 * h;
    }
    let grid: Vec<f64> = (0..GRID)
        .map(|i| top * i as f64 / (GRID - 1) as f64)
        .collect();
    let density = grid
        .iter()
        .map(|&x| gaussian_kde_at(samples, h, x) + gaussian_kde_at(samples, h, -x))
        .collect();
    Ok(Density {
        grid,
        density,
        bandwidth: h,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng as _;
    use std::f64::consts::{PI, TAU};

    fn permutations(n: usize) -> Vec<Vec<usize>> {
        if n == 0 {
            return vec![vec![]];
        }
        let mut out = Vec::new();
        for p in permutations(n - 1) {
            for pos in 0..=p.len() {
                let mut q = p.clone();
                q.insert(pos, n - 1);
                out.push(q);
            }
        }
        out
    }

    fn brute_force(cost: &[f64], n: usize) -> f64 {
        permutations(n)
            .iter()
            .map(|p| {
                p.iter()
                    .enumerate()
                    .map(|(i, &j)| cost[i * n + j])
                    .sum::<f64>()
            })
            .fold(f64::INFINITY, f64::min)
    }

    #[test]
    fn matching_three_pairs_equals_exhaustive() {
        let mut rng = crate::seeded_rng(4);
        let mut compared = 0;
        for _ in 0..200 {
            let truth: Vec<f64> = (0..3).map(|_| rng.random_range(0.0..PI)).collect();
            let est: Vec<f64> = (0..3).map(|_| rng.random_range(0.0..TAU)).collect();
            let err = eigen_tracking_error(&[1.0; 3], &est, &[1.0; 3], &truth).unwrap();
            let mut cost = vec![0.0; 9];
            for i in 0..3 {
                for j in 0..3 {
                    cost[i * 3 + j] = pair_distance(est[j], truth[i]);
                }
            }
            let best = brute_force(&cost, 3);
            let got: f64 = err.argument.iter().sum();
            assert!((got - best).abs() < 1e-12, "{got} vs {best}");
            // L1 costs on a line often tie; compare pairings only when the
            // exhaustive optimum is unique
            let mut ranked: Vec<(f64, Vec<usize>)> = permutations(3)
                .into_iter()
                .map(|p| (p.iter().enumerate().map(|(i, &j)| cost[i * 3 + j]).sum(), p))
                .collect();
            ranked.sort_by(|a, b| a.0.total_cmp(&b.0));
            if ranked[1].0 - ranked[0].0 < 1e-9 {
                continue;
            }
            compared += 1;
            let p = ranked[0].1.clone();
            assert_eq!(err.matching, p);
        }
        assert!(compared > 50, "{compared}");
    }

    proptest! {
        #[test]
        fn hungarian_is_optimal(n in 1usize..6, seed in 0u64..1000) {
            let mut rng = crate::seeded_rng(seed);
            let cost: Vec<f64> = (0..n * n).map(|_| rng.random_range(0.0..10.0)).collect();
            let a = hungarian(&cost, n, n).unwrap();
            let mut seen = a.clone();
            seen.sort_unstable();
            prop_assert_eq!(seen, (0..n).collect::<Vec<_>>());
            let got: f64 = a.iter().enumerate().map(|(i, &j)| cost[i * n + j]).sum();
            prop_assert!((got - brute_force(&cost, n)).abs() < 1e-9);
        }

        #[test]
        fn normalised_series_in_unit_interval(v in prop::collection::vec(-1e3f64..1e3, 1..50)) {
            let s = normalise_minmax(&v);
            prop_assert!(s.iter().all(|x| (0.0..=1.0).contains(x)));
        }

        #[test]
        fn reflected_density_nonnegative(v in prop::collection::vec(0.0f64..5.0, 2..60)) {
            if let Ok(d) = kde_reflected(&v, None) {
                prop_assert!(d.density.iter().all(|x| *x >= 0.0));
            }
        }
    }

    #[test]
    fn exact_estimate_has_zero_error() {
        let e = eigen_tracking_error(&[1.0, 0.9], &[0.3, 1.2], &[1.0, 0.9], &[0.3, 1.2]).unwrap();
        assert!(e.modulus.iter().chain(&e.argument).all(|v| *v == 0.0));
    }

    #[test]
    fn argument_error_is_circular() {
        let e = eigen_tracking_error(&[1.0], &[0.4 + TAU], &[1.0], &[0.4]).unwrap();
        assert!(e.argument[0] < 1e-12);
        // a conjugate estimate is the same pair
        let e = eigen_tracking_error(&[1.0], &[TAU - 0.4], &[1.0], &[0.4]).unwrap();
        assert!(e.argument[0] < 1e-12 && e.signed[0].abs() < 1e-12);
    }

    #[test]
    fn missing_estimates_are_nan() {
        let e = eigen_tracking_error(&[1.0], &[0.5], &[1.0, 1.0], &[0.1, 0.5]).unwrap();
        assert_eq!(e.argument[1], 0.0);
        assert!(e.argument[0].is_nan());
    }

    #[test]
    fn length_mismatch_errors() {
        assert!(eigen_tracking_error(&[1.0], &[0.1, 0.2], &[1.0], &[0.1]).is_err());
    }

    #[test]
    fn normalisation_endpoints() {
        let s = normalise_minmax(&[3.0, 1.0, 2.0, 5.0]);
        assert_eq!(s, vec![0.5, 0.0, 0.25, 1.0]);
        assert_eq!(normalise_minmax(&[2.0, 2.0]), vec![0.0, 0.0]);
    }

    #[test]
    fn zero_samples_double_at_origin() {
        let d = kde_reflected(&[0.0; 5], Some(0.3)).unwrap();
        let plain = kde(&[0.0; 5], 0.3, &[0.0])[0];
        assert!((d.density[0] - 2.0 * plain).abs() < 1e-15);
    }

    #[test]
    fn far_samples_unaffected_by_reflection() {
        let s = [50.0, 51.0, 52.5, 49.0];
        let d = kde_reflected(&s, Some(0.5)).unwrap();
        let plain = kde(&s, 0.5, &d.grid);
        let sup = d
            .density
            .iter()
            .zip(&plain)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(sup < 1e-6);
    }

    #[test]
    fn reflected_density_integrates_to_one() {
        let mut rng = crate::seeded_rng(8);
        let s: Vec<f64> = (0..4000)
            .map(|_| {
                let u: f64 = rng.random_range(1e-12..1.0);
                -u.ln() * 0.02
            })
            .collect();
        let d = kde_reflected(&s, None).unwrap();
        let total = d.integral();
        assert!((0.99..=1.01).contains(&total), "{total}");
        assert!(d.mode() < 0.01);
    }

    #[test]
    fn silverman_matches_hand_value() {
        // sd = sqrt(2.5), IQR = 2 → 0.9 * min(1.5811, 1.4925) * 5^-0.2
        let h = silverman_bandwidth(&[1.0, 2.0, 3.0, 4.0, 5.0]);
        let want = 0.9 * (2.0 / 1.34) * 5f64.powf(-0.2);
        assert!((h - want).abs() < 1e-12);
    }

    #[test]
    fn empty_or_negative_samples_rejected() {
        assert!(kde_reflected(&[], Some(1.0)).is_err());
        assert!(kde_reflected(&[1.0, -0.1], Some(1.0)).is_err());
    }
}
