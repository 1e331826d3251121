//! Global search over each eigenvalue argument.
//!
//! For a sample with horizon `dt` the forecast loss is `2π/dt`-periodic in
//! `θ_i`, so it is evaluated on `s` points of `[0, 2π/dt)`. Scans with
//! different horizons are merged on a common `s`-point grid over `[0, 2π)`
//! through their Fourier coefficients, and the new argument is the grid point
//! where the centred loss is most extreme.

use std::f64::consts::TAU;
use std::io::Write;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex;
use rustfft::FftPlanner;

use crate::error::{ensure_dim, Error, Result};
use crate::kae::{gather_batch, KaeModel, TrainSample};
use crate::koopman::{apply_blocks, block_power, pair_distance};

/// Loss values at `θ_i = 2πj/(dt·s)`, `j = 0..s`.
#[derive(Debug, Clone, PartialEq)]
pub struct FrequencyScan {
    pub dt: u32,
    pub values: Vec<f64>,
}

impl FrequencyScan {
    pub fn points(&self) -> usize {
        self.values.len()
    }

    pub fn grid(&self) -> Vec<f64> {
        let s = self.values.len() as f64;
        (0..self.values.len())
            .map(|j| TAU * j as f64 / (self.dt as f64 * s))
            .collect()
    }
}

/// Summed loss on `θ = 2πj/s`, `j = 0..s`.
#[derive(Debug, Clone, PartialEq)]
pub struct TotalFrequencyLoss {
    pub values: Vec<f64>,
}

impl TotalFrequencyLoss {
    pub fn grid_point(&self, j: usize) -> f64 {
        TAU * j as f64 / self.values.len() as f64
    }

    pub fn grid(&self) -> Vec<f64> {
        (0..self.values.len()).map(|j| self.grid_point(j)).collect()
    }

    /// Indices of strict local minima on the periodic grid.
    pub fn local_minima(&self) -> Vec<usize> {
        let v = &self.values;
        let s = v.len();
        (0..s)
            .filter(|&j| {
                let prev = v[(j + s - 1) % s];
                let next = v[(j + 1) % s];
                v[j] < prev && v[j] < next
            })
            .collect()
    }

    /// Write `theta_grid,loss` rows.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
        w.write_record(["theta_grid", "loss"])
            .map_err(|e| csv_err(path, e))?;
        for (j, v) in self.values.iter().enumerate() {
            w.write_record([self.grid_point(j).to_string(), v.to_string()])
                .map_err(|e| csv_err(path, e))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    Error::Format {
        path: path.to_path_buf(),
        reason: e.to_string(),
    }
}

/// Scan one centred `(x, y, dt)` triple over `s` values of argument `i`,
/// holding everything else fixed.
pub fn scan_frequency(
    model: &KaeModel,
    i: usize,
    x: &DVector<f64>,
    y: &DVector<f64>,
    dt: u32,
    s: usize,
) -> Result<FrequencyScan> {
    let xm = DMatrix::from_column_slice(x.len(), 1, x.as_slice());
    let ym = DMatrix::from_column_slice(y.len(), 1, y.as_slice());
    Ok(scan_columns(model, i, &xm, &ym, &[dt], s)?.remove(0))
}

/// One scan per column of `x`/`y`.
pub fn scan_columns(
    model: &KaeModel,
    i: usize,
    x: &DMatrix<f64>,
    y: &DMatrix<f64>,
    dts: &[u32],
    s: usize,
) -> Result<Vec<FrequencyScan>> {
    if s < 2 {
        return Err(Error::Config(
            "a frequency scan needs at least 2 points".into(),
        ));
    }
    if i >= model.pairs() {
        return Err(Error::Config(format!("pair index {i} out of range")));
    }
    ensure_dim("scan targets", x.ncols(), y.ncols())?;
    ensure_dim("scan horizons", x.ncols(), dts.len())?;
    let z = model.encode_batch(x)?;
    let nz = model.latent_dim();
    let tau = model.spectrum.tau();
    let theta = model.spectrum.theta();
    let mut scans = Vec::with_capacity(dts.len());
    for (c, &dt) in dts.iter().enumerate() {
        if dt == 0 {
            return Err(Error::Config("scan horizon must be at least 1".into()));
        }
        // Every pair except `i` contributes the same propagated latent.
        let mut base = vec![0.0; nz];
        apply_blocks(tau, theta, z.column(c).as_slice(), dt, &mut base);
        let (a0, a1) = (z[(2 * i, c)], z[(2 * i + 1, c)]);
        let mut variants = DMatrix::zeros(nz, s);
        for j in 0..s {
            let th = TAU * j as f64 / (dt as f64 * s as f64);
            let b = block_power(tau[i], th, dt);
            let mut col = variants.column_mut(j);
            col.copy_from_slice(&base);
            col[2 * i] = b[0] * a0 + b[1] * a1;
            col[2 * i + 1] = b[2] * a0 + b[3] * a1;
        }
        let decoded = model.decode_batch(&variants)?;
        let target = y.column(c);
        let values = decoded
            .column_iter()
            .map(|d| (d - target).norm_squared())
            .collect();
        scans.push(FrequencyScan { dt, values });
    }
    Ok(scans)
}

/// Merge scans of mixed horizons on an `s_out`-point grid over `[0, 2π)`.
///
/// Each scan is read as one period of a trigonometric polynomial in
/// `dt·θ`; its coefficient at wavenumber `k` lands on wavenumber `k·dt` of
/// the output, which is exact at the output grid points.
pub fn combine_scans(scans: &[FrequencyScan], s_out: usize) -> Result<TotalFrequencyLoss> {
    let Some(first) = scans.first() else {
        return Err(Error::Config("no scans to combine".into()));
    };
    let s = first.points();
    if s < 2 || s_out < 2 {
        return Err(Error::Config("scan grids need at least 2 points".into()));
    }
    if let Some(bad) = scans.iter().find(|sc| sc.points() != s) {
        return Err(Error::Config(format!(
            "inconsistent scan sizes: {} and {}",
            s,
            bad.points()
        )));
    }
    if scans.iter().any(|sc| sc.dt == 0) {
        return Err(Error::Config("scan horizon must be at least 1".into()));
    }

    // Scans sharing a horizon can be summed before transforming.
    let max_dt = scans.iter().map(|sc| sc.dt).max().unwrap_or(1) as usize;
    let mut by_dt = vec![None::<Vec<f64>>; max_dt + 1];
    for sc in scans {
        let acc = by_dt[sc.dt as usize].get_or_insert_with(|| vec![0.0; s]);
        for (a, v) in acc.iter_mut().zip(&sc.values) {
            *a += v;
        }
    }

    let mut planner = FftPlanner::<f64>::new();
    let fwd = planner.plan_fft_forward(s);
    let inv = planner.plan_fft_inverse(s_out);
    let mut total = vec![Complex::new(0.0, 0.0); s_out];
    let scale = s_out as f64 / s as f64;
    let wrap = |k: i64| k.rem_euclid(s_out as i64) as usize;
    for (dt, vals) in by_dt.iter().enumerate() {
        let Some(vals) = vals else { continue };
        let dt = dt as i64;
        let mut buf: Vec<Complex<f64>> = vals.iter().map(|&v| Complex::new(v, 0.0)).collect();
        fwd.process(&mut buf);
        for (k, c) in buf.iter().enumerate() {
            let k = k as i64;
            let c = c * scale;
            if s % 2 == 0 && k == s as i64 / 2 {
                // Nyquist term: split between +k and -k to keep the interpolant real.
                total[wrap(k * dt)] += c * 0.5;
                total[wrap(-k * dt)] += c * 0.5;
            } else {
                let ks = if k > s as i64 / 2 { k - s as i64 } else { k };
                total[wrap(ks * dt)] += c;
            }
        }
    }
    inv.process(&mut total);
    let norm = 1.0 / s_out as f64;
    Ok(TotalFrequencyLoss {
        values: total.iter().map(|c| c.re * norm).collect(),
    })
}

/// Pick a new argument for pair `i`: grid points ranked by `-|L - median(L)|`,
/// skipping the zero frequency and anything closer than `tolerance` to the
/// other pairs' arguments. `None` when every candidate is rejected.
pub fn select_frequency(
    total: &TotalFrequencyLoss,
    thetas: &[f64],
    i: usize,
    tolerance: f64,
) -> Option<f64> {
    let s = total.values.len();
    if s == 0 {
        return None;
    }
    let mut sorted = total.values.clone();
    sorted.sort_by(f64::total_cmp);
    let median = if s % 2 == 1 {
        sorted[s / 2]
    } else {
        0.5 * (sorted[s / 2 - 1] + sorted[s / 2])
    };
    let mut order: Vec<usize> = (0..s).collect();
    order.sort_by(|&a, &b| {
        let sa = -(total.values[a] - median).abs();
        let sb = -(total.values[b] - median).abs();
        sa.total_cmp(&sb)
    });
    let cell = TAU / s as f64;
    order.into_iter().map(|j| total.grid_point(j)).find(|&th| {
        let zero = crate::koopman::circular_distance(th, 0.0) < cell * (1.0 - 1e-9);
        let crowded = thetas
            .iter()
            .enumerate()
            .any(|(k, &other)| k != i && pair_distance(th, other) < tolerance);
        !zero && !crowded
    })
}

/// Outcome of one pass over all pairs.
#[derive(Debug, Clone)]
pub struct FreqOptReport {
    pub totals: Vec<TotalFrequencyLoss>,
    pub selected: Vec<Option<f64>>,
}

/// Scan, combine and select each pair in turn on one shared batch; later
/// pairs see the arguments already chosen for earlier ones.
pub fn optimize_all(
    model: &mut KaeModel,
    data: &DMatrix<f64>,
    batch: &[TrainSample],
    s: usize,
    tolerance: f64,
) -> Result<FreqOptReport> {
    let (x, y, dts) = gather_batch(data, batch)?;
    let mut report = FreqOptReport {
        totals: Vec::with_capacity(model.pairs()),
        selected: Vec::with_capacity(model.pairs()),
    };
    for i in 0..model.pairs() {
        let scans = scan_columns(model, i, &x, &y, &dts, s)?;
        let total = combine_scans(&scans, s)?;
        let pick = select_frequency(&total, model.spectrum.theta(), i, tolerance);
        if let Some(th) = pick {
            model.spectrum.set_theta(i, th);
        }
        report.totals.push(total);
        report.selected.push(pick);
    }
    Ok(report)
}

/// Write several totals side by side: `theta_grid,pair_0,pair_1,...`.
pub fn write_totals_csv(totals: &[TotalFrequencyLoss], path: &Path) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = std::io::BufWriter::new(file);
    let s = totals.first().map_or(0, |t| t.values.len());
    let mut header = String::from("theta_grid");
    for i in 0..totals.len() {
        header.push_str(&format!(",pair_{i}"));
    }
    writeln!(w, "{header}").map_err(|e| Error::io(path, e))?;
    for j in 0..s {
        let mut line = (TAU * j as f64 / s as f64).to_string();
        for t in totals {
            line.push(',');
            line.push_str(&t.values[j].to_string());
        }
        writeln!(w, "{line}").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn scan_of(dt: u32, s: usize, f: impl Fn(f64) -> f64) -> FrequencyScan {
        let values = (0..s)
            .map(|j| f(TAU * j as f64 / (dt as f64 * s as f64)))
            .collect();
        FrequencyScan { dt, values }
    }

    #[test]
    fn unit_horizon_is_pointwise_sum() {
        let a = scan_of(1, 16, |t| 1.0 + t.cos());
        let b = scan_of(1, 16, |t| (2.0 * t).sin().powi(2));
        let total = combine_scans(&[a.clone(), b.clone()], 16).unwrap();
        for j in 0..16 {
            assert!((total.values[j] - a.values[j] - b.values[j]).abs() < 1e-12);
        }
    }

    #[test]
    fn horizon_two_repeats_twice() {
        let a = scan_of(2, 20, |t| 3.0 + (2.0 * t).cos() + 0.5 * (4.0 * t).sin());
        let total = combine_scans(std::slice::from_ref(&a), 20).unwrap();
        for j in 0..10 {
            assert!((total.values[j] - a.values[2 * j]).abs() < 1e-12);
            assert!((total.values[j + 10] - a.values[2 * j]).abs() < 1e-12);
        }
    }

    #[test]
    fn inconsistent_sizes_rejected() {
        let a = scan_of(1, 10, |t| t.cos());
        let b = scan_of(2, 12, |t| t.cos());
        assert!(combine_scans(&[a, b], 10).is_err());
        assert!(combine_scans(&[], 10).is_err());
    }

    #[test]
    fn sharp_minimum_selected() {
        let total = TotalFrequencyLoss {
            values: (0..100).map(|j| if j == 50 { 0.0 } else { 1.0 }).collect(),
        };
        let th = select_frequency(&total, &[0.0], 0, 0.1).unwrap();
        assert!((th - PI).abs() < 1e-12);
    }

    #[test]
    fn sharp_maximum_selected() {
        let total = TotalFrequencyLoss {
            values: (0..100).map(|j| if j == 50 { 5.0 } else { 1.0 }).collect(),
        };
        assert!((select_frequency(&total, &[0.0], 0, 0.1).unwrap() - PI).abs() < 1e-12);
    }

    #[test]
    fn crowded_candidate_skipped() {
        let total = TotalFrequencyLoss {
            values: (0..100)
                .map(|j| match j {
                    50 => 0.0,
                    20 => 0.2,
                    _ => 1.0,
                })
                .collect(),
        };
        let th = select_frequency(&total, &[0.0, PI + 0.01], 0, 0.1).unwrap();
        assert!((th - TAU * 0.2).abs() < 1e-12);
        // tolerance 0 disables the rule
        let th = select_frequency(&total, &[0.0, PI], 0, 0.0).unwrap();
        assert!((th - PI).abs() < 1e-12);
    }

    #[test]
    fn zero_frequency_rejected() {
        let total = TotalFrequencyLoss {
            values: (0..10)
                .map(|j| if j == 0 { -9.0 } else { j as f64 * 0.01 })
                .collect(),
        };
        let th = select_frequency(&total, &[1.0], 0, 0.0).unwrap();
        assert!(th > 0.0);
    }
}
