//! Output tables.
//!
//! `steps.csv`, one row per (seed, method, assimilated step):
//! `seed, method, step, tau_i, theta_i` for each estimated pair, then
//! `truth_theta_j, tau_error_j, theta_error_j, theta_signed_error_j` for
//! each true pair, then `forecast_mse, generalized_variance,
//! generalized_variance_norm`. Missing values are written as `NaN`.
//!
//! `summary.csv`, one row per (seed, method), with the [`RunSummary`]
//! fields plus `all_real_fits` (empty unless windowed EDMD) and
//! `spinup_theta` (`;`-separated).
//!
//! `config.toml` echoes the experiment config and parses back to it.

use std::path::{Path, PathBuf};

use super::config::Method;
use super::run::{normalised_gv, MethodRun, RunResult, RunSummary, StepRecord};
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct ExportPaths {
    pub steps: PathBuf,
    pub summary: PathBuf,
    pub config: PathBuf,
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    Error::Format {
        path: path.to_path_buf(),
        reason: e.to_string(),
    }
}

fn num(v: f64) -> String {
    v.to_string()
}

fn widths(runs: &[MethodRun]) -> (usize, usize) {
    let mut est = 0;
    let mut truth = 0;
    for r in runs {
        for rec in &r.records {
            est = est.max(rec.tau.len());
            truth = truth.max(rec.truth_theta.len());
        }
    }
    (est, truth)
}

pub fn step_header(est: usize, truth: usize) -> Vec<String> {
    let mut h = vec!["seed".to_string(), "method".into(), "step".into()];
    h.extend((0..est).map(|i| format!("tau_{i}")));
    h.extend((0..est).map(|i| format!("theta_{i}")));
    for name in [
        "truth_theta",
        "tau_error",
        "theta_error",
        "theta_signed_error",
    ] {
        h.extend((0..truth).map(|j| format!("{name}_{j}")));
    }
    h.extend(
        [
            "forecast_mse",
            "generalized_variance",
            "generalized_variance_norm",
        ]
        .map(String::from),
    );
    h
}

fn padded(v: &[f64], width: usize) -> impl Iterator<Item = String> + '_ {
    (0..width).map(move |i| num(v.get(i).copied().unwrap_or(f64::NAN)))
}

pub fn write_steps_csv(runs: &[MethodRun], path: &Path) -> Result<()> {
    let (est, truth) = widths(runs);
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    w.write_record(step_header(est, truth))
        .map_err(|e| csv_err(path, e))?;
    for run in runs {
        let norm = normalised_gv(&run.records);
        for (rec, gv_norm) in run.records.iter().zip(norm) {
            let mut row = vec![
                run.seed.to_string(),
                run.method.name().to_string(),
                rec.step.to_string(),
            ];
            row.extend(padded(&rec.tau, est));
            row.extend(padded(&rec.theta, est));
            for v in [
                &rec.truth_theta,
                &rec.tau_error,
                &rec.theta_error,
                &rec.theta_signed_error,
            ] {
                row.extend(padded(v, truth));
            }
            row.extend([
                num(rec.forecast_mse),
                num(rec.generalized_variance),
                num(gv_norm),
            ]);
            w.write_record(&row).map_err(|e| csv_err(path, e))?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub const SUMMARY_HEADER: [&str; 15] = [
    "seed",
    "method",
    "steps",
    "forecast_mse_median",
    "forecast_mse_mean",
    "theta_mae",
    "theta_mae_tail",
    "theta_signed_mean",
    "theta_error_var",
    "tau_mae",
    "tau_in_band",
    "gv_min_max_ratio",
    "all_real_fits",
    "spinup_theta",
    "final_theta",
];

pub fn write_summary_csv(runs: &[MethodRun], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    w.write_record(SUMMARY_HEADER)
        .map_err(|e| csv_err(path, e))?;
    for run in runs {
        let s = &run.summary;
        let join = |v: &[f64]| v.iter().map(|x| num(*x)).collect::<Vec<_>>().join(";");
        let last = run
            .records
            .last()
            .map(|r| r.theta.clone())
            .unwrap_or_default();
        let row = [
            run.seed.to_string(),
            run.method.name().to_string(),
            s.steps.to_string(),
            num(s.forecast_mse_median),
            num(s.forecast_mse_mean),
            num(s.theta_mae),
            num(s.theta_mae_tail),
            num(s.theta_signed_mean),
            num(s.theta_error_var),
            num(s.tau_mae),
            num(s.tau_in_band),
            num(s.gv_min_max_ratio),
            run.all_real_fits.map(|c| c.to_string()).unwrap_or_default(),
            join(&run.spinup_theta),
            join(&last),
        ];
        w.write_record(row).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Write all three files into `dir`, creating it if needed.
pub fn export(result: &RunResult, dir: &Path) -> Result<ExportPaths> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let paths = ExportPaths {
        steps: dir.join("steps.csv"),
        summary: dir.join("summary.csv"),
        config: dir.join("config.toml"),
    };
    write_steps_csv(&result.runs, &paths.steps)?;
    write_summary_csv(&result.runs, &paths.summary)?;
    std::fs::write(&paths.config, result.config.to_toml())
        .map_err(|e| Error::io(&paths.config, e))?;
    Ok(paths)
}

/// Step records grouped by (seed, method), in file order.
pub type StepTable = Vec<(u64, Method, Vec<StepRecord>)>;

/// Parse a `steps.csv` back into records.
pub fn read_steps_csv(path: &Path) -> Result<StepTable> {
    let fmt = |reason: String| Error::Format {
        path: path.to_path_buf(),
        reason,
    };
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
    let header = r.headers().map_err(|e| csv_err(path, e))?.clone();
    let est = header
        .iter()
        .filter(|h| h.starts_with("tau_") && !h.starts_with("tau_error"))
        .count();
    let truth = header
        .iter()
        .filter(|h| h.starts_with("truth_theta_"))
        .count();
    if header.iter().collect::<Vec<_>>() != step_header(est, truth) {
        return Err(fmt("unexpected step table header".into()));
    }
    let mut out: StepTable = Vec::new();
    for row in r.records() {
        let row = row.map_err(|e| csv_err(path, e))?;
        let f = |i: usize| -> Result<f64> {
            row[i]
                .parse::<f64>()
                .map_err(|e| fmt(format!("{}: {e}", &row[i])))
        };
        let vec = |start: usize, len: usize| -> Result<Vec<f64>> {
            (start..start + len).map(f).collect()
        };
        let seed: u64 = row[0].parse().map_err(|e| fmt(format!("seed: {e}")))?;
        let method: Method = row[1].parse()?;
        let step: usize = row[2].parse().map_err(|e| fmt(format!("step: {e}")))?;
        let strip = |v: Vec<f64>| -> Vec<f64> {
            // trailing NaN columns are padding for narrower runs
            let keep = v.iter().rposition(|x| !x.is_nan()).map_or(0, |p| p + 1);
            v[..keep].to_vec()
        };
        let base = 3 + 2 * est;
        let rec = StepRecord {
            step,
            tau: strip(vec(3, est)?),
            theta: strip(vec(3 + est, est)?),
            truth_theta: vec(base, truth)?,
            tau_error: vec(base + truth, truth)?,
            theta_error: vec(base + 2 * truth, truth)?,
            theta_signed_error: vec(base + 3 * truth, truth)?,
            forecast_mse: f(base + 4 * truth)?,
            generalized_variance: f(base + 4 * truth + 1)?,
        };
        match out.last_mut() {
            Some((s, m, recs)) if *s == seed && *m == method => recs.push(rec),
            _ => out.push((seed, method, vec![rec])),
        }
    }
    Ok(out)
}

/// Parse the numeric columns of one `summary.csv` row back into a summary.
pub fn read_summary_csv(path: &Path) -> Result<Vec<(u64, Method, RunSummary)>> {
    let fmt = |reason: String| Error::Format {
        path: path.to_path_buf(),
        reason,
    };
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
    let header = r.headers().map_err(|e| csv_err(path, e))?.clone();
    if header.iter().collect::<Vec<_>>() != SUMMARY_HEADER {
        return Err(fmt("unexpected summary header".into()));
    }
    let mut out = Vec::new();
    for row in r.records() {
        let row = row.map_err(|e| csv_err(path, e))?;
        let f = |i: usize| -> Result<f64> {
            row[i]
                .parse::<f64>()
                .map_err(|e| fmt(format!("{}: {e}", &row[i])))
        };
        out.push((
            row[0].parse().map_err(|e| fmt(format!("seed: {e}")))?,
            row[1].parse()?,
            RunSummary {
                steps: row[2].parse().map_err(|e| fmt(format!("steps: {e}")))?,
                forecast_mse_median: f(3)?,
                forecast_mse_mean: f(4)?,
                theta_mae: f(5)?,
                theta_mae_tail: f(6)?,
                theta_signed_mean: f(7)?,
                theta_error_var: f(8)?,
                tau_mae: f(9)?,
                tau_in_band: f(10)?,
                gv_min_max_ratio: f(11)?,
            },
        ));
    }
    Ok(out)
}
