use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use nalgebra::DMatrix;

use kae_enkf::enkf::FilterKind;
use kae_enkf::freq_opt::{combine_scans, scan_columns, write_totals_csv, FrequencyScan};
use kae_enkf::harness::{
    export, generate, kae_filter, run_experiment, ExperimentConfig, GeneratorConfig, Method,
};
use kae_enkf::kae::{
    column_mean, config_hash, default_theta, fit, gather_batch, sample_batch, write_history_csv,
    Architecture, Checkpoint, KaeModel,
};
use kae_enkf::synthetic::{read_dataset, write_dataset, write_pgm, DatasetHeader};

#[derive(Parser)]
#[command(
    name = "kae-enkf",
    version,
    about = "Koopman autoencoder ensemble Kalman filter"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Experiment config (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Overrides the config's seed list with a single seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value = "out")]
    out_dir: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a stream and write it as dataset files.
    Synth {
        #[command(flatten)]
        common: Common,
        /// Also write the first this many frames as PGM images (pendulum only).
        #[arg(long, default_value_t = 0)]
        pgm: usize,
    },
    /// Train the KAE on the spin-up window.
    Train {
        #[command(flatten)]
        common: Common,
        /// Measurement dataset; generated from the config when omitted.
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Assimilate a stream with a trained KAE and write per-step estimates.
    Filter {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Clean states used as the forecast target; the measurements otherwise.
        #[arg(long)]
        truth: Option<PathBuf>,
        /// `kae_latent` or `kae_full`.
        #[arg(long, default_value = "kae_latent")]
        method: Method,
        #[arg(long)]
        horizon: Option<u32>,
    },
    /// Run every configured method over every seed and export the tables.
    Benchmark {
        #[command(flatten)]
        common: Common,
        /// Restrict to these methods (repeatable).
        #[arg(long)]
        method: Vec<Method>,
        #[arg(long)]
        horizon: Option<u32>,
    },
    /// Dump per-horizon and combined frequency loss landscapes.
    Freqscan {
        #[command(flatten)]
        common: Common,
        /// Scan this trained model instead of a freshly initialised one.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        horizon: Option<u32>,
    },
}

fn load_config(common: &Common) -> Result<(ExperimentConfig, String)> {
    let mut cfg = ExperimentConfig::load(&common.config)?;
    if let Some(seed) = common.seed {
        cfg.seeds = vec![seed];
    }
    cfg.validate()?;
    let text = cfg.to_toml();
    Ok((cfg, text))
}

fn out_dir(common: &Common) -> Result<&Path> {
    std::fs::create_dir_all(&common.out_dir)
        .with_context(|| format!("creating {}", common.out_dir.display()))?;
    Ok(&common.out_dir)
}

fn header(cfg: &ExperimentConfig, seed: u64, data: &DMatrix<f64>) -> Result<DatasetHeader> {
    Ok(DatasetHeader {
        n: data.nrows(),
        count: data.ncols(),
        seed,
        sample_interval: 1.0,
        config: serde_json::to_value(&cfg.generator)?,
    })
}

fn synth(common: &Common, pgm: usize) -> Result<()> {
    let (cfg, _) = load_config(common)?;
    let dir = out_dir(common)?;
    for &seed in &cfg.seeds {
        let stream = generate(&cfg.generator, seed)?;
        for (name, m) in [
            ("measurements", &stream.measurements),
            ("states", &stream.states),
            ("theta", &stream.theta),
        ] {
            let path = dir.join(format!("{name}_seed{seed}.kds"));
            write_dataset(&path, &header(&cfg, seed, m)?, m)?;
            println!("{}", path.display());
        }
        if let GeneratorConfig::Pendulum { render, .. } = &cfg.generator {
            let frame = render.height * render.width;
            for k in 0..pgm.min(stream.states.ncols()) {
                let newest = stream.states.column(k).rows(0, frame).into_owned();
                let path = dir.join(format!("frame_seed{seed}_{k:04}.pgm"));
                write_pgm(&newest, render.height, render.width, &path)?;
            }
        } else if pgm > 0 {
            bail!("--pgm needs the pendulum generator");
        }
    }
    Ok(())
}

fn train(common: &Common, data: Option<&Path>) -> Result<()> {
    let (cfg, text) = load_config(common)?;
    let dir = out_dir(common)?;
    for &seed in &cfg.seeds {
        let measurements = match data {
            Some(p) => read_dataset(p)?.1,
            None => generate(&cfg.generator, seed)?.measurements,
        };
        if measurements.ncols() < cfg.spinup {
            bail!(
                "dataset has {} records, spin-up needs {}",
                measurements.ncols(),
                cfg.spinup
            );
        }
        let spin = measurements.columns(0, cfg.spinup).into_owned();
        let arch = Architecture::new(spin.nrows(), cfg.kae.hidden.clone(), cfg.kae.pairs)?;
        let outcome = fit(
            &arch,
            &spin,
            &cfg.kae.train,
            &mut kae_enkf::seeded_rng(seed),
        )?;
        let ck = dir.join(format!("checkpoint_seed{seed}.json"));
        Checkpoint::from_model(&outcome.model, config_hash(&text)).save(&ck)?;
        let hist = dir.join(format!("history_seed{seed}.csv"));
        write_history_csv(&outcome.history, &hist)?;
        println!(
            "seed {seed}: theta {:?} tau {:?} -> {}",
            outcome.model.spectrum.theta(),
            outcome.model.spectrum.tau(),
            ck.display()
        );
    }
    Ok(())
}

fn filter(
    common: &Common,
    checkpoint: &Path,
    data: &Path,
    truth: Option<&Path>,
    method: Method,
    horizon: Option<u32>,
) -> Result<()> {
    let (cfg, _) = load_config(common)?;
    let kind = match method {
        Method::KaeLatent => FilterKind::Latent,
        Method::KaeFull => FilterKind::FullState,
        other => bail!("filter runs KAE methods only, got {}", other.name()),
    };
    let seed = cfg.seeds[0];
    let h = horizon.unwrap_or(cfg.horizon);
    if h == 0 {
        bail!("horizon must be at least 1");
    }
    let model = Checkpoint::load(checkpoint)?.into_model()?;
    let (_, x) = read_dataset(data)?;
    let target = match truth {
        Some(p) => read_dataset(p)?.1,
        None => x.clone(),
    };
    if target.shape() != x.shape() {
        bail!(
            "truth is {:?}, measurements are {:?}",
            target.shape(),
            x.shape()
        );
    }
    if x.ncols() <= cfg.spinup {
        bail!(
            "stream has {} records, spin-up is {}",
            x.ncols(),
            cfg.spinup
        );
    }
    let spin = x.columns(0, cfg.spinup).into_owned();
    let mut rng = kae_enkf::seeded_rng(method.stream_seed(seed));
    let mut f = kae_filter(&cfg, kind, model, &spin, &mut rng)?;
    let pairs = f.pairs();

    let dir = out_dir(common)?;
    let path = dir.join(format!("filter_{}_seed{seed}.csv", method.name()));
    let mut w = csv::Writer::from_path(&path)?;
    let mut head = vec!["step".to_string()];
    head.extend((0..pairs).map(|i| format!("tau_{i}")));
    head.extend((0..pairs).map(|i| format!("theta_{i}")));
    head.extend((0..2 * pairs).map(|j| format!("latent_mean_{j}")));
    head.push(format!("forecast_mse@{h}"));
    head.push("generalized_variance".into());
    w.write_record(&head)?;
    for k in cfg.spinup..x.ncols() {
        f.step(&x.column(k).into_owned(), &mut rng)
            .with_context(|| format!("assimilating step {k}"))?;
        let (tau, theta) = f.estimates();
        let ahead = k + h as usize;
        let mse = if ahead < target.ncols() {
            let fc = f.forecast(h)?.mean;
            (fc - target.column(ahead)).map(|v| v * v).mean()
        } else {
            f64::NAN
        };
        let mut row = vec![k.to_string()];
        row.extend(tau.iter().chain(&theta).map(f64::to_string));
        row.extend(f.latent_mean()?.iter().map(f64::to_string));
        row.push(mse.to_string());
        row.push(f.generalized_variance()?.to_string());
        w.write_record(&row)?;
    }
    w.flush()?;
    println!("{}", path.display());
    Ok(())
}

fn benchmark(common: &Common, methods: Vec<Method>, horizon: Option<u32>) -> Result<()> {
    let (mut cfg, _) = load_config(common)?;
    if !methods.is_empty() {
        cfg.methods = methods;
    }
    if let Some(h) = horizon {
        cfg.horizon = h;
    }
    let result = run_experiment(&cfg)?;
    let paths = export(&result, out_dir(common)?)?;
    for run in &result.runs {
        let s = &run.summary;
        println!(
            "seed {:>3} {:<15} mse_med {:.4e} theta_mae {:.4e} signed {:+.4e} tau_in_band {:.3}",
            run.seed,
            run.method.name(),
            s.forecast_mse_median,
            s.theta_mae,
            s.theta_signed_mean,
            s.tau_in_band
        );
    }
    println!(
        "{}\n{}\n{}",
        paths.steps.display(),
        paths.summary.display(),
        paths.config.display()
    );
    Ok(())
}

fn freqscan(common: &Common, checkpoint: Option<&Path>, horizon: Option<u32>) -> Result<()> {
    let (cfg, _) = load_config(common)?;
    let seed = cfg.seeds[0];
    let tc = &cfg.kae.train;
    let p = horizon.unwrap_or(tc.horizon);
    let stream = generate(&cfg.generator, seed)?;
    let spin = stream.spinup(cfg.spinup);
    let mut rng = kae_enkf::seeded_rng(seed);
    let model = match checkpoint {
        Some(path) => Checkpoint::load(path)?.into_model()?,
        None => {
            let arch = Architecture::new(spin.nrows(), cfg.kae.hidden.clone(), cfg.kae.pairs)?;
            let mean = column_mean(&spin);
            let centred = centre(&spin, &mean);
            let theta = tc
                .initial_theta
                .clone()
                .unwrap_or_else(|| default_theta(cfg.kae.pairs));
            KaeModel::initialise(&arch, &centred, mean, theta, &mut rng)?
        }
    };
    let centred = centre(&spin, &model.mean);
    let batch = sample_batch(centred.ncols(), p, tc.freq_opt_batch, &mut rng)?;
    let (x, y, dts) = gather_batch(&centred, &batch)?;
    let dir = out_dir(common)?;

    let mut totals = Vec::with_capacity(model.pairs());
    let mut w = csv::Writer::from_path(dir.join("freqscan_horizons.csv"))?;
    w.write_record(["pair", "dt", "theta", "loss"])?;
    for i in 0..model.pairs() {
        let scans = scan_columns(&model, i, &x, &y, &dts, tc.scan_points)?;
        for dt in 1..=p {
            let of_dt: Vec<&FrequencyScan> = scans.iter().filter(|s| s.dt == dt).collect();
            let Some(first) = of_dt.first() else { continue };
            for (j, th) in first.grid().iter().enumerate() {
                let mean = of_dt.iter().map(|s| s.values[j]).sum::<f64>() / of_dt.len() as f64;
                w.write_record([
                    i.to_string(),
                    dt.to_string(),
                    th.to_string(),
                    mean.to_string(),
                ])?;
            }
        }
        let total = combine_scans(&scans, tc.scan_points)?;
        println!(
            "pair {i}: {} local minima, minimum at {:.4}",
            total.local_minima().len(),
            total.grid_point(argmin(&total.values))
        );
        totals.push(total);
    }
    w.flush()?;
    write_totals_csv(&totals, &dir.join("freqscan_total.csv"))?;
    Ok(())
}

fn centre(x: &DMatrix<f64>, mean: &nalgebra::DVector<f64>) -> DMatrix<f64> {
    let mut c = x.clone();
    for mut col in c.column_iter_mut() {
        col -= mean;
    }
    c
}

fn argmin(v: &[f64]) -> usize {
    v.iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .map_or(0, |(j, _)| j)
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match Cli::parse().command {
        Command::Synth { common, pgm } => synth(&common, pgm),
        Command::Train { common, data } => train(&common, data.as_deref()),
        Command::Filter {
            common,
            checkpoint,
            data,
            truth,
            method,
            horizon,
        } => filter(
            &common,
            &checkpoint,
            &data,
            truth.as_deref(),
            method,
            horizon,
        ),
        Command::Benchmark {
            common,
            method,
            horizon,
        } => benchmark(&common, method, horizon),
        Command::Freqscan {
            common,
            checkpoint,
            horizon,
        } => freqscan(&common, checkpoint.as_deref(), horizon),
    }
}
