use nalgebra::{DMatrix, DVector};

use super::config::{ExperimentConfig, GeneratorConfig, Method};
use super::metrics::{eigen_tracking_error, median, normalise_minmax};
use crate::baselines::{
    hankel_embed, DmdModel, HankelBuffer, HankelDmdEnkf, StreamingEdmd, WindowedEdmd,
};
use crate::enkf::{latent_observation_variance, FilterKind, KaeFilter};
use crate::error::{Error, Result};
use crate::kae::{fit, Architecture, KaeModel};
use crate::synthetic::{
    add_noise, gen_multi_freq, gen_pendulum_frames, gen_single_freq, generate_rotation,
    RotationGenConfig,
};

/// Generated data for one seed.
#[derive(Debug, Clone)]
pub struct Stream {
    /// Noisy measurements, `n x steps`.
    pub measurements: DMatrix<f64>,
    /// Clean states, the forecast target.
    pub states: DMatrix<f64>,
    /// True argument per pair and step, `f x steps`.
    pub theta: DMatrix<f64>,
}

impl Stream {
    pub fn steps(&self) -> usize {
        self.measurements.ncols()
    }

    pub fn spinup(&self, m: usize) -> DMatrix<f64> {
        self.measurements.columns(0, m).into_owned()
    }
}

pub fn generate(cfg: &GeneratorConfig, seed: u64) -> Result<Stream> {
    match cfg {
        GeneratorConfig::Single {
            nu,
            sigma,
            steps,
            dim,
            schedules,
        } => {
            let mut g = RotationGenConfig::single(*nu, *sigma, seed);
            g.steps = *steps;
            g.dim = *dim;
            let run = match schedules {
                Some(s) => {
                    g.schedules = s.clone();
                    generate_rotation(&g)?
                }
                None => gen_single_freq(&g)?,
            };
            Ok(Stream {
                measurements: run.measurements,
                states: run.states,
                theta: run.theta,
            })
        }
        GeneratorConfig::Multi { sigma, steps, dim } => {
            let mut g = RotationGenConfig::multi(*sigma, seed);
            g.steps = *steps;
            g.dim = *dim;
            let run = gen_multi_freq(&g)?;
            Ok(Stream {
                measurements: run.measurements,
                states: run.states,
                theta: run.theta,
            })
        }
        GeneratorConfig::Pendulum { sigma, render } => {
            let run = gen_pendulum_frames(render)?;
            let measurements = add_noise(&run.states, *sigma, &mut crate::seeded_rng(seed))?;
            Ok(Stream {
                measurements,
                states: run.states,
                theta: DMatrix::from_row_slice(1, run.theta.len(), &run.theta),
            })
        }
    }
}

/// Metrics after assimilating one measurement.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    /// Index of the assimilated measurement in the stream.
    pub step: usize,
    pub tau: Vec<f64>,
    pub theta: Vec<f64>,
    pub truth_theta: Vec<f64>,
    pub tau_error: Vec<f64>,
    pub theta_error: Vec<f64>,
    pub theta_signed_error: Vec<f64>,
    /// Mean squared error of the `horizon`-step mean forecast against the
    /// clean state; NaN when the target lies past the stream.
    pub forecast_mse: f64,
    /// Generalized variance of the latent ensemble; NaN for methods
    /// without an ensemble.
    pub generalized_variance: f64,
}

/// Per-run aggregates, all recomputable from the step records.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub steps: usize,
    pub forecast_mse_median: f64,
    pub forecast_mse_mean: f64,
    pub theta_mae: f64,
    /// Argument MAE over the last `tail` records.
    pub theta_mae_tail: f64,
    pub theta_signed_mean: f64,
    /// Sample variance of the signed argument errors.
    pub theta_error_var: f64,
    pub tau_mae: f64,
    /// Fraction of steps with every modulus within `tau_band` of 1.
    pub tau_in_band: f64,
    /// Run minimum over run maximum of the generalized variance.
    pub gv_min_max_ratio: f64,
}

#[derive(Debug, Clone)]
pub struct MethodRun {
    pub seed: u64,
    pub method: Method,
    pub records: Vec<StepRecord>,
    pub summary: RunSummary,
    /// Arguments at the end of spin-up (trained or fitted).
    pub spinup_theta: Vec<f64>,
    /// Windowed EDMD fits without any complex pair.
    pub all_real_fits: Option<usize>,
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub config: ExperimentConfig,
    pub runs: Vec<MethodRun>,
}

impl RunResult {
    pub fn runs_of(&self, method: Method) -> impl Iterator<Item = &MethodRun> {
        self.runs.iter().filter(move |r| r.method == method)
    }
}

fn finite(values: impl Iterator<Item = f64>) -> Vec<f64> {
    values.filter(|v| v.is_finite()).collect()
}

fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        f64::NAN
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

pub fn summarise(records: &[StepRecord], tail: usize, tau_band: f64) -> RunSummary {
    let mse = finite(records.iter().map(|r| r.forecast_mse));
    let arg = finite(records.iter().flat_map(|r| r.theta_error.iter().copied()));
    let start = records.len().saturating_sub(tail);
    let arg_tail = finite(
        records[start..]
            .iter()
            .flat_map(|r| r.theta_error.iter().copied()),
    );
    let signed = finite(
        records
            .iter()
            .flat_map(|r| r.theta_signed_error.iter().copied()),
    );
    let signed_mean = mean(&signed);
    let var = if signed.len() > 1 {
        signed
            .iter()
            .map(|v| (v - signed_mean).powi(2))
            .sum::<f64>()
            / (signed.len() - 1) as f64
    } else {
        f64::NAN
    };
    let tau_err = finite(records.iter().flat_map(|r| r.tau_error.iter().copied()));
    let in_band = records
        .iter()
        .filter(|r| !r.tau.is_empty() && r.tau.iter().all(|t| (t - 1.0).abs() <= tau_band))
        .count();
    let gv = finite(records.iter().map(|r| r.generalized_variance));
    let ratio = if gv.is_empty() {
        f64::NAN
    } else {
        let lo = gv.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = gv.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if hi > 0.0 {
            lo / hi
        } else {
            f64::NAN
        }
    };
    RunSummary {
        steps: records.len(),
        forecast_mse_median: if mse.is_empty() {
            f64::NAN
        } else {
            median(&mse)
        },
        forecast_mse_mean: mean(&mse),
        theta_mae: mean(&arg),
        theta_mae_tail: mean(&arg_tail),
        theta_signed_mean: signed_mean,
        theta_error_var: var,
        tau_mae: mean(&tau_err),
        tau_in_band: if records.is_empty() {
            f64::NAN
        } else {
            in_band as f64 / records.len() as f64
        },
        gv_min_max_ratio: ratio,
    }
}

/// Min-max normalised generalized variance of a run.
pub fn normalised_gv(records: &[StepRecord]) -> Vec<f64> {
    normalise_minmax(
        &records
            .iter()
            .map(|r| r.generalized_variance)
            .collect::<Vec<_>>(),
    )
}

/// One method's streaming state.
trait Tracker {
    fn assimilate(&mut self, x: &DVector<f64>, rng: &mut crate::Rng) -> Result<()>;
    fn estimates(&self) -> (Vec<f64>, Vec<f64>);
    fn forecast(&self, dt: u32) -> Result<DVector<f64>>;
    fn generalized_variance(&self) -> Result<f64> {
        Ok(f64::NAN)
    }
    fn all_real_fits(&self) -> Option<usize> {
        None
    }
}

impl Tracker for KaeFilter<KaeModel> {
    fn assimilate(&mut self, x: &DVector<f64>, rng: &mut crate::Rng) -> Result<()> {
        self.step(x, rng)
    }
    fn estimates(&self) -> (Vec<f64>, Vec<f64>) {
        KaeFilter::estimates(self)
    }
    fn forecast(&self, dt: u32) -> Result<DVector<f64>> {
        Ok(KaeFilter::forecast(self, dt)?.mean)
    }
    fn generalized_variance(&self) -> Result<f64> {
        KaeFilter::generalized_variance(self)
    }
}

impl Tracker for HankelDmdEnkf {
    fn assimilate(&mut self, x: &DVector<f64>, rng: &mut crate::Rng) -> Result<()> {
        self.step(x, rng)
    }
    fn estimates(&self) -> (Vec<f64>, Vec<f64>) {
        HankelDmdEnkf::estimates(self)
    }
    fn forecast(&self, dt: u32) -> Result<DVector<f64>> {
        HankelDmdEnkf::forecast(self, dt)
    }
    fn generalized_variance(&self) -> Result<f64> {
        self.filter.generalized_variance()
    }
}

/// Shared by the streaming and windowed EDMD trackers.
struct DmdTracker<U> {
    updater: U,
    buffer: HankelBuffer,
    current: DVector<f64>,
    model: DmdModel,
    pairs: usize,
    n: usize,
}

impl<U> DmdTracker<U> {
    fn estimates(&self) -> (Vec<f64>, Vec<f64>) {
        self.model.spectrum_estimates(self.pairs)
    }
    fn forecast(&self, dt: u32) -> Result<DVector<f64>> {
        Ok(self
            .model
            .forecast(&self.current, dt)?
            .rows(0, self.n)
            .into_owned())
    }
    fn next_pair(&mut self, x: &DVector<f64>) -> Result<(DVector<f64>, DVector<f64>)> {
        let h = self
            .buffer
            .push(x)?
            .ok_or_else(|| Error::State("delay buffer not primed".into()))?;
        let prev = std::mem::replace(&mut self.current, h.clone());
        Ok((prev, h))
    }
}

impl Tracker for DmdTracker<StreamingEdmd> {
    fn assimilate(&mut self, x: &DVector<f64>, _: &mut crate::Rng) -> Result<()> {
        let (a, b) = self.next_pair(x)?;
        self.model = self.updater.update(&a, &b)?.clone();
        Ok(())
    }
    fn estimates(&self) -> (Vec<f64>, Vec<f64>) {
        DmdTracker::estimates(self)
    }
    fn forecast(&self, dt: u32) -> Result<DVector<f64>> {
        DmdTracker::forecast(self, dt)
    }
}

impl Tracker for DmdTracker<WindowedEdmd> {
    fn assimilate(&mut self, x: &DVector<f64>, _: &mut crate::Rng) -> Result<()> {
        let (a, b) = self.next_pair(x)?;
        if let Some(m) = self.updater.update(&a, &b)? {
            self.model = m;
        }
        Ok(())
    }
    fn estimates(&self) -> (Vec<f64>, Vec<f64>) {
        DmdTracker::estimates(self)
    }
    fn forecast(&self, dt: u32) -> Result<DVector<f64>> {
        DmdTracker::forecast(self, dt)
    }
    fn all_real_fits(&self) -> Option<usize> {
        Some(self.updater.all_real_fits)
    }
}

/// Train the spin-up KAE for one seed.
pub fn train_kae(cfg: &ExperimentConfig, stream: &Stream, seed: u64) -> Result<KaeModel> {
    let spin = stream.spinup(cfg.spinup);
    let arch = Architecture::new(spin.nrows(), cfg.kae.hidden.clone(), cfg.kae.pairs)?;
    Ok(fit(&arch, &spin, &cfg.kae.train, &mut crate::seeded_rng(seed))?.model)
}

/// Start a KAE filter from the last spin-up column. The observation
/// variance is `alpha5` when set, otherwise `alpha5_scale` times the noise
/// variance pushed through the encoder (latent) or the raw noise variance
/// (full state).
pub fn kae_filter(
    cfg: &ExperimentConfig,
    kind: FilterKind,
    model: KaeModel,
    spin: &DMatrix<f64>,
    rng: &mut crate::Rng,
) -> Result<KaeFilter<KaeModel>> {
    if spin.ncols() == 0 {
        return Err(Error::Config("empty spin-up window".into()));
    }
    let sigma = cfg.generator.sigma();
    let derived = match kind {
        FilterKind::Latent => {
            cfg.kae.noise.alpha5_scale * latent_observation_variance(&model, spin, sigma)?
        }
        FilterKind::FullState => sigma * sigma,
    };
    let noise = cfg.kae.noise.resolve(derived);
    let last = spin.column(spin.ncols() - 1).into_owned();
    let (tau, theta) = (
        model.spectrum.tau().to_vec(),
        model.spectrum.theta().to_vec(),
    );
    KaeFilter::new(
        model,
        kind,
        &last,
        &tau,
        &theta,
        noise,
        cfg.kae.members,
        rng,
    )
}

struct Prepared {
    tracker: Box<dyn Tracker>,
    spinup_theta: Vec<f64>,
}

fn prepare(
    cfg: &ExperimentConfig,
    method: Method,
    stream: &Stream,
    model: Option<&KaeModel>,
    rng: &mut crate::Rng,
) -> Result<Prepared> {
    let spin = stream.spinup(cfg.spinup);
    let sigma = cfg.generator.sigma();
    let pairs = cfg.kae.pairs;
    let d = cfg.dmd.delay;
    let rank = cfg.dmd_rank();
    let prepared = match method {
        Method::KaeLatent | Method::KaeFull => {
            let model = model
                .ok_or_else(|| Error::State("no trained model".into()))?
                .clone();
            let kind = match method {
                Method::KaeLatent => FilterKind::Latent,
                _ => FilterKind::FullState,
            };
            let spinup_theta = model.spectrum.theta().to_vec();
            Prepared {
                tracker: Box::new(kae_filter(cfg, kind, model, &spin, rng)?),
                spinup_theta,
            }
        }
        Method::HankelDmdEnkf => {
            let probe = crate::baselines::hankel_dmd_map(&spin, d, rank)?.0;
            let h = hankel_embed(&spin, d)?;
            let derived =
                cfg.dmd.noise.alpha5_scale * latent_observation_variance(&probe, &h, sigma)?;
            let f = HankelDmdEnkf::fit(
                &spin,
                d,
                rank,
                cfg.dmd.noise.resolve(derived),
                cfg.dmd.members,
                rng,
            )?;
            let theta = f.estimates().1;
            Prepared {
                tracker: Box::new(f),
                spinup_theta: theta,
            }
        }
        Method::StreamingEdmd | Method::WindowedEdmd => {
            let h = hankel_embed(&spin, d)?;
            let m = h.ncols();
            if m < 2 {
                return Err(Error::Config(
                    "spin-up too short for a Hankel-DMD fit".into(),
                ));
            }
            let mut buffer = HankelBuffer::new(spin.nrows(), d)?;
            buffer.prime(&spin)?;
            let current = h.column(m - 1).into_owned();
            let n = spin.nrows();
            if method == Method::StreamingEdmd {
                let mut s = StreamingEdmd::new(h.nrows(), rank)?;
                let model = s
                    .fit_initial(
                        &h.columns(0, m - 1).into_owned(),
                        &h.columns(1, m - 1).into_owned(),
                    )?
                    .clone();
                let spinup_theta = model.spectrum_estimates(pairs).1;
                Prepared {
                    tracker: Box::new(DmdTracker {
                        updater: s,
                        buffer,
                        current,
                        model,
                        pairs,
                        n,
                    }),
                    spinup_theta,
                }
            } else {
                let w = cfg.dmd.window;
                if m - 1 < w {
                    return Err(Error::Config(format!(
                        "spin-up holds {} pairs, fewer than the window {w}",
                        m - 1
                    )));
                }
                let mut win = WindowedEdmd::new(w, rank)?;
                let mut model = None;
                for k in (m - 1 - w)..(m - 1) {
                    model = win.update(&h.column(k).into_owned(), &h.column(k + 1).into_owned())?;
                }
                let model = model.expect("window filled");
                // spin-up fits do not count towards the run
                win.all_real_fits = 0;
                win.fits = 0;
                let spinup_theta = model.spectrum_estimates(pairs).1;
                Prepared {
                    tracker: Box::new(DmdTracker {
                        updater: win,
                        buffer,
                        current,
                        model,
                        pairs,
                        n,
                    }),
                    spinup_theta,
                }
            }
        }
    };
    Ok(prepared)
}

/// Run one method over the post-spin-up stream.
pub fn run_method(
    cfg: &ExperimentConfig,
    method: Method,
    seed: u64,
    stream: &Stream,
    model: Option<&KaeModel>,
) -> Result<MethodRun> {
    let mut rng = crate::seeded_rng(method.stream_seed(seed));
    let Prepared {
        mut tracker,
        spinup_theta,
    } = prepare(cfg, method, stream, model, &mut rng)?;
    let steps = stream.steps();
    let f_true = stream.theta.nrows();
    let mut records = Vec::with_capacity(steps - cfg.spinup);
    for k in cfg.spinup..steps {
        let x = stream.measurements.column(k).into_owned();
        tracker.assimilate(&x, &mut rng)?;
        let (tau, theta) = tracker.estimates();
        let truth_theta: Vec<f64> = stream.theta.column(k).iter().copied().collect();
        let err = eigen_tracking_error(&tau, &theta, &vec![1.0; f_true], &truth_theta)?;
        let target = k + cfg.horizon as usize;
        let forecast_mse = if target < steps {
            let fc = tracker.forecast(cfg.horizon)?;
            (fc - stream.states.column(target)).map(|v| v * v).mean()
        } else {
            f64::NAN
        };
        let generalized_variance = tracker.generalized_variance()?;
        records.push(StepRecord {
            step: k,
            tau,
            theta,
            truth_theta,
            tau_error: err.modulus,
            theta_error: err.argument,
            theta_signed_error: err.signed,
            forecast_mse,
            generalized_variance,
        });
    }
    let summary = summarise(&records, cfg.tail, cfg.tau_band);
    Ok(MethodRun {
        seed,
        method,
        records,
        summary,
        spinup_theta,
        all_real_fits: tracker.all_real_fits(),
    })
}

/// Every seed, every method: generate, fit on the spin-up, stream, record.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunResult> {
    cfg.validate()?;
    let mut runs = Vec::with_capacity(cfg.seeds.len() * cfg.methods.len());
    for &seed in &cfg.seeds {
        let stream = generate(&cfg.generator, seed).map_err(|e| context(e, seed, "generator"))?;
        let model = if cfg.methods.iter().any(|m| m.uses_kae()) {
            log::info!("seed {seed}: training spin-up model");
            Some(train_kae(cfg, &stream, seed).map_err(|e| context(e, seed, "training"))?)
        } else {
            None
        };
        for &method in &cfg.methods {
            log::info!("seed {seed}: running {}", method.name());
            let run = run_method(cfg, method, seed, &stream, model.as_ref())
                .map_err(|e| context(e, seed, method.name()))?;
            runs.push(run);
        }
    }
    Ok(RunResult {
        config: cfg.clone(),
        runs,
    })
}

fn context(e: Error, seed: u64, what: &str) -> Error {
    match e {
        Error::Numerical(m) => Error::Numerical(format!("seed {seed}, {what}: {m}")),
        Error::State(m) => Error::State(format!("seed {seed}, {what}: {m}")),
        Error::Config(m) => Error::Config(format!("seed {seed}, {what}: {m}")),
        other => other,
    }
}
