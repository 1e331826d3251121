use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::loss::{batch_loss, batch_loss_and_grad, gather_batch, LossTerms, LossWeights};
use super::model::{Architecture, KaeModel};
use super::sampling::{all_pairs, sample_batch};
use crate::error::{Error, Result};
use crate::freq_opt;
use crate::tensor_nn::AdamState;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Largest forecast horizon `p` drawn during sampling.
    pub horizon: u32,
    pub weights: LossWeights,
    /// Run the global frequency search before epoch 0 and then every this
    /// many epochs; 0 disables it.
    pub freq_opt_every: usize,
    pub freq_opt_batch: usize,
    pub scan_points: usize,
    pub tolerance: f64,
    /// Stop after this many epochs without a new best validation loss;
    /// 0 disables early stopping.
    pub patience: usize,
    pub validation_fraction: f64,
    pub normalise_latent: bool,
    /// Starting arguments; evenly spread over `(0, π)` when absent.
    pub initial_theta: Option<Vec<f64>>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 500,
            batch_size: 32,
            learning_rate: 1e-3,
            horizon: 10,
            weights: LossWeights::default(),
            freq_opt_every: 25,
            freq_opt_batch: 128,
            scan_points: 100,
            tolerance: 0.1,
            patience: 0,
            validation_fraction: 0.1,
            normalise_latent: true,
            initial_theta: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.weights.validate()?;
        if self.batch_size == 0 || self.horizon == 0 {
            return Err(Error::Config(
                "batch size and horizon must be positive".into(),
            ));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config("learning rate must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.validation_fraction) {
            return Err(Error::Config(
                "validation fraction must lie in [0, 1)".into(),
            ));
        }
        if self.freq_opt_every > 0 && (self.scan_points < 2 || self.freq_opt_batch == 0) {
            return Err(Error::Config(
                "frequency search needs >= 2 scan points and a batch".into(),
            ));
        }
        if !(self.tolerance >= 0.0) {
            return Err(Error::Config("tolerance must be nonnegative".into()));
        }
        Ok(())
    }
}

/// One row of the loss history: mean training terms over the epoch's batches
/// plus the validation total.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub recon: f64,
    pub latent: f64,
    pub forecast: f64,
    pub stability: f64,
    pub regularization: f64,
    pub validation_total: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: KaeModel,
    pub history: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub stopped_early: bool,
    /// Per-pair latent radii removed by normalisation (1 when disabled).
    pub latent_scales: Vec<f64>,
}

/// Column-wise mean of an `n x m` matrix.
pub fn column_mean(x: &DMatrix<f64>) -> DVector<f64> {
    let m = x.ncols().max(1) as f64;
    x.column_sum() / m
}

/// Arguments spread evenly over `(0, π)`.
pub fn default_theta(pairs: usize) -> Vec<f64> {
    (0..pairs)
        .map(|i| PI * (i + 1) as f64 / (pairs + 1) as f64)
        .collect()
}

/// Centre the raw spin-up matrix, initialise a model and train it.
pub fn fit(
    arch: &Architecture,
    raw: &DMatrix<f64>,
    cfg: &TrainConfig,
    rng: &mut crate::Rng,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    arch.validate()?;
    let mean = column_mean(raw);
    let mut centred = raw.clone();
    for mut c in centred.column_iter_mut() {
        c -= &mean;
    }
    let theta = match &cfg.initial_theta {
        Some(t) => t.clone(),
        None => default_theta(arch.pairs),
    };
    let model = KaeModel::initialise(arch, &centred, mean, theta, rng)?;
    train(model, &centred, cfg, rng)
}

/// Train an initialised model on centred spin-up columns. The final
/// `validation_fraction` of the columns is held out for early stopping.
pub fn train(
    mut model: KaeModel,
    centred: &DMatrix<f64>,
    cfg: &TrainConfig,
    rng: &mut crate::Rng,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    let m = centred.ncols();
    let val_len = (m as f64 * cfg.validation_fraction).round() as usize;
    let train_len = m - val_len;
    let train_data = centred.columns(0, train_len).into_owned();
    if train_len <= cfg.horizon as usize {
        return Err(Error::Config(format!(
            "{train_len} training columns cannot support horizon {}",
            cfg.horizon
        )));
    }
    let validation = if val_len >= 2 {
        let data = centred.columns(train_len, val_len).into_owned();
        let pairs = all_pairs(val_len, cfg.horizon.min(val_len as u32 - 1));
        let (x, y, dts) = gather_batch(&data, &pairs)?;
        Some((x, y, dts))
    } else {
        None
    };

    let mut adam = AdamState::new(model.num_params(), cfg.learning_rate);
    let steps_per_epoch = (train_len / cfg.batch_size).max(1);
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut best = (f64::INFINITY, 0usize, model.clone());
    let mut stopped_early = false;

    for epoch in 0..cfg.epochs {
        if cfg.freq_opt_every > 0 && epoch % cfg.freq_opt_every == 0 {
            let batch = sample_batch(train_len, cfg.horizon, cfg.freq_opt_batch, rng)?;
            let report = freq_opt::optimize_all(
                &mut model,
                &train_data,
                &batch,
                cfg.scan_points,
                cfg.tolerance,
            )?;
            log::debug!(
                "epoch {epoch}: frequency search picked {:?}",
                report.selected
            );
        }

        let mut sum = LossTerms::default();
        for _ in 0..steps_per_epoch {
            let batch = sample_batch(train_len, cfg.horizon, cfg.batch_size, rng)?;
            let (x, y, dts) = gather_batch(&train_data, &batch)?;
            let (terms, grads) = batch_loss_and_grad(&model, &x, &y, &dts, &cfg.weights)?;
            if !terms.total.is_finite() {
                return Err(Error::Numerical(format!(
                    "training loss diverged at epoch {epoch}: {terms:?}"
                )));
            }
            let mut params = model.write_flat();
            adam.step(&mut params, &grads.to_flat())?;
            model.read_flat(&params)?;
            sum.recon += terms.recon;
            sum.latent += terms.latent;
            sum.forecast += terms.forecast;
            sum.stability += terms.stability;
            sum.regularization += terms.regularization;
        }
        let k = steps_per_epoch as f64;
        let val_total = match &validation {
            Some((x, y, dts)) => batch_loss(&model, x, y, dts, &cfg.weights)?.total,
            None => f64::NAN,
        };
        history.push(EpochRecord {
            epoch,
            recon: sum.recon / k,
            latent: sum.latent / k,
            forecast: sum.forecast / k,
            stability: sum.stability / k,
            regularization: sum.regularization / k,
            validation_total: val_total,
        });

        if val_total < best.0 {
            best = (val_total, epoch, model.clone());
        } else if cfg.patience > 0 && epoch - best.1 >= cfg.patience {
            log::info!(
                "validation loss has not improved since epoch {}; stopping",
                best.1
            );
            stopped_early = true;
            break;
        }
    }

    let best_epoch = if validation.is_some() && best.0.is_finite() {
        model = best.2;
        best.1
    } else {
        history.len().saturating_sub(1)
    };
    let latent_scales = if cfg.normalise_latent {
        model.normalise_latent(centred)?
    } else {
        vec![1.0; model.pairs()]
    };
    Ok(TrainOutcome {
        model,
        history,
        best_epoch,
        stopped_early,
        latent_scales,
    })
}

/// Write the loss history with a fixed header.
pub fn write_history_csv(history: &[EpochRecord], path: &std::path::Path) -> Result<()> {
    let err = |e: csv::Error| Error::Format {
        path: path.to_path_buf(),
        reason: e.to_string(),
    };
    let mut w = csv::Writer::from_path(path).map_err(err)?;
    for rec in history {
        w.serialize(rec).map_err(err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
