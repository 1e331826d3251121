use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::model::{propagate_columns, KaeModel};
use super::sampling::TrainSample;
use crate::error::{ensure_dim, Error, Result};
use crate::koopman::block_power;
use crate::tensor_nn::NetworkGrads;

/// Weights of the latent, forecast, stability and elastic-net terms. The
/// reconstruction term always has weight 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LossWeights {
    pub a1: f64,
    pub a2: f64,
    pub a3: f64,
    pub a4: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            a1: 1.0,
            a2: 1.0,
            a3: 1.0,
            a4: 0.01,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        if [self.a1, self.a2, self.a3, self.a4]
            .iter()
            .any(|a| !a.is_finite() || *a < 0.0)
        {
            return Err(Error::Config(
                "loss weights must be finite and nonnegative".into(),
            ));
        }
        Ok(())
    }
}

/// Unweighted loss components and their weighted total.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LossTerms {
    pub recon: f64,
    pub latent: f64,
    pub forecast: f64,
    pub stability: f64,
    pub regularization: f64,
    pub total: f64,
}

impl LossTerms {
    fn with_total(mut self, w: &LossWeights) -> Self {
        self.total = self.recon
            + w.a1 * self.latent
            + w.a2 * self.forecast
            + w.a3 * self.stability
            + w.a4 * self.regularization;
        self
    }
}

/// Gradient of the batch loss with respect to every trainable parameter.
#[derive(Debug, Clone)]
pub struct KaeGrads {
    pub encoder: NetworkGrads,
    pub decoder: NetworkGrads,
    pub tau: Vec<f64>,
    pub theta: Vec<f64>,
}

impl KaeGrads {
    /// Same ordering as [`KaeModel::write_flat`].
    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::new();
        self.encoder.write_flat(&mut out);
        self.decoder.write_flat(&mut out);
        out.extend_from_slice(&self.tau);
        out.extend_from_slice(&self.theta);
        out
    }
}

/// Input and target columns for a batch of samples from a centred `n x m`
/// dataset.
pub fn gather_batch(
    data: &DMatrix<f64>,
    batch: &[TrainSample],
) -> Result<(DMatrix<f64>, DMatrix<f64>, Vec<u32>)> {
    let n = data.nrows();
    let mut x = DMatrix::zeros(n, batch.len());
    let mut y = DMatrix::zeros(n, batch.len());
    let mut dts = Vec::with_capacity(batch.len());
    for (j, s) in batch.iter().enumerate() {
        let t = s.index + s.dt as usize;
        if t >= data.ncols() {
            return Err(Error::Config(format!(
                "sample ({}, {}) runs past a dataset of length {}",
                s.index,
                s.dt,
                data.ncols()
            )));
        }
        x.set_column(j, &data.column(s.index));
        y.set_column(j, &data.column(t));
        dts.push(s.dt);
    }
    Ok((x, y, dts))
}

/// Regularisation-free loss terms. The data terms are averaged over the batch.
fn penalty_terms(model: &KaeModel) -> (f64, f64) {
    let stability: f64 = model.spectrum.tau().iter().map(|t| (t - 1.0).abs()).sum();
    let (e2, e1) = model.encoder.norms();
    let (d2, d1) = model.decoder.norms();
    (stability, e2 + d2 + e1 + d1)
}

/// Batch loss without gradients.
pub fn batch_loss(
    model: &KaeModel,
    x: &DMatrix<f64>,
    y: &DMatrix<f64>,
    dts: &[u32],
    w: &LossWeights,
) -> Result<LossTerms> {
    ensure_dim("target batch", x.ncols(), y.ncols())?;
    let b = x.ncols().max(1) as f64;
    let z = model.encode_batch(x)?;
    let zy = model.encode_batch(y)?;
    let xr = model.decode_batch(&z)?;
    let zp = propagate_columns(&model.spectrum, &z, dts)?;
    let yp = model.decode_batch(&zp)?;
    let (stability, regularization) = penalty_terms(model);
    Ok(LossTerms {
        recon: (x - xr).norm_squared() / b,
        latent: (zy - zp).norm_squared() / b,
        forecast: (y - yp).norm_squared() / b,
        stability,
        regularization,
        total: 0.0,
    }
    .with_total(w))
}

/// Loss for one sample.
pub fn sample_loss(
    model: &KaeModel,
    data: &DMatrix<f64>,
    sample: TrainSample,
    w: &LossWeights,
) -> Result<LossTerms> {
    let (x, y, dts) = gather_batch(data, &[sample])?;
    batch_loss(model, &x, &y, &dts, w)
}

#[inline]
fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

fn add_elastic_net(grads: &mut NetworkGrads, net: &crate::tensor_nn::NetworkParams, a4: f64) {
    for (l, layer) in net.layers().iter().enumerate() {
        grads.weights[l].zip_apply(&layer.weights, |g, w| *g += a4 * (2.0 * w + sign(w)));
        grads.bias[l].zip_apply(&layer.bias, |g, w| *g += a4 * (2.0 * w + sign(w)));
    }
}

/// Batch loss and its exact gradient by reverse-mode differentiation.
pub fn batch_loss_and_grad(
    model: &KaeModel,
    x: &DMatrix<f64>,
    y: &DMatrix<f64>,
    dts: &[u32],
    w: &LossWeights,
) -> Result<(LossTerms, KaeGrads)> {
    ensure_dim("target batch", x.ncols(), y.ncols())?;
    ensure_dim("horizon count", x.ncols(), dts.len())?;
    let b = x.ncols().max(1) as f64;

    let (z, tape_x) = model.encoder.forward_tape(x)?;
    let (zy, tape_y) = model.encoder.forward_tape(y)?;
    let (xr, tape_r) = model.decoder.forward_tape(&z)?;
    let zp = propagate_columns(&model.spectrum, &z, dts)?;
    let (yp, tape_p) = model.decoder.forward_tape(&zp)?;

    let res_r = x - &xr;
    let res_l = &zy - &zp;
    let res_f = y - &yp;
    let (stability, regularization) = penalty_terms(model);
    let terms = LossTerms {
        recon: res_r.norm_squared() / b,
        latent: res_l.norm_squared() / b,
        forecast: res_f.norm_squared() / b,
        stability,
        regularization,
        total: 0.0,
    }
    .with_total(w);

    let mut enc_g = NetworkGrads::zeros_like(&model.encoder);
    let mut dec_g = NetworkGrads::zeros_like(&model.decoder);

    let d_xr = res_r * (-2.0 / b);
    let mut d_z = model.decoder.backward_tape(&tape_r, &d_xr, &mut dec_g)?;

    let d_yp = res_f * (-2.0 * w.a2 / b);
    let mut d_zp = model.decoder.backward_tape(&tape_p, &d_yp, &mut dec_g)?;
    d_zp -= &res_l * (2.0 * w.a1 / b);

    let d_zy = &res_l * (2.0 * w.a1 / b);
    model.encoder.backward_tape(&tape_y, &d_zy, &mut enc_g)?;

    // Back through the block powers: to the latent input and to (tau, theta).
    let f = model.pairs();
    let tau = model.spectrum.tau();
    let theta = model.spectrum.theta();
    let mut g_tau = vec![0.0; f];
    let mut g_theta = vec![0.0; f];
    for (j, &dt) in dts.iter().enumerate() {
        if dt == 0 {
            for r in 0..2 * f {
                d_z[(r, j)] += d_zp[(r, j)];
            }
            continue;
        }
        let dtf = dt as f64;
        for i in 0..f {
            let (r0, r1) = (2 * i, 2 * i + 1);
            let (a0, a1) = (z[(r0, j)], z[(r1, j)]);
            let (g0, g1) = (d_zp[(r0, j)], d_zp[(r1, j)]);
            let bp = block_power(tau[i], theta[i], dt);
            // dL/dz = B^T g
            d_z[(r0, j)] += bp[0] * g0 + bp[2] * g1;
            d_z[(r1, j)] += bp[1] * g0 + bp[3] * g1;
            let (s, c) = (theta[i] * dtf).sin_cos();
            // d/dtau: dt tau^(dt-1) R(theta dt)
            let k = dtf * tau[i].powi(dt as i32 - 1);
            let dt0 = k * (c * a0 - s * a1);
            let dt1 = k * (s * a0 + c * a1);
            g_tau[i] += g0 * dt0 + g1 * dt1;
            // d/dtheta: tau^dt dt R'(theta dt), R' = [[-s, -c], [c, -s]]
            let q = tau[i].powi(dt as i32) * dtf;
            let dh0 = q * (-s * a0 - c * a1);
            let dh1 = q * (c * a0 - s * a1);
            g_theta[i] += g0 * dh0 + g1 * dh1;
        }
    }
    model.encoder.backward_tape(&tape_x, &d_z, &mut enc_g)?;

    for (g, t) in g_tau.iter_mut().zip(tau) {
        *g += w.a3 * sign(t - 1.0);
    }
    add_elastic_net(&mut enc_g, &model.encoder, w.a4);
    add_elastic_net(&mut dec_g, &model.decoder, w.a4);

    Ok((
        terms,
        KaeGrads {
            encoder: enc_g,
            decoder: dec_g,
            tau: g_tau,
            theta: g_theta,
        },
    ))
}
