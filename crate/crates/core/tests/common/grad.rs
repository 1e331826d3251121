//! Finite-difference checks of the training loss.

use kae_enkf::kae::{
    batch_loss, batch_loss_and_grad, propagate_columns, Architecture, KaeModel, LossWeights,
};
use kae_enkf::seeded_rng;
use kae_enkf::tensor_nn::{Activation, NetworkParams};
use nalgebra::{DMatrix, DVector};
use rand::Rng;

/// Smallest |pre-activation| feeding a ReLU anywhere in `net` on batch `x`.
pub fn relu_margin(net: &NetworkParams, x: &DMatrix<f64>) -> f64 {
    let mut h = x.clone();
    let mut margin = f64::INFINITY;
    for layer in net.layers() {
        let mut pre = &layer.weights * &h;
        for mut col in pre.column_iter_mut() {
            col += &layer.bias;
        }
        if layer.activation == Activation::Relu {
            margin = margin.min(pre.iter().fold(f64::INFINITY, |m, v| m.min(v.abs())));
        }
        h = pre.map(|v| layer.activation.apply(v));
    }
    margin
}

/// Random small model and batch. Draws whose ReLU inputs come within `1e-3`
/// of zero are redrawn: a central difference straddling the kink measures
/// neither one-sided derivative.
pub fn random_model(seed: u64) -> (KaeModel, DMatrix<f64>, DMatrix<f64>, Vec<u32>) {
    let mut rng = seeded_rng(seed);
    loop {
        let draw = draw_model(&mut rng);
        let (m, x, y, dts) = &draw;
        let z = m.encode_batch(x).unwrap();
        let zp = propagate_columns(&m.spectrum, &z, dts).unwrap();
        let margin = relu_margin(&m.encoder, x)
            .min(relu_margin(&m.encoder, y))
            .min(relu_margin(&m.decoder, &z))
            .min(relu_margin(&m.decoder, &zp));
        if margin > 1e-3 {
            return draw;
        }
    }
}

pub fn draw_model(rng: &mut kae_enkf::Rng) -> (KaeModel, DMatrix<f64>, DMatrix<f64>, Vec<u32>) {
    let n = rng.random_range(3..7);
    let pairs = rng.random_range(1..3);
    let hidden = vec![rng.random_range(2..=n.min(4)), rng.random_range(2..5)];
    let arch = Architecture::new(n, hidden, pairs).unwrap();
    let data = DMatrix::from_fn(n, 20, |_, _| rng.random_range(-1.0..1.0));
    let theta: Vec<f64> = (0..pairs).map(|_| rng.random_range(0.1..3.0)).collect();
    let mut model = KaeModel::initialise(&arch, &data, DVector::zeros(n), theta, rng).unwrap();
    for i in 0..pairs {
        // keep away from the kink of |tau - 1|
        let t = if rng.random_bool(0.5) { 0.8 } else { 1.15 } + rng.random_range(-0.05..0.05);
        model.spectrum.set_tau(i, t).unwrap();
    }
    for net in [&mut model.encoder, &mut model.decoder] {
        for l in net.layers_mut() {
            l.bias.apply(|b| *b = rng.random_range(-0.3..0.3));
        }
    }
    let b = 4;
    let x = DMatrix::from_fn(n, b, |_, _| rng.random_range(-1.0..1.0));
    let y = DMatrix::from_fn(n, b, |_, _| rng.random_range(-1.0..1.0));
    let dts = (0..b).map(|_| rng.random_range(1..6)).collect();
    (model, x, y, dts)
}

/// Largest relative error between analytic and central-difference gradients,
/// using `|a - f| / max(|a|, |f|, 1e-6)` per coordinate.
pub fn max_rel_error(
    model: &KaeModel,
    x: &DMatrix<f64>,
    y: &DMatrix<f64>,
    dts: &[u32],
    w: &LossWeights,
) -> f64 {
    let (_, grads) = batch_loss_and_grad(model, x, y, dts, w).unwrap();
    let analytic = grads.to_flat();
    let base = model.write_flat();
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    let mut probe = model.clone();
    for (k, &a) in analytic.iter().enumerate() {
        // Skip coordinates sitting on an L1 kink.
        if base[k].abs() < 10.0 * h && w.a4 > 0.0 {
            continue;
        }
        let mut p = base.clone();
        p[k] = base[k] + h;
        probe.read_flat(&p).unwrap();
        let up = batch_loss(&probe, x, y, dts, w).unwrap().total;
        p[k] = base[k] - h;
        probe.read_flat(&p).unwrap();
        let down = batch_loss(&probe, x, y, dts, w).unwrap().total;
        let fd = (up - down) / (2.0 * h);
        let denom = a.abs().max(fd.abs()).max(1e-6);
        worst = worst.max((a - fd).abs() / denom);
    }
    worst
}

pub fn weights_only(which: usize) -> LossWeights {
    let mut w = LossWeights {
        a1: 0.0,
        a2: 0.0,
        a3: 0.0,
        a4: 0.0,
    };
    match which {
        1 => w.a1 = 1.0,
        2 => w.a2 = 1.0,
        3 => w.a3 = 1.0,
        4 => w.a4 = 0.01,
        _ => {}
    }
    w
}
