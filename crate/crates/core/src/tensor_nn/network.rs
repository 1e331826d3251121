use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::layer::{DenseLayer, LayerRecord};
use crate::error::{ensure_dim, Error, Result};

/// Activations recorded during a forward pass, consumed by backpropagation.
#[derive(Debug, Clone)]
pub struct Tape {
    inputs: Vec<DMatrix<f64>>,
    pre: Vec<DMatrix<f64>>,
}

impl Tape {
    pub fn batch_size(&self) -> usize {
        self.inputs.first().map_or(0, |m| m.ncols())
    }
}

/// Gradient buffers shaped like a network's parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkGrads {
    pub weights: Vec<DMatrix<f64>>,
    pub bias: Vec<DVector<f64>>,
}

impl NetworkGrads {
    pub fn zeros_like(net: &NetworkParams) -> Self {
        Self {
            weights: net
                .layers
                .iter()
                .map(|l| DMatrix::zeros(l.out_dim(), l.in_dim()))
                .collect(),
            bias: net
                .layers
                .iter()
                .map(|l| DVector::zeros(l.out_dim()))
                .collect(),
        }
    }

    pub fn fill_zero(&mut self) {
        self.weights.iter_mut().for_each(|w| w.fill(0.0));
        self.bias.iter_mut().for_each(|b| b.fill(0.0));
    }

    /// Append in the same order as [`NetworkParams::write_flat`].
    pub fn write_flat(&self, out: &mut Vec<f64>) {
        for (w, b) in self.weights.iter().zip(&self.bias) {
            for r in 0..w.nrows() {
                out.extend(w.row(r).iter().copied());
            }
            out.extend(b.iter().copied());
        }
    }
}

/// A feed-forward stack of dense layers plus a gradient buffer.
#[derive(Debug, Clone)]
pub struct NetworkParams {
    layers: Vec<DenseLayer>,
    grads: NetworkGrads,
    cache: Option<Tape>,
}

impl PartialEq for NetworkParams {
    fn eq(&self, other: &Self) -> bool {
        self.layers == other.layers
    }
}

impl NetworkParams {
    pub fn new(layers: Vec<DenseLayer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Config("a network needs at least one layer".into()));
        }
        for pair in layers.windows(2) {
            ensure_dim("layer chaining", pair[0].out_dim(), pair[1].in_dim())?;
        }
        let mut net = Self {
            layers,
            grads: NetworkGrads {
                weights: Vec::new(),
                bias: Vec::new(),
            },
            cache: None,
        };
        net.grads = NetworkGrads::zeros_like(&net);
        Ok(net)
    }

    pub fn layers(&self) -> &[DenseLayer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [DenseLayer] {
        &mut self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].in_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].out_dim()
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(DenseLayer::num_params).sum()
    }

    pub fn grads(&self) -> &NetworkGrads {
        &self.grads
    }

    pub fn forward(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        ensure_dim("network input", self.input_dim(), x.len())?;
        let mut h = x.clone();
        for layer in &self.layers {
            let mut pre = &layer.weights * &h;
            pre += &layer.bias;
            pre.apply(|v| *v = layer.activation.apply(*v));
            h = pre;
        }
        Ok(h)
    }

    /// Forward a column batch (`input_dim x batch`).
    pub fn forward_batch(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        ensure_dim("network batch input", self.input_dim(), x.nrows())?;
        let mut h = x.clone();
        for layer in &self.layers {
            let mut pre = layer.pre_activation(&h);
            pre.apply(|v| *v = layer.activation.apply(*v));
            h = pre;
        }
        Ok(h)
    }

    /// Forward a column batch and keep what backpropagation needs.
    pub fn forward_tape(&self, x: &DMatrix<f64>) -> Result<(DMatrix<f64>, Tape)> {
        ensure_dim("network batch input", self.input_dim(), x.nrows())?;
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut pres = Vec::with_capacity(self.layers.len());
        let mut h = x.clone();
        for layer in &self.layers {
            let pre = layer.pre_activation(&h);
            let out = pre.map(|v| layer.activation.apply(v));
            inputs.push(h);
            pres.push(pre);
            h = out;
        }
        Ok((h, Tape { inputs, pre: pres }))
    }

    /// Reverse pass over a recorded tape. Parameter gradients are *added* to
    /// `grads`; the gradient with respect to the batch input is returned.
    pub fn backward_tape(
        &self,
        tape: &Tape,
        upstream: &DMatrix<f64>,
        grads: &mut NetworkGrads,
    ) -> Result<DMatrix<f64>> {
        if tape.inputs.len() != self.layers.len() {
            return Err(Error::State(
                "tape was recorded on a different network".into(),
            ));
        }
        ensure_dim(
            "backward upstream rows",
            self.output_dim(),
            upstream.nrows(),
        )?;
        ensure_dim(
            "backward upstream cols",
            tape.batch_size(),
            upstream.ncols(),
        )?;
        let mut delta = upstream.clone();
        for (l, layer) in self.layers.iter().enumerate().rev() {
            let pre = &tape.pre[l];
            if layer.activation != super::Activation::Identity {
                delta.zip_apply(pre, |d, p| *d *= layer.activation.derivative(p));
            }
            grads.weights[l].gemm(1.0, &delta, &tape.inputs[l].transpose(), 1.0);
            for col in delta.column_iter() {
                grads.bias[l] += col;
            }
            delta = layer.weights.tr_mul(&delta);
        }
        Ok(delta)
    }

    /// Single-sample forward that caches activations for [`Self::backward`].
    pub fn forward_train(&mut self, x: &DVector<f64>) -> Result<DVector<f64>> {
        let xm = DMatrix::from_column_slice(x.len(), 1, x.as_slice());
        let (out, tape) = self.forward_tape(&xm)?;
        self.cache = Some(tape);
        Ok(DVector::from_column_slice(out.as_slice()))
    }

    /// Fill the gradient buffers from the cached forward pass and return the
    /// gradient with respect to that pass's input.
    pub fn backward(&mut self, upstream: &DVector<f64>) -> Result<DVector<f64>> {
        let tape = self
            .cache
            .take()
            .ok_or_else(|| Error::State("backward called without a cached forward pass".into()))?;
        let up = DMatrix::from_column_slice(upstream.len(), 1, upstream.as_slice());
        let mut grads = NetworkGrads::zeros_like(self);
        let result = self.backward_tape(&tape, &up, &mut grads);
        self.cache = Some(tape);
        let dx = result?;
        self.grads = grads;
        Ok(DVector::from_column_slice(dx.as_slice()))
    }

    /// Append parameters layer by layer: row-major weights, then bias.
    pub fn write_flat(&self, out: &mut Vec<f64>) {
        for layer in &self.layers {
            for r in 0..layer.weights.nrows() {
                out.extend(layer.weights.row(r).iter().copied());
            }
            out.extend(layer.bias.iter().copied());
        }
    }

    /// Inverse of [`Self::write_flat`]; returns the number of values consumed.
    pub fn read_flat(&mut self, src: &[f64]) -> Result<usize> {
        if src.len() < self.num_params() {
            return Err(Error::dim(
                "flat parameter vector",
                self.num_params(),
                src.len(),
            ));
        }
        let mut at = 0;
        for layer in &mut self.layers {
            let (rows, cols) = layer.weights.shape();
            for r in 0..rows {
                for c in 0..cols {
                    layer.weights[(r, c)] = src[at];
                    at += 1;
                }
            }
            for b in layer.bias.iter_mut() {
                *b = src[at];
                at += 1;
            }
        }
        Ok(at)
    }

    /// `d output / d input` at `x` (`out_dim x in_dim`).
    pub fn jacobian(&self, x: &DVector<f64>) -> Result<DMatrix<f64>> {
        ensure_dim("network input", self.input_dim(), x.len())?;
        let mut h = x.clone_owned();
        let mut jac = DMatrix::<f64>::identity(x.len(), x.len());
        for layer in &self.layers {
            let pre = &layer.weights * &h + &layer.bias;
            let mut step = layer.weights.clone();
            for (r, &p) in pre.iter().enumerate() {
                step.row_mut(r).scale_mut(layer.activation.derivative(p));
            }
            jac = step * jac;
            h = pre.map(|v| layer.activation.apply(v));
        }
        Ok(jac)
    }

    /// Squared L2 and L1 norms over all weights and biases.
    pub fn norms(&self) -> (f64, f64) {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(l.bias.iter()))
            .fold((0.0, 0.0), |(l2, l1), &v| (l2 + v * v, l1 + v.abs()))
    }

    pub fn records(&self) -> Vec<LayerRecord> {
        self.layers.iter().map(LayerRecord::from).collect()
    }

    pub fn from_records(records: Vec<LayerRecord>) -> Result<Self> {
        let layers = records
            .into_iter()
            .map(DenseLayer::try_from)
            .collect::<Result<Vec<_>>>()?;
        Self::new(layers)
    }
}

impl Serialize for NetworkParams {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.records().serialize(s)
    }
}

impl<'de> Deserialize<'de> for NetworkParams {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let records = Vec::<LayerRecord>::deserialize(d)?;
        NetworkParams::from_records(records).map_err(serde::de::Error::custom)
    }
}
