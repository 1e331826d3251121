use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{ensure_dim, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Identity,
}

impl Activation {
    #[inline]
    pub fn apply(self, v: f64) -> f64 {
        match self {
            Activation::Relu => v.max(0.0),
            Activation::Identity => v,
        }
    }

    /// Derivative at a pre-activation value. ReLU uses g'(0) = 0.
    #[inline]
    pub fn derivative(self, pre: f64) -> f64 {
        match self {
            Activation::Relu => {
                if pre > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Identity => 1.0,
        }
    }
}

/// `y = activation(W x + b)` with `W` of shape `out_dim x in_dim`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    pub weights: DMatrix<f64>,
    pub bias: DVector<f64>,
    pub activation: Activation,
}

impl DenseLayer {
    pub fn zeros(in_dim: usize, out_dim: usize, activation: Activation) -> Self {
        Self {
            weights: DMatrix::zeros(out_dim, in_dim),
            bias: DVector::zeros(out_dim),
            activation,
        }
    }

    pub fn new(weights: DMatrix<f64>, bias: DVector<f64>, activation: Activation) -> Result<Self> {
        ensure_dim("layer bias", weights.nrows(), bias.len())?;
        if weights.iter().chain(bias.iter()).any(|v| !v.is_finite()) {
            return Err(Error::Config("layer parameters must be finite".into()));
        }
        Ok(Self {
            weights,
            bias,
            activation,
        })
    }

    pub fn in_dim(&self) -> usize {
        self.weights.ncols()
    }

    pub fn out_dim(&self) -> usize {
        self.weights.nrows()
    }

    pub fn num_params(&self) -> usize {
        self.weights.len() + self.bias.len()
    }

    /// Pre-activation for a column batch.
    pub(crate) fn pre_activation(&self, input: &DMatrix<f64>) -> DMatrix<f64> {
        let mut pre = &self.weights * input;
        for mut col in pre.column_iter_mut() {
            col += &self.bias;
        }
        pre
    }
}

/// Row-major, self-describing form of a layer used in checkpoints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerRecord {
    pub in_dim: usize,
    pub out_dim: usize,
    pub activation: Activation,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl From<&DenseLayer> for LayerRecord {
    fn from(layer: &DenseLayer) -> Self {
        let (out_dim, in_dim) = layer.weights.shape();
        let mut weights = Vec::with_capacity(out_dim * in_dim);
        for r in 0..out_dim {
            weights.extend(layer.weights.row(r).iter().copied());
        }
        Self {
            in_dim,
            out_dim,
            activation: layer.activation,
            weights,
            bias: layer.bias.iter().copied().collect(),
        }
    }
}

impl TryFrom<LayerRecord> for DenseLayer {
    type Error = Error;

    fn try_from(rec: LayerRecord) -> Result<Self> {
        ensure_dim(
            "layer record weights",
            rec.in_dim * rec.out_dim,
            rec.weights.len(),
        )?;
        ensure_dim("layer record bias", rec.out_dim, rec.bias.len())?;
        let weights = DMatrix::from_row_slice(rec.out_dim, rec.in_dim, &rec.weights);
        DenseLayer::new(weights, DVector::from_vec(rec.bias), rec.activation)
    }
}
