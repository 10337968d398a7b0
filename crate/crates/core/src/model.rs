//! Sequential feed-forward networks: a chain of linear layers, each followed
//! by a pointwise activation.
//!
//! The activation stored on layer `l` maps that layer's pre-activation output
//! to the input of layer `l + 1`. Biases are folded into the weight matrix as
//! an extra trailing column that multiplies a constant-one input row.

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::DenseMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ActivationKind {
    Identity,
    Relu,
    Tanh,
    Gelu,
}

impl ActivationKind {
    pub const ALL: [ActivationKind; 4] = [Self::Identity, Self::Relu, Self::Tanh, Self::Gelu];

    pub fn tag(self) -> &'static str {
        match self {
            Self::Identity => "identity",
            Self::Relu => "relu",
            Self::Tanh => "tanh",
            Self::Gelu => "gelu",
        }
    }

    #[inline]
    pub fn eval(self, z: f64) -> f64 {
        match self {
            Self::Identity => z,
            Self::Relu => z.max(0.0),
            Self::Tanh => z.tanh(),
            Self::Gelu => 0.5 * z * (1.0 + libm::erf(z * std::f64::consts::FRAC_1_SQRT_2)),
        }
    }

    /// Derivative with respect to the pre-activation. ReLU uses 0 at the kink.
    #[inline]
    pub fn derivative(self, z: f64) -> f64 {
        match self {
            Self::Identity => 1.0,
            Self::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Self::Tanh => {
                let t = z.tanh();
                1.0 - t * t
            }
            Self::Gelu => {
                let cdf = 0.5 * (1.0 + libm::erf(z * std::f64::consts::FRAC_1_SQRT_2));
                let pdf = (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt();
                cdf + z * pdf
            }
        }
    }
}

impl fmt::Display for ActivationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for ActivationKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.tag() == s)
            .ok_or_else(|| Error::UnknownActivation(s.to_string()))
    }
}

/// Elementwise activation.
pub fn apply_activation(kind: ActivationKind, z: &DenseMatrix) -> DenseMatrix {
    match kind {
        ActivationKind::Identity => z.clone(),
        _ => z.map(|v| kind.eval(v)),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearLayer {
    pub name: String,
    /// `out × in`, or `out × (in + 1)` with the bias in the last column.
    pub weight: DenseMatrix,
    pub has_bias: bool,
    pub activation: ActivationKind,
}

impl LinearLayer {
    pub fn new(
        name: impl Into<String>,
        weight: DenseMatrix,
        has_bias: bool,
        activation: ActivationKind,
    ) -> Self {
        Self {
            name: name.into(),
            weight,
            has_bias,
            activation,
        }
    }

    pub fn in_dim(&self) -> usize {
        self.weight.cols() - usize::from(self.has_bias)
    }

    pub fn out_dim(&self) -> usize {
        self.weight.rows()
    }

    /// The matrix the weight multiplies: `x`, plus a ones row if biased.
    pub fn design(&self, x: &DenseMatrix) -> DenseMatrix {
        if self.has_bias {
            x.with_ones_row()
        } else {
            x.clone()
        }
    }

    /// Pre-activation output `W · [x; 1]`.
    pub fn pre_activation(&self, x: &DenseMatrix) -> Result<DenseMatrix> {
        if x.rows() != self.in_dim() {
            return Err(Error::InvalidShape(format!(
                "layer `{}` expects {} input rows, got {}",
                self.name,
                self.in_dim(),
                x.rows()
            )));
        }
        self.weight.matmul(&self.design(x))
    }

    /// `σ(W · [x; 1])`
    pub fn forward(&self, x: &DenseMatrix) -> Result<DenseMatrix> {
        Ok(apply_activation(self.activation, &self.pre_activation(x)?))
    }

    /// Same shape, bias flag, and activation; names may differ.
    pub fn same_shape(&self, other: &LinearLayer) -> bool {
        self.weight.shape() == other.weight.shape()
            && self.has_bias == other.has_bias
            && self.activation == other.activation
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SequentialModel {
    input_dim: usize,
    layers: Vec<LinearLayer>,
}

impl SequentialModel {
    pub fn new(input_dim: usize, layers: Vec<LinearLayer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::InvalidModel("a model needs at least one layer".into()));
        }
        let mut names = HashSet::new();
        let mut expected = input_dim;
        for (i, layer) in layers.iter().enumerate() {
            if !names.insert(layer.name.as_str()) {
                return Err(Error::InvalidModel(format!("duplicate layer name `{}`", layer.name)));
            }
            if layer.has_bias && layer.weight.cols() == 0 {
                return Err(Error::InvalidModel(format!(
                    "layer `{}` has a bias but no weight columns",
                    layer.name
                )));
            }
            if layer.in_dim() != expected {
                return Err(Error::InvalidModel(format!(
                    "layer {i} (`{}`) takes {} inputs but receives {expected}",
                    layer.name,
                    layer.in_dim()
                )));
            }
            expected = layer.out_dim();
        }
        Ok(Self { input_dim, layers })
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map_or(0, LinearLayer::out_dim)
    }

    pub fn layers(&self) -> &[LinearLayer] {
        &self.layers
    }

    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    /// Replaces one layer's weight, keeping everything else.
    pub fn with_weight(&self, layer: usize, weight: DenseMatrix) -> Result<Self> {
        let mut layers = self.layers.clone();
        let slot = layers
            .get_mut(layer)
            .ok_or_else(|| Error::InvalidShape(format!("no layer {layer}")))?;
        if slot.weight.shape() != weight.shape() {
            return Err(Error::InvalidShape(format!(
                "layer {layer} weight is {:?}, replacement is {:?}",
                slot.weight.shape(),
                weight.shape()
            )));
        }
        slot.weight = weight;
        Ok(Self {
            input_dim: self.input_dim,
            layers,
        })
    }

    /// Layer shapes, bias flags, and activations all agree.
    pub fn same_architecture(&self, other: &SequentialModel) -> bool {
        self.input_dim == other.input_dim
            && self.layers.len() == other.layers.len()
            && self.layers.iter().zip(&other.layers).all(|(a, b)| a.same_shape(b))
    }

    pub fn forward(&self, x: &DenseMatrix) -> Result<DenseMatrix> {
        self.check_input(x)?;
        let mut h = x.clone();
        for layer in &self.layers {
            h = layer.forward(&h)?;
        }
        Ok(h)
    }

    /// Forward pass that keeps the input of every layer.
    pub fn forward_capture(&self, x: &DenseMatrix) -> Result<ActivationTrace> {
        self.check_input(x)?;
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut h = x.clone();
        for layer in &self.layers {
            let next = layer.forward(&h)?;
            inputs.push(h);
            h = next;
        }
        Ok(ActivationTrace {
            per_layer_inputs: inputs,
            final_output: h,
        })
    }

    fn check_input(&self, x: &DenseMatrix) -> Result<()> {
        if x.rows() != self.input_dim {
            return Err(Error::InvalidShape(format!(
                "model expects {} input rows, got {}",
                self.input_dim,
                x.rows()
            )));
        }
        Ok(())
    }
}

/// Per-layer inputs recorded by [`SequentialModel::forward_capture`].
#[derive(Debug, Clone)]
pub struct ActivationTrace {
    /// Entry `l` is the `d_l × n` input of layer `l` (no ones row).
    pub per_layer_inputs: Vec<DenseMatrix>,
    pub final_output: DenseMatrix,
}
