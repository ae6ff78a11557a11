//! A small dense / recurrent / convolutional network engine with analytic
//! backpropagation and Adam.
//!
//! Tensors are row-major with the batch as the leading dimension. Sequence
//! tensors are `[batch, time, channels]`. All arithmetic is `f64`.

mod adam;
pub mod arch;
mod gemm;
pub mod gradcheck;
mod layers;
mod loss;
mod network;
pub mod serialize;
mod tensor;
mod train;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use adam::{AdamConfig, AdamState};
pub use gradcheck::grad_check;
pub use loss::{loss_and_grad, Loss};
pub use network::{ForwardCache, Gradients, Network};
pub use tensor::Tensor;
pub use train::{
    argmax, evaluate_classification, evaluate_regression, inputs_tensor, targets_tensor, train, BestCheckpoint,
    ClassificationMetrics, EpochRecord, TrainConfig, TrainedModel,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Tanh,
    Linear,
    Softmax,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum LayerSpec {
    Dense { units: usize, activation: Activation },
    Lstm { units: usize, return_sequences: bool },
    Conv1d { filters: usize, kernel_size: usize, activation: Activation },
    MaxPool1d { pool_size: usize },
    Dropout { rate: f64 },
    Flatten,
}

impl LayerSpec {
    pub fn dense(units: usize, activation: Activation) -> Self {
        LayerSpec::Dense { units, activation }
    }

    pub fn lstm(units: usize, return_sequences: bool) -> Self {
        LayerSpec::Lstm { units, return_sequences }
    }

    pub fn conv1d(filters: usize, kernel_size: usize) -> Self {
        LayerSpec::Conv1d { filters, kernel_size, activation: Activation::Relu }
    }

    pub fn name(&self) -> &'static str {
        match self {
            LayerSpec::Dense { .. } => "dense",
            LayerSpec::Lstm { .. } => "lstm",
            LayerSpec::Conv1d { .. } => "conv1d",
            LayerSpec::MaxPool1d { .. } => "max_pool1d",
            LayerSpec::Dropout { .. } => "dropout",
            LayerSpec::Flatten => "flatten",
        }
    }

    /// Output shape (without batch) for the given input shape.
    pub fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        let bad = |msg: String| Err(Error::InvalidNetwork(format!("{}: {msg}", self.name())));
        match *self {
            LayerSpec::Dense { units, activation: _ } => {
                if units == 0 {
                    return bad("units must be >= 1".into());
                }
                if input.len() != 1 {
                    return bad(format!("expects a flat input, got {input:?} (add a flatten layer)"));
                }
                Ok(vec![units])
            }
            LayerSpec::Lstm { units, return_sequences } => {
                if units == 0 {
                    return bad("units must be >= 1".into());
                }
                if input.len() != 2 || input[0] == 0 {
                    return bad(format!("expects [time, channels], got {input:?}"));
                }
                Ok(if return_sequences { vec![input[0], units] } else { vec![units] })
            }
            LayerSpec::Conv1d { filters, kernel_size, activation } => {
                if filters == 0 || kernel_size == 0 {
                    return bad("filters and kernel_size must be >= 1".into());
                }
                if activation == Activation::Softmax {
                    return bad("softmax is only supported on dense layers".into());
                }
                if input.len() != 2 || input[0] < kernel_size {
                    return bad(format!("kernel {kernel_size} does not fit input {input:?}"));
                }
                Ok(vec![input[0] - kernel_size + 1, filters])
            }
            LayerSpec::MaxPool1d { pool_size } => {
                if pool_size == 0 {
                    return bad("pool_size must be >= 1".into());
                }
                if input.len() != 2 || input[0] < pool_size {
                    return bad(format!("pool {pool_size} does not fit input {input:?}"));
                }
                Ok(vec![input[0] / pool_size, input[1]])
            }
            LayerSpec::Dropout { rate } => {
                if !(0.0..1.0).contains(&rate) {
                    return bad(format!("rate {rate} outside [0, 1)"));
                }
                Ok(input.to_vec())
            }
            LayerSpec::Flatten => Ok(vec![input.iter().product()]),
        }
    }

    /// Trainable parameter count for the given input shape.
    pub fn param_count(&self, input: &[usize]) -> usize {
        match *self {
            LayerSpec::Dense { units, .. } => units * (input[0] + 1),
            LayerSpec::Lstm { units, .. } => 4 * units * (input[1] + units + 1),
            LayerSpec::Conv1d { filters, kernel_size, .. } => filters * (kernel_size * input[1] + 1),
            LayerSpec::MaxPool1d { .. } | LayerSpec::Dropout { .. } | LayerSpec::Flatten => 0,
        }
    }
}

/// Declarative network: input shape (without batch), layers and loss.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub input_shape: Vec<usize>,
    pub layers: Vec<LayerSpec>,
    pub loss: Loss,
}

impl NetworkSpec {
    pub fn new(input_shape: Vec<usize>, layers: Vec<LayerSpec>, loss: Loss) -> Self {
        Self { input_shape, layers, loss }
    }

    /// Shapes flowing between layers: `shapes[0]` is the input, `shapes[i + 1]`
    /// the output of layer `i`.
    pub fn shapes(&self) -> Result<Vec<Vec<usize>>> {
        if self.input_shape.is_empty() || self.input_shape.contains(&0) {
            return Err(Error::InvalidNetwork(format!("bad input shape {:?}", self.input_shape)));
        }
        if self.layers.is_empty() {
            return Err(Error::InvalidNetwork("no layers".into()));
        }
        let mut shapes = vec![self.input_shape.clone()];
        for (i, layer) in self.layers.iter().enumerate() {
            let next = layer
                .output_shape(shapes.last().unwrap())
                .map_err(|e| Error::InvalidNetwork(format!("layer {i}: {e}")))?;
            shapes.push(next);
        }
        let out = shapes.last().unwrap();
        if out.len() != 1 {
            return Err(Error::InvalidNetwork(format!("network output must be flat, got {out:?}")));
        }
        if self.loss == Loss::SoftmaxCrossEntropy
            && !matches!(self.layers.last(), Some(LayerSpec::Dense { activation: Activation::Softmax, .. }))
        {
            return Err(Error::InvalidNetwork("cross-entropy requires a final softmax dense layer".into()));
        }
        Ok(shapes)
    }

    pub fn output_width(&self) -> Result<usize> {
        Ok(self.shapes()?.last().unwrap()[0])
    }
}

/// Exact trainable parameter count of a valid spec.
pub fn param_count(spec: &NetworkSpec) -> Result<usize> {
    let shapes = spec.shapes()?;
    Ok(spec.layers.iter().zip(&shapes).map(|(l, s)| l.param_count(s)).sum())
}
