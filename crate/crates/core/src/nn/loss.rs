use serde::{Deserialize, Serialize};

use super::Tensor;
use crate::error::{Error, Result};

/// Probabilities are clamped to this before taking logs.
const PROB_FLOOR: f64 = 1e-15;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Loss {
    /// Cross-entropy on the outputs of a final softmax layer.
    SoftmaxCrossEntropy,
    /// Mean over every output element of the squared error.
    Mse,
}

/// Loss value and its gradient with respect to `outputs`.
pub fn loss_and_grad(loss: Loss, outputs: &Tensor, targets: &Tensor) -> Result<(f64, Tensor)> {
    if outputs.shape() != targets.shape() || outputs.shape().len() != 2 {
        return Err(Error::ShapeMismatch { expected: outputs.shape().to_vec(), got: targets.shape().to_vec() });
    }
    let b = outputs.batch() as f64;
    let mut grad = Tensor::zeros(outputs.shape());
    let value = match loss {
        Loss::Mse => {
            let n = outputs.len() as f64;
            let mut sum = 0.0;
            for ((g, y), t) in grad.data_mut().iter_mut().zip(outputs.data()).zip(targets.data()) {
                let d = y - t;
                sum += d * d;
                *g = 2.0 * d / n;
            }
            sum / n
        }
        Loss::SoftmaxCrossEntropy => {
            let mut sum = 0.0;
            for ((g, y), t) in grad.data_mut().iter_mut().zip(outputs.data()).zip(targets.data()) {
                if *t != 0.0 {
                    // f64::max would turn a NaN probability into the floor
                    let p = if *y < PROB_FLOOR { PROB_FLOOR } else { *y };
                    sum -= t * p.ln();
                    *g = -t / (p * b);
                }
            }
            if outputs.all_finite() {
                sum / b
            } else {
                f64::NAN
            }
        }
    };
    Ok((value, grad))
}
