//! The layer stacks used by the experiments.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{param_count, Activation, LayerSpec, Loss, NetworkSpec};
use crate::error::{Error, Result};

pub const DROPOUT_RATE: f64 = 0.2;

use Activation::{Linear, Relu, Softmax};

fn dropout() -> LayerSpec {
    LayerSpec::Dropout { rate: DROPOUT_RATE }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NetKind {
    Ffnn,
    Rnn,
    Cnn1d,
}

impl NetKind {
    pub const ALL: [NetKind; 3] = [NetKind::Ffnn, NetKind::Rnn, NetKind::Cnn1d];

    pub fn name(self) -> &'static str {
        match self {
            NetKind::Ffnn => "ffnn",
            NetKind::Rnn => "rnn",
            NetKind::Cnn1d => "cnn1d",
        }
    }
}

impl fmt::Display for NetKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for NetKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        NetKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::invalid(format!("unknown network kind {s:?} (expected ffnn, rnn or cnn1d)")))
    }
}

/// Flatten, 128, drop, 128, drop, 64, 64, drop, 16, softmax.
pub fn ffnn_classifier(seq_len: usize, n_classes: usize) -> NetworkSpec {
    NetworkSpec::new(
        vec![seq_len, 1],
        vec![
            LayerSpec::Flatten,
            LayerSpec::dense(128, Relu),
            dropout(),
            LayerSpec::dense(128, Relu),
            dropout(),
            LayerSpec::dense(64, Relu),
            LayerSpec::dense(64, Relu),
            dropout(),
            LayerSpec::dense(16, Relu),
            LayerSpec::dense(n_classes, Softmax),
        ],
        Loss::SoftmaxCrossEntropy,
    )
}

/// LSTM 64 (sequences), LSTM 32, dense 64, drop, dense 16, drop, softmax.
pub fn lstm_classifier(seq_len: usize, n_classes: usize) -> NetworkSpec {
    NetworkSpec::new(
        vec![seq_len, 1],
        vec![
            LayerSpec::lstm(64, true),
            LayerSpec::lstm(32, false),
            LayerSpec::dense(64, Relu),
            dropout(),
            LayerSpec::dense(16, Relu),
            dropout(),
            LayerSpec::dense(n_classes, Softmax),
        ],
        Loss::SoftmaxCrossEntropy,
    )
}

/// Two conv(128, k=2) + pool(2) blocks, flatten, dense 64, softmax. Needs
/// `seq_len >= 8`.
pub fn cnn_classifier(seq_len: usize, n_classes: usize) -> NetworkSpec {
    NetworkSpec::new(
        vec![seq_len, 1],
        vec![
            LayerSpec::conv1d(128, 2),
            LayerSpec::MaxPool1d { pool_size: 2 },
            LayerSpec::conv1d(128, 2),
            LayerSpec::MaxPool1d { pool_size: 2 },
            LayerSpec::Flatten,
            LayerSpec::dense(64, Relu),
            LayerSpec::dense(n_classes, Softmax),
        ],
        Loss::SoftmaxCrossEntropy,
    )
}

pub fn classifier(kind: NetKind, seq_len: usize, n_classes: usize) -> NetworkSpec {
    match kind {
        NetKind::Ffnn => ffnn_classifier(seq_len, n_classes),
        NetKind::Rnn => lstm_classifier(seq_len, n_classes),
        NetKind::Cnn1d => cnn_classifier(seq_len, n_classes),
    }
}

/// Feature window to transmissivity window: 64, 32, linear output.
pub fn regression_net(len: usize) -> NetworkSpec {
    NetworkSpec::new(
        vec![len],
        vec![LayerSpec::dense(64, Relu), LayerSpec::dense(32, Relu), LayerSpec::dense(len, Linear)],
        Loss::Mse,
    )
}

/// 32, 16, linear output of width `horizon`.
pub fn markov_forecast_net(inputs: usize, horizon: usize) -> NetworkSpec {
    NetworkSpec::new(
        vec![inputs],
        vec![LayerSpec::dense(32, Relu), LayerSpec::dense(16, Relu), LayerSpec::dense(horizon, Linear)],
        Loss::Mse,
    )
}

/// 256, 64, 32, linear output of width `horizon`.
pub fn deterministic_forecast_net(window: usize, horizon: usize) -> NetworkSpec {
    NetworkSpec::new(
        vec![window],
        vec![
            LayerSpec::dense(256, Relu),
            LayerSpec::dense(64, Relu),
            LayerSpec::dense(32, Relu),
            LayerSpec::dense(horizon, Linear),
        ],
        Loss::Mse,
    )
}

/// Multiplies every hidden width (LSTM units, conv filters, dense units other
/// than the output layer) by `factor`, rounding and keeping at least one.
pub fn scale_widths(spec: &NetworkSpec, factor: f64) -> NetworkSpec {
    let last = spec.layers.len() - 1;
    let scale = |w: usize| ((w as f64 * factor).round() as usize).max(1);
    let layers = spec
        .layers
        .iter()
        .enumerate()
        .map(|(i, l)| match *l {
            LayerSpec::Dense { units, activation } if i != last => LayerSpec::Dense { units: scale(units), activation },
            LayerSpec::Lstm { units, return_sequences } => LayerSpec::Lstm { units: scale(units), return_sequences },
            LayerSpec::Conv1d { filters, kernel_size, activation } => {
                LayerSpec::Conv1d { filters: scale(filters), kernel_size, activation }
            }
            other => other,
        })
        .collect();
    NetworkSpec { layers, ..spec.clone() }
}

/// Bisects a common width factor so the scaled network has `target`
/// parameters within `tolerance` (relative). Returns the spec and the factor.
pub fn scale_to_budget(spec: &NetworkSpec, target: usize, tolerance: f64) -> Result<(NetworkSpec, f64)> {
    let count = |f: f64| param_count(&scale_widths(spec, f));
    let (mut lo, mut hi) = (1e-3, 1e3);
    if count(lo)? > target || count(hi)? < target {
        return Err(Error::invalid(format!("budget {target} unreachable by width scaling")));
    }
    let mut best = (f64::INFINITY, 1.0);
    for _ in 0..200 {
        let mid = (lo * hi).sqrt();
        let n = count(mid)?;
        let err = (n as f64 - target as f64).abs() / target as f64;
        if err < best.0 {
            best = (err, mid);
        }
        if n < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    if best.0 > tolerance {
        return Err(Error::invalid(format!("closest width factor misses budget {target} by {:.1}%", 100.0 * best.0)));
    }
    Ok((scale_widths(spec, best.1), best.1))
}
