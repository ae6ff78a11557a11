use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::adam::{AdamConfig, AdamState};
use super::loss::{loss_and_grad, Loss};
use super::network::Network;
use super::{NetworkSpec, Tensor};
use crate::dataset::{Dataset, Target, Task};
use crate::error::{Error, Result};
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
    /// Also record an evaluation-mode loss over the whole training set after
    /// every epoch.
    #[serde(default)]
    pub eval_train: bool,
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::invalid("epochs and batch_size must be positive"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::invalid(format!("learning rate {} must be positive", self.learning_rate)));
        }
        Ok(())
    }
}

/// One epoch of training history.
///
/// `train_loss` and `train_accuracy` are averaged over the minibatches as they
/// were seen, so they include dropout noise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_accuracy: Option<f64>,
    /// Evaluation-mode training loss with the end-of-epoch parameters.
    pub train_eval_loss: Option<f64>,
    pub test_loss: Option<f64>,
    pub test_accuracy: Option<f64>,
}

/// Parameters from the epoch with the best test score: highest accuracy for
/// classification, lowest loss otherwise. Earliest epoch wins ties.
#[derive(Debug, Clone, PartialEq)]
pub struct BestCheckpoint {
    pub epoch: usize,
    pub score: f64,
    pub params: Vec<Vec<Tensor>>,
}

#[derive(Debug, Clone)]
pub struct TrainedModel {
    pub network: Network,
    pub adam: AdamState,
    pub config: TrainConfig,
    pub history: Vec<EpochRecord>,
    pub best: Option<BestCheckpoint>,
}

impl TrainedModel {
    /// Network with the best-checkpoint parameters (the final ones if no test
    /// set was given).
    pub fn best_network(&self) -> Network {
        let mut net = self.network.clone();
        if let Some(best) = &self.best {
            net.set_params(best.params.clone()).expect("checkpoint taken from this network");
        }
        net
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassificationMetrics {
    pub accuracy: f64,
    /// `confusion[true][predicted]`.
    pub confusion: Vec<Vec<usize>>,
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

/// Feature rows of `ds` shaped as `[n, input_shape...]`.
pub fn inputs_tensor(ds: &Dataset, input_shape: &[usize]) -> Result<Tensor> {
    let width: usize = input_shape.iter().product();
    let mut data = Vec::with_capacity(ds.len() * width);
    for (i, s) in ds.samples.iter().enumerate() {
        if s.features.len() != width {
            return Err(Error::ShapeMismatch { expected: input_shape.to_vec(), got: vec![i, s.features.len()] });
        }
        data.extend_from_slice(&s.features);
    }
    let mut shape = vec![ds.len()];
    shape.extend_from_slice(input_shape);
    Tensor::new(shape, data)
}

/// Targets as `[n, width]`: one-hot rows for classes, raw values otherwise.
pub fn targets_tensor(ds: &Dataset, width: usize) -> Result<Tensor> {
    let mut data = vec![0.0; ds.len() * width];
    for (i, s) in ds.samples.iter().enumerate() {
        let row = &mut data[i * width..(i + 1) * width];
        match &s.target {
            Target::Class(c) if *c < width => row[*c] = 1.0,
            Target::Values(v) if v.len() == width => row.copy_from_slice(v),
            _ => return Err(Error::TaskMismatch(format!("sample {i} target does not fit width {width}"))),
        }
    }
    Tensor::new(vec![ds.len(), width], data)
}

fn check_task(spec: &NetworkSpec, ds: &Dataset) -> Result<usize> {
    let width = spec.output_width()?;
    let (want_loss, want_width) = match ds.task {
        Task::Classification => (Loss::SoftmaxCrossEntropy, ds.n_classes),
        Task::Regression | Task::Forecast => (Loss::Mse, ds.target_width),
    };
    if spec.loss != want_loss || width != want_width {
        return Err(Error::TaskMismatch(format!(
            "{} dataset needs {want_loss:?} with {want_width} outputs, network has {:?} with {width}",
            ds.task, spec.loss
        )));
    }
    Ok(width)
}

fn classification_counts(outputs: &Tensor, targets: &Tensor) -> usize {
    (0..outputs.batch()).filter(|&i| argmax(outputs.row(i)) == argmax(targets.row(i))).count()
}

/// Trains a freshly initialised network. Initial weights, per-epoch shuffles
/// and dropout masks all derive from `cfg.seed`.
pub fn train(
    spec: &NetworkSpec,
    train_ds: &Dataset,
    test_ds: Option<&Dataset>,
    cfg: &TrainConfig,
) -> Result<TrainedModel> {
    cfg.validate()?;
    let width = check_task(spec, train_ds)?;
    if train_ds.is_empty() {
        return Err(Error::invalid("training set is empty"));
    }
    let mut net = Network::new(spec.clone(), cfg.seed)?;
    let x = inputs_tensor(train_ds, &spec.input_shape)?;
    let y = targets_tensor(train_ds, width)?;
    let test = match test_ds {
        Some(ds) if !ds.is_empty() => {
            check_task(spec, ds)?;
            Some((inputs_tensor(ds, &spec.input_shape)?, targets_tensor(ds, width)?))
        }
        _ => None,
    };
    let classify = train_ds.task == Task::Classification;
    let adam_cfg = AdamConfig::new(cfg.learning_rate);
    let mut adam = AdamState::new(net.params());
    let mut dropout = seed::stream(seed::derive_tag(cfg.seed, "dropout"));
    let shuffle_seed = seed::derive_tag(cfg.seed, "shuffle");
    let n = train_ds.len();
    let mut order: Vec<usize> = (0..n).collect();
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut best: Option<BestCheckpoint> = None;

    for epoch in 0..cfg.epochs {
        order.sort_unstable();
        order.shuffle(&mut seed::stream(seed::derive(shuffle_seed, epoch as u64)));
        let mut loss_sum = 0.0;
        let mut correct = 0;
        for (batch, idx) in order.chunks(cfg.batch_size).enumerate() {
            let xb = x.gather_rows(idx);
            let yb = y.gather_rows(idx);
            let (out, cache) = net.forward(&xb, Some(&mut dropout))?;
            let (loss, grad) = loss_and_grad(spec.loss, &out, &yb)?;
            if !loss.is_finite() {
                let layer = match cache.first_non_finite_layer() {
                    Some(i) => format!("{i} ({})", spec.layers[i].name()),
                    None => "loss".to_string(),
                };
                return Err(Error::NonFiniteLoss { epoch, batch, layer });
            }
            let grads = net.backward(&cache, &grad)?;
            adam.step(&adam_cfg, net.params_mut(), &grads);
            loss_sum += loss * idx.len() as f64;
            if classify {
                correct += classification_counts(&out, &yb);
            }
        }
        let mut record = EpochRecord {
            epoch,
            train_loss: loss_sum / n as f64,
            train_accuracy: classify.then(|| correct as f64 / n as f64),
            train_eval_loss: None,
            test_loss: None,
            test_accuracy: None,
        };
        if cfg.eval_train {
            record.train_eval_loss = Some(loss_and_grad(spec.loss, &net.predict(&x)?, &y)?.0);
        }
        if let Some((tx, ty)) = &test {
            let out = net.predict(tx)?;
            record.test_loss = Some(loss_and_grad(spec.loss, &out, ty)?.0);
            let score = if classify {
                let acc = classification_counts(&out, ty) as f64 / tx.batch() as f64;
                record.test_accuracy = Some(acc);
                acc
            } else {
                -record.test_loss.unwrap()
            };
            if best.as_ref().is_none_or(|b| score > b.score) {
                best = Some(BestCheckpoint { epoch, score, params: net.params().to_vec() });
            }
        }
        history.push(record);
    }
    if let Some(b) = best.as_mut() {
        if !classify {
            b.score = -b.score;
        }
    }
    Ok(TrainedModel { network: net, adam, config: *cfg, history, best })
}

pub fn evaluate_classification(net: &Network, ds: &Dataset) -> Result<ClassificationMetrics> {
    if ds.task != Task::Classification {
        return Err(Error::TaskMismatch(format!("expected a classification dataset, got {}", ds.task)));
    }
    let width = check_task(net.spec(), ds)?;
    let mut confusion = vec![vec![0; width]; width];
    if ds.is_empty() {
        return Ok(ClassificationMetrics { accuracy: 0.0, confusion });
    }
    let out = net.predict(&inputs_tensor(ds, &net.spec().input_shape)?)?;
    let mut correct = 0;
    for (i, s) in ds.samples.iter().enumerate() {
        let truth = s.class().expect("classification samples carry a class");
        let pred = argmax(out.row(i));
        confusion[truth][pred] += 1;
        correct += usize::from(truth == pred);
    }
    Ok(ClassificationMetrics { accuracy: correct as f64 / ds.len() as f64, confusion })
}

/// Mean squared error over samples and output components.
pub fn evaluate_regression(net: &Network, ds: &Dataset) -> Result<f64> {
    if ds.task == Task::Classification {
        return Err(Error::TaskMismatch("expected a regression or forecast dataset".into()));
    }
    let width = check_task(net.spec(), ds)?;
    if ds.is_empty() {
        return Err(Error::invalid("dataset is empty"));
    }
    let out = net.predict(&inputs_tensor(ds, &net.spec().input_shape)?)?;
    let y = targets_tensor(ds, width)?;
    Ok(loss_and_grad(Loss::Mse, &out, &y)?.0)
}
