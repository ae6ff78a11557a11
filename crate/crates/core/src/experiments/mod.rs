//! End-to-end experiment runners with JSON and CSV reports.
//!
//! Every runner is a pure function of its config and a master seed. Wall-clock
//! time is kept out of the report so that reruns are byte-identical; the CLI
//! writes it to a separate `timing.json`.

mod classification;
mod regression;

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::forest;
use crate::nn::{self, arch, ClassificationMetrics, NetworkSpec, TrainConfig};

pub use classification::{
    run_classification_sweep, run_complexity_sweep, run_confusion, run_memory_binning, ClassifySweepConfig,
    ComplexityConfig, ConfusionConfig, MemoryBinningExperiment,
};
pub use regression::{
    run_forecast_deterministic, run_forecast_markovian, run_regression, ForecastDetConfig, ForecastMarkovConfig,
    RegressionExperiment,
};

/// Default divisor applied to paper dataset sizes by desk presets.
pub const DESK_FACTOR: usize = 5;
pub const SPLIT_RATIO: f64 = 0.8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scale {
    Desk,
    Paper,
}

impl FromStr for Scale {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "desk" => Ok(Scale::Desk),
            "paper" => Ok(Scale::Paper),
            _ => Err(Error::invalid(format!("unknown scale {s:?} (expected desk or paper)"))),
        }
    }
}

/// Classifier families compared in the sweeps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Ffnn,
    Rnn,
    Cnn1d,
    Forest,
}

impl ModelKind {
    pub const ALL: [ModelKind; 4] = [ModelKind::Ffnn, ModelKind::Rnn, ModelKind::Cnn1d, ModelKind::Forest];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Ffnn => "ffnn",
            ModelKind::Rnn => "rnn",
            ModelKind::Cnn1d => "cnn1d",
            ModelKind::Forest => "forest",
        }
    }

    pub fn net(self) -> Option<arch::NetKind> {
        match self {
            ModelKind::Ffnn => Some(arch::NetKind::Ffnn),
            ModelKind::Rnn => Some(arch::NetKind::Rnn),
            ModelKind::Cnn1d => Some(arch::NetKind::Cnn1d),
            ModelKind::Forest => None,
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ModelKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::invalid(format!("unknown model {s:?} (expected ffnn, rnn, cnn1d or forest)")))
    }
}

/// Optimiser settings shared by the network runs of one experiment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
}

impl Schedule {
    pub fn config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            batch_size: self.batch_size,
            learning_rate: self.learning_rate,
            seed,
            eval_train: false,
        }
    }
}

/// Plot-ready table written as `<name>.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsvTable {
    pub name: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl CsvTable {
    pub fn new(name: &str, header: &[&str]) -> Self {
        Self { name: name.into(), header: header.iter().map(|h| h.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> String {
        let mut out = self.header.join(",");
        out.push('\n');
        for row in &self.rows {
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }
}

/// Result of one experiment run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub experiment: String,
    pub master_seed: u64,
    pub config: serde_json::Value,
    pub metrics: serde_json::Value,
    #[serde(skip)]
    pub tables: Vec<CsvTable>,
}

impl RunReport {
    fn new<C: Serialize, M: Serialize>(
        experiment: &str,
        master_seed: u64,
        config: &C,
        metrics: &M,
        tables: Vec<CsvTable>,
    ) -> Result<Self> {
        Ok(Self {
            experiment: experiment.into(),
            master_seed,
            config: serde_json::to_value(config)?,
            metrics: serde_json::to_value(metrics)?,
            tables,
        })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    /// Writes `report.json` and one CSV per table into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let path = dir.join("report.json");
        fs::write(&path, self.to_json()?).map_err(|e| Error::io(&path, e))?;
        for t in &self.tables {
            let path = dir.join(format!("{}.csv", t.name));
            fs::write(&path, t.to_csv()).map_err(|e| Error::io(&path, e))?;
        }
        Ok(())
    }
}

/// One experiment with its full configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "experiment", rename_all = "kebab-case")]
pub enum ExperimentConfig {
    ClassifySweep(ClassifySweepConfig),
    Confusion(ConfusionConfig),
    MemoryBinning(MemoryBinningExperiment),
    Complexity(ComplexityConfig),
    Regression(RegressionExperiment),
    ForecastMarkov(ForecastMarkovConfig),
    ForecastDet(ForecastDetConfig),
}

pub const EXPERIMENT_NAMES: [&str; 7] =
    ["classify-sweep", "confusion", "memory-binning", "complexity", "regression", "forecast-markov", "forecast-det"];

impl ExperimentConfig {
    /// Preset for a named experiment; `factor` divides paper dataset sizes at
    /// desk scale and is ignored at paper scale.
    pub fn preset(name: &str, scale: Scale, factor: usize) -> Result<Self> {
        if factor == 0 {
            return Err(Error::invalid("factor must be >= 1"));
        }
        let f = if scale == Scale::Paper { 1 } else { factor };
        Ok(match name {
            "classify-sweep" => ExperimentConfig::ClassifySweep(ClassifySweepConfig::preset(scale, f)),
            "confusion" => ExperimentConfig::Confusion(ConfusionConfig::preset(scale, f)),
            "memory-binning" => ExperimentConfig::MemoryBinning(MemoryBinningExperiment::preset(scale, f)),
            "complexity" => ExperimentConfig::Complexity(ComplexityConfig::preset(scale, f)),
            "regression" => ExperimentConfig::Regression(RegressionExperiment::preset(scale, f)),
            "forecast-markov" => ExperimentConfig::ForecastMarkov(ForecastMarkovConfig::preset(scale, f)),
            "forecast-det" => ExperimentConfig::ForecastDet(ForecastDetConfig::preset(scale, f)),
            _ => {
                return Err(Error::invalid(format!(
                    "unknown experiment {name:?}; valid names: {}",
                    EXPERIMENT_NAMES.join(", ")
                )))
            }
        })
    }

    pub fn name(&self) -> &'static str {
        match self {
            ExperimentConfig::ClassifySweep(_) => "classify-sweep",
            ExperimentConfig::Confusion(_) => "confusion",
            ExperimentConfig::MemoryBinning(_) => "memory-binning",
            ExperimentConfig::Complexity(_) => "complexity",
            ExperimentConfig::Regression(_) => "regression",
            ExperimentConfig::ForecastMarkov(_) => "forecast-markov",
            ExperimentConfig::ForecastDet(_) => "forecast-det",
        }
    }

    pub fn run(&self, seed: u64, progress: &mut dyn FnMut(&str)) -> Result<RunReport> {
        match self {
            ExperimentConfig::ClassifySweep(c) => run_classification_sweep(c, seed, progress),
            ExperimentConfig::Confusion(c) => run_confusion(c, seed, progress),
            ExperimentConfig::MemoryBinning(c) => run_memory_binning(c, seed, progress),
            ExperimentConfig::Complexity(c) => run_complexity_sweep(c, seed, progress),
            ExperimentConfig::Regression(c) => run_regression(c, seed, progress),
            ExperimentConfig::ForecastMarkov(c) => run_forecast_markovian(c, seed, progress),
            ExperimentConfig::ForecastDet(c) => run_forecast_deterministic(c, seed, progress),
        }
    }
}

/// Outcome of training one classifier on one split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierRun {
    pub model: ModelKind,
    pub seed: u64,
    pub param_count: Option<usize>,
    /// Test accuracy of the best epoch (the only evaluation for forests).
    pub best_accuracy: f64,
    pub best_epoch: Option<usize>,
    pub final_accuracy: f64,
    pub confusion: Vec<Vec<usize>>,
}

pub(crate) fn train_classifier_spec(
    spec: &NetworkSpec,
    model: ModelKind,
    train: &Dataset,
    test: &Dataset,
    schedule: &Schedule,
    seed: u64,
) -> Result<ClassifierRun> {
    let trained = nn::train(spec, train, Some(test), &schedule.config(seed))?;
    let best = trained.best.as_ref().expect("test set given");
    let metrics = nn::evaluate_classification(&trained.best_network(), test)?;
    let last = trained.history.last().and_then(|h| h.test_accuracy).unwrap_or(0.0);
    Ok(ClassifierRun {
        model,
        seed,
        param_count: Some(trained.network.param_count()),
        best_accuracy: metrics.accuracy,
        best_epoch: Some(best.epoch),
        final_accuracy: last,
        confusion: metrics.confusion,
    })
}

pub(crate) fn train_classifier(
    model: ModelKind,
    train: &Dataset,
    test: &Dataset,
    schedule: &Schedule,
    n_estimators: usize,
    seed: u64,
) -> Result<ClassifierRun> {
    match model.net() {
        Some(kind) => {
            let spec = arch::classifier(kind, train.seq_len, train.n_classes);
            train_classifier_spec(&spec, model, train, test, schedule, seed)
        }
        None => {
            let f = forest::fit(train, n_estimators, seed)?;
            let ClassificationMetrics { accuracy, confusion } = f.evaluate(test)?;
            Ok(ClassifierRun {
                model,
                seed,
                param_count: None,
                best_accuracy: accuracy,
                best_epoch: None,
                final_accuracy: accuracy,
                confusion,
            })
        }
    }
}

pub(crate) fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = if xs.len() > 1 { xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0) } else { 0.0 };
    (mean, var.sqrt())
}

pub(crate) fn fmt_f(x: f64) -> String {
    format!("{x:.10e}")
}
