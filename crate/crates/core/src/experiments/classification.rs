use serde::{Deserialize, Serialize};

use super::{
    fmt_f, mean_std, train_classifier, train_classifier_spec, ClassifierRun, CsvTable, ModelKind, RunReport, Scale,
    Schedule, SPLIT_RATIO,
};
use crate::dataset::{self, ClassificationConfig, MemoryBinningConfig};
use crate::error::{Error, Result};
use crate::eta_process::{ChannelClass, Generation};
use crate::forest::DEFAULT_ESTIMATORS;
use crate::nn::arch;
use crate::seed;

const PAPER_PER_CLASS: usize = 10_000;

fn paper_schedule(epochs: usize) -> Schedule {
    Schedule { epochs, batch_size: 1000, learning_rate: 1e-3 }
}

/// Desk runs use smaller minibatches so that the reduced datasets still see
/// enough optimiser steps.
fn desk_schedule(epochs: usize) -> Schedule {
    Schedule { epochs, batch_size: 100, learning_rate: 1e-3 }
}

fn gen_index(g: Generation) -> u64 {
    match g {
        Generation::D1 => 1,
        Generation::D2 => 2,
    }
}

/// Accuracy against r at a fixed length and against length at a fixed r.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifySweepConfig {
    pub generations: Vec<Generation>,
    pub r_values: Vec<f64>,
    pub lengths: Vec<usize>,
    /// Length used along the r axis.
    pub fixed_len: usize,
    /// r used along the length axis.
    pub fixed_r: f64,
    pub models: Vec<ModelKind>,
    pub repeats: usize,
    pub per_class: usize,
    pub ffnn: Schedule,
    pub rnn: Schedule,
    pub cnn: Schedule,
    pub n_estimators: usize,
}

impl ClassifySweepConfig {
    pub fn preset(scale: Scale, factor: usize) -> Self {
        let (ffnn, rnn, cnn) = match scale {
            Scale::Paper => (paper_schedule(400), paper_schedule(800), paper_schedule(400)),
            Scale::Desk => (desk_schedule(100), desk_schedule(200), desk_schedule(100)),
        };
        Self {
            generations: vec![Generation::D1, Generation::D2],
            r_values: vec![0.25, 0.5, 1.0, 1.5, 2.0],
            lengths: vec![5, 10, 20, 30],
            fixed_len: 30,
            fixed_r: 1.0,
            models: ModelKind::ALL.to_vec(),
            repeats: 5,
            per_class: PAPER_PER_CLASS / factor,
            ffnn,
            rnn,
            cnn,
            n_estimators: DEFAULT_ESTIMATORS,
        }
    }

    fn schedule(&self, model: ModelKind) -> &Schedule {
        match model {
            ModelKind::Ffnn | ModelKind::Forest => &self.ffnn,
            ModelKind::Rnn => &self.rnn,
            ModelKind::Cnn1d => &self.cnn,
        }
    }

    /// Grid points as (r, length), the shared corner listed once.
    pub fn points(&self) -> Vec<(f64, usize)> {
        let mut pts: Vec<(f64, usize)> = self.r_values.iter().map(|&r| (r, self.fixed_len)).collect();
        for &len in &self.lengths {
            if !pts.contains(&(self.fixed_r, len)) {
                pts.push((self.fixed_r, len));
            }
        }
        pts
    }

    fn validate(&self) -> Result<()> {
        if self.generations.is_empty() || self.models.is_empty() || self.points().is_empty() {
            return Err(Error::invalid("sweep axes must be non-empty"));
        }
        if self.repeats == 0 || self.per_class == 0 {
            return Err(Error::invalid("repeats and per_class must be >= 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub generation: Generation,
    pub r: f64,
    pub seq_len: usize,
    pub model: ModelKind,
    pub accuracies: Vec<f64>,
    pub mean: f64,
    pub std: f64,
    pub runs: Vec<ClassifierRun>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct SweepMetrics {
    points: Vec<SweepPoint>,
    /// Model and length combinations that do not fit the architecture.
    skipped: Vec<String>,
}

fn fits(model: ModelKind, seq_len: usize) -> bool {
    match model.net() {
        Some(kind) => arch::classifier(kind, seq_len, 5).shapes().is_ok(),
        None => true,
    }
}

fn classification_split(
    per_class: usize,
    seq_len: usize,
    r: f64,
    generation: Generation,
    data_seed: u64,
) -> Result<dataset::SplitPair> {
    let ds =
        dataset::build_classification(&ClassificationConfig { per_class, seq_len, r, generation, seed: data_seed })?;
    dataset::split(&ds, SPLIT_RATIO, seed::derive_tag(data_seed, "split"))
}

pub fn run_classification_sweep(
    cfg: &ClassifySweepConfig,
    master: u64,
    progress: &mut dyn FnMut(&str),
) -> Result<RunReport> {
    cfg.validate()?;
    let mut points = Vec::new();
    let mut skipped = Vec::new();
    let mut raw = CsvTable::new("sweep_runs", &["generation", "r", "seq_len", "model", "repeat", "seed", "accuracy"]);
    let mut summary = CsvTable::new("sweep_summary", &["generation", "r", "seq_len", "model", "mean", "std"]);
    for &generation in &cfg.generations {
        for (pi, &(r, seq_len)) in cfg.points().iter().enumerate() {
            let point_seed = seed::derive(seed::derive(master, gen_index(generation)), pi as u64);
            let models: Vec<ModelKind> = cfg.models.iter().copied().filter(|&m| fits(m, seq_len)).collect();
            for &m in cfg.models.iter().filter(|&&m| !fits(m, seq_len)) {
                skipped.push(format!("{m} at length {seq_len}"));
            }
            let mut runs: Vec<Vec<ClassifierRun>> = vec![Vec::new(); models.len()];
            for rep in 0..cfg.repeats {
                let rep_seed = seed::derive(point_seed, rep as u64);
                let split =
                    classification_split(cfg.per_class, seq_len, r, generation, seed::derive_tag(rep_seed, "data"))?;
                for (mi, &model) in models.iter().enumerate() {
                    let model_seed = seed::derive_tag(rep_seed, model.name());
                    let run = train_classifier(
                        model,
                        &split.train,
                        &split.test,
                        cfg.schedule(model),
                        cfg.n_estimators,
                        model_seed,
                    )?;
                    progress(&format!(
                        "{generation} r={r} len={seq_len} {model} repeat {rep}: accuracy {:.4}",
                        run.best_accuracy
                    ));
                    raw.push(vec![
                        generation.to_string(),
                        r.to_string(),
                        seq_len.to_string(),
                        model.to_string(),
                        rep.to_string(),
                        model_seed.to_string(),
                        fmt_f(run.best_accuracy),
                    ]);
                    runs[mi].push(run);
                }
            }
            for (model, runs) in models.into_iter().zip(runs) {
                let accuracies: Vec<f64> = runs.iter().map(|r| r.best_accuracy).collect();
                let (mean, std) = mean_std(&accuracies);
                summary.push(vec![
                    generation.to_string(),
                    r.to_string(),
                    seq_len.to_string(),
                    model.to_string(),
                    fmt_f(mean),
                    fmt_f(std),
                ]);
                points.push(SweepPoint { generation, r, seq_len, model, accuracies, mean, std, runs });
            }
        }
    }
    skipped.dedup();
    RunReport::new("classify-sweep", master, cfg, &SweepMetrics { points, skipped }, vec![raw, summary])
}

/// Single best-setting run per generation, reported as a confusion matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfusionConfig {
    pub generations: Vec<Generation>,
    pub r: f64,
    pub seq_len: usize,
    pub per_class: usize,
    pub model: ModelKind,
    pub schedule: Schedule,
    pub n_estimators: usize,
}

impl ConfusionConfig {
    pub fn preset(scale: Scale, factor: usize) -> Self {
        Self {
            generations: vec![Generation::D1, Generation::D2],
            r: 1.0,
            seq_len: 30,
            per_class: PAPER_PER_CLASS / factor,
            model: ModelKind::Rnn,
            schedule: match scale {
                Scale::Paper => paper_schedule(800),
                Scale::Desk => desk_schedule(200),
            },
            n_estimators: DEFAULT_ESTIMATORS,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfusionResult {
    pub generation: Generation,
    pub accuracy: f64,
    pub best_epoch: Option<usize>,
    pub classes: Vec<String>,
    /// `confusion[true][predicted]`.
    pub confusion: Vec<Vec<usize>>,
    /// Fraction of each true class predicted as something else.
    pub off_diagonal: Vec<f64>,
    /// Largest off-diagonal cell as (true, predicted).
    pub dominant_confusion: Option<(String, String)>,
    pub seed: u64,
}

pub fn confusion_summary(confusion: &[Vec<usize>]) -> (Vec<f64>, Option<(usize, usize)>) {
    let off = confusion
        .iter()
        .enumerate()
        .map(|(i, row)| {
            let total: usize = row.iter().sum();
            if total == 0 {
                0.0
            } else {
                (total - row[i]) as f64 / total as f64
            }
        })
        .collect();
    let mut dominant = None;
    let mut most = 0;
    for (i, row) in confusion.iter().enumerate() {
        for (j, &n) in row.iter().enumerate() {
            if i != j && n > most {
                most = n;
                dominant = Some((i, j));
            }
        }
    }
    (off, dominant)
}

pub fn run_confusion(cfg: &ConfusionConfig, master: u64, progress: &mut dyn FnMut(&str)) -> Result<RunReport> {
    if cfg.generations.is_empty() {
        return Err(Error::invalid("no generations given"));
    }
    let names: Vec<String> = ChannelClass::ALL.iter().map(|c| c.short_name().to_string()).collect();
    let mut results = Vec::new();
    let mut tables = Vec::new();
    for &generation in &cfg.generations {
        let run_seed = seed::derive(master, gen_index(generation));
        let split =
            classification_split(cfg.per_class, cfg.seq_len, cfg.r, generation, seed::derive_tag(run_seed, "data"))?;
        let model_seed = seed::derive_tag(run_seed, cfg.model.name());
        let run = train_classifier(cfg.model, &split.train, &split.test, &cfg.schedule, cfg.n_estimators, model_seed)?;
        progress(&format!("{generation} {}: accuracy {:.4}", cfg.model, run.best_accuracy));
        let (off_diagonal, dominant) = confusion_summary(&run.confusion);
        let mut header = vec!["true\\predicted"];
        header.extend(names.iter().map(String::as_str));
        let mut table = CsvTable::new(&format!("confusion_{generation}"), &header);
        for (name, row) in names.iter().zip(&run.confusion) {
            let mut cells = vec![name.clone()];
            cells.extend(row.iter().map(|n| n.to_string()));
            table.push(cells);
        }
        tables.push(table);
        results.push(ConfusionResult {
            generation,
            accuracy: run.best_accuracy,
            best_epoch: run.best_epoch,
            classes: names.clone(),
            confusion: run.confusion,
            off_diagonal,
            dominant_confusion: dominant.map(|(i, j)| (names[i].clone(), names[j].clone())),
            seed: model_seed,
        });
    }
    RunReport::new("confusion", master, cfg, &results, tables)
}

/// Binary low/high memory classification of Markovian channels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemoryBinningExperiment {
    pub thresholds: Vec<f64>,
    pub count: usize,
    pub seq_len: usize,
    pub r: f64,
    pub schedule: Schedule,
    pub repeats: usize,
}

impl MemoryBinningExperiment {
    pub fn preset(scale: Scale, _factor: usize) -> Self {
        Self {
            thresholds: vec![0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 0.96],
            count: 8000,
            seq_len: 10,
            r: 1.0,
            schedule: match scale {
                Scale::Paper => paper_schedule(800),
                Scale::Desk => desk_schedule(100),
            },
            repeats: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinningPoint {
    pub threshold: f64,
    pub accuracies: Vec<f64>,
    pub mean: f64,
    /// Share of test samples in the high-memory bin.
    pub high_share: f64,
    pub seeds: Vec<u64>,
}

pub fn run_memory_binning(
    cfg: &MemoryBinningExperiment,
    master: u64,
    progress: &mut dyn FnMut(&str),
) -> Result<RunReport> {
    if cfg.thresholds.is_empty() || cfg.repeats == 0 {
        return Err(Error::invalid("need at least one threshold and one repeat"));
    }
    let mut points = Vec::new();
    let mut table = CsvTable::new("binning", &["threshold", "repeat", "seed", "accuracy"]);
    for (ci, &c) in cfg.thresholds.iter().enumerate() {
        let mut accuracies = Vec::new();
        let mut seeds = Vec::new();
        let mut high = 0.0;
        for rep in 0..cfg.repeats {
            let rep_seed = seed::derive(seed::derive(master, ci as u64), rep as u64);
            let data_seed = seed::derive_tag(rep_seed, "data");
            let ds = dataset::build_memory_binning(&MemoryBinningConfig {
                count: cfg.count,
                threshold: c,
                seq_len: cfg.seq_len,
                r: cfg.r,
                seed: data_seed,
            })?;
            let split = dataset::split(&ds, SPLIT_RATIO, seed::derive_tag(data_seed, "split"))?;
            high += split.test.class_counts()[1] as f64 / split.test.len() as f64;
            let spec = arch::lstm_classifier(cfg.seq_len, 2);
            let model_seed = seed::derive_tag(rep_seed, "rnn");
            let run =
                train_classifier_spec(&spec, ModelKind::Rnn, &split.train, &split.test, &cfg.schedule, model_seed)?;
            progress(&format!("c={c} repeat {rep}: accuracy {:.4}", run.best_accuracy));
            table.push(vec![c.to_string(), rep.to_string(), model_seed.to_string(), fmt_f(run.best_accuracy)]);
            accuracies.push(run.best_accuracy);
            seeds.push(model_seed);
        }
        let (mean, _) = mean_std(&accuracies);
        points.push(BinningPoint { threshold: c, accuracies, mean, high_share: high / cfg.repeats as f64, seeds });
    }
    RunReport::new("memory-binning", master, cfg, &points, vec![table])
}

/// LSTM classifier with all hidden widths scaled to parameter budgets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComplexityConfig {
    pub targets: Vec<usize>,
    pub tolerance: f64,
    pub generation: Generation,
    pub seq_len: usize,
    pub r: f64,
    pub per_class: usize,
    pub schedule: Schedule,
    pub repeats: usize,
}

impl ComplexityConfig {
    pub fn preset(scale: Scale, factor: usize) -> Self {
        Self {
            targets: vec![1_000, 10_000, 30_000, 100_000, 300_000],
            tolerance: 0.1,
            generation: Generation::D2,
            seq_len: 10,
            r: 1.0,
            per_class: PAPER_PER_CLASS / factor,
            schedule: match scale {
                Scale::Paper => paper_schedule(800),
                Scale::Desk => desk_schedule(200),
            },
            repeats: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComplexityTier {
    pub target: usize,
    pub param_count: usize,
    pub width_factor: f64,
    pub accuracies: Vec<f64>,
    pub mean: f64,
    pub runs: Vec<ClassifierRun>,
}

pub fn run_complexity_sweep(cfg: &ComplexityConfig, master: u64, progress: &mut dyn FnMut(&str)) -> Result<RunReport> {
    if cfg.targets.is_empty() || cfg.repeats == 0 {
        return Err(Error::invalid("need at least one target and one repeat"));
    }
    let base = arch::lstm_classifier(cfg.seq_len, 5);
    let specs =
        cfg.targets.iter().map(|&t| arch::scale_to_budget(&base, t, cfg.tolerance)).collect::<Result<Vec<_>>>()?;
    let mut runs: Vec<Vec<ClassifierRun>> = vec![Vec::new(); specs.len()];
    let mut table = CsvTable::new("complexity", &["target", "param_count", "repeat", "seed", "accuracy"]);
    for rep in 0..cfg.repeats {
        // All tiers of one repeat share the data so only the model differs.
        let rep_seed = seed::derive(master, rep as u64);
        let split = classification_split(
            cfg.per_class,
            cfg.seq_len,
            cfg.r,
            cfg.generation,
            seed::derive_tag(rep_seed, "data"),
        )?;
        for (ti, (spec, _)) in specs.iter().enumerate() {
            let model_seed = seed::derive(seed::derive_tag(rep_seed, "model"), ti as u64);
            let run =
                train_classifier_spec(spec, ModelKind::Rnn, &split.train, &split.test, &cfg.schedule, model_seed)?;
            let n = run.param_count.unwrap_or(0);
            progress(&format!("{} params, repeat {rep}: accuracy {:.4}", n, run.best_accuracy));
            table.push(vec![
                cfg.targets[ti].to_string(),
                n.to_string(),
                rep.to_string(),
                model_seed.to_string(),
                fmt_f(run.best_accuracy),
            ]);
            runs[ti].push(run);
        }
    }
    let tiers: Vec<ComplexityTier> = cfg
        .targets
        .iter()
        .zip(specs)
        .zip(runs)
        .map(|((&target, (spec, factor)), runs)| {
            let accuracies: Vec<f64> = runs.iter().map(|r| r.best_accuracy).collect();
            ComplexityTier {
                target,
                param_count: crate::nn::param_count(&spec).expect("validated"),
                width_factor: factor,
                mean: mean_std(&accuracies).0,
                accuracies,
                runs,
            }
        })
        .collect();
    RunReport::new("complexity", master, cfg, &tiers, vec![table])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sweep_points_share_the_corner_once() {
        let cfg = ClassifySweepConfig::preset(Scale::Desk, 5);
        let pts = cfg.points();
        assert_eq!(pts.len(), 5 + 3);
        assert_eq!(pts.iter().filter(|p| **p == (1.0, 30)).count(), 1);
    }

    #[test]
    fn confusion_summary_finds_largest_off_diagonal() {
        let m = vec![vec![5, 1, 0], vec![3, 7, 0], vec![0, 0, 10]];
        let (off, dom) = confusion_summary(&m);
        assert_eq!(dom, Some((1, 0)));
        assert!((off[0] - 1.0 / 6.0).abs() < 1e-15);
        assert_eq!(off[2], 0.0);
    }
}
