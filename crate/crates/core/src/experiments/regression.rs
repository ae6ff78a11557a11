use serde::{Deserialize, Serialize};

use super::{fmt_f, mean_std, CsvTable, RunReport, Scale, Schedule, SPLIT_RATIO};
use crate::dataset::{
    self, Dataset, DeterministicForecastConfig, DeterministicForm, MarkovForecastConfig, RegressionConfig,
    DETERMINISTIC_HORIZON, MARKOV_FORECAST_HORIZON, MARKOV_FORECAST_INPUTS, REGRESSION_LEN,
};
use crate::error::{Error, Result};
use crate::nn::{self, arch, inputs_tensor, Network, NetworkSpec, TrainedModel};
use crate::seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trace {
    pub sample: usize,
    pub target: Vec<f64>,
    pub predicted: Vec<f64>,
}

fn traces(net: &Network, ds: &Dataset, n: usize) -> Result<Vec<Trace>> {
    let picks: Vec<usize> = (0..n.min(ds.len())).collect();
    let sub = ds.with_samples(picks.iter().map(|&i| ds.samples[i].clone()).collect());
    if sub.is_empty() {
        return Ok(Vec::new());
    }
    let out = net.predict(&inputs_tensor(&sub, &net.spec().input_shape)?)?;
    Ok(picks
        .into_iter()
        .enumerate()
        .map(|(row, sample)| Trace {
            sample,
            target: match &ds.samples[sample].target {
                dataset::Target::Values(v) => v.clone(),
                dataset::Target::Class(c) => vec![*c as f64],
            },
            predicted: out.row(row).to_vec(),
        })
        .collect())
}

fn history_table(name: &str, model: &TrainedModel) -> CsvTable {
    let mut t = CsvTable::new(name, &["epoch", "train_loss", "test_loss"]);
    for h in &model.history {
        t.push(vec![h.epoch.to_string(), fmt_f(h.train_loss), h.test_loss.map(fmt_f).unwrap_or_default()]);
    }
    t
}

fn trace_table(name: &str, traces: &[Trace]) -> CsvTable {
    let mut t = CsvTable::new(name, &["sample", "step", "target", "predicted"]);
    for tr in traces {
        for (k, (a, b)) in tr.target.iter().zip(&tr.predicted).enumerate() {
            t.push(vec![tr.sample.to_string(), k.to_string(), fmt_f(*a), fmt_f(*b)]);
        }
    }
    t
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionExperiment {
    pub count: usize,
    pub r: f64,
    pub schedule: Schedule,
    /// Extra parameter budgets for the width-scaled regression network.
    pub tiers: Vec<usize>,
    pub tier_tolerance: f64,
    pub traces: usize,
}

impl RegressionExperiment {
    /// The regression workload is already small, so both scales share it.
    pub fn preset(_scale: Scale, _factor: usize) -> Self {
        Self {
            count: 20_000,
            r: 1.0,
            schedule: Schedule { epochs: 200, batch_size: 1000, learning_rate: 1e-3 },
            tiers: vec![1_000, 2_000, 10_000],
            tier_tolerance: 0.1,
            traces: 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionTier {
    pub target: usize,
    pub param_count: usize,
    pub final_train_mse: f64,
    pub final_test_mse: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct RegressionMetrics {
    param_count: usize,
    final_train_mse: f64,
    final_test_mse: f64,
    best_epoch: Option<usize>,
    best_test_mse: Option<f64>,
    seed: u64,
    traces: Vec<Trace>,
    tiers: Vec<RegressionTier>,
}

fn fit_mse(
    spec: &NetworkSpec,
    split: &dataset::SplitPair,
    schedule: &Schedule,
    seed: u64,
) -> Result<(TrainedModel, f64, f64)> {
    let model = nn::train(spec, &split.train, Some(&split.test), &schedule.config(seed))?;
    let train = nn::evaluate_regression(&model.network, &split.train)?;
    let test = nn::evaluate_regression(&model.network, &split.test)?;
    Ok((model, train, test))
}

pub fn run_regression(cfg: &RegressionExperiment, master: u64, progress: &mut dyn FnMut(&str)) -> Result<RunReport> {
    let data_seed = seed::derive_tag(master, "data");
    let ds = dataset::build_regression(&RegressionConfig { count: cfg.count, r: cfg.r, seed: data_seed })?;
    let split = dataset::split(&ds, SPLIT_RATIO, seed::derive_tag(data_seed, "split"))?;
    let spec = arch::regression_net(REGRESSION_LEN);
    let model_seed = seed::derive_tag(master, "model");
    let (model, train_mse, test_mse) = fit_mse(&spec, &split, &cfg.schedule, model_seed)?;
    progress(&format!("regression: train mse {train_mse:.3e}, test mse {test_mse:.3e}"));
    let tr = traces(&model.network, &split.test, cfg.traces)?;
    let mut tiers = Vec::new();
    for (i, &target) in cfg.tiers.iter().enumerate() {
        let (tier_spec, _) = arch::scale_to_budget(&spec, target, cfg.tier_tolerance)?;
        let tier_seed = seed::derive(seed::derive_tag(master, "tier"), i as u64);
        let (m, a, b) = fit_mse(&tier_spec, &split, &cfg.schedule, tier_seed)?;
        progress(&format!("tier {target}: test mse {b:.3e}"));
        tiers.push(RegressionTier {
            target,
            param_count: m.network.param_count(),
            final_train_mse: a,
            final_test_mse: b,
            seed: tier_seed,
        });
    }
    let metrics = RegressionMetrics {
        param_count: model.network.param_count(),
        final_train_mse: train_mse,
        final_test_mse: test_mse,
        best_epoch: model.best.as_ref().map(|b| b.epoch),
        best_test_mse: model.best.as_ref().map(|b| b.score),
        seed: model_seed,
        traces: tr.clone(),
        tiers,
    };
    let tables = vec![history_table("regression_history", &model), trace_table("regression_traces", &tr)];
    RunReport::new("regression", master, cfg, &metrics, tables)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastMarkovConfig {
    pub mu_values: Vec<f64>,
    pub count: usize,
    pub r: f64,
    pub schedule: Schedule,
    pub repeats: usize,
}

impl ForecastMarkovConfig {
    pub fn preset(_scale: Scale, _factor: usize) -> Self {
        Self {
            mu_values: vec![0.2, 0.5, 0.8, 0.9],
            count: 1000,
            r: 1.0,
            schedule: Schedule { epochs: 500, batch_size: 100, learning_rate: 1e-3 },
            repeats: 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarkovPoint {
    pub mu: f64,
    pub test_mse: Vec<f64>,
    pub mean: f64,
    pub std: f64,
    pub seeds: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct MarkovMetrics {
    inputs: usize,
    outputs: usize,
    points: Vec<MarkovPoint>,
}

pub fn run_forecast_markovian(
    cfg: &ForecastMarkovConfig,
    master: u64,
    progress: &mut dyn FnMut(&str),
) -> Result<RunReport> {
    if cfg.mu_values.is_empty() || cfg.repeats == 0 {
        return Err(Error::invalid("need at least one mu and one repeat"));
    }
    let spec = arch::markov_forecast_net(MARKOV_FORECAST_INPUTS, MARKOV_FORECAST_HORIZON);
    let mut table = CsvTable::new("forecast_markov", &["mu", "repeat", "seed", "test_mse"]);
    let mut points = Vec::new();
    for (mi, &mu) in cfg.mu_values.iter().enumerate() {
        let mut mses = Vec::new();
        let mut seeds = Vec::new();
        for rep in 0..cfg.repeats {
            let rep_seed = seed::derive(seed::derive(master, mi as u64), rep as u64);
            let data_seed = seed::derive_tag(rep_seed, "data");
            let ds = dataset::build_forecast_markovian(&MarkovForecastConfig {
                count: cfg.count,
                mu,
                r: cfg.r,
                seed: data_seed,
            })?;
            let split = dataset::split(&ds, SPLIT_RATIO, seed::derive_tag(data_seed, "split"))?;
            let model_seed = seed::derive_tag(rep_seed, "model");
            let (_, _, test) = fit_mse(&spec, &split, &cfg.schedule, model_seed)?;
            progress(&format!("mu={mu} repeat {rep}: test mse {test:.3e}"));
            table.push(vec![mu.to_string(), rep.to_string(), model_seed.to_string(), fmt_f(test)]);
            mses.push(test);
            seeds.push(model_seed);
        }
        let (mean, std) = mean_std(&mses);
        points.push(MarkovPoint { mu, test_mse: mses, mean, std, seeds });
    }
    let metrics = MarkovMetrics { inputs: MARKOV_FORECAST_INPUTS, outputs: MARKOV_FORECAST_HORIZON, points };
    RunReport::new("forecast-markov", master, cfg, &metrics, vec![table])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastDetConfig {
    pub forms: Vec<DeterministicForm>,
    pub train_count: usize,
    pub test_count: usize,
    pub r: f64,
    pub schedule: Schedule,
    pub traces: usize,
}

impl ForecastDetConfig {
    pub fn preset(_scale: Scale, factor: usize) -> Self {
        Self {
            forms: vec![DeterministicForm::Cos, DeterministicForm::Exp],
            train_count: 200_000 / factor,
            test_count: 10_000 / factor,
            r: 1.0,
            schedule: Schedule { epochs: 500, batch_size: 1000, learning_rate: 1e-3 },
            traces: 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetResult {
    pub form: DeterministicForm,
    pub window: usize,
    pub horizon: usize,
    pub final_train_mse: f64,
    pub final_test_mse: f64,
    pub seed: u64,
    pub traces: Vec<Trace>,
}

pub fn run_forecast_deterministic(
    cfg: &ForecastDetConfig,
    master: u64,
    progress: &mut dyn FnMut(&str),
) -> Result<RunReport> {
    if cfg.forms.is_empty() {
        return Err(Error::invalid("no forms given"));
    }
    let mut results = Vec::new();
    let mut tables = Vec::new();
    for &form in &cfg.forms {
        let form_seed = seed::derive_tag(master, &form.to_string());
        let window = form.default_window();
        let build = |count, tag| {
            dataset::build_forecast_deterministic(&DeterministicForecastConfig {
                count,
                form,
                window,
                r: cfg.r,
                seed: seed::derive_tag(form_seed, tag),
            })
        };
        let split =
            dataset::SplitPair { train: build(cfg.train_count, "train")?, test: build(cfg.test_count, "test")? };
        let spec = arch::deterministic_forecast_net(window, DETERMINISTIC_HORIZON);
        let model_seed = seed::derive_tag(form_seed, "model");
        let (model, train, test) = fit_mse(&spec, &split, &cfg.schedule, model_seed)?;
        progress(&format!("{form}: test mse {test:.3e}"));
        let tr = traces(&model.network, &split.test, cfg.traces)?;
        tables.push(history_table(&format!("forecast_{form}_history"), &model));
        tables.push(trace_table(&format!("forecast_{form}_traces"), &tr));
        results.push(DetResult {
            form,
            window,
            horizon: DETERMINISTIC_HORIZON,
            final_train_mse: train,
            final_test_mse: test,
            seed: model_seed,
            traces: tr,
        });
    }
    RunReport::new("forecast-det", master, cfg, &results, tables)
}
