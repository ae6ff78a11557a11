//! `chanlearn` command line: dataset generation, training, evaluation and
//! experiment reproduction.
//!
//! Every subcommand accepts `--config FILE` with the same keys as its flags
//! (snake_case); flags override file values. Each output directory receives a
//! `resolved_config.json` that reruns the command when passed back as
//! `--config`. Exit codes: 0 success, 1 runtime error, 2 usage error.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::dataset::{self, Dataset, DeterministicForm, Task};
use crate::error::Error;
use crate::eta_process::Generation;
use crate::experiments::{ExperimentConfig, ModelKind, Scale, DESK_FACTOR, EXPERIMENT_NAMES, SPLIT_RATIO};
use crate::forest::{self, Forest, DEFAULT_ESTIMATORS};
use crate::nn::{self, arch, serialize, NetworkSpec, TrainConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_RUNTIME: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

pub const RESOLVED_CONFIG: &str = "resolved_config.json";
pub const FOREST_FILE: &str = "forest.json";

#[derive(Debug)]
enum CliError {
    Usage(String),
    Runtime(Error),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Runtime(e)
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

fn usage<T>(msg: impl Into<String>) -> CliResult<T> {
    Err(CliError::Usage(msg.into()))
}

#[derive(Parser, Debug)]
#[command(name = "chanlearn", version, about = "Lossy Gaussian channel simulator and learning toolkit")]
struct Cli {
    /// Worker cap. Computation is single-threaded, so results never depend on it.
    #[arg(long, global = true, default_value_t = 1)]
    threads: usize,
    /// Suppress progress messages on stderr.
    #[arg(long, short, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Build a seeded dataset file.
    Generate(GenerateArgs),
    /// Train a model on a dataset file.
    Train(TrainArgs),
    /// Evaluate a trained model on a dataset file.
    Eval(EvalArgs),
    /// Reproduce one of the experiments.
    Experiment(ExperimentArgs),
}

#[derive(Args, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GenerateArgs {
    /// JSON file with default values for any of the flags below.
    #[arg(long)]
    #[serde(skip)]
    config: Option<PathBuf>,
    /// classification, regression, forecast-markov, forecast-det or memory-binning.
    #[arg(long)]
    task: Option<String>,
    #[arg(long)]
    per_class: Option<usize>,
    #[arg(long)]
    count: Option<usize>,
    #[arg(long = "len")]
    len: Option<usize>,
    #[arg(long)]
    r: Option<f64>,
    /// Initial-distribution procedure: d1 or d2.
    #[arg(long = "gen")]
    gen: Option<String>,
    #[arg(long)]
    mu: Option<f64>,
    /// Deterministic law: cos or exp.
    #[arg(long)]
    form: Option<String>,
    #[arg(long)]
    window: Option<usize>,
    #[arg(long)]
    threshold: Option<f64>,
    /// Master seed; falls back to CHANLEARN_SEED, then 0.
    #[arg(long, env = "CHANLEARN_SEED")]
    seed: Option<u64>,
    /// Output directory; receives dataset.chl.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TrainArgs {
    #[arg(long)]
    #[serde(skip)]
    config: Option<PathBuf>,
    /// Training dataset (.chl).
    #[arg(long)]
    data: Option<PathBuf>,
    /// Held-out dataset; when absent the training file is split.
    #[arg(long)]
    test_data: Option<PathBuf>,
    /// Training share when splitting.
    #[arg(long)]
    split: Option<f64>,
    /// ffnn, rnn, cnn1d or forest.
    #[arg(long)]
    model: Option<String>,
    /// JSON network spec used instead of a named model.
    #[arg(long)]
    spec: Option<PathBuf>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    n_estimators: Option<usize>,
    #[arg(long, env = "CHANLEARN_SEED")]
    seed: Option<u64>,
    /// Output model directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct EvalArgs {
    #[arg(long)]
    #[serde(skip)]
    config: Option<PathBuf>,
    /// Model directory written by `train`.
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long)]
    data: Option<PathBuf>,
    /// Optional directory for metrics.json.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ExperimentArgs {
    /// One of: classify-sweep, confusion, memory-binning, complexity,
    /// regression, forecast-markov, forecast-det.
    name: Option<String>,
    /// A resolved_config.json from an earlier run, or a bare experiment config.
    #[arg(long)]
    #[serde(skip)]
    config: Option<PathBuf>,
    /// desk or paper.
    #[arg(long)]
    scale: Option<String>,
    /// Divisor for dataset sizes at desk scale.
    #[arg(long)]
    factor: Option<usize>,
    #[arg(long, env = "CHANLEARN_SEED")]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn read_json<T: DeserializeOwned>(path: &Path) -> CliResult<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("--config {}: {e}", path.display())))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let text = serde_json::to_string_pretty(value).map_err(Error::from)? + "\n";
    fs::write(path, text).map_err(|e| Error::io(path, e).into())
}

fn create_dir(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e).into())
}

/// Flag values win over file values key by key.
fn merge_with_file<T: Serialize + DeserializeOwned>(flags: T, file: Option<&Path>) -> CliResult<T> {
    let Some(path) = file else { return Ok(flags) };
    let mut base: Value = read_json(path)?;
    // Accept a resolved_config.json, which wraps the flags in "args".
    if base.get("command").is_some() {
        base = base.get("args").cloned().unwrap_or(Value::Null);
    }
    let Value::Object(base_map) = &mut base else {
        return usage(format!("--config {}: expected a JSON object", path.display()));
    };
    if let Value::Object(over) = serde_json::to_value(&flags).map_err(Error::from)? {
        for (k, v) in over {
            if !v.is_null() {
                base_map.insert(k, v);
            }
        }
    }
    serde_json::from_value(base).map_err(|e| CliError::Usage(format!("--config {}: {e}", path.display())))
}

fn required<T>(v: Option<T>, flag: &str) -> CliResult<T> {
    v.ok_or_else(|| CliError::Usage(format!("missing required flag --{flag}")))
}

fn reject(present: bool, flag: &str, context: &str) -> CliResult<()> {
    if present {
        return usage(format!("--{flag} is not used by {context}"));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum GenTask {
    Classification,
    Regression,
    ForecastMarkov,
    ForecastDet,
    MemoryBinning,
}

impl GenTask {
    fn parse(s: &str) -> CliResult<Self> {
        Ok(match s {
            "classification" => GenTask::Classification,
            "regression" => GenTask::Regression,
            "forecast-markov" => GenTask::ForecastMarkov,
            "forecast-det" => GenTask::ForecastDet,
            "memory-binning" => GenTask::MemoryBinning,
            _ => {
                return usage(format!(
                "--task {s:?} is not one of classification, regression, forecast-markov, forecast-det, memory-binning"
            ))
            }
        })
    }
}

fn parse_flag<T: std::str::FromStr<Err = Error>>(value: Option<&String>, flag: &str) -> CliResult<Option<T>> {
    value.map(|v| v.parse::<T>().map_err(|e| CliError::Usage(format!("--{flag}: {e}")))).transpose()
}

/// Fills in defaults and rejects flags the task does not use.
fn resolve_generate(mut a: GenerateArgs) -> CliResult<(GenerateArgs, Dataset)> {
    let task = GenTask::parse(&required(a.task.clone(), "task")?)?;
    let seed = a.seed.unwrap_or(0);
    a.seed = Some(seed);
    let r = *a.r.get_or_insert(1.0);
    let gen: Option<Generation> = parse_flag(a.gen.as_ref(), "gen")?;
    let form: Option<DeterministicForm> = parse_flag(a.form.as_ref(), "form")?;
    let name = a.task.clone().unwrap();
    let ctx = format!("task {name}");
    let ds = match task {
        GenTask::Classification => {
            for (present, flag) in [
                (a.count.is_some(), "count"),
                (a.mu.is_some(), "mu"),
                (a.form.is_some(), "form"),
                (a.window.is_some(), "window"),
                (a.threshold.is_some(), "threshold"),
            ] {
                reject(present, flag, &ctx)?;
            }
            let generation = gen.unwrap_or(Generation::D1);
            a.gen = Some(generation.to_string());
            dataset::build_classification(&dataset::ClassificationConfig {
                per_class: *a.per_class.get_or_insert(100),
                seq_len: *a.len.get_or_insert(10),
                r,
                generation,
                seed,
            })?
        }
        GenTask::Regression => {
            for (present, flag) in [
                (a.per_class.is_some(), "per-class"),
                (a.len.is_some(), "len"),
                (a.gen.is_some(), "gen"),
                (a.mu.is_some(), "mu"),
                (a.form.is_some(), "form"),
                (a.window.is_some(), "window"),
                (a.threshold.is_some(), "threshold"),
            ] {
                reject(present, flag, &ctx)?;
            }
            dataset::build_regression(&dataset::RegressionConfig { count: *a.count.get_or_insert(1000), r, seed })?
        }
        GenTask::ForecastMarkov => {
            for (present, flag) in [
                (a.per_class.is_some(), "per-class"),
                (a.len.is_some(), "len"),
                (a.gen.is_some(), "gen"),
                (a.form.is_some(), "form"),
                (a.window.is_some(), "window"),
                (a.threshold.is_some(), "threshold"),
            ] {
                reject(present, flag, &ctx)?;
            }
            dataset::build_forecast_markovian(&dataset::MarkovForecastConfig {
                count: *a.count.get_or_insert(1000),
                mu: required(a.mu, "mu")?,
                r,
                seed,
            })?
        }
        GenTask::ForecastDet => {
            for (present, flag) in [
                (a.per_class.is_some(), "per-class"),
                (a.len.is_some(), "len"),
                (a.gen.is_some(), "gen"),
                (a.mu.is_some(), "mu"),
                (a.threshold.is_some(), "threshold"),
            ] {
                reject(present, flag, &ctx)?;
            }
            let form = form.unwrap_or(DeterministicForm::Cos);
            a.form = Some(form.to_string());
            dataset::build_forecast_deterministic(&dataset::DeterministicForecastConfig {
                count: *a.count.get_or_insert(1000),
                form,
                window: *a.window.get_or_insert(form.default_window()),
                r,
                seed,
            })?
        }
        GenTask::MemoryBinning => {
            for (present, flag) in [
                (a.per_class.is_some(), "per-class"),
                (a.gen.is_some(), "gen"),
                (a.mu.is_some(), "mu"),
                (a.form.is_some(), "form"),
                (a.window.is_some(), "window"),
            ] {
                reject(present, flag, &ctx)?;
            }
            dataset::build_memory_binning(&dataset::MemoryBinningConfig {
                count: *a.count.get_or_insert(8000),
                threshold: required(a.threshold, "threshold")?,
                seq_len: *a.len.get_or_insert(10),
                r,
                seed,
            })?
        }
    };
    Ok((a, ds))
}

fn cmd_generate(args: GenerateArgs) -> CliResult<()> {
    let file = args.config.clone();
    let args = merge_with_file(args, file.as_deref())?;
    let out = required(args.out.clone(), "out")?;
    let (resolved, ds) = match resolve_generate(args) {
        Err(CliError::Runtime(Error::InvalidArgument(m))) => return usage(m),
        other => other?,
    };
    create_dir(&out)?;
    dataset::save(&ds, &out.join("dataset.chl"))?;
    write_json(&out.join(RESOLVED_CONFIG), &json!({ "command": "generate", "args": resolved }))
}

/// Network spec for a named model on a dataset of the given kind.
fn named_spec(model: ModelKind, ds: &Dataset) -> CliResult<NetworkSpec> {
    if ds.task == Task::Classification {
        let kind = model.net().expect("forest handled by caller");
        let spec = arch::classifier(kind, ds.seq_len, ds.n_classes);
        if let Err(e) = spec.shapes() {
            return Err(CliError::Runtime(Error::TaskMismatch(format!(
                "{model} cannot take length {}: {e}",
                ds.seq_len
            ))));
        }
        return Ok(spec);
    }
    if model != ModelKind::Ffnn {
        return Err(CliError::Runtime(Error::TaskMismatch(format!(
            "{model} is only defined for classification; use ffnn or --spec for {} data",
            ds.task
        ))));
    }
    Ok(match ds.builder.as_str() {
        "forecast-markov" => arch::markov_forecast_net(ds.seq_len, ds.target_width),
        "forecast-det" => arch::deterministic_forecast_net(ds.seq_len, ds.target_width),
        _ => arch::regression_net(ds.seq_len),
    })
}

fn history_csv(history: &[nn::EpochRecord]) -> String {
    let opt = |v: Option<f64>| v.map(|x| format!("{x:.17e}")).unwrap_or_default();
    let mut out = String::from("epoch,train_loss,train_accuracy,train_eval_loss,test_loss,test_accuracy\n");
    for h in history {
        out.push_str(&format!(
            "{},{:.17e},{},{},{},{}\n",
            h.epoch,
            h.train_loss,
            opt(h.train_accuracy),
            opt(h.train_eval_loss),
            opt(h.test_loss),
            opt(h.test_accuracy)
        ));
    }
    out
}

fn cmd_train(args: TrainArgs, log: &mut dyn FnMut(&str)) -> CliResult<()> {
    let file = args.config.clone();
    let mut a = merge_with_file(args, file.as_deref())?;
    let data = required(a.data.clone(), "data")?;
    let out = required(a.out.clone(), "out")?;
    let model: Option<ModelKind> = parse_flag(a.model.as_ref(), "model")?;
    if model.is_some() == a.spec.is_some() {
        return usage("give exactly one of --model and --spec");
    }
    let seed = *a.seed.get_or_insert(0);
    let split_ratio = *a.split.get_or_insert(SPLIT_RATIO);
    let ds = dataset::load(&data)?;
    let (train, test) = match &a.test_data {
        Some(p) => {
            reject(a.split.is_some() && split_ratio != SPLIT_RATIO, "split", "runs with --test-data")?;
            (ds, dataset::load(p)?)
        }
        None => {
            let s = dataset::split(&ds, split_ratio, crate::seed::derive_tag(seed, "split"))?;
            (s.train, s.test)
        }
    };
    create_dir(&out)?;
    if model == Some(ModelKind::Forest) {
        for (present, flag) in
            [(a.epochs.is_some(), "epochs"), (a.batch_size.is_some(), "batch-size"), (a.lr.is_some(), "lr")]
        {
            reject(present, flag, "the forest model")?;
        }
        if train.task != Task::Classification {
            return Err(Error::TaskMismatch("forest supports classification only".into()).into());
        }
        let n = *a.n_estimators.get_or_insert(DEFAULT_ESTIMATORS);
        let f = forest::fit(&train, n, seed)?;
        let m = f.evaluate(&test)?;
        log(&format!("forest: test accuracy {:.4}", m.accuracy));
        write_json(&out.join(FOREST_FILE), &f)?;
        write_json(&out.join("metrics.json"), &m)?;
    } else {
        reject(a.n_estimators.is_some(), "n-estimators", "network models")?;
        let spec = match (&a.spec, model) {
            (Some(p), _) => read_json::<NetworkSpec>(p)?,
            (None, Some(m)) => named_spec(m, &train)?,
            _ => unreachable!(),
        };
        let cfg = TrainConfig {
            epochs: *a.epochs.get_or_insert(50),
            batch_size: *a.batch_size.get_or_insert(100),
            learning_rate: *a.lr.get_or_insert(1e-3),
            seed,
            eval_train: true,
        };
        let trained = nn::train(&spec, &train, Some(&test), &cfg)?;
        if let Some(last) = trained.history.last() {
            log(&format!(
                "epoch {}: train loss {:.4e}, test loss {:.4e}",
                last.epoch,
                last.train_loss,
                last.test_loss.unwrap_or(f64::NAN)
            ));
        }
        let best = trained.best.as_ref().map(|b| b.epoch);
        serialize::save(&out, &trained.network, Some(&cfg), best, &trained.history)?;
        let path = out.join("history.csv");
        fs::write(&path, history_csv(&trained.history)).map_err(|e| Error::io(&path, e))?;
    }
    write_json(&out.join(RESOLVED_CONFIG), &json!({ "command": "train", "args": a }))
}

/// A loaded model directory.
enum LoadedModel {
    Net(nn::Network),
    Forest(Forest),
}

fn load_model(dir: &Path) -> CliResult<LoadedModel> {
    let forest_path = dir.join(FOREST_FILE);
    if forest_path.exists() {
        return Ok(LoadedModel::Forest(read_json(&forest_path)?));
    }
    Ok(LoadedModel::Net(serialize::load(dir)?.0))
}

fn cmd_eval(args: EvalArgs, stdout: &mut dyn Write) -> CliResult<()> {
    let file = args.config.clone();
    let a = merge_with_file(args, file.as_deref())?;
    let model_dir = required(a.model.clone(), "model")?;
    let data = required(a.data.clone(), "data")?;
    let model = load_model(&model_dir)?;
    let ds = dataset::load(&data)?;
    let metrics = match (&model, ds.task) {
        (LoadedModel::Forest(f), _) => serde_json::to_value(f.evaluate(&ds)?),
        (LoadedModel::Net(n), Task::Classification) => serde_json::to_value(nn::evaluate_classification(n, &ds)?),
        (LoadedModel::Net(n), _) => Ok(json!({ "mse": nn::evaluate_regression(n, &ds)? })),
    }
    .map_err(Error::from)?;
    let text = serde_json::to_string_pretty(&metrics).map_err(Error::from)?;
    writeln!(stdout, "{text}").map_err(|e| Error::io("<stdout>", e))?;
    if let Some(out) = &a.out {
        create_dir(out)?;
        write_json(&out.join("metrics.json"), &metrics)?;
        write_json(&out.join(RESOLVED_CONFIG), &json!({ "command": "eval", "args": a }))?;
    }
    Ok(())
}

/// Resolved form of an experiment run, written as `resolved_config.json`.
#[derive(Debug, Serialize, Deserialize)]
struct ResolvedExperiment {
    command: String,
    seed: u64,
    scale: Option<Scale>,
    factor: Option<usize>,
    config: ExperimentConfig,
}

fn cmd_experiment(a: ExperimentArgs, log: &mut dyn FnMut(&str)) -> CliResult<()> {
    let out = required(a.out.clone(), "out")?;
    let scale: Option<Scale> = parse_flag(a.scale.as_ref(), "scale")?;
    let (config, seed, scale, factor) = match &a.config {
        Some(path) => {
            for (present, flag) in [(a.scale.is_some(), "scale"), (a.factor.is_some(), "factor")] {
                reject(present, flag, "runs from --config")?;
            }
            let v: Value = read_json(path)?;
            let parsed = if v.get("config").is_some() {
                serde_json::from_value::<ResolvedExperiment>(v).map(|r| (r.config, Some(r.seed), r.scale, r.factor))
            } else {
                serde_json::from_value::<ExperimentConfig>(v).map(|c| (c, None, None, None))
            };
            let (config, file_seed, scale, factor) =
                parsed.map_err(|e| CliError::Usage(format!("--config {}: {e}", path.display())))?;
            if let Some(name) = &a.name {
                if name != config.name() {
                    return usage(format!("experiment {name:?} does not match config for {:?}", config.name()));
                }
            }
            (config, a.seed.or(file_seed).unwrap_or(0), scale, factor)
        }
        None => {
            let name = required(a.name.clone(), "name (positional)")?;
            let scale = scale.unwrap_or(Scale::Desk);
            let factor = a.factor.unwrap_or(DESK_FACTOR);
            let config = match ExperimentConfig::preset(&name, scale, factor) {
                Ok(c) => c,
                Err(Error::InvalidArgument(m)) => return usage(m),
                Err(e) => return Err(e.into()),
            };
            (config, a.seed.unwrap_or(0), Some(scale), Some(factor))
        }
    };
    create_dir(&out)?;
    let resolved = ResolvedExperiment { command: "experiment".into(), seed, scale, factor, config };
    write_json(&out.join(RESOLVED_CONFIG), &resolved)?;
    let start = Instant::now();
    let report = resolved.config.run(seed, log)?;
    report.write(&out)?;
    write_json(&out.join("timing.json"), &json!({ "wall_seconds": start.elapsed().as_secs_f64() }))
}

/// Runs the CLI with explicit arguments and output streams; returns the exit
/// code.
pub fn run_with<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let text = e.render().to_string();
            let _ = if code == EXIT_OK { write!(stdout, "{text}") } else { write!(stderr, "{text}") };
            return code;
        }
    };
    if cli.threads == 0 {
        let _ = writeln!(stderr, "error: --threads must be >= 1");
        return EXIT_USAGE;
    }
    if let Command::Experiment(ExperimentArgs { name: Some(n), config: None, .. }) = &cli.command {
        if !EXPERIMENT_NAMES.contains(&n.as_str()) {
            let _ = writeln!(stderr, "error: unknown experiment {n:?}; valid names: {}", EXPERIMENT_NAMES.join(", "));
            return EXIT_USAGE;
        }
    }
    let quiet = cli.quiet;
    let result = {
        let mut log = |m: &str| {
            if !quiet {
                let _ = writeln!(stderr, "{m}");
            }
        };
        match cli.command {
            Command::Generate(a) => cmd_generate(a),
            Command::Train(a) => cmd_train(a, &mut log),
            Command::Eval(a) => cmd_eval(a, stdout),
            Command::Experiment(a) => cmd_experiment(a, &mut log),
        }
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(CliError::Usage(m)) => {
            let _ = writeln!(stderr, "error: {m}");
            EXIT_USAGE
        }
        Err(CliError::Runtime(e)) => {
            let _ = writeln!(stderr, "error: {e}");
            EXIT_RUNTIME
        }
    }
}

/// Entry point used by the binary.
pub fn main_with_args(args: impl IntoIterator<Item = OsString>) -> i32 {
    run_with(args, &mut std::io::stdout(), &mut std::io::stderr())
}
