//! Labelled time series of `sigma_11` features and their `.chl` file format.
//!
//! A `.chl` file is a JSON header object on the first line followed by one CSV
//! row per sample: `f_0,..,f_{L-1},t_0,..` and, when the header sets `meta`,
//! five trailing columns `kind,mu,a,b,delta` (empty where not applicable).
//! Floats are written with 17 significant digits so a save/load round trip is
//! bit-exact. Class labels are integers; for the channel task the order is
//! NM, M, ML, C, D.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eta_process::{
    open_range, sample_class_kind, sample_eta_sequence, BetaParams, ChannelClass, ChannelKind, Generation, InitSpec,
};
use crate::gaussian_channel::{feature_sigma11, SqueezeParam, Transmissivity};
use crate::seed;

pub const FORMAT_TAG: &str = "chl/1";
/// Number of future transmissivities predicted in the deterministic forecast.
pub const DETERMINISTIC_HORIZON: usize = 6;
pub const MARKOV_FORECAST_INPUTS: usize = 6;
pub const MARKOV_FORECAST_HORIZON: usize = 3;
pub const REGRESSION_LEN: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Classification,
    Regression,
    Forecast,
}

impl std::fmt::Display for Task {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Task::Classification => "classification",
            Task::Regression => "regression",
            Task::Forecast => "forecast",
        })
    }
}

impl std::str::FromStr for Task {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "classification" => Ok(Task::Classification),
            "regression" => Ok(Task::Regression),
            "forecast" => Ok(Task::Forecast),
            other => Err(Error::invalid(format!("unknown task '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Target {
    Class(usize),
    Values(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub features: Vec<f64>,
    pub target: Target,
    pub meta: Option<ChannelKind>,
}

impl Sample {
    pub fn class(&self) -> Option<usize> {
        match self.target {
            Target::Class(c) => Some(c),
            Target::Values(_) => None,
        }
    }
}

/// Everything in the `.chl` header.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetHeader {
    pub format: String,
    pub builder: String,
    pub task: Task,
    pub r: f64,
    pub seq_len: usize,
    pub target_width: usize,
    /// Number of labels for classification, 0 otherwise.
    pub n_classes: usize,
    pub generation: Option<Generation>,
    pub seed: u64,
    pub count: usize,
    pub meta: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub builder: String,
    pub task: Task,
    pub r: f64,
    pub seq_len: usize,
    pub target_width: usize,
    pub n_classes: usize,
    pub generation: Option<Generation>,
    pub master_seed: u64,
    pub samples: Vec<Sample>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SplitPair {
    pub train: Dataset,
    pub test: Dataset,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.n_classes];
        for s in &self.samples {
            if let Some(c) = s.class() {
                counts[c] += 1;
            }
        }
        counts
    }

    pub fn header(&self) -> DatasetHeader {
        DatasetHeader {
            format: FORMAT_TAG.to_string(),
            builder: self.builder.clone(),
            task: self.task,
            r: self.r,
            seq_len: self.seq_len,
            target_width: self.target_width,
            n_classes: self.n_classes,
            generation: self.generation,
            seed: self.master_seed,
            count: self.samples.len(),
            meta: self.samples.iter().any(|s| s.meta.is_some()),
        }
    }

    /// A dataset with the same metadata and the given samples.
    pub fn with_samples(&self, samples: Vec<Sample>) -> Dataset {
        Dataset { samples, ..self.empty_like() }
    }

    fn empty_like(&self) -> Dataset {
        Dataset {
            builder: self.builder.clone(),
            task: self.task,
            r: self.r,
            seq_len: self.seq_len,
            target_width: self.target_width,
            n_classes: self.n_classes,
            generation: self.generation,
            master_seed: self.master_seed,
            samples: Vec::new(),
        }
    }

    /// Checks that every sample agrees with the metadata.
    pub fn validate(&self) -> Result<()> {
        for (i, s) in self.samples.iter().enumerate() {
            if s.features.len() != self.seq_len {
                return Err(Error::invalid(format!(
                    "sample {i} has {} features, expected {}",
                    s.features.len(),
                    self.seq_len
                )));
            }
            match (&s.target, self.task) {
                (Target::Class(c), Task::Classification) if *c < self.n_classes => {}
                (Target::Values(v), Task::Regression | Task::Forecast) if v.len() == self.target_width => {}
                _ => return Err(Error::invalid(format!("sample {i} has a target inconsistent with the header"))),
            }
        }
        Ok(())
    }
}

fn features_for(etas: &[f64], r: SqueezeParam) -> Result<Vec<f64>> {
    etas.iter().map(|&e| Ok(feature_sigma11(Transmissivity::new(e)?, r))).collect()
}

fn squeeze_positive(r: f64) -> Result<SqueezeParam> {
    let sq = SqueezeParam::new(r)?;
    if r <= 0.0 {
        return Err(Error::invalid("r must be > 0 so the feature carries information"));
    }
    Ok(sq)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassificationConfig {
    pub per_class: usize,
    pub seq_len: usize,
    pub r: f64,
    pub generation: Generation,
    pub seed: u64,
}

/// Five-class channel dataset; sample `i` has label `i mod 5`.
pub fn build_classification(cfg: &ClassificationConfig) -> Result<Dataset> {
    if cfg.per_class == 0 || cfg.seq_len == 0 {
        return Err(Error::invalid("per_class and seq_len must be >= 1"));
    }
    let r = squeeze_positive(cfg.r)?;
    let n = 5 * cfg.per_class;
    let mut samples = Vec::with_capacity(n);
    for i in 0..n {
        let class = ChannelClass::ALL[i % 5];
        let mut rng = seed::stream(seed::derive(cfg.seed, i as u64));
        let kind = sample_class_kind(class, &mut rng);
        let init = cfg.generation.sample_init(&mut rng);
        let etas = sample_eta_sequence(kind, init, cfg.seq_len, &mut rng)?;
        samples.push(Sample {
            features: features_for(&etas, r)?,
            target: Target::Class(class.index()),
            meta: Some(kind),
        });
    }
    Ok(Dataset {
        builder: "classification".into(),
        task: Task::Classification,
        r: cfg.r,
        seq_len: cfg.seq_len,
        target_width: 1,
        n_classes: 5,
        generation: Some(cfg.generation),
        master_seed: cfg.seed,
        samples,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegressionConfig {
    pub count: usize,
    pub r: f64,
    pub seed: u64,
}

/// Five uses per sample, all five classes in rotation, D2 initialization.
pub fn build_regression(cfg: &RegressionConfig) -> Result<Dataset> {
    if cfg.count == 0 {
        return Err(Error::invalid("count must be >= 1"));
    }
    let r = squeeze_positive(cfg.r)?;
    let mut samples = Vec::with_capacity(cfg.count);
    for i in 0..cfg.count {
        let class = ChannelClass::ALL[i % 5];
        let mut rng = seed::stream(seed::derive(cfg.seed, i as u64));
        let kind = sample_class_kind(class, &mut rng);
        let init = Generation::D2.sample_init(&mut rng);
        let etas = sample_eta_sequence(kind, init, REGRESSION_LEN, &mut rng)?;
        samples.push(Sample { features: features_for(&etas, r)?, target: Target::Values(etas), meta: Some(kind) });
    }
    Ok(Dataset {
        builder: "regression".into(),
        task: Task::Regression,
        r: cfg.r,
        seq_len: REGRESSION_LEN,
        target_width: REGRESSION_LEN,
        n_classes: 0,
        generation: Some(Generation::D2),
        master_seed: cfg.seed,
        samples,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MarkovForecastConfig {
    pub count: usize,
    pub mu: f64,
    pub r: f64,
    pub seed: u64,
}

/// Six observed uses of a Markovian channel, targets are the next three etas.
/// `mu = 1` is accepted as the compound limit.
pub fn build_forecast_markovian(cfg: &MarkovForecastConfig) -> Result<Dataset> {
    if cfg.count == 0 {
        return Err(Error::invalid("count must be >= 1"));
    }
    if !(cfg.mu > 0.0 && cfg.mu <= 1.0) {
        return Err(Error::invalid(format!("memory parameter {} outside (0, 1)", cfg.mu)));
    }
    let r = squeeze_positive(cfg.r)?;
    let total = MARKOV_FORECAST_INPUTS + MARKOV_FORECAST_HORIZON;
    let kind = ChannelKind::Markovian { mu: cfg.mu };
    let mut samples = Vec::with_capacity(cfg.count);
    for i in 0..cfg.count {
        let mut rng = seed::stream(seed::derive(cfg.seed, i as u64));
        let init = Generation::D2.sample_init(&mut rng);
        let etas = sample_eta_sequence(kind, init, total, &mut rng)?;
        samples.push(Sample {
            features: features_for(&etas[..MARKOV_FORECAST_INPUTS], r)?,
            target: Target::Values(etas[MARKOV_FORECAST_INPUTS..].to_vec()),
            meta: Some(kind),
        });
    }
    Ok(Dataset {
        builder: "forecast-markov".into(),
        task: Task::Forecast,
        r: cfg.r,
        seq_len: MARKOV_FORECAST_INPUTS,
        target_width: MARKOV_FORECAST_HORIZON,
        n_classes: 0,
        generation: Some(Generation::D2),
        master_seed: cfg.seed,
        samples,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DeterministicForm {
    Cos,
    Exp,
}

impl DeterministicForm {
    /// Observed window used for this law.
    pub fn default_window(self) -> usize {
        match self {
            DeterministicForm::Cos => 15,
            DeterministicForm::Exp => 6,
        }
    }

    pub fn sample_kind<R: Rng + ?Sized>(self, rng: &mut R) -> ChannelKind {
        let a = open_range(rng, 0.0, 0.5);
        let b = open_range(rng, 0.0, 0.5);
        match self {
            DeterministicForm::Cos => ChannelKind::DeterministicCos { a, b, delta: open_range(rng, 1.0, 10.0) },
            DeterministicForm::Exp => ChannelKind::DeterministicExp { a, b, delta: open_range(rng, 10.0, 30.0) },
        }
    }
}

impl std::fmt::Display for DeterministicForm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            DeterministicForm::Cos => "cos",
            DeterministicForm::Exp => "exp",
        })
    }
}

impl std::str::FromStr for DeterministicForm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cos" => Ok(DeterministicForm::Cos),
            "exp" => Ok(DeterministicForm::Exp),
            other => Err(Error::invalid(format!("unknown deterministic form '{other}' (expected cos or exp)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeterministicForecastConfig {
    pub count: usize,
    pub form: DeterministicForm,
    pub window: usize,
    pub r: f64,
    pub seed: u64,
}

pub fn build_forecast_deterministic(cfg: &DeterministicForecastConfig) -> Result<Dataset> {
    if cfg.count == 0 || cfg.window == 0 {
        return Err(Error::invalid("count and window must be >= 1"));
    }
    let r = squeeze_positive(cfg.r)?;
    let total = cfg.window + DETERMINISTIC_HORIZON;
    let mut samples = Vec::with_capacity(cfg.count);
    // deterministic laws never read the initial distribution
    let unused_init = InitSpec::D1(BetaParams { alpha: 2.0, beta: 2.0 });
    for i in 0..cfg.count {
        let mut rng = seed::stream(seed::derive(cfg.seed, i as u64));
        let kind = cfg.form.sample_kind(&mut rng);
        let etas = sample_eta_sequence(kind, unused_init, total, &mut rng)?;
        samples.push(Sample {
            features: features_for(&etas[..cfg.window], r)?,
            target: Target::Values(etas[cfg.window..].to_vec()),
            meta: Some(kind),
        });
    }
    Ok(Dataset {
        builder: format!(
            "forecast-det-{}",
            match cfg.form {
                DeterministicForm::Cos => "cos",
                DeterministicForm::Exp => "exp",
            }
        ),
        task: Task::Forecast,
        r: cfg.r,
        seq_len: cfg.window,
        target_width: DETERMINISTIC_HORIZON,
        n_classes: 0,
        generation: None,
        master_seed: cfg.seed,
        samples,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MemoryBinningConfig {
    pub count: usize,
    pub threshold: f64,
    pub seq_len: usize,
    pub r: f64,
    pub seed: u64,
}

/// Binary label `mu >= threshold` is the memory bin.
pub fn memory_bin(mu: f64, threshold: f64) -> usize {
    usize::from(mu >= threshold)
}

/// Markovian sequences with `mu` uniform on `(0, 1)` and a Beta(2, 2) start.
pub fn build_memory_binning(cfg: &MemoryBinningConfig) -> Result<Dataset> {
    if cfg.count == 0 || cfg.seq_len == 0 {
        return Err(Error::invalid("count and seq_len must be >= 1"));
    }
    if !(0.3..=0.96).contains(&cfg.threshold) {
        return Err(Error::invalid(format!("threshold {} outside [0.3, 0.96]", cfg.threshold)));
    }
    let r = squeeze_positive(cfg.r)?;
    let init = InitSpec::D1(BetaParams { alpha: 2.0, beta: 2.0 });
    let mut samples = Vec::with_capacity(cfg.count);
    for i in 0..cfg.count {
        let mut rng = seed::stream(seed::derive(cfg.seed, i as u64));
        let mu = open_range(&mut rng, 0.0, 1.0);
        let kind = ChannelKind::Markovian { mu };
        let etas = sample_eta_sequence(kind, init, cfg.seq_len, &mut rng)?;
        samples.push(Sample {
            features: features_for(&etas, r)?,
            target: Target::Class(memory_bin(mu, cfg.threshold)),
            meta: Some(kind),
        });
    }
    Ok(Dataset {
        builder: "memory-binning".into(),
        task: Task::Classification,
        r: cfg.r,
        seq_len: cfg.seq_len,
        target_width: 1,
        n_classes: 2,
        generation: None,
        master_seed: cfg.seed,
        samples,
    })
}

/// Seeded split. Classification datasets are stratified: every class sends a
/// share within one sample of `ratio` of its members to the training side.
pub fn split(ds: &Dataset, ratio: f64, seed: u64) -> Result<SplitPair> {
    if ds.is_empty() {
        return Err(Error::invalid("cannot split an empty dataset"));
    }
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::invalid(format!("split ratio {ratio} outside (0, 1)")));
    }
    let n = ds.len();
    let n_train = (ratio * n as f64).floor() as usize;
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut seed::stream(seed));

    let mut train = Vec::with_capacity(n_train);
    let mut test = Vec::with_capacity(n - n_train);
    if ds.task == Task::Classification {
        let quotas = stratified_quotas(&ds.class_counts(), ratio, n_train);
        let mut taken = vec![0usize; quotas.len()];
        for i in order {
            let c = ds.samples[i].class().expect("classification sample");
            if taken[c] < quotas[c] {
                taken[c] += 1;
                train.push(ds.samples[i].clone());
            } else {
                test.push(ds.samples[i].clone());
            }
        }
    } else {
        for (pos, i) in order.into_iter().enumerate() {
            if pos < n_train {
                train.push(ds.samples[i].clone());
            } else {
                test.push(ds.samples[i].clone());
            }
        }
    }
    Ok(SplitPair { train: ds.with_samples(train), test: ds.with_samples(test) })
}

/// Largest-remainder allocation of `total` training slots across classes.
fn stratified_quotas(counts: &[usize], ratio: f64, total: usize) -> Vec<usize> {
    let exact: Vec<f64> = counts.iter().map(|&c| ratio * c as f64).collect();
    let mut quotas: Vec<usize> = exact.iter().map(|x| x.floor() as usize).collect();
    let mut left = total.saturating_sub(quotas.iter().sum());
    let mut by_remainder: Vec<usize> = (0..counts.len()).collect();
    by_remainder.sort_by(|&a, &b| {
        let ra = exact[a] - exact[a].floor();
        let rb = exact[b] - exact[b].floor();
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    for c in by_remainder {
        if left == 0 {
            break;
        }
        if quotas[c] < counts[c] {
            quotas[c] += 1;
            left -= 1;
        }
    }
    quotas
}

fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

fn kind_code(kind: &ChannelKind) -> &'static str {
    match kind {
        ChannelKind::NonMarkovian { .. } => "nm",
        ChannelKind::Markovian { .. } => "m",
        ChannelKind::Memoryless => "ml",
        ChannelKind::Compound => "c",
        ChannelKind::DeterministicCos { .. } => "cos",
        ChannelKind::DeterministicExp { .. } => "exp",
    }
}

/// Serializes to the `.chl` text format.
pub fn to_chl_string(ds: &Dataset) -> Result<String> {
    ds.validate()?;
    let header = ds.header();
    let mut out = serde_json::to_string(&header)?;
    out.push('\n');
    let mut fields: Vec<String> = Vec::new();
    for s in &ds.samples {
        fields.clear();
        fields.extend(s.features.iter().map(|&f| fmt_f64(f)));
        match &s.target {
            Target::Class(c) => fields.push(c.to_string()),
            Target::Values(v) => fields.extend(v.iter().map(|&x| fmt_f64(x))),
        }
        if header.meta {
            match &s.meta {
                Some(kind) => {
                    fields.push(kind_code(kind).to_string());
                    fields.extend(kind.params().iter().map(|p| p.map(fmt_f64).unwrap_or_default()));
                }
                None => fields.extend(std::iter::repeat_n(String::new(), 5)),
            }
        }
        out.push_str(&fields.join(","));
        out.push('\n');
    }
    Ok(out)
}

pub fn save(ds: &Dataset, path: &Path) -> Result<()> {
    let text = to_chl_string(ds)?;
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    w.write_all(text.as_bytes()).map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn load(path: &Path) -> Result<Dataset> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_chl(&text, path)
}

/// Parses `.chl` text; `origin` only labels error messages.
pub fn parse_chl(text: &str, origin: &Path) -> Result<Dataset> {
    let perr = |line: usize, message: String| Error::Parse { path: origin.to_path_buf(), line, message };
    let mut lines = text.lines().enumerate();
    let (_, first) = lines.next().ok_or_else(|| perr(1, "empty file".into()))?;
    let header: DatasetHeader = serde_json::from_str(first).map_err(|e| perr(1, format!("invalid header: {e}")))?;
    if header.format != FORMAT_TAG {
        return Err(perr(1, format!("unsupported format '{}'", header.format)));
    }
    let target_cols = match header.task {
        Task::Classification => 1,
        Task::Regression | Task::Forecast => header.target_width,
    };
    let meta_cols = if header.meta { 5 } else { 0 };
    let width = header.seq_len + target_cols + meta_cols;

    let mut samples = Vec::with_capacity(header.count);
    for (idx, line) in lines {
        let lineno = idx + 1;
        if line.is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != width {
            return Err(perr(
                lineno,
                format!("row {} has {} fields, header implies {width}", samples.len(), cols.len()),
            ));
        }
        let num = |j: usize| -> Result<f64> {
            cols[j].parse::<f64>().map_err(|_| perr(lineno, format!("field {j} ('{}') is not a number", cols[j])))
        };
        let features = (0..header.seq_len).map(num).collect::<Result<Vec<_>>>()?;
        let target = match header.task {
            Task::Classification => {
                let c: usize = cols[header.seq_len]
                    .parse()
                    .map_err(|_| perr(lineno, format!("label '{}' is not an integer", cols[header.seq_len])))?;
                if c >= header.n_classes {
                    return Err(perr(lineno, format!("label {c} >= n_classes {}", header.n_classes)));
                }
                Target::Class(c)
            }
            _ => Target::Values((header.seq_len..header.seq_len + target_cols).map(num).collect::<Result<_>>()?),
        };
        let meta = if header.meta {
            let base = header.seq_len + target_cols;
            let opt = |j: usize| -> Result<Option<f64>> {
                if cols[j].is_empty() {
                    Ok(None)
                } else {
                    num(j).map(Some)
                }
            };
            let (mu, a, b, delta) = (opt(base + 1)?, opt(base + 2)?, opt(base + 3)?, opt(base + 4)?);
            let need = |x: Option<f64>| x.ok_or_else(|| perr(lineno, "missing kind parameter".into()));
            match cols[base] {
                "" => None,
                "nm" => Some(ChannelKind::NonMarkovian { mu: need(mu)? }),
                "m" => Some(ChannelKind::Markovian { mu: need(mu)? }),
                "ml" => Some(ChannelKind::Memoryless),
                "c" => Some(ChannelKind::Compound),
                "cos" => Some(ChannelKind::DeterministicCos { a: need(a)?, b: need(b)?, delta: need(delta)? }),
                "exp" => Some(ChannelKind::DeterministicExp { a: need(a)?, b: need(b)?, delta: need(delta)? }),
                other => return Err(perr(lineno, format!("unknown kind code '{other}'"))),
            }
        } else {
            None
        };
        samples.push(Sample { features, target, meta });
    }
    if samples.len() != header.count {
        return Err(perr(
            text.lines().count(),
            format!("header declares {} samples, found {}", header.count, samples.len()),
        ));
    }
    Ok(Dataset {
        builder: header.builder,
        task: header.task,
        r: header.r,
        seq_len: header.seq_len,
        target_width: header.target_width,
        n_classes: header.n_classes,
        generation: header.generation,
        master_seed: header.seed,
        samples,
    })
}
