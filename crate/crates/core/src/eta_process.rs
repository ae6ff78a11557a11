//! Generators of transmissivity sequences for the five channel classes.
//!
//! Stochastic classes draw every `eta_k` from a Beta distribution whose mean and
//! variance are updated from past values through a weight vector; compound and
//! deterministic classes collapse the conditional distribution to a point.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Beta, Distribution};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};

/// Upper bound on the non-Markovian strength so that `mu + mu/2 + mu/3 <= 1`.
pub const NON_MARKOVIAN_MU_MAX: f64 = 6.0 / 11.0;
pub const NON_MARKOVIAN_MU_MIN: f64 = 0.2;
pub const MARKOVIAN_MU_MIN: f64 = 0.1;

/// Below this conditional variance the next value is emitted as the mean.
pub const DEGENERATE_VAR: f64 = 1e-12;

/// Fraction of the unimodality bound that clamped conditional variances keep.
pub const VAR_CLAMP_FRACTION: f64 = 0.999;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BetaParams {
    pub alpha: f64,
    pub beta: f64,
}

impl BetaParams {
    pub fn new(alpha: f64, beta: f64) -> Result<Self> {
        if alpha > 0.0 && beta > 0.0 && alpha.is_finite() && beta.is_finite() {
            Ok(Self { alpha, beta })
        } else {
            Err(Error::invalid(format!("Beta shapes ({alpha}, {beta}) must be positive")))
        }
    }

    /// Density at `x`, zero outside `[0, 1]`.
    pub fn pdf(&self, x: f64) -> f64 {
        if !(0.0..=1.0).contains(&x) {
            return 0.0;
        }
        let ln_norm = ln_gamma(self.alpha + self.beta) - ln_gamma(self.alpha) - ln_gamma(self.beta);
        let a = if self.alpha == 1.0 { 0.0 } else { (self.alpha - 1.0) * x.ln() };
        let b = if self.beta == 1.0 { 0.0 } else { (self.beta - 1.0) * (1.0 - x).ln() };
        (ln_norm + a + b).exp()
    }
}

/// Mean and variance of a distribution on `(0, 1)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentSpec {
    pub mean: f64,
    pub var: f64,
}

impl MomentSpec {
    pub fn new(mean: f64, var: f64) -> Result<Self> {
        if !(mean > 0.0 && mean < 1.0) {
            return Err(Error::InvalidMoments { mean, var, reason: "mean must lie in (0, 1)" });
        }
        if !(var >= 0.0 && var < mean * (1.0 - mean)) {
            return Err(Error::InvalidMoments { mean, var, reason: "variance must lie in [0, mean(1-mean))" });
        }
        Ok(Self { mean, var })
    }
}

pub fn moments_from_beta(p: BetaParams) -> MomentSpec {
    let s = p.alpha + p.beta;
    MomentSpec { mean: p.alpha / s, var: p.alpha * p.beta / (s * s * (s + 1.0)) }
}

/// Inverts [`moments_from_beta`]. A zero variance is reported as
/// `InvalidMoments` so callers can branch to the point-mass case.
pub fn beta_from_moments(m: MomentSpec) -> Result<BetaParams> {
    let MomentSpec { mean, var } = m;
    if !(mean > 0.0 && mean < 1.0) {
        return Err(Error::InvalidMoments { mean, var, reason: "mean must lie in (0, 1)" });
    }
    if var <= 0.0 {
        return Err(Error::InvalidMoments { mean, var, reason: "zero variance: point mass" });
    }
    let k = mean * (1.0 - mean) / var - 1.0;
    if k <= 0.0 {
        return Err(Error::InvalidMoments { mean, var, reason: "variance >= mean(1-mean)" });
    }
    Ok(BetaParams { alpha: mean * k, beta: (1.0 - mean) * k })
}

/// Largest variance at `mean` for which the matching Beta has both shapes > 1.
pub fn unimodal_var_bound(mean: f64) -> f64 {
    let m = mean * (1.0 - mean);
    (m / (1.0 + 1.0 / mean)).min(m / (1.0 + 1.0 / (1.0 - mean)))
}

/// One Beta draw, kept strictly inside `(0, 1)`.
pub fn sample_beta<R: Rng + ?Sized>(p: BetaParams, rng: &mut R) -> f64 {
    let dist = Beta::new(p.alpha, p.beta).expect("BetaParams are validated on construction");
    let x: f64 = dist.sample(rng);
    x.clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON / 2.0)
}

/// The five channel labels, in their fixed serialization order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ChannelClass {
    NonMarkovian,
    Markovian,
    Memoryless,
    Compound,
    Deterministic,
}

impl ChannelClass {
    pub const ALL: [ChannelClass; 5] = [
        ChannelClass::NonMarkovian,
        ChannelClass::Markovian,
        ChannelClass::Memoryless,
        ChannelClass::Compound,
        ChannelClass::Deterministic,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn short_name(self) -> &'static str {
        match self {
            ChannelClass::NonMarkovian => "NM",
            ChannelClass::Markovian => "M",
            ChannelClass::Memoryless => "ML",
            ChannelClass::Compound => "C",
            ChannelClass::Deterministic => "D",
        }
    }
}

impl fmt::Display for ChannelClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.short_name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ChannelKind {
    NonMarkovian { mu: f64 },
    Markovian { mu: f64 },
    Memoryless,
    Compound,
    DeterministicCos { a: f64, b: f64, delta: f64 },
    DeterministicExp { a: f64, b: f64, delta: f64 },
}

impl ChannelKind {
    pub fn class(&self) -> ChannelClass {
        match self {
            ChannelKind::NonMarkovian { .. } => ChannelClass::NonMarkovian,
            ChannelKind::Markovian { .. } => ChannelClass::Markovian,
            ChannelKind::Memoryless => ChannelClass::Memoryless,
            ChannelKind::Compound => ChannelClass::Compound,
            ChannelKind::DeterministicCos { .. } | ChannelKind::DeterministicExp { .. } => ChannelClass::Deterministic,
        }
    }

    pub fn is_deterministic(&self) -> bool {
        matches!(self, ChannelKind::DeterministicCos { .. } | ChannelKind::DeterministicExp { .. })
    }

    /// Checks the parameter ranges used for the class datasets.
    pub fn validate_class_ranges(&self) -> Result<()> {
        let ok = match *self {
            ChannelKind::NonMarkovian { mu } => (NON_MARKOVIAN_MU_MIN..=NON_MARKOVIAN_MU_MAX).contains(&mu),
            ChannelKind::Markovian { mu } => mu > MARKOVIAN_MU_MIN && mu < 1.0,
            ChannelKind::Memoryless | ChannelKind::Compound => true,
            ChannelKind::DeterministicCos { a, b, delta } => {
                in_open(a, 0.0, 0.5) && in_open(b, 0.0, 0.5) && in_open(delta, 1.0, 10.0)
            }
            ChannelKind::DeterministicExp { a, b, delta } => {
                in_open(a, 0.0, 0.5) && in_open(b, 0.0, 0.5) && in_open(delta, 10.0, 30.0)
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::invalid(format!("{self:?} outside its class parameter range")))
        }
    }

    /// Looser check applied when generating a sequence: the memory update must
    /// keep the variance non-negative and deterministic laws must stay in (0, 1).
    fn validate_generation(&self) -> Result<()> {
        let ok = match *self {
            ChannelKind::NonMarkovian { mu } => (0.0..=NON_MARKOVIAN_MU_MAX).contains(&mu),
            ChannelKind::Markovian { mu } => (0.0..=1.0).contains(&mu),
            ChannelKind::Memoryless | ChannelKind::Compound => true,
            ChannelKind::DeterministicCos { a, b, delta } | ChannelKind::DeterministicExp { a, b, delta } => {
                a > 0.0 && b > 0.0 && a + b < 1.0 && delta > 0.0
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::invalid(format!("{self:?} has invalid parameters")))
        }
    }

    /// The class parameters as `(mu, a, b, delta)`, absent where not applicable.
    pub fn params(&self) -> [Option<f64>; 4] {
        match *self {
            ChannelKind::NonMarkovian { mu } | ChannelKind::Markovian { mu } => [Some(mu), None, None, None],
            ChannelKind::Memoryless | ChannelKind::Compound => [None; 4],
            ChannelKind::DeterministicCos { a, b, delta } | ChannelKind::DeterministicExp { a, b, delta } => {
                [None, Some(a), Some(b), Some(delta)]
            }
        }
    }
}

fn in_open(x: f64, lo: f64, hi: f64) -> bool {
    x > lo && x < hi
}

/// Initial Beta distribution of a sequence.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum InitSpec {
    D1(BetaParams),
    D2(MomentSpec),
}

impl InitSpec {
    pub fn beta_params(&self) -> Result<BetaParams> {
        match *self {
            InitSpec::D1(p) => Ok(p),
            InitSpec::D2(m) => beta_from_moments(m),
        }
    }

    pub fn moments(&self) -> MomentSpec {
        match *self {
            InitSpec::D1(p) => moments_from_beta(p),
            InitSpec::D2(m) => m,
        }
    }
}

/// Dataset generation procedure for the initial distribution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Generation {
    /// Shapes uniform on `[1, 10]`.
    D1,
    /// Mean uniform on `(0, 1)`, variance uniform below the unimodality bound.
    D2,
}

impl Generation {
    pub fn sample_init<R: Rng + ?Sized>(self, rng: &mut R) -> InitSpec {
        match self {
            Generation::D1 => sample_init_d1(rng),
            Generation::D2 => sample_init_d2(rng),
        }
    }
}

impl fmt::Display for Generation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Generation::D1 => "d1",
            Generation::D2 => "d2",
        })
    }
}

impl FromStr for Generation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "d1" => Ok(Generation::D1),
            "d2" => Ok(Generation::D2),
            other => Err(Error::invalid(format!("unknown generation mode '{other}' (expected d1 or d2)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EtaSequence {
    pub values: Vec<f64>,
    pub kind: ChannelKind,
    pub init: InitSpec,
    pub seed: u64,
}

/// Weights applied to the most recent values, newest first.
pub fn memory_weights(kind: &ChannelKind, k: usize) -> Result<Vec<f64>> {
    if k < 2 {
        return Err(Error::invalid("memory weights are defined for k >= 2"));
    }
    match *kind {
        ChannelKind::NonMarkovian { mu } => {
            let full = [mu, mu / 2.0, mu / 3.0];
            Ok(full[..(k - 1).min(3)].to_vec())
        }
        ChannelKind::Markovian { mu } => Ok(vec![mu]),
        ChannelKind::Memoryless => Ok(Vec::new()),
        ChannelKind::Compound => Ok(vec![1.0]),
        ChannelKind::DeterministicCos { .. } | ChannelKind::DeterministicExp { .. } => {
            Err(Error::invalid("deterministic channels have no memory weights"))
        }
    }
}

/// Conditional moments of the next value. `history` is newest first.
pub fn next_moments(weights: &[f64], history: &[f64], init: MomentSpec) -> Result<MomentSpec> {
    if history.len() < weights.len() {
        return Err(Error::invalid(format!(
            "history of length {} is shorter than {} weights",
            history.len(),
            weights.len()
        )));
    }
    let total: f64 = weights.iter().sum();
    if total > 1.0 + 1e-12 {
        return Err(Error::invalid(format!("memory weights sum to {total} > 1")));
    }
    let rest = (1.0 - total).max(0.0);
    let recalled: f64 = weights.iter().zip(history).map(|(w, h)| w * h).sum();
    Ok(MomentSpec { mean: recalled + rest * init.mean, var: rest * init.var })
}

pub fn deterministic_eta(kind: &ChannelKind, k: usize) -> Result<f64> {
    if k < 1 {
        return Err(Error::invalid("channel uses are numbered from 1"));
    }
    let t = (k - 1) as f64;
    match *kind {
        ChannelKind::DeterministicExp { a, b, delta } => Ok(a + b * (-(t * t) / delta).exp()),
        ChannelKind::DeterministicCos { a, b, delta } => Ok(a + b * (t / delta).cos().abs()),
        _ => Err(Error::invalid(format!("{kind:?} is not deterministic"))),
    }
}

pub fn sample_init_d1<R: Rng + ?Sized>(rng: &mut R) -> InitSpec {
    let alpha = rng.random_range(1.0..=10.0);
    let beta = rng.random_range(1.0..=10.0);
    InitSpec::D1(BetaParams { alpha, beta })
}

pub fn sample_init_d2<R: Rng + ?Sized>(rng: &mut R) -> InitSpec {
    let mean = open_unit(rng);
    let var = open_unit(rng) * unimodal_var_bound(mean);
    InitSpec::D2(MomentSpec { mean, var })
}

fn open_unit<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    loop {
        let u: f64 = rng.random();
        if u > 0.0 {
            return u;
        }
    }
}

/// Draws the class-dataset parameters for `class`.
pub fn sample_class_kind<R: Rng + ?Sized>(class: ChannelClass, rng: &mut R) -> ChannelKind {
    match class {
        ChannelClass::NonMarkovian => {
            ChannelKind::NonMarkovian { mu: rng.random_range(NON_MARKOVIAN_MU_MIN..=NON_MARKOVIAN_MU_MAX) }
        }
        ChannelClass::Markovian => ChannelKind::Markovian { mu: open_range(rng, MARKOVIAN_MU_MIN, 1.0) },
        ChannelClass::Memoryless => ChannelKind::Memoryless,
        ChannelClass::Compound => ChannelKind::Compound,
        ChannelClass::Deterministic => {
            let cosine = rng.random_bool(0.5);
            let a = open_range(rng, 0.0, 0.5);
            let b = open_range(rng, 0.0, 0.5);
            if cosine {
                ChannelKind::DeterministicCos { a, b, delta: open_range(rng, 1.0, 10.0) }
            } else {
                ChannelKind::DeterministicExp { a, b, delta: open_range(rng, 10.0, 30.0) }
            }
        }
    }
}

/// Uniform on the open interval `(lo, hi)`.
pub fn open_range<R: Rng + ?Sized>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    loop {
        let x = rng.random_range(lo..hi);
        if x > lo {
            return x;
        }
    }
}

/// Generates `length` transmissivities for `kind`.
///
/// Stochastic kinds draw `eta_1` from the initial Beta, then for every later
/// use update the moments from the recent history and draw from the matching
/// Beta. Conditional variances are clamped below the unimodality bound; below
/// [`DEGENERATE_VAR`] the conditional mean is emitted exactly. Memoryless
/// sequences reuse the initial distribution unchanged. Deterministic kinds
/// ignore `init` and the stream.
pub fn sample_eta_sequence<R: Rng + ?Sized>(
    kind: ChannelKind,
    init: InitSpec,
    length: usize,
    rng: &mut R,
) -> Result<Vec<f64>> {
    if length == 0 {
        return Err(Error::invalid("sequence length must be >= 1"));
    }
    kind.validate_generation()?;
    if kind.is_deterministic() {
        return (1..=length).map(|k| deterministic_eta(&kind, k)).collect();
    }

    let init_params = init.beta_params()?;
    let init_moments = init.moments();
    let mut values = Vec::with_capacity(length);
    values.push(sample_beta(init_params, rng));

    // newest first, at most three values are ever needed
    let mut recent: Vec<f64> = Vec::with_capacity(3);
    recent.push(values[0]);
    for k in 2..=length {
        let weights = memory_weights(&kind, k)?;
        let eta = if weights.is_empty() {
            sample_beta(init_params, rng)
        } else {
            let m = next_moments(&weights, &recent, init_moments)?;
            draw_conditional(m, rng)?
        };
        values.push(eta);
        recent.insert(0, eta);
        recent.truncate(3);
    }
    Ok(values)
}

fn draw_conditional<R: Rng + ?Sized>(m: MomentSpec, rng: &mut R) -> Result<f64> {
    let var = m.var.min(VAR_CLAMP_FRACTION * unimodal_var_bound(m.mean));
    if var < DEGENERATE_VAR {
        return Ok(m.mean);
    }
    let params = beta_from_moments(MomentSpec { mean: m.mean, var })?;
    Ok(sample_beta(params, rng))
}

/// Convenience wrapper returning an [`EtaSequence`] with its own stream.
pub fn generate_sequence(kind: ChannelKind, init: InitSpec, length: usize, seed: u64) -> Result<EtaSequence> {
    let mut rng = crate::seed::stream(seed);
    let values = sample_eta_sequence(kind, init, length, &mut rng)?;
    Ok(EtaSequence { values, kind, init, seed })
}
