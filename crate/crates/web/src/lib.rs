//! WebAssembly bindings for the browser demo in `www/`.
//!
//! Three operations are exposed: the Choi-state covariance of a lossy channel,
//! seeded transmissivity sequences for each channel class, and Beta density
//! curves. Each binding wraps a plain Rust function that is also tested
//! natively.

use chanlearn::eta_process::{
    beta_from_moments, moments_from_beta, sample_class_kind, sample_eta_sequence, BetaParams, ChannelClass,
    ChannelKind, Generation, MomentSpec,
};
use chanlearn::gaussian_channel::{choi_covariance, feature_sigma11, SqueezeParam, Transmissivity};
use chanlearn::seed;
use wasm_bindgen::prelude::*;

/// Row-major Choi covariance followed by its minimum uncertainty eigenvalue.
pub fn choi_entries(eta: f64, r: f64) -> Result<Vec<f64>, String> {
    let eta = Transmissivity::new(eta).map_err(|e| e.to_string())?;
    let r = SqueezeParam::new(r).map_err(|e| e.to_string())?;
    let sigma = choi_covariance(eta, r);
    let mut out = sigma.to_flat().to_vec();
    out.push(sigma.min_uncertainty_eigenvalue());
    Ok(out)
}

/// A sampled channel: its transmissivities, features and a label.
#[wasm_bindgen]
#[derive(Debug, Clone, PartialEq)]
pub struct Sampled {
    etas: Vec<f64>,
    features: Vec<f64>,
    description: String,
}

#[wasm_bindgen]
impl Sampled {
    pub fn etas(&self) -> Vec<f64> {
        self.etas.clone()
    }

    pub fn features(&self) -> Vec<f64> {
        self.features.clone()
    }

    pub fn description(&self) -> String {
        self.description.clone()
    }
}

fn describe(kind: &ChannelKind) -> String {
    match *kind {
        ChannelKind::NonMarkovian { mu } => format!("non-Markovian, mu = {mu:.3}"),
        ChannelKind::Markovian { mu } => format!("Markovian, mu = {mu:.3}"),
        ChannelKind::Memoryless => "memoryless".into(),
        ChannelKind::Compound => "compound".into(),
        ChannelKind::DeterministicCos { a, b, delta } => {
            format!("deterministic cos, a = {a:.3}, b = {b:.3}, delta = {delta:.2}")
        }
        ChannelKind::DeterministicExp { a, b, delta } => {
            format!("deterministic exp, a = {a:.3}, b = {b:.3}, delta = {delta:.2}")
        }
    }
}

/// Samples one channel of class `class` (0..5 in the order NM, M, ML, C, D)
/// exactly as the dataset builders do for sample seed `seed`.
pub fn sample(class: usize, generation: &str, length: usize, r: f64, seed: u64) -> Result<Sampled, String> {
    let class = ChannelClass::from_index(class).ok_or_else(|| format!("class index {class} outside 0..5"))?;
    let generation: Generation = generation.parse().map_err(|e: chanlearn::Error| e.to_string())?;
    let r = SqueezeParam::new(r).map_err(|e| e.to_string())?;
    let mut rng = seed::stream(seed);
    let kind = sample_class_kind(class, &mut rng);
    let init = generation.sample_init(&mut rng);
    let etas = sample_eta_sequence(kind, init, length, &mut rng).map_err(|e| e.to_string())?;
    let features = etas
        .iter()
        .map(|&e| Transmissivity::new(e).map(|t| feature_sigma11(t, r)))
        .collect::<chanlearn::Result<Vec<f64>>>()
        .map_err(|e| e.to_string())?;
    Ok(Sampled { etas, features, description: describe(&kind) })
}

/// Beta density at `points` evenly spaced interior points of (0, 1), followed
/// by the mean and variance.
pub fn beta_curve(alpha: f64, beta: f64, points: usize) -> Result<Vec<f64>, String> {
    let p = BetaParams::new(alpha, beta).map_err(|e| e.to_string())?;
    let mut out: Vec<f64> = (1..=points).map(|i| p.pdf(i as f64 / (points + 1) as f64)).collect();
    let m = moments_from_beta(p);
    out.push(m.mean);
    out.push(m.var);
    Ok(out)
}

/// Beta shapes `[alpha, beta]` with the given mean and variance.
pub fn shapes_from_moments(mean: f64, var: f64) -> Result<Vec<f64>, String> {
    let m = MomentSpec::new(mean, var).map_err(|e| e.to_string())?;
    let p = beta_from_moments(m).map_err(|e| e.to_string())?;
    Ok(vec![p.alpha, p.beta])
}

#[wasm_bindgen(js_name = choiCovariance)]
pub fn choi_covariance_js(eta: f64, r: f64) -> Result<Vec<f64>, JsError> {
    choi_entries(eta, r).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = sampleChannel)]
pub fn sample_channel_js(class: usize, generation: &str, length: usize, r: f64, seed: u64) -> Result<Sampled, JsError> {
    sample(class, generation, length, r, seed).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = betaCurve)]
pub fn beta_curve_js(alpha: f64, beta: f64, points: usize) -> Result<Vec<f64>, JsError> {
    beta_curve(alpha, beta, points).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = shapesFromMoments)]
pub fn shapes_from_moments_js(mean: f64, var: f64) -> Result<Vec<f64>, JsError> {
    shapes_from_moments(mean, var).map_err(|e| JsError::new(&e))
}
