//! Finite-difference check of the analytic gradients.

use rand::seq::index;
use rand::Rng;
use rand_distr::StandardNormal;

use super::loss::{loss_and_grad, Loss};
use super::network::Network;
use super::{NetworkSpec, Tensor};
use crate::error::Result;
use crate::seed::{self, Stream};

pub const STEP: f64 = 1e-5;
pub const CHECKED_PARAMS: usize = 200;
const BATCH: usize = 3;

fn loss_at(net: &Network, x: &Tensor, t: &Tensor, dropout_seed: u64) -> Result<f64> {
    let mut rng = seed::stream(dropout_seed);
    let (y, _) = net.forward(x, Some(&mut rng))?;
    Ok(loss_and_grad(net.spec().loss, &y, t)?.0)
}

fn random_targets(rng: &mut Stream, loss: Loss, batch: usize, width: usize) -> Tensor {
    let mut data = vec![0.0; batch * width];
    for row in data.chunks_mut(width) {
        match loss {
            Loss::SoftmaxCrossEntropy => row[rng.random_range(0..width)] = 1.0,
            Loss::Mse => row.iter_mut().for_each(|v| *v = rng.sample(StandardNormal)),
        }
    }
    Tensor::new(vec![batch, width], data).unwrap()
}

/// Maximum relative error between analytic and central-difference gradients
/// over randomly chosen parameters, with relative error
/// `|a - n| / max(|a|, |n|, 1e-8)`.
///
/// Parameters start from the usual initialisation plus small noise so that
/// biases are not all zero. Dropout masks are frozen by reusing one stream
/// seed for every evaluation.
pub fn grad_check(spec: &NetworkSpec, seed: u64) -> Result<f64> {
    let mut net = Network::new(spec.clone(), seed)?;
    let mut rng = seed::stream(seed::derive_tag(seed, "gradcheck"));
    for t in net.params_mut().iter_mut().flatten() {
        for v in t.data_mut() {
            *v += 0.1 * rng.sample::<f64, _>(StandardNormal);
        }
    }
    let mut shape = vec![BATCH];
    shape.extend_from_slice(&spec.input_shape);
    let n_in: usize = shape.iter().product();
    let x = Tensor::new(shape, (0..n_in).map(|_| rng.sample(StandardNormal)).collect())?;
    let t = random_targets(&mut rng, spec.loss, BATCH, spec.output_width()?);
    let dropout_seed = seed::derive_tag(seed, "gradcheck-dropout");

    let (y, cache) = net.forward(&x, Some(&mut seed::stream(dropout_seed)))?;
    let (_, dy) = loss_and_grad(spec.loss, &y, &t)?;
    let grads = net.backward(&cache, &dy)?;

    let locations: Vec<(usize, usize, usize)> = net
        .params()
        .iter()
        .enumerate()
        .flat_map(|(l, ts)| ts.iter().enumerate().flat_map(move |(p, t)| (0..t.len()).map(move |j| (l, p, j))))
        .collect();
    let picks = index::sample(&mut rng, locations.len(), CHECKED_PARAMS.min(locations.len()));
    let mut worst: f64 = 0.0;
    for i in picks {
        let (l, p, j) = locations[i];
        let orig = net.params()[l][p].data()[j];
        net.params_mut()[l][p].data_mut()[j] = orig + STEP;
        let up = loss_at(&net, &x, &t, dropout_seed)?;
        net.params_mut()[l][p].data_mut()[j] = orig - STEP;
        let down = loss_at(&net, &x, &t, dropout_seed)?;
        net.params_mut()[l][p].data_mut()[j] = orig;
        let numeric = (up - down) / (2.0 * STEP);
        let analytic = grads.tensors[l][p].data()[j];
        let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8);
        worst = worst.max(rel);
    }
    Ok(worst)
}
