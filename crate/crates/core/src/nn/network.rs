use rand::Rng;

use super::layers::{self, LayerCache};
use super::{param_count, LayerSpec, NetworkSpec, Tensor};
use crate::error::{Error, Result};
use crate::seed::{self, Stream};

/// Samples per chunk when running inference on a large batch.
const PREDICT_CHUNK: usize = 1024;

/// Network parameters together with their spec.
///
/// Each parameter update bumps an internal version; a [`ForwardCache`] taken
/// before the update is rejected by [`Network::backward`].
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    spec: NetworkSpec,
    shapes: Vec<Vec<usize>>,
    params: Vec<Vec<Tensor>>,
    version: u64,
}

pub struct ForwardCache {
    version: u64,
    batch: usize,
    output_shape: Vec<usize>,
    layers: Vec<LayerCache>,
    first_non_finite: Option<usize>,
}

impl ForwardCache {
    /// Index of the first layer whose output contained a NaN or infinity.
    pub fn first_non_finite_layer(&self) -> Option<usize> {
        self.first_non_finite
    }
}

/// Parameter gradients, laid out like [`Network::params`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub tensors: Vec<Vec<Tensor>>,
}

impl Gradients {
    pub fn iter(&self) -> impl Iterator<Item = &Tensor> {
        self.tensors.iter().flatten()
    }

    pub fn max_abs(&self) -> f64 {
        self.iter().fold(0.0, |m, t| m.max(t.max_abs()))
    }
}

fn param_shapes(layer: &LayerSpec, input: &[usize]) -> Vec<Vec<usize>> {
    match *layer {
        LayerSpec::Dense { units, .. } => vec![vec![input[0], units], vec![units]],
        LayerSpec::Lstm { units, .. } => {
            vec![vec![input[1], 4 * units], vec![units, 4 * units], vec![4 * units]]
        }
        LayerSpec::Conv1d { filters, kernel_size, .. } => {
            vec![vec![kernel_size * input[1], filters], vec![filters]]
        }
        _ => Vec::new(),
    }
}

fn glorot(rng: &mut Stream, t: &mut Tensor, fan_in: usize, fan_out: usize) {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    for x in t.data_mut() {
        *x = rng.random_range(-limit..limit);
    }
}

impl Network {
    /// All-zero parameters.
    pub fn zeros(spec: NetworkSpec) -> Result<Self> {
        let shapes = spec.shapes()?;
        let params = spec
            .layers
            .iter()
            .zip(&shapes)
            .map(|(l, s)| param_shapes(l, s).iter().map(|p| Tensor::zeros(p)).collect())
            .collect();
        Ok(Self { spec, shapes, params, version: 0 })
    }

    /// Glorot-uniform kernels, zero biases, LSTM forget-gate bias of one.
    pub fn new(spec: NetworkSpec, seed: u64) -> Result<Self> {
        let mut net = Self::zeros(spec)?;
        let mut rng = seed::stream(seed::derive_tag(seed, "init"));
        for (i, layer) in net.spec.layers.iter().enumerate() {
            let input = &net.shapes[i];
            let p = &mut net.params[i];
            match *layer {
                LayerSpec::Dense { units, .. } => glorot(&mut rng, &mut p[0], input[0], units),
                LayerSpec::Lstm { units, .. } => {
                    glorot(&mut rng, &mut p[0], input[1], 4 * units);
                    glorot(&mut rng, &mut p[1], units, 4 * units);
                    p[2].data_mut()[units..2 * units].fill(1.0);
                }
                LayerSpec::Conv1d { filters, kernel_size, .. } => {
                    glorot(&mut rng, &mut p[0], kernel_size * input[1], kernel_size * filters)
                }
                _ => {}
            }
        }
        Ok(net)
    }

    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    /// Shapes between layers; `shapes()[0]` is the input shape.
    pub fn shapes(&self) -> &[Vec<usize>] {
        &self.shapes
    }

    pub fn params(&self) -> &[Vec<Tensor>] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Vec<Tensor>] {
        self.version += 1;
        &mut self.params
    }

    /// Replaces every parameter tensor; shapes must match.
    pub fn set_params(&mut self, params: Vec<Vec<Tensor>>) -> Result<()> {
        let same = params.len() == self.params.len()
            && params
                .iter()
                .zip(&self.params)
                .all(|(a, b)| a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.shape() == y.shape()));
        if !same {
            return Err(Error::invalid("parameter shapes do not match the network"));
        }
        self.params = params;
        self.version += 1;
        Ok(())
    }

    pub fn param_count(&self) -> usize {
        param_count(&self.spec).expect("spec validated on construction")
    }

    pub fn zero_gradients(&self) -> Gradients {
        Gradients {
            tensors: self.params.iter().map(|l| l.iter().map(|t| Tensor::zeros(t.shape())).collect()).collect(),
        }
    }

    fn check_input(&self, x: &Tensor) -> Result<()> {
        let mut want = vec![x.batch()];
        want.extend_from_slice(&self.shapes[0]);
        if x.shape() != want.as_slice() || x.batch() == 0 {
            let mut expected = vec![x.batch().max(1)];
            expected.extend_from_slice(&self.shapes[0]);
            return Err(Error::ShapeMismatch { expected, got: x.shape().to_vec() });
        }
        Ok(())
    }

    /// Runs the network. Dropout is active only when a training stream is
    /// given; its masks are drawn from that stream in layer order.
    pub fn forward(&self, x: &Tensor, mut training: Option<&mut Stream>) -> Result<(Tensor, ForwardCache)> {
        self.check_input(x)?;
        let mut caches = Vec::with_capacity(self.spec.layers.len());
        let mut h = x.clone();
        let mut first_non_finite = None;
        for (i, layer) in self.spec.layers.iter().enumerate() {
            let (y, cache) = layers::forward(layer, &self.params[i], h, training.as_deref_mut());
            if first_non_finite.is_none() && !y.all_finite() {
                first_non_finite = Some(i);
            }
            caches.push(cache);
            h = y;
        }
        let cache = ForwardCache {
            version: self.version,
            batch: x.batch(),
            output_shape: h.shape().to_vec(),
            layers: caches,
            first_non_finite,
        };
        Ok((h, cache))
    }

    /// Evaluation-mode outputs, computed in bounded-size chunks.
    pub fn predict(&self, x: &Tensor) -> Result<Tensor> {
        self.check_input(x)?;
        let n = x.batch();
        let width = *self.shapes.last().unwrap().first().unwrap();
        let mut out = Vec::with_capacity(n * width);
        let mut start = 0;
        while start < n {
            let end = (start + PREDICT_CHUNK).min(n);
            let chunk = if start == 0 && end == n { x.clone() } else { x.slice_rows(start, end) };
            let mut h = chunk;
            for (i, layer) in self.spec.layers.iter().enumerate() {
                h = layers::forward(layer, &self.params[i], h, None).0;
            }
            out.extend_from_slice(h.data());
            start = end;
        }
        Tensor::new(vec![n, width], out)
    }

    /// Reverse-mode pass; `loss_grad` is the gradient w.r.t. the outputs.
    pub fn backward(&self, cache: &ForwardCache, loss_grad: &Tensor) -> Result<Gradients> {
        if cache.version != self.version {
            return Err(Error::StaleCache(format!(
                "cache from parameter version {}, network is at {}",
                cache.version, self.version
            )));
        }
        if loss_grad.shape() != cache.output_shape.as_slice() {
            return Err(Error::ShapeMismatch { expected: cache.output_shape.clone(), got: loss_grad.shape().to_vec() });
        }
        debug_assert_eq!(cache.batch, loss_grad.batch());
        let mut grads = self.zero_gradients();
        let mut dy = loss_grad.clone();
        for i in (0..self.spec.layers.len()).rev() {
            let need_dx = i > 0;
            let dx = layers::backward(
                &self.spec.layers[i],
                &self.params[i],
                &cache.layers[i],
                dy,
                &mut grads.tensors[i],
                need_dx,
            );
            match dx {
                Some(d) => dy = d,
                None => break,
            }
        }
        Ok(grads)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{Activation, Loss};

    #[test]
    fn zero_weights_give_zero_linear_output() {
        let spec = NetworkSpec::new(vec![3], vec![LayerSpec::dense(4, Activation::Linear)], Loss::Mse);
        let net = Network::zeros(spec).unwrap();
        let x = Tensor::new(vec![2, 3], vec![1.0, -2.0, 0.5, 3.0, 3.0, 3.0]).unwrap();
        let (y, _) = net.forward(&x, None).unwrap();
        assert!(y.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn equal_logits_give_uniform_softmax() {
        let spec = NetworkSpec::new(vec![2], vec![LayerSpec::dense(5, Activation::Softmax)], Loss::SoftmaxCrossEntropy);
        let net = Network::zeros(spec).unwrap();
        let x = Tensor::new(vec![1, 2], vec![0.3, 0.4]).unwrap();
        let y = net.predict(&x).unwrap();
        assert!(y.data().iter().all(|&p| (p - 0.2).abs() < 1e-15));
    }

    #[test]
    fn single_sample_linear_mse_gradient_is_closed_form() {
        let spec = NetworkSpec::new(vec![3], vec![LayerSpec::dense(1, Activation::Linear)], Loss::Mse);
        let mut net = Network::new(spec, 4).unwrap();
        net.params_mut()[0][1].data_mut()[0] = 0.25;
        let x = Tensor::new(vec![1, 3], vec![0.5, -1.0, 2.0]).unwrap();
        let target = Tensor::new(vec![1, 1], vec![0.7]).unwrap();
        let (y, cache) = net.forward(&x, None).unwrap();
        let (_, g) = crate::nn::loss_and_grad(Loss::Mse, &y, &target).unwrap();
        let grads = net.backward(&cache, &g).unwrap();
        let resid = y.data()[0] - 0.7;
        for (j, xj) in x.data().iter().enumerate() {
            assert!((grads.tensors[0][0].data()[j] - 2.0 * resid * xj).abs() < 1e-14);
        }
        assert!((grads.tensors[0][1].data()[0] - 2.0 * resid).abs() < 1e-14);
    }

    #[test]
    fn zero_upstream_gradient_gives_zero_gradients() {
        let spec = NetworkSpec::new(
            vec![6, 1],
            vec![
                LayerSpec::lstm(4, true),
                LayerSpec::conv1d(3, 2),
                LayerSpec::Flatten,
                LayerSpec::dense(2, Activation::Softmax),
            ],
            Loss::SoftmaxCrossEntropy,
        );
        let net = Network::new(spec, 1).unwrap();
        let x = Tensor::new(vec![3, 6, 1], (0..18).map(|i| (i as f64).sin()).collect()).unwrap();
        let (y, cache) = net.forward(&x, None).unwrap();
        let grads = net.backward(&cache, &Tensor::zeros(y.shape())).unwrap();
        assert_eq!(grads.max_abs(), 0.0);
    }

    #[test]
    fn stale_cache_and_bad_shapes_are_rejected() {
        let spec = NetworkSpec::new(vec![2], vec![LayerSpec::dense(2, Activation::Tanh)], Loss::Mse);
        let mut net = Network::new(spec, 1).unwrap();
        let x = Tensor::new(vec![1, 2], vec![0.1, 0.2]).unwrap();
        let (y, cache) = net.forward(&x, None).unwrap();
        net.params_mut()[0][0].data_mut()[0] += 1.0;
        assert!(matches!(net.backward(&cache, &y), Err(Error::StaleCache(_))));

        let wrong = Tensor::new(vec![1, 3], vec![0.1, 0.2, 0.3]).unwrap();
        assert!(matches!(net.forward(&wrong, None), Err(Error::ShapeMismatch { .. })));
    }

    #[test]
    fn predict_matches_forward_across_chunks() {
        let spec = NetworkSpec::new(
            vec![4, 1],
            vec![LayerSpec::lstm(3, false), LayerSpec::dense(2, Activation::Linear)],
            Loss::Mse,
        );
        let net = Network::new(spec, 2).unwrap();
        let n = PREDICT_CHUNK + 17;
        let x = Tensor::new(vec![n, 4, 1], (0..4 * n).map(|i| (i as f64 * 0.01).cos()).collect()).unwrap();
        let (y, _) = net.forward(&x, None).unwrap();
        assert_eq!(net.predict(&x).unwrap(), y);
    }
}
