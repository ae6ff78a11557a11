//! Forward and backward kernels for every layer type.
//!
//! Gradient buffers are zeroed by the caller and accumulated into here.

use rand::Rng;

use super::gemm::{gemm, View};
use super::{Activation, LayerSpec, Tensor};
use crate::seed::Stream;

pub(crate) enum LayerCache {
    Dense {
        input: Tensor,
        output: Tensor,
    },
    Lstm {
        input: Tensor,
        /// Activated gates `[i, f, g, o]` per `(batch, step)`.
        gates: Vec<f64>,
        cells: Vec<f64>,
        tanh_cells: Vec<f64>,
        hidden: Vec<f64>,
    },
    Conv1d {
        in_shape: Vec<usize>,
        patches: Vec<f64>,
        output: Tensor,
    },
    MaxPool1d {
        in_shape: Vec<usize>,
        argmax: Vec<usize>,
    },
    Dropout {
        mask: Option<Vec<f64>>,
    },
    Flatten {
        in_shape: Vec<usize>,
    },
}

#[inline]
fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn activate(act: Activation, data: &mut [f64], width: usize) {
    match act {
        Activation::Linear => {}
        Activation::Relu => data.iter_mut().for_each(|x| {
            if *x < 0.0 {
                *x = 0.0;
            }
        }),
        Activation::Tanh => data.iter_mut().for_each(|x| *x = x.tanh()),
        Activation::Softmax => {
            for row in data.chunks_mut(width) {
                let max = row.iter().fold(f64::NEG_INFINITY, |m, &x| m.max(x));
                let mut sum = 0.0;
                for x in row.iter_mut() {
                    *x = (*x - max).exp();
                    sum += *x;
                }
                row.iter_mut().for_each(|x| *x /= sum);
            }
        }
    }
}

/// Turns `grad` (w.r.t. the activated output `out`) into the gradient w.r.t.
/// the pre-activation, in place.
fn activate_backward(act: Activation, out: &[f64], grad: &mut [f64], width: usize) {
    match act {
        Activation::Linear => {}
        Activation::Relu => {
            for (g, &y) in grad.iter_mut().zip(out) {
                if y <= 0.0 {
                    *g = 0.0;
                }
            }
        }
        Activation::Tanh => {
            for (g, &y) in grad.iter_mut().zip(out) {
                *g *= 1.0 - y * y;
            }
        }
        Activation::Softmax => {
            for (g, y) in grad.chunks_mut(width).zip(out.chunks(width)) {
                let dot: f64 = g.iter().zip(y).map(|(a, b)| a * b).sum();
                for (gi, &yi) in g.iter_mut().zip(y) {
                    *gi = yi * (*gi - dot);
                }
            }
        }
    }
}

fn fill_rows(dst: &mut [f64], bias: &[f64]) {
    for row in dst.chunks_mut(bias.len()) {
        row.copy_from_slice(bias);
    }
}

fn add_col_sums(dst: &mut [f64], src: &[f64]) {
    for row in src.chunks(dst.len()) {
        for (d, s) in dst.iter_mut().zip(row) {
            *d += s;
        }
    }
}

pub(crate) fn forward(
    spec: &LayerSpec,
    params: &[Tensor],
    x: Tensor,
    rng: Option<&mut Stream>,
) -> (Tensor, LayerCache) {
    match *spec {
        LayerSpec::Dense { units, activation } => dense_forward(params, x, units, activation),
        LayerSpec::Lstm { units, return_sequences } => lstm_forward(params, x, units, return_sequences),
        LayerSpec::Conv1d { filters, kernel_size, activation } => {
            conv_forward(params, x, filters, kernel_size, activation)
        }
        LayerSpec::MaxPool1d { pool_size } => pool_forward(x, pool_size),
        LayerSpec::Dropout { rate } => match rng {
            Some(rng) if rate > 0.0 => {
                let scale = 1.0 / (1.0 - rate);
                let mask: Vec<f64> =
                    (0..x.len()).map(|_| if rng.random::<f64>() < rate { 0.0 } else { scale }).collect();
                let mut y = x;
                y.data_mut().iter_mut().zip(&mask).for_each(|(v, m)| *v *= m);
                (y, LayerCache::Dropout { mask: Some(mask) })
            }
            _ => (x, LayerCache::Dropout { mask: None }),
        },
        LayerSpec::Flatten => {
            let in_shape = x.shape().to_vec();
            let b = x.batch();
            let w = x.row_len();
            let y = x.reshape(&[b, w]).expect("flatten preserves size");
            (y, LayerCache::Flatten { in_shape })
        }
    }
}

/// Returns the input gradient when `need_dx` is set.
pub(crate) fn backward(
    spec: &LayerSpec,
    params: &[Tensor],
    cache: &LayerCache,
    dy: Tensor,
    grads: &mut [Tensor],
    need_dx: bool,
) -> Option<Tensor> {
    match (spec, cache) {
        (LayerSpec::Dense { units, activation }, LayerCache::Dense { input, output }) => {
            dense_backward(params, input, output, dy, grads, *units, *activation, need_dx)
        }
        (LayerSpec::Lstm { units, return_sequences }, LayerCache::Lstm { input, gates, cells, tanh_cells, hidden }) => {
            let st = LstmState { gates, cells, tanh_cells, hidden };
            lstm_backward(params, input, &st, dy, grads, *units, *return_sequences, need_dx)
        }
        (LayerSpec::Conv1d { filters, kernel_size, activation }, LayerCache::Conv1d { in_shape, patches, output }) => {
            conv_backward(params, in_shape, patches, output, dy, grads, *filters, *kernel_size, *activation, need_dx)
        }
        (LayerSpec::MaxPool1d { .. }, LayerCache::MaxPool1d { in_shape, argmax }) => {
            let mut dx = Tensor::zeros(in_shape);
            let d = dx.data_mut();
            for (&src, &g) in argmax.iter().zip(dy.data()) {
                d[src] += g;
            }
            Some(dx)
        }
        (LayerSpec::Dropout { .. }, LayerCache::Dropout { mask }) => {
            let mut dx = dy;
            if let Some(mask) = mask {
                dx.data_mut().iter_mut().zip(mask).for_each(|(v, m)| *v *= m);
            }
            Some(dx)
        }
        (LayerSpec::Flatten, LayerCache::Flatten { in_shape }) => Some(dy.reshape(in_shape).expect("same size")),
        _ => unreachable!("layer cache does not match its spec"),
    }
}

fn dense_forward(params: &[Tensor], x: Tensor, units: usize, act: Activation) -> (Tensor, LayerCache) {
    let (w, b) = (&params[0], &params[1]);
    let batch = x.batch();
    let inp = x.row_len();
    let mut y = Tensor::zeros(&[batch, units]);
    fill_rows(y.data_mut(), b.data());
    gemm(
        batch,
        inp,
        units,
        1.0,
        View::rows(x.data(), inp),
        View::rows(w.data(), units),
        1.0,
        y.data_mut(),
        0,
        units,
        1,
    );
    activate(act, y.data_mut(), units);
    let out = y.clone();
    (y, LayerCache::Dense { input: x, output: out })
}

#[allow(clippy::too_many_arguments)]
fn dense_backward(
    params: &[Tensor],
    x: &Tensor,
    y: &Tensor,
    mut dz: Tensor,
    grads: &mut [Tensor],
    units: usize,
    act: Activation,
    need_dx: bool,
) -> Option<Tensor> {
    let batch = x.batch();
    let inp = x.row_len();
    activate_backward(act, y.data(), dz.data_mut(), units);
    let (gw, rest) = grads.split_at_mut(1);
    gemm(
        inp,
        batch,
        units,
        1.0,
        View::rows_t(x.data(), inp),
        View::rows(dz.data(), units),
        1.0,
        gw[0].data_mut(),
        0,
        units,
        1,
    );
    add_col_sums(rest[0].data_mut(), dz.data());
    if !need_dx {
        return None;
    }
    let mut dx = Tensor::zeros(x.shape());
    gemm(
        batch,
        units,
        inp,
        1.0,
        View::rows(dz.data(), units),
        View::rows_t(params[0].data(), units),
        0.0,
        dx.data_mut(),
        0,
        inp,
        1,
    );
    Some(dx)
}

struct LstmState<'a> {
    gates: &'a [f64],
    cells: &'a [f64],
    tanh_cells: &'a [f64],
    hidden: &'a [f64],
}

fn lstm_forward(params: &[Tensor], x: Tensor, u: usize, return_sequences: bool) -> (Tensor, LayerCache) {
    let (wx, wh, bias) = (&params[0], &params[1], &params[2]);
    let (batch, steps, ch) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    let g4 = 4 * u;
    let rows = batch * steps;

    let mut gates = vec![0.0; rows * g4];
    fill_rows(&mut gates, bias.data());
    gemm(rows, ch, g4, 1.0, View::rows(x.data(), ch), View::rows(wx.data(), g4), 1.0, &mut gates, 0, g4, 1);

    let mut cells = vec![0.0; rows * u];
    let mut tanh_cells = vec![0.0; rows * u];
    let mut hidden = vec![0.0; rows * u];
    for t in 0..steps {
        if t > 0 {
            gemm(
                batch,
                u,
                g4,
                1.0,
                View::strided(&hidden, (t - 1) * u, steps * u, 1),
                View::rows(wh.data(), g4),
                1.0,
                &mut gates,
                t * g4,
                steps * g4,
                1,
            );
        }
        for b in 0..batch {
            let row = b * steps + t;
            let gz = &mut gates[row * g4..(row + 1) * g4];
            for j in 0..u {
                let i = sigmoid(gz[j]);
                let f = sigmoid(gz[u + j]);
                let g = gz[2 * u + j].tanh();
                let o = sigmoid(gz[3 * u + j]);
                gz[j] = i;
                gz[u + j] = f;
                gz[2 * u + j] = g;
                gz[3 * u + j] = o;
                let c_prev = if t > 0 { cells[(row - 1) * u + j] } else { 0.0 };
                let c = f * c_prev + i * g;
                let tc = c.tanh();
                cells[row * u + j] = c;
                tanh_cells[row * u + j] = tc;
                hidden[row * u + j] = o * tc;
            }
        }
    }

    let y = if return_sequences {
        Tensor::new(vec![batch, steps, u], hidden.clone()).expect("consistent")
    } else {
        let mut last = Vec::with_capacity(batch * u);
        for b in 0..batch {
            let row = b * steps + steps - 1;
            last.extend_from_slice(&hidden[row * u..(row + 1) * u]);
        }
        Tensor::new(vec![batch, u], last).expect("consistent")
    };
    (y, LayerCache::Lstm { input: x, gates, cells, tanh_cells, hidden })
}

#[allow(clippy::too_many_arguments)]
fn lstm_backward(
    params: &[Tensor],
    x: &Tensor,
    st: &LstmState<'_>,
    dy: Tensor,
    grads: &mut [Tensor],
    u: usize,
    return_sequences: bool,
    need_dx: bool,
) -> Option<Tensor> {
    let (wx, wh) = (&params[0], &params[1]);
    let (batch, steps, ch) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    let g4 = 4 * u;
    let rows = batch * steps;
    let dyd = dy.data();

    let mut dz = vec![0.0; rows * g4];
    let mut dh_rec = vec![0.0; batch * u];
    let mut dc = vec![0.0; batch * u];
    let (gwx, rest) = grads.split_at_mut(1);
    let (gwh, gb) = rest.split_at_mut(1);

    for t in (0..steps).rev() {
        for b in 0..batch {
            let row = b * steps + t;
            let gz = &st.gates[row * g4..(row + 1) * g4];
            let dzr = &mut dz[row * g4..(row + 1) * g4];
            for j in 0..u {
                let ext = if return_sequences {
                    dyd[row * u + j]
                } else if t == steps - 1 {
                    dyd[b * u + j]
                } else {
                    0.0
                };
                let dh = dh_rec[b * u + j] + ext;
                let (i, f, g, o) = (gz[j], gz[u + j], gz[2 * u + j], gz[3 * u + j]);
                let tc = st.tanh_cells[row * u + j];
                let c_prev = if t > 0 { st.cells[(row - 1) * u + j] } else { 0.0 };
                let dct = dc[b * u + j] + dh * o * (1.0 - tc * tc);
                dc[b * u + j] = dct * f;
                dzr[j] = dct * g * i * (1.0 - i);
                dzr[u + j] = dct * c_prev * f * (1.0 - f);
                dzr[2 * u + j] = dct * i * (1.0 - g * g);
                dzr[3 * u + j] = dh * tc * o * (1.0 - o);
            }
        }
        if t > 0 {
            let dzt = View::strided(&dz, t * g4, steps * g4, 1);
            gemm(batch, g4, u, 1.0, dzt, View::rows_t(wh.data(), g4), 0.0, &mut dh_rec, 0, u, 1);
            gemm(
                u,
                batch,
                g4,
                1.0,
                View::strided(st.hidden, (t - 1) * u, 1, steps * u),
                dzt,
                1.0,
                gwh[0].data_mut(),
                0,
                g4,
                1,
            );
        }
    }
    gemm(ch, rows, g4, 1.0, View::rows_t(x.data(), ch), View::rows(&dz, g4), 1.0, gwx[0].data_mut(), 0, g4, 1);
    add_col_sums(gb[0].data_mut(), &dz);
    if !need_dx {
        return None;
    }
    let mut dx = Tensor::zeros(x.shape());
    gemm(rows, g4, ch, 1.0, View::rows(&dz, g4), View::rows_t(wx.data(), g4), 0.0, dx.data_mut(), 0, ch, 1);
    Some(dx)
}

fn conv_forward(params: &[Tensor], x: Tensor, filters: usize, k: usize, act: Activation) -> (Tensor, LayerCache) {
    let (w, bias) = (&params[0], &params[1]);
    let (batch, steps, ch) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    let out_steps = steps - k + 1;
    let kc = k * ch;
    let rows = batch * out_steps;
    // a window of k consecutive steps is contiguous in [batch, time, channels]
    let mut patches = Vec::with_capacity(rows * kc);
    let xd = x.data();
    for b in 0..batch {
        for t in 0..out_steps {
            let start = (b * steps + t) * ch;
            patches.extend_from_slice(&xd[start..start + kc]);
        }
    }
    let mut y = Tensor::zeros(&[batch, out_steps, filters]);
    fill_rows(y.data_mut(), bias.data());
    gemm(
        rows,
        kc,
        filters,
        1.0,
        View::rows(&patches, kc),
        View::rows(w.data(), filters),
        1.0,
        y.data_mut(),
        0,
        filters,
        1,
    );
    activate(act, y.data_mut(), filters);
    let out = y.clone();
    (y, LayerCache::Conv1d { in_shape: x.shape().to_vec(), patches, output: out })
}

#[allow(clippy::too_many_arguments)]
fn conv_backward(
    params: &[Tensor],
    in_shape: &[usize],
    patches: &[f64],
    y: &Tensor,
    mut dz: Tensor,
    grads: &mut [Tensor],
    filters: usize,
    k: usize,
    act: Activation,
    need_dx: bool,
) -> Option<Tensor> {
    let (batch, steps, ch) = (in_shape[0], in_shape[1], in_shape[2]);
    let out_steps = steps - k + 1;
    let kc = k * ch;
    let rows = batch * out_steps;
    activate_backward(act, y.data(), dz.data_mut(), filters);
    let (gw, gb) = grads.split_at_mut(1);
    gemm(
        kc,
        rows,
        filters,
        1.0,
        View::rows_t(patches, kc),
        View::rows(dz.data(), filters),
        1.0,
        gw[0].data_mut(),
        0,
        filters,
        1,
    );
    add_col_sums(gb[0].data_mut(), dz.data());
    if !need_dx {
        return None;
    }
    let mut dpatch = vec![0.0; rows * kc];
    gemm(
        rows,
        filters,
        kc,
        1.0,
        View::rows(dz.data(), filters),
        View::rows_t(params[0].data(), filters),
        0.0,
        &mut dpatch,
        0,
        kc,
        1,
    );
    let mut dx = Tensor::zeros(in_shape);
    let dxd = dx.data_mut();
    for b in 0..batch {
        for t in 0..out_steps {
            let start = (b * steps + t) * ch;
            let src = &dpatch[(b * out_steps + t) * kc..(b * out_steps + t + 1) * kc];
            for (d, s) in dxd[start..start + kc].iter_mut().zip(src) {
                *d += s;
            }
        }
    }
    Some(dx)
}

fn pool_forward(x: Tensor, p: usize) -> (Tensor, LayerCache) {
    let (batch, steps, ch) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    let out_steps = steps / p;
    let xd = x.data();
    let mut y = Vec::with_capacity(batch * out_steps * ch);
    let mut argmax = Vec::with_capacity(batch * out_steps * ch);
    for b in 0..batch {
        for t in 0..out_steps {
            for c in 0..ch {
                let mut best = (b * steps + t * p) * ch + c;
                for s in 1..p {
                    let idx = (b * steps + t * p + s) * ch + c;
                    // strict comparison keeps the first maximum
                    if xd[idx] > xd[best] {
                        best = idx;
                    }
                }
                argmax.push(best);
                y.push(xd[best]);
            }
        }
    }
    let y = Tensor::new(vec![batch, out_steps, ch], y).expect("consistent");
    (y, LayerCache::MaxPool1d { in_shape: x.shape().to_vec(), argmax })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn softmax_rows_are_distributions() {
        let mut v = vec![1.0, 1.0, 1.0, 1.0, 1.0, -3.0, 0.0, 700.0, 2.0, 1.0];
        activate(Activation::Softmax, &mut v, 5);
        for x in &v[..5] {
            assert!((x - 0.2).abs() < 1e-15);
        }
        let s: f64 = v[5..].iter().sum();
        assert!((s - 1.0).abs() < 1e-12);
        assert!(v.iter().all(|&x| x >= 0.0));
    }

    #[test]
    fn max_pool_routes_each_gradient_once() {
        let x = Tensor::new(vec![1, 4, 2], vec![1.0, 5.0, 3.0, 2.0, -1.0, 0.0, -2.0, 0.5]).unwrap();
        let (y, cache) = pool_forward(x, 2);
        assert_eq!(y.data(), &[3.0, 5.0, -1.0, 0.5]);
        let dy = Tensor::new(vec![1, 2, 2], vec![1.0, -2.0, 3.0, 4.0]).unwrap();
        let dx = backward(&LayerSpec::MaxPool1d { pool_size: 2 }, &[], &cache, dy, &mut [], true).unwrap();
        assert_eq!(dx.data(), &[0.0, -2.0, 1.0, 0.0, 3.0, 0.0, 0.0, 4.0]);
    }
}
