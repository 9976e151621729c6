//! Model state, forward pass and backpropagation.
//!
//! Samples are processed one at a time in batch order and gradients are
//! summed in that same order, so results are bitwise reproducible.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::data::Dataset;
use crate::error::{arg_err, Error, Result};
use crate::nn::layer::{Layer, LayerKind, LayerSpec};

#[derive(Debug, Clone, PartialEq)]
pub struct ModelState {
    layers: Vec<Layer>,
    /// Seed used for weight initialization.
    pub seed: u64,
    /// Optimizer steps taken so far.
    pub step: u64,
}

impl ModelState {
    pub fn new(layers: Vec<Layer>, seed: u64, step: u64) -> Result<Self> {
        let mut names = BTreeSet::new();
        for (i, layer) in layers.iter().enumerate() {
            if !names.insert(layer.name()) {
                return Err(arg_err!("duplicate layer name {}", layer.name()));
            }
            if layer.kind() == LayerKind::SoftmaxXent && i + 1 != layers.len() {
                return Err(arg_err!("softmax_xent must be the last layer"));
            }
            if layer.weight().iter().chain(layer.bias()).any(|v| !v.is_finite()) {
                return Err(arg_err!("layer {} has non-finite parameters", layer.name()));
            }
        }
        Ok(Self { layers, seed, step })
    }

    /// He-normal weights (`std = sqrt(2 / fan_in)`), zero biases.
    pub fn init(specs: Vec<LayerSpec>, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut layers = Vec::with_capacity(specs.len());
        for spec in specs {
            let fan_in = spec.kind.fan_in();
            let weight = if fan_in > 0 {
                let normal = Normal::new(0.0, libm::sqrt(2.0 / fan_in as f64))
                    .map_err(|e| arg_err!("bad init distribution: {e}"))?;
                (0..spec.kind.weight_len()).map(|_| normal.sample(&mut rng)).collect()
            } else {
                Vec::new()
            };
            let bias = vec![0.0; spec.kind.bias_len()];
            layers.push(Layer::new(spec, weight, bias)?);
        }
        Self::new(layers, seed, 0)
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn specs(&self) -> Vec<LayerSpec> {
        self.layers.iter().map(|l| l.spec().clone()).collect()
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(Layer::param_count).sum()
    }
}

/// Activation extents `(channels, height, width)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Shape3 {
    pub c: usize,
    pub h: usize,
    pub w: usize,
}

impl Shape3 {
    pub fn len(&self) -> usize {
        self.c * self.h * self.w
    }
}

/// Per-layer gradient buffers mirroring the model's parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub weight: Vec<Vec<f64>>,
    pub bias: Vec<Vec<f64>>,
}

impl Gradients {
    pub fn zeros_like(model: &ModelState) -> Self {
        Self {
            weight: model.layers.iter().map(|l| vec![0.0; l.weight().len()]).collect(),
            bias: model.layers.iter().map(|l| vec![0.0; l.bias().len()]).collect(),
        }
    }

    fn scale(&mut self, k: f64) {
        for v in self.weight.iter_mut().chain(self.bias.iter_mut()) {
            v.iter_mut().for_each(|g| *g *= k);
        }
    }

    fn all_finite(&self) -> bool {
        self.weight
            .iter()
            .chain(&self.bias)
            .all(|v| v.iter().all(|g| g.is_finite()))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchOutput {
    pub logits: Vec<Vec<f64>>,
    /// Mean softmax cross-entropy.
    pub loss: f64,
    pub accuracy: f64,
}

struct Trace {
    /// Input of each layer followed by the final output.
    acts: Vec<Vec<f64>>,
    shapes: Vec<Shape3>,
    pool_argmax: Vec<Vec<usize>>,
}

fn out_extent(size: usize, d: usize, stride: usize, padding: usize) -> Result<usize> {
    if size + 2 * padding < d {
        return Err(arg_err!("kernel {d} larger than padded extent {}", size + 2 * padding));
    }
    Ok((size + 2 * padding - d) / stride + 1)
}

fn layer_forward(layer: &Layer, x: &[f64], shape: Shape3) -> Result<(Vec<f64>, Shape3, Vec<usize>)> {
    match layer.kind() {
        LayerKind::Conv2d { d, in_ch, out_ch, stride, padding, .. } => {
            if shape.c != in_ch {
                return Err(arg_err!("layer {} expects {in_ch} channels, got {}", layer.name(), shape.c));
            }
            let ho = out_extent(shape.h, d, stride, padding)?;
            let wo = out_extent(shape.w, d, stride, padding)?;
            let mut out = vec![0.0; out_ch * ho * wo];
            if !layer.bias().is_empty() {
                for (t, b) in layer.bias().iter().enumerate() {
                    out[t * ho * wo..(t + 1) * ho * wo].iter_mut().for_each(|o| *o = *b);
                }
            }
            let k = layer.weight();
            for i in 0..d {
                for j in 0..d {
                    for s in 0..in_ch {
                        let kbase = ((i * d + j) * in_ch + s) * out_ch;
                        for y in 0..ho {
                            let yy = y * stride + i;
                            if yy < padding || yy - padding >= shape.h {
                                continue;
                            }
                            let row = (s * shape.h + yy - padding) * shape.w;
                            for xo in 0..wo {
                                let xx = xo * stride + j;
                                if xx < padding || xx - padding >= shape.w {
                                    continue;
                                }
                                let v = x[row + xx - padding];
                                if v == 0.0 {
                                    continue;
                                }
                                for t in 0..out_ch {
                                    out[(t * ho + y) * wo + xo] += k[kbase + t] * v;
                                }
                            }
                        }
                    }
                }
            }
            Ok((out, Shape3 { c: out_ch, h: ho, w: wo }, Vec::new()))
        }
        LayerKind::Relu => Ok((x.iter().map(|&v| v.max(0.0)).collect(), shape, Vec::new())),
        LayerKind::MaxPool { k } => {
            if shape.h < k || shape.w < k {
                return Err(arg_err!("pool {k} larger than {}x{}", shape.h, shape.w));
            }
            let (ho, wo) = (shape.h / k, shape.w / k);
            let mut out = Vec::with_capacity(shape.c * ho * wo);
            let mut arg = Vec::with_capacity(shape.c * ho * wo);
            for c in 0..shape.c {
                for y in 0..ho {
                    for xo in 0..wo {
                        let mut best = usize::MAX;
                        let mut best_v = f64::NEG_INFINITY;
                        for i in 0..k {
                            for j in 0..k {
                                let idx = (c * shape.h + y * k + i) * shape.w + xo * k + j;
                                if best == usize::MAX || x[idx] > best_v {
                                    best = idx;
                                    best_v = x[idx];
                                }
                            }
                        }
                        out.push(best_v);
                        arg.push(best);
                    }
                }
            }
            Ok((out, Shape3 { c: shape.c, h: ho, w: wo }, arg))
        }
        LayerKind::GlobalAvgPool => {
            let hw = (shape.h * shape.w) as f64;
            let out = (0..shape.c)
                .map(|c| x[c * shape.h * shape.w..(c + 1) * shape.h * shape.w].iter().sum::<f64>() / hw)
                .collect();
            Ok((out, Shape3 { c: shape.c, h: 1, w: 1 }, Vec::new()))
        }
        LayerKind::Dense { inputs, outputs, .. } => {
            if x.len() != inputs {
                return Err(arg_err!("layer {} expects {inputs} inputs, got {}", layer.name(), x.len()));
            }
            let w = layer.weight();
            let out = (0..outputs)
                .map(|o| {
                    let dot: f64 = w[o * inputs..(o + 1) * inputs].iter().zip(x).map(|(a, b)| a * b).sum();
                    dot + layer.bias().get(o).copied().unwrap_or(0.0)
                })
                .collect();
            Ok((out, Shape3 { c: outputs, h: 1, w: 1 }, Vec::new()))
        }
        LayerKind::SoftmaxXent => Ok((x.to_vec(), shape, Vec::new())),
    }
}

/// Returns the gradient with respect to the layer input and accumulates
/// parameter gradients into `gw`/`gb`.
#[allow(clippy::too_many_arguments)]
fn layer_backward(
    layer: &Layer,
    x: &[f64],
    in_shape: Shape3,
    out_shape: Shape3,
    g_out: &[f64],
    argmax: &[usize],
    gw: &mut [f64],
    gb: &mut [f64],
) -> Vec<f64> {
    match layer.kind() {
        LayerKind::Conv2d { d, in_ch, out_ch, stride, padding, .. } => {
            let (ho, wo) = (out_shape.h, out_shape.w);
            let mut g_in = vec![0.0; in_shape.len()];
            if !gb.is_empty() {
                for t in 0..out_ch {
                    gb[t] += g_out[t * ho * wo..(t + 1) * ho * wo].iter().sum::<f64>();
                }
            }
            let k = layer.weight();
            for i in 0..d {
                for j in 0..d {
                    for s in 0..in_ch {
                        let kbase = ((i * d + j) * in_ch + s) * out_ch;
                        for y in 0..ho {
                            let yy = y * stride + i;
                            if yy < padding || yy - padding >= in_shape.h {
                                continue;
                            }
                            let row = (s * in_shape.h + yy - padding) * in_shape.w;
                            for xo in 0..wo {
                                let xx = xo * stride + j;
                                if xx < padding || xx - padding >= in_shape.w {
                                    continue;
                                }
                                let xi = row + xx - padding;
                                let v = x[xi];
                                let mut acc = 0.0;
                                for t in 0..out_ch {
                                    let g = g_out[(t * ho + y) * wo + xo];
                                    gw[kbase + t] += g * v;
                                    acc += k[kbase + t] * g;
                                }
                                g_in[xi] += acc;
                            }
                        }
                    }
                }
            }
            g_in
        }
        LayerKind::Relu => x.iter().zip(g_out).map(|(&v, &g)| if v > 0.0 { g } else { 0.0 }).collect(),
        LayerKind::MaxPool { .. } => {
            let mut g_in = vec![0.0; in_shape.len()];
            for (&idx, &g) in argmax.iter().zip(g_out) {
                g_in[idx] += g;
            }
            g_in
        }
        LayerKind::GlobalAvgPool => {
            let hw = in_shape.h * in_shape.w;
            let mut g_in = vec![0.0; in_shape.len()];
            for c in 0..in_shape.c {
                let g = g_out[c] / hw as f64;
                g_in[c * hw..(c + 1) * hw].iter_mut().for_each(|v| *v = g);
            }
            g_in
        }
        LayerKind::Dense { inputs, outputs, .. } => {
            let w = layer.weight();
            let mut g_in = vec![0.0; inputs];
            for o in 0..outputs {
                let g = g_out[o];
                if !gb.is_empty() {
                    gb[o] += g;
                }
                let row = &w[o * inputs..(o + 1) * inputs];
                let grow = &mut gw[o * inputs..(o + 1) * inputs];
                for ((gi, gwv), (&wv, &xv)) in g_in.iter_mut().zip(grow).zip(row.iter().zip(x)) {
                    *gi += g * wv;
                    *gwv += g * xv;
                }
            }
            g_in
        }
        LayerKind::SoftmaxXent => g_out.to_vec(),
    }
}

fn trace(model: &ModelState, x: &[f64], shape: Shape3) -> Result<Trace> {
    let mut acts = Vec::with_capacity(model.layers.len() + 1);
    let mut shapes = Vec::with_capacity(model.layers.len() + 1);
    let mut pool_argmax = Vec::with_capacity(model.layers.len());
    acts.push(x.to_vec());
    shapes.push(shape);
    for layer in &model.layers {
        let (out, s, arg) = layer_forward(layer, acts.last().unwrap(), *shapes.last().unwrap())?;
        acts.push(out);
        shapes.push(s);
        pool_argmax.push(arg);
    }
    Ok(Trace { acts, shapes, pool_argmax })
}

/// Cross-entropy of `logits` against `label`, and the softmax probabilities.
fn softmax_xent(logits: &[f64], label: usize) -> (f64, Vec<f64>) {
    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|z| libm::exp(z - m)).collect();
    let sum: f64 = exps.iter().sum();
    let lse = m + libm::log(sum);
    (lse - logits[label], exps.into_iter().map(|e| e / sum).collect())
}

/// Index of the largest logit; the first one wins ties.
pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

fn input_shape(data: &Dataset) -> Shape3 {
    Shape3 { c: data.channels(), h: data.height(), w: data.width() }
}

fn check_logits(logits: &[f64], data: &Dataset) -> Result<()> {
    if logits.len() != data.classes() {
        return Err(arg_err!(
            "model emits {} logits for {} classes",
            logits.len(),
            data.classes()
        ));
    }
    Ok(())
}

/// Logits for a single `(c, h, w)` input.
pub fn predict(model: &ModelState, x: &[f64], shape: Shape3) -> Result<Vec<f64>> {
    if x.len() != shape.len() {
        return Err(arg_err!("input has {} values, shape needs {}", x.len(), shape.len()));
    }
    Ok(trace(model, x, shape)?.acts.pop().unwrap())
}

pub fn forward(model: &ModelState, data: &Dataset, indices: &[usize]) -> Result<BatchOutput> {
    if indices.is_empty() {
        return Err(arg_err!("empty batch"));
    }
    let shape = input_shape(data);
    let mut logits = Vec::with_capacity(indices.len());
    let mut loss = 0.0;
    let mut correct = 0usize;
    for &i in indices {
        let z = predict(model, data.image(i), shape)?;
        check_logits(&z, data)?;
        loss += softmax_xent(&z, data.label(i)).0;
        if argmax(&z) == data.label(i) {
            correct += 1;
        }
        logits.push(z);
    }
    let n = indices.len() as f64;
    let loss = loss / n;
    if !loss.is_finite() {
        return Err(Error::Numerical(format!("non-finite loss {loss}")));
    }
    Ok(BatchOutput { logits, loss, accuracy: correct as f64 / n })
}

/// Mean loss over the batch and its gradient.
pub fn loss_and_gradients(model: &ModelState, data: &Dataset, indices: &[usize]) -> Result<(f64, Gradients)> {
    if indices.is_empty() {
        return Err(arg_err!("empty batch"));
    }
    let shape = input_shape(data);
    let mut grads = Gradients::zeros_like(model);
    let mut loss = 0.0;
    for &i in indices {
        let x = data.image(i);
        if x.len() != shape.len() {
            return Err(arg_err!("sample {i} has the wrong size"));
        }
        let tr = trace(model, x, shape)?;
        let z = tr.acts.last().unwrap();
        check_logits(z, data)?;
        let (l, mut g) = softmax_xent(z, data.label(i));
        loss += l;
        g[data.label(i)] -= 1.0;
        for li in (0..model.layers.len()).rev() {
            g = layer_backward(
                &model.layers[li],
                &tr.acts[li],
                tr.shapes[li],
                tr.shapes[li + 1],
                &g,
                &tr.pool_argmax[li],
                &mut grads.weight[li],
                &mut grads.bias[li],
            );
        }
    }
    let n = indices.len() as f64;
    grads.scale(1.0 / n);
    let loss = loss / n;
    if !loss.is_finite() {
        return Err(Error::Numerical(format!("non-finite loss {loss}")));
    }
    if !grads.all_finite() {
        return Err(Error::Numerical("non-finite gradient".into()));
    }
    Ok((loss, grads))
}

/// Mean loss and accuracy over the whole dataset; weights are not touched.
pub fn evaluate(model: &ModelState, data: &Dataset) -> Result<(f64, f64)> {
    if data.is_empty() {
        return Err(arg_err!("cannot evaluate on an empty dataset"));
    }
    let idx: Vec<usize> = (0..data.len()).collect();
    let out = forward(model, data, &idx)?;
    Ok((out.loss, out.accuracy))
}
