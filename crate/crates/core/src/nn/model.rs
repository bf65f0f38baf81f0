use std::ops::Range;

use rand::Rng as _;
use rand_distr::{Distribution, Uniform};
use serde::{Deserialize, Serialize};

use super::adapter::{Adapter, AdapterKind, AdapterSpec};
use super::matrix::{norm, Matrix};
use crate::error::{Error, Result};
use crate::rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Tanh,
    Identity,
}

impl Activation {
    #[inline]
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Tanh => z.tanh(),
            Activation::Identity => z,
        }
    }

    #[inline]
    fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => {
                let t = z.tanh();
                1.0 - t * t
            }
            Activation::Identity => 1.0,
        }
    }
}

/// Affine layer; `weight` is `[out × in]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub weight: Matrix,
    pub bias: Vec<f64>,
}

impl Dense {
    pub fn new(weight: Matrix, bias: Vec<f64>) -> Result<Self> {
        if bias.len() != weight.rows() {
            return Err(Error::Shape(format!(
                "bias length {} does not match {} output rows",
                bias.len(),
                weight.rows()
            )));
        }
        Ok(Self { weight, bias })
    }

    /// Glorot-uniform weights, zero bias.
    pub fn glorot(in_dim: usize, out_dim: usize, rng: &mut rng::Rng) -> Self {
        let limit = (6.0 / (in_dim + out_dim) as f64).sqrt();
        let dist = Uniform::new_inclusive(-limit, limit).expect("finite bounds");
        let data = (0..in_dim * out_dim).map(|_| dist.sample(rng)).collect();
        Self {
            weight: Matrix::from_vec(out_dim, in_dim, data).expect("sized"),
            bias: vec![0.0; out_dim],
        }
    }

    #[inline]
    pub fn in_dim(&self) -> usize {
        self.weight.cols()
    }

    #[inline]
    pub fn out_dim(&self) -> usize {
        self.weight.rows()
    }

    fn param_count(&self) -> usize {
        self.weight.data().len() + self.bias.len()
    }
}

/// Labeled inputs, one sample per row.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Batch {
    pub inputs: Matrix,
    pub labels: Vec<usize>,
}

impl Batch {
    pub fn new(inputs: Matrix, labels: Vec<usize>) -> Result<Self> {
        if inputs.rows() == 0 {
            return Err(Error::Shape("batch must contain at least one sample".into()));
        }
        if inputs.rows() != labels.len() {
            return Err(Error::Shape(format!(
                "{} input rows but {} labels",
                inputs.rows(),
                labels.len()
            )));
        }
        Ok(Self { inputs, labels })
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

/// Where each parameter group sits in the flat vector.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ParamLayout {
    pub total: usize,
    /// Every layer except the head.
    pub backbone: Range<usize>,
    pub head: Range<usize>,
    pub adapters: Range<usize>,
}

/// Shape-only description of a model, used by checkpoints.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Architecture {
    pub layer_dims: Vec<usize>,
    pub activation: Activation,
    pub adapters: Vec<Option<AdapterSpec>>,
    pub gates_on: bool,
}

#[derive(Clone, Debug)]
pub struct ForwardBackward {
    pub loss: f64,
    pub grad: Vec<f64>,
    pub logits: Matrix,
}

/// Multilayer perceptron whose last layer is a linear classification head.
///
/// Hidden layers apply `activation`; the head does not. Layers before the head
/// form the backbone and may carry gated residual adapters.
///
/// Flat parameter order: for each layer its weight (row-major) then bias;
/// then for each adapted layer, in order, `B` then `A` (or `Δ`).
#[derive(Clone, Debug, PartialEq)]
pub struct Model {
    layers: Vec<Dense>,
    activation: Activation,
    adapters: Vec<Option<Adapter>>,
    gates_on: bool,
}

struct Trace {
    inputs: Vec<Matrix>,
    pre: Vec<Matrix>,
    low_rank_u: Vec<Option<Matrix>>,
    output: Matrix,
}

impl Model {
    /// Randomly initialized model with the given layer widths (input first).
    pub fn new(layer_dims: &[usize], activation: Activation, seed: u64) -> Result<Self> {
        validate_dims(layer_dims)?;
        let mut rng = rng::stream(seed, 0);
        let layers = layer_dims
            .windows(2)
            .map(|w| Dense::glorot(w[0], w[1], &mut rng))
            .collect();
        Self::from_layers(layers, activation)
    }

    pub fn from_layers(layers: Vec<Dense>, activation: Activation) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Shape("model needs at least one layer".into()));
        }
        for (i, pair) in layers.windows(2).enumerate() {
            if pair[0].out_dim() != pair[1].in_dim() {
                return Err(Error::Shape(format!(
                    "layer {i} outputs {} but layer {} expects {}",
                    pair[0].out_dim(),
                    i + 1,
                    pair[1].in_dim()
                )));
            }
        }
        for (i, l) in layers.iter().enumerate() {
            if l.bias.len() != l.out_dim() || l.in_dim() == 0 || l.out_dim() == 0 {
                return Err(Error::Shape(format!("layer {i} has inconsistent shape")));
            }
        }
        let n = layers.len();
        Ok(Self {
            layers,
            activation,
            adapters: vec![None; n],
            gates_on: false,
        })
    }

    /// Zero-filled model with the given architecture.
    pub fn from_architecture(arch: &Architecture) -> Result<Self> {
        validate_dims(&arch.layer_dims)?;
        let layers = arch
            .layer_dims
            .windows(2)
            .map(|w| Dense {
                weight: Matrix::zeros(w[1], w[0]),
                bias: vec![0.0; w[1]],
            })
            .collect::<Vec<_>>();
        if arch.adapters.len() != layers.len() {
            return Err(Error::Shape(format!(
                "{} adapter slots for {} layers",
                arch.adapters.len(),
                layers.len()
            )));
        }
        let mut model = Self::from_layers(layers, arch.activation)?;
        for (l, spec) in arch.adapters.iter().enumerate() {
            if let Some(spec) = spec {
                if l + 1 == model.layers.len() {
                    return Err(Error::InvalidSpec("the head cannot carry an adapter".into()));
                }
                let layer = &model.layers[l];
                spec.validate_for(layer.out_dim(), layer.in_dim())?;
                model.adapters[l] = Some(Adapter::zeros_like(spec, layer.out_dim(), layer.in_dim()));
            }
        }
        if arch.gates_on && !model.has_adapters() {
            return Err(Error::State("gates on without adapters".into()));
        }
        model.gates_on = arch.gates_on;
        Ok(model)
    }

    pub fn architecture(&self) -> Architecture {
        Architecture {
            layer_dims: self.layer_dims(),
            activation: self.activation,
            adapters: self
                .adapters
                .iter()
                .map(|a| {
                    a.as_ref().map(|a| AdapterSpec {
                        kind: a.kind(),
                        rank: a.rank(),
                    })
                })
                .collect(),
            gates_on: self.gates_on,
        }
    }

    pub fn layer_dims(&self) -> Vec<usize> {
        let mut dims = vec![self.layers[0].in_dim()];
        dims.extend(self.layers.iter().map(Dense::out_dim));
        dims
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].in_dim()
    }

    pub fn num_classes(&self) -> usize {
        self.layers[self.layers.len() - 1].out_dim()
    }

    /// Width of the penultimate activations.
    pub fn feature_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].in_dim()
    }

    pub fn gates_on(&self) -> bool {
        self.gates_on
    }

    pub fn adapters(&self) -> &[Option<Adapter>] {
        &self.adapters
    }

    pub fn has_adapters(&self) -> bool {
        self.adapters.iter().any(Option::is_some)
    }

    pub fn adapter_kind(&self) -> Option<AdapterKind> {
        self.adapters.iter().flatten().map(Adapter::kind).next()
    }

    pub fn layout(&self) -> ParamLayout {
        let head_len = self.layers[self.layers.len() - 1].param_count();
        let base: usize = self.layers.iter().map(Dense::param_count).sum();
        let extra: usize = self.adapters.iter().flatten().map(Adapter::param_count).sum();
        ParamLayout {
            total: base + extra,
            backbone: 0..base - head_len,
            head: base - head_len..base,
            adapters: base..base + extra,
        }
    }

    pub fn param_count(&self) -> usize {
        self.layout().total
    }

    pub fn param_vector(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.param_count());
        for l in &self.layers {
            v.extend_from_slice(l.weight.data());
            v.extend_from_slice(&l.bias);
        }
        for a in self.adapters.iter().flatten() {
            v.extend(a.params());
        }
        v
    }

    pub fn set_params(&mut self, params: &[f64]) -> Result<()> {
        let expected = self.param_count();
        if params.len() != expected {
            return Err(Error::Shape(format!(
                "parameter vector has length {}, model needs {expected}",
                params.len()
            )));
        }
        let mut it = params.iter().copied();
        for l in &mut self.layers {
            for w in l.weight.data_mut() {
                *w = it.next().expect("length checked");
            }
            for b in &mut l.bias {
                *b = it.next().expect("length checked");
            }
        }
        for a in self.adapters.iter_mut().flatten() {
            for p in a.params_mut() {
                *p = it.next().expect("length checked");
            }
        }
        Ok(())
    }

    /// Copy of `self` carrying `params`.
    pub fn unflatten(&self, params: &[f64]) -> Result<Model> {
        let mut m = self.clone();
        m.set_params(params)?;
        Ok(m)
    }

    /// Entries that the weight-decay term covers: every layer parameter, plus
    /// adapter parameters only while the gates are on.
    pub fn decay_mask(&self) -> Vec<bool> {
        let layout = self.layout();
        let mut mask = vec![true; layout.total];
        if !self.gates_on {
            mask[layout.adapters].iter_mut().for_each(|m| *m = false);
        }
        mask
    }

    /// Attaches zero-delta adapters to every backbone layer, gates off.
    pub fn attach_adapters(&self, spec: &AdapterSpec, seed: u64) -> Result<Model> {
        if self.layers.len() < 2 {
            return Err(Error::InvalidSpec("model has no backbone layer to adapt".into()));
        }
        if self.has_adapters() {
            return Err(Error::State("adapters already attached".into()));
        }
        for l in &self.layers[..self.layers.len() - 1] {
            spec.validate_for(l.out_dim(), l.in_dim())?;
        }
        let mut rng = rng::stream(seed, 0xada);
        let mut m = self.clone();
        let backbone = m.layers.len() - 1;
        for (slot, layer) in m.adapters[..backbone].iter_mut().zip(&self.layers) {
            let mut adapter = Adapter::zeros_like(spec, layer.out_dim(), layer.in_dim());
            if let Adapter::LowRank { a, .. } = &mut adapter {
                let limit = 1.0 / (layer.in_dim() as f64).sqrt();
                for v in a.data_mut() {
                    *v = rng.random_range(-limit..=limit);
                }
            }
            *slot = Some(adapter);
        }
        m.gates_on = false;
        Ok(m)
    }

    pub fn set_gates(&self, on: bool) -> Result<Model> {
        if on && !self.has_adapters() {
            return Err(Error::State("cannot open gates on a model without adapters".into()));
        }
        let mut m = self.clone();
        m.gates_on = on;
        Ok(m)
    }

    pub fn without_adapters(&self) -> Model {
        let mut m = self.clone();
        m.adapters.iter_mut().for_each(|a| *a = None);
        m.gates_on = false;
        m
    }

    /// Folds gated adapter deltas into the layer weights and drops the adapters.
    pub fn fold_adapters(&self) -> Model {
        let mut m = self.without_adapters();
        if self.gates_on {
            for (layer, adapter) in m.layers.iter_mut().zip(&self.adapters) {
                if let Some(a) = adapter {
                    layer.weight.add_assign(&a.delta());
                }
            }
        }
        m
    }

    /// Replaces the head with a freshly initialized one for `n_classes`.
    pub fn with_fresh_head(&self, n_classes: usize, seed: u64) -> Result<Model> {
        if n_classes == 0 {
            return Err(Error::Shape("head needs at least one class".into()));
        }
        let mut rng = rng::stream(seed, 0x4ead);
        let mut m = self.clone();
        let last = m.layers.len() - 1;
        m.layers[last] = Dense::glorot(self.feature_dim(), n_classes, &mut rng);
        Ok(m)
    }

    pub fn l2_norm(&self) -> f64 {
        norm(&self.param_vector())
    }

    pub fn forward(&self, inputs: &Matrix) -> Result<Matrix> {
        self.check_inputs(inputs)?;
        Ok(self.propagate(inputs, self.layers.len())?.output)
    }

    /// Penultimate activations (the head's input), regardless of gate state.
    pub fn features(&self, inputs: &Matrix) -> Result<Matrix> {
        self.check_inputs(inputs)?;
        Ok(self.propagate(inputs, self.layers.len() - 1)?.output)
    }

    /// Mean cross-entropy and its gradient, without the regularizer.
    pub fn data_loss_grad(&self, batch: &Batch) -> Result<ForwardBackward> {
        self.check_inputs(&batch.inputs)?;
        let classes = self.num_classes();
        if let Some(&bad) = batch.labels.iter().find(|&&y| y >= classes) {
            return Err(Error::Shape(format!(
                "label {bad} outside the head's {classes} classes"
            )));
        }
        let trace = self.propagate(&batch.inputs, self.layers.len())?;
        let (loss, d_logits) = softmax_cross_entropy(&trace.output, &batch.labels);
        if !loss.is_finite() {
            return Err(Error::non_finite("cross-entropy loss"));
        }
        let mut grad = vec![0.0; self.param_count()];
        self.backprop(&trace, d_logits, &mut grad);
        if grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::non_finite("gradient"));
        }
        Ok(ForwardBackward {
            loss,
            grad,
            logits: trace.output,
        })
    }

    /// Mean cross-entropy plus `(α/2)‖θ‖²`, its gradient, and the logits.
    pub fn forward_backward(&self, batch: &Batch, weight_decay: f64) -> Result<ForwardBackward> {
        let mut out = self.data_loss_grad(batch)?;
        let params = self.param_vector();
        add_weight_decay(
            &mut out.loss,
            &mut out.grad,
            &params,
            weight_decay,
            Some(&self.decay_mask()),
        );
        Ok(out)
    }

    /// Gradient of `Σ d_features ⊙ features(inputs)` with respect to every parameter.
    pub fn feature_backward(&self, inputs: &Matrix, d_features: Matrix) -> Result<Vec<f64>> {
        self.check_inputs(inputs)?;
        let trace = self.propagate(inputs, self.layers.len() - 1)?;
        if (d_features.rows(), d_features.cols()) != (trace.output.rows(), trace.output.cols()) {
            return Err(Error::Shape("feature gradient shape".into()));
        }
        let mut grad = vec![0.0; self.param_count()];
        self.backprop(&trace, d_features, &mut grad);
        Ok(grad)
    }

    fn check_inputs(&self, inputs: &Matrix) -> Result<()> {
        if inputs.cols() != self.input_dim() {
            return Err(Error::Shape(format!(
                "inputs have {} columns, model expects {}",
                inputs.cols(),
                self.input_dim()
            )));
        }
        Ok(())
    }

    fn is_hidden(&self, l: usize) -> bool {
        l + 1 < self.layers.len()
    }

    fn propagate(&self, inputs: &Matrix, depth: usize) -> Result<Trace> {
        let mut trace = Trace {
            inputs: Vec::with_capacity(depth),
            pre: Vec::with_capacity(depth),
            low_rank_u: Vec::with_capacity(depth),
            output: inputs.clone(),
        };
        let mut h = inputs.clone();
        for l in 0..depth {
            let layer = &self.layers[l];
            let mut z = h.matmul_t(&layer.weight);
            for r in 0..z.rows() {
                for (v, b) in z.row_mut(r).iter_mut().zip(&layer.bias) {
                    *v += b;
                }
            }
            let mut u_cache = None;
            if self.gates_on {
                match &self.adapters[l] {
                    Some(Adapter::FullResidual { delta }) => z.add_assign(&h.matmul_t(delta)),
                    Some(Adapter::LowRank { b, a }) => {
                        let u = h.matmul_t(a);
                        z.add_assign(&u.matmul_t(b));
                        u_cache = Some(u);
                    }
                    None => {}
                }
            }
            if !z.is_finite() {
                return Err(Error::non_finite(format!("layer {l} activations")));
            }
            let next = if self.is_hidden(l) {
                let mut a = z.clone();
                a.data_mut()
                    .iter_mut()
                    .for_each(|v| *v = self.activation.apply(*v));
                a
            } else {
                z.clone()
            };
            trace.inputs.push(std::mem::replace(&mut h, next));
            trace.pre.push(z);
            trace.low_rank_u.push(u_cache);
        }
        trace.output = h;
        Ok(trace)
    }

    fn offsets(&self) -> (Vec<usize>, Vec<Option<usize>>) {
        let mut layer_off = Vec::with_capacity(self.layers.len());
        let mut off = 0;
        for l in &self.layers {
            layer_off.push(off);
            off += l.param_count();
        }
        let adapter_off = self
            .adapters
            .iter()
            .map(|a| {
                a.as_ref().map(|a| {
                    let o = off;
                    off += a.param_count();
                    o
                })
            })
            .collect();
        (layer_off, adapter_off)
    }

    fn backprop(&self, trace: &Trace, d_out: Matrix, grad: &mut [f64]) {
        let (layer_off, adapter_off) = self.offsets();
        let mut d = d_out;
        for l in (0..trace.pre.len()).rev() {
            let layer = &self.layers[l];
            let x = &trace.inputs[l];
            let mut dz = d;
            if self.is_hidden(l) {
                for (g, &z) in dz.data_mut().iter_mut().zip(trace.pre[l].data()) {
                    *g *= self.activation.derivative(z);
                }
            }
            let gw = dz.t_matmul(x);
            let o = layer_off[l];
            let w_len = gw.data().len();
            for (g, v) in grad[o..o + w_len].iter_mut().zip(gw.data()) {
                *g += v;
            }
            for r in 0..dz.rows() {
                for (g, v) in grad[o + w_len..o + w_len + layer.out_dim()]
                    .iter_mut()
                    .zip(dz.row(r))
                {
                    *g += v;
                }
            }
            let mut dx = (l > 0).then(|| dz.matmul(&layer.weight));
            if self.gates_on {
                if let (Some(adapter), Some(ao)) = (&self.adapters[l], adapter_off[l]) {
                    match adapter {
                        Adapter::FullResidual { delta } => {
                            let gd = dz.t_matmul(x);
                            for (g, v) in grad[ao..ao + gd.data().len()].iter_mut().zip(gd.data()) {
                                *g += v;
                            }
                            if let Some(dx) = dx.as_mut() {
                                dx.add_assign(&dz.matmul(delta));
                            }
                        }
                        Adapter::LowRank { b, a } => {
                            let u = trace.low_rank_u[l].as_ref().expect("cached when gated");
                            let gb = dz.t_matmul(u);
                            let du = dz.matmul(b);
                            let ga = du.t_matmul(x);
                            let nb = gb.data().len();
                            for (g, v) in grad[ao..ao + nb].iter_mut().zip(gb.data()) {
                                *g += v;
                            }
                            for (g, v) in grad[ao + nb..ao + nb + ga.data().len()]
                                .iter_mut()
                                .zip(ga.data())
                            {
                                *g += v;
                            }
                            if let Some(dx) = dx.as_mut() {
                                dx.add_assign(&du.matmul(a));
                            }
                        }
                    }
                }
            }
            match dx {
                Some(dx) => d = dx,
                None => break,
            }
        }
    }
}

fn validate_dims(dims: &[usize]) -> Result<()> {
    if dims.len() < 2 {
        return Err(Error::Shape("need at least input and output widths".into()));
    }
    if dims.contains(&0) {
        return Err(Error::Shape("layer widths must be positive".into()));
    }
    Ok(())
}

/// Mean cross-entropy over rows and its gradient with respect to the logits.
pub(crate) fn softmax_cross_entropy(logits: &Matrix, labels: &[usize]) -> (f64, Matrix) {
    let n = logits.rows();
    let mut d = Matrix::zeros(n, logits.cols());
    let mut total = 0.0;
    for (i, &y) in labels.iter().enumerate() {
        let row = logits.row(i);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let sum: f64 = row.iter().map(|z| (z - max).exp()).sum();
        let lse = max + sum.ln();
        total += lse - row[y];
        let dr = d.row_mut(i);
        for (g, z) in dr.iter_mut().zip(row) {
            *g = (z - lse).exp() / n as f64;
        }
        dr[y] -= 1.0 / n as f64;
    }
    (total / n as f64, d)
}

/// Adds `(α/2)‖θ‖²` over the masked entries to `loss` and `αθ` to `grad`.
pub(crate) fn add_weight_decay(
    loss: &mut f64,
    grad: &mut [f64],
    params: &[f64],
    alpha: f64,
    mask: Option<&[bool]>,
) {
    if alpha == 0.0 {
        return;
    }
    let mut sq = 0.0;
    for (i, (&p, g)) in params.iter().zip(grad.iter_mut()).enumerate() {
        if mask.is_some_and(|m| !m[i]) {
            continue;
        }
        sq += p * p;
        *g += alpha * p;
    }
    *loss += 0.5 * alpha * sq;
}
