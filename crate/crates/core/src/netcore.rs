//! Layered positively-homogeneous ReLU networks.
//!
//! A network is `L_C` single-channel convolution layers (stride-1 valid
//! convolution, ReLU, then non-overlapping average pooling with window equal
//! to the kernel size), followed by `L_F` bias-free fully-connected ReLU
//! layers and a linear read-out scaled by `1/m^p`:
//!
//! ```text
//! z0 = x
//! conv:  y_k = relu(w . z_{k..k+s-1}),   z_k = mean(y_{k*s .. k*s+s-1})
//! dense: z   = relu(A^T z_prev)
//! out:   f   = (1/m^p) * sum_k a_k z_k
//! ```
//!
//! Dense layer parameters are stored as `vec(A)` in column-first order, which
//! is the same memory layout as the row-major `(out, in)` matrix `A^T`.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NetError {
    #[error("invalid network spec: {0}")]
    InvalidSpec(String),
    #[error("input dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("parameter shape mismatch: {0}")]
    ParamShape(String),
    #[error("non-finite parameter in layer {layer}")]
    NonFinite { layer: usize },
    #[error("empty batch")]
    EmptyBatch,
    #[error("loss power must be an integer >= 2, got {0}")]
    LossPower(u32),
}

/// Whether the network contains convolution layers. Selects the Rademacher
/// constant used by the bound.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Fnn,
    Cnn,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum LayerShape {
    Conv { kernel: usize, in_dim: usize, out_dim: usize },
    Dense { in_dim: usize, out_dim: usize },
    Output { in_dim: usize },
}

impl LayerShape {
    /// Number of parameters `q(l)`.
    pub fn param_count(&self) -> usize {
        match *self {
            LayerShape::Conv { kernel, .. } => kernel,
            LayerShape::Dense { in_dim, out_dim } => in_dim * out_dim,
            LayerShape::Output { in_dim } => in_dim,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSpec {
    input_dim: usize,
    #[serde(default)]
    conv_kernels: Vec<usize>,
    #[serde(default)]
    fc_widths: Vec<usize>,
    norm_exponent: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    output_width: Option<usize>,
}

/// Validated architecture description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawSpec", into = "RawSpec")]
pub struct NetworkSpec {
    input_dim: usize,
    conv_kernels: Vec<usize>,
    fc_widths: Vec<usize>,
    norm_exponent: f64,
    layers: Vec<LayerShape>,
}

impl TryFrom<RawSpec> for NetworkSpec {
    type Error = NetError;

    fn try_from(raw: RawSpec) -> Result<Self, NetError> {
        let spec = NetworkSpec::new(raw.input_dim, &raw.conv_kernels, &raw.fc_widths, raw.norm_exponent)?;
        if let Some(m) = raw.output_width {
            if m != spec.output_width() {
                return Err(NetError::InvalidSpec(format!(
                    "output_width {m} does not match the last hidden width {}",
                    spec.output_width()
                )));
            }
        }
        Ok(spec)
    }
}

impl From<NetworkSpec> for RawSpec {
    fn from(spec: NetworkSpec) -> Self {
        RawSpec {
            output_width: Some(spec.output_width()),
            input_dim: spec.input_dim,
            conv_kernels: spec.conv_kernels,
            fc_widths: spec.fc_widths,
            norm_exponent: spec.norm_exponent,
        }
    }
}

impl NetworkSpec {
    /// Builds a spec, deriving every convolution output width from
    /// `m_{l-1} = m_l * s_l + s_l - 1`. Sizes that do not divide are rejected.
    pub fn new(
        input_dim: usize,
        conv_kernels: &[usize],
        fc_widths: &[usize],
        norm_exponent: f64,
    ) -> Result<Self, NetError> {
        if input_dim == 0 {
            return Err(NetError::InvalidSpec("input_dim must be positive".into()));
        }
        if !(norm_exponent.is_finite() && norm_exponent >= 0.0) {
            return Err(NetError::InvalidSpec(format!(
                "norm_exponent must be a nonnegative real, got {norm_exponent}"
            )));
        }
        if conv_kernels.is_empty() && fc_widths.is_empty() {
            return Err(NetError::InvalidSpec("at least one hidden layer is required (L >= 1)".into()));
        }
        let mut layers = Vec::with_capacity(conv_kernels.len() + fc_widths.len() + 1);
        let mut width = input_dim;
        let mut scale = 1usize;
        for (i, &s) in conv_kernels.iter().enumerate() {
            if s == 0 {
                return Err(NetError::InvalidSpec(format!("conv layer {} has kernel size 0", i + 1)));
            }
            // width = out * s + s - 1  =>  out = (width + 1) / s - 1
            if !(width + 1).is_multiple_of(s) || (width + 1) / s < 2 {
                return Err(NetError::InvalidSpec(format!(
                    "conv layer {}: input width {width} is not of the form m*{s} + {s} - 1 with m >= 1",
                    i + 1
                )));
            }
            let out = (width + 1) / s - 1;
            layers.push(LayerShape::Conv { kernel: s, in_dim: width, out_dim: out });
            scale *= s;
            width = out;
        }
        if !conv_kernels.is_empty() && width * scale > input_dim {
            return Err(NetError::InvalidSpec("convolutional scale condition violated".into()));
        }
        for (i, &m) in fc_widths.iter().enumerate() {
            if m == 0 {
                return Err(NetError::InvalidSpec(format!("fc layer {} has width 0", i + 1)));
            }
            layers.push(LayerShape::Dense { in_dim: width, out_dim: m });
            width = m;
        }
        layers.push(LayerShape::Output { in_dim: width });
        Ok(NetworkSpec {
            input_dim,
            conv_kernels: conv_kernels.to_vec(),
            fc_widths: fc_widths.to_vec(),
            norm_exponent,
            layers,
        })
    }

    /// Fully-connected network `d -> widths... -> 1`.
    pub fn fnn(input_dim: usize, widths: &[usize], norm_exponent: f64) -> Result<Self, NetError> {
        Self::new(input_dim, &[], widths, norm_exponent)
    }

    /// Picks `p` so that the read-out factor `m^p` equals `scale`.
    pub fn with_output_scale(mut self, scale: f64) -> Result<Self, NetError> {
        let m = self.output_width() as f64;
        if !(scale >= 1.0 && scale.is_finite()) {
            return Err(NetError::InvalidSpec(format!("output scale must be >= 1, got {scale}")));
        }
        if m == 1.0 {
            if scale != 1.0 {
                return Err(NetError::InvalidSpec("width-1 read-out cannot carry a scale != 1".into()));
            }
            self.norm_exponent = 0.0;
        } else {
            self.norm_exponent = scale.ln() / m.ln();
        }
        Ok(self)
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn conv_kernels(&self) -> &[usize] {
        &self.conv_kernels
    }

    pub fn fc_widths(&self) -> &[usize] {
        &self.fc_widths
    }

    pub fn norm_exponent(&self) -> f64 {
        self.norm_exponent
    }

    /// Width `m` of the last hidden layer.
    pub fn output_width(&self) -> usize {
        match self.layers.last() {
            Some(LayerShape::Output { in_dim }) => *in_dim,
            _ => unreachable!("spec always ends with an output layer"),
        }
    }

    /// `m^p`.
    pub fn output_scale(&self) -> f64 {
        (self.output_width() as f64).powf(self.norm_exponent)
    }

    /// Hidden depth `L = L_C + L_F`; the network has `L + 1` parameter layers.
    pub fn hidden_depth(&self) -> usize {
        self.layers.len() - 1
    }

    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    pub fn layers(&self) -> &[LayerShape] {
        &self.layers
    }

    pub fn kind(&self) -> ModelKind {
        if self.conv_kernels.is_empty() {
            ModelKind::Fnn
        } else {
            ModelKind::Cnn
        }
    }

    pub fn param_counts(&self) -> Vec<usize> {
        self.layers.iter().map(LayerShape::param_count).collect()
    }

    /// Forward pass for one input.
    pub fn forward(&self, params: &Parameters, x: &[f64]) -> Result<ForwardTrace, NetError> {
        self.check_params(params)?;
        if x.len() != self.input_dim {
            return Err(NetError::DimensionMismatch { expected: self.input_dim, got: x.len() });
        }
        let mut z = vec![x.to_vec()];
        let mut pre = Vec::with_capacity(self.hidden_depth());
        let mut y = Vec::with_capacity(self.hidden_depth());
        for (l, shape) in self.layers[..self.hidden_depth()].iter().enumerate() {
            let prev = &z[l];
            let theta = params.layer(l);
            match *shape {
                LayerShape::Conv { kernel, out_dim, .. } => {
                    let (p, act, pooled) = conv_pool_forward(theta, prev, kernel, out_dim);
                    pre.push(p);
                    y.push(Some(act));
                    z.push(pooled);
                }
                LayerShape::Dense { in_dim, out_dim } => {
                    let p: Vec<f64> = (0..out_dim).map(|i| dot(&theta[i * in_dim..(i + 1) * in_dim], prev)).collect();
                    z.push(p.iter().map(|&v| relu(v)).collect());
                    pre.push(p);
                    y.push(None);
                }
                LayerShape::Output { .. } => unreachable!(),
            }
        }
        let a = params.layer(self.hidden_depth());
        let output = dot(a, &z[self.hidden_depth()]) / self.output_scale();
        Ok(ForwardTrace { z, pre, y, output })
    }

    /// `f(x; params)`.
    pub fn eval(&self, params: &Parameters, x: &[f64]) -> Result<f64, NetError> {
        Ok(self.forward(params, x)?.output)
    }

    /// Exact gradient of the scalar output with respect to every layer, by
    /// reverse-mode accumulation. Uses `relu'(0) = 0`.
    pub fn grad_f(&self, params: &Parameters, x: &[f64]) -> Result<(f64, Parameters), NetError> {
        let trace = self.forward(params, x)?;
        let grad = self.backprop(params, &trace);
        Ok((trace.output, grad))
    }

    fn backprop(&self, params: &Parameters, trace: &ForwardTrace) -> Parameters {
        let depth = self.hidden_depth();
        let scale = self.output_scale();
        let mut grads: Vec<Vec<f64>> = self.param_counts().into_iter().map(|q| vec![0.0; q]).collect();
        grads[depth] = trace.z[depth].iter().map(|v| v / scale).collect();
        let mut delta: Vec<f64> = params.layer(depth).iter().map(|a| a / scale).collect();
        for l in (0..depth).rev() {
            let theta = params.layer(l);
            let prev = &trace.z[l];
            match self.layers[l] {
                LayerShape::Conv { kernel, in_dim, .. } => {
                    let pre = &trace.pre[l];
                    let (g, d) = conv_pool_backward(theta, prev, pre, &delta, kernel, in_dim);
                    grads[l] = g;
                    delta = d;
                }
                LayerShape::Dense { in_dim, out_dim } => {
                    let pre = &trace.pre[l];
                    let mut next = vec![0.0; in_dim];
                    let g = &mut grads[l];
                    for i in 0..out_dim {
                        if pre[i] <= 0.0 {
                            continue;
                        }
                        let gp = delta[i];
                        let row = &theta[i * in_dim..(i + 1) * in_dim];
                        let grow = &mut g[i * in_dim..(i + 1) * in_dim];
                        for j in 0..in_dim {
                            grow[j] = gp * prev[j];
                            next[j] += row[j] * gp;
                        }
                    }
                    delta = next;
                }
                LayerShape::Output { .. } => unreachable!(),
            }
        }
        Parameters { layers: grads }
    }

    /// Network outputs for every row of `inputs`.
    pub fn eval_batch(&self, params: &Parameters, inputs: ArrayView2<f64>) -> Result<Array1<f64>, NetError> {
        let cache = self.batch_forward(params, inputs)?;
        Ok(cache.outputs)
    }

    /// Empirical risk `(1/b) sum |f(x_i) - y_i|^k / k` and its gradient, where
    /// `k = loss_power` (`k = 2` is the quadratic loss).
    pub fn loss_and_grad(
        &self,
        params: &Parameters,
        inputs: ArrayView2<f64>,
        targets: ArrayView1<f64>,
        loss_power: u32,
    ) -> Result<LossGrad, NetError> {
        check_loss_power(loss_power)?;
        if inputs.nrows() == 0 {
            return Err(NetError::EmptyBatch);
        }
        if targets.len() != inputs.nrows() {
            return Err(NetError::ParamShape(format!("{} inputs but {} targets", inputs.nrows(), targets.len())));
        }
        let cache = self.batch_forward(params, inputs)?;
        let b = inputs.nrows() as f64;
        let k = loss_power as f64;
        let mut loss = 0.0;
        // dloss/df_i
        let mut coeff = Array1::<f64>::zeros(inputs.nrows());
        for i in 0..inputs.nrows() {
            let r = cache.outputs[i] - targets[i];
            loss += r.abs().powi(loss_power as i32) / k;
            coeff[i] = r.abs().powi(loss_power as i32 - 1) * r.signum() / b;
        }
        loss /= b;
        let grad = self.batch_backward(params, &cache, coeff.view());
        Ok(LossGrad { loss, grad, outputs: cache.outputs })
    }

    /// Empirical risk only.
    pub fn loss(
        &self,
        params: &Parameters,
        inputs: ArrayView2<f64>,
        targets: ArrayView1<f64>,
        loss_power: u32,
    ) -> Result<(f64, Array1<f64>), NetError> {
        check_loss_power(loss_power)?;
        if inputs.nrows() == 0 {
            return Err(NetError::EmptyBatch);
        }
        let outputs = self.eval_batch(params, inputs)?;
        let k = loss_power as f64;
        let loss =
            outputs.iter().zip(targets.iter()).map(|(f, y)| (f - y).abs().powi(loss_power as i32) / k).sum::<f64>()
                / inputs.nrows() as f64;
        Ok((loss, outputs))
    }

    fn batch_forward(&self, params: &Parameters, inputs: ArrayView2<f64>) -> Result<BatchCache, NetError> {
        self.check_params(params)?;
        if inputs.ncols() != self.input_dim {
            return Err(NetError::DimensionMismatch { expected: self.input_dim, got: inputs.ncols() });
        }
        let depth = self.hidden_depth();
        let mut z: Vec<Array2<f64>> = vec![inputs.to_owned()];
        let mut pre: Vec<Array2<f64>> = Vec::with_capacity(depth);
        for (l, shape) in self.layers[..depth].iter().enumerate() {
            let theta = params.layer(l);
            match *shape {
                LayerShape::Conv { kernel, out_dim, .. } => {
                    let rows = z[l].nrows();
                    let mut p = Array2::zeros((rows, out_dim * kernel));
                    let mut pooled = Array2::zeros((rows, out_dim));
                    for r in 0..rows {
                        let prev = z[l].row(r).to_vec();
                        let (pr, _, zr) = conv_pool_forward(theta, &prev, kernel, out_dim);
                        p.row_mut(r).assign(&ArrayView1::from(&pr));
                        pooled.row_mut(r).assign(&ArrayView1::from(&zr));
                    }
                    pre.push(p);
                    z.push(pooled);
                }
                LayerShape::Dense { in_dim, out_dim } => {
                    let w = ArrayView2::from_shape((out_dim, in_dim), theta).expect("dense layer shape");
                    let p = z[l].dot(&w.t());
                    z.push(p.mapv(relu));
                    pre.push(p);
                }
                LayerShape::Output { .. } => unreachable!(),
            }
        }
        let a = ArrayView1::from(params.layer(depth));
        let outputs = z[depth].dot(&a) / self.output_scale();
        Ok(BatchCache { z, pre, outputs })
    }

    fn batch_backward(&self, params: &Parameters, cache: &BatchCache, coeff: ArrayView1<f64>) -> Parameters {
        let depth = self.hidden_depth();
        let scale = self.output_scale();
        let mut grads: Vec<Vec<f64>> = self.param_counts().into_iter().map(|q| vec![0.0; q]).collect();
        grads[depth] = (cache.z[depth].t().dot(&coeff) / scale).to_vec();
        let a = ArrayView1::from(params.layer(depth));
        // delta[r, k] = dL/dz^(L)_k for sample r
        let mut delta: Array2<f64> = coeff.insert_axis(Axis(1)).dot(&a.insert_axis(Axis(0))) / scale;
        for l in (0..depth).rev() {
            let theta = params.layer(l);
            match self.layers[l] {
                LayerShape::Conv { kernel, in_dim, .. } => {
                    let rows = delta.nrows();
                    let mut g = vec![0.0; kernel];
                    let mut next = Array2::zeros((rows, in_dim));
                    for r in 0..rows {
                        let prev = cache.z[l].row(r).to_vec();
                        let pr = cache.pre[l].row(r).to_vec();
                        let dr = delta.row(r).to_vec();
                        let (gr, nr) = conv_pool_backward(theta, &prev, &pr, &dr, kernel, in_dim);
                        for (acc, v) in g.iter_mut().zip(gr) {
                            *acc += v;
                        }
                        next.row_mut(r).assign(&ArrayView1::from(&nr));
                    }
                    grads[l] = g;
                    delta = next;
                }
                LayerShape::Dense { in_dim, out_dim } => {
                    let mut gp = delta;
                    gp.zip_mut_with(&cache.pre[l], |d, &p| {
                        if p <= 0.0 {
                            *d = 0.0;
                        }
                    });
                    let gw = gp.t().dot(&cache.z[l]);
                    grads[l] = gw.iter().copied().collect();
                    let w = ArrayView2::from_shape((out_dim, in_dim), theta).expect("dense layer shape");
                    delta = gp.dot(&w);
                }
                LayerShape::Output { .. } => unreachable!(),
            }
        }
        Parameters { layers: grads }
    }

    fn check_params(&self, params: &Parameters) -> Result<(), NetError> {
        if params.layers.len() != self.layers.len() {
            return Err(NetError::ParamShape(format!(
                "expected {} layers, got {}",
                self.layers.len(),
                params.layers.len()
            )));
        }
        for (l, (shape, v)) in self.layers.iter().zip(&params.layers).enumerate() {
            if shape.param_count() != v.len() {
                return Err(NetError::ParamShape(format!(
                    "layer {} expects {} parameters, got {}",
                    l + 1,
                    shape.param_count(),
                    v.len()
                )));
            }
        }
        Ok(())
    }
}

struct BatchCache {
    z: Vec<Array2<f64>>,
    pre: Vec<Array2<f64>>,
    outputs: Array1<f64>,
}

/// Empirical risk, its gradient and the network outputs on the batch.
#[derive(Debug, Clone)]
pub struct LossGrad {
    pub loss: f64,
    pub grad: Parameters,
    pub outputs: Array1<f64>,
}

/// Per-layer intermediate values of one forward pass.
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    /// `z[0] = x`, `z[l]` the output of hidden layer `l`.
    pub z: Vec<Vec<f64>>,
    /// Pre-activations of each hidden layer (pre-pool for convolutions).
    pub pre: Vec<Vec<f64>>,
    /// Post-ReLU, pre-pool values `y` of convolution layers.
    pub y: Vec<Option<Vec<f64>>>,
    pub output: f64,
}

impl ForwardTrace {
    /// Smallest `|pre-activation|` over the whole pass.
    pub fn min_abs_preactivation(&self) -> f64 {
        self.pre.iter().flatten().fold(f64::INFINITY, |acc, v| acc.min(v.abs()))
    }
}

/// Per-layer flat parameter vectors `Theta^(1) .. Theta^(L+1)`. The same type
/// carries per-layer gradients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Parameters {
    layers: Vec<Vec<f64>>,
}

impl Parameters {
    pub fn from_layers(spec: &NetworkSpec, layers: Vec<Vec<f64>>) -> Result<Self, NetError> {
        let p = Parameters { layers };
        spec.check_params(&p)?;
        for (l, v) in p.layers.iter().enumerate() {
            if v.iter().any(|x| !x.is_finite()) {
                return Err(NetError::NonFinite { layer: l + 1 });
            }
        }
        Ok(p)
    }

    pub fn zeros(spec: &NetworkSpec) -> Self {
        Parameters { layers: spec.param_counts().into_iter().map(|q| vec![0.0; q]).collect() }
    }

    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    pub fn layer(&self, l: usize) -> &[f64] {
        &self.layers[l]
    }

    pub fn layer_mut(&mut self, l: usize) -> &mut [f64] {
        &mut self.layers[l]
    }

    pub fn layers(&self) -> &[Vec<f64>] {
        &self.layers
    }

    pub fn into_layers(self) -> Vec<Vec<f64>> {
        self.layers
    }

    /// Flattened `Theta`.
    pub fn concat(&self) -> Vec<f64> {
        self.layers.concat()
    }

    pub fn is_finite(&self) -> bool {
        self.layers.iter().flatten().all(|v| v.is_finite())
    }

    /// `self += alpha * other`, layer by layer.
    pub fn axpy(&mut self, alpha: f64, other: &Parameters) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += alpha * y;
            }
        }
    }

    pub fn scale_layer(&mut self, l: usize, c: f64) {
        for v in &mut self.layers[l] {
            *v *= c;
        }
    }

    /// `<self^(l), other^(l)>` for every layer.
    pub fn layer_dots(&self, other: &Parameters) -> Vec<f64> {
        self.layers.iter().zip(&other.layers).map(|(a, b)| dot(a, b)).collect()
    }

    /// `||Theta^(l)||_2^2` for every layer.
    pub fn sq_norms(&self) -> Vec<f64> {
        self.layers.iter().map(|v| dot(v, v)).collect()
    }
}

/// `||Theta^(l)||_2` for every layer.
pub fn layer_norms(params: &Parameters) -> Vec<f64> {
    params.sq_norms().into_iter().map(f64::sqrt).collect()
}

/// Draws every layer i.i.d. from `N(0, kappa^2 / q(l))`, so that
/// `E ||Theta^(l)||^2 = kappa^2`.
pub fn init_gaussian(spec: &NetworkSpec, kappa: f64, seed: u64) -> Parameters {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    init_gaussian_with(spec, kappa, &mut rng)
}

pub fn init_gaussian_with<R: rand::Rng + ?Sized>(spec: &NetworkSpec, kappa: f64, rng: &mut R) -> Parameters {
    assert!(kappa > 0.0 && kappa.is_finite(), "kappa must be positive, got {kappa}");
    let layers = spec
        .param_counts()
        .into_iter()
        .map(|q| {
            let normal = Normal::new(0.0, kappa / (q as f64).sqrt()).expect("finite std");
            (0..q).map(|_| normal.sample(rng)).collect()
        })
        .collect();
    Parameters { layers }
}

fn check_loss_power(k: u32) -> Result<(), NetError> {
    if k < 2 {
        Err(NetError::LossPower(k))
    } else {
        Ok(())
    }
}

#[inline]
fn relu(v: f64) -> f64 {
    if v > 0.0 {
        v
    } else {
        0.0
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Returns (pre-activations, relu outputs, pooled outputs).
fn conv_pool_forward(w: &[f64], input: &[f64], s: usize, out_dim: usize) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let n = out_dim * s;
    let pre: Vec<f64> = (0..n).map(|k| dot(w, &input[k..k + s])).collect();
    let act: Vec<f64> = pre.iter().map(|&v| relu(v)).collect();
    let inv = 1.0 / s as f64;
    let pooled = act.chunks_exact(s).map(|c| c.iter().sum::<f64>() * inv).collect();
    (pre, act, pooled)
}

/// Given `delta = df/dz` for the pooled output, returns (df/dw, df/dz_prev).
fn conv_pool_backward(
    w: &[f64],
    input: &[f64],
    pre: &[f64],
    delta: &[f64],
    s: usize,
    in_dim: usize,
) -> (Vec<f64>, Vec<f64>) {
    let inv = 1.0 / s as f64;
    let mut gw = vec![0.0; s];
    let mut next = vec![0.0; in_dim];
    for (k, &p) in pre.iter().enumerate() {
        if p <= 0.0 {
            continue;
        }
        let gp = delta[k / s] * inv;
        for j in 0..s {
            gw[j] += gp * input[k + j];
            next[k + j] += gp * w[j];
        }
    }
    (gw, next)
}
