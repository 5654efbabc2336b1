//! Trainable neural kernel.
//!
//! A feed-forward network scores each pair `[anchor ‖ reference]`; the scores
//! are log-kernels, so a softmax over them gives the Nadaraya-Watson weights
//! that feed the Beran estimator. The same parameters score every pair.
//!
//! [`forward_sf`] runs scores → weights → Beran survival function and keeps a
//! [`ForwardCache`]; [`backward`] takes the derivative of a scalar loss with
//! respect to the expected lifetime of that function and returns exact
//! parameter gradients.

use std::fmt::Write as _;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{BenkError, Result};
use crate::survival::{
    beran_pass, expected_lifetime, BeranPass, Group, StepSurvivalFunction, SurvivalDataset,
    SurvivalRecord, WeightVector,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Tanh,
}

impl Activation {
    #[inline]
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Tanh => z.tanh(),
        }
    }

    /// Derivative expressed through the activation output.
    #[inline]
    fn derivative_from_output(self, a: f64) -> f64 {
        match self {
            Activation::Relu => {
                if a > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - a * a,
        }
    }

    fn name(self) -> &'static str {
        match self {
            Activation::Relu => "relu",
            Activation::Tanh => "tanh",
        }
    }
}

impl FromStr for Activation {
    type Err = BenkError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "relu" => Ok(Activation::Relu),
            "tanh" => Ok(Activation::Tanh),
            other => Err(BenkError::Parse(format!("unknown activation {other:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelNetConfig {
    /// Dimension `d` of one feature vector; the network input is `2 * d`.
    pub feature_dim: usize,
    #[serde(default = "default_hidden")]
    pub hidden_layers: Vec<usize>,
    #[serde(default = "default_activation")]
    pub activation: Activation,
    #[serde(default)]
    pub init_seed: u64,
}

fn default_hidden() -> Vec<usize> {
    vec![100, 100]
}

fn default_activation() -> Activation {
    Activation::Relu
}

impl KernelNetConfig {
    pub fn new(feature_dim: usize) -> Self {
        Self {
            feature_dim,
            hidden_layers: default_hidden(),
            activation: default_activation(),
            init_seed: 0,
        }
    }

    pub fn input_dim(&self) -> usize {
        2 * self.feature_dim
    }

    pub fn validate(&self) -> Result<()> {
        if self.feature_dim == 0 {
            return Err(BenkError::InvalidInput(
                "feature dimension must be at least 1".into(),
            ));
        }
        if self.hidden_layers.is_empty() {
            return Err(BenkError::InvalidInput(
                "at least one hidden layer is required".into(),
            ));
        }
        if self.hidden_layers.contains(&0) {
            return Err(BenkError::InvalidInput(
                "hidden layer widths must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Fully connected layer, `outputs × inputs` weights stored row-major.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DenseLayer {
    pub inputs: usize,
    pub outputs: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl DenseLayer {
    fn zeros(inputs: usize, outputs: usize) -> Self {
        Self {
            inputs,
            outputs,
            weights: vec![0.0; inputs * outputs],
            bias: vec![0.0; outputs],
        }
    }

    #[inline]
    fn row(&self, o: usize) -> &[f64] {
        &self.weights[o * self.inputs..(o + 1) * self.inputs]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelNetParams {
    activation: Activation,
    /// Hidden layers followed by the scalar output layer.
    layers: Vec<DenseLayer>,
}

impl KernelNetParams {
    /// Uniform fan-in initialization, `U(-1/sqrt(fan_in), 1/sqrt(fan_in))`.
    pub fn init(config: &KernelNetConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.init_seed);
        let mut widths = vec![config.input_dim()];
        widths.extend(&config.hidden_layers);
        widths.push(1);
        let layers = widths
            .windows(2)
            .map(|w| {
                let bound = 1.0 / (w[0] as f64).sqrt();
                let mut layer = DenseLayer::zeros(w[0], w[1]);
                for v in layer.weights.iter_mut().chain(layer.bias.iter_mut()) {
                    *v = rng.random_range(-bound..bound);
                }
                layer
            })
            .collect();
        Ok(Self {
            activation: config.activation,
            layers,
        })
    }

    pub fn from_layers(activation: Activation, layers: Vec<DenseLayer>) -> Result<Self> {
        let params = Self { activation, layers };
        params.check_shapes()?;
        Ok(params)
    }

    fn check_shapes(&self) -> Result<()> {
        if self.layers.len() < 2 {
            return Err(BenkError::InvalidInput(
                "need a hidden layer and an output layer".into(),
            ));
        }
        if self.layers[0].inputs == 0 || !self.layers[0].inputs.is_multiple_of(2) {
            return Err(BenkError::InvalidInput(
                "input width must be 2·d with d ≥ 1".into(),
            ));
        }
        for l in &self.layers {
            if l.outputs == 0
                || l.weights.len() != l.inputs * l.outputs
                || l.bias.len() != l.outputs
            {
                return Err(BenkError::InvalidInput("inconsistent layer shape".into()));
            }
            if l.weights.iter().chain(&l.bias).any(|v| !v.is_finite()) {
                return Err(BenkError::InvalidInput("non-finite parameter".into()));
            }
        }
        for w in self.layers.windows(2) {
            if w[0].outputs != w[1].inputs {
                return Err(BenkError::InvalidInput(
                    "adjacent layer widths disagree".into(),
                ));
            }
        }
        if self.layers.last().map(|l| l.outputs) != Some(1) {
            return Err(BenkError::InvalidInput(
                "output layer must be scalar".into(),
            ));
        }
        Ok(())
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn layers(&self) -> &[DenseLayer] {
        &self.layers
    }

    pub fn feature_dim(&self) -> usize {
        self.layers[0].inputs / 2
    }

    pub fn num_params(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.len() + l.bias.len())
            .sum()
    }

    pub fn is_finite(&self) -> bool {
        self.values().all(f64::is_finite)
    }

    /// Sets the output layer to zero so every pair scores 0.
    pub fn zero_output_layer(&mut self) {
        let last = self.layers.last_mut().expect("output layer");
        last.weights.fill(0.0);
        last.bias.fill(0.0);
    }

    /// All parameters in storage order: per layer, weights then biases.
    pub fn values(&self) -> impl Iterator<Item = f64> + '_ {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(l.bias.iter()).copied())
    }

    pub fn values_mut(&mut self) -> impl Iterator<Item = &mut f64> + '_ {
        self.layers
            .iter_mut()
            .flat_map(|l| l.weights.iter_mut().chain(l.bias.iter_mut()))
    }

    fn fingerprint(&self) -> u64 {
        // FNV-1a over parameter bits.
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for v in self.values() {
            h ^= v.to_bits();
            h = h.wrapping_mul(0x0100_0000_01b3);
        }
        h ^ self.layers.len() as u64
    }

    /// Hidden activations for one pair plus the output score.
    fn forward_pair(&self, anchor: &[f64], reference: &[f64], hidden: &mut Vec<Vec<f64>>) -> f64 {
        let act = self.activation;
        let (body, out) = self.layers.split_at(self.layers.len() - 1);
        hidden.clear();
        let d = anchor.len();
        for (li, layer) in body.iter().enumerate() {
            let mut a = Vec::with_capacity(layer.outputs);
            for o in 0..layer.outputs {
                let row = layer.row(o);
                let z = if li == 0 {
                    layer.bias[o] + dot(&row[..d], anchor) + dot(&row[d..], reference)
                } else {
                    layer.bias[o] + dot(row, &hidden[li - 1])
                };
                a.push(act.apply(z));
            }
            hidden.push(a);
        }
        let out = &out[0];
        out.bias[0] + dot(&out.weights, hidden.last().expect("hidden layer"))
    }

    /// Writes the parameters as text: a header, then per layer a `dense IN OUT`
    /// line, OUT rows of IN weights and one row of OUT biases.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "benk-kernel 1");
        let _ = writeln!(s, "activation {}", self.activation.name());
        let _ = writeln!(s, "layers {}", self.layers.len());
        for l in &self.layers {
            let _ = writeln!(s, "dense {} {}", l.inputs, l.outputs);
            for o in 0..l.outputs {
                push_row(&mut s, l.row(o));
            }
            push_row(&mut s, &l.bias);
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let mut next = |what: &str| {
            lines.next().ok_or_else(|| {
                BenkError::Parse(format!("unexpected end of input, expected {what}"))
            })
        };
        if next("header")?.trim() != "benk-kernel 1" {
            return Err(BenkError::Parse("missing benk-kernel header".into()));
        }
        let activation: Activation = keyed(next("activation")?, "activation")?.parse()?;
        let count: usize = parse_num(keyed(next("layers")?, "layers")?)?;
        let mut layers = Vec::with_capacity(count);
        for _ in 0..count {
            let shape = keyed(next("dense")?, "dense")?;
            let mut it = shape.split_whitespace();
            let inputs: usize = parse_num(it.next().unwrap_or(""))?;
            let outputs: usize = parse_num(it.next().unwrap_or(""))?;
            let mut layer = DenseLayer::zeros(inputs, outputs);
            for o in 0..outputs {
                let row = parse_row(next("weight row")?, inputs)?;
                layer.weights[o * inputs..(o + 1) * inputs].copy_from_slice(&row);
            }
            layer.bias = parse_row(next("bias row")?, outputs)?;
            layers.push(layer);
        }
        Self::from_layers(activation, layers)
    }
}

fn push_row(s: &mut String, row: &[f64]) {
    for (i, v) in row.iter().enumerate() {
        if i > 0 {
            s.push(' ');
        }
        // Display for f64 prints the shortest string that round-trips.
        let _ = write!(s, "{v}");
    }
    s.push('\n');
}

fn keyed<'a>(line: &'a str, key: &str) -> Result<&'a str> {
    line.trim()
        .strip_prefix(key)
        .map(str::trim)
        .ok_or_else(|| BenkError::Parse(format!("expected `{key}` line, got {line:?}")))
}

fn parse_num<T: FromStr>(s: &str) -> Result<T> {
    s.trim()
        .parse()
        .map_err(|_| BenkError::Parse(format!("bad number {s:?}")))
}

fn parse_row(line: &str, expected: usize) -> Result<Vec<f64>> {
    let row = line
        .split_whitespace()
        .map(parse_num::<f64>)
        .collect::<Result<Vec<_>>>()?;
    if row.len() != expected {
        return Err(BenkError::Parse(format!(
            "expected {expected} values, found {}",
            row.len()
        )));
    }
    Ok(row)
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Additive gradient buffer shaped like [`KernelNetParams`].
#[derive(Clone, Debug, PartialEq)]
pub struct GradientAccumulator {
    layers: Vec<DenseLayer>,
}

impl GradientAccumulator {
    pub fn zeros_like(params: &KernelNetParams) -> Self {
        Self {
            layers: params
                .layers
                .iter()
                .map(|l| DenseLayer::zeros(l.inputs, l.outputs))
                .collect(),
        }
    }

    pub fn layers(&self) -> &[DenseLayer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [DenseLayer] {
        &mut self.layers
    }

    pub fn values(&self) -> impl Iterator<Item = f64> + '_ {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(l.bias.iter()).copied())
    }

    pub fn values_mut(&mut self) -> impl Iterator<Item = &mut f64> + '_ {
        self.layers
            .iter_mut()
            .flat_map(|l| l.weights.iter_mut().chain(l.bias.iter_mut()))
    }

    pub fn add_assign(&mut self, other: &GradientAccumulator) {
        for (a, b) in self.values_mut().zip(other.values()) {
            *a += b;
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for a in self.values_mut() {
            *a *= factor;
        }
    }

    pub fn is_zero(&self) -> bool {
        self.values().all(|v| v == 0.0)
    }

    pub fn max_abs(&self) -> f64 {
        self.values().fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// Raw pair scores (log-kernels) of `anchor` against each reference.
pub fn kernel_scores(
    params: &KernelNetParams,
    anchor: &[f64],
    refs: &[Vec<f64>],
) -> Result<Vec<f64>> {
    let d = params.feature_dim();
    check_dim(d, anchor.len())?;
    if refs.is_empty() {
        return Err(BenkError::InvalidInput("empty reference list".into()));
    }
    let mut hidden = Vec::new();
    refs.iter()
        .map(|r| {
            check_dim(d, r.len())?;
            Ok(params.forward_pair(anchor, r, &mut hidden))
        })
        .collect()
}

fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(BenkError::DimensionMismatch { expected, got });
    }
    Ok(())
}

/// Normalizes log-kernel scores into weights, subtracting the maximum first.
pub fn softmax_weights(scores: &[f64]) -> Result<WeightVector> {
    if scores.is_empty() {
        return Err(BenkError::InvalidInput("empty score list".into()));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(BenkError::InvalidInput("non-finite score".into()));
    }
    WeightVector::new(softmax(scores))
}

pub(crate) fn softmax(scores: &[f64]) -> Vec<f64> {
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut w: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
    let total: f64 = w.iter().sum();
    for v in &mut w {
        *v /= total;
    }
    w
}

/// Intermediates of [`forward_sf`] needed by [`backward`].
#[derive(Clone, Debug)]
pub struct ForwardCache {
    fingerprint: u64,
    anchor: Vec<f64>,
    refs: Vec<Vec<f64>>,
    /// Per reference, the hidden-layer outputs.
    hidden: Vec<Vec<Vec<f64>>>,
    weights: Vec<f64>,
    pass: BeranPass,
}

impl ForwardCache {
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn sf(&self) -> &StepSurvivalFunction {
        &self.pass.sf
    }

    pub fn expected_lifetime(&self) -> f64 {
        expected_lifetime(&self.pass.sf)
    }
}

/// Survival function at `anchor` from the kernel-weighted Beran estimator
/// over `refs`.
pub fn forward_sf(
    params: &KernelNetParams,
    anchor: &[f64],
    refs: &SurvivalDataset,
) -> Result<(StepSurvivalFunction, ForwardCache)> {
    let d = params.feature_dim();
    check_dim(d, anchor.len())?;
    check_dim(d, refs.dim())?;
    forward_records(params, anchor, refs.records().iter())
}

pub(crate) fn forward_records<'a>(
    params: &KernelNetParams,
    anchor: &[f64],
    refs: impl Iterator<Item = &'a SurvivalRecord>,
) -> Result<(StepSurvivalFunction, ForwardCache)> {
    let mut feats = Vec::new();
    let mut times = Vec::new();
    let mut events = Vec::new();
    let mut hidden = Vec::new();
    let mut scores = Vec::new();
    for r in refs {
        let mut h = Vec::new();
        scores.push(params.forward_pair(anchor, &r.features, &mut h));
        hidden.push(h);
        feats.push(r.features.clone());
        times.push(r.time);
        events.push(r.event);
    }
    if scores.is_empty() {
        return Err(BenkError::InvalidInput("empty reference list".into()));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(BenkError::InvalidInput("non-finite kernel score".into()));
    }
    let weights = softmax(&scores);
    let pass = beran_pass(&times, &events, &weights);
    let sf = pass.sf.clone();
    Ok((
        sf,
        ForwardCache {
            fingerprint: params.fingerprint(),
            anchor: anchor.to_vec(),
            refs: feats,
            hidden,
            weights,
            pass,
        },
    ))
}

/// Gradient of `loss_grad · E` with respect to every parameter, where `E` is
/// the expected lifetime of the cached survival function.
pub fn backward(
    params: &KernelNetParams,
    cache: &ForwardCache,
    loss_grad_wrt_expected_lifetime: f64,
) -> Result<GradientAccumulator> {
    let mut acc = GradientAccumulator::zeros_like(params);
    backward_into(params, cache, loss_grad_wrt_expected_lifetime, &mut acc)?;
    Ok(acc)
}

/// Like [`backward`] but adds into an existing accumulator.
pub fn backward_into(
    params: &KernelNetParams,
    cache: &ForwardCache,
    loss_grad: f64,
    acc: &mut GradientAccumulator,
) -> Result<()> {
    if cache.fingerprint != params.fingerprint() {
        return Err(BenkError::StaleCache);
    }
    if acc.layers.len() != params.layers.len()
        || acc
            .layers
            .iter()
            .zip(&params.layers)
            .any(|(a, p)| a.inputs != p.inputs || a.outputs != p.outputs)
    {
        return Err(BenkError::InvalidInput(
            "accumulator shape does not match parameters".into(),
        ));
    }
    if loss_grad == 0.0 {
        return Ok(());
    }
    let score_grads = score_gradients(&cache.pass, &cache.weights, loss_grad);
    let mut delta = Vec::new();
    let mut next_delta = Vec::new();
    for (i, &gs) in score_grads.iter().enumerate() {
        if gs == 0.0 {
            continue;
        }
        network_backward(
            params,
            &cache.anchor,
            &cache.refs[i],
            &cache.hidden[i],
            gs,
            acc,
            &mut delta,
            &mut next_delta,
        );
    }
    Ok(())
}

/// d(loss)/d(score_i) through expected lifetime, the Beran product and the
/// softmax.
fn score_gradients(pass: &BeranPass, weights: &[f64], loss_grad: f64) -> Vec<f64> {
    let n = weights.len();
    let times = pass.sf.times();
    let steps = times.len();

    // dE/dS on sorted positions: the value of step j covers [t_j, t_{j+1}).
    let mut g_surv = vec![0.0; n];
    for j in 0..steps.saturating_sub(1) {
        g_surv[pass.step_end[j]] += loss_grad * (times[j + 1] - times[j]);
    }

    // S_k = S_{k-1} * factor_k, reversed.
    let mut g_factor = vec![0.0; n];
    for k in (0..n).rev() {
        let prev = if k == 0 { 1.0 } else { pass.surv[k - 1] };
        g_factor[k] = g_surv[k] * prev;
        if k > 0 {
            g_surv[k - 1] += g_surv[k] * pass.factor[k];
        }
    }

    // factor_k = 1 - W_k / D_k with D_k = sum_{j>=k} W_j.
    let mut g_w = vec![0.0; n];
    let mut running = 0.0;
    for (k, &gf) in g_factor.iter().enumerate() {
        let idx = pass.order[k];
        if pass.active[k] {
            let dk = pass.denom[k];
            running += gf * weights[idx] / (dk * dk);
            g_w[idx] = running - gf / dk;
        } else {
            g_w[idx] = running;
        }
    }

    let mean: f64 = weights.iter().zip(&g_w).map(|(w, g)| w * g).sum();
    weights
        .iter()
        .zip(&g_w)
        .map(|(w, g)| w * (g - mean))
        .collect()
}

#[allow(clippy::too_many_arguments)]
fn network_backward(
    params: &KernelNetParams,
    anchor: &[f64],
    reference: &[f64],
    hidden: &[Vec<f64>],
    upstream: f64,
    acc: &mut GradientAccumulator,
    delta: &mut Vec<f64>,
    next_delta: &mut Vec<f64>,
) {
    let act = params.activation;
    let last = params.layers.len() - 1;

    // Output layer.
    {
        let a = &hidden[last - 1];
        let g = &mut acc.layers[last];
        g.bias[0] += upstream;
        for (gw, &x) in g.weights.iter_mut().zip(a) {
            *gw += upstream * x;
        }
        let w = &params.layers[last].weights;
        delta.clear();
        delta.extend(
            a.iter()
                .zip(w)
                .map(|(&x, &wi)| upstream * wi * act.derivative_from_output(x)),
        );
    }

    for li in (0..last).rev() {
        let layer = &params.layers[li];
        let g = &mut acc.layers[li];
        for (o, &dl) in delta.iter().enumerate() {
            if dl == 0.0 {
                continue;
            }
            g.bias[o] += dl;
            let grow = &mut g.weights[o * layer.inputs..(o + 1) * layer.inputs];
            if li == 0 {
                let d = anchor.len();
                for (gw, &x) in grow[..d].iter_mut().zip(anchor) {
                    *gw += dl * x;
                }
                for (gw, &x) in grow[d..].iter_mut().zip(reference) {
                    *gw += dl * x;
                }
            } else {
                for (gw, &x) in grow.iter_mut().zip(&hidden[li - 1]) {
                    *gw += dl * x;
                }
            }
        }
        if li > 0 {
            let below = &hidden[li - 1];
            next_delta.clear();
            next_delta.resize(layer.inputs, 0.0);
            for (o, &dl) in delta.iter().enumerate() {
                if dl == 0.0 {
                    continue;
                }
                for (nd, &w) in next_delta.iter_mut().zip(layer.row(o)) {
                    *nd += dl * w;
                }
            }
            for (nd, &x) in next_delta.iter_mut().zip(below) {
                *nd *= act.derivative_from_output(x);
            }
            std::mem::swap(delta, next_delta);
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradCheckReport {
    pub trials: usize,
    /// Parameters compared across all trials.
    pub compared: usize,
    pub max_relative_error: f64,
}

/// Step of the central differences.
pub const FD_STEP: f64 = 1e-5;
/// Entries with `|analytic| + |numeric|` at or below this are skipped.
pub const FD_SKIP_BELOW: f64 = 1e-8;

/// Compares [`backward`] against central finite differences on random
/// problems. Each trial draws `d ∈ {2, 3, 5}` and `n ∈ {3, 5, 8}`, builds a
/// network with the hidden layers and activation of `config`, and checks every
/// parameter of the map `params ↦ expected lifetime`.
pub fn gradient_check(
    config: &KernelNetConfig,
    trial_count: usize,
    seed: u64,
) -> Result<GradCheckReport> {
    gradient_check_with_hook(config, trial_count, seed, &|_| {})
}

/// [`gradient_check`] with a hook that may alter the analytic gradient before
/// comparison, for mutation testing.
pub fn gradient_check_with_hook(
    config: &KernelNetConfig,
    trial_count: usize,
    seed: u64,
    hook: &dyn Fn(&mut GradientAccumulator),
) -> Result<GradCheckReport> {
    config.validate()?;
    if trial_count == 0 {
        return Err(BenkError::InvalidInput(
            "trial_count must be at least 1".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut max_rel: f64 = 0.0;
    let mut compared = 0;
    for _ in 0..trial_count {
        let d = [2, 3, 5][rng.random_range(0..3)];
        let n = [3, 5, 8][rng.random_range(0..3)];
        let cfg = KernelNetConfig {
            feature_dim: d,
            init_seed: rng.random(),
            ..config.clone()
        };
        let mut params = KernelNetParams::init(&cfg)?;
        let refs = random_refs(&mut rng, d, n)?;
        let anchor: Vec<f64> = (0..d).map(|_| rng.random_range(-1.5..1.5)).collect();

        let (_, cache) = forward_sf(&params, &anchor, &refs)?;
        let mut analytic = backward(&params, &cache, 1.0)?;
        hook(&mut analytic);
        let analytic: Vec<f64> = analytic.values().collect();

        let count = params.num_params();
        for (i, &a) in analytic.iter().enumerate().take(count) {
            let orig = nth_value(&mut params, i);
            set_nth(&mut params, i, orig + FD_STEP);
            let plus = expected_lifetime(&forward_sf(&params, &anchor, &refs)?.0);
            set_nth(&mut params, i, orig - FD_STEP);
            let minus = expected_lifetime(&forward_sf(&params, &anchor, &refs)?.0);
            set_nth(&mut params, i, orig);
            let numeric = (plus - minus) / (2.0 * FD_STEP);
            if a.abs() + numeric.abs() > FD_SKIP_BELOW {
                let rel = (a - numeric).abs() / a.abs().max(numeric.abs());
                max_rel = max_rel.max(rel);
                compared += 1;
            }
        }
    }
    Ok(GradCheckReport {
        trials: trial_count,
        compared,
        max_relative_error: max_rel,
    })
}

fn nth_value(params: &mut KernelNetParams, i: usize) -> f64 {
    *params.values_mut().nth(i).expect("parameter index")
}

fn set_nth(params: &mut KernelNetParams, i: usize, v: f64) {
    *params.values_mut().nth(i).expect("parameter index") = v;
}

/// Random references with distinct times and at least one event.
fn random_refs(rng: &mut ChaCha8Rng, d: usize, n: usize) -> Result<SurvivalDataset> {
    let mut records = Vec::with_capacity(n);
    for i in 0..n {
        let features = (0..d).map(|_| rng.random_range(-1.5..1.5)).collect();
        let time = 0.5 + i as f64 + rng.random_range(0.0..0.9);
        let event = i == 0 || rng.random_bool(0.7);
        records.push(SurvivalRecord::new(features, time, event, Group::Control)?);
    }
    // Shuffle so the event guarantee is not tied to the earliest time.
    for i in (1..n).rev() {
        let j = rng.random_range(0..=i);
        records.swap(i, j);
    }
    SurvivalDataset::new(records)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::survival::{beran_sf, kaplan_meier};
    use approx::assert_abs_diff_eq;

    fn small_config(d: usize) -> KernelNetConfig {
        KernelNetConfig {
            feature_dim: d,
            hidden_layers: vec![6, 5],
            activation: Activation::Tanh,
            init_seed: 11,
        }
    }

    fn refs(times: &[f64], events: &[bool], d: usize) -> SurvivalDataset {
        let feats: Vec<Vec<f64>> = times
            .iter()
            .enumerate()
            .map(|(i, _)| {
                (0..d)
                    .map(|k| ((i * 7 + k * 3) % 5) as f64 * 0.3 - 0.6)
                    .collect()
            })
            .collect();
        SurvivalDataset::from_columns(&feats, times, events, Group::Control).unwrap()
    }

    #[test]
    fn zero_output_layer_scores_zero() {
        let mut p = KernelNetParams::init(&small_config(2)).unwrap();
        p.zero_output_layer();
        let s = kernel_scores(&p, &[0.3, -0.2], &[vec![1.0, 2.0], vec![-1.0, 0.5]]).unwrap();
        assert_eq!(s, vec![0.0, 0.0]);
    }

    #[test]
    fn identical_pairs_score_identically() {
        let p = KernelNetParams::init(&small_config(3)).unwrap();
        let a = vec![0.1, 0.2, 0.3];
        let s = kernel_scores(&p, &a, &[a.clone(), a.clone()]).unwrap();
        assert_eq!(s[0], s[1]);
    }

    #[test]
    fn scores_are_permutation_equivariant() {
        let p = KernelNetParams::init(&small_config(2)).unwrap();
        let r = vec![vec![1.0, 0.0], vec![0.0, 1.0], vec![-1.0, 0.5]];
        let s = kernel_scores(&p, &[0.2, 0.2], &r).unwrap();
        let rev: Vec<Vec<f64>> = r.iter().rev().cloned().collect();
        let s_rev = kernel_scores(&p, &[0.2, 0.2], &rev).unwrap();
        assert_eq!(s, s_rev.into_iter().rev().collect::<Vec<_>>());
    }

    #[test]
    fn kernel_scores_reject_wrong_dimension() {
        let p = KernelNetParams::init(&small_config(2)).unwrap();
        assert!(matches!(
            kernel_scores(&p, &[0.0, 0.0, 0.0], &[vec![0.0, 0.0]]),
            Err(BenkError::DimensionMismatch { .. })
        ));
        assert!(kernel_scores(&p, &[0.0, 0.0], &[vec![0.0]]).is_err());
        assert!(kernel_scores(&p, &[0.0, 0.0], &[]).is_err());
    }

    #[test]
    fn softmax_examples() {
        let w = softmax_weights(&[0.7; 4]).unwrap();
        for &x in w.as_slice() {
            assert_abs_diff_eq!(x, 0.25, epsilon = 1e-15);
        }
        let w = softmax_weights(&[2f64.ln(), 0.0]).unwrap();
        assert_abs_diff_eq!(w.as_slice()[0], 2.0 / 3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(w.as_slice()[1], 1.0 / 3.0, epsilon = 1e-15);
        let a = softmax_weights(&[0.1, -2.0, 3.0]).unwrap();
        let b = softmax_weights(&[1000.1, 998.0, 1003.0]).unwrap();
        for (x, y) in a.as_slice().iter().zip(b.as_slice()) {
            assert_abs_diff_eq!(x, y, epsilon = 1e-12);
        }
    }

    #[test]
    fn zero_network_reduces_to_kaplan_meier() {
        let mut p = KernelNetParams::init(&small_config(2)).unwrap();
        p.zero_output_layer();
        let d = refs(
            &[3.0, 1.0, 2.0, 5.0, 4.0],
            &[true, false, true, true, false],
            2,
        );
        let (sf, _) = forward_sf(&p, &[0.0, 1.0], &d).unwrap();
        let km = kaplan_meier(&d);
        assert_eq!(sf.times(), km.times());
        for (a, b) in sf.values().iter().zip(km.values()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-12);
        }
    }

    #[test]
    fn forward_matches_beran_on_softmax_weights() {
        let p = KernelNetParams::init(&small_config(2)).unwrap();
        let d = refs(&[3.0, 1.0, 2.0, 5.0], &[true, true, false, true], 2);
        let anchor = [0.4, -0.1];
        let (sf, cache) = forward_sf(&p, &anchor, &d).unwrap();
        let feats: Vec<Vec<f64>> = d.records().iter().map(|r| r.features.clone()).collect();
        let w = softmax_weights(&kernel_scores(&p, &anchor, &feats).unwrap()).unwrap();
        assert_eq!(sf, beran_sf(&d, &w).unwrap());
        assert_eq!(cache.weights(), w.as_slice());
    }

    #[test]
    fn all_censored_refs_give_flat_sf_and_zero_gradient() {
        let p = KernelNetParams::init(&small_config(2)).unwrap();
        let d = refs(&[3.0, 1.0, 2.0], &[false; 3], 2);
        let (sf, cache) = forward_sf(&p, &[0.5, 0.5], &d).unwrap();
        assert!(sf.values().iter().all(|&v| v == 1.0));
        assert!(backward(&p, &cache, 1.0).unwrap().is_zero());
    }

    #[test]
    fn single_reference_is_a_point_mass() {
        let p = KernelNetParams::init(&small_config(2)).unwrap();
        let d = refs(&[3.0], &[true], 2);
        let (sf, _) = forward_sf(&p, &[9.0, -9.0], &d).unwrap();
        assert_eq!(sf.times(), &[3.0]);
        assert_eq!(sf.values(), &[0.0]);
    }

    #[test]
    fn zero_loss_gradient_is_zero() {
        let p = KernelNetParams::init(&small_config(2)).unwrap();
        let d = refs(&[3.0, 1.0, 2.0], &[true; 3], 2);
        let (_, cache) = forward_sf(&p, &[0.5, 0.5], &d).unwrap();
        assert!(backward(&p, &cache, 0.0).unwrap().is_zero());
    }

    #[test]
    fn stale_cache_is_rejected() {
        let mut p = KernelNetParams::init(&small_config(2)).unwrap();
        let d = refs(&[3.0, 1.0, 2.0], &[true; 3], 2);
        let (_, cache) = forward_sf(&p, &[0.5, 0.5], &d).unwrap();
        *p.values_mut().next().unwrap() += 0.1;
        assert!(matches!(
            backward(&p, &cache, 1.0),
            Err(BenkError::StaleCache)
        ));
    }

    #[test]
    fn gradient_matches_finite_differences_d3_n5() {
        let cfg = small_config(3);
        let mut p = KernelNetParams::init(&cfg).unwrap();
        let d = refs(
            &[2.2, 0.7, 4.1, 3.3, 1.4],
            &[true, true, false, true, true],
            3,
        );
        let anchor = [0.3, -0.4, 0.8];
        let (_, cache) = forward_sf(&p, &anchor, &d).unwrap();
        let g: Vec<f64> = backward(&p, &cache, 1.0).unwrap().values().collect();
        for (i, &gi) in g.iter().enumerate() {
            let orig = nth_value(&mut p, i);
            set_nth(&mut p, i, orig + FD_STEP);
            let plus = expected_lifetime(&forward_sf(&p, &anchor, &d).unwrap().0);
            set_nth(&mut p, i, orig - FD_STEP);
            let minus = expected_lifetime(&forward_sf(&p, &anchor, &d).unwrap().0);
            set_nth(&mut p, i, orig);
            let num = (plus - minus) / (2.0 * FD_STEP);
            if gi.abs() + num.abs() > FD_SKIP_BELOW {
                let rel = (gi - num).abs() / gi.abs().max(num.abs());
                assert!(rel < 1e-4, "param {i}: analytic {} numeric {num}", gi);
            }
        }
    }

    #[test]
    fn gradient_check_detects_corrupted_bias() {
        let cfg = small_config(2);
        let healthy = gradient_check(&cfg, 3, 5).unwrap();
        assert!(healthy.max_relative_error < 1e-4, "{healthy:?}");
        let corrupted = gradient_check_with_hook(&cfg, 3, 5, &|g| {
            for l in g.layers_mut() {
                for b in &mut l.bias {
                    *b *= 1.5;
                }
            }
        })
        .unwrap();
        assert!(corrupted.max_relative_error > 1e-2, "{corrupted:?}");
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let mut cfg = small_config(2);
        cfg.hidden_layers.clear();
        assert!(KernelNetParams::init(&cfg).is_err());
        assert!(gradient_check(&cfg, 1, 0).is_err());
        let mut cfg = small_config(0);
        cfg.hidden_layers = vec![3];
        assert!(cfg.validate().is_err());
        let mut cfg = small_config(2);
        cfg.hidden_layers = vec![4, 0];
        assert!(cfg.validate().is_err());
        assert!(gradient_check(&small_config(2), 0, 0).is_err());
    }

    #[test]
    fn text_round_trip_is_lossless() {
        let p = KernelNetParams::init(&small_config(3)).unwrap();
        let back = KernelNetParams::from_text(&p.to_text()).unwrap();
        assert_eq!(p, back);
        assert!(p
            .values()
            .zip(back.values())
            .all(|(a, b)| a.to_bits() == b.to_bits()));
    }

    #[test]
    fn text_parser_rejects_truncated_input() {
        let p = KernelNetParams::init(&small_config(2)).unwrap();
        let text = p.to_text();
        let cut: String = text.lines().take(5).collect::<Vec<_>>().join("\n");
        assert!(KernelNetParams::from_text(&cut).is_err());
        assert!(KernelNetParams::from_text("nonsense").is_err());
    }
}
