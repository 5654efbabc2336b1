//! Training the neural kernel on controls and predicting treatment effects.
//!
//! Every control `i` is paired `N` times with a random subset of `n` other
//! controls. The Beran estimator over that subset, weighted by the kernel at
//! `x_i`, gives a survival function whose expected lifetime should match the
//! observed time `f_i`. Only uncensored anchors enter the squared-error loss;
//! subsets may contain censored records. The trained kernel is then reused
//! unchanged on the treatment group.

use std::fmt::Write as _;

use rand::seq::{index, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{BenkError, Result};
use crate::kernel::{
    backward_into, forward_records, Activation, GradientAccumulator, KernelNetConfig,
    KernelNetParams,
};
use crate::survival::{
    cate_from_sfs, expected_lifetime, uncensored_lifetime_mse, StepSurvivalFunction,
    SurvivalDataset,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Optimizer {
    Sgd,
    Adam,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    /// Subsets drawn per anchor (`N`).
    pub replications: usize,
    /// Subset size `n`; `None` means `round(0.2 · c)`.
    pub subset_size: Option<usize>,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub optimizer: Optimizer,
    pub hidden_layers: Vec<usize>,
    pub activation: Activation,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            replications: 10,
            subset_size: None,
            epochs: 100,
            batch_size: 32,
            learning_rate: 1e-3,
            optimizer: Optimizer::Adam,
            hidden_layers: vec![100, 100],
            activation: Activation::Relu,
            seed: 0,
        }
    }
}

impl TrainConfig {
    /// Subset size for `controls` records.
    pub fn subset_size_for(&self, controls: usize) -> usize {
        self.subset_size
            .unwrap_or_else(|| ((0.2 * controls as f64).round() as usize).max(1))
    }

    pub fn validate(&self) -> Result<()> {
        if self.replications == 0 {
            return Err(BenkError::InvalidInput(
                "replications must be at least 1".into(),
            ));
        }
        if self.subset_size == Some(0) {
            return Err(BenkError::InvalidInput(
                "subset size must be at least 1".into(),
            ));
        }
        if self.batch_size == 0 {
            return Err(BenkError::InvalidInput(
                "batch size must be at least 1".into(),
            ));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(BenkError::InvalidInput(
                "learning rate must be positive".into(),
            ));
        }
        Ok(())
    }

    fn kernel_config(&self, feature_dim: usize, init_seed: u64) -> KernelNetConfig {
        KernelNetConfig {
            feature_dim,
            hidden_layers: self.hidden_layers.clone(),
            activation: self.activation,
            init_seed,
        }
    }
}

/// One anchor control with the indices of its reference subset.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainingExample {
    pub anchor: usize,
    pub subset: Vec<usize>,
}

/// `c · N` examples, anchor-major, each subset drawn uniformly without
/// replacement from the other `c - 1` controls.
pub fn build_training_examples<R: Rng + ?Sized>(
    controls: &SurvivalDataset,
    config: &TrainConfig,
    rng: &mut R,
) -> Result<Vec<TrainingExample>> {
    config.validate()?;
    let c = controls.len();
    let n = config.subset_size_for(c);
    if c <= n {
        return Err(BenkError::InsufficientControls {
            controls: c,
            subset: n,
        });
    }
    let mut examples = Vec::with_capacity(c * config.replications);
    for anchor in 0..c {
        for _ in 0..config.replications {
            let subset = index::sample(rng, c - 1, n)
                .into_iter()
                .map(|j| if j < anchor { j } else { j + 1 })
                .collect();
            examples.push(TrainingExample { anchor, subset });
        }
    }
    Ok(examples)
}

fn check_examples(examples: &[TrainingExample], controls: &SurvivalDataset) -> Result<()> {
    let c = controls.len();
    for ex in examples {
        if ex.anchor >= c || ex.subset.iter().any(|&k| k >= c || k == ex.anchor) {
            return Err(BenkError::InvalidInput(format!(
                "training example for anchor {} does not fit {c} controls",
                ex.anchor
            )));
        }
    }
    Ok(())
}

fn example_lifetime(
    params: &KernelNetParams,
    ex: &TrainingExample,
    controls: &SurvivalDataset,
) -> Result<(f64, crate::kernel::ForwardCache)> {
    let recs = controls.records();
    let anchor = &recs[ex.anchor].features;
    let (sf, cache) = forward_records(params, anchor, ex.subset.iter().map(|&k| &recs[k]))?;
    Ok((expected_lifetime(&sf), cache))
}

/// Mean over uncensored-anchor examples of `(E - f_anchor)^2`.
pub fn benk_loss(
    params: &KernelNetParams,
    examples: &[TrainingExample],
    controls: &SurvivalDataset,
) -> Result<f64> {
    check_examples(examples, controls)?;
    let recs = controls.records();
    let mut total = 0.0;
    let mut count = 0usize;
    for ex in examples.iter().filter(|ex| recs[ex.anchor].event) {
        let (e, _) = example_lifetime(params, ex, controls)?;
        total += (e - recs[ex.anchor].time).powi(2);
        count += 1;
    }
    if count == 0 {
        return Err(BenkError::AllAnchorsCensored);
    }
    Ok(total / count as f64)
}

/// Examples per parallel task; fixed so the reduction order does not depend
/// on the thread count.
const GRAD_CHUNK: usize = 8;

/// [`benk_loss`] and its gradient.
pub fn benk_loss_and_gradient(
    params: &KernelNetParams,
    examples: &[TrainingExample],
    controls: &SurvivalDataset,
) -> Result<(f64, GradientAccumulator)> {
    check_examples(examples, controls)?;
    let recs = controls.records();
    let used: Vec<&TrainingExample> = examples.iter().filter(|ex| recs[ex.anchor].event).collect();
    if used.is_empty() {
        return Err(BenkError::AllAnchorsCensored);
    }
    let partials = used
        .par_chunks(GRAD_CHUNK)
        .map(|chunk| {
            let mut acc = GradientAccumulator::zeros_like(params);
            let mut loss = 0.0;
            for ex in chunk {
                let (e, cache) = example_lifetime(params, ex, controls)?;
                let resid = e - recs[ex.anchor].time;
                loss += resid * resid;
                backward_into(params, &cache, 2.0 * resid, &mut acc)?;
            }
            Ok((loss, acc))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut grad = GradientAccumulator::zeros_like(params);
    let mut loss = 0.0;
    for (l, g) in &partials {
        loss += l;
        grad.add_assign(g);
    }
    let scale = 1.0 / used.len() as f64;
    grad.scale(scale);
    Ok((loss * scale, grad))
}

struct OptimizerState {
    kind: Optimizer,
    lr: f64,
    step: i32,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl OptimizerState {
    const BETA1: f64 = 0.9;
    const BETA2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn new(kind: Optimizer, lr: f64, size: usize) -> Self {
        let moments = if kind == Optimizer::Adam { size } else { 0 };
        Self {
            kind,
            lr,
            step: 0,
            m: vec![0.0; moments],
            v: vec![0.0; moments],
        }
    }

    fn apply(&mut self, params: &mut KernelNetParams, grad: &GradientAccumulator) {
        match self.kind {
            Optimizer::Sgd => {
                for (p, g) in params.values_mut().zip(grad.values()) {
                    *p -= self.lr * g;
                }
            }
            Optimizer::Adam => {
                self.step += 1;
                let c1 = 1.0 - Self::BETA1.powi(self.step);
                let c2 = 1.0 - Self::BETA2.powi(self.step);
                for (((p, g), m), v) in params
                    .values_mut()
                    .zip(grad.values())
                    .zip(self.m.iter_mut())
                    .zip(self.v.iter_mut())
                {
                    *m = Self::BETA1 * *m + (1.0 - Self::BETA1) * g;
                    *v = Self::BETA2 * *v + (1.0 - Self::BETA2) * g * g;
                    *p -= self.lr * (*m / c1) / ((*v / c2).sqrt() + Self::EPS);
                }
            }
        }
    }
}

/// A trained kernel plus the configuration and traces that produced it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainedBenk {
    pub params: KernelNetParams,
    pub config: TrainConfig,
    pub feature_dim: usize,
    /// Mean training loss of each epoch, measured before each batch update.
    pub loss_trace: Vec<f64>,
    /// Validation error after each epoch, index 0 being the initialization.
    pub validation_trace: Vec<f64>,
    /// Epoch whose parameters were kept (0 = initialization).
    pub selected_epoch: usize,
}

/// Trains on `controls` without validation-based selection.
pub fn train(controls: &SurvivalDataset, config: &TrainConfig) -> Result<TrainedBenk> {
    train_with_validation(controls, None, config)
}

/// Trains on `controls`. With a validation set, the parameters with the
/// lowest validation error (expected lifetime from all training controls vs
/// observed time on uncensored validation records) are kept.
pub fn train_with_validation(
    controls: &SurvivalDataset,
    validation: Option<&SurvivalDataset>,
    config: &TrainConfig,
) -> Result<TrainedBenk> {
    config.validate()?;
    let d = controls.dim();
    if let Some(v) = validation {
        if v.dim() != d {
            return Err(BenkError::DimensionMismatch {
                expected: d,
                got: v.dim(),
            });
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let init_seed: u64 = rng.random();
    let mut params = KernelNetParams::init(&config.kernel_config(d, init_seed))?;

    let all = build_training_examples(controls, config, &mut rng)?;
    let recs = controls.records();
    let mut examples: Vec<TrainingExample> =
        all.into_iter().filter(|ex| recs[ex.anchor].event).collect();
    if examples.is_empty() {
        return Err(BenkError::AllAnchorsCensored);
    }

    let val_error = |p: &KernelNetParams| -> Result<f64> {
        match validation {
            Some(v) => uncensored_lifetime_mse(v, |x| {
                let (sf, _) = forward_records(p, x, controls.records().iter())?;
                Ok(expected_lifetime(&sf))
            }),
            None => Ok(f64::NAN),
        }
    };
    let mut validation_trace = Vec::new();
    let mut best = (f64::INFINITY, 0usize, params.clone());
    if validation.is_some() {
        let e = val_error(&params)?;
        validation_trace.push(e);
        best = (e, 0, params.clone());
    }

    let mut opt = OptimizerState::new(config.optimizer, config.learning_rate, params.num_params());
    let mut loss_trace = Vec::with_capacity(config.epochs);
    for epoch in 1..=config.epochs {
        examples.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        let mut batches = 0usize;
        for (b, batch) in examples.chunks(config.batch_size).enumerate() {
            let (loss, grad) = benk_loss_and_gradient(&params, batch, controls)?;
            if !loss.is_finite() || !grad.values().all(f64::is_finite) {
                return Err(BenkError::NonFiniteLoss { epoch, batch: b });
            }
            opt.apply(&mut params, &grad);
            epoch_loss += loss;
            batches += 1;
        }
        loss_trace.push(epoch_loss / batches as f64);
        if validation.is_some() {
            let e = val_error(&params)?;
            validation_trace.push(e);
            if e < best.0 {
                best = (e, epoch, params.clone());
            }
        }
    }

    let selected_epoch = if validation.is_some() {
        params = best.2;
        best.1
    } else {
        config.epochs
    };
    Ok(TrainedBenk {
        params,
        config: config.clone(),
        feature_dim: d,
        loss_trace,
        validation_trace,
        selected_epoch,
    })
}

impl TrainedBenk {
    /// Survival function at `z` over all of `refs`, weighted by the trained
    /// kernel.
    pub fn survival_function(
        &self,
        refs: &SurvivalDataset,
        z: &[f64],
    ) -> Result<StepSurvivalFunction> {
        for got in [z.len(), refs.dim()] {
            if got != self.feature_dim {
                return Err(BenkError::DimensionMismatch {
                    expected: self.feature_dim,
                    got,
                });
            }
        }
        Ok(forward_records(&self.params, z, refs.records().iter())?.0)
    }

    pub fn to_text(&self) -> Result<String> {
        let mut s = String::new();
        let _ = writeln!(s, "benk-model 1");
        let _ = writeln!(s, "feature_dim {}", self.feature_dim);
        let _ = writeln!(s, "selected_epoch {}", self.selected_epoch);
        let _ = writeln!(s, "train_config {}", serde_json::to_string(&self.config)?);
        let _ = writeln!(s, "loss_trace {}", serde_json::to_string(&self.loss_trace)?);
        let _ = writeln!(
            s,
            "validation_trace {}",
            serde_json::to_string(&self.validation_trace)?
        );
        s.push_str(&self.params.to_text());
        Ok(s)
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let mut field = |key: &str| -> Result<String> {
            let line = lines
                .next()
                .ok_or_else(|| BenkError::Parse(format!("missing `{key}` line")))?;
            line.strip_prefix(key)
                .map(|v| v.trim().to_string())
                .ok_or_else(|| BenkError::Parse(format!("expected `{key}`, got {line:?}")))
        };
        if field("benk-model")? != "1" {
            return Err(BenkError::Parse("unsupported model version".into()));
        }
        let feature_dim = field("feature_dim")?
            .parse()
            .map_err(|_| BenkError::Parse("bad feature_dim".into()))?;
        let selected_epoch = field("selected_epoch")?
            .parse()
            .map_err(|_| BenkError::Parse("bad selected_epoch".into()))?;
        let config = serde_json::from_str(&field("train_config")?)?;
        let loss_trace = serde_json::from_str(&field("loss_trace")?)?;
        let validation_trace = parse_trace(&field("validation_trace")?)?;
        let rest: Vec<&str> = lines.collect();
        let params = KernelNetParams::from_text(&rest.join("\n"))?;
        if params.feature_dim() != feature_dim {
            return Err(BenkError::DimensionMismatch {
                expected: feature_dim,
                got: params.feature_dim(),
            });
        }
        Ok(Self {
            params,
            config,
            feature_dim,
            loss_trace,
            validation_trace,
            selected_epoch,
        })
    }
}

// serde_json writes NaN as null.
fn parse_trace(s: &str) -> Result<Vec<f64>> {
    let raw: Vec<Option<f64>> = serde_json::from_str(s)?;
    Ok(raw.into_iter().map(|v| v.unwrap_or(f64::NAN)).collect())
}

/// Expected-lifetime difference at `z`, both survival functions built with
/// the same trained kernel.
pub fn predict_cate(
    model: &TrainedBenk,
    controls: &SurvivalDataset,
    treatments: &SurvivalDataset,
    z: &[f64],
) -> Result<f64> {
    let s0 = model.survival_function(controls, z)?;
    let s1 = model.survival_function(treatments, z)?;
    Ok(cate_from_sfs(&s0, &s1))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::survival::{Group, SurvivalRecord};

    fn controls(n: usize, censor_every: usize) -> SurvivalDataset {
        let recs = (0..n)
            .map(|i| {
                let x = i as f64 / n as f64;
                SurvivalRecord::new(
                    vec![x, 1.0 - x],
                    1.0 + 3.0 * x,
                    censor_every == 0 || i % censor_every != 0,
                    Group::Control,
                )
                .unwrap()
            })
            .collect();
        SurvivalDataset::new(recs).unwrap()
    }

    fn small_train(seed: u64) -> TrainConfig {
        TrainConfig {
            replications: 2,
            subset_size: Some(4),
            epochs: 3,
            batch_size: 8,
            hidden_layers: vec![6],
            seed,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn example_count_and_subsets() {
        let c = controls(5, 0);
        let cfg = TrainConfig {
            replications: 3,
            subset_size: Some(2),
            ..TrainConfig::default()
        };
        let ex = build_training_examples(&c, &cfg, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        assert_eq!(ex.len(), 15);
        for e in &ex {
            assert_eq!(e.subset.len(), 2);
            assert!(!e.subset.contains(&e.anchor));
            assert_ne!(e.subset[0], e.subset[1]);
        }
    }

    #[test]
    fn forced_subset() {
        let c = controls(3, 0);
        let cfg = TrainConfig {
            replications: 1,
            subset_size: Some(2),
            ..TrainConfig::default()
        };
        let ex = build_training_examples(&c, &cfg, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        for e in ex {
            let mut s = e.subset.clone();
            s.sort();
            let expect: Vec<usize> = (0..3).filter(|&k| k != e.anchor).collect();
            assert_eq!(s, expect);
        }
    }

    #[test]
    fn too_few_controls() {
        let c = controls(2, 0);
        let cfg = TrainConfig {
            subset_size: Some(2),
            ..TrainConfig::default()
        };
        assert!(matches!(
            build_training_examples(&c, &cfg, &mut ChaCha8Rng::seed_from_u64(1)),
            Err(BenkError::InsufficientControls { .. })
        ));
    }

    #[test]
    fn single_example_loss() {
        // Subset of one uncensored record at 3.5 gives E = 3.5; anchor time 1.5.
        let recs = vec![
            SurvivalRecord::new(vec![0.0], 1.5, true, Group::Control).unwrap(),
            SurvivalRecord::new(vec![1.0], 3.5, true, Group::Control).unwrap(),
        ];
        let c = SurvivalDataset::new(recs).unwrap();
        let p = KernelNetParams::init(&KernelNetConfig {
            feature_dim: 1,
            hidden_layers: vec![3],
            activation: Activation::Relu,
            init_seed: 0,
        })
        .unwrap();
        let ex = [TrainingExample {
            anchor: 0,
            subset: vec![1],
        }];
        assert_eq!(benk_loss(&p, &ex, &c).unwrap(), 4.0);
    }

    #[test]
    fn censored_anchors_are_ignored_and_all_censored_fails() {
        let recs = vec![
            SurvivalRecord::new(vec![0.0], 1.5, false, Group::Control).unwrap(),
            SurvivalRecord::new(vec![1.0], 3.5, true, Group::Control).unwrap(),
        ];
        let c = SurvivalDataset::new(recs).unwrap();
        let p = KernelNetParams::init(&KernelNetConfig {
            feature_dim: 1,
            hidden_layers: vec![3],
            activation: Activation::Relu,
            init_seed: 0,
        })
        .unwrap();
        let ex = [TrainingExample {
            anchor: 0,
            subset: vec![1],
        }];
        assert!(matches!(
            benk_loss(&p, &ex, &c),
            Err(BenkError::AllAnchorsCensored)
        ));
        assert!(matches!(
            benk_loss_and_gradient(&p, &ex, &c),
            Err(BenkError::AllAnchorsCensored)
        ));
    }

    #[test]
    fn zero_epochs_keeps_initialization() {
        let c = controls(12, 4);
        let mut cfg = small_train(3);
        cfg.epochs = 0;
        let m = train(&c, &cfg).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let init_seed: u64 = rng.random();
        let init = KernelNetParams::init(&cfg.kernel_config(2, init_seed)).unwrap();
        assert_eq!(m.params, init);
        assert!(m.loss_trace.is_empty());
    }

    #[test]
    fn training_is_deterministic() {
        let c = controls(12, 4);
        let a = train(&c, &small_train(9)).unwrap();
        let b = train(&c, &small_train(9)).unwrap();
        assert_eq!(a.loss_trace, b.loss_trace);
        assert_eq!(a.params, b.params);
    }

    #[test]
    fn validation_selection_keeps_best_epoch() {
        let c = controls(12, 4);
        let v = controls(6, 3);
        let m = train_with_validation(&c, Some(&v), &small_train(2)).unwrap();
        assert_eq!(m.validation_trace.len(), 4);
        let best = m
            .validation_trace
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min);
        assert_eq!(m.validation_trace[m.selected_epoch], best);
    }

    #[test]
    fn predict_cate_identical_groups_is_zero() {
        let c = controls(10, 3);
        let m = train(&c, &small_train(1)).unwrap();
        assert_eq!(predict_cate(&m, &c, &c, &[0.3, 0.7]).unwrap(), 0.0);
        assert!(matches!(
            predict_cate(&m, &c, &c, &[0.3]),
            Err(BenkError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn model_text_round_trip() {
        let c = controls(12, 4);
        let v = controls(6, 3);
        let m = train_with_validation(&c, Some(&v), &small_train(4)).unwrap();
        let back = TrainedBenk::from_text(&m.to_text().unwrap()).unwrap();
        assert_eq!(back.params, m.params);
        assert_eq!(back.config, m.config);
        assert_eq!(back.loss_trace, m.loss_trace);
        assert_eq!(back.selected_epoch, m.selected_epoch);
    }
}
