//! Product-limit survival estimation.
//!
//! Kaplan-Meier and Beran (kernel-weighted Kaplan-Meier) estimators, the
//! step-function type they produce, expected-lifetime integration, the
//! expected-lifetime difference used as the treatment effect, and Harrell's
//! concordance index.
//!
//! Every estimator returns a [`StepSurvivalFunction`] whose step times are the
//! distinct observed times of its reference records, censored ones included.
//! The function only drops at uncensored times; censored times are carried as
//! flat steps so that integration runs up to the largest observed time.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::error::{BenkError, Result};

/// Suffix weight mass below which a Beran factor is frozen at 1.
pub const DENOMINATOR_FLOOR: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Group {
    Control,
    Treatment,
}

impl Group {
    pub fn indicator(self) -> f64 {
        match self {
            Group::Control => 0.0,
            Group::Treatment => 1.0,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Group::Control => "control",
            Group::Treatment => "treatment",
        }
    }
}

/// One subject: covariates, observed time, and whether the event was seen.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SurvivalRecord {
    pub features: Vec<f64>,
    pub time: f64,
    /// `true` when the event was observed, `false` when right-censored.
    pub event: bool,
    pub group: Group,
}

impl SurvivalRecord {
    pub fn new(features: Vec<f64>, time: f64, event: bool, group: Group) -> Result<Self> {
        if features.is_empty() {
            return Err(BenkError::InvalidInput("empty feature vector".into()));
        }
        if features.iter().any(|x| !x.is_finite()) {
            return Err(BenkError::InvalidInput("non-finite feature".into()));
        }
        if !(time.is_finite() && time > 0.0) {
            return Err(BenkError::InvalidInput(format!(
                "time must be positive and finite, got {time}"
            )));
        }
        Ok(Self {
            features,
            time,
            event,
            group,
        })
    }
}

/// A nonempty list of records sharing one feature dimension.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SurvivalDataset {
    records: Vec<SurvivalRecord>,
    dim: usize,
}

impl SurvivalDataset {
    pub fn new(records: Vec<SurvivalRecord>) -> Result<Self> {
        let first = records
            .first()
            .ok_or_else(|| BenkError::InvalidInput("empty dataset".into()))?;
        let dim = first.features.len();
        for r in &records {
            if r.features.len() != dim {
                return Err(BenkError::DimensionMismatch {
                    expected: dim,
                    got: r.features.len(),
                });
            }
            if !(r.time.is_finite() && r.time > 0.0) {
                return Err(BenkError::InvalidInput(format!(
                    "time must be positive and finite, got {}",
                    r.time
                )));
            }
            if r.features.iter().any(|x| !x.is_finite()) {
                return Err(BenkError::InvalidInput("non-finite feature".into()));
            }
        }
        Ok(Self { records, dim })
    }

    /// Convenience constructor from parallel columns.
    pub fn from_columns(
        features: &[Vec<f64>],
        times: &[f64],
        events: &[bool],
        group: Group,
    ) -> Result<Self> {
        if features.len() != times.len() {
            return Err(BenkError::LengthMismatch {
                expected: features.len(),
                got: times.len(),
            });
        }
        if events.len() != times.len() {
            return Err(BenkError::LengthMismatch {
                expected: times.len(),
                got: events.len(),
            });
        }
        let records = features
            .iter()
            .zip(times)
            .zip(events)
            .map(|((x, &t), &e)| SurvivalRecord::new(x.clone(), t, e, group))
            .collect::<Result<Vec<_>>>()?;
        Self::new(records)
    }

    pub fn records(&self) -> &[SurvivalRecord] {
        &self.records
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn times(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.time).collect()
    }

    pub fn events(&self) -> Vec<bool> {
        self.records.iter().map(|r| r.event).collect()
    }

    pub fn uncensored_count(&self) -> usize {
        self.records.iter().filter(|r| r.event).count()
    }

    /// Records at `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        let records = indices
            .iter()
            .map(|&i| {
                self.records.get(i).cloned().ok_or_else(|| {
                    BenkError::InvalidInput(format!("index {i} out of range {}", self.len()))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(records)
    }

    /// Distinct observed times in ascending order.
    pub fn time_grid(&self) -> Vec<f64> {
        distinct_sorted(self.records.iter().map(|r| r.time))
    }

    /// Concatenates two datasets of the same dimension.
    pub fn concat(&self, other: &SurvivalDataset) -> Result<Self> {
        if self.dim != other.dim {
            return Err(BenkError::DimensionMismatch {
                expected: self.dim,
                got: other.dim,
            });
        }
        let mut records = self.records.clone();
        records.extend(other.records.iter().cloned());
        Self::new(records)
    }
}

pub(crate) fn distinct_sorted(values: impl Iterator<Item = f64>) -> Vec<f64> {
    let mut v: Vec<f64> = values.collect();
    v.sort_by(f64::total_cmp);
    v.dedup();
    v
}

/// Right-continuous nonincreasing step function, equal to 1 before the first
/// step time.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepSurvivalFunction {
    times: Vec<f64>,
    values: Vec<f64>,
}

impl StepSurvivalFunction {
    pub fn new(times: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if times.len() != values.len() {
            return Err(BenkError::LengthMismatch {
                expected: times.len(),
                got: values.len(),
            });
        }
        if times.iter().any(|t| !(t.is_finite() && *t > 0.0)) {
            return Err(BenkError::InvalidInput(
                "step times must be positive".into(),
            ));
        }
        if times.windows(2).any(|w| w[0] >= w[1]) {
            return Err(BenkError::InvalidInput(
                "step times must be strictly increasing".into(),
            ));
        }
        if values.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(BenkError::InvalidInput(
                "survival values must lie in [0, 1]".into(),
            ));
        }
        if values.windows(2).any(|w| w[1] > w[0]) {
            return Err(BenkError::InvalidInput(
                "survival values must be nonincreasing".into(),
            ));
        }
        Ok(Self { times, values })
    }

    /// Point mass at `time`: 1 before it, 0 from it on.
    pub fn point_mass(time: f64) -> Result<Self> {
        Self::new(vec![time], vec![0.0])
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn last_time(&self) -> Option<f64> {
        self.times.last().copied()
    }

    /// S(t), right-continuous at the step times.
    pub fn value_at(&self, t: f64) -> f64 {
        let k = self.times.partition_point(|&s| s <= t);
        if k == 0 {
            1.0
        } else {
            self.values[k - 1]
        }
    }
}

/// Normalized nonnegative weights over a reference set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeightVector(Vec<f64>);

impl WeightVector {
    pub const SUM_TOLERANCE: f64 = 1e-9;

    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(BenkError::InvalidInput("empty weight vector".into()));
        }
        if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(BenkError::InvalidInput(
                "weights must be finite and nonnegative".into(),
            ));
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > Self::SUM_TOLERANCE {
            return Err(BenkError::InvalidInput(format!(
                "weights sum to {sum}, not 1"
            )));
        }
        Ok(Self(weights))
    }

    pub fn uniform(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(BenkError::InvalidInput("empty weight vector".into()));
        }
        Ok(Self(vec![1.0 / n as f64; n]))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

/// Product-limit processing order: ascending time, events before censorings
/// at equal times, then original index.
pub fn sort_risk_order(dataset: &SurvivalDataset) -> Vec<usize> {
    let times = dataset.times();
    let events = dataset.events();
    risk_order(&times, &events)
}

pub(crate) fn risk_order(times: &[f64], events: &[bool]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..times.len()).collect();
    // sort_by is stable, so equal keys keep index order.
    order.sort_by(|&a, &b| {
        times[a]
            .total_cmp(&times[b])
            .then_with(|| events[b].cmp(&events[a]))
    });
    order
}

/// Kaplan-Meier estimate from risk-set counts.
pub fn kaplan_meier(dataset: &SurvivalDataset) -> StepSurvivalFunction {
    let mut pairs: Vec<(f64, bool)> = dataset
        .records()
        .iter()
        .map(|r| (r.time, r.event))
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));

    let mut at_risk = pairs.len();
    let mut surv = 1.0;
    let mut times = Vec::new();
    let mut values = Vec::new();
    let mut i = 0;
    while i < pairs.len() {
        let t = pairs[i].0;
        let mut deaths = 0usize;
        let mut leaving = 0usize;
        while i < pairs.len() && pairs[i].0 == t {
            deaths += usize::from(pairs[i].1);
            leaving += 1;
            i += 1;
        }
        if deaths > 0 {
            surv *= 1.0 - deaths as f64 / at_risk as f64;
        }
        times.push(t);
        values.push(surv);
        at_risk -= leaving;
    }
    StepSurvivalFunction { times, values }
}

/// Intermediate quantities of one Beran evaluation, kept for differentiation.
#[derive(Clone, Debug)]
pub(crate) struct BeranPass {
    /// Sorted position to record index.
    pub order: Vec<usize>,
    /// Weight mass of the records at or after each sorted position.
    pub denom: Vec<f64>,
    pub factor: Vec<f64>,
    /// Whether the factor depends on the weights (uncensored and unclamped).
    pub active: Vec<bool>,
    /// Survival after processing each sorted position.
    pub surv: Vec<f64>,
    /// For each step of `sf`, the last sorted position at that time.
    pub step_end: Vec<usize>,
    pub sf: StepSurvivalFunction,
}

pub(crate) fn beran_pass(times: &[f64], events: &[bool], weights: &[f64]) -> BeranPass {
    let n = times.len();
    let order = risk_order(times, events);

    // The remaining mass 1 - sum_{j<i} W_j, accumulated from the tail so the
    // final uncensored record sees exactly its own weight.
    let mut denom = vec![0.0; n];
    let mut acc = 0.0;
    for k in (0..n).rev() {
        acc += weights[order[k]];
        denom[k] = acc;
    }

    let mut factor = vec![1.0; n];
    let mut active = vec![false; n];
    let mut surv = vec![1.0; n];
    let mut s = 1.0;
    for k in 0..n {
        let idx = order[k];
        if events[idx] && denom[k] >= DENOMINATOR_FLOOR {
            let ratio = weights[idx] / denom[k];
            if ratio <= 1.0 {
                factor[k] = 1.0 - ratio;
                active[k] = true;
            } else {
                factor[k] = 0.0;
            }
        }
        s *= factor[k];
        surv[k] = s;
    }

    let mut step_times = Vec::new();
    let mut step_values = Vec::new();
    let mut step_end = Vec::new();
    for k in 0..n {
        let t = times[order[k]];
        let last_at_t = k + 1 == n || times[order[k + 1]] != t;
        if last_at_t {
            step_times.push(t);
            step_values.push(surv[k].clamp(0.0, 1.0));
            step_end.push(k);
        }
    }

    BeranPass {
        order,
        denom,
        factor,
        active,
        surv,
        step_end,
        sf: StepSurvivalFunction {
            times: step_times,
            values: step_values,
        },
    }
}

/// Beran estimate: the product over uncensored references of
/// `1 - W_i / (1 - sum_{j<i} W_j)`, taken in [`sort_risk_order`].
pub fn beran_sf(refs: &SurvivalDataset, weights: &WeightVector) -> Result<StepSurvivalFunction> {
    if refs.len() != weights.len() {
        return Err(BenkError::LengthMismatch {
            expected: refs.len(),
            got: weights.len(),
        });
    }
    Ok(beran_pass(&refs.times(), &refs.events(), weights.as_slice()).sf)
}

/// Sum over steps of (t_j - t_{j-1}) times the value on [t_{j-1}, t_j),
/// with t_0 = 0 and value 1 on the first interval.
pub fn expected_lifetime(sf: &StepSurvivalFunction) -> f64 {
    let mut prev_t = 0.0;
    let mut prev_v = 1.0;
    let mut total = 0.0;
    for (&t, &v) in sf.times.iter().zip(&sf.values) {
        total += (t - prev_t) * prev_v;
        prev_t = t;
        prev_v = v;
    }
    total
}

/// Integrates `sf` over an arbitrary ascending grid, using on each
/// [g_{j-1}, g_j) the value of `sf` at the left endpoint.
///
/// `integrate_on_grid(sf, sf.times())` equals `expected_lifetime(sf)`.
pub fn integrate_on_grid(sf: &StepSurvivalFunction, grid: &[f64]) -> f64 {
    let mut prev = 0.0;
    let mut total = 0.0;
    for &g in grid {
        total += (g - prev) * sf.value_at(prev);
        prev = g;
    }
    total
}

/// Difference of expected lifetimes, treatment minus control.
pub fn cate_from_sfs(
    sf_control: &StepSurvivalFunction,
    sf_treatment: &StepSurvivalFunction,
) -> f64 {
    expected_lifetime(sf_treatment) - expected_lifetime(sf_control)
}

/// Mean squared error between `predict(x)` and the observed time over the
/// uncensored records of `validation`.
pub fn uncensored_lifetime_mse<F>(validation: &SurvivalDataset, mut predict: F) -> Result<f64>
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    let mut total = 0.0;
    let mut count = 0usize;
    for r in validation.records().iter().filter(|r| r.event) {
        let e = predict(&r.features)?;
        total += (e - r.time).powi(2);
        count += 1;
    }
    if count == 0 {
        return Err(BenkError::AllValidationCensored);
    }
    Ok(total / count as f64)
}

/// Harrell's C-index for predicted lifetimes (larger means longer survival).
///
/// A pair is admissible when the shorter observed time is uncensored and the
/// times differ. Prediction ties count one half.
pub fn concordance_index(predicted_lifetimes: &[f64], dataset: &SurvivalDataset) -> Result<f64> {
    if predicted_lifetimes.len() != dataset.len() {
        return Err(BenkError::LengthMismatch {
            expected: dataset.len(),
            got: predicted_lifetimes.len(),
        });
    }
    let recs = dataset.records();
    let mut admissible = 0u64;
    let mut score = 0.0;
    for i in 0..recs.len() {
        for j in 0..recs.len() {
            if !recs[i].event || recs[i].time >= recs[j].time {
                continue;
            }
            admissible += 1;
            match predicted_lifetimes[i].partial_cmp(&predicted_lifetimes[j]) {
                Some(Ordering::Less) => score += 1.0,
                Some(Ordering::Equal) => score += 0.5,
                _ => {}
            }
        }
    }
    if admissible == 0 {
        return Err(BenkError::NoAdmissiblePairs);
    }
    Ok(score / admissible as f64)
}
