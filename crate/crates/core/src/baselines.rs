//! Comparison estimators: Cox proportional hazards and Gaussian-kernel Beran
//! survival regressors, combined by T-, S- and X-learners.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{BenkError, Result};
use crate::kernel::softmax;
use crate::survival::{
    beran_pass, cate_from_sfs, expected_lifetime, integrate_on_grid, Group, StepSurvivalFunction,
    SurvivalDataset, SurvivalRecord,
};

/// Ridge coefficients tried during tuning.
pub const RIDGE_GRID: [f64; 5] = [0.1, 0.5, 1.0, 2.0, 5.0];

/// Gaussian bandwidths tried during tuning, ascending.
pub const BANDWIDTH_GRID: [f64; 13] = [
    1e-3, 1e-2, 1e-1, 0.5, 1.0, 5.0, 10.0, 50.0, 100.0, 200.0, 500.0, 700.0, 1e3,
];

const COX_MAX_ITER: usize = 100;
const COX_GRAD_TOL: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoxModel {
    pub beta: Vec<f64>,
    /// Distinct observed times of the training data.
    pub baseline_times: Vec<f64>,
    /// Breslow cumulative baseline hazard at each baseline time.
    pub baseline_cumhaz: Vec<f64>,
    pub ridge_coefficient: f64,
    pub iterations: usize,
}

/// Sufficient statistics of the Breslow partial likelihood at one `beta`.
struct CoxEval {
    loglik: f64,
    grad: DVector<f64>,
    /// Negative Hessian of the penalized log-likelihood.
    info: DMatrix<f64>,
}

struct CoxData {
    x: Vec<Vec<f64>>,
    time: Vec<f64>,
    event: Vec<bool>,
    /// Indices by descending time.
    desc: Vec<usize>,
}

impl CoxData {
    fn new(dataset: &SurvivalDataset) -> Self {
        let recs = dataset.records();
        let mut desc: Vec<usize> = (0..recs.len()).collect();
        desc.sort_by(|&a, &b| recs[b].time.total_cmp(&recs[a].time));
        Self {
            x: recs.iter().map(|r| r.features.clone()).collect(),
            time: recs.iter().map(|r| r.time).collect(),
            event: recs.iter().map(|r| r.event).collect(),
            desc,
        }
    }

    fn eta(&self, beta: &[f64]) -> Vec<f64> {
        self.x
            .iter()
            .map(|x| x.iter().zip(beta).map(|(a, b)| a * b).sum())
            .collect()
    }

    /// Walks tied-time groups in descending time order, growing the risk set.
    /// `visit(group, risk0, risk1, risk2)` sees each group after its members
    /// joined the risk set; sums are of `exp(eta - shift)`.
    fn eval(&self, beta: &[f64], ridge: f64, with_info: bool) -> CoxEval {
        let p = beta.len();
        let eta = self.eta(beta);
        let shift = eta.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut s0 = 0.0;
        let mut s1 = DVector::zeros(p);
        let mut s2 = DMatrix::zeros(p, p);
        let mut loglik = 0.0;
        let mut grad = DVector::zeros(p);
        let mut info = DMatrix::zeros(p, p);

        let mut k = 0;
        while k < self.desc.len() {
            let t = self.time[self.desc[k]];
            let start = k;
            while k < self.desc.len() && self.time[self.desc[k]] == t {
                let i = self.desc[k];
                let w = (eta[i] - shift).exp();
                let xi = DVector::from_column_slice(&self.x[i]);
                s0 += w;
                s1.axpy(w, &xi, 1.0);
                if with_info {
                    s2.ger(w, &xi, &xi, 1.0);
                }
                k += 1;
            }
            let deaths: Vec<usize> = self.desc[start..k]
                .iter()
                .copied()
                .filter(|&i| self.event[i])
                .collect();
            if deaths.is_empty() {
                continue;
            }
            let dcount = deaths.len() as f64;
            let mean = &s1 / s0;
            loglik -= dcount * (s0.ln() + shift);
            for &i in &deaths {
                loglik += eta[i];
                for (g, x) in grad.iter_mut().zip(&self.x[i]) {
                    *g += x;
                }
            }
            grad.axpy(-dcount, &mean, 1.0);
            if with_info {
                let second = &s2 / s0 - &mean * mean.transpose();
                info += second * dcount;
            }
        }
        let b = DVector::from_column_slice(beta);
        loglik -= 0.5 * ridge * b.norm_squared();
        grad.axpy(-ridge, &b, 1.0);
        if with_info {
            for j in 0..p {
                info[(j, j)] += ridge;
            }
        }
        CoxEval { loglik, grad, info }
    }

    fn breslow(&self, beta: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let eta = self.eta(beta);
        let shift = eta.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        // Risk-set sums per distinct time, descending.
        let mut jumps: Vec<(f64, f64)> = Vec::new();
        let mut s0 = 0.0;
        let mut k = 0;
        while k < self.desc.len() {
            let t = self.time[self.desc[k]];
            let mut deaths = 0usize;
            while k < self.desc.len() && self.time[self.desc[k]] == t {
                let i = self.desc[k];
                s0 += (eta[i] - shift).exp();
                deaths += usize::from(self.event[i]);
                k += 1;
            }
            let jump = if deaths > 0 {
                deaths as f64 * (-shift).exp() / s0
            } else {
                0.0
            };
            jumps.push((t, jump));
        }
        jumps.reverse();
        let mut cum = 0.0;
        let mut times = Vec::with_capacity(jumps.len());
        let mut cumhaz = Vec::with_capacity(jumps.len());
        for (t, j) in jumps {
            cum += j;
            times.push(t);
            cumhaz.push(cum);
        }
        (times, cumhaz)
    }
}

/// Newton-Raphson with step halving on the ridge-penalized Breslow partial
/// likelihood `l(beta) - ridge/2 · |beta|^2`, then the Breslow baseline
/// cumulative hazard.
pub fn fit_cox(dataset: &SurvivalDataset, ridge: f64) -> Result<CoxModel> {
    if !(ridge.is_finite() && ridge >= 0.0) {
        return Err(BenkError::InvalidInput("ridge must be nonnegative".into()));
    }
    if dataset.uncensored_count() == 0 {
        return Err(BenkError::Degenerate(
            "Cox fit needs at least one event".into(),
        ));
    }
    let data = CoxData::new(dataset);
    let p = dataset.dim();
    let mut beta = vec![0.0; p];
    let mut current = data.eval(&beta, ridge, true);
    let mut iterations = 0;
    let mut converged = current.grad.norm() < COX_GRAD_TOL;

    while !converged && iterations < COX_MAX_ITER {
        iterations += 1;
        let step = solve_newton(&current.info, &current.grad)
            .ok_or_else(|| BenkError::Degenerate("singular information matrix".into()))?;
        let mut scale = 1.0;
        let mut accepted = None;
        while scale > 1e-12 {
            let candidate: Vec<f64> = beta
                .iter()
                .zip(step.iter())
                .map(|(b, s)| b + scale * s)
                .collect();
            let eval = data.eval(&candidate, ridge, false);
            if eval.loglik.is_finite() && eval.loglik >= current.loglik {
                accepted = Some(candidate);
                break;
            }
            scale *= 0.5;
        }
        let Some(next) = accepted else {
            // No ascent possible at machine precision.
            converged = current.grad.norm() < 1e-6 * (1.0 + dataset.len() as f64);
            break;
        };
        let moved = next
            .iter()
            .zip(&beta)
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        beta = next;
        current = data.eval(&beta, ridge, true);
        converged = current.grad.norm() < COX_GRAD_TOL || moved < 1e-14;
    }

    let (baseline_times, baseline_cumhaz) = data.breslow(&beta);
    let model = CoxModel {
        beta,
        baseline_times,
        baseline_cumhaz,
        ridge_coefficient: ridge,
        iterations,
    };
    if converged {
        Ok(model)
    } else {
        Err(BenkError::NonConvergence {
            iterations,
            grad_norm: current.grad.norm(),
            last: Box::new(model),
        })
    }
}

fn solve_newton(info: &DMatrix<f64>, grad: &DVector<f64>) -> Option<DVector<f64>> {
    if let Some(ch) = info.clone().cholesky() {
        return Some(ch.solve(grad));
    }
    info.clone().lu().solve(grad)
}

/// Penalized partial log-likelihood, exposed for diagnostics and tests.
pub fn cox_penalized_loglik(dataset: &SurvivalDataset, beta: &[f64], ridge: f64) -> Result<f64> {
    if beta.len() != dataset.dim() {
        return Err(BenkError::DimensionMismatch {
            expected: dataset.dim(),
            got: beta.len(),
        });
    }
    Ok(CoxData::new(dataset).eval(beta, ridge, false).loglik)
}

/// `S(t|z) = exp(-Lambda_0(t) · exp(beta·z))` on the baseline times.
pub fn cox_sf(model: &CoxModel, z: &[f64]) -> Result<StepSurvivalFunction> {
    if z.len() != model.beta.len() {
        return Err(BenkError::DimensionMismatch {
            expected: model.beta.len(),
            got: z.len(),
        });
    }
    let risk = z
        .iter()
        .zip(&model.beta)
        .map(|(a, b)| a * b)
        .sum::<f64>()
        .exp();
    let values = model
        .baseline_cumhaz
        .iter()
        .map(|&h| {
            if h == 0.0 {
                1.0
            } else {
                let v = (-h * risk).exp();
                if v.is_nan() {
                    0.0
                } else {
                    v.clamp(0.0, 1.0)
                }
            }
        })
        .collect();
    StepSurvivalFunction::new(model.baseline_times.clone(), values)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaussianBeranConfig {
    pub bandwidth: f64,
}

impl GaussianBeranConfig {
    pub fn new(bandwidth: f64) -> Result<Self> {
        if !(bandwidth.is_finite() && bandwidth > 0.0) {
            return Err(BenkError::InvalidInput("bandwidth must be positive".into()));
        }
        Ok(Self { bandwidth })
    }
}

/// Normalized Gaussian kernel weights of `z` against `points`.
pub fn gaussian_weights<'a>(
    points: impl Iterator<Item = &'a [f64]>,
    z: &[f64],
    bandwidth: f64,
) -> Vec<f64> {
    let denom = 2.0 * bandwidth * bandwidth;
    let scores: Vec<f64> = points
        .map(|x| -x.iter().zip(z).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / denom)
        .collect();
    softmax(&scores)
}

pub fn gaussian_beran_sf(
    dataset: &SurvivalDataset,
    z: &[f64],
    config: &GaussianBeranConfig,
) -> Result<StepSurvivalFunction> {
    if z.len() != dataset.dim() {
        return Err(BenkError::DimensionMismatch {
            expected: dataset.dim(),
            got: z.len(),
        });
    }
    let w = gaussian_weights(
        dataset.records().iter().map(|r| r.features.as_slice()),
        z,
        config.bandwidth,
    );
    Ok(beran_pass(&dataset.times(), &dataset.events(), &w).sf)
}

/// Gaussian Nadaraya-Watson regression of `targets` on `points`, at `z`.
pub fn nadaraya_watson(points: &[Vec<f64>], targets: &[f64], z: &[f64], bandwidth: f64) -> f64 {
    let w = gaussian_weights(points.iter().map(Vec::as_slice), z, bandwidth);
    w.iter().zip(targets).map(|(a, b)| a * b).sum()
}

/// A survival regressor that can be fitted and queried for `S(t|z)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BaseLearner {
    Cox { ridge: f64 },
    GaussianBeran(GaussianBeranConfig),
}

#[derive(Clone, Debug)]
pub enum FittedBase {
    Cox(CoxModel),
    GaussianBeran {
        data: SurvivalDataset,
        config: GaussianBeranConfig,
    },
}

impl BaseLearner {
    /// Fits on `dataset`. A Cox fit that stops at the iteration cap keeps its
    /// last iterate.
    pub fn fit(&self, dataset: &SurvivalDataset) -> Result<FittedBase> {
        match *self {
            BaseLearner::Cox { ridge } => match fit_cox(dataset, ridge) {
                Ok(m) => Ok(FittedBase::Cox(m)),
                Err(BenkError::NonConvergence { last, .. }) => Ok(FittedBase::Cox(*last)),
                Err(e) => Err(e),
            },
            BaseLearner::GaussianBeran(config) => Ok(FittedBase::GaussianBeran {
                data: dataset.clone(),
                config,
            }),
        }
    }
}

impl FittedBase {
    pub fn sf(&self, z: &[f64]) -> Result<StepSurvivalFunction> {
        match self {
            FittedBase::Cox(m) => cox_sf(m, z),
            FittedBase::GaussianBeran { data, config } => gaussian_beran_sf(data, z, config),
        }
    }

    pub fn expected_lifetime(&self, z: &[f64]) -> Result<f64> {
        Ok(expected_lifetime(&self.sf(z)?))
    }
}

/// Separate base models per group.
#[derive(Clone, Debug)]
pub struct TLearner {
    control: FittedBase,
    treatment: FittedBase,
}

impl TLearner {
    pub fn fit(
        base: &BaseLearner,
        controls: &SurvivalDataset,
        treatments: &SurvivalDataset,
    ) -> Result<Self> {
        check_groups(controls, treatments)?;
        Ok(Self {
            control: base.fit(controls)?,
            treatment: base.fit(treatments)?,
        })
    }

    pub fn cate(&self, z: &[f64]) -> Result<f64> {
        Ok(cate_from_sfs(&self.control.sf(z)?, &self.treatment.sf(z)?))
    }
}

fn check_groups(controls: &SurvivalDataset, treatments: &SurvivalDataset) -> Result<()> {
    if controls.dim() != treatments.dim() {
        return Err(BenkError::DimensionMismatch {
            expected: controls.dim(),
            got: treatments.dim(),
        });
    }
    Ok(())
}

pub fn t_learner_cate(
    base: &BaseLearner,
    controls: &SurvivalDataset,
    treatments: &SurvivalDataset,
    z: &[f64],
) -> Result<f64> {
    TLearner::fit(base, controls, treatments)?.cate(z)
}

/// One base model on the pooled data with the treatment indicator appended.
#[derive(Clone, Debug)]
pub struct SLearner {
    pooled: FittedBase,
    control_grid: Vec<f64>,
    treatment_grid: Vec<f64>,
}

/// Appends the group indicator to every feature vector.
pub fn augment_with_indicator(dataset: &SurvivalDataset) -> Result<SurvivalDataset> {
    let recs = dataset
        .records()
        .iter()
        .map(|r| {
            let mut x = r.features.clone();
            x.push(r.group.indicator());
            SurvivalRecord::new(x, r.time, r.event, r.group)
        })
        .collect::<Result<Vec<_>>>()?;
    SurvivalDataset::new(recs)
}

fn with_indicator(z: &[f64], group: Group) -> Vec<f64> {
    let mut v = z.to_vec();
    v.push(group.indicator());
    v
}

/// Relabels every record of `dataset` as belonging to `group`.
pub fn relabel(dataset: &SurvivalDataset, group: Group) -> Result<SurvivalDataset> {
    let recs = dataset
        .records()
        .iter()
        .map(|r| SurvivalRecord { group, ..r.clone() })
        .collect();
    SurvivalDataset::new(recs)
}

impl SLearner {
    pub fn fit(
        base: &BaseLearner,
        controls: &SurvivalDataset,
        treatments: &SurvivalDataset,
    ) -> Result<Self> {
        check_groups(controls, treatments)?;
        let pooled =
            relabel(controls, Group::Control)?.concat(&relabel(treatments, Group::Treatment)?)?;
        Ok(Self {
            pooled: base.fit(&augment_with_indicator(&pooled)?)?,
            control_grid: controls.time_grid(),
            treatment_grid: treatments.time_grid(),
        })
    }

    pub fn from_parts(
        pooled: FittedBase,
        control_grid: Vec<f64>,
        treatment_grid: Vec<f64>,
    ) -> Self {
        Self {
            pooled,
            control_grid,
            treatment_grid,
        }
    }

    /// Expected lifetime of `S(t|z, group)` on that group's time grid.
    pub fn group_lifetime(&self, z: &[f64], group: Group) -> Result<f64> {
        let sf = self.pooled.sf(&with_indicator(z, group))?;
        let grid = match group {
            Group::Control => &self.control_grid,
            Group::Treatment => &self.treatment_grid,
        };
        Ok(integrate_on_grid(&sf, grid))
    }

    pub fn cate(&self, z: &[f64]) -> Result<f64> {
        Ok(self.group_lifetime(z, Group::Treatment)? - self.group_lifetime(z, Group::Control)?)
    }
}

pub fn s_learner_cate(
    base: &BaseLearner,
    controls: &SurvivalDataset,
    treatments: &SurvivalDataset,
    z: &[f64],
) -> Result<f64> {
    SLearner::fit(base, controls, treatments)?.cate(z)
}

/// Imputed-effect learner. Expected lifetimes from per-group base models
/// stand in for the outcome regressions; imputed effects are formed on
/// uncensored records only and smoothed by Gaussian Nadaraya-Watson.
#[derive(Clone, Debug)]
pub struct XLearner {
    control_model: FittedBase,
    treatment_model: FittedBase,
    control_points: Vec<Vec<f64>>,
    /// `E_1(x_i) - f_i` over uncensored controls.
    control_effects: Vec<f64>,
    treatment_points: Vec<Vec<f64>>,
    /// `h_i - E_0(y_i)` over uncensored treatments.
    treatment_effects: Vec<f64>,
    pub tau_bandwidth: f64,
    pub alpha: f64,
}

impl XLearner {
    /// `alpha = None` uses the treated fraction `s / (c + s)`.
    pub fn fit(
        base: &BaseLearner,
        controls: &SurvivalDataset,
        treatments: &SurvivalDataset,
        tau_bandwidth: f64,
        alpha: Option<f64>,
    ) -> Result<Self> {
        check_groups(controls, treatments)?;
        Self::from_models(
            base.fit(controls)?,
            base.fit(treatments)?,
            controls,
            treatments,
            tau_bandwidth,
            alpha,
        )
    }

    pub fn from_models(
        control_model: FittedBase,
        treatment_model: FittedBase,
        controls: &SurvivalDataset,
        treatments: &SurvivalDataset,
        tau_bandwidth: f64,
        alpha: Option<f64>,
    ) -> Result<Self> {
        GaussianBeranConfig::new(tau_bandwidth)?;
        let alpha =
            alpha.unwrap_or(treatments.len() as f64 / (controls.len() + treatments.len()) as f64);
        if !(0.0..=1.0).contains(&alpha) {
            return Err(BenkError::InvalidInput("alpha must lie in [0, 1]".into()));
        }
        let mut control_points = Vec::new();
        let mut control_effects = Vec::new();
        for r in controls.records().iter().filter(|r| r.event) {
            control_effects.push(treatment_model.expected_lifetime(&r.features)? - r.time);
            control_points.push(r.features.clone());
        }
        let mut treatment_points = Vec::new();
        let mut treatment_effects = Vec::new();
        for r in treatments.records().iter().filter(|r| r.event) {
            treatment_effects.push(r.time - control_model.expected_lifetime(&r.features)?);
            treatment_points.push(r.features.clone());
        }
        if control_points.is_empty() {
            return Err(BenkError::NoUncensored("control"));
        }
        if treatment_points.is_empty() {
            return Err(BenkError::NoUncensored("treatment"));
        }
        Ok(Self {
            control_model,
            treatment_model,
            control_points,
            control_effects,
            treatment_points,
            treatment_effects,
            tau_bandwidth,
            alpha,
        })
    }

    pub fn tau_control(&self, z: &[f64]) -> f64 {
        nadaraya_watson(
            &self.control_points,
            &self.control_effects,
            z,
            self.tau_bandwidth,
        )
    }

    pub fn tau_treatment(&self, z: &[f64]) -> f64 {
        nadaraya_watson(
            &self.treatment_points,
            &self.treatment_effects,
            z,
            self.tau_bandwidth,
        )
    }

    /// Imputed control-side effect `E_1(x) - f` for an arbitrary record.
    pub fn imputed_control_effect(&self, x: &[f64], time: f64) -> Result<f64> {
        Ok(self.treatment_model.expected_lifetime(x)? - time)
    }

    pub fn with_tau_bandwidth(mut self, bandwidth: f64) -> Self {
        self.tau_bandwidth = bandwidth;
        self
    }

    pub fn cate(&self, z: &[f64]) -> Result<f64> {
        if z.len() != self.control_points[0].len() {
            return Err(BenkError::DimensionMismatch {
                expected: self.control_points[0].len(),
                got: z.len(),
            });
        }
        Ok(self.alpha * self.tau_control(z) + (1.0 - self.alpha) * self.tau_treatment(z))
    }

    pub fn control_model(&self) -> &FittedBase {
        &self.control_model
    }

    pub fn treatment_model(&self) -> &FittedBase {
        &self.treatment_model
    }
}

pub fn x_learner_cate(
    base: &BaseLearner,
    controls: &SurvivalDataset,
    treatments: &SurvivalDataset,
    z: &[f64],
    tau_bandwidth: f64,
    alpha: Option<f64>,
) -> Result<f64> {
    XLearner::fit(base, controls, treatments, tau_bandwidth, alpha)?.cate(z)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::survival::kaplan_meier;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn ds(rows: &[(&[f64], f64, bool)], group: Group) -> SurvivalDataset {
        SurvivalDataset::new(
            rows.iter()
                .map(|(x, t, e)| SurvivalRecord::new(x.to_vec(), *t, *e, group).unwrap())
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn breslow_by_hand() {
        // Times 1 (event), 2 (event), 3 (censored); x = 0, 1, 0; beta fixed
        // by ridge so huge the fit is ~0: hazard jumps 1/3 then 1/2.
        let d = ds(
            &[
                (&[0.0], 1.0, true),
                (&[1.0], 2.0, true),
                (&[0.0], 3.0, false),
            ],
            Group::Control,
        );
        let m = fit_cox(&d, 1e12).unwrap();
        assert!(m.beta[0].abs() < 1e-10);
        assert_eq!(m.baseline_times, vec![1.0, 2.0, 3.0]);
        assert_abs_diff_eq!(m.baseline_cumhaz[0], 1.0 / 3.0, epsilon = 1e-9);
        assert_abs_diff_eq!(m.baseline_cumhaz[1], 1.0 / 3.0 + 0.5, epsilon = 1e-9);
        assert_abs_diff_eq!(m.baseline_cumhaz[2], 1.0 / 3.0 + 0.5, epsilon = 1e-9);
    }

    #[test]
    fn breslow_weighted_risk_sets() {
        let d = ds(
            &[
                (&[0.0], 1.0, true),
                (&[1.0], 2.0, true),
                (&[0.0], 3.0, false),
            ],
            Group::Control,
        );
        let data = CoxData::new(&d);
        let b = 0.7f64;
        let (_, h) = data.breslow(&[b]);
        // Risk sets: {all}: 1 + e^b + 1; {2, 3}: e^b + 1.
        assert_abs_diff_eq!(h[0], 1.0 / (2.0 + b.exp()), epsilon = 1e-12);
        assert_abs_diff_eq!(h[1], h[0] + 1.0 / (1.0 + b.exp()), epsilon = 1e-12);
    }

    #[test]
    fn constant_covariate_gives_zero_beta() {
        let rows: Vec<(Vec<f64>, f64, bool)> = (0..20)
            .map(|i| (vec![1.0], 1.0 + i as f64, i % 3 != 0))
            .collect();
        let rows: Vec<(&[f64], f64, bool)> = rows
            .iter()
            .map(|(x, t, e)| (x.as_slice(), *t, *e))
            .collect();
        let m = fit_cox(&ds(&rows, Group::Control), 0.1).unwrap();
        assert!(m.beta[0].abs() < 1e-9, "{:?}", m.beta);
    }

    fn ph_sample(n: usize, beta: [f64; 2], seed: u64) -> SurvivalDataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let recs = (0..n)
            .map(|_| {
                let x = vec![rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
                let eta = beta[0] * x[0] + beta[1] * x[1];
                let u: f64 = rng.random_range(1e-12..1.0);
                let t = -u.ln() / eta.exp();
                SurvivalRecord::new(x, t, true, Group::Control).unwrap()
            })
            .collect();
        SurvivalDataset::new(recs).unwrap()
    }

    #[test]
    fn huge_ridge_shrinks_to_zero() {
        let m = fit_cox(&ph_sample(300, [1.0, -1.0], 4), 1e6).unwrap();
        assert!(m.beta.iter().all(|b| b.abs() < 1e-3), "{:?}", m.beta);
    }

    #[test]
    fn newton_iterates_do_not_decrease_likelihood() {
        let d = ph_sample(200, [1.5, -0.5], 8);
        let m = fit_cox(&d, 0.5).unwrap();
        let at_zero = cox_penalized_loglik(&d, &[0.0, 0.0], 0.5).unwrap();
        let at_fit = cox_penalized_loglik(&d, &m.beta, 0.5).unwrap();
        assert!(at_fit >= at_zero);
        for db in [[1e-3, 0.0], [0.0, 1e-3], [-1e-3, 0.0], [0.0, -1e-3]] {
            let nearby = [m.beta[0] + db[0], m.beta[1] + db[1]];
            assert!(cox_penalized_loglik(&d, &nearby, 0.5).unwrap() <= at_fit);
        }
    }

    #[test]
    fn cox_requires_events() {
        let d = ds(
            &[(&[0.0], 1.0, false), (&[1.0], 2.0, false)],
            Group::Control,
        );
        assert!(matches!(fit_cox(&d, 0.1), Err(BenkError::Degenerate(_))));
    }

    #[test]
    fn cox_sf_properties() {
        let d = ph_sample(100, [1.0, -1.0], 2);
        let mut m = fit_cox(&d, 0.1).unwrap();
        let high = cox_sf(&m, &[2.0, -2.0]).unwrap();
        let zero = cox_sf(&m, &[0.0, 0.0]).unwrap();
        for (a, b) in high.values().iter().zip(zero.values()) {
            assert!(a <= b);
        }
        m.beta = vec![0.0, 0.0];
        assert_eq!(
            cox_sf(&m, &[3.0, 1.0]).unwrap(),
            cox_sf(&m, &[-2.0, 0.5]).unwrap()
        );
        assert!(cox_sf(&m, &[1.0]).is_err());
    }

    #[test]
    fn gaussian_limits() {
        let d = ds(
            &[
                (&[0.0], 2.0, true),
                (&[1.0], 1.0, false),
                (&[3.0], 4.0, true),
                (&[5.0], 3.0, true),
            ],
            Group::Control,
        );
        let wide = gaussian_beran_sf(&d, &[2.0], &GaussianBeranConfig::new(1e9).unwrap()).unwrap();
        let km = kaplan_meier(&d);
        for (a, b) in wide.values().iter().zip(km.values()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-12);
        }
        let narrow =
            gaussian_beran_sf(&d, &[3.0], &GaussianBeranConfig::new(1e-9).unwrap()).unwrap();
        assert_eq!(narrow.value_at(3.99), 1.0);
        assert_eq!(narrow.value_at(4.0), 0.0);
    }

    #[test]
    fn gaussian_symmetric_weights() {
        let w = gaussian_weights(
            [[1.0, 0.0].as_slice(), [-1.0, 0.0].as_slice()].into_iter(),
            &[0.0, 0.0],
            0.7,
        );
        assert_abs_diff_eq!(w[0], 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(w[1], 0.5, epsilon = 1e-15);
        assert!(GaussianBeranConfig::new(0.0).is_err());
    }

    fn toy_groups() -> (SurvivalDataset, SurvivalDataset) {
        let c = ds(
            &[
                (&[0.0, 0.0], 2.0, true),
                (&[1.0, 0.0], 3.0, true),
                (&[0.0, 1.0], 4.0, false),
                (&[1.0, 1.0], 5.0, true),
            ],
            Group::Control,
        );
        let t = ds(
            &[
                (&[0.5, 0.0], 6.0, true),
                (&[0.0, 0.5], 1.0, true),
                (&[1.0, 0.5], 2.5, false),
            ],
            Group::Treatment,
        );
        (c, t)
    }

    #[test]
    fn t_learner_examples() {
        let (c, t) = toy_groups();
        let nw = BaseLearner::GaussianBeran(GaussianBeranConfig::new(0.8).unwrap());
        let cox = BaseLearner::Cox { ridge: 1.0 };
        for base in [nw, cox] {
            assert_abs_diff_eq!(
                t_learner_cate(&base, &c, &c, &[0.3, 0.2]).unwrap(),
                0.0,
                epsilon = 1e-9
            );
            let ab = t_learner_cate(&base, &c, &t, &[0.3, 0.2]).unwrap();
            let ba = t_learner_cate(&base, &t, &c, &[0.3, 0.2]).unwrap();
            assert_abs_diff_eq!(ab, -ba, epsilon = 1e-12);
        }
        let pc = ds(&[(&[0.0], 2.0, true)], Group::Control);
        let pt = ds(&[(&[4.0], 5.0, true)], Group::Treatment);
        for bw in [1e-3, 1.0, 1e3] {
            let base = BaseLearner::GaussianBeran(GaussianBeranConfig::new(bw).unwrap());
            assert_eq!(t_learner_cate(&base, &pc, &pt, &[1.0]).unwrap(), 3.0);
        }
    }

    #[test]
    fn s_learner_identical_groups() {
        let (c, _) = toy_groups();
        for base in [
            BaseLearner::GaussianBeran(GaussianBeranConfig::new(0.6).unwrap()),
            BaseLearner::Cox { ridge: 0.5 },
        ] {
            let v = s_learner_cate(
                &base,
                &c,
                &relabel(&c, Group::Treatment).unwrap(),
                &[0.4, 0.9],
            )
            .unwrap();
            assert_abs_diff_eq!(v, 0.0, epsilon = 1e-6);
        }
    }

    #[test]
    fn s_learner_zero_indicator_integrates_one_sf_on_two_grids() {
        let (c, t) = toy_groups();
        let pooled = augment_with_indicator(&c.concat(&t).unwrap()).unwrap();
        let mut m = fit_cox(&pooled, 1.0).unwrap();
        m.beta[2] = 0.0;
        let s = SLearner::from_parts(FittedBase::Cox(m.clone()), c.time_grid(), t.time_grid());
        let z = [0.2, 0.7];
        let sf = cox_sf(&m, &[0.2, 0.7, 0.0]).unwrap();
        // Treatment grid {1, 2.5, 6}; control grid {2, 3, 4, 5}.
        let on_t = 1.0 + 1.5 * sf.value_at(1.0) + 3.5 * sf.value_at(2.5);
        let on_c = 2.0 + sf.value_at(2.0) + sf.value_at(3.0) + sf.value_at(4.0);
        assert_abs_diff_eq!(s.cate(&z).unwrap(), on_t - on_c, epsilon = 1e-12);
    }

    #[test]
    fn s_learner_antisymmetric_under_relabel() {
        let (c, t) = toy_groups();
        let base = BaseLearner::GaussianBeran(GaussianBeranConfig::new(0.9).unwrap());
        let ab = s_learner_cate(&base, &c, &t, &[0.5, 0.5]).unwrap();
        let ba = s_learner_cate(&base, &t, &c, &[0.5, 0.5]).unwrap();
        assert_abs_diff_eq!(ab, -ba, epsilon = 1e-12);
    }

    #[test]
    fn x_learner_examples() {
        // Constant shift with point-mass fits recovers the shift.
        let xs: [&[f64]; 4] = [&[0.0], &[10.0], &[20.0], &[30.0]];
        let c = ds(
            &[
                (xs[0], 2.0, true),
                (xs[1], 3.0, true),
                (xs[2], 7.0, true),
                (xs[3], 4.0, true),
            ],
            Group::Control,
        );
        let t = ds(
            &[
                (xs[0], 4.5, true),
                (xs[1], 5.5, true),
                (xs[2], 9.5, true),
                (xs[3], 6.5, true),
            ],
            Group::Treatment,
        );
        let base = BaseLearner::GaussianBeran(GaussianBeranConfig::new(1e-3).unwrap());
        for z in [[0.0], [14.0], [30.0]] {
            assert_abs_diff_eq!(
                x_learner_cate(&base, &c, &t, &z, 5.0, None).unwrap(),
                2.5,
                epsilon = 1e-9
            );
        }
        // Identical groups, constant times.
        let flat = ds(
            &[(xs[0], 3.0, true), (xs[1], 3.0, true), (xs[2], 3.0, true)],
            Group::Control,
        );
        let v = x_learner_cate(
            &base,
            &flat,
            &relabel(&flat, Group::Treatment).unwrap(),
            &[4.0],
            3.0,
            None,
        )
        .unwrap();
        assert_abs_diff_eq!(v, 0.0, epsilon = 1e-6);
        // alpha = 1 keeps only tau_0.
        let (c, t) = toy_groups();
        let nw = BaseLearner::GaussianBeran(GaussianBeranConfig::new(0.7).unwrap());
        let x = XLearner::fit(&nw, &c, &t, 0.5, Some(1.0)).unwrap();
        assert_eq!(x.cate(&[0.2, 0.2]).unwrap(), x.tau_control(&[0.2, 0.2]));
    }

    #[test]
    fn x_learner_needs_events() {
        let (c, _) = toy_groups();
        let t = ds(&[(&[0.5, 0.0], 6.0, false)], Group::Treatment);
        let nw = BaseLearner::GaussianBeran(GaussianBeranConfig::new(0.7).unwrap());
        assert!(matches!(
            XLearner::fit(&nw, &c, &t, 0.5, None),
            Err(BenkError::NoUncensored("treatment"))
        ));
    }
}
