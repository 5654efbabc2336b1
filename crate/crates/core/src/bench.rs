//! Benchmark harness: hyperparameter selection on validation controls, RMSE
//! of predicted treatment effects against the generator's ground truth, and
//! sweeps over one generator setting with CSV/JSON reports.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::{
    BaseLearner, GaussianBeranConfig, SLearner, TLearner, XLearner, BANDWIDTH_GRID, RIDGE_GRID,
};
use crate::datagen::{generate_trial, GenConfig, LabeledTrial};
use crate::error::{BenkError, Result};
use crate::survival::{uncensored_lifetime_mse, Group};
use crate::trainer::{predict_cate, train_with_validation, TrainConfig};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ModelId {
    #[serde(rename = "BENK")]
    Benk,
    #[serde(rename = "T-NW")]
    TNw,
    #[serde(rename = "S-NW")]
    SNw,
    #[serde(rename = "X-NW")]
    XNw,
    #[serde(rename = "T-Cox")]
    TCox,
    #[serde(rename = "S-Cox")]
    SCox,
    #[serde(rename = "X-Cox")]
    XCox,
}

impl ModelId {
    pub const ALL: [ModelId; 7] = [
        ModelId::Benk,
        ModelId::TNw,
        ModelId::SNw,
        ModelId::XNw,
        ModelId::TCox,
        ModelId::SCox,
        ModelId::XCox,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ModelId::Benk => "BENK",
            ModelId::TNw => "T-NW",
            ModelId::SNw => "S-NW",
            ModelId::XNw => "X-NW",
            ModelId::TCox => "T-Cox",
            ModelId::SCox => "S-Cox",
            ModelId::XCox => "X-Cox",
        }
    }

    fn uses_cox(self) -> bool {
        matches!(self, ModelId::TCox | ModelId::SCox | ModelId::XCox)
    }
}

impl fmt::Display for ModelId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelId {
    type Err = BenkError;

    fn from_str(s: &str) -> Result<Self> {
        ModelId::ALL
            .into_iter()
            .find(|m| m.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| BenkError::Parse(format!("unknown model {s:?}")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    Controls,
    Epsilon,
    Q,
    P,
}

impl SweepAxis {
    pub fn name(self) -> &'static str {
        match self {
            SweepAxis::Controls => "controls",
            SweepAxis::Epsilon => "epsilon",
            SweepAxis::Q => "q",
            SweepAxis::P => "p",
        }
    }

    /// `base` with this axis set to `value`.
    pub fn apply(self, base: &GenConfig, value: f64) -> Result<GenConfig> {
        let mut cfg = base.clone();
        match self {
            SweepAxis::Controls => {
                if !(value >= 1.0 && value.fract() == 0.0) {
                    return Err(BenkError::InvalidInput(format!(
                        "control count must be a positive integer, got {value}"
                    )));
                }
                cfg.controls = value as usize;
            }
            SweepAxis::Epsilon => cfg.epsilon = value,
            SweepAxis::Q => cfg.q = value,
            SweepAxis::P => cfg.p = value,
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

impl FromStr for SweepAxis {
    type Err = BenkError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "controls" => Ok(SweepAxis::Controls),
            "epsilon" => Ok(SweepAxis::Epsilon),
            "q" => Ok(SweepAxis::Q),
            "p" => Ok(SweepAxis::P),
            other => Err(BenkError::Parse(format!("unknown sweep axis {other:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sweep {
    pub axis: SweepAxis,
    pub values: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub generator: GenConfig,
    pub sweep: Sweep,
    pub models: Vec<ModelId>,
    pub repetitions: usize,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub seed: u64,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.models.is_empty() {
            return Err(BenkError::InvalidInput("model list is empty".into()));
        }
        if self.sweep.values.is_empty() {
            return Err(BenkError::InvalidInput("sweep has no values".into()));
        }
        if self.repetitions == 0 {
            return Err(BenkError::InvalidInput(
                "repetitions must be at least 1".into(),
            ));
        }
        for &v in &self.sweep.values {
            self.sweep.axis.apply(&self.generator, v)?;
        }
        self.train.validate()
    }

    /// Number of (model, sweep value, repetition) cells.
    pub fn cell_count(&self) -> usize {
        self.models.len() * self.sweep.values.len() * self.repetitions
    }
}

macro_rules! presets {
    ($($name:literal),* $(,)?) => {
        /// Shipped experiment configurations, by name.
        pub const PRESETS: &[(&str, &str)] = &[
            $(($name, include_str!(concat!("../../../configs/", $name, ".json")))),*
        ];
    };
}

presets!("fig_size", "fig_noise", "fig_q", "fig_p", "table2");

pub fn preset(name: &str) -> Option<Result<ExperimentConfig>> {
    PRESETS
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(_, text)| ExperimentConfig::from_json(text))
}

/// Hyperparameter grids searched by [`tune_with_grids`].
#[derive(Clone, Debug, PartialEq)]
pub struct Grids {
    pub bandwidths: Vec<f64>,
    pub ridges: Vec<f64>,
}

impl Default for Grids {
    fn default() -> Self {
        Self {
            bandwidths: BANDWIDTH_GRID.to_vec(),
            ridges: RIDGE_GRID.to_vec(),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    pub bandwidth: Option<f64>,
    pub ridge: Option<f64>,
    pub tau_bandwidth: Option<f64>,
    /// Validation error of the selected base configuration.
    pub validation_mse: f64,
}

impl Selection {
    fn base(&self) -> Result<BaseLearner> {
        match (self.bandwidth, self.ridge) {
            (Some(b), _) => Ok(BaseLearner::GaussianBeran(GaussianBeranConfig::new(b)?)),
            (None, Some(r)) => Ok(BaseLearner::Cox { ridge: r }),
            (None, None) => Err(BenkError::InvalidInput("empty selection".into())),
        }
    }
}

impl fmt::Display for Selection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut parts = Vec::new();
        if let Some(b) = self.bandwidth {
            parts.push(format!("bandwidth={b}"));
        }
        if let Some(r) = self.ridge {
            parts.push(format!("ridge={r}"));
        }
        if let Some(b) = self.tau_bandwidth {
            parts.push(format!("tau_bandwidth={b}"));
        }
        f.write_str(&parts.join(";"))
    }
}

/// First candidate with the strictly smallest finite score.
fn argmin<T: Copy>(candidates: &[T], mut score: impl FnMut(T) -> Result<f64>) -> Result<(T, f64)> {
    let mut best: Option<(T, f64)> = None;
    let mut last_err = None;
    for &c in candidates {
        match score(c) {
            Ok(s) if s.is_finite() => {
                if best.is_none_or(|(_, b)| s < b) {
                    best = Some((c, s));
                }
            }
            Ok(_) => {}
            Err(e @ BenkError::AllValidationCensored) => return Err(e),
            Err(e) => last_err = Some(e),
        }
    }
    best.ok_or_else(|| {
        last_err.unwrap_or_else(|| {
            BenkError::InvalidInput("no candidate produced a finite score".into())
        })
    })
}

pub fn tune_hyperparameters(model: ModelId, trial: &LabeledTrial) -> Result<Selection> {
    tune_with_grids(model, trial, &Grids::default())
}

/// Grid search on the validation controls. Candidates are scored by the
/// squared error of predicted expected lifetime against observed time on
/// uncensored validation records. Ties go to the smaller bandwidth or the
/// larger ridge. X-learners additionally pick the bandwidth of the effect
/// regression by how well it predicts imputed effects of validation controls.
pub fn tune_with_grids(model: ModelId, trial: &LabeledTrial, grids: &Grids) -> Result<Selection> {
    if model == ModelId::Benk {
        return Err(BenkError::InvalidInput(
            "BENK selects its epoch on validation data during training".into(),
        ));
    }
    let val = &trial.validation_controls;
    if val.uncensored_count() == 0 {
        return Err(BenkError::AllValidationCensored);
    }
    let mut bandwidths = grids.bandwidths.clone();
    bandwidths.sort_by(f64::total_cmp);
    let mut ridges = grids.ridges.clone();
    ridges.sort_by(|a, b| b.total_cmp(a));
    let candidates: Vec<BaseLearner> = if model.uses_cox() {
        ridges
            .iter()
            .map(|&r| BaseLearner::Cox { ridge: r })
            .collect()
    } else {
        bandwidths
            .iter()
            .map(|&b| GaussianBeranConfig::new(b).map(BaseLearner::GaussianBeran))
            .collect::<Result<_>>()?
    };
    if candidates.is_empty() {
        return Err(BenkError::InvalidInput("empty hyperparameter grid".into()));
    }

    let (base, score) = match model {
        ModelId::SNw | ModelId::SCox => argmin(&candidates, |b| {
            let s = SLearner::fit(&b, &trial.controls, &trial.treatments)?;
            uncensored_lifetime_mse(val, |x| s.group_lifetime(x, Group::Control))
        })?,
        _ => argmin(&candidates, |b| {
            let fitted = b.fit(&trial.controls)?;
            uncensored_lifetime_mse(val, |x| fitted.expected_lifetime(x))
        })?,
    };
    let mut selection = Selection {
        validation_mse: score,
        ..Selection::default()
    };
    match base {
        BaseLearner::Cox { ridge } => selection.ridge = Some(ridge),
        BaseLearner::GaussianBeran(c) => selection.bandwidth = Some(c.bandwidth),
    }

    if matches!(model, ModelId::XNw | ModelId::XCox) {
        let x = XLearner::fit(
            &base,
            &trial.controls,
            &trial.treatments,
            bandwidths[0],
            None,
        )?;
        let targets: Vec<(Vec<f64>, f64)> = val
            .records()
            .iter()
            .filter(|r| r.event)
            .map(|r| {
                Ok((
                    r.features.clone(),
                    x.imputed_control_effect(&r.features, r.time)?,
                ))
            })
            .collect::<Result<_>>()?;
        let (bw, _) = argmin(&bandwidths, |bw| {
            let x = x.clone().with_tau_bandwidth(bw);
            let sse: f64 = targets
                .iter()
                .map(|(z, d)| (x.tau_control(z) - d).powi(2))
                .sum();
            Ok(sse / targets.len() as f64)
        })?;
        selection.tau_bandwidth = Some(bw);
    }
    Ok(selection)
}

/// Root mean squared error; non-finite predictions are an error.
pub fn rmse(predictions: &[f64], truths: &[f64]) -> Result<f64> {
    if predictions.len() != truths.len() {
        return Err(BenkError::LengthMismatch {
            expected: truths.len(),
            got: predictions.len(),
        });
    }
    if predictions.is_empty() {
        return Err(BenkError::InvalidInput("no test points".into()));
    }
    if let Some(i) = predictions.iter().position(|p| !p.is_finite()) {
        return Err(BenkError::InvalidInput(format!(
            "non-finite prediction at test point {i}"
        )));
    }
    let mse = predictions
        .iter()
        .zip(truths)
        .map(|(p, t)| (p - t).powi(2))
        .sum::<f64>()
        / truths.len() as f64;
    Ok(mse.sqrt())
}

/// RMSE of `predict` over the trial's test points.
pub fn evaluate_predictor<F>(trial: &LabeledTrial, predict: F) -> Result<f64>
where
    F: Fn(&[f64]) -> Result<f64> + Sync,
{
    let preds = trial
        .test_points
        .par_iter()
        .map(|tp| predict(&tp.z))
        .collect::<Result<Vec<_>>>()?;
    let truths: Vec<f64> = trial.test_points.iter().map(|tp| tp.true_cate).collect();
    rmse(&preds, &truths)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub rmse: f64,
    pub hyperparams: String,
}

/// Tunes `model` on the validation controls, fits it and scores it on the
/// test points.
pub fn evaluate_model(
    model: ModelId,
    trial: &LabeledTrial,
    train: &TrainConfig,
) -> Result<Evaluation> {
    let (c, t) = (&trial.controls, &trial.treatments);
    match model {
        ModelId::Benk => {
            let m = train_with_validation(c, Some(&trial.validation_controls), train)?;
            let rmse = evaluate_predictor(trial, |z| predict_cate(&m, c, t, z))?;
            Ok(Evaluation {
                rmse,
                hyperparams: format!(
                    "n={};N={};epoch={}",
                    train.subset_size_for(c.len()),
                    train.replications,
                    m.selected_epoch
                ),
            })
        }
        ModelId::TNw | ModelId::TCox => {
            let sel = tune_hyperparameters(model, trial)?;
            let learner = TLearner::fit(&sel.base()?, c, t)?;
            let rmse = evaluate_predictor(trial, |z| learner.cate(z))?;
            Ok(Evaluation {
                rmse,
                hyperparams: sel.to_string(),
            })
        }
        ModelId::SNw | ModelId::SCox => {
            let sel = tune_hyperparameters(model, trial)?;
            let learner = SLearner::fit(&sel.base()?, c, t)?;
            let rmse = evaluate_predictor(trial, |z| learner.cate(z))?;
            Ok(Evaluation {
                rmse,
                hyperparams: sel.to_string(),
            })
        }
        ModelId::XNw | ModelId::XCox => {
            let sel = tune_hyperparameters(model, trial)?;
            let bw = sel
                .tau_bandwidth
                .expect("x-learner selection has a tau bandwidth");
            let learner = XLearner::fit(&sel.base()?, c, t, bw, None)?;
            let rmse = evaluate_predictor(trial, |z| learner.cate(z))?;
            Ok(Evaluation {
                rmse,
                hyperparams: sel.to_string(),
            })
        }
    }
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Seed of one (sweep value, repetition) cell: `seed + hash(value, rep)`.
pub fn cell_seed(seed: u64, sweep_value: f64, repetition: usize) -> u64 {
    seed.wrapping_add(splitmix64(
        sweep_value.to_bits() ^ splitmix64(repetition as u64),
    ))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellRecord {
    pub model: ModelId,
    pub sweep_value: f64,
    pub repetition: usize,
    /// `None` when the cell failed.
    pub rmse: Option<f64>,
    pub hyperparams: String,
    pub seconds: f64,
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellAggregate {
    pub model: ModelId,
    pub sweep_value: f64,
    pub mean_rmse: Option<f64>,
    /// Sample standard deviation; 0 with a single success.
    pub std_rmse: Option<f64>,
    pub successes: usize,
    pub failures: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RmseReport {
    pub sweep_axis: SweepAxis,
    pub records: Vec<CellRecord>,
    pub aggregates: Vec<CellAggregate>,
}

impl RmseReport {
    pub fn from_records(sweep_axis: SweepAxis, mut records: Vec<CellRecord>) -> Self {
        records.sort_by(|a, b| {
            a.model
                .cmp(&b.model)
                .then(a.sweep_value.total_cmp(&b.sweep_value))
                .then(a.repetition.cmp(&b.repetition))
        });
        let mut aggregates: Vec<CellAggregate> = Vec::new();
        for chunk in records.chunk_by(|a, b| a.model == b.model && a.sweep_value == b.sweep_value) {
            let ok: Vec<f64> = chunk.iter().filter_map(|r| r.rmse).collect();
            let (mean, std) = if ok.is_empty() {
                (None, None)
            } else {
                let m = ok.iter().sum::<f64>() / ok.len() as f64;
                let s = if ok.len() > 1 {
                    (ok.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (ok.len() - 1) as f64).sqrt()
                } else {
                    0.0
                };
                (Some(m), Some(s))
            };
            aggregates.push(CellAggregate {
                model: chunk[0].model,
                sweep_value: chunk[0].sweep_value,
                mean_rmse: mean,
                std_rmse: std,
                successes: ok.len(),
                failures: chunk.len() - ok.len(),
            });
        }
        Self {
            sweep_axis,
            records,
            aggregates,
        }
    }

    pub fn failed_cells(&self) -> usize {
        self.records.iter().filter(|r| r.rmse.is_none()).count()
    }

    pub fn aggregate(&self, model: ModelId, sweep_value: f64) -> Option<&CellAggregate> {
        self.aggregates
            .iter()
            .find(|a| a.model == model && a.sweep_value == sweep_value)
    }

    /// RMSE of `model` per repetition at `sweep_value`, failures as `None`.
    pub fn rmse_by_repetition(&self, model: ModelId, sweep_value: f64) -> Vec<Option<f64>> {
        self.records
            .iter()
            .filter(|r| r.model == model && r.sweep_value == sweep_value)
            .map(|r| r.rmse)
            .collect()
    }
}

/// Runs every (sweep value, repetition) cell on the current rayon pool. Each
/// cell generates its own trial from [`cell_seed`]; all models of the cell
/// share it. Cell failures are recorded, not returned.
pub fn run_experiment(config: &ExperimentConfig) -> Result<RmseReport> {
    config.validate()?;
    let tasks: Vec<(f64, usize)> = config
        .sweep
        .values
        .iter()
        .flat_map(|&v| (0..config.repetitions).map(move |r| (v, r)))
        .collect();
    let records: Vec<CellRecord> = tasks
        .par_iter()
        .flat_map_iter(|&(value, rep)| run_cell(config, value, rep))
        .collect();
    Ok(RmseReport::from_records(config.sweep.axis, records))
}

fn run_cell(config: &ExperimentConfig, value: f64, rep: usize) -> Vec<CellRecord> {
    let seed = cell_seed(config.seed, value, rep);
    let trial = config
        .sweep
        .axis
        .apply(&config.generator, value)
        .map(|mut g| {
            g.seed = seed;
            g
        })
        .and_then(|g| generate_trial(&g));
    let train = TrainConfig {
        seed: splitmix64(seed ^ config.train.seed),
        ..config.train.clone()
    };
    config
        .models
        .iter()
        .map(|&model| {
            let start = Instant::now();
            let outcome = trial
                .as_ref()
                .map_err(|e| e.to_string())
                .and_then(|t| evaluate_model(model, t, &train).map_err(|e| e.to_string()));
            let seconds = start.elapsed().as_secs_f64();
            match outcome {
                Ok(ev) => CellRecord {
                    model,
                    sweep_value: value,
                    repetition: rep,
                    rmse: Some(ev.rmse),
                    hyperparams: ev.hyperparams,
                    seconds,
                    error: None,
                },
                Err(e) => CellRecord {
                    model,
                    sweep_value: value,
                    repetition: rep,
                    rmse: None,
                    hyperparams: String::new(),
                    seconds,
                    error: Some(e),
                },
            }
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    Csv,
    Json,
}

impl FromStr for ReportFormat {
    type Err = BenkError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(ReportFormat::Csv),
            "json" => Ok(ReportFormat::Json),
            other => Err(BenkError::Parse(format!("unknown format {other:?}"))),
        }
    }
}

pub const CSV_HEADER: [&str; 7] = [
    "model",
    "sweep_axis",
    "sweep_value",
    "repetition",
    "rmse",
    "hyperparams",
    "seconds",
];

/// Renders `report`. Wall-clock seconds are written only when
/// `include_timing` is set; otherwise the column is left empty so the output
/// depends on the seed alone.
pub fn emit_report(
    report: &RmseReport,
    format: ReportFormat,
    include_timing: bool,
) -> Result<String> {
    match format {
        ReportFormat::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record(CSV_HEADER)
                .map_err(|e| BenkError::Parse(e.to_string()))?;
            for r in &report.records {
                let hyper = match &r.error {
                    Some(e) => format!("error: {e}"),
                    None => r.hyperparams.clone(),
                };
                let row = [
                    r.model.name().to_string(),
                    report.sweep_axis.name().to_string(),
                    format!("{}", r.sweep_value),
                    r.repetition.to_string(),
                    r.rmse.map(|v| format!("{v}")).unwrap_or_default(),
                    hyper,
                    if include_timing {
                        format!("{}", r.seconds)
                    } else {
                        String::new()
                    },
                ];
                w.write_record(&row)
                    .map_err(|e| BenkError::Parse(e.to_string()))?;
            }
            let bytes = w
                .into_inner()
                .map_err(|e| BenkError::Parse(e.to_string()))?;
            String::from_utf8(bytes).map_err(|e| BenkError::Parse(e.to_string()))
        }
        ReportFormat::Json => {
            let mut r = report.clone();
            if !include_timing {
                for rec in &mut r.records {
                    rec.seconds = 0.0;
                }
            }
            let mut s = serde_json::to_string_pretty(&r)?;
            s.push('\n');
            Ok(s)
        }
    }
}

/// Parses a CSV report back into records. Failed cells come back with
/// `rmse = None` and the message in `error`.
pub fn parse_csv_report(text: &str) -> Result<(SweepAxis, Vec<CellRecord>)> {
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    let header = rdr.headers().map_err(|e| BenkError::Parse(e.to_string()))?;
    if header.iter().collect::<Vec<_>>() != CSV_HEADER {
        return Err(BenkError::Parse("unexpected report header".into()));
    }
    let mut axis = None;
    let mut records = Vec::new();
    for row in rdr.records() {
        let row = row.map_err(|e| BenkError::Parse(e.to_string()))?;
        let num = |i: usize| -> Result<f64> {
            row[i]
                .parse()
                .map_err(|_| BenkError::Parse(format!("bad number {:?}", &row[i])))
        };
        axis = Some(row[1].parse::<SweepAxis>()?);
        let hyper = row[5].to_string();
        let (hyperparams, error) = match hyper.strip_prefix("error: ") {
            Some(e) => (String::new(), Some(e.to_string())),
            None => (hyper, None),
        };
        records.push(CellRecord {
            model: row[0].parse()?,
            sweep_value: num(2)?,
            repetition: row[3]
                .parse()
                .map_err(|_| BenkError::Parse("bad repetition".into()))?,
            rmse: if row[4].is_empty() {
                None
            } else {
                Some(num(4)?)
            },
            hyperparams,
            seconds: if row[6].is_empty() { 0.0 } else { num(6)? },
            error,
        });
    }
    let axis = axis.ok_or_else(|| BenkError::Parse("report has no rows".into()))?;
    Ok((axis, records))
}
