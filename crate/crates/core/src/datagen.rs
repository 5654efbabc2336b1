//! Synthetic benchmark data.
//!
//! Features are deterministic curves of a latent `t` (spiral, logarithmic,
//! power). Control and treatment event times follow Cox-style exponential
//! decays in `t`, get additive Gaussian noise and independent censoring
//! labels. The noiseless difference `h(t) - f(t)` is the ground truth.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{BenkError, Result};
use crate::survival::{Group, SurvivalDataset, SurvivalRecord};

/// Lower bound on noisy times.
pub const TIME_FLOOR: f64 = 1e-6;

const QUADRATURE_POINTS: usize = 100_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GeneratorKind {
    Spiral,
    Logarithmic,
    Power,
}

impl GeneratorKind {
    /// Interval the latent parameter is drawn from.
    pub fn domain(self) -> (f64, f64) {
        match self {
            GeneratorKind::Spiral | GeneratorKind::Power => (0.0, 10.0),
            GeneratorKind::Logarithmic => (0.5, 5.0),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenConfig {
    pub kind: GeneratorKind,
    pub d: usize,
    /// Number of training controls `c`.
    pub controls: usize,
    /// Treatments per control; `round(q · c)` treatments are generated.
    pub q: f64,
    /// Censoring probability.
    pub p: f64,
    /// Noise level: `3σ = epsilon · mean time`.
    pub epsilon: f64,
    pub seed: u64,
    /// Logarithmic coefficients; drawn from `[-4,-1] ∪ [1,4]` when absent.
    pub log_coeffs: Option<Vec<f64>>,
    pub test_points: usize,
}

impl Default for GenConfig {
    fn default() -> Self {
        Self {
            kind: GeneratorKind::Spiral,
            d: 10,
            controls: 100,
            q: 0.2,
            p: 0.25,
            epsilon: 0.05,
            seed: 0,
            log_coeffs: None,
            test_points: 1000,
        }
    }
}

impl GenConfig {
    pub fn validate(&self) -> Result<()> {
        if self.d == 0 {
            return Err(BenkError::InvalidInput("d must be at least 1".into()));
        }
        if self.controls == 0 {
            return Err(BenkError::InvalidInput("need at least one control".into()));
        }
        if !(self.q > 0.0 && self.q < 1.0) {
            return Err(BenkError::InvalidInput(format!(
                "q must lie in (0, 1), got {}",
                self.q
            )));
        }
        if !(0.0..1.0).contains(&self.p) {
            return Err(BenkError::InvalidInput(format!(
                "p must lie in [0, 1), got {}",
                self.p
            )));
        }
        if !(self.epsilon.is_finite() && self.epsilon >= 0.0) {
            return Err(BenkError::InvalidInput(
                "epsilon must be nonnegative".into(),
            ));
        }
        if self.treatment_count() == 0 {
            return Err(BenkError::InvalidInput(
                "round(q · c) must be at least 1".into(),
            ));
        }
        if let Some(a) = &self.log_coeffs {
            if a.len() != self.d {
                return Err(BenkError::DimensionMismatch {
                    expected: self.d,
                    got: a.len(),
                });
            }
            if a.iter().any(|v| !(1.0..=4.0).contains(&v.abs())) {
                return Err(BenkError::InvalidInput(
                    "log coefficients must lie in [-4,-1] ∪ [1,4]".into(),
                ));
            }
        }
        Ok(())
    }

    pub fn treatment_count(&self) -> usize {
        (self.q * self.controls as f64).round() as usize
    }

    pub fn validation_count(&self) -> usize {
        ((0.5 * self.controls as f64).round() as usize).max(1)
    }
}

/// Feature vector at latent `t`. Only the power kind consumes `rng`, for the
/// coordinates with `0.8 < i/sqrt(d) < 1.6`, which are replaced by N(0, 1).
pub fn generate_features<R: Rng + ?Sized>(
    kind: GeneratorKind,
    d: usize,
    t: f64,
    log_coeffs: &[f64],
    rng: &mut R,
) -> Result<Vec<f64>> {
    let (lo, hi) = kind.domain();
    if !(t >= lo && t <= hi) {
        return Err(BenkError::DomainViolation { t, lo, hi });
    }
    let x = match kind {
        GeneratorKind::Spiral => (0..d)
            .map(|i| {
                let k = (i / 2 + 1) as f64;
                if i % 2 == 0 {
                    t * (k * t).sin()
                } else {
                    t * (k * t).cos()
                }
            })
            .collect(),
        GeneratorKind::Logarithmic => {
            if log_coeffs.len() != d {
                return Err(BenkError::DimensionMismatch {
                    expected: d,
                    got: log_coeffs.len(),
                });
            }
            log_coeffs.iter().map(|a| a * t.ln()).collect()
        }
        GeneratorKind::Power => {
            let root = (d as f64).sqrt();
            (1..=d)
                .map(|i| {
                    let e = i as f64 / root;
                    if e > 0.8 && e < 1.6 {
                        rng.sample(StandardNormal)
                    } else {
                        t.powf(e)
                    }
                })
                .collect()
        }
    };
    Ok(x)
}

pub fn control_time(t: f64) -> f64 {
    -(0.02f64.ln()) / (0.1 * (0.5 * t).exp())
}

pub fn treatment_time(t: f64) -> f64 {
    -(0.3f64.ln()) / (0.1 * (0.15 * t).exp())
}

/// Noiseless control and treatment event times `(f, h)` at latent `t`.
pub fn generate_event_times(t: f64) -> (f64, f64) {
    (control_time(t), treatment_time(t))
}

/// Average of `f` over `[lo, hi]` by the midpoint rule.
pub fn mean_over_domain(f: impl Fn(f64) -> f64, (lo, hi): (f64, f64)) -> f64 {
    let h = (hi - lo) / QUADRATURE_POINTS as f64;
    (0..QUADRATURE_POINTS)
        .map(|k| f(lo + (k as f64 + 0.5) * h))
        .sum::<f64>()
        / QUADRATURE_POINTS as f64
}

/// `time + N(0, σ²)` with `σ = epsilon · mean_time / 3`, floored at
/// [`TIME_FLOOR`].
pub fn apply_noise<R: Rng + ?Sized>(time: f64, epsilon: f64, mean_time: f64, rng: &mut R) -> f64 {
    if epsilon == 0.0 {
        return time;
    }
    let sigma = epsilon * mean_time / 3.0;
    let noise = Normal::new(0.0, sigma).expect("finite sigma").sample(rng);
    (time + noise).max(TIME_FLOOR)
}

/// Event indicator: observed with probability `1 - p`.
pub fn apply_censoring<R: Rng + ?Sized>(p: f64, rng: &mut R) -> bool {
    !rng.random_bool(p)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TestPoint {
    pub z: Vec<f64>,
    pub true_cate: f64,
    pub latent_t: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabeledTrial {
    pub controls: SurvivalDataset,
    pub treatments: SurvivalDataset,
    pub validation_controls: SurvivalDataset,
    pub test_points: Vec<TestPoint>,
    pub control_latent: Vec<f64>,
    pub treatment_latent: Vec<f64>,
    pub log_coeffs: Vec<f64>,
}

// Independent ChaCha streams of one seed.
const STREAM_MAIN: u64 = 0;
const STREAM_POWER_NOISE: u64 = 1;
const STREAM_COEFFS: u64 = 2;

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

/// Coefficients uniform on `[-4,-1] ∪ [1,4]`.
pub fn draw_log_coeffs<R: Rng + ?Sized>(d: usize, rng: &mut R) -> Vec<f64> {
    (0..d)
        .map(|_| {
            let mag = rng.random_range(1.0..=4.0);
            if rng.random_bool(0.5) {
                mag
            } else {
                -mag
            }
        })
        .collect()
}

pub fn generate_trial(config: &GenConfig) -> Result<LabeledTrial> {
    config.validate()?;
    let mut main = stream(config.seed, STREAM_MAIN);
    let mut feature_noise = stream(config.seed, STREAM_POWER_NOISE);
    let log_coeffs = match &config.log_coeffs {
        Some(a) => a.clone(),
        None => draw_log_coeffs(config.d, &mut stream(config.seed, STREAM_COEFFS)),
    };
    let domain = config.kind.domain();
    let mean_f = mean_over_domain(control_time, domain);
    let mean_h = mean_over_domain(treatment_time, domain);

    let mut draw_group = |count: usize, group: Group| -> Result<(SurvivalDataset, Vec<f64>)> {
        let mut records = Vec::with_capacity(count);
        let mut latent = Vec::with_capacity(count);
        for _ in 0..count {
            let t = main.random_range(domain.0..=domain.1);
            let x = generate_features(config.kind, config.d, t, &log_coeffs, &mut feature_noise)?;
            let (clean, mean) = match group {
                Group::Control => (control_time(t), mean_f),
                Group::Treatment => (treatment_time(t), mean_h),
            };
            let time = apply_noise(clean, config.epsilon, mean, &mut main);
            let event = apply_censoring(config.p, &mut main);
            records.push(SurvivalRecord::new(x, time, event, group)?);
            latent.push(t);
        }
        Ok((SurvivalDataset::new(records)?, latent))
    };

    let (controls, control_latent) = draw_group(config.controls, Group::Control)?;
    let (treatments, treatment_latent) = draw_group(config.treatment_count(), Group::Treatment)?;
    let (validation_controls, _) = draw_group(config.validation_count(), Group::Control)?;

    let mut test_points = Vec::with_capacity(config.test_points);
    for _ in 0..config.test_points {
        let t = main.random_range(domain.0..=domain.1);
        let z = generate_features(config.kind, config.d, t, &log_coeffs, &mut feature_noise)?;
        let (f, h) = generate_event_times(t);
        test_points.push(TestPoint {
            z,
            true_cate: h - f,
            latent_t: t,
        });
    }

    Ok(LabeledTrial {
        controls,
        treatments,
        validation_controls,
        test_points,
        control_latent,
        treatment_latent,
        log_coeffs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::FRAC_PI_2;

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(0)
    }

    #[test]
    fn spiral_values() {
        assert_eq!(
            generate_features(GeneratorKind::Spiral, 2, 0.0, &[], &mut rng()).unwrap(),
            vec![0.0, 0.0]
        );
        let x = generate_features(GeneratorKind::Spiral, 2, FRAC_PI_2, &[], &mut rng()).unwrap();
        assert_abs_diff_eq!(x[0], FRAC_PI_2, epsilon = 1e-12);
        assert_abs_diff_eq!(x[1], 0.0, epsilon = 1e-12);
        // Odd d ends with t·sin(t·ceil(d/2)).
        let t = 1.3;
        let x = generate_features(GeneratorKind::Spiral, 5, t, &[], &mut rng()).unwrap();
        assert_eq!(x.len(), 5);
        assert_abs_diff_eq!(x[4], t * (3.0 * t).sin(), epsilon = 1e-15);
        assert_abs_diff_eq!(x[3], t * (2.0 * t).cos(), epsilon = 1e-15);
    }

    #[test]
    fn logarithmic_at_one_is_zero() {
        let x = generate_features(
            GeneratorKind::Logarithmic,
            3,
            1.0,
            &[2.0, -3.5, 1.0],
            &mut rng(),
        )
        .unwrap();
        assert!(x.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn power_replaces_middle_coordinates() {
        // d = 10: i / sqrt(10) in (0.8, 1.6) for i = 3, 4, 5.
        let t = 2.0;
        let x = generate_features(GeneratorKind::Power, 10, t, &[], &mut rng()).unwrap();
        let root = 10f64.sqrt();
        for i in [1usize, 2, 6, 7, 8, 9, 10] {
            assert_abs_diff_eq!(x[i - 1], t.powf(i as f64 / root), epsilon = 1e-12);
        }
        let y = generate_features(
            GeneratorKind::Power,
            10,
            t,
            &[],
            &mut ChaCha8Rng::seed_from_u64(9),
        )
        .unwrap();
        assert_ne!(x[2], y[2]);
        assert_eq!(x[0], y[0]);
    }

    #[test]
    fn domain_is_enforced() {
        assert!(matches!(
            generate_features(GeneratorKind::Logarithmic, 2, 0.1, &[1.0, 1.0], &mut rng()),
            Err(BenkError::DomainViolation { .. })
        ));
        assert!(generate_features(GeneratorKind::Spiral, 2, 10.5, &[], &mut rng()).is_err());
    }

    #[test]
    fn event_time_values() {
        let (f, h) = generate_event_times(0.0);
        assert_abs_diff_eq!(f, 39.120, epsilon = 1e-3);
        assert_abs_diff_eq!(h, 12.040, epsilon = 1e-3);
        assert_abs_diff_eq!(generate_event_times(10.0).0, 0.2636, epsilon = 1e-4);
        assert!(control_time(1.0) > control_time(2.0));
        assert!(treatment_time(1.0) > treatment_time(2.0));
    }

    #[test]
    fn noise_and_censoring_edges() {
        let mut r = rng();
        assert_eq!(apply_noise(3.25, 0.0, 40.0, &mut r), 3.25);
        for _ in 0..1000 {
            assert!(apply_noise(1e-3, 0.5, 40.0, &mut r) > 0.0);
        }
        assert!((0..1000).all(|_| apply_censoring(0.0, &mut r)));
        // p = 0.99 is a valid setting.
        let events = (0..1000).filter(|_| apply_censoring(0.99, &mut r)).count();
        assert!(events < 50);
    }

    #[test]
    fn trial_sizes_and_determinism() {
        let cfg = GenConfig {
            controls: 100,
            q: 0.2,
            test_points: 50,
            seed: 3,
            ..GenConfig::default()
        };
        let a = generate_trial(&cfg).unwrap();
        assert_eq!(a.controls.len(), 100);
        assert_eq!(a.treatments.len(), 20);
        assert_eq!(a.validation_controls.len(), 50);
        assert_eq!(a.test_points.len(), 50);
        assert_eq!(a, generate_trial(&cfg).unwrap());
        for tp in &a.test_points {
            let (f, h) = generate_event_times(tp.latent_t);
            assert_eq!(tp.true_cate, h - f);
        }
    }

    #[test]
    fn noiseless_uncensored_trial() {
        let cfg = GenConfig {
            controls: 40,
            epsilon: 0.0,
            p: 0.0,
            test_points: 5,
            ..GenConfig::default()
        };
        let trial = generate_trial(&cfg).unwrap();
        for (r, &t) in trial.controls.records().iter().zip(&trial.control_latent) {
            assert_eq!(r.time, control_time(t));
            assert!(r.event);
        }
        for (r, &t) in trial
            .treatments
            .records()
            .iter()
            .zip(&trial.treatment_latent)
        {
            assert_eq!(r.time, treatment_time(t));
        }
    }

    #[test]
    fn config_validation() {
        let bad = [
            GenConfig {
                q: 0.0,
                ..GenConfig::default()
            },
            GenConfig {
                q: 1.0,
                ..GenConfig::default()
            },
            GenConfig {
                p: 1.0,
                ..GenConfig::default()
            },
            GenConfig {
                epsilon: -0.1,
                ..GenConfig::default()
            },
            GenConfig {
                d: 0,
                ..GenConfig::default()
            },
            GenConfig {
                log_coeffs: Some(vec![0.5; 10]),
                ..GenConfig::default()
            },
        ];
        for cfg in bad {
            assert!(cfg.validate().is_err(), "{cfg:?}");
        }
        assert!(GenConfig {
            p: 0.99,
            ..GenConfig::default()
        }
        .validate()
        .is_ok());
    }

    #[test]
    fn drawn_log_coeffs_stay_in_range() {
        let a = draw_log_coeffs(1000, &mut rng());
        assert!(a.iter().all(|v| (1.0..=4.0).contains(&v.abs())));
        assert!(a.iter().any(|v| *v < 0.0) && a.iter().any(|v| *v > 0.0));
    }
}
