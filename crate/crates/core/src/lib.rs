//! Beran estimator with a learned neural kernel (BENK) for conditional
//! average treatment effects on censored survival data, with Cox and
//! Gaussian-kernel meta-learner baselines, a synthetic trial generator and a
//! benchmark harness.

pub mod baselines;
pub mod bench;
pub mod datagen;
pub mod error;
pub mod io;
pub mod kernel;
pub mod survival;
pub mod trainer;

pub use error::{BenkError, Result};
pub use survival::{
    beran_sf, concordance_index, expected_lifetime, kaplan_meier, Group, StepSurvivalFunction,
    SurvivalDataset, SurvivalRecord, WeightVector,
};
