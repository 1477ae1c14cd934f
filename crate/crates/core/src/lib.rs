//! Design-based estimation of finite-population means with machine-learning
//! nuisance fits.
//!
//! The crate covers sampling designs with exact inclusion probabilities,
//! Horvitz-Thompson, model-assisted, GREG, imputed, AIPW and IPW estimators
//! (plain and cross-fitted), a pseudo-population bootstrap, exact-enumeration
//! orthogonality diagnostics and a seeded Monte Carlo harness.

// `!(x > 0.0)` style checks are deliberate: they reject NaN as well.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
// Index loops over parallel per-unit arrays read better than zipped iterators.
#![allow(clippy::needless_range_loop)]

pub mod bootstrap;
pub mod config;
pub mod designs;
pub mod diagnostics;
pub mod error;
pub mod estimators;
pub mod learners;
pub mod matrix;
pub mod nonresponse;
pub mod numeric;
pub mod population;
pub mod rng;
pub mod simengine;

pub use designs::{DesignKind, DesignSpec, FoldLevel, FoldPartition, SampleRealization};
pub use error::{Error, Result};
pub use estimators::{CompletedFile, EstimateResult, IpwForm, SurveyData};
pub use learners::{FittedPredictor, LearnerKind, LearnerSpec, Task};
pub use matrix::Matrix;
pub use nonresponse::{ResponseMechanism, ResponsePattern};
pub use population::{DgpConfig, FinitePopulation};
pub use simengine::{MetricsRow, ScenarioConfig};
