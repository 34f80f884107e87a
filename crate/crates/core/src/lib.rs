//! Finite-population mean estimation from non-probability samples.
//!
//! A self-selected sample with observed outcomes is combined with either a
//! reference probability sample or known population totals. Supported
//! estimators are inverse probability weighting, mass imputation (GLM,
//! nearest neighbour, predictive mean matching, local polynomial) and doubly
//! robust combinations, with optional penalized variable selection and
//! analytic or bootstrap variance.

pub mod cli;
pub mod config;
pub mod data;
pub mod diagnostics;
pub mod dr;
pub mod error;
pub mod glm;
pub mod ipw;
pub mod linalg;
pub mod matching;
pub mod mi;
pub mod pipeline;
pub mod propensity;
pub mod report;
pub mod simulation;
pub mod variance;
pub mod varsel;

pub use config::{run_estimate, ModelConfig, RunConfig};
pub use data::{
    align_designs, load_benchmark, load_sample_csv, DataTable, Design, DesignSpec, Formula, NonProbSample, PopSize,
    PopulationBenchmark, ProbSample, Reference, INTERCEPT,
};
pub use error::{Error, Result};
pub use glm::{irls_fit, Family, OutcomeFit};
pub use pipeline::{
    estimate, EstimateResult, EstimationSpec, EstimatorKind, Inputs, NonprobResult, OutcomeMethod, ReferenceInput,
};
pub use report::{print_text, summary_text, Report};
pub use simulation::{run_simulation, SimConfig, SimReport};
