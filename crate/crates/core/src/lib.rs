//! Post-hoc confidence calibration for post-trained language models.
//!
//! A post-trained model `g` is usually over-confident. Its pre-trained
//! counterpart `f` tends to be well calibrated, so `g` can be recalibrated
//! without labels by fitting a logit rescaling that pulls `g`'s predictive
//! distribution towards `f`'s. Examples where the two models predict
//! different classes push the temperature towards infinity, so the default
//! objective ([`Objective::Daca`]) masks them out and fits on agreement
//! examples only.
//!
//! Modules:
//! - [`prob`]: softmax, argmax, agreement, and the dataset model
//! - [`align`]: alignment / NLL objectives, Adam fitting, grid-search oracle
//! - [`metrics`]: ECE, MCE, adaptive ECE, Brier, NLL, reliability tables,
//!   selective accuracy
//! - [`synthetic`]: mixture generator and executable checks of the
//!   under-confidence results
//! - [`io`]: JSONL logit files and report serialization
//! - [`cli`]: the command implementations behind the `calign` binary

pub mod align;
pub mod cli;
pub mod error;
pub mod io;
pub mod metrics;
pub mod prob;
pub mod synthetic;

pub use align::{
    apply_scaling, daca_loss, grid_search_temperature, kl_divergence, naive_alignment_loss,
    nll_loss, optimize, GridSpec, Objective, OptimizationTrace, OptimizerConfig, ScalingParams,
    Shape,
};
pub use error::{CalibError, Result};
pub use metrics::{BinScheme, EvalSample};
pub use prob::{
    agreement_mask, argmax_prediction, confidence, softmax, Dataset, LogitRecord,
    ProbabilityVector, Split,
};

/// Version string embedded in every report.
pub const TOOLKIT_VERSION: &str = env!("CARGO_PKG_VERSION");
