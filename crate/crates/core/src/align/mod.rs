//! Calibration objectives, the Adam fitting loop, and a grid-search oracle.

mod grid;
mod loss;
mod optim;
mod params;

pub use grid::{grid_search_temperature, GridSpec};
pub use loss::{
    apply_scaling, daca_loss, kl_divergence, loss_and_gradient, naive_alignment_loss, nll_loss,
    objective_loss, supervised_nll_loss, Objective,
};
pub use optim::{optimize, OptimizationTrace, OptimizerConfig, TraceEntry, TAU_SATURATION};
pub use params::{ScalingParams, Shape};
