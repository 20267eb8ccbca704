//! Mini-batch Adam over the unconstrained rescaling parameters.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::loss::{Objective, Problem};
use super::params::{ScalingParams, Shape};
use crate::error::{CalibError, Result};
use crate::prob::Dataset;

/// Scalar temperatures above this value are treated as divergence.
pub const TAU_SATURATION: f64 = 1e6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimizerConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub seed: u64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.05,
            epochs: 400,
            batch_size: 256,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            seed: 0,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return Err(CalibError::config("learning_rate", "must be positive"));
        }
        if self.epochs == 0 {
            return Err(CalibError::config("epochs", "must be at least 1"));
        }
        if self.batch_size == 0 {
            return Err(CalibError::config("batch_size", "must be at least 1"));
        }
        if !(0.0..1.0).contains(&self.adam_beta1) {
            return Err(CalibError::config("adam_beta1", "must lie in [0, 1)"));
        }
        if !(0.0..1.0).contains(&self.adam_beta2) {
            return Err(CalibError::config("adam_beta2", "must lie in [0, 1)"));
        }
        if !(self.adam_eps > 0.0) {
            return Err(CalibError::config("adam_eps", "must be positive"));
        }
        Ok(())
    }
}

/// Parameters and full-objective loss at the end of one epoch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub epoch: usize,
    pub params: ScalingParams,
    pub loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizationTrace {
    pub objective: Objective,
    pub shape: Shape,
    /// One entry per completed epoch (plus the partial epoch that hit the
    /// saturation guard, if any).
    pub entries: Vec<TraceEntry>,
    pub final_params: ScalingParams,
    pub final_loss: f64,
    /// Records that contributed to the objective.
    pub examples_used: usize,
    /// Records removed by the agreement mask (always 0 unless `daca`).
    pub filtered_out: usize,
    /// The scalar temperature crossed [`TAU_SATURATION`] and fitting stopped.
    pub diverged: bool,
}

impl OptimizationTrace {
    pub fn epochs_run(&self) -> usize {
        self.entries.len()
    }

    /// Temperature after each epoch, for scalar fits.
    pub fn temperatures(&self) -> Vec<f64> {
        self.entries
            .iter()
            .filter_map(|e| e.params.temperature())
            .collect()
    }
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    fn new(n: usize) -> Self {
        Self {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    fn step(&mut self, cfg: &OptimizerConfig, params: &mut [f64], grad: &[f64]) {
        self.t += 1;
        let b1 = cfg.adam_beta1;
        let b2 = cfg.adam_beta2;
        let c1 = 1.0 - b1.powi(self.t);
        let c2 = 1.0 - b2.powi(self.t);
        for i in 0..params.len() {
            self.m[i] = b1 * self.m[i] + (1.0 - b1) * grad[i];
            self.v[i] = b2 * self.v[i] + (1.0 - b2) * grad[i] * grad[i];
            let m_hat = self.m[i] / c1;
            let v_hat = self.v[i] / c2;
            params[i] -= cfg.learning_rate * m_hat / (v_hat.sqrt() + cfg.adam_eps);
        }
    }
}

/// Fits a rescaling of `shape` to `objective` with mini-batch Adam.
///
/// Starts from the identity map. Scalar and vector parameters are optimized
/// in log space. Each epoch shuffles the contributing records with a RNG
/// seeded by `cfg.seed + epoch` and keeps the final short batch. For
/// `daca` the agreement mask is computed once from raw logits. A scalar fit
/// whose temperature exceeds [`TAU_SATURATION`] stops early with
/// `diverged = true`.
pub fn optimize(
    ds: &Dataset,
    objective: Objective,
    shape: Shape,
    cfg: &OptimizerConfig,
) -> Result<OptimizationTrace> {
    cfg.validate()?;
    let problem = Problem::new(ds, objective)?;
    let k = ds.k();

    let mut params = ScalingParams::identity(shape, k);
    let mut raw = params.to_raw();
    let mut adam = Adam::new(raw.len());
    let mut order: Vec<usize> = (0..problem.active.len()).collect();
    let mut entries = Vec::with_capacity(cfg.epochs);
    let mut diverged = false;

    for epoch in 0..cfg.epochs {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(epoch as u64));
        order.shuffle(&mut rng);

        for batch in order.chunks(cfg.batch_size) {
            let (_, grad) = problem.loss_and_grad(batch, &params);
            adam.step(cfg, &mut raw, &grad);
            params = ScalingParams::from_raw(shape, k, &raw)?;
            if let ScalingParams::Scalar(tau) = params {
                if tau > TAU_SATURATION {
                    diverged = true;
                    break;
                }
            }
        }

        let loss = problem.loss(&params);
        entries.push(TraceEntry {
            epoch,
            params: params.clone(),
            loss,
        });
        if diverged {
            log::info!("temperature saturated at epoch {epoch}");
            break;
        }
    }

    let final_loss = entries.last().map_or(f64::NAN, |e| e.loss);
    Ok(OptimizationTrace {
        objective,
        shape,
        entries,
        final_params: params,
        final_loss,
        examples_used: problem.active.len(),
        filtered_out: ds.len() - problem.active.len(),
        diverged,
    })
}
