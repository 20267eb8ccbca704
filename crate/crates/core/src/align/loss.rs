//! Calibration objectives and their analytic gradients.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::params::ScalingParams;
use crate::error::{CalibError, Result};
use crate::prob::{
    agreement_mask, log_softmax_raw, softmax_raw, Dataset, LogitRecord, ProbabilityVector,
    PROB_FLOOR,
};

/// What the rescaling is fitted to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    /// KL to the reference distribution on agreement examples only.
    Daca,
    /// KL to the reference distribution on every example.
    Naive,
    /// Labelled negative log-likelihood (classic temperature scaling).
    SupervisedNll,
}

impl fmt::Display for Objective {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Objective::Daca => "daca",
            Objective::Naive => "naive",
            Objective::SupervisedNll => "supervised",
        })
    }
}

impl FromStr for Objective {
    type Err = CalibError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "daca" => Ok(Objective::Daca),
            "naive" => Ok(Objective::Naive),
            "supervised" | "supervised_nll" => Ok(Objective::SupervisedNll),
            other => Err(CalibError::config(
                "objective",
                format!("expected daca|naive|supervised, got `{other}`"),
            )),
        }
    }
}

/// `KL(p || q)` with `0 * log(0 / q) = 0` and `q` clamped at 1e-12.
pub fn kl_divergence(p: &ProbabilityVector, q: &ProbabilityVector) -> Result<f64> {
    if p.len() != q.len() {
        return Err(CalibError::Input(format!(
            "KL between vectors of length {} and {}",
            p.len(),
            q.len()
        )));
    }
    let kl = p
        .as_slice()
        .iter()
        .zip(q.as_slice())
        .filter(|(pi, _)| **pi > 0.0)
        .map(|(pi, qi)| pi * (pi / qi.max(PROB_FLOOR)).ln())
        .sum::<f64>();
    Ok(kl.max(0.0))
}

/// Scaled softmax of the post-trained logits of `rec`.
pub fn apply_scaling(rec: &LogitRecord, params: &ScalingParams) -> Result<ProbabilityVector> {
    params.validate(rec.k)?;
    ProbabilityVector::new(softmax_raw(&params.scale_logits(&rec.polm_logits)))
}

/// A fitted objective restricted to the records that contribute to it.
///
/// `targets[i]` is the distribution record `active[i]` is pulled towards:
/// the reference softmax for the alignment objectives, a one-hot label for
/// NLL. With a one-hot target, `KL(target || q) = -log q_label`, so every
/// objective shares one loss kernel.
pub(crate) struct Problem<'a> {
    ds: &'a Dataset,
    pub(crate) active: Vec<usize>,
    targets: Vec<Vec<f64>>,
}

impl<'a> Problem<'a> {
    pub(crate) fn new(ds: &'a Dataset, objective: Objective) -> Result<Self> {
        let mut active = Vec::with_capacity(ds.len());
        let mut targets = Vec::with_capacity(ds.len());
        for (i, rec) in ds.iter().enumerate() {
            match objective {
                Objective::Naive => {}
                Objective::Daca => {
                    if !agreement_mask(rec) {
                        continue;
                    }
                }
                Objective::SupervisedNll => {
                    let label = rec
                        .label
                        .ok_or_else(|| CalibError::MissingLabel { id: rec.id.clone() })?;
                    let mut onehot = vec![0.0; ds.k()];
                    onehot[label] = 1.0;
                    active.push(i);
                    targets.push(onehot);
                    continue;
                }
            }
            active.push(i);
            targets.push(softmax_raw(&rec.plm_logits));
        }
        if active.is_empty() {
            return Err(CalibError::AllDisagree { total: ds.len() });
        }
        Ok(Self {
            ds,
            active,
            targets,
        })
    }

    pub(crate) fn k(&self) -> usize {
        self.ds.k()
    }

    /// Mean loss over all active records.
    pub(crate) fn loss(&self, params: &ScalingParams) -> f64 {
        let total: f64 = (0..self.active.len())
            .map(|slot| self.record_loss(slot, params, None))
            .sum();
        total / self.active.len() as f64
    }

    /// Mean loss and raw-parameter gradient over the given slots of
    /// `self.active`.
    pub(crate) fn loss_and_grad(&self, slots: &[usize], params: &ScalingParams) -> (f64, Vec<f64>) {
        let mut grad = vec![0.0; params.shape().num_raw(self.k())];
        let weight = 1.0 / slots.len() as f64;
        let mut total = 0.0;
        for &slot in slots {
            total += self.record_loss(slot, params, Some((weight, &mut grad)));
        }
        (total * weight, grad)
    }

    fn record_loss(
        &self,
        slot: usize,
        params: &ScalingParams,
        grad: Option<(f64, &mut Vec<f64>)>,
    ) -> f64 {
        let rec = &self.ds.records()[self.active[slot]];
        let target = &self.targets[slot];
        let z = params.scale_logits(&rec.polm_logits);
        let log_q = log_softmax_raw(&z);
        let log_floor = PROB_FLOOR.ln();

        let mut loss = 0.0;
        for (t, lq) in target.iter().zip(&log_q) {
            if *t > 0.0 {
                loss += t * (t.ln() - lq.max(log_floor));
            }
        }

        if let Some((weight, out)) = grad {
            // d/dz_j of -sum_i t_i * log q_i over unclamped i
            let q: Vec<f64> = log_q.iter().map(|v| v.exp()).collect();
            let mut live_mass = 0.0;
            let mut dz = vec![0.0; z.len()];
            for i in 0..z.len() {
                if target[i] > 0.0 && log_q[i] >= log_floor {
                    live_mass += target[i];
                    dz[i] -= target[i];
                }
            }
            for j in 0..z.len() {
                dz[j] += q[j] * live_mass;
            }
            params.accumulate_raw_grad(&rec.polm_logits, &z, &dz, weight, out);
        }
        loss.max(0.0)
    }
}

fn checked(ds: &Dataset, params: &ScalingParams) -> Result<()> {
    if ds.is_empty() {
        return Err(CalibError::EmptyDataset);
    }
    params.validate(ds.k())
}

/// Mean KL from the reference distribution to the rescaled post-trained
/// distribution over every record.
pub fn naive_alignment_loss(ds: &Dataset, params: &ScalingParams) -> Result<f64> {
    checked(ds, params)?;
    Ok(Problem::new(ds, Objective::Naive)?.loss(params))
}

/// Like [`naive_alignment_loss`], averaged over agreement records only.
/// Disagreement records contribute neither loss nor gradient.
pub fn daca_loss(ds: &Dataset, params: &ScalingParams) -> Result<f64> {
    checked(ds, params)?;
    Ok(Problem::new(ds, Objective::Daca)?.loss(params))
}

/// Mean `-log softmax(polm_logits / tau)[label]`.
pub fn nll_loss(ds: &Dataset, tau: f64) -> Result<f64> {
    supervised_nll_loss(ds, &ScalingParams::Scalar(tau))
}

/// NLL under an arbitrary rescaling.
pub fn supervised_nll_loss(ds: &Dataset, params: &ScalingParams) -> Result<f64> {
    checked(ds, params)?;
    Ok(Problem::new(ds, Objective::SupervisedNll)?.loss(params))
}

pub fn objective_loss(ds: &Dataset, objective: Objective, params: &ScalingParams) -> Result<f64> {
    checked(ds, params)?;
    Ok(Problem::new(ds, objective)?.loss(params))
}

/// Full-dataset loss and its gradient with respect to the unconstrained
/// parameters (see [`ScalingParams::to_raw`]).
pub fn loss_and_gradient(
    ds: &Dataset,
    objective: Objective,
    params: &ScalingParams,
) -> Result<(f64, Vec<f64>)> {
    checked(ds, params)?;
    let problem = Problem::new(ds, objective)?;
    let slots: Vec<usize> = (0..problem.active.len()).collect();
    Ok(problem.loss_and_grad(&slots, params))
}
