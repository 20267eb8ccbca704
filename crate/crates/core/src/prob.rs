//! Probability kernels and the paired-logit dataset model.
//!
//! Every record carries the raw logits of two models over the same `k`
//! answer options: the pre-trained reference `f` (`plm_logits`) and the
//! post-trained model being calibrated `g` (`polm_logits`).

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::error::{CalibError, Result};

/// Probabilities below this floor are clamped before taking logs.
pub const PROB_FLOOR: f64 = 1e-12;

const SIMPLEX_TOL: f64 = 1e-9;

/// A point on the probability simplex.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilityVector(Vec<f64>);

impl ProbabilityVector {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(CalibError::Input("empty probability vector".into()));
        }
        if probs.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(CalibError::Input(format!(
                "probabilities must lie in [0, 1]: {probs:?}"
            )));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > SIMPLEX_TOL {
            return Err(CalibError::Input(format!(
                "probabilities sum to {total}, not 1"
            )));
        }
        Ok(Self(probs))
    }

    /// Uniform distribution over `k` classes.
    pub fn uniform(k: usize) -> Self {
        Self(vec![1.0 / k as f64; k])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    /// Index of the most probable class (lowest index on ties).
    pub fn argmax(&self) -> usize {
        argmax_unchecked(&self.0)
    }
}

/// Numerically stable softmax of `logits / tau`.
pub fn softmax(logits: &[f64], tau: f64) -> Result<ProbabilityVector> {
    if !(tau > 0.0) || !tau.is_finite() {
        return Err(CalibError::Domain(format!(
            "temperature must be positive and finite, got {tau}"
        )));
    }
    if logits.is_empty() {
        return Err(CalibError::Input("empty logit vector".into()));
    }
    if logits.iter().any(|z| !z.is_finite()) {
        return Err(CalibError::Input(format!("non-finite logit in {logits:?}")));
    }
    let scaled: Vec<f64> = logits.iter().map(|z| z / tau).collect();
    Ok(ProbabilityVector(softmax_raw(&scaled)))
}

/// Softmax without validation; callers guarantee finite, non-empty input.
pub(crate) fn softmax_raw(z: &[f64]) -> Vec<f64> {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = z.iter().map(|v| (v - max).exp()).collect();
    let total: f64 = out.iter().sum();
    for v in &mut out {
        *v /= total;
    }
    out
}

/// `log softmax(z)` without validation.
pub(crate) fn log_softmax_raw(z: &[f64]) -> Vec<f64> {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = z.iter().map(|v| (v - max).exp()).sum::<f64>().ln() + max;
    z.iter().map(|v| v - lse).collect()
}

pub(crate) fn argmax_unchecked(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate().skip(1) {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

/// Predicted class: index of the largest logit, lowest index on exact ties.
pub fn argmax_prediction(logits: &[f64]) -> Result<usize> {
    if logits.is_empty() {
        return Err(CalibError::Input("empty logit vector".into()));
    }
    if logits.iter().any(|z| !z.is_finite()) {
        return Err(CalibError::Input(format!("non-finite logit in {logits:?}")));
    }
    Ok(argmax_unchecked(logits))
}

/// Confidence of a prediction: the largest class probability.
pub fn confidence(pv: &ProbabilityVector) -> f64 {
    pv.0.iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

/// Whether `f` and `g` predict the same class on this record.
///
/// Computed on raw logits. A positive scalar temperature never moves the
/// argmax, so the mask is the same for every temperature.
pub fn agreement_mask(rec: &LogitRecord) -> bool {
    argmax_unchecked(&rec.plm_logits) == argmax_unchecked(&rec.polm_logits)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    #[default]
    Validation,
    Test,
}

/// One prompt's paired logits from the reference and the calibrated model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogitRecord {
    pub id: String,
    pub k: usize,
    pub plm_logits: Vec<f64>,
    pub polm_logits: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<usize>,
    #[serde(default)]
    pub split: Split,
}

impl LogitRecord {
    pub fn new(
        id: impl Into<String>,
        plm_logits: Vec<f64>,
        polm_logits: Vec<f64>,
        label: Option<usize>,
    ) -> Result<Self> {
        let rec = Self {
            id: id.into(),
            k: plm_logits.len(),
            plm_logits,
            polm_logits,
            label,
            split: Split::Validation,
        };
        rec.validate()?;
        Ok(rec)
    }

    pub fn with_split(mut self, split: Split) -> Self {
        self.split = split;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(CalibError::Input(format!(
                "record `{}`: k must be positive",
                self.id
            )));
        }
        for (name, v) in [
            ("plm_logits", &self.plm_logits),
            ("polm_logits", &self.polm_logits),
        ] {
            if v.len() != self.k {
                return Err(CalibError::Input(format!(
                    "record `{}`: {name} has length {} but k = {}",
                    self.id,
                    v.len(),
                    self.k
                )));
            }
            if v.iter().any(|z| !z.is_finite()) {
                return Err(CalibError::Input(format!(
                    "record `{}`: {name} contains a non-finite value",
                    self.id
                )));
            }
        }
        if let Some(label) = self.label {
            if label >= self.k {
                return Err(CalibError::Input(format!(
                    "record `{}`: label {label} outside [0, {})",
                    self.id, self.k
                )));
            }
        }
        Ok(())
    }

    /// Softmax of the reference model's logits.
    pub fn plm_probs(&self) -> ProbabilityVector {
        ProbabilityVector(softmax_raw(&self.plm_logits))
    }

    pub fn polm_probs(&self) -> ProbabilityVector {
        ProbabilityVector(softmax_raw(&self.polm_logits))
    }
}

/// An ordered, immutable collection of records sharing one class count.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    records: Vec<LogitRecord>,
    k: usize,
}

impl Dataset {
    pub fn new(records: Vec<LogitRecord>) -> Result<Self> {
        let first = records.first().ok_or(CalibError::EmptyDataset)?;
        let k = first.k;
        let mut seen = HashSet::with_capacity(records.len());
        for rec in &records {
            rec.validate()?;
            if rec.k != k {
                return Err(CalibError::Input(format!(
                    "record `{}` has k = {} but the dataset has k = {k}",
                    rec.id, rec.k
                )));
            }
            if !seen.insert(rec.id.as_str()) {
                return Err(CalibError::Input(format!(
                    "duplicate record id `{}`",
                    rec.id
                )));
            }
        }
        Ok(Self { records, k })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn records(&self) -> &[LogitRecord] {
        &self.records
    }

    pub fn iter(&self) -> std::slice::Iter<'_, LogitRecord> {
        self.records.iter()
    }

    pub fn into_records(self) -> Vec<LogitRecord> {
        self.records
    }

    pub fn agreement_count(&self) -> usize {
        self.records.iter().filter(|r| agreement_mask(r)).count()
    }

    /// Records for which `keep` holds, or `None` if nothing is kept.
    pub fn filter(&self, keep: impl Fn(&LogitRecord) -> bool) -> Option<Dataset> {
        let records: Vec<_> = self.records.iter().filter(|r| keep(r)).cloned().collect();
        if records.is_empty() {
            None
        } else {
            Some(Dataset { records, k: self.k })
        }
    }

    pub fn agreement_subset(&self) -> Option<Dataset> {
        self.filter(agreement_mask)
    }

    pub fn disagreement_subset(&self) -> Option<Dataset> {
        self.filter(|r| !agreement_mask(r))
    }

    pub fn split(&self, split: Split) -> Option<Dataset> {
        self.filter(|r| r.split == split)
    }

    pub fn is_labeled(&self) -> bool {
        self.records.iter().all(|r| r.label.is_some())
    }
}

impl<'a> IntoIterator for &'a Dataset {
    type Item = &'a LogitRecord;
    type IntoIter = std::slice::Iter<'a, LogitRecord>;

    fn into_iter(self) -> Self::IntoIter {
        self.records.iter()
    }
}
