use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{CalibError, Result};

/// Form of the logit rescaling map.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Shape {
    Scalar,
    Vector,
    Matrix,
}

impl Shape {
    /// Number of unconstrained parameters the optimizer sees.
    pub fn num_raw(self, k: usize) -> usize {
        match self {
            Shape::Scalar => 1,
            Shape::Vector => k,
            Shape::Matrix => k * k,
        }
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Shape::Scalar => "scalar",
            Shape::Vector => "vector",
            Shape::Matrix => "matrix",
        })
    }
}

impl FromStr for Shape {
    type Err = CalibError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "scalar" => Ok(Shape::Scalar),
            "vector" => Ok(Shape::Vector),
            "matrix" => Ok(Shape::Matrix),
            other => Err(CalibError::config(
                "shape",
                format!("expected scalar|vector|matrix, got `{other}`"),
            )),
        }
    }
}

/// Learned rescaling applied to the post-trained model's logits.
///
/// - `Scalar(t)`: `z / t`
/// - `Vector(v)`: `z_i / v_i`
/// - `Matrix(w)`: `w * z` (row-major, no bias)
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "values", rename_all = "lowercase")]
pub enum ScalingParams {
    Scalar(f64),
    Vector(Vec<f64>),
    Matrix(Vec<Vec<f64>>),
}

impl ScalingParams {
    /// The map that leaves logits unchanged.
    pub fn identity(shape: Shape, k: usize) -> Self {
        match shape {
            Shape::Scalar => ScalingParams::Scalar(1.0),
            Shape::Vector => ScalingParams::Vector(vec![1.0; k]),
            Shape::Matrix => ScalingParams::Matrix(
                (0..k)
                    .map(|i| (0..k).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
                    .collect(),
            ),
        }
    }

    pub fn shape(&self) -> Shape {
        match self {
            ScalingParams::Scalar(_) => Shape::Scalar,
            ScalingParams::Vector(_) => Shape::Vector,
            ScalingParams::Matrix(_) => Shape::Matrix,
        }
    }

    /// The scalar temperature, if this is a scalar map.
    pub fn temperature(&self) -> Option<f64> {
        match self {
            ScalingParams::Scalar(t) => Some(*t),
            _ => None,
        }
    }

    /// Checks positivity/finiteness and, for vector and matrix maps, that
    /// the dimensions match `k`.
    pub fn validate(&self, k: usize) -> Result<()> {
        match self {
            ScalingParams::Scalar(t) => {
                if !(*t > 0.0) || !t.is_finite() {
                    return Err(CalibError::Domain(format!(
                        "temperature must be > 0, got {t}"
                    )));
                }
            }
            ScalingParams::Vector(v) => {
                if v.len() != k {
                    return Err(CalibError::Input(format!(
                        "vector scaling has {} entries, expected {k}",
                        v.len()
                    )));
                }
                if v.iter().any(|x| !(*x > 0.0) || !x.is_finite()) {
                    return Err(CalibError::Domain(
                        "vector scaling entries must be positive and finite".into(),
                    ));
                }
            }
            ScalingParams::Matrix(w) => {
                if w.len() != k || w.iter().any(|row| row.len() != k) {
                    return Err(CalibError::Input(format!("matrix scaling must be {k}x{k}")));
                }
                if w.iter().flatten().any(|x| !x.is_finite()) {
                    return Err(CalibError::Domain(
                        "matrix scaling entries must be finite".into(),
                    ));
                }
            }
        }
        Ok(())
    }

    /// Rescaled logits. Dimensions are assumed valid.
    pub(crate) fn scale_logits(&self, logits: &[f64]) -> Vec<f64> {
        match self {
            ScalingParams::Scalar(t) => logits.iter().map(|z| z / t).collect(),
            ScalingParams::Vector(v) => logits.iter().zip(v).map(|(z, s)| z / s).collect(),
            ScalingParams::Matrix(w) => w
                .iter()
                .map(|row| row.iter().zip(logits).map(|(a, z)| a * z).sum())
                .collect(),
        }
    }

    /// Unconstrained coordinates: log-temperature, log-vector, or the
    /// row-major matrix entries.
    pub fn to_raw(&self) -> Vec<f64> {
        match self {
            ScalingParams::Scalar(t) => vec![t.ln()],
            ScalingParams::Vector(v) => v.iter().map(|x| x.ln()).collect(),
            ScalingParams::Matrix(w) => w.iter().flatten().copied().collect(),
        }
    }

    /// Inverse of [`ScalingParams::to_raw`].
    pub fn from_raw(shape: Shape, k: usize, raw: &[f64]) -> Result<Self> {
        if raw.len() != shape.num_raw(k) {
            return Err(CalibError::Input(format!(
                "{shape} scaling over {k} classes needs {} raw values, got {}",
                shape.num_raw(k),
                raw.len()
            )));
        }
        Ok(match shape {
            Shape::Scalar => ScalingParams::Scalar(raw[0].exp()),
            Shape::Vector => ScalingParams::Vector(raw.iter().map(|x| x.exp()).collect()),
            Shape::Matrix => ScalingParams::Matrix(raw.chunks(k).map(<[f64]>::to_vec).collect()),
        })
    }

    /// Accumulates `d loss / d raw` into `out` given `d loss / d z` for one
    /// record, where `z = self.scale_logits(logits)`.
    pub(crate) fn accumulate_raw_grad(
        &self,
        logits: &[f64],
        scaled: &[f64],
        dz: &[f64],
        weight: f64,
        out: &mut [f64],
    ) {
        match self {
            // z = g * exp(-s), so dz/ds = -z
            ScalingParams::Scalar(_) => {
                let d: f64 = dz.iter().zip(scaled).map(|(a, z)| a * z).sum();
                out[0] -= weight * d;
            }
            ScalingParams::Vector(_) => {
                for i in 0..dz.len() {
                    out[i] -= weight * dz[i] * scaled[i];
                }
            }
            ScalingParams::Matrix(_) => {
                let k = logits.len();
                for i in 0..k {
                    for j in 0..k {
                        out[i * k + j] += weight * dz[i] * logits[j];
                    }
                }
            }
        }
    }
}
