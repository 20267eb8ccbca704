//! Synthetic agreement/disagreement mixtures and executable checks of how
//! disagreement examples distort confidence alignment.
//!
//! A mixture holds `round(pi * n)` disagreement records (f and g predict
//! different classes) and the rest agreement records. Logits use a two-level
//! profile: for target confidence `c` on class `j`, logit `ln(c (k-1) / (1-c))`
//! on `j` and `0` elsewhere, which is the only such profile whose max softmax
//! is exactly `c`. The reference model `f` gets confidence equal to its
//! regional accuracy, so it is calibrated by construction. The post-trained
//! model `g` gets the profile of its own regional accuracy, multiplied by
//! `conf_sharpness`; sharpness above 1 makes `g` over-confident.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::align::{
    grid_search_temperature, optimize, GridSpec, Objective, OptimizationTrace, OptimizerConfig,
    Shape,
};
use crate::error::{CalibError, Result};
use crate::metrics::{self, BinScheme, EvalSample};
use crate::prob::{agreement_mask, argmax_unchecked, softmax_raw, Dataset, LogitRecord, Split};

const ACC_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureConfig {
    /// Disagreement ratio in (0, 1].
    pub pi: f64,
    #[serde(alias = "N")]
    pub n: usize,
    pub k: usize,
    #[serde(default)]
    pub seed: u64,
    pub acc_f_agree: f64,
    pub acc_g_agree: f64,
    pub acc_f_dis: f64,
    pub acc_g_dis: f64,
    #[serde(default = "unit")]
    pub conf_sharpness: f64,
}

fn unit() -> f64 {
    1.0
}

impl MixtureConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.pi > 0.0 && self.pi <= 1.0) {
            return Err(CalibError::config("pi", "must lie in (0, 1]"));
        }
        if self.n == 0 {
            return Err(CalibError::config("n", "must be at least 1"));
        }
        if self.k < 2 {
            return Err(CalibError::config("k", "must be at least 2"));
        }
        if !(self.conf_sharpness > 0.0) || !self.conf_sharpness.is_finite() {
            return Err(CalibError::config("conf_sharpness", "must be positive"));
        }
        let chance = 1.0 / self.k as f64;
        for (field, v) in [
            ("acc_f_agree", self.acc_f_agree),
            ("acc_g_agree", self.acc_g_agree),
            ("acc_f_dis", self.acc_f_dis),
            ("acc_g_dis", self.acc_g_dis),
        ] {
            if !(v > chance && v < 1.0) {
                return Err(CalibError::config(
                    field,
                    format!(
                        "must lie in (1/k, 1) = ({chance}, 1) so a two-level logit profile with \
                         that confidence exists, got {v}"
                    ),
                ));
            }
        }
        if (self.acc_f_agree - self.acc_g_agree).abs() > ACC_TOL {
            return Err(CalibError::config(
                "acc_g_agree",
                "f and g predict the same class on agreement records, so their accuracies there \
                 must be equal",
            ));
        }
        let both = self.acc_f_dis + self.acc_g_dis;
        if both > 1.0 + ACC_TOL {
            return Err(CalibError::config(
                "acc_g_dis",
                "acc_f_dis + acc_g_dis cannot exceed 1: the two models predict different classes",
            ));
        }
        if self.k == 2 && (both - 1.0).abs() > ACC_TOL {
            return Err(CalibError::config(
                "acc_g_dis",
                "with k = 2 one of the two disagreeing models is always right, so \
                 acc_f_dis + acc_g_dis must equal 1",
            ));
        }
        Ok(())
    }

    pub fn disagreement_count(&self) -> usize {
        (self.pi * self.n as f64).round() as usize
    }
}

/// Two-level logits with max-softmax `conf` on class `class`.
pub fn two_level_logits(k: usize, class: usize, conf: f64) -> Vec<f64> {
    let mut z = vec![0.0; k];
    z[class] = (conf * (k - 1) as f64 / (1.0 - conf)).ln();
    z
}

fn other_class(rng: &mut ChaCha8Rng, k: usize, exclude: &[usize]) -> usize {
    loop {
        let c = rng.gen_range(0..k);
        if !exclude.contains(&c) {
            return c;
        }
    }
}

/// Labelled mixture for the validation split.
pub fn generate_mixture(cfg: &MixtureConfig) -> Result<Dataset> {
    generate_split(cfg, Split::Validation)
}

/// Labelled mixture tagged with `split`. The test split draws from an
/// independent stream derived from the same seed.
pub fn generate_split(cfg: &MixtureConfig, split: Split) -> Result<Dataset> {
    cfg.validate()?;
    let (seed, prefix) = match split {
        Split::Validation => (cfg.seed, "val"),
        Split::Test => (cfg.seed ^ 0x5DEE_CE66_D1CE_B00C, "test"),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let k = cfg.k;
    let n_dis = cfg.disagreement_count();

    let mut is_dis: Vec<bool> = (0..cfg.n).map(|i| i < n_dis).collect();
    is_dis.shuffle(&mut rng);

    let sharpen =
        |z: Vec<f64>| -> Vec<f64> { z.into_iter().map(|v| v * cfg.conf_sharpness).collect() };

    let records = is_dis
        .into_iter()
        .enumerate()
        .map(|(i, dis)| {
            let u: f64 = rng.gen();
            let (plm, polm, label) = if dis {
                let f_class = rng.gen_range(0..k);
                let g_class = other_class(&mut rng, k, &[f_class]);
                let label = if u < cfg.acc_f_dis {
                    f_class
                } else if u < cfg.acc_f_dis + cfg.acc_g_dis {
                    g_class
                } else {
                    other_class(&mut rng, k, &[f_class, g_class])
                };
                (
                    two_level_logits(k, f_class, cfg.acc_f_dis),
                    sharpen(two_level_logits(k, g_class, cfg.acc_g_dis)),
                    label,
                )
            } else {
                let class = rng.gen_range(0..k);
                let label = if u < cfg.acc_f_agree {
                    class
                } else {
                    other_class(&mut rng, k, &[class])
                };
                (
                    two_level_logits(k, class, cfg.acc_f_agree),
                    sharpen(two_level_logits(k, class, cfg.acc_g_agree)),
                    label,
                )
            };
            LogitRecord {
                id: format!("{prefix}-{i:06}"),
                k,
                plm_logits: plm,
                polm_logits: polm,
                label: Some(label),
                split,
            }
        })
        .collect();
    Dataset::new(records)
}

/// Outcome of checking a closed-form prediction against a measurement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TheoryCheck {
    pub name: String,
    pub measured: f64,
    pub predicted: f64,
    pub gap: f64,
    pub tolerance: f64,
    pub passed: bool,
    pub sample_count: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub standard_error: Option<f64>,
    /// 10-bin equal-width ECE of the same samples, for reference.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub binned_ece: Option<f64>,
}

impl TheoryCheck {
    fn new(name: &str, measured: f64, predicted: f64, tolerance: f64, sample_count: usize) -> Self {
        let gap = (measured - predicted).abs();
        Self {
            name: name.to_string(),
            measured,
            predicted,
            gap,
            tolerance,
            passed: gap <= tolerance,
            sample_count,
            standard_error: None,
            binned_ece: None,
        }
    }
}

/// Calibration error of a predictor perfectly aligned with a calibrated
/// reference.
///
/// `g` keeps its own predictions but takes `f`'s confidence on every record.
/// The measured value is `|mean confidence - accuracy of g|`; the predicted
/// value is `pi * |acc_f_dis - acc_g_dis|`, since the two models share their
/// predictions (and hence their accuracy) on agreement records. Passes when
/// the gap is within `3 / sqrt(n)`.
pub fn verify_aligned_ece(cfg: &MixtureConfig) -> Result<TheoryCheck> {
    let ds = generate_mixture(cfg)?;
    let samples: Vec<EvalSample> = ds
        .iter()
        .map(|r| {
            let f_probs = softmax_raw(&r.plm_logits);
            let prediction = argmax_unchecked(&r.polm_logits);
            EvalSample {
                prediction,
                confidence: f_probs.iter().copied().fold(0.0, f64::max),
                correct: Some(prediction) == r.label,
            }
        })
        .collect();
    let n = samples.len() as f64;
    let mean_conf = samples.iter().map(|s| s.confidence).sum::<f64>() / n;
    let acc = metrics::accuracy(&samples);
    let measured = (mean_conf - acc).abs();
    let predicted = cfg.pi * (cfg.acc_f_dis - cfg.acc_g_dis).abs();

    let mut report = TheoryCheck::new(
        "aligned_ece",
        measured,
        predicted,
        3.0 / n.sqrt(),
        samples.len(),
    );
    report.standard_error = Some((acc * (1.0 - acc) / n).sqrt());
    let part = metrics::partition(&samples, BinScheme::EqualWidth, metrics::DEFAULT_BINS)?;
    report.binned_ece = Some(metrics::ece(&samples, &part));
    Ok(report)
}

/// Whether `g` predicts class `c` while `f` gives `c` less than `1/k`.
pub fn satisfies_divergence_precondition(rec: &LogitRecord) -> bool {
    let c = argmax_unchecked(&rec.polm_logits);
    softmax_raw(&rec.plm_logits)[c] < 1.0 / rec.k as f64
}

/// Whether single-record KL alignment keeps decreasing as the temperature
/// grows without bound.
///
/// `d KL / d tau = (E_p[g] - E_q(tau)[g]) / tau^2`, and `E_q(tau)[g]`
/// decreases to the plain mean of `g` as `tau -> inf`. The loss is therefore
/// decreasing for every `tau` exactly when `E_p[g] <= mean(g)` (and `g` is
/// not constant). The divergence precondition alone does not imply this.
pub fn naive_alignment_diverges(rec: &LogitRecord) -> bool {
    let p = softmax_raw(&rec.plm_logits);
    let g = &rec.polm_logits;
    let mean = g.iter().sum::<f64>() / g.len() as f64;
    let expected: f64 = p.iter().zip(g).map(|(pi, gi)| pi * gi).sum();
    let spread = g.iter().any(|v| (v - mean).abs() > 1e-12);
    spread && expected <= mean
}

/// A random record meeting the divergence precondition, built so that the
/// naive loss is strictly decreasing in the temperature.
///
/// `g` gets a two-level profile peaked on class `c`; `f` a two-level profile
/// peaked on some other class with confidence above `1/k`, which leaves
/// `f`'s probability of `c` below `1/k`.
pub fn make_divergent_record(k: usize, seed: u64) -> Result<LogitRecord> {
    if k < 2 {
        return Err(CalibError::Input("need at least 2 classes".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let c = rng.gen_range(0..k);
    let f_class = other_class(&mut rng, k, &[c]);
    let chance = 1.0 / k as f64;
    let f_conf = rng.gen_range(chance + 0.05 * (1.0 - chance)..0.95);
    let peak = rng.gen_range(1.0..6.0);

    let mut polm = vec![0.0; k];
    polm[c] = peak;
    let rec = LogitRecord::new(
        format!("div-k{k}-s{seed}"),
        two_level_logits(k, f_class, f_conf),
        polm,
        None,
    )?;
    assert!(satisfies_divergence_precondition(&rec));
    assert!(naive_alignment_diverges(&rec));
    assert!(!agreement_mask(&rec));
    Ok(rec)
}

/// Default grid for single-record divergence checks.
pub fn divergence_grid() -> GridSpec {
    GridSpec::log(0.05, crate::align::TAU_SATURATION, 400)
}

/// For the records in `ds` meeting the divergence precondition, the
/// fraction whose single-record naive grid optimum sits at the top of the
/// grid. `None` when no record meets the precondition.
pub fn verify_divergent_temperature(ds: &Dataset) -> Result<Option<TheoryCheck>> {
    let grid = divergence_grid();
    let mut total = 0usize;
    let mut at_top = 0usize;
    for rec in ds.iter().filter(|r| satisfies_divergence_precondition(r)) {
        total += 1;
        let single = Dataset::new(vec![rec.clone()])?;
        let (tau, _) = grid_search_temperature(&single, Objective::Naive, &grid)?;
        if tau == grid.tau_max {
            at_top += 1;
        }
    }
    if total == 0 {
        return Ok(None);
    }
    Ok(Some(TheoryCheck::new(
        "divergent_temperature",
        at_top as f64 / total as f64,
        1.0,
        0.0,
        total,
    )))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Subset {
    Agreement,
    Disagreement,
    All,
}

impl Subset {
    pub fn select(self, ds: &Dataset) -> Option<Dataset> {
        match self {
            Subset::Agreement => ds.agreement_subset(),
            Subset::Disagreement => ds.disagreement_subset(),
            Subset::All => Some(ds.clone()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubsetTrace {
    pub subset: Subset,
    pub trace: Option<OptimizationTrace>,
    pub warning: Option<String>,
}

/// Naive scalar alignment fitted separately on each requested subset.
/// Empty subsets are skipped with a warning entry.
pub fn temperature_trace(
    ds: &Dataset,
    subsets: &[Subset],
    cfg: &OptimizerConfig,
) -> Result<Vec<SubsetTrace>> {
    subsets
        .iter()
        .map(|&subset| match subset.select(ds) {
            Some(part) => Ok(SubsetTrace {
                subset,
                trace: Some(optimize(&part, Objective::Naive, Shape::Scalar, cfg)?),
                warning: None,
            }),
            None => {
                log::warn!("{subset:?} subset is empty; skipping");
                Ok(SubsetTrace {
                    subset,
                    trace: None,
                    warning: Some(format!("{subset:?} subset is empty")),
                })
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::align::{naive_alignment_loss, ScalingParams};

    pub(crate) fn base(pi: f64, n: usize) -> MixtureConfig {
        MixtureConfig {
            pi,
            n,
            k: 4,
            seed: 7,
            acc_f_agree: 0.7,
            acc_g_agree: 0.7,
            acc_f_dis: 0.3,
            acc_g_dis: 0.6,
            conf_sharpness: 1.0,
        }
    }

    #[test]
    fn profile_has_requested_confidence() {
        for k in [2, 3, 4, 10] {
            for c in [0.55, 0.7, 0.99] {
                let p = softmax_raw(&two_level_logits(k, 1, c));
                assert!((p[1] - c).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn all_disagreement() {
        let ds = generate_mixture(&base(1.0, 100)).unwrap();
        assert_eq!(ds.len(), 100);
        assert!(ds.iter().all(|r| !agreement_mask(r)));
    }

    #[test]
    fn deterministic() {
        let cfg = base(0.3, 1000);
        assert_eq!(
            generate_mixture(&cfg).unwrap(),
            generate_mixture(&cfg).unwrap()
        );
        let other = MixtureConfig {
            seed: 8,
            ..cfg.clone()
        };
        assert_ne!(
            generate_mixture(&cfg).unwrap(),
            generate_mixture(&other).unwrap()
        );
    }

    #[test]
    fn exact_disagreement_count() {
        let ds = generate_mixture(&base(0.3, 10_000)).unwrap();
        let dis = ds.len() - ds.agreement_count();
        assert_eq!(dis, 3000);
        let ds = generate_mixture(&base(0.333, 10)).unwrap();
        assert_eq!(ds.len() - ds.agreement_count(), 3);
    }

    #[test]
    fn f_is_calibrated_per_region() {
        let ds = generate_mixture(&base(0.5, 20_000)).unwrap();
        for (subset, acc) in [
            (ds.agreement_subset().unwrap(), 0.7),
            (ds.disagreement_subset().unwrap(), 0.3),
        ] {
            let hits = subset
                .iter()
                .filter(|r| Some(argmax_unchecked(&r.plm_logits)) == r.label)
                .count() as f64
                / subset.len() as f64;
            assert!((hits - acc).abs() < 0.02, "{hits} vs {acc}");
            let conf = softmax_raw(&subset.records()[0].plm_logits)
                .into_iter()
                .fold(0.0, f64::max);
            assert!((conf - acc).abs() < 1e-12);
        }
    }

    #[test]
    fn config_errors_name_fields() {
        let field = |cfg: MixtureConfig| match cfg.validate() {
            Err(CalibError::Config { field, .. }) => field,
            other => panic!("expected config error, got {other:?}"),
        };
        assert_eq!(
            field(MixtureConfig {
                pi: 0.0,
                ..base(0.3, 10)
            }),
            "pi"
        );
        assert_eq!(
            field(MixtureConfig {
                n: 0,
                ..base(0.3, 10)
            }),
            "n"
        );
        assert_eq!(
            field(MixtureConfig {
                acc_g_agree: 0.8,
                ..base(0.3, 10)
            }),
            "acc_g_agree"
        );
        assert_eq!(
            field(MixtureConfig {
                acc_g_dis: 0.8,
                ..base(0.3, 10)
            }),
            "acc_g_dis"
        );
        assert_eq!(
            field(MixtureConfig {
                acc_f_dis: 0.2,
                ..base(0.3, 10)
            }),
            "acc_f_dis"
        );
        let binary = MixtureConfig {
            k: 2,
            acc_f_dis: 0.55,
            acc_g_dis: 0.6,
            ..base(0.3, 10)
        };
        assert_eq!(field(binary), "acc_g_dis");
        // Two disagreeing binary predictors cannot both be above chance.
        let binary = MixtureConfig {
            k: 2,
            acc_f_dis: 0.55,
            acc_g_dis: 0.45,
            ..base(0.3, 10)
        };
        assert_eq!(field(binary), "acc_g_dis");
    }

    #[test]
    fn aligned_ece_examples() {
        let n = 40_000;
        let bound = 2.0 / (n as f64).sqrt();
        let r = verify_aligned_ece(&MixtureConfig {
            pi: 1e-9,
            acc_f_dis: 0.4,
            acc_g_dis: 0.4,
            ..base(0.0, n)
        })
        .unwrap();
        assert_eq!(r.predicted, 0.0);
        assert!(r.measured < bound, "{r:?}");

        let r = verify_aligned_ece(&MixtureConfig {
            acc_f_dis: 0.3,
            acc_g_dis: 0.7,
            ..base(1.0, n)
        })
        .unwrap();
        assert!((r.predicted - 0.4).abs() < 1e-12);
        assert!(r.gap < bound, "{r:?}");

        let r = verify_aligned_ece(&MixtureConfig {
            acc_f_dis: 0.35,
            acc_g_dis: 0.35,
            ..base(0.6, 1000)
        })
        .unwrap();
        assert_eq!(r.predicted, 0.0);
    }

    #[test]
    fn aligned_ece_gap_shrinks_with_n() {
        let gaps = |n: usize| -> f64 {
            let mut g: Vec<f64> = (0..10)
                .map(|seed| {
                    verify_aligned_ece(&MixtureConfig {
                        seed,
                        ..base(0.3, n)
                    })
                    .unwrap()
                    .gap
                })
                .collect();
            g.sort_by(f64::total_cmp);
            (g[4] + g[5]) / 2.0
        };
        assert!(gaps(40_000) < gaps(400));
    }

    #[test]
    fn divergent_records() {
        for k in [2, 3, 4, 10] {
            for seed in 0..50 {
                let r = make_divergent_record(k, seed).unwrap();
                let c = argmax_unchecked(&r.polm_logits);
                assert!(softmax_raw(&r.plm_logits)[c] < 1.0 / k as f64);
                assert!(!agreement_mask(&r));
            }
        }
        assert!(make_divergent_record(1, 0).is_err());
    }

    #[test]
    fn precondition_alone_allows_finite_optimum() {
        // f puts its mass on g's runner-up class, so E_p[g] exceeds mean(g).
        let rec = LogitRecord::new(
            "runner-up",
            vec![0.3f64.ln(), 0.7f64.ln(), -40.0],
            vec![10.0, 9.0, 0.0],
            None,
        )
        .unwrap();
        assert!(satisfies_divergence_precondition(&rec));
        assert!(!naive_alignment_diverges(&rec));
        let ds = Dataset::new(vec![rec]).unwrap();
        let (tau, _) = grid_search_temperature(&ds, Objective::Naive, &divergence_grid()).unwrap();
        assert!(tau < 100.0, "optimum {tau}");
        let at = |t: f64| naive_alignment_loss(&ds, &ScalingParams::Scalar(t)).unwrap();
        assert!(at(tau) < at(1e6));
    }

    #[test]
    fn divergent_report_on_pure_disagreement() {
        let ds = generate_mixture(&base(1.0, 50)).unwrap();
        let r = verify_divergent_temperature(&ds).unwrap().unwrap();
        assert_eq!(r.sample_count, 50);
        assert_eq!(r.measured, 1.0);
        assert!(r.passed);
    }

    #[test]
    fn trace_skips_empty_subset() {
        let ds = generate_mixture(&base(1.0, 20)).unwrap();
        let cfg = OptimizerConfig {
            epochs: 5,
            ..Default::default()
        };
        let out = temperature_trace(&ds, &[Subset::Agreement, Subset::Disagreement], &cfg).unwrap();
        assert!(out[0].trace.is_none() && out[0].warning.is_some());
        assert_eq!(out[1].trace.as_ref().unwrap().epochs_run(), 5);
    }

    #[test]
    fn identity_agreement_trace_stays_at_one() {
        let ds = generate_mixture(&base(0.3, 500)).unwrap();
        let agree = ds.agreement_subset().unwrap();
        let out =
            temperature_trace(&agree, &[Subset::Agreement], &OptimizerConfig::default()).unwrap();
        let tau = out[0]
            .trace
            .as_ref()
            .unwrap()
            .final_params
            .temperature()
            .unwrap();
        assert!((tau - 1.0).abs() < 0.01, "{tau}");
    }
}
