//! Calibration and selective-classification metrics.
//!
//! All metrics operate on top-label [`EvalSample`]s: the predicted class,
//! its probability, and whether it matched the gold label.

use serde::{Deserialize, Serialize};

use crate::align::ScalingParams;
use crate::error::{CalibError, Result};
use crate::prob::{argmax_unchecked, softmax_raw, Dataset, ProbabilityVector, PROB_FLOOR};

/// Default bin count for ECE/MCE/AECE.
pub const DEFAULT_BINS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalSample {
    pub prediction: usize,
    pub confidence: f64,
    pub correct: bool,
}

impl EvalSample {
    fn hit(&self) -> f64 {
        if self.correct {
            1.0
        } else {
            0.0
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BinScheme {
    EqualWidth,
    EqualMass,
}

/// Assignment of samples to confidence bins.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinPartition {
    pub scheme: BinScheme,
    pub bins: usize,
    /// Bin index of each sample, in input order.
    pub assignments: Vec<usize>,
    /// `bins + 1` edges. For equal-mass bins the inner edges are the lowest
    /// confidence in each bin.
    pub boundaries: Vec<f64>,
}

/// Splits samples into `bins` confidence bins.
///
/// Equal-width bins are `[l, u)` with the top bin closed at 1. Equal-mass
/// bins slice the confidence-sorted samples (stable on ties) into runs whose
/// sizes differ by at most one.
pub fn partition(samples: &[EvalSample], scheme: BinScheme, bins: usize) -> Result<BinPartition> {
    if bins == 0 {
        return Err(CalibError::Input("bin count must be at least 1".into()));
    }
    if samples.is_empty() {
        return Err(CalibError::Input("cannot bin an empty sample list".into()));
    }
    let n = samples.len();
    match scheme {
        BinScheme::EqualWidth => {
            let assignments = samples
                .iter()
                .map(|s| ((s.confidence * bins as f64).floor() as usize).min(bins - 1))
                .collect();
            let boundaries = (0..=bins).map(|g| g as f64 / bins as f64).collect();
            Ok(BinPartition {
                scheme,
                bins,
                assignments,
                boundaries,
            })
        }
        BinScheme::EqualMass => {
            let mut order: Vec<usize> = (0..n).collect();
            order.sort_by(|&a, &b| samples[a].confidence.total_cmp(&samples[b].confidence));
            let mut assignments = vec![0; n];
            let mut boundaries = vec![0.0; bins + 1];
            boundaries[bins] = 1.0;
            let mut next_edge = 1;
            for (rank, &idx) in order.iter().enumerate() {
                let bin = rank * bins / n;
                assignments[idx] = bin;
                while next_edge <= bin {
                    boundaries[next_edge] = samples[idx].confidence;
                    next_edge += 1;
                }
            }
            for g in next_edge..bins {
                boundaries[g] = boundaries[g - 1];
            }
            Ok(BinPartition {
                scheme,
                bins,
                assignments,
                boundaries,
            })
        }
    }
}

struct BinStats {
    count: usize,
    conf_sum: f64,
    hit_sum: f64,
}

fn bin_stats(samples: &[EvalSample], part: &BinPartition) -> Vec<BinStats> {
    let mut stats: Vec<BinStats> = (0..part.bins)
        .map(|_| BinStats {
            count: 0,
            conf_sum: 0.0,
            hit_sum: 0.0,
        })
        .collect();
    // Canonical order so the sums do not depend on input order.
    let mut order: Vec<usize> = (0..samples.len()).collect();
    order.sort_by(|&a, &b| {
        samples[a]
            .confidence
            .total_cmp(&samples[b].confidence)
            .then(samples[a].correct.cmp(&samples[b].correct))
    });
    for i in order {
        let (s, b) = (&samples[i], part.assignments[i]);
        stats[b].count += 1;
        stats[b].conf_sum += s.confidence;
        stats[b].hit_sum += s.hit();
    }
    stats
}

/// Expected calibration error: count-weighted mean of `|acc - conf|` over
/// bins. Empty bins contribute nothing.
pub fn ece(samples: &[EvalSample], part: &BinPartition) -> f64 {
    let n = samples.len() as f64;
    bin_stats(samples, part)
        .iter()
        .filter(|b| b.count > 0)
        .map(|b| {
            let c = b.count as f64;
            (c / n) * (b.hit_sum / c - b.conf_sum / c).abs()
        })
        .sum()
}

/// Maximum calibration error over nonempty bins.
pub fn mce(samples: &[EvalSample], part: &BinPartition) -> f64 {
    bin_stats(samples, part)
        .iter()
        .filter(|b| b.count > 0)
        .map(|b| {
            let c = b.count as f64;
            (b.hit_sum / c - b.conf_sum / c).abs()
        })
        .fold(0.0, f64::max)
}

/// ECE over an equal-mass partition.
pub fn aece(samples: &[EvalSample], bins: usize) -> Result<f64> {
    let part = partition(samples, BinScheme::EqualMass, bins)?;
    Ok(ece(samples, &part))
}

/// Mean squared gap between confidence and 0/1 correctness. NaN when empty.
pub fn brier(samples: &[EvalSample]) -> f64 {
    let mut terms: Vec<f64> = samples
        .iter()
        .map(|s| (s.confidence - s.hit()).powi(2))
        .collect();
    terms.sort_by(f64::total_cmp);
    terms.iter().sum::<f64>() / samples.len() as f64
}

/// Mean negative log-probability of the gold label, clamped at 1e-12.
pub fn nll_metric(items: &[(ProbabilityVector, Option<usize>)]) -> Result<f64> {
    if items.is_empty() {
        return Err(CalibError::EmptyDataset);
    }
    let mut total = 0.0;
    for (i, (pv, label)) in items.iter().enumerate() {
        let label = label.ok_or_else(|| CalibError::MissingLabel {
            id: format!("#{i}"),
        })?;
        let p = *pv
            .as_slice()
            .get(label)
            .ok_or_else(|| CalibError::Input(format!("label {label} outside [0, {})", pv.len())))?;
        total -= p.max(PROB_FLOOR).ln();
    }
    Ok(total / items.len() as f64)
}

/// Fraction of correct predictions. NaN when empty.
pub fn accuracy(samples: &[EvalSample]) -> f64 {
    samples.iter().map(EvalSample::hit).sum::<f64>() / samples.len() as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReliabilityRow {
    pub bin: usize,
    pub lower: f64,
    pub upper: f64,
    pub count: usize,
    /// Mean confidence; `None` for an empty bin.
    pub confidence: Option<f64>,
    /// Mean accuracy; `None` for an empty bin.
    pub accuracy: Option<f64>,
}

pub type ReliabilityTable = Vec<ReliabilityRow>;

/// Per-bin count, mean confidence and accuracy, ready to plot.
pub fn reliability_table(samples: &[EvalSample], part: &BinPartition) -> ReliabilityTable {
    bin_stats(samples, part)
        .into_iter()
        .enumerate()
        .map(|(g, b)| {
            let (confidence, accuracy) = if b.count == 0 {
                (None, None)
            } else {
                let c = b.count as f64;
                (Some(b.conf_sum / c), Some(b.hit_sum / c))
            };
            ReliabilityRow {
                bin: g,
                lower: part.boundaries[g],
                upper: part.boundaries[g + 1],
                count: b.count,
                confidence,
                accuracy,
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectivePoint {
    pub threshold: f64,
    pub coverage: f64,
    /// Accuracy among retained samples; `None` if nothing is retained.
    pub accuracy: Option<f64>,
}

/// Accuracy–coverage curve. A sample is retained when its confidence is at
/// least the threshold.
pub fn selective_accuracy(samples: &[EvalSample], thresholds: &[f64]) -> Vec<SelectivePoint> {
    let n = samples.len() as f64;
    thresholds
        .iter()
        .map(|&t| {
            let (kept, hits) = samples
                .iter()
                .filter(|s| s.confidence >= t)
                .fold((0usize, 0.0), |(k, h), s| (k + 1, h + s.hit()));
            SelectivePoint {
                threshold: t,
                coverage: kept as f64 / n,
                accuracy: (kept > 0).then(|| hits / kept as f64),
            }
        })
        .collect()
}

/// Thresholds 0.50, 0.55, ..., 0.95.
pub fn default_thresholds() -> Vec<f64> {
    (0..10).map(|i| (50 + 5 * i) as f64 / 100.0).collect()
}

/// Scaled probabilities of the post-trained model for every record.
pub fn scaled_probs(ds: &Dataset, params: &ScalingParams) -> Result<Vec<ProbabilityVector>> {
    params.validate(ds.k())?;
    ds.iter()
        .map(|r| ProbabilityVector::new(softmax_raw(&params.scale_logits(&r.polm_logits))))
        .collect()
}

/// Top-label samples of the rescaled post-trained model. Every record must
/// be labelled.
pub fn eval_samples(ds: &Dataset, params: &ScalingParams) -> Result<Vec<EvalSample>> {
    let probs = scaled_probs(ds, params)?;
    ds.iter()
        .zip(probs)
        .map(|(r, p)| {
            let label = r
                .label
                .ok_or_else(|| CalibError::MissingLabel { id: r.id.clone() })?;
            let prediction = argmax_unchecked(p.as_slice());
            Ok(EvalSample {
                prediction,
                confidence: p.as_slice()[prediction],
                correct: prediction == label,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub n: usize,
    pub accuracy: f64,
    pub ece: f64,
    pub mce: f64,
    pub aece: f64,
    pub brier: f64,
    pub nll: f64,
}

/// Everything the report needs for one set of parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub metrics: MetricSummary,
    pub reliability: ReliabilityTable,
    pub selective: Vec<SelectivePoint>,
}

pub fn evaluate(
    ds: &Dataset,
    params: &ScalingParams,
    bins: usize,
    thresholds: &[f64],
) -> Result<Evaluation> {
    let probs = scaled_probs(ds, params)?;
    let samples = eval_samples(ds, params)?;
    let labelled: Vec<_> = probs.into_iter().zip(ds.iter().map(|r| r.label)).collect();
    let width = partition(&samples, BinScheme::EqualWidth, bins)?;
    let metrics = MetricSummary {
        n: samples.len(),
        accuracy: accuracy(&samples),
        ece: ece(&samples, &width),
        mce: mce(&samples, &width),
        aece: aece(&samples, bins)?,
        brier: brier(&samples),
        nll: nll_metric(&labelled)?,
    };
    Ok(Evaluation {
        metrics,
        reliability: reliability_table(&samples, &width),
        selective: selective_accuracy(&samples, thresholds),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn s(confidence: f64, correct: bool) -> EvalSample {
        EvalSample {
            prediction: 0,
            confidence,
            correct,
        }
    }

    fn four() -> Vec<EvalSample> {
        vec![s(0.95, true), s(0.95, true), s(0.55, false), s(0.55, false)]
    }

    #[test]
    fn equal_width_assignment() {
        let samples = [s(0.05, true), s(0.55, true), s(0.95, true)];
        let p = partition(&samples, BinScheme::EqualWidth, 10).unwrap();
        assert_eq!(p.assignments, vec![0, 5, 9]);
        let p = partition(&[s(1.0, true)], BinScheme::EqualWidth, 10).unwrap();
        assert_eq!(p.assignments, vec![9]);
        assert_eq!(p.boundaries.len(), 11);
    }

    #[test]
    fn equal_mass_assignment() {
        let samples = [s(0.2, true), s(0.4, true), s(0.6, true), s(0.8, true)];
        let p = partition(&samples, BinScheme::EqualMass, 2).unwrap();
        assert_eq!(p.assignments, vec![0, 0, 1, 1]);
        assert_eq!(p.boundaries, vec![0.0, 0.6, 1.0]);
        let shuffled = [s(0.8, true), s(0.2, true), s(0.6, true), s(0.4, true)];
        let p = partition(&shuffled, BinScheme::EqualMass, 2).unwrap();
        assert_eq!(p.assignments, vec![1, 0, 1, 0]);
    }

    #[test]
    fn equal_mass_more_bins_than_samples() {
        let samples = [s(0.3, true), s(0.9, false)];
        let p = partition(&samples, BinScheme::EqualMass, 4).unwrap();
        assert_eq!(p.assignments, vec![0, 2]);
        assert!(p.boundaries.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn partition_errors() {
        assert!(partition(&[], BinScheme::EqualWidth, 10).is_err());
        assert!(partition(&[s(0.5, true)], BinScheme::EqualMass, 0).is_err());
    }

    #[test]
    fn ece_examples() {
        let perfect = [s(1.0, true), s(1.0, true), s(0.5, true), s(0.5, false)];
        let p = partition(&perfect, BinScheme::EqualWidth, 10).unwrap();
        assert_eq!(ece(&perfect, &p), 0.0);

        let two = [s(0.9, true), s(0.9, false)];
        let p = partition(&two, BinScheme::EqualWidth, 10).unwrap();
        assert_abs_diff_eq!(ece(&two, &p), 0.4, epsilon = 1e-12);

        let four = four();
        let p = partition(&four, BinScheme::EqualWidth, 10).unwrap();
        assert_abs_diff_eq!(ece(&four, &p), 0.30, epsilon = 1e-12);
        assert_abs_diff_eq!(mce(&four, &p), 0.55, epsilon = 1e-12);
        assert_abs_diff_eq!(aece(&four, 2).unwrap(), 0.30, epsilon = 1e-12);
    }

    #[test]
    fn mce_examples() {
        let perfect = [s(0.5, true), s(0.5, false)];
        let p = partition(&perfect, BinScheme::EqualWidth, 10).unwrap();
        assert_eq!(mce(&perfect, &p), 0.0);
        let worst = [s(1.0, false)];
        let p = partition(&worst, BinScheme::EqualWidth, 1).unwrap();
        assert_eq!(mce(&worst, &p), 1.0);
    }

    #[test]
    fn aece_single_bin() {
        let samples = [s(0.9, true), s(0.7, false), s(0.6, true)];
        let mean_conf: f64 = (0.9 + 0.7 + 0.6) / 3.0;
        let acc = 2.0 / 3.0;
        assert_abs_diff_eq!(
            aece(&samples, 1).unwrap(),
            (acc - mean_conf).abs(),
            epsilon = 1e-12
        );
        assert_eq!(aece(&[s(0.5, true), s(0.5, false)], 2).unwrap(), 0.5);
    }

    #[test]
    fn brier_examples() {
        assert_eq!(brier(&[s(1.0, true), s(1.0, true)]), 0.0);
        assert_abs_diff_eq!(brier(&[s(0.7, false)]), 0.49, epsilon = 1e-12);
        assert_abs_diff_eq!(brier(&[s(0.8, true), s(0.6, false)]), 0.20, epsilon = 1e-12);
        assert_eq!(brier(&[s(1.0, false)]), 1.0);
    }

    #[test]
    fn nll_examples() {
        let pv = |v: &[f64]| ProbabilityVector::new(v.to_vec()).unwrap();
        assert_eq!(nll_metric(&[(pv(&[1.0, 0.0]), Some(0))]).unwrap(), 0.0);
        assert_abs_diff_eq!(
            nll_metric(&[(ProbabilityVector::uniform(4), Some(3))]).unwrap(),
            4f64.ln(),
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(
            nll_metric(&[(pv(&[0.75, 0.25]), Some(0))]).unwrap(),
            -(0.75f64.ln()),
            epsilon = 1e-12
        );
        assert!(matches!(
            nll_metric(&[(pv(&[0.5, 0.5]), None)]),
            Err(CalibError::MissingLabel { .. })
        ));
    }

    #[test]
    fn reliability_rows() {
        let samples = [s(0.8, true), s(0.9, false)];
        let p = partition(&samples, BinScheme::EqualWidth, 1).unwrap();
        let t = reliability_table(&samples, &p);
        assert_eq!(t[0].count, 2);
        assert_abs_diff_eq!(t[0].confidence.unwrap(), 0.85, epsilon = 1e-12);
        assert_eq!(t[0].accuracy, Some(0.5));

        let p = partition(&samples, BinScheme::EqualWidth, 10).unwrap();
        let t = reliability_table(&samples, &p);
        assert_eq!(t.len(), 10);
        assert_eq!(t[0].count, 0);
        assert_eq!(t[0].confidence, None);
        assert_eq!(t[0].accuracy, None);
        let json = serde_json::to_string(&t[0]).unwrap();
        assert!(json.contains(r#""confidence":null"#));
        assert_eq!(t.iter().map(|r| r.count).sum::<usize>(), 2);

        let perfect = [s(1.0, true), s(0.5, true), s(0.5, false)];
        let p = partition(&perfect, BinScheme::EqualWidth, 10).unwrap();
        for row in reliability_table(&perfect, &p) {
            assert_eq!(row.confidence, row.accuracy);
        }
    }

    #[test]
    fn selective_examples() {
        let samples = [s(0.9, true), s(0.6, false)];
        let c = selective_accuracy(&samples, &[0.0, 0.8, 0.95]);
        assert_eq!(c[0].coverage, 1.0);
        assert_eq!(c[0].accuracy, Some(0.5));
        assert_eq!(c[1].coverage, 0.5);
        assert_eq!(c[1].accuracy, Some(1.0));
        assert_eq!(c[2].coverage, 0.0);
        assert_eq!(c[2].accuracy, None);
        assert_eq!(default_thresholds().len(), 10);
        assert_eq!(default_thresholds()[9], 0.95);
    }

    fn samples() -> impl Strategy<Value = Vec<EvalSample>> {
        prop::collection::vec((0.01f64..=1.0, any::<bool>()), 1..60)
            .prop_map(|v| v.into_iter().map(|(c, ok)| s(c, ok)).collect())
    }

    proptest! {
        #[test]
        fn ece_bounded_by_mce(v in samples(), g in 1usize..15, mass in any::<bool>()) {
            let scheme = if mass { BinScheme::EqualMass } else { BinScheme::EqualWidth };
            let p = partition(&v, scheme, g).unwrap();
            let (e, m) = (ece(&v, &p), mce(&v, &p));
            prop_assert!(e <= m + 1e-12);
            prop_assert!((0.0..=1.0).contains(&e));
            prop_assert!((0.0..=1.0).contains(&m));
            prop_assert!((0.0..=1.0).contains(&brier(&v)));
            prop_assert!((0.0..=1.0 + 1e-12).contains(&aece(&v, g).unwrap()));
        }

        #[test]
        fn equal_mass_populations_balanced(v in samples(), g in 1usize..15) {
            let p = partition(&v, BinScheme::EqualMass, g).unwrap();
            let mut counts = vec![0usize; g];
            for &b in &p.assignments { counts[b] += 1; }
            let lo = counts.iter().min().unwrap();
            let hi = counts.iter().max().unwrap();
            prop_assert!(hi - lo <= 1);
        }

        #[test]
        fn equal_width_permutation_invariant(v in samples(), g in 1usize..15, seed in any::<u64>()) {
            use rand::{seq::SliceRandom, SeedableRng};
            let mut w = v.clone();
            w.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            let pv = partition(&v, BinScheme::EqualWidth, g).unwrap();
            let pw = partition(&w, BinScheme::EqualWidth, g).unwrap();
            prop_assert_eq!(ece(&v, &pv), ece(&w, &pw));
            prop_assert_eq!(mce(&v, &pv), mce(&w, &pw));
            prop_assert_eq!(brier(&v), brier(&w));
        }

        #[test]
        fn singleton_aece_is_mean_abs_gap(v in samples()) {
            let n = v.len();
            let direct = v.iter().map(|s| (s.confidence - s.hit()).abs()).sum::<f64>() / n as f64;
            prop_assert!((aece(&v, n).unwrap() - direct).abs() < 1e-12);
        }

        #[test]
        fn coverage_non_increasing(v in samples(), mut t in prop::collection::vec(0.0f64..1.0, 1..20)) {
            t.sort_by(f64::total_cmp);
            let c = selective_accuracy(&v, &t);
            prop_assert!(c.windows(2).all(|w| w[1].coverage <= w[0].coverage));
        }
    }
}
