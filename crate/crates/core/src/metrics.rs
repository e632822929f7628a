//! Classification (OA, sensitivity, PPV, F1) and ranked-retrieval (mAP,
//! precision@K) measures.
//!
//! Sensitivity and PPV are macro-averaged over classes, skipping classes
//! whose denominator is empty. Average precision is normalized by the number
//! of relevant items found within the retrieval depth, so a query whose
//! relevant hits all precede the irrelevant ones scores 1 regardless of how
//! many relevant items lie beyond the depth.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::{LbseError, Result};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassCounts {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub tn: usize,
}

impl ClassCounts {
    pub fn sensitivity(&self) -> Option<f64> {
        ratio(self.tp, self.tp + self.fn_)
    }

    pub fn ppv(&self) -> Option<f64> {
        ratio(self.tp, self.tp + self.fp)
    }
}

fn ratio(num: usize, den: usize) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

/// One-vs-rest counts for every class.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub per_class: Vec<ClassCounts>,
    pub total: usize,
    pub correct: usize,
}

impl ConfusionCounts {
    pub fn from_predictions(predicted: &[usize], truth: &[usize], num_classes: usize) -> Result<Self> {
        if predicted.len() != truth.len() {
            return Err(LbseError::LengthMismatch(format!(
                "{} predictions for {} ground-truth labels",
                predicted.len(),
                truth.len()
            )));
        }
        if predicted.is_empty() {
            return Err(LbseError::LengthMismatch("no predictions".into()));
        }
        for (sample, &label) in predicted.iter().chain(truth).enumerate() {
            if label >= num_classes {
                return Err(LbseError::LabelOutOfRange {
                    sample: sample % truth.len(),
                    label,
                    num_classes,
                });
            }
        }
        let total = truth.len();
        let mut per_class = vec![ClassCounts::default(); num_classes];
        let mut correct = 0;
        for (&p, &t) in predicted.iter().zip(truth) {
            if p == t {
                correct += 1;
                per_class[t].tp += 1;
            } else {
                per_class[p].fp += 1;
                per_class[t].fn_ += 1;
            }
        }
        for c in per_class.iter_mut() {
            c.tn = total - c.tp - c.fp - c.fn_;
        }
        Ok(ConfusionCounts {
            per_class,
            total,
            correct,
        })
    }
}

/// How per-class sensitivity/PPV are combined.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Averaging {
    /// Unweighted mean over classes with a nonempty denominator.
    Macro,
    /// Binary reporting: only the given positive class.
    Positive(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassificationSummary {
    pub oa: f64,
    pub sensitivity: f64,
    pub ppv: f64,
    pub f1: f64,
}

pub fn f1_score(ppv: f64, sensitivity: f64) -> f64 {
    if ppv + sensitivity > 0.0 {
        2.0 * ppv * sensitivity / (ppv + sensitivity)
    } else {
        0.0
    }
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, count) = values.fold((0.0, 0usize), |(s, c), v| (s + v, c + 1));
    if count == 0 {
        0.0
    } else {
        sum / count as f64
    }
}

impl ConfusionCounts {
    pub fn summarize(&self, averaging: Averaging) -> Result<ClassificationSummary> {
        let (sensitivity, ppv) = match averaging {
            Averaging::Macro => (
                mean(self.per_class.iter().filter_map(ClassCounts::sensitivity)),
                mean(self.per_class.iter().filter_map(ClassCounts::ppv)),
            ),
            Averaging::Positive(c) => {
                let counts = self.per_class.get(c).ok_or(LbseError::LabelOutOfRange {
                    sample: 0,
                    label: c,
                    num_classes: self.per_class.len(),
                })?;
                (counts.sensitivity().unwrap_or(0.0), counts.ppv().unwrap_or(0.0))
            }
        };
        Ok(ClassificationSummary {
            oa: self.correct as f64 / self.total as f64,
            sensitivity,
            ppv,
            f1: f1_score(ppv, sensitivity),
        })
    }
}

/// Macro-averaged classification measures.
pub fn classification_metrics(
    predicted: &[usize],
    truth: &[usize],
    num_classes: usize,
) -> Result<(ConfusionCounts, ClassificationSummary)> {
    classification_metrics_with(predicted, truth, num_classes, Averaging::Macro)
}

pub fn classification_metrics_with(
    predicted: &[usize],
    truth: &[usize],
    num_classes: usize,
    averaging: Averaging,
) -> Result<(ConfusionCounts, ClassificationSummary)> {
    let counts = ConfusionCounts::from_predictions(predicted, truth, num_classes)?;
    let summary = counts.summarize(averaging)?;
    Ok((counts, summary))
}

/// Average precision of one ranked relevance list truncated at `depth`.
pub fn average_precision(relevance: &[bool], depth: usize) -> f64 {
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (rank0, _) in relevance.iter().take(depth).enumerate().filter(|(_, &r)| r) {
        hits += 1;
        sum += hits as f64 / (rank0 + 1) as f64;
    }
    if hits == 0 {
        0.0
    } else {
        sum / hits as f64
    }
}

/// Mean of [`average_precision`] over queries; 0 for no queries.
pub fn mean_average_precision<R: AsRef<[bool]>>(rankings: &[R], depth: usize) -> f64 {
    mean(rankings.iter().map(|r| average_precision(r.as_ref(), depth)))
}

/// Fraction of relevant items among the first `min(k, len)` results.
pub fn precision_at_k(relevance: &[bool], k: usize) -> f64 {
    let m = k.min(relevance.len());
    if m == 0 {
        return 0.0;
    }
    relevance[..m].iter().filter(|&&r| r).count() as f64 / m as f64
}

/// Mean of [`precision_at_k`] over queries; 0 for no queries.
pub fn mean_precision_at_k<R: AsRef<[bool]>>(rankings: &[R], k: usize) -> f64 {
    mean(rankings.iter().map(|r| precision_at_k(r.as_ref(), k)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryDetail {
    pub query: usize,
    pub truth: usize,
    pub predicted: usize,
    pub average_precision: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub oa: f64,
    pub sensitivity: f64,
    pub ppv: f64,
    pub f1: f64,
    pub map: f64,
    pub precision_at_k: Vec<(usize, f64)>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub per_query: Option<Vec<QueryDetail>>,
}

impl MetricsReport {
    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| LbseError::Io(e.into()))
    }

    /// `(metric, value)` pairs in report order.
    pub fn rows(&self) -> Vec<(String, f64)> {
        let mut rows = vec![
            ("oa".to_string(), self.oa),
            ("sensitivity".to_string(), self.sensitivity),
            ("ppv".to_string(), self.ppv),
            ("f1".to_string(), self.f1),
            ("map".to_string(), self.map),
        ];
        rows.extend(self.precision_at_k.iter().map(|&(k, v)| (format!("precision@{k}"), v)));
        rows
    }

    /// `metric,value` CSV with a header line.
    pub fn write_csv<W: Write>(&self, w: &mut W) -> Result<()> {
        writeln!(w, "metric,value")?;
        for (name, value) in self.rows() {
            writeln!(w, "{name},{value}")?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const EPS: f64 = 1e-12;

    #[test]
    fn perfect_classifier() {
        let t = [0, 1, 2, 1, 0];
        let (_, s) = classification_metrics(&t, &t, 3).unwrap();
        assert_eq!((s.oa, s.sensitivity, s.ppv, s.f1), (1.0, 1.0, 1.0, 1.0));
    }

    #[test]
    fn hand_confusion_example() {
        let (counts, s) = classification_metrics(&[0, 1, 1, 1], &[0, 0, 1, 1], 2).unwrap();
        assert_eq!(counts.per_class[0], ClassCounts { tp: 1, fp: 0, fn_: 1, tn: 2 });
        assert_eq!(counts.per_class[1], ClassCounts { tp: 2, fp: 1, fn_: 0, tn: 1 });
        assert!((s.oa - 0.75).abs() < EPS);
        assert!((s.sensitivity - 0.75).abs() < EPS);
        assert!((s.ppv - 5.0 / 6.0).abs() < EPS);
        let f1 = 2.0 * (0.75 * 5.0 / 6.0) / (0.75 + 5.0 / 6.0);
        assert!((s.f1 - f1).abs() < EPS);
        assert!((s.f1 - 0.7895).abs() < 1e-4);
    }

    #[test]
    fn constant_predictor() {
        let (_, s) = classification_metrics(&[1, 1, 1, 1], &[0, 0, 1, 1], 2).unwrap();
        assert!((s.oa - 0.5).abs() < EPS);
        // class 0 never predicted: excluded from macro PPV
        assert!((s.ppv - 0.5).abs() < EPS);
        assert!((s.sensitivity - 0.5).abs() < EPS);
    }

    #[test]
    fn binary_mode_matches_textbook() {
        // positive class 1: TP=2, FP=1, FN=0
        let (_, s) = classification_metrics_with(&[0, 1, 1, 1], &[0, 0, 1, 1], 2, Averaging::Positive(1)).unwrap();
        assert!((s.sensitivity - 1.0).abs() < EPS);
        assert!((s.ppv - 2.0 / 3.0).abs() < EPS);
        assert!((s.f1 - 0.8).abs() < EPS);
    }

    #[test]
    fn classification_errors() {
        assert!(matches!(classification_metrics(&[0], &[0, 1], 2), Err(LbseError::LengthMismatch(_))));
        assert!(classification_metrics(&[], &[], 2).is_err());
        assert!(matches!(classification_metrics(&[3], &[0], 2), Err(LbseError::LabelOutOfRange { .. })));
    }

    #[test]
    fn average_precision_examples() {
        assert!((average_precision(&[true, true, true], 3) - 1.0).abs() < EPS);
        assert!((average_precision(&[true, false, true], 3) - 5.0 / 6.0).abs() < EPS);
        assert_eq!(average_precision(&[false, false, true], 2), 0.0);
        assert_eq!(mean_average_precision::<Vec<bool>>(&[], 5), 0.0);
    }

    #[test]
    fn precision_at_k_examples() {
        assert_eq!(precision_at_k(&[true; 5], 5), 1.0);
        assert_eq!(precision_at_k(&[true, false, true, false], 4), 0.5);
        // k beyond the list divides by the list length
        assert!((precision_at_k(&[true, false, true], 10) - 2.0 / 3.0).abs() < EPS);
        assert_eq!(precision_at_k(&[], 3), 0.0);
    }

    #[test]
    fn csv_and_json() {
        let r = MetricsReport {
            oa: 1.0,
            sensitivity: 0.5,
            ppv: 0.25,
            f1: 1.0 / 3.0,
            map: 0.75,
            precision_at_k: vec![(10, 0.9)],
            per_query: None,
        };
        let mut out = Vec::new();
        r.write_csv(&mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        assert!(text.starts_with("metric,value\noa,1\n"));
        assert!(text.contains("precision@10,0.9\n"));
        let back: MetricsReport = serde_json::from_str(&r.to_json().unwrap()).unwrap();
        assert_eq!(back, r);
    }

    proptest! {
        #[test]
        fn map_invariant_to_query_order(seed in any::<u64>(), q in 1usize..20) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let rankings: Vec<Vec<bool>> =
                (0..q).map(|_| (0..15).map(|_| rng.random::<bool>()).collect()).collect();
            let mut rev = rankings.clone();
            rev.reverse();
            prop_assert!((mean_average_precision(&rankings, 10) - mean_average_precision(&rev, 10)).abs() < EPS);
            prop_assert!((mean_precision_at_k(&rankings, 7) - mean_precision_at_k(&rev, 7)).abs() < EPS);
        }

        #[test]
        fn ap_bounds_and_perfect_iff(rel in proptest::collection::vec(any::<bool>(), 0..30), depth in 1usize..40) {
            let ap = average_precision(&rel, depth);
            prop_assert!((0.0..=1.0).contains(&ap));
            let window = &rel[..depth.min(rel.len())];
            let hits = window.iter().filter(|&&r| r).count();
            let sorted = window.iter().take(hits).all(|&r| r);
            prop_assert_eq!(hits > 0 && sorted, (ap - 1.0).abs() < EPS);
        }

        #[test]
        fn macro_scores_in_unit_interval(
            pairs in proptest::collection::vec((0usize..4, 0usize..4), 1..60)
        ) {
            let (p, t): (Vec<usize>, Vec<usize>) = pairs.into_iter().unzip();
            let (counts, s) = classification_metrics(&p, &t, 4).unwrap();
            for c in &counts.per_class {
                prop_assert_eq!(c.tp + c.fp + c.fn_ + c.tn, t.len());
            }
            for v in [s.oa, s.sensitivity, s.ppv, s.f1] {
                prop_assert!((0.0..=1.0).contains(&v));
            }
        }
    }
}
