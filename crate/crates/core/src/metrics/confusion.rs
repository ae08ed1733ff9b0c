//! Accuracy, confusion matrices, error-restricted pair aggregation, and
//! the easy/hard quadrant split.

use serde::{Deserialize, Serialize};

use super::{ConfusionMatrix, Correctness, DifficultyScore, MetricsError};
use crate::ingest::ClassifierRef;

/// What the confusion rows are indexed by.
#[derive(Clone, Copy)]
pub enum Reference<'a> {
    /// Clean labels.
    Truth,
    /// Another classifier's (hard) predictions.
    Classifier(ClassifierRef<'a>),
}

/// Which samples enter an error-restricted pair confusion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum ErrorFilter {
    /// Both members wrong (the default reading of "incorrect predictions").
    #[default]
    Both,
    /// The row member (a) wrong.
    Row,
    /// At least one member wrong.
    Either,
}

impl ErrorFilter {
    pub fn as_str(self) -> &'static str {
        match self {
            ErrorFilter::Both => "both",
            ErrorFilter::Row => "row",
            ErrorFilter::Either => "either",
        }
    }
}

/// Fraction of samples where the prediction equals the clean label.
pub fn accuracy(classifier: ClassifierRef<'_>) -> f64 {
    let truth = classifier.frame().truth();
    let hits = classifier
        .hard()
        .iter()
        .zip(truth)
        .filter(|(p, y)| p == y)
        .count();
    hits as f64 / truth.len() as f64
}

/// Per-sample correctness bits against clean truth.
pub fn correctness(classifier: ClassifierRef<'_>) -> Correctness {
    let truth = classifier.frame().truth();
    Correctness {
        classifier_id: classifier.id().to_string(),
        bits: classifier
            .hard()
            .iter()
            .zip(truth)
            .map(|(p, y)| p == y)
            .collect(),
    }
}

/// Confusion of `classifier` against truth or another classifier's
/// predictions, optionally restricted to samples where `filter` is true.
pub fn confusion(
    classifier: ClassifierRef<'_>,
    reference: Reference<'_>,
    filter: Option<&[bool]>,
) -> Result<ConfusionMatrix, MetricsError> {
    let frame = classifier.frame();
    let n = frame.n_samples();
    let k = frame.k();
    let ref_labels: &[usize] = match reference {
        Reference::Truth => frame.truth(),
        Reference::Classifier(other) => {
            if !classifier.same_frame(&other) {
                return Err(MetricsError::FrameMismatch);
            }
            other.hard()
        }
    };
    if let Some(f) = filter {
        if f.len() != n {
            return Err(MetricsError::FilterLength {
                expected: n,
                found: f.len(),
            });
        }
    }
    let mut counts = vec![0u64; k * k];
    for i in 0..n {
        if filter.is_none_or(|f| f[i]) {
            counts[ref_labels[i] * k + classifier.hard()[i]] += 1;
        }
    }
    let m = ConfusionMatrix::from_counts(k, counts);
    if m.n_samples() == 0 {
        return Err(MetricsError::EmptySelection);
    }
    Ok(m)
}

/// Aggregated pair confusion restricted to prediction errors.
///
/// For every ordered pair (a, b) with distinct ids, counts[p][q] tallies
/// samples passing `filter` (w.r.t. clean truth) with p = a's prediction
/// and q = b's prediction. Counts are summed over all pairs first and
/// normalized once at the end.
pub fn group_error_confusion(
    group_a: &[ClassifierRef<'_>],
    group_b: &[ClassifierRef<'_>],
    filter: ErrorFilter,
) -> Result<ConfusionMatrix, MetricsError> {
    if group_a.is_empty() || group_b.is_empty() {
        return Err(MetricsError::EmptyGroup);
    }
    let frame = group_a[0].frame();
    for c in group_a.iter().chain(group_b) {
        if !group_a[0].same_frame(c) {
            return Err(MetricsError::FrameMismatch);
        }
    }
    let truth = frame.truth();
    let k = frame.k();
    let mut counts = vec![0u64; k * k];
    let mut pairs = 0usize;
    for a in group_a {
        let a_hard = a.hard();
        for b in group_b {
            if a.id() == b.id() {
                continue;
            }
            pairs += 1;
            let b_hard = b.hard();
            for i in 0..truth.len() {
                let a_wrong = a_hard[i] != truth[i];
                let b_wrong = b_hard[i] != truth[i];
                let keep = match filter {
                    ErrorFilter::Both => a_wrong && b_wrong,
                    ErrorFilter::Row => a_wrong,
                    ErrorFilter::Either => a_wrong || b_wrong,
                };
                if keep {
                    counts[a_hard[i] * k + b_hard[i]] += 1;
                }
            }
        }
    }
    if pairs == 0 {
        return Err(MetricsError::NoPairs);
    }
    let m = ConfusionMatrix::from_counts(k, counts);
    if m.n_samples() == 0 {
        return Err(MetricsError::EmptySelection);
    }
    Ok(m)
}

/// Confusions of one classifier split by joint machine/human difficulty.
///
/// Quadrant letters are machine-first: E = score at or above its
/// threshold (easy), H = below. Empty quadrants are `None`, not errors.
#[derive(Debug, Clone)]
pub struct QuadrantConfusions {
    pub ee: Option<ConfusionMatrix>,
    pub eh: Option<ConfusionMatrix>,
    pub he: Option<ConfusionMatrix>,
    pub hh: Option<ConfusionMatrix>,
}

impl QuadrantConfusions {
    /// (name, matrix) in fixed EE, EH, HE, HH order.
    pub fn named(&self) -> [(&'static str, &Option<ConfusionMatrix>); 4] {
        [
            ("ee", &self.ee),
            ("eh", &self.eh),
            ("he", &self.he),
            ("hh", &self.hh),
        ]
    }
}

pub fn quadrant_confusions(
    classifier: ClassifierRef<'_>,
    machine_diff: &DifficultyScore,
    human_diff: &DifficultyScore,
    thresholds: (f64, f64),
) -> Result<QuadrantConfusions, MetricsError> {
    let n = classifier.frame().n_samples();
    for score in [machine_diff, human_diff] {
        if score.values().len() != n {
            return Err(MetricsError::ScoreLength {
                expected: n,
                found: score.values().len(),
            });
        }
    }
    let (theta_m, theta_h) = thresholds;
    let build = |pick: &dyn Fn(usize) -> bool| -> Result<Option<ConfusionMatrix>, MetricsError> {
        let mask: Vec<bool> = (0..n).map(pick).collect();
        match confusion(classifier, Reference::Truth, Some(&mask)) {
            Ok(m) => Ok(Some(m)),
            Err(MetricsError::EmptySelection) => Ok(None),
            Err(e) => Err(e),
        }
    };
    let me = machine_diff.values();
    let he = human_diff.values();
    Ok(QuadrantConfusions {
        ee: build(&|i| me[i] >= theta_m && he[i] >= theta_h)?,
        eh: build(&|i| me[i] >= theta_m && he[i] < theta_h)?,
        he: build(&|i| me[i] < theta_m && he[i] >= theta_h)?,
        hh: build(&|i| me[i] < theta_m && he[i] < theta_h)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{build_frame, LabelSpace, PredictionSet};
    use std::collections::BTreeMap;

    fn hard_set(id: &str, labels: &[(&str, usize)], k: usize) -> PredictionSet {
        let rows: BTreeMap<String, usize> = labels
            .iter()
            .map(|(s, l)| (s.to_string(), *l))
            .collect();
        PredictionSet::hard(id, rows, k).unwrap()
    }

    fn frame3(predictions: Vec<PredictionSet>) -> crate::ingest::EvalFrame {
        // truth: s1->0, s2->0, s3->1, s4->2
        let space =
            LabelSpace::new(vec!["a".into(), "b".into(), "c".into()]).unwrap();
        let truth: BTreeMap<String, usize> = [("s1", 0), ("s2", 0), ("s3", 1), ("s4", 2)]
            .into_iter()
            .map(|(k, v)| (k.to_string(), v))
            .collect();
        build_frame(space, truth, predictions, vec![]).unwrap()
    }

    #[test]
    fn accuracy_counts_matches() {
        let m = hard_set("m", &[("s1", 0), ("s2", 1), ("s3", 1), ("s4", 2)], 3);
        let frame = frame3(vec![m]);
        assert_eq!(accuracy(frame.classifier("m").unwrap()), 0.75);
        let c = correctness(frame.classifier("m").unwrap());
        assert_eq!(c.bits(), [true, false, true, true]);
        assert_eq!(c.n_correct(), 3);
    }

    #[test]
    fn confusion_hand_case() {
        // truth [0,0,1,2], preds [0,1,1,2] -> row0 [.5,.5,0], row1 [0,1,0], row2 [0,0,1]
        let m = hard_set("m", &[("s1", 0), ("s2", 1), ("s3", 1), ("s4", 2)], 3);
        let frame = frame3(vec![m]);
        let c = confusion(frame.classifier("m").unwrap(), Reference::Truth, None).unwrap();
        assert_eq!(c.cells(), [0.5, 0.5, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0]);
        assert_eq!(c.n_samples(), 4);
        assert_eq!(c.count(0, 1), 1);
    }

    #[test]
    fn confusion_vs_self_is_identity() {
        let m = hard_set("m", &[("s1", 2), ("s2", 1), ("s3", 1), ("s4", 0)], 3);
        let frame = frame3(vec![m]);
        let mr = frame.classifier("m").unwrap();
        let c = confusion(mr, Reference::Classifier(mr), None).unwrap();
        for p in 0..3 {
            for q in 0..3 {
                let want = if p == q && !c.row_is_empty(p) { 1.0 } else { 0.0 };
                assert_eq!(c.cell(p, q), want);
            }
        }
    }

    #[test]
    fn confusion_rows_stochastic_or_empty() {
        let m = hard_set("m", &[("s1", 1), ("s2", 1), ("s3", 0), ("s4", 0)], 3);
        let frame = frame3(vec![m]);
        let c = confusion(frame.classifier("m").unwrap(), Reference::Truth, None).unwrap();
        for p in 0..3 {
            let sum: f64 = (0..3).map(|q| c.cell(p, q)).sum();
            if c.row_is_empty(p) {
                assert_eq!(sum, 0.0);
            } else {
                assert!((sum - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn empty_filter_is_error() {
        let m = hard_set("m", &[("s1", 0), ("s2", 0), ("s3", 1), ("s4", 2)], 3);
        let frame = frame3(vec![m]);
        let mask = vec![false; 4];
        assert_eq!(
            confusion(frame.classifier("m").unwrap(), Reference::Truth, Some(&mask)),
            Err(MetricsError::EmptySelection)
        );
    }

    #[test]
    fn group_error_confusion_hand_case() {
        // a wrong on s1 (pred 1) and s3 (pred 2); b wrong on s1 (pred 1), s3 (pred 2)
        // plus s2 (pred 2, a right there)
        let a = hard_set("a", &[("s1", 1), ("s2", 0), ("s3", 2), ("s4", 2)], 3);
        let b = hard_set("b", &[("s1", 1), ("s2", 2), ("s3", 2), ("s4", 2)], 3);
        let frame = frame3(vec![a, b]);
        let ar = frame.classifier("a").unwrap();
        let br = frame.classifier("b").unwrap();
        let c = group_error_confusion(&[ar], &[br], ErrorFilter::Both).unwrap();
        // both wrong on s1: (1,1); on s3: (2,2)
        assert_eq!(c.n_samples(), 2);
        assert_eq!(c.cell(1, 1), 1.0);
        assert_eq!(c.cell(2, 2), 1.0);
        assert!(c.row_is_empty(0));

        // either-wrong adds s2 with (0, 2)
        let c = group_error_confusion(&[ar], &[br], ErrorFilter::Either).unwrap();
        assert_eq!(c.n_samples(), 3);
        assert_eq!(c.cell(0, 2), 1.0);

        // row-wrong: a wrong on s1, s3 only
        let c = group_error_confusion(&[ar], &[br], ErrorFilter::Row).unwrap();
        assert_eq!(c.n_samples(), 2);
    }

    #[test]
    fn group_error_confusion_requires_pairs() {
        let a = hard_set("a", &[("s1", 1), ("s2", 0), ("s3", 0), ("s4", 0)], 3);
        let frame = frame3(vec![a]);
        let ar = frame.classifier("a").unwrap();
        assert_eq!(
            group_error_confusion(&[ar], &[ar], ErrorFilter::Both),
            Err(MetricsError::NoPairs)
        );
    }

    #[test]
    fn identical_errors_concentrate_on_diagonal() {
        let a = hard_set("a", &[("s1", 1), ("s2", 2), ("s3", 0), ("s4", 2)], 3);
        let b = hard_set("b", &[("s1", 1), ("s2", 2), ("s3", 0), ("s4", 2)], 3);
        let frame = frame3(vec![a, b]);
        let refs: Vec<_> = frame.machines().collect();
        let c = group_error_confusion(&refs, &refs, ErrorFilter::Both).unwrap();
        let off_mass: f64 = (0..3)
            .flat_map(|p| (0..3).map(move |q| (p, q)))
            .filter(|&(p, q)| p != q)
            .map(|(p, q)| c.cell(p, q))
            .sum();
        assert_eq!(off_mass, 0.0);
        assert!(c.n_samples() > 0);
    }

    #[test]
    fn quadrants_partition_samples() {
        let m = hard_set("m", &[("s1", 0), ("s2", 1), ("s3", 1), ("s4", 0)], 3);
        let frame = frame3(vec![m]);
        let mr = frame.classifier("m").unwrap();
        let md = DifficultyScore::new(
            super::super::DifficultyMetric::MachineConfidence,
            vec![0.9, 0.9, 0.1, 0.1],
            test_bins(),
        );
        let hd = DifficultyScore::new(
            super::super::DifficultyMetric::HumanAgreement,
            vec![0.9, 0.1, 0.9, 0.1],
            test_bins(),
        );
        let q = quadrant_confusions(mr, &md, &hd, (0.5, 0.5)).unwrap();
        let total: u64 = q
            .named()
            .iter()
            .filter_map(|(_, m)| m.as_ref())
            .map(|m| m.n_samples())
            .sum();
        assert_eq!(total, 4);
        for (_, m) in q.named() {
            assert_eq!(m.as_ref().map(|m| m.n_samples()), Some(1));
        }
    }

    #[test]
    fn quadrant_thresholds_at_minimum_put_all_in_ee() {
        let m = hard_set("m", &[("s1", 0), ("s2", 1), ("s3", 1), ("s4", 0)], 3);
        let frame = frame3(vec![m]);
        let mr = frame.classifier("m").unwrap();
        let md = DifficultyScore::new(
            super::super::DifficultyMetric::MachineConfidence,
            vec![0.9, 0.8, 0.7, 0.6],
            test_bins(),
        );
        let hd = DifficultyScore::new(
            super::super::DifficultyMetric::HumanAgreement,
            vec![0.5, 0.4, 0.3, 0.2],
            test_bins(),
        );
        let q = quadrant_confusions(mr, &md, &hd, (0.6, 0.2)).unwrap();
        assert_eq!(q.ee.as_ref().unwrap().n_samples(), 4);
        assert!(q.eh.is_none() && q.he.is_none() && q.hh.is_none());
        let unfiltered = confusion(mr, Reference::Truth, None).unwrap();
        assert_eq!(q.ee.unwrap(), unfiltered);
    }

    fn test_bins() -> super::super::BinSpec {
        super::super::BinSpec::Uniform {
            lo: 0.0,
            hi: 1.0,
            n: 10,
        }
    }
}
