//! Accuracy stratified over difficulty-score bins.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::ingest::ClassifierRef;

use super::confusion::correctness;
use super::{DifficultyScore, MetricsError};

/// Tolerance for matching a value against a discrete level.
const DISCRETE_TOLERANCE: f64 = 1e-9;

/// How to carve a difficulty score into bins.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum BinSpec {
    /// `n` equal-width bins spanning `[lo, hi]`.
    Uniform { lo: f64, hi: f64, n: usize },
    /// One bin per listed level; values must match a level exactly.
    Discrete { levels: Vec<f64> },
    /// `n` equal-population bins with edges at sample quantiles.
    Quantile { n: usize },
}

/// A resolved bin: closed-open interval except the last, which is closed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BinInfo {
    pub lo: f64,
    pub hi: f64,
    pub n_samples: usize,
}

/// Min/mean/max of per-classifier accuracy inside one bin.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BandStat {
    pub min: f64,
    pub mean: f64,
    pub max: f64,
}

/// Accuracy per bin per classifier, plus the cross-classifier band.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StratifiedAccuracy {
    pub metric: String,
    pub bins: Vec<BinInfo>,
    /// Classifier id -> per-bin accuracy, `None` where the bin is empty.
    pub per_classifier: BTreeMap<String, Vec<Option<f64>>>,
    /// Per-bin band across classifiers, `None` where the bin is empty.
    pub band: Vec<Option<BandStat>>,
}

impl BinSpec {
    fn validate(&self) -> Result<(), MetricsError> {
        match self {
            BinSpec::Uniform { lo, hi, n } => {
                if !lo.is_finite() || !hi.is_finite() {
                    return Err(MetricsError::MalformedBins(
                        "uniform bin edges must be finite".into(),
                    ));
                }
                if hi <= lo {
                    return Err(MetricsError::MalformedBins(format!(
                        "uniform bins need hi > lo, got lo={lo} hi={hi}"
                    )));
                }
                if *n == 0 {
                    return Err(MetricsError::MalformedBins(
                        "uniform bins need n >= 1".into(),
                    ));
                }
            }
            BinSpec::Discrete { levels } => {
                if levels.is_empty() {
                    return Err(MetricsError::MalformedBins(
                        "discrete bins need at least one level".into(),
                    ));
                }
                if levels.iter().any(|l| !l.is_finite()) {
                    return Err(MetricsError::MalformedBins(
                        "discrete levels must be finite".into(),
                    ));
                }
                if levels.windows(2).any(|w| w[1] <= w[0]) {
                    return Err(MetricsError::MalformedBins(
                        "discrete levels must be strictly increasing".into(),
                    ));
                }
            }
            BinSpec::Quantile { n } => {
                if *n == 0 {
                    return Err(MetricsError::MalformedBins(
                        "quantile bins need n >= 1".into(),
                    ));
                }
            }
        }
        Ok(())
    }
}

/// Linear-interpolation quantile of a sorted slice, q in [0, 1].
fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let pos = q * (n - 1) as f64;
    let lo = pos.floor() as usize;
    if lo + 1 >= n {
        return sorted[n - 1];
    }
    let frac = pos - lo as f64;
    sorted[lo] + frac * (sorted[lo + 1] - sorted[lo])
}

/// Resolved edges: `n + 1` boundaries for `n` bins.
fn resolve_edges(spec: &BinSpec, values: &[f64]) -> Result<Vec<f64>, MetricsError> {
    spec.validate()?;
    match spec {
        BinSpec::Uniform { lo, hi, n } => {
            let width = (hi - lo) / *n as f64;
            let mut edges: Vec<f64> = (0..*n).map(|j| lo + j as f64 * width).collect();
            edges.push(*hi);
            Ok(edges)
        }
        BinSpec::Discrete { .. } => unreachable!("discrete bins bypass edge resolution"),
        BinSpec::Quantile { n } => {
            let mut sorted = values.to_vec();
            sorted.sort_by(|a, b| a.partial_cmp(b).expect("scores are finite"));
            let mut edges = Vec::with_capacity(n + 1);
            for j in 0..=*n {
                edges.push(quantile_sorted(&sorted, j as f64 / *n as f64));
            }
            Ok(edges)
        }
    }
}

/// Bin index for `v` given edges: largest j with edges[j] <= v, capped at n-1.
fn assign(edges: &[f64], v: f64) -> usize {
    let n = edges.len() - 1;
    let j = edges[1..n].partition_point(|e| *e <= v);
    j.min(n - 1)
}

fn assign_discrete(levels: &[f64], v: f64) -> Result<usize, MetricsError> {
    for (j, level) in levels.iter().enumerate() {
        if (v - level).abs() <= DISCRETE_TOLERANCE {
            return Ok(j);
        }
    }
    Err(MetricsError::MalformedBins(format!(
        "value {v} matches no discrete level"
    )))
}

/// Stratify each classifier's accuracy over bins of the difficulty score.
///
/// All classifiers must come from the frame the score was computed on. Bins
/// are half-open `[lo, hi)` except the last, which is closed. Empty bins
/// yield `None` entries rather than an error.
pub fn stratify(
    score: &DifficultyScore,
    classifiers: &[ClassifierRef<'_>],
    spec: Option<&BinSpec>,
) -> Result<StratifiedAccuracy, MetricsError> {
    if classifiers.is_empty() {
        return Err(MetricsError::EmptyGroup);
    }
    let first = classifiers[0];
    for c in &classifiers[1..] {
        if !first.same_frame(c) {
            return Err(MetricsError::FrameMismatch);
        }
    }
    let values = score.values();
    if values.len() != first.frame().n_samples() {
        return Err(MetricsError::ScoreLength {
            expected: first.frame().n_samples(),
            found: values.len(),
        });
    }
    let spec = spec.unwrap_or_else(|| score.default_bins());

    // Per-sample bin assignment.
    let (assignments, bins): (Vec<usize>, Vec<BinInfo>) = match spec {
        BinSpec::Discrete { levels } => {
            spec.validate()?;
            let assignments = values
                .iter()
                .map(|v| assign_discrete(levels, *v))
                .collect::<Result<Vec<_>, _>>()?;
            let mut counts = vec![0usize; levels.len()];
            for &j in &assignments {
                counts[j] += 1;
            }
            let bins = levels
                .iter()
                .zip(&counts)
                .map(|(l, c)| BinInfo { lo: *l, hi: *l, n_samples: *c })
                .collect();
            (assignments, bins)
        }
        _ => {
            let edges = resolve_edges(spec, values)?;
            let n_bins = edges.len() - 1;
            let assignments: Vec<usize> = values.iter().map(|v| assign(&edges, *v)).collect();
            let mut counts = vec![0usize; n_bins];
            for &j in &assignments {
                counts[j] += 1;
            }
            let bins = (0..n_bins)
                .map(|j| BinInfo { lo: edges[j], hi: edges[j + 1], n_samples: counts[j] })
                .collect();
            (assignments, bins)
        }
    };
    let n_bins = bins.len();

    let mut per_classifier = BTreeMap::new();
    for c in classifiers {
        let bits = correctness(*c);
        let mut hits = vec![0usize; n_bins];
        let mut totals = vec![0usize; n_bins];
        for (i, &j) in assignments.iter().enumerate() {
            totals[j] += 1;
            if bits.bits()[i] {
                hits[j] += 1;
            }
        }
        let accs: Vec<Option<f64>> = (0..n_bins)
            .map(|j| (totals[j] > 0).then(|| hits[j] as f64 / totals[j] as f64))
            .collect();
        per_classifier.insert(c.id().to_string(), accs);
    }

    let band = (0..n_bins)
        .map(|j| {
            let mut min = f64::INFINITY;
            let mut max = f64::NEG_INFINITY;
            let mut sum = 0.0;
            let mut count = 0usize;
            for accs in per_classifier.values() {
                if let Some(a) = accs[j] {
                    min = min.min(a);
                    max = max.max(a);
                    sum += a;
                    count += 1;
                }
            }
            (count > 0).then(|| BandStat { min, mean: sum / count as f64, max })
        })
        .collect();

    Ok(StratifiedAccuracy {
        metric: score.metric().as_str().to_string(),
        bins,
        per_classifier,
        band,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{build_frame, LabelSpace, PredictionSet};
    use crate::metrics::{machine_confidence, DifficultyMetric};
    use std::collections::BTreeMap as Map;

    fn soft_frame(rows: Vec<(&str, Vec<f64>)>, truth: Vec<(&str, usize)>) -> crate::ingest::EvalFrame {
        let space = LabelSpace::new(vec!["a".into(), "b".into()]).unwrap();
        let truth: Map<String, usize> =
            truth.into_iter().map(|(s, l)| (s.to_string(), l)).collect();
        let rows: Map<String, Vec<f64>> =
            rows.into_iter().map(|(s, v)| (s.to_string(), v)).collect();
        let set = PredictionSet::soft("m", rows, space.k()).unwrap();
        build_frame(space, truth, vec![set], vec![]).unwrap()
    }

    #[test]
    fn uniform_assignment_is_half_open_with_closed_last() {
        let edges = vec![0.0, 0.25, 0.5, 0.75, 1.0];
        assert_eq!(assign(&edges, 0.0), 0);
        assert_eq!(assign(&edges, 0.25), 1);
        assert_eq!(assign(&edges, 0.4999), 1);
        assert_eq!(assign(&edges, 0.75), 3);
        assert_eq!(assign(&edges, 1.0), 3);
        // Out-of-range values clamp to the end bins.
        assert_eq!(assign(&edges, -5.0), 0);
        assert_eq!(assign(&edges, 5.0), 3);
    }

    #[test]
    fn quantile_edges_interpolate() {
        let vals = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(quantile_sorted(&vals, 0.0), 1.0);
        assert_eq!(quantile_sorted(&vals, 1.0), 4.0);
        assert_eq!(quantile_sorted(&vals, 0.5), 2.5);
        assert_eq!(quantile_sorted(&vals, 0.25), 1.75);
    }

    #[test]
    fn stratify_splits_accuracy_by_confidence() {
        // Low-confidence samples wrong, high-confidence right.
        let frame = soft_frame(
            vec![
                ("s1", vec![0.55, 0.45]),
                ("s2", vec![0.60, 0.40]),
                ("s3", vec![0.95, 0.05]),
                ("s4", vec![0.99, 0.01]),
            ],
            vec![("s1", 1), ("s2", 1), ("s3", 0), ("s4", 0)],
        );
        let m = frame.machines().next().unwrap();
        let score = machine_confidence(m).unwrap();
        let spec = BinSpec::Uniform { lo: 0.5, hi: 1.0, n: 2 };
        let strat = stratify(&score, &[m], Some(&spec)).unwrap();
        assert_eq!(strat.metric, "machine_confidence");
        assert_eq!(strat.bins.len(), 2);
        assert_eq!(strat.bins[0].n_samples, 2);
        assert_eq!(strat.bins[1].n_samples, 2);
        let accs = &strat.per_classifier["m"];
        assert_eq!(accs[0], Some(0.0));
        assert_eq!(accs[1], Some(1.0));
        let band = strat.band[1].unwrap();
        assert_eq!(band.min, 1.0);
        assert_eq!(band.mean, 1.0);
        assert_eq!(band.max, 1.0);
    }

    #[test]
    fn empty_bins_are_none() {
        let frame = soft_frame(
            vec![("s1", vec![0.9, 0.1]), ("s2", vec![0.95, 0.05])],
            vec![("s1", 0), ("s2", 0)],
        );
        let m = frame.machines().next().unwrap();
        let score = machine_confidence(m).unwrap();
        let strat = stratify(&score, &[m], None).unwrap();
        // Default confidence bins span [0, 1] in 10 steps; only the last is hit.
        assert_eq!(strat.bins.len(), 10);
        assert_eq!(strat.per_classifier["m"][0], None);
        assert!(strat.band[0].is_none());
        assert_eq!(strat.per_classifier["m"][9], Some(1.0));
    }

    #[test]
    fn discrete_bins_reject_off_level_values() {
        let score = DifficultyScore::new(
            DifficultyMetric::HumanAgreement,
            vec![0.5, 0.30000001],
            BinSpec::Discrete { levels: vec![0.0, 0.5, 1.0] },
        );
        let frame = soft_frame(
            vec![("s1", vec![0.9, 0.1]), ("s2", vec![0.95, 0.05])],
            vec![("s1", 0), ("s2", 0)],
        );
        let m = frame.machines().next().unwrap();
        let err = stratify(&score, &[m], None).unwrap_err();
        assert!(matches!(err, MetricsError::MalformedBins(_)));
    }

    #[test]
    fn malformed_specs_are_rejected() {
        let frame = soft_frame(vec![("s1", vec![0.9, 0.1])], vec![("s1", 0)]);
        let m = frame.machines().next().unwrap();
        let score = machine_confidence(m).unwrap();
        for spec in [
            BinSpec::Uniform { lo: 1.0, hi: 0.0, n: 4 },
            BinSpec::Uniform { lo: 0.0, hi: 1.0, n: 0 },
            BinSpec::Quantile { n: 0 },
            BinSpec::Discrete { levels: vec![] },
            BinSpec::Discrete { levels: vec![0.5, 0.5] },
        ] {
            assert!(stratify(&score, &[m], Some(&spec)).is_err());
        }
    }

    #[test]
    fn quantile_bins_balance_population() {
        let frame = soft_frame(
            vec![
                ("s1", vec![0.51, 0.49]),
                ("s2", vec![0.62, 0.38]),
                ("s3", vec![0.73, 0.27]),
                ("s4", vec![0.84, 0.16]),
                ("s5", vec![0.95, 0.05]),
                ("s6", vec![0.99, 0.01]),
            ],
            vec![("s1", 0), ("s2", 0), ("s3", 0), ("s4", 0), ("s5", 0), ("s6", 0)],
        );
        let m = frame.machines().next().unwrap();
        let score = machine_confidence(m).unwrap();
        let spec = BinSpec::Quantile { n: 3 };
        let strat = stratify(&score, &[m], Some(&spec)).unwrap();
        assert_eq!(strat.bins.len(), 3);
        assert_eq!(strat.bins.iter().map(|b| b.n_samples).sum::<usize>(), 6);
        assert_eq!(strat.bins[0].n_samples, 2);
        assert_eq!(strat.bins[1].n_samples, 2);
        assert_eq!(strat.bins[2].n_samples, 2);
    }

    #[test]
    fn score_length_must_match_frame() {
        let frame = soft_frame(vec![("s1", vec![0.9, 0.1])], vec![("s1", 0)]);
        let m = frame.machines().next().unwrap();
        let score = DifficultyScore::new(
            DifficultyMetric::MachineConfidence,
            vec![0.9, 0.8],
            BinSpec::Uniform { lo: 0.0, hi: 1.0, n: 10 },
        );
        assert!(matches!(
            stratify(&score, &[m], None),
            Err(MetricsError::ScoreLength { .. })
        ));
    }
}
