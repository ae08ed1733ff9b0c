//! Per-sample difficulty scores and the machine/human distribution gap.

use serde::{Deserialize, Serialize};

use super::{BinSpec, DifficultyMetric, DifficultyScore, MetricsError};
use crate::ingest::{ClassifierKind, ClassifierRef};

/// Norm for the sample-level distribution difference.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum SdNorm {
    #[default]
    L1,
    L2,
}

impl SdNorm {
    pub fn as_str(self) -> &'static str {
        match self {
            SdNorm::L1 => "l1",
            SdNorm::L2 => "l2",
        }
    }
}

/// Per-sample distribution differences plus their mean.
#[derive(Debug, Clone, PartialEq)]
pub struct SdResult {
    pub values: Vec<f64>,
    pub mean: f64,
    pub norm: SdNorm,
}

fn require_same_frame(group: &[ClassifierRef<'_>]) -> Result<(), MetricsError> {
    for c in group.iter().skip(1) {
        if !group[0].same_frame(c) {
            return Err(MetricsError::FrameMismatch);
        }
    }
    Ok(())
}

fn require_humans(group: &[ClassifierRef<'_>]) -> Result<(), MetricsError> {
    for c in group {
        if c.kind() != ClassifierKind::Human {
            return Err(MetricsError::KindMismatch {
                id: c.id().to_string(),
                need: "an annotation set",
            });
        }
    }
    Ok(())
}

/// Max predicted probability per sample. Values sit in [1/K, 1] exactly.
pub fn machine_confidence(
    classifier: ClassifierRef<'_>,
) -> Result<DifficultyScore, MetricsError> {
    let conf = classifier
        .confidence()
        .ok_or_else(|| MetricsError::KindMismatch {
            id: classifier.id().to_string(),
            need: "a soft prediction set",
        })?;
    Ok(DifficultyScore::new(
        DifficultyMetric::MachineConfidence,
        conf.to_vec(),
        BinSpec::Uniform {
            lo: 0.0,
            hi: 1.0,
            n: 10,
        },
    ))
}

/// Fraction of group members (optionally excluding one id) whose
/// prediction equals the clean label; exact multiples of 1/k.
///
/// The metric is tagged human when every member is an annotation set,
/// machine otherwise. Default bins are the k+1 discrete levels j/k.
pub fn agreement(
    group: &[ClassifierRef<'_>],
    exclude: Option<&str>,
) -> Result<DifficultyScore, MetricsError> {
    if group.is_empty() {
        return Err(MetricsError::EmptyGroup);
    }
    require_same_frame(group)?;
    let members: Vec<&ClassifierRef<'_>> = group
        .iter()
        .filter(|c| Some(c.id()) != exclude)
        .collect();
    if members.is_empty() {
        return Err(MetricsError::ExclusionEmptiesGroup {
            exclude: exclude.unwrap_or_default().to_string(),
        });
    }
    let frame = group[0].frame();
    let truth = frame.truth();
    let k = members.len();
    let mut correct = vec![0usize; frame.n_samples()];
    for c in &members {
        for (i, (&p, &y)) in c.hard().iter().zip(truth).enumerate() {
            if p == y {
                correct[i] += 1;
            }
        }
    }
    let values: Vec<f64> = correct.iter().map(|&c| c as f64 / k as f64).collect();
    let all_human = members.iter().all(|c| c.kind() == ClassifierKind::Human);
    let metric = if all_human {
        DifficultyMetric::HumanAgreement
    } else {
        DifficultyMetric::MachineAgreement
    };
    let levels: Vec<f64> = (0..=k).map(|j| j as f64 / k as f64).collect();
    Ok(DifficultyScore::new(
        metric,
        values,
        BinSpec::Discrete { levels },
    ))
}

/// Natural-log entropy of the empirical annotation distribution per
/// sample; 0 log 0 = 0. Values sit in [0, ln K].
pub fn human_entropy(
    humans: &[ClassifierRef<'_>],
) -> Result<DifficultyScore, MetricsError> {
    if humans.is_empty() {
        return Err(MetricsError::EmptyGroup);
    }
    require_same_frame(humans)?;
    require_humans(humans)?;
    let frame = humans[0].frame();
    let n = frame.n_samples();
    let k = frame.k();
    let ln_k = (k as f64).ln();
    let total = humans.len() as f64;
    let mut values = Vec::with_capacity(n);
    let mut counts = vec![0usize; k];
    for i in 0..n {
        counts.iter_mut().for_each(|c| *c = 0);
        for h in humans {
            counts[h.hard()[i]] += 1;
        }
        let mut ent = 0.0;
        for &c in &counts {
            if c > 0 {
                let p = c as f64 / total;
                ent -= p * p.ln();
            }
        }
        // clamp floating spill at the analytic bounds
        values.push(ent.clamp(0.0, ln_k));
    }
    Ok(DifficultyScore::new(
        DifficultyMetric::HumanEntropy,
        values,
        BinSpec::Uniform {
            lo: 0.0,
            hi: ln_k,
            n: 10,
        },
    ))
}

/// Mean seconds spent per sample across annotators.
pub fn mean_time(humans: &[ClassifierRef<'_>]) -> Result<DifficultyScore, MetricsError> {
    if humans.is_empty() {
        return Err(MetricsError::EmptyGroup);
    }
    require_same_frame(humans)?;
    require_humans(humans)?;
    let n = humans[0].frame().n_samples();
    let mut sums = vec![0.0; n];
    for h in humans {
        let times = h.times().ok_or_else(|| MetricsError::MissingTimes {
            id: h.id().to_string(),
        })?;
        for (s, &t) in sums.iter_mut().zip(times) {
            *s += t;
        }
    }
    let k = humans.len() as f64;
    let values: Vec<f64> = sums.iter().map(|s| s / k).collect();
    Ok(DifficultyScore::new(
        DifficultyMetric::AnnotationTime,
        values,
        BinSpec::Quantile { n: 10 },
    ))
}

/// Distance between the machine's probability vector and the empirical
/// human label distribution, per sample, plus the mean.
///
/// L1 values sit in [0, 2]; L2 in [0, sqrt(2)].
pub fn sample_distribution_diff(
    machine: ClassifierRef<'_>,
    humans: &[ClassifierRef<'_>],
    norm: SdNorm,
) -> Result<SdResult, MetricsError> {
    let soft = machine.soft().ok_or_else(|| MetricsError::KindMismatch {
        id: machine.id().to_string(),
        need: "a soft prediction set",
    })?;
    if humans.is_empty() {
        return Err(MetricsError::EmptyGroup);
    }
    require_humans(humans)?;
    for h in humans {
        if !machine.same_frame(h) {
            return Err(MetricsError::FrameMismatch);
        }
    }
    let frame = machine.frame();
    let n = frame.n_samples();
    let k = frame.k();
    let total = humans.len() as f64;
    let bound = match norm {
        SdNorm::L1 => 2.0,
        SdNorm::L2 => std::f64::consts::SQRT_2,
    };
    let mut values = Vec::with_capacity(n);
    let mut counts = vec![0usize; k];
    for i in 0..n {
        counts.iter_mut().for_each(|c| *c = 0);
        for h in humans {
            counts[h.hard()[i]] += 1;
        }
        let row = &soft[i * k..(i + 1) * k];
        let mut acc = 0.0;
        for (j, &c) in counts.iter().enumerate() {
            let d = row[j] - c as f64 / total;
            match norm {
                SdNorm::L1 => acc += d.abs(),
                SdNorm::L2 => acc += d * d,
            }
        }
        let v = match norm {
            SdNorm::L1 => acc,
            SdNorm::L2 => acc.sqrt(),
        };
        values.push(v.clamp(0.0, bound));
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    Ok(SdResult { values, mean, norm })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{build_frame, AnnotationSet, EvalFrame, LabelSpace, PredictionSet};
    use approx::assert_abs_diff_eq;
    use std::collections::BTreeMap;

    #[allow(clippy::type_complexity)]
    fn frame_with(
        soft: &[(&str, Vec<(&str, Vec<f64>)>)],
        humans: &[(&str, Vec<(&str, usize)>, Option<Vec<(&str, f64)>>)],
        truth: &[(&str, usize)],
        k: usize,
    ) -> EvalFrame {
        let names: Vec<String> = (0..k).map(|j| format!("c{j}")).collect();
        let space = LabelSpace::new(names).unwrap();
        let truth_map: BTreeMap<String, usize> = truth
            .iter()
            .map(|(s, l)| (s.to_string(), *l))
            .collect();
        let machines: Vec<PredictionSet> = soft
            .iter()
            .map(|(id, rows)| {
                let rows: BTreeMap<String, Vec<f64>> = rows
                    .iter()
                    .map(|(s, v)| (s.to_string(), v.clone()))
                    .collect();
                PredictionSet::soft(*id, rows, k).unwrap()
            })
            .collect();
        let annotators: Vec<AnnotationSet> = humans
            .iter()
            .map(|(id, rows, times)| {
                let rows: BTreeMap<String, usize> = rows
                    .iter()
                    .map(|(s, l)| (s.to_string(), *l))
                    .collect();
                let times = times.as_ref().map(|ts| {
                    ts.iter().map(|(s, t)| (s.to_string(), *t)).collect()
                });
                AnnotationSet::new(*id, rows, times, k).unwrap()
            })
            .collect();
        build_frame(space, truth_map, machines, annotators).unwrap()
    }

    #[test]
    fn confidence_is_max_prob() {
        let frame = frame_with(
            &[(
                "m",
                vec![
                    ("s1", vec![0.7, 0.2, 0.1]),
                    ("s2", vec![1.0, 0.0, 0.0]),
                    ("s3", vec![1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0]),
                ],
            )],
            &[],
            &[("s1", 0), ("s2", 0), ("s3", 0)],
            3,
        );
        let score = machine_confidence(frame.classifier("m").unwrap()).unwrap();
        assert_abs_diff_eq!(score.values()[0], 0.7, epsilon = 1e-15);
        assert_eq!(score.values()[1], 1.0);
        assert!(score.values()[2] >= 1.0 / 3.0);
        assert_eq!(score.metric(), DifficultyMetric::MachineConfidence);
    }

    #[test]
    fn agreement_with_exclusion() {
        let frame = frame_with(
            &[],
            &[
                ("a", vec![("s1", 0), ("s2", 1)], None),
                ("b", vec![("s1", 0), ("s2", 0)], None),
                ("c", vec![("s1", 1), ("s2", 0)], None),
            ],
            &[("s1", 0), ("s2", 0)],
            2,
        );
        let all: Vec<_> = frame.humans().collect();
        let score = agreement(&all, None).unwrap();
        assert_eq!(score.values(), [2.0 / 3.0, 2.0 / 3.0]);
        assert_eq!(score.metric(), DifficultyMetric::HumanAgreement);

        // exclude a: on s1, b correct and c wrong -> 0.5; on s2 both correct
        let score = agreement(&all, Some("a")).unwrap();
        assert_eq!(score.values()[0], 0.5);
        assert_eq!(score.values()[1], 1.0);

        let solo: Vec<_> = frame.humans().take(1).collect();
        assert_eq!(
            agreement(&solo, Some("a")),
            Err(MetricsError::ExclusionEmptiesGroup {
                exclude: "a".into()
            })
        );
    }

    #[test]
    fn agreement_levels_are_exact_rationals() {
        let frame = frame_with(
            &[],
            &[
                ("a", vec![("s1", 0)], None),
                ("b", vec![("s1", 0)], None),
                ("c", vec![("s1", 1)], None),
            ],
            &[("s1", 0)],
            2,
        );
        let all: Vec<_> = frame.humans().collect();
        let score = agreement(&all, None).unwrap();
        // exactly the rational 2/3
        assert_eq!(score.values()[0], 2.0 / 3.0);
        match score.default_bins() {
            BinSpec::Discrete { levels } => {
                assert_eq!(levels.as_slice(), [0.0, 1.0 / 3.0, 2.0 / 3.0, 1.0])
            }
            other => panic!("unexpected bins {other:?}"),
        }
    }

    #[test]
    fn entropy_known_values() {
        let frame = frame_with(
            &[],
            &[
                ("a", vec![("s1", 0), ("s2", 0)], None),
                ("b", vec![("s1", 0), ("s2", 1)], None),
            ],
            &[("s1", 0), ("s2", 0)],
            2,
        );
        let all: Vec<_> = frame.humans().collect();
        let score = human_entropy(&all).unwrap();
        assert_eq!(score.values()[0], 0.0);
        assert_abs_diff_eq!(score.values()[1], 2.0_f64.ln(), epsilon = 1e-15);
    }

    #[test]
    fn mean_time_requires_times() {
        let frame = frame_with(
            &[],
            &[
                (
                    "a",
                    vec![("s1", 0), ("s2", 0)],
                    Some(vec![("s1", 2.0), ("s2", 1.0)]),
                ),
                (
                    "b",
                    vec![("s1", 0), ("s2", 1)],
                    Some(vec![("s1", 4.0), ("s2", 2.0)]),
                ),
                ("c", vec![("s1", 0), ("s2", 1)], None),
            ],
            &[("s1", 0), ("s2", 0)],
            2,
        );
        let timed: Vec<_> = frame.humans().take(2).collect();
        let score = mean_time(&timed).unwrap();
        assert_eq!(score.values(), [3.0, 1.5]);

        let all: Vec<_> = frame.humans().collect();
        assert_eq!(
            mean_time(&all),
            Err(MetricsError::MissingTimes { id: "c".into() })
        );
    }

    #[test]
    fn sd_hand_cases() {
        let third = 1.0 / 3.0;
        let frame = frame_with(
            &[(
                "m",
                vec![
                    ("s1", vec![0.5, 0.5, 0.0]),
                    ("s2", vec![1.0, 0.0, 0.0]),
                    ("s3", vec![third, third, third]),
                ],
            )],
            &[
                ("a", vec![("s1", 0), ("s2", 1), ("s3", 0)], None),
                ("b", vec![("s1", 1), ("s2", 1), ("s3", 1)], None),
                ("c", vec![("s1", 1), ("s2", 1), ("s3", 2)], None),
            ],
            &[("s1", 0), ("s2", 0), ("s3", 0)],
            3,
        );
        let m = frame.classifier("m").unwrap();
        let hs: Vec<_> = frame.humans().collect();
        let sd = sample_distribution_diff(m, &hs, SdNorm::L1).unwrap();
        // s1: humans (1/3, 2/3, 0); machine (.5,.5,0) -> |1/6|+|1/6| = 1/3
        assert_abs_diff_eq!(sd.values[0], third, epsilon = 1e-12);
        // s2: humans (0,1,0); machine (1,0,0) -> 2
        assert_abs_diff_eq!(sd.values[1], 2.0, epsilon = 1e-12);
        // s3: humans uniform = machine -> 0
        assert_abs_diff_eq!(sd.values[2], 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(
            sd.mean,
            (sd.values[0] + sd.values[1] + sd.values[2]) / 3.0,
            epsilon = 1e-15
        );

        let sd2 = sample_distribution_diff(m, &hs, SdNorm::L2).unwrap();
        assert!(sd2.values[1] <= std::f64::consts::SQRT_2);
        assert_abs_diff_eq!(sd2.values[1], std::f64::consts::SQRT_2, epsilon = 1e-12);
    }
}
