//! Synthetic populations with analytically known confusion structure.
//!
//! Machines mix a per-sample shared draw (weight rho) with an independent
//! draw from their own confusion row, producing correlated machine errors;
//! humans draw independently. Every classifier reads its own PRNG stream,
//! keyed by id, so adding or removing one never perturbs the others.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::{build_frame, AnnotationSet, EvalFrame, PredictionSet, LabelSpace};
use crate::rng::SeededRng;

/// Row-sum slack for priors and confusion rows.
const SIMPLEX_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("{field}: {detail}")]
    Invalid { field: String, detail: String },
    #[error("unknown classifier id '{id}'")]
    UnknownId { id: String },
    #[error(transparent)]
    Ingest(#[from] crate::ingest::IngestError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MachineSpec {
    pub id: String,
    /// Probability of copying the shared draw instead of an own draw.
    pub shared_error_weight: f64,
    /// Row-stochastic K x K: confusion[p][q] = P(label q | truth p).
    pub confusion: Vec<Vec<f64>>,
    /// Larger values push the soft vector's mass toward the chosen label.
    pub confidence_sharpness: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeModel {
    pub mean_easy: f64,
    pub mean_hard: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HumanSpec {
    pub id: String,
    pub confusion: Vec<Vec<f64>>,
    /// Exponential annotation-time means, keyed on sample hardness.
    /// Omitted -> the annotator reports no times.
    #[serde(default)]
    pub time_model: Option<TimeModel>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PopulationConfig {
    pub k: usize,
    pub n_samples: usize,
    pub seed: u64,
    pub class_prior: Vec<f64>,
    /// Confusion row for the per-sample shared machine draw. Identity when
    /// omitted: the shared draw always equals the truth, so machine errors
    /// stay independent regardless of the mixing weights.
    #[serde(default)]
    pub shared_confusion: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    pub machine_specs: Vec<MachineSpec>,
    #[serde(default)]
    pub human_specs: Vec<HumanSpec>,
}

fn invalid(field: impl Into<String>, detail: impl Into<String>) -> SynthError {
    SynthError::Invalid { field: field.into(), detail: detail.into() }
}

fn check_simplex(field: &str, row: &[f64], k: usize) -> Result<(), SynthError> {
    if row.len() != k {
        return Err(invalid(field, format!("expected {k} entries, got {}", row.len())));
    }
    if row.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(invalid(field, "entries must be finite and nonnegative"));
    }
    let sum: f64 = row.iter().sum();
    if (sum - 1.0).abs() > SIMPLEX_TOLERANCE {
        return Err(invalid(field, format!("entries sum to {sum}, need 1")));
    }
    Ok(())
}

fn check_confusion(field: &str, m: &[Vec<f64>], k: usize) -> Result<(), SynthError> {
    if m.len() != k {
        return Err(invalid(field, format!("expected {k} rows, got {}", m.len())));
    }
    for (p, row) in m.iter().enumerate() {
        check_simplex(&format!("{field}[{p}]"), row, k)?;
    }
    Ok(())
}

impl PopulationConfig {
    pub fn validate(&self) -> Result<(), SynthError> {
        if self.k < 2 {
            return Err(invalid("k", "need at least two classes"));
        }
        if self.n_samples == 0 {
            return Err(invalid("n_samples", "need at least one sample"));
        }
        check_simplex("class_prior", &self.class_prior, self.k)?;
        if let Some(shared) = &self.shared_confusion {
            check_confusion("shared_confusion", shared, self.k)?;
        }
        if self.machine_specs.is_empty() && self.human_specs.is_empty() {
            return Err(invalid("machine_specs", "config describes no classifiers"));
        }
        for (i, spec) in self.machine_specs.iter().enumerate() {
            let field = format!("machine_specs[{i}]");
            if !(0.0..=1.0).contains(&spec.shared_error_weight) {
                return Err(invalid(
                    format!("{field}.shared_error_weight"),
                    format!("must lie in [0, 1], got {}", spec.shared_error_weight),
                ));
            }
            if spec.confidence_sharpness <= 0.0 || !spec.confidence_sharpness.is_finite() {
                return Err(invalid(
                    format!("{field}.confidence_sharpness"),
                    format!("must be positive and finite, got {}", spec.confidence_sharpness),
                ));
            }
            check_confusion(&format!("{field}.confusion"), &spec.confusion, self.k)?;
        }
        for (i, spec) in self.human_specs.iter().enumerate() {
            let field = format!("human_specs[{i}]");
            check_confusion(&format!("{field}.confusion"), &spec.confusion, self.k)?;
            if let Some(tm) = &spec.time_model {
                for (name, v) in [("mean_easy", tm.mean_easy), ("mean_hard", tm.mean_hard)] {
                    if v <= 0.0 || !v.is_finite() {
                        return Err(invalid(
                            format!("{field}.time_model.{name}"),
                            format!("must be positive and finite, got {v}"),
                        ));
                    }
                }
            }
        }
        Ok(())
    }

    fn sample_ids(&self) -> Vec<String> {
        let width = self.n_samples.to_string().len();
        (0..self.n_samples).map(|i| format!("s{i:0width$}")).collect()
    }
}

/// Soft vector putting mass `c = 1 - (1 - 1/k) * exp(-sharpness)` on the
/// chosen label and the rest uniformly elsewhere; c > 1/k for sharpness > 0,
/// so the argmax always recovers the label.
fn soft_vector(label: usize, k: usize, sharpness: f64) -> Vec<f64> {
    let c = 1.0 - (1.0 - 1.0 / k as f64) * (-sharpness).exp();
    let mut v = vec![(1.0 - c) / (k - 1) as f64; k];
    v[label] = c;
    v
}

/// Generating confusion matrix for a classifier id: humans return their
/// own row-stochastic matrix, machines the mixture
/// `rho * shared + (1 - rho) * own`.
pub fn expected_confusion(
    config: &PopulationConfig,
    id: &str,
) -> Result<Vec<Vec<f64>>, SynthError> {
    config.validate()?;
    if let Some(spec) = config.machine_specs.iter().find(|m| m.id == id) {
        let rho = spec.shared_error_weight;
        let shared = shared_matrix(config);
        let mixed = (0..config.k)
            .map(|p| {
                (0..config.k)
                    .map(|q| rho * shared[p][q] + (1.0 - rho) * spec.confusion[p][q])
                    .collect()
            })
            .collect();
        return Ok(mixed);
    }
    if let Some(spec) = config.human_specs.iter().find(|h| h.id == id) {
        return Ok(spec.confusion.clone());
    }
    Err(SynthError::UnknownId { id: id.to_string() })
}

fn shared_matrix(config: &PopulationConfig) -> Vec<Vec<f64>> {
    match &config.shared_confusion {
        Some(m) => m.clone(),
        None => (0..config.k)
            .map(|p| (0..config.k).map(|q| f64::from(p == q)).collect())
            .collect(),
    }
}

/// Generate the full evaluation frame described by the config. Streams:
/// "truth" for labels, "shared" for the common machine draw,
/// "machine:<id>" / "human:<id>" per classifier, "time:<id>" per timed
/// annotator. A sample is hard when its shared draw erred.
pub fn generate(config: &PopulationConfig) -> Result<EvalFrame, SynthError> {
    config.validate()?;
    let k = config.k;
    let n = config.n_samples;
    let seed = config.seed;
    let ids = config.sample_ids();
    let class_names: Vec<String> = (0..k).map(|q| format!("c{q}")).collect();
    let space = LabelSpace::new(class_names)?;

    let mut truth_rng = SeededRng::stream(seed, "truth");
    let truth: Vec<usize> = (0..n)
        .map(|_| truth_rng.categorical(&config.class_prior))
        .collect();

    let shared: Vec<usize> = match &config.shared_confusion {
        Some(m) => {
            let mut rng = SeededRng::stream(seed, "shared");
            truth.iter().map(|&t| rng.categorical(&m[t])).collect()
        }
        None => truth.clone(),
    };
    let hard_sample: Vec<bool> = shared.iter().zip(&truth).map(|(s, t)| s != t).collect();

    let mut machines = Vec::with_capacity(config.machine_specs.len());
    for spec in &config.machine_specs {
        let mut rng = SeededRng::stream(seed, &format!("machine:{}", spec.id));
        let rho = spec.shared_error_weight;
        let mut rows = BTreeMap::new();
        for (i, sample_id) in ids.iter().enumerate() {
            let label = if rng.uniform() < rho {
                shared[i]
            } else {
                rng.categorical(&spec.confusion[truth[i]])
            };
            rows.insert(sample_id.clone(), soft_vector(label, k, spec.confidence_sharpness));
        }
        machines.push(PredictionSet::soft(spec.id.clone(), rows, k)?);
    }

    let mut humans = Vec::with_capacity(config.human_specs.len());
    for spec in &config.human_specs {
        let mut rng = SeededRng::stream(seed, &format!("human:{}", spec.id));
        let mut rows = BTreeMap::new();
        for (i, sample_id) in ids.iter().enumerate() {
            rows.insert(sample_id.clone(), rng.categorical(&spec.confusion[truth[i]]));
        }
        let times = spec.time_model.map(|tm| {
            let mut rng = SeededRng::stream(seed, &format!("time:{}", spec.id));
            ids.iter()
                .enumerate()
                .map(|(i, sample_id)| {
                    let mean = if hard_sample[i] { tm.mean_hard } else { tm.mean_easy };
                    (sample_id.clone(), rng.exponential(mean))
                })
                .collect()
        });
        humans.push(AnnotationSet::new(spec.id.clone(), rows, times, k)?);
    }

    let truth_map: BTreeMap<String, usize> = ids.into_iter().zip(truth).collect();
    Ok(build_frame(space, truth_map, machines, humans)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn identity(k: usize) -> Vec<Vec<f64>> {
        (0..k)
            .map(|p| (0..k).map(|q| f64::from(p == q)).collect())
            .collect()
    }

    fn base_config() -> PopulationConfig {
        PopulationConfig {
            k: 3,
            n_samples: 50,
            seed: 42,
            class_prior: vec![0.5, 0.3, 0.2],
            shared_confusion: None,
            machine_specs: vec![MachineSpec {
                id: "m1".into(),
                shared_error_weight: 0.0,
                confusion: identity(3),
                confidence_sharpness: 2.0,
            }],
            human_specs: vec![HumanSpec {
                id: "h1".into(),
                confusion: identity(3),
                time_model: Some(TimeModel { mean_easy: 1.0, mean_hard: 4.0 }),
            }],
        }
    }

    fn accuracy(frame: &EvalFrame, id: &str) -> f64 {
        let c = frame.classifier(id).unwrap();
        let hits = c
            .hard()
            .iter()
            .zip(frame.truth())
            .filter(|(a, b)| a == b)
            .count();
        hits as f64 / frame.n_samples() as f64
    }

    #[test]
    fn identity_confusions_are_perfect() {
        let frame = generate(&base_config()).unwrap();
        assert_eq!(accuracy(&frame, "m1"), 1.0);
        assert_eq!(accuracy(&frame, "h1"), 1.0);
    }

    #[test]
    fn full_shared_weight_clones_label_sequences() {
        let mut cfg = base_config();
        let q = vec![
            vec![0.7, 0.2, 0.1],
            vec![0.1, 0.8, 0.1],
            vec![0.2, 0.2, 0.6],
        ];
        cfg.shared_confusion = Some(q.clone());
        cfg.machine_specs = vec![
            MachineSpec {
                id: "m1".into(),
                shared_error_weight: 1.0,
                confusion: q.clone(),
                confidence_sharpness: 1.0,
            },
            MachineSpec {
                id: "m2".into(),
                shared_error_weight: 1.0,
                confusion: q,
                confidence_sharpness: 3.0,
            },
        ];
        let frame = generate(&cfg).unwrap();
        let m1 = frame.classifier("m1").unwrap();
        let m2 = frame.classifier("m2").unwrap();
        assert_eq!(m1.hard(), m2.hard());
    }

    #[test]
    fn same_config_regenerates_identically() {
        let cfg = base_config();
        let a = generate(&cfg).unwrap();
        let b = generate(&cfg).unwrap();
        assert_eq!(a.truth(), b.truth());
        let am = a.classifier("m1").unwrap();
        let bm = b.classifier("m1").unwrap();
        assert_eq!(am.soft(), bm.soft());
        let ah = a.classifier("h1").unwrap();
        let bh = b.classifier("h1").unwrap();
        assert_eq!(ah.hard(), bh.hard());
        assert_eq!(ah.times(), bh.times());
    }

    #[test]
    fn adding_a_classifier_leaves_others_untouched() {
        let cfg = base_config();
        let small = generate(&cfg).unwrap();
        let mut grown = cfg.clone();
        grown.machine_specs.push(MachineSpec {
            id: "extra".into(),
            shared_error_weight: 0.5,
            confusion: identity(3),
            confidence_sharpness: 1.0,
        });
        grown.human_specs.push(HumanSpec {
            id: "h2".into(),
            confusion: identity(3),
            time_model: None,
        });
        let big = generate(&grown).unwrap();
        assert_eq!(small.truth(), big.truth());
        assert_eq!(
            small.classifier("m1").unwrap().soft(),
            big.classifier("m1").unwrap().soft()
        );
        assert_eq!(
            small.classifier("h1").unwrap().times(),
            big.classifier("h1").unwrap().times()
        );
    }

    #[test]
    fn empirical_confusion_tracks_expected_mixture() {
        let q = vec![
            vec![0.6, 0.3, 0.1],
            vec![0.2, 0.7, 0.1],
            vec![0.1, 0.1, 0.8],
        ];
        let s = vec![
            vec![0.8, 0.1, 0.1],
            vec![0.1, 0.8, 0.1],
            vec![0.3, 0.1, 0.6],
        ];
        let cfg = PopulationConfig {
            k: 3,
            n_samples: 30_000,
            seed: 7,
            class_prior: vec![1.0 / 3.0; 3],
            shared_confusion: Some(s.clone()),
            machine_specs: vec![MachineSpec {
                id: "m".into(),
                shared_error_weight: 0.5,
                confusion: q.clone(),
                confidence_sharpness: 1.5,
            }],
            human_specs: vec![],
        };
        let expected = expected_confusion(&cfg, "m").unwrap();
        for p in 0..3 {
            for qq in 0..3 {
                assert!((expected[p][qq] - (0.5 * s[p][qq] + 0.5 * q[p][qq])).abs() < 1e-15);
            }
        }
        let frame = generate(&cfg).unwrap();
        let m = frame.classifier("m").unwrap();
        let mut counts = vec![vec![0u64; 3]; 3];
        let mut row_totals = [0u64; 3];
        for (i, &t) in frame.truth().iter().enumerate() {
            counts[t][m.hard()[i]] += 1;
            row_totals[t] += 1;
        }
        for p in 0..3 {
            for qq in 0..3 {
                let emp = counts[p][qq] as f64 / row_totals[p] as f64;
                assert!(
                    (emp - expected[p][qq]).abs() < 0.02,
                    "cell ({p},{qq}): empirical {emp} vs expected {}",
                    expected[p][qq]
                );
            }
        }
    }

    #[test]
    fn hard_samples_take_longer_on_average() {
        let s = vec![
            vec![0.5, 0.5, 0.0],
            vec![0.0, 0.5, 0.5],
            vec![0.5, 0.0, 0.5],
        ];
        let mut cfg = base_config();
        cfg.n_samples = 4000;
        cfg.shared_confusion = Some(s);
        let frame = generate(&cfg).unwrap();
        let h = frame.classifier("h1").unwrap();
        let times = h.times().unwrap();
        // Half the samples are hard with mean 4, half easy with mean 1.
        let mean: f64 = times.iter().sum::<f64>() / times.len() as f64;
        assert!((mean - 2.5).abs() < 0.3, "overall mean time {mean}");
    }

    #[test]
    fn validation_reports_field_paths() {
        let mut cfg = base_config();
        cfg.class_prior = vec![0.9, 0.3, 0.2];
        let err = generate(&cfg).unwrap_err().to_string();
        assert!(err.contains("class_prior"), "{err}");

        let mut cfg = base_config();
        cfg.machine_specs[0].confusion[1] = vec![0.5, 0.5, 0.5];
        let err = generate(&cfg).unwrap_err().to_string();
        assert!(err.contains("machine_specs[0].confusion[1]"), "{err}");

        let mut cfg = base_config();
        cfg.machine_specs[0].shared_error_weight = 1.5;
        assert!(generate(&cfg).is_err());

        let mut cfg = base_config();
        cfg.machine_specs[0].confidence_sharpness = 0.0;
        assert!(generate(&cfg).is_err());

        let mut cfg = base_config();
        cfg.human_specs[0].time_model = Some(TimeModel { mean_easy: 0.0, mean_hard: 1.0 });
        assert!(generate(&cfg).is_err());

        let mut cfg = base_config();
        cfg.n_samples = 0;
        assert!(generate(&cfg).is_err());
    }

    #[test]
    fn unknown_id_is_rejected() {
        assert!(matches!(
            expected_confusion(&base_config(), "nope"),
            Err(SynthError::UnknownId { .. })
        ));
    }

    #[test]
    fn soft_vectors_argmax_to_the_drawn_label() {
        for k in [2usize, 5, 10] {
            for sharp in [0.01, 1.0, 8.0] {
                let v = soft_vector(1 % k, k, sharp);
                let sum: f64 = v.iter().sum();
                assert!((sum - 1.0).abs() < 1e-12);
                assert_eq!(crate::ingest::argmax_lowest(&v), 1 % k);
            }
        }
    }
}
