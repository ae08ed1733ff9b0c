//! Perceptual-difference metrics over an aligned frame: accuracies,
//! confusion structure, per-sample difficulty scores, stratified accuracy
//! bands, and balanced-set matching.

mod confusion;
mod difficulty;
mod matching;
mod stratify;

pub use confusion::{
    accuracy, confusion, correctness, group_error_confusion, quadrant_confusions,
    ErrorFilter, QuadrantConfusions, Reference,
};
pub use difficulty::{
    agreement, human_entropy, machine_confidence, mean_time, sample_distribution_diff,
    SdNorm, SdResult,
};
pub use matching::{balanced_subset, matching_percentage};
pub use stratify::{stratify, BandStat, BinInfo, BinSpec, StratifiedAccuracy};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("classifier '{id}' is not {need}")]
    KindMismatch { id: String, need: &'static str },
    #[error("classifier '{id}' carries no annotation times")]
    MissingTimes { id: String },
    #[error("empty classifier group")]
    EmptyGroup,
    #[error("excluding '{exclude}' empties the group")]
    ExclusionEmptiesGroup { exclude: String },
    #[error("groups yield no usable (a, b) pairs")]
    NoPairs,
    #[error("selection contains no samples")]
    EmptySelection,
    #[error("classifiers come from different frames")]
    FrameMismatch,
    #[error("filter covers {found} samples, frame has {expected}")]
    FilterLength { expected: usize, found: usize },
    #[error("score covers {found} samples, frame has {expected}")]
    ScoreLength { expected: usize, found: usize },
    #[error("invalid bins: {0}")]
    MalformedBins(String),
    #[error("reference '{id}' is all-correct or all-incorrect; cannot balance")]
    CannotBalance { id: String },
    #[error("subset has no reference-correct or no reference-incorrect samples")]
    DegenerateConditioning,
    #[error("unknown sample id '{id}'")]
    UnknownSample { id: String },
}

/// K x K confusion counts plus their row-normalized form.
///
/// Rows with zero count keep all-zero cells (flagged via
/// [`ConfusionMatrix::row_is_empty`]) so serialized matrices never carry
/// NaN. `n_samples` is the total tally count; for a plain per-classifier
/// confusion that equals the number of (filtered) samples, for aggregated
/// pair confusions each (pair, sample) tally counts once.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfusionMatrix {
    k: usize,
    counts: Vec<u64>,
    cells: Vec<f64>,
    n_samples: u64,
}

impl ConfusionMatrix {
    pub(crate) fn from_counts(k: usize, counts: Vec<u64>) -> ConfusionMatrix {
        debug_assert_eq!(counts.len(), k * k);
        let mut cells = vec![0.0; k * k];
        let mut total = 0u64;
        for p in 0..k {
            let row_total: u64 = counts[p * k..(p + 1) * k].iter().sum();
            total += row_total;
            if row_total > 0 {
                for q in 0..k {
                    cells[p * k + q] = counts[p * k + q] as f64 / row_total as f64;
                }
            }
        }
        ConfusionMatrix {
            k,
            counts,
            cells,
            n_samples: total,
        }
    }

    pub fn k(&self) -> usize {
        self.k
    }

    /// Row-major normalized cells.
    pub fn cells(&self) -> &[f64] {
        &self.cells
    }

    /// Row-major raw counts.
    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn n_samples(&self) -> u64 {
        self.n_samples
    }

    pub fn cell(&self, p: usize, q: usize) -> f64 {
        self.cells[p * self.k + q]
    }

    pub fn count(&self, p: usize, q: usize) -> u64 {
        self.counts[p * self.k + q]
    }

    pub fn row_count(&self, p: usize) -> u64 {
        self.counts[p * self.k..(p + 1) * self.k].iter().sum()
    }

    pub fn row_is_empty(&self, p: usize) -> bool {
        self.row_count(p) == 0
    }
}

/// Which samples a classifier got right, against clean truth.
#[derive(Debug, Clone, PartialEq)]
pub struct Correctness {
    pub(crate) classifier_id: String,
    /// Frame order.
    pub(crate) bits: Vec<bool>,
}

impl Correctness {
    pub fn classifier_id(&self) -> &str {
        &self.classifier_id
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn n_correct(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }
}

/// The per-sample difficulty metrics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DifficultyMetric {
    MachineConfidence,
    MachineAgreement,
    HumanAgreement,
    HumanEntropy,
    AnnotationTime,
}

impl DifficultyMetric {
    pub fn as_str(self) -> &'static str {
        match self {
            DifficultyMetric::MachineConfidence => "machine_confidence",
            DifficultyMetric::MachineAgreement => "machine_agreement",
            DifficultyMetric::HumanAgreement => "human_agreement",
            DifficultyMetric::HumanEntropy => "human_entropy",
            DifficultyMetric::AnnotationTime => "annotation_time",
        }
    }
}

/// Per-sample difficulty values in frame order, plus the bin spec used
/// downstream unless overridden.
#[derive(Debug, Clone, PartialEq)]
pub struct DifficultyScore {
    metric: DifficultyMetric,
    values: Vec<f64>,
    default_bins: BinSpec,
}

impl DifficultyScore {
    pub(crate) fn new(
        metric: DifficultyMetric,
        values: Vec<f64>,
        default_bins: BinSpec,
    ) -> DifficultyScore {
        DifficultyScore {
            metric,
            values,
            default_bins,
        }
    }

    pub fn metric(&self) -> DifficultyMetric {
        self.metric
    }

    /// Frame order.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn default_bins(&self) -> &BinSpec {
        &self.default_bins
    }
}
