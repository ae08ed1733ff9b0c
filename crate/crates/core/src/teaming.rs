//! Post-hoc human-machine teaming: majority-vote aggregation, oracle and
//! threshold-swap composition, threshold selection, and best-partner search.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::{AnnotationSet, ClassifierRef};
use crate::metrics::correctness;
use crate::rng::SeededRng;
use crate::stats::{decide, paired_t_test, StatsError, TTestResult};

#[derive(Debug, Error)]
pub enum TeamingError {
    #[error("majority vote needs at least two annotator sets, got {got}")]
    TooFewAnnotators { got: usize },
    #[error("annotation set '{id}' covers different samples than '{first}'")]
    MisalignedAnnotators { first: String, id: String },
    #[error("base '{id}' has no soft predictions; swap mode needs confidence")]
    KindMismatch { id: String },
    #[error("eta must lie in [0, 1], got {eta}")]
    EtaOutOfRange { eta: f64 },
    #[error("swap mode needs an eta")]
    MissingEta,
    #[error("threshold grid is empty")]
    EmptyGrid,
    #[error("threshold grid must be sorted ascending within [0, 1]")]
    InvalidGrid,
    #[error("threshold selection needs at least two base classifiers, got {got}")]
    TooFewBases { got: usize },
    #[error("classifiers come from different frames")]
    FrameMismatch,
    #[error("partner pool '{pool}' is empty for base '{base}' after self-exclusion")]
    EmptyPool { pool: String, base: String },
    #[error(transparent)]
    Stats(#[from] StatsError),
}

/// How a composed classifier picks between base and partner.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TeamMode {
    /// Truth-referencing upper bound: correct whenever either party is.
    Oracle,
    /// Swap to the partner wherever base confidence is at most eta.
    Swap,
}

impl TeamMode {
    pub fn as_str(self) -> &'static str {
        match self {
            TeamMode::Oracle => "oracle",
            TeamMode::Swap => "swap",
        }
    }
}

/// Tie handling for majority votes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TieRule {
    /// Label of the lowest-indexed annotator among the tied labels.
    LowestAnnotator,
    /// Uniform draw among the tied labels, seeded.
    Random(u64),
}

/// A base/partner composition with per-sample provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct ComposedClassifier {
    pub base_id: String,
    pub partner_id: String,
    pub mode: TeamMode,
    pub eta: Option<f64>,
    /// sample_id -> composed class index.
    pub predictions: BTreeMap<String, usize>,
    /// sample_id -> true where the partner's label was taken.
    pub swap_mask: BTreeMap<String, bool>,
}

/// Accuracy bookkeeping for one composition.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TeamingCell {
    pub base_acc: f64,
    pub partner_acc: f64,
    pub teamed_acc: f64,
    pub boost: f64,
    pub n_swapped: usize,
}

/// Plurality label per sample over two or more aligned annotation sets, as
/// a new set with id "aggre". Ties go to the tied label held by the
/// lowest-indexed annotator, or to a seeded uniform draw among the tied
/// labels under [`TieRule::Random`].
pub fn majority_vote(
    humans: &[AnnotationSet],
    k: usize,
    tie: TieRule,
) -> Result<AnnotationSet, TeamingError> {
    if humans.len() < 2 {
        return Err(TeamingError::TooFewAnnotators { got: humans.len() });
    }
    let first = &humans[0];
    for h in &humans[1..] {
        if !h.rows().keys().eq(first.rows().keys()) {
            return Err(TeamingError::MisalignedAnnotators {
                first: first.annotator_id().to_string(),
                id: h.annotator_id().to_string(),
            });
        }
    }
    let mut rng = match tie {
        TieRule::Random(seed) => Some(SeededRng::stream(seed, "tie")),
        TieRule::LowestAnnotator => None,
    };
    let mut rows = BTreeMap::new();
    for sample_id in first.rows().keys() {
        let labels: Vec<usize> = humans.iter().map(|h| h.rows()[sample_id]).collect();
        let mut counts = vec![0usize; k];
        for &l in &labels {
            counts[l] += 1;
        }
        let top = *counts.iter().max().expect("k >= 2");
        let tied: Vec<usize> = (0..k).filter(|&l| counts[l] == top).collect();
        let winner = if tied.len() == 1 {
            tied[0]
        } else {
            match rng.as_mut() {
                Some(r) => tied[r.below(tied.len() as u64) as usize],
                None => *labels
                    .iter()
                    .find(|l| tied.contains(l))
                    .expect("tied labels occur in the ballot"),
            }
        };
        rows.insert(sample_id.clone(), winner);
    }
    Ok(AnnotationSet::new("aggre", rows, None, k).expect("vote labels are in range"))
}

fn accuracy_of(bits: &[bool]) -> f64 {
    bits.iter().filter(|b| **b).count() as f64 / bits.len() as f64
}

/// Truth-referencing composition: keep the base where it is correct, take
/// the partner where only the partner is, keep the base when both err.
pub fn oracle_team(
    base: ClassifierRef<'_>,
    partner: ClassifierRef<'_>,
) -> Result<(ComposedClassifier, TeamingCell), TeamingError> {
    if !base.same_frame(&partner) {
        return Err(TeamingError::FrameMismatch);
    }
    let frame = base.frame();
    let base_bits = correctness(base);
    let partner_bits = correctness(partner);
    let mut predictions = BTreeMap::new();
    let mut swap_mask = BTreeMap::new();
    let mut n_correct = 0usize;
    for (i, sample_id) in frame.sample_ids().iter().enumerate() {
        let take_partner = !base_bits.bits()[i] && partner_bits.bits()[i];
        let label = if take_partner { partner.hard()[i] } else { base.hard()[i] };
        if base_bits.bits()[i] || partner_bits.bits()[i] {
            n_correct += 1;
        }
        predictions.insert(sample_id.clone(), label);
        swap_mask.insert(sample_id.clone(), take_partner);
    }
    let base_acc = accuracy_of(base_bits.bits());
    let partner_acc = accuracy_of(partner_bits.bits());
    let teamed_acc = n_correct as f64 / frame.n_samples() as f64;
    let n_swapped = swap_mask.values().filter(|v| **v).count();
    Ok((
        ComposedClassifier {
            base_id: base.id().to_string(),
            partner_id: partner.id().to_string(),
            mode: TeamMode::Oracle,
            eta: None,
            predictions,
            swap_mask,
        },
        TeamingCell {
            base_acc,
            partner_acc,
            teamed_acc,
            boost: teamed_acc - base_acc,
            n_swapped,
        },
    ))
}

/// Threshold-swap composition: take the partner's label wherever the
/// base's confidence is at most eta, keep the base elsewhere.
pub fn realistic_team(
    base: ClassifierRef<'_>,
    partner: ClassifierRef<'_>,
    eta: f64,
) -> Result<(ComposedClassifier, TeamingCell), TeamingError> {
    if !base.same_frame(&partner) {
        return Err(TeamingError::FrameMismatch);
    }
    if !(0.0..=1.0).contains(&eta) {
        return Err(TeamingError::EtaOutOfRange { eta });
    }
    let confidence = base
        .confidence()
        .ok_or_else(|| TeamingError::KindMismatch { id: base.id().to_string() })?;
    let frame = base.frame();
    let truth = frame.truth();
    let mut predictions = BTreeMap::new();
    let mut swap_mask = BTreeMap::new();
    let mut n_correct = 0usize;
    let mut n_swapped = 0usize;
    for (i, sample_id) in frame.sample_ids().iter().enumerate() {
        let swap = confidence[i] <= eta;
        let label = if swap { partner.hard()[i] } else { base.hard()[i] };
        if swap {
            n_swapped += 1;
        }
        if label == truth[i] {
            n_correct += 1;
        }
        predictions.insert(sample_id.clone(), label);
        swap_mask.insert(sample_id.clone(), swap);
    }
    let base_acc = accuracy_of(correctness(base).bits());
    let partner_acc = accuracy_of(correctness(partner).bits());
    let teamed_acc = n_correct as f64 / frame.n_samples() as f64;
    Ok((
        ComposedClassifier {
            base_id: base.id().to_string(),
            partner_id: partner.id().to_string(),
            mode: TeamMode::Swap,
            eta: Some(eta),
            predictions,
            swap_mask,
        },
        TeamingCell {
            base_acc,
            partner_acc,
            teamed_acc,
            boost: teamed_acc - base_acc,
            n_swapped,
        },
    ))
}

/// One grid point of a threshold search.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EtaTrial {
    pub eta: f64,
    /// Mean over bases of the swapped accuracy at this eta.
    pub mean_acc: f64,
    /// Absent when the paired test is degenerate (zero-variance retain).
    pub test: Option<TTestResult>,
    pub retained: bool,
}

/// Outcome of [`select_threshold`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ThresholdSelection {
    pub eta_star: f64,
    /// True when no grid point retained the null and `eta_star` fell back
    /// to the highest mean accuracy.
    pub fallback: bool,
    pub trials: Vec<EtaTrial>,
}

/// Pick the smallest grid eta whose per-base swapped accuracies are
/// statistically indistinguishable (paired t-test at `alpha`) from each
/// base's best-over-grid accuracy. Zero-variance tests count as retained.
/// If every grid point rejects, fall back to the eta with the highest mean
/// accuracy and set the fallback flag.
pub fn select_threshold(
    bases: &[ClassifierRef<'_>],
    partner: ClassifierRef<'_>,
    grid: &[f64],
    alpha: f64,
) -> Result<ThresholdSelection, TeamingError> {
    if grid.is_empty() {
        return Err(TeamingError::EmptyGrid);
    }
    if grid.iter().any(|e| !(0.0..=1.0).contains(e)) || grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(TeamingError::InvalidGrid);
    }
    if bases.len() < 2 {
        return Err(TeamingError::TooFewBases { got: bases.len() });
    }
    // acc[b][j] = swapped accuracy of base b at grid[j].
    let mut acc = Vec::with_capacity(bases.len());
    for base in bases {
        let mut row = Vec::with_capacity(grid.len());
        for &eta in grid {
            row.push(realistic_team(*base, partner, eta)?.1.teamed_acc);
        }
        acc.push(row);
    }
    let best: Vec<f64> = acc
        .iter()
        .map(|row| row.iter().cloned().fold(f64::NEG_INFINITY, f64::max))
        .collect();
    let mut trials = Vec::with_capacity(grid.len());
    for (j, &eta) in grid.iter().enumerate() {
        let col: Vec<f64> = acc.iter().map(|row| row[j]).collect();
        let mean_acc = col.iter().sum::<f64>() / col.len() as f64;
        let (test, retained) = match paired_t_test(&col, &best) {
            Ok(t) => {
                let retain = !decide(t.p_two_sided, alpha).reject_null;
                (Some(t), retain)
            }
            Err(StatsError::ZeroVariance) => (None, true),
            Err(e) => return Err(e.into()),
        };
        trials.push(EtaTrial { eta, mean_acc, test, retained });
    }
    let (eta_star, fallback) = match trials.iter().find(|t| t.retained) {
        Some(t) => (t.eta, false),
        None => {
            let best_trial = trials
                .iter()
                .max_by(|a, b| a.mean_acc.partial_cmp(&b.mean_acc).expect("finite accuracies"))
                .expect("grid is nonempty");
            (best_trial.eta, true)
        }
    };
    Ok(ThresholdSelection { eta_star, fallback, trials })
}

/// Best-partner row: the winning pool member for one (base, pool) pair.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BestPartner {
    pub base_id: String,
    pub pool: String,
    pub partner_id: String,
    #[serde(flatten)]
    pub cell: TeamingCell,
}

/// For each base and each named partner pool, team against every pool
/// member except the base itself and keep the maximal-boost cell. Boost
/// ties go to the lexicographically smallest partner id. Rows come out
/// sorted by (base, pool).
pub fn best_pair_search(
    bases: &[ClassifierRef<'_>],
    partner_pools: &[(String, Vec<ClassifierRef<'_>>)],
    mode: TeamMode,
    eta: Option<f64>,
) -> Result<Vec<BestPartner>, TeamingError> {
    let mut rows = Vec::new();
    for base in bases {
        for (pool_name, pool) in partner_pools {
            let mut best: Option<BestPartner> = None;
            for partner in pool {
                if partner.id() == base.id() {
                    continue;
                }
                let (_, cell) = match mode {
                    TeamMode::Oracle => oracle_team(*base, *partner)?,
                    TeamMode::Swap => {
                        let eta = eta.ok_or(TeamingError::MissingEta)?;
                        realistic_team(*base, *partner, eta)?
                    }
                };
                let better = match &best {
                    None => true,
                    Some(b) => {
                        cell.boost > b.cell.boost
                            || (cell.boost == b.cell.boost && partner.id() < b.partner_id.as_str())
                    }
                };
                if better {
                    best = Some(BestPartner {
                        base_id: base.id().to_string(),
                        pool: pool_name.clone(),
                        partner_id: partner.id().to_string(),
                        cell,
                    });
                }
            }
            rows.push(best.ok_or_else(|| TeamingError::EmptyPool {
                pool: pool_name.clone(),
                base: base.id().to_string(),
            })?);
        }
    }
    rows.sort_by(|a, b| (&a.base_id, &a.pool).cmp(&(&b.base_id, &b.pool)));
    Ok(rows)
}
