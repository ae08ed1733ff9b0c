//! Error-pattern matching between classifiers on balanced subsets.

use crate::ingest::ClassifierRef;
use crate::rng::SeededRng;

use super::confusion::correctness;
use super::MetricsError;

/// Sample ids holding equally many correct and incorrect answers for the
/// reference classifier: m = min(#correct, #incorrect) drawn without
/// replacement from each side. The stream is keyed by the reference id so
/// adding classifiers elsewhere never shifts the draw. Output is sorted.
pub fn balanced_subset(
    reference: ClassifierRef<'_>,
    seed: u64,
) -> Result<Vec<String>, MetricsError> {
    let bits = correctness(reference);
    let correct: Vec<usize> = (0..bits.bits().len()).filter(|&i| bits.bits()[i]).collect();
    let incorrect: Vec<usize> = (0..bits.bits().len()).filter(|&i| !bits.bits()[i]).collect();
    let per_side = correct.len().min(incorrect.len());
    if per_side == 0 {
        return Err(MetricsError::CannotBalance { id: reference.id().to_string() });
    }
    let mut rng = SeededRng::stream(seed, &format!("balanced:{}", reference.id()));
    let mut picked = Vec::with_capacity(2 * per_side);
    for side in [&correct, &incorrect] {
        for j in rng.sample_indices(side.len(), per_side) {
            picked.push(side[j]);
        }
    }
    let frame = reference.frame();
    let mut ids: Vec<String> = picked
        .into_iter()
        .map(|i| frame.sample_ids()[i].clone())
        .collect();
    ids.sort();
    Ok(ids)
}

/// Matching percentage of `a` against `b` over `subset`:
/// `(P(a correct | b correct) + P(a wrong | b wrong)) / 2`.
///
/// Needs both b-correct and b-incorrect samples in the subset; a subset
/// from `balanced_subset(b, ..)` always qualifies.
pub fn matching_percentage(
    a: ClassifierRef<'_>,
    b: ClassifierRef<'_>,
    subset: &[String],
) -> Result<f64, MetricsError> {
    if !a.same_frame(&b) {
        return Err(MetricsError::FrameMismatch);
    }
    if subset.is_empty() {
        return Err(MetricsError::EmptySelection);
    }
    let frame = a.frame();
    let a_bits = correctness(a);
    let b_bits = correctness(b);
    let mut both = 0u64;
    let mut b_yes = 0u64;
    let mut neither = 0u64;
    let mut b_no = 0u64;
    for id in subset {
        let i = frame
            .index_of(id)
            .ok_or_else(|| MetricsError::UnknownSample { id: id.clone() })?;
        if b_bits.bits()[i] {
            b_yes += 1;
            if a_bits.bits()[i] {
                both += 1;
            }
        } else {
            b_no += 1;
            if !a_bits.bits()[i] {
                neither += 1;
            }
        }
    }
    if b_yes == 0 || b_no == 0 {
        return Err(MetricsError::DegenerateConditioning);
    }
    Ok((both as f64 / b_yes as f64 + neither as f64 / b_no as f64) / 2.0)
}
