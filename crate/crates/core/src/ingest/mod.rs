//! Parse, validate, and align predictions and annotations into an
//! immutable [`EvalFrame`].
//!
//! Alignment is strict: every prediction or annotation set must cover
//! exactly the truth's sample ids. Silent subsetting would bias every
//! downstream metric, so mismatches are rejected with the offending ids.
//! Sample ids are opaque strings ordered lexicographically; class indices
//! are 0-based.

mod parse;
mod write;

pub use parse::{parse_annotations, parse_label_space, parse_predictions, parse_truth};
pub use write::{
    fmt_float, write_annotations, write_classes, write_predictions, write_truth,
};

use std::collections::{BTreeMap, HashMap};
use thiserror::Error;

/// Soft probability rows may deviate from sum 1 by at most this much;
/// they are then renormalized exactly.
pub const SOFT_SUM_TOLERANCE: f64 = 1e-6;

fn preview(ids: &[String]) -> String {
    const SHOW: usize = 5;
    let shown: Vec<&str> = ids.iter().take(SHOW).map(String::as_str).collect();
    if ids.len() > SHOW {
        format!("{shown:?} and {} more", ids.len() - SHOW)
    } else {
        format!("{shown:?}")
    }
}

fn coverage_msg(missing: &[String], extra: &[String]) -> String {
    let mut parts = Vec::new();
    if !missing.is_empty() {
        parts.push(format!("{} missing: {}", missing.len(), preview(missing)));
    }
    if !extra.is_empty() {
        parts.push(format!("{} extra: {}", extra.len(), preview(extra)));
    }
    parts.join("; ")
}

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Csv {
        path: String,
        #[source]
        source: csv::Error,
    },
    /// Adds file context to a content-validation error.
    #[error("{path}: {source}")]
    InFile {
        path: String,
        #[source]
        source: Box<IngestError>,
    },
    #[error("{path}: expected header {expected}, found '{found}'")]
    HeaderMismatch {
        path: String,
        expected: String,
        found: String,
    },
    #[error("duplicate class name '{name}'")]
    DuplicateClass { name: String },
    #[error("need at least 2 classes, found {found}")]
    TooFewClasses { found: usize },
    #[error("line {line}: empty class name")]
    EmptyClassName { line: usize },
    #[error("row {row}: cannot parse {field}: {detail}")]
    FieldParse {
        row: usize,
        field: String,
        detail: String,
    },
    #[error("row {row}: empty sample id")]
    EmptySampleId { row: usize },
    #[error("row {row}: duplicate sample id '{sample_id}'")]
    DuplicateSample { row: usize, sample_id: String },
    #[error("sample '{sample_id}': probabilities sum to {sum:.9}, more than {tol} from 1")]
    RowNotNormalized {
        sample_id: String,
        sum: f64,
        tol: f64,
    },
    #[error("sample '{sample_id}': probability {value} outside [0, 1]")]
    ProbabilityOutOfRange { sample_id: String, value: f64 },
    #[error("sample '{sample_id}': probability vector has {found} entries, expected {expected}")]
    WrongVectorLength {
        sample_id: String,
        expected: usize,
        found: usize,
    },
    #[error("sample '{sample_id}': label {label} outside [0, {k})")]
    LabelOutOfRange {
        sample_id: String,
        label: i64,
        k: usize,
    },
    #[error("sample '{sample_id}': negative or non-finite time {value}")]
    NegativeTime { sample_id: String, value: f64 },
    #[error("set '{set_id}': times do not cover exactly the annotated samples")]
    TimesMismatch { set_id: String },
    #[error("invalid classifier id '{id}' (allowed: [A-Za-z0-9._-], nonempty)")]
    InvalidId { id: String },
    #[error("set '{set_id}': sample ids do not match truth ({})", coverage_msg(.missing, .extra))]
    CoverageMismatch {
        set_id: String,
        missing: Vec<String>,
        extra: Vec<String>,
    },
    #[error("duplicate classifier id '{id}'")]
    DuplicateId { id: String },
    #[error("truth has no samples")]
    EmptyTruth,
    #[error("frame needs at least one prediction or annotation set")]
    NoClassifiers,
}

impl IngestError {
    /// Wrap a content error with the file it came from.
    pub(crate) fn in_file(self, path: &std::path::Path) -> IngestError {
        IngestError::InFile {
            path: path.display().to_string(),
            source: Box::new(self),
        }
    }
}

fn check_id(id: &str) -> Result<(), IngestError> {
    let ok = !id.is_empty()
        && id
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || matches!(c, '.' | '_' | '-'));
    if ok {
        Ok(())
    } else {
        Err(IngestError::InvalidId { id: id.to_string() })
    }
}

/// Ordered class names; index in the list is the class index.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelSpace {
    class_names: Vec<String>,
}

impl LabelSpace {
    pub fn new(class_names: Vec<String>) -> Result<Self, IngestError> {
        if class_names.len() < 2 {
            return Err(IngestError::TooFewClasses {
                found: class_names.len(),
            });
        }
        let mut seen = std::collections::HashSet::new();
        for (i, name) in class_names.iter().enumerate() {
            if name.is_empty() {
                return Err(IngestError::EmptyClassName { line: i + 1 });
            }
            if !seen.insert(name.as_str()) {
                return Err(IngestError::DuplicateClass { name: name.clone() });
            }
        }
        Ok(LabelSpace { class_names })
    }

    pub fn k(&self) -> usize {
        self.class_names.len()
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.class_names.iter().position(|n| n == name)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PredictionKind {
    Soft,
    Hard,
}

/// One classifier's predictions, keyed by sample id.
#[derive(Debug, Clone)]
pub struct PredictionSet {
    classifier_id: String,
    rows: PredictionRows,
}

#[derive(Debug, Clone)]
enum PredictionRows {
    Soft(BTreeMap<String, Vec<f64>>),
    Hard(BTreeMap<String, usize>),
}

impl PredictionSet {
    /// Probability vectors; entries in [0,1], sums within
    /// [`SOFT_SUM_TOLERANCE`] of 1, renormalized exactly on acceptance.
    pub fn soft(
        classifier_id: impl Into<String>,
        mut rows: BTreeMap<String, Vec<f64>>,
        k: usize,
    ) -> Result<Self, IngestError> {
        let classifier_id = classifier_id.into();
        check_id(&classifier_id)?;
        for (sample_id, vec) in rows.iter_mut() {
            if vec.len() != k {
                return Err(IngestError::WrongVectorLength {
                    sample_id: sample_id.clone(),
                    expected: k,
                    found: vec.len(),
                });
            }
            for &v in vec.iter() {
                if !(0.0..=1.0).contains(&v) {
                    return Err(IngestError::ProbabilityOutOfRange {
                        sample_id: sample_id.clone(),
                        value: v,
                    });
                }
            }
            let sum: f64 = vec.iter().sum();
            if (sum - 1.0).abs() > SOFT_SUM_TOLERANCE {
                return Err(IngestError::RowNotNormalized {
                    sample_id: sample_id.clone(),
                    sum,
                    tol: SOFT_SUM_TOLERANCE,
                });
            }
            for v in vec.iter_mut() {
                *v /= sum;
            }
        }
        Ok(PredictionSet {
            classifier_id,
            rows: PredictionRows::Soft(rows),
        })
    }

    pub fn hard(
        classifier_id: impl Into<String>,
        rows: BTreeMap<String, usize>,
        k: usize,
    ) -> Result<Self, IngestError> {
        let classifier_id = classifier_id.into();
        check_id(&classifier_id)?;
        for (sample_id, &label) in &rows {
            if label >= k {
                return Err(IngestError::LabelOutOfRange {
                    sample_id: sample_id.clone(),
                    label: label as i64,
                    k,
                });
            }
        }
        Ok(PredictionSet {
            classifier_id,
            rows: PredictionRows::Hard(rows),
        })
    }

    pub fn classifier_id(&self) -> &str {
        &self.classifier_id
    }

    pub fn kind(&self) -> PredictionKind {
        match self.rows {
            PredictionRows::Soft(_) => PredictionKind::Soft,
            PredictionRows::Hard(_) => PredictionKind::Hard,
        }
    }

    pub fn len(&self) -> usize {
        match &self.rows {
            PredictionRows::Soft(m) => m.len(),
            PredictionRows::Hard(m) => m.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn sample_ids(&self) -> Vec<&String> {
        match &self.rows {
            PredictionRows::Soft(m) => m.keys().collect(),
            PredictionRows::Hard(m) => m.keys().collect(),
        }
    }
}

/// One annotator's hard labels, optionally with per-sample seconds spent.
#[derive(Debug, Clone)]
pub struct AnnotationSet {
    annotator_id: String,
    rows: BTreeMap<String, usize>,
    times: Option<BTreeMap<String, f64>>,
}

impl AnnotationSet {
    pub fn new(
        annotator_id: impl Into<String>,
        rows: BTreeMap<String, usize>,
        times: Option<BTreeMap<String, f64>>,
        k: usize,
    ) -> Result<Self, IngestError> {
        let annotator_id = annotator_id.into();
        check_id(&annotator_id)?;
        for (sample_id, &label) in &rows {
            if label >= k {
                return Err(IngestError::LabelOutOfRange {
                    sample_id: sample_id.clone(),
                    label: label as i64,
                    k,
                });
            }
        }
        if let Some(times) = &times {
            if times.len() != rows.len() || !times.keys().eq(rows.keys()) {
                return Err(IngestError::TimesMismatch {
                    set_id: annotator_id,
                });
            }
            for (sample_id, &t) in times {
                if !t.is_finite() || t < 0.0 {
                    return Err(IngestError::NegativeTime {
                        sample_id: sample_id.clone(),
                        value: t,
                    });
                }
            }
        }
        Ok(AnnotationSet {
            annotator_id,
            rows,
            times,
        })
    }

    pub fn annotator_id(&self) -> &str {
        &self.annotator_id
    }

    pub fn rows(&self) -> &BTreeMap<String, usize> {
        &self.rows
    }

    pub fn times(&self) -> Option<&BTreeMap<String, f64>> {
        self.times.as_ref()
    }

    pub fn has_times(&self) -> bool {
        self.times.is_some()
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

/// Machine (prediction set) or human (annotation set).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ClassifierKind {
    Machine,
    Human,
}

impl ClassifierKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ClassifierKind::Machine => "machine",
            ClassifierKind::Human => "human",
        }
    }
}

/// One classifier's data aligned to the frame's sample order.
#[derive(Debug, Clone)]
struct AlignedClassifier {
    id: String,
    /// Argmax labels for soft sets (ties to the lowest class index),
    /// the labels themselves otherwise.
    hard: Vec<usize>,
    /// Row-major n*k probabilities; soft machine sets only.
    soft: Option<Vec<f64>>,
    /// Max probability per sample; soft machine sets only.
    confidence: Option<Vec<f64>>,
    /// Seconds per sample; annotation sets with times only.
    times: Option<Vec<f64>>,
}

/// Immutable, aligned container of truth, machine predictions, and human
/// annotations over one shared sample universe.
#[derive(Debug, Clone)]
pub struct EvalFrame {
    label_space: LabelSpace,
    sample_ids: Vec<String>,
    id_index: HashMap<String, usize>,
    truth: Vec<usize>,
    machines: Vec<AlignedClassifier>,
    humans: Vec<AlignedClassifier>,
}

/// Largest probability wins; ties go to the lowest class index.
pub fn argmax_lowest(probs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &p) in probs.iter().enumerate().skip(1) {
        if p > probs[best] {
            best = i;
        }
    }
    best
}

fn check_coverage(
    set_id: &str,
    ids: &[&String],
    id_index: &HashMap<String, usize>,
    n: usize,
) -> Result<(), IngestError> {
    let mut extra: Vec<String> = Vec::new();
    let mut seen = 0usize;
    for &id in ids {
        if id_index.contains_key(id) {
            seen += 1;
        } else {
            extra.push(id.clone());
        }
    }
    if seen == n && extra.is_empty() {
        return Ok(());
    }
    let present: std::collections::HashSet<&str> =
        ids.iter().map(|s| s.as_str()).collect();
    let mut missing: Vec<String> = id_index
        .keys()
        .filter(|id| !present.contains(id.as_str()))
        .cloned()
        .collect();
    missing.sort_unstable();
    Err(IngestError::CoverageMismatch {
        set_id: set_id.to_string(),
        missing,
        extra,
    })
}

/// Build an [`EvalFrame`]: strict coverage of truth by every set, unique
/// classifier ids across machines and humans, lexicographic sample order.
pub fn build_frame(
    label_space: LabelSpace,
    truth: BTreeMap<String, usize>,
    machines: Vec<PredictionSet>,
    humans: Vec<AnnotationSet>,
) -> Result<EvalFrame, IngestError> {
    if truth.is_empty() {
        return Err(IngestError::EmptyTruth);
    }
    if machines.is_empty() && humans.is_empty() {
        return Err(IngestError::NoClassifiers);
    }
    let k = label_space.k();
    for (sample_id, &label) in &truth {
        if sample_id.is_empty() {
            return Err(IngestError::EmptySampleId { row: 0 });
        }
        if label >= k {
            return Err(IngestError::LabelOutOfRange {
                sample_id: sample_id.clone(),
                label: label as i64,
                k,
            });
        }
    }

    let mut ids = std::collections::HashSet::new();
    for id in machines
        .iter()
        .map(|m| m.classifier_id())
        .chain(humans.iter().map(|h| h.annotator_id()))
    {
        if !ids.insert(id.to_string()) {
            return Err(IngestError::DuplicateId { id: id.to_string() });
        }
    }

    let sample_ids: Vec<String> = truth.keys().cloned().collect();
    let id_index: HashMap<String, usize> = sample_ids
        .iter()
        .enumerate()
        .map(|(i, id)| (id.clone(), i))
        .collect();
    let truth_vec: Vec<usize> = truth.values().copied().collect();
    let n = sample_ids.len();

    let mut machine_cols = Vec::with_capacity(machines.len());
    for set in &machines {
        check_coverage(set.classifier_id(), &set.sample_ids(), &id_index, n)?;
        machine_cols.push(align_predictions(set, &id_index, n, k));
    }
    let mut human_cols = Vec::with_capacity(humans.len());
    for set in &humans {
        let ids: Vec<&String> = set.rows.keys().collect();
        check_coverage(set.annotator_id(), &ids, &id_index, n)?;
        human_cols.push(align_annotations(set, &id_index, n));
    }

    Ok(EvalFrame {
        label_space,
        sample_ids,
        id_index,
        truth: truth_vec,
        machines: machine_cols,
        humans: human_cols,
    })
}

fn align_predictions(
    set: &PredictionSet,
    id_index: &HashMap<String, usize>,
    n: usize,
    k: usize,
) -> AlignedClassifier {
    match &set.rows {
        PredictionRows::Soft(rows) => {
            let mut soft = vec![0.0; n * k];
            let mut hard = vec![0usize; n];
            let mut confidence = vec![0.0; n];
            for (sample_id, vec) in rows {
                let i = id_index[sample_id];
                soft[i * k..(i + 1) * k].copy_from_slice(vec);
                let a = argmax_lowest(vec);
                hard[i] = a;
                // clamp floating spill so the [1/K, 1] bound is exact
                confidence[i] = vec[a].clamp(1.0 / k as f64, 1.0);
            }
            AlignedClassifier {
                id: set.classifier_id.clone(),
                hard,
                soft: Some(soft),
                confidence: Some(confidence),
                times: None,
            }
        }
        PredictionRows::Hard(rows) => {
            let mut hard = vec![0usize; n];
            for (sample_id, &label) in rows {
                hard[id_index[sample_id]] = label;
            }
            AlignedClassifier {
                id: set.classifier_id.clone(),
                hard,
                soft: None,
                confidence: None,
                times: None,
            }
        }
    }
}

fn align_annotations(
    set: &AnnotationSet,
    id_index: &HashMap<String, usize>,
    n: usize,
) -> AlignedClassifier {
    let mut hard = vec![0usize; n];
    for (sample_id, &label) in &set.rows {
        hard[id_index[sample_id]] = label;
    }
    let times = set.times.as_ref().map(|times| {
        let mut out = vec![0.0; n];
        for (sample_id, &t) in times {
            out[id_index[sample_id]] = t;
        }
        out
    });
    AlignedClassifier {
        id: set.annotator_id.clone(),
        hard,
        soft: None,
        confidence: None,
        times,
    }
}

impl EvalFrame {
    pub fn n_samples(&self) -> usize {
        self.sample_ids.len()
    }

    pub fn k(&self) -> usize {
        self.label_space.k()
    }

    pub fn label_space(&self) -> &LabelSpace {
        &self.label_space
    }

    /// Sorted ascending; every aligned vector follows this order.
    pub fn sample_ids(&self) -> &[String] {
        &self.sample_ids
    }

    pub fn index_of(&self, sample_id: &str) -> Option<usize> {
        self.id_index.get(sample_id).copied()
    }

    pub fn truth(&self) -> &[usize] {
        &self.truth
    }

    pub fn machines(&self) -> impl Iterator<Item = ClassifierRef<'_>> {
        (0..self.machines.len()).map(move |idx| ClassifierRef {
            frame: self,
            kind: ClassifierKind::Machine,
            idx,
        })
    }

    pub fn humans(&self) -> impl Iterator<Item = ClassifierRef<'_>> {
        (0..self.humans.len()).map(move |idx| ClassifierRef {
            frame: self,
            kind: ClassifierKind::Human,
            idx,
        })
    }

    /// Machines first, then humans, each in construction order.
    pub fn classifiers(&self) -> impl Iterator<Item = ClassifierRef<'_>> {
        self.machines().chain(self.humans())
    }

    pub fn classifier(&self, id: &str) -> Option<ClassifierRef<'_>> {
        self.classifiers().find(|c| c.id() == id)
    }

    /// New frame with one more annotation set, everything else shared.
    pub fn with_annotator(&self, set: AnnotationSet) -> Result<EvalFrame, IngestError> {
        if self.classifier(set.annotator_id()).is_some() {
            return Err(IngestError::DuplicateId {
                id: set.annotator_id().to_string(),
            });
        }
        let ids: Vec<&String> = set.rows.keys().collect();
        check_coverage(set.annotator_id(), &ids, &self.id_index, self.n_samples())?;
        let mut frame = self.clone();
        frame
            .humans
            .push(align_annotations(&set, &self.id_index, self.n_samples()));
        Ok(frame)
    }
}

/// Cheap handle to one classifier inside a frame.
#[derive(Clone, Copy)]
pub struct ClassifierRef<'a> {
    frame: &'a EvalFrame,
    kind: ClassifierKind,
    idx: usize,
}

impl<'a> ClassifierRef<'a> {
    fn aligned(&self) -> &'a AlignedClassifier {
        match self.kind {
            ClassifierKind::Machine => &self.frame.machines[self.idx],
            ClassifierKind::Human => &self.frame.humans[self.idx],
        }
    }

    pub fn frame(&self) -> &'a EvalFrame {
        self.frame
    }

    pub fn id(&self) -> &'a str {
        &self.aligned().id
    }

    pub fn kind(&self) -> ClassifierKind {
        self.kind
    }

    pub fn is_soft(&self) -> bool {
        self.aligned().soft.is_some()
    }

    /// Hard labels in frame order (argmax for soft sets).
    pub fn hard(&self) -> &'a [usize] {
        &self.aligned().hard
    }

    /// Row-major n*k probabilities, when soft.
    pub fn soft(&self) -> Option<&'a [f64]> {
        self.aligned().soft.as_deref()
    }

    /// Per-sample max probability, when soft.
    pub fn confidence(&self) -> Option<&'a [f64]> {
        self.aligned().confidence.as_deref()
    }

    /// Per-sample seconds, when recorded.
    pub fn times(&self) -> Option<&'a [f64]> {
        self.aligned().times.as_deref()
    }

    pub(crate) fn same_frame(&self, other: &ClassifierRef<'_>) -> bool {
        std::ptr::eq(self.frame, other.frame)
    }
}

impl std::fmt::Debug for ClassifierRef<'_> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ClassifierRef")
            .field("id", &self.id())
            .field("kind", &self.kind)
            .finish()
    }
}
