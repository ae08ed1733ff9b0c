//! Canonical serializers for the on-disk formats.
//!
//! Output is deterministic: samples in frame (lexicographic) order, floats
//! at 17 significant digits so parsing reproduces the exact f64.

use std::io::Write;
use std::path::Path;

use super::{ClassifierRef, EvalFrame, IngestError, LabelSpace};

/// 17 significant digits; round-trips any finite f64.
pub fn fmt_float(v: f64) -> String {
    format!("{v:.16e}")
}

fn create(path: &Path) -> Result<std::io::BufWriter<std::fs::File>, IngestError> {
    let file = std::fs::File::create(path).map_err(|e| IngestError::Io {
        path: path.display().to_string(),
        source: e,
    })?;
    Ok(std::io::BufWriter::new(file))
}

fn finish(mut w: std::io::BufWriter<std::fs::File>, path: &Path) -> Result<(), IngestError> {
    w.flush().map_err(|e| IngestError::Io {
        path: path.display().to_string(),
        source: e,
    })
}

macro_rules! w {
    ($dst:expr, $path:expr, $($arg:tt)*) => {
        writeln!($dst, $($arg)*).map_err(|e| IngestError::Io {
            path: $path.display().to_string(),
            source: e,
        })?
    };
}

/// `classes.txt`: one name per line.
pub fn write_classes(space: &LabelSpace, path: impl AsRef<Path>) -> Result<(), IngestError> {
    let path = path.as_ref();
    let mut out = create(path)?;
    for name in space.class_names() {
        w!(out, path, "{name}");
    }
    finish(out, path)
}

/// `truth.csv` in frame order.
pub fn write_truth(frame: &EvalFrame, path: impl AsRef<Path>) -> Result<(), IngestError> {
    let path = path.as_ref();
    let mut out = create(path)?;
    w!(out, path, "sample_id,label");
    for (id, &label) in frame.sample_ids().iter().zip(frame.truth()) {
        w!(out, path, "{id},{label}");
    }
    finish(out, path)
}

/// `predictions_<id>.csv`; soft sets keep their (renormalized) vectors.
pub fn write_predictions(
    classifier: ClassifierRef<'_>,
    path: impl AsRef<Path>,
) -> Result<(), IngestError> {
    let path = path.as_ref();
    let frame = classifier.frame();
    let k = frame.k();
    let mut out = create(path)?;
    match classifier.soft() {
        Some(soft) => {
            let header: Vec<String> = (0..k).map(|j| format!("p_{j}")).collect();
            w!(out, path, "sample_id,{}", header.join(","));
            for (i, id) in frame.sample_ids().iter().enumerate() {
                let cells: Vec<String> =
                    soft[i * k..(i + 1) * k].iter().map(|&v| fmt_float(v)).collect();
                w!(out, path, "{id},{}", cells.join(","));
            }
        }
        None => {
            w!(out, path, "sample_id,label");
            for (i, id) in frame.sample_ids().iter().enumerate() {
                w!(out, path, "{id},{}", classifier.hard()[i]);
            }
        }
    }
    finish(out, path)
}

/// `annotations_<id>.csv`; the time column appears iff times are present.
pub fn write_annotations(
    classifier: ClassifierRef<'_>,
    path: impl AsRef<Path>,
) -> Result<(), IngestError> {
    let path = path.as_ref();
    let frame = classifier.frame();
    let mut out = create(path)?;
    match classifier.times() {
        Some(times) => {
            w!(out, path, "sample_id,label,time_seconds");
            for (i, id) in frame.sample_ids().iter().enumerate() {
                w!(
                    out,
                    path,
                    "{id},{},{}",
                    classifier.hard()[i],
                    fmt_float(times[i])
                );
            }
        }
        None => {
            w!(out, path, "sample_id,label");
            for (i, id) in frame.sample_ids().iter().enumerate() {
                w!(out, path, "{id},{}", classifier.hard()[i]);
            }
        }
    }
    finish(out, path)
}
