//! Strict CSV/text readers for the on-disk formats.
//!
//! All CSVs are comma-separated with a mandatory header, `.` decimal
//! point, no thousands separators. Row numbers in errors count the header
//! as line 1.

use std::collections::BTreeMap;
use std::path::Path;

use super::{AnnotationSet, IngestError, LabelSpace, PredictionSet};

fn io_err(path: &Path, source: std::io::Error) -> IngestError {
    IngestError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn csv_err(path: &Path, source: csv::Error) -> IngestError {
    IngestError::Csv {
        path: path.display().to_string(),
        source,
    }
}

fn open_reader(path: &Path) -> Result<csv::Reader<std::fs::File>, IngestError> {
    csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .from_path(path)
        .map_err(|e| match e.kind() {
            csv::ErrorKind::Io(_) => match e.into_kind() {
                csv::ErrorKind::Io(io) => io_err(path, io),
                _ => unreachable!(),
            },
            _ => csv_err(path, e),
        })
}

fn header_of(rdr: &mut csv::Reader<std::fs::File>, path: &Path) -> Result<Vec<String>, IngestError> {
    Ok(rdr
        .headers()
        .map_err(|e| csv_err(path, e))?
        .iter()
        .map(str::to_string)
        .collect())
}

fn parse_f64(raw: &str, row: usize, field: &str) -> Result<f64, IngestError> {
    raw.parse::<f64>().map_err(|e| IngestError::FieldParse {
        row,
        field: field.to_string(),
        detail: format!("'{raw}': {e}"),
    })
}

fn parse_label(raw: &str, row: usize, k: usize) -> Result<usize, IngestError> {
    let value: i64 = raw.parse().map_err(|e| IngestError::FieldParse {
        row,
        field: "label".to_string(),
        detail: format!("'{raw}': {e}"),
    })?;
    if value < 0 || value as usize >= k {
        // sample id not yet known to be valid here; report by row
        return Err(IngestError::FieldParse {
            row,
            field: "label".to_string(),
            detail: format!("{value} outside [0, {k})"),
        });
    }
    Ok(value as usize)
}

fn check_sample_id(
    raw: &str,
    row: usize,
    seen: &mut std::collections::HashSet<String>,
) -> Result<String, IngestError> {
    if raw.is_empty() {
        return Err(IngestError::EmptySampleId { row });
    }
    if !seen.insert(raw.to_string()) {
        return Err(IngestError::DuplicateSample {
            row,
            sample_id: raw.to_string(),
        });
    }
    Ok(raw.to_string())
}

/// `classes.txt`: one class name per line, UTF-8, LF (a trailing CR per
/// line is tolerated and stripped).
pub fn parse_label_space(path: impl AsRef<Path>) -> Result<LabelSpace, IngestError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let mut names = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let name = line.strip_suffix('\r').unwrap_or(line);
        if name.is_empty() {
            return Err(IngestError::EmptyClassName { line: i + 1 }.in_file(path));
        }
        names.push(name.to_string());
    }
    LabelSpace::new(names).map_err(|e| e.in_file(path))
}

/// `truth.csv`: header `sample_id,label`.
pub fn parse_truth(
    path: impl AsRef<Path>,
    label_space: &LabelSpace,
) -> Result<BTreeMap<String, usize>, IngestError> {
    let path = path.as_ref();
    let mut rdr = open_reader(path)?;
    let header = header_of(&mut rdr, path)?;
    if header != ["sample_id", "label"] {
        return Err(IngestError::HeaderMismatch {
            path: path.display().to_string(),
            expected: "'sample_id,label'".to_string(),
            found: header.join(","),
        });
    }
    let mut out = BTreeMap::new();
    let mut seen = std::collections::HashSet::new();
    for (i, record) in rdr.records().enumerate() {
        let row = i + 2;
        let record = record.map_err(|e| csv_err(path, e))?;
        let sample_id =
            check_sample_id(&record[0], row, &mut seen).map_err(|e| e.in_file(path))?;
        let label =
            parse_label(&record[1], row, label_space.k()).map_err(|e| e.in_file(path))?;
        out.insert(sample_id, label);
    }
    if out.is_empty() {
        return Err(IngestError::EmptyTruth.in_file(path));
    }
    Ok(out)
}

/// `predictions_<id>.csv`: header `sample_id,p_0,...,p_{K-1}` (soft) or
/// `sample_id,label` (hard). Kind is inferred from the header.
pub fn parse_predictions(
    path: impl AsRef<Path>,
    label_space: &LabelSpace,
    classifier_id: &str,
) -> Result<PredictionSet, IngestError> {
    let path = path.as_ref();
    let k = label_space.k();
    let mut rdr = open_reader(path)?;
    let header = header_of(&mut rdr, path)?;

    let soft_header: Vec<String> = std::iter::once("sample_id".to_string())
        .chain((0..k).map(|j| format!("p_{j}")))
        .collect();
    let is_soft = header == soft_header;
    let is_hard = header == ["sample_id", "label"];
    if !is_soft && !is_hard {
        return Err(IngestError::HeaderMismatch {
            path: path.display().to_string(),
            expected: format!("'{}' or 'sample_id,label'", soft_header.join(",")),
            found: header.join(","),
        });
    }

    let mut seen = std::collections::HashSet::new();
    if is_soft {
        let mut rows: BTreeMap<String, Vec<f64>> = BTreeMap::new();
        for (i, record) in rdr.records().enumerate() {
            let row = i + 2;
            let record = record.map_err(|e| csv_err(path, e))?;
            let sample_id =
                check_sample_id(&record[0], row, &mut seen).map_err(|e| e.in_file(path))?;
            let mut vec = Vec::with_capacity(k);
            for j in 0..k {
                vec.push(
                    parse_f64(&record[j + 1], row, &format!("p_{j}"))
                        .map_err(|e| e.in_file(path))?,
                );
            }
            rows.insert(sample_id, vec);
        }
        PredictionSet::soft(classifier_id, rows, k).map_err(|e| e.in_file(path))
    } else {
        let mut rows: BTreeMap<String, usize> = BTreeMap::new();
        for (i, record) in rdr.records().enumerate() {
            let row = i + 2;
            let record = record.map_err(|e| csv_err(path, e))?;
            let sample_id =
                check_sample_id(&record[0], row, &mut seen).map_err(|e| e.in_file(path))?;
            let label = parse_label(&record[1], row, k).map_err(|e| e.in_file(path))?;
            rows.insert(sample_id, label);
        }
        PredictionSet::hard(classifier_id, rows, k).map_err(|e| e.in_file(path))
    }
}

/// `annotations_<id>.csv`: header `sample_id,label` or
/// `sample_id,label,time_seconds`.
pub fn parse_annotations(
    path: impl AsRef<Path>,
    label_space: &LabelSpace,
    annotator_id: &str,
) -> Result<AnnotationSet, IngestError> {
    let path = path.as_ref();
    let k = label_space.k();
    let mut rdr = open_reader(path)?;
    let header = header_of(&mut rdr, path)?;
    let with_times = header == ["sample_id", "label", "time_seconds"];
    if !with_times && header != ["sample_id", "label"] {
        return Err(IngestError::HeaderMismatch {
            path: path.display().to_string(),
            expected: "'sample_id,label[,time_seconds]'".to_string(),
            found: header.join(","),
        });
    }

    let mut rows: BTreeMap<String, usize> = BTreeMap::new();
    let mut times: BTreeMap<String, f64> = BTreeMap::new();
    let mut seen = std::collections::HashSet::new();
    for (i, record) in rdr.records().enumerate() {
        let row = i + 2;
        let record = record.map_err(|e| csv_err(path, e))?;
        let sample_id =
            check_sample_id(&record[0], row, &mut seen).map_err(|e| e.in_file(path))?;
        let label = parse_label(&record[1], row, k).map_err(|e| e.in_file(path))?;
        if with_times {
            let t = parse_f64(&record[2], row, "time_seconds").map_err(|e| e.in_file(path))?;
            times.insert(sample_id.clone(), t);
        }
        rows.insert(sample_id, label);
    }
    AnnotationSet::new(annotator_id, rows, with_times.then_some(times), k)
        .map_err(|e| e.in_file(path))
}
