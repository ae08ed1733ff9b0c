//! Load and digest every configured input, then build the frame.

use std::collections::BTreeMap;

use percept_core::ingest::{
    build_frame, parse_annotations, parse_label_space, parse_predictions, parse_truth,
    AnnotationSet, EvalFrame, IngestError,
};
use serde::Serialize;

use crate::config::RunConfig;
use crate::error::{input_err, CliError};
use crate::output::sha256_hex;

#[derive(Debug, Clone, Serialize)]
pub struct InputFile {
    pub role: &'static str,
    pub id: Option<String>,
    /// As written in the config.
    pub path: String,
    /// Data rows (class lines for `classes`).
    pub rows: usize,
    pub sha256: String,
}

pub struct LoadedInputs {
    pub frame: EvalFrame,
    /// Parsed annotation sets in config order, kept for majority voting.
    pub annotations: Vec<AnnotationSet>,
    pub files: Vec<InputFile>,
    /// Group tag -> prediction-set ids carrying it, both sorted.
    pub groups: BTreeMap<String, Vec<String>>,
    /// One digest over every input file, stamped on stats rows.
    pub inputs_digest: String,
}

fn digest_of(path: &std::path::Path) -> Result<String, CliError> {
    let bytes = std::fs::read(path)
        .map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))?;
    Ok(sha256_hex(&bytes))
}

pub fn load(cfg: &RunConfig) -> Result<LoadedInputs, CliError> {
    let mut files = Vec::new();

    let classes_path = cfg.resolve(&cfg.classes);
    let space = parse_label_space(&classes_path).map_err(input_err)?;
    files.push(InputFile {
        role: "classes",
        id: None,
        path: cfg.classes.display().to_string(),
        rows: space.k(),
        sha256: digest_of(&classes_path)?,
    });

    let truth_path = cfg.resolve(&cfg.truth);
    let truth = parse_truth(&truth_path, &space).map_err(input_err)?;
    files.push(InputFile {
        role: "truth",
        id: None,
        path: cfg.truth.display().to_string(),
        rows: truth.len(),
        sha256: digest_of(&truth_path)?,
    });

    let mut machines = Vec::new();
    for entry in &cfg.predictions {
        let path = cfg.resolve(&entry.path);
        let set = parse_predictions(&path, &space, &entry.id).map_err(input_err)?;
        files.push(InputFile {
            role: "predictions",
            id: Some(entry.id.clone()),
            path: entry.path.display().to_string(),
            rows: set.len(),
            sha256: digest_of(&path)?,
        });
        machines.push(set);
    }

    let mut humans = Vec::new();
    for entry in &cfg.annotations {
        let path = cfg.resolve(&entry.path);
        let set = parse_annotations(&path, &space, &entry.id).map_err(input_err)?;
        files.push(InputFile {
            role: "annotations",
            id: Some(entry.id.clone()),
            path: entry.path.display().to_string(),
            rows: set.len(),
            sha256: digest_of(&path)?,
        });
        humans.push(set);
    }

    // Frame-assembly errors name a set, not a file; put the file back.
    let frame = build_frame(space, truth, machines, humans.clone()).map_err(|e| {
        let set_id = match &e {
            IngestError::CoverageMismatch { set_id, .. }
            | IngestError::TimesMismatch { set_id } => Some(set_id.as_str()),
            IngestError::DuplicateId { id } => Some(id.as_str()),
            _ => None,
        };
        let path = set_id.and_then(|id| {
            files
                .iter()
                .find(|f| f.id.as_deref() == Some(id))
                .map(|f| f.path.clone())
        });
        match path {
            Some(p) => CliError::Validation(format!("{p}: {e}")),
            None => input_err(e),
        }
    })?;

    let mut groups: BTreeMap<String, Vec<String>> = BTreeMap::new();
    for entry in &cfg.predictions {
        if let Some(tag) = &entry.group {
            groups.entry(tag.clone()).or_default().push(entry.id.clone());
        }
    }
    for ids in groups.values_mut() {
        ids.sort();
    }

    let mut provenance = String::new();
    for f in &files {
        provenance.push_str(f.role);
        provenance.push(':');
        provenance.push_str(f.id.as_deref().unwrap_or("-"));
        provenance.push(':');
        provenance.push_str(&f.sha256);
        provenance.push('\n');
    }
    let inputs_digest = sha256_hex(provenance.as_bytes());

    Ok(LoadedInputs {
        frame,
        annotations: humans,
        files,
        groups,
        inputs_digest,
    })
}
