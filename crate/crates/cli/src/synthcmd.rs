//! `synth gen`: a population config in, the four CSV input formats out.

use std::fs;
use std::path::{Path, PathBuf};

use percept_core::ingest::{
    write_annotations, write_classes, write_predictions, write_truth, IngestError,
};
use percept_core::synth::{generate, PopulationConfig};

use crate::error::{io_err, write_err, CliError};

/// Write through a temp file in the same directory so a crash never
/// leaves a half-written CSV behind.
fn emit(
    dir: &Path,
    name: &str,
    write: impl FnOnce(&Path) -> Result<(), IngestError>,
) -> Result<(), CliError> {
    let tmp = dir.join(format!("{name}.tmp"));
    let dest = dir.join(name);
    write(&tmp).map_err(write_err)?;
    fs::rename(&tmp, &dest).map_err(|e| {
        let _ = fs::remove_file(&tmp);
        io_err(&dest, e)
    })
}

pub fn run(config_path: &Path, seed: Option<u64>, out_dir: &PathBuf) -> Result<(), CliError> {
    let bytes = fs::read(config_path).map_err(|e| io_err(config_path, e))?;
    let mut pop: PopulationConfig = serde_json::from_slice(&bytes).map_err(|e| {
        CliError::Validation(format!("{}: {e}", config_path.display()))
    })?;
    if let Some(s) = seed {
        pop.seed = s;
    }
    let frame = generate(&pop)?;

    fs::create_dir_all(out_dir).map_err(|e| io_err(out_dir, e))?;
    emit(out_dir, "classes.txt", |p| write_classes(frame.label_space(), p))?;
    emit(out_dir, "truth.csv", |p| write_truth(&frame, p))?;
    for m in frame.machines() {
        emit(out_dir, &format!("predictions_{}.csv", m.id()), |p| {
            write_predictions(m, p)
        })?;
    }
    for h in frame.humans() {
        emit(out_dir, &format!("annotations_{}.csv", h.id()), |p| {
            write_annotations(h, p)
        })?;
    }
    Ok(())
}
