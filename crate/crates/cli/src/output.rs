//! Atomic report writing and content digests.

use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::error::{io_err, CliError};

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Writes report files into one directory, each through a temp file and a
/// rename so a failed run never leaves a half-written report. Remembers
/// every digest for the manifest.
pub struct OutputWriter {
    dir: PathBuf,
    written: Vec<(String, String)>,
}

impl OutputWriter {
    pub fn new(dir: &Path) -> Result<OutputWriter, CliError> {
        std::fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
        Ok(OutputWriter {
            dir: dir.to_path_buf(),
            written: Vec::new(),
        })
    }

    pub fn write(&mut self, name: &str, bytes: &[u8]) -> Result<(), CliError> {
        let tmp = self.dir.join(format!("{name}.tmp"));
        std::fs::write(&tmp, bytes).map_err(|e| io_err(&tmp, e))?;
        let target = self.dir.join(name);
        if let Err(e) = std::fs::rename(&tmp, &target) {
            let _ = std::fs::remove_file(&tmp);
            return Err(io_err(&target, e));
        }
        self.written.push((name.to_string(), sha256_hex(bytes)));
        Ok(())
    }

    pub fn write_json(&mut self, name: &str, value: &impl serde::Serialize) -> Result<(), CliError> {
        let mut bytes = serde_json::to_vec_pretty(value)
            .map_err(|e| CliError::Compute(format!("{name}: {e}")))?;
        bytes.push(b'\n');
        self.write(name, &bytes)
    }

    /// (file name, sha256) in write order.
    pub fn written(&self) -> &[(String, String)] {
        &self.written
    }
}
