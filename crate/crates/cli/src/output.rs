//! Output directory bookkeeping: every file written is hashed and listed in
//! `manifest.json`.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Duration;

use padlab::export::{feature_map_csv, pgm_channel, sha256_hex};
use padlab::FeatureMap;
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::RunConfig;
use crate::CliError;

pub const MANIFEST_SCHEMA: &str = "padlab.manifest/v1";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const TIMING_FILE: &str = "timing.json";

#[derive(Debug, Clone, Serialize)]
pub struct FileEntry {
    pub path: String,
    pub bytes: usize,
    pub sha256: String,
}

pub struct OutputDir {
    root: PathBuf,
    files: Vec<FileEntry>,
}

fn io_error(path: &Path, e: std::io::Error) -> CliError {
    CliError::Io { path: path.to_path_buf(), source: e }
}

/// Pretty JSON with a trailing newline. Objects built with `json!` keep
/// their keys sorted.
pub fn to_json_text<T: Serialize>(value: &T) -> Result<String, CliError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::Internal(e.to_string()))?;
    text.push('\n');
    Ok(text)
}

impl OutputDir {
    pub fn create(root: &Path) -> Result<Self, CliError> {
        fs::create_dir_all(root).map_err(|e| io_error(root, e))?;
        Ok(Self { root: root.to_path_buf(), files: Vec::new() })
    }

    pub fn write(&mut self, name: &str, contents: &str) -> Result<(), CliError> {
        let path = self.root.join(name);
        fs::write(&path, contents).map_err(|e| io_error(&path, e))?;
        self.files.push(FileEntry {
            path: name.to_string(),
            bytes: contents.len(),
            sha256: sha256_hex(contents.as_bytes()),
        });
        Ok(())
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), CliError> {
        let text = to_json_text(value)?;
        self.write(name, &text)
    }

    /// One PGM per channel, `<stem>_c<k>.pgm`, plus `<stem>_pgm.json` holding
    /// each channel's value range.
    pub fn write_heatmaps(&mut self, stem: &str, map: &FeatureMap) -> Result<(), CliError> {
        let mut scales = Vec::with_capacity(map.channels());
        for c in 0..map.channels() {
            let (text, scale) = pgm_channel(map, c)?;
            self.write(&format!("{stem}_c{c}.pgm"), &text)?;
            scales.push(scale);
        }
        self.write_json(&format!("{stem}_pgm.json"), &scales)
    }

    /// CSV rows per `(channel, row)` plus heatmaps.
    pub fn write_map(&mut self, stem: &str, map: &FeatureMap) -> Result<(), CliError> {
        self.write(&format!("{stem}.csv"), &feature_map_csv(map)?)?;
        self.write_heatmaps(stem, map)
    }

    /// Writes `manifest.json` (deterministic) and `timing.json` (wall clock,
    /// not listed in the manifest).
    pub fn finish(
        self,
        command: &str,
        config: &RunConfig,
        inputs: Value,
        summary: Value,
        elapsed: Duration,
    ) -> Result<PathBuf, CliError> {
        let manifest = json!({
            "schema": MANIFEST_SCHEMA,
            "command": command,
            "version": env!("CARGO_PKG_VERSION"),
            "config": config.echo(),
            "inputs": inputs,
            "summary": summary,
            "files": self.files,
        });
        let path = self.root.join(MANIFEST_FILE);
        fs::write(&path, to_json_text(&manifest)?).map_err(|e| io_error(&path, e))?;
        let timing = json!({ "wall_clock_seconds": elapsed.as_secs_f64() });
        let tpath = self.root.join(TIMING_FILE);
        fs::write(&tpath, to_json_text(&timing)?).map_err(|e| io_error(&tpath, e))?;
        Ok(path)
    }
}
