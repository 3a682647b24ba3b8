//! Run configuration: JSON file values overridden by command-line flags.

use std::fs;
use std::path::{Path, PathBuf};

use padlab::posenc::ResizeMode;
use padlab::statlab::{Offset, OffsetSet};
use padlab::GridSize;
use serde::{Deserialize, Serialize};

use crate::CliError;

pub const DEFAULT_SAMPLES: usize = 100_000;
pub const DEFAULT_Z: f64 = 5.0;
pub const DEFAULT_LAMBDA: f64 = 1e-3;
pub const DEFAULT_STEPS: u64 = 1000;
pub const DEFAULT_ENCODE_SIZE: (usize, usize) = (8, 8);
pub const DEFAULT_ENCODE_CHANNELS: usize = 8;

/// Every setting a command can read. Fields left out fall back to the
/// command's default.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub command: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub net: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub size: Option<GridSize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub samples: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub offsets: Option<Vec<(i64, i64)>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub z: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kind: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub channels: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub resize_to: Option<GridSize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mode: Option<ResizeMode>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub schedule: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub steps: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub threads: Option<usize>,
}

macro_rules! overlay {
    ($base:ident, $top:ident, $($field:ident),+) => {
        $( if $top.$field.is_some() { $base.$field = $top.$field; } )+
    };
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read config file {}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| CliError::Config(format!("invalid config file {}: {e}", path.display())))
    }

    /// Fields set in `flags` replace those in `self`.
    pub fn overlay(mut self, flags: RunConfig) -> Self {
        overlay!(
            self, flags, command, net, size, samples, seed, offsets, z, lambda, kind, channels,
            resize_to, mode, schedule, steps, out, threads
        );
        self
    }

    /// Settings that determine results, with output location and worker count
    /// removed so the echo is identical across those choices.
    pub fn echo(&self) -> RunConfig {
        RunConfig { out: None, threads: None, ..self.clone() }
    }

    pub fn out_dir(&self) -> Result<&Path, CliError> {
        self.out
            .as_deref()
            .ok_or_else(|| CliError::Config("no output directory: pass --out or set \"out\" in the config".into()))
    }

    pub fn offset_set(&self) -> Result<OffsetSet, CliError> {
        match &self.offsets {
            Some(pairs) => Ok(OffsetSet::from_pairs(pairs)?),
            None => Ok(OffsetSet::standard()),
        }
    }
}

/// Parses `di,dj;di,dj;...`.
pub fn parse_offsets(text: &str) -> Result<Vec<(i64, i64)>, String> {
    text.split(';')
        .filter(|s| !s.trim().is_empty())
        .map(|pair| {
            let (a, b) = pair
                .split_once(',')
                .ok_or_else(|| format!("offset '{pair}' is not of the form di,dj"))?;
            let parse = |s: &str| s.trim().parse::<i64>().map_err(|e| format!("offset '{pair}': {e}"));
            Ok((parse(a)?, parse(b)?))
        })
        .collect()
}

pub fn offsets_as_pairs(set: &OffsetSet) -> Vec<(i64, i64)> {
    set.as_slice().iter().map(|&Offset { di, dj }| (di, dj)).collect()
}
