//! Text serializations: feature-map CSV, 16-bit plain PGM heatmaps, long-format
//! estimate tables and SHA-256 digests. Floats use Rust's shortest round-trip
//! formatting, so equal inputs give byte-identical files.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::grid::FeatureMap;

/// Largest PGM grey level.
pub const PGM_MAXVAL: u32 = 65535;

fn csv_error(e: impl std::fmt::Display) -> Error {
    Error::InvalidParameter(format!("csv serialization failed: {e}"))
}

fn finish(w: csv::Writer<Vec<u8>>) -> Result<String> {
    let bytes = w.into_inner().map_err(csv_error)?;
    String::from_utf8(bytes).map_err(csv_error)
}

/// One record per `(channel, row)`, each holding that row's values.
pub fn feature_map_csv(map: &FeatureMap) -> Result<String> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    for c in 0..map.channels() {
        for row in map.channel(c).chunks(map.width()) {
            w.write_record(row.iter().map(|v| v.to_string())).map_err(csv_error)?;
        }
    }
    finish(w)
}

/// Parses [`feature_map_csv`] output back into values.
pub fn parse_feature_map_csv(text: &str) -> Result<Vec<Vec<f64>>> {
    let mut r = csv::ReaderBuilder::new().has_headers(false).from_reader(text.as_bytes());
    r.records()
        .map(|rec| {
            rec.map_err(csv_error)?
                .iter()
                .map(|f| f.parse::<f64>().map_err(csv_error))
                .collect()
        })
        .collect()
}

/// Affine map from values to grey levels: `level = round((v - min) / (max - min) * 65535)`.
/// A constant channel maps to level 0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PgmScale {
    pub channel: usize,
    pub min: f64,
    pub max: f64,
    pub maxval: u32,
}

impl PgmScale {
    pub fn level(&self, v: f64) -> u32 {
        if self.max > self.min {
            ((v - self.min) / (self.max - self.min) * self.maxval as f64).round() as u32
        } else {
            0
        }
    }

    /// Value at the centre of a grey level.
    pub fn value(&self, level: u32) -> f64 {
        self.min + (self.max - self.min) * level as f64 / self.maxval as f64
    }
}

/// Plain (P2) PGM of one channel.
pub fn pgm_channel(map: &FeatureMap, channel: usize) -> Result<(String, PgmScale)> {
    if channel >= map.channels() {
        return Err(Error::Dimension(format!(
            "channel {channel} out of range for {} channels",
            map.channels()
        )));
    }
    let (min, max) = map.channel_range(channel);
    let scale = PgmScale { channel, min, max, maxval: PGM_MAXVAL };
    let mut out = format!("P2\n{} {}\n{}\n", map.width(), map.height(), PGM_MAXVAL);
    for row in map.channel(channel).chunks(map.width()) {
        let line: Vec<String> = row.iter().map(|&v| scale.level(v).to_string()).collect();
        out.push_str(&line.join(" "));
        out.push('\n');
    }
    Ok((out, scale))
}

/// Long table `i,j,channel,estimate,se` in row-major location order.
pub fn estimate_table_csv(estimate: &FeatureMap, se: &FeatureMap) -> Result<String> {
    if estimate.channels() != se.channels() || estimate.size() != se.size() {
        return Err(Error::Dimension(format!(
            "estimate {}x{} and standard error {}x{} differ",
            estimate.channels(),
            estimate.size(),
            se.channels(),
            se.size()
        )));
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["i", "j", "channel", "estimate", "se"]).map_err(csv_error)?;
    for i in 0..estimate.height() {
        for j in 0..estimate.width() {
            for c in 0..estimate.channels() {
                w.write_record([
                    i.to_string(),
                    j.to_string(),
                    c.to_string(),
                    estimate.get(c, i, j).to_string(),
                    se.get(c, i, j).to_string(),
                ])
                .map_err(csv_error)?;
            }
        }
    }
    finish(w)
}

/// Wide table `i,j,ch0,ch1,...`, one record per location in row-major order.
pub fn location_table_csv(map: &FeatureMap) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["i".to_string(), "j".to_string()];
    header.extend((0..map.channels()).map(|c| format!("ch{c}")));
    w.write_record(&header).map_err(csv_error)?;
    for i in 0..map.height() {
        for j in 0..map.width() {
            let mut rec = vec![i.to_string(), j.to_string()];
            rec.extend(map.location(i, j).iter().map(|v| v.to_string()));
            w.write_record(&rec).map_err(csv_error)?;
        }
    }
    finish(w)
}

/// Lowercase hex SHA-256.
pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}
