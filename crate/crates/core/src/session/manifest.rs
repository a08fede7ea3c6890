//! Image manifests and detector-confidence filtering.

use std::collections::HashSet;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::SessionError;

/// Default detector-confidence threshold: keep only images whose face
/// detection scored a full 1.0.
pub const DEFAULT_CONFIDENCE_THRESHOLD: f64 = 1.0;

pub const MANIFEST_HEADER: [&str; 3] = ["image_id", "path", "detector_confidence"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageManifestEntry {
    pub image_id: String,
    pub path: String,
    pub detector_confidence: f64,
}

// Confidences are compared at six decimal places so that a value written as
// 1.0 survives any decimal round trip.
fn micro_units(value: f64) -> i64 {
    (value * 1_000_000.0).round() as i64
}

fn check_unit_interval(value: f64) -> bool {
    value.is_finite() && (0.0..=1.0).contains(&value)
}

/// Keeps entries whose confidence is at least `threshold`, in manifest order.
pub fn filter_manifest(
    entries: &[ImageManifestEntry],
    threshold: f64,
) -> Result<Vec<ImageManifestEntry>, SessionError> {
    if !check_unit_interval(threshold) {
        return Err(SessionError::Validation(format!(
            "threshold {threshold} outside [0,1]"
        )));
    }
    let mut seen = HashSet::new();
    for entry in entries {
        if !check_unit_interval(entry.detector_confidence) {
            return Err(SessionError::Validation(format!(
                "manifest entry `{}` has confidence {} outside [0,1]",
                entry.image_id, entry.detector_confidence
            )));
        }
        if !seen.insert(entry.image_id.as_str()) {
            return Err(SessionError::Validation(format!(
                "manifest lists image `{}` more than once",
                entry.image_id
            )));
        }
    }
    let cut = micro_units(threshold);
    Ok(entries
        .iter()
        .filter(|e| micro_units(e.detector_confidence) >= cut)
        .cloned()
        .collect())
}

pub fn read_manifest_csv<R: Read>(reader: R) -> Result<Vec<ImageManifestEntry>, SessionError> {
    let mut rdr = csv::Reader::from_reader(reader);
    let headers = rdr.headers().map_err(SessionError::csv)?.clone();
    if headers.iter().collect::<Vec<_>>() != MANIFEST_HEADER {
        return Err(SessionError::Validation(format!(
            "manifest header must be `{}`",
            MANIFEST_HEADER.join(",")
        )));
    }
    let mut out = Vec::new();
    for row in rdr.deserialize() {
        out.push(row.map_err(SessionError::csv)?);
    }
    Ok(out)
}

pub fn write_manifest_csv<W: Write>(
    writer: W,
    entries: &[ImageManifestEntry],
) -> Result<(), SessionError> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(MANIFEST_HEADER).map_err(SessionError::csv)?;
    for e in entries {
        wtr.write_record([
            e.image_id.as_str(),
            e.path.as_str(),
            &format_confidence(e.detector_confidence),
        ])
        .map_err(SessionError::csv)?;
    }
    wtr.flush()?;
    Ok(())
}

fn format_confidence(value: f64) -> String {
    // shortest representation that parses back to the same f64
    let text = format!("{value}");
    if text.contains('.') || text.contains('e') {
        text
    } else {
        format!("{text}.0")
    }
}
