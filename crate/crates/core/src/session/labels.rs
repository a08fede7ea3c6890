//! Plurality label aggregation and training-label export.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::record::AnnotationRecord;

use super::{Session, SessionError};

pub const LABELS_HEADER: [&str; 3] = ["image_id", "category_id", "option_id"];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Label {
    Resolved(String),
    /// No option had a strict plurality.
    Unresolved,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct LabelSet {
    pub schema_version: String,
    /// Sessions the labels were aggregated from.
    pub sessions: Vec<String>,
    /// Keyed by (image_id, category_id).
    pub entries: BTreeMap<(String, String), Label>,
}

impl LabelSet {
    pub fn resolved(&self) -> impl Iterator<Item = (&str, &str, &str)> {
        self.entries.iter().filter_map(|((image, category), label)| match label {
            Label::Resolved(option) => Some((image.as_str(), category.as_str(), option.as_str())),
            Label::Unresolved => None,
        })
    }

    pub fn unresolved_count(&self) -> usize {
        self.entries
            .values()
            .filter(|l| matches!(l, Label::Unresolved))
            .count()
    }

    pub fn get(&self, image_id: &str, category_id: &str) -> Option<&Label> {
        self.entries
            .get(&(image_id.to_string(), category_id.to_string()))
    }
}

/// Collapses every session's current records into one label per
/// (image, category) by strict plurality; ties stay unresolved.
pub fn aggregate_labels(
    sessions: &[(Session, Vec<AnnotationRecord>)],
) -> Result<LabelSet, SessionError> {
    let Some((first, _)) = sessions.first() else {
        return Err(SessionError::Validation("no sessions to aggregate".into()));
    };
    let version = &first.schema_version;
    if let Some((other, _)) = sessions.iter().find(|(s, _)| &s.schema_version != version) {
        return Err(SessionError::Validation(format!(
            "sessions use different schema versions: `{}` (session `{}`) and `{}` (session `{}`)",
            version, first.session_id, other.schema_version, other.session_id
        )));
    }

    let mut counts: BTreeMap<(String, String), HashMap<&str, u32>> = BTreeMap::new();
    for (session, records) in sessions {
        // latest record per (annotator, image, category) within a session
        let mut latest: HashMap<(&str, &str, &str), &str> = HashMap::new();
        for r in records.iter().filter(|r| r.session_id == session.session_id) {
            latest.insert(
                (&r.annotator_id, &r.image_id, &r.category_id),
                &r.option_id,
            );
        }
        for ((_, image, category), option) in latest {
            *counts
                .entry((image.to_string(), category.to_string()))
                .or_default()
                .entry(option)
                .or_insert(0) += 1;
        }
    }

    let entries = counts
        .into_iter()
        .map(|(key, options)| {
            let max = options.values().copied().max().unwrap_or(0);
            let mut winners = options.iter().filter(|(_, &k)| k == max);
            let label = match (winners.next(), winners.next()) {
                (Some((option, _)), None) => Label::Resolved(option.to_string()),
                _ => Label::Unresolved,
            };
            (key, label)
        })
        .collect();

    let mut session_ids: Vec<String> = sessions.iter().map(|(s, _)| s.session_id.clone()).collect();
    session_ids.sort();
    session_ids.dedup();
    Ok(LabelSet {
        schema_version: version.clone(),
        sessions: session_ids,
        entries,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExportSummary {
    pub rows: usize,
    pub unresolved: usize,
    #[serde(skip)]
    pub summary_path: PathBuf,
}

#[derive(Debug, Serialize, Deserialize)]
struct Sidecar {
    schema_version: String,
    sessions: Vec<String>,
    rows: usize,
    unresolved: usize,
    unresolved_entries: Vec<SidecarEntry>,
}

#[derive(Debug, Serialize, Deserialize)]
struct SidecarEntry {
    image_id: String,
    category_id: String,
}

/// Path of the summary document written next to a label CSV.
pub fn summary_path(csv_path: &Path) -> PathBuf {
    let mut name = csv_path.file_name().unwrap_or_default().to_os_string();
    name.push(".summary.json");
    csv_path.with_file_name(name)
}

/// Writes resolved labels as CSV at `dest` and a summary document beside it.
pub fn export_labels(labels: &LabelSet, dest: &Path) -> Result<ExportSummary, SessionError> {
    if labels.entries.is_empty() {
        return Err(SessionError::Validation("label set is empty".into()));
    }
    let mut wtr = csv::Writer::from_writer(BufWriter::new(File::create(dest)?));
    wtr.write_record(LABELS_HEADER).map_err(SessionError::csv)?;
    let mut rows = 0;
    for (image, category, option) in labels.resolved() {
        wtr.write_record([image, category, option])
            .map_err(SessionError::csv)?;
        rows += 1;
    }
    wtr.flush()?;

    let sidecar = Sidecar {
        schema_version: labels.schema_version.clone(),
        sessions: labels.sessions.clone(),
        rows,
        unresolved: labels.unresolved_count(),
        unresolved_entries: labels
            .entries
            .iter()
            .filter(|(_, l)| matches!(l, Label::Unresolved))
            .map(|((image, category), _)| SidecarEntry {
                image_id: image.clone(),
                category_id: category.clone(),
            })
            .collect(),
    };
    let path = summary_path(dest);
    let mut text = serde_json::to_string_pretty(&sidecar).expect("summary serializes");
    text.push('\n');
    std::fs::write(&path, text)?;
    Ok(ExportSummary {
        rows,
        unresolved: sidecar.unresolved,
        summary_path: path,
    })
}

/// Reads a label CSV and its summary document back into a [`LabelSet`].
pub fn import_labels(csv_path: &Path) -> Result<LabelSet, SessionError> {
    let text = std::fs::read_to_string(summary_path(csv_path))?;
    let sidecar: Sidecar = serde_json::from_str(&text)
        .map_err(|e| SessionError::Validation(format!("bad label summary: {e}")))?;
    let mut rdr = csv::Reader::from_path(csv_path).map_err(SessionError::csv)?;
    let headers = rdr.headers().map_err(SessionError::csv)?.clone();
    if headers.iter().collect::<Vec<_>>() != LABELS_HEADER {
        return Err(SessionError::Validation(format!(
            "label CSV header must be `{}`",
            LABELS_HEADER.join(",")
        )));
    }
    let mut entries = BTreeMap::new();
    let mut seen = BTreeSet::new();
    for row in rdr.records() {
        let row = row.map_err(SessionError::csv)?;
        if row.len() != 3 {
            return Err(SessionError::Validation(format!(
                "line {}: expected 3 fields",
                row.position().map(|p| p.line()).unwrap_or(0)
            )));
        }
        let key = (row[0].to_string(), row[1].to_string());
        if !seen.insert(key.clone()) {
            return Err(SessionError::Validation(format!(
                "duplicate label for image `{}`, category `{}`",
                key.0, key.1
            )));
        }
        entries.insert(key, Label::Resolved(row[2].to_string()));
    }
    for e in sidecar.unresolved_entries {
        entries.insert((e.image_id, e.category_id), Label::Unresolved);
    }
    Ok(LabelSet {
        schema_version: sidecar.schema_version,
        sessions: sidecar.sessions,
        entries,
    })
}
