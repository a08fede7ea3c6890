//! Evaluation of externally produced tag predictions against gold labels:
//! per-category accuracy, per-tag precision and recall, confusion matrices
//! and class balance.
//!
//! Zero denominators follow one rule: a tag that was never predicted has
//! precision 0, and a tag with no gold instances has recall 0. Supports and
//! predicted counts are always reported next to the ratios.

use std::collections::{BTreeMap, HashSet};
use std::io::Read;

use serde::{Deserialize, Serialize};

use crate::fraction::Fraction;
use crate::schema::{LookupError, TagSchema};

pub const PREDICTIONS_HEADER: [&str; 4] = [
    "image_id",
    "category_id",
    "predicted_option_id",
    "gold_option_id",
];

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: {message}")]
    Row { line: u64, message: String },
    #[error("line {line}: {source}")]
    Lookup {
        line: u64,
        #[source]
        source: LookupError,
    },
    #[error("predictions CSV header must be `{}`", PREDICTIONS_HEADER.join(","))]
    Header,
    #[error("no prediction records")]
    Empty,
    #[error(transparent)]
    Schema(#[from] LookupError),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub image_id: String,
    pub category_id: String,
    pub predicted: String,
    pub gold: String,
}

impl PredictionRecord {
    pub fn new(image: &str, category: &str, predicted: &str, gold: &str) -> Self {
        PredictionRecord {
            image_id: image.into(),
            category_id: category.into(),
            predicted: predicted.into(),
            gold: gold.into(),
        }
    }
}

/// Reads and validates a predictions CSV. Errors carry the 1-based file line.
pub fn load_predictions<R: Read>(
    reader: R,
    schema: &TagSchema,
) -> Result<Vec<PredictionRecord>, EvalError> {
    let mut rdr = csv::ReaderBuilder::new().flexible(true).from_reader(reader);
    let headers = rdr.headers().map_err(csv_error)?.clone();
    if headers.iter().map(str::trim).collect::<Vec<_>>() != PREDICTIONS_HEADER {
        return Err(EvalError::Header);
    }
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for row in rdr.records() {
        let row = row.map_err(csv_error)?;
        let line = row.position().map(|p| p.line()).unwrap_or(0);
        if row.len() != PREDICTIONS_HEADER.len() {
            return Err(EvalError::Row {
                line,
                message: format!("expected 4 fields, found {}", row.len()),
            });
        }
        let fields: Vec<&str> = row.iter().map(str::trim).collect();
        if let Some(i) = fields.iter().position(|f| f.is_empty()) {
            return Err(EvalError::Row {
                line,
                message: format!("empty `{}`", PREDICTIONS_HEADER[i]),
            });
        }
        let record = PredictionRecord::new(fields[0], fields[1], fields[2], fields[3]);
        let category = schema
            .category(&record.category_id)
            .map_err(|source| EvalError::Lookup { line, source })?;
        for option in [&record.predicted, &record.gold] {
            category
                .index_of(option)
                .map_err(|source| EvalError::Lookup { line, source })?;
        }
        if !seen.insert((record.image_id.clone(), record.category_id.clone())) {
            return Err(EvalError::Row {
                line,
                message: format!(
                    "duplicate prediction for image `{}`, category `{}`",
                    record.image_id, record.category_id
                ),
            });
        }
        out.push(record);
    }
    Ok(out)
}

fn csv_error(err: csv::Error) -> EvalError {
    let line = err.position().map(|p| p.line()).unwrap_or(0);
    if !err.is_io_error() {
        return EvalError::Row {
            line,
            message: err.to_string(),
        };
    }
    match err.into_kind() {
        csv::ErrorKind::Io(io) => EvalError::Io(io),
        _ => unreachable!("checked is_io_error"),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TagEval {
    pub option_id: String,
    pub precision: Fraction,
    pub recall: Fraction,
    /// Gold instances of the tag.
    pub support: u64,
    pub predicted_count: u64,
    pub true_positives: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    /// Row and column labels, in schema option order.
    pub labels: Vec<String>,
    /// `counts[gold][predicted]`.
    pub counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn trace(&self) -> u64 {
        (0..self.labels.len()).map(|i| self.counts[i][i]).sum()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn row_sum(&self, gold: usize) -> u64 {
        self.counts[gold].iter().sum()
    }

    pub fn column_sum(&self, predicted: usize) -> u64 {
        self.counts.iter().map(|row| row[predicted]).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CategoryEval {
    pub category_id: String,
    pub total: u64,
    pub correct: u64,
    pub accuracy: Fraction,
    pub tags: Vec<TagEval>,
    pub confusion: ConfusionMatrix,
}

impl CategoryEval {
    pub fn tag(&self, option_id: &str) -> Option<&TagEval> {
        self.tags.iter().find(|t| t.option_id == option_id)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalReport {
    pub categories: Vec<CategoryEval>,
}

impl EvalReport {
    pub fn category(&self, category_id: &str) -> Option<&CategoryEval> {
        self.categories.iter().find(|c| c.category_id == category_id)
    }

    pub fn to_json(&self) -> String {
        let mut text = serde_json::to_string_pretty(self).expect("report serializes");
        text.push('\n');
        text
    }
}

fn ratio_or_zero(num: u64, den: u64) -> Fraction {
    if den == 0 {
        Fraction::zero()
    } else {
        Fraction::new(num, den)
    }
}

/// Accuracy, per-tag precision/recall and confusion matrices for every
/// category that appears in `records`, in schema order.
pub fn evaluate(records: &[PredictionRecord], schema: &TagSchema) -> Result<EvalReport, EvalError> {
    if records.is_empty() {
        return Err(EvalError::Empty);
    }
    let mut by_category: BTreeMap<&str, Vec<&PredictionRecord>> = BTreeMap::new();
    for r in records {
        by_category.entry(r.category_id.as_str()).or_default().push(r);
    }
    let mut categories = Vec::new();
    for category in schema.categories() {
        let Some(rows) = by_category.remove(category.id.as_str()) else {
            continue;
        };
        let m = category.options.len();
        let mut counts = vec![vec![0u64; m]; m];
        for r in rows {
            let g = category.index_of(&r.gold)?;
            let p = category.index_of(&r.predicted)?;
            counts[g][p] += 1;
        }
        let confusion = ConfusionMatrix {
            labels: category.option_ids().map(String::from).collect(),
            counts,
        };
        let tags = category
            .options
            .iter()
            .enumerate()
            .map(|(i, option)| {
                let tp = confusion.counts[i][i];
                let support = confusion.row_sum(i);
                let predicted_count = confusion.column_sum(i);
                TagEval {
                    option_id: option.id.clone(),
                    precision: ratio_or_zero(tp, predicted_count),
                    recall: ratio_or_zero(tp, support),
                    support,
                    predicted_count,
                    true_positives: tp,
                }
            })
            .collect();
        let total = confusion.total();
        let correct = confusion.trace();
        categories.push(CategoryEval {
            category_id: category.id.clone(),
            total,
            correct,
            accuracy: ratio_or_zero(correct, total),
            tags,
            confusion,
        });
    }
    if let Some(unknown) = by_category.keys().next() {
        return Err(EvalError::Schema(LookupError::UnknownCategory(unknown.to_string())));
    }
    Ok(EvalReport { categories })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassShare {
    pub count: u64,
    pub share: Fraction,
}

/// `category_id -> option_id -> (count, share of category)`.
pub type ClassBalance = BTreeMap<String, BTreeMap<String, ClassShare>>;

/// Counts of each label per category with each option's share of its category.
pub fn class_balance<'a, I>(labels: I) -> Result<ClassBalance, EvalError>
where
    I: IntoIterator<Item = (&'a str, &'a str)>,
{
    let mut counts: BTreeMap<String, BTreeMap<String, u64>> = BTreeMap::new();
    for (category, option) in labels {
        *counts
            .entry(category.to_string())
            .or_default()
            .entry(option.to_string())
            .or_insert(0) += 1;
    }
    if counts.is_empty() {
        return Err(EvalError::Empty);
    }
    Ok(counts
        .into_iter()
        .map(|(category, options)| {
            let total: u64 = options.values().sum();
            let shares = options
                .into_iter()
                .map(|(option, count)| {
                    (
                        option,
                        ClassShare {
                            count,
                            share: Fraction::new(count, total),
                        },
                    )
                })
                .collect();
            (category, shares)
        })
        .collect())
}

/// Class balance of the gold labels in a prediction set.
pub fn gold_balance(records: &[PredictionRecord]) -> Result<ClassBalance, EvalError> {
    class_balance(
        records
            .iter()
            .map(|r| (r.category_id.as_str(), r.gold.as_str())),
    )
}
