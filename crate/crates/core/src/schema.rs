//! Tag schemas: feature regions, their tag categories and the ordered
//! options annotators choose from.
//!
//! Option order inside a category is normative. For ordinal categories the
//! list position is the option's index on the ordinal scale, which the
//! avatar matcher uses as a distance axis.

use std::collections::HashSet;
use std::fmt;

use serde::{Deserialize, Serialize};

const BUNDLED_SCHEMA: &str = include_str!("../assets/default_schema.json");

/// Smallest and largest accepted match weight.
pub const WEIGHT_RANGE: (u32, u32) = (1, 5);

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TagSchema {
    pub version: String,
    pub regions: Vec<FeatureRegion>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureRegion {
    pub id: String,
    pub categories: Vec<TagCategory>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CategoryKind {
    Ordinal,
    Discrete,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TagCategory {
    pub id: String,
    pub display_name: String,
    /// Short names accepted in place of `id` when a region is known,
    /// e.g. `width` for `nose_width` in a nose query.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub aliases: Vec<String>,
    pub kind: CategoryKind,
    pub weight: u32,
    pub options: Vec<TagOption>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TagOption {
    pub id: String,
    pub display_name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference_image: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Warning,
    Error,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationIssue {
    pub severity: Severity,
    /// Dotted id path, e.g. `nose.nose_width.narrow`.
    pub path: String,
    pub message: String,
}

impl fmt::Display for ValidationIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sev = match self.severity {
            Severity::Warning => "warning",
            Severity::Error => "error",
        };
        write!(f, "{sev}: {}: {}", self.path, self.message)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub ok: bool,
    pub issues: Vec<ValidationIssue>,
}

impl ValidationReport {
    fn from_issues(issues: Vec<ValidationIssue>) -> Self {
        let ok = issues.iter().all(|i| i.severity != Severity::Error);
        ValidationReport { ok, issues }
    }

    pub fn errors(&self) -> impl Iterator<Item = &ValidationIssue> {
        self.issues.iter().filter(|i| i.severity == Severity::Error)
    }

    pub fn warnings(&self) -> impl Iterator<Item = &ValidationIssue> {
        self.issues.iter().filter(|i| i.severity == Severity::Warning)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum SchemaError {
    #[error("schema parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("schema is invalid: {}", summarize(.0))]
    Invalid(ValidationReport),
}

fn summarize(report: &ValidationReport) -> String {
    report
        .errors()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join("; ")
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum LookupError {
    #[error("unknown region `{0}`")]
    UnknownRegion(String),
    #[error("unknown category `{0}`")]
    UnknownCategory(String),
    #[error("unknown option `{option}` in category `{category}`")]
    UnknownOption { category: String, option: String },
}

/// Parses a schema document and validates it.
///
/// Warnings do not fail the load; any error-severity issue does.
pub fn load_schema(text: &str) -> Result<TagSchema, SchemaError> {
    let schema: TagSchema = serde_json::from_str(text).map_err(|e| SchemaError::Parse {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    let report = validate_schema(&schema);
    if report.ok {
        Ok(schema)
    } else {
        Err(SchemaError::Invalid(report))
    }
}

/// Serializes a schema to the on-disk document format.
pub fn schema_to_json(schema: &TagSchema) -> String {
    let mut text = serde_json::to_string_pretty(schema).expect("schema serializes");
    text.push('\n');
    text
}

pub fn validate_schema(schema: &TagSchema) -> ValidationReport {
    let mut issues = Vec::new();
    let mut error = |path: String, message: String| {
        issues.push(ValidationIssue {
            severity: Severity::Error,
            path,
            message,
        })
    };

    let mut region_ids = HashSet::new();
    let mut category_ids = HashSet::new();
    let mut warnings = Vec::new();

    if schema.regions.is_empty() {
        error("regions".into(), "schema has no regions".into());
    }
    for region in &schema.regions {
        if region.id.is_empty() {
            error("regions".into(), "region id is empty".into());
        }
        if !region_ids.insert(region.id.as_str()) {
            error(region.id.clone(), format!("duplicate region id `{}`", region.id));
        }
        if region.categories.is_empty() {
            error(region.id.clone(), "region has no categories".into());
        }
        let mut names_in_region: HashSet<&str> =
            region.categories.iter().map(|c| c.id.as_str()).collect();
        for category in &region.categories {
            let cpath = format!("{}.{}", region.id, category.id);
            if category.id.is_empty() {
                error(cpath.clone(), "category id is empty".into());
            }
            if !category_ids.insert(category.id.as_str()) {
                error(cpath.clone(), format!("duplicate category id `{}`", category.id));
            }
            for alias in &category.aliases {
                if alias.is_empty() {
                    error(cpath.clone(), "empty alias".into());
                } else if !names_in_region.insert(alias.as_str()) {
                    error(
                        cpath.clone(),
                        format!("alias `{alias}` collides with another name in region `{}`", region.id),
                    );
                }
            }
            if category.weight < WEIGHT_RANGE.0 || category.weight > WEIGHT_RANGE.1 {
                error(
                    cpath.clone(),
                    format!(
                        "weight out of range [{},{}] (got {})",
                        WEIGHT_RANGE.0, WEIGHT_RANGE.1, category.weight
                    ),
                );
            }
            if category.options.len() < 2 {
                error(cpath.clone(), "category needs ≥ 2 options".into());
            }
            let mut option_ids = HashSet::new();
            for option in &category.options {
                let opath = format!("{cpath}.{}", option.id);
                if option.id.is_empty() {
                    error(cpath.clone(), "option id is empty".into());
                }
                if !option_ids.insert(option.id.as_str()) {
                    error(opath.clone(), format!("duplicate option id `{}`", option.id));
                }
                if option.reference_image.is_none() {
                    warnings.push(ValidationIssue {
                        severity: Severity::Warning,
                        path: opath,
                        message: "option has no reference image".into(),
                    });
                }
            }
        }
    }
    if schema.version.trim().is_empty() {
        warnings.push(ValidationIssue {
            severity: Severity::Warning,
            path: "version".into(),
            message: "schema version is empty".into(),
        });
    }
    issues.extend(warnings);
    ValidationReport::from_issues(issues)
}

/// The built-in avatar face schema: nose, eyes and eyebrows.
pub fn bundled_default_schema() -> TagSchema {
    load_schema(BUNDLED_SCHEMA).expect("bundled schema is valid")
}

/// Raw text of the bundled schema document.
pub fn bundled_schema_text() -> &'static str {
    BUNDLED_SCHEMA
}

impl TagSchema {
    pub fn region(&self, region_id: &str) -> Result<&FeatureRegion, LookupError> {
        self.regions
            .iter()
            .find(|r| r.id == region_id)
            .ok_or_else(|| LookupError::UnknownRegion(region_id.to_string()))
    }

    pub fn category(&self, category_id: &str) -> Result<&TagCategory, LookupError> {
        self.categories()
            .find(|c| c.id == category_id)
            .ok_or_else(|| LookupError::UnknownCategory(category_id.to_string()))
    }

    /// Region owning the category.
    pub fn region_of(&self, category_id: &str) -> Result<&FeatureRegion, LookupError> {
        self.regions
            .iter()
            .find(|r| r.categories.iter().any(|c| c.id == category_id))
            .ok_or_else(|| LookupError::UnknownCategory(category_id.to_string()))
    }

    pub fn categories(&self) -> impl Iterator<Item = &TagCategory> {
        self.regions.iter().flat_map(|r| r.categories.iter())
    }

    pub fn option_count(&self) -> usize {
        self.categories().map(|c| c.options.len()).sum()
    }

    pub fn option_index(&self, category_id: &str, option_id: &str) -> Result<usize, LookupError> {
        self.category(category_id)?.index_of(option_id)
    }

    /// Checks that `option_id` is a valid choice in `category_id`.
    pub fn check_option(&self, category_id: &str, option_id: &str) -> Result<(), LookupError> {
        self.option_index(category_id, option_id).map(|_| ())
    }
}

/// Position of `option_id` within its category's ordered option list.
pub fn option_index(
    schema: &TagSchema,
    category_id: &str,
    option_id: &str,
) -> Result<usize, LookupError> {
    schema.option_index(category_id, option_id)
}

impl FeatureRegion {
    /// Resolves a category by id or alias within this region.
    pub fn resolve_category(&self, name: &str) -> Result<&TagCategory, LookupError> {
        self.categories
            .iter()
            .find(|c| c.id == name)
            .or_else(|| {
                self.categories
                    .iter()
                    .find(|c| c.aliases.iter().any(|a| a == name))
            })
            .ok_or_else(|| LookupError::UnknownCategory(name.to_string()))
    }
}

impl TagCategory {
    pub fn index_of(&self, option_id: &str) -> Result<usize, LookupError> {
        self.options
            .iter()
            .position(|o| o.id == option_id)
            .ok_or_else(|| LookupError::UnknownOption {
                category: self.id.clone(),
                option: option_id.to_string(),
            })
    }

    pub fn option_ids(&self) -> impl Iterator<Item = &str> {
        self.options.iter().map(|o| o.id.as_str())
    }
}
