//! Tag-set to avatar-asset conversion.
//!
//! A query's distance to an asset is the weighted sum over the region's
//! categories of a per-category distance in `[0, 1]`:
//!
//! * ordinal: `|index(a) - index(b)| / (m - 1)` for `m` options,
//! * discrete: `0` when equal, else `1`.
//!
//! Lower scores are better and `0` means identical tags. Scores are exact
//! rationals, so assets sharing the minimal score are detected as ties
//! without any tolerance.

use std::collections::{BTreeMap, HashSet};

use num_integer::Integer;
use serde::{Deserialize, Serialize};

use crate::fraction::Fraction;
use crate::schema::{CategoryKind, FeatureRegion, LookupError, TagSchema};

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum MatchError {
    #[error(transparent)]
    Lookup(#[from] LookupError),
    #[error("asset list is empty")]
    NoAssets,
    #[error("asset `{asset_id}` belongs to region `{found}`, query is for `{expected}`")]
    RegionMismatch {
        asset_id: String,
        expected: String,
        found: String,
    },
    #[error("{owner} is missing categories: {}", .missing.join(", "))]
    IncompleteTags { owner: String, missing: Vec<String> },
    #[error("{owner} tags category `{category}` outside region `{region}`")]
    ForeignCategory {
        owner: String,
        category: String,
        region: String,
    },
    #[error("duplicate asset id `{0}`")]
    DuplicateAsset(String),
    #[error("category `{0}` given more than once")]
    DuplicateCategory(String),
    #[error("k must be at least 1")]
    ZeroK,
    #[error("asset database parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AvatarAsset {
    pub asset_id: String,
    pub region_id: String,
    pub tags: BTreeMap<String, String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub render: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TagQuery {
    pub region_id: String,
    pub tags: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RankedAsset {
    pub asset_id: String,
    pub score: Fraction,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatchResult {
    pub ranked: Vec<RankedAsset>,
    pub best: Vec<String>,
    pub tie: bool,
}

impl TagQuery {
    pub fn new(region_id: impl Into<String>) -> Self {
        TagQuery {
            region_id: region_id.into(),
            tags: BTreeMap::new(),
        }
    }

    pub fn with(mut self, category: impl Into<String>, option: impl Into<String>) -> Self {
        self.tags.insert(category.into(), option.into());
        self
    }

    /// Parses `cat=opt,cat=opt` pairs.
    pub fn parse_pairs(region_id: &str, text: &str) -> Result<Self, String> {
        let mut query = TagQuery::new(region_id);
        for pair in text.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let (cat, opt) = pair
                .split_once('=')
                .ok_or_else(|| format!("expected category=option, got `{pair}`"))?;
            if query
                .tags
                .insert(cat.trim().to_string(), opt.trim().to_string())
                .is_some()
            {
                return Err(format!("category `{}` given twice", cat.trim()));
            }
        }
        Ok(query)
    }

    /// Rewrites category aliases to canonical ids and checks the tags cover
    /// the region exactly.
    pub fn resolve(&self, schema: &TagSchema) -> Result<TagQuery, MatchError> {
        let region = schema.region(&self.region_id)?;
        let mut tags = BTreeMap::new();
        for (name, option) in &self.tags {
            let category = region.resolve_category(name).map_err(|_| {
                match schema.category(name) {
                    Ok(_) => MatchError::ForeignCategory {
                        owner: "query".into(),
                        category: name.clone(),
                        region: region.id.clone(),
                    },
                    Err(e) => MatchError::Lookup(e),
                }
            })?;
            category.index_of(option)?;
            if tags.insert(category.id.clone(), option.clone()).is_some() {
                return Err(MatchError::DuplicateCategory(category.id.clone()));
            }
        }
        let resolved = TagQuery {
            region_id: self.region_id.clone(),
            tags,
        };
        check_complete(region, "query", &resolved.tags)?;
        Ok(resolved)
    }
}

fn check_complete(
    region: &FeatureRegion,
    owner: &str,
    tags: &BTreeMap<String, String>,
) -> Result<(), MatchError> {
    if let Some(extra) = tags
        .keys()
        .find(|c| !region.categories.iter().any(|rc| &rc.id == *c))
    {
        return Err(MatchError::ForeignCategory {
            owner: owner.to_string(),
            category: extra.clone(),
            region: region.id.clone(),
        });
    }
    let missing: Vec<String> = region
        .categories
        .iter()
        .filter(|c| !tags.contains_key(&c.id))
        .map(|c| c.id.clone())
        .collect();
    if missing.is_empty() {
        Ok(())
    } else {
        Err(MatchError::IncompleteTags {
            owner: owner.to_string(),
            missing,
        })
    }
}

/// Distance between two options of one category, in `[0, 1]`.
pub fn category_distance(
    schema: &TagSchema,
    category_id: &str,
    a: &str,
    b: &str,
) -> Result<Fraction, LookupError> {
    let category = schema.category(category_id)?;
    let ia = category.index_of(a)?;
    let ib = category.index_of(b)?;
    Ok(match category.kind {
        CategoryKind::Ordinal => {
            let steps = ia.abs_diff(ib) as u64;
            Fraction::new(steps, (category.options.len() - 1) as u64)
        }
        CategoryKind::Discrete => {
            if ia == ib {
                Fraction::zero()
            } else {
                Fraction::one()
            }
        }
    })
}

/// Per-category costs scaled to integers over one common denominator, so a
/// score is a single integer sum until the final fraction.
struct Scorer<'a> {
    region: &'a FeatureRegion,
    query: Vec<usize>,
    // cost of one index step (ordinal) or of a mismatch (discrete)
    unit: Vec<u64>,
    denom: u64,
}

impl<'a> Scorer<'a> {
    fn new(schema: &'a TagSchema, query: &TagQuery) -> Result<Self, MatchError> {
        let region = schema.region(&query.region_id)?;
        check_complete(region, "query", &query.tags)?;
        let denom = region
            .categories
            .iter()
            .filter(|c| c.kind == CategoryKind::Ordinal)
            .fold(1u64, |acc, c| acc.lcm(&(c.options.len() as u64 - 1)));
        let mut positions = Vec::with_capacity(region.categories.len());
        let mut unit = Vec::with_capacity(region.categories.len());
        for category in &region.categories {
            positions.push(category.index_of(&query.tags[&category.id])?);
            let w = u64::from(category.weight);
            unit.push(match category.kind {
                CategoryKind::Ordinal => w * (denom / (category.options.len() as u64 - 1)),
                CategoryKind::Discrete => w * denom,
            });
        }
        Ok(Scorer {
            region,
            query: positions,
            unit,
            denom,
        })
    }

    fn score(&self, asset: &AvatarAsset) -> Result<Fraction, MatchError> {
        if asset.region_id != self.region.id {
            return Err(MatchError::RegionMismatch {
                asset_id: asset.asset_id.clone(),
                expected: self.region.id.clone(),
                found: asset.region_id.clone(),
            });
        }
        check_complete(self.region, &format!("asset `{}`", asset.asset_id), &asset.tags)?;
        let mut total = 0u64;
        for (i, category) in self.region.categories.iter().enumerate() {
            let b = category.index_of(&asset.tags[&category.id])?;
            let a = self.query[i];
            total += match category.kind {
                CategoryKind::Ordinal => self.unit[i] * a.abs_diff(b) as u64,
                CategoryKind::Discrete => self.unit[i] * u64::from(a != b),
            };
        }
        Ok(Fraction::new(total, self.denom))
    }
}

/// Weighted distance between a query and an asset; lower is better.
pub fn asset_score(
    schema: &TagSchema,
    query: &TagQuery,
    asset: &AvatarAsset,
) -> Result<Fraction, MatchError> {
    Scorer::new(schema, query)?.score(asset)
}

/// Scores every asset and ranks them, lowest score first, ties by asset id.
pub fn best_match(
    schema: &TagSchema,
    query: &TagQuery,
    assets: &[AvatarAsset],
) -> Result<MatchResult, MatchError> {
    if assets.is_empty() {
        return Err(MatchError::NoAssets);
    }
    let scorer = Scorer::new(schema, query)?;
    let mut ranked = assets
        .iter()
        .map(|asset| {
            Ok(RankedAsset {
                asset_id: asset.asset_id.clone(),
                score: scorer.score(asset)?,
            })
        })
        .collect::<Result<Vec<_>, MatchError>>()?;
    ranked.sort_by(|a, b| a.score.cmp(&b.score).then_with(|| a.asset_id.cmp(&b.asset_id)));
    let min = ranked[0].score.clone();
    let best: Vec<String> = ranked
        .iter()
        .take_while(|r| r.score == min)
        .map(|r| r.asset_id.clone())
        .collect();
    Ok(MatchResult {
        tie: best.len() > 1,
        best,
        ranked,
    })
}

/// The first `k` ranked assets, extended to include every asset tied with
/// the `k`-th.
pub fn top_k(
    schema: &TagSchema,
    query: &TagQuery,
    assets: &[AvatarAsset],
    k: usize,
) -> Result<MatchResult, MatchError> {
    if k == 0 {
        return Err(MatchError::ZeroK);
    }
    let mut result = best_match(schema, query, assets)?;
    if k < result.ranked.len() {
        let boundary = result.ranked[k - 1].score.clone();
        let cut = k + result.ranked[k..]
            .iter()
            .take_while(|r| r.score == boundary)
            .count();
        result.ranked.truncate(cut);
    }
    Ok(result)
}

/// Parses an asset database document and validates it against the schema.
pub fn load_assets(text: &str, schema: &TagSchema) -> Result<Vec<AvatarAsset>, MatchError> {
    let assets: Vec<AvatarAsset> = serde_json::from_str(text).map_err(|e| MatchError::Parse {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    validate_assets(&assets, schema)?;
    Ok(assets)
}

pub fn validate_assets(assets: &[AvatarAsset], schema: &TagSchema) -> Result<(), MatchError> {
    let mut ids = HashSet::new();
    for asset in assets {
        if !ids.insert(asset.asset_id.as_str()) {
            return Err(MatchError::DuplicateAsset(asset.asset_id.clone()));
        }
        let region = schema.region(&asset.region_id)?;
        let owner = format!("asset `{}`", asset.asset_id);
        check_complete(region, &owner, &asset.tags)?;
        for (category, option) in &asset.tags {
            schema.check_option(category, option)?;
        }
    }
    Ok(())
}

pub fn assets_to_json(assets: &[AvatarAsset]) -> String {
    let mut text = serde_json::to_string_pretty(assets).expect("assets serialize");
    text.push('\n');
    text
}
