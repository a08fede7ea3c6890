//! Annotator agreement analytics.
//!
//! Three metrics are computed per annotation session:
//!
//! * **tag agreement** `k / n`: for one category on one image, the share of
//!   the `n` annotators who answered that category and picked the option.
//! * **image agreement** `Σ x_i / t`: the mean of the tag agreements of the
//!   `t` agreed tags on an image. It surfaces images annotators disagree on.
//! * **overall tag agreement** `Σ y_i / a`: for one option, the mean of its
//!   tag agreement over the `a` images where it was agreed. It surfaces weak
//!   tags.
//!
//! An option is *agreed* on an image when it is a modal choice of its
//! category there and at least two annotators picked it. Tied modes are all
//! agreed, each contributing its own ratio. Everything is computed from
//! per-(image, category) option counts, so annotator identities and record
//! order never affect a value.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::fraction::Fraction;
use crate::record::AnnotationRecord;
use crate::schema::{LookupError, TagSchema};

/// Minimum modal count for a choice to count as agreement.
pub const MIN_AGREEING_ANNOTATORS: u32 = 2;

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum AgreementError {
    #[error("empty tally for image `{image_id}`, category `{category_id}`")]
    EmptyTally {
        image_id: String,
        category_id: String,
    },
    #[error("tallies mix images `{expected}` and `{found}`")]
    MixedImages { expected: String, found: String },
    #[error("image `{image_id}` has more than one tally for category `{category_id}`")]
    DuplicateCategory {
        image_id: String,
        category_id: String,
    },
    #[error("record {index} (annotator `{annotator_id}`, image `{image_id}`): {source}")]
    InvalidRecord {
        index: usize,
        annotator_id: String,
        image_id: String,
        #[source]
        source: LookupError,
    },
    #[error("record {index} belongs to session `{found}`, expected `{expected}`")]
    MixedSessions {
        index: usize,
        expected: String,
        found: String,
    },
}

/// Option counts for one category on one image.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CategoryTally {
    pub image_id: String,
    pub category_id: String,
    pub counts: BTreeMap<String, u32>,
    pub n: u32,
}

impl CategoryTally {
    /// Builds a tally; zero counts are dropped and `n` is their sum.
    pub fn new(
        image_id: impl Into<String>,
        category_id: impl Into<String>,
        counts: impl IntoIterator<Item = (String, u32)>,
    ) -> Self {
        let counts: BTreeMap<String, u32> = counts.into_iter().filter(|(_, k)| *k > 0).fold(
            BTreeMap::new(),
            |mut acc, (option, k)| {
                *acc.entry(option).or_insert(0) += k;
                acc
            },
        );
        let n = counts.values().sum();
        CategoryTally {
            image_id: image_id.into(),
            category_id: category_id.into(),
            counts,
            n,
        }
    }

    /// Tally from individual annotator choices.
    pub fn from_choices<'a>(
        image_id: impl Into<String>,
        category_id: impl Into<String>,
        choices: impl IntoIterator<Item = &'a str>,
    ) -> Self {
        Self::new(
            image_id,
            category_id,
            choices.into_iter().map(|c| (c.to_string(), 1)),
        )
    }

    pub fn validate(&self, schema: &TagSchema) -> Result<(), LookupError> {
        let category = schema.category(&self.category_id)?;
        for option in self.counts.keys() {
            category.index_of(option)?;
        }
        Ok(())
    }

    fn max_count(&self) -> u32 {
        self.counts.values().copied().max().unwrap_or(0)
    }
}

/// One option's `k / n` on one image.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TagAgreement {
    pub category_id: String,
    pub option_id: String,
    pub k: u32,
    pub n: u32,
    pub ratio: Fraction,
}

impl TagAgreement {
    fn new(category_id: &str, option_id: &str, k: u32, n: u32) -> Self {
        TagAgreement {
            category_id: category_id.to_string(),
            option_id: option_id.to_string(),
            k,
            n,
            ratio: Fraction::new(k.into(), n.into()),
        }
    }
}

/// Image agreement: the mean over the image's agreed tags.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageAgreement {
    pub image_id: String,
    pub agreed_tags: Vec<TagAgreement>,
    pub t: usize,
    /// `None` when no tag reached agreement on this image.
    pub mean: Option<Fraction>,
}

/// Overall agreement of one option across a session.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OverallTagAgreement {
    pub option_id: String,
    pub a: usize,
    /// Per-image ratios, ordered by image id.
    pub values: Vec<Fraction>,
    /// `None` when the option was never agreed on (no data).
    pub mean: Option<Fraction>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CategoryTagAgreement {
    pub region_id: String,
    pub category_id: String,
    pub tags: Vec<OverallTagAgreement>,
}

/// Highest / lowest / average image agreement over images with a defined mean.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageAgreementSummary {
    pub highest_image_agreement: Fraction,
    pub lowest_image_agreement: Fraction,
    pub average_image_agreement: Fraction,
    pub images_counted: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionReport {
    pub session_id: String,
    pub schema_version: String,
    pub per_tag: Vec<CategoryTagAgreement>,
    pub per_image: Vec<ImageAgreement>,
    /// `None` when no image has a defined mean.
    pub summary: Option<ImageAgreementSummary>,
    /// Images listed in `per_image` whose mean is undefined and which are
    /// therefore left out of `summary`.
    pub excluded_images: Vec<String>,
}

impl SessionReport {
    /// Canonical JSON rendering shared by the CLI and the HTTP service.
    pub fn to_json(&self) -> String {
        let mut text = serde_json::to_string_pretty(self).expect("report serializes");
        text.push('\n');
        text
    }

    pub fn category(&self, category_id: &str) -> Option<&CategoryTagAgreement> {
        self.per_tag.iter().find(|c| c.category_id == category_id)
    }

    pub fn image(&self, image_id: &str) -> Option<&ImageAgreement> {
        self.per_image.iter().find(|i| i.image_id == image_id)
    }
}

fn sort_by_ratio(tags: &mut [TagAgreement]) {
    tags.sort_by(|a, b| {
        b.ratio
            .cmp(&a.ratio)
            .then_with(|| a.option_id.cmp(&b.option_id))
    });
}

/// `k / n` for every option picked at least once, highest ratio first.
pub fn tag_agreement(tally: &CategoryTally) -> Result<Vec<TagAgreement>, AgreementError> {
    if tally.n == 0 {
        return Err(AgreementError::EmptyTally {
            image_id: tally.image_id.clone(),
            category_id: tally.category_id.clone(),
        });
    }
    let mut out: Vec<TagAgreement> = tally
        .counts
        .iter()
        .filter(|(_, &k)| k > 0)
        .map(|(option, &k)| TagAgreement::new(&tally.category_id, option, k, tally.n))
        .collect();
    sort_by_ratio(&mut out);
    Ok(out)
}

/// The modal options of a tally that at least two annotators picked.
pub fn agreed_tags(tally: &CategoryTally) -> Vec<TagAgreement> {
    let max = tally.max_count();
    if tally.n == 0 || max < MIN_AGREEING_ANNOTATORS {
        return Vec::new();
    }
    // BTreeMap iteration is already ordered by option id and all ratios are equal.
    tally
        .counts
        .iter()
        .filter(|(_, &k)| k == max)
        .map(|(option, &k)| TagAgreement::new(&tally.category_id, option, k, tally.n))
        .collect()
}

/// Image agreement over the tallies of one image.
pub fn image_agreement(tallies: &[CategoryTally]) -> Result<ImageAgreement, AgreementError> {
    let image_id = match tallies.first() {
        Some(t) => t.image_id.clone(),
        None => String::new(),
    };
    let mut seen = BTreeSet::new();
    let mut agreed = Vec::new();
    for tally in tallies {
        if tally.image_id != image_id {
            return Err(AgreementError::MixedImages {
                expected: image_id,
                found: tally.image_id.clone(),
            });
        }
        if !seen.insert(tally.category_id.as_str()) {
            return Err(AgreementError::DuplicateCategory {
                image_id,
                category_id: tally.category_id.clone(),
            });
        }
        agreed.extend(agreed_tags(tally));
    }
    Ok(build_image_agreement(image_id, agreed))
}

fn build_image_agreement(image_id: String, agreed_tags: Vec<TagAgreement>) -> ImageAgreement {
    let mean = Fraction::mean(agreed_tags.iter().map(|t| &t.ratio));
    ImageAgreement {
        image_id,
        t: agreed_tags.len(),
        agreed_tags,
        mean,
    }
}

/// Summary triple over per-image means; `None` if no mean is defined.
pub fn summarize_images(per_image: &[ImageAgreement]) -> Option<ImageAgreementSummary> {
    let means: Vec<&Fraction> = per_image.iter().filter_map(|i| i.mean.as_ref()).collect();
    let highest = means.iter().copied().max()?.clone();
    let lowest = means.iter().copied().min()?.clone();
    let average = Fraction::mean(means.iter().copied())?;
    Some(ImageAgreementSummary {
        highest_image_agreement: highest,
        lowest_image_agreement: lowest,
        average_image_agreement: average,
        images_counted: means.len(),
    })
}

/// Result of applying one record to an [`AgreementTracker`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Applied {
    /// Option previously recorded for the same (annotator, image, category).
    pub replaced: Option<String>,
    /// Records currently held for the image, one per (annotator, category).
    pub image_record_count: u32,
}

type ChoiceKey = (String, String, String);

/// Incrementally maintained option counts for one session.
///
/// Applying a record adjusts exactly one tally (two when it replaces an
/// earlier choice), so live reports never rescan the record log.
#[derive(Debug, Clone, Default)]
pub struct AgreementTracker {
    choices: HashMap<ChoiceKey, String>,
    tallies: BTreeMap<String, BTreeMap<String, BTreeMap<String, u32>>>,
}

impl AgreementTracker {
    pub fn new() -> Self {
        Self::default()
    }

    /// Checks a record's category and option against the schema without applying it.
    pub fn check(schema: &TagSchema, record: &AnnotationRecord) -> Result<(), LookupError> {
        schema.check_option(&record.category_id, &record.option_id)
    }

    /// Applies a record, replacing the annotator's earlier choice for the
    /// same image and category if there was one.
    pub fn apply(
        &mut self,
        schema: &TagSchema,
        record: &AnnotationRecord,
    ) -> Result<Applied, LookupError> {
        Self::check(schema, record)?;
        Ok(self.apply_unchecked(record))
    }

    fn apply_unchecked(&mut self, record: &AnnotationRecord) -> Applied {
        let key = (
            record.annotator_id.clone(),
            record.image_id.clone(),
            record.category_id.clone(),
        );
        let previous = self.choices.insert(key, record.option_id.clone());
        let counts = self
            .tallies
            .entry(record.image_id.clone())
            .or_default()
            .entry(record.category_id.clone())
            .or_default();
        if let Some(prev) = &previous {
            if let Some(k) = counts.get_mut(prev) {
                *k -= 1;
                if *k == 0 {
                    counts.remove(prev);
                }
            }
        }
        *counts.entry(record.option_id.clone()).or_insert(0) += 1;
        Applied {
            replaced: previous,
            image_record_count: self.image_record_count(&record.image_id),
        }
    }

    pub fn image_record_count(&self, image_id: &str) -> u32 {
        self.tallies
            .get(image_id)
            .map(|cats| cats.values().flat_map(|c| c.values()).sum())
            .unwrap_or(0)
    }

    pub fn record_count(&self) -> usize {
        self.choices.len()
    }

    /// Image ids with at least one record, sorted.
    pub fn images(&self) -> impl Iterator<Item = &str> {
        self.tallies.keys().map(String::as_str)
    }

    pub fn tallies_for(&self, image_id: &str) -> Vec<CategoryTally> {
        self.tallies
            .get(image_id)
            .map(|cats| {
                cats.iter()
                    .map(|(category, counts)| {
                        CategoryTally::new(
                            image_id,
                            category.as_str(),
                            counts.iter().map(|(o, k)| (o.clone(), *k)),
                        )
                    })
                    .collect()
            })
            .unwrap_or_default()
    }

    pub fn per_image(&self) -> Vec<ImageAgreement> {
        self.tallies
            .keys()
            .map(|image| {
                let agreed = self
                    .tallies_for(image)
                    .iter()
                    .flat_map(agreed_tags)
                    .collect();
                build_image_agreement(image.clone(), agreed)
            })
            .collect()
    }

    /// Overall tag agreement for every option of every region that has records.
    pub fn overall(&self, schema: &TagSchema) -> Vec<CategoryTagAgreement> {
        overall_from_images(schema, &self.per_image(), &self.touched_categories())
    }

    fn touched_categories(&self) -> BTreeSet<String> {
        self.tallies
            .values()
            .flat_map(|cats| cats.keys().cloned())
            .collect()
    }

    pub fn report(&self, session_id: &str, schema: &TagSchema) -> SessionReport {
        let per_image = self.per_image();
        let per_tag = overall_from_images(schema, &per_image, &self.touched_categories());
        let summary = summarize_images(&per_image);
        let excluded_images = per_image
            .iter()
            .filter(|i| i.mean.is_none())
            .map(|i| i.image_id.clone())
            .collect();
        SessionReport {
            session_id: session_id.to_string(),
            schema_version: schema.version.clone(),
            per_tag,
            per_image,
            summary,
            excluded_images,
        }
    }
}

fn overall_from_images(
    schema: &TagSchema,
    per_image: &[ImageAgreement],
    touched: &BTreeSet<String>,
) -> Vec<CategoryTagAgreement> {
    // (category, option) -> ratios in image id order
    let mut values: HashMap<(&str, &str), Vec<Fraction>> = HashMap::new();
    for image in per_image {
        for tag in &image.agreed_tags {
            values
                .entry((tag.category_id.as_str(), tag.option_id.as_str()))
                .or_default()
                .push(tag.ratio.clone());
        }
    }
    let mut out = Vec::new();
    for region in &schema.regions {
        if !region.categories.iter().any(|c| touched.contains(&c.id)) {
            continue;
        }
        for category in &region.categories {
            let tags = category
                .options
                .iter()
                .map(|option| {
                    let ys = values
                        .remove(&(category.id.as_str(), option.id.as_str()))
                        .unwrap_or_default();
                    OverallTagAgreement {
                        option_id: option.id.clone(),
                        a: ys.len(),
                        mean: Fraction::mean(&ys),
                        values: ys,
                    }
                })
                .collect();
            out.push(CategoryTagAgreement {
                region_id: region.id.clone(),
                category_id: category.id.clone(),
                tags,
            });
        }
    }
    out
}

fn tracker_from_records(
    records: &[AnnotationRecord],
    schema: &TagSchema,
    session_id: Option<&str>,
) -> Result<AgreementTracker, AgreementError> {
    let mut tracker = AgreementTracker::new();
    for (index, record) in records.iter().enumerate() {
        if let Some(expected) = session_id {
            if record.session_id != expected {
                return Err(AgreementError::MixedSessions {
                    index,
                    expected: expected.to_string(),
                    found: record.session_id.clone(),
                });
            }
        }
        tracker
            .apply(schema, record)
            .map_err(|source| AgreementError::InvalidRecord {
                index,
                annotator_id: record.annotator_id.clone(),
                image_id: record.image_id.clone(),
                source,
            })?;
    }
    Ok(tracker)
}

/// Overall tag agreement per option, grouped by category.
///
/// Later records replace earlier ones for the same (annotator, image, category).
pub fn overall_tag_agreement(
    records: &[AnnotationRecord],
    schema: &TagSchema,
) -> Result<Vec<CategoryTagAgreement>, AgreementError> {
    Ok(tracker_from_records(records, schema, None)?.overall(schema))
}

/// Full agreement report for the records of one session.
pub fn session_report(
    session_id: &str,
    records: &[AnnotationRecord],
    schema: &TagSchema,
) -> Result<SessionReport, AgreementError> {
    Ok(tracker_from_records(records, schema, Some(session_id))?.report(session_id, schema))
}
