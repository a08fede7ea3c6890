//! Independent reference implementations used as test oracles.
//!
//! Nothing here calls into the metric, matcher or evaluator code paths it
//! checks; everything is recomputed from raw records with plain loops and
//! `num_rational` arithmetic.

#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet, HashMap};

use chrono::{Duration, TimeZone, Utc};
use num_bigint::BigInt;
use num_rational::BigRational;
use rand::seq::SliceRandom;
use rand::Rng;

use tagatar_core::matcher::AvatarAsset;
use tagatar_core::schema::{CategoryKind, TagSchema};
use tagatar_core::{AnnotationRecord, SessionReport};

pub fn ratio(k: usize, n: usize) -> BigRational {
    BigRational::new(BigInt::from(k), BigInt::from(n))
}

fn mean(values: &[BigRational]) -> Option<BigRational> {
    if values.is_empty() {
        return None;
    }
    let sum = values
        .iter()
        .fold(BigRational::from_integer(BigInt::from(0)), |a, v| a + v);
    Some(sum / BigInt::from(values.len()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct NaiveImage {
    /// (category, option, k/n) for every agreed tag
    pub agreed: BTreeSet<(String, String, BigRational)>,
    pub mean: Option<BigRational>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NaiveSession {
    pub images: BTreeMap<String, NaiveImage>,
    /// (category, option) -> per-image ratios in image id order, for every
    /// option of every region that has records
    pub overall: BTreeMap<(String, String), Vec<BigRational>>,
    pub highest: Option<BigRational>,
    pub lowest: Option<BigRational>,
    pub average: Option<BigRational>,
}

/// Latest option per (annotator, image, category), by record order.
pub fn latest_choices(records: &[AnnotationRecord]) -> HashMap<(String, String, String), String> {
    let mut latest = HashMap::new();
    for r in records {
        latest.insert(
            (r.annotator_id.clone(), r.image_id.clone(), r.category_id.clone()),
            r.option_id.clone(),
        );
    }
    latest
}

/// Full rescan of raw records: tag, image and overall agreement.
pub fn naive_session(records: &[AnnotationRecord], schema: &TagSchema) -> NaiveSession {
    let latest = latest_choices(records);
    let images: BTreeSet<String> = latest.keys().map(|(_, i, _)| i.clone()).collect();
    let touched: BTreeSet<String> = latest.keys().map(|(_, _, c)| c.clone()).collect();

    let mut cells: HashMap<(&str, &str), Vec<&String>> = HashMap::new();
    for ((_, image, category), option) in &latest {
        cells.entry((image, category)).or_default().push(option);
    }

    let mut per_image = BTreeMap::new();
    for image in &images {
        let mut agreed = BTreeSet::new();
        for region in &schema.regions {
            for category in &region.categories {
                let chosen = cells
                    .get(&(image.as_str(), category.id.as_str()))
                    .cloned()
                    .unwrap_or_default();
                let n = chosen.len();
                if n == 0 {
                    continue;
                }
                let ks: Vec<usize> = category
                    .options
                    .iter()
                    .map(|o| chosen.iter().filter(|c| ***c == o.id).count())
                    .collect();
                let max = *ks.iter().max().unwrap();
                if max < 2 {
                    continue;
                }
                for (o, &k) in category.options.iter().zip(&ks) {
                    if k == max {
                        agreed.insert((category.id.clone(), o.id.clone(), ratio(k, n)));
                    }
                }
            }
        }
        let values: Vec<BigRational> = agreed.iter().map(|(_, _, r)| r.clone()).collect();
        per_image.insert(
            image.clone(),
            NaiveImage {
                mean: mean(&values),
                agreed,
            },
        );
    }

    let mut overall = BTreeMap::new();
    for region in &schema.regions {
        if !region.categories.iter().any(|c| touched.contains(&c.id)) {
            continue;
        }
        for category in &region.categories {
            for option in &category.options {
                let mut ys = Vec::new();
                for img in per_image.values() {
                    for (c, o, r) in &img.agreed {
                        if *c == category.id && *o == option.id {
                            ys.push(r.clone());
                        }
                    }
                }
                overall.insert((category.id.clone(), option.id.clone()), ys);
            }
        }
    }

    let means: Vec<BigRational> = per_image.values().filter_map(|i| i.mean.clone()).collect();
    NaiveSession {
        highest: means.iter().max().cloned(),
        lowest: means.iter().min().cloned(),
        average: mean(&means),
        images: per_image,
        overall,
    }
}

/// Compares a report against the naive oracle; returns the first mismatch.
pub fn compare_report(report: &SessionReport, naive: &NaiveSession) -> Result<(), String> {
    if report.per_image.len() != naive.images.len() {
        return Err(format!(
            "image count {} vs {}",
            report.per_image.len(),
            naive.images.len()
        ));
    }
    for img in &report.per_image {
        let expected = naive
            .images
            .get(&img.image_id)
            .ok_or_else(|| format!("unexpected image {}", img.image_id))?;
        let got: BTreeSet<(String, String, BigRational)> = img
            .agreed_tags
            .iter()
            .map(|t| {
                (
                    t.category_id.clone(),
                    t.option_id.clone(),
                    t.ratio.as_ratio().clone(),
                )
            })
            .collect();
        if got != expected.agreed {
            return Err(format!("agreed tags differ on {}", img.image_id));
        }
        if img.t != expected.agreed.len() {
            return Err(format!("t differs on {}", img.image_id));
        }
        if img.mean.as_ref().map(|m| m.as_ratio().clone()) != expected.mean {
            return Err(format!("image mean differs on {}", img.image_id));
        }
    }
    let mut seen = 0;
    for cat in &report.per_tag {
        for tag in &cat.tags {
            seen += 1;
            let ys = naive
                .overall
                .get(&(cat.category_id.clone(), tag.option_id.clone()))
                .ok_or_else(|| format!("unexpected tag {}.{}", cat.category_id, tag.option_id))?;
            let got: Vec<BigRational> = tag.values.iter().map(|v| v.as_ratio().clone()).collect();
            if &got != ys || tag.a != ys.len() {
                return Err(format!("values differ for {}.{}", cat.category_id, tag.option_id));
            }
            if tag.mean.as_ref().map(|m| m.as_ratio().clone()) != mean(ys) {
                return Err(format!("mean differs for {}.{}", cat.category_id, tag.option_id));
            }
        }
    }
    if seen != naive.overall.len() {
        return Err(format!("tag count {} vs {}", seen, naive.overall.len()));
    }
    let summary = report.summary.as_ref();
    let pick = |f: fn(&tagatar_core::agreement::ImageAgreementSummary) -> &tagatar_core::Fraction| {
        summary.map(|s| f(s).as_ratio().clone())
    };
    if pick(|s| &s.highest_image_agreement) != naive.highest
        || pick(|s| &s.lowest_image_agreement) != naive.lowest
        || pick(|s| &s.average_image_agreement) != naive.average
    {
        return Err("summary differs".into());
    }
    Ok(())
}

/// Random session over the bundled schema: 2-5 annotators, 5-30 images,
/// one region, occasional skipped categories and resubmissions, shuffled
/// record order.
pub fn random_session<R: Rng>(rng: &mut R, schema: &TagSchema, session_id: &str) -> Vec<AnnotationRecord> {
    let annotators = rng.gen_range(2..=5);
    let images = rng.gen_range(5..=30);
    let region = &schema.regions[rng.gen_range(0..schema.regions.len())];
    let agree: f64 = rng.gen_range(0.2..0.95);
    let base = Utc.with_ymd_and_hms(2024, 3, 1, 0, 0, 0).unwrap();
    let mut records = Vec::new();
    for i in 0..images {
        let image = format!("im{i:02}");
        for category in &region.categories {
            let m = category.options.len();
            let truth = rng.gen_range(0..m);
            for a in 0..annotators {
                if rng.gen_bool(0.1) {
                    continue;
                }
                let pick = |rng: &mut R| {
                    if rng.gen_bool(agree) {
                        truth
                    } else {
                        rng.gen_range(0..m)
                    }
                };
                let mut choices = vec![pick(rng)];
                if rng.gen_bool(0.1) {
                    choices.push(pick(rng));
                }
                for c in choices {
                    records.push(AnnotationRecord::new(
                        session_id,
                        format!("a{a}"),
                        image.as_str(),
                        category.id.as_str(),
                        category.options[c].id.as_str(),
                        base,
                    ));
                }
            }
        }
    }
    // Shuffle while keeping each key's submissions in order so the latest
    // choice stays well defined.
    let mut keyed: BTreeMap<(String, String, String), Vec<AnnotationRecord>> = BTreeMap::new();
    for r in records {
        keyed
            .entry((r.annotator_id.clone(), r.image_id.clone(), r.category_id.clone()))
            .or_default()
            .push(r);
    }
    let mut slots: Vec<(String, String, String)> = keyed
        .iter()
        .flat_map(|(k, v)| std::iter::repeat_n(k.clone(), v.len()))
        .collect();
    slots.shuffle(rng);
    let mut cursors: HashMap<(String, String, String), usize> = HashMap::new();
    let mut out = Vec::new();
    for (t, key) in slots.into_iter().enumerate() {
        let idx = cursors.entry(key.clone()).or_insert(0);
        let mut r = keyed[&key][*idx].clone();
        *idx += 1;
        r.timestamp = base + Duration::seconds(t as i64);
        out.push(r);
    }
    out
}

/// Exhaustive scorer: weighted per-category distance recomputed from
/// option positions, ranked by (score, asset id).
pub fn brute_force_ranking(
    schema: &TagSchema,
    region_id: &str,
    query: &BTreeMap<String, String>,
    assets: &[AvatarAsset],
) -> Vec<(String, BigRational)> {
    let region = schema.regions.iter().find(|r| r.id == region_id).unwrap();
    let mut scored: Vec<(String, BigRational)> = assets
        .iter()
        .map(|asset| {
            let mut total = BigRational::from_integer(BigInt::from(0));
            for category in &region.categories {
                let pos = |id: &str| category.options.iter().position(|o| o.id == id).unwrap();
                let a = pos(&query[&category.id]);
                let b = pos(&asset.tags[&category.id]);
                let d = match category.kind {
                    CategoryKind::Ordinal => {
                        ratio(a.max(b) - a.min(b), category.options.len() - 1)
                    }
                    CategoryKind::Discrete => ratio(usize::from(a != b), 1),
                };
                total += d * BigInt::from(category.weight);
            }
            (asset.asset_id.clone(), total)
        })
        .collect();
    scored.sort_by(|x, y| x.1.cmp(&y.1).then_with(|| x.0.cmp(&y.0)));
    scored
}

pub fn random_tags<R: Rng>(rng: &mut R, schema: &TagSchema, region_id: &str) -> BTreeMap<String, String> {
    let region = schema.regions.iter().find(|r| r.id == region_id).unwrap();
    region
        .categories
        .iter()
        .map(|c| {
            (
                c.id.clone(),
                c.options[rng.gen_range(0..c.options.len())].id.clone(),
            )
        })
        .collect()
}

pub fn random_assets<R: Rng>(
    rng: &mut R,
    schema: &TagSchema,
    region_id: &str,
    count: usize,
) -> Vec<AvatarAsset> {
    (0..count)
        .map(|i| AvatarAsset {
            asset_id: format!("{region_id}_{i:04}"),
            region_id: region_id.to_string(),
            tags: random_tags(rng, schema, region_id),
            render: None,
        })
        .collect()
}
