//! Synthetic annotation sessions.
//!
//! Every image gets a planted option per category. Each annotator picks the
//! planted option with probability `agree_probability`, otherwise one of the
//! remaining options uniformly. Output is fully determined by the seed.

use std::collections::BTreeMap;

use chrono::{DateTime, Duration, TimeZone, Utc};

use crate::record::AnnotationRecord;
use crate::schema::{LookupError, TagSchema};
use crate::session::SplitMix64;

#[derive(Debug, Clone)]
pub struct SimulationConfig {
    pub session_id: String,
    pub region_id: String,
    pub images: usize,
    pub annotators: usize,
    pub agree_probability: f64,
    pub seed: u64,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        SimulationConfig {
            session_id: "sim".into(),
            region_id: "nose".into(),
            images: 20,
            annotators: 4,
            agree_probability: 0.8,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SimulatedSession {
    pub batch: Vec<String>,
    pub annotators: Vec<String>,
    /// Planted option per (image_id, category_id).
    pub planted: BTreeMap<(String, String), String>,
    pub records: Vec<AnnotationRecord>,
}

fn epoch() -> DateTime<Utc> {
    Utc.with_ymd_and_hms(2024, 1, 1, 0, 0, 0).unwrap()
}

pub fn simulate_session(
    schema: &TagSchema,
    config: &SimulationConfig,
) -> Result<SimulatedSession, LookupError> {
    let region = schema.region(&config.region_id)?;
    let mut rng = SplitMix64::new(config.seed);
    let batch: Vec<String> = (1..=config.images).map(|i| format!("img{i:04}")).collect();
    let annotators: Vec<String> = (1..=config.annotators).map(|i| format!("ann{i}")).collect();
    let mut planted = BTreeMap::new();
    let mut records = Vec::new();
    let mut clock = epoch();
    for image in &batch {
        for category in &region.categories {
            let m = category.options.len() as u64;
            let truth = rng.bounded(m) as usize;
            planted.insert(
                (image.clone(), category.id.clone()),
                category.options[truth].id.clone(),
            );
            for annotator in &annotators {
                let pick = if rng.next_f64() < config.agree_probability {
                    truth
                } else {
                    // uniform among the other m - 1 options
                    let other = rng.bounded(m - 1) as usize;
                    if other >= truth {
                        other + 1
                    } else {
                        other
                    }
                };
                clock += Duration::seconds(1);
                records.push(AnnotationRecord::new(
                    config.session_id.as_str(),
                    annotator.as_str(),
                    image.as_str(),
                    category.id.as_str(),
                    category.options[pick].id.as_str(),
                    clock,
                ));
            }
        }
    }
    Ok(SimulatedSession {
        batch,
        annotators,
        planted,
        records,
    })
}
