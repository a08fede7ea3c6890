use chrono::{DateTime, SecondsFormat, Utc};
use serde::{Deserialize, Serialize};

/// One annotator's choice for one category of one image.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotationRecord {
    pub session_id: String,
    pub annotator_id: String,
    pub image_id: String,
    pub category_id: String,
    pub option_id: String,
    #[serde(with = "iso8601")]
    pub timestamp: DateTime<Utc>,
}

impl AnnotationRecord {
    pub fn new(
        session_id: impl Into<String>,
        annotator_id: impl Into<String>,
        image_id: impl Into<String>,
        category_id: impl Into<String>,
        option_id: impl Into<String>,
        timestamp: DateTime<Utc>,
    ) -> Self {
        AnnotationRecord {
            session_id: session_id.into(),
            annotator_id: annotator_id.into(),
            image_id: image_id.into(),
            category_id: category_id.into(),
            option_id: option_id.into(),
            timestamp,
        }
    }
}

/// Fixed UTC rendering used by every document and CSV: `2024-05-01T12:00:00Z`,
/// with fractional seconds only when present.
pub fn format_timestamp(ts: &DateTime<Utc>) -> String {
    ts.to_rfc3339_opts(SecondsFormat::AutoSi, true)
}

pub fn parse_timestamp(text: &str) -> Result<DateTime<Utc>, chrono::ParseError> {
    DateTime::parse_from_rfc3339(text.trim()).map(|t| t.with_timezone(&Utc))
}

pub(crate) mod iso8601 {
    use chrono::{DateTime, Utc};
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(ts: &DateTime<Utc>, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&super::format_timestamp(ts))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<DateTime<Utc>, D::Error> {
        let text = String::deserialize(d)?;
        super::parse_timestamp(&text).map_err(serde::de::Error::custom)
    }
}
