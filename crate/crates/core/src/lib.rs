//! tagatar-core: tag-based face annotation toolkit.
//!
//! * [`schema`]: tag schemas (regions, categories, ordered options) and the
//!   bundled nose/eyes/eyebrows schema.
//! * [`agreement`]: tag, image and overall tag agreement, plus session
//!   reports.
//! * [`session`]: manifests, seeded batch sampling, the session store, label
//!   aggregation and export.
//! * [`matcher`]: weighted conversion of tag sets to avatar assets.
//! * [`eval`]: accuracy, precision/recall and confusion matrices for
//!   externally produced predictions.
//! * [`simulate`]: deterministic synthetic sessions.

pub mod agreement;
pub mod eval;
pub mod fraction;
pub mod matcher;
pub mod record;
pub mod schema;
pub mod session;
pub mod simulate;

pub use agreement::{
    agreed_tags, image_agreement, overall_tag_agreement, session_report, tag_agreement,
    AgreementError, AgreementTracker, CategoryTally, ImageAgreement, OverallTagAgreement,
    SessionReport, TagAgreement,
};
pub use eval::{evaluate, load_predictions, EvalError, EvalReport, PredictionRecord};
pub use fraction::Fraction;
pub use matcher::{
    asset_score, best_match, category_distance, top_k, AvatarAsset, MatchError, MatchResult,
    TagQuery,
};
pub use record::AnnotationRecord;
pub use schema::{
    bundled_default_schema, load_schema, option_index, validate_schema, LookupError, SchemaError,
    TagSchema, ValidationReport,
};
pub use session::{Session, SessionError, SessionStore};
