//! Batch evaluation of medication entity extraction against annotated
//! clinical notes.
//!
//! The crate reads gold annotations in three formats, splits long notes into
//! service-sized blocks, runs an extractor over them, matches predictions to
//! gold under exact or lenient rules and aggregates precision, recall and F.

pub mod corpus;
pub mod extract;
pub mod field;
pub mod matcher;
pub mod metrics;
pub mod pipeline;
pub mod profile;
pub mod report;
pub mod segmenter;

pub use corpus::{CharSpan, Document, GoldEntity, GoldSet};
pub use extract::{Extractor, PredictedEntity, RawEntity};
pub use field::MedField;
pub use matcher::{ConfusionCounts, MatchMode};
pub use metrics::{Granularity, Metrics};
pub use profile::EvalProfile;
