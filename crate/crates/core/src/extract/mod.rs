//! Extractors turn note text into [`RawEntity`] lists; [`normalize`] maps them
//! into scored [`PredictedEntity`] values.

mod baseline;
mod fieldmap;
#[cfg(feature = "remote")]
mod remote;
mod wire;

use serde::{Deserialize, Serialize};

pub use self::baseline::{BaselineExtractor, Lexicon, RuleKind, RuleSet, DEFAULT_ATTACH_WINDOW};
pub use self::fieldmap::{normalize, FieldMap, FieldMapError, FieldRule, NormalizeOptions};
#[cfg(feature = "remote")]
pub use self::remote::{RemoteConfig, RemoteExtractor, ResponseCache, CACHE_SCHEMA};
pub use self::wire::{decode_response, encode_response, WireEntity, WireRequest, WireResponse, WireTrait};

use crate::corpus::CharSpan;
use crate::field::MedField;

/// Extractor output before mapping into the evaluation taxonomy.
#[derive(Debug, Clone, PartialEq)]
pub struct RawEntity {
    pub category: String,
    pub type_label: String,
    pub text: String,
    pub span: CharSpan,
    pub score: f64,
    pub traits: Vec<String>,
    pub attributes: Vec<RawEntity>,
}

impl RawEntity {
    pub fn has_trait(&self, name: &str) -> bool {
        self.traits.iter().any(|t| t.eq_ignore_ascii_case(name))
    }

    /// The entity and all nested attributes, depth first.
    pub fn flatten(&self) -> Vec<&RawEntity> {
        let mut out = vec![self];
        for a in &self.attributes {
            out.extend(a.flatten());
        }
        out
    }
}

/// One scored prediction in document coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictedEntity {
    pub doc_id: String,
    pub field: MedField,
    pub text: String,
    pub span: CharSpan,
    pub score: f64,
    /// True when the prediction came from an attribute sub-entity rather than
    /// a top-level entity.
    #[serde(default)]
    pub from_attribute: bool,
}

#[derive(Debug, thiserror::Error)]
pub enum ExtractError {
    #[error("input has {len} characters; the extractor accepts at most {max}")]
    TooLong { len: usize, max: usize },
    #[error("service request failed after {attempts} attempt(s): {message}")]
    Service { attempts: u32, message: String },
    #[error("malformed service response ({message}): {excerpt:?}")]
    Decode { message: String, excerpt: String },
    #[error("response cache: {0}")]
    Cache(#[from] std::io::Error),
}

/// Something that finds medication entities in a piece of text.
pub trait Extractor: Sync {
    /// Longest input accepted in one call, in characters.
    fn max_chars(&self) -> Option<usize> {
        None
    }

    fn extract(&self, text: &str) -> Result<Vec<RawEntity>, ExtractError>;
}
