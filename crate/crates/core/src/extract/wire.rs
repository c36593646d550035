//! JSON wire format of the entity service.

use serde::{Deserialize, Serialize};

use super::{ExtractError, RawEntity};
use crate::corpus::CharSpan;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "PascalCase")]
pub struct WireRequest<'a> {
    pub text: &'a str,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "PascalCase")]
pub struct WireResponse {
    pub entities: Vec<WireEntity>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "PascalCase")]
pub struct WireEntity {
    #[serde(default)]
    pub id: i64,
    pub begin_offset: i64,
    pub end_offset: i64,
    #[serde(default = "one")]
    pub score: f64,
    #[serde(default)]
    pub text: String,
    /// Attribute entities may omit the category; they inherit their parent's.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub category: Option<String>,
    #[serde(rename = "Type")]
    pub type_label: String,
    #[serde(default)]
    pub traits: Vec<WireTrait>,
    #[serde(default)]
    pub attributes: Vec<WireEntity>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "PascalCase")]
pub struct WireTrait {
    pub name: String,
    #[serde(default = "one")]
    pub score: f64,
}

fn one() -> f64 {
    1.0
}

fn excerpt(bytes: &[u8]) -> String {
    String::from_utf8_lossy(&bytes[..bytes.len().min(200)]).into_owned()
}

/// Decode a response body into raw entities.
pub fn decode_response(body: &[u8]) -> Result<Vec<RawEntity>, ExtractError> {
    let response: WireResponse = serde_json::from_slice(body).map_err(|e| ExtractError::Decode {
        message: e.to_string(),
        excerpt: excerpt(body),
    })?;
    response
        .entities
        .iter()
        .map(|e| convert(e, None))
        .collect::<Result<_, String>>()
        .map_err(|message| ExtractError::Decode {
            message,
            excerpt: excerpt(body),
        })
}

fn convert(e: &WireEntity, parent_category: Option<&str>) -> Result<RawEntity, String> {
    if e.begin_offset < 0 || e.end_offset < e.begin_offset {
        return Err(format!("entity {} has invalid offsets {}..{}", e.id, e.begin_offset, e.end_offset));
    }
    if !(0.0..=1.0).contains(&e.score) {
        return Err(format!("entity {} has score {} outside [0,1]", e.id, e.score));
    }
    let category = e
        .category
        .clone()
        .or_else(|| parent_category.map(str::to_string))
        .unwrap_or_default();
    let attributes = e
        .attributes
        .iter()
        .map(|a| convert(a, Some(&category)))
        .collect::<Result<_, _>>()?;
    Ok(RawEntity {
        category,
        type_label: e.type_label.clone(),
        text: e.text.clone(),
        span: CharSpan::new(e.begin_offset as usize, e.end_offset as usize),
        score: e.score,
        traits: e.traits.iter().map(|t| t.name.clone()).collect(),
        attributes,
    })
}

/// Encode raw entities in the service's response format.
pub fn encode_response(entities: &[RawEntity]) -> String {
    let mut next_id = 0;
    let entities = entities.iter().map(|e| to_wire(e, &mut next_id)).collect();
    serde_json::to_string(&WireResponse { entities }).expect("wire entities serialize")
}

fn to_wire(e: &RawEntity, next_id: &mut i64) -> WireEntity {
    let id = *next_id;
    *next_id += 1;
    WireEntity {
        id,
        begin_offset: e.span.begin as i64,
        end_offset: e.span.end as i64,
        score: e.score,
        text: e.text.clone(),
        category: Some(e.category.clone()),
        type_label: e.type_label.clone(),
        traits: e
            .traits
            .iter()
            .map(|name| WireTrait {
                name: name.clone(),
                score: 1.0,
            })
            .collect(),
        attributes: e.attributes.iter().map(|a| to_wire(a, next_id)).collect(),
    }
}
