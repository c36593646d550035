use std::collections::{BTreeMap, BTreeSet, HashSet};

use super::{PredictedEntity, RawEntity};
use crate::field::MedField;

pub const DEFAULT_FIELD_MAP: &str = include_str!("../../data/field_map.txt");

/// One `CATEGORY TYPE -> FIELD` rule. `*` matches anything; a `None` target
/// drops the entity.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FieldRule {
    pub category: String,
    pub type_label: String,
    pub target: Option<MedField>,
}

impl FieldRule {
    fn matches(&self, category: &str, type_label: &str) -> bool {
        (self.category == "*" || self.category.eq_ignore_ascii_case(category))
            && (self.type_label == "*" || self.type_label.eq_ignore_ascii_case(type_label))
    }

    fn is_catch_all(&self) -> bool {
        self.category == "*" && self.type_label == "*"
    }
}

/// Ordered rule list; the first matching rule wins.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FieldMap {
    rules: Vec<FieldRule>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("field map line {line}: {message}")]
pub struct FieldMapError {
    pub line: usize,
    pub message: String,
}

impl FieldMap {
    /// Build from rules, appending a catch-all drop rule if none is present.
    pub fn new(mut rules: Vec<FieldRule>) -> Self {
        if !rules.iter().any(FieldRule::is_catch_all) {
            rules.push(FieldRule {
                category: "*".into(),
                type_label: "*".into(),
                target: None,
            });
        }
        Self { rules }
    }

    pub fn parse(table: &str) -> Result<Self, FieldMapError> {
        let mut rules = Vec::new();
        for (idx, raw) in table.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |message: String| FieldMapError { line: idx + 1, message };
            let (lhs, rhs) = line
                .split_once("->")
                .ok_or_else(|| err(format!("expected `CATEGORY TYPE -> FIELD`, got {raw:?}")))?;
            let mut pats = lhs.split_whitespace();
            let (Some(category), Some(type_label), None) = (pats.next(), pats.next(), pats.next()) else {
                return Err(err(format!("expected two patterns before `->` in {raw:?}")));
            };
            let rhs = rhs.trim();
            let target = if rhs.eq_ignore_ascii_case("drop") {
                None
            } else {
                Some(rhs.parse::<MedField>().map_err(|e| err(e.to_string()))?)
            };
            rules.push(FieldRule {
                category: category.to_string(),
                type_label: type_label.to_string(),
                target,
            });
        }
        Ok(Self::new(rules))
    }

    pub fn rules(&self) -> &[FieldRule] {
        &self.rules
    }

    pub fn map(&self, category: &str, type_label: &str) -> Option<MedField> {
        self.rules
            .iter()
            .find(|r| r.matches(category, type_label))
            .and_then(|r| r.target)
    }
}

impl Default for FieldMap {
    fn default() -> Self {
        Self::parse(DEFAULT_FIELD_MAP).expect("bundled field map parses")
    }
}

/// Filtering knobs applied while normalizing extractor output.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizeOptions {
    pub in_scope: BTreeSet<MedField>,
    /// Applied after the field map, e.g. STRENGTH -> DOSAGE for i2b2 gold.
    pub remap: BTreeMap<MedField, MedField>,
    pub score_threshold: f64,
}

impl Default for NormalizeOptions {
    fn default() -> Self {
        Self {
            in_scope: MedField::ALL.into_iter().filter(|f| *f != MedField::Reason).collect(),
            remap: BTreeMap::new(),
            score_threshold: 0.0,
        }
    }
}

/// Flatten entities and attributes, map them to fields and drop everything
/// the evaluation does not score: unmapped or RATE types, NEGATION-marked
/// entities, out-of-scope fields and low scores. Repeated `(field, span)`
/// pairs, which arise when one attribute is attached to several parents,
/// are kept once.
pub fn normalize(raw: &[RawEntity], map: &FieldMap, opts: &NormalizeOptions, doc_id: &str) -> Vec<PredictedEntity> {
    let mut out = Vec::new();
    let mut seen = HashSet::new();
    for parent in raw {
        for (depth, e) in parent.flatten().into_iter().enumerate() {
            if e.has_trait("NEGATION") {
                continue;
            }
            let Some(mut field) = map.map(&e.category, &e.type_label) else {
                continue;
            };
            if let Some(&to) = opts.remap.get(&field) {
                field = to;
            }
            if !opts.in_scope.contains(&field) || e.score < opts.score_threshold {
                continue;
            }
            if !seen.insert((field, e.span)) {
                continue;
            }
            out.push(PredictedEntity {
                doc_id: doc_id.to_string(),
                field,
                text: e.text.clone(),
                span: e.span,
                score: e.score,
                from_attribute: depth > 0,
            });
        }
    }
    out
}
