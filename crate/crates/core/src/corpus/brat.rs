use std::collections::HashMap;

use super::{finish, CharSpan, Context, CorpusError, Document, GoldEntity, GoldFormat, GoldSet, ParseWarnings};
use crate::field::MedField;

/// Annotation type name to scored field. Types absent from the map, or mapped
/// to `IGNORE`, are skipped.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GoldTypeMap {
    entries: HashMap<String, Option<MedField>>,
}

/// Default table for n2c2-style brat gold.
pub const N2C2_TYPE_MAP: &str = include_str!("../../data/n2c2_types.tsv");

impl GoldTypeMap {
    /// Parse `Type FIELD` lines; `#` starts a comment.
    pub fn parse(table: &str) -> Result<Self, CorpusError> {
        let mut entries = HashMap::new();
        for (idx, raw) in table.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let mut parts = line.split_whitespace();
            let (Some(ty), Some(target), None) = (parts.next(), parts.next(), parts.next()) else {
                return Err(CorpusError::Parse {
                    line: idx + 1,
                    message: format!("expected `Type FIELD`, got {raw:?}"),
                });
            };
            let field = if target.eq_ignore_ascii_case("ignore") {
                None
            } else {
                Some(target.parse::<MedField>().map_err(|e| CorpusError::Parse {
                    line: idx + 1,
                    message: e.to_string(),
                })?)
            };
            entries.insert(ty.to_string(), field);
        }
        Ok(Self { entries })
    }

    pub fn n2c2() -> Self {
        Self::parse(N2C2_TYPE_MAP).expect("bundled type map parses")
    }

    pub fn get(&self, ty: &str) -> Option<MedField> {
        self.entries.get(ty).copied().flatten()
    }
}

impl Default for GoldTypeMap {
    fn default() -> Self {
        Self::n2c2()
    }
}

/// Parse brat standoff text-bound rows (`T1<TAB>Drug 1094 1101<TAB>Lipitor`).
///
/// Relation, attribute and note rows are ignored. Discontiguous fragments
/// (`Drug 10 14;20 25`) collapse to their covering span and are counted.
pub fn parse_brat_annotations(ann_text: &str, doc: &Document, types: &GoldTypeMap) -> Result<GoldSet, CorpusError> {
    let mut entities = Vec::new();
    let mut warnings = ParseWarnings::default();
    for (idx, line) in ann_text.lines().enumerate() {
        let lineno = idx + 1;
        if !line.starts_with('T') {
            continue;
        }
        let mut cols = line.splitn(3, '\t');
        let (Some(_id), Some(meta), text) = (cols.next(), cols.next(), cols.next()) else {
            return Err(CorpusError::Parse {
                line: lineno,
                message: "expected tab-separated id, type/offsets and text".into(),
            });
        };
        let (ty, offsets) = meta.split_once(' ').ok_or_else(|| CorpusError::Parse {
            line: lineno,
            message: format!("missing offsets in {meta:?}"),
        })?;

        let mut fragments = Vec::new();
        for frag in offsets.split(';') {
            let mut nums = frag.split_whitespace();
            let (Some(b), Some(e), None) = (nums.next(), nums.next(), nums.next()) else {
                return Err(CorpusError::Parse {
                    line: lineno,
                    message: format!("expected `begin end`, got {frag:?}"),
                });
            };
            let parse = |s: &str| {
                s.parse::<usize>().map_err(|_| CorpusError::Parse {
                    line: lineno,
                    message: format!("offset {s:?} is not a non-negative integer"),
                })
            };
            let (b, e) = (parse(b)?, parse(e)?);
            if e <= b {
                return Err(CorpusError::Range {
                    line: lineno,
                    message: format!("end {e} is not after begin {b}"),
                });
            }
            if e > doc.char_len() {
                return Err(CorpusError::Range {
                    line: lineno,
                    message: format!("end {e} exceeds document length {}", doc.char_len()),
                });
            }
            fragments.push(CharSpan::new(b, e));
        }

        let Some(field) = types.get(ty) else {
            *warnings.skipped_types.entry(ty.to_string()).or_default() += 1;
            continue;
        };
        if fragments.len() > 1 {
            warnings.discontiguous += 1;
        }
        let begin = fragments.iter().map(|s| s.begin).min().unwrap();
        let end = fragments.iter().map(|s| s.end).max().unwrap();
        entities.push(GoldEntity {
            doc_id: doc.id.clone(),
            field,
            text: text.unwrap_or("").to_string(),
            span: CharSpan::new(begin, end),
            context: Context::Unknown,
            source_format: GoldFormat::Brat,
            mismatch: false,
        });
    }
    Ok(finish(doc, entities, warnings))
}
