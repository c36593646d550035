use std::sync::LazyLock;

use regex::Regex;

use super::{finish, normalize_text, CharSpan, Context, CorpusError, Document, GoldEntity, GoldFormat, GoldSet, ParseWarnings};
use crate::field::MedField;

/// How far (in characters) the quoted text may sit from its recorded begin
/// before the entry is rejected.
pub const ALIGNMENT_SLACK: usize = 2;

static TAG: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r#"^([a-z]+)\s*=\s*"([^"]*)"\s+(\d+)\s+(\d+)"#).unwrap());

/// Parse `m= "oxybutynin (DITROPAN)" 1527 1546 do= "5 mg" 1566 1568 ...` entries.
///
/// The begin offset is authoritative; the end is always `begin + len(text)`,
/// and disagreeing recorded ends are counted in
/// [`ParseWarnings::recomputed_ends`].
pub fn parse_offset_pair_annotations(ann_text: &str, doc: &Document) -> Result<GoldSet, CorpusError> {
    let mut entities = Vec::new();
    let mut warnings = ParseWarnings::default();
    for (idx, line) in ann_text.lines().enumerate() {
        let lineno = idx + 1;
        let mut rest = line.trim_start();
        while !rest.is_empty() {
            let caps = TAG.captures(rest).ok_or_else(|| CorpusError::Parse {
                line: lineno,
                message: format!("expected tag= \"text\" begin end at {:?}", rest.chars().take(40).collect::<String>()),
            })?;
            let whole = caps.get(0).unwrap();
            let entry = whole.as_str().to_string();
            rest = rest[whole.end()..].trim_start();

            let tag = &caps[1];
            let field = MedField::from_tag(tag).ok_or_else(|| CorpusError::Parse {
                line: lineno,
                message: format!("unknown field tag {tag:?}"),
            })?;
            let text = caps[2].to_string();
            let offset = |i: usize| {
                caps[i].parse::<usize>().map_err(|_| CorpusError::Parse {
                    line: lineno,
                    message: format!("offset {:?} is out of range", &caps[i]),
                })
            };
            let (begin, recorded_end) = (offset(3)?, offset(4)?);
            let len = text.chars().count();
            if len == 0 {
                return Err(CorpusError::Parse {
                    line: lineno,
                    message: format!("empty text in {entry:?}"),
                });
            }
            let end = begin + len;
            if recorded_end != end {
                warnings.recomputed_ends += 1;
            }
            if locate(doc, &text, begin).is_none() {
                return Err(CorpusError::Alignment {
                    line: lineno,
                    entry,
                    text,
                    begin,
                    slack: ALIGNMENT_SLACK,
                });
            }
            entities.push(GoldEntity {
                doc_id: doc.id.clone(),
                field,
                text,
                span: CharSpan::new(begin, end),
                context: Context::Unknown,
                source_format: GoldFormat::OffsetPair,
                mismatch: false,
            });
        }
    }
    Ok(finish(doc, entities, warnings))
}

/// Nearest offset within the slack at which `text` occurs, preferring `begin`.
fn locate(doc: &Document, text: &str, begin: usize) -> Option<usize> {
    let want = normalize_text(text);
    let len = text.chars().count();
    let mut candidates = vec![begin];
    for d in 1..=ALIGNMENT_SLACK {
        candidates.push(begin + d);
        if let Some(b) = begin.checked_sub(d) {
            candidates.push(b);
        }
    }
    candidates
        .into_iter()
        .find(|&b| doc.get(CharSpan::new(b, b + len)).is_some_and(|s| normalize_text(s) == want))
}
