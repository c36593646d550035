use std::sync::LazyLock;

use regex::Regex;

use super::{finish, token_span, CharSpan, Context, CorpusError, Document, GoldEntity, GoldFormat, GoldSet, ParseWarnings};
use crate::field::MedField;
use crate::segmenter::TokenMode;

static TAG: LazyLock<Regex> = LazyLock::new(|| Regex::new(r#"^([a-z]+)\s*=\s*"([^"]*)""#).unwrap());
static RANGE: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"^\s*,?\s*(\d+):(\d+)\s+(\d+):(\d+)").unwrap());

#[derive(Debug, Clone, Copy)]
struct TokenRange {
    start_line: usize,
    start_token: usize,
    end_line: usize,
    end_token: usize,
}

struct Tag {
    field: MedField,
    text: String,
    ranges: Vec<TokenRange>,
    line: usize,
}

#[derive(Default)]
struct Entry {
    tags: Vec<Tag>,
    context: Option<Context>,
}

/// Parse i2b2 medication entries (`m="..." 19:5 19:5||do="nm"||...||ln="narrative"`).
///
/// Tags may be separated by `||` or whitespace, and several entries may share
/// a line: every `m=` tag opens a new entry. `"nm"` values yield no entity.
/// `token_base` is 0 or 1.
pub fn parse_i2b2_annotations(
    ann_text: &str,
    doc: &Document,
    token_base: usize,
    mode: TokenMode,
) -> Result<GoldSet, CorpusError> {
    let mut entities = Vec::new();
    let mut warnings = ParseWarnings::default();
    let mut entry = Entry::default();

    for (idx, line) in ann_text.lines().enumerate() {
        let lineno = idx + 1;
        let mut rest = line;
        loop {
            rest = rest.trim_start_matches(|c: char| c.is_whitespace() || c == '|');
            if rest.is_empty() {
                break;
            }
            let caps = TAG.captures(rest).ok_or_else(|| CorpusError::Parse {
                line: lineno,
                message: format!("expected tag=\"value\" at {:?}", excerpt(rest)),
            })?;
            let tag = caps.get(1).unwrap().as_str();
            let value = caps.get(2).unwrap().as_str().to_string();
            rest = &rest[caps.get(0).unwrap().end()..];

            let mut ranges = Vec::new();
            while let Some(r) = RANGE.captures(rest) {
                let num = |i| r.get(i).unwrap().as_str().parse::<usize>().unwrap_or(usize::MAX);
                ranges.push(TokenRange {
                    start_line: num(1),
                    start_token: num(2),
                    end_line: num(3),
                    end_token: num(4),
                });
                rest = &rest[r.get(0).unwrap().end()..];
            }

            if tag == "ln" {
                entry.context = Some(match value.as_str() {
                    "list" => Context::List,
                    "narrative" => Context::Narrative,
                    other => {
                        return Err(CorpusError::Parse {
                            line: lineno,
                            message: format!("ln must be \"list\" or \"narrative\", got {other:?}"),
                        })
                    }
                });
                continue;
            }
            let field = match tag {
                "m" | "do" | "mo" | "f" | "du" | "r" => MedField::from_tag(tag).unwrap(),
                other => {
                    return Err(CorpusError::Parse {
                        line: lineno,
                        message: format!("unknown i2b2 tag {other:?}"),
                    })
                }
            };
            if field == MedField::Name && !entry.tags.is_empty() {
                flush(&mut entry, doc, token_base, mode, &mut entities, &mut warnings)?;
            }
            if value == "nm" {
                continue;
            }
            if ranges.is_empty() {
                return Err(CorpusError::Parse {
                    line: lineno,
                    message: format!("{tag}={value:?} has no line:token offsets"),
                });
            }
            entry.tags.push(Tag {
                field,
                text: value,
                ranges,
                line: lineno,
            });
        }
        // One entry per line is the usual layout; `ln` closes it either way.
        if entry.context.is_some() || !entry.tags.is_empty() {
            flush(&mut entry, doc, token_base, mode, &mut entities, &mut warnings)?;
        }
    }
    Ok(finish(doc, entities, warnings))
}

fn flush(
    entry: &mut Entry,
    doc: &Document,
    token_base: usize,
    mode: TokenMode,
    out: &mut Vec<GoldEntity>,
    warnings: &mut ParseWarnings,
) -> Result<(), CorpusError> {
    let entry = std::mem::take(entry);
    let context = entry.context.unwrap_or(Context::Unknown);
    for tag in entry.tags {
        let split = tag.ranges.len() > 1;
        if split {
            warnings.discontiguous += 1;
        }
        for r in &tag.ranges {
            let span = resolve(doc, r, token_base, mode).map_err(|e| CorpusError::Range {
                line: tag.line,
                message: e.to_string(),
            })?;
            out.push(GoldEntity {
                doc_id: doc.id.clone(),
                field: tag.field,
                text: tag.text.clone(),
                span,
                context,
                source_format: GoldFormat::I2b2,
                mismatch: split,
            });
        }
    }
    Ok(())
}

fn resolve(doc: &Document, r: &TokenRange, token_base: usize, mode: TokenMode) -> Result<CharSpan, CorpusError> {
    let first = token_span(doc, r.start_line, r.start_token, token_base, mode)?;
    let last = token_span(doc, r.end_line, r.end_token, token_base, mode)?;
    if last.end < first.begin {
        return Err(CorpusError::Parse {
            line: r.start_line,
            message: format!(
                "range {}:{} {}:{} ends before it starts",
                r.start_line, r.start_token, r.end_line, r.end_token
            ),
        });
    }
    Ok(CharSpan::new(first.begin, last.end))
}

fn excerpt(s: &str) -> String {
    s.chars().take(40).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn doc() -> Document {
        Document::new("d", "header\nsecond\ntake advil daily\n")
    }

    #[test]
    fn advil_fixture_zero_based() {
        let set = parse_i2b2_annotations(
            r#"m="advil" 3:1 3:1||do="nm"||mo="nm"||f="daily" 3:2 3:2||du="nm"||r="nm"||ln="list""#,
            &doc(),
            0,
            TokenMode::Whitespace,
        )
        .unwrap();
        assert_eq!(set.entities.len(), 2);
        let name = &set.entities[0];
        assert_eq!(name.field, MedField::Name);
        assert_eq!(name.span, CharSpan::new(19, 24));
        assert_eq!(name.context, Context::List);
        assert!(!name.mismatch);
        assert_eq!(set.entities[1].field, MedField::Frequency);
    }

    #[test]
    fn only_name_survives_when_rest_is_nm() {
        let set = parse_i2b2_annotations(
            r#"m="advil" 3:1 3:1||do="nm"||mo="nm"||f="nm"||du="nm"||r="nm"||ln="narrative""#,
            &doc(),
            0,
            TokenMode::Whitespace,
        )
        .unwrap();
        assert_eq!(set.entities.len(), 1);
        assert_eq!(set.entities[0].context, Context::Narrative);
    }

    #[test]
    fn malformed_entry_reports_line() {
        let err = parse_i2b2_annotations("\nm=advil 3:1 3:1", &doc(), 0, TokenMode::Whitespace).unwrap_err();
        assert!(matches!(err, CorpusError::Parse { line: 2, .. }), "{err}");
        let err = parse_i2b2_annotations(r#"m="advil""#, &doc(), 0, TokenMode::Whitespace).unwrap_err();
        assert!(matches!(err, CorpusError::Parse { line: 1, .. }));
        let err = parse_i2b2_annotations(r#"m="x" 1:0 1:0||ln="table""#, &doc(), 0, TokenMode::Whitespace).unwrap_err();
        assert!(err.to_string().contains("table"));
    }

    #[test]
    fn out_of_document_reference_is_range_error() {
        let err = parse_i2b2_annotations(r#"m="advil" 3:7 3:7||ln="list""#, &doc(), 0, TokenMode::Whitespace).unwrap_err();
        assert!(matches!(err, CorpusError::Range { line: 1, .. }), "{err}");
        let err = parse_i2b2_annotations(r#"m="advil" 9:0 9:0||ln="list""#, &doc(), 0, TokenMode::Whitespace).unwrap_err();
        assert!(matches!(err, CorpusError::Range { .. }));
    }

    #[test]
    fn lowercase_gold_text_matches_capitalized_note() {
        let d = Document::new("d", "Take Advil daily");
        let set = parse_i2b2_annotations(r#"m="advil" 1:1 1:1||ln="list""#, &d, 0, TokenMode::Whitespace).unwrap();
        assert!(!set.entities[0].mismatch);
        let set = parse_i2b2_annotations(r#"m="aspirin" 1:1 1:1||ln="list""#, &d, 0, TokenMode::Whitespace).unwrap();
        assert!(set.entities[0].mismatch);
        assert_eq!(set.warnings.mismatches, 1);
    }

    #[test]
    fn range_may_cross_lines() {
        let d = Document::new("d", "polysaccharide\niron complex");
        let set = parse_i2b2_annotations(
            r#"m="polysaccharide iron complex" 1:0 2:1||ln="list""#,
            &d,
            0,
            TokenMode::Whitespace,
        )
        .unwrap();
        assert_eq!(set.entities[0].span, CharSpan::new(0, 27));
        assert!(!set.entities[0].mismatch);
    }

    #[test]
    fn discontiguous_ranges_are_flagged() {
        let d = Document::new("d", "advil and then later motrin");
        let set = parse_i2b2_annotations(r#"m="advil motrin" 1:0 1:0,1:4 1:4||ln="list""#, &d, 0, TokenMode::Whitespace)
            .unwrap();
        assert_eq!(set.entities.len(), 2);
        assert!(set.entities.iter().all(|e| e.mismatch));
        assert_eq!(set.warnings.discontiguous, 1);
    }

    #[test]
    fn duplicate_entries_are_deduplicated() {
        let ann = "m=\"advil\" 3:1 3:1||ln=\"list\"\nm=\"advil\" 3:1 3:1||ln=\"list\"";
        let set = parse_i2b2_annotations(ann, &doc(), 0, TokenMode::Whitespace).unwrap();
        assert_eq!(set.entities.len(), 1);
        assert_eq!(set.warnings.duplicates, 1);
    }
}
