//! Clinical note loading and gold annotation parsing.
//!
//! Three gold formats are supported, all converted into character-offset
//! [`GoldEntity`] values:
//!
//! - i2b2 medication entries addressed by `line:token` pairs ([`parse_i2b2_annotations`]),
//! - brat standoff rows ([`parse_brat_annotations`]),
//! - tag/quote/begin/end entries ([`parse_offset_pair_annotations`]).
//!
//! Every parser checks that the annotated text matches the document at the
//! resolved span. Entities that do not match are kept and flagged, never
//! silently moved.

mod brat;
mod document;
mod i2b2;
mod offset_pair;

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

pub use self::brat::{parse_brat_annotations, GoldTypeMap};
pub use self::document::{collapse_whitespace, normalize_text, CharSpan, Document, LineTokenRef};
pub use self::i2b2::parse_i2b2_annotations;
pub use self::offset_pair::{parse_offset_pair_annotations, ALIGNMENT_SLACK};

use crate::field::MedField;
use crate::segmenter::{tokenize, TokenMode};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Context {
    List,
    Narrative,
    Unknown,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GoldFormat {
    I2b2,
    Brat,
    OffsetPair,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GoldEntity {
    pub doc_id: String,
    pub field: MedField,
    pub text: String,
    pub span: CharSpan,
    pub context: Context,
    pub source_format: GoldFormat,
    /// Set when the document text at `span` differs from `text` after
    /// whitespace normalization and case folding.
    pub mismatch: bool,
}

/// Counters for recoverable oddities met while parsing one annotation file.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParseWarnings {
    /// Rows skipped because their type maps to no scored field, keyed by type.
    pub skipped_types: BTreeMap<String, usize>,
    /// Offset-pair entries whose recorded end disagreed with begin + text length.
    pub recomputed_ends: usize,
    /// Duplicate `(field, span)` gold entries dropped.
    pub duplicates: usize,
    /// Entities whose text does not match the document at their span.
    pub mismatches: usize,
    /// Discontiguous annotations flattened to contiguous spans.
    pub discontiguous: usize,
}

impl ParseWarnings {
    pub fn merge(&mut self, other: &ParseWarnings) {
        for (k, v) in &other.skipped_types {
            *self.skipped_types.entry(k.clone()).or_default() += v;
        }
        self.recomputed_ends += other.recomputed_ends;
        self.duplicates += other.duplicates;
        self.mismatches += other.mismatches;
        self.discontiguous += other.discontiguous;
    }

    pub fn is_empty(&self) -> bool {
        *self == ParseWarnings::default()
    }
}

/// Parsed gold entities of one document plus the warnings raised on the way.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct GoldSet {
    pub entities: Vec<GoldEntity>,
    pub warnings: ParseWarnings,
}

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error("cannot read {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{} is not valid UTF-8 (first bad byte at {byte})", path.display())]
    Decode { path: PathBuf, byte: usize },
    #[error("annotation line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("annotation line {line}: {message}")]
    Range { line: usize, message: String },
    #[error("annotation line {line}: {text:?} not found within {slack} characters of offset {begin} (entry: {entry})")]
    Alignment {
        line: usize,
        entry: String,
        text: String,
        begin: usize,
        slack: usize,
    },
    #[error("line {line} is outside the document ({lines} lines)")]
    LineOutOfRange { line: usize, lines: usize },
    #[error("token {index} is out of range on line {line} ({count} tokens)")]
    TokenOutOfRange { line: usize, index: usize, count: usize },
}

/// File naming of a corpus on disk: notes are `<id>.<text_ext>`, gold files
/// are `<id>.<gold_ext>`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusLayout {
    pub text_ext: String,
    pub gold_ext: String,
}

impl Default for CorpusLayout {
    fn default() -> Self {
        Self {
            text_ext: "txt".into(),
            gold_ext: "ann".into(),
        }
    }
}

impl CorpusLayout {
    pub fn gold_path(&self, gold_dir: &Path, doc_id: &str) -> PathBuf {
        gold_dir.join(format!("{doc_id}.{}", self.gold_ext))
    }
}

pub fn read_utf8(path: &Path) -> Result<String, CorpusError> {
    let bytes = fs::read(path).map_err(|source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    String::from_utf8(bytes).map_err(|e| CorpusError::Decode {
        path: path.to_path_buf(),
        byte: e.utf8_error().valid_up_to(),
    })
}

/// Load every `*.<text_ext>` file under `dir` as a [`Document`], sorted by id.
pub fn load_documents(dir: &Path, layout: &CorpusLayout) -> Result<Vec<Document>, CorpusError> {
    let entries = fs::read_dir(dir).map_err(|source| CorpusError::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    let mut paths = Vec::new();
    for entry in entries {
        let entry = entry.map_err(|source| CorpusError::Io {
            path: dir.to_path_buf(),
            source,
        })?;
        let path = entry.path();
        if path.is_file() && path.extension().is_some_and(|e| e == layout.text_ext.as_str()) {
            paths.push(path);
        }
    }
    paths.sort();
    paths
        .into_iter()
        .map(|path| {
            let text = read_utf8(&path)?;
            let id = path
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_default();
            Ok(Document::new(id, text))
        })
        .collect()
}

/// Stems of gold files under `dir` with the layout's gold extension.
pub fn gold_file_ids(dir: &Path, layout: &CorpusLayout) -> Result<Vec<String>, CorpusError> {
    let entries = fs::read_dir(dir).map_err(|source| CorpusError::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    let mut ids = Vec::new();
    for entry in entries.flatten() {
        let path = entry.path();
        if path.is_file() && path.extension().is_some_and(|e| e == layout.gold_ext.as_str()) {
            if let Some(stem) = path.file_stem() {
                ids.push(stem.to_string_lossy().into_owned());
            }
        }
    }
    ids.sort();
    Ok(ids)
}

/// Character span covering tokens `token_start..=token_end` of one line.
pub fn line_token_to_char_span(
    doc: &Document,
    r: LineTokenRef,
    token_base: usize,
    mode: TokenMode,
) -> Result<CharSpan, CorpusError> {
    let first = token_span(doc, r.line, r.token_start, token_base, mode)?;
    let last = token_span(doc, r.line, r.token_end, token_base, mode)?;
    Ok(CharSpan::new(first.begin, last.end.max(first.end)))
}

pub(crate) fn token_span(
    doc: &Document,
    line: usize,
    index: usize,
    token_base: usize,
    mode: TokenMode,
) -> Result<CharSpan, CorpusError> {
    let line_span = doc.line_span(line).ok_or(CorpusError::LineOutOfRange {
        line,
        lines: doc.line_count(),
    })?;
    let tokens = tokenize(doc.slice(line_span), mode);
    index
        .checked_sub(token_base)
        .and_then(|i| tokens.get(i))
        .map(|t| t.span.shift(line_span.begin))
        .ok_or(CorpusError::TokenOutOfRange {
            line,
            index,
            count: tokens.len(),
        })
}

/// Flag text mismatches and drop duplicate `(field, span)` entries.
pub(crate) fn finish(doc: &Document, entities: Vec<GoldEntity>, mut warnings: ParseWarnings) -> GoldSet {
    let mut seen = HashSet::new();
    let mut out = Vec::with_capacity(entities.len());
    for mut e in entities {
        if !seen.insert((e.field, e.span)) {
            warnings.duplicates += 1;
            continue;
        }
        let matches = doc
            .get(e.span)
            .is_some_and(|s| normalize_text(s) == normalize_text(&e.text));
        if !matches {
            e.mismatch = true;
        }
        if e.mismatch {
            warnings.mismatches += 1;
        }
        out.push(e);
    }
    GoldSet { entities: out, warnings }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn token_spans_on_one_line() {
        let doc = Document::new("d", "ab cd");
        let at = |s, e| {
            line_token_to_char_span(
                &doc,
                LineTokenRef {
                    line: 1,
                    token_start: s,
                    token_end: e,
                },
                0,
                TokenMode::Whitespace,
            )
        };
        assert_eq!(at(0, 0).unwrap(), CharSpan::new(0, 2));
        assert_eq!(at(1, 1).unwrap(), CharSpan::new(3, 5));
        assert_eq!(at(0, 1).unwrap(), CharSpan::new(0, 5));
        assert!(matches!(
            at(2, 2),
            Err(CorpusError::TokenOutOfRange { line: 1, index: 2, count: 2 })
        ));
    }

    #[test]
    fn one_based_tokens_and_missing_lines() {
        let doc = Document::new("d", "first line\ntake advil daily");
        let r = LineTokenRef {
            line: 2,
            token_start: 2,
            token_end: 2,
        };
        let span = line_token_to_char_span(&doc, r, 1, TokenMode::Whitespace).unwrap();
        assert_eq!(doc.slice(span), "advil");
        let bad = LineTokenRef { line: 3, ..r };
        assert!(matches!(
            line_token_to_char_span(&doc, bad, 1, TokenMode::Whitespace),
            Err(CorpusError::LineOutOfRange { line: 3, lines: 2 })
        ));
        let zero = LineTokenRef {
            token_start: 0,
            token_end: 0,
            ..r
        };
        assert!(line_token_to_char_span(&doc, zero, 1, TokenMode::Whitespace).is_err());
    }

    #[test]
    fn load_documents_reads_stems_in_order() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("b.txt"), "x\ny").unwrap();
        fs::write(dir.path().join("a.txt"), "hello").unwrap();
        fs::write(dir.path().join("a.ann"), "").unwrap();
        let docs = load_documents(dir.path(), &CorpusLayout::default()).unwrap();
        assert_eq!(docs.iter().map(|d| d.id.as_str()).collect::<Vec<_>>(), ["a", "b"]);
        assert_eq!(docs[1].line_starts(), &[0, 2]);
    }

    #[test]
    fn load_documents_empty_dir() {
        let dir = tempfile::tempdir().unwrap();
        assert!(load_documents(dir.path(), &CorpusLayout::default()).unwrap().is_empty());
    }

    #[test]
    fn load_documents_reports_bad_utf8_position() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("bad.txt"), b"abc\xffdef").unwrap();
        let err = load_documents(dir.path(), &CorpusLayout::default()).unwrap_err();
        assert!(matches!(err, CorpusError::Decode { byte: 3, .. }), "{err}");
    }

    #[test]
    fn missing_dir_names_path() {
        let err = load_documents(Path::new("/nonexistent/corpus"), &CorpusLayout::default()).unwrap_err();
        assert!(err.to_string().contains("/nonexistent/corpus"));
    }
}
