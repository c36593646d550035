use std::fmt;

use serde::{Deserialize, Serialize};

/// Half-open character span `[begin, end)`.
///
/// Offsets count Unicode scalar values, not bytes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct CharSpan {
    pub begin: usize,
    pub end: usize,
}

impl CharSpan {
    pub fn new(begin: usize, end: usize) -> Self {
        debug_assert!(begin <= end);
        Self { begin, end }
    }

    pub fn len(&self) -> usize {
        self.end - self.begin
    }

    pub fn is_empty(&self) -> bool {
        self.begin >= self.end
    }

    /// True when the spans share at least one character.
    pub fn overlaps(&self, other: &CharSpan) -> bool {
        self.begin < other.end && other.begin < self.end
    }

    pub fn shift(&self, by: usize) -> CharSpan {
        CharSpan::new(self.begin + by, self.end + by)
    }

    /// Character gap between two spans; zero when they overlap or touch.
    pub fn distance(&self, other: &CharSpan) -> usize {
        other.begin.saturating_sub(self.end).max(self.begin.saturating_sub(other.end))
    }
}

impl fmt::Display for CharSpan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{},{})", self.begin, self.end)
    }
}

/// i2b2-style line/token coordinate. Lines are 1-based; token indices use the
/// base chosen by the caller.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LineTokenRef {
    pub line: usize,
    pub token_start: usize,
    pub token_end: usize,
}

/// A clinical note with a line index.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Document {
    pub id: String,
    text: String,
    /// Byte offset of every character, plus one trailing entry for `text.len()`.
    char_bytes: Vec<usize>,
    line_starts: Vec<usize>,
}

impl Document {
    pub fn new(id: impl Into<String>, text: impl Into<String>) -> Self {
        let text = text.into();
        let mut char_bytes = Vec::with_capacity(text.len() + 1);
        let mut line_starts = vec![0];
        for (ci, (bi, c)) in text.char_indices().enumerate() {
            char_bytes.push(bi);
            if c == '\n' {
                line_starts.push(ci + 1);
            }
        }
        char_bytes.push(text.len());
        Self {
            id: id.into(),
            text,
            char_bytes,
            line_starts,
        }
    }

    pub fn text(&self) -> &str {
        &self.text
    }

    /// Length in characters.
    pub fn char_len(&self) -> usize {
        self.char_bytes.len() - 1
    }

    /// Character offsets at which each physical line begins. LF and CRLF
    /// both end a line at the `\n`.
    pub fn line_starts(&self) -> &[usize] {
        &self.line_starts
    }

    pub fn line_count(&self) -> usize {
        self.line_starts.len()
    }

    /// Character span of 1-based `line`, excluding its terminator.
    pub fn line_span(&self, line: usize) -> Option<CharSpan> {
        if line == 0 || line > self.line_starts.len() {
            return None;
        }
        let begin = self.line_starts[line - 1];
        let mut end = match self.line_starts.get(line) {
            Some(&next) => next - 1,
            None => self.char_len(),
        };
        if end > begin && self.slice(CharSpan::new(end - 1, end)) == "\r" {
            end -= 1;
        }
        Some(CharSpan::new(begin, end))
    }

    /// Text covered by `span`. Panics if the span is out of range.
    pub fn slice(&self, span: CharSpan) -> &str {
        &self.text[self.char_bytes[span.begin]..self.char_bytes[span.end]]
    }

    pub fn get(&self, span: CharSpan) -> Option<&str> {
        if span.begin > span.end || span.end > self.char_len() {
            return None;
        }
        Some(self.slice(span))
    }

    /// Character offset of a byte offset that falls on a char boundary.
    pub fn char_offset_of_byte(&self, byte: usize) -> usize {
        self.char_bytes.partition_point(|&b| b < byte)
    }
}

/// Lowercase and collapse whitespace runs to one space.
pub fn normalize_text(s: &str) -> String {
    collapse_whitespace(s).to_lowercase()
}

pub fn collapse_whitespace(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_one_char_lines() {
        let doc = Document::new("a", "x\ny");
        assert_eq!(doc.line_starts(), &[0, 2]);
        assert_eq!(doc.line_span(2), Some(CharSpan::new(2, 3)));
    }

    #[test]
    fn crlf_lines_exclude_carriage_return() {
        let doc = Document::new("a", "ab\r\ncd");
        assert_eq!(doc.line_starts(), &[0, 4]);
        assert_eq!(doc.line_span(1), Some(CharSpan::new(0, 2)));
        assert_eq!(doc.slice(doc.line_span(2).unwrap()), "cd");
    }

    #[test]
    fn offsets_count_characters_not_bytes() {
        let doc = Document::new("u", "é x");
        assert_eq!(doc.char_len(), 3);
        assert_eq!(doc.slice(CharSpan::new(2, 3)), "x");
        assert_eq!(doc.char_offset_of_byte(3), 2);
    }

    #[test]
    fn span_geometry() {
        let a = CharSpan::new(0, 5);
        let b = CharSpan::new(5, 9);
        assert!(!a.overlaps(&b));
        assert!(a.overlaps(&CharSpan::new(4, 6)));
        assert_eq!(a.distance(&b), 0);
        assert_eq!(a.distance(&CharSpan::new(8, 9)), 3);
    }

    #[test]
    fn whitespace_normalization() {
        assert_eq!(normalize_text("  Tylenol\nwith  Codeine "), "tylenol with codeine");
    }
}
