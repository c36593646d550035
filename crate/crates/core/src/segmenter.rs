//! Tokenization, midpoint block splitting for length-limited extractors, and
//! re-basing of block-relative offsets into document coordinates.
//!
//! Blocks are verbatim substrings of the document that start at a token and end
//! at a token, so a block's `base_offset` is the only thing needed to map an
//! offset inside the block back into the original note.

use serde::{Deserialize, Serialize};

use crate::corpus::{CharSpan, Document};
use crate::extract::PredictedEntity;

/// Character limit of the reference entity service.
pub const DEFAULT_MAX_CHARS: usize = 20_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TokenMode {
    /// Maximal runs of non-whitespace.
    #[default]
    Whitespace,
    /// Whitespace runs with every ASCII punctuation character split off.
    Punctuation,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token {
    pub text: String,
    pub span: CharSpan,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Block {
    pub text: String,
    pub base_offset: usize,
    pub ordinal: usize,
    pub token_count: usize,
}

impl Block {
    /// Span of the block in document coordinates.
    pub fn span(&self) -> CharSpan {
        CharSpan::new(self.base_offset, self.base_offset + self.char_len())
    }

    pub fn char_len(&self) -> usize {
        self.text.chars().count()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SegmentError {
    #[error("block limit must be positive")]
    ZeroLimit,
    #[error("token {token:?} at {span} is longer than the {max_chars}-character block limit")]
    Unsplittable {
        token: String,
        span: CharSpan,
        max_chars: usize,
    },
    #[error("entity {span} lies outside block {ordinal} of length {len}")]
    OutOfBlock {
        span: CharSpan,
        ordinal: usize,
        len: usize,
    },
}

pub fn tokenize(text: &str, mode: TokenMode) -> Vec<Token> {
    let mut tokens = Vec::new();
    let mut current: Option<(usize, String)> = None;
    let flush = |current: &mut Option<(usize, String)>, end: usize, tokens: &mut Vec<Token>| {
        if let Some((begin, text)) = current.take() {
            tokens.push(Token {
                text,
                span: CharSpan::new(begin, end),
            });
        }
    };
    for (i, c) in text.chars().enumerate() {
        if c.is_whitespace() {
            flush(&mut current, i, &mut tokens);
        } else if mode == TokenMode::Punctuation && c.is_ascii_punctuation() {
            flush(&mut current, i, &mut tokens);
            tokens.push(Token {
                text: c.to_string(),
                span: CharSpan::new(i, i + 1),
            });
        } else {
            match current.as_mut() {
                Some((_, s)) => s.push(c),
                None => current = Some((i, c.to_string())),
            }
        }
    }
    let n = text.chars().count();
    flush(&mut current, n, &mut tokens);
    tokens
}

/// Tokens of `doc` restricted to `span`, in document coordinates.
pub fn tokenize_span(doc: &Document, span: CharSpan, mode: TokenMode) -> Vec<Token> {
    tokenize(doc.slice(span), mode)
        .into_iter()
        .map(|t| Token {
            text: t.text,
            span: t.span.shift(span.begin),
        })
        .collect()
}

/// Split `doc` into blocks of at most `max_chars` characters.
///
/// The token list is halved at index `n / 2` until every block fits; blocks are
/// returned in document order.
pub fn segment(doc: &Document, max_chars: usize, mode: TokenMode) -> Result<Vec<Block>, SegmentError> {
    if max_chars == 0 {
        return Err(SegmentError::ZeroLimit);
    }
    let tokens = tokenize(doc.text(), mode);
    if tokens.is_empty() {
        return Ok(vec![Block {
            text: String::new(),
            base_offset: 0,
            ordinal: 0,
            token_count: 0,
        }]);
    }
    let mut blocks = Vec::new();
    split(doc, &tokens, max_chars, &mut blocks)?;
    Ok(blocks)
}

fn split(doc: &Document, tokens: &[Token], max_chars: usize, out: &mut Vec<Block>) -> Result<(), SegmentError> {
    let span = CharSpan::new(tokens[0].span.begin, tokens[tokens.len() - 1].span.end);
    if span.len() <= max_chars {
        out.push(Block {
            text: doc.slice(span).to_string(),
            base_offset: span.begin,
            ordinal: out.len(),
            token_count: tokens.len(),
        });
        return Ok(());
    }
    if tokens.len() == 1 {
        return Err(SegmentError::Unsplittable {
            token: tokens[0].text.clone(),
            span,
            max_chars,
        });
    }
    let mid = tokens.len() / 2;
    split(doc, &tokens[..mid], max_chars, out)?;
    split(doc, &tokens[mid..], max_chars, out)
}

/// Shift block-relative entity spans into document coordinates.
pub fn rebase(entities: Vec<PredictedEntity>, block: &Block) -> Result<Vec<PredictedEntity>, SegmentError> {
    let len = block.char_len();
    entities
        .into_iter()
        .map(|mut e| {
            if e.span.end > len || e.span.begin > e.span.end {
                return Err(SegmentError::OutOfBlock {
                    span: e.span,
                    ordinal: block.ordinal,
                    len,
                });
            }
            e.span = e.span.shift(block.base_offset);
            Ok(e)
        })
        .collect()
}

/// True when `span` lies within `window` characters of a point where two
/// adjacent blocks meet. Such entities may have been cut by the split.
pub fn near_block_boundary(blocks: &[Block], span: CharSpan, window: usize) -> bool {
    blocks.windows(2).any(|pair| {
        let gap = CharSpan::new(pair[0].span().end, pair[1].base_offset);
        span.distance(&gap) <= window
    })
}
