//! Gold/prediction alignment.
//!
//! Span modes pair gold and predicted entities of the same field one-to-one
//! with a maximum-cardinality bipartite matching, so counts never depend on
//! input order. The token mode scores coverage of individual gold tokens.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::corpus::{normalize_text, CharSpan, Document, GoldEntity};
use crate::extract::PredictedEntity;
use crate::field::MedField;
use crate::segmenter::{tokenize_span, TokenMode};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MatchMode {
    /// Field, both offsets and text must agree.
    Exact,
    /// Same field and at least one overlapping character.
    LenientSpan,
    /// Per gold token: covered by any same-field prediction.
    LenientToken,
}

impl MatchMode {
    pub fn as_str(self) -> &'static str {
        match self {
            MatchMode::Exact => "exact",
            MatchMode::LenientSpan => "lenient-span",
            MatchMode::LenientToken => "lenient-token",
        }
    }
}

impl fmt::Display for MatchMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for MatchMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "exact" | "strict" => Ok(MatchMode::Exact),
            "lenient-span" | "lenient" => Ok(MatchMode::LenientSpan),
            "lenient-token" => Ok(MatchMode::LenientToken),
            other => Err(format!("unknown match mode {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl ConfusionCounts {
    pub fn new(tp: u64, fp: u64, fn_: u64) -> Self {
        Self { tp, fp, fn_ }
    }

    pub fn is_empty(&self) -> bool {
        self.tp == 0 && self.fp == 0 && self.fn_ == 0
    }

    pub fn gold(&self) -> u64 {
        self.tp + self.fn_
    }

    pub fn predicted(&self) -> u64 {
        self.tp + self.fp
    }
}

impl std::ops::Add for ConfusionCounts {
    type Output = Self;

    fn add(self, o: Self) -> Self {
        Self::new(self.tp + o.tp, self.fp + o.fp, self.fn_ + o.fn_)
    }
}

impl std::ops::AddAssign for ConfusionCounts {
    fn add_assign(&mut self, o: Self) {
        *self = *self + o;
    }
}

impl std::iter::Sum for ConfusionCounts {
    fn sum<I: Iterator<Item = Self>>(iter: I) -> Self {
        iter.fold(Self::default(), |a, b| a + b)
    }
}

/// Index-based alignment of one document's gold and predicted lists.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct MatchTrace {
    /// `(gold index, predicted index)` pairs.
    pub pairs: Vec<(usize, usize)>,
    pub unmatched_gold: Vec<usize>,
    pub unmatched_pred: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DocumentMatch {
    pub doc_id: String,
    pub mode: MatchMode,
    pub trace: MatchTrace,
    pub counts: BTreeMap<MedField, ConfusionCounts>,
}

impl DocumentMatch {
    pub fn total(&self) -> ConfusionCounts {
        self.counts.values().copied().sum()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum MatchError {
    #[error("entity from document {found:?} passed to the matcher for {expected:?}")]
    MixedDocuments { expected: String, found: String },
    #[error("predicted span {span} lies outside document {doc_id:?} ({len} characters)")]
    OutOfRange { doc_id: String, span: CharSpan, len: usize },
}

pub fn is_exact_match(g: &GoldEntity, p: &PredictedEntity) -> bool {
    g.field == p.field && g.span == p.span && normalize_text(&g.text) == normalize_text(&p.text)
}

pub fn is_lenient_match(g: &GoldEntity, p: &PredictedEntity) -> bool {
    g.field == p.field && g.span.overlaps(&p.span)
}

/// Align one document. All entities must carry `doc.id`.
pub fn match_document(
    doc: &Document,
    gold: &[GoldEntity],
    pred: &[PredictedEntity],
    mode: MatchMode,
    tokens: TokenMode,
) -> Result<DocumentMatch, MatchError> {
    for id in gold.iter().map(|g| &g.doc_id).chain(pred.iter().map(|p| &p.doc_id)) {
        if *id != doc.id {
            return Err(MatchError::MixedDocuments {
                expected: doc.id.clone(),
                found: id.clone(),
            });
        }
    }
    if let Some(p) = pred.iter().find(|p| p.span.end > doc.char_len() || p.span.begin > p.span.end) {
        return Err(MatchError::OutOfRange {
            doc_id: doc.id.clone(),
            span: p.span,
            len: doc.char_len(),
        });
    }

    let fields: BTreeSet<MedField> = gold.iter().map(|g| g.field).chain(pred.iter().map(|p| p.field)).collect();
    let predicate: fn(&GoldEntity, &PredictedEntity) -> bool = match mode {
        MatchMode::Exact => is_exact_match,
        MatchMode::LenientSpan | MatchMode::LenientToken => is_lenient_match,
    };

    let mut trace = MatchTrace::default();
    let mut counts = BTreeMap::new();
    for field in fields {
        let g_idx = sorted_indices(gold.iter().map(|g| (g.field, g.span, g.text.as_str())), field);
        let p_idx = sorted_indices(pred.iter().map(|p| (p.field, p.span, p.text.as_str())), field);
        let adjacency: Vec<Vec<usize>> = g_idx
            .iter()
            .map(|&gi| (0..p_idx.len()).filter(|&k| predicate(&gold[gi], &pred[p_idx[k]])).collect())
            .collect();
        let pairing = max_bipartite_matching(&adjacency, p_idx.len());

        let mut matched_pred = vec![false; p_idx.len()];
        let mut cell = ConfusionCounts::default();
        for (k, m) in pairing.iter().enumerate() {
            match m {
                Some(j) => {
                    matched_pred[*j] = true;
                    trace.pairs.push((g_idx[k], p_idx[*j]));
                    cell.tp += 1;
                }
                None => {
                    trace.unmatched_gold.push(g_idx[k]);
                    cell.fn_ += 1;
                }
            }
        }
        for (j, used) in matched_pred.iter().enumerate() {
            if !used {
                trace.unmatched_pred.push(p_idx[j]);
                cell.fp += 1;
            }
        }
        if mode == MatchMode::LenientToken {
            cell = token_counts(doc, gold, pred, field, tokens);
        }
        counts.insert(field, cell);
    }
    trace.pairs.sort_unstable();
    trace.unmatched_gold.sort_unstable();
    trace.unmatched_pred.sort_unstable();
    Ok(DocumentMatch {
        doc_id: doc.id.clone(),
        mode,
        trace,
        counts,
    })
}

/// Indices of entities with `field`, ordered by (begin, end, text).
fn sorted_indices<'a>(items: impl Iterator<Item = (MedField, CharSpan, &'a str)>, field: MedField) -> Vec<usize> {
    let mut v: Vec<(CharSpan, &str, usize)> = items
        .enumerate()
        .filter(|(_, (f, _, _))| *f == field)
        .map(|(i, (_, s, t))| (s, t, i))
        .collect();
    v.sort();
    v.into_iter().map(|(_, _, i)| i).collect()
}

/// Maximum-cardinality matching by augmenting paths. `adjacency[g]` lists the
/// right-hand vertices compatible with left vertex `g`, in preference order.
/// Returns the partner of each left vertex.
pub fn max_bipartite_matching(adjacency: &[Vec<usize>], right: usize) -> Vec<Option<usize>> {
    fn augment(
        g: usize,
        adjacency: &[Vec<usize>],
        seen: &mut [bool],
        owner: &mut [Option<usize>],
        partner: &mut [Option<usize>],
    ) -> bool {
        for &p in &adjacency[g] {
            if seen[p] {
                continue;
            }
            seen[p] = true;
            if owner[p].is_none_or(|other| augment(other, adjacency, seen, owner, partner)) {
                owner[p] = Some(g);
                partner[g] = Some(p);
                return true;
            }
        }
        false
    }

    let mut owner = vec![None; right];
    let mut partner = vec![None; adjacency.len()];
    let mut seen = vec![false; right];
    for g in 0..adjacency.len() {
        seen.iter_mut().for_each(|s| *s = false);
        augment(g, adjacency, &mut seen, &mut owner, &mut partner);
    }
    partner
}

fn token_counts(
    doc: &Document,
    gold: &[GoldEntity],
    pred: &[PredictedEntity],
    field: MedField,
    mode: TokenMode,
) -> ConfusionCounts {
    let explode = |spans: Vec<CharSpan>| -> BTreeSet<CharSpan> {
        spans
            .into_iter()
            .filter(|s| s.end <= doc.char_len())
            .flat_map(|s| tokenize_span(doc, s, mode))
            .map(|t| t.span)
            .collect()
    };
    let gold_spans: Vec<CharSpan> = gold.iter().filter(|g| g.field == field).map(|g| g.span).collect();
    let pred_spans: Vec<CharSpan> = pred.iter().filter(|p| p.field == field).map(|p| p.span).collect();
    let gold_tokens = explode(gold_spans);
    let pred_tokens = explode(pred_spans.clone());

    let tp = gold_tokens
        .iter()
        .filter(|t| pred_spans.iter().any(|p| p.overlaps(t)))
        .count() as u64;
    let fp = pred_tokens
        .iter()
        .filter(|t| !gold_tokens.iter().any(|g| g.overlaps(t)))
        .count() as u64;
    ConfusionCounts::new(tp, fp, gold_tokens.len() as u64 - tp)
}

/// One line of the match-trace diagnostics file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub doc_id: String,
    pub mode: MatchMode,
    pub field: MedField,
    pub gold: Option<CharSpan>,
    pub gold_text: Option<String>,
    pub pred: Option<CharSpan>,
    pub pred_text: Option<String>,
    /// `match`, `missed` (false negative) or `spurious` (false positive).
    pub verdict: String,
}

pub fn trace_records(m: &DocumentMatch, gold: &[GoldEntity], pred: &[PredictedEntity]) -> Vec<TraceRecord> {
    let rec = |g: Option<&GoldEntity>, p: Option<&PredictedEntity>, verdict: &str| TraceRecord {
        doc_id: m.doc_id.clone(),
        mode: m.mode,
        field: g.map(|g| g.field).or(p.map(|p| p.field)).expect("one side present"),
        gold: g.map(|g| g.span),
        gold_text: g.map(|g| g.text.clone()),
        pred: p.map(|p| p.span),
        pred_text: p.map(|p| p.text.clone()),
        verdict: verdict.to_string(),
    };
    let mut out: Vec<TraceRecord> = m
        .trace
        .pairs
        .iter()
        .map(|&(g, p)| rec(Some(&gold[g]), Some(&pred[p]), "match"))
        .chain(m.trace.unmatched_gold.iter().map(|&g| rec(Some(&gold[g]), None, "missed")))
        .chain(m.trace.unmatched_pred.iter().map(|&p| rec(None, Some(&pred[p]), "spurious")))
        .collect();
    out.sort_by_key(|r| (r.field, r.gold.or(r.pred), r.pred));
    out
}
