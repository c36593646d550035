//! Browser demo for the medeval core: split a note into blocks, score
//! predicted spans against gold in all three matching modes, and run the
//! missing-field adjustment scenarios. See `www/index.html`.
//!
//! Every export takes and returns JSON strings. The `*_json` functions hold
//! the logic and are plain Rust so they can be tested off the browser.

use serde::{Deserialize, Serialize};
use wasm_bindgen::prelude::*;

use medeval::corpus::{CharSpan, Context, Document, GoldEntity, GoldFormat};
use medeval::extract::PredictedEntity;
use medeval::matcher::{match_document, ConfusionCounts, MatchMode};
use medeval::metrics::{adjust_with_field, derive_counts, prf, Metrics, Scenario};
use medeval::segmenter::{segment, TokenMode};
use medeval::MedField;

#[derive(Serialize)]
struct BlockView {
    ordinal: usize,
    base_offset: usize,
    chars: usize,
    tokens: usize,
    text: String,
}

pub fn segment_json(text: &str, max_chars: usize) -> Result<String, String> {
    let doc = Document::new("demo", text);
    let blocks = segment(&doc, max_chars, TokenMode::Whitespace).map_err(|e| e.to_string())?;
    let view: Vec<BlockView> = blocks
        .into_iter()
        .map(|b| BlockView {
            ordinal: b.ordinal,
            base_offset: b.base_offset,
            chars: b.char_len(),
            tokens: b.token_count,
            text: b.text,
        })
        .collect();
    serde_json::to_string(&view).map_err(|e| e.to_string())
}

#[derive(Deserialize)]
struct SpanInput {
    field: MedField,
    begin: usize,
    end: usize,
}

#[derive(Serialize)]
struct ModeScore {
    mode: MatchMode,
    counts: ConfusionCounts,
    metrics: Metrics,
    /// (gold index, predicted index) pairs, empty for the token mode.
    pairs: Vec<(usize, usize)>,
}

fn checked(doc: &Document, s: &SpanInput, what: &str) -> Result<CharSpan, String> {
    let span = CharSpan::new(s.begin, s.end);
    if s.begin >= s.end || s.end > doc.char_len() {
        return Err(format!("{what} span [{},{}) is empty or outside the {}-character text", s.begin, s.end, doc.char_len()));
    }
    Ok(span)
}

/// `gold` and `pred` are JSON arrays of `{"field": "NAME", "begin": 0, "end": 5}`.
pub fn score_json(text: &str, gold: &str, pred: &str) -> Result<String, String> {
    let doc = Document::new("demo", text);
    let gold_in: Vec<SpanInput> = serde_json::from_str(gold).map_err(|e| format!("gold: {e}"))?;
    let pred_in: Vec<SpanInput> = serde_json::from_str(pred).map_err(|e| format!("predictions: {e}"))?;
    let mut g = Vec::new();
    for s in &gold_in {
        let span = checked(&doc, s, "gold")?;
        if g.iter().any(|e: &GoldEntity| e.field == s.field && e.span == span) {
            continue;
        }
        g.push(GoldEntity {
            doc_id: doc.id.clone(),
            field: s.field,
            text: doc.slice(span).to_string(),
            span,
            context: Context::Unknown,
            source_format: GoldFormat::OffsetPair,
            mismatch: false,
        });
    }
    let mut p = Vec::new();
    for s in &pred_in {
        let span = checked(&doc, s, "predicted")?;
        p.push(PredictedEntity {
            doc_id: doc.id.clone(),
            field: s.field,
            text: doc.slice(span).to_string(),
            span,
            score: 1.0,
            from_attribute: false,
        });
    }
    let mut out = Vec::new();
    for mode in [MatchMode::Exact, MatchMode::LenientSpan, MatchMode::LenientToken] {
        let m = match_document(&doc, &g, &p, mode, TokenMode::Whitespace).map_err(|e| e.to_string())?;
        let counts = m.total();
        out.push(ModeScore {
            mode,
            counts,
            metrics: prf(counts),
            pairs: if mode == MatchMode::LenientToken { Vec::new() } else { m.trace.pairs },
        });
    }
    serde_json::to_string(&out).map_err(|e| e.to_string())
}

#[derive(Deserialize)]
struct AdjustInput {
    precision: f64,
    recall: f64,
    baseline_gold: u64,
    field_gold: u64,
    scenarios: Vec<Scenario>,
}

#[derive(Serialize)]
struct AdjustRow {
    scenario: String,
    field_counts: Option<ConfusionCounts>,
    metrics: Option<Metrics>,
    error: Option<String>,
}

#[derive(Serialize)]
struct AdjustOutput {
    baseline_counts: ConfusionCounts,
    baseline: Metrics,
    rows: Vec<AdjustRow>,
}

/// Input: `{"precision", "recall", "baseline_gold", "field_gold", "scenarios": [...]}`
/// where each scenario is `{"kind": "perfect"}`,
/// `{"kind": "precision-recall", "precision", "recall"}` or
/// `{"kind": "f-at-recall", "f_score", "recall"}`.
pub fn adjust_json(input: &str) -> Result<String, String> {
    let a: AdjustInput = serde_json::from_str(input).map_err(|e| e.to_string())?;
    let base = derive_counts(a.precision, a.recall, a.baseline_gold).map_err(|e| e.to_string())?;
    let rows = a
        .scenarios
        .iter()
        .map(|s| match s.field_counts(a.field_gold) {
            Ok(c) => AdjustRow {
                scenario: s.to_string(),
                field_counts: Some(c),
                metrics: Some(adjust_with_field(base, c)),
                error: None,
            },
            Err(e) => AdjustRow {
                scenario: s.to_string(),
                field_counts: None,
                metrics: None,
                error: Some(e.to_string()),
            },
        })
        .collect();
    serde_json::to_string(&AdjustOutput {
        baseline_counts: base,
        baseline: prf(base),
        rows,
    })
    .map_err(|e| e.to_string())
}

#[wasm_bindgen]
pub fn segment_text(text: &str, max_chars: usize) -> Result<String, JsValue> {
    segment_json(text, max_chars).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn score_spans(text: &str, gold: &str, pred: &str) -> Result<String, JsValue> {
    score_json(text, gold, pred).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn adjust_scores(input: &str) -> Result<String, JsValue> {
    adjust_json(input).map_err(|e| JsValue::from_str(&e))
}
