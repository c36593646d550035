//! Corpus-level orchestration: extract predictions for every document, persist
//! them as line-delimited records, load gold and score.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{BufRead, Write};
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::corpus::{
    gold_file_ids, parse_brat_annotations, parse_i2b2_annotations, parse_offset_pair_annotations, read_utf8, CharSpan,
    CorpusError, Document, GoldEntity, GoldFormat, ParseWarnings,
};
use crate::extract::{normalize, ExtractError, Extractor, PredictedEntity};
use crate::field::MedField;
use crate::matcher::{match_document, trace_records, DocumentMatch, MatchError, MatchMode, TraceRecord};
use crate::metrics::{stratify_by_context, Granularity, MetricsError, Stratified, StratumInput};
use crate::profile::EvalProfile;
use crate::report::EvalReport;
use crate::segmenter::{near_block_boundary, rebase, segment, Block, SegmentError};

pub const DEFAULT_WORKERS: usize = 4;

/// Predictions this close to a block seam are reported as possibly cut.
pub const BOUNDARY_WINDOW: usize = 3;

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Segment(#[from] SegmentError),
    #[error(transparent)]
    Extract(#[from] ExtractError),
    #[error(transparent)]
    Match(#[from] MatchError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("{kind} reference documents missing from the corpus: {}", ids.join(", "))]
    UnknownDocuments { kind: &'static str, ids: Vec<String> },
    #[error("predictions line {line}: {message}")]
    Predictions { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Result of extracting one document.
#[derive(Debug, Clone, PartialEq)]
pub struct DocExtraction {
    pub doc_id: String,
    pub chars: usize,
    pub blocks: usize,
    pub predictions: Vec<PredictedEntity>,
    /// Predictions lying within [`BOUNDARY_WINDOW`] characters of a block seam.
    pub boundary_adjacent: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExtractFailure {
    pub doc_id: String,
    pub message: String,
}

/// Per-document outcomes in corpus order.
#[derive(Debug, Clone, Default)]
pub struct ExtractionRun {
    pub outcomes: Vec<Result<DocExtraction, ExtractFailure>>,
}

impl ExtractionRun {
    pub fn failures(&self) -> impl Iterator<Item = &ExtractFailure> {
        self.outcomes.iter().filter_map(|o| o.as_ref().err())
    }

    pub fn has_failures(&self) -> bool {
        self.failures().next().is_some()
    }
}

/// Block limit for this extractor under this profile.
pub fn block_limit(extractor: &dyn Extractor, profile: &EvalProfile) -> usize {
    extractor.max_chars().map_or(profile.max_chars, |m| m.min(profile.max_chars))
}

/// Segment (when over the limit), extract each block, map fields and shift
/// spans back into document coordinates.
pub fn extract_document(
    doc: &Document,
    extractor: &dyn Extractor,
    profile: &EvalProfile,
) -> Result<DocExtraction, PipelineError> {
    let limit = block_limit(extractor, profile);
    let blocks = if doc.char_len() <= limit {
        vec![Block {
            text: doc.text().to_string(),
            base_offset: 0,
            ordinal: 0,
            token_count: 0,
        }]
    } else {
        segment(doc, limit, profile.token_mode)?
    };
    let opts = profile.normalize_options();
    let mut predictions = Vec::new();
    for block in &blocks {
        let raw = extractor.extract(&block.text)?;
        let mapped = normalize(&raw, &profile.field_map, &opts, &doc.id);
        predictions.extend(rebase(mapped, block)?);
    }
    predictions.sort_by_key(|p| (p.span, p.field));
    let boundary_adjacent = predictions
        .iter()
        .filter(|p| near_block_boundary(&blocks, p.span, BOUNDARY_WINDOW))
        .count();
    Ok(DocExtraction {
        doc_id: doc.id.clone(),
        chars: doc.char_len(),
        blocks: blocks.len(),
        predictions,
        boundary_adjacent,
    })
}

/// Extract every document with up to `workers` threads. Failures are
/// collected per document and never stop the run. `progress` is called once
/// per finished document, from worker threads.
pub fn extract_corpus(
    docs: &[Document],
    extractor: &dyn Extractor,
    profile: &EvalProfile,
    workers: usize,
    progress: &(dyn Fn(&Result<DocExtraction, ExtractFailure>) + Sync),
) -> ExtractionRun {
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<Result<DocExtraction, ExtractFailure>>>> = Mutex::new(vec![None; docs.len()]);
    std::thread::scope(|s| {
        for _ in 0..workers.clamp(1, docs.len().max(1)) {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(doc) = docs.get(i) else { break };
                let outcome = extract_document(doc, extractor, profile).map_err(|e| ExtractFailure {
                    doc_id: doc.id.clone(),
                    message: e.to_string(),
                });
                progress(&outcome);
                slots.lock().unwrap_or_else(|e| e.into_inner())[i] = Some(outcome);
            });
        }
    });
    let outcomes = slots
        .into_inner()
        .unwrap_or_else(|e| e.into_inner())
        .into_iter()
        .map(|o| o.expect("every document visited"))
        .collect();
    ExtractionRun { outcomes }
}

/// One line of a predictions file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "record", rename_all = "lowercase")]
pub enum PredictionRecord {
    Document {
        doc_id: String,
        chars: usize,
        blocks: usize,
        entities: usize,
    },
    Prediction {
        doc_id: String,
        field: MedField,
        text: String,
        begin: usize,
        end: usize,
        score: f64,
    },
    Error {
        doc_id: String,
        message: String,
    },
}

pub fn write_predictions(out: &mut dyn Write, run: &ExtractionRun) -> std::io::Result<()> {
    let mut line = |rec: &PredictionRecord| -> std::io::Result<()> {
        serde_json::to_writer(&mut *out, rec)?;
        out.write_all(b"\n")
    };
    for outcome in &run.outcomes {
        match outcome {
            Ok(d) => {
                line(&PredictionRecord::Document {
                    doc_id: d.doc_id.clone(),
                    chars: d.chars,
                    blocks: d.blocks,
                    entities: d.predictions.len(),
                })?;
                for p in &d.predictions {
                    line(&PredictionRecord::Prediction {
                        doc_id: p.doc_id.clone(),
                        field: p.field,
                        text: p.text.clone(),
                        begin: p.span.begin,
                        end: p.span.end,
                        score: p.score,
                    })?;
                }
            }
            Err(f) => line(&PredictionRecord::Error {
                doc_id: f.doc_id.clone(),
                message: f.message.clone(),
            })?,
        }
    }
    out.flush()
}

/// Parsed predictions file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PredictionSet {
    /// Every document that has a `document` or `prediction` record.
    pub by_doc: BTreeMap<String, Vec<PredictedEntity>>,
    pub errors: Vec<ExtractFailure>,
}

pub fn read_predictions(input: impl BufRead) -> Result<PredictionSet, PipelineError> {
    let mut set = PredictionSet::default();
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: PredictionRecord = serde_json::from_str(&line).map_err(|e| PipelineError::Predictions {
            line: i + 1,
            message: e.to_string(),
        })?;
        match rec {
            PredictionRecord::Document { doc_id, .. } => {
                set.by_doc.entry(doc_id).or_default();
            }
            PredictionRecord::Prediction {
                doc_id,
                field,
                text,
                begin,
                end,
                score,
            } => {
                if end < begin {
                    return Err(PipelineError::Predictions {
                        line: i + 1,
                        message: format!("end {end} precedes begin {begin}"),
                    });
                }
                set.by_doc.entry(doc_id.clone()).or_default().push(PredictedEntity {
                    doc_id,
                    field,
                    text,
                    span: CharSpan::new(begin, end),
                    score,
                    from_attribute: false,
                });
            }
            PredictionRecord::Error { doc_id, message } => set.errors.push(ExtractFailure { doc_id, message }),
        }
    }
    Ok(set)
}

pub fn read_predictions_file(path: &Path) -> Result<PredictionSet, PipelineError> {
    let f = std::fs::File::open(path).map_err(|source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    read_predictions(std::io::BufReader::new(f))
}

/// Gold entities for every corpus document.
#[derive(Debug, Clone, Default)]
pub struct GoldCorpus {
    pub by_doc: BTreeMap<String, Vec<GoldEntity>>,
    pub warnings: ParseWarnings,
    /// Corpus documents without a gold file; scored against empty gold.
    pub missing: Vec<String>,
}

/// Parse one gold file for `doc` according to the profile's gold format.
pub fn parse_gold(ann_text: &str, doc: &Document, profile: &EvalProfile) -> Result<crate::corpus::GoldSet, CorpusError> {
    match profile.gold_format {
        GoldFormat::I2b2 => parse_i2b2_annotations(ann_text, doc, profile.token_base, profile.token_mode),
        GoldFormat::Brat => parse_brat_annotations(ann_text, doc, &profile.gold_types),
        GoldFormat::OffsetPair => parse_offset_pair_annotations(ann_text, doc),
    }
}

pub fn load_gold(docs: &[Document], gold_dir: &Path, profile: &EvalProfile) -> Result<GoldCorpus, PipelineError> {
    let known: BTreeSet<&str> = docs.iter().map(|d| d.id.as_str()).collect();
    let files = gold_file_ids(gold_dir, &profile.layout)?;
    let unknown: Vec<String> = files.iter().filter(|id| !known.contains(id.as_str())).cloned().collect();
    if !unknown.is_empty() {
        return Err(PipelineError::UnknownDocuments { kind: "gold", ids: unknown });
    }
    let present: BTreeSet<&str> = files.iter().map(String::as_str).collect();
    let mut out = GoldCorpus::default();
    for doc in docs {
        if !present.contains(doc.id.as_str()) {
            out.missing.push(doc.id.clone());
            out.by_doc.insert(doc.id.clone(), Vec::new());
            continue;
        }
        let path = profile.layout.gold_path(gold_dir, &doc.id);
        let set = parse_gold(&read_utf8(&path)?, doc, profile).map_err(|e| match e {
            CorpusError::Io { .. } => e,
            other => CorpusError::Parse {
                line: 0,
                message: format!("{}: {other}", path.display()),
            },
        })?;
        out.warnings.merge(&set.warnings);
        out.by_doc.insert(doc.id.clone(), set.entities);
    }
    Ok(out)
}

/// Fail when predictions name documents outside the corpus.
pub fn check_prediction_ids(docs: &[Document], preds: &PredictionSet) -> Result<(), PipelineError> {
    let known: BTreeSet<&str> = docs.iter().map(|d| d.id.as_str()).collect();
    let unknown: Vec<String> = preds
        .by_doc
        .keys()
        .chain(preds.errors.iter().map(|e| &e.doc_id))
        .filter(|id| !known.contains(id.as_str()))
        .cloned()
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    if unknown.is_empty() {
        Ok(())
    } else {
        Err(PipelineError::UnknownDocuments {
            kind: "predictions",
            ids: unknown,
        })
    }
}

/// In-scope gold and predictions for one document.
fn scoped<'a>(
    profile: &EvalProfile,
    doc: &Document,
    gold: &'a GoldCorpus,
    preds: &'a PredictionSet,
) -> (Vec<GoldEntity>, Vec<PredictedEntity>) {
    let keep = |f: &MedField| profile.in_scope_fields.contains(f);
    let g = gold
        .by_doc
        .get(&doc.id)
        .map(|v| v.iter().filter(|e| keep(&e.field)).cloned().collect())
        .unwrap_or_default();
    let p = preds
        .by_doc
        .get(&doc.id)
        .map(|v| v.iter().filter(|e| keep(&e.field)).cloned().collect())
        .unwrap_or_default();
    (g, p)
}

#[derive(Debug, Clone, Default)]
pub struct Evaluation {
    pub reports: Vec<EvalReport>,
    pub matches: BTreeMap<MatchMode, Vec<DocumentMatch>>,
    pub traces: Vec<TraceRecord>,
}

/// Match and score every corpus document under each mode, producing one
/// report per (mode, granularity).
pub fn evaluate(
    docs: &[Document],
    gold: &GoldCorpus,
    preds: &PredictionSet,
    profile: &EvalProfile,
    modes: &[MatchMode],
    granularities: &[Granularity],
) -> Result<Evaluation, PipelineError> {
    check_prediction_ids(docs, preds)?;
    let mut eval = Evaluation::default();
    for &mode in modes {
        let mut per_doc = Vec::with_capacity(docs.len());
        for doc in docs {
            let (g, p) = scoped(profile, doc, gold, preds);
            let m = match_document(doc, &g, &p, mode, profile.token_mode)?;
            eval.traces.extend(trace_records(&m, &g, &p));
            per_doc.push(m);
        }
        for &gran in granularities {
            eval.reports.push(EvalReport::build(
                &profile.name,
                mode,
                gran,
                &profile.in_scope_fields,
                &per_doc,
            ));
        }
        eval.matches.insert(mode, per_doc);
    }
    Ok(eval)
}

/// List/narrative scores under `mode`. Needs gold with context flags.
pub fn stratify(
    docs: &[Document],
    gold: &GoldCorpus,
    preds: &PredictionSet,
    profile: &EvalProfile,
    mode: MatchMode,
) -> Result<Stratified, PipelineError> {
    if profile.gold_format != GoldFormat::I2b2 {
        return Err(MetricsError::UnsupportedProfile.into());
    }
    check_prediction_ids(docs, preds)?;
    let mut owned = Vec::with_capacity(docs.len());
    for doc in docs {
        let (g, p) = scoped(profile, doc, gold, preds);
        let m = match_document(doc, &g, &p, mode, profile.token_mode)?;
        owned.push((m, g, p));
    }
    let inputs: Vec<StratumInput<'_>> = owned
        .iter()
        .map(|(m, g, p)| StratumInput {
            matched: m,
            gold: g,
            pred: p,
        })
        .collect();
    Ok(stratify_by_context(&inputs)?)
}

pub fn write_traces(out: &mut dyn Write, traces: &[TraceRecord]) -> std::io::Result<()> {
    for t in traces {
        serde_json::to_writer(&mut *out, t)?;
        out.write_all(b"\n")?;
    }
    out.flush()
}
