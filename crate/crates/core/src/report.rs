//! Per-field and overall score tables in CSV, JSON and plain text.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::corpus::ParseWarnings;
use crate::field::MedField;
use crate::matcher::{ConfusionCounts, DocumentMatch, MatchMode};
use crate::metrics::{macro_aggregate, prf, Granularity, Metrics};

/// Label of the pooled row over every in-scope field except REASON.
pub const OVERALL_LABEL: &str = "Overall w/o Reason";

pub const CSV_HEADER: &str = "mode,granularity,field,tp,fp,fn,precision,recall,f_score";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub label: String,
    pub field: Option<MedField>,
    pub counts: ConfusionCounts,
    pub metrics: Metrics,
    /// Macro rows only: documents averaged and documents skipped as empty.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub documents: Option<(usize, usize)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub profile: String,
    pub mode: MatchMode,
    pub granularity: Granularity,
    pub rows: Vec<ReportRow>,
    pub overall: ReportRow,
    /// Per document, per field counts.
    pub documents: BTreeMap<String, BTreeMap<MedField, ConfusionCounts>>,
}

impl EvalReport {
    /// Aggregate one mode's document matches. Rows follow [`MedField::ALL`]
    /// order and include only `fields`.
    pub fn build(
        profile: &str,
        mode: MatchMode,
        granularity: Granularity,
        fields: &BTreeSet<MedField>,
        matches: &[DocumentMatch],
    ) -> Self {
        let cell = |m: &DocumentMatch, f: MedField| m.counts.get(&f).copied().unwrap_or_default();
        let overall_fields: Vec<MedField> = fields.iter().copied().filter(|f| *f != MedField::Reason).collect();

        let row = |label: String, field: Option<MedField>, set: &[MedField]| {
            let per_doc: Vec<ConfusionCounts> = matches
                .iter()
                .map(|m| set.iter().map(|f| cell(m, *f)).sum())
                .collect();
            let counts: ConfusionCounts = per_doc.iter().copied().sum();
            match granularity {
                Granularity::Micro => ReportRow {
                    label,
                    field,
                    counts,
                    metrics: prf(counts),
                    documents: None,
                },
                Granularity::Macro => {
                    let r = macro_aggregate(&per_doc);
                    ReportRow {
                        label,
                        field,
                        counts,
                        metrics: r.metrics,
                        documents: Some((r.scored, r.excluded)),
                    }
                }
            }
        };

        let rows = MedField::ALL
            .iter()
            .filter(|f| fields.contains(f))
            .map(|f| row(f.label().to_string(), Some(*f), &[*f]))
            .collect();
        let overall = row(OVERALL_LABEL.to_string(), None, &overall_fields);
        let documents = matches
            .iter()
            .map(|m| {
                let cells = fields.iter().map(|f| (*f, cell(m, *f))).collect();
                (m.doc_id.clone(), cells)
            })
            .collect();
        Self {
            profile: profile.to_string(),
            mode,
            granularity,
            rows,
            overall,
            documents,
        }
    }

    pub fn all_rows(&self) -> impl Iterator<Item = &ReportRow> {
        self.rows.iter().chain(std::iter::once(&self.overall))
    }

    /// CSV body lines (no header), scores to three decimals.
    pub fn csv_lines(&self) -> Vec<String> {
        self.all_rows()
            .map(|r| {
                let field = r.field.map(|f| f.as_str().to_string()).unwrap_or_else(|| "OVERALL".into());
                format!(
                    "{},{},{},{},{},{},{:.3},{:.3},{:.3}",
                    self.mode,
                    self.granularity.as_str(),
                    field,
                    r.counts.tp,
                    r.counts.fp,
                    r.counts.fn_,
                    r.metrics.precision,
                    r.metrics.recall,
                    r.metrics.f_score
                )
            })
            .collect()
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{} / {} / {}",
            self.profile,
            self.mode,
            self.granularity.as_str()
        );
        let _ = writeln!(
            out,
            "{:<20} {:>7} {:>7} {:>7} {:>9} {:>7} {:>7}",
            "Field", "TP", "FP", "FN", "Precision", "Recall", "F"
        );
        for r in self.all_rows() {
            let _ = writeln!(
                out,
                "{:<20} {:>7} {:>7} {:>7} {:>9.3} {:>7.3} {:>7.3}",
                r.label, r.counts.tp, r.counts.fp, r.counts.fn_, r.metrics.precision, r.metrics.recall, r.metrics.f_score
            );
        }
        out
    }
}

/// Header plus the rows of every report.
pub fn render_csv(reports: &[EvalReport]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in reports {
        for line in r.csv_lines() {
            out.push_str(&line);
            out.push('\n');
        }
    }
    out
}

/// Everything one `evaluate` run produces, as stored in `report.json`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ReportBundle {
    pub profile: String,
    pub reports: Vec<EvalReport>,
    pub gold_warnings: ParseWarnings,
    /// Corpus documents that had no gold file.
    pub missing_gold: Vec<String>,
    /// Documents whose extraction failed, with the recorded message.
    pub extraction_errors: Vec<(String, String)>,
}

impl ReportBundle {
    pub fn find(&self, mode: MatchMode, granularity: Granularity) -> Option<&EvalReport> {
        self.reports.iter().find(|r| r.mode == mode && r.granularity == granularity)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for r in &self.reports {
            out.push_str(&r.to_text());
            out.push('\n');
        }
        let w = &self.gold_warnings;
        if !w.is_empty() {
            let _ = writeln!(
                out,
                "gold warnings: {} duplicates, {} text mismatches, {} recomputed ends, {} discontiguous",
                w.duplicates, w.mismatches, w.recomputed_ends, w.discontiguous
            );
            for (ty, n) in &w.skipped_types {
                let _ = writeln!(out, "  skipped annotation type {ty}: {n}");
            }
        }
        if !self.missing_gold.is_empty() {
            let _ = writeln!(out, "documents without gold: {}", self.missing_gold.join(", "));
        }
        for (doc, msg) in &self.extraction_errors {
            let _ = writeln!(out, "extraction failed for {doc}: {msg}");
        }
        out
    }

    pub fn to_csv(&self) -> String {
        render_csv(&self.reports)
    }
}
