//! Precision, recall and F-score at system (micro) and document (macro)
//! level, plus counterfactual field adjustments and list/narrative strata.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::corpus::{Context, GoldEntity};
use crate::extract::PredictedEntity;
use crate::matcher::{ConfusionCounts, DocumentMatch};

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub precision: f64,
    pub recall: f64,
    pub f_score: f64,
}

impl Metrics {
    pub fn from_pr(precision: f64, recall: f64) -> Self {
        Self {
            precision,
            recall,
            f_score: harmonic_mean(precision, recall),
        }
    }
}

impl fmt::Display for Metrics {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "P={:.3} R={:.3} F={:.3}", self.precision, self.recall, self.f_score)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Granularity {
    /// Pool counts over all documents, then score once.
    Micro,
    /// Score each document, then average.
    Macro,
}

impl Granularity {
    pub fn as_str(self) -> &'static str {
        match self {
            Granularity::Micro => "micro",
            Granularity::Macro => "macro",
        }
    }
}

impl FromStr for Granularity {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "micro" | "system" => Ok(Granularity::Micro),
            "macro" | "document" => Ok(Granularity::Macro),
            other => Err(format!("unknown granularity {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MetricsError {
    #[error("{0}")]
    Contract(String),
    #[error("no precision reproduces F={f} at recall {r}: recall must exceed F/2")]
    Infeasible { f: f64, r: f64 },
    #[error("gold entities carry no list/narrative context; stratification needs i2b2 gold")]
    UnsupportedProfile,
}

pub fn harmonic_mean(p: f64, r: f64) -> f64 {
    if p + r > 0.0 {
        2.0 * p * r / (p + r)
    } else {
        0.0
    }
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Empty denominators score 0.
pub fn prf(c: ConfusionCounts) -> Metrics {
    Metrics::from_pr(ratio(c.tp, c.tp + c.fp), ratio(c.tp, c.tp + c.fn_))
}

pub fn micro_aggregate<'a>(cells: impl IntoIterator<Item = &'a ConfusionCounts>) -> Metrics {
    prf(cells.into_iter().copied().sum())
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct MacroResult {
    pub metrics: Metrics,
    /// Documents that entered the average.
    pub scored: usize,
    /// Documents with neither gold nor predicted entities.
    pub excluded: usize,
}

/// Average per-document P, R and F. Takes one pooled cell per document.
pub fn macro_aggregate<'a>(per_document: impl IntoIterator<Item = &'a ConfusionCounts>) -> MacroResult {
    let mut sum = (0.0, 0.0, 0.0);
    let mut result = MacroResult::default();
    for c in per_document {
        if c.is_empty() {
            result.excluded += 1;
            continue;
        }
        let m = prf(*c);
        sum.0 += m.precision;
        sum.1 += m.recall;
        sum.2 += m.f_score;
        result.scored += 1;
    }
    if result.scored == 0 {
        log::warn!("macro average over zero scoreable documents");
        return result;
    }
    let n = result.scored as f64;
    result.metrics = Metrics {
        precision: sum.0 / n,
        recall: sum.1 / n,
        f_score: sum.2 / n,
    };
    result
}

/// Reconstruct integer counts from published precision/recall and a gold total.
pub fn derive_counts(p: f64, r: f64, n_gold: u64) -> Result<ConfusionCounts, MetricsError> {
    if !(p.is_finite() && r.is_finite()) {
        return Err(MetricsError::Contract("precision and recall must be finite".into()));
    }
    if p <= 0.0 && r > 0.0 {
        return Err(MetricsError::Contract(format!(
            "precision {p} with positive recall {r} is contradictory"
        )));
    }
    if !(p > 0.0 && p <= 1.0) || !(0.0..=1.0).contains(&r) {
        return Err(MetricsError::Contract(format!("need 0 < p <= 1 and 0 <= r <= 1, got p={p} r={r}")));
    }
    if n_gold == 0 {
        return Err(MetricsError::Contract("gold count must be positive".into()));
    }
    let tp = (r * n_gold as f64).round();
    let fp = (tp / p - tp).round().max(0.0);
    Ok(ConfusionCounts::new(tp as u64, fp as u64, n_gold - tp as u64))
}

/// Precision that gives F-score `f` at recall `r`.
pub fn precision_from_f(f: f64, r: f64) -> Result<f64, MetricsError> {
    if f.is_nan() || f <= 0.0 || !r.is_finite() || 2.0 * r <= f {
        return Err(MetricsError::Infeasible { f, r });
    }
    let p = f * r / (2.0 * r - f);
    if p > 1.0 + 1e-12 {
        return Err(MetricsError::Infeasible { f, r });
    }
    Ok(p.min(1.0))
}

/// Scores after adding a field's counts to the baseline counts.
pub fn adjust_with_field(baseline: ConfusionCounts, field_counts: ConfusionCounts) -> Metrics {
    prf(baseline + field_counts)
}

/// Assumed performance on a field the evaluated system does not emit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Scenario {
    /// Every gold entity found, nothing spurious.
    Perfect,
    /// Another system's published precision and recall.
    PrecisionRecall { precision: f64, recall: f64 },
    /// A published F-score at an assumed recall.
    FAtRecall { f_score: f64, recall: f64 },
}

impl Scenario {
    /// Field counts for this scenario over `n_gold` gold entities.
    pub fn field_counts(&self, n_gold: u64) -> Result<ConfusionCounts, MetricsError> {
        match *self {
            Scenario::Perfect => Ok(ConfusionCounts::new(n_gold, 0, 0)),
            Scenario::PrecisionRecall { precision, recall } => derive_counts(precision, recall, n_gold),
            Scenario::FAtRecall { f_score, recall } => derive_counts(precision_from_f(f_score, recall)?, recall, n_gold),
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Scenario::Perfect => write!(f, "perfect"),
            Scenario::PrecisionRecall { precision, recall } => write!(f, "pr(P={precision}, R={recall})"),
            Scenario::FAtRecall { f_score, recall } => write!(f, "f_at_recall(F={f_score}, R={recall})"),
        }
    }
}

/// One document's inputs to stratification.
#[derive(Debug, Clone, Copy)]
pub struct StratumInput<'a> {
    pub matched: &'a DocumentMatch,
    pub gold: &'a [GoldEntity],
    pub pred: &'a [PredictedEntity],
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct Stratum {
    pub counts: ConfusionCounts,
    pub metrics: Metrics,
    pub gold_entities: u64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct Stratified {
    pub list: Stratum,
    pub narrative: Stratum,
    /// Spurious predictions in documents without any context-bearing gold.
    pub unassigned_fp: u64,
    /// Gold entities without a list/narrative flag.
    pub unknown_gold: u64,
}

/// How spurious predictions are placed in a stratum.
pub const STRATIFY_FP_RULE: &str =
    "false positives are assigned to the stratum of the nearest gold entity by character distance (ties: earlier gold)";

/// Split scores by the gold entities' list/narrative context. Matched and
/// missed entities follow their gold entity; spurious predictions follow
/// [`STRATIFY_FP_RULE`].
pub fn stratify_by_context(docs: &[StratumInput<'_>]) -> Result<Stratified, MetricsError> {
    let known = |c: Context| matches!(c, Context::List | Context::Narrative);
    if !docs.iter().flat_map(|d| d.gold).any(|g| known(g.context)) {
        return Err(MetricsError::UnsupportedProfile);
    }
    let mut out = Stratified::default();
    for d in docs {
        for g in d.gold {
            match g.context {
                Context::List => out.list.gold_entities += 1,
                Context::Narrative => out.narrative.gold_entities += 1,
                Context::Unknown => out.unknown_gold += 1,
            }
        }
        for &(g, _) in &d.matched.trace.pairs {
            if let Some(s) = stratum_mut(&mut out, d.gold[g].context) {
                s.counts.tp += 1;
            }
        }
        for &g in &d.matched.trace.unmatched_gold {
            if let Some(s) = stratum_mut(&mut out, d.gold[g].context) {
                s.counts.fn_ += 1;
            }
        }
        for &p in &d.matched.trace.unmatched_pred {
            let span = d.pred[p].span;
            let nearest = d
                .gold
                .iter()
                .filter(|g| known(g.context))
                .min_by_key(|g| (g.span.distance(&span), g.span.begin));
            match nearest {
                Some(g) => {
                    if let Some(s) = stratum_mut(&mut out, g.context) {
                        s.counts.fp += 1;
                    }
                }
                None => out.unassigned_fp += 1,
            }
        }
    }
    out.list.metrics = prf(out.list.counts);
    out.narrative.metrics = prf(out.narrative.counts);
    Ok(out)
}

fn stratum_mut(out: &mut Stratified, c: Context) -> Option<&mut Stratum> {
    match c {
        Context::List => Some(&mut out.list),
        Context::Narrative => Some(&mut out.narrative),
        Context::Unknown => None,
    }
}
