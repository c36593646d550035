//! Offline rule-based extractor: lexicon lookup for names and regular
//! expressions for the attribute fields.

use std::collections::HashSet;
use std::str::FromStr;

use regex::Regex;

use super::{ExtractError, Extractor, RawEntity};
use crate::corpus::{CharSpan, Document};
use crate::segmenter::{tokenize, TokenMode};

pub const DEFAULT_ATTACH_WINDOW: usize = 120;

const BUNDLED_LEXICON: &str = include_str!("../../data/lexicon.txt");
const BUNDLED_RULES: &str = include_str!("../../data/rules.tsv");

/// Gap allowed between a name and an amount that is still read as the
/// product strength ("Lipitor 20 mg", "oxybutynin (DITROPAN) 5 mg").
const STRENGTH_GAP: usize = 3;

/// Case-insensitive medication name list.
#[derive(Debug, Clone, Default)]
pub struct Lexicon {
    names: HashSet<String>,
    max_words: usize,
}

impl Lexicon {
    pub fn parse(text: &str) -> Self {
        let mut lex = Lexicon::default();
        for line in text.lines() {
            let line = line.split('#').next().unwrap_or("").trim();
            if !line.is_empty() {
                lex.insert(line);
            }
        }
        lex
    }

    pub fn bundled() -> Self {
        Self::parse(BUNDLED_LEXICON)
    }

    pub fn insert(&mut self, name: &str) {
        let words: Vec<_> = name.split_whitespace().map(str::to_lowercase).collect();
        if words.is_empty() {
            return;
        }
        self.max_words = self.max_words.max(words.len());
        self.names.insert(words.join(" "));
    }

    pub fn contains(&self, name: &str) -> bool {
        self.names.contains(name)
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RuleKind {
    /// Number with a unit; becomes STRENGTH or DOSAGE depending on position.
    Amount,
    Dosage,
    Frequency,
    Mode,
    Duration,
    Form,
}

impl RuleKind {
    fn type_label(self) -> &'static str {
        match self {
            RuleKind::Amount | RuleKind::Dosage => "DOSAGE",
            RuleKind::Frequency => "FREQUENCY",
            RuleKind::Mode => "ROUTE_OR_MODE",
            RuleKind::Duration => "DURATION",
            RuleKind::Form => "FORM",
        }
    }
}

impl FromStr for RuleKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s.to_ascii_uppercase().as_str() {
            "AMOUNT" => RuleKind::Amount,
            "DOSAGE" => RuleKind::Dosage,
            "FREQUENCY" => RuleKind::Frequency,
            "MODE" => RuleKind::Mode,
            "DURATION" => RuleKind::Duration,
            "FORM" => RuleKind::Form,
            other => return Err(format!("unknown rule kind {other:?}")),
        })
    }
}

#[derive(Debug, Clone)]
pub struct Rule {
    pub kind: RuleKind,
    pub name: String,
    pub regex: Regex,
}

/// Named patterns, one per line: `KIND<TAB>name<TAB>regex`.
#[derive(Debug, Clone)]
pub struct RuleSet {
    rules: Vec<Rule>,
}

impl RuleSet {
    pub fn parse(text: &str) -> Result<Self, String> {
        let mut rules = Vec::new();
        for (idx, line) in text.lines().enumerate() {
            if line.trim().is_empty() || line.trim_start().starts_with('#') {
                continue;
            }
            let mut cols = line.splitn(3, '\t');
            let (Some(kind), Some(name), Some(pattern)) = (cols.next(), cols.next(), cols.next()) else {
                return Err(format!("rules line {}: expected KIND<TAB>name<TAB>regex", idx + 1));
            };
            let kind = kind.parse().map_err(|e| format!("rules line {}: {e}", idx + 1))?;
            let regex = Regex::new(pattern).map_err(|e| format!("rules line {}: {e}", idx + 1))?;
            rules.push(Rule {
                kind,
                name: name.to_string(),
                regex,
            });
        }
        Ok(Self { rules })
    }

    pub fn bundled() -> Self {
        Self::parse(BUNDLED_RULES).expect("bundled rules parse")
    }

    pub fn rules(&self) -> &[Rule] {
        &self.rules
    }
}

pub struct BaselineExtractor {
    lexicon: Lexicon,
    rules: RuleSet,
    window: usize,
}

impl Default for BaselineExtractor {
    fn default() -> Self {
        Self::new(Lexicon::bundled(), RuleSet::bundled())
    }
}

struct Candidate {
    span: CharSpan,
    kind: RuleKind,
    order: usize,
}

impl BaselineExtractor {
    pub fn new(lexicon: Lexicon, rules: RuleSet) -> Self {
        Self {
            lexicon,
            rules,
            window: DEFAULT_ATTACH_WINDOW,
        }
    }

    pub fn with_window(mut self, window: usize) -> Self {
        self.window = window;
        self
    }

    fn find_names(&self, doc: &Document) -> Vec<CharSpan> {
        let tokens = tokenize(doc.text(), TokenMode::Whitespace);
        // Token cores with surrounding punctuation trimmed.
        let cores: Vec<Option<CharSpan>> = tokens
            .iter()
            .map(|t| {
                let chars: Vec<char> = t.text.chars().collect();
                let lead = chars.iter().take_while(|c| c.is_ascii_punctuation()).count();
                let trail = chars.iter().rev().take_while(|c| c.is_ascii_punctuation()).count();
                (lead + trail < chars.len())
                    .then(|| CharSpan::new(t.span.begin + lead, t.span.end - trail))
            })
            .collect();

        let mut names = Vec::new();
        let mut i = 0;
        while i < tokens.len() {
            let mut matched = 0;
            for n in (1..=self.lexicon.max_words.min(tokens.len() - i)).rev() {
                if let Some(span) = self.phrase(doc, &tokens[i..i + n], &cores[i..i + n]) {
                    names.push(span);
                    matched = n;
                    break;
                }
            }
            i += matched.max(1);
        }
        names
    }

    /// Span of the phrase formed by these tokens if it is a lexicon entry.
    fn phrase(&self, doc: &Document, tokens: &[crate::segmenter::Token], cores: &[Option<CharSpan>]) -> Option<CharSpan> {
        let mut words = Vec::with_capacity(tokens.len());
        for (k, core) in cores.iter().enumerate() {
            let core = (*core)?;
            let inner_left = k > 0;
            let inner_right = k + 1 < tokens.len();
            if (inner_left && core.begin != tokens[k].span.begin) || (inner_right && core.end != tokens[k].span.end) {
                return None;
            }
            if inner_right {
                let gap = doc.slice(CharSpan::new(tokens[k].span.end, tokens[k + 1].span.begin));
                if !matches!(gap, " " | "\n" | "\r\n") {
                    return None;
                }
            }
            words.push(doc.slice(core).to_lowercase());
        }
        let first = cores[0]?;
        let last = cores[cores.len() - 1]?;
        self.lexicon
            .contains(&words.join(" "))
            .then(|| CharSpan::new(first.begin, last.end))
    }

    fn find_attributes(&self, doc: &Document, names: &[CharSpan]) -> Vec<Candidate> {
        let mut found = Vec::new();
        for (order, rule) in self.rules.rules.iter().enumerate() {
            for m in rule.regex.find_iter(doc.text()) {
                if m.as_str().trim().is_empty() {
                    continue;
                }
                let span = CharSpan::new(doc.char_offset_of_byte(m.start()), doc.char_offset_of_byte(m.end()));
                found.push(Candidate {
                    span,
                    kind: rule.kind,
                    order,
                });
            }
        }
        // Longest match first, then leftmost, then rule order.
        found.sort_by_key(|c| (std::cmp::Reverse(c.span.len()), c.span.begin, c.order));
        let mut taken: Vec<CharSpan> = names.to_vec();
        let mut kept = Vec::new();
        for c in found {
            if taken.iter().any(|t| t.overlaps(&c.span)) {
                continue;
            }
            taken.push(c.span);
            kept.push(c);
        }
        kept.sort_by_key(|c| c.span.begin);
        kept
    }

    fn classify_amount(&self, doc: &Document, span: CharSpan, names: &[CharSpan]) -> &'static str {
        let prev = names.iter().filter(|n| n.end <= span.begin).max_by_key(|n| n.end);
        if let Some(name) = prev {
            let gap = doc.slice(CharSpan::new(name.end, span.begin));
            let residue = gap.chars().filter(|c| !c.is_whitespace() && !matches!(c, '(' | ')' | ',')).count();
            if residue == 0 && gap.chars().count() <= STRENGTH_GAP {
                return "STRENGTH";
            }
        }
        "DOSAGE"
    }

    fn entity(doc: &Document, span: CharSpan, type_label: &str) -> RawEntity {
        RawEntity {
            category: "MEDICATION".into(),
            type_label: type_label.into(),
            text: doc.slice(span).to_string(),
            span,
            score: 1.0,
            traits: Vec::new(),
            attributes: Vec::new(),
        }
    }

    /// Run the lexicon and rules over `text`. Attributes that start within the
    /// attachment window after a name (and before the next name) are nested
    /// under it; the rest are returned as top-level entities.
    pub fn run(&self, text: &str) -> Vec<RawEntity> {
        let doc = Document::new("", text);
        let names = self.find_names(&doc);
        let attributes = self.find_attributes(&doc, &names);

        let mut parents: Vec<RawEntity> = names.iter().map(|&s| Self::entity(&doc, s, "GENERIC_NAME")).collect();
        let mut loose = Vec::new();
        for c in attributes {
            let label = match c.kind {
                RuleKind::Amount => self.classify_amount(&doc, c.span, &names),
                kind => kind.type_label(),
            };
            let e = Self::entity(&doc, c.span, label);
            let owner = names
                .iter()
                .enumerate()
                .filter(|(_, n)| n.end <= c.span.begin)
                .max_by_key(|(_, n)| n.end)
                .filter(|(i, n)| {
                    c.span.begin - n.end <= self.window && names.get(i + 1).is_none_or(|next| next.begin > c.span.begin)
                });
            match owner {
                Some((i, _)) => parents[i].attributes.push(e),
                None => loose.push(e),
            }
        }
        parents.extend(loose);
        parents.sort_by_key(|e| e.span.begin);
        parents
    }
}

impl Extractor for BaselineExtractor {
    fn extract(&self, text: &str) -> Result<Vec<RawEntity>, ExtractError> {
        Ok(self.run(text))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn labels(entities: &[RawEntity]) -> Vec<(String, String)> {
        let mut out: Vec<_> = entities
            .iter()
            .flat_map(|e| e.flatten())
            .map(|e| (e.type_label.clone(), e.text.clone()))
            .collect();
        out.sort();
        out
    }

    #[test]
    fn nafcillin_course() {
        let out = BaselineExtractor::default().run("intravenous nafcillin x 4 weeks");
        assert_eq!(
            labels(&out),
            [
                ("DURATION".into(), "x 4 weeks".into()),
                ("GENERIC_NAME".into(), "nafcillin".into()),
                ("ROUTE_OR_MODE".into(), "intravenous".into()),
            ]
        );
        // The route precedes the name, so it stays top level; the duration attaches.
        let name = out.iter().find(|e| e.type_label == "GENERIC_NAME").unwrap();
        assert_eq!(name.attributes.len(), 1);
        assert_eq!(name.span, CharSpan::new(12, 21));
    }

    #[test]
    fn oxybutynin_sig_covers_six_fields() {
        let text = "oxybutynin (DITROPAN) 5 mg tablet Take 5 mg by mouth 3 (three) times daily";
        let found = labels(&BaselineExtractor::default().run(text));
        let kinds: HashSet<_> = found.iter().map(|(k, _)| k.as_str()).collect();
        for k in ["GENERIC_NAME", "STRENGTH", "FORM", "DOSAGE", "ROUTE_OR_MODE", "FREQUENCY"] {
            assert!(kinds.contains(k), "missing {k} in {found:?}");
        }
        assert!(found.contains(&("STRENGTH".into(), "5 mg".into())));
        assert!(found.contains(&("DOSAGE".into(), "5 mg".into())));
        assert!(found.contains(&("FREQUENCY".into(), "3 (three) times daily".into())));
        assert!(found.contains(&("ROUTE_OR_MODE".into(), "by mouth".into())));
    }

    #[test]
    fn no_medication_content() {
        assert!(BaselineExtractor::default().run("patient rested comfortably").is_empty());
        assert!(BaselineExtractor::default().run("").is_empty());
    }

    #[test]
    fn multi_word_names_across_newline_and_punctuation() {
        let out = BaselineExtractor::default().run("MEDICATIONS: Lipitor, Tylenol with Codeine, polysaccharide\niron complex.");
        let names: Vec<_> = out.iter().map(|e| e.text.as_str()).collect();
        assert_eq!(names, ["Lipitor", "Tylenol with Codeine", "polysaccharide\niron complex"]);
    }

    #[test]
    fn non_ascii_text_offsets_are_characters() {
        let out = BaselineExtractor::default().run("é aspirin 81 mg");
        assert_eq!(out[0].span, CharSpan::new(2, 9));
        assert_eq!(out[0].attributes[0].span, CharSpan::new(10, 15));
        assert_eq!(out[0].attributes[0].type_label, "STRENGTH");
    }

    #[test]
    fn attachment_window_is_respected() {
        let text = format!("aspirin{}daily", " ".repeat(20));
        let out = BaselineExtractor::default().with_window(10).run(&text);
        assert_eq!(out.len(), 2);
        assert!(out[0].attributes.is_empty());
        let out = BaselineExtractor::default().run(&text);
        assert_eq!(out.len(), 1);
    }

    #[test]
    fn dotted_latin_and_abbreviations() {
        let found = labels(&BaselineExtractor::default().run("lasix 40 mg PO b.i.d."));
        assert!(found.contains(&("FREQUENCY".into(), "b.i.d.".into())), "{found:?}");
        assert!(found.contains(&("ROUTE_OR_MODE".into(), "PO".into())));
    }

    #[test]
    fn rule_file_errors() {
        assert!(RuleSet::parse("MODE\tonly-two").is_err());
        assert!(RuleSet::parse("RATE\tx\tfoo").is_err());
        assert!(RuleSet::parse("MODE\tx\t(unclosed").is_err());
    }
}
