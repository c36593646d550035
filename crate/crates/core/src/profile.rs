//! Named evaluation settings: gold format, matching mode, granularity, field
//! scope and mapping tables.
//!
//! Three presets ship with the crate (`i2b2`, `n2c2`, `offset-pair`). A TOML
//! profile file can start from a preset and override any key:
//!
//! ```toml
//! preset = "n2c2"
//! name = "n2c2-strict"
//! mode = "exact"
//! secondary_modes = ["lenient-span"]
//! max_chars = 20000
//! field_map = "maps/service.txt"   # relative to the profile file
//! remap = { STRENGTH = "DOSAGE" }
//! ```

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::corpus::{CorpusLayout, GoldFormat, GoldTypeMap};
use crate::extract::{FieldMap, NormalizeOptions};
use crate::field::MedField;
use crate::matcher::MatchMode;
use crate::metrics::Granularity;
use crate::segmenter::{TokenMode, DEFAULT_MAX_CHARS};

#[derive(Debug, Clone)]
pub struct EvalProfile {
    pub name: String,
    pub gold_format: GoldFormat,
    /// Primary matching mode.
    pub mode: MatchMode,
    /// Additional modes reported alongside the primary one.
    pub secondary_modes: Vec<MatchMode>,
    pub granularity: Granularity,
    pub in_scope_fields: BTreeSet<MedField>,
    pub field_map: FieldMap,
    pub field_remap: BTreeMap<MedField, MedField>,
    pub gold_types: GoldTypeMap,
    pub token_base: usize,
    pub token_mode: TokenMode,
    pub max_chars: usize,
    pub score_threshold: f64,
    pub layout: CorpusLayout,
}

#[derive(Debug, thiserror::Error)]
pub enum ProfileError {
    #[error("unknown profile preset {0:?} (expected i2b2, n2c2 or offset-pair)")]
    UnknownPreset(String),
    #[error("cannot read {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("profile {}: {message}", path.display())]
    Invalid { path: PathBuf, message: String },
}

const WITHOUT_REASON: [MedField; 7] = [
    MedField::Name,
    MedField::Dosage,
    MedField::Frequency,
    MedField::Mode,
    MedField::Duration,
    MedField::Strength,
    MedField::Form,
];

impl EvalProfile {
    pub fn preset(name: &str) -> Result<Self, ProfileError> {
        let base = |name: &str, gold_format, mode, secondary: Vec<MatchMode>, fields: &[MedField], gold_ext: &str| EvalProfile {
            name: name.to_string(),
            gold_format,
            mode,
            secondary_modes: secondary,
            granularity: Granularity::Micro,
            in_scope_fields: fields.iter().copied().collect(),
            field_map: FieldMap::default(),
            field_remap: BTreeMap::new(),
            gold_types: GoldTypeMap::n2c2(),
            token_base: 0,
            token_mode: TokenMode::Whitespace,
            max_chars: DEFAULT_MAX_CHARS,
            score_threshold: 0.0,
            layout: CorpusLayout {
                text_ext: "txt".into(),
                gold_ext: gold_ext.into(),
            },
        };
        Ok(match name {
            "i2b2" => base(
                "i2b2",
                GoldFormat::I2b2,
                MatchMode::Exact,
                vec![MatchMode::LenientToken],
                &WITHOUT_REASON[..5],
                "i2b2",
            ),
            "n2c2" => base(
                "n2c2",
                GoldFormat::Brat,
                MatchMode::LenientSpan,
                vec![MatchMode::Exact],
                &WITHOUT_REASON,
                "ann",
            ),
            "offset-pair" => base(
                "offset-pair",
                GoldFormat::OffsetPair,
                MatchMode::Exact,
                vec![MatchMode::LenientSpan],
                &WITHOUT_REASON,
                "gold",
            ),
            other => return Err(ProfileError::UnknownPreset(other.to_string())),
        })
    }

    /// A preset name or the path of a TOML profile file.
    pub fn resolve(name_or_path: &str) -> Result<Self, ProfileError> {
        match Self::preset(name_or_path) {
            Ok(p) => Ok(p),
            Err(ProfileError::UnknownPreset(_)) if Path::new(name_or_path).is_file() => Self::load(Path::new(name_or_path)),
            Err(e) => Err(e),
        }
    }

    pub fn load(path: &Path) -> Result<Self, ProfileError> {
        let text = fs::read_to_string(path).map_err(|source| ProfileError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let invalid = |message: String| ProfileError::Invalid {
            path: path.to_path_buf(),
            message,
        };
        let file: ProfileFile = toml::from_str(&text).map_err(|e| invalid(e.to_string()))?;
        let mut p = Self::preset(file.preset.as_deref().unwrap_or("n2c2"))?;
        let base_dir = path.parent().unwrap_or(Path::new("."));
        let read_rel = |rel: &str| {
            let full = base_dir.join(rel);
            fs::read_to_string(&full).map_err(|source| ProfileError::Io { path: full, source })
        };

        if let Some(v) = file.name {
            p.name = v;
        }
        if let Some(v) = file.gold_format {
            p.gold_format = v;
        }
        if let Some(v) = file.mode {
            p.mode = v;
        }
        if let Some(v) = file.secondary_modes {
            p.secondary_modes = v;
        }
        if let Some(v) = file.granularity {
            p.granularity = v;
        }
        if let Some(v) = file.fields {
            p.in_scope_fields = v
                .iter()
                .map(|f| f.parse::<MedField>())
                .collect::<Result<_, _>>()
                .map_err(|e| invalid(e.to_string()))?;
        }
        if let Some(rel) = file.field_map {
            p.field_map = FieldMap::parse(&read_rel(&rel)?).map_err(|e| invalid(e.to_string()))?;
        }
        if let Some(rel) = file.gold_types {
            p.gold_types = GoldTypeMap::parse(&read_rel(&rel)?).map_err(|e| invalid(e.to_string()))?;
        }
        if let Some(remap) = file.remap {
            for (from, to) in remap {
                let from = from.parse::<MedField>().map_err(|e| invalid(e.to_string()))?;
                let to = to.parse::<MedField>().map_err(|e| invalid(e.to_string()))?;
                p.field_remap.insert(from, to);
            }
        }
        if let Some(v) = file.token_base {
            p.token_base = v;
        }
        if let Some(v) = file.token_mode {
            p.token_mode = v;
        }
        if let Some(v) = file.max_chars {
            p.max_chars = v;
        }
        if let Some(v) = file.score_threshold {
            p.score_threshold = v;
        }
        if let Some(v) = file.text_ext {
            p.layout.text_ext = v;
        }
        if let Some(v) = file.gold_ext {
            p.layout.gold_ext = v;
        }
        p.validate().map_err(invalid)?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.token_base > 1 {
            return Err(format!("token_base must be 0 or 1, got {}", self.token_base));
        }
        if self.max_chars == 0 {
            return Err("max_chars must be positive".into());
        }
        if !(0.0..=1.0).contains(&self.score_threshold) {
            return Err(format!("score_threshold must lie in [0,1], got {}", self.score_threshold));
        }
        if self.in_scope_fields.is_empty() {
            return Err("at least one field must be in scope".into());
        }
        Ok(())
    }

    /// Primary mode followed by the secondary modes, without repeats.
    pub fn modes(&self) -> Vec<MatchMode> {
        let mut out = vec![self.mode];
        for m in &self.secondary_modes {
            if !out.contains(m) {
                out.push(*m);
            }
        }
        out
    }

    pub fn normalize_options(&self) -> NormalizeOptions {
        NormalizeOptions {
            in_scope: self.in_scope_fields.clone(),
            remap: self.field_remap.clone(),
            score_threshold: self.score_threshold,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ProfileFile {
    preset: Option<String>,
    name: Option<String>,
    gold_format: Option<GoldFormat>,
    mode: Option<MatchMode>,
    secondary_modes: Option<Vec<MatchMode>>,
    granularity: Option<Granularity>,
    fields: Option<Vec<String>>,
    field_map: Option<String>,
    gold_types: Option<String>,
    remap: Option<BTreeMap<String, String>>,
    token_base: Option<usize>,
    token_mode: Option<TokenMode>,
    max_chars: Option<usize>,
    score_threshold: Option<f64>,
    text_ext: Option<String>,
    gold_ext: Option<String>,
}
