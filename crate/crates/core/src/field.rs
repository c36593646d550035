use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// Medication attribute categories scored by the harness.
///
/// Declaration order is the row order used in reports.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum MedField {
    Name,
    Dosage,
    Frequency,
    Mode,
    Duration,
    Reason,
    Strength,
    Form,
}

impl MedField {
    pub const ALL: [MedField; 8] = [
        MedField::Name,
        MedField::Dosage,
        MedField::Frequency,
        MedField::Mode,
        MedField::Duration,
        MedField::Reason,
        MedField::Strength,
        MedField::Form,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            MedField::Name => "NAME",
            MedField::Dosage => "DOSAGE",
            MedField::Frequency => "FREQUENCY",
            MedField::Mode => "MODE",
            MedField::Duration => "DURATION",
            MedField::Reason => "REASON",
            MedField::Strength => "STRENGTH",
            MedField::Form => "FORM",
        }
    }

    /// Row label as printed in report tables.
    pub fn label(self) -> &'static str {
        match self {
            MedField::Name => "Name",
            MedField::Dosage => "Dosage",
            MedField::Frequency => "Frequency",
            MedField::Mode => "Mode",
            MedField::Duration => "Duration",
            MedField::Reason => "Reason",
            MedField::Strength => "Strength",
            MedField::Form => "Form",
        }
    }

    /// Field for an i2b2 / offset-pair tag (`m`, `do`, `str`, ...).
    pub fn from_tag(tag: &str) -> Option<MedField> {
        Some(match tag {
            "m" => MedField::Name,
            "do" => MedField::Dosage,
            "f" => MedField::Frequency,
            "mo" => MedField::Mode,
            "du" => MedField::Duration,
            "r" => MedField::Reason,
            "str" => MedField::Strength,
            "fo" => MedField::Form,
            _ => return None,
        })
    }
}

impl fmt::Display for MedField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown medication field `{0}`")]
pub struct UnknownField(pub String);

impl FromStr for MedField {
    type Err = UnknownField;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let upper = s.trim().to_ascii_uppercase();
        MedField::ALL
            .into_iter()
            .find(|f| f.as_str() == upper)
            .ok_or_else(|| UnknownField(s.to_string()))
    }
}
