//! Time-aligned annotation parsing, VT/VN/ṼT/ṼN token extraction and
//! dataset balancing.

mod extract;
mod manifest;
mod parse;
mod phones;

pub use extract::{extract_tokens, load_corpus, Skip, SkipReport, SyllableToken, Utterance, Word};
pub use manifest::{balance_dataset, write_tokens, BalanceReport, DatasetManifest, ManifestEntry};
pub use parse::{group_words, parse_alignment_csv, parse_phn, parse_wrd, AlignedUtterance, PhoneSegment, WordSegment};
pub use phones::PhoneClassMap;

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::audio::AudioError;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("phone class map: {0}")]
    Classes(String),
    #[error("no source tokens for class {0}")]
    EmptyClass(SyllableClass),
    #[error("corpus: {0}")]
    Layout(String),
    #[error(transparent)]
    Audio(#[from] AudioError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// The four syllable types: oral/nasal vowel crossed with stop/nasal coda.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SyllableClass {
    VT,
    VN,
    /// Nasal vowel + stop (ṼT).
    NVT,
    /// Nasal vowel + nasal consonant (ṼN).
    NVN,
}

impl SyllableClass {
    pub const ALL: [SyllableClass; 4] = [Self::VT, Self::VN, Self::NVT, Self::NVN];

    pub fn from_flags(nasal_vowel: bool, nasal_coda: bool) -> Self {
        match (nasal_vowel, nasal_coda) {
            (false, false) => Self::VT,
            (false, true) => Self::VN,
            (true, false) => Self::NVT,
            (true, true) => Self::NVN,
        }
    }

    pub fn nasal_vowel(self) -> bool {
        matches!(self, Self::NVT | Self::NVN)
    }

    pub fn nasal_coda(self) -> bool {
        matches!(self, Self::VN | Self::NVN)
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    /// ASCII spelling used in file names.
    pub fn ascii(self) -> &'static str {
        match self {
            Self::VT => "VT",
            Self::VN => "VN",
            Self::NVT => "V~T",
            Self::NVN => "V~N",
        }
    }
}

impl fmt::Display for SyllableClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::VT => "VT",
            Self::VN => "VN",
            Self::NVT => "ṼT",
            Self::NVN => "ṼN",
        })
    }
}

impl FromStr for SyllableClass {
    type Err = CorpusError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "VT" => Ok(Self::VT),
            "VN" => Ok(Self::VN),
            "ṼT" | "V~T" | "NVT" => Ok(Self::NVT),
            "ṼN" | "V~N" | "NVN" => Ok(Self::NVN),
            other => Err(CorpusError::Classes(format!("unknown syllable class {other:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum WordPosition {
    Monosyllabic,
    FinalSyllable,
}

impl fmt::Display for WordPosition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Monosyllabic => "monosyllabic",
            Self::FinalSyllable => "final_syllable",
        })
    }
}

impl FromStr for WordPosition {
    type Err = CorpusError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "monosyllabic" => Ok(Self::Monosyllabic),
            "final_syllable" => Ok(Self::FinalSyllable),
            other => Err(CorpusError::Classes(format!("unknown word position {other:?}"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn class_round_trips() {
        for c in SyllableClass::ALL {
            assert_eq!(c.to_string().parse::<SyllableClass>().unwrap(), c);
            assert_eq!(c.ascii().parse::<SyllableClass>().unwrap(), c);
            assert_eq!(SyllableClass::from_flags(c.nasal_vowel(), c.nasal_coda()), c);
            assert_eq!(SyllableClass::from_index(c.index()), Some(c));
        }
        assert!("VX".parse::<SyllableClass>().is_err());
    }
}
