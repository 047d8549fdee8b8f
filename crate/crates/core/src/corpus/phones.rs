use std::collections::BTreeSet;
use std::str::FromStr;

use super::{CorpusError, SyllableClass};

const ENGLISH: &str = include_str!("../../presets/english.phones");
const FRENCH: &str = include_str!("../../presets/french.phones");

/// Phone inventories for stops (T), nasal consonants (N), oral vowels and
/// nasal vowels. Read from a plain-text config with one `NAME: labels...`
/// line per set; `#` starts a comment.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PhoneClassMap {
    pub stops: BTreeSet<String>,
    pub nasals: BTreeSet<String>,
    pub oral_vowels: BTreeSet<String>,
    pub nasal_vowels: BTreeSet<String>,
}

impl PhoneClassMap {
    pub fn english() -> Self {
        ENGLISH.parse().expect("bundled english preset")
    }

    pub fn french() -> Self {
        FRENCH.parse().expect("bundled french preset")
    }

    pub fn preset(name: &str) -> Option<Self> {
        match name {
            "english" => Some(Self::english()),
            "french" => Some(Self::french()),
            _ => None,
        }
    }

    pub fn is_vowel(&self, label: &str) -> bool {
        self.oral_vowels.contains(label) || self.nasal_vowels.contains(label)
    }

    pub fn is_stop(&self, label: &str) -> bool {
        self.stops.contains(label)
    }

    /// Class of a vowel + coda pair, if both phones belong to the map.
    pub fn classify(&self, vowel: &str, coda: &str) -> Option<SyllableClass> {
        let nasal_vowel = if self.nasal_vowels.contains(vowel) {
            true
        } else if self.oral_vowels.contains(vowel) {
            false
        } else {
            return None;
        };
        let nasal_coda = if self.nasals.contains(coda) {
            true
        } else if self.stops.contains(coda) {
            false
        } else {
            return None;
        };
        Some(SyllableClass::from_flags(nasal_vowel, nasal_coda))
    }

    fn validate(&self) -> Result<(), CorpusError> {
        let sets = [
            ("T", &self.stops),
            ("N", &self.nasals),
            ("V_oral", &self.oral_vowels),
            ("V_nasal", &self.nasal_vowels),
        ];
        for (i, (a, sa)) in sets.iter().enumerate() {
            for (b, sb) in &sets[i + 1..] {
                if let Some(p) = sa.intersection(sb).next() {
                    return Err(CorpusError::Classes(format!("{p:?} is in both {a} and {b}")));
                }
            }
        }
        Ok(())
    }
}

impl FromStr for PhoneClassMap {
    type Err = CorpusError;

    fn from_str(text: &str) -> Result<Self, Self::Err> {
        let mut sets: [Option<BTreeSet<String>>; 4] = Default::default();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (name, labels) = line.split_once(':').ok_or_else(|| CorpusError::Parse {
                line: n + 1,
                msg: format!("expected `NAME: labels`, got {line:?}"),
            })?;
            let slot = match name.trim() {
                "T" => 0,
                "N" => 1,
                "V_oral" => 2,
                "V_nasal" => 3,
                other => {
                    return Err(CorpusError::Parse {
                        line: n + 1,
                        msg: format!("unknown set {other:?}"),
                    })
                }
            };
            if sets[slot].is_some() {
                return Err(CorpusError::Parse {
                    line: n + 1,
                    msg: format!("set {} given twice", name.trim()),
                });
            }
            sets[slot] = Some(labels.split_whitespace().map(str::to_owned).collect());
        }
        let [t, nas, vo, vn] = sets;
        let missing = |s: &str| CorpusError::Classes(format!("missing set {s}"));
        let map = Self {
            stops: t.ok_or_else(|| missing("T"))?,
            nasals: nas.ok_or_else(|| missing("N"))?,
            oral_vowels: vo.ok_or_else(|| missing("V_oral"))?,
            nasal_vowels: vn.ok_or_else(|| missing("V_nasal"))?,
        };
        map.validate()?;
        Ok(map)
    }
}
