use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;

use super::{CorpusError, SyllableClass, SyllableToken, WordPosition};
use crate::audio::save_wav;
use crate::seed;

const HEADER: &str = "file,class,source,word_position,span";

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ManifestEntry {
    pub file: String,
    pub class: SyllableClass,
    pub source: String,
    pub word_position: WordPosition,
    /// Phone labels of the token, vowel first.
    pub span: Vec<String>,
}

impl ManifestEntry {
    pub fn vowel(&self) -> Option<&str> {
        self.span.first().map(String::as_str)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct DatasetManifest {
    pub entries: Vec<ManifestEntry>,
}

impl DatasetManifest {
    pub fn counts(&self) -> BTreeMap<SyllableClass, usize> {
        let mut c = BTreeMap::new();
        for e in &self.entries {
            *c.entry(e.class).or_insert(0) += 1;
        }
        c
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from(HEADER);
        s.push('\n');
        for e in &self.entries {
            let _ = writeln!(
                s,
                "{},{},{},{},{}",
                e.file,
                e.class,
                e.source,
                e.word_position,
                e.span.join(" ")
            );
        }
        s
    }

    pub fn from_csv(text: &str) -> Result<Self, CorpusError> {
        let mut entries = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim_end();
            if line.is_empty() || (i == 0 && line.starts_with("file,")) {
                continue;
            }
            let cols: Vec<&str> = line.split(',').collect();
            if cols.len() != 4 && cols.len() != 5 {
                return Err(CorpusError::Parse {
                    line: i + 1,
                    msg: format!("expected 4 or 5 columns, got {}", cols.len()),
                });
            }
            let at = |e: CorpusError| CorpusError::Parse {
                line: i + 1,
                msg: e.to_string(),
            };
            entries.push(ManifestEntry {
                file: cols[0].to_owned(),
                class: cols[1].parse().map_err(at)?,
                source: cols[2].to_owned(),
                word_position: cols[3].parse().map_err(at)?,
                span: cols
                    .get(4)
                    .map(|s| s.split_whitespace().map(str::to_owned).collect())
                    .unwrap_or_default(),
            });
        }
        Ok(Self { entries })
    }

    pub fn save(&self, path: &Path) -> Result<(), CorpusError> {
        Ok(fs::write(path, self.to_csv())?)
    }

    pub fn load(path: &Path) -> Result<Self, CorpusError> {
        Self::from_csv(&fs::read_to_string(path)?)
    }
}

/// Writes each token to `out_dir/tokens/<source>_w<word>.wav` and returns
/// the manifest with paths relative to `out_dir`.
pub fn write_tokens(tokens: &[SyllableToken], out_dir: &Path) -> Result<DatasetManifest, CorpusError> {
    fs::create_dir_all(out_dir.join("tokens"))?;
    let mut entries = Vec::with_capacity(tokens.len());
    for t in tokens {
        let file = format!("tokens/{}_w{}.wav", t.source_utterance, t.word_index);
        save_wav(&t.audio, &out_dir.join(&file))?;
        entries.push(ManifestEntry {
            file,
            class: t.class,
            source: t.source_utterance.clone(),
            word_position: t.word_position,
            span: t.phones.clone(),
        });
    }
    Ok(DatasetManifest { entries })
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct BalanceReport {
    /// Per class: (available after filtering, target, target / available).
    pub classes: BTreeMap<SyllableClass, (usize, usize, f64)>,
}

impl BalanceReport {
    pub fn lines(&self) -> Vec<String> {
        self.classes
            .iter()
            .map(|(c, (avail, target, factor))| format!("{c}: {avail} available, {target} drawn, oversampling x{factor:.3}"))
            .collect()
    }
}

/// Resamples `manifest` so that each class in `targets` has exactly its
/// target count. Classes not listed are dropped. When a target does not
/// exceed the available tokens they are drawn without replacement;
/// otherwise every token is kept once and the remainder is drawn with
/// replacement. `vowel_filter` restricts entries by the vowel of their span
/// before sampling.
pub fn balance_dataset(
    manifest: &DatasetManifest,
    targets: &BTreeMap<SyllableClass, usize>,
    vowel_filter: Option<&BTreeSet<String>>,
    seed_value: u64,
) -> Result<(DatasetManifest, BalanceReport), CorpusError> {
    let mut report = BalanceReport::default();
    let mut entries = Vec::new();
    for (&class, &target) in targets {
        let pool: Vec<&ManifestEntry> = manifest
            .entries
            .iter()
            .filter(|e| e.class == class)
            .filter(|e| vowel_filter.map_or(true, |f| e.vowel().is_some_and(|v| f.contains(v))))
            .collect();
        if pool.is_empty() {
            if target == 0 {
                continue;
            }
            return Err(CorpusError::EmptyClass(class));
        }
        let mut rng = seed::rng(seed_value, "balance", class.index() as u64);
        let mut order: Vec<usize> = (0..pool.len()).collect();
        order.shuffle(&mut rng);
        if target <= pool.len() {
            order.truncate(target);
        } else {
            let extra: Vec<usize> = (0..target - pool.len()).map(|_| rng.gen_range(0..pool.len())).collect();
            order.extend(extra);
        }
        entries.extend(order.into_iter().map(|i| pool[i].clone()));
        report
            .classes
            .insert(class, (pool.len(), target, target as f64 / pool.len() as f64));
    }
    Ok((DatasetManifest { entries }, report))
}
