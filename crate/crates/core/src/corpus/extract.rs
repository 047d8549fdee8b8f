use std::collections::BTreeMap;
use std::fs;
use std::ops::Range;
use std::path::Path;

use super::parse::{group_words, parse_alignment_csv, parse_phn, parse_wrd, PhoneSegment};
use super::{CorpusError, PhoneClassMap, SyllableClass, WordPosition};
use crate::audio::{load_wav, AudioClip};

#[derive(Clone, Debug, PartialEq)]
pub struct Word {
    pub label: String,
    /// Index range into the utterance's phones.
    pub phones: Range<usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Utterance {
    pub id: String,
    pub audio: AudioClip,
    pub phones: Vec<PhoneSegment>,
    pub words: Vec<Word>,
    /// Flagged `sa` in the corpus listing; never a token source.
    pub sa: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SyllableToken {
    pub class: SyllableClass,
    pub audio: AudioClip,
    pub source_utterance: String,
    pub word_index: usize,
    pub word_position: WordPosition,
    /// Phone labels of the extracted span, vowel first.
    pub phones: Vec<String>,
    /// Sample span within the source utterance.
    pub span: Range<usize>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Skip {
    pub source: String,
    pub word_index: usize,
    pub reason: String,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct SkipReport {
    pub skipped: Vec<Skip>,
    pub sa_utterances: usize,
}

/// Locates the word-final vowel + coda. A stop closure followed by its
/// release (`tcl t`) counts as a single coda.
fn final_vowel_coda(labels: &[&str], classes: &PhoneClassMap) -> Option<(usize, usize)> {
    let n = labels.len();
    if n >= 3 && classes.is_stop(labels[n - 2]) && classes.is_stop(labels[n - 1]) {
        return Some((n - 3, n - 2));
    }
    (n >= 2).then(|| (n - 2, n - 1))
}

fn word_position(labels: &[&str], classes: &PhoneClassMap) -> WordPosition {
    let mut runs = 0;
    let mut in_vowel = false;
    for l in labels {
        let v = classes.is_vowel(l);
        if v && !in_vowel {
            runs += 1;
        }
        in_vowel = v;
    }
    if runs <= 1 {
        WordPosition::Monosyllabic
    } else {
        WordPosition::FinalSyllable
    }
}

/// Emits at most one token per word: the word-final vowel + coda when the
/// pair falls in the class map. The audio is the exact span of those phones,
/// right-padded to `fixed_len`; longer spans are skipped and reported.
pub fn extract_tokens(
    utt: &Utterance,
    classes: &PhoneClassMap,
    fixed_len: usize,
    report: &mut SkipReport,
) -> Vec<SyllableToken> {
    let mut out = Vec::new();
    if utt.sa {
        report.sa_utterances += 1;
        return out;
    }
    for (wi, word) in utt.words.iter().enumerate() {
        let segs = &utt.phones[word.phones.clone()];
        let labels: Vec<&str> = segs.iter().map(|p| p.label.as_str()).collect();
        let Some((v, c)) = final_vowel_coda(&labels, classes) else {
            continue;
        };
        let Some(class) = classes.classify(labels[v], labels[labels.len() - 1]) else {
            continue;
        };
        let span = segs[v].start..segs[segs.len() - 1].end;
        let skip = |reason: String| Skip {
            source: utt.id.clone(),
            word_index: wi,
            reason,
        };
        if span.end > utt.audio.len() {
            report
                .skipped
                .push(skip(format!("span {span:?} beyond audio of {} samples", utt.audio.len())));
            continue;
        }
        if span.len() > fixed_len {
            report
                .skipped
                .push(skip(format!("span of {} samples exceeds {fixed_len}", span.len())));
            continue;
        }
        let audio = utt
            .audio
            .slice_padded(span.clone(), fixed_len)
            .expect("span checked against audio and length");
        debug_assert!(c > v);
        out.push(SyllableToken {
            class,
            audio,
            source_utterance: utt.id.clone(),
            word_index: wi,
            word_position: word_position(&labels, classes),
            phones: labels[v..].iter().map(|s| s.to_string()).collect(),
            span,
        });
    }
    out
}

fn read(path: &Path) -> Result<String, CorpusError> {
    fs::read_to_string(path).map_err(|e| CorpusError::Layout(format!("{}: {e}", path.display())))
}

/// `utterances.csv`: `utterance,flag` rows; a flag of `sa` excludes the
/// utterance from extraction.
fn read_flags(dir: &Path) -> Result<BTreeMap<String, bool>, CorpusError> {
    let path = dir.join("utterances.csv");
    let mut flags = BTreeMap::new();
    if !path.exists() {
        return Ok(flags);
    }
    for (i, line) in read(&path)?.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || (i == 0 && line.starts_with("utterance")) {
            continue;
        }
        let (id, flag) = line.split_once(',').unwrap_or((line, ""));
        flags.insert(id.trim().to_owned(), flag.trim() == "sa");
    }
    Ok(flags)
}

/// Loads a corpus directory in one of two layouts: TIMIT-style
/// `<id>.wav` + `<id>.phn` + `<id>.wrd`, or `alignment.csv` (see
/// [`parse_alignment_csv`]) next to `<id>.wav` files. Utterances are
/// returned sorted by id.
pub fn load_corpus(dir: &Path) -> Result<Vec<Utterance>, CorpusError> {
    if !dir.is_dir() {
        return Err(CorpusError::Layout(format!("{} is not a directory", dir.display())));
    }
    let flags = read_flags(dir)?;
    let alignment = dir.join("alignment.csv");
    let mut out = Vec::new();
    if alignment.exists() {
        let text = read(&alignment)?;
        let mut ids: Vec<&str> = text
            .lines()
            .skip_while(|l| l.starts_with("utterance,"))
            .filter_map(|l| l.split(',').next().map(str::trim))
            .filter(|s| !s.is_empty())
            .collect();
        ids.dedup();
        let mut audio = BTreeMap::new();
        for id in &ids {
            audio.insert(id.to_string(), load_wav(&dir.join(format!("{id}.wav")))?);
        }
        let rate = match audio.values().next() {
            Some(a) => a.sample_rate(),
            None => return Ok(out),
        };
        if audio.values().any(|a| a.sample_rate() != rate) {
            return Err(CorpusError::Layout("utterances have differing sample rates".into()));
        }
        for u in parse_alignment_csv(&text, rate)? {
            let words = u
                .words
                .iter()
                .enumerate()
                .map(|(i, r)| Word {
                    label: format!("w{i}"),
                    phones: r.clone(),
                })
                .collect();
            out.push(Utterance {
                sa: flags.get(&u.id).copied().unwrap_or(false),
                audio: audio.remove(&u.id).expect("loaded above"),
                id: u.id,
                phones: u.phones,
                words,
            });
        }
    } else {
        let mut stems: Vec<String> = fs::read_dir(dir)?
            .filter_map(|e| e.ok())
            .map(|e| e.path())
            .filter(|p| p.extension().is_some_and(|x| x == "phn"))
            .filter_map(|p| p.file_stem().map(|s| s.to_string_lossy().into_owned()))
            .collect();
        stems.sort();
        for id in stems {
            let phones = parse_phn(&read(&dir.join(format!("{id}.phn")))?)?;
            let wrd = parse_wrd(&read(&dir.join(format!("{id}.wrd")))?)?;
            let words = group_words(&phones, &wrd)
                .into_iter()
                .zip(&wrd)
                .map(|(r, w)| Word {
                    label: w.label.clone(),
                    phones: r,
                })
                .collect();
            out.push(Utterance {
                sa: flags.get(&id).copied().unwrap_or(false),
                audio: load_wav(&dir.join(format!("{id}.wav")))?,
                id,
                phones,
                words,
            });
        }
    }
    out.sort_by(|a, b| a.id.cmp(&b.id));
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn utt(text: &str, words: &[Range<usize>], len: usize) -> Utterance {
        let phones = parse_phn(text).unwrap();
        Utterance {
            id: "u".into(),
            audio: AudioClip::new((0..len).map(|i| i as f32 / len as f32).collect(), 8000).unwrap(),
            phones,
            words: words
                .iter()
                .map(|r| Word {
                    label: "w".into(),
                    phones: r.clone(),
                })
                .collect(),
            sa: false,
        }
    }

    #[test]
    fn ban_yields_vn() {
        let u = utt("0 1000 b\n1000 2400 ae\n2400 3000 n", &[0..3], 3000);
        let mut r = SkipReport::default();
        let toks = extract_tokens(&u, &PhoneClassMap::english(), 4096, &mut r);
        assert_eq!(toks.len(), 1);
        assert_eq!(toks[0].class, SyllableClass::VN);
        assert_eq!(toks[0].phones, ["ae", "n"]);
        assert_eq!(toks[0].span, 1000..3000);
        assert_eq!(toks[0].audio.len(), 4096);
        assert_eq!(toks[0].audio.samples()[0], u.audio.samples()[1000]);
        assert_eq!(toks[0].word_position, WordPosition::Monosyllabic);
    }

    #[test]
    fn closure_release_is_one_coda() {
        let u = utt("0 100 b\n100 900 ae\n900 1000 tcl\n1000 1100 t", &[0..4], 1200);
        let toks = extract_tokens(&u, &PhoneClassMap::english(), 4096, &mut SkipReport::default());
        assert_eq!(toks[0].class, SyllableClass::VT);
        assert_eq!(toks[0].phones, ["ae", "tcl", "t"]);
        assert_eq!(toks[0].span, 100..1100);
    }

    #[test]
    fn vowel_final_and_long_spans() {
        let u = utt("0 100 s\n100 500 ow\n500 600 f\n600 700 ax", &[0..4], 800);
        assert!(extract_tokens(&u, &PhoneClassMap::english(), 4096, &mut SkipReport::default()).is_empty());
        let u = utt("0 100 m\n100 5000 ae\n5000 5500 n", &[0..3], 6000);
        let mut r = SkipReport::default();
        assert!(extract_tokens(&u, &PhoneClassMap::english(), 4096, &mut r).is_empty());
        assert_eq!(r.skipped.len(), 1);
    }

    #[test]
    fn nasal_vowels_need_a_nasal_vowel_set() {
        let u = utt("0 100 t\n100 900 o~\n900 1000 n", &[0..3], 1000);
        let en = extract_tokens(&u, &PhoneClassMap::english(), 4096, &mut SkipReport::default());
        assert!(en.is_empty());
        let fr = extract_tokens(&u, &PhoneClassMap::french(), 4096, &mut SkipReport::default());
        assert_eq!(fr[0].class, SyllableClass::NVN);
    }

    #[test]
    fn sa_utterances_skipped() {
        let mut u = utt("0 1000 b\n1000 2400 ae\n2400 3000 n", &[0..3], 3000);
        u.sa = true;
        let mut r = SkipReport::default();
        assert!(extract_tokens(&u, &PhoneClassMap::english(), 4096, &mut r).is_empty());
        assert_eq!(r.sa_utterances, 1);
    }

    #[test]
    fn position_counts_vowel_runs() {
        let m = PhoneClassMap::english();
        assert_eq!(word_position(&["ow", "pcl", "p", "ax", "n"], &m), WordPosition::FinalSyllable);
        assert_eq!(word_position(&["s", "ao", "ng"], &m), WordPosition::Monosyllabic);
        assert_eq!(word_position(&["d", "aa", "r", "kcl", "k"], &m), WordPosition::Monosyllabic);
    }
}
