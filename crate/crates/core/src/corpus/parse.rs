use std::ops::Range;

use super::CorpusError;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PhoneSegment {
    pub label: String,
    pub start: usize,
    pub end: usize,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct WordSegment {
    pub label: String,
    pub start: usize,
    pub end: usize,
}

/// Phones of one utterance with their word grouping.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AlignedUtterance {
    pub id: String,
    pub phones: Vec<PhoneSegment>,
    /// Index ranges into `phones`, one per word.
    pub words: Vec<Range<usize>>,
}

fn err(line: usize, msg: impl Into<String>) -> CorpusError {
    CorpusError::Parse { line, msg: msg.into() }
}

/// Lines of `<start> <end> <label>` with integer sample offsets, as in
/// TIMIT `.phn` and `.wrd` files.
fn parse_offsets(text: &str) -> Result<Vec<(usize, usize, String)>, CorpusError> {
    let mut out: Vec<(usize, usize, String)> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let n = i + 1;
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        let mut parts = line.split_whitespace();
        let (Some(a), Some(b), Some(label), None) = (parts.next(), parts.next(), parts.next(), parts.next()) else {
            return Err(err(n, format!("expected `<start> <end> <label>`, got {line:?}")));
        };
        let start: usize = a.parse().map_err(|_| err(n, format!("bad start offset {a:?}")))?;
        let end: usize = b.parse().map_err(|_| err(n, format!("bad end offset {b:?}")))?;
        if start >= end {
            return Err(err(n, format!("segment start {start} is not before end {end}")));
        }
        if let Some(prev) = out.last() {
            if start < prev.1 {
                return Err(err(n, format!("segment starting at {start} overlaps previous ending at {}", prev.1)));
            }
        }
        out.push((start, end, label.to_owned()));
    }
    Ok(out)
}

pub fn parse_phn(text: &str) -> Result<Vec<PhoneSegment>, CorpusError> {
    Ok(parse_offsets(text)?
        .into_iter()
        .map(|(start, end, label)| PhoneSegment { label, start, end })
        .collect())
}

pub fn parse_wrd(text: &str) -> Result<Vec<WordSegment>, CorpusError> {
    Ok(parse_offsets(text)?
        .into_iter()
        .map(|(start, end, label)| WordSegment { label, start, end })
        .collect())
}

fn seconds_to_sample(sec: f64, sample_rate: u32) -> usize {
    (sec * sample_rate as f64).round() as usize
}

/// Flattened aligner export with rows
/// `utterance,word_index,phone,start_sec,end_sec`. A header row is optional.
/// Rows of one utterance must be contiguous and in time order.
pub fn parse_alignment_csv(text: &str, sample_rate: u32) -> Result<Vec<AlignedUtterance>, CorpusError> {
    let mut out: Vec<AlignedUtterance> = Vec::new();
    let mut cur_word: Option<usize> = None;
    for (i, raw) in text.lines().enumerate() {
        let n = i + 1;
        let line = raw.trim();
        if line.is_empty() || (i == 0 && line.starts_with("utterance,")) {
            continue;
        }
        let cols: Vec<&str> = line.split(',').map(str::trim).collect();
        let [utt, word, phone, s, e] = cols[..] else {
            return Err(err(n, format!("expected 5 columns, got {}", cols.len())));
        };
        let word: usize = word.parse().map_err(|_| err(n, format!("bad word index {word:?}")))?;
        let s_sec: f64 = s.parse().map_err(|_| err(n, format!("bad start time {s:?}")))?;
        let e_sec: f64 = e.parse().map_err(|_| err(n, format!("bad end time {e:?}")))?;
        if !(s_sec.is_finite() && e_sec.is_finite() && s_sec >= 0.0) {
            return Err(err(n, "times must be finite and non-negative"));
        }
        if e_sec < s_sec {
            return Err(err(n, format!("end {e_sec} before start {s_sec}")));
        }
        let (start, end) = (seconds_to_sample(s_sec, sample_rate), seconds_to_sample(e_sec, sample_rate));
        if start >= end {
            return Err(err(n, format!("phone {phone:?} is shorter than one sample")));
        }
        if out.last().map_or(true, |u| u.id != utt) {
            if out.iter().any(|u| u.id == utt) {
                return Err(err(n, format!("rows of utterance {utt:?} are not contiguous")));
            }
            out.push(AlignedUtterance {
                id: utt.to_owned(),
                phones: Vec::new(),
                words: Vec::new(),
            });
            cur_word = None;
        }
        let u = out.last_mut().expect("pushed above");
        if let Some(prev) = u.phones.last() {
            if start < prev.end {
                return Err(err(n, format!("time {s_sec} goes backwards in utterance {utt:?}")));
            }
        }
        let idx = u.phones.len();
        u.phones.push(PhoneSegment {
            label: phone.to_owned(),
            start,
            end,
        });
        match cur_word {
            Some(w) if w == word => u.words.last_mut().expect("open word").end = idx + 1,
            Some(w) if word < w => return Err(err(n, format!("word index {word} after {w}"))),
            _ => {
                u.words.push(idx..idx + 1);
                cur_word = Some(word);
            }
        }
    }
    Ok(out)
}

/// Assigns each word the phones lying inside its sample span.
pub fn group_words(phones: &[PhoneSegment], words: &[WordSegment]) -> Vec<Range<usize>> {
    words
        .iter()
        .map(|w| {
            let first = phones.iter().position(|p| p.start >= w.start).unwrap_or(phones.len());
            let last = phones[first..]
                .iter()
                .take_while(|p| p.end <= w.end)
                .count();
            first..first + last
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn phn_three_segments() {
        let segs = parse_phn("0 1000 b\n1000 2400 ae\n2400 3000 n").unwrap();
        let labels: Vec<&str> = segs.iter().map(|s| s.label.as_str()).collect();
        assert_eq!(labels, ["b", "ae", "n"]);
        assert_eq!((segs[1].start, segs[1].end), (1000, 2400));
    }

    #[test]
    fn phn_empty_and_errors() {
        assert!(parse_phn("").unwrap().is_empty());
        assert!(matches!(parse_phn("1000 900 ae"), Err(CorpusError::Parse { line: 1, .. })));
        assert!(matches!(
            parse_phn("0 100 a\n50 200 b"),
            Err(CorpusError::Parse { line: 2, .. })
        ));
        assert!(matches!(parse_phn("0 100\n"), Err(CorpusError::Parse { line: 1, .. })));
        assert!(matches!(parse_phn("\n0 x a"), Err(CorpusError::Parse { line: 2, .. })));
    }

    #[test]
    fn alignment_grouping_and_units() {
        let text = "utterance,word_index,phone,start_sec,end_sec\n\
                    u1,0,m,0.10,0.15\nu1,0,o~,0.15,0.30\n\
                    u1,1,a,0.30,0.40\nu1,1,m,0.40,0.45\nu1,1,i,0.45,0.60\n";
        let utts = parse_alignment_csv(text, 16000).unwrap();
        assert_eq!(utts.len(), 1);
        assert_eq!(utts[0].phones.len(), 5);
        assert_eq!(utts[0].words, vec![0..2, 2..5]);
        assert_eq!(utts[0].phones[0].start, 1600);
    }

    #[test]
    fn alignment_errors() {
        assert!(parse_alignment_csv("u,0,a,0.5,0.4", 8000).is_err());
        assert!(parse_alignment_csv("u,0,a,0.1,0.4\nu,0,b,0.3,0.5", 8000).is_err());
        assert!(parse_alignment_csv("u,0,a,0.1", 8000).is_err());
    }

    #[test]
    fn words_group_phones_by_span() {
        let phones = parse_phn("0 10 h#\n10 20 b\n20 30 ae\n30 40 n\n40 50 s\n50 60 ow\n60 70 h#").unwrap();
        let words = parse_wrd("10 40 ban\n40 60 so").unwrap();
        assert_eq!(group_words(&phones, &words), vec![1..4, 4..6]);
    }
}
