use std::fmt;

use crate::audio::{AudioClip, SyllableLayout, SynthToken};
use crate::corpus::SyllableClass;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum FrameClass {
    OralVowel,
    NasalVowel,
    NasalConsonant,
    Other,
}

impl FrameClass {
    pub const ALL: [FrameClass; 4] = [Self::OralVowel, Self::NasalVowel, Self::NasalConsonant, Self::Other];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn is_vowel(self) -> bool {
        matches!(self, Self::OralVowel | Self::NasalVowel)
    }
}

impl fmt::Display for FrameClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::OralVowel => "oral_vowel",
            Self::NasalVowel => "nasal_vowel",
            Self::NasalConsonant => "nasal_consonant",
            Self::Other => "other",
        })
    }
}

/// Centre sample of each hop segment; the last segment may be partial.
pub fn frame_centers(len: usize, hop: usize) -> Vec<usize> {
    (0..len.div_ceil(hop)).map(|k| k * hop + hop / 2).collect()
}

/// RMS of hop segment `k`, counting samples past the end as zeros so that
/// trailing padding never changes a frame's gate decision.
pub fn segment_rms(samples: &[f32], k: usize, hop: usize) -> f32 {
    let start = (k * hop).min(samples.len());
    let end = ((k + 1) * hop).min(samples.len());
    let energy: f64 = samples[start..end].iter().map(|&v| v as f64 * v as f64).sum();
    (energy / hop as f64).sqrt() as f32
}

/// `window` samples centred on `center`, zero outside the signal.
pub fn window_at(samples: &[f32], center: usize, window: usize) -> Vec<f32> {
    let half = window / 2;
    let mut out = vec![0.0; window];
    for (j, slot) in out.iter_mut().enumerate() {
        let t = (center + j).checked_sub(half);
        if let Some(&v) = t.and_then(|t| samples.get(t)) {
            *slot = v;
        }
    }
    out
}

/// Ground-truth class of each frame of a `len`-sample clip of `class`,
/// from the centre sample's position in the synthesis layout.
pub fn frame_labels(len: usize, layout: &SyllableLayout, class: SyllableClass, hop: usize) -> Vec<FrameClass> {
    frame_centers(len, hop)
        .into_iter()
        .map(|c| {
            if layout.vowel.contains(&c) {
                if class.nasal_vowel() {
                    FrameClass::NasalVowel
                } else {
                    FrameClass::OralVowel
                }
            } else if class.nasal_coda() && layout.coda.contains(&c) {
                FrameClass::NasalConsonant
            } else {
                FrameClass::Other
            }
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct LabeledFrame {
    pub window: Vec<f32>,
    pub class: FrameClass,
    /// RMS of the frame's own hop segment fell under the silence gate.
    pub silent: bool,
    /// Position of the source token in the input slice.
    pub token: usize,
}

/// Every frame of one clip with ground truth; `token` is recorded as given.
pub fn clip_frames(
    clip: &AudioClip,
    layout: &SyllableLayout,
    class: SyllableClass,
    token: usize,
    window: usize,
    hop: usize,
    silence_rms: f32,
) -> Vec<LabeledFrame> {
    let s = clip.samples();
    frame_centers(s.len(), hop)
        .into_iter()
        .zip(frame_labels(s.len(), layout, class, hop))
        .enumerate()
        .map(|(k, (c, class))| LabeledFrame {
            window: window_at(s, c, window),
            class,
            silent: segment_rms(s, k, hop) < silence_rms,
            token,
        })
        .collect()
}

/// Every frame of every token, with ground truth.
pub fn synth_frames(tokens: &[SynthToken], window: usize, hop: usize, silence_rms: f32) -> Vec<LabeledFrame> {
    tokens
        .iter()
        .enumerate()
        .flat_map(|(i, t)| clip_frames(&t.clip, &t.layout, t.class, i, window, hop, silence_rms))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn windows_pad_with_zeros() {
        let s: Vec<f32> = (1..=6).map(|v| v as f32).collect();
        assert_eq!(window_at(&s, 0, 5), vec![0.0, 0.0, 1.0, 2.0, 3.0]);
        assert_eq!(window_at(&s, 5, 5), vec![4.0, 5.0, 6.0, 0.0, 0.0]);
        assert_eq!(window_at(&s, 2, 3), vec![2.0, 3.0, 4.0]);
    }

    #[test]
    fn centers_cover_partial_tail() {
        assert_eq!(frame_centers(4096, 128).len(), 32);
        assert_eq!(frame_centers(4097, 128).len(), 33);
        assert_eq!(frame_centers(300, 128), vec![64, 192, 320]);
    }
}
