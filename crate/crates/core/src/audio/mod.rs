//! Waveform container, WAV persistence, spectral analysis and a parametric
//! formant synthesizer for oral/nasal vowel + stop/nasal coda syllables.

mod stft;
mod synth;
mod wav;

pub use stft::{stft, Spectrogram};
pub use synth::{spectral_class, synth_corpus, synth_syllable, Coda, SynthToken, SyllableLayout, SyllableSpec, NASAL_RESONANCE_HZ};
pub use wav::{load_wav, save_wav};

use thiserror::Error;

/// Desk-scale sample rate.
pub const SAMPLE_RATE: u32 = 8000;
/// Desk-scale token length in samples (0.512 s at 8 kHz).
pub const TOKEN_LEN: usize = 4096;

#[derive(Debug, Error)]
pub enum AudioError {
    #[error("file not found: {0}")]
    Missing(String),
    #[error("{path}: expected mono audio, found {channels} channels")]
    NotMono { path: String, channels: u16 },
    #[error("{path}: unsupported encoding ({detail}); only 16-bit PCM is read")]
    UnsupportedEncoding { path: String, detail: String },
    #[error("wav: {0}")]
    Wav(String),
    #[error("invalid clip: {0}")]
    InvalidClip(String),
    #[error("window of {window} samples exceeds clip of {len}")]
    WindowTooLong { window: usize, len: usize },
    #[error("invalid syllable spec: {0}")]
    InvalidSpec(String),
    #[error("syllable of {needed} samples does not fit in {total}")]
    InfeasibleDuration { needed: usize, total: usize },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Mono waveform at a fixed sample rate.
#[derive(Clone, Debug, PartialEq)]
pub struct AudioClip {
    samples: Vec<f32>,
    sample_rate: u32,
}

impl AudioClip {
    pub fn new(samples: Vec<f32>, sample_rate: u32) -> Result<Self, AudioError> {
        if samples.is_empty() {
            return Err(AudioError::InvalidClip("no samples".into()));
        }
        if sample_rate == 0 {
            return Err(AudioError::InvalidClip("sample rate must be positive".into()));
        }
        Ok(Self { samples, sample_rate })
    }

    pub fn samples(&self) -> &[f32] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<f32> {
        self.samples
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_secs(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    pub fn peak(&self) -> f32 {
        self.samples.iter().fold(0.0f32, |m, s| m.max(s.abs()))
    }

    /// Scale so that the peak magnitude equals `target`. Silent clips are
    /// left untouched.
    pub fn normalize(&mut self, target: f32) {
        let peak = self.peak();
        if peak > 0.0 {
            let g = target / peak;
            self.samples.iter_mut().for_each(|s| *s *= g);
        }
    }

    /// Copy of `range`, right-padded with zeros to `len`.
    pub fn slice_padded(&self, range: std::ops::Range<usize>, len: usize) -> Result<Self, AudioError> {
        if range.end > self.samples.len() || range.start >= range.end {
            return Err(AudioError::InvalidClip(format!(
                "span {range:?} outside clip of {}",
                self.samples.len()
            )));
        }
        if range.len() > len {
            return Err(AudioError::InfeasibleDuration {
                needed: range.len(),
                total: len,
            });
        }
        let mut samples = self.samples[range].to_vec();
        samples.resize(len, 0.0);
        Self::new(samples, self.sample_rate)
    }

    pub fn rms(samples: &[f32]) -> f32 {
        if samples.is_empty() {
            return 0.0;
        }
        (samples.iter().map(|s| (*s as f64) * (*s as f64)).sum::<f64>() / samples.len() as f64).sqrt() as f32
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_clip_rejected() {
        assert!(AudioClip::new(vec![], 8000).is_err());
        assert!(AudioClip::new(vec![0.0], 0).is_err());
    }

    #[test]
    fn normalization_bounds_peak() {
        let mut c = AudioClip::new(vec![0.1, -3.0, 2.0], 8000).unwrap();
        c.normalize(1.0);
        assert!(c.peak() <= 1.0);
        assert_eq!(c.samples()[1], -1.0);
    }

    #[test]
    fn padded_slice() {
        let c = AudioClip::new(vec![1.0, 2.0, 3.0, 4.0], 8000).unwrap();
        let s = c.slice_padded(1..3, 5).unwrap();
        assert_eq!(s.samples(), &[2.0, 3.0, 0.0, 0.0, 0.0]);
        assert!(c.slice_padded(0..4, 3).is_err());
    }
}
