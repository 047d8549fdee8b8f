use std::io::Write;
use std::path::Path;

use rustfft::{num_complex::Complex, FftPlanner};

use super::{AudioClip, AudioError};

/// Magnitude spectrogram; each frame holds `window / 2 + 1` bins.
#[derive(Clone, Debug, PartialEq)]
pub struct Spectrogram {
    pub frames: Vec<Vec<f64>>,
    pub hop: usize,
    pub window: usize,
    pub sample_rate: u32,
}

/// Periodic Hann window.
pub fn hann(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / n as f64).cos())
        .collect()
}

/// Short-time Fourier transform magnitudes of `clip` with a Hann window.
pub fn stft(clip: &AudioClip, window: usize, hop: usize) -> Result<Spectrogram, AudioError> {
    stft_samples(clip.samples(), clip.sample_rate(), window, hop)
}

pub(crate) fn stft_samples(samples: &[f32], sample_rate: u32, window: usize, hop: usize) -> Result<Spectrogram, AudioError> {
    if window == 0 || window > samples.len() {
        return Err(AudioError::WindowTooLong {
            window,
            len: samples.len(),
        });
    }
    if hop == 0 {
        return Err(AudioError::InvalidClip("hop must be at least 1".into()));
    }
    let n_frames = (samples.len() - window) / hop + 1;
    let w = hann(window);
    let fft = FftPlanner::<f64>::new().plan_fft_forward(window);
    let mut buf = vec![Complex::new(0.0, 0.0); window];
    let frames = (0..n_frames)
        .map(|f| {
            let seg = &samples[f * hop..f * hop + window];
            for ((b, &s), &wv) in buf.iter_mut().zip(seg).zip(&w) {
                *b = Complex::new(s as f64 * wv, 0.0);
            }
            fft.process(&mut buf);
            buf[..window / 2 + 1].iter().map(|c| c.norm()).collect()
        })
        .collect();
    Ok(Spectrogram {
        frames,
        hop,
        window,
        sample_rate,
    })
}

impl Spectrogram {
    pub fn bins(&self) -> usize {
        self.window / 2 + 1
    }

    pub fn bin_hz(&self, bin: usize) -> f64 {
        bin as f64 * self.sample_rate as f64 / self.window as f64
    }

    /// Time-domain energy of the windowed frame recovered from its
    /// one-sided spectrum.
    pub fn frame_energy(&self, frame: usize) -> f64 {
        let n = self.window;
        let mags = &self.frames[frame];
        let mut total = 0.0;
        for (k, m) in mags.iter().enumerate() {
            let mirrored = k != 0 && !(n % 2 == 0 && k == n / 2);
            total += if mirrored { 2.0 } else { 1.0 } * m * m;
        }
        total / n as f64
    }

    /// Mean magnitude per bin over `frames`.
    pub fn mean_spectrum(&self, frames: std::ops::Range<usize>) -> Vec<f64> {
        let mut acc = vec![0.0; self.bins()];
        let count = frames.len().max(1) as f64;
        for f in frames {
            for (a, m) in acc.iter_mut().zip(&self.frames[f]) {
                *a += m;
            }
        }
        acc.iter_mut().for_each(|a| *a /= count);
        acc
    }

    /// Writes `frame,bin,magnitude` rows.
    pub fn write_csv(&self, path: &Path) -> Result<(), AudioError> {
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(out, "frame,bin,magnitude")?;
        for (f, frame) in self.frames.iter().enumerate() {
            for (b, m) in frame.iter().enumerate() {
                writeln!(out, "{f},{b},{m}")?;
            }
        }
        out.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    #[test]
    fn bin_centred_sine_dominates_outside_main_lobe() {
        let (sr, win) = (8000u32, 256usize);
        let k0 = 20;
        let f = k0 as f64 * sr as f64 / win as f64;
        let samples: Vec<f32> = (0..2048)
            .map(|n| (2.0 * std::f64::consts::PI * f * n as f64 / sr as f64).sin() as f32)
            .collect();
        let clip = AudioClip::new(samples, sr).unwrap();
        let s = stft(&clip, win, 64).unwrap();
        for frame in &s.frames[1..s.frames.len() - 1] {
            let peak = frame[k0];
            for (k, &m) in frame.iter().enumerate() {
                if k.abs_diff(k0) > 1 {
                    assert!(peak >= 10.0 * m, "bin {k}: {m} vs {peak}");
                }
            }
            // Hann main lobe: the immediate neighbours sit at exactly half.
            assert!((frame[k0 - 1] / peak - 0.5).abs() < 1e-3);
            assert!((frame[k0 + 1] / peak - 0.5).abs() < 1e-3);
        }
    }

    #[test]
    fn silence_has_zero_magnitude() {
        let clip = AudioClip::new(vec![0.0; 1000], 8000).unwrap();
        let s = stft(&clip, 128, 50).unwrap();
        assert!(s.frames.iter().flatten().all(|&m| m == 0.0));
        assert!(s.frames.iter().all(|f| f.len() == 65));
    }

    #[test]
    fn window_longer_than_clip_is_an_error() {
        let clip = AudioClip::new(vec![0.0; 10], 8000).unwrap();
        assert!(matches!(stft(&clip, 11, 1), Err(AudioError::WindowTooLong { .. })));
    }

    #[test]
    fn parseval_against_time_domain_energy() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        for &win in &[64usize, 100, 255, 256] {
            let samples: Vec<f32> = (0..1500).map(|_| rng.gen_range(-1.0f32..1.0)).collect();
            let clip = AudioClip::new(samples.clone(), 8000).unwrap();
            let s = stft(&clip, win, 37).unwrap();
            let w = hann(win);
            for f in 0..s.frames.len() {
                let direct: f64 = samples[f * 37..f * 37 + win]
                    .iter()
                    .zip(&w)
                    .map(|(&x, &wv)| (x as f64 * wv).powi(2))
                    .sum();
                let via = s.frame_energy(f);
                assert!((via - direct).abs() <= 1e-6 * direct, "win {win} frame {f}");
            }
        }
    }

    proptest! {
        #[test]
        fn frame_count_formula(len in 1usize..600, wfrac in 0.0f64..1.0, hop in 1usize..50) {
            let window = 1 + ((len - 1) as f64 * wfrac) as usize;
            let clip = AudioClip::new(vec![0.1; len], 8000).unwrap();
            let s = stft(&clip, window, hop).unwrap();
            prop_assert_eq!(s.frames.len(), (len - window) / hop + 1);
            prop_assert!(s.frames.iter().all(|f| f.len() == window / 2 + 1));
        }
    }
}
