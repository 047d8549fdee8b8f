use std::f64::consts::PI;
use std::ops::Range;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::stft::stft_samples;
use super::{AudioClip, AudioError};
use crate::corpus::SyllableClass;
use crate::seed;

/// Centre frequency of the nasal resonance added to nasal vowels and
/// dominating nasal murmur.
pub const NASAL_RESONANCE_HZ: f64 = 250.0;
const NASAL_BANDWIDTH_HZ: f64 = 80.0;
const FORMANT_BANDWIDTHS_HZ: [f64; 3] = [90.0, 110.0, 170.0];
const ORAL_AMPLITUDES: [f64; 3] = [1.0, 0.5, 0.25];
/// Nasal vowels keep this fraction of each oral formant amplitude.
const NASAL_VOWEL_FORMANT_GAIN: [f64; 3] = [0.2, 0.5, 0.5];
/// Murmur resonances: (frequency, bandwidth, amplitude).
const MURMUR_RESONANCES: [(f64, f64, f64); 3] = [
    (NASAL_RESONANCE_HZ, NASAL_BANDWIDTH_HZ, 1.0),
    (1000.0, 150.0, 0.06),
    (2200.0, 200.0, 0.04),
];
const MURMUR_RMS_RATIO: f64 = 0.5;
const FADE_SECS: f64 = 0.008;
const CLOSURE_FRACTION: f64 = 0.6;
const BURST_DECAY_SECS: f64 = 0.006;
const BURST_PEAK_RATIO: f64 = 0.5;
const OUTPUT_PEAK: f32 = 0.9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Coda {
    Stop,
    Nasal,
}

/// Parameters of one synthetic vowel + coda syllable.
#[derive(Clone, Debug, PartialEq)]
pub struct SyllableSpec {
    /// F1, F2, F3 in Hz.
    pub vowel_formants: [f64; 3],
    pub vowel_nasal: bool,
    pub coda: Coda,
    pub f0: f64,
    pub vowel_duration: f64,
    pub coda_duration: f64,
}

/// Sample spans of the parts of a synthesized syllable.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SyllableLayout {
    pub vowel: Range<usize>,
    pub coda: Range<usize>,
    /// Silent closure and release burst, for stop codas.
    pub closure: Option<Range<usize>>,
    pub burst: Option<Range<usize>>,
}

impl SyllableSpec {
    /// Nominal values for a class, before jitter.
    pub fn prototype(class: SyllableClass) -> Self {
        Self {
            vowel_formants: [650.0, 1100.0, 2450.0],
            vowel_nasal: class.nasal_vowel(),
            coda: if class.nasal_coda() { Coda::Nasal } else { Coda::Stop },
            f0: 130.0,
            vowel_duration: 0.2,
            coda_duration: 0.1,
        }
    }

    /// Per-token variability: formants ±8%, f0 ±15%, durations ±20%.
    pub fn jittered(&self, rng: &mut ChaCha8Rng) -> Self {
        let mut j = |v: f64, frac: f64| v * (1.0 + rng.gen_range(-frac..=frac));
        let formants = [
            j(self.vowel_formants[0], 0.08),
            j(self.vowel_formants[1], 0.08),
            j(self.vowel_formants[2], 0.08),
        ];
        Self {
            vowel_formants: formants,
            vowel_nasal: self.vowel_nasal,
            coda: self.coda,
            f0: j(self.f0, 0.15),
            vowel_duration: j(self.vowel_duration, 0.2),
            coda_duration: j(self.coda_duration, 0.2),
        }
    }

    pub fn class(&self) -> SyllableClass {
        SyllableClass::from_flags(self.vowel_nasal, self.coda == Coda::Nasal)
    }

    pub fn validate(&self, sample_rate: u32) -> Result<(), AudioError> {
        let [f1, f2, f3] = self.vowel_formants;
        let nyquist = sample_rate as f64 / 2.0;
        if !(0.0 < f1 && f1 < f2 && f2 < f3 && f3 < nyquist) {
            return Err(AudioError::InvalidSpec(format!(
                "formants must satisfy 0 < F1 < F2 < F3 < {nyquist}, got {:?}",
                self.vowel_formants
            )));
        }
        if !(self.vowel_duration > 0.0 && self.coda_duration > 0.0) {
            return Err(AudioError::InvalidSpec("durations must be positive".into()));
        }
        if !(self.f0 > 0.0 && self.f0 < nyquist) {
            return Err(AudioError::InvalidSpec(format!("f0 {} out of range", self.f0)));
        }
        Ok(())
    }

    pub fn layout(&self, sample_rate: u32) -> SyllableLayout {
        let sr = sample_rate as f64;
        let v = (self.vowel_duration * sr).round() as usize;
        let c = (self.coda_duration * sr).round() as usize;
        let coda = v..v + c;
        let (closure, burst) = match self.coda {
            Coda::Nasal => (None, None),
            Coda::Stop => {
                let cl = (c as f64 * CLOSURE_FRACTION).round() as usize;
                (Some(v..v + cl), Some(v + cl..v + c))
            }
        };
        SyllableLayout {
            vowel: 0..v,
            coda,
            closure,
            burst,
        }
    }
}

/// Two-pole resonator scaled to unit gain at its centre frequency.
struct Resonator {
    a: f64,
    b: f64,
    c: f64,
    y1: f64,
    y2: f64,
}

impl Resonator {
    fn new(freq: f64, bw: f64, sample_rate: f64) -> Self {
        let t = 1.0 / sample_rate;
        let c = -(-2.0 * PI * bw * t).exp();
        let b = 2.0 * (-PI * bw * t).exp() * (2.0 * PI * freq * t).cos();
        // |1 - b e^{-jw} - c e^{-2jw}| at the centre frequency
        let w = 2.0 * PI * freq * t;
        let re = 1.0 - b * w.cos() - c * (2.0 * w).cos();
        let im = b * w.sin() + c * (2.0 * w).sin();
        let a = (re * re + im * im).sqrt();
        Self { a, b, c, y1: 0.0, y2: 0.0 }
    }

    fn run(mut self, input: &[f64]) -> Vec<f64> {
        input
            .iter()
            .map(|&x| {
                let y = self.a * x + self.b * self.y1 + self.c * self.y2;
                self.y2 = self.y1;
                self.y1 = y;
                y
            })
            .collect()
    }
}

fn impulse_train(f0: f64, sample_rate: f64, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; n];
    let step = f0 / sample_rate;
    let mut phase = 1.0;
    for o in out.iter_mut() {
        if phase >= 1.0 {
            phase -= 1.0;
            *o = 1.0;
        }
        phase += step;
    }
    out
}

fn parallel_bank(source: &[f64], resonances: &[(f64, f64, f64)], sample_rate: f64) -> Vec<f64> {
    let mut out = vec![0.0; source.len()];
    for &(f, bw, amp) in resonances {
        if amp == 0.0 {
            continue;
        }
        let y = Resonator::new(f, bw, sample_rate).run(source);
        for (o, v) in out.iter_mut().zip(y) {
            *o += amp * v;
        }
    }
    out
}

fn rms(x: &[f64]) -> f64 {
    if x.is_empty() {
        return 0.0;
    }
    (x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64).sqrt()
}

/// Raised-cosine ramp from 0 to 1 over `len` samples.
fn ramp(i: usize, len: usize) -> f64 {
    if len == 0 || i >= len {
        return 1.0;
    }
    0.5 - 0.5 * (PI * i as f64 / len as f64).cos()
}

/// Renders one syllable: an impulse-train source at f0 through parallel
/// formant resonators for the vowel, followed by either a nasal murmur or a
/// stop closure and burst. Right-padded to `total_len`, peak-normalized to
/// 0.9. `seed` drives the burst noise only.
pub fn synth_syllable(spec: &SyllableSpec, sample_rate: u32, total_len: usize, seed: u64) -> Result<AudioClip, AudioError> {
    spec.validate(sample_rate)?;
    let layout = spec.layout(sample_rate);
    let n = layout.coda.end;
    if n > total_len || layout.vowel.is_empty() || layout.coda.is_empty() {
        return Err(AudioError::InfeasibleDuration { needed: n, total: total_len });
    }
    let sr = sample_rate as f64;
    let source = impulse_train(spec.f0, sr, n);

    let mut vowel_res: Vec<(f64, f64, f64)> = (0..3)
        .map(|i| {
            let gain = if spec.vowel_nasal { NASAL_VOWEL_FORMANT_GAIN[i] } else { 1.0 };
            (spec.vowel_formants[i], FORMANT_BANDWIDTHS_HZ[i], ORAL_AMPLITUDES[i] * gain)
        })
        .collect();
    if spec.vowel_nasal {
        vowel_res.push((NASAL_RESONANCE_HZ, NASAL_BANDWIDTH_HZ, 1.0));
    }
    let vowel = parallel_bank(&source, &vowel_res, sr);
    let vlen = layout.vowel.end;
    let fade = ((FADE_SECS * sr).round() as usize).min(vlen / 4);
    let vowel_rms = rms(&vowel[..vlen]);

    let mut out = vec![0.0f64; total_len];
    for i in 0..vlen {
        let env = ramp(i, fade) * ramp(vlen - 1 - i, fade);
        out[i] = env * vowel[i];
    }

    match spec.coda {
        Coda::Nasal => {
            let murmur = parallel_bank(&source, &MURMUR_RESONANCES, sr);
            let m_rms = rms(&murmur[layout.coda.clone()]);
            let gain = if m_rms > 0.0 { MURMUR_RMS_RATIO * vowel_rms / m_rms } else { 0.0 };
            let clen = layout.coda.len();
            for (k, i) in layout.coda.clone().enumerate() {
                let env = ramp(k, fade) * ramp(clen - 1 - k, fade);
                out[i] = env * gain * murmur[i];
            }
        }
        Coda::Stop => {
            let burst = layout.burst.clone().expect("stop layout has a burst");
            let vowel_peak = out[..vlen].iter().fold(0.0f64, |m, v| m.max(v.abs()));
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut prev = 0.0;
            let decay = BURST_DECAY_SECS * sr;
            let mut raw = Vec::with_capacity(burst.len());
            for k in 0..burst.len() {
                let w: f64 = rng.gen_range(-1.0..1.0);
                // first difference tilts the noise towards high frequencies
                raw.push((w - prev) * (-(k as f64) / decay).exp());
                prev = w;
            }
            let rpeak = raw.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            let gain = if rpeak > 0.0 { BURST_PEAK_RATIO * vowel_peak / rpeak } else { 0.0 };
            for (k, i) in burst.enumerate() {
                out[i] = gain * raw[k];
            }
        }
    }

    let peak = out.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let samples = out
        .iter()
        .map(|v| (v * OUTPUT_PEAK as f64 / peak) as f32)
        .collect();
    AudioClip::new(samples, sample_rate)
}

fn dominant_frequency(samples: &[f32], sample_rate: u32) -> Option<f64> {
    let window = 256.min(samples.len());
    let s = stft_samples(samples, sample_rate, window, window / 4).ok()?;
    let spec = s.mean_spectrum(0..s.frames.len());
    let (bin, _) = spec
        .iter()
        .enumerate()
        .skip(1)
        .fold((0, f64::MIN), |best, (i, &m)| if m > best.1 { (i, m) } else { best });
    Some(s.bin_hz(bin))
}

/// Independent spectral heuristic: a portion whose dominant frequency lies
/// below 400 Hz is nasal. Applied to the vowel and coda spans of `layout`.
pub fn spectral_class(clip: &AudioClip, layout: &SyllableLayout) -> Option<SyllableClass> {
    let s = clip.samples();
    let coda_span = match &layout.burst {
        Some(b) => b.clone(),
        None => layout.coda.clone(),
    };
    let v = dominant_frequency(s.get(layout.vowel.clone())?, clip.sample_rate())?;
    let c = dominant_frequency(s.get(coda_span)?, clip.sample_rate())?;
    Some(SyllableClass::from_flags(v < 400.0, c < 400.0))
}

/// One synthesized corpus token with the parameters that produced it.
#[derive(Clone, Debug, PartialEq)]
pub struct SynthToken {
    pub class: SyllableClass,
    pub index: usize,
    pub spec: SyllableSpec,
    pub layout: SyllableLayout,
    pub clip: AudioClip,
}

/// `count` jittered tokens per class. Token `i` of a class depends only on
/// `(seed, class, i)`, so changing another class's count leaves it intact.
pub fn synth_corpus(
    counts: &[(SyllableClass, usize)],
    sample_rate: u32,
    total_len: usize,
    seed_value: u64,
) -> Result<Vec<SynthToken>, AudioError> {
    let mut out = Vec::new();
    for &(class, n) in counts {
        for i in 0..n {
            let mut rng = seed::rng(seed_value, class.ascii(), i as u64);
            let spec = SyllableSpec::prototype(class).jittered(&mut rng);
            let clip = synth_syllable(&spec, sample_rate, total_len, rng.gen())?;
            out.push(SynthToken {
                class,
                index: i,
                layout: spec.layout(sample_rate),
                spec,
                clip,
            });
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::audio::stft;

    fn strongest_peak_hz(clip: &AudioClip, span: Range<usize>) -> f64 {
        let part = AudioClip::new(clip.samples()[span].to_vec(), clip.sample_rate()).unwrap();
        let s = stft(&part, 512.min(part.len()), 64).unwrap();
        let mean = s.mean_spectrum(0..s.frames.len());
        let (bin, _) = mean
            .iter()
            .enumerate()
            .skip(1)
            .fold((0, f64::MIN), |b, (i, &m)| if m > b.1 { (i, m) } else { b });
        s.bin_hz(bin)
    }

    #[test]
    fn oral_vowel_peaks_at_f1() {
        let spec = SyllableSpec::prototype(SyllableClass::VT);
        let clip = synth_syllable(&spec, 8000, 4096, 1).unwrap();
        let lay = spec.layout(8000);
        let f = strongest_peak_hz(&clip, lay.vowel);
        assert!((f - 650.0).abs() <= 50.0, "{f}");
    }

    #[test]
    fn nasal_coda_peaks_near_250() {
        let spec = SyllableSpec::prototype(SyllableClass::VN);
        let clip = synth_syllable(&spec, 8000, 4096, 1).unwrap();
        let f = strongest_peak_hz(&clip, spec.layout(8000).coda);
        assert!((f - 250.0).abs() <= 50.0, "{f}");
    }

    #[test]
    fn vowel_duration_in_samples() {
        let spec = SyllableSpec {
            vowel_duration: 0.2,
            ..SyllableSpec::prototype(SyllableClass::VT)
        };
        assert_eq!(spec.layout(8000).vowel, 0..1600);
    }

    #[test]
    fn infeasible_and_invalid_specs() {
        let spec = SyllableSpec {
            vowel_duration: 0.5,
            ..SyllableSpec::prototype(SyllableClass::VT)
        };
        assert!(matches!(
            synth_syllable(&spec, 8000, 4096, 0),
            Err(AudioError::InfeasibleDuration { .. })
        ));
        let spec = SyllableSpec {
            vowel_formants: [1200.0, 1100.0, 2500.0],
            ..SyllableSpec::prototype(SyllableClass::VT)
        };
        assert!(matches!(synth_syllable(&spec, 8000, 4096, 0), Err(AudioError::InvalidSpec(_))));
        let spec = SyllableSpec {
            vowel_formants: [650.0, 1100.0, 4500.0],
            ..SyllableSpec::prototype(SyllableClass::VT)
        };
        assert!(synth_syllable(&spec, 8000, 4096, 0).is_err());
    }

    #[test]
    fn length_peak_and_determinism() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for class in SyllableClass::ALL {
            for _ in 0..10 {
                let spec = SyllableSpec::prototype(class).jittered(&mut rng);
                let a = synth_syllable(&spec, 8000, 4096, 77).unwrap();
                let b = synth_syllable(&spec, 8000, 4096, 77).unwrap();
                assert_eq!(a, b);
                assert_eq!(a.len(), 4096);
                assert!((a.peak() - 0.9).abs() <= 1e-6);
                assert!(a.samples()[spec.layout(8000).coda.end..].iter().all(|&s| s == 0.0));
            }
        }
    }

    #[test]
    fn class_recoverable_by_spectral_heuristic() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for class in SyllableClass::ALL {
            for i in 0..50 {
                let spec = SyllableSpec::prototype(class).jittered(&mut rng);
                let clip = synth_syllable(&spec, 8000, 4096, i).unwrap();
                assert_eq!(spectral_class(&clip, &spec.layout(8000)), Some(class), "{spec:?}");
            }
        }
    }
}
