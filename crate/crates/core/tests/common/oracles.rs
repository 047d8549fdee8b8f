//! Independent oracles for the probe suite: brute-force contingency
//! tables with exact rational chi-square, random labelled batches, and a
//! labeler that reads nasality off the spectrum instead of a trained model.

use nasalgan::audio::{spectral_class, AudioClip, SyllableSpec};
use nasalgan::ciwgan::LatentCode;
use nasalgan::corpus::SyllableClass;
use nasalgan::detector::TokenLabel;
use nasalgan::probe::{Feature, LabeledBatch, Labeler, ProbeError};
use num_bigint::BigInt;
use num_rational::BigRational;
use rand::Rng;

/// Σ (O − E)² / E over the four cells, with E from the marginals. `None`
/// when some expected count is zero.
pub fn brute_chi_square(table: [[u64; 2]; 2]) -> Option<BigRational> {
    let n: u64 = table.iter().flatten().sum();
    let row = |i: usize| table[i][0] + table[i][1];
    let col = |j: usize| table[0][j] + table[1][j];
    let mut total = BigRational::from_integer(BigInt::from(0));
    for i in 0..2 {
        for j in 0..2 {
            if row(i) == 0 || col(j) == 0 {
                return None;
            }
            let e = BigRational::new(BigInt::from(row(i) * col(j)), BigInt::from(n));
            let d = BigRational::from_integer(BigInt::from(table[i][j])) - &e;
            total += &d * &d / e;
        }
    }
    Some(total)
}

/// Counts by direct enumeration: rows z ≤ 0 / z > 0, columns target false / true.
pub fn brute_table(batch: &LabeledBatch, var: usize, target: Feature) -> [[u64; 2]; 2] {
    let mut t = [[0u64; 2]; 2];
    for (code, label) in &batch.entries {
        let hi = if code.z[var] > 0.0 { 1 } else { 0 };
        let on = match target {
            Feature::NasalVowel => label.nasal_vowel_present,
            Feature::NasalConsonant => label.nasal_consonant_present,
        };
        t[hi][on as usize] += 1;
    }
    t
}

pub fn label_of(class: SyllableClass) -> TokenLabel {
    TokenLabel {
        nasal_vowel_present: class.nasal_vowel(),
        nasal_consonant_present: class.nasal_coda(),
        syllable_class: class,
        silent: false,
        voiced_frames: 1,
        nasal_vowel_frames: 0,
        nasal_consonant_frames: 0,
    }
}

/// `n` codes with uniform z and independent random labels.
pub fn random_batch(rng: &mut impl Rng, n: usize, n_z: usize) -> LabeledBatch {
    let entries = (0..n)
        .map(|_| {
            let z = (0..n_z).map(|_| rng.gen_range(-1.0f32..1.0)).collect();
            let class = SyllableClass::ALL[rng.gen_range(0..4)];
            (LatentCode::new(0, 1, z).unwrap(), label_of(class))
        })
        .collect();
    LabeledBatch::new(entries, "random", "random").unwrap()
}

/// Labels clips with the synthesis-side spectral heuristic, reading the
/// vowel and coda at the nominal prototype positions. Silent or
/// unreadable clips are VT.
pub struct SpectralLabeler {
    pub sample_rate: u32,
}

impl Labeler for SpectralLabeler {
    fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    fn label(&self, clip: &AudioClip) -> Result<TokenLabel, ProbeError> {
        let layout = SyllableSpec::prototype(SyllableClass::VT).layout(self.sample_rate);
        let class = if clip.peak() == 0.0 {
            SyllableClass::VT
        } else {
            spectral_class(clip, &layout).unwrap_or(SyllableClass::VT)
        };
        Ok(label_of(class))
    }
}
