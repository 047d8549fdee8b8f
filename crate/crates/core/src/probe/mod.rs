//! Latent-space probing: label generated batches, rank latent variables by
//! association with nasality, and sweep variables outside the training
//! range.

mod chi;
mod manipulate;
mod planted;

pub use chi::{
    chi_square_2x2, chi_square_exact, chi_square_scores, covariance_check, point_biserial, ratio_to_f64,
    ChiSquareReport, Covariance, LatentVar, VarScore, DEFAULT_TOP_K, REPORT_HEADER,
};
pub use manipulate::{
    export_heatmap, manipulate_pair, manipulate_single, GridCell, ManipulationConfig, ManipulationGrid, SingleSweep,
    HEATMAP_SCALE,
};
pub use planted::PlantedGenerator;

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::audio::AudioClip;
use crate::ciwgan::{sample_latents, GanError, Generator, LatentCode};
use crate::detector::{DetectorError, DetectorModel, TokenLabel};

#[derive(Debug, Error)]
pub enum ProbeError {
    #[error("{0} is constant across the batch; chi-square is undefined")]
    Unscorable(Feature),
    #[error("latent variable {var} out of range for {dims} dimensions")]
    Variable { var: String, dims: usize },
    #[error("pair manipulation needs two distinct variables, got {0} twice")]
    SameVariable(usize),
    #[error("invalid probe settings: {0}")]
    Config(String),
    #[error("generator produces {generator} Hz audio but the detector expects {detector} Hz")]
    SampleRate { generator: u32, detector: u32 },
    #[error(transparent)]
    Gan(#[from] GanError),
    #[error(transparent)]
    Detector(#[from] DetectorError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Token-level nasality feature scored by the probes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Feature {
    NasalVowel,
    NasalConsonant,
}

impl Feature {
    pub const ALL: [Feature; 2] = [Self::NasalVowel, Self::NasalConsonant];

    pub fn of(self, label: &TokenLabel) -> bool {
        match self {
            Self::NasalVowel => label.nasal_vowel_present,
            Self::NasalConsonant => label.nasal_consonant_present,
        }
    }
}

impl fmt::Display for Feature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::NasalVowel => "nasal_vowel",
            Self::NasalConsonant => "nasal_consonant",
        })
    }
}

impl FromStr for Feature {
    type Err = ProbeError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "nasal_vowel" => Ok(Self::NasalVowel),
            "nasal_consonant" => Ok(Self::NasalConsonant),
            other => Err(ProbeError::Config(format!("unknown feature {other:?}"))),
        }
    }
}

/// Turns clips into token verdicts.
pub trait Labeler {
    fn sample_rate(&self) -> u32;
    fn label(&self, clip: &AudioClip) -> Result<TokenLabel, ProbeError>;
}

impl Labeler for DetectorModel {
    fn sample_rate(&self) -> u32 {
        self.config.sample_rate
    }

    fn label(&self, clip: &AudioClip) -> Result<TokenLabel, ProbeError> {
        Ok(self.label_token(clip)?)
    }
}

/// Codes per generator call; bounds peak memory during sweeps.
const CHUNK: usize = 128;

pub(crate) fn check_rates(generator: &dyn Generator, labeler: &dyn Labeler) -> Result<(), ProbeError> {
    if generator.sample_rate() != labeler.sample_rate() {
        return Err(ProbeError::SampleRate {
            generator: generator.sample_rate(),
            detector: labeler.sample_rate(),
        });
    }
    Ok(())
}

/// Generates and labels `codes` in order.
pub fn label_codes(
    generator: &dyn Generator,
    labeler: &dyn Labeler,
    codes: &[LatentCode],
) -> Result<Vec<TokenLabel>, ProbeError> {
    check_rates(generator, labeler)?;
    let mut out = Vec::with_capacity(codes.len());
    for chunk in codes.chunks(CHUNK) {
        for clip in generator.generate_many(chunk)? {
            out.push(labeler.label(&clip)?);
        }
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq)]
pub struct LabeledBatch {
    pub entries: Vec<(LatentCode, TokenLabel)>,
    pub generator_id: String,
    pub detector_id: String,
}

impl LabeledBatch {
    /// Builds a batch, checking that all codes share dimensions.
    pub fn new(
        entries: Vec<(LatentCode, TokenLabel)>,
        generator_id: impl Into<String>,
        detector_id: impl Into<String>,
    ) -> Result<Self, ProbeError> {
        if let Some((first, _)) = entries.first() {
            let (p, z) = (first.n_phi, first.z.len());
            if entries.iter().any(|(c, _)| c.n_phi != p || c.z.len() != z) {
                return Err(ProbeError::Config("latent codes differ in dimensions".into()));
            }
        }
        Ok(Self {
            entries,
            generator_id: generator_id.into(),
            detector_id: detector_id.into(),
        })
    }

    /// `n` fresh codes from `seed`, generated and labelled.
    pub fn generate(
        generator: &dyn Generator,
        labeler: &dyn Labeler,
        n: usize,
        seed: u64,
        generator_id: impl Into<String>,
        detector_id: impl Into<String>,
    ) -> Result<Self, ProbeError> {
        let codes = sample_latents(generator.n_phi(), generator.n_z(), n, seed);
        let labels = label_codes(generator, labeler, &codes)?;
        Self::new(codes.into_iter().zip(labels).collect(), generator_id, detector_id)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// CSV of codes and verdicts: `index,phi,nasal_vowel,nasal_consonant,class,z0..`.
    pub fn to_csv(&self) -> String {
        let n_z = self.entries.first().map_or(0, |(c, _)| c.z.len());
        let mut s = String::from("index,phi,nasal_vowel,nasal_consonant,class");
        for j in 0..n_z {
            s.push_str(&format!(",z{j}"));
        }
        s.push('\n');
        for (i, (c, l)) in self.entries.iter().enumerate() {
            s.push_str(&format!(
                "{i},{},{},{},{}",
                c.phi, l.nasal_vowel_present, l.nasal_consonant_present, l.syllable_class
            ));
            for v in &c.z {
                s.push_str(&format!(",{v}"));
            }
            s.push('\n');
        }
        s
    }
}
