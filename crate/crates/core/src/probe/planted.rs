use crate::audio::{synth_syllable, AudioClip, SyllableSpec};
use crate::ciwgan::{GanError, Generator, LatentCode};
use crate::corpus::SyllableClass;

/// Hand-built generator whose output class is a function of `sign(z[var])`
/// alone: the prototype `high` syllable when `z[var] > 0`, `low` otherwise.
#[derive(Clone, Debug)]
pub struct PlantedGenerator {
    pub n_phi: usize,
    pub n_z: usize,
    pub var: usize,
    low: AudioClip,
    high: AudioClip,
}

impl PlantedGenerator {
    pub fn new(
        n_phi: usize,
        n_z: usize,
        var: usize,
        low: SyllableClass,
        high: SyllableClass,
        sample_rate: u32,
        len: usize,
    ) -> Result<Self, GanError> {
        if var >= n_z || n_phi == 0 {
            return Err(GanError::Config(format!("planted variable z{var} out of {n_z}")));
        }
        let clip = |c| {
            synth_syllable(&SyllableSpec::prototype(c), sample_rate, len, 0).map_err(|e| GanError::Data(e.to_string()))
        };
        Ok(Self {
            n_phi,
            n_z,
            var,
            low: clip(low)?,
            high: clip(high)?,
        })
    }
}

impl Generator for PlantedGenerator {
    fn n_phi(&self) -> usize {
        self.n_phi
    }

    fn n_z(&self) -> usize {
        self.n_z
    }

    fn sample_rate(&self) -> u32 {
        self.low.sample_rate()
    }

    fn generate_many(&self, codes: &[LatentCode]) -> Result<Vec<AudioClip>, GanError> {
        codes
            .iter()
            .map(|c| {
                if c.n_phi != self.n_phi || c.z.len() != self.n_z {
                    return Err(GanError::Dimension {
                        expected: self.n_phi + self.n_z,
                        got: c.dims(),
                    });
                }
                Ok(if c.z[self.var] > 0.0 { self.high.clone() } else { self.low.clone() })
            })
            .collect()
    }
}
