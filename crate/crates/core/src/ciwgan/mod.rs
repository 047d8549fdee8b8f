//! Categorical InfoWaveGAN: a generator mapping a one-hot code φ and a
//! uniform latent z to audio, a Wasserstein critic, and a Q-network that
//! recovers φ from generated audio.

mod config;
mod train;

pub use config::CiwganConfig;
pub use train::{q_accuracy, train, ReportRow, TrainReport, Trainer};

use std::fs;
use std::path::Path;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::audio::AudioClip;
use crate::nn::checkpoint::{load_network, save_network};
use crate::nn::{Network, NnError, Tensor};
use crate::seed;

#[derive(Debug, Error)]
pub enum GanError {
    #[error("config: {0}")]
    Config(String),
    #[error("latent code has {got} dimensions, model expects {expected}")]
    Dimension { expected: usize, got: usize },
    #[error("dataset: {0}")]
    Data(String),
    #[error("non-finite {what} at generator step {step}")]
    NonFinite { what: String, step: u64 },
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// A generator input: categorical class `phi` (one-hot of length `n_phi`)
/// and continuous `z`.
#[derive(Clone, Debug, PartialEq)]
pub struct LatentCode {
    pub phi: usize,
    pub n_phi: usize,
    pub z: Vec<f32>,
}

impl LatentCode {
    pub fn new(phi: usize, n_phi: usize, z: Vec<f32>) -> Result<Self, GanError> {
        if phi >= n_phi {
            return Err(GanError::Config(format!("phi class {phi} out of {n_phi}")));
        }
        Ok(Self { phi, n_phi, z })
    }

    pub fn phi_one_hot(&self) -> Vec<f32> {
        (0..self.n_phi).map(|i| if i == self.phi { 1.0 } else { 0.0 }).collect()
    }

    /// `[φ one-hot, z]`, the generator's input vector.
    pub fn to_vector(&self) -> Vec<f32> {
        let mut v = self.phi_one_hot();
        v.extend_from_slice(&self.z);
        v
    }

    pub fn dims(&self) -> usize {
        self.n_phi + self.z.len()
    }
}

/// Draws φ uniformly over the classes and each z component uniformly from
/// the open interval (-1, 1).
pub fn sample_latent_with(n_phi: usize, n_z: usize, rng: &mut impl Rng) -> LatentCode {
    let phi = rng.gen_range(0..n_phi);
    let z = (0..n_z)
        .map(|_| loop {
            let v: f32 = rng.gen_range(-1.0..1.0);
            if v != -1.0 {
                break v;
            }
        })
        .collect();
    LatentCode { phi, n_phi, z }
}

pub fn sample_latent(n_phi: usize, n_z: usize, seed_value: u64) -> LatentCode {
    sample_latent_with(n_phi, n_z, &mut seed::rng(seed_value, "latent", 0))
}

/// `count` codes from one seeded stream.
pub fn sample_latents(n_phi: usize, n_z: usize, count: usize, seed_value: u64) -> Vec<LatentCode> {
    let mut rng: ChaCha8Rng = seed::rng(seed_value, "latent", 0);
    (0..count).map(|_| sample_latent_with(n_phi, n_z, &mut rng)).collect()
}

/// Anything that turns latent codes into audio: the trained generator, or
/// a hand-built stand-in for probing tests.
pub trait Generator {
    fn n_phi(&self) -> usize;
    fn n_z(&self) -> usize;
    fn sample_rate(&self) -> u32;
    fn generate_many(&self, codes: &[LatentCode]) -> Result<Vec<AudioClip>, GanError>;

    fn generate(&self, code: &LatentCode) -> Result<AudioClip, GanError> {
        Ok(self.generate_many(std::slice::from_ref(code))?.remove(0))
    }
}

/// The three networks of the model plus the configuration that built them.
#[derive(Clone, Debug)]
pub struct Ciwgan {
    pub config: CiwganConfig,
    pub generator: Network<f32>,
    pub critic: Network<f32>,
    pub q: Network<f32>,
}

impl Ciwgan {
    pub fn new(config: CiwganConfig) -> Result<Self, GanError> {
        config.validate()?;
        let (g_in, g_specs) = config.generator_specs();
        let generator = Network::new(g_in, g_specs, seed::derive(config.seed, "init_generator", 0))?;
        let critic = Network::new(
            vec![1, config.audio_len],
            config.critic_specs(1),
            seed::derive(config.seed, "init_critic", 0),
        )?;
        let q = Network::new(
            vec![1, config.audio_len],
            config.critic_specs(config.n_phi),
            seed::derive(config.seed, "init_q", 0),
        )?;
        Ok(Self {
            config,
            generator,
            critic,
            q,
        })
    }

    pub fn check_code(&self, code: &LatentCode) -> Result<(), GanError> {
        let expected = self.config.n_phi + self.config.n_z;
        if code.n_phi != self.config.n_phi || code.dims() != expected {
            return Err(GanError::Dimension {
                expected,
                got: code.dims(),
            });
        }
        Ok(())
    }

    pub fn latent_tensor(&self, codes: &[LatentCode]) -> Result<Tensor<f32>, GanError> {
        let mut data = Vec::with_capacity(codes.len() * (self.config.n_phi + self.config.n_z));
        for c in codes {
            self.check_code(c)?;
            data.extend(c.to_vector());
        }
        Ok(Tensor::new(vec![codes.len(), self.config.n_phi + self.config.n_z], data)?)
    }

    /// `n` fresh codes from `seed` with their generated clips.
    pub fn generate_batch(&self, n: usize, seed_value: u64) -> Result<Vec<(LatentCode, AudioClip)>, GanError> {
        let codes = sample_latents(self.config.n_phi, self.config.n_z, n, seed_value);
        let mut out = Vec::with_capacity(n);
        for chunk in codes.chunks(64) {
            let clips = self.generate_many(chunk)?;
            out.extend(chunk.iter().cloned().zip(clips));
        }
        Ok(out)
    }

    /// Writes `generator.ckpt`, `critic.ckpt`, `q.ckpt` and `config.txt`.
    pub fn save(&self, dir: &Path) -> Result<(), GanError> {
        fs::create_dir_all(dir)?;
        save_network(&self.generator, &dir.join("generator.ckpt"))?;
        save_network(&self.critic, &dir.join("critic.ckpt"))?;
        save_network(&self.q, &dir.join("q.ckpt"))?;
        fs::write(dir.join("config.txt"), self.config.to_kv().to_string())?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self, GanError> {
        let text = fs::read_to_string(dir.join("config.txt"))?;
        let config = CiwganConfig::from_kv_text(&text)?;
        let model = Self {
            generator: load_network(&dir.join("generator.ckpt"))?,
            critic: load_network(&dir.join("critic.ckpt"))?,
            q: load_network(&dir.join("q.ckpt"))?,
            config,
        };
        let fresh = Self::new(model.config.clone())?;
        if fresh.generator.specs() != model.generator.specs()
            || fresh.critic.specs() != model.critic.specs()
            || fresh.q.specs() != model.q.specs()
        {
            return Err(GanError::Config("checkpoint layers do not match config.txt".into()));
        }
        Ok(model)
    }
}

impl Generator for Ciwgan {
    fn n_phi(&self) -> usize {
        self.config.n_phi
    }

    fn n_z(&self) -> usize {
        self.config.n_z
    }

    fn sample_rate(&self) -> u32 {
        self.config.sample_rate
    }

    fn generate_many(&self, codes: &[LatentCode]) -> Result<Vec<AudioClip>, GanError> {
        if codes.is_empty() {
            return Ok(Vec::new());
        }
        let x = self.latent_tensor(codes)?;
        let y = self.generator.infer(x)?;
        (0..codes.len())
            .map(|i| Ok(AudioClip::new(y.example(i).to_vec(), self.config.sample_rate).map_err(|e| GanError::Data(e.to_string()))?))
            .collect()
    }
}
