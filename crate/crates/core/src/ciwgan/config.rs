use crate::kv::{format_list, parse_list, KeyValues};
use crate::nn::{validate_specs, AdamConfig, LayerSpec};

use super::GanError;

/// Architecture and training hyperparameters. Everything round-trips
/// through the `key=value` sidecar written next to checkpoints.
#[derive(Clone, Debug, PartialEq)]
pub struct CiwganConfig {
    pub n_phi: usize,
    pub n_z: usize,
    pub audio_len: usize,
    pub sample_rate: u32,
    /// Input channels of each transposed convolution; the last one maps to
    /// a single audio channel.
    pub gen_channels: Vec<usize>,
    /// Output channels of each critic convolution.
    pub critic_channels: Vec<usize>,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
    pub slope: f64,
    pub phase_shuffle: usize,
    pub batch_size: usize,
    pub lambda: f64,
    /// Weight of the Q cross-entropy in the generator objective.
    pub q_weight: f64,
    pub lr: f64,
    /// Learning rate of the Q-network alone.
    pub q_lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub n_critic: usize,
    /// One epoch is a full pass over the dataset in a shuffled order.
    pub epochs: f64,
    /// Upper bound on generator steps regardless of `epochs`.
    pub max_gen_steps: Option<u64>,
    /// Checkpoint interval in generator steps; 0 disables.
    pub checkpoint_every: u64,
    pub report_every: u64,
    pub seed: u64,
}

impl Default for CiwganConfig {
    fn default() -> Self {
        Self {
            n_phi: 3,
            n_z: 97,
            audio_len: 4096,
            sample_rate: 8000,
            gen_channels: vec![32, 16, 16, 8, 8],
            critic_channels: vec![8, 8, 16, 16, 32],
            kernel: 24,
            stride: 4,
            padding: 10,
            slope: 0.2,
            phase_shuffle: 2,
            batch_size: 16,
            lambda: 10.0,
            q_weight: 100.0,
            lr: 1e-4,
            q_lr: 1e-4,
            beta1: 0.5,
            beta2: 0.9,
            n_critic: 5,
            epochs: 649.0,
            max_gen_steps: None,
            checkpoint_every: 0,
            report_every: 10,
            seed: 0,
        }
    }
}

impl CiwganConfig {
    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            lr: self.lr,
            beta1: self.beta1,
            beta2: self.beta2,
            ..AdamConfig::default()
        }
    }

    fn base_len(&self) -> usize {
        let factor = self.stride.pow(self.gen_channels.len() as u32);
        self.audio_len / factor.max(1)
    }

    pub fn generator_specs(&self) -> (Vec<usize>, Vec<LayerSpec>) {
        let c = &self.gen_channels;
        let base = self.base_len();
        let mut specs = vec![
            LayerSpec::Dense {
                inputs: self.n_phi + self.n_z,
                outputs: c[0] * base,
            },
            LayerSpec::Reshape { shape: vec![c[0], base] },
            LayerSpec::LeakyRelu { slope: self.slope },
        ];
        for i in 0..c.len() {
            let out = c.get(i + 1).copied().unwrap_or(1);
            specs.push(LayerSpec::Conv1dTranspose {
                in_channels: c[i],
                out_channels: out,
                kernel: self.kernel,
                stride: self.stride,
                padding: self.padding,
            });
            specs.push(if i + 1 < c.len() {
                LayerSpec::LeakyRelu { slope: self.slope }
            } else {
                LayerSpec::Tanh
            });
        }
        (vec![self.n_phi + self.n_z], specs)
    }

    /// Critic topology with `outputs` units in the final dense layer; the
    /// Q-network uses the same layers with `n_phi` outputs.
    pub fn critic_specs(&self, outputs: usize) -> Vec<LayerSpec> {
        let c = &self.critic_channels;
        let mut specs = Vec::new();
        let mut len = self.audio_len;
        for i in 0..c.len() {
            specs.push(LayerSpec::Conv1d {
                in_channels: if i == 0 { 1 } else { c[i - 1] },
                out_channels: c[i],
                kernel: self.kernel,
                stride: self.stride,
                padding: self.padding,
            });
            specs.push(LayerSpec::LeakyRelu { slope: self.slope });
            if i + 1 < c.len() && self.phase_shuffle > 0 {
                specs.push(LayerSpec::PhaseShuffle {
                    radius: self.phase_shuffle,
                });
            }
            len = (len + 2 * self.padding).saturating_sub(self.kernel) / self.stride.max(1) + 1;
        }
        let last = *c.last().unwrap_or(&1);
        specs.push(LayerSpec::Reshape { shape: vec![last * len] });
        specs.push(LayerSpec::Dense {
            inputs: last * len,
            outputs,
        });
        specs
    }

    pub fn validate(&self) -> Result<(), GanError> {
        let bad = |m: String| Err(GanError::Config(m));
        if self.n_phi == 0 || self.n_z == 0 {
            return bad("n_phi and n_z must be positive".into());
        }
        if self.gen_channels.is_empty() || self.critic_channels.is_empty() {
            return bad("channel lists must be non-empty".into());
        }
        if self.gen_channels.iter().chain(&self.critic_channels).any(|&c| c == 0) {
            return bad("channel widths must be positive".into());
        }
        let factor = self.stride.checked_pow(self.gen_channels.len() as u32).unwrap_or(0);
        if factor == 0 || self.audio_len % factor != 0 || self.audio_len < factor {
            return bad(format!(
                "audio_len {} is not a multiple of stride^layers = {factor}",
                self.audio_len
            ));
        }
        let (g_in, g_specs) = self.generator_specs();
        let out = validate_specs(&g_in, &g_specs).map_err(|e| GanError::Config(e.to_string()))?;
        if out != [1, self.audio_len] {
            return bad(format!(
                "generator produces {out:?}, expected [1, {}]; kernel - 2*padding must equal stride",
                self.audio_len
            ));
        }
        validate_specs(&[1, self.audio_len], &self.critic_specs(1)).map_err(|e| GanError::Config(e.to_string()))?;
        if self.batch_size == 0 || self.n_critic == 0 {
            return bad("batch_size and n_critic must be positive".into());
        }
        if !(self.epochs >= 0.0 && self.epochs.is_finite()) {
            return bad(format!("epochs must be finite and non-negative, got {}", self.epochs));
        }
        if !(self.lr > 0.0 && self.q_lr > 0.0 && self.lambda >= 0.0 && self.q_weight >= 0.0) {
            return bad("lr and q_lr must be positive, lambda and q_weight non-negative".into());
        }
        Ok(())
    }

    /// Generator steps implied by `epochs` over `dataset_len` tokens:
    /// critic steps = floor(epochs·N / batch), generator steps = critic
    /// steps / n_critic, capped by `max_gen_steps`.
    pub fn gen_steps(&self, dataset_len: usize) -> u64 {
        let critic = (self.epochs * dataset_len as f64 / self.batch_size as f64).floor() as u64;
        let g = critic / self.n_critic as u64;
        self.max_gen_steps.map_or(g, |m| g.min(m))
    }

    pub fn to_kv(&self) -> KeyValues {
        let mut kv = KeyValues::new();
        kv.set("n_phi", self.n_phi);
        kv.set("n_z", self.n_z);
        kv.set("audio_len", self.audio_len);
        kv.set("sample_rate", self.sample_rate);
        kv.set("gen_channels", format_list(&self.gen_channels));
        kv.set("critic_channels", format_list(&self.critic_channels));
        kv.set("kernel", self.kernel);
        kv.set("stride", self.stride);
        kv.set("padding", self.padding);
        kv.set("slope", self.slope);
        kv.set("phase_shuffle", self.phase_shuffle);
        kv.set("batch_size", self.batch_size);
        kv.set("lambda", self.lambda);
        kv.set("q_weight", self.q_weight);
        kv.set("lr", self.lr);
        kv.set("q_lr", self.q_lr);
        kv.set("beta1", self.beta1);
        kv.set("beta2", self.beta2);
        kv.set("n_critic", self.n_critic);
        kv.set("epochs", self.epochs);
        kv.set(
            "max_gen_steps",
            self.max_gen_steps.map_or("none".to_owned(), |v| v.to_string()),
        );
        kv.set("checkpoint_every", self.checkpoint_every);
        kv.set("report_every", self.report_every);
        kv.set("seed", self.seed);
        kv
    }

    /// Starts from `self` and overrides every key present in `kv`.
    pub fn updated(&self, kv: &KeyValues) -> Result<Self, GanError> {
        let mut c = self.clone();
        let e = GanError::Config;
        kv.read_into("n_phi", &mut c.n_phi).map_err(e)?;
        kv.read_into("n_z", &mut c.n_z).map_err(e)?;
        kv.read_into("audio_len", &mut c.audio_len).map_err(e)?;
        kv.read_into("sample_rate", &mut c.sample_rate).map_err(e)?;
        if let Some(v) = kv.get_str("gen_channels") {
            c.gen_channels = parse_list(v).map_err(e)?;
        }
        if let Some(v) = kv.get_str("critic_channels") {
            c.critic_channels = parse_list(v).map_err(e)?;
        }
        kv.read_into("kernel", &mut c.kernel).map_err(e)?;
        kv.read_into("stride", &mut c.stride).map_err(e)?;
        kv.read_into("padding", &mut c.padding).map_err(e)?;
        kv.read_into("slope", &mut c.slope).map_err(e)?;
        kv.read_into("phase_shuffle", &mut c.phase_shuffle).map_err(e)?;
        kv.read_into("batch_size", &mut c.batch_size).map_err(e)?;
        kv.read_into("lambda", &mut c.lambda).map_err(e)?;
        kv.read_into("q_weight", &mut c.q_weight).map_err(e)?;
        kv.read_into("lr", &mut c.lr).map_err(e)?;
        kv.read_into("q_lr", &mut c.q_lr).map_err(e)?;
        kv.read_into("beta1", &mut c.beta1).map_err(e)?;
        kv.read_into("beta2", &mut c.beta2).map_err(e)?;
        kv.read_into("n_critic", &mut c.n_critic).map_err(e)?;
        kv.read_into("epochs", &mut c.epochs).map_err(e)?;
        match kv.get_str("max_gen_steps") {
            None => {}
            Some("none") | Some("") => c.max_gen_steps = None,
            Some(v) => {
                c.max_gen_steps = Some(v.parse().map_err(|_| GanError::Config(format!("max_gen_steps: {v:?}")))?)
            }
        }
        kv.read_into("checkpoint_every", &mut c.checkpoint_every).map_err(e)?;
        kv.read_into("report_every", &mut c.report_every).map_err(e)?;
        kv.read_into("seed", &mut c.seed).map_err(e)?;
        c.validate()?;
        Ok(c)
    }

    pub fn from_kv_text(text: &str) -> Result<Self, GanError> {
        let kv = KeyValues::parse(text).map_err(GanError::Config)?;
        Self::default().updated(&kv)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_is_valid_and_round_trips() {
        let c = CiwganConfig::default();
        c.validate().unwrap();
        assert_eq!((c.n_phi, c.n_z), (3, 97));
        assert_eq!(c.epochs, 649.0);
        let text = c.to_kv().to_string();
        assert!(text.contains("epochs=649\n"));
        assert_eq!(CiwganConfig::from_kv_text(&text).unwrap(), c);
    }

    #[test]
    fn step_arithmetic() {
        let c = CiwganConfig {
            epochs: 1.0,
            ..Default::default()
        };
        // 1000 tokens, batch 16: 62 critic steps, 12 generator steps
        assert_eq!(c.gen_steps(1000), 12);
        let c = CiwganConfig {
            epochs: 0.05,
            ..Default::default()
        };
        assert_eq!(c.gen_steps(1000), 0);
        let c = CiwganConfig {
            max_gen_steps: Some(5),
            ..Default::default()
        };
        assert_eq!(c.gen_steps(1000), 5);
    }

    #[test]
    fn rejects_inconsistent_geometry() {
        let c = CiwganConfig {
            audio_len: 4000,
            ..Default::default()
        };
        assert!(c.validate().is_err());
        let c = CiwganConfig {
            padding: 9,
            ..Default::default()
        };
        assert!(c.validate().is_err());
    }
}
