//! Frame-level nasality classifier and token-level aggregation.
//!
//! A clip is cut into hop-length segments; each segment is classified from
//! a window centred on it (zeros outside the clip). Segments whose own RMS
//! falls under the silence gate are ignored when aggregating, which makes
//! token verdicts invariant to trailing zero padding.

mod frames;
mod train;

pub use frames::{clip_frames, frame_centers, frame_labels, segment_rms, synth_frames, window_at, FrameClass, LabeledFrame};
pub use train::{evaluate_frames, evaluate_tokens, train_detector, ConfusionMatrix, FrameEvaluation, TrainSummary};

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use thiserror::Error;

use crate::audio::AudioClip;
use crate::corpus::SyllableClass;
use crate::kv::{format_list, parse_list, KeyValues};
use crate::nn::checkpoint::{load_network, save_network};
use crate::nn::{softmax, LayerSpec, Network, NnError, Tensor};

#[derive(Debug, Error)]
pub enum DetectorError {
    #[error("training data has no {0} frames")]
    MissingClass(String),
    #[error("window has {got} samples, model expects {expected}")]
    WindowLength { expected: usize, got: usize },
    #[error("clip of {got} samples is shorter than one window ({window})")]
    ClipTooShort { window: usize, got: usize },
    #[error("clip sample rate {got} differs from model rate {expected}")]
    SampleRate { expected: u32, got: u32 },
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DetectorMode {
    /// One network over {oral_vowel, nasal_vowel, nasal_consonant, other}.
    FourWay,
    /// Independent vowel and nasal networks whose verdicts are intersected.
    DualBinary,
}

impl fmt::Display for DetectorMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::FourWay => "four_way",
            Self::DualBinary => "dual_binary",
        })
    }
}

impl FromStr for DetectorMode {
    type Err = DetectorError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "four_way" => Ok(Self::FourWay),
            "dual_binary" => Ok(Self::DualBinary),
            other => Err(DetectorError::Config(format!("unknown detector mode {other:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DetectorConfig {
    pub sample_rate: u32,
    /// Odd, so that a centre sample exists.
    pub window: usize,
    pub hop: usize,
    /// Output channels of the four convolutions.
    pub channels: Vec<usize>,
    pub slope: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    /// Minimum fraction of non-silent frames for a presence verdict.
    pub theta: f64,
    pub silence_rms: f32,
    /// Keep one in this many silent training frames.
    pub silent_keep_every: usize,
    pub seed: u64,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        Self {
            sample_rate: 8000,
            window: 511,
            hop: 128,
            channels: vec![16, 16, 16, 16],
            slope: 0.2,
            epochs: 8,
            batch_size: 32,
            lr: 1e-3,
            theta: 0.1,
            silence_rms: 0.01,
            silent_keep_every: 4,
            seed: 0,
        }
    }
}

/// (kernel, stride) of the four convolutions for a 511-sample window:
/// 511 → 56 → 25 → 11 → 4.
const CONV_SHAPE: [(usize, usize); 4] = [(64, 8), (8, 2), (5, 2), (5, 2)];

impl DetectorConfig {
    pub fn validate(&self) -> Result<(), DetectorError> {
        let bad = |m: &str| Err(DetectorError::Config(m.to_owned()));
        if self.window % 2 == 0 {
            return bad("window must be odd");
        }
        if self.hop == 0 || self.batch_size == 0 {
            return bad("hop and batch_size must be positive");
        }
        if self.channels.len() != 4 || self.channels.contains(&0) {
            return bad("channels must list four positive widths");
        }
        if !(0.0..=1.0).contains(&self.theta) {
            return bad("theta must lie in [0, 1]");
        }
        crate::nn::validate_specs(&[1, self.window], &self.specs(2))?;
        Ok(())
    }

    pub fn specs(&self, outputs: usize) -> Vec<LayerSpec> {
        let mut specs = Vec::new();
        let mut len = self.window;
        let mut prev = 1;
        for (&c, &(k, s)) in self.channels.iter().zip(&CONV_SHAPE) {
            specs.push(LayerSpec::Conv1d {
                in_channels: prev,
                out_channels: c,
                kernel: k,
                stride: s,
                padding: 0,
            });
            specs.push(LayerSpec::LeakyRelu { slope: self.slope });
            len = if len >= k { (len - k) / s + 1 } else { 0 };
            prev = c;
        }
        specs.push(LayerSpec::Reshape { shape: vec![prev * len] });
        specs.push(LayerSpec::Dense {
            inputs: prev * len,
            outputs,
        });
        specs
    }

    pub fn to_kv(&self) -> KeyValues {
        let mut kv = KeyValues::new();
        kv.set("sample_rate", self.sample_rate);
        kv.set("window", self.window);
        kv.set("hop", self.hop);
        kv.set("channels", format_list(&self.channels));
        kv.set("slope", self.slope);
        kv.set("epochs", self.epochs);
        kv.set("batch_size", self.batch_size);
        kv.set("lr", self.lr);
        kv.set("theta", self.theta);
        kv.set("silence_rms", self.silence_rms);
        kv.set("silent_keep_every", self.silent_keep_every);
        kv.set("seed", self.seed);
        kv
    }

    pub fn updated(&self, kv: &KeyValues) -> Result<Self, DetectorError> {
        let mut c = self.clone();
        let e = DetectorError::Config;
        kv.read_into("sample_rate", &mut c.sample_rate).map_err(e)?;
        kv.read_into("window", &mut c.window).map_err(e)?;
        kv.read_into("hop", &mut c.hop).map_err(e)?;
        if let Some(v) = kv.get_str("channels") {
            c.channels = parse_list(v).map_err(e)?;
        }
        kv.read_into("slope", &mut c.slope).map_err(e)?;
        kv.read_into("epochs", &mut c.epochs).map_err(e)?;
        kv.read_into("batch_size", &mut c.batch_size).map_err(e)?;
        kv.read_into("lr", &mut c.lr).map_err(e)?;
        kv.read_into("theta", &mut c.theta).map_err(e)?;
        kv.read_into("silence_rms", &mut c.silence_rms).map_err(e)?;
        kv.read_into("silent_keep_every", &mut c.silent_keep_every).map_err(e)?;
        kv.read_into("seed", &mut c.seed).map_err(e)?;
        c.validate()?;
        Ok(c)
    }
}

/// Posterior for the centre sample of one window.
#[derive(Clone, Debug, PartialEq)]
pub enum FramePosterior {
    /// Indexed by [`FrameClass::index`].
    FourWay([f64; 4]),
    /// Each head is `[negative, positive]`.
    DualBinary { vowel: [f64; 2], nasal: [f64; 2] },
}

impl FramePosterior {
    pub fn decide(&self) -> FrameClass {
        match self {
            Self::FourWay(p) => {
                let arg = (0..4).fold(0, |b, j| if p[j] > p[b] { j } else { b });
                FrameClass::ALL[arg]
            }
            Self::DualBinary { vowel, nasal } => {
                let v = vowel[1] > vowel[0];
                let n = nasal[1] > nasal[0];
                match (v, n) {
                    (true, true) => FrameClass::NasalVowel,
                    (true, false) => FrameClass::OralVowel,
                    (false, true) => FrameClass::NasalConsonant,
                    (false, false) => FrameClass::Other,
                }
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TokenLabel {
    pub nasal_vowel_present: bool,
    pub nasal_consonant_present: bool,
    pub syllable_class: SyllableClass,
    /// No frame passed the silence gate.
    pub silent: bool,
    pub voiced_frames: usize,
    pub nasal_vowel_frames: usize,
    pub nasal_consonant_frames: usize,
}

#[derive(Clone, Debug)]
pub struct DetectorModel {
    pub mode: DetectorMode,
    pub config: DetectorConfig,
    /// Four-way: one network. Dual-binary: vowel head then nasal head.
    pub nets: Vec<Network<f32>>,
}

fn head_posteriors(net: &Network<f32>, windows: Vec<f32>, n: usize, window: usize) -> Result<Vec<Vec<f64>>, DetectorError> {
    let logits = net.infer(Tensor::new(vec![n, 1, window], windows)?)?;
    let k = logits.shape()[1];
    Ok((0..n).map(|i| softmax(&logits.data()[i * k..(i + 1) * k])).collect())
}

impl DetectorModel {
    fn classify_windows(&self, windows: Vec<f32>, n: usize) -> Result<Vec<FramePosterior>, DetectorError> {
        let w = self.config.window;
        match self.mode {
            DetectorMode::FourWay => Ok(head_posteriors(&self.nets[0], windows, n, w)?
                .into_iter()
                .map(|p| FramePosterior::FourWay([p[0], p[1], p[2], p[3]]))
                .collect()),
            DetectorMode::DualBinary => {
                let v = head_posteriors(&self.nets[0], windows.clone(), n, w)?;
                let s = head_posteriors(&self.nets[1], windows, n, w)?;
                Ok(v.into_iter()
                    .zip(s)
                    .map(|(v, s)| FramePosterior::DualBinary {
                        vowel: [v[0], v[1]],
                        nasal: [s[0], s[1]],
                    })
                    .collect())
            }
        }
    }

    /// Posterior for the centre sample of `window`.
    pub fn classify_center(&self, window: &[f32]) -> Result<FramePosterior, DetectorError> {
        if window.len() != self.config.window {
            return Err(DetectorError::WindowLength {
                expected: self.config.window,
                got: window.len(),
            });
        }
        Ok(self.classify_windows(window.to_vec(), 1)?.remove(0))
    }

    /// Per-frame decisions for every hop segment of `clip`; `None` marks
    /// frames under the silence gate.
    pub fn frame_decisions(&self, clip: &AudioClip) -> Result<Vec<Option<FrameClass>>, DetectorError> {
        let cfg = &self.config;
        if clip.sample_rate() != cfg.sample_rate {
            return Err(DetectorError::SampleRate {
                expected: cfg.sample_rate,
                got: clip.sample_rate(),
            });
        }
        if clip.len() < cfg.window {
            return Err(DetectorError::ClipTooShort {
                window: cfg.window,
                got: clip.len(),
            });
        }
        let s = clip.samples();
        let centers = frame_centers(s.len(), cfg.hop);
        let voiced: Vec<usize> = (0..centers.len())
            .filter(|&k| segment_rms(s, k, cfg.hop) >= cfg.silence_rms)
            .collect();
        let mut out = vec![None; centers.len()];
        for chunk in voiced.chunks(256) {
            let mut data = Vec::with_capacity(chunk.len() * cfg.window);
            for &k in chunk {
                data.extend(window_at(s, centers[k], cfg.window));
            }
            for (&k, p) in chunk.iter().zip(self.classify_windows(data, chunk.len())?) {
                out[k] = Some(p.decide());
            }
        }
        Ok(out)
    }

    /// Token verdict: a feature is present when its frame class covers at
    /// least `theta` of the non-silent frames.
    pub fn label_token(&self, clip: &AudioClip) -> Result<TokenLabel, DetectorError> {
        let frames = self.frame_decisions(clip)?;
        let voiced: Vec<FrameClass> = frames.into_iter().flatten().collect();
        let nv = voiced.iter().filter(|&&c| c == FrameClass::NasalVowel).count();
        let nc = voiced.iter().filter(|&&c| c == FrameClass::NasalConsonant).count();
        let n = voiced.len();
        let present = |k: usize| n > 0 && k as f64 >= self.config.theta * n as f64;
        let (a, b) = (present(nv), present(nc));
        Ok(TokenLabel {
            nasal_vowel_present: a,
            nasal_consonant_present: b,
            syllable_class: SyllableClass::from_flags(a, b),
            silent: n == 0,
            voiced_frames: n,
            nasal_vowel_frames: nv,
            nasal_consonant_frames: nc,
        })
    }

    fn net_names(&self) -> &'static [&'static str] {
        match self.mode {
            DetectorMode::FourWay => &["four_way.ckpt"],
            DetectorMode::DualBinary => &["vowel.ckpt", "nasal.ckpt"],
        }
    }

    pub fn save(&self, dir: &Path) -> Result<(), DetectorError> {
        fs::create_dir_all(dir)?;
        let mut kv = self.config.to_kv();
        kv.set("mode", self.mode);
        fs::write(dir.join("detector.txt"), kv.to_string())?;
        for (net, name) in self.nets.iter().zip(self.net_names()) {
            save_network(net, &dir.join(name))?;
        }
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self, DetectorError> {
        let kv = KeyValues::parse(&fs::read_to_string(dir.join("detector.txt"))?).map_err(DetectorError::Config)?;
        let mode: DetectorMode = kv
            .get_str("mode")
            .ok_or_else(|| DetectorError::Config("detector.txt lacks mode".into()))?
            .parse()?;
        let config = DetectorConfig::default().updated(&kv)?;
        let mut model = Self {
            mode,
            config,
            nets: Vec::new(),
        };
        for name in model.net_names() {
            let net: Network<f32> = load_network(&dir.join(name))?;
            if net.input_shape() != [1, model.config.window] {
                return Err(DetectorError::Config(format!("{name} does not take {}-sample windows", model.config.window)));
            }
            model.nets.push(net);
        }
        Ok(model)
    }
}

/// CSV `clip,nasal_vowel,nasal_consonant,class` for labelled clips.
pub fn labels_csv<'a>(rows: impl IntoIterator<Item = (&'a str, &'a TokenLabel)>) -> String {
    let mut s = String::from("clip,nasal_vowel,nasal_consonant,class\n");
    for (name, l) in rows {
        s.push_str(&format!(
            "{name},{},{},{}\n",
            l.nasal_vowel_present, l.nasal_consonant_present, l.syllable_class
        ));
    }
    s
}
