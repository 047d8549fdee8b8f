use rand::seq::SliceRandom;
use rand::Rng;

use crate::audio::AudioClip;
use crate::corpus::SyllableClass;
use crate::nn::{categorical_cross_entropy, AdamConfig, AdamState, Network, Tensor};
use crate::seed;

use super::{DetectorConfig, DetectorError, DetectorMode, DetectorModel, FrameClass, LabeledFrame};

/// Lower bound of the random per-example gain applied during training, so
/// that quieter generator output is not out of distribution.
const MIN_GAIN: f32 = 0.25;

/// Rows are truth, columns are predictions.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConfusionMatrix {
    pub labels: Vec<String>,
    pub counts: Vec<Vec<usize>>,
}

impl ConfusionMatrix {
    pub fn new(labels: Vec<String>) -> Self {
        let n = labels.len();
        Self {
            labels,
            counts: vec![vec![0; n]; n],
        }
    }

    pub fn add(&mut self, truth: usize, predicted: usize) {
        self.counts[truth][predicted] += 1;
    }

    pub fn total(&self) -> usize {
        self.counts.iter().flatten().sum()
    }

    pub fn accuracy(&self) -> f64 {
        let hit: usize = (0..self.labels.len()).map(|i| self.counts[i][i]).sum();
        match self.total() {
            0 => 0.0,
            t => hit as f64 / t as f64,
        }
    }

    pub fn to_csv(&self) -> String {
        let mut s = format!("truth,{}\n", self.labels.join(","));
        for (label, row) in self.labels.iter().zip(&self.counts) {
            let cells: Vec<String> = row.iter().map(|c| c.to_string()).collect();
            s.push_str(&format!("{label},{}\n", cells.join(",")));
        }
        s
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainSummary {
    /// (head name, examples used, mean loss of the final epoch)
    pub heads: Vec<(String, usize, f64)>,
}

fn check_present(examples: &[(&[f32], usize)], names: &[&str]) -> Result<(), DetectorError> {
    for (j, name) in names.iter().enumerate() {
        if !examples.iter().any(|&(_, t)| t == j) {
            return Err(DetectorError::MissingClass((*name).to_owned()));
        }
    }
    Ok(())
}

fn train_head(
    cfg: &DetectorConfig,
    name: &str,
    examples: &[(&[f32], usize)],
    n_out: usize,
) -> Result<(Network<f32>, f64), DetectorError> {
    let mut net = Network::new(vec![1, cfg.window], cfg.specs(n_out), seed::derive(cfg.seed, name, 0))?;
    let mut adam = AdamState::new(
        AdamConfig {
            lr: cfg.lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        },
        &net,
    );
    let mut last = f64::NAN;
    for epoch in 0..cfg.epochs {
        let mut rng = seed::rng(cfg.seed, name, epoch as u64 + 1);
        let mut order: Vec<usize> = (0..examples.len()).collect();
        order.shuffle(&mut rng);
        let (mut sum, mut count) = (0.0, 0);
        for batch in order.chunks(cfg.batch_size) {
            let mut data = Vec::with_capacity(batch.len() * cfg.window);
            let mut targets = Vec::with_capacity(batch.len());
            for &i in batch {
                let g: f32 = rng.gen_range(MIN_GAIN..=1.0);
                data.extend(examples[i].0.iter().map(|v| v * g));
                targets.push(examples[i].1);
            }
            net.zero_grad();
            let logits = net.forward(Tensor::new(vec![batch.len(), 1, cfg.window], data)?, None)?;
            let (loss, dl) = categorical_cross_entropy(&logits, &targets)?;
            net.backward_params(&dl)?;
            adam.step(&mut net)?;
            sum += loss * batch.len() as f64;
            count += batch.len();
        }
        last = sum / count.max(1) as f64;
    }
    net.clear_cache();
    Ok((net, last))
}

/// Silent frames are thinned to one in `silent_keep_every`; the rest are
/// kept as `other` so that silence never reads as a vowel or nasal.
fn training_frames<'a>(cfg: &DetectorConfig, frames: &'a [LabeledFrame]) -> Vec<&'a LabeledFrame> {
    let keep = cfg.silent_keep_every.max(1);
    let mut silent_seen = 0;
    frames
        .iter()
        .filter(|f| {
            if !f.silent {
                return true;
            }
            silent_seen += 1;
            (silent_seen - 1) % keep == 0
        })
        .collect()
}

/// Trains the networks of `mode` on labelled frames.
///
/// In dual-binary mode the vowel head separates vowel frames from the
/// rest, and the nasal head takes nasal consonants as its positives and
/// every frame other than a nasal vowel as negatives; nasal-vowel frames
/// never reach it during training.
pub fn train_detector(
    mode: DetectorMode,
    config: &DetectorConfig,
    frames: &[LabeledFrame],
) -> Result<(DetectorModel, TrainSummary), DetectorError> {
    config.validate()?;
    if let Some(f) = frames.iter().find(|f| f.window.len() != config.window) {
        return Err(DetectorError::WindowLength {
            expected: config.window,
            got: f.window.len(),
        });
    }
    let used = training_frames(config, frames);
    for class in FrameClass::ALL {
        if !used.iter().any(|f| f.class == class) {
            return Err(DetectorError::MissingClass(class.to_string()));
        }
    }
    let mut nets = Vec::new();
    let mut heads = Vec::new();
    match mode {
        DetectorMode::FourWay => {
            let ex: Vec<(&[f32], usize)> = used.iter().map(|f| (&f.window[..], f.class.index())).collect();
            let (net, loss) = train_head(config, "four_way", &ex, 4)?;
            nets.push(net);
            heads.push(("four_way".to_owned(), ex.len(), loss));
        }
        DetectorMode::DualBinary => {
            let vowel: Vec<(&[f32], usize)> = used
                .iter()
                .map(|f| (&f.window[..], f.class.is_vowel() as usize))
                .collect();
            check_present(&vowel, &["not_vowel", "vowel"])?;
            let nasal: Vec<(&[f32], usize)> = used
                .iter()
                .filter(|f| f.class != FrameClass::NasalVowel)
                .map(|f| (&f.window[..], (f.class == FrameClass::NasalConsonant) as usize))
                .collect();
            check_present(&nasal, &["not_nasal", "nasal"])?;
            for (name, ex) in [("vowel", vowel), ("nasal", nasal)] {
                let (net, loss) = train_head(config, name, &ex, 2)?;
                nets.push(net);
                heads.push((name.to_owned(), ex.len(), loss));
            }
        }
    }
    Ok((
        DetectorModel {
            mode,
            config: config.clone(),
            nets,
        },
        TrainSummary { heads },
    ))
}

#[derive(Clone, Debug, PartialEq)]
pub struct FrameEvaluation {
    /// Four-way decisions (intersected in dual mode) on non-silent frames.
    pub confusion: ConfusionMatrix,
    /// Per-head accuracy on the frames each head is defined for.
    pub heads: Vec<(String, f64)>,
}

/// Frame-level evaluation over non-silent frames.
pub fn evaluate_frames(model: &DetectorModel, frames: &[LabeledFrame]) -> Result<FrameEvaluation, DetectorError> {
    let w = model.config.window;
    let voiced: Vec<&LabeledFrame> = frames.iter().filter(|f| !f.silent).collect();
    let mut confusion = ConfusionMatrix::new(FrameClass::ALL.iter().map(|c| c.to_string()).collect());
    let (mut vowel_hit, mut nasal_hit, mut nasal_n) = (0usize, 0usize, 0usize);
    for chunk in voiced.chunks(256) {
        let mut data = Vec::with_capacity(chunk.len() * w);
        for f in chunk {
            if f.window.len() != w {
                return Err(DetectorError::WindowLength {
                    expected: w,
                    got: f.window.len(),
                });
            }
            data.extend_from_slice(&f.window);
        }
        for (f, p) in chunk.iter().zip(model.classify_windows(data, chunk.len())?) {
            confusion.add(f.class.index(), p.decide().index());
            if let super::FramePosterior::DualBinary { vowel, nasal } = p {
                vowel_hit += ((vowel[1] > vowel[0]) == f.class.is_vowel()) as usize;
                if f.class != FrameClass::NasalVowel {
                    nasal_n += 1;
                    nasal_hit += ((nasal[1] > nasal[0]) == (f.class == FrameClass::NasalConsonant)) as usize;
                }
            }
        }
    }
    let heads = match model.mode {
        DetectorMode::FourWay => vec![("four_way".to_owned(), confusion.accuracy())],
        DetectorMode::DualBinary => vec![
            ("vowel".to_owned(), vowel_hit as f64 / voiced.len().max(1) as f64),
            ("nasal".to_owned(), nasal_hit as f64 / nasal_n.max(1) as f64),
        ],
    };
    Ok(FrameEvaluation { confusion, heads })
}

/// Token-level syllable-class confusion over `(true class, clip)` pairs.
pub fn evaluate_tokens<'a>(
    model: &DetectorModel,
    tokens: impl IntoIterator<Item = (SyllableClass, &'a AudioClip)>,
) -> Result<ConfusionMatrix, DetectorError> {
    let mut m = ConfusionMatrix::new(SyllableClass::ALL.iter().map(|c| c.ascii().to_owned()).collect());
    for (class, clip) in tokens {
        let label = model.label_token(clip)?;
        m.add(class.index(), label.syllable_class.index());
    }
    Ok(m)
}
