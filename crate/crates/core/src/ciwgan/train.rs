use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::time::Instant;

use rand::seq::SliceRandom;

use super::{sample_latent_with, sample_latents, Ciwgan, CiwganConfig, GanError, Generator, LatentCode};
use crate::audio::AudioClip;
use crate::kv::KeyValues;
use crate::nn::checkpoint::{load_adam, save_adam};
use crate::nn::{categorical_cross_entropy, wgan_gp_critic_loss, AdamConfig, AdamState, NnError, Tensor};
use crate::seed;

#[derive(Clone, Debug, PartialEq)]
pub struct ReportRow {
    pub step: u64,
    pub critic_loss: f64,
    pub gen_loss: f64,
    pub q_loss: f64,
    pub gp: f64,
}

/// Loss trace, one row per `report_every` generator steps. Wall-clock time
/// is kept in memory only so that the CSV stays reproducible.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainReport {
    pub rows: Vec<ReportRow>,
    pub wall_secs: f64,
}

impl TrainReport {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("step,critic_loss,gen_loss,q_loss,gp\n");
        for r in &self.rows {
            let _ = writeln!(s, "{},{},{},{},{}", r.step, r.critic_loss, r.gen_loss, r.q_loss, r.gp);
        }
        s
    }

    pub fn from_csv(text: &str) -> Result<Self, GanError> {
        let mut rows = Vec::new();
        for line in text.lines().skip(1).filter(|l| !l.trim().is_empty()) {
            let cols: Vec<&str> = line.split(',').collect();
            let bad = || GanError::Data(format!("bad report row {line:?}"));
            if cols.len() != 5 {
                return Err(bad());
            }
            let f = |i: usize| cols[i].parse::<f64>().map_err(|_| bad());
            rows.push(ReportRow {
                step: cols[0].parse().map_err(|_| bad())?,
                critic_loss: f(1)?,
                gen_loss: f(2)?,
                q_loss: f(3)?,
                gp: f(4)?,
            });
        }
        Ok(Self { rows, wall_secs: 0.0 })
    }
}

/// Training state that can be checkpointed and resumed exactly: every
/// random draw is derived from `(seed, purpose, step)`.
pub struct Trainer {
    pub model: Ciwgan,
    adam_g: AdamState<f32>,
    adam_d: AdamState<f32>,
    adam_q: AdamState<f32>,
    pub gen_step: u64,
    pub report: TrainReport,
    data: Vec<f32>,
    n_data: usize,
    epoch_cache: Option<(u64, Vec<usize>)>,
}

impl Trainer {
    pub fn new(config: CiwganConfig, dataset: &[AudioClip]) -> Result<Self, GanError> {
        let model = Ciwgan::new(config)?;
        Self::from_model(model, dataset)
    }

    pub fn from_model(model: Ciwgan, dataset: &[AudioClip]) -> Result<Self, GanError> {
        let len = model.config.audio_len;
        if dataset.is_empty() {
            return Err(GanError::Data("empty dataset".into()));
        }
        if let Some((i, c)) = dataset.iter().enumerate().find(|(_, c)| c.len() != len) {
            return Err(GanError::Data(format!("clip {i} has {} samples, expected {len}", c.len())));
        }
        let data = dataset.iter().flat_map(|c| c.samples().iter().copied()).collect();
        let adam = model.config.adam();
        Ok(Self {
            adam_g: AdamState::new(adam, &model.generator),
            adam_d: AdamState::new(adam, &model.critic),
            adam_q: AdamState::new(
                AdamConfig {
                    lr: model.config.q_lr,
                    ..adam
                },
                &model.q,
            ),
            gen_step: 0,
            report: TrainReport::default(),
            data,
            n_data: dataset.len(),
            epoch_cache: None,
            model,
        })
    }

    pub fn total_gen_steps(&self) -> u64 {
        self.model.config.gen_steps(self.n_data)
    }

    fn example_index(&mut self, position: u64) -> usize {
        let n = self.n_data as u64;
        let epoch = position / n;
        if self.epoch_cache.as_ref().map(|(e, _)| *e) != Some(epoch) {
            let mut perm: Vec<usize> = (0..self.n_data).collect();
            perm.shuffle(&mut seed::rng(self.model.config.seed, "epoch", epoch));
            self.epoch_cache = Some((epoch, perm));
        }
        self.epoch_cache.as_ref().expect("filled above").1[(position % n) as usize]
    }

    fn real_batch(&mut self, critic_step: u64) -> Result<Tensor<f32>, GanError> {
        let (b, len) = (self.model.config.batch_size, self.model.config.audio_len);
        let mut out = Vec::with_capacity(b * len);
        for i in 0..b as u64 {
            let idx = self.example_index(critic_step * b as u64 + i);
            out.extend_from_slice(&self.data[idx * len..(idx + 1) * len]);
        }
        Ok(Tensor::new(vec![b, 1, len], out)?)
    }

    fn latents(&self, label: &str, step: u64) -> Vec<LatentCode> {
        let c = &self.model.config;
        let mut rng = seed::rng(c.seed, label, step);
        (0..c.batch_size).map(|_| sample_latent_with(c.n_phi, c.n_z, &mut rng)).collect()
    }

    fn non_finite(&self, e: NnError, what: &str) -> GanError {
        match e {
            NnError::NonFinite(detail) => GanError::NonFinite {
                what: format!("{what} ({detail})"),
                step: self.gen_step,
            },
            other => other.into(),
        }
    }

    /// One generator step: `n_critic` critic updates, then a joint update
    /// of generator and Q-network.
    pub fn step(&mut self) -> Result<ReportRow, GanError> {
        let cfg = self.model.config.clone();
        let b = cfg.batch_size;
        let mut critic_loss = 0.0;
        let mut gp = 0.0;
        for c in 0..cfg.n_critic as u64 {
            let cs = self.gen_step * cfg.n_critic as u64 + c;
            let real = self.real_batch(cs)?;
            let codes = self.latents("critic_latent", cs);
            let z = self.model.latent_tensor(&codes)?;
            let fake = self.model.generator.infer(z)?.reshape(vec![b, 1, cfg.audio_len])?;
            self.model.critic.zero_grad();
            let loss = wgan_gp_critic_loss(
                &mut self.model.critic,
                &real,
                &fake,
                cfg.lambda,
                seed::derive(cfg.seed, "critic_step", cs),
            )
            .map_err(|e| self.non_finite(e, "critic loss"))?;
            self.adam_d
                .step(&mut self.model.critic)
                .map_err(|e| self.non_finite(e, "critic gradient"))?;
            critic_loss = loss.loss;
            gp = loss.penalty;
        }

        let codes = self.latents("gen_latent", self.gen_step);
        let targets: Vec<usize> = codes.iter().map(|c| c.phi).collect();
        let z = self.model.latent_tensor(&codes)?;
        let mut rng = seed::rng(cfg.seed, "gen_shuffle", self.gen_step);
        self.model.generator.zero_grad();
        let fake = self.model.generator.forward(z, None)?;

        let scores = self.model.critic.forward(fake.clone(), Some(&mut rng))?;
        let gen_loss = -scores.data().iter().map(|v| *v as f64).sum::<f64>() / b as f64;
        let d_scores = Tensor::new(vec![b, 1], vec![-1.0 / b as f32; b])?;
        let (_, d_fake_critic) = self.model.critic.input_gradient(&d_scores)?;
        self.model.critic.clear_cache();

        self.model.q.zero_grad();
        let logits = self.model.q.forward(fake, Some(&mut rng))?;
        let (q_loss, d_logits) = categorical_cross_entropy(&logits, &targets)?;
        let d_logits = d_logits.map(|v| v * cfg.q_weight as f32);
        let d_fake_q = self.model.q.backward(&d_logits)?;

        if !(gen_loss.is_finite() && q_loss.is_finite()) {
            return Err(GanError::NonFinite {
                what: format!("generator loss {gen_loss} / Q loss {q_loss}"),
                step: self.gen_step,
            });
        }
        let mut d_fake = d_fake_critic;
        for (d, q) in d_fake.data_mut().iter_mut().zip(d_fake_q.data()) {
            *d += *q;
        }
        self.model.generator.backward(&d_fake)?;
        self.adam_g
            .step(&mut self.model.generator)
            .map_err(|e| self.non_finite(e, "generator gradient"))?;
        self.adam_q
            .step(&mut self.model.q)
            .map_err(|e| self.non_finite(e, "Q gradient"))?;
        self.model.generator.clear_cache();
        self.model.q.clear_cache();
        self.model.critic.clear_cache();

        self.gen_step += 1;
        Ok(ReportRow {
            step: self.gen_step,
            critic_loss,
            gen_loss,
            q_loss,
            gp,
        })
    }

    /// Trains until `target` generator steps have been taken, checkpointing
    /// into `checkpoint_dir` every `checkpoint_every` steps and at the end.
    pub fn run(&mut self, target: u64, checkpoint_dir: Option<&Path>) -> Result<(), GanError> {
        let start = Instant::now();
        let cfg = self.model.config.clone();
        while self.gen_step < target {
            let row = self.step()?;
            if cfg.report_every > 0 && (row.step % cfg.report_every == 0 || row.step == target) {
                self.report.rows.push(row);
            }
            if let Some(dir) = checkpoint_dir {
                if cfg.checkpoint_every > 0 && self.gen_step % cfg.checkpoint_every == 0 {
                    self.save(dir)?;
                }
            }
        }
        self.report.wall_secs += start.elapsed().as_secs_f64();
        if let Some(dir) = checkpoint_dir {
            self.save(dir)?;
        }
        Ok(())
    }

    /// Networks, optimizer moments, step counter and loss trace.
    pub fn save(&self, dir: &Path) -> Result<(), GanError> {
        self.model.save(dir)?;
        save_adam(&self.adam_g, &dir.join("adam_generator.ckpt"))?;
        save_adam(&self.adam_d, &dir.join("adam_critic.ckpt"))?;
        save_adam(&self.adam_q, &dir.join("adam_q.ckpt"))?;
        let mut kv = KeyValues::new();
        kv.set("gen_step", self.gen_step);
        fs::write(dir.join("state.txt"), kv.to_string())?;
        fs::write(dir.join("train_report.csv"), self.report.to_csv())?;
        Ok(())
    }

    pub fn resume(dir: &Path, dataset: &[AudioClip]) -> Result<Self, GanError> {
        let model = Ciwgan::load(dir)?;
        let mut t = Self::from_model(model, dataset)?;
        t.adam_g = load_adam(&dir.join("adam_generator.ckpt"))?;
        t.adam_d = load_adam(&dir.join("adam_critic.ckpt"))?;
        t.adam_q = load_adam(&dir.join("adam_q.ckpt"))?;
        let kv = KeyValues::parse(&fs::read_to_string(dir.join("state.txt"))?).map_err(GanError::Config)?;
        t.gen_step = kv
            .get("gen_step")
            .map_err(GanError::Config)?
            .ok_or_else(|| GanError::Config("state.txt lacks gen_step".into()))?;
        t.report = TrainReport::from_csv(&fs::read_to_string(dir.join("train_report.csv"))?)?;
        Ok(t)
    }
}

/// Trains a fresh model for the number of generator steps implied by the
/// config's epoch count.
pub fn train(
    config: CiwganConfig,
    dataset: &[AudioClip],
    checkpoint_dir: Option<&Path>,
) -> Result<(Ciwgan, TrainReport), GanError> {
    let mut t = Trainer::new(config, dataset)?;
    let target = t.total_gen_steps();
    t.run(target, checkpoint_dir)?;
    Ok((t.model, t.report))
}

/// Fraction of `n` fresh generated clips whose φ the Q-network recovers,
/// together with the mean Q cross-entropy.
pub fn q_accuracy(model: &Ciwgan, n: usize, seed_value: u64) -> Result<(f64, f64), GanError> {
    let codes = sample_latents(model.config.n_phi, model.config.n_z, n, seed_value);
    let mut correct = 0;
    let mut loss = 0.0;
    for chunk in codes.chunks(64) {
        let clips = model.generate_many(chunk)?;
        let len = model.config.audio_len;
        let data: Vec<f32> = clips.iter().flat_map(|c| c.samples().iter().copied()).collect();
        let logits = model.q.infer(Tensor::new(vec![chunk.len(), 1, len], data)?)?;
        let targets: Vec<usize> = chunk.iter().map(|c| c.phi).collect();
        loss += categorical_cross_entropy(&logits, &targets)?.0 * chunk.len() as f64;
        let k = model.config.n_phi;
        for (i, t) in targets.iter().enumerate() {
            let row = &logits.data()[i * k..(i + 1) * k];
            let arg = (0..k).fold(0, |best, j| if row[j] > row[best] { j } else { best });
            correct += usize::from(arg == *t);
        }
    }
    Ok((correct as f64 / n as f64, loss / n as f64))
}
