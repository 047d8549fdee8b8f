use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::fs::{self, OpenOptions};
use std::path::{Path, PathBuf};

use nasalgan::audio::{load_wav, save_wav, synth_corpus, AudioClip, SyllableLayout};
use nasalgan::ciwgan::{q_accuracy, Ciwgan, CiwganConfig, Generator, LatentCode, Trainer};
use nasalgan::corpus::{
    balance_dataset, extract_tokens, load_corpus, write_tokens, DatasetManifest, ManifestEntry, PhoneClassMap,
    SkipReport, SyllableClass, WordPosition,
};
use nasalgan::detector::{
    clip_frames, evaluate_frames, evaluate_tokens, train_detector as fit_detector, DetectorConfig, DetectorModel,
    DetectorMode, LabeledFrame,
};
use nasalgan::kv::parse_list;
use nasalgan::probe::{
    chi_square_scores, covariance_check, export_heatmap, manipulate_pair, manipulate_single, Feature, LabeledBatch,
    Labeler, ManipulationConfig, ProbeError, DEFAULT_TOP_K, REPORT_HEADER,
};
use nasalgan::seed;

use crate::error::CliError;
use crate::params::Params;
use crate::Common;

type Flags<'a> = Vec<(&'a str, Option<String>)>;

const LOCK_FILE: &str = ".nasalgan.lock";

/// Exclusive claim on an output directory, released on drop.
struct RunDir {
    out: PathBuf,
    lock: PathBuf,
}

impl RunDir {
    fn open(out: PathBuf) -> Result<Self, CliError> {
        fs::create_dir_all(&out)?;
        let lock = out.join(LOCK_FILE);
        match OpenOptions::new().write(true).create_new(true).open(&lock) {
            Ok(_) => Ok(Self { out, lock }),
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => Err(CliError::Data(format!(
                "{} is in use by another run (delete {} if that run is gone)",
                out.display(),
                lock.display()
            ))),
            Err(e) => Err(e.into()),
        }
    }

    fn path(&self, name: impl AsRef<Path>) -> PathBuf {
        self.out.join(name)
    }

    fn write(&self, name: &str, text: impl AsRef<[u8]>) -> Result<(), CliError> {
        Ok(fs::write(self.path(name), text)?)
    }
}

impl Drop for RunDir {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.lock);
    }
}

/// Resolves parameters and claims the output directory. The seed always
/// ends up in the lock, defaulting to 0.
fn start(
    common: &Common,
    command: &'static str,
    allowed: &[&str],
    mut flags: Flags,
) -> Result<(Params, RunDir, u64), CliError> {
    flags.push(("seed", common.seed.map(|s| s.to_string())));
    let mut allowed = allowed.to_vec();
    allowed.push("seed");
    let mut params = Params::build(command, &allowed, common.config.as_deref(), &common.sets, flags)?;
    let root = params.get("seed", 0u64)?;
    params.record("seed", root);
    let out = common
        .out
        .clone()
        .ok_or_else(|| CliError::Usage(format!("`{command}` needs --out")))?;
    let run = RunDir::open(out)?;
    Ok((params, run, root))
}

fn missing(path: &Path, hint: &str) -> CliError {
    CliError::Data(format!("missing prerequisite {} ({hint})", path.display()))
}

fn require_file(path: PathBuf, hint: &str) -> Result<PathBuf, CliError> {
    if path.is_file() {
        Ok(path)
    } else {
        Err(missing(&path, hint))
    }
}

fn parse_counts(text: &str) -> Result<BTreeMap<SyllableClass, usize>, CliError> {
    let mut out = BTreeMap::new();
    for part in text.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let (c, n) = part
            .split_once('=')
            .ok_or_else(|| CliError::Usage(format!("expected CLASS=COUNT, got {part:?}")))?;
        let class: SyllableClass = c.parse().map_err(|e| CliError::Usage(format!("{e}")))?;
        let n: usize = n
            .trim()
            .parse()
            .map_err(|_| CliError::Usage(format!("bad count in {part:?}")))?;
        out.insert(class, n);
    }
    Ok(out)
}

fn format_counts(counts: &BTreeMap<SyllableClass, usize>) -> String {
    counts
        .iter()
        .map(|(c, n)| format!("{}={n}", c.ascii()))
        .collect::<Vec<_>>()
        .join(",")
}

fn parse_classes(text: &str) -> Result<BTreeSet<SyllableClass>, CliError> {
    text.split(',')
        .map(str::trim)
        .filter(|p| !p.is_empty())
        .map(|c| c.parse().map_err(|e| CliError::Usage(format!("{e}"))))
        .collect()
}

fn file_stem(class: SyllableClass) -> &'static str {
    match class {
        SyllableClass::VT => "vt",
        SyllableClass::VN => "vn",
        SyllableClass::NVT => "nvt",
        SyllableClass::NVN => "nvn",
    }
}

const SYNTH_LABELS_HEADER: &str = "file,class,vowel_start,vowel_end,coda_start,coda_end";

pub fn synth(common: &Common, flags: Flags) -> Result<(), CliError> {
    let (mut params, run, root) = start(common, "synth", &["counts", "len", "sample_rate"], flags)?;
    let counts = parse_counts(params.str("counts").unwrap_or("VT=100,VN=100,V~T=100,V~N=100"))?;
    let len: usize = params.get("len", nasalgan::audio::TOKEN_LEN)?;
    let rate: u32 = params.get("sample_rate", nasalgan::audio::SAMPLE_RATE)?;
    params.record("counts", format_counts(&counts));
    params.record("len", len);
    params.record("sample_rate", rate);
    run.write("config.lock", params.lock_text())?;

    let counts: Vec<(SyllableClass, usize)> = counts.into_iter().collect();
    let tokens = synth_corpus(&counts, rate, len, seed::derive(root, "synth", 0))?;
    fs::create_dir_all(run.path("tokens"))?;
    let mut manifest = DatasetManifest::default();
    let mut labels = format!("{SYNTH_LABELS_HEADER}\n");
    for t in &tokens {
        let file = format!("tokens/{}_{:04}.wav", file_stem(t.class), t.index);
        save_wav(&t.clip, &run.path(&file))?;
        let _ = writeln!(
            labels,
            "{file},{},{},{},{},{}",
            t.class.ascii(),
            t.layout.vowel.start,
            t.layout.vowel.end,
            t.layout.coda.start,
            t.layout.coda.end
        );
        manifest.entries.push(ManifestEntry {
            file,
            class: t.class,
            source: "synth".into(),
            word_position: WordPosition::Monosyllabic,
            span: Vec::new(),
        });
    }
    manifest.save(&run.path("manifest.csv"))?;
    run.write("labels.csv", labels)?;
    println!("synthesized {} tokens into {}", tokens.len(), run.out.display());
    Ok(())
}

pub fn extract(common: &Common, flags: Flags) -> Result<(), CliError> {
    let (mut params, run, root) = start(
        common,
        "extract",
        &["corpus", "preset", "len", "balance", "vowels"],
        flags,
    )?;
    let corpus = params.path("corpus")?;
    let preset = params.str("preset").unwrap_or("english").to_owned();
    let len: usize = params.get("len", nasalgan::audio::TOKEN_LEN)?;
    params.record("preset", &preset);
    params.record("len", len);
    run.write("config.lock", params.lock_text())?;

    let classes = match PhoneClassMap::preset(&preset) {
        Some(c) => c,
        None => fs::read_to_string(&preset)
            .map_err(|_| CliError::Usage(format!("unknown preset {preset:?} (english, french or a class-map file)")))?
            .parse()
            .map_err(|e| CliError::Usage(format!("{preset}: {e}")))?,
    };
    if !corpus.is_dir() {
        return Err(missing(&corpus, "corpus directory"));
    }
    let utts = load_corpus(&corpus)?;
    let mut report = SkipReport::default();
    let mut tokens = Vec::new();
    for u in &utts {
        tokens.extend(extract_tokens(u, &classes, len, &mut report));
    }
    let manifest = write_tokens(&tokens, &run.out)?;

    let mut skips = String::from("source,word_index,reason\n");
    for s in &report.skipped {
        let _ = writeln!(skips, "{},{},{}", s.source, s.word_index, s.reason);
    }
    run.write("skipped.csv", skips)?;
    let mut summary = format!(
        "utterances={}\nsa_utterances={}\nskipped={}\ntokens={}\n",
        utts.len(),
        report.sa_utterances,
        report.skipped.len(),
        manifest.entries.len()
    );
    for (c, n) in manifest.counts() {
        let _ = writeln!(summary, "count_{}={n}", c.ascii());
    }

    match params.str("balance") {
        None => manifest.save(&run.path("manifest.csv"))?,
        Some(b) => {
            let targets = parse_counts(b)?;
            let vowels: Option<BTreeSet<String>> = params
                .str("vowels")
                .map(|v| v.split(',').map(|s| s.trim().to_owned()).filter(|s| !s.is_empty()).collect());
            let (balanced, br) =
                balance_dataset(&manifest, &targets, vowels.as_ref(), seed::derive(root, "balance", 0))?;
            manifest.save(&run.path("extracted.csv"))?;
            balanced.save(&run.path("manifest.csv"))?;
            for line in br.lines() {
                let _ = writeln!(summary, "# {line}");
            }
        }
    }
    run.write("summary.txt", &summary)?;
    print!("{summary}");
    Ok(())
}

struct SynthSet {
    tokens: Vec<(SyllableClass, SyllableLayout, AudioClip)>,
}

impl SynthSet {
    fn load(dir: &Path) -> Result<Self, CliError> {
        let path = require_file(dir.join("labels.csv"), "run `nasalgan synth` first")?;
        let text = fs::read_to_string(&path)?;
        let mut tokens = Vec::new();
        for (i, line) in text.lines().enumerate().skip(1) {
            if line.trim().is_empty() {
                continue;
            }
            let bad = || CliError::Data(format!("{}:{}: malformed row", path.display(), i + 1));
            let cols: Vec<&str> = line.split(',').collect();
            if cols.len() != 6 {
                return Err(bad());
            }
            let class: SyllableClass = cols[1].parse().map_err(|_| bad())?;
            let n: Vec<usize> = cols[2..].iter().map(|v| v.parse()).collect::<Result<_, _>>().map_err(|_| bad())?;
            let layout = SyllableLayout {
                vowel: n[0]..n[1],
                coda: n[2]..n[3],
                closure: None,
                burst: None,
            };
            tokens.push((class, layout, load_wav(&dir.join(cols[0]))?));
        }
        Ok(Self { tokens })
    }

    fn frames(&self, cfg: &DetectorConfig) -> Result<Vec<LabeledFrame>, CliError> {
        let mut frames = Vec::new();
        for (i, (class, layout, clip)) in self.tokens.iter().enumerate() {
            if clip.sample_rate() != cfg.sample_rate {
                return Err(CliError::Data(format!(
                    "token {i} is sampled at {} Hz, the detector expects {} Hz",
                    clip.sample_rate(),
                    cfg.sample_rate
                )));
            }
            frames.extend(clip_frames(clip, layout, *class, i, cfg.window, cfg.hop, cfg.silence_rms));
        }
        Ok(frames)
    }
}

const DETECTOR_KEYS: [&str; 12] = [
    "sample_rate",
    "window",
    "hop",
    "channels",
    "slope",
    "epochs",
    "batch_size",
    "lr",
    "theta",
    "silence_rms",
    "silent_keep_every",
    "seed",
];

pub fn train_detector(common: &Common, flags: Flags) -> Result<(), CliError> {
    let mut allowed = vec!["data", "mode", "held_out"];
    allowed.extend(DETECTOR_KEYS);
    let (mut params, run, root) = start(common, "train-detector", &allowed, flags)?;
    let data = params.path("data")?;
    let mode: DetectorMode = params.str("mode").unwrap_or("dual_binary").parse()?;
    let cfg = DetectorConfig {
        seed: root,
        ..Default::default()
    }
    .updated(&params.kv)?;
    params.record("mode", mode);
    for (k, v) in &cfg.to_kv().entries {
        params.record(k, v);
    }
    let lock = params.lock_text();
    let lock_path = run.path("config.lock");
    if run.path("detector.txt").is_file() && fs::read_to_string(&lock_path).ok().as_deref() == Some(lock.as_str()) {
        println!("detector in {} is up to date", run.out.display());
        return Ok(());
    }
    run.write("config.lock", &lock)?;

    let train = SynthSet::load(&data)?;
    let frames = train.frames(&cfg)?;
    let (model, summary) = fit_detector(mode, &cfg, &frames)?;
    model.save(&run.out)?;
    let mut text = String::new();
    for (name, n, loss) in &summary.heads {
        let _ = writeln!(text, "head={name} examples={n} final_loss={loss}");
    }
    run.write("train_summary.txt", &text)?;

    if let Some(held) = params.str("held_out") {
        let held = SynthSet::load(Path::new(held))?;
        let eval = evaluate_frames(&model, &held.frames(&cfg)?)?;
        let tokens = evaluate_tokens(&model, held.tokens.iter().map(|(c, _, clip)| (*c, clip)))?;
        let mut e = format!(
            "frame_accuracy={}\ntoken_accuracy={}\n",
            eval.confusion.accuracy(),
            tokens.accuracy()
        );
        for (name, acc) in &eval.heads {
            let _ = writeln!(e, "{name}_accuracy={acc}");
        }
        run.write("eval.txt", &e)?;
        run.write("frame_confusion.csv", eval.confusion.to_csv())?;
        run.write("token_confusion.csv", tokens.to_csv())?;
        text.push_str(&e);
    }
    print!("{text}");
    Ok(())
}

const GAN_KEYS: [&str; 23] = [
    "n_phi",
    "n_z",
    "audio_len",
    "sample_rate",
    "gen_channels",
    "critic_channels",
    "kernel",
    "stride",
    "padding",
    "slope",
    "phase_shuffle",
    "batch_size",
    "lambda",
    "q_weight",
    "lr",
    "q_lr",
    "beta1",
    "beta2",
    "n_critic",
    "epochs",
    "max_gen_steps",
    "checkpoint_every",
    "report_every",
];

fn load_dataset(dir: &Path, classes: Option<&BTreeSet<SyllableClass>>, rate: u32) -> Result<Vec<AudioClip>, CliError> {
    let path = require_file(dir.join("manifest.csv"), "run `nasalgan synth` or `nasalgan extract` first")?;
    let manifest = DatasetManifest::load(&path)?;
    let mut clips = Vec::new();
    for e in &manifest.entries {
        if classes.is_some_and(|c| !c.contains(&e.class)) {
            continue;
        }
        let clip = load_wav(&dir.join(&e.file))?;
        if clip.sample_rate() != rate {
            return Err(CliError::Data(format!(
                "{} is sampled at {} Hz, the model expects {rate} Hz",
                e.file,
                clip.sample_rate()
            )));
        }
        clips.push(clip);
    }
    if clips.is_empty() {
        return Err(CliError::Data(format!("{} has no tokens of the requested classes", path.display())));
    }
    Ok(clips)
}

/// Settings that may change between a checkpoint and its continuation.
fn resumable(c: &CiwganConfig) -> CiwganConfig {
    CiwganConfig {
        epochs: 0.0,
        max_gen_steps: None,
        checkpoint_every: 0,
        report_every: 0,
        ..c.clone()
    }
}

pub fn train_gan(common: &Common, flags: Flags) -> Result<(), CliError> {
    let mut allowed = vec!["data", "classes"];
    allowed.extend(GAN_KEYS);
    let (mut params, run, root) = start(common, "train-gan", &allowed, flags)?;
    let data = params.path("data")?;
    let classes = params.str("classes").map(parse_classes).transpose()?;
    let cfg = CiwganConfig {
        seed: root,
        ..Default::default()
    }
    .updated(&params.kv)?;
    for (k, v) in &cfg.to_kv().entries {
        params.record(k, v);
    }
    if let Some(c) = &classes {
        let names: Vec<&str> = c.iter().map(|c| c.ascii()).collect();
        params.record("classes", names.join(","));
    }
    run.write("config.lock", params.lock_text())?;

    let dataset = load_dataset(&data, classes.as_ref(), cfg.sample_rate)?;
    let mut trainer = if run.path("state.txt").is_file() {
        let t = Trainer::resume(&run.out, &dataset)?;
        if resumable(&t.model.config) != resumable(&cfg) {
            return Err(CliError::Usage(format!(
                "the checkpoint in {} was trained with different settings; use a fresh --out",
                run.out.display()
            )));
        }
        let mut t = t;
        t.model.config = cfg.clone();
        t
    } else {
        Trainer::new(cfg.clone(), &dataset)?
    };
    let target = trainer.total_gen_steps();
    let from = trainer.gen_step;
    trainer.run(target, Some(&run.out))?;

    let (acc, loss) = q_accuracy(&trainer.model, 256, seed::derive(root, "q_eval", 0))?;
    let summary = format!(
        "gen_steps={}\nq_accuracy={acc}\nq_loss={loss}\n",
        trainer.gen_step
    );
    run.write("q_eval.txt", &summary)?;
    println!(
        "trained generator steps {from}..{} on {} clips",
        trainer.gen_step,
        dataset.len()
    );
    print!("{summary}");
    Ok(())
}

fn load_gan(dir: &Path) -> Result<Ciwgan, CliError> {
    require_file(dir.join("generator.ckpt"), "run `nasalgan train-gan` first")?;
    Ok(Ciwgan::load(dir)?)
}

fn codes_csv(codes: &[&LatentCode]) -> String {
    let n_z = codes.first().map_or(0, |c| c.z.len());
    let mut s = String::from("index,phi");
    for j in 0..n_z {
        let _ = write!(s, ",z{j}");
    }
    s.push('\n');
    for (i, c) in codes.iter().enumerate() {
        let _ = write!(s, "{i},{}", c.phi);
        for v in &c.z {
            let _ = write!(s, ",{v}");
        }
        s.push('\n');
    }
    s
}

pub fn generate(common: &Common, flags: Flags) -> Result<(), CliError> {
    let (mut params, run, root) = start(common, "generate", &["gan", "n", "wav"], flags)?;
    let gan_dir = params.path("gan")?;
    let n: usize = params.get("n", 3840)?;
    let wav: bool = params.get("wav", true)?;
    params.record("n", n);
    params.record("wav", wav);
    run.write("config.lock", params.lock_text())?;

    let gan = load_gan(&gan_dir)?;
    let batch = gan.generate_batch(n, seed::derive(root, "generate", 0))?;
    let codes: Vec<&LatentCode> = batch.iter().map(|(c, _)| c).collect();
    run.write("codes.csv", codes_csv(&codes))?;
    if wav {
        fs::create_dir_all(run.path("clips"))?;
        for (i, (_, clip)) in batch.iter().enumerate() {
            save_wav(clip, &run.path(format!("clips/{i:05}.wav")))?;
        }
    }
    println!("generated {n} clips into {}", run.out.display());
    Ok(())
}

fn parse_indices(text: &str) -> Result<Vec<usize>, CliError> {
    parse_list(text).map_err(|e| CliError::Usage(format!("bad index list {text:?}: {e}")))
}

fn parse_pairs(text: &str) -> Result<Vec<(usize, usize)>, CliError> {
    text.split(',')
        .map(str::trim)
        .filter(|p| !p.is_empty())
        .map(|p| {
            let bad = || CliError::Usage(format!("expected X:Y pairs of z indices, got {p:?}"));
            let (x, y) = p.split_once(':').ok_or_else(bad)?;
            Ok((x.trim().parse().map_err(|_| bad())?, y.trim().parse().map_err(|_| bad())?))
        })
        .collect()
}

pub fn probe(common: &Common, flags: Flags) -> Result<(), CliError> {
    let allowed = [
        "gan",
        "detector",
        "n",
        "top_k",
        "include_phi",
        "single",
        "pair",
        "levels",
        "n_base",
        "phi",
        "clips",
    ];
    let (mut params, run, root) = start(common, "probe", &allowed, flags)?;
    let gan_dir = params.path("gan")?;
    let det_dir = params.path("detector")?;
    let n: usize = params.get("n", 3840)?;
    let top_k: usize = params.get("top_k", DEFAULT_TOP_K)?;
    let include_phi: bool = params.get("include_phi", false)?;
    let singles = params.str("single").map(parse_indices).transpose()?.unwrap_or_default();
    let pairs = params.str("pair").map(parse_pairs).transpose()?.unwrap_or_default();
    let mut mcfg = ManipulationConfig {
        seed: seed::derive(root, "manipulate", 0),
        ..Default::default()
    };
    if let Some(l) = params.str("levels") {
        mcfg.levels = parse_list(l).map_err(|e| CliError::Usage(format!("bad levels {l:?}: {e}")))?;
    }
    mcfg.n_base = params.get("n_base", mcfg.n_base)?;
    mcfg.phi = params.get("phi", mcfg.phi)?;
    let keep_clips: bool = params.get("clips", false)?;
    params.record("n", n);
    params.record("top_k", top_k);
    params.record("include_phi", include_phi);
    params.record("levels", nasalgan::kv::format_list(&mcfg.levels));
    params.record("n_base", mcfg.n_base);
    params.record("phi", mcfg.phi);
    params.record("clips", keep_clips);
    run.write("config.lock", params.lock_text())?;

    let gan = load_gan(&gan_dir)?;
    require_file(det_dir.join("detector.txt"), "run `nasalgan train-detector` first")?;
    let det = DetectorModel::load(&det_dir)?;
    if gan.sample_rate() != det.sample_rate() {
        return Err(ProbeError::SampleRate {
            generator: gan.sample_rate(),
            detector: det.sample_rate(),
        }
        .into());
    }

    let batch = LabeledBatch::generate(
        &gan,
        &det,
        n,
        seed::derive(root, "probe_batch", 0),
        gan_dir.display().to_string(),
        det_dir.display().to_string(),
    )?;
    run.write("batch.csv", batch.to_csv())?;

    let mut report = String::from(REPORT_HEADER);
    let mut summary = format!("clips={}\n", batch.len());
    for feature in Feature::ALL {
        match chi_square_scores(&batch, feature, include_phi, top_k) {
            Ok(r) => {
                report.push_str(&r.csv_rows());
                let top: Vec<String> = r.top().iter().map(|s| format!("{}({:.3})", s.var, s.chi_square)).collect();
                let _ = writeln!(summary, "{feature}: {}", top.join(" "));
            }
            Err(ProbeError::Unscorable(_)) => {
                let present = batch.entries.iter().filter(|(_, l)| feature.of(l)).count();
                let _ = writeln!(summary, "{feature}: unscorable, detected in {present} of {} clips", batch.len());
            }
            Err(e) => return Err(e.into()),
        }
    }
    run.write("report.csv", report)?;

    let cov = covariance_check(&batch);
    let t = cov.table;
    let cond = cov.conditional.map_or("undefined".to_owned(), |p| p.to_string());
    run.write(
        "covariance.txt",
        format!(
            "nv0_nc0={}\nnv0_nc1={}\nnv1_nc0={}\nnv1_nc1={}\np_nasal_consonant_given_nasal_vowel={cond}\n",
            t[0][0], t[0][1], t[1][0], t[1][1]
        ),
    )?;

    for &v in &singles {
        let sweep = manipulate_single(&gan, &det, v, &mcfg, keep_clips)?;
        run.write(&format!("single_z{v}.csv"), sweep.to_csv())?;
        if let Some(levels) = &sweep.clips {
            let dir = run.path(format!("single_z{v}"));
            fs::create_dir_all(&dir)?;
            for (li, clips) in levels.iter().enumerate() {
                for (b, clip) in clips.iter().enumerate() {
                    save_wav(clip, &dir.join(format!("level{li:02}_{b:04}.wav")))?;
                }
            }
        }
        let _ = writeln!(summary, "single z{v}: {} levels x {} bases", sweep.levels.len(), sweep.n_base);
    }
    for &(x, y) in &pairs {
        let grid = manipulate_pair(&gan, &det, x, y, &mcfg)?;
        for feature in Feature::ALL {
            export_heatmap(&grid, feature, &run.path(format!("grid_z{x}_z{y}_{feature}")))?;
        }
        let _ = writeln!(summary, "grid z{x} x z{y}: {} cells", grid.cells.len());
    }
    run.write("summary.txt", &summary)?;
    print!("{summary}");
    Ok(())
}
