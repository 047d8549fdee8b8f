use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use nasalgan::ciwgan::Ciwgan;
use nasalgan::corpus::{DatasetManifest, SyllableClass};
use sha2::{Digest, Sha256};

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nasalgan")).args(args).output().unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = run(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn code(args: &[&str]) -> (i32, String) {
    let out = run(args);
    (out.status.code().unwrap(), String::from_utf8_lossy(&out.stderr).into_owned())
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn digest(path: &Path) -> String {
    format!("{:x}", Sha256::digest(fs::read(path).unwrap()))
}

#[test]
fn synth_counts_and_reproducibility() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    ok(&["synth", "--counts", "VT=3,VN=0,V~N=2", "--seed", "4", "--out", p(&a)]);
    ok(&["synth", "--counts", "VT=3,VN=0,V~N=2", "--seed", "4", "--out", p(&b)]);
    let m = DatasetManifest::load(&a.join("manifest.csv")).unwrap();
    let counts = m.counts();
    assert_eq!(counts.get(&SyllableClass::VT), Some(&3));
    assert_eq!(counts.get(&SyllableClass::NVN), Some(&2));
    assert!(!counts.contains_key(&SyllableClass::VN));
    for e in &m.entries {
        assert_eq!(digest(&a.join(&e.file)), digest(&b.join(&e.file)));
    }
    assert_eq!(fs::read_dir(a.join("tokens")).unwrap().count(), 5);
    let labels = fs::read_to_string(a.join("labels.csv")).unwrap();
    assert!(labels.starts_with("file,class,vowel_start,vowel_end,coda_start,coda_end\n"));
    let lock = fs::read_to_string(a.join("config.lock")).unwrap();
    assert!(lock.contains("command=synth\n") && lock.contains("seed=4\n"));
    assert!(!a.join(".nasalgan.lock").exists());
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("x");
    // unknown flag, unknown --set key, missing --out
    assert_eq!(code(&["synth", "--bogus"]).0, 1);
    assert_eq!(code(&["synth", "--set", "colour=red", "--out", p(&out)]).0, 1);
    assert_eq!(code(&["synth"]).0, 1);
    // missing prerequisite is a data error naming the file
    let (c, msg) = code(&["train-gan", "--data", p(&dir.path().join("nowhere")), "--out", p(&out)]);
    assert_eq!(c, 2);
    assert!(msg.contains("manifest.csv"), "{msg}");
    let (c, msg) = code(&["probe", "--gan", p(&dir.path().join("g")), "--detector", "d", "--out", p(&out)]);
    assert_eq!(c, 2);
    assert!(msg.contains("generator.ckpt"), "{msg}");
}

#[test]
fn config_written_by_another_command_is_refused() {
    let dir = tempfile::tempdir().unwrap();
    let s = dir.path().join("s");
    ok(&["synth", "--counts", "VT=1", "--out", p(&s)]);
    let (c, msg) = code(&["generate", "--config", p(&s.join("config.lock")), "--out", p(&dir.path().join("g"))]);
    assert_eq!(c, 1, "{msg}");
}

#[test]
fn busy_directory_is_refused() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join(".nasalgan.lock"), "").unwrap();
    let (c, msg) = code(&["synth", "--counts", "VT=1", "--out", p(dir.path())]);
    assert_eq!(c, 2);
    assert!(msg.contains("in use"), "{msg}");
}

const SMALL_GAN: &[&str] = &[
    "--n-phi",
    "2",
    "--n-z",
    "6",
    "--set",
    "gen_channels=8,4,4,4,4",
    "--set",
    "critic_channels=4,4,4,4,8",
    "--batch-size",
    "4",
];

#[test]
fn zero_steps_write_the_initialization_and_training_resumes() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    ok(&["synth", "--counts", "VT=4,VN=4", "--out", p(&data)]);
    let gan = dir.path().join("gan");
    let mut args = vec!["train-gan", "--data", p(&data), "--steps", "0", "--seed", "9", "--out", p(&gan)];
    args.extend(SMALL_GAN);
    ok(&args);
    let saved = Ciwgan::load(&gan).unwrap();
    assert_eq!(saved.config.seed, 9);
    let init = Ciwgan::new(saved.config.clone()).unwrap();
    assert_eq!(saved.generator.params(), init.generator.params());
    assert_eq!(saved.q.params(), init.q.params());

    // continue to 2 steps in place, then compare with a straight 2-step run
    let two = ["--steps", "2"];
    let mut resume = args.clone();
    resume[4] = "2";
    ok(&resume);
    let straight = dir.path().join("straight");
    let mut fresh = vec!["train-gan", "--data", p(&data), "--seed", "9", "--out", p(&straight)];
    fresh.extend(two);
    fresh.extend(SMALL_GAN);
    ok(&fresh);
    for f in ["generator.ckpt", "critic.ckpt", "q.ckpt", "train_report.csv", "state.txt"] {
        assert_eq!(digest(&gan.join(f)), digest(&straight.join(f)), "{f}");
    }

    // a different architecture cannot resume this checkpoint
    let mut clash = resume.clone();
    clash.extend(["--set", "phase_shuffle=1"]);
    assert_eq!(code(&clash).0, 1);

    let gen = dir.path().join("gen");
    ok(&["generate", "--gan", p(&gan), "-n", "5", "--out", p(&gen)]);
    let codes = fs::read_to_string(gen.join("codes.csv")).unwrap();
    assert_eq!(codes.lines().count(), 6);
    assert!(codes.starts_with("index,phi,z0,z1,z2,z3,z4,z5\n"));
    assert_eq!(fs::read_dir(gen.join("clips")).unwrap().count(), 5);
}

#[test]
fn probe_refuses_mismatched_sample_rates() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    ok(&["synth", "--counts", "VT=4,VN=4", "--out", p(&data)]);
    let gan = dir.path().join("gan");
    let mut args = vec!["train-gan", "--data", p(&data), "--steps", "0", "--out", p(&gan)];
    args.extend(SMALL_GAN);
    ok(&args);
    let det = dir.path().join("det");
    fs::create_dir_all(&det).unwrap();
    let mut kv = nasalgan::detector::DetectorConfig {
        sample_rate: 16000,
        ..Default::default()
    }
    .to_kv();
    kv.set("mode", "four_way");
    fs::write(det.join("detector.txt"), kv.to_string()).unwrap();
    let net = nasalgan::nn::Network::<f32>::new(vec![1, 511], nasalgan::detector::DetectorConfig::default().specs(4), 1)
        .unwrap();
    nasalgan::nn::checkpoint::save_network(&net, &det.join("four_way.ckpt")).unwrap();
    let (c, msg) = code(&["probe", "--gan", p(&gan), "--detector", p(&det), "-n", "8", "--out", p(&dir.path().join("pr"))]);
    assert_eq!(c, 2, "{msg}");
    assert!(msg.contains("16000"), "{msg}");
}
