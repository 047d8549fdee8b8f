use std::path::PathBuf;

use nasalgan::audio::load_wav;
use nasalgan::corpus::{
    extract_tokens, load_corpus, write_tokens, DatasetManifest, PhoneClassMap, SkipReport, SyllableClass,
};

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

fn run(name: &str, classes: &PhoneClassMap) -> (DatasetManifest, SkipReport, tempfile::TempDir) {
    let utts = load_corpus(&fixture(name)).unwrap();
    let mut report = SkipReport::default();
    let mut tokens = Vec::new();
    for u in &utts {
        for t in extract_tokens(u, classes, 4096, &mut report) {
            // audio is the exact source span, then zeros
            assert!(t.span.end <= u.audio.len());
            assert_eq!(&t.audio.samples()[..t.span.len()], &u.audio.samples()[t.span.clone()]);
            assert!(t.audio.samples()[t.span.len()..].iter().all(|&s| s == 0.0));
            assert!(!u.sa);
            // class re-derived from the first and last labels
            let derived = classes.classify(&t.phones[0], t.phones.last().unwrap());
            assert_eq!(derived, Some(t.class));
            tokens.push(t);
        }
    }
    let dir = tempfile::tempdir().unwrap();
    let manifest = write_tokens(&tokens, dir.path()).unwrap();
    (manifest, report, dir)
}

#[test]
fn english_fixture_matches_golden_manifest() {
    let (manifest, report, dir) = run("english_mini", &PhoneClassMap::english());
    let expected = std::fs::read_to_string(fixture("english_mini/expected_manifest.csv")).unwrap();
    assert_eq!(manifest.to_csv(), expected);
    assert_eq!(report.sa_utterances, 1);
    assert_eq!(report.skipped.len(), 1);
    assert_eq!(report.skipped[0].source, "dr2_song");
    for e in &manifest.entries {
        let clip = load_wav(&dir.path().join(&e.file)).unwrap();
        assert_eq!(clip.len(), 4096);
    }
    assert!(manifest.entries.iter().all(|e| !e.class.nasal_vowel()));
}

#[test]
fn french_fixture_matches_golden_manifest() {
    let (manifest, report, _dir) = run("french_mini", &PhoneClassMap::french());
    let expected = std::fs::read_to_string(fixture("french_mini/expected_manifest.csv")).unwrap();
    assert_eq!(manifest.to_csv(), expected);
    assert!(report.skipped.is_empty());
    let mon = &manifest.entries[0];
    assert_eq!((mon.class, mon.span.join(" ")), (SyllableClass::NVN, "o~ n".to_owned()));
}

#[test]
fn english_preset_never_emits_nasal_vowel_classes() {
    let (manifest, _, _dir) = run("french_mini", &PhoneClassMap::english());
    assert!(manifest.entries.iter().all(|e| !e.class.nasal_vowel()));
}
