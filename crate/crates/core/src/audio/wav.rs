use std::path::Path;

use super::{AudioClip, AudioError};

/// Reads a 16-bit PCM mono WAV, scaling samples by 1/32768.
pub fn load_wav(path: &Path) -> Result<AudioClip, AudioError> {
    let name = path.display().to_string();
    if !path.exists() {
        return Err(AudioError::Missing(name));
    }
    let reader = hound::WavReader::open(path).map_err(|e| match e {
        hound::Error::IoError(io) => AudioError::Io(io),
        hound::Error::Unsupported => AudioError::UnsupportedEncoding {
            path: name.clone(),
            detail: "unsupported WAV variant".into(),
        },
        other => AudioError::Wav(format!("{name}: {other}")),
    })?;
    let spec = reader.spec();
    if spec.channels != 1 {
        return Err(AudioError::NotMono {
            path: name,
            channels: spec.channels,
        });
    }
    if spec.sample_format != hound::SampleFormat::Int || spec.bits_per_sample != 16 {
        return Err(AudioError::UnsupportedEncoding {
            path: name,
            detail: format!("{:?} {}-bit", spec.sample_format, spec.bits_per_sample),
        });
    }
    let samples = reader
        .into_samples::<i16>()
        .map(|s| s.map(|v| v as f32 / 32768.0))
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| AudioError::Wav(format!("{name}: {e}")))?;
    AudioClip::new(samples, spec.sample_rate)
}

fn quantize(s: f32) -> i16 {
    let v = (s.clamp(-1.0, 1.0) as f64 * 32768.0).round();
    v.clamp(-32768.0, 32767.0) as i16
}

/// Writes a 16-bit PCM mono WAV; samples are clamped to [-1, 1] first.
pub fn save_wav(clip: &AudioClip, path: &Path) -> Result<(), AudioError> {
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: clip.sample_rate(),
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let mut w = hound::WavWriter::create(path, spec).map_err(|e| match e {
        hound::Error::IoError(io) => AudioError::Io(io),
        other => AudioError::Wav(other.to_string()),
    })?;
    for &s in clip.samples() {
        w.write_sample(quantize(s)).map_err(|e| AudioError::Wav(e.to_string()))?;
    }
    w.finalize().map_err(|e| AudioError::Wav(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn header_and_size() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.wav");
        let clip = AudioClip::new(vec![0.25; 16000], 16000).unwrap();
        save_wav(&clip, &p).unwrap();
        let back = load_wav(&p).unwrap();
        assert_eq!(back.len(), 16000);
        assert_eq!(back.sample_rate(), 16000);
        let bytes = std::fs::read(&p).unwrap();
        let data_at = bytes.windows(4).position(|w| w == b"data").unwrap();
        let size = u32::from_le_bytes(bytes[data_at + 4..data_at + 8].try_into().unwrap());
        assert_eq!(size, 32000);
        assert_eq!(bytes.len(), data_at + 8 + 32000);
    }

    #[test]
    fn clamp_and_zero() {
        assert_eq!(quantize(1.5), 32767);
        assert_eq!(quantize(-1.5), -32768);
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("z.wav");
        save_wav(&AudioClip::new(vec![0.0; 10], 8000).unwrap(), &p).unwrap();
        assert!(load_wav(&p).unwrap().samples().iter().all(|&s| s == 0.0));
    }

    #[test]
    fn distinct_errors() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(load_wav(&dir.path().join("nope.wav")), Err(AudioError::Missing(_))));

        let stereo = dir.path().join("s.wav");
        let spec = hound::WavSpec {
            channels: 2,
            sample_rate: 8000,
            bits_per_sample: 16,
            sample_format: hound::SampleFormat::Int,
        };
        let mut w = hound::WavWriter::create(&stereo, spec).unwrap();
        for _ in 0..4 {
            w.write_sample(0i16).unwrap();
        }
        w.finalize().unwrap();
        assert!(matches!(load_wav(&stereo), Err(AudioError::NotMono { channels: 2, .. })));

        let float = dir.path().join("f.wav");
        let spec = hound::WavSpec {
            channels: 1,
            sample_rate: 8000,
            bits_per_sample: 32,
            sample_format: hound::SampleFormat::Float,
        };
        let mut w = hound::WavWriter::create(&float, spec).unwrap();
        w.write_sample(0.5f32).unwrap();
        w.finalize().unwrap();
        assert!(matches!(load_wav(&float), Err(AudioError::UnsupportedEncoding { .. })));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn roundtrip_within_one_step(samples in prop::collection::vec(-1.0f32..=1.0, 1..300)) {
            let dir = tempfile::tempdir().unwrap();
            let p = dir.path().join("r.wav");
            let clip = AudioClip::new(samples, 8000).unwrap();
            save_wav(&clip, &p).unwrap();
            let back = load_wav(&p).unwrap();
            for (a, b) in clip.samples().iter().zip(back.samples()) {
                prop_assert!((a - b).abs() <= 1.0 / 32768.0);
            }
        }
    }
}
