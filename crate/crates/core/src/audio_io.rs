//! WAV decoding and silence removal ("RS" preprocessing).

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Mono audio buffer with its sample rate and origin.
#[derive(Debug, Clone)]
pub struct AudioClip {
    pub samples: Vec<f64>,
    pub sample_rate: u32,
    pub source_path: String,
}

impl AudioClip {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

/// Frame-energy silence trimming relative to the loudest frame.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default)]
pub struct SilenceRemovalConfig {
    pub enabled: bool,
    /// Frames quieter than (loudest frame − threshold_db) dB are dropped.
    pub threshold_db: f64,
    pub frame_len: usize,
    pub hop_len: usize,
}

impl Default for SilenceRemovalConfig {
    fn default() -> Self {
        SilenceRemovalConfig {
            enabled: true,
            threshold_db: 30.0,
            frame_len: 1024,
            hop_len: 512,
        }
    }
}

impl SilenceRemovalConfig {
    pub fn validate(&self) -> Result<()> {
        if self.threshold_db <= 0.0 {
            return Err(Error::InvalidConfig(format!(
                "threshold_db must be > 0, got {}",
                self.threshold_db
            )));
        }
        if self.hop_len < 1 || self.frame_len < self.hop_len {
            return Err(Error::InvalidConfig(format!(
                "need frame_len >= hop_len >= 1, got frame_len={} hop_len={}",
                self.frame_len, self.hop_len
            )));
        }
        Ok(())
    }
}

/// Decode a PCM WAV file (16-bit int or 32-bit float) to a mono clip.
///
/// Multichannel audio is averaged to mono; 16-bit samples are scaled by
/// 1/32768 so -32768 maps to -1.0 exactly.
pub fn decode_wav(path: impl AsRef<Path>) -> Result<AudioClip> {
    let path = path.as_ref();
    let reader = hound::WavReader::open(path).map_err(|e| match e {
        hound::Error::IoError(io) => Error::io(path, io),
        other => Error::WavDecode {
            path: path.to_path_buf(),
            reason: other.to_string(),
        },
    })?;
    let spec = reader.spec();
    let channels = spec.channels as usize;
    if channels == 0 {
        return Err(Error::WavDecode {
            path: path.to_path_buf(),
            reason: "zero channels".into(),
        });
    }

    let interleaved: Vec<f64> = match (spec.sample_format, spec.bits_per_sample) {
        (hound::SampleFormat::Int, 16) => reader
            .into_samples::<i16>()
            .map(|s| s.map(|v| f64::from(v) / 32768.0))
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::WavDecode {
                path: path.to_path_buf(),
                reason: e.to_string(),
            })?,
        (hound::SampleFormat::Float, 32) => reader
            .into_samples::<f32>()
            .map(|s| s.map(f64::from))
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::WavDecode {
                path: path.to_path_buf(),
                reason: e.to_string(),
            })?,
        (fmt, bits) => {
            return Err(Error::UnsupportedEncoding {
                path: path.to_path_buf(),
                detail: format!("{:?} {} bits", fmt, bits),
            })
        }
    };

    if interleaved.is_empty() {
        return Err(Error::EmptyAudio {
            path: path.to_path_buf(),
        });
    }
    if !interleaved.iter().all(|v| v.is_finite()) {
        return Err(Error::WavDecode {
            path: path.to_path_buf(),
            reason: "non-finite sample".into(),
        });
    }

    let samples = if channels == 1 {
        interleaved
    } else {
        interleaved
            .chunks(channels)
            .map(|frame| frame.iter().sum::<f64>() / channels as f64)
            .collect()
    };

    Ok(AudioClip {
        samples,
        sample_rate: spec.sample_rate,
        source_path: path.display().to_string(),
    })
}

/// Write a clip back out as 16-bit PCM, clamping to [-1, 1].
pub fn encode_wav(clip: &AudioClip, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: clip.sample_rate,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let mut writer = hound::WavWriter::create(path, spec).map_err(|e| Error::WavDecode {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })?;
    for &s in &clip.samples {
        let v = (s.clamp(-1.0, 1.0) * 32768.0).round().clamp(-32768.0, 32767.0) as i16;
        writer.write_sample(v).map_err(|e| Error::WavDecode {
            path: path.to_path_buf(),
            reason: e.to_string(),
        })?;
    }
    writer.finalize().map_err(|e| Error::WavDecode {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })?;
    Ok(())
}

/// Drop frames whose RMS energy sits more than `threshold_db` below the
/// loudest frame. Surviving sample regions are kept in order; an all-silent
/// clip keeps its single loudest frame.
pub fn remove_silence(clip: &AudioClip, cfg: &SilenceRemovalConfig) -> Result<AudioClip> {
    cfg.validate()?;
    if clip.is_empty() {
        return Err(Error::EmptyAudio {
            path: clip.source_path.clone().into(),
        });
    }

    let frames = frame_starts(clip.len(), cfg.frame_len, cfg.hop_len);
    let energies: Vec<f64> = frames
        .iter()
        .map(|&start| frame_db(&clip.samples, start, cfg.frame_len))
        .collect();
    let max_db = energies.iter().cloned().fold(f64::NEG_INFINITY, f64::max);

    let mut keep = vec![false; clip.len()];
    if !max_db.is_finite() {
        // digital silence everywhere: keep the first frame
        let end = cfg.frame_len.min(clip.len());
        keep[..end].iter_mut().for_each(|k| *k = true);
    } else {
        for (&start, &db) in frames.iter().zip(&energies) {
            if db >= max_db - cfg.threshold_db {
                let end = (start + cfg.frame_len).min(clip.len());
                keep[start..end].iter_mut().for_each(|k| *k = true);
            }
        }
    }

    let samples: Vec<f64> = clip
        .samples
        .iter()
        .zip(&keep)
        .filter_map(|(&s, &k)| k.then_some(s))
        .collect();

    Ok(AudioClip {
        samples,
        sample_rate: clip.sample_rate,
        source_path: clip.source_path.clone(),
    })
}

fn frame_starts(len: usize, frame_len: usize, hop_len: usize) -> Vec<usize> {
    if len <= frame_len {
        return vec![0];
    }
    let mut starts: Vec<usize> = (0..=(len - frame_len)).step_by(hop_len).collect();
    // a trailing partial frame still gets energy-checked
    let last = *starts.last().unwrap();
    if last + frame_len < len {
        starts.push(last + hop_len);
    }
    starts
}

fn frame_db(samples: &[f64], start: usize, frame_len: usize) -> f64 {
    let end = (start + frame_len).min(samples.len());
    let mean_sq =
        samples[start..end].iter().map(|s| s * s).sum::<f64>() / (end - start) as f64;
    if mean_sq > 0.0 {
        10.0 * mean_sq.log10()
    } else {
        f64::NEG_INFINITY
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn clip(samples: Vec<f64>, sr: u32) -> AudioClip {
        AudioClip {
            samples,
            sample_rate: sr,
            source_path: "test".into(),
        }
    }

    fn cfg(threshold_db: f64, frame_len: usize, hop_len: usize) -> SilenceRemovalConfig {
        SilenceRemovalConfig {
            enabled: true,
            threshold_db,
            frame_len,
            hop_len,
        }
    }

    #[test]
    fn decode_zero_wav() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("zeros.wav");
        encode_wav(&clip(vec![0.0; 16000], 16000), &path).unwrap();
        let decoded = decode_wav(&path).unwrap();
        assert_eq!(decoded.samples.len(), 16000);
        assert!(decoded.samples.iter().all(|&s| s == 0.0));
        assert_eq!(decoded.sample_rate, 16000);
    }

    #[test]
    fn decode_stereo_symmetric_averages_to_zero() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("stereo.wav");
        let spec = hound::WavSpec {
            channels: 2,
            sample_rate: 16000,
            bits_per_sample: 16,
            sample_format: hound::SampleFormat::Int,
        };
        let mut w = hound::WavWriter::create(&path, spec).unwrap();
        for _ in 0..100 {
            w.write_sample(16384i16).unwrap(); // +0.5
            w.write_sample(-16384i16).unwrap(); // -0.5
        }
        w.finalize().unwrap();
        let decoded = decode_wav(&path).unwrap();
        assert_eq!(decoded.samples.len(), 100);
        assert!(decoded.samples.iter().all(|&s| s == 0.0));
    }

    #[test]
    fn int16_min_scales_to_minus_one() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("min.wav");
        let spec = hound::WavSpec {
            channels: 1,
            sample_rate: 16000,
            bits_per_sample: 16,
            sample_format: hound::SampleFormat::Int,
        };
        let mut w = hound::WavWriter::create(&path, spec).unwrap();
        w.write_sample(i16::MIN).unwrap();
        w.write_sample(i16::MAX).unwrap();
        w.finalize().unwrap();
        let decoded = decode_wav(&path).unwrap();
        assert_eq!(decoded.samples[0], -1.0);
        assert_eq!(decoded.samples[1], 32767.0 / 32768.0);
    }

    #[test]
    fn decode_rejects_unsupported_bits() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("eight.wav");
        let spec = hound::WavSpec {
            channels: 1,
            sample_rate: 16000,
            bits_per_sample: 8,
            sample_format: hound::SampleFormat::Int,
        };
        let mut w = hound::WavWriter::create(&path, spec).unwrap();
        w.write_sample(1i8).unwrap();
        w.finalize().unwrap();
        assert!(matches!(
            decode_wav(&path),
            Err(Error::UnsupportedEncoding { .. })
        ));
    }

    #[test]
    fn decode_missing_file_reports_path() {
        let err = decode_wav("/nonexistent/nope.wav").unwrap_err();
        assert!(err.to_string().contains("nope.wav"));
    }

    #[test]
    fn encode_decode_roundtrip_within_one_lsb() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("rt.wav");
        let original: Vec<f64> = (0..2048)
            .map(|i| (i as f64 * 0.37).sin() * 0.8)
            .collect();
        encode_wav(&clip(original.clone(), 16000), &path).unwrap();
        let decoded = decode_wav(&path).unwrap();
        let second = dir.path().join("rt2.wav");
        encode_wav(&decoded, &second).unwrap();
        let decoded2 = decode_wav(&second).unwrap();
        for ((a, b), orig) in decoded.samples.iter().zip(&decoded2.samples).zip(&original) {
            assert_eq!(a, b);
            assert!((a - orig).abs() <= 1.0 / 32768.0);
        }
    }

    #[test]
    fn uniform_clip_passes_through() {
        let c = clip(vec![0.3; 4096], 16000);
        let out = remove_silence(&c, &cfg(30.0, 1024, 512)).unwrap();
        assert_eq!(out.samples, c.samples);
    }

    #[test]
    fn tone_then_silence_keeps_tone_frames() {
        let sr = 16000usize;
        let mut samples: Vec<f64> = (0..sr)
            .map(|i| (2.0 * std::f64::consts::PI * 440.0 * i as f64 / sr as f64).sin())
            .collect();
        samples.extend(std::iter::repeat(0.0).take(sr));
        let c = clip(samples, sr as u32);
        let rs = cfg(30.0, 1024, 512);

        // independent frame-energy scan
        let starts = frame_starts(c.len(), rs.frame_len, rs.hop_len);
        let dbs: Vec<f64> = starts
            .iter()
            .map(|&s| frame_db(&c.samples, s, rs.frame_len))
            .collect();
        let max_db = dbs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut expect = vec![false; c.len()];
        for (&s, &db) in starts.iter().zip(&dbs) {
            if db >= max_db - rs.threshold_db {
                let e = (s + rs.frame_len).min(c.len());
                expect[s..e].iter_mut().for_each(|k| *k = true);
            }
        }
        let expected_len = expect.iter().filter(|&&k| k).count();

        let out = remove_silence(&c, &rs).unwrap();
        assert_eq!(out.samples.len(), expected_len);
        assert!(out.samples.len() < c.samples.len());
        assert!(out.samples.len() >= sr); // the whole tone survives
    }

    #[test]
    fn all_zero_clip_keeps_one_frame() {
        let c = clip(vec![0.0; 4096], 16000);
        let out = remove_silence(&c, &cfg(30.0, 1024, 512)).unwrap();
        assert_eq!(out.samples.len(), 1024);
    }

    #[test]
    fn remove_silence_is_idempotent_on_fixture() {
        let sr = 16000usize;
        let mut samples: Vec<f64> = (0..sr)
            .map(|i| (2.0 * std::f64::consts::PI * 440.0 * i as f64 / sr as f64).sin())
            .collect();
        samples.extend(std::iter::repeat(0.0).take(sr / 2));
        samples.extend(
            (0..sr).map(|i| (2.0 * std::f64::consts::PI * 880.0 * i as f64 / sr as f64).sin()),
        );
        let c = clip(samples, sr as u32);
        let rs = cfg(30.0, 1024, 512);
        let once = remove_silence(&c, &rs).unwrap();
        let twice = remove_silence(&once, &rs).unwrap();
        assert_eq!(once.samples, twice.samples);
    }

    #[test]
    fn output_is_subsequence_and_no_longer() {
        let samples: Vec<f64> = (0..8000)
            .map(|i| if i % 3000 < 1000 { 0.5 } else { 1e-6 })
            .collect();
        let c = clip(samples, 16000);
        let out = remove_silence(&c, &cfg(30.0, 512, 256)).unwrap();
        assert!(out.samples.len() <= c.samples.len());
        // subsequence check
        let mut it = c.samples.iter();
        for s in &out.samples {
            assert!(it.any(|x| x == s));
        }
    }

    #[test]
    fn config_validation() {
        assert!(cfg(0.0, 1024, 512).validate().is_err());
        assert!(cfg(30.0, 256, 512).validate().is_err());
        assert!(cfg(30.0, 512, 0).validate().is_err());
        assert!(cfg(30.0, 512, 512).validate().is_ok());
    }
}
