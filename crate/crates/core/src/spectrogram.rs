//! Log-mel spectrogram front end: Hann-window power STFT followed by a
//! Slaney-style triangular mel filterbank.

use std::io::{Read, Write};
use std::path::Path;
use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::audio_io::AudioClip;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default)]
pub struct SpectrogramConfig {
    pub n_fft: usize,
    pub hop: usize,
    pub n_mels: usize,
    pub sample_rate: u32,
    pub fmin: f64,
    pub fmax: f64,
    pub log_floor: f64,
}

impl Default for SpectrogramConfig {
    fn default() -> Self {
        SpectrogramConfig {
            n_fft: 1024,
            hop: 512,
            n_mels: 128,
            sample_rate: 16000,
            fmin: 0.0,
            fmax: 8000.0,
            log_floor: 1e-10,
        }
    }
}

impl SpectrogramConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hop < 1 || self.n_fft < self.hop {
            return Err(Error::InvalidConfig(format!(
                "need n_fft >= hop >= 1, got n_fft={} hop={}",
                self.n_fft, self.hop
            )));
        }
        if self.n_mels < 1 {
            return Err(Error::InvalidConfig("n_mels must be >= 1".into()));
        }
        let nyquist = self.sample_rate as f64 / 2.0;
        if !(0.0 <= self.fmin && self.fmin < self.fmax && self.fmax <= nyquist) {
            return Err(Error::InvalidConfig(format!(
                "need 0 <= fmin < fmax <= {nyquist}, got fmin={} fmax={}",
                self.fmin, self.fmax
            )));
        }
        if self.log_floor <= 0.0 {
            return Err(Error::InvalidConfig("log_floor must be > 0".into()));
        }
        Ok(())
    }
}

/// M×N matrix of log mel energies, row-major (one row per mel bin).
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrogram {
    values: Vec<f64>,
    n_mels: usize,
    n_frames: usize,
}

impl Spectrogram {
    pub fn from_rows(values: Vec<f64>, n_mels: usize, n_frames: usize) -> Result<Self> {
        if n_mels == 0 || n_frames == 0 || values.len() != n_mels * n_frames {
            return Err(Error::InvalidConfig(format!(
                "spectrogram shape {}x{} does not match {} values",
                n_mels,
                n_frames,
                values.len()
            )));
        }
        if !values.iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidConfig("non-finite spectrogram entry".into()));
        }
        Ok(Spectrogram {
            values,
            n_mels,
            n_frames,
        })
    }

    pub fn n_mels(&self) -> usize {
        self.n_mels
    }

    pub fn n_frames(&self) -> usize {
        self.n_frames
    }

    pub fn row(&self, m: usize) -> &[f64] {
        &self.values[m * self.n_frames..(m + 1) * self.n_frames]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks(self.n_frames)
    }
}

/// Slaney mel scale: linear below 1 kHz, logarithmic above.
pub fn hz_to_mel(hz: f64) -> f64 {
    const BREAK_HZ: f64 = 1000.0;
    const LIN_STEP: f64 = 200.0 / 3.0;
    if hz < BREAK_HZ {
        hz / LIN_STEP
    } else {
        BREAK_HZ / LIN_STEP + (hz / BREAK_HZ).ln() / (6.4f64.ln() / 27.0)
    }
}

pub fn mel_to_hz(mel: f64) -> f64 {
    const BREAK_MEL: f64 = 15.0; // 1000 Hz
    const LIN_STEP: f64 = 200.0 / 3.0;
    if mel < BREAK_MEL {
        mel * LIN_STEP
    } else {
        1000.0 * ((mel - BREAK_MEL) * (6.4f64.ln() / 27.0)).exp()
    }
}

/// Triangular filterbank over FFT bins, area-normalized per filter.
/// Row-major n_mels × (n_fft/2 + 1).
pub struct MelFilterbank {
    pub weights: Vec<f64>,
    pub n_mels: usize,
    pub n_bins: usize,
    /// Center frequency of each filter in Hz.
    pub centers_hz: Vec<f64>,
}

impl MelFilterbank {
    pub fn new(cfg: &SpectrogramConfig) -> Result<Self> {
        cfg.validate()?;
        let n_bins = cfg.n_fft / 2 + 1;
        let mel_lo = hz_to_mel(cfg.fmin);
        let mel_hi = hz_to_mel(cfg.fmax);
        let edges: Vec<f64> = (0..cfg.n_mels + 2)
            .map(|i| mel_to_hz(mel_lo + (mel_hi - mel_lo) * i as f64 / (cfg.n_mels + 1) as f64))
            .collect();
        let bin_hz: Vec<f64> = (0..n_bins)
            .map(|k| k as f64 * cfg.sample_rate as f64 / cfg.n_fft as f64)
            .collect();

        let mut weights = vec![0.0; cfg.n_mels * n_bins];
        for m in 0..cfg.n_mels {
            let (lo, center, hi) = (edges[m], edges[m + 1], edges[m + 2]);
            let enorm = 2.0 / (hi - lo);
            for (k, &f) in bin_hz.iter().enumerate() {
                let up = (f - lo) / (center - lo);
                let down = (hi - f) / (hi - center);
                let w = up.min(down).max(0.0);
                weights[m * n_bins + k] = w * enorm;
            }
        }
        Ok(MelFilterbank {
            weights,
            n_mels: cfg.n_mels,
            n_bins,
            centers_hz: edges[1..=cfg.n_mels].to_vec(),
        })
    }

    pub fn row(&self, m: usize) -> &[f64] {
        &self.weights[m * self.n_bins..(m + 1) * self.n_bins]
    }
}

/// Precomputed front end; reusable across clips sharing one config.
pub struct SpectrogramExtractor {
    cfg: SpectrogramConfig,
    filterbank: MelFilterbank,
    window: Vec<f64>,
    fft: Arc<dyn Fft<f64>>,
}

impl SpectrogramExtractor {
    pub fn new(cfg: SpectrogramConfig) -> Result<Self> {
        let filterbank = MelFilterbank::new(&cfg)?;
        let window: Vec<f64> = (0..cfg.n_fft)
            .map(|i| {
                0.5 - 0.5
                    * (2.0 * std::f64::consts::PI * i as f64 / cfg.n_fft as f64).cos()
            })
            .collect();
        let fft = FftPlanner::new().plan_fft_forward(cfg.n_fft);
        Ok(SpectrogramExtractor {
            cfg,
            filterbank,
            window,
            fft,
        })
    }

    pub fn config(&self) -> &SpectrogramConfig {
        &self.cfg
    }

    pub fn filterbank(&self) -> &MelFilterbank {
        &self.filterbank
    }

    /// Log-mel spectrogram of a clip. No padding: N = 1 + (len − n_fft)/hop.
    pub fn log_mel(&self, clip: &AudioClip) -> Result<Spectrogram> {
        let cfg = &self.cfg;
        if clip.sample_rate != cfg.sample_rate {
            return Err(Error::SampleRateMismatch {
                path: clip.source_path.clone(),
                clip: clip.sample_rate,
                expected: cfg.sample_rate,
            });
        }
        if clip.len() < cfg.n_fft {
            return Err(Error::ClipTooShort {
                path: clip.source_path.clone(),
                len: clip.len(),
                n_fft: cfg.n_fft,
            });
        }

        let n_frames = 1 + (clip.len() - cfg.n_fft) / cfg.hop;
        let n_bins = self.filterbank.n_bins;
        let mut values = vec![0.0; cfg.n_mels * n_frames];
        let mut buf = vec![Complex::new(0.0, 0.0); cfg.n_fft];
        let mut power = vec![0.0; n_bins];

        for t in 0..n_frames {
            let start = t * cfg.hop;
            for (i, c) in buf.iter_mut().enumerate() {
                *c = Complex::new(clip.samples[start + i] * self.window[i], 0.0);
            }
            self.fft.process(&mut buf);
            for (k, p) in power.iter_mut().enumerate() {
                *p = buf[k].norm_sqr();
            }
            for m in 0..cfg.n_mels {
                let fb = self.filterbank.row(m);
                let energy: f64 = fb.iter().zip(&power).map(|(w, p)| w * p).sum();
                values[m * n_frames + t] = energy.max(cfg.log_floor).ln();
            }
        }

        Spectrogram::from_rows(values, cfg.n_mels, n_frames)
    }
}

/// One-shot convenience wrapper around [`SpectrogramExtractor`].
pub fn log_mel(clip: &AudioClip, cfg: &SpectrogramConfig) -> Result<Spectrogram> {
    SpectrogramExtractor::new(cfg.clone())?.log_mel(clip)
}

const CACHE_MAGIC: &[u8; 8] = b"TWFRSPEC";

/// Cache a spectrogram as little-endian binary: magic, u32 M, u32 N,
/// then M·N row-major f64 values.
pub fn write_cache(spec: &Spectrogram, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let io = |e| Error::io(path, e);
    f.write_all(CACHE_MAGIC).map_err(io)?;
    f.write_all(&(spec.n_mels as u32).to_le_bytes()).map_err(io)?;
    f.write_all(&(spec.n_frames as u32).to_le_bytes()).map_err(io)?;
    let mut bytes = Vec::with_capacity(spec.values.len() * 8);
    for v in &spec.values {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    f.write_all(&bytes).map_err(io)
}

pub fn read_cache(path: impl AsRef<Path>) -> Result<Spectrogram> {
    let path = path.as_ref();
    let mut f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut header = [0u8; 16];
    f.read_exact(&mut header).map_err(|e| Error::io(path, e))?;
    if &header[..8] != CACHE_MAGIC {
        return Err(Error::Other(format!(
            "{} is not a spectrogram cache file",
            path.display()
        )));
    }
    let m = u32::from_le_bytes(header[8..12].try_into().unwrap()) as usize;
    let n = u32::from_le_bytes(header[12..16].try_into().unwrap()) as usize;
    let mut bytes = Vec::new();
    f.read_to_end(&mut bytes).map_err(|e| Error::io(path, e))?;
    if bytes.len() != m * n * 8 {
        return Err(Error::Other(format!(
            "{}: expected {} payload bytes, found {}",
            path.display(),
            m * n * 8,
            bytes.len()
        )));
    }
    let values = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Spectrogram::from_rows(values, m, n)
}
