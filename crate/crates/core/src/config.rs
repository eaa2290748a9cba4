//! Declarative run configuration. Every field has a default, so an empty
//! file (or no file) is a valid configuration.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::audio_io::SilenceRemovalConfig;
use crate::error::{Error, Result};
use crate::gmm::GmmFitConfig;
use crate::spectrogram::SpectrogramConfig;
use crate::tuner::TuningConfig;

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default)]
pub struct RunConfig {
    pub spectrogram: SpectrogramConfig,
    pub silence: SilenceRemovalConfig,
    /// Silence removal targets the synthetic clips; set this to also trim
    /// real clips.
    pub apply_silence_to_real: bool,
    pub tuning: TuningConfig,
    pub gmm: GmmFitConfig,
    pub templates_path: Option<PathBuf>,
    /// Synthetic clips requested per caption when exporting a manifest.
    pub per_caption_count: usize,
    /// Master seed; overrides the per-module GMM seeds.
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            spectrogram: SpectrogramConfig::default(),
            silence: SilenceRemovalConfig::default(),
            apply_silence_to_real: false,
            tuning: TuningConfig::default(),
            gmm: GmmFitConfig::default(),
            templates_path: None,
            per_caption_count: 10,
            seed: 0,
        }
    }
}

impl RunConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cfg: RunConfig = toml::from_str(&text)
            .map_err(|e| Error::InvalidConfig(format!("{}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.spectrogram.validate()?;
        self.silence.validate()?;
        self.tuning.validate()?;
        self.gmm.validate()?;
        if self.per_caption_count < 1 {
            return Err(Error::InvalidConfig("per_caption_count must be >= 1".into()));
        }
        Ok(())
    }

    /// GMM config with the master seed applied.
    pub fn effective_gmm(&self) -> GmmFitConfig {
        GmmFitConfig {
            seed: self.seed,
            ..self.gmm.clone()
        }
    }

    pub fn effective_tuning(&self) -> TuningConfig {
        TuningConfig {
            gmm: self.effective_gmm(),
            ..self.tuning.clone()
        }
    }

    /// Hash of the front-end configuration a model is bound to. Scoring with
    /// a different spectrogram or silence config is rejected.
    pub fn frontend_fingerprint(&self) -> String {
        frontend_fingerprint(&self.spectrogram, &self.silence, self.apply_silence_to_real)
    }
}

pub fn frontend_fingerprint(
    spectrogram: &SpectrogramConfig,
    silence: &SilenceRemovalConfig,
    apply_silence_to_real: bool,
) -> String {
    let doc = serde_json::json!({
        "spectrogram": spectrogram,
        "silence": silence,
        "apply_silence_to_real": apply_silence_to_real,
    });
    let mut hasher = Sha256::new();
    hasher.update(doc.to_string().as_bytes());
    let digest = hasher.finalize();
    digest.iter().map(|b| format!("{b:02x}")).collect()
}
