//! First-shot unsupervised anomalous sound detection with time-weighted
//! frequency representations and Gaussian mixture models.
//!
//! The pipeline: decode machine sound clips, extract log-mel spectrograms,
//! pool them into TWFR vectors with a per-machine exponent r, fit a GMM on
//! real normal sounds, and score clips by negative log-likelihood. Because
//! anomalies for target machines are unseen, r is tuned by grid search
//! against externally synthesized normal/anomaly audio; the caption manifest
//! and WAV ingestion in [`synth_interface`] define that external contract.

pub mod audio_io;
pub mod config;
pub mod error;
pub mod gmm;
pub mod metadata;
pub mod metrics;
pub mod pipeline;
pub mod spectrogram;
pub mod synth_interface;
pub mod tuner;
pub mod twfr;

pub use audio_io::{AudioClip, SilenceRemovalConfig};
pub use config::RunConfig;
pub use error::{Error, Result};
pub use gmm::{GmmFitConfig, GmmModel};
pub use metadata::{Caption, CaptionTemplate, ClipMetadata, Condition};
pub use metrics::{EvalReport, ObjectiveMode, ScoredClip};
pub use pipeline::{DatasetLayout, ModelBundle};
pub use spectrogram::{Spectrogram, SpectrogramConfig};
pub use synth_interface::{CaptionManifest, SyntheticCorpus};
pub use tuner::{TuningConfig, TuningResult};
pub use twfr::{PoolingExponent, TwfrVector};
