use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("cannot decode {path}: {reason}")]
    WavDecode { path: PathBuf, reason: String },

    #[error("unsupported wav encoding in {path}: {detail}")]
    UnsupportedEncoding { path: PathBuf, detail: String },

    #[error("zero-length audio in {path}")]
    EmptyAudio { path: PathBuf },

    #[error("clip {path} has {len} samples, shorter than one frame of {n_fft}")]
    ClipTooShort {
        path: String,
        len: usize,
        n_fft: usize,
    },

    #[error("clip {path} has sample rate {clip} Hz but the config expects {expected} Hz")]
    SampleRateMismatch {
        path: String,
        clip: u32,
        expected: u32,
    },

    #[error("malformed filename {filename}: {reason}")]
    ParseLabel { filename: String, reason: String },

    #[error("no caption template for machine type {machine_type}")]
    MissingTemplate { machine_type: String },

    #[error("template for {machine_type} references placeholder {{{placeholder}}} absent from the label")]
    MissingAttribute {
        machine_type: String,
        placeholder: String,
    },

    #[error("caption does not contain the condition word exactly once: {text}")]
    CaptionConditionCount { text: String },

    #[error("to_anomaly_caption requires a normal-condition caption")]
    NotNormalCaption,

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("need scores from both classes (got {n_pos} anomalies, {n_neg} normals)")]
    SingleClass { n_pos: usize, n_neg: usize },

    #[error("pAUC cap p={p} keeps no negatives out of {n_neg}")]
    PaucCapTooSmall { p: f64, n_neg: usize },

    #[error("feature dimension mismatch: model expects {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("cannot fit {n_components} components to {n_samples} samples")]
    TooFewSamples {
        n_components: usize,
        n_samples: usize,
    },

    #[error("manifest error: {0}")]
    Manifest(String),

    #[error("{missing} of {total} synthetic files missing (tolerance {tolerance}): {stems:?}")]
    MissingSynthetic {
        missing: usize,
        total: usize,
        tolerance: f64,
        stems: Vec<String>,
    },

    #[error("model config fingerprint mismatch: model was fitted with {fitted}, scoring config is {scoring}")]
    FingerprintMismatch { fitted: String, scoring: String },

    #[error("model file {path} is not readable as a model: {reason}")]
    ModelFormat { path: PathBuf, reason: String },

    #[error("duplicate clip id {clip_id}")]
    DuplicateClipId { clip_id: String },

    #[error("label file has no entry for scored clip {clip_id}")]
    MissingLabel { clip_id: String },

    #[error("unknown machine type {machine_type} under {root}")]
    UnknownMachine { machine_type: String, root: PathBuf },

    #[error("{0}")]
    Other(String),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
