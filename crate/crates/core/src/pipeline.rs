//! End-to-end workflow over a DCASE-style dataset tree
//! (`<root>/<machine>/{train,test}/*.wav`): caption export, synthetic
//! ingestion, r tuning, GMM fitting, scoring and evaluation.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::audio_io::{self, AudioClip};
use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::gmm::{self, GmmModel};
use crate::metadata::{self, ClipMetadata, Condition, TemplateSet};
use crate::metrics::{self, EvalReport, ObjectiveMode, ScoredClip};
use crate::spectrogram::SpectrogramExtractor;
use crate::synth_interface::{self, CaptionManifest};
use crate::tuner::{self, TuningResult};
use crate::twfr::{self, PoolingExponent};

pub struct DatasetLayout {
    pub root: PathBuf,
}

impl DatasetLayout {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        DatasetLayout { root: root.into() }
    }

    pub fn machine_types(&self) -> Result<Vec<String>> {
        let mut machines = Vec::new();
        for entry in std::fs::read_dir(&self.root).map_err(|e| Error::io(&self.root, e))? {
            let entry = entry.map_err(|e| Error::io(&self.root, e))?;
            if entry.path().is_dir() {
                machines.push(entry.file_name().to_string_lossy().into_owned());
            }
        }
        machines.sort();
        Ok(machines)
    }

    pub fn split_dir(&self, machine: &str, split: &str) -> PathBuf {
        self.root.join(machine).join(split)
    }

    /// Parse every WAV filename in a split. Unparseable names are collected
    /// and reported together rather than silently skipped.
    pub fn clips(&self, machine: &str, split: &str) -> Result<Vec<(ClipMetadata, PathBuf)>> {
        let dir = self.split_dir(machine, split);
        if !dir.is_dir() {
            return Err(Error::UnknownMachine {
                machine_type: machine.to_string(),
                root: self.root.clone(),
            });
        }
        let mut out = Vec::new();
        let mut bad = Vec::new();
        for path in wav_files(&dir)? {
            let name = path.file_name().unwrap().to_string_lossy().into_owned();
            match metadata::parse_label(&name) {
                Ok(meta) => out.push((meta.with_machine_type(machine), path)),
                Err(e) => bad.push(e.to_string()),
            }
        }
        if !bad.is_empty() {
            return Err(Error::Other(format!(
                "{} unparseable filename(s) in {}: {}",
                bad.len(),
                dir.display(),
                bad.join("; ")
            )));
        }
        out.sort_by(|a, b| a.1.cmp(&b.1));
        Ok(out)
    }
}

fn wav_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = walkdir::WalkDir::new(dir)
        .sort_by_file_name()
        .into_iter()
        .filter_map(|e| e.ok())
        .filter(|e| e.file_type().is_file())
        .map(|e| e.into_path())
        .filter(|p| p.extension().map_or(false, |x| x == "wav"))
        .collect();
    files.sort();
    Ok(files)
}

fn load_templates(cfg: &RunConfig) -> Result<TemplateSet> {
    match &cfg.templates_path {
        Some(path) => TemplateSet::load(path),
        None => Ok(metadata::default_templates()),
    }
}

/// Export the caption manifest for one machine's normal training clips.
pub fn cmd_captions(
    dataset: &DatasetLayout,
    machine: &str,
    cfg: &RunConfig,
    out: impl AsRef<Path>,
) -> Result<CaptionManifest> {
    let clips = dataset.clips(machine, "train")?;
    if clips.is_empty() {
        return Err(Error::Other(format!(
            "machine {machine} has no training clips under {}",
            dataset.root.display()
        )));
    }
    let metas: Vec<ClipMetadata> = clips.into_iter().map(|(m, _)| m).collect();
    let templates = load_templates(cfg)?;
    let manifest = synth_interface::build_manifest(&metas, &templates, cfg.per_caption_count)?;
    manifest.save(out)?;
    Ok(manifest)
}

fn decode_real_clips(
    dataset: &DatasetLayout,
    machine: &str,
    split: &str,
    cfg: &RunConfig,
    condition: Option<Condition>,
) -> Result<Vec<(ClipMetadata, AudioClip)>> {
    let mut out = Vec::new();
    for (meta, path) in dataset.clips(machine, split)? {
        if let Some(c) = condition {
            if meta.condition != c {
                continue;
            }
        }
        let mut clip = audio_io::decode_wav(&path)?;
        if cfg.apply_silence_to_real && cfg.silence.enabled {
            clip = audio_io::remove_silence(&clip, &cfg.silence)?;
        }
        out.push((meta, clip));
    }
    Ok(out)
}

/// Tune r for one machine from its synthetic corpus; persists the grid trace
/// and the selected r under `model_dir`.
pub fn cmd_tune(
    dataset: &DatasetLayout,
    machine: &str,
    synth_dir: impl AsRef<Path>,
    manifest_path: impl AsRef<Path>,
    cfg: &RunConfig,
    model_dir: impl AsRef<Path>,
) -> Result<TuningResult> {
    let synth_dir = synth_dir.as_ref();
    if !synth_dir.is_dir() {
        return Err(Error::Other(format!(
            "synthetic directory {} not found; run the captions command and generate audio \
             externally (or with generate-stub) first",
            synth_dir.display()
        )));
    }
    let manifest = CaptionManifest::load(manifest_path)?;
    let silence = cfg.silence.enabled.then_some(&cfg.silence);
    let corpus = synth_interface::ingest_synthetic(synth_dir, &manifest, silence, 0.0)?;
    for w in &corpus.warnings {
        eprintln!("warning: {w}");
    }
    let real: Vec<AudioClip> =
        decode_real_clips(dataset, machine, "train", cfg, Some(Condition::Normal))?
            .into_iter()
            .map(|(_, c)| c)
            .collect();

    let result = tuner::tune_r(
        &real,
        &corpus.normals,
        &corpus.anomalies,
        &cfg.effective_tuning(),
        &cfg.spectrogram,
        machine,
    )?;

    let model_dir = model_dir.as_ref();
    std::fs::create_dir_all(model_dir).map_err(|e| Error::io(model_dir, e))?;
    let grid_path = model_dir.join(format!("{machine}_grid.csv"));
    std::fs::write(&grid_path, result.trace_csv()).map_err(|e| Error::io(&grid_path, e))?;
    let tuning_path = model_dir.join(format!("{machine}_tuning.json"));
    let doc = serde_json::to_string_pretty(&result)
        .map_err(|e| Error::Other(format!("serialize tuning result: {e}")))?;
    std::fs::write(&tuning_path, doc).map_err(|e| Error::io(&tuning_path, e))?;
    Ok(result)
}

/// A fitted GMM together with the pooling exponent and the front-end
/// configuration it is bound to.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ModelBundle {
    pub machine_type: String,
    pub r: f64,
    pub fingerprint: String,
    pub spectrogram: crate::spectrogram::SpectrogramConfig,
    pub silence: crate::audio_io::SilenceRemovalConfig,
    pub apply_silence_to_real: bool,
    pub gmm: GmmModel,
}

impl ModelBundle {
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(self)
            .map_err(|e| Error::Other(format!("serialize model bundle: {e}")))?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::ModelFormat {
            path: path.to_path_buf(),
            reason: e.to_string(),
        })
    }

    pub fn parameter_count(&self) -> usize {
        self.gmm.parameter_count()
    }

    /// Score one clip end to end with the bundled front end.
    pub fn score_clip(&self, clip: &AudioClip) -> Result<f64> {
        let mut owned;
        let clip = if self.apply_silence_to_real && self.silence.enabled {
            owned = clip.clone();
            owned = audio_io::remove_silence(&owned, &self.silence)?;
            &owned
        } else {
            clip
        };
        let extractor = SpectrogramExtractor::new(self.spectrogram.clone())?;
        let spec = extractor.log_mel(clip)?;
        let v = twfr::twfr(&spec, PoolingExponent::new(self.r)?);
        self.gmm.score(&v)
    }
}

/// Fit the GMM on real normal training clips at a fixed r and persist the
/// bundle. Returns the model path.
pub fn cmd_fit(
    dataset: &DatasetLayout,
    machine: &str,
    r: f64,
    cfg: &RunConfig,
    model_dir: impl AsRef<Path>,
) -> Result<PathBuf> {
    let exponent = PoolingExponent::new(r)?;
    let real = decode_real_clips(dataset, machine, "train", cfg, Some(Condition::Normal))?;
    if real.is_empty() {
        return Err(Error::Other(format!(
            "machine {machine} has no normal training clips"
        )));
    }
    let extractor = SpectrogramExtractor::new(cfg.spectrogram.clone())?;
    let vectors: Vec<_> = real
        .iter()
        .map(|(_, clip)| extractor.log_mel(clip).map(|s| twfr::twfr(&s, exponent)))
        .collect::<Result<_>>()?;
    let model = gmm::fit(&vectors, &cfg.effective_gmm())?;

    let bundle = ModelBundle {
        machine_type: machine.to_string(),
        r,
        fingerprint: cfg.frontend_fingerprint(),
        spectrogram: cfg.spectrogram.clone(),
        silence: cfg.silence.clone(),
        apply_silence_to_real: cfg.apply_silence_to_real,
        gmm: model,
    };
    let model_dir = model_dir.as_ref();
    std::fs::create_dir_all(model_dir).map_err(|e| Error::io(model_dir, e))?;
    let path = model_dir.join(format!("{machine}_model.json"));
    bundle.save(&path)?;
    Ok(path)
}

/// Score every WAV under a directory. Output rows are `clip_id,score`,
/// ordered by clip_id, full double precision.
pub fn cmd_score(
    model_path: impl AsRef<Path>,
    wav_dir: impl AsRef<Path>,
    cfg: &RunConfig,
    out_csv: impl AsRef<Path>,
) -> Result<usize> {
    let bundle = ModelBundle::load(model_path)?;
    let scoring_fp = cfg.frontend_fingerprint();
    if bundle.fingerprint != scoring_fp {
        return Err(Error::FingerprintMismatch {
            fitted: bundle.fingerprint,
            scoring: scoring_fp,
        });
    }

    let wav_dir = wav_dir.as_ref();
    let mut rows: BTreeMap<String, f64> = BTreeMap::new();
    for path in wav_files(wav_dir)? {
        let clip_id = path
            .file_stem()
            .unwrap()
            .to_string_lossy()
            .into_owned();
        if rows.contains_key(&clip_id) {
            return Err(Error::DuplicateClipId { clip_id });
        }
        let clip = audio_io::decode_wav(&path)?;
        let score = bundle.score_clip(&clip)?;
        rows.insert(clip_id, score);
    }

    let out_csv = out_csv.as_ref();
    let mut out = String::from("clip_id,score\n");
    for (id, score) in &rows {
        out.push_str(&format!("{id},{score:.17e}\n"));
    }
    std::fs::write(out_csv, out).map_err(|e| Error::io(out_csv, e))?;
    Ok(rows.len())
}

pub fn read_score_csv(path: impl AsRef<Path>) -> Result<Vec<(String, f64)>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (no, line) in text.lines().enumerate().skip(1) {
        if line.is_empty() {
            continue;
        }
        let (id, score) = line.split_once(',').ok_or_else(|| {
            Error::Other(format!("{} line {}: expected clip_id,score", path.display(), no + 1))
        })?;
        let score: f64 = score.parse().map_err(|e| {
            Error::Other(format!("{} line {}: bad score: {e}", path.display(), no + 1))
        })?;
        out.push((id.to_string(), score));
    }
    Ok(out)
}

/// `clip_id,label` with a header row.
pub fn read_labels_csv(path: impl AsRef<Path>) -> Result<BTreeMap<String, Condition>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut out = BTreeMap::new();
    for (no, line) in text.lines().enumerate().skip(1) {
        if line.is_empty() {
            continue;
        }
        let (id, label) = line.split_once(',').ok_or_else(|| {
            Error::Other(format!("{} line {}: expected clip_id,label", path.display(), no + 1))
        })?;
        let label = Condition::parse(label.trim()).ok_or_else(|| {
            Error::Other(format!("{} line {}: unknown label {label}", path.display(), no + 1))
        })?;
        out.insert(id.to_string(), label);
    }
    Ok(out)
}

#[derive(Debug)]
pub struct MachineEval {
    pub machine_type: String,
    pub report: EvalReport,
}

/// Join score files with label files and evaluate. The returned aggregate
/// uses harmonic means of AUC and pAUC across machines.
pub fn cmd_eval(
    inputs: &[(String, PathBuf, PathBuf)],
    mode: ObjectiveMode,
    p: f64,
    out_csv: Option<&Path>,
) -> Result<(Vec<MachineEval>, EvalReport)> {
    if inputs.is_empty() {
        return Err(Error::Other("no score files to evaluate".into()));
    }
    let mut evals = Vec::new();
    for (machine, scores_path, labels_path) in inputs {
        let scores = read_score_csv(scores_path)?;
        let labels = read_labels_csv(labels_path)?;
        let scored: Vec<ScoredClip> = scores
            .into_iter()
            .map(|(id, score)| {
                let label = labels
                    .get(&id)
                    .copied()
                    .ok_or_else(|| Error::MissingLabel { clip_id: id.clone() })?;
                Ok(ScoredClip::new(id, score, label))
            })
            .collect::<Result<_>>()?;
        let report = metrics::evaluate(&scored, mode, p)?;
        evals.push(MachineEval {
            machine_type: machine.clone(),
            report,
        });
    }

    let aucs: Vec<f64> = evals.iter().map(|e| e.report.auc).collect();
    let paucs: Vec<f64> = evals.iter().map(|e| e.report.pauc).collect();
    let agg_auc = metrics::harmonic_mean(&aucs);
    let agg_pauc = metrics::harmonic_mean(&paucs);
    let aggregate = EvalReport {
        auc: agg_auc,
        pauc: agg_pauc,
        p,
        n_pos: evals.iter().map(|e| e.report.n_pos).sum(),
        n_neg: evals.iter().map(|e| e.report.n_neg).sum(),
        objective: metrics::combine(mode, agg_auc, agg_pauc),
    };

    if let Some(path) = out_csv {
        let mut out = String::from("machine,auc,pauc,p,objective,n_pos,n_neg\n");
        for e in &evals {
            let r = &e.report;
            out.push_str(&format!(
                "{},{:.6},{:.6},{},{:.6},{},{}\n",
                e.machine_type, r.auc, r.pauc, r.p, r.objective, r.n_pos, r.n_neg
            ));
        }
        out.push_str(&format!(
            "harmonic-mean,{:.6},{:.6},{},{:.6},{},{}\n",
            aggregate.auc, aggregate.pauc, aggregate.p, aggregate.objective,
            aggregate.n_pos, aggregate.n_neg
        ));
        std::fs::write(path, out).map_err(|e| Error::io(path, e))?;
    }
    Ok((evals, aggregate))
}
