//! Contract with the external text-to-audio generator: caption manifests go
//! out, synthetic WAVs come back. A deterministic stub generator stands in
//! for the real model so the pipeline is testable offline.

use std::collections::BTreeSet;
use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use crate::audio_io::{self, AudioClip, SilenceRemovalConfig};
use crate::error::{Error, Result};
use crate::metadata::{
    self, Caption, CaptionTemplate, ClipMetadata, Condition, TemplateSet,
};

#[derive(Debug, Clone, PartialEq)]
pub struct ManifestEntry {
    pub caption: Caption,
    pub machine_type: String,
    pub condition: Condition,
    pub requested_count: usize,
    pub output_stem: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CaptionManifest {
    pub entries: Vec<ManifestEntry>,
}

impl CaptionManifest {
    pub fn total_requested(&self, condition: Condition) -> usize {
        self.entries
            .iter()
            .filter(|e| e.condition == condition)
            .map(|e| e.requested_count)
            .sum()
    }

    /// Tab-separated, one entry per line:
    /// `output_stem<TAB>machine_type<TAB>condition<TAB>requested_count<TAB>caption`.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut out = String::new();
        for e in &self.entries {
            out.push_str(&format!(
                "{}\t{}\t{}\t{}\t{}\n",
                e.output_stem, e.machine_type, e.condition, e.requested_count, e.caption.text
            ));
        }
        std::fs::write(path, out).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut entries = Vec::new();
        let mut stems = BTreeSet::new();
        for (no, line) in text.lines().enumerate() {
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.splitn(5, '\t').collect();
            if fields.len() != 5 {
                return Err(Error::Manifest(format!(
                    "{} line {}: expected 5 tab-separated fields",
                    path.display(),
                    no + 1
                )));
            }
            let condition = Condition::parse(fields[2]).ok_or_else(|| {
                Error::Manifest(format!(
                    "{} line {}: unknown condition {}",
                    path.display(),
                    no + 1,
                    fields[2]
                ))
            })?;
            let requested_count: usize = fields[3].parse().map_err(|e| {
                Error::Manifest(format!("{} line {}: bad count: {e}", path.display(), no + 1))
            })?;
            if !stems.insert(fields[0].to_string()) {
                return Err(Error::Manifest(format!(
                    "duplicate output_stem {}",
                    fields[0]
                )));
            }
            entries.push(ManifestEntry {
                caption: Caption {
                    text: fields[4].to_string(),
                    condition,
                    machine_type: fields[1].to_string(),
                },
                machine_type: fields[1].to_string(),
                condition,
                requested_count,
                output_stem: fields[0].to_string(),
            });
        }
        Ok(CaptionManifest { entries })
    }
}

#[derive(Debug)]
pub struct SyntheticCorpus {
    pub machine_type: String,
    pub normals: Vec<AudioClip>,
    pub anomalies: Vec<AudioClip>,
    pub manifest_ref: String,
    pub warnings: Vec<String>,
}

/// Build the caption manifest for one target machine type: every distinct
/// caption derived from the normal-condition metadata yields one normal and
/// one anomaly entry.
pub fn build_manifest(
    metadata: &[ClipMetadata],
    templates: &TemplateSet,
    per_caption_count: usize,
) -> Result<CaptionManifest> {
    if metadata.is_empty() {
        return Err(Error::Manifest("no metadata to build a manifest from".into()));
    }
    if per_caption_count < 1 {
        return Err(Error::Manifest("requested_count must be >= 1".into()));
    }
    let machine_type = &metadata[0].machine_type;
    for m in metadata {
        if &m.machine_type != machine_type {
            return Err(Error::Manifest(format!(
                "mixed machine types in manifest input: {} and {}",
                machine_type, m.machine_type
            )));
        }
        if m.condition != Condition::Normal {
            return Err(Error::Manifest(format!(
                "anomaly-condition clip {} in manifest input; target anomalies are unseen",
                m.render_filename()
            )));
        }
    }
    let template: &CaptionTemplate = templates.get(machine_type)?;

    let mut seen = BTreeSet::new();
    let mut entries = Vec::new();
    for m in metadata {
        let caption = metadata::render_caption(m, template)?;
        if !seen.insert(caption.text.clone()) {
            continue;
        }
        let idx = seen.len() - 1;
        let anomaly = metadata::to_anomaly_caption(&caption)?;
        entries.push(ManifestEntry {
            output_stem: format!("{machine_type}_{idx:03}_normal"),
            machine_type: machine_type.clone(),
            condition: Condition::Normal,
            requested_count: per_caption_count,
            caption,
        });
        entries.push(ManifestEntry {
            output_stem: format!("{machine_type}_{idx:03}_anomaly"),
            machine_type: machine_type.clone(),
            condition: Condition::Anomaly,
            requested_count: per_caption_count,
            caption: anomaly,
        });
    }
    Ok(CaptionManifest { entries })
}

/// Load the generator's output directory back in. Files are expected as
/// `<output_stem>_<k>.wav`, k = 0..requested_count. Missing files beyond
/// `missing_tolerance` (fraction of the total request) are an error; extra
/// unmatched WAVs are reported as warnings.
pub fn ingest_synthetic(
    dir: impl AsRef<Path>,
    manifest: &CaptionManifest,
    silence: Option<&SilenceRemovalConfig>,
    missing_tolerance: f64,
) -> Result<SyntheticCorpus> {
    let dir = dir.as_ref();
    let machine_type = manifest
        .entries
        .first()
        .map(|e| e.machine_type.clone())
        .ok_or_else(|| Error::Manifest("empty manifest".into()))?;

    let mut expected = BTreeSet::new();
    for e in &manifest.entries {
        for k in 0..e.requested_count {
            expected.insert(format!("{}_{k}", e.output_stem));
        }
    }
    let total = expected.len();

    let mut normals = Vec::new();
    let mut anomalies = Vec::new();
    let mut missing = Vec::new();
    let mut warnings = Vec::new();
    let mut found = BTreeSet::new();

    for e in &manifest.entries {
        for k in 0..e.requested_count {
            let stem = format!("{}_{k}", e.output_stem);
            let path = dir.join(format!("{stem}.wav"));
            if !path.is_file() {
                missing.push(stem);
                continue;
            }
            found.insert(stem);
            let mut clip = audio_io::decode_wav(&path)?;
            if let Some(cfg) = silence {
                if cfg.enabled {
                    clip = audio_io::remove_silence(&clip, cfg)?;
                }
            }
            match e.condition {
                Condition::Normal => normals.push(clip),
                Condition::Anomaly => anomalies.push(clip),
            }
        }
    }

    if !missing.is_empty() && missing.len() as f64 > missing_tolerance * total as f64 {
        return Err(Error::MissingSynthetic {
            missing: missing.len(),
            total,
            tolerance: missing_tolerance,
            stems: missing,
        });
    }

    for entry in std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let entry = entry.map_err(|e| Error::io(dir, e))?;
        let name = entry.file_name().to_string_lossy().into_owned();
        if let Some(stem) = name.strip_suffix(".wav") {
            if !found.contains(stem) {
                warnings.push(format!("unmatched file {name}"));
            }
        }
    }

    Ok(SyntheticCorpus {
        machine_type,
        normals,
        anomalies,
        manifest_ref: dir.display().to_string(),
        warnings,
    })
}

#[derive(Debug, Clone)]
pub struct StubConfig {
    pub seed: u64,
    pub sample_rate: u32,
    pub duration_secs: f64,
}

impl Default for StubConfig {
    fn default() -> Self {
        StubConfig {
            seed: 0,
            sample_rate: 16000,
            duration_secs: 2.0,
        }
    }
}

/// Deterministic offline stand-in for the text-to-audio generator. Each
/// caption hashes to a tone frequency and noise level; anomaly captions get
/// short broadband bursts on top of the matching normal caption's signal.
pub fn generate_stub(
    manifest: &CaptionManifest,
    out_dir: impl AsRef<Path>,
    cfg: &StubConfig,
) -> Result<usize> {
    let out_dir = out_dir.as_ref();
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let len = (cfg.duration_secs * cfg.sample_rate as f64) as usize;
    let mut written = 0;

    for e in &manifest.entries {
        // pair anomaly captions with their normal counterpart's base signal
        let base_text = e.caption.text.replacen("anomaly", "normal", 1);
        let mut hasher = Sha256::new();
        hasher.update(base_text.as_bytes());
        hasher.update(cfg.seed.to_le_bytes());
        let digest = hasher.finalize();
        let caption_seed = u64::from_le_bytes(digest[..8].try_into().unwrap());

        for k in 0..e.requested_count {
            let mut rng = ChaCha8Rng::seed_from_u64(caption_seed ^ (k as u64).wrapping_mul(0x9e3779b97f4a7c15));
            let freq = 200.0 + (caption_seed % 2000) as f64;
            let noise = 0.02 + 0.03 * ((caption_seed >> 16) % 100) as f64 / 100.0;
            let burst_positions: Vec<usize> = if e.condition == Condition::Anomaly {
                (0..4).map(|_| rng.gen_range(0..len.saturating_sub(256))).collect()
            } else {
                Vec::new()
            };
            let mut samples: Vec<f64> = (0..len)
                .map(|i| {
                    let t = i as f64 / cfg.sample_rate as f64;
                    0.3 * (2.0 * std::f64::consts::PI * freq * t).sin()
                        + noise * rng.gen_range(-1.0..1.0)
                })
                .collect();
            for &pos in &burst_positions {
                for s in &mut samples[pos..(pos + 256).min(len)] {
                    *s += 0.6 * rng.gen_range(-1.0..1.0);
                }
            }
            let clip = AudioClip {
                samples,
                sample_rate: cfg.sample_rate,
                source_path: String::new(),
            };
            audio_io::encode_wav(&clip, out_dir.join(format!("{}_{k}.wav", e.output_stem)))?;
            written += 1;
        }
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metadata::{default_templates, parse_label};

    fn grinder_meta(index: usize, grindstone: u32) -> ClipMetadata {
        parse_label(&format!(
            "section_00_source_train_normal_{index:04}_grindstone_{grindstone}_plate_2.wav"
        ))
        .unwrap()
        .with_machine_type("Grinder")
    }

    #[test]
    fn one_caption_yields_two_entries() {
        let manifest =
            build_manifest(&[grinder_meta(0, 1)], &default_templates(), 5).unwrap();
        assert_eq!(manifest.entries.len(), 2);
        for e in &manifest.entries {
            assert_eq!(e.requested_count, 5);
        }
        assert_eq!(manifest.total_requested(Condition::Normal), 5);
        assert_eq!(manifest.total_requested(Condition::Anomaly), 5);
    }

    #[test]
    fn captions_deduplicate() {
        // three labels, two distinct captions
        let metas = vec![grinder_meta(0, 1), grinder_meta(1, 1), grinder_meta(2, 2)];
        let manifest = build_manifest(&metas, &default_templates(), 3).unwrap();
        assert_eq!(manifest.entries.len(), 4);
    }

    #[test]
    fn normal_and_anomaly_entries_pair_up() {
        let metas = vec![grinder_meta(0, 1), grinder_meta(1, 2)];
        let manifest = build_manifest(&metas, &default_templates(), 2).unwrap();
        let normals = manifest
            .entries
            .iter()
            .filter(|e| e.condition == Condition::Normal)
            .count();
        let anomalies = manifest.entries.len() - normals;
        assert_eq!(normals, anomalies);
    }

    #[test]
    fn anomaly_metadata_rejected() {
        let meta = parse_label("section_00_source_train_anomaly_0000_grindstone_1_plate_2.wav")
            .unwrap()
            .with_machine_type("Grinder");
        assert!(build_manifest(&[meta], &default_templates(), 1).is_err());
    }

    #[test]
    fn mixed_machines_rejected() {
        let a = grinder_meta(0, 1);
        let b = grinder_meta(1, 2).with_machine_type("ToyCar");
        assert!(build_manifest(&[a, b], &default_templates(), 1).is_err());
    }

    #[test]
    fn manifest_file_roundtrip() {
        let metas = vec![grinder_meta(0, 1), grinder_meta(1, 2)];
        let manifest = build_manifest(&metas, &default_templates(), 4).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("manifest.tsv");
        manifest.save(&path).unwrap();
        let back = CaptionManifest::load(&path).unwrap();
        assert_eq!(manifest, back);
    }

    #[test]
    fn stub_then_ingest_accounts_exactly() {
        let manifest =
            build_manifest(&[grinder_meta(0, 1), grinder_meta(1, 2)], &default_templates(), 3)
                .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let written = generate_stub(&manifest, dir.path(), &StubConfig::default()).unwrap();
        assert_eq!(written, 12);
        let corpus = ingest_synthetic(dir.path(), &manifest, None, 0.0).unwrap();
        assert_eq!(corpus.normals.len(), manifest.total_requested(Condition::Normal));
        assert_eq!(
            corpus.anomalies.len(),
            manifest.total_requested(Condition::Anomaly)
        );
        assert!(corpus.warnings.is_empty());
    }

    #[test]
    fn stub_is_deterministic() {
        let manifest =
            build_manifest(&[grinder_meta(0, 1)], &default_templates(), 2).unwrap();
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        generate_stub(&manifest, a.path(), &StubConfig::default()).unwrap();
        generate_stub(&manifest, b.path(), &StubConfig::default()).unwrap();
        for e in &manifest.entries {
            for k in 0..e.requested_count {
                let name = format!("{}_{k}.wav", e.output_stem);
                let x = std::fs::read(a.path().join(&name)).unwrap();
                let y = std::fs::read(b.path().join(&name)).unwrap();
                assert_eq!(x, y, "stub output differs for {name}");
            }
        }
    }

    #[test]
    fn missing_file_with_zero_tolerance_errors() {
        let manifest =
            build_manifest(&[grinder_meta(0, 1)], &default_templates(), 2).unwrap();
        let dir = tempfile::tempdir().unwrap();
        generate_stub(&manifest, dir.path(), &StubConfig::default()).unwrap();
        let victim = format!("{}_0.wav", manifest.entries[0].output_stem);
        std::fs::remove_file(dir.path().join(&victim)).unwrap();
        let err = ingest_synthetic(dir.path(), &manifest, None, 0.0).unwrap_err();
        assert!(err.to_string().contains(victim.trim_end_matches(".wav")), "{err}");
        // within tolerance it ingests the rest
        let corpus = ingest_synthetic(dir.path(), &manifest, None, 0.5).unwrap();
        assert_eq!(corpus.normals.len() + corpus.anomalies.len(), 3);
    }

    #[test]
    fn extra_file_is_reported_not_ingested() {
        let manifest =
            build_manifest(&[grinder_meta(0, 1)], &default_templates(), 1).unwrap();
        let dir = tempfile::tempdir().unwrap();
        generate_stub(&manifest, dir.path(), &StubConfig::default()).unwrap();
        let clip = AudioClip {
            samples: vec![0.1; 1000],
            sample_rate: 16000,
            source_path: String::new(),
        };
        audio_io::encode_wav(&clip, dir.path().join("stray.wav")).unwrap();
        let corpus = ingest_synthetic(dir.path(), &manifest, None, 0.0).unwrap();
        assert_eq!(corpus.normals.len(), 1);
        assert_eq!(corpus.anomalies.len(), 1);
        assert_eq!(corpus.warnings.len(), 1);
        assert!(corpus.warnings[0].contains("stray.wav"));
    }

    #[test]
    fn silence_removal_applies_during_ingest() {
        let manifest =
            build_manifest(&[grinder_meta(0, 1)], &default_templates(), 1).unwrap();
        let dir = tempfile::tempdir().unwrap();
        // pad the stub output with trailing silence by writing our own file
        generate_stub(&manifest, dir.path(), &StubConfig::default()).unwrap();
        let name = format!("{}_0.wav", manifest.entries[0].output_stem);
        let mut clip = audio_io::decode_wav(dir.path().join(&name)).unwrap();
        let orig_len = clip.samples.len();
        clip.samples.extend(std::iter::repeat(0.0).take(16000));
        audio_io::encode_wav(&clip, dir.path().join(&name)).unwrap();
        let rs = SilenceRemovalConfig::default();
        let corpus = ingest_synthetic(dir.path(), &manifest, Some(&rs), 0.0).unwrap();
        assert!(corpus.normals[0].samples.len() < orig_len + 16000);
    }
}
