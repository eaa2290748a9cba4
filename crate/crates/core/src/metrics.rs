//! AUC, partial AUC over a low false-positive-rate range, and the aggregate
//! objective used for tuning the pooling exponent.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metadata::Condition;

#[derive(Debug, Clone, PartialEq)]
pub struct ScoredClip {
    pub clip_id: String,
    pub score: f64,
    pub label: Condition,
}

impl ScoredClip {
    pub fn new(clip_id: impl Into<String>, score: f64, label: Condition) -> Self {
        ScoredClip {
            clip_id: clip_id.into(),
            score,
            label,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ObjectiveMode {
    Auc,
    Pauc,
    Arithmetic,
    Harmonic,
}

impl Default for ObjectiveMode {
    fn default() -> Self {
        ObjectiveMode::Harmonic
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub auc: f64,
    pub pauc: f64,
    /// False-positive-rate cap used for pauc.
    pub p: f64,
    pub n_pos: usize,
    pub n_neg: usize,
    pub objective: f64,
}

fn split(scored: &[ScoredClip]) -> Result<(Vec<&ScoredClip>, Vec<&ScoredClip>)> {
    let (pos, neg): (Vec<_>, Vec<_>) = scored
        .iter()
        .partition(|c| c.label == Condition::Anomaly);
    if pos.is_empty() || neg.is_empty() {
        return Err(Error::SingleClass {
            n_pos: pos.len(),
            n_neg: neg.len(),
        });
    }
    for c in scored {
        if !c.score.is_finite() {
            return Err(Error::Other(format!("non-finite score for {}", c.clip_id)));
        }
    }
    Ok((pos, neg))
}

/// Mann–Whitney AUC via tie-averaged ranks: the fraction of
/// (anomaly, normal) pairs ranked correctly, ties counting 0.5.
pub fn auc(scored: &[ScoredClip]) -> Result<f64> {
    let (pos, neg) = split(scored)?;
    Ok(rank_auc(&pos, &neg))
}

fn rank_auc(pos: &[&ScoredClip], neg: &[&ScoredClip]) -> f64 {
    let mut all: Vec<(f64, bool)> = pos
        .iter()
        .map(|c| (c.score, true))
        .chain(neg.iter().map(|c| (c.score, false)))
        .collect();
    all.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());

    let mut pos_rank_sum = 0.0;
    let mut i = 0;
    while i < all.len() {
        let mut j = i;
        while j < all.len() && all[j].0 == all[i].0 {
            j += 1;
        }
        // 1-based average rank of the tie group [i, j)
        let avg_rank = (i + 1 + j) as f64 / 2.0;
        for item in &all[i..j] {
            if item.1 {
                pos_rank_sum += avg_rank;
            }
        }
        i = j;
    }
    let np = pos.len() as f64;
    let nn = neg.len() as f64;
    let u = pos_rank_sum - np * (np + 1.0) / 2.0;
    u / (np * nn)
}

/// AUC with negatives restricted to the hardest (highest-scored)
/// ⌊p·n_neg⌋, ties broken by clip_id for determinism.
pub fn pauc(scored: &[ScoredClip], p: f64) -> Result<f64> {
    if !(0.0 < p && p <= 1.0) {
        return Err(Error::InvalidConfig(format!("p must be in (0, 1], got {p}")));
    }
    let (pos, mut neg) = split(scored)?;
    let keep = ((p * neg.len() as f64).floor()) as usize;
    if keep < 1 {
        return Err(Error::PaucCapTooSmall {
            p,
            n_neg: neg.len(),
        });
    }
    neg.sort_by(|a, b| {
        b.score
            .partial_cmp(&a.score)
            .unwrap()
            .then_with(|| a.clip_id.cmp(&b.clip_id))
    });
    neg.truncate(keep);
    Ok(rank_auc(&pos, &neg))
}

/// Eq.-style aggregate of auc and pauc.
pub fn objective(scored: &[ScoredClip], mode: ObjectiveMode, p: f64) -> Result<f64> {
    let report = evaluate(scored, mode, p)?;
    Ok(report.objective)
}

pub fn evaluate(scored: &[ScoredClip], mode: ObjectiveMode, p: f64) -> Result<EvalReport> {
    let a = auc(scored)?;
    let pa = pauc(scored, p)?;
    let objective = combine(mode, a, pa);
    let (pos, neg) = split(scored)?;
    Ok(EvalReport {
        auc: a,
        pauc: pa,
        p,
        n_pos: pos.len(),
        n_neg: neg.len(),
        objective,
    })
}

pub fn combine(mode: ObjectiveMode, auc: f64, pauc: f64) -> f64 {
    match mode {
        ObjectiveMode::Auc => auc,
        ObjectiveMode::Pauc => pauc,
        ObjectiveMode::Arithmetic => (auc + pauc) / 2.0,
        ObjectiveMode::Harmonic => harmonic_mean(&[auc, pauc]),
    }
}

/// Harmonic mean, defined as 0 when any entry is 0.
pub fn harmonic_mean(values: &[f64]) -> f64 {
    if values.is_empty() || values.iter().any(|&v| v == 0.0) {
        return 0.0;
    }
    values.len() as f64 / values.iter().map(|v| 1.0 / v).sum::<f64>()
}

/// Read `clip_id,score,label` rows (header required).
pub fn read_scored_csv(path: impl AsRef<Path>) -> Result<Vec<ScoredClip>> {
    let path = path.as_ref();
    let mut reader = csv::Reader::from_path(path).map_err(|e| Error::Other(format!(
        "cannot read {}: {e}",
        path.display()
    )))?;
    let mut out = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| Error::Other(format!("{}: {e}", path.display())))?;
        if record.len() < 3 {
            return Err(Error::Other(format!(
                "{}: expected clip_id,score,label rows",
                path.display()
            )));
        }
        let score: f64 = record[1]
            .parse()
            .map_err(|e| Error::Other(format!("{}: bad score {}: {e}", path.display(), &record[1])))?;
        let label = Condition::parse(&record[2]).ok_or_else(|| {
            Error::Other(format!("{}: unknown label {}", path.display(), &record[2]))
        })?;
        out.push(ScoredClip::new(record[0].to_string(), score, label));
    }
    Ok(out)
}

pub fn write_scored_csv(scored: &[ScoredClip], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::from("clip_id,score,label\n");
    for c in scored {
        out.push_str(&format!("{},{:.17e},{}\n", c.clip_id, c.score, c.label.as_str()));
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}
