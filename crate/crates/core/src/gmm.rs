//! Diagonal-covariance Gaussian mixture fitted by EM on TWFR vectors.
//! Anomaly score is the negative log-likelihood of a clip under the model.

use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::twfr::TwfrVector;

const LN_2PI: f64 = 1.8378770664093453; // ln(2π)
const SCALE_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default)]
pub struct GmmFitConfig {
    pub n_components: usize,
    pub max_iters: usize,
    /// Relative mean-log-likelihood improvement below which EM stops.
    pub tol: f64,
    pub variance_floor: f64,
    pub seed: u64,
}

impl Default for GmmFitConfig {
    fn default() -> Self {
        GmmFitConfig {
            n_components: 2,
            max_iters: 100,
            tol: 1e-6,
            variance_floor: 1e-6,
            seed: 0,
        }
    }
}

impl GmmFitConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_components < 1 {
            return Err(Error::InvalidConfig("n_components must be >= 1".into()));
        }
        if self.max_iters < 1 {
            return Err(Error::InvalidConfig("max_iters must be >= 1".into()));
        }
        if self.tol <= 0.0 {
            return Err(Error::InvalidConfig("tol must be > 0".into()));
        }
        if self.variance_floor <= 0.0 {
            return Err(Error::InvalidConfig("variance_floor must be > 0".into()));
        }
        Ok(())
    }
}

/// Fitted mixture plus the feature standardization it was trained with.
/// All mixture parameters live in standardized space.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct GmmModel {
    pub n_components: usize,
    pub dim: usize,
    /// Row-major K×M.
    pub means: Vec<f64>,
    /// Row-major K×M, each entry >= variance_floor.
    pub variances: Vec<f64>,
    pub mixture_weights: Vec<f64>,
    pub feature_mean: Vec<f64>,
    pub feature_scale: Vec<f64>,
    pub config: GmmFitConfig,
}

impl GmmModel {
    /// K·(2M+1) mixture parameters plus the 2M standardization vectors.
    pub fn parameter_count(&self) -> usize {
        self.n_components * (2 * self.dim + 1) + 2 * self.dim
    }

    fn standardize(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(self.feature_mean.iter().zip(&self.feature_scale))
            .map(|(v, (m, s))| (v - m) / s)
            .collect()
    }

    /// Negative log-likelihood of one vector; higher = more anomalous.
    pub fn score(&self, x: &TwfrVector) -> Result<f64> {
        if x.dim() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: x.dim(),
            });
        }
        let z = self.standardize(x.as_slice());
        Ok(-log_likelihood(
            &z,
            self.n_components,
            self.dim,
            &self.means,
            &self.variances,
            &self.mixture_weights,
        ))
    }

    /// Persist as a self-describing JSON text document.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(self)
            .map_err(|e| Error::Other(format!("serialize model: {e}")))?;
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
}

/// log Σ_k w_k N(z; μ_k, diag σ²_k) via log-sum-exp.
fn log_likelihood(
    z: &[f64],
    k: usize,
    dim: usize,
    means: &[f64],
    variances: &[f64],
    weights: &[f64],
) -> f64 {
    let mut terms = Vec::with_capacity(k);
    for c in 0..k {
        let mu = &means[c * dim..(c + 1) * dim];
        let var = &variances[c * dim..(c + 1) * dim];
        let mut log_det = 0.0;
        let mut maha = 0.0;
        for i in 0..dim {
            log_det += var[i].ln();
            let d = z[i] - mu[i];
            maha += d * d / var[i];
        }
        let log_n = -0.5 * (dim as f64 * LN_2PI + log_det + maha);
        terms.push(weights[c].ln() + log_n);
    }
    log_sum_exp(&terms)
}

fn log_sum_exp(v: &[f64]) -> f64 {
    let max = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + v.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

/// Fit a GMM; also returns the mean log-likelihood after each EM iteration.
pub fn fit_traced(train: &[TwfrVector], cfg: &GmmFitConfig) -> Result<(GmmModel, Vec<f64>)> {
    cfg.validate()?;
    let n = train.len();
    let k = cfg.n_components;
    if n < k {
        return Err(Error::TooFewSamples {
            n_components: k,
            n_samples: n,
        });
    }
    let dim = train[0].dim();
    for v in train {
        if v.dim() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: v.dim(),
            });
        }
    }

    // per-dimension z-scoring, scale floored against constant features
    let mut feature_mean = vec![0.0; dim];
    for v in train {
        for (m, &x) in feature_mean.iter_mut().zip(v.as_slice()) {
            *m += x;
        }
    }
    feature_mean.iter_mut().for_each(|m| *m /= n as f64);
    let mut feature_scale = vec![0.0; dim];
    for v in train {
        for ((s, &m), &x) in feature_scale.iter_mut().zip(&feature_mean).zip(v.as_slice()) {
            let d = x - m;
            *s += d * d;
        }
    }
    let mut floored_dims = 0usize;
    for s in &mut feature_scale {
        *s = (*s / n as f64).sqrt();
        if *s < SCALE_FLOOR {
            *s = SCALE_FLOOR;
            floored_dims += 1;
        }
    }
    if floored_dims > 0 {
        eprintln!("warning: {floored_dims} zero-variance feature dimension(s), scale floored");
    }

    let data: Vec<Vec<f64>> = train
        .iter()
        .map(|v| {
            v.as_slice()
                .iter()
                .zip(feature_mean.iter().zip(&feature_scale))
                .map(|(x, (m, s))| (x - m) / s)
                .collect()
        })
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut means = kmeans_pp_centers(&data, k, &mut rng);
    let mut variances = vec![1.0f64; k * dim];
    let mut weights = vec![1.0 / k as f64; k];

    let mut resp = vec![0.0f64; n * k];
    let mut trace = Vec::new();
    let mut prev_mean_ll = f64::NEG_INFINITY;

    for _ in 0..cfg.max_iters {
        // E-step
        let mut total_ll = 0.0;
        for (i, z) in data.iter().enumerate() {
            let mut terms = Vec::with_capacity(k);
            for c in 0..k {
                let mu = &means[c * dim..(c + 1) * dim];
                let var = &variances[c * dim..(c + 1) * dim];
                let mut log_det = 0.0;
                let mut maha = 0.0;
                for d in 0..dim {
                    log_det += var[d].ln();
                    let diff = z[d] - mu[d];
                    maha += diff * diff / var[d];
                }
                terms.push(weights[c].ln() - 0.5 * (dim as f64 * LN_2PI + log_det + maha));
            }
            let lse = log_sum_exp(&terms);
            total_ll += lse;
            for c in 0..k {
                resp[i * k + c] = (terms[c] - lse).exp();
            }
        }
        let mean_ll = total_ll / n as f64;
        trace.push(mean_ll);

        // M-step
        for c in 0..k {
            let nk: f64 = (0..n).map(|i| resp[i * k + c]).sum();
            let nk_safe = nk.max(1e-300);
            weights[c] = nk / n as f64;
            let mu = &mut means[c * dim..(c + 1) * dim];
            mu.iter_mut().for_each(|m| *m = 0.0);
            for (i, z) in data.iter().enumerate() {
                let r = resp[i * k + c];
                for d in 0..dim {
                    mu[d] += r * z[d];
                }
            }
            mu.iter_mut().for_each(|m| *m /= nk_safe);
            let mu = means[c * dim..(c + 1) * dim].to_vec();
            let var = &mut variances[c * dim..(c + 1) * dim];
            var.iter_mut().for_each(|v| *v = 0.0);
            for (i, z) in data.iter().enumerate() {
                let r = resp[i * k + c];
                for d in 0..dim {
                    let diff = z[d] - mu[d];
                    var[d] += r * diff * diff;
                }
            }
            for v in var.iter_mut() {
                *v = (*v / nk_safe).max(cfg.variance_floor);
            }
        }
        let wsum: f64 = weights.iter().sum();
        weights.iter_mut().for_each(|w| *w /= wsum);

        if mean_ll - prev_mean_ll < cfg.tol * prev_mean_ll.abs().max(1.0) && prev_mean_ll.is_finite()
        {
            break;
        }
        prev_mean_ll = mean_ll;
    }

    let model = GmmModel {
        n_components: k,
        dim,
        means,
        variances,
        mixture_weights: weights,
        feature_mean,
        feature_scale,
        config: cfg.clone(),
    };
    Ok((model, trace))
}

pub fn fit(train: &[TwfrVector], cfg: &GmmFitConfig) -> Result<GmmModel> {
    fit_traced(train, cfg).map(|(m, _)| m)
}

/// Seeded k-means++ seeding over standardized data.
fn kmeans_pp_centers(data: &[Vec<f64>], k: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let n = data.len();
    let dim = data[0].len();
    let mut centers: Vec<usize> = Vec::with_capacity(k);
    centers.push(rng.gen_range(0..n));
    let mut dist2: Vec<f64> = data
        .iter()
        .map(|z| sq_dist(z, &data[centers[0]]))
        .collect();
    while centers.len() < k {
        let total: f64 = dist2.iter().sum();
        let idx = if total > 0.0 {
            let mut target = rng.gen_range(0.0..total);
            let mut pick = n - 1;
            for (i, &d) in dist2.iter().enumerate() {
                if target < d {
                    pick = i;
                    break;
                }
                target -= d;
            }
            pick
        } else {
            // all points coincide with existing centers
            rng.gen_range(0..n)
        };
        centers.push(idx);
        for (d, z) in dist2.iter_mut().zip(data) {
            *d = d.min(sq_dist(z, &data[idx]));
        }
    }
    let mut out = Vec::with_capacity(k * dim);
    for &c in &centers {
        out.extend_from_slice(&data[c]);
    }
    out
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr::Distribution;

    fn vecs(data: &[&[f64]]) -> Vec<TwfrVector> {
        data.iter().map(|v| TwfrVector(v.to_vec())).collect()
    }

    #[test]
    fn single_gaussian_on_pm_one() {
        let train = vecs(&[&[-1.0], &[1.0]]);
        let cfg = GmmFitConfig {
            n_components: 1,
            ..Default::default()
        };
        let model = fit(&train, &cfg).unwrap();
        // raw mean 0, population std 1; standardized data is again {-1, +1}
        assert!((model.feature_mean[0]).abs() < 1e-12);
        assert!((model.feature_scale[0] - 1.0).abs() < 1e-12);
        assert!(model.means[0].abs() < 1e-9);
        assert!((model.variances[0] - 1.0).abs() < 1e-9);
        assert!((model.mixture_weights[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn identical_vectors_floor_the_variance() {
        let row: &[f64] = &[3.0, 7.0];
        let train = vecs(&[row; 5]);
        let cfg = GmmFitConfig {
            n_components: 1,
            ..Default::default()
        };
        let model = fit(&train, &cfg).unwrap();
        for &v in &model.variances {
            assert_eq!(v, cfg.variance_floor);
        }
    }

    #[test]
    fn recovers_two_separated_clusters() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let normal = rand_distr::Normal::new(0.0, 1.0).unwrap();
        let mut train = Vec::new();
        for _ in 0..200 {
            train.push(TwfrVector(vec![10.0 + normal.sample(&mut rng)]));
            train.push(TwfrVector(vec![-10.0 + normal.sample(&mut rng)]));
        }
        let cfg = GmmFitConfig {
            n_components: 2,
            seed: 11,
            ..Default::default()
        };
        let model = fit(&train, &cfg).unwrap();
        // undo standardization to compare against the generating means
        let mut raw: Vec<f64> = model
            .means
            .iter()
            .map(|m| m * model.feature_scale[0] + model.feature_mean[0])
            .collect();
        raw.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert!((raw[0] + 10.0).abs() < 0.5, "got {raw:?}");
        assert!((raw[1] - 10.0).abs() < 0.5, "got {raw:?}");
        for &w in &model.mixture_weights {
            assert!((w - 0.5).abs() < 0.1);
        }
    }

    #[test]
    fn standard_normal_score_at_origin() {
        // build a model directly: K=1, μ=0, σ²=1, identity standardization
        let model = GmmModel {
            n_components: 1,
            dim: 1,
            means: vec![0.0],
            variances: vec![1.0],
            mixture_weights: vec![1.0],
            feature_mean: vec![0.0],
            feature_scale: vec![1.0],
            config: GmmFitConfig::default(),
        };
        let s = model.score(&TwfrVector(vec![0.0])).unwrap();
        assert!((s - 0.5 * LN_2PI).abs() < 1e-12);
        // score grows with |x|
        let mut prev = s;
        for x in [0.5, 1.0, 2.0, 5.0, 20.0] {
            let v = model.score(&TwfrVector(vec![x])).unwrap();
            assert!(v > prev);
            prev = v;
        }
    }

    #[test]
    fn centroid_scores_below_far_offset() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let normal = rand_distr::Normal::new(0.0, 1.0).unwrap();
        let train: Vec<TwfrVector> = (0..100)
            .map(|_| TwfrVector(vec![5.0 + normal.sample(&mut rng), normal.sample(&mut rng)]))
            .collect();
        let cfg = GmmFitConfig::default();
        let model = fit(&train, &cfg).unwrap();
        let centroid = TwfrVector(model.feature_mean.clone());
        let offset = TwfrVector(
            model
                .feature_mean
                .iter()
                .zip(&model.feature_scale)
                .map(|(m, s)| m + 10.0 * s)
                .collect(),
        );
        assert!(model.score(&centroid).unwrap() < model.score(&offset).unwrap());
    }

    #[test]
    fn parameter_count_formula() {
        let mut model = GmmModel {
            n_components: 1,
            dim: 128,
            means: vec![],
            variances: vec![],
            mixture_weights: vec![],
            feature_mean: vec![],
            feature_scale: vec![],
            config: GmmFitConfig::default(),
        };
        assert_eq!(model.parameter_count(), 513);
        model.n_components = 2;
        model.dim = 1;
        assert_eq!(model.parameter_count(), 8);
    }

    #[test]
    fn zero_components_rejected() {
        let cfg = GmmFitConfig {
            n_components: 0,
            ..Default::default()
        };
        assert!(fit(&vecs(&[&[1.0]]), &cfg).is_err());
    }

    #[test]
    fn too_few_samples_rejected() {
        let cfg = GmmFitConfig {
            n_components: 3,
            ..Default::default()
        };
        assert!(matches!(
            fit(&vecs(&[&[1.0], &[2.0]]), &cfg),
            Err(Error::TooFewSamples { .. })
        ));
    }

    #[test]
    fn em_loglik_non_decreasing() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let normal = rand_distr::Normal::new(0.0, 1.0).unwrap();
        for trial in 0..10 {
            let train: Vec<TwfrVector> = (0..80)
                .map(|i| {
                    let shift = if i % 2 == 0 { 2.0 } else { -2.0 };
                    TwfrVector(vec![
                        shift + normal.sample(&mut rng),
                        normal.sample(&mut rng),
                        0.5 * normal.sample(&mut rng),
                    ])
                })
                .collect();
            let cfg = GmmFitConfig {
                n_components: 2,
                seed: trial,
                ..Default::default()
            };
            let (_, trace) = fit_traced(&train, &cfg).unwrap();
            for w in trace.windows(2) {
                assert!(w[1] >= w[0] - 1e-8, "loglik dropped: {w:?}");
            }
        }
    }

    #[test]
    fn deterministic_given_seed() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let normal = rand_distr::Normal::new(0.0, 1.0).unwrap();
        let train: Vec<TwfrVector> = (0..50)
            .map(|_| TwfrVector(vec![normal.sample(&mut rng), normal.sample(&mut rng)]))
            .collect();
        let cfg = GmmFitConfig {
            seed: 99,
            ..Default::default()
        };
        let a = fit(&train, &cfg).unwrap();
        let b = fit(&train, &cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn mixture_weights_sum_to_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let normal = rand_distr::Normal::new(0.0, 1.0).unwrap();
        let train: Vec<TwfrVector> = (0..60)
            .map(|_| TwfrVector(vec![normal.sample(&mut rng)]))
            .collect();
        let cfg = GmmFitConfig {
            n_components: 3,
            ..Default::default()
        };
        let model = fit(&train, &cfg).unwrap();
        let sum: f64 = model.mixture_weights.iter().sum();
        assert!((sum - 1.0).abs() < 1e-9);
    }

    #[test]
    fn standardization_roundtrip_in_score() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let normal = rand_distr::Normal::new(0.0, 1.0).unwrap();
        let train: Vec<TwfrVector> = (0..40)
            .map(|_| TwfrVector(vec![100.0 + 5.0 * normal.sample(&mut rng)]))
            .collect();
        let model = fit(&train, &GmmFitConfig::default()).unwrap();
        let x = TwfrVector(vec![103.0]);
        // scoring pre-standardized input against identity-standardized internals
        let z = (103.0 - model.feature_mean[0]) / model.feature_scale[0];
        let mut ident = model.clone();
        ident.feature_mean = vec![0.0];
        ident.feature_scale = vec![1.0];
        let a = model.score(&x).unwrap();
        let b = ident.score(&TwfrVector(vec![z])).unwrap();
        assert!((a - b).abs() < 1e-9);
    }

    #[test]
    fn save_load_reproduces_scores() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let normal = rand_distr::Normal::new(0.0, 1.0).unwrap();
        let train: Vec<TwfrVector> = (0..30)
            .map(|_| TwfrVector(vec![normal.sample(&mut rng), normal.sample(&mut rng)]))
            .collect();
        let model = fit(&train, &GmmFitConfig::default()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        model.save(&path).unwrap();
        let back = GmmModel::load(&path).unwrap();
        for v in &train {
            let a = model.score(v).unwrap();
            let b = back.score(v).unwrap();
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn score_dimension_mismatch() {
        let train = vecs(&[&[0.0, 1.0], &[1.0, 0.0], &[0.5, 0.5]]);
        let cfg = GmmFitConfig {
            n_components: 1,
            ..Default::default()
        };
        let model = fit(&train, &cfg).unwrap();
        assert!(matches!(
            model.score(&TwfrVector(vec![1.0])),
            Err(Error::DimensionMismatch { .. })
        ));
    }
}
