//! Seeded synthetic binary-classification data with a planted classifier.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::problems::Dataset;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LabelModel {
    /// `sign(uᵀw* + noise·z)` with standard normal `z`.
    Linear,
    /// `+1` with probability `½(1 + tanh(uᵀw*/noise))`.
    SigmoidPlanted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSpec {
    pub samples: usize,
    pub dim: usize,
    #[serde(default)]
    pub noise: f64,
    /// Condition number of the feature covariance.
    #[serde(default = "one")]
    pub condition: f64,
    #[serde(default = "linear")]
    pub labels: LabelModel,
    #[serde(default)]
    pub seed: u64,
}

fn one() -> f64 {
    1.0
}

fn linear() -> LabelModel {
    LabelModel::Linear
}

impl SyntheticSpec {
    /// Parses a spec written as top-level TOML keys.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(vec![e.to_string().trim_end().to_string()]))
    }

    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        if self.samples < 2 {
            v.push(format!("synthetic samples must be >= 2, got {}", self.samples));
        }
        if self.dim == 0 {
            v.push("synthetic dim must be positive".into());
        }
        if !(self.condition >= 1.0 && self.condition.is_finite()) {
            v.push(format!("synthetic condition number must be >= 1, got {}", self.condition));
        }
        if !(self.noise >= 0.0 && self.noise.is_finite()) {
            v.push(format!("synthetic noise must be >= 0, got {}", self.noise));
        }
        v
    }
}

/// The planted model drawn for `spec`: feature map rows and the weight vector.
pub struct Planted {
    /// `Q·diag(√d)`, so features `u = map·z` have covariance `Q·diag(d)·Qᵀ`.
    pub feature_map: DMatrix<f64>,
    pub weights: Vec<f64>,
}

/// Eigenvalues log-spaced from 1 down to `1/κ`.
fn spectrum(dim: usize, condition: f64) -> Vec<f64> {
    if dim == 1 {
        return vec![1.0];
    }
    (0..dim)
        .map(|j| condition.powf(-(j as f64) / (dim - 1) as f64))
        .collect()
}

fn planted(spec: &SyntheticSpec, rng: &mut ChaCha8Rng) -> Planted {
    let n = spec.dim;
    let gauss = DMatrix::from_fn(n, n, |_, _| rng.sample::<f64, _>(StandardNormal));
    let q = gauss.qr().q();
    let scales = DVector::from_iterator(n, spectrum(n, spec.condition).into_iter().map(f64::sqrt));
    let feature_map = q * DMatrix::from_diagonal(&scales);
    let mut weights: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
    let norm = weights.iter().map(|w| w * w).sum::<f64>().sqrt();
    weights.iter_mut().for_each(|w| *w /= norm);
    Planted { feature_map, weights }
}

/// Draws the planted model and the dataset. Deterministic per `spec.seed`.
pub fn gen_synthetic_with_model(spec: &SyntheticSpec) -> Result<(Dataset, Planted)> {
    let v = spec.violations();
    if !v.is_empty() {
        return Err(Error::InvalidParameter(v.join("; ")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let model = planted(spec, &mut rng);
    let n = spec.dim;
    let mut rows = Vec::with_capacity(spec.samples);
    let mut labels = Vec::with_capacity(spec.samples);
    for _ in 0..spec.samples {
        let z = DVector::from_iterator(n, (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)));
        let u: Vec<f64> = (&model.feature_map * z).iter().copied().collect();
        let margin: f64 = u.iter().zip(&model.weights).map(|(a, b)| a * b).sum();
        let label = match spec.labels {
            LabelModel::Linear => {
                let noisy = margin + spec.noise * rng.sample::<f64, _>(StandardNormal);
                if noisy >= 0.0 {
                    1.0
                } else {
                    -1.0
                }
            }
            LabelModel::SigmoidPlanted => {
                let p = if spec.noise == 0.0 {
                    if margin >= 0.0 {
                        1.0
                    } else {
                        0.0
                    }
                } else {
                    0.5 * (1.0 + (margin / spec.noise).tanh())
                };
                if rng.random::<f64>() < p {
                    1.0
                } else {
                    -1.0
                }
            }
        };
        rows.push(u);
        labels.push(label);
    }
    Ok((Dataset::from_dense_rows(rows, labels)?, model))
}

pub fn gen_synthetic(spec: &SyntheticSpec) -> Result<Dataset> {
    Ok(gen_synthetic_with_model(spec)?.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec() -> SyntheticSpec {
        SyntheticSpec { samples: 50, dim: 4, noise: 0.0, condition: 10.0, labels: LabelModel::Linear, seed: 9 }
    }

    #[test]
    fn deterministic() {
        assert_eq!(gen_synthetic(&spec()).unwrap(), gen_synthetic(&spec()).unwrap());
        let other = SyntheticSpec { seed: 10, ..spec() };
        assert_ne!(gen_synthetic(&spec()).unwrap(), gen_synthetic(&other).unwrap());
    }

    #[test]
    fn noiseless_labels_follow_planted_weights() {
        let (d, m) = gen_synthetic_with_model(&spec()).unwrap();
        for (i, row) in d.to_dense_rows().iter().enumerate() {
            let margin: f64 = row.iter().zip(&m.weights).map(|(a, b)| a * b).sum();
            assert!(margin * d.label(i) >= 0.0);
        }
    }

    #[test]
    fn rejects_bad_specs() {
        assert!(gen_synthetic(&SyntheticSpec { condition: 0.5, ..spec() }).is_err());
        assert!(gen_synthetic(&SyntheticSpec { samples: 1, ..spec() }).is_err());
    }
}
