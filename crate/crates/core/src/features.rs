//! Finger-synergy PCA fitted on the healthy cohort, and per-frame feature vectors.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::interchange::{write_json, N_ANGLES, N_FINGER};
use crate::kinematics::AngleFrame;
use crate::par;

pub const DEFAULT_VARIANCE_THRESHOLD: f64 = 0.90;
pub const MIN_PCA_SAMPLES: usize = 15;

/// Slack when comparing cumulative explained variance against the threshold,
/// so spectra that hit it exactly are not lost to rounding.
const THRESHOLD_SLACK: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PcaModel {
    pub mean: Vec<f64>,
    /// Retained components, one orthonormal row each, sorted by variance.
    pub components: Vec<Vec<f64>>,
    /// Eigenvalues of the sample covariance for every component, descending.
    pub explained_variance: Vec<f64>,
    /// `explained_variance` normalized to sum to one.
    pub explained_variance_ratio: Vec<f64>,
    pub k: usize,
    pub threshold: f64,
}

impl PcaModel {
    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn retained_ratio(&self) -> f64 {
        self.explained_variance_ratio[..self.k].iter().sum()
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.mean.len();
        let ok = self.k >= 1
            && self.components.len() == self.k
            && self.components.iter().all(|c| c.len() == d)
            && self.explained_variance_ratio.len() == d
            && self.explained_variance.len() == d;
        if !ok {
            return Err(Error::InvalidConfig("inconsistent PCA model shape".into()));
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let model: PcaModel = serde_json::from_str(&text).map_err(|e| Error::parse(path, e.to_string()))?;
        model.validate()?;
        Ok(model)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_json(path, self)
    }

    /// PC coefficients: `components . (x - mean)`.
    pub fn project(&self, x: &[f64]) -> Vec<f64> {
        self.components
            .iter()
            .map(|c| c.iter().zip(x).zip(&self.mean).map(|((c, x), m)| c * (x - m)).sum())
            .collect()
    }

    /// `mean + sum_i coeffs[i] * components[i]`.
    pub fn reconstruct(&self, coeffs: &[f64]) -> Vec<f64> {
        let mut out = self.mean.clone();
        for (a, c) in coeffs.iter().zip(&self.components) {
            for (o, ci) in out.iter_mut().zip(c) {
                *o += a * ci;
            }
        }
        out
    }
}

/// Fits PCA to finger-angle rows (degrees, unstandardized).
///
/// The covariance uses the N-1 divisor. `k` is the smallest number of leading
/// components whose explained-variance ratios reach `threshold`. Each
/// component is signed so its largest-magnitude coordinate is positive.
pub fn fit_pca(rows: &[[f64; N_FINGER]], threshold: f64) -> Result<PcaModel> {
    let flat: Vec<&[f64]> = rows.iter().map(|r| r.as_slice()).collect();
    fit_pca_rows(&flat, threshold)
}

/// [`fit_pca`] for rows of any common width.
pub fn fit_pca_rows(rows: &[&[f64]], threshold: f64) -> Result<PcaModel> {
    if !(threshold > 0.0 && threshold <= 1.0) {
        return Err(Error::InvalidConfig(format!("variance threshold must lie in (0, 1], got {threshold}")));
    }
    let n = rows.len();
    if n < MIN_PCA_SAMPLES {
        return Err(Error::InsufficientSamples {
            needed: MIN_PCA_SAMPLES,
            got: n,
        });
    }
    let d = rows[0].len();
    if d == 0 || rows.iter().any(|r| r.len() != d) {
        return Err(Error::InvalidConfig("PCA rows must share a nonzero width".into()));
    }

    let mut mean = vec![0.0; d];
    for r in rows {
        for (m, x) in mean.iter_mut().zip(r.iter()) {
            *m += x;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);

    let centered = DMatrix::from_fn(n, d, |i, j| rows[i][j] - mean[j]);
    let cov = (centered.transpose() * &centered) / (n as f64 - 1.0);

    let scale = rows.iter().flat_map(|r| r.iter()).fold(0.0f64, |a, x| a.max(x.abs()));
    let total: f64 = cov.diagonal().iter().sum();
    if !(total > (1e-12 * scale.max(1.0)).powi(2)) {
        return Err(Error::ZeroVariance);
    }

    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));

    let variance: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i].max(0.0)).collect();
    let sum: f64 = variance.iter().sum();
    let ratio: Vec<f64> = variance.iter().map(|v| v / sum).collect();

    let mut k = d;
    let mut cum = 0.0;
    for (i, r) in ratio.iter().enumerate() {
        cum += r;
        if cum >= threshold - THRESHOLD_SLACK {
            k = i + 1;
            break;
        }
    }

    let components = order[..k]
        .iter()
        .map(|&i| {
            let mut c: Vec<f64> = eig.eigenvectors.column(i).iter().copied().collect();
            let norm = c.iter().map(|x| x * x).sum::<f64>().sqrt();
            c.iter_mut().for_each(|x| *x /= norm);
            apply_sign_rule(&mut c);
            c
        })
        .collect();

    Ok(PcaModel {
        mean,
        components,
        explained_variance: variance,
        explained_variance_ratio: ratio,
        k,
        threshold,
    })
}

/// Flips `v` so its largest-magnitude coordinate (earliest on ties) is positive.
pub fn apply_sign_rule(v: &mut [f64]) {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if x.abs() > v[best].abs() {
            best = i;
        }
    }
    if v[best] < 0.0 {
        v.iter_mut().for_each(|x| *x = -*x);
    }
}

/// PC coefficients of one frame's 14 finger angles.
pub fn project_fingers(model: &PcaModel, fingers: &[f64]) -> Vec<f64> {
    model.project(fingers)
}

/// Which feature space the scorer measures distances in.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum ScoringSpace {
    /// PC coefficients followed by shoulder, elbow, wrist, trunk (9 + 4 on the reference cohort).
    #[default]
    #[serde(rename = "pca13")]
    Pca,
    /// The 18 named angles.
    #[serde(rename = "raw18")]
    Raw,
}

impl FromStr for ScoringSpace {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "pca13" | "pca" => Ok(ScoringSpace::Pca),
            "raw18" | "raw" => Ok(ScoringSpace::Raw),
            other => Err(format!("unknown scoring space '{other}' (expected pca13 or raw18)")),
        }
    }
}

impl fmt::Display for ScoringSpace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ScoringSpace::Pca => "pca13",
            ScoringSpace::Raw => "raw18",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FeatureVector {
    /// PC coefficients of the finger angles.
    pub pcs: Vec<f64>,
    /// The 18 named angles in canonical order.
    pub raw: [f64; N_ANGLES],
}

impl FeatureVector {
    pub fn scoring(&self, space: ScoringSpace) -> Vec<f64> {
        match space {
            ScoringSpace::Pca => self.pcs.iter().chain(&self.raw[N_FINGER..]).copied().collect(),
            ScoringSpace::Raw => self.raw.to_vec(),
        }
    }
}

pub fn assemble(angles: &AngleFrame, model: &PcaModel) -> FeatureVector {
    FeatureVector {
        pcs: project_fingers(model, angles.fingers()),
        raw: angles.angles,
    }
}

pub fn assemble_batch(frames: &[AngleFrame], model: &PcaModel) -> Vec<FeatureVector> {
    par::map(frames, |f| assemble(f, model))
}
