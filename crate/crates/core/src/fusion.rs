//! Score normalization without impostor data, score- and decision-level
//! fusion, and stacking with a one-class SVM over member scores.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

#[cfg(feature = "serde")]
use serde::{Deserialize, Serialize};

use crate::classifiers::{fit_sv1c, OccKind, OneClassSvm, Scorer, Sv1cParams};
use crate::error::{Error, Result};
use crate::math::{abs, exp, ln, quantile_sorted, sqrt};
use crate::types::Decision;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum NormMethod {
    #[default]
    Logistic,
    Tanh,
    Softsign,
}

impl NormMethod {
    pub fn parse(s: &str) -> Option<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "logistic" => Some(NormMethod::Logistic),
            "tanh" => Some(NormMethod::Tanh),
            "softsign" => Some(NormMethod::Softsign),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct NormalizerConfig {
    pub method: NormMethod,
    /// Slope for logistic and tanh; ignored by softsign.
    pub beta: f64,
}

/// Squashes a raw score onto a bounded scale, strictly increasing:
///
/// * logistic: `1 / (1 + exp(-beta s))`, in `(0, 1)`
/// * tanh: `2 / (1 + exp(-2 beta s)) - 1 = tanh(beta s)`, in `(-1, 1)`
/// * softsign: `s / (1 + |s|)`, in `(-1, 1)`
pub fn normalize(raw: f64, cfg: &NormalizerConfig) -> f64 {
    match cfg.method {
        NormMethod::Logistic => 1.0 / (1.0 + exp(-cfg.beta * raw)),
        // Same function as 2 / (1 + exp(-2 beta s)) - 1, without the
        // cancellation near -1.
        NormMethod::Tanh => libm::tanh(cfg.beta * raw),
        NormMethod::Softsign => raw / (1.0 + abs(raw)),
    }
}

/// Slope and centering offset derived from genuine training scores.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct BetaCalibration {
    pub beta: f64,
    /// Genuine median; subtracted before squashing.
    pub center: f64,
    /// Set when the scores had no spread and `beta` fell back to 1.
    pub degenerate: bool,
}

/// `beta = ln(19) / (q95 - q50)`: after centering at the genuine median the
/// logistic maps the median to 0.5 and the 95th percentile to 0.95.
pub fn calibrate_beta(genuine_train_scores: &[f64]) -> Result<BetaCalibration> {
    if genuine_train_scores.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "beta calibration needs at least 2 scores, got {}",
            genuine_train_scores.len()
        )));
    }
    if let Some(s) = genuine_train_scores.iter().find(|s| !s.is_finite()) {
        return Err(Error::InvalidScore(*s));
    }
    let mut sorted = genuine_train_scores.to_vec();
    sorted.sort_by(f64::total_cmp);
    let q50 = quantile_sorted(&sorted, 0.5);
    let q95 = quantile_sorted(&sorted, 0.95);
    let spread = q95 - q50;
    if spread > 0.0 {
        Ok(BetaCalibration {
            beta: ln(19.0) / spread,
            center: q50,
            degenerate: false,
        })
    } else {
        Ok(BetaCalibration {
            beta: 1.0,
            center: q50,
            degenerate: true,
        })
    }
}

/// A normalizer fitted to one classifier's genuine training scores.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct CalibratedNormalizer {
    pub method: NormMethod,
    pub calibration: BetaCalibration,
}

impl CalibratedNormalizer {
    pub fn fit(method: NormMethod, genuine_train_scores: &[f64]) -> Result<Self> {
        Ok(Self {
            method,
            calibration: calibrate_beta(genuine_train_scores)?,
        })
    }

    pub fn apply(&self, raw: f64) -> f64 {
        normalize(
            raw - self.calibration.center,
            &NormalizerConfig {
                method: self.method,
                beta: self.calibration.beta,
            },
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum FusionLevel {
    #[default]
    Score,
    Decision,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct FusionConfig {
    pub members: Vec<OccKind>,
    pub level: FusionLevel,
    /// Per-member weights for score fusion; `None` is the plain mean.
    pub weights: Option<Vec<f64>>,
}

impl FusionConfig {
    pub fn new(members: Vec<OccKind>, level: FusionLevel) -> Result<Self> {
        let cfg = Self {
            members,
            level,
            weights: None,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(2..=4).contains(&self.members.len()) {
            return Err(Error::Parameter(format!(
                "fusion needs 2 to 4 members, got {}",
                self.members.len()
            )));
        }
        if let Some(w) = &self.weights {
            if w.len() != self.members.len() || w.iter().any(|v| !(*v >= 0.0)) || w.iter().sum::<f64>() <= 0.0 {
                return Err(Error::Parameter(
                    "fusion weights must be non-negative, one per member, with positive sum".into(),
                ));
            }
        }
        Ok(())
    }
}

/// Mean of normalized member scores. A `None` entry is a missing member.
pub fn fuse_scores(normalized: &[Option<f64>]) -> Result<f64> {
    fuse_scores_weighted(normalized, None)
}

pub fn fuse_scores_weighted(normalized: &[Option<f64>], weights: Option<&[f64]>) -> Result<f64> {
    if normalized.is_empty() {
        return Err(Error::IncompleteFusion("no member scores".into()));
    }
    if let Some(i) = normalized.iter().position(Option::is_none) {
        return Err(Error::IncompleteFusion(format!("member {i} has no score")));
    }
    let values = normalized.iter().map(|v| v.unwrap_or_default());
    match weights {
        None => Ok(values.sum::<f64>() / normalized.len() as f64),
        Some(w) => {
            if w.len() != normalized.len() {
                return Err(Error::IncompleteFusion(format!(
                    "{} weights for {} members",
                    w.len(),
                    normalized.len()
                )));
            }
            let total: f64 = w.iter().sum();
            Ok(values.zip(w).map(|(v, wi)| v * wi).sum::<f64>() / total)
        }
    }
}

/// Majority vote; an exact tie rejects.
pub fn fuse_decisions(decisions: &[Decision]) -> Decision {
    let accepts = decisions.iter().filter(|d| d.is_accept()).count();
    if 2 * accepts > decisions.len() {
        Decision::Accept
    } else {
        Decision::Reject
    }
}

/// Every subset of the four classifiers with at least two members: six
/// pairs, four triples and the full set, in a fixed order.
pub fn enumerate_fusions() -> Vec<Vec<OccKind>> {
    let all = OccKind::ALL;
    let mut out = Vec::new();
    for size in 2..=all.len() {
        for mask in 0u32..(1 << all.len()) {
            if mask.count_ones() as usize == size {
                out.push(
                    (0..all.len())
                        .filter(|i| mask & (1 << i) != 0)
                        .map(|i| all[i])
                        .collect(),
                );
            }
        }
    }
    // Within a size, order lexicographically by member position.
    out.sort_by_key(|m: &Vec<OccKind>| (m.len(), m.clone()));
    out
}

/// Pearson correlation matrix; `None` where a column has zero variance.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct CorrelationMatrix {
    pub size: usize,
    pub entries: Vec<Option<f64>>,
}

impl CorrelationMatrix {
    pub fn get(&self, i: usize, j: usize) -> Option<f64> {
        self.entries[i * self.size + j]
    }
}

/// Pearson correlations between score columns (one column per classifier).
pub fn score_correlation(columns: &[Vec<f64>]) -> Result<CorrelationMatrix> {
    let k = columns.len();
    let n = columns.first().map_or(0, Vec::len);
    if n < 2 {
        return Err(Error::InsufficientData("correlation needs at least 2 samples".into()));
    }
    for c in columns {
        if c.len() != n {
            return Err(Error::Shape {
                expected: n,
                actual: c.len(),
            });
        }
        if let Some(v) = c.iter().find(|v| !v.is_finite()) {
            return Err(Error::InvalidScore(*v));
        }
    }
    let centered: Vec<Vec<f64>> = columns
        .iter()
        .map(|c| {
            let m = c.iter().sum::<f64>() / n as f64;
            c.iter().map(|v| v - m).collect()
        })
        .collect();
    let norms: Vec<f64> = centered
        .iter()
        .map(|c| sqrt(c.iter().map(|v| v * v).sum()))
        .collect();
    let mut entries = vec![None; k * k];
    for i in 0..k {
        for j in i..k {
            if norms[i] > 0.0 && norms[j] > 0.0 {
                let r = if i == j {
                    1.0
                } else {
                    let dot: f64 = centered[i].iter().zip(&centered[j]).map(|(a, b)| a * b).sum();
                    (dot / (norms[i] * norms[j])).clamp(-1.0, 1.0)
                };
                entries[i * k + j] = Some(r);
                entries[j * k + i] = Some(r);
            }
        }
    }
    Ok(CorrelationMatrix { size: k, entries })
}

/// Minimum number of genuine score vectors to train a stacker.
pub const STACKER_MIN_SAMPLES: usize = 8;

/// A one-class SVM over vectors of normalized member scores.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct Stacker {
    model: OneClassSvm,
}

impl Stacker {
    pub fn model(&self) -> &OneClassSvm {
        &self.model
    }

    /// Threshold of the underlying SVM's own boundary.
    pub fn default_threshold(&self) -> f64 {
        0.0
    }
}

impl Scorer for Stacker {
    fn input_dim(&self) -> usize {
        self.model.dim()
    }

    fn score_unchecked(&self, x: &[f64]) -> f64 {
        self.model.decision_function(x)
    }
}

pub fn fit_stacker(score_vectors: &[Vec<f64>], params: &Sv1cParams) -> Result<Stacker> {
    if score_vectors.len() < STACKER_MIN_SAMPLES {
        return Err(Error::InsufficientData(format!(
            "stacker needs at least {STACKER_MIN_SAMPLES} genuine score vectors, got {}",
            score_vectors.len()
        )));
    }
    let dim = score_vectors[0].len();
    if let Some(bad) = score_vectors.iter().find(|v| v.len() != dim) {
        return Err(Error::Shape {
            expected: dim,
            actual: bad.len(),
        });
    }
    let rows: Vec<&[f64]> = score_vectors.iter().map(Vec::as_slice).collect();
    Ok(Stacker {
        model: fit_sv1c(&rows, params)?,
    })
}
