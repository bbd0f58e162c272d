//! The four one-class classifiers behind one scoring interface.
//!
//! Every model is fitted on genuine samples only and reports a
//! [`GenuinenessScore`] where higher means more genuine:
//!
//! | kind | raw output | score |
//! |------|------------|-------|
//! | SV1C | decision value `f(x)` | `f(x)` |
//! | EE   | Mahalanobis distance `d` | `-d` |
//! | IF   | anomaly score `s` | `-s` |
//! | LOF  | local outlier factor | `-LOF` |

mod envelope;
mod iforest;
mod lof;
mod svm;

use alloc::vec::Vec;
use core::fmt;

#[cfg(feature = "serde")]
use serde::{Deserialize, Serialize};

pub use envelope::{
    binomial, fit_ee, fit_mcd, fit_sample_envelope, min_support_size, EeParams, EllipticEnvelope,
    McdFit, McdMethod, EXHAUSTIVE_LIMIT,
};
pub use iforest::{
    anomaly_score, average_path_length, fit_iforest, IfParams, IsolationForest, IsolationTree,
};
pub use lof::{default_k, fit_lof, LocalOutlierFactor, LofParams, REACH_FLOOR};
pub use svm::{fit_sv1c, Gamma, OneClassSvm, Sv1cParams};

use crate::error::{Error, Result};
use crate::preprocess::{fit_pca, fit_standardizer, PcaProjector, Standardizer};
use crate::types::{common_dim, Decision, FeatureVector, GenuinenessScore, RngSeed};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub enum OccKind {
    #[cfg_attr(feature = "serde", serde(rename = "sv1c"))]
    Sv1c,
    #[cfg_attr(feature = "serde", serde(rename = "ee"))]
    Ee,
    #[cfg_attr(feature = "serde", serde(rename = "if"))]
    If,
    #[cfg_attr(feature = "serde", serde(rename = "lof"))]
    Lof,
}

impl OccKind {
    pub const ALL: [OccKind; 4] = [OccKind::Sv1c, OccKind::Ee, OccKind::If, OccKind::Lof];

    pub fn label(self) -> &'static str {
        match self {
            OccKind::Sv1c => "SV1C",
            OccKind::Ee => "EE",
            OccKind::If => "IF",
            OccKind::Lof => "LOF",
        }
    }

    /// Parses `sv1c`, `ee`, `if` or `lof`, case-insensitively.
    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.label().eq_ignore_ascii_case(s.trim()))
    }
}

impl fmt::Display for OccKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// Non-fatal adjustments made while fitting.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case", tag = "kind"))]
pub enum FitWarning {
    RidgeRegularized { ridge: f64 },
    SampleCovarianceFallback { n: usize, dim: usize },
    SupportSizeRaised { requested: usize, used: usize },
    SubsampleClamped { requested: usize, used: usize },
    NeighborsClamped { requested: usize, used: usize },
}

impl fmt::Display for FitWarning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FitWarning::RidgeRegularized { ridge } => {
                write!(f, "singular robust covariance, added ridge {ridge:e}")
            }
            FitWarning::SampleCovarianceFallback { n, dim } => write!(
                f,
                "{n} samples in {dim} dimensions is too few for MCD, used regularized sample covariance"
            ),
            FitWarning::SupportSizeRaised { requested, used } => {
                write!(f, "MCD subset size raised from {requested} to {used}")
            }
            FitWarning::SubsampleClamped { requested, used } => {
                write!(f, "isolation forest subsample {requested} clamped to {used}")
            }
            FitWarning::NeighborsClamped { requested, used } => {
                write!(f, "LOF neighborhood {requested} clamped to {used}")
            }
        }
    }
}

/// A fitted one-class model.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
#[cfg_attr(feature = "serde", serde(tag = "kind", content = "state", rename_all = "lowercase"))]
pub enum OccModel {
    Sv1c(OneClassSvm),
    Ee(EllipticEnvelope),
    If(IsolationForest),
    Lof(LocalOutlierFactor),
}

/// Anything that maps an input vector to a genuineness score.
pub trait Scorer {
    fn input_dim(&self) -> usize;

    /// Score of a raw slice; callers have checked the dimension.
    fn score_unchecked(&self, x: &[f64]) -> f64;

    fn score_slice(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.input_dim() {
            return Err(Error::Shape {
                expected: self.input_dim(),
                actual: x.len(),
            });
        }
        let s = self.score_unchecked(x);
        if s.is_finite() {
            Ok(s)
        } else {
            Err(Error::InvalidScore(s))
        }
    }
}

impl OccModel {
    pub fn kind(&self) -> OccKind {
        match self {
            OccModel::Sv1c(_) => OccKind::Sv1c,
            OccModel::Ee(_) => OccKind::Ee,
            OccModel::If(_) => OccKind::If,
            OccModel::Lof(_) => OccKind::Lof,
        }
    }

    pub fn warnings(&self) -> &[FitWarning] {
        match self {
            OccModel::Sv1c(_) => &[],
            OccModel::Ee(m) => m.warnings(),
            OccModel::If(m) => m.warnings(),
            OccModel::Lof(m) => m.warnings(),
        }
    }
}

impl Scorer for OccModel {
    fn input_dim(&self) -> usize {
        match self {
            OccModel::Sv1c(m) => m.dim(),
            OccModel::Ee(m) => m.dim(),
            OccModel::If(m) => m.dim(),
            OccModel::Lof(m) => m.dim(),
        }
    }

    fn score_unchecked(&self, x: &[f64]) -> f64 {
        match self {
            OccModel::Sv1c(m) => m.decision_function(x),
            OccModel::Ee(m) => -m.mahalanobis(x),
            OccModel::If(m) => -m.anomaly_score(x),
            OccModel::Lof(m) => -m.lof(x),
        }
    }
}

/// Scores `x` with any model or pipeline.
pub fn score<S: Scorer + ?Sized>(model: &S, x: &FeatureVector) -> Result<GenuinenessScore> {
    GenuinenessScore::new(model.score_slice(x.values())?)
}

/// Accepts when the score reaches `threshold` (inclusive).
pub fn predict<S: Scorer + ?Sized>(model: &S, x: &FeatureVector, threshold: f64) -> Result<Decision> {
    if !threshold.is_finite() {
        return Err(Error::Parameter("threshold must be finite".into()));
    }
    Ok(Decision::from_score(score(model, x)?.value(), threshold))
}

/// Parameters of one classifier kind.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
#[cfg_attr(feature = "serde", serde(tag = "kind", rename_all = "lowercase"))]
pub enum ClassifierConfig {
    Sv1c(Sv1cParams),
    Ee(EeParams),
    If(IfParams),
    Lof(LofParams),
}

impl ClassifierConfig {
    pub fn default_for(kind: OccKind) -> Self {
        match kind {
            OccKind::Sv1c => ClassifierConfig::Sv1c(Sv1cParams::default()),
            OccKind::Ee => ClassifierConfig::Ee(EeParams::default()),
            OccKind::If => ClassifierConfig::If(IfParams::default()),
            OccKind::Lof => ClassifierConfig::Lof(LofParams::default()),
        }
    }

    pub fn kind(&self) -> OccKind {
        match self {
            ClassifierConfig::Sv1c(_) => OccKind::Sv1c,
            ClassifierConfig::Ee(_) => OccKind::Ee,
            ClassifierConfig::If(_) => OccKind::If,
            ClassifierConfig::Lof(_) => OccKind::Lof,
        }
    }

    /// Replaces the seed of randomized classifiers.
    pub fn with_seed(mut self, seed: RngSeed) -> Self {
        match &mut self {
            ClassifierConfig::Ee(p) => p.seed = seed,
            ClassifierConfig::If(p) => p.seed = seed,
            ClassifierConfig::Sv1c(_) | ClassifierConfig::Lof(_) => {}
        }
        self
    }
}

/// Fits a bare model on already preprocessed rows.
pub fn fit_model(xs: &[&[f64]], config: &ClassifierConfig) -> Result<OccModel> {
    Ok(match config {
        ClassifierConfig::Sv1c(p) => OccModel::Sv1c(fit_sv1c(xs, p)?),
        ClassifierConfig::Ee(p) => OccModel::Ee(fit_ee(xs, p)?),
        ClassifierConfig::If(p) => OccModel::If(fit_iforest(xs, p)?),
        ClassifierConfig::Lof(p) => OccModel::Lof(fit_lof(xs, p)?),
    })
}

/// Standardizer, optional PCA (elliptic envelope only) and model, all
/// fitted on the same genuine training set.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct OccPipeline {
    standardizer: Standardizer,
    pca: Option<PcaProjector>,
    model: OccModel,
}

impl OccPipeline {
    /// Fits the whole chain on `train`. The signature admits genuine
    /// training samples only.
    pub fn fit(train: &[FeatureVector], config: &ClassifierConfig) -> Result<Self> {
        common_dim(train)?;
        let standardizer = fit_standardizer(train)?;
        let standardized: Vec<Vec<f64>> = train
            .iter()
            .map(|x| standardizer.transform(x.values()))
            .collect::<Result<_>>()?;

        let (pca, inputs) = match config {
            ClassifierConfig::Ee(EeParams {
                pca_keep: Some(keep),
                ..
            }) => {
                let fvs: Vec<FeatureVector> = standardized
                    .iter()
                    .map(|v| FeatureVector::new(v.clone()))
                    .collect::<Result<_>>()?;
                let pca = fit_pca(&fvs, *keep)?;
                let projected = standardized
                    .iter()
                    .map(|v| pca.transform(v))
                    .collect::<Result<Vec<_>>>()?;
                (Some(pca), projected)
            }
            _ => (None, standardized),
        };
        let rows: Vec<&[f64]> = inputs.iter().map(Vec::as_slice).collect();
        let model = match (config, fit_model(&rows, config)) {
            (ClassifierConfig::Ee(p), Err(Error::InsufficientData(_))) => {
                OccModel::Ee(fit_sample_envelope(&rows, p.contamination)?)
            }
            (_, r) => r?,
        };
        Ok(Self {
            standardizer,
            pca,
            model,
        })
    }

    pub fn kind(&self) -> OccKind {
        self.model.kind()
    }

    pub fn model(&self) -> &OccModel {
        &self.model
    }

    pub fn standardizer(&self) -> &Standardizer {
        &self.standardizer
    }

    pub fn pca(&self) -> Option<&PcaProjector> {
        self.pca.as_ref()
    }

    pub fn warnings(&self) -> &[FitWarning] {
        self.model.warnings()
    }

    /// Maps a raw input into the model's input space.
    pub fn preprocess(&self, x: &[f64]) -> Result<Vec<f64>> {
        let z = self.standardizer.transform(x)?;
        match &self.pca {
            Some(p) => p.transform(&z),
            None => Ok(z),
        }
    }

    /// Genuine scores of the training set, used for threshold selection
    /// and score calibration. LOF and SV1C exclude each training point's own
    /// contribution (its neighborhood membership, its self-kernel term).
    pub fn training_scores(&self, train: &[FeatureVector]) -> Result<Vec<f64>> {
        match &self.model {
            OccModel::Lof(m) if m.n_train() == train.len() => {
                return Ok(m.training_lof().iter().map(|v| -v).collect());
            }
            OccModel::Sv1c(m) if m.n_train() == train.len() => {
                let rows = train
                    .iter()
                    .map(|x| self.preprocess(x.values()))
                    .collect::<Result<Vec<_>>>()?;
                let refs: Vec<&[f64]> = rows.iter().map(Vec::as_slice).collect();
                return Ok(m.self_excluded_scores(&refs));
            }
            _ => {}
        }
        train.iter().map(|x| self.score_slice(x.values())).collect()
    }
}

impl Scorer for OccPipeline {
    fn input_dim(&self) -> usize {
        self.standardizer.dim()
    }

    fn score_unchecked(&self, x: &[f64]) -> f64 {
        match self.preprocess(x) {
            Ok(z) => self.model.score_unchecked(&z),
            Err(_) => f64::NAN,
        }
    }
}

/// Axis-aligned 2-D box.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct GridBounds {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
}

impl GridBounds {
    /// Bounding box of `points` padded by `pad` times its extent per side.
    pub fn around(points: &[FeatureVector], pad: f64) -> Result<Self> {
        if common_dim(points)? != 2 {
            return Err(Error::Dimensionality {
                expected: points[0].dim(),
            });
        }
        let (mut x0, mut x1, mut y0, mut y1) =
            (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
        for p in points {
            let v = p.values();
            x0 = x0.min(v[0]);
            x1 = x1.max(v[0]);
            y0 = y0.min(v[1]);
            y1 = y1.max(v[1]);
        }
        let (dx, dy) = ((x1 - x0).max(1e-9) * pad, (y1 - y0).max(1e-9) * pad);
        Ok(Self {
            x_min: x0 - dx,
            x_max: x1 + dx,
            y_min: y0 - dy,
            y_max: y1 + dy,
        })
    }
}

/// Scores on a regular grid; `scores[iy * resolution + ix]` belongs to
/// `(xs[ix], ys[iy])`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreGrid {
    pub xs: Vec<f64>,
    pub ys: Vec<f64>,
    pub scores: Vec<f64>,
}

impl ScoreGrid {
    pub fn resolution(&self) -> usize {
        self.xs.len()
    }

    pub fn at(&self, ix: usize, iy: usize) -> f64 {
        self.scores[iy * self.xs.len() + ix]
    }

    /// Rows of `(x, y, score)`, x varying fastest.
    pub fn rows(&self) -> impl Iterator<Item = (f64, f64, f64)> + '_ {
        let r = self.xs.len();
        self.scores
            .iter()
            .enumerate()
            .map(move |(i, s)| (self.xs[i % r], self.ys[i / r], *s))
    }

    /// Subtracts a threshold so that the zero level is the boundary.
    pub fn shifted(mut self, threshold: f64) -> Self {
        for s in &mut self.scores {
            *s -= threshold;
        }
        self
    }

    /// Grid cells at or above zero.
    pub fn accepted(&self) -> Vec<bool> {
        self.scores.iter().map(|s| *s >= 0.0).collect()
    }
}

fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
        .collect()
}

/// Evaluates a 2-D scorer on a `resolution x resolution` grid over `bounds`.
/// The level set at the decision threshold is the decision boundary.
pub fn decision_grid<S: Scorer + ?Sized>(
    model: &S,
    bounds: &GridBounds,
    resolution: usize,
) -> Result<ScoreGrid> {
    if model.input_dim() != 2 {
        return Err(Error::Dimensionality {
            expected: model.input_dim(),
        });
    }
    if resolution < 2 {
        return Err(Error::Parameter("grid resolution must be at least 2".into()));
    }
    let xs = linspace(bounds.x_min, bounds.x_max, resolution);
    let ys = linspace(bounds.y_min, bounds.y_max, resolution);
    let mut scores = Vec::with_capacity(resolution * resolution);
    for y in &ys {
        for x in &xs {
            scores.push(model.score_slice(&[*x, *y])?);
        }
    }
    Ok(ScoreGrid { xs, ys, scores })
}
