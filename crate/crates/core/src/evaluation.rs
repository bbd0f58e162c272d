//! Per-user genuine-only protocol: enrollment on genuine training data,
//! impostor borrowing from other users, quantile thresholds, FAR / FRR /
//! HTER / AUC and DET sweeps.
//!
//! All rates are percentages. A sample is accepted when its score is at
//! least the threshold.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
#[cfg(feature = "serde")]
use serde::{Deserialize, Serialize};

use crate::classifiers::{
    ClassifierConfig, EeParams, IfParams, LofParams, OccKind, OccPipeline, Scorer, Sv1cParams,
};
use crate::error::{Error, Result};
use crate::fusion::{fit_stacker, CalibratedNormalizer, NormMethod, Stacker};
use crate::math::quantile_sorted;
use crate::types::{FeatureVector, RngSeed, UserDataset};

/// Default quantile of genuine training scores used as the threshold.
pub const DEFAULT_THRESHOLD_QUANTILE: f64 = 0.05;
/// Default borrowed impostors as a multiple of the user's genuine test count.
pub const DEFAULT_IMPOSTOR_MULTIPLIER: usize = 10;
pub const DEFAULT_DET_POINTS: usize = 100;

/// Empirical `q`-quantile of genuine training scores (linear interpolation).
pub fn select_threshold(genuine_train_scores: &[f64], q: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&q) {
        return Err(Error::Parameter(format!("threshold quantile {q} outside [0, 1]")));
    }
    if genuine_train_scores.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "threshold selection needs at least 2 scores, got {}",
            genuine_train_scores.len()
        )));
    }
    if let Some(s) = genuine_train_scores.iter().find(|s| !s.is_finite()) {
        return Err(Error::InvalidScore(*s));
    }
    let mut sorted = genuine_train_scores.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok(quantile_sorted(&sorted, q))
}

/// Test-time scores of one user under one method.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct ScoreSet {
    pub genuine: Vec<f64>,
    pub impostor: Vec<f64>,
}

impl ScoreSet {
    pub fn new(genuine: Vec<f64>, impostor: Vec<f64>) -> Result<Self> {
        let s = Self { genuine, impostor };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if self.genuine.is_empty() || self.impostor.is_empty() {
            return Err(Error::InsufficientData(format!(
                "score set needs genuine and impostor scores, got {} and {}",
                self.genuine.len(),
                self.impostor.len()
            )));
        }
        match self.all().find(|s| !s.is_finite()) {
            Some(s) => Err(Error::InvalidScore(s)),
            None => Ok(()),
        }
    }

    fn all(&self) -> impl Iterator<Item = f64> + '_ {
        self.genuine.iter().chain(&self.impostor).copied()
    }

    /// Smallest and largest score over both sides.
    pub fn range(&self) -> (f64, f64) {
        self.all()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), s| (lo.min(s), hi.max(s)))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct Rates {
    pub far: f64,
    pub frr: f64,
}

impl Rates {
    pub fn hter(&self) -> f64 {
        hter(self.far, self.frr)
    }
}

pub fn confusion_rates(s: &ScoreSet, threshold: f64) -> Result<Rates> {
    s.validate()?;
    Ok(rates_unchecked(s, threshold))
}

fn rates_unchecked(s: &ScoreSet, threshold: f64) -> Rates {
    let fa = s.impostor.iter().filter(|&&v| v >= threshold).count();
    let fr = s.genuine.iter().filter(|&&v| v < threshold).count();
    Rates {
        far: 100.0 * fa as f64 / s.impostor.len() as f64,
        frr: 100.0 * fr as f64 / s.genuine.len() as f64,
    }
}

pub fn hter(far: f64, frr: f64) -> f64 {
    (far + frr) / 2.0
}

/// Rank-based AUC in percent: the probability that a genuine score beats
/// an impostor score, ties counting one half.
pub fn auc(s: &ScoreSet) -> Result<f64> {
    s.validate()?;
    let ng = s.genuine.len();
    let ni = s.impostor.len();
    let mut pooled: Vec<(f64, bool)> = s
        .genuine
        .iter()
        .map(|&v| (v, true))
        .chain(s.impostor.iter().map(|&v| (v, false)))
        .collect();
    pooled.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < pooled.len() {
        let mut j = i;
        while j + 1 < pooled.len() && pooled[j + 1].0 == pooled[i].0 {
            j += 1;
        }
        let avg_rank = (i + j) as f64 / 2.0 + 1.0;
        rank_sum += avg_rank * pooled[i..=j].iter().filter(|p| p.1).count() as f64;
        i = j + 1;
    }
    let u = rank_sum - (ng * (ng + 1)) as f64 / 2.0;
    Ok((100.0 * u / (ng as f64 * ni as f64)).clamp(0.0, 100.0))
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct DetPoint {
    pub threshold: f64,
    pub far: f64,
    pub frr: f64,
}

/// `n` increasing thresholds spanning `[lo, hi]`; the last one sits just
/// above `hi` so that it rejects everything.
pub fn det_thresholds(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let mut ts: Vec<f64> = (0..n)
        .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
        .collect();
    if let Some(last) = ts.last_mut() {
        *last = hi.next_up();
    }
    for i in 1..ts.len() {
        if ts[i] < ts[i - 1] {
            ts[i] = ts[i - 1];
        }
    }
    ts
}

pub fn det_curve(s: &ScoreSet, n_points: usize) -> Result<Vec<DetPoint>> {
    s.validate()?;
    if n_points < 2 {
        return Err(Error::Parameter("a DET sweep needs at least 2 points".into()));
    }
    let (lo, hi) = s.range();
    Ok(det_thresholds(lo, hi, n_points)
        .into_iter()
        .map(|t| {
            let r = rates_unchecked(s, t);
            DetPoint {
                threshold: t,
                far: r.far,
                frr: r.frr,
            }
        })
        .collect())
}

/// DET curve averaged over users at shared thresholds spanning the pooled
/// score range.
pub fn mean_det_curve(sets: &[&ScoreSet], n_points: usize) -> Result<Vec<DetPoint>> {
    if sets.is_empty() {
        return Ok(Vec::new());
    }
    if n_points < 2 {
        return Err(Error::Parameter("a DET sweep needs at least 2 points".into()));
    }
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for s in sets {
        s.validate()?;
        let (a, b) = s.range();
        lo = lo.min(a);
        hi = hi.max(b);
    }
    let m = sets.len() as f64;
    Ok(det_thresholds(lo, hi, n_points)
        .into_iter()
        .map(|t| {
            let (far, frr) = sets.iter().fold((0.0, 0.0), |(fa, fr), s| {
                let r = rates_unchecked(s, t);
                (fa + r.far, fr + r.frr)
            });
            DetPoint {
                threshold: t,
                far: far / m,
                frr: frr / m,
            }
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct ProtocolConfig {
    /// Borrowed impostor samples per user; `None` is ten times the user's
    /// genuine test count. Always capped by availability.
    pub impostors_per_user: Option<usize>,
    pub threshold_quantile: f64,
    pub det_points: usize,
    /// Root seed for impostor draws and randomized classifiers.
    pub rng: RngSeed,
}

impl Default for ProtocolConfig {
    fn default() -> Self {
        Self {
            impostors_per_user: None,
            threshold_quantile: DEFAULT_THRESHOLD_QUANTILE,
            det_points: DEFAULT_DET_POINTS,
            rng: RngSeed(0),
        }
    }
}

impl ProtocolConfig {
    pub fn validate(&self) -> Result<()> {
        if self.impostors_per_user == Some(0) {
            return Err(Error::Parameter("impostors_per_user must be positive".into()));
        }
        if !(self.threshold_quantile > 0.0 && self.threshold_quantile < 1.0) {
            return Err(Error::Parameter(format!(
                "threshold quantile {} outside (0, 1)",
                self.threshold_quantile
            )));
        }
        if self.det_points < 2 {
            return Err(Error::Parameter("det_points must be at least 2".into()));
        }
        Ok(())
    }
}

/// Classifier parameters for every kind plus the fusion settings.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct SuiteConfig {
    pub sv1c: Sv1cParams,
    pub ee: EeParams,
    pub iforest: IfParams,
    pub lof: LofParams,
    pub norm: NormMethod,
    pub stacker: Sv1cParams,
}

impl SuiteConfig {
    pub fn classifier(&self, kind: OccKind) -> ClassifierConfig {
        match kind {
            OccKind::Sv1c => ClassifierConfig::Sv1c(self.sv1c),
            OccKind::Ee => ClassifierConfig::Ee(self.ee),
            OccKind::If => ClassifierConfig::If(self.iforest),
            OccKind::Lof => ClassifierConfig::Lof(self.lof),
        }
    }
}

/// What produces a user's final score.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
#[cfg_attr(feature = "serde", serde(tag = "type", rename_all = "snake_case"))]
pub enum Method {
    Single { kind: OccKind },
    /// Weighted or plain mean of calibrated, normalized member scores.
    ScoreFusion {
        members: Vec<OccKind>,
        weights: Option<Vec<f64>>,
    },
    /// Majority vote of members at their own thresholds. The reported score
    /// is the vote margin `(accepts - rejects) / m`, thresholded at `1 / m`.
    DecisionFusion { members: Vec<OccKind> },
    /// One-class SVM over vectors of normalized member scores, accepting on
    /// its own boundary. Calibrated logistic scores saturate in the genuine
    /// lower tail, so a training quantile there cannot separate impostors.
    Stacked { members: Vec<OccKind> },
}

impl Method {
    pub fn single(kind: OccKind) -> Self {
        Method::Single { kind }
    }

    pub fn members(&self) -> Vec<OccKind> {
        match self {
            Method::Single { kind } => vec![*kind],
            Method::ScoreFusion { members, .. }
            | Method::DecisionFusion { members }
            | Method::Stacked { members } => members.clone(),
        }
    }

    pub fn label(&self) -> String {
        let join = |m: &[OccKind]| {
            m.iter()
                .map(|k| k.label())
                .collect::<Vec<_>>()
                .join("+")
        };
        match self {
            Method::Single { kind } => kind.label().to_string(),
            Method::ScoreFusion { members, .. } => format!("score:{}", join(members)),
            Method::DecisionFusion { members } => format!("decision:{}", join(members)),
            Method::Stacked { members } => format!("stack:{}", join(members)),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let members = self.members();
        let distinct: BTreeSet<OccKind> = members.iter().copied().collect();
        if distinct.len() != members.len() {
            return Err(Error::Parameter(format!("{}: repeated member", self.label())));
        }
        match self {
            Method::Single { .. } => Ok(()),
            Method::ScoreFusion { weights, .. } => {
                if !(2..=4).contains(&members.len()) {
                    return Err(Error::Parameter(format!(
                        "{}: fusion needs 2 to 4 members",
                        self.label()
                    )));
                }
                match weights {
                    Some(w)
                        if w.len() != members.len()
                            || w.iter().any(|v| !(*v >= 0.0))
                            || w.iter().sum::<f64>() <= 0.0 =>
                    {
                        Err(Error::Parameter(format!(
                            "{}: weights must be non-negative, one per member, with positive sum",
                            self.label()
                        )))
                    }
                    _ => Ok(()),
                }
            }
            Method::DecisionFusion { .. } | Method::Stacked { .. } => {
                if (2..=4).contains(&members.len()) {
                    Ok(())
                } else {
                    Err(Error::Parameter(format!(
                        "{}: fusion needs 2 to 4 members",
                        self.label()
                    )))
                }
            }
        }
    }
}

/// The four single classifiers followed by the requested fusions.
pub fn standard_methods(score: bool, decision: bool, stacker: bool) -> Vec<Method> {
    let mut out: Vec<Method> = OccKind::ALL.iter().map(|k| Method::single(*k)).collect();
    let subsets = crate::fusion::enumerate_fusions();
    if score {
        out.extend(subsets.iter().map(|m| Method::ScoreFusion {
            members: m.clone(),
            weights: None,
        }));
    }
    if decision {
        out.extend(
            subsets
                .iter()
                .map(|m| Method::DecisionFusion { members: m.clone() }),
        );
    }
    if stacker {
        out.push(Method::Stacked {
            members: OccKind::ALL.to_vec(),
        });
    }
    out
}

/// A model fit observed during the protocol.
#[derive(Debug, Clone, Copy)]
pub enum FitEvent<'a> {
    Classifier {
        user_id: &'a str,
        kind: OccKind,
        samples: &'a [FeatureVector],
    },
    Stacker {
        user_id: &'a str,
        rows: &'a [Vec<f64>],
    },
}

/// Hook called immediately before every fit.
pub trait FitObserver {
    fn on_fit(&self, event: &FitEvent<'_>);
}

#[derive(Debug, Clone, Copy, Default)]
pub struct NoObserver;

impl FitObserver for NoObserver {
    fn on_fit(&self, _: &FitEvent<'_>) {}
}

/// Raw scores of one classifier for one user.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct KindScores {
    pub kind: OccKind,
    pub train: Vec<f64>,
    pub genuine: Vec<f64>,
    pub impostor: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct MethodOutcome {
    pub threshold: f64,
    pub scores: ScoreSet,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct UserEvaluation {
    pub user_id: String,
    pub kinds: Vec<KindScores>,
    /// One outcome per method, in the order the methods were given.
    pub methods: Vec<MethodOutcome>,
}

impl UserEvaluation {
    pub fn kind_scores(&self, kind: OccKind) -> Option<&KindScores> {
        self.kinds.iter().find(|k| k.kind == kind)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct ExcludedUser {
    pub user_id: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq)]
pub enum UserOutcome {
    Evaluated(UserEvaluation),
    Excluded(ExcludedUser),
}

/// Sorts users by id and checks the protocol preconditions.
pub fn prepare_users(datasets: &[UserDataset]) -> Result<Vec<&UserDataset>> {
    if datasets.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "the protocol needs at least 2 users, got {}",
            datasets.len()
        )));
    }
    let mut users: Vec<&UserDataset> = datasets.iter().collect();
    users.sort_by(|a, b| a.user_id.cmp(&b.user_id));
    for w in users.windows(2) {
        if w[0].user_id == w[1].user_id {
            return Err(Error::Parameter(format!("duplicate user id {}", w[0].user_id)));
        }
    }
    let dim = users[0].dim();
    if let Some(u) = users.iter().find(|u| u.dim() != dim) {
        return Err(Error::Shape {
            expected: dim,
            actual: u.dim(),
        }
        .for_user(&u.user_id));
    }
    Ok(users)
}

/// Test samples of other users, shuffled per user with a seeded stream and
/// taken round-robin in user order until `count` are drawn.
pub fn draw_impostors<'a>(
    users: &[&'a UserDataset],
    target: usize,
    count: usize,
    seed: RngSeed,
) -> Vec<&'a FeatureVector> {
    let mut rng = seed.rng();
    let mut pools: Vec<Vec<&FeatureVector>> = users
        .iter()
        .enumerate()
        .filter(|(j, _)| *j != target)
        .map(|(_, u)| {
            let mut pool: Vec<&FeatureVector> = u.test_genuine.iter().collect();
            pool.shuffle(&mut rng);
            pool.reverse();
            pool
        })
        .collect();
    let mut out = Vec::with_capacity(count);
    while out.len() < count && pools.iter().any(|p| !p.is_empty()) {
        for pool in pools.iter_mut() {
            if out.len() == count {
                break;
            }
            if let Some(x) = pool.pop() {
                out.push(x);
            }
        }
    }
    out
}

fn score_all(p: &OccPipeline, xs: &[&FeatureVector]) -> Result<Vec<f64>> {
    xs.iter().map(|x| p.score_slice(x.values())).collect()
}

/// Runs every method for user `index` of the sorted user list. Randomized
/// classifiers are reseeded from the protocol seed so that the result does
/// not depend on evaluation order.
pub fn evaluate_user<O: FitObserver + ?Sized>(
    users: &[&UserDataset],
    index: usize,
    suite: &SuiteConfig,
    methods: &[Method],
    pc: &ProtocolConfig,
    observer: &O,
) -> Result<UserOutcome> {
    let user = users[index];
    let id = user.user_id.as_str();
    if user.test_genuine.is_empty() {
        return Ok(UserOutcome::Excluded(ExcludedUser {
            user_id: id.into(),
            reason: "no genuine test samples".into(),
        }));
    }
    let user_seed = pc.rng.derive(index as u64);
    let wanted = pc
        .impostors_per_user
        .unwrap_or(DEFAULT_IMPOSTOR_MULTIPLIER * user.test_genuine.len());
    let impostors = draw_impostors(users, index, wanted, user_seed.derive(0));
    if impostors.is_empty() {
        return Ok(UserOutcome::Excluded(ExcludedUser {
            user_id: id.into(),
            reason: "no impostor samples available from other users".into(),
        }));
    }
    let genuine: Vec<&FeatureVector> = user.test_genuine.iter().collect();

    let mut needed: Vec<OccKind> = methods.iter().flat_map(Method::members).collect();
    needed.sort();
    needed.dedup();
    let mut kinds = Vec::with_capacity(needed.len());
    for kind in needed {
        let cfg = suite
            .classifier(kind)
            .with_seed(user_seed.derive(1 + kind as u64));
        observer.on_fit(&FitEvent::Classifier {
            user_id: id,
            kind,
            samples: &user.train_genuine,
        });
        let ks = (|| {
            let p = OccPipeline::fit(&user.train_genuine, &cfg)?;
            Ok(KindScores {
                kind,
                train: p.training_scores(&user.train_genuine)?,
                genuine: score_all(&p, &genuine)?,
                impostor: score_all(&p, &impostors)?,
            })
        })()
        .map_err(|e: Error| e.for_user(id))?;
        kinds.push(ks);
    }

    let outcomes = methods
        .iter()
        .map(|m| evaluate_method(m, &kinds, suite, pc, id, observer))
        .collect::<Result<Vec<_>>>()
        .map_err(|e| e.for_user(id))?;
    Ok(UserOutcome::Evaluated(UserEvaluation {
        user_id: id.into(),
        kinds,
        methods: outcomes,
    }))
}

fn evaluate_method<O: FitObserver + ?Sized>(
    method: &Method,
    kinds: &[KindScores],
    suite: &SuiteConfig,
    pc: &ProtocolConfig,
    user_id: &str,
    observer: &O,
) -> Result<MethodOutcome> {
    method.validate()?;
    let members: Vec<&KindScores> = method
        .members()
        .iter()
        .map(|k| {
            kinds
                .iter()
                .find(|s| s.kind == *k)
                .ok_or_else(|| Error::IncompleteFusion(format!("no scores for {k}")))
        })
        .collect::<Result<_>>()?;
    let q = pc.threshold_quantile;
    match method {
        Method::Single { .. } => {
            let k = members[0];
            Ok(MethodOutcome {
                threshold: select_threshold(&k.train, q)?,
                scores: ScoreSet::new(k.genuine.clone(), k.impostor.clone())?,
            })
        }
        Method::ScoreFusion { weights, .. } => {
            let norms = normalizers(&members, suite.norm)?;
            let fuse = |col: fn(&KindScores) -> &Vec<f64>| -> Vec<f64> {
                let n = col(members[0]).len();
                (0..n)
                    .map(|i| {
                        let vals = members.iter().zip(&norms).map(|(k, nz)| nz.apply(col(k)[i]));
                        match weights {
                            Some(w) => {
                                vals.zip(w).map(|(v, wi)| v * wi).sum::<f64>()
                                    / w.iter().sum::<f64>()
                            }
                            None => vals.sum::<f64>() / members.len() as f64,
                        }
                    })
                    .collect()
            };
            Ok(MethodOutcome {
                threshold: select_threshold(&fuse(|k| &k.train), q)?,
                scores: ScoreSet::new(fuse(|k| &k.genuine), fuse(|k| &k.impostor))?,
            })
        }
        Method::DecisionFusion { .. } => {
            let thresholds = members
                .iter()
                .map(|k| select_threshold(&k.train, q))
                .collect::<Result<Vec<_>>>()?;
            let m = members.len() as f64;
            let margin = |col: fn(&KindScores) -> &Vec<f64>| -> Vec<f64> {
                let n = col(members[0]).len();
                (0..n)
                    .map(|i| {
                        members
                            .iter()
                            .zip(&thresholds)
                            .map(|(k, t)| if col(k)[i] >= *t { 1.0 } else { -1.0 })
                            .sum::<f64>()
                            / m
                    })
                    .collect()
            };
            Ok(MethodOutcome {
                threshold: 1.0 / m,
                scores: ScoreSet::new(margin(|k| &k.genuine), margin(|k| &k.impostor))?,
            })
        }
        Method::Stacked { .. } => {
            let norms = normalizers(&members, suite.norm)?;
            let vectors = |col: fn(&KindScores) -> &Vec<f64>| -> Vec<Vec<f64>> {
                let n = col(members[0]).len();
                (0..n)
                    .map(|i| {
                        members
                            .iter()
                            .zip(&norms)
                            .map(|(k, nz)| nz.apply(col(k)[i]))
                            .collect()
                    })
                    .collect()
            };
            let train = vectors(|k| &k.train);
            observer.on_fit(&FitEvent::Stacker {
                user_id,
                rows: &train,
            });
            let stacker = fit_stacker(&train, &suite.stacker)?;
            let score = |rows: Vec<Vec<f64>>, s: &Stacker| -> Result<Vec<f64>> {
                rows.iter().map(|r| s.score_slice(r)).collect()
            };
            Ok(MethodOutcome {
                threshold: stacker.default_threshold(),
                scores: ScoreSet::new(
                    score(vectors(|k| &k.genuine), &stacker)?,
                    score(vectors(|k| &k.impostor), &stacker)?,
                )?,
            })
        }
    }
}

fn normalizers(members: &[&KindScores], method: NormMethod) -> Result<Vec<CalibratedNormalizer>> {
    members
        .iter()
        .map(|k| CalibratedNormalizer::fit(method, &k.train))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct UserMetrics {
    pub user_id: String,
    pub threshold: f64,
    pub far: f64,
    pub frr: f64,
    pub hter: f64,
    pub auc: f64,
    /// `100 - HTER`, reported beside the rank-based AUC for comparison.
    pub auc_from_hter: f64,
    pub n_genuine: usize,
    pub n_impostor: usize,
}

impl UserMetrics {
    pub fn compute(user_id: &str, outcome: &MethodOutcome) -> Result<Self> {
        let r = confusion_rates(&outcome.scores, outcome.threshold)?;
        let h = r.hter();
        Ok(Self {
            user_id: user_id.into(),
            threshold: outcome.threshold,
            far: r.far,
            frr: r.frr,
            hter: h,
            auc: auc(&outcome.scores)?,
            auc_from_hter: 100.0 - h,
            n_genuine: outcome.scores.genuine.len(),
            n_impostor: outcome.scores.impostor.len(),
        })
    }
}

/// Unweighted means over users.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct Aggregate {
    pub far: f64,
    pub frr: f64,
    pub hter: f64,
    pub auc: f64,
    pub auc_from_hter: f64,
    pub n_users: usize,
}

impl Aggregate {
    pub fn from_users(users: &[UserMetrics]) -> Self {
        let n = users.len();
        let mean = |f: fn(&UserMetrics) -> f64| {
            if n == 0 {
                f64::NAN
            } else {
                users.iter().map(f).sum::<f64>() / n as f64
            }
        };
        let far = mean(|u| u.far);
        let frr = mean(|u| u.frr);
        let h = hter(far, frr);
        Self {
            far,
            frr,
            hter: h,
            auc: mean(|u| u.auc),
            auc_from_hter: 100.0 - h,
            n_users: n,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct EvalReport {
    pub method: String,
    /// Sorted by user id.
    pub per_user: Vec<UserMetrics>,
    pub aggregate: Aggregate,
    pub det: Vec<DetPoint>,
    pub excluded: Vec<ExcludedUser>,
}

impl EvalReport {
    pub fn user(&self, user_id: &str) -> Option<&UserMetrics> {
        self.per_user.iter().find(|u| u.user_id == user_id)
    }

    pub fn hter_by_user(&self) -> Vec<(&str, f64)> {
        self.per_user.iter().map(|u| (u.user_id.as_str(), u.hter)).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct SuiteResult {
    /// One report per method, in the order the methods were given.
    pub reports: Vec<EvalReport>,
    /// Raw per-user scores behind the reports, sorted by user id.
    pub users: Vec<UserEvaluation>,
    pub excluded: Vec<ExcludedUser>,
}

impl SuiteResult {
    pub fn report(&self, label: &str) -> Option<&EvalReport> {
        self.reports.iter().find(|r| r.method == label)
    }

    /// Per-sample test scores of each classifier, pooled over users after
    /// normalizing with each user's own calibration. Columns follow `kinds`.
    pub fn pooled_score_table(&self, kinds: &[OccKind], norm: NormMethod) -> Result<Vec<Vec<f64>>> {
        let mut cols = vec![Vec::new(); kinds.len()];
        for u in &self.users {
            for (col, kind) in cols.iter_mut().zip(kinds) {
                let ks = u.kind_scores(*kind).ok_or_else(|| {
                    Error::IncompleteFusion(format!("no scores for {kind}")).for_user(&u.user_id)
                })?;
                let nz = CalibratedNormalizer::fit(norm, &ks.train).map_err(|e| e.for_user(&u.user_id))?;
                col.extend(ks.genuine.iter().chain(&ks.impostor).map(|s| nz.apply(*s)));
            }
        }
        Ok(cols)
    }
}

/// Builds reports from per-user outcomes given in sorted user order.
pub fn assemble_reports(
    methods: &[Method],
    outcomes: Vec<UserOutcome>,
    pc: &ProtocolConfig,
) -> Result<SuiteResult> {
    let mut users = Vec::new();
    let mut excluded = Vec::new();
    for o in outcomes {
        match o {
            UserOutcome::Evaluated(u) => users.push(u),
            UserOutcome::Excluded(e) => excluded.push(e),
        }
    }
    if users.is_empty() {
        return Err(Error::InsufficientData("no user could be evaluated".into()));
    }
    let reports = methods
        .iter()
        .enumerate()
        .map(|(mi, m)| {
            let per_user = users
                .iter()
                .map(|u| UserMetrics::compute(&u.user_id, &u.methods[mi]))
                .collect::<Result<Vec<_>>>()?;
            let sets: Vec<&ScoreSet> = users.iter().map(|u| &u.methods[mi].scores).collect();
            Ok(EvalReport {
                method: m.label(),
                aggregate: Aggregate::from_users(&per_user),
                per_user,
                det: mean_det_curve(&sets, pc.det_points)?,
                excluded: excluded.clone(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SuiteResult {
        reports,
        users,
        excluded,
    })
}

pub fn run_suite(
    datasets: &[UserDataset],
    suite: &SuiteConfig,
    methods: &[Method],
    pc: &ProtocolConfig,
) -> Result<SuiteResult> {
    run_suite_observed(datasets, suite, methods, pc, &NoObserver)
}

pub fn run_suite_observed<O: FitObserver + ?Sized>(
    datasets: &[UserDataset],
    suite: &SuiteConfig,
    methods: &[Method],
    pc: &ProtocolConfig,
    observer: &O,
) -> Result<SuiteResult> {
    pc.validate()?;
    if methods.is_empty() {
        return Err(Error::Parameter("no methods to evaluate".into()));
    }
    for m in methods {
        m.validate()?;
    }
    let users = prepare_users(datasets)?;
    let outcomes = (0..users.len())
        .map(|i| evaluate_user(&users, i, suite, methods, pc, observer))
        .collect::<Result<Vec<_>>>()?;
    assemble_reports(methods, outcomes, pc)
}

/// Evaluates a single method.
pub fn run_protocol(
    datasets: &[UserDataset],
    suite: &SuiteConfig,
    method: &Method,
    pc: &ProtocolConfig,
) -> Result<EvalReport> {
    let mut r = run_suite(datasets, suite, core::slice::from_ref(method), pc)?;
    Ok(r.reports.remove(0))
}
