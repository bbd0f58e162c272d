//! Significance tests over per-user HTER vectors: a Kolmogorov-Smirnov
//! normality check of paired differences, the Wilcoxon signed-rank test and
//! the Friedman test.
//!
//! Notes on the battery:
//!
//! * The KS p-value uses the asymptotic Kolmogorov distribution with mean
//!   and deviation estimated from the data, which makes it conservative.
//!   Results carry [`Caveat::EstimatedParameters`].
//! * Zero differences are dropped before the signed-rank test.
//! * Friedman is general in the number of treatments but applied pairwise,
//!   where it reduces to a sign test on win counts.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

#[cfg(feature = "serde")]
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evaluation::EvalReport;
use crate::math::{abs, sqrt};
use crate::special::{chi_square_sf, kolmogorov_sf, normal_cdf};

pub const MIN_PAIRED: usize = 5;
/// Largest sample size with an exact signed-rank p-value.
pub const WILCOXON_EXACT_MAX: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Caveat {
    /// Reference distribution parameters were estimated from the sample.
    EstimatedParameters,
    /// p-value from a normal approximation rather than exact enumeration.
    NormalApproximation,
    /// Fewer non-zero differences than the recommended minimum.
    SmallSample,
    /// No rank variation at all; the statistic is 0 by convention.
    NoVariation,
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct TestResult {
    pub statistic: f64,
    pub p_value: f64,
    pub reject_at_05: bool,
    pub caveat: Option<Caveat>,
}

impl TestResult {
    fn new(statistic: f64, p_value: f64, caveat: Option<Caveat>) -> Self {
        let p_value = p_value.clamp(0.0, 1.0);
        Self {
            statistic,
            p_value,
            reject_at_05: p_value < 0.05,
            caveat,
        }
    }
}

/// Per-user values of two methods, aligned by user.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct PairedSample {
    a: Vec<f64>,
    b: Vec<f64>,
}

impl PairedSample {
    pub fn new(a: Vec<f64>, b: Vec<f64>) -> Result<Self> {
        if a.len() != b.len() {
            return Err(Error::Alignment(format!(
                "paired samples have lengths {} and {}",
                a.len(),
                b.len()
            )));
        }
        if a.len() < MIN_PAIRED {
            return Err(Error::InsufficientData(format!(
                "paired tests need at least {MIN_PAIRED} users, got {}",
                a.len()
            )));
        }
        if let Some(v) = a.iter().chain(&b).find(|v| !v.is_finite()) {
            return Err(Error::InvalidScore(*v));
        }
        Ok(Self { a, b })
    }

    pub fn a(&self) -> &[f64] {
        &self.a
    }

    pub fn b(&self) -> &[f64] {
        &self.b
    }

    pub fn len(&self) -> usize {
        self.a.len()
    }

    pub fn is_empty(&self) -> bool {
        self.a.is_empty()
    }

    /// `a - b` per user.
    pub fn differences(&self) -> Vec<f64> {
        self.a.iter().zip(&self.b).map(|(x, y)| x - y).collect()
    }
}

/// Average (mid) ranks starting at 1, and the sizes of tie groups.
pub fn average_ranks(values: &[f64]) -> (Vec<f64>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&i, &j| values[i].total_cmp(&values[j]));
    let mut ranks = vec![0.0; values.len()];
    let mut ties = Vec::new();
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && values[idx[j + 1]] == values[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = r;
        }
        if j > i {
            ties.push(j - i + 1);
        }
        i = j + 1;
    }
    (ranks, ties)
}

fn mean_std(d: &[f64]) -> (f64, f64) {
    let n = d.len() as f64;
    let mu = d.iter().sum::<f64>() / n;
    let var = d.iter().map(|x| (x - mu) * (x - mu)).sum::<f64>() / (n - 1.0);
    (mu, sqrt(var))
}

/// One-sample KS statistic of `d` against the normal distribution with the
/// given mean and deviation.
pub fn ks_statistic_normal(d: &[f64], mu: f64, sigma: f64) -> f64 {
    let mut sorted = d.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    sorted
        .iter()
        .enumerate()
        .map(|(i, x)| {
            let f = normal_cdf((x - mu) / sigma);
            (f - i as f64 / n).max((i + 1) as f64 / n - f)
        })
        .fold(0.0, f64::max)
        .clamp(0.0, 1.0)
}

/// KS test of normality for paired differences, with mean and (n - 1)
/// deviation estimated from the sample.
pub fn ks_normality(d: &[f64]) -> Result<TestResult> {
    if d.len() < MIN_PAIRED {
        return Err(Error::InsufficientData(format!(
            "KS needs at least {MIN_PAIRED} values, got {}",
            d.len()
        )));
    }
    if let Some(v) = d.iter().find(|v| !v.is_finite()) {
        return Err(Error::InvalidScore(*v));
    }
    let (mu, sigma) = mean_std(d);
    if !(sigma > 0.0) {
        return Err(Error::Degenerate("KS: differences have zero variance".into()));
    }
    let stat = ks_statistic_normal(d, mu, sigma);
    let rn = sqrt(d.len() as f64);
    let p = kolmogorov_sf((rn + 0.12 + 0.11 / rn) * stat);
    Ok(TestResult::new(stat, p, Some(Caveat::EstimatedParameters)))
}

/// Largest gap between the empirical CDFs of two samples.
pub fn ks_two_sample_statistic(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.is_empty() || y.is_empty() {
        return Err(Error::InsufficientData("KS needs two non-empty samples".into()));
    }
    let mut a = x.to_vec();
    let mut b = y.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j, mut d) = (0, 0, 0.0f64);
    while i < a.len() && j < b.len() {
        let v = a[i].min(b[j]);
        while i < a.len() && a[i] <= v {
            i += 1;
        }
        while j < b.len() && b[j] <= v {
            j += 1;
        }
        d = d.max(abs(i as f64 / na - j as f64 / nb));
    }
    Ok(d)
}

pub fn wilcoxon_signed_rank(p: &PairedSample) -> Result<TestResult> {
    wilcoxon_differences(&p.differences())
}

/// Two-sided signed-rank test of zero median difference. The statistic is
/// `min(W+, W-)`; the p-value is exact up to [`WILCOXON_EXACT_MAX`] non-zero
/// differences and a tie-corrected normal approximation with continuity
/// correction above.
pub fn wilcoxon_differences(d: &[f64]) -> Result<TestResult> {
    if let Some(v) = d.iter().find(|v| !v.is_finite()) {
        return Err(Error::InvalidScore(*v));
    }
    let nz: Vec<f64> = d.iter().copied().filter(|v| *v != 0.0).collect();
    if nz.is_empty() {
        return Err(Error::Degenerate("Wilcoxon: all differences are zero".into()));
    }
    let n = nz.len();
    let mags: Vec<f64> = nz.iter().map(|v| abs(*v)).collect();
    let (ranks, ties) = average_ranks(&mags);
    let w_plus: f64 = nz.iter().zip(&ranks).filter(|(v, _)| **v > 0.0).map(|(_, r)| r).sum();
    let total = (n * (n + 1)) as f64 / 2.0;
    let w = w_plus.min(total - w_plus);

    if n <= WILCOXON_EXACT_MAX {
        let p = 2.0 * exact_signed_rank_cdf(&ranks, w);
        let caveat = (n < MIN_PAIRED).then_some(Caveat::SmallSample);
        return Ok(TestResult::new(w, p, caveat));
    }
    let nf = n as f64;
    let tie_term: f64 = ties.iter().map(|&t| (t * t * t - t) as f64).sum::<f64>() / 48.0;
    let var = nf * (nf + 1.0) * (2.0 * nf + 1.0) / 24.0 - tie_term;
    let z = ((w - total / 2.0 + 0.5).min(0.0)) / sqrt(var);
    Ok(TestResult::new(w, 2.0 * normal_cdf(z), Some(Caveat::NormalApproximation)))
}

/// `P(W+ <= w)` under the null, counting all sign patterns. Mid-ranks are
/// doubled to stay on an integer lattice.
fn exact_signed_rank_cdf(ranks: &[f64], w: f64) -> f64 {
    let doubled: Vec<usize> = ranks.iter().map(|r| libm::round(2.0 * r) as usize).collect();
    let max: usize = doubled.iter().sum();
    let mut counts = vec![0.0f64; max + 1];
    counts[0] = 1.0;
    let mut reach = 0;
    for &r in &doubled {
        for s in (0..=reach).rev() {
            if counts[s] > 0.0 {
                counts[s + r] += counts[s];
            }
        }
        reach += r;
    }
    let limit = libm::round(2.0 * w) as usize;
    let hits: f64 = counts[..=limit.min(max)].iter().sum();
    hits / libm::pow(2.0, ranks.len() as f64)
}

/// Friedman test on a users x treatments matrix (one row per user).
///
/// Ranks are taken within each row with mid-ranks for ties and the
/// statistic is tie corrected. If every row is constant the statistic is 0
/// with p = 1 and [`Caveat::NoVariation`].
pub fn friedman(matrix: &[Vec<f64>]) -> Result<TestResult> {
    let n = matrix.len();
    let k = matrix.first().map_or(0, Vec::len);
    if k < 2 {
        return Err(Error::InsufficientData("Friedman needs at least 2 treatments".into()));
    }
    if n < MIN_PAIRED {
        return Err(Error::InsufficientData(format!(
            "Friedman needs at least {MIN_PAIRED} users, got {n}"
        )));
    }
    let mut rank_sums = vec![0.0; k];
    let mut tie_sum = 0.0;
    for row in matrix {
        if row.len() != k {
            return Err(Error::Shape {
                expected: k,
                actual: row.len(),
            });
        }
        if let Some(v) = row.iter().find(|v| !v.is_finite()) {
            return Err(Error::InvalidScore(*v));
        }
        let (ranks, ties) = average_ranks(row);
        for (s, r) in rank_sums.iter_mut().zip(&ranks) {
            *s += r;
        }
        tie_sum += ties.iter().map(|&t| (t * t * t - t) as f64).sum::<f64>();
    }
    let (nf, kf) = (n as f64, k as f64);
    let correction = 1.0 - tie_sum / (nf * (kf * kf * kf - kf));
    if correction <= 1e-12 {
        return Ok(TestResult::new(0.0, 1.0, Some(Caveat::NoVariation)));
    }
    let centre = (kf + 1.0) / 2.0;
    let spread: f64 = rank_sums
        .iter()
        .map(|s| {
            let d = s / nf - centre;
            d * d
        })
        .sum();
    let stat = 12.0 * nf / (kf * (kf + 1.0)) * spread / correction;
    Ok(TestResult::new(stat, chi_square_sf(stat, kf - 1.0), None))
}

/// A battery cell: a test result or the reason no test could be run.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum BatteryEntry {
    Test(TestResult),
    Degenerate(String),
}

impl BatteryEntry {
    pub fn p_value(&self) -> Option<f64> {
        match self {
            BatteryEntry::Test(t) => Some(t.p_value),
            BatteryEntry::Degenerate(_) => None,
        }
    }

    fn from_result(r: Result<TestResult>) -> Result<Self> {
        match r {
            Ok(t) => Ok(BatteryEntry::Test(t)),
            Err(Error::Degenerate(msg)) => Ok(BatteryEntry::Degenerate(msg)),
            Err(e) => Err(e),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct BatteryRow {
    pub a: String,
    pub b: String,
    pub ks: BatteryEntry,
    pub wilcoxon: BatteryEntry,
    pub friedman: BatteryEntry,
}

/// Runs KS, Wilcoxon and Friedman on per-user HTERs for each pair of
/// methods, named by report label.
pub fn pairwise_battery(reports: &[EvalReport], pairs: &[(String, String)]) -> Result<Vec<BatteryRow>> {
    let find = |label: &str| {
        reports
            .iter()
            .find(|r| r.method == label)
            .ok_or_else(|| Error::Alignment(format!("no report for method {label}")))
    };
    pairs
        .iter()
        .map(|(la, lb)| {
            let (ra, rb) = (find(la)?, find(lb)?);
            let (ua, ub) = (ra.hter_by_user(), rb.hter_by_user());
            let aligned = ua.len() == ub.len() && ua.iter().zip(&ub).all(|(x, y)| x.0 == y.0);
            if !aligned {
                return Err(Error::Alignment(format!(
                    "{la} and {lb} cover different user sets"
                )));
            }
            let sample = PairedSample::new(
                ua.iter().map(|u| u.1).collect(),
                ub.iter().map(|u| u.1).collect(),
            )?;
            let d = sample.differences();
            let matrix: Vec<Vec<f64>> = sample
                .a()
                .iter()
                .zip(sample.b())
                .map(|(x, y)| vec![*x, *y])
                .collect();
            Ok(BatteryRow {
                a: la.clone(),
                b: lb.clone(),
                ks: BatteryEntry::from_result(ks_normality(&d))?,
                wilcoxon: BatteryEntry::from_result(wilcoxon_signed_rank(&sample))?,
                friedman: BatteryEntry::from_result(friedman(&matrix))?,
            })
        })
        .collect()
}
