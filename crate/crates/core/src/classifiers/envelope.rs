//! Elliptic envelope on a minimum covariance determinant (MCD) estimate.
//!
//! The MCD location and scatter are the mean and covariance (`1 / h`
//! normalization) of the `h`-subset of training points whose covariance
//! has the smallest determinant. Small problems are solved by enumerating
//! every subset; larger ones by FAST-MCD: random `(dim + 1)`-subsets grown
//! until non-singular, followed by concentration steps to a local minimum,
//! keeping the best of several restarts.

use alloc::format;
use alloc::vec::Vec;

use rand::Rng;
#[cfg(feature = "serde")]
use serde::{Deserialize, Serialize};

use super::FitWarning;
use crate::error::{Error, Result};
use crate::linalg::{covariance, mean, trace, Cholesky};
use crate::math::{floor, quantile_sorted, sqrt};
use crate::types::RngSeed;

/// Enumerate all subsets when there are at most this many.
pub const EXHAUSTIVE_LIMIT: u64 = 10_000;
const MAX_C_STEPS: usize = 200;
const RIDGE_TAU: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct EeParams {
    /// Fraction of points in the MCD subset, in `(0.5, 1]`.
    pub support_fraction: f64,
    /// Assumed outlier share, sets [`EllipticEnvelope::default_threshold`].
    pub contamination: f64,
    pub n_restarts: usize,
    pub seed: RngSeed,
    /// Fraction of principal components fed to the envelope; `None` skips PCA.
    pub pca_keep: Option<f64>,
}

impl Default for EeParams {
    fn default() -> Self {
        Self {
            support_fraction: 0.75,
            contamination: 0.1,
            n_restarts: 50,
            seed: RngSeed(0),
            pca_keep: Some(0.30),
        }
    }
}

impl EeParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.support_fraction > 0.5 && self.support_fraction <= 1.0) {
            return Err(Error::Parameter(format!(
                "support fraction {} outside (0.5, 1]",
                self.support_fraction
            )));
        }
        if !(0.0..0.5).contains(&self.contamination) {
            return Err(Error::Parameter(format!(
                "contamination {} outside [0, 0.5)",
                self.contamination
            )));
        }
        if self.n_restarts == 0 {
            return Err(Error::Parameter("n_restarts must be positive".into()));
        }
        if let Some(k) = self.pca_keep {
            if !(k > 0.0 && k <= 1.0) {
                return Err(Error::Parameter(format!("pca_keep {k} outside (0, 1]")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum McdMethod {
    Exhaustive,
    Fast,
    SampleCovariance,
}

/// Raw MCD solution.
#[derive(Debug, Clone, PartialEq)]
pub struct McdFit {
    pub location: Vec<f64>,
    /// Row-major covariance of the selected subset.
    pub covariance: Vec<f64>,
    /// Determinant of `covariance` (0 when singular).
    pub determinant: f64,
    /// Sorted indices of the selected subset.
    pub support: Vec<usize>,
    pub method: McdMethod,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct EllipticEnvelope {
    location: Vec<f64>,
    covariance: Vec<f64>,
    /// Lower Cholesky factor of `covariance` (after any ridge).
    factor: Vec<f64>,
    determinant: f64,
    method: McdMethod,
    default_threshold: f64,
    warnings: Vec<FitWarning>,
}

impl EllipticEnvelope {
    pub fn dim(&self) -> usize {
        self.location.len()
    }

    pub fn location(&self) -> &[f64] {
        &self.location
    }

    pub fn covariance(&self) -> &[f64] {
        &self.covariance
    }

    /// MCD objective: determinant of the raw subset covariance.
    pub fn determinant(&self) -> f64 {
        self.determinant
    }

    pub fn method(&self) -> McdMethod {
        self.method
    }

    pub fn warnings(&self) -> &[FitWarning] {
        &self.warnings
    }

    /// Score threshold below which the `contamination` share of training
    /// points falls.
    pub fn default_threshold(&self) -> f64 {
        self.default_threshold
    }

    pub fn mahalanobis(&self, x: &[f64]) -> f64 {
        let d = self.dim();
        let mut y: Vec<f64> = x.iter().zip(&self.location).map(|(a, b)| a - b).collect();
        for i in 0..d {
            let mut s = y[i];
            for k in 0..i {
                s -= self.factor[i * d + k] * y[k];
            }
            y[i] = s / self.factor[i * d + i];
        }
        sqrt(y.iter().map(|v| v * v).sum())
    }

    /// Builds an envelope from a fixed location and covariance.
    pub fn from_parts(location: Vec<f64>, covariance: Vec<f64>) -> Result<Self> {
        let d = location.len();
        if covariance.len() != d * d {
            return Err(Error::Shape {
                expected: d * d,
                actual: covariance.len(),
            });
        }
        let mut warnings = Vec::new();
        let chol = regularized_cholesky(&covariance, d, &mut warnings);
        let determinant = libm::exp(chol.log_det());
        Ok(Self {
            location,
            covariance,
            factor: chol.factor().to_vec(),
            determinant,
            method: McdMethod::SampleCovariance,
            default_threshold: 0.0,
            warnings,
        })
    }

    fn finish(mut self, xs: &[&[f64]], contamination: f64) -> Self {
        let mut scores: Vec<f64> = xs.iter().map(|x| -self.mahalanobis(x)).collect();
        scores.sort_by(f64::total_cmp);
        self.default_threshold = quantile_sorted(&scores, contamination);
        self
    }
}

fn regularized_cholesky(cov: &[f64], d: usize, warnings: &mut Vec<FitWarning>) -> Cholesky {
    if let Some(c) = Cholesky::new(cov, d) {
        return c;
    }
    let scale = trace(cov, d) / d as f64;
    let scale = if scale > 0.0 { scale } else { 1.0 };
    let mut tau = RIDGE_TAU;
    loop {
        let ridge = tau * scale;
        let mut m = cov.to_vec();
        for i in 0..d {
            m[i * d + i] += ridge;
        }
        if let Some(c) = Cholesky::new(&m, d) {
            warnings.push(FitWarning::RidgeRegularized { ridge });
            return c;
        }
        tau *= 10.0;
    }
}

/// Smallest subset size strictly above `(n + dim + 1) / 2`.
pub fn min_support_size(n: usize, dim: usize) -> usize {
    (n + dim).div_ceil(2) + 1
}

/// `C(n, k)` saturating at `u64::MAX`.
pub fn binomial(n: usize, k: usize) -> u64 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
        if acc > u64::MAX as u128 {
            return u64::MAX;
        }
    }
    acc as u64
}

struct Estimate {
    location: Vec<f64>,
    covariance: Vec<f64>,
    chol: Option<Cholesky>,
    log_det: f64,
}

fn estimate(xs: &[&[f64]], subset: &[usize], dim: usize) -> Estimate {
    let rows = || subset.iter().map(|&i| xs[i]);
    let location = mean(rows(), dim);
    let covariance = covariance(rows(), &location, subset.len() as f64);
    let chol = Cholesky::new(&covariance, dim);
    let log_det = chol.as_ref().map_or(f64::NEG_INFINITY, Cholesky::log_det);
    Estimate {
        location,
        covariance,
        chol,
        log_det,
    }
}

/// Indices of the `h` points closest to `est` in Mahalanobis distance,
/// ties broken by index, returned sorted.
fn concentrate(xs: &[&[f64]], est: &Estimate, h: usize) -> Vec<usize> {
    let chol = est.chol.as_ref().expect("concentration needs a regular estimate");
    let mut d2: Vec<(f64, usize)> = xs
        .iter()
        .enumerate()
        .map(|(i, x)| {
            let c: Vec<f64> = x.iter().zip(&est.location).map(|(a, b)| a - b).collect();
            (chol.quad_form_inv(&c), i)
        })
        .collect();
    d2.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let mut subset: Vec<usize> = d2[..h].iter().map(|p| p.1).collect();
    subset.sort_unstable();
    subset
}

/// Runs concentration steps from `start` until the subset stops changing.
fn c_steps(xs: &[&[f64]], mut subset: Vec<usize>, h: usize, dim: usize) -> (Vec<usize>, Estimate) {
    let mut est = estimate(xs, &subset, dim);
    for _ in 0..MAX_C_STEPS {
        if est.chol.is_none() {
            break;
        }
        let next = concentrate(xs, &est, h);
        if next == subset {
            break;
        }
        let next_est = estimate(xs, &next, dim);
        if next_est.log_det > est.log_det {
            break;
        }
        subset = next;
        est = next_est;
    }
    (subset, est)
}

fn random_start(
    xs: &[&[f64]],
    h: usize,
    dim: usize,
    rng: &mut rand_chacha::ChaCha8Rng,
) -> Vec<usize> {
    let n = xs.len();
    let mut perm: Vec<usize> = (0..n).collect();
    let mut taken = 0usize;
    let mut draw = |perm: &mut Vec<usize>, taken: &mut usize| {
        let j = rng.random_range(*taken..n);
        perm.swap(*taken, j);
        *taken += 1;
    };
    for _ in 0..(dim + 1).min(n) {
        draw(&mut perm, &mut taken);
    }
    loop {
        let mut subset = perm[..taken].to_vec();
        subset.sort_unstable();
        let est = estimate(xs, &subset, dim);
        if est.chol.is_some() {
            return concentrate(xs, &est, h);
        }
        if taken == n {
            // Whole sample singular: fall back to the first h points.
            return (0..h).collect();
        }
        draw(&mut perm, &mut taken);
    }
}

fn next_combination(c: &mut [usize], n: usize) -> bool {
    let k = c.len();
    let mut i = k;
    while i > 0 {
        i -= 1;
        if c[i] != i + n - k {
            c[i] += 1;
            for j in i + 1..k {
                c[j] = c[j - 1] + 1;
            }
            return true;
        }
    }
    false
}

/// Minimum covariance determinant estimate over subsets of size `h`.
pub fn fit_mcd(
    xs: &[&[f64]],
    h: usize,
    n_restarts: usize,
    seed: RngSeed,
) -> Result<McdFit> {
    let n = xs.len();
    let dim = xs.first().map_or(0, |x| x.len());
    if n <= dim + 1 {
        return Err(Error::InsufficientData(format!(
            "MCD needs more than dim + 1 = {} samples, got {n}",
            dim + 1
        )));
    }
    if h > n || h < dim + 1 {
        return Err(Error::Parameter(format!("MCD subset size {h} invalid for n = {n}")));
    }

    let (subset, est, method) = if binomial(n, h) <= EXHAUSTIVE_LIMIT {
        let mut c: Vec<usize> = (0..h).collect();
        let mut best: Option<(Vec<usize>, Estimate)> = None;
        loop {
            let e = estimate(xs, &c, dim);
            if best.as_ref().is_none_or(|(_, b)| e.log_det < b.log_det) {
                best = Some((c.clone(), e));
            }
            if !next_combination(&mut c, n) {
                break;
            }
        }
        let (s, e) = best.expect("at least one subset");
        (s, e, McdMethod::Exhaustive)
    } else {
        let mut rng = seed.rng();
        let mut best: Option<(Vec<usize>, Estimate)> = None;
        for _ in 0..n_restarts {
            let start = random_start(xs, h, dim, &mut rng);
            let (s, e) = c_steps(xs, start, h, dim);
            let better = match &best {
                None => true,
                Some((bs, b)) => e.log_det < b.log_det || (e.log_det == b.log_det && s < *bs),
            };
            if better {
                best = Some((s, e));
            }
        }
        let (s, e) = best.expect("at least one restart");
        (s, e, McdMethod::Fast)
    };
    Ok(McdFit {
        location: est.location,
        covariance: est.covariance,
        determinant: if est.log_det.is_finite() {
            libm::exp(est.log_det)
        } else {
            0.0
        },
        support: subset,
        method,
    })
}

/// Fits the envelope. Scores are minus the Mahalanobis distance under the
/// MCD location and covariance.
pub fn fit_ee(xs: &[&[f64]], params: &EeParams) -> Result<EllipticEnvelope> {
    params.validate()?;
    let n = xs.len();
    let dim = xs.first().map_or(0, |x| x.len());
    if n <= dim + 1 {
        return Err(Error::InsufficientData(format!(
            "elliptic envelope needs more than dim + 1 = {} samples, got {n}",
            dim + 1
        )));
    }
    let mut warnings = Vec::new();
    let requested = floor(params.support_fraction * n as f64) as usize;
    let h_min = min_support_size(n, dim).min(n);
    let h = if requested < h_min {
        warnings.push(FitWarning::SupportSizeRaised {
            requested,
            used: h_min,
        });
        h_min
    } else {
        requested.min(n)
    };
    let mcd = fit_mcd(xs, h, params.n_restarts, params.seed)?;
    let chol = regularized_cholesky(&mcd.covariance, dim, &mut warnings);
    Ok(EllipticEnvelope {
        location: mcd.location,
        covariance: mcd.covariance,
        factor: chol.factor().to_vec(),
        determinant: mcd.determinant,
        method: mcd.method,
        default_threshold: 0.0,
        warnings,
    }
    .finish(xs, params.contamination))
}

/// Envelope on the plain sample mean and covariance (`1 / N`), ridge
/// regularized when singular. Used when there are too few samples for MCD.
pub fn fit_sample_envelope(xs: &[&[f64]], contamination: f64) -> Result<EllipticEnvelope> {
    let dim = xs
        .first()
        .map(|x| x.len())
        .ok_or_else(|| Error::InsufficientData("envelope needs at least one sample".into()))?;
    let location = mean(xs.iter().copied(), dim);
    let cov = covariance(xs.iter().copied(), &location, xs.len() as f64);
    let mut env = EllipticEnvelope::from_parts(location, cov)?;
    env.warnings.insert(0, FitWarning::SampleCovarianceFallback { n: xs.len(), dim });
    Ok(env.finish(xs, contamination))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datastream::standard_normal;
    use alloc::vec;

    #[test]
    fn identity_mahalanobis_is_euclidean() {
        let env = EllipticEnvelope::from_parts(vec![0.0, 0.0], vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        assert_eq!(env.mahalanobis(&[3.0, 4.0]), 5.0);
        assert_eq!(env.mahalanobis(&[0.0, 0.0]), 0.0);
    }

    #[test]
    fn binomials() {
        assert_eq!(binomial(20, 15), 15504);
        assert_eq!(binomial(5, 0), 1);
        assert_eq!(binomial(3, 4), 0);
        assert_eq!(binomial(1000, 500), u64::MAX);
    }

    #[test]
    fn combinations_enumerate_all() {
        let mut c = vec![0, 1];
        let mut count = 1;
        while next_combination(&mut c, 5) {
            count += 1;
        }
        assert_eq!(count, 10);
        assert_eq!(c, vec![3, 4]);
    }

    #[test]
    fn small_problem_uses_exhaustive_search() {
        let mut rng = RngSeed(4).rng();
        let pts: Vec<Vec<f64>> = (0..12)
            .map(|_| vec![standard_normal(&mut rng), standard_normal(&mut rng)])
            .collect();
        let xs: Vec<&[f64]> = pts.iter().map(Vec::as_slice).collect();
        let fit = fit_mcd(&xs, 9, 10, RngSeed(1)).unwrap();
        assert_eq!(fit.method, McdMethod::Exhaustive);
        // FAST-MCD on the same problem must not beat the exhaustive optimum.
        let est = estimate(&xs, &fit.support, 2);
        assert!((libm::exp(est.log_det) - fit.determinant).abs() < 1e-15);
        for start in 0..12 {
            let mut s: Vec<usize> = (0..12).map(|i| (i + start) % 12).take(9).collect();
            s.sort_unstable();
            let (_, e) = c_steps(&xs, s, 9, 2);
            assert!(e.log_det >= est.log_det - 1e-12);
        }
    }

    #[test]
    fn too_few_samples() {
        let p = [0.0, 1.0];
        let q = [1.0, 0.0];
        let r = [2.0, 2.0];
        assert!(matches!(
            fit_ee(&[&p, &q, &r], &EeParams::default()),
            Err(Error::InsufficientData(_))
        ));
    }

    #[test]
    fn singular_data_gets_ridge() {
        let pts: Vec<Vec<f64>> = (0..30).map(|i| vec![i as f64, 2.0 * i as f64]).collect();
        let xs: Vec<&[f64]> = pts.iter().map(Vec::as_slice).collect();
        let env = fit_ee(&xs, &EeParams::default()).unwrap();
        assert!(env
            .warnings()
            .iter()
            .any(|w| matches!(w, FitWarning::RidgeRegularized { .. })));
        assert!(env.mahalanobis(&[1.0, 2.0]).is_finite());
    }

    #[test]
    fn support_size_is_raised_when_too_small() {
        let mut rng = RngSeed(8).rng();
        let pts: Vec<Vec<f64>> = (0..16)
            .map(|_| (0..6).map(|_| standard_normal(&mut rng)).collect())
            .collect();
        let xs: Vec<&[f64]> = pts.iter().map(Vec::as_slice).collect();
        let p = EeParams {
            support_fraction: 0.6,
            ..EeParams::default()
        };
        let env = fit_ee(&xs, &p).unwrap();
        assert!(env.warnings().iter().any(|w| matches!(
            w,
            FitWarning::SupportSizeRaised { requested: 9, used: 12 }
        )));
    }
}
