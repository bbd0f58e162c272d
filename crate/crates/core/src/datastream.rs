//! Synthetic data, sliding-window segmentation and per-window features.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
#[cfg(feature = "serde")]
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Cholesky;
use crate::math::{abs, floor, ln, quantile_sorted, sqrt};
use crate::types::{FeatureVector, RngSeed, UserDataset};

/// Number of statistics extracted per channel by [`extract_features`].
pub const FEATURES_PER_CHANNEL: usize = 8;

/// Statistic names in the order [`extract_features`] emits them.
pub const FEATURE_NAMES: [&str; FEATURES_PER_CHANNEL] = [
    "mean",
    "std",
    "min",
    "max",
    "median",
    "iqr",
    "mean_abs_change",
    "zero_crossings",
];

/// A multi-channel sensor recording.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct SensorSeries {
    /// Seconds, non-decreasing.
    pub timestamps: Vec<f64>,
    /// One row of channel readings per timestamp.
    pub channels: Vec<Vec<f64>>,
    /// Samples per second; `0.0` when unknown.
    pub rate_hint: f64,
}

impl SensorSeries {
    pub fn new(timestamps: Vec<f64>, channels: Vec<Vec<f64>>, rate_hint: f64) -> Result<Self> {
        if timestamps.len() != channels.len() {
            return Err(Error::Shape {
                expected: timestamps.len(),
                actual: channels.len(),
            });
        }
        if let Some(first) = channels.first() {
            let arity = first.len();
            if let Some(bad) = channels.iter().find(|r| r.len() != arity) {
                return Err(Error::Shape {
                    expected: arity,
                    actual: bad.len(),
                });
            }
        }
        if timestamps.windows(2).any(|w| !(w[1] >= w[0])) {
            return Err(Error::Parameter("timestamps must be non-decreasing".into()));
        }
        Ok(Self {
            timestamps,
            channels,
            rate_hint,
        })
    }

    /// A series sampled at `rate` Hz starting at `t = 0`.
    pub fn uniform(channels: Vec<Vec<f64>>, rate: f64) -> Result<Self> {
        let timestamps = (0..channels.len()).map(|i| i as f64 / rate).collect();
        Self::new(timestamps, channels, rate)
    }

    pub fn len(&self) -> usize {
        self.timestamps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.timestamps.is_empty()
    }

    pub fn n_channels(&self) -> usize {
        self.channels.first().map_or(0, Vec::len)
    }

    fn sample_period(&self) -> f64 {
        if self.rate_hint > 0.0 {
            return 1.0 / self.rate_hint;
        }
        let mut diffs: Vec<f64> = self
            .timestamps
            .windows(2)
            .map(|w| w[1] - w[0])
            .filter(|d| *d > 0.0)
            .collect();
        if diffs.is_empty() {
            return 0.0;
        }
        diffs.sort_by(f64::total_cmp);
        diffs[diffs.len() / 2]
    }

    /// Covered time span: last minus first timestamp plus one sample period.
    pub fn duration(&self) -> f64 {
        match (self.timestamps.first(), self.timestamps.last()) {
            (Some(a), Some(b)) => b - a + self.sample_period(),
            _ => 0.0,
        }
    }

    /// Channel `c` as a contiguous signal.
    pub fn channel(&self, c: usize) -> Vec<f64> {
        self.channels.iter().map(|r| r[c]).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct WindowSpec {
    pub length_s: f64,
    pub step_s: f64,
}

impl WindowSpec {
    pub fn new(length_s: f64, step_s: f64) -> Result<Self> {
        if !(length_s > 0.0) || !(step_s > 0.0) || step_s > length_s {
            return Err(Error::Parameter(format!(
                "window needs 0 < step ({step_s}) <= length ({length_s})"
            )));
        }
        Ok(Self { length_s, step_s })
    }

    /// Number of windows that fit in `duration` seconds.
    pub fn count(&self, duration: f64) -> usize {
        if duration + 1e-9 < self.length_s {
            return 0;
        }
        floor((duration - self.length_s) / self.step_s + 1e-9) as usize + 1
    }
}

impl Default for WindowSpec {
    fn default() -> Self {
        Self {
            length_s: 10.0,
            step_s: 5.0,
        }
    }
}

/// Splits `series` into windows `[t0 + i*step, t0 + i*step + length)`.
///
/// A series shorter than one window yields no windows.
pub fn sliding_windows(series: &SensorSeries, spec: &WindowSpec) -> Vec<SensorSeries> {
    let count = spec.count(series.duration());
    let Some(&t0) = series.timestamps.first() else {
        return Vec::new();
    };
    let mut out = Vec::with_capacity(count);
    let mut lo = 0usize;
    for i in 0..count {
        let start = t0 + i as f64 * spec.step_s;
        let end = start + spec.length_s;
        while lo < series.len() && series.timestamps[lo] < start - 1e-9 {
            lo += 1;
        }
        let mut hi = lo;
        while hi < series.len() && series.timestamps[hi] < end - 1e-9 {
            hi += 1;
        }
        out.push(SensorSeries {
            timestamps: series.timestamps[lo..hi].to_vec(),
            channels: series.channels[lo..hi].to_vec(),
            rate_hint: series.rate_hint,
        });
    }
    out
}

/// Eight statistics per channel, concatenated in channel order: mean,
/// population standard deviation, min, max, median, interquartile range,
/// mean absolute first difference, and zero-crossing count of the
/// mean-centered signal.
pub fn extract_features(window: &SensorSeries) -> Result<FeatureVector> {
    if window.is_empty() || window.n_channels() == 0 {
        return Err(Error::DegenerateWindow("window has no samples".into()));
    }
    let mut out = Vec::with_capacity(window.n_channels() * FEATURES_PER_CHANNEL);
    for c in 0..window.n_channels() {
        let signal = window.channel(c);
        out.extend_from_slice(&channel_features(&signal));
    }
    FeatureVector::new(out)
}

fn channel_features(x: &[f64]) -> [f64; FEATURES_PER_CHANNEL] {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let mut sorted = x.to_vec();
    sorted.sort_by(f64::total_cmp);
    let min = sorted[0];
    let max = sorted[sorted.len() - 1];
    let median = quantile_sorted(&sorted, 0.5);
    let iqr = quantile_sorted(&sorted, 0.75) - quantile_sorted(&sorted, 0.25);
    let mac = if x.len() > 1 {
        x.windows(2).map(|w| abs(w[1] - w[0])).sum::<f64>() / (x.len() - 1) as f64
    } else {
        0.0
    };
    let scale = abs(min).max(abs(max)).max(1.0);
    let mut crossings = 0usize;
    let mut last_sign = 0i8;
    for v in x {
        let c = v - mean;
        let s = if abs(c) <= 1e-12 * scale {
            0
        } else if c > 0.0 {
            1
        } else {
            -1
        };
        if s != 0 {
            if last_sign != 0 && s != last_sign {
                crossings += 1;
            }
            last_sign = s;
        }
    }
    [
        mean,
        sqrt(var),
        min,
        max,
        median,
        iqr,
        mac,
        crossings as f64,
    ]
}

/// One Gaussian component of a synthetic mixture.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct GaussianMode {
    pub mean: Vec<f64>,
    /// Row-major `dim * dim` covariance.
    pub cov: Vec<f64>,
    pub weight: f64,
}

impl GaussianMode {
    pub fn isotropic(mean: Vec<f64>, std: f64, weight: f64) -> Self {
        let d = mean.len();
        let mut cov = vec![0.0; d * d];
        for i in 0..d {
            cov[i * d + i] = std * std;
        }
        Self { mean, cov, weight }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum SynthMode {
    Unimodal,
    Multimodal,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct SynthSpec {
    pub mode: SynthMode,
    pub n_genuine: usize,
    pub modes: Vec<GaussianMode>,
    pub outlier_fraction: f64,
    pub seed: RngSeed,
}

impl SynthSpec {
    pub fn dim(&self) -> usize {
        self.modes.first().map_or(0, |m| m.mean.len())
    }

    /// Two-dimensional unimodal spec: standard normal at the origin.
    pub fn unimodal_2d(n_genuine: usize, outlier_fraction: f64, seed: RngSeed) -> Self {
        Self {
            mode: SynthMode::Unimodal,
            n_genuine,
            modes: vec![GaussianMode::isotropic(vec![0.0, 0.0], 1.0, 1.0)],
            outlier_fraction,
            seed,
        }
    }

    /// Two-dimensional bimodal spec: equal-weight unit Gaussians at
    /// `(-d, -d)` and `(d, d)`.
    pub fn bimodal_2d(n_genuine: usize, offset: f64, outlier_fraction: f64, seed: RngSeed) -> Self {
        Self {
            mode: SynthMode::Multimodal,
            n_genuine,
            modes: vec![
                GaussianMode::isotropic(vec![-offset, -offset], 1.0, 0.5),
                GaussianMode::isotropic(vec![offset, offset], 1.0, 0.5),
            ],
            outlier_fraction,
            seed,
        }
    }

    fn validate(&self) -> Result<Vec<Cholesky>> {
        if self.modes.is_empty() {
            return Err(Error::Spec("at least one mode is required".into()));
        }
        if self.mode == SynthMode::Unimodal && self.modes.len() != 1 {
            return Err(Error::Spec(format!(
                "unimodal spec has {} modes",
                self.modes.len()
            )));
        }
        if !(0.0..1.0).contains(&self.outlier_fraction) {
            return Err(Error::Spec(format!(
                "outlier fraction {} outside [0, 1)",
                self.outlier_fraction
            )));
        }
        let total: f64 = self.modes.iter().map(|m| m.weight).sum();
        if abs(total - 1.0) > 1e-9 || self.modes.iter().any(|m| !(m.weight >= 0.0)) {
            return Err(Error::Spec(format!("mode weights sum to {total}, not 1")));
        }
        let d = self.dim();
        if d == 0 {
            return Err(Error::Spec("modes need a non-empty mean".into()));
        }
        self.modes
            .iter()
            .enumerate()
            .map(|(i, m)| {
                if m.mean.len() != d || m.cov.len() != d * d {
                    return Err(Error::Spec(format!("mode {i} has inconsistent dimension")));
                }
                for r in 0..d {
                    for c in 0..r {
                        if abs(m.cov[r * d + c] - m.cov[c * d + r]) > 1e-12 {
                            return Err(Error::Spec(format!("mode {i} covariance is not symmetric")));
                        }
                    }
                }
                Cholesky::new(&m.cov, d).ok_or_else(|| {
                    Error::Spec(format!("mode {i} covariance is not positive definite"))
                })
            })
            .collect()
    }
}

/// Standard normal draw (Box-Muller).
pub(crate) fn standard_normal(rng: &mut ChaCha8Rng) -> f64 {
    loop {
        let u: f64 = rng.random();
        let v: f64 = rng.random();
        if u > 0.0 {
            return sqrt(-2.0 * ln(u)) * libm::cos(core::f64::consts::TAU * v);
        }
    }
}

fn sample_gaussian(rng: &mut ChaCha8Rng, mean: &[f64], chol: &Cholesky) -> Vec<f64> {
    let d = mean.len();
    let z: Vec<f64> = (0..d).map(|_| standard_normal(rng)).collect();
    let l = chol.factor();
    (0..d)
        .map(|i| mean[i] + (0..=i).map(|k| l[i * d + k] * z[k]).sum::<f64>())
        .collect()
}

/// Draws genuine samples from the mixture and outliers uniformly from a box
/// three times the extent of the genuine sample, centered on it.
///
/// The outlier count is `round(outlier_fraction * n_genuine)`.
pub fn generate_synthetic(spec: &SynthSpec) -> Result<(Vec<FeatureVector>, Vec<FeatureVector>)> {
    let chols = spec.validate()?;
    let d = spec.dim();
    let mut rng = spec.seed.rng();
    let mut genuine = Vec::with_capacity(spec.n_genuine);
    for _ in 0..spec.n_genuine {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut pick = spec.modes.len() - 1;
        for (i, m) in spec.modes.iter().enumerate() {
            acc += m.weight;
            if u < acc {
                pick = i;
                break;
            }
        }
        let x = sample_gaussian(&mut rng, &spec.modes[pick].mean, &chols[pick]);
        genuine.push(FeatureVector::new(x)?);
    }

    let n_out = libm::round(spec.outlier_fraction * spec.n_genuine as f64) as usize;
    let mut outliers = Vec::with_capacity(n_out);
    if n_out > 0 {
        let mut lo = vec![f64::INFINITY; d];
        let mut hi = vec![f64::NEG_INFINITY; d];
        for g in &genuine {
            for (j, v) in g.values().iter().enumerate() {
                lo[j] = lo[j].min(*v);
                hi[j] = hi[j].max(*v);
            }
        }
        for _ in 0..n_out {
            let x: Vec<f64> = (0..d)
                .map(|j| {
                    let center = 0.5 * (lo[j] + hi[j]);
                    let half = 1.5 * (hi[j] - lo[j]);
                    let u: f64 = rng.random();
                    center - half + 2.0 * half * u
                })
                .collect();
            outliers.push(FeatureVector::new(x)?);
        }
    }
    Ok((genuine, outliers))
}

/// Multi-user benchmark: users are Gaussian clusters in a low-dimensional
/// latent space, embedded into feature space by a shared matrix with
/// orthonormal columns plus isotropic noise. Cluster centers sit on a
/// lattice with spacing `separation * within_std`, so every pair of user
/// centers is at least that far apart in feature space as well.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct BenchmarkSpec {
    pub n_users: usize,
    pub latent_dim: usize,
    pub feature_dim: usize,
    /// Center spacing in units of `within_std`.
    pub separation: f64,
    pub within_std: f64,
    pub noise_std: f64,
    pub n_train: usize,
    pub n_test: usize,
    pub seed: RngSeed,
}

impl Default for BenchmarkSpec {
    fn default() -> Self {
        Self {
            n_users: 10,
            latent_dim: 3,
            feature_dim: 10,
            separation: 10.0,
            within_std: 1.0,
            noise_std: 0.2,
            n_train: 120,
            n_test: 60,
            seed: RngSeed(2018),
        }
    }
}

#[derive(Debug, Clone)]
pub struct UserBenchmark {
    pub users: Vec<UserDataset>,
    /// Cluster centers in feature space, aligned with `users`.
    pub centers: Vec<Vec<f64>>,
}

pub fn generate_user_benchmark(spec: &BenchmarkSpec) -> Result<UserBenchmark> {
    if spec.latent_dim == 0 || spec.feature_dim < spec.latent_dim {
        return Err(Error::Spec(format!(
            "need 0 < latent_dim ({}) <= feature_dim ({})",
            spec.latent_dim, spec.feature_dim
        )));
    }
    if spec.n_users == 0 || spec.n_train == 0 {
        return Err(Error::Spec("benchmark needs users and training samples".into()));
    }
    let mut rng = spec.seed.rng();
    let (f, l) = (spec.feature_dim, spec.latent_dim);

    // Orthonormal embedding columns by Gram-Schmidt.
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(l);
    while basis.len() < l {
        let mut v: Vec<f64> = (0..f).map(|_| standard_normal(&mut rng)).collect();
        for b in &basis {
            let p: f64 = v.iter().zip(b).map(|(x, y)| x * y).sum();
            for (x, y) in v.iter_mut().zip(b) {
                *x -= p * y;
            }
        }
        let norm = sqrt(v.iter().map(|x| x * x).sum());
        if norm > 1e-6 {
            basis.push(v.into_iter().map(|x| x / norm).collect());
        }
    }
    let embed = |z: &[f64]| -> Vec<f64> {
        (0..f)
            .map(|i| basis.iter().zip(z).map(|(b, zj)| b[i] * zj).sum())
            .collect()
    };

    let mut side = 1usize;
    while side.pow(l as u32) < spec.n_users {
        side += 1;
    }
    let spacing = spec.separation * spec.within_std;
    let latent_centers: Vec<Vec<f64>> = (0..spec.n_users)
        .map(|u| {
            let mut idx = u;
            (0..l)
                .map(|_| {
                    let c = idx % side;
                    idx /= side;
                    c as f64 * spacing
                })
                .collect()
        })
        .collect();

    let mut users = Vec::with_capacity(spec.n_users);
    let mut centers = Vec::with_capacity(spec.n_users);
    for (u, zc) in latent_centers.iter().enumerate() {
        let mut draw = |n: usize| -> Result<Vec<FeatureVector>> {
            (0..n)
                .map(|_| {
                    let z: Vec<f64> = zc
                        .iter()
                        .map(|c| c + spec.within_std * standard_normal(&mut rng))
                        .collect();
                    let mut x = embed(&z);
                    for v in &mut x {
                        *v += spec.noise_std * standard_normal(&mut rng);
                    }
                    FeatureVector::new(x)
                })
                .collect()
        };
        let train = draw(spec.n_train)?;
        let test = draw(spec.n_test)?;
        users.push(UserDataset::new(user_label(u), train, test)?);
        centers.push(embed(zc));
    }
    Ok(UserBenchmark { users, centers })
}

pub fn user_label(index: usize) -> String {
    format!("u{index:02}")
}
