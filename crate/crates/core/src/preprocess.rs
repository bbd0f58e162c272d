//! Feature standardization and PCA, fitted on genuine training data only.

use alloc::format;
use alloc::vec::Vec;

#[cfg(feature = "serde")]
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{covariance, mean, symmetric_eigen};
use crate::math::{ceil, sqrt};
use crate::types::{common_dim, FeatureVector};

/// Standard deviations at or below this are treated as zero.
const DEGENERATE_STD: f64 = 1e-12;

/// Per-feature `(x - mean) / std` with population standard deviation.
/// Constant features keep `std = 1` and map to zero.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct Standardizer {
    means: Vec<f64>,
    stds: Vec<f64>,
}

impl Standardizer {
    pub fn means(&self) -> &[f64] {
        &self.means
    }

    pub fn stds(&self) -> &[f64] {
        &self.stds
    }

    pub fn dim(&self) -> usize {
        self.means.len()
    }

    pub fn transform(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.dim() {
            return Err(Error::Shape {
                expected: self.dim(),
                actual: x.len(),
            });
        }
        Ok(x.iter()
            .zip(&self.means)
            .zip(&self.stds)
            .map(|((v, m), s)| (v - m) / s)
            .collect())
    }
}

pub fn fit_standardizer(xs: &[FeatureVector]) -> Result<Standardizer> {
    let dim = common_dim(xs).map_err(|_| {
        Error::InsufficientData("standardizer needs at least one sample".into())
    })?;
    let means = mean(xs.iter().map(FeatureVector::values), dim);
    let n = xs.len() as f64;
    let stds = (0..dim)
        .map(|j| {
            let var = xs
                .iter()
                .map(|x| {
                    let c = x.values()[j] - means[j];
                    c * c
                })
                .sum::<f64>()
                / n;
            let s = sqrt(var);
            if s <= DEGENERATE_STD * means[j].abs().max(1.0) {
                1.0
            } else {
                s
            }
        })
        .collect();
    Ok(Standardizer { means, stds })
}

/// Projection onto the leading principal components of the training data.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct PcaProjector {
    mean: Vec<f64>,
    /// Retained components as orthonormal rows, by decreasing variance.
    components: Vec<Vec<f64>>,
    /// Variance along every principal direction, non-increasing.
    explained_variance: Vec<f64>,
    keep_fraction: f64,
}

impl PcaProjector {
    pub fn input_dim(&self) -> usize {
        self.mean.len()
    }

    pub fn n_components(&self) -> usize {
        self.components.len()
    }

    pub fn components(&self) -> &[Vec<f64>] {
        &self.components
    }

    /// Variances along all `dim` principal directions.
    pub fn explained_variance(&self) -> &[f64] {
        &self.explained_variance
    }

    pub fn keep_fraction(&self) -> f64 {
        self.keep_fraction
    }

    pub fn transform(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.input_dim() {
            return Err(Error::Shape {
                expected: self.input_dim(),
                actual: x.len(),
            });
        }
        Ok(self
            .components
            .iter()
            .map(|c| {
                c.iter()
                    .zip(x)
                    .zip(&self.mean)
                    .map(|((ci, xi), mi)| ci * (xi - mi))
                    .sum()
            })
            .collect())
    }

    /// Maps projected coordinates back to input space.
    pub fn inverse_transform(&self, z: &[f64]) -> Vec<f64> {
        let mut x = self.mean.clone();
        for (c, zi) in self.components.iter().zip(z) {
            for (xj, cj) in x.iter_mut().zip(c) {
                *xj += zi * cj;
            }
        }
        x
    }
}

/// Number of components kept for `dim` features: `ceil(keep_fraction * dim)`,
/// at least one.
pub fn retained_components(dim: usize, keep_fraction: f64) -> usize {
    // Guard against 0.3 * 10 = 3.0000000000000004.
    (ceil(keep_fraction * dim as f64 - 1e-9) as usize).clamp(1, dim)
}

/// Fits PCA by eigen-decomposition of the sample covariance (`1 / (N - 1)`).
pub fn fit_pca(xs: &[FeatureVector], keep_fraction: f64) -> Result<PcaProjector> {
    if !(keep_fraction > 0.0 && keep_fraction <= 1.0) {
        return Err(Error::Parameter(format!(
            "PCA keep fraction {keep_fraction} outside (0, 1]"
        )));
    }
    if xs.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "PCA needs at least 2 samples, got {}",
            xs.len()
        )));
    }
    let dim = common_dim(xs)?;
    let mu = mean(xs.iter().map(FeatureVector::values), dim);
    let cov = covariance(xs.iter().map(FeatureVector::values), &mu, (xs.len() - 1) as f64);
    let (values, vectors) = symmetric_eigen(&cov, dim);
    let keep = retained_components(dim, keep_fraction);
    Ok(PcaProjector {
        mean: mu,
        components: vectors.into_iter().take(keep).collect(),
        explained_variance: values.into_iter().map(|v| v.max(0.0)).collect(),
        keep_fraction,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn fv(v: &[f64]) -> FeatureVector {
        FeatureVector::new(v.to_vec()).unwrap()
    }

    #[test]
    fn two_point_standardizer() {
        let s = fit_standardizer(&[fv(&[1.0]), fv(&[3.0])]).unwrap();
        assert_eq!(s.means(), &[2.0]);
        assert_eq!(s.stds(), &[1.0]);
        assert_eq!(s.transform(&[1.0]).unwrap(), vec![-1.0]);
        assert_eq!(s.transform(&[3.0]).unwrap(), vec![1.0]);
        assert_eq!(s.transform(&[2.0]).unwrap(), vec![0.0]);
    }

    #[test]
    fn constant_column_maps_to_zero() {
        let s = fit_standardizer(&[fv(&[5.0, 1.0]), fv(&[5.0, 2.0])]).unwrap();
        assert_eq!(s.stds()[0], 1.0);
        assert_eq!(s.transform(&[5.0, 1.0]).unwrap()[0], 0.0);
    }

    #[test]
    fn standardizer_errors() {
        assert!(matches!(fit_standardizer(&[]), Err(Error::InsufficientData(_))));
        let s = fit_standardizer(&[fv(&[1.0, 2.0])]).unwrap();
        assert!(matches!(s.transform(&[1.0]), Err(Error::Shape { .. })));
    }

    #[test]
    fn retained_component_counts() {
        assert_eq!(retained_components(10, 0.30), 3);
        assert_eq!(retained_components(24, 0.30), 8);
        assert_eq!(retained_components(2, 0.30), 1);
        assert_eq!(retained_components(2, 0.5), 1);
        assert_eq!(retained_components(3, 1.0), 3);
    }

    #[test]
    fn rank_one_data() {
        let xs: Vec<FeatureVector> = (0..20).map(|i| fv(&[i as f64, 2.0 * i as f64])).collect();
        let p = fit_pca(&xs, 0.5).unwrap();
        assert_eq!(p.n_components(), 1);
        let total: f64 = p.explained_variance().iter().sum();
        assert!(p.explained_variance()[0] / total >= 0.999);
        for x in &xs {
            let back = p.inverse_transform(&p.transform(x.values()).unwrap());
            let err = crate::math::dist(&back, x.values());
            assert!(err < 1e-8, "reconstruction error {err}");
        }
    }

    #[test]
    fn pca_needs_two_samples() {
        assert!(matches!(
            fit_pca(&[fv(&[1.0])], 0.3),
            Err(Error::InsufficientData(_))
        ));
        assert!(fit_pca(&[fv(&[1.0]), fv(&[2.0])], 0.0).is_err());
    }
}
