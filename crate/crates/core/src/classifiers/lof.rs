//! Local outlier factor in novelty mode: training densities are cached and
//! queries never join the training set.

use alloc::format;
use alloc::vec::Vec;

#[cfg(feature = "serde")]
use serde::{Deserialize, Serialize};

use super::FitWarning;
use crate::error::{Error, Result};
use crate::math::dist;

/// Lower bound on reachability distances so duplicates keep a finite density.
pub const REACH_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct LofParams {
    /// Neighborhood size; `None` uses `max(5, min(20, N / 2))`, capped at `N - 1`.
    pub k_neighbors: Option<usize>,
}

impl LofParams {
    pub fn with_k(k: usize) -> Self {
        Self {
            k_neighbors: Some(k),
        }
    }
}

pub fn default_k(n: usize) -> usize {
    5usize.max(20usize.min(n / 2))
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct LocalOutlierFactor {
    k: usize,
    train: Vec<Vec<f64>>,
    k_distance: Vec<f64>,
    lrd: Vec<f64>,
    /// LOF of each training point with itself left out of its neighborhood.
    train_lof: Vec<f64>,
    warnings: Vec<FitWarning>,
}

/// `k` nearest entries of `candidates` to `x` as `(distance, index)`, sorted
/// by distance then index.
fn nearest(
    x: &[f64],
    train: &[Vec<f64>],
    k: usize,
    skip: Option<usize>,
) -> Vec<(f64, usize)> {
    let mut d: Vec<(f64, usize)> = train
        .iter()
        .enumerate()
        .filter(|(i, _)| Some(*i) != skip)
        .map(|(i, t)| (dist(x, t), i))
        .collect();
    let cmp = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
    if k < d.len() {
        d.select_nth_unstable_by(k - 1, cmp);
        d.truncate(k);
    }
    d.sort_by(cmp);
    d
}

impl LocalOutlierFactor {
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn dim(&self) -> usize {
        self.train.first().map_or(0, Vec::len)
    }

    pub fn n_train(&self) -> usize {
        self.train.len()
    }

    pub fn k_distances(&self) -> &[f64] {
        &self.k_distance
    }

    pub fn local_reachability_densities(&self) -> &[f64] {
        &self.lrd
    }

    /// Leave-self-out LOF of every training point.
    pub fn training_lof(&self) -> &[f64] {
        &self.train_lof
    }

    pub fn warnings(&self) -> &[FitWarning] {
        &self.warnings
    }

    fn lrd_of(&self, neighbors: &[(f64, usize)]) -> f64 {
        let reach: f64 = neighbors
            .iter()
            .map(|&(d, o)| d.max(self.k_distance[o]).max(REACH_FLOOR))
            .sum();
        neighbors.len() as f64 / reach
    }

    fn lof_of(&self, neighbors: &[(f64, usize)]) -> f64 {
        let own = self.lrd_of(neighbors);
        neighbors.iter().map(|&(_, o)| self.lrd[o] / own).sum::<f64>() / neighbors.len() as f64
    }

    /// Local outlier factor of a query: about 1 for inliers, much larger
    /// for points in sparser regions than their neighbors.
    pub fn lof(&self, x: &[f64]) -> f64 {
        let nn = nearest(x, &self.train, self.k, None);
        self.lof_of(&nn)
    }
}

pub fn fit_lof(xs: &[&[f64]], params: &LofParams) -> Result<LocalOutlierFactor> {
    let n = xs.len();
    let mut warnings = Vec::new();
    let k = match params.k_neighbors {
        Some(0) => return Err(Error::Parameter("k_neighbors must be positive".into())),
        Some(k) if k >= n => {
            return Err(Error::Parameter(format!(
                "k_neighbors ({k}) must be smaller than the training size ({n})"
            )))
        }
        Some(k) => k,
        None => {
            if n < 2 {
                return Err(Error::InsufficientData(format!(
                    "LOF needs at least 2 samples, got {n}"
                )));
            }
            let k = default_k(n);
            if k >= n {
                warnings.push(FitWarning::NeighborsClamped {
                    requested: k,
                    used: n - 1,
                });
                n - 1
            } else {
                k
            }
        }
    };
    let train: Vec<Vec<f64>> = xs.iter().map(|x| x.to_vec()).collect();
    let neighborhoods: Vec<Vec<(f64, usize)>> = (0..n)
        .map(|i| nearest(&train[i], &train, k, Some(i)))
        .collect();
    let k_distance: Vec<f64> = neighborhoods.iter().map(|nn| nn[k - 1].0).collect();
    let mut model = LocalOutlierFactor {
        k,
        train,
        k_distance,
        lrd: Vec::new(),
        train_lof: Vec::new(),
        warnings,
    };
    model.lrd = neighborhoods.iter().map(|nn| model.lrd_of(nn)).collect();
    model.train_lof = neighborhoods.iter().map(|nn| model.lof_of(nn)).collect();
    Ok(model)
}
