//! Isolation forest: random axis-aligned splits on subsamples; points that
//! are isolated after few splits are anomalous.

use alloc::format;
use alloc::vec::Vec;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
#[cfg(feature = "serde")]
use serde::{Deserialize, Serialize};

use super::FitWarning;
use crate::error::{Error, Result};
use crate::math::{ceil, pow};
use crate::special::harmonic;
use crate::types::RngSeed;

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct IfParams {
    pub n_trees: usize,
    /// Points per tree; `None` uses `min(256, N)`.
    pub subsample_size: Option<usize>,
    pub seed: RngSeed,
}

impl Default for IfParams {
    fn default() -> Self {
        Self {
            n_trees: 100,
            subsample_size: None,
            seed: RngSeed(0),
        }
    }
}

/// Average path length of an unsuccessful BST search over `n` points:
/// `c(n) = 2 H(n - 1) - 2 (n - 1) / n`, with `c(0) = c(1) = 0`.
pub fn average_path_length(n: usize) -> f64 {
    if n <= 1 {
        return 0.0;
    }
    let nf = n as f64;
    2.0 * harmonic(n - 1) - 2.0 * (nf - 1.0) / nf
}

/// Anomaly score `2^(-mean_path / c(psi))`.
pub fn anomaly_score(mean_path: f64, psi: usize) -> f64 {
    pow(2.0, -mean_path / average_path_length(psi))
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
enum Node {
    Leaf {
        size: usize,
    },
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct IsolationTree {
    nodes: Vec<Node>,
}

impl IsolationTree {
    fn grow(xs: &[&[f64]], sample: Vec<usize>, height_limit: usize, rng: &mut ChaCha8Rng) -> Self {
        let mut tree = IsolationTree { nodes: Vec::new() };
        tree.build(xs, sample, 0, height_limit, rng);
        tree
    }

    fn build(
        &mut self,
        xs: &[&[f64]],
        idx: Vec<usize>,
        depth: usize,
        limit: usize,
        rng: &mut ChaCha8Rng,
    ) -> usize {
        let id = self.nodes.len();
        self.nodes.push(Node::Leaf { size: idx.len() });
        if idx.len() <= 1 || depth >= limit {
            return id;
        }
        let dim = xs[idx[0]].len();
        let ranges: Vec<(usize, f64, f64)> = (0..dim)
            .filter_map(|f| {
                let (lo, hi) = idx.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &i| {
                    (lo.min(xs[i][f]), hi.max(xs[i][f]))
                });
                (hi > lo).then_some((f, lo, hi))
            })
            .collect();
        if ranges.is_empty() {
            return id;
        }
        let (feature, lo, hi) = ranges[rng.random_range(0..ranges.len())];
        let u: f64 = rng.random();
        let threshold = lo + u * (hi - lo);
        let (l, r): (Vec<usize>, Vec<usize>) = idx.into_iter().partition(|&i| xs[i][feature] < threshold);
        let left = self.build(xs, l, depth + 1, limit, rng);
        let right = self.build(xs, r, depth + 1, limit, rng);
        self.nodes[id] = Node::Split {
            feature,
            threshold,
            left,
            right,
        };
        id
    }

    /// Edges to the leaf plus `c(leaf size)`.
    pub fn path_length(&self, x: &[f64]) -> f64 {
        let mut node = 0usize;
        let mut depth = 0usize;
        loop {
            match self.nodes[node] {
                Node::Leaf { size } => return depth as f64 + average_path_length(size),
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    node = if x[feature] < threshold { left } else { right };
                    depth += 1;
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct IsolationForest {
    trees: Vec<IsolationTree>,
    subsample_size: usize,
    dim: usize,
    warnings: Vec<FitWarning>,
}

impl IsolationForest {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn subsample_size(&self) -> usize {
        self.subsample_size
    }

    pub fn trees(&self) -> &[IsolationTree] {
        &self.trees
    }

    pub fn warnings(&self) -> &[FitWarning] {
        &self.warnings
    }

    pub fn mean_path_length(&self, x: &[f64]) -> f64 {
        self.trees.iter().map(|t| t.path_length(x)).sum::<f64>() / self.trees.len() as f64
    }

    /// Anomaly score in `(0, 1]`; higher is more anomalous.
    pub fn anomaly_score(&self, x: &[f64]) -> f64 {
        anomaly_score(self.mean_path_length(x), self.subsample_size)
    }

    /// Same forest with trees in a different order.
    pub fn with_tree_order(&self, order: &[usize]) -> Self {
        Self {
            trees: order.iter().map(|&i| self.trees[i].clone()).collect(),
            ..self.clone()
        }
    }
}

pub fn fit_iforest(xs: &[&[f64]], params: &IfParams) -> Result<IsolationForest> {
    let n = xs.len();
    if n < 2 {
        return Err(Error::InsufficientData(format!(
            "isolation forest needs at least 2 samples, got {n}"
        )));
    }
    if params.n_trees == 0 {
        return Err(Error::Parameter("n_trees must be positive".into()));
    }
    let mut warnings = Vec::new();
    let psi = match params.subsample_size {
        None => n.min(256),
        Some(0) | Some(1) => {
            return Err(Error::Parameter("subsample size must be at least 2".into()));
        }
        Some(p) if p > n => {
            warnings.push(FitWarning::SubsampleClamped { requested: p, used: n });
            n
        }
        Some(p) => p,
    };
    let height_limit = ceil(libm::log2(psi as f64)) as usize;
    let trees = (0..params.n_trees)
        .map(|t| {
            let mut rng = params.seed.derive(t as u64).rng();
            let mut perm: Vec<usize> = (0..n).collect();
            for i in 0..psi {
                let j = rng.random_range(i..n);
                perm.swap(i, j);
            }
            perm.truncate(psi);
            IsolationTree::grow(xs, perm, height_limit, &mut rng)
        })
        .collect();
    Ok(IsolationForest {
        trees,
        subsample_size: psi,
        dim: xs[0].len(),
        warnings,
    })
}
