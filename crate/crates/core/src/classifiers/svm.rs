//! ν-one-class SVM with an RBF kernel, trained by SMO on the dual.
//!
//! The dual is `min 1/2 a^T Q a` subject to `0 <= a_i <= 1 / (nu N)` and
//! `sum a_i = 1`, with `Q_ij = exp(-gamma |x_i - x_j|^2)`. Internally the
//! problem is solved in the equivalent scaling `0 <= a_i <= 1`,
//! `sum a_i = nu N`, where the stopping tolerance matches the usual
//! maximal-violating-pair criterion.

use alloc::borrow::Cow;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

#[cfg(feature = "serde")]
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::{exp, floor, sq_dist};

const TAU: f64 = 1e-12;
/// Kernel rows are cached as a dense matrix up to this many samples.
const DENSE_KERNEL_LIMIT: usize = 4000;

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum Gamma {
    /// `1 / dim`.
    Auto,
    Value(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct Sv1cParams {
    /// Upper bound on the training-outlier fraction, lower bound on the
    /// support-vector fraction.
    pub nu: f64,
    /// Stopping tolerance on the maximal KKT violation.
    pub epsilon: f64,
    pub gamma: Gamma,
    pub max_iter: usize,
}

impl Default for Sv1cParams {
    fn default() -> Self {
        Self {
            nu: 0.1,
            epsilon: 1e-3,
            gamma: Gamma::Auto,
            max_iter: 100_000,
        }
    }
}

impl Sv1cParams {
    pub fn with_nu(nu: f64) -> Self {
        Self {
            nu,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.nu > 0.0 && self.nu <= 1.0) {
            return Err(Error::Parameter(format!("nu = {} outside (0, 1]", self.nu)));
        }
        if !(self.epsilon > 0.0) {
            return Err(Error::Parameter(format!("epsilon = {} must be positive", self.epsilon)));
        }
        if let Gamma::Value(g) = self.gamma {
            if !(g > 0.0) || !g.is_finite() {
                return Err(Error::Parameter(format!("gamma = {g} must be positive")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct OneClassSvm {
    gamma: f64,
    support_vectors: Vec<Vec<f64>>,
    /// Training-set row of each support vector.
    support_indices: Vec<usize>,
    /// Dual coefficients of the support vectors, summing to one.
    duals: Vec<f64>,
    rho: f64,
    n_train: usize,
    iterations: usize,
    gap: f64,
}

impl OneClassSvm {
    pub fn dim(&self) -> usize {
        self.support_vectors.first().map_or(0, Vec::len)
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn support_vectors(&self) -> &[Vec<f64>] {
        &self.support_vectors
    }

    pub fn duals(&self) -> &[f64] {
        &self.duals
    }

    pub fn support_indices(&self) -> &[usize] {
        &self.support_indices
    }

    pub fn n_train(&self) -> usize {
        self.n_train
    }

    pub fn iterations(&self) -> usize {
        self.iterations
    }

    /// Final maximal KKT violation of the solver.
    pub fn gap(&self) -> f64 {
        self.gap
    }

    /// `f(x) = sum a_i k(x_i, x) - rho`; non-negative inside the boundary.
    pub fn decision_function(&self, x: &[f64]) -> f64 {
        self.support_vectors
            .iter()
            .zip(&self.duals)
            .map(|(sv, a)| a * exp(-self.gamma * sq_dist(sv, x)))
            .sum::<f64>()
            - self.rho
    }

    /// Decision values of the training rows with each support vector's own
    /// kernel term removed, so a training point is scored the way an unseen
    /// point at the same location would be.
    pub fn self_excluded_scores(&self, xs: &[&[f64]]) -> Vec<f64> {
        let mut out: Vec<f64> = xs.iter().map(|x| self.decision_function(x)).collect();
        for (&i, a) in self.support_indices.iter().zip(&self.duals) {
            if let Some(v) = out.get_mut(i) {
                *v -= a;
            }
        }
        out
    }
}

enum Kernel<'a> {
    Dense { n: usize, q: Vec<f64> },
    Lazy { xs: &'a [&'a [f64]], gamma: f64 },
}

impl Kernel<'_> {
    fn row(&self, i: usize) -> Cow<'_, [f64]> {
        match self {
            Kernel::Dense { n, q } => Cow::Borrowed(&q[i * n..(i + 1) * n]),
            Kernel::Lazy { xs, gamma } => Cow::Owned(
                xs.iter()
                    .map(|x| exp(-gamma * sq_dist(xs[i], x)))
                    .collect(),
            ),
        }
    }
}

fn rbf_matrix(xs: &[&[f64]], gamma: f64) -> Vec<f64> {
    let n = xs.len();
    let mut q = vec![0.0; n * n];
    for i in 0..n {
        q[i * n + i] = 1.0;
        for j in 0..i {
            let v = exp(-gamma * sq_dist(xs[i], xs[j]));
            q[i * n + j] = v;
            q[j * n + i] = v;
        }
    }
    q
}

pub fn fit_sv1c(xs: &[&[f64]], params: &Sv1cParams) -> Result<OneClassSvm> {
    params.validate()?;
    let n = xs.len();
    if n < 2 {
        return Err(Error::InsufficientData(format!(
            "one-class SVM needs at least 2 samples, got {n}"
        )));
    }
    let dim = xs[0].len();
    let gamma = match params.gamma {
        Gamma::Auto => 1.0 / dim as f64,
        Gamma::Value(g) => g,
    };
    let kernel = if n <= DENSE_KERNEL_LIMIT {
        Kernel::Dense {
            n,
            q: rbf_matrix(xs, gamma),
        }
    } else {
        Kernel::Lazy { xs, gamma }
    };

    // Scaled problem: 0 <= a <= 1, sum a = nu N. All diagonal entries are 1.
    let total = params.nu * n as f64;
    let mut alpha = vec![0.0; n];
    let full = floor(total) as usize;
    for a in alpha.iter_mut().take(full.min(n)) {
        *a = 1.0;
    }
    if full < n {
        alpha[full] = total - full as f64;
    }
    let mut grad = vec![0.0; n];
    for (j, &a) in alpha.iter().enumerate() {
        if a != 0.0 {
            let row = kernel.row(j);
            for (g, q) in grad.iter_mut().zip(row.iter()) {
                *g += a * q;
            }
        }
    }

    let upper = 1.0;
    let mut iterations = 0usize;
    let gap = loop {
        // Working-set selection with second-order information.
        let mut gmax = f64::NEG_INFINITY;
        let mut i_sel = usize::MAX;
        for t in 0..n {
            if alpha[t] < upper && -grad[t] >= gmax {
                gmax = -grad[t];
                i_sel = t;
            }
        }
        let mut gmax2 = f64::NEG_INFINITY;
        let mut j_sel = usize::MAX;
        let mut obj_min = f64::INFINITY;
        let q_i = if i_sel != usize::MAX {
            Some(kernel.row(i_sel))
        } else {
            None
        };
        for t in 0..n {
            if alpha[t] > 0.0 {
                if grad[t] >= gmax2 {
                    gmax2 = grad[t];
                }
                if let Some(q_i) = &q_i {
                    let b = gmax + grad[t];
                    if b > 0.0 {
                        let mut a = 2.0 - 2.0 * q_i[t];
                        if a <= 0.0 {
                            a = TAU;
                        }
                        let obj = -(b * b) / a;
                        if obj <= obj_min {
                            obj_min = obj;
                            j_sel = t;
                        }
                    }
                }
            }
        }
        let gap = gmax + gmax2;
        if gap < params.epsilon || i_sel == usize::MAX || j_sel == usize::MAX {
            break gap.max(0.0);
        }
        if iterations >= params.max_iter {
            return Err(Error::Convergence {
                iterations,
                gap,
            });
        }
        iterations += 1;

        let (i, j) = (i_sel, j_sel);
        let q_i = q_i.expect("row of selected i");
        let q_j = kernel.row(j);
        let mut quad = 2.0 - 2.0 * q_i[j];
        if quad <= 0.0 {
            quad = TAU;
        }
        let old_i = alpha[i];
        let old_j = alpha[j];
        let delta = (grad[i] - grad[j]) / quad;
        let sum = old_i + old_j;
        let mut ai = old_i - delta;
        let mut aj = old_j + delta;
        if sum > upper {
            if ai > upper {
                ai = upper;
                aj = sum - upper;
            }
        } else if aj < 0.0 {
            aj = 0.0;
            ai = sum;
        }
        if sum > upper {
            if aj > upper {
                aj = upper;
                ai = sum - upper;
            }
        } else if ai < 0.0 {
            ai = 0.0;
            aj = sum;
        }
        alpha[i] = ai;
        alpha[j] = aj;
        let di = ai - old_i;
        let dj = aj - old_j;
        for t in 0..n {
            grad[t] += q_i[t] * di + q_j[t] * dj;
        }
    };

    // Offset: mean gradient over free variables, else midpoint of bounds.
    let mut ub = f64::INFINITY;
    let mut lb = f64::NEG_INFINITY;
    let mut free_sum = 0.0;
    let mut free_n = 0usize;
    for t in 0..n {
        if alpha[t] >= upper {
            lb = lb.max(grad[t]);
        } else if alpha[t] <= 0.0 {
            ub = ub.min(grad[t]);
        } else {
            free_sum += grad[t];
            free_n += 1;
        }
    }
    let rho = if free_n > 0 {
        free_sum / free_n as f64
    } else {
        0.5 * (ub + lb)
    };

    let mut support_vectors = Vec::new();
    let mut support_indices = Vec::new();
    let mut duals = Vec::new();
    for (t, &a) in alpha.iter().enumerate() {
        if a > 0.0 {
            support_vectors.push(xs[t].to_vec());
            support_indices.push(t);
            duals.push(a / total);
        }
    }
    Ok(OneClassSvm {
        gamma,
        support_vectors,
        support_indices,
        duals,
        rho: rho / total,
        n_train: n,
        iterations,
        gap,
    })
}
