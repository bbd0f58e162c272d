//! Small dense linear algebra for symmetric matrices: Cholesky factorization
//! and a cyclic Jacobi eigensolver. Matrices are row-major `n * n` slices.

use alloc::vec;
use alloc::vec::Vec;

use crate::math::{abs, ln, sqrt};

/// Column mean of a set of equal-length rows.
pub fn mean<'a, I>(rows: I, dim: usize) -> Vec<f64>
where
    I: IntoIterator<Item = &'a [f64]>,
{
    let mut m = vec![0.0; dim];
    let mut n = 0usize;
    for r in rows {
        for (acc, v) in m.iter_mut().zip(r) {
            *acc += v;
        }
        n += 1;
    }
    if n > 0 {
        for v in &mut m {
            *v /= n as f64;
        }
    }
    m
}

/// Scatter matrix `sum (x - mu)(x - mu)^T / denom`.
pub fn covariance<'a, I>(rows: I, mu: &[f64], denom: f64) -> Vec<f64>
where
    I: IntoIterator<Item = &'a [f64]>,
{
    let d = mu.len();
    let mut c = vec![0.0; d * d];
    let mut centered = vec![0.0; d];
    for r in rows {
        for ((slot, v), m) in centered.iter_mut().zip(r).zip(mu) {
            *slot = v - m;
        }
        for i in 0..d {
            let ci = centered[i];
            for j in i..d {
                c[i * d + j] += ci * centered[j];
            }
        }
    }
    for i in 0..d {
        for j in i..d {
            let v = c[i * d + j] / denom;
            c[i * d + j] = v;
            c[j * d + i] = v;
        }
    }
    c
}

pub fn trace(a: &[f64], n: usize) -> f64 {
    (0..n).map(|i| a[i * n + i]).sum()
}

/// Lower-triangular Cholesky factor of a symmetric positive definite matrix.
#[derive(Debug, Clone)]
pub struct Cholesky {
    n: usize,
    l: Vec<f64>,
}

impl Cholesky {
    /// Returns `None` when `a` is not numerically positive definite.
    pub fn new(a: &[f64], n: usize) -> Option<Self> {
        let mut l = vec![0.0; n * n];
        let scale = (0..n).map(|i| abs(a[i * n + i])).fold(0.0, f64::max);
        let floor = scale * 1e-13;
        for i in 0..n {
            for j in 0..=i {
                let mut s = a[i * n + j];
                for k in 0..j {
                    s -= l[i * n + k] * l[j * n + k];
                }
                if i == j {
                    if !(s > floor) || !s.is_finite() {
                        return None;
                    }
                    l[i * n + i] = sqrt(s);
                } else {
                    l[i * n + j] = s / l[j * n + j];
                }
            }
        }
        Some(Self { n, l })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn factor(&self) -> &[f64] {
        &self.l
    }

    pub fn log_det(&self) -> f64 {
        (0..self.n).map(|i| 2.0 * ln(self.l[i * self.n + i])).sum()
    }

    /// Solves `L y = b` in place.
    fn forward(&self, b: &mut [f64]) {
        let n = self.n;
        for i in 0..n {
            let mut s = b[i];
            for k in 0..i {
                s -= self.l[i * n + k] * b[k];
            }
            b[i] = s / self.l[i * n + i];
        }
    }

    /// `v^T A^{-1} v`, computed as `|L^{-1} v|^2`.
    pub fn quad_form_inv(&self, v: &[f64]) -> f64 {
        let mut y = v.to_vec();
        self.forward(&mut y);
        y.iter().map(|x| x * x).sum()
    }

    /// Solves `A x = b`.
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut y = b.to_vec();
        self.forward(&mut y);
        for i in (0..n).rev() {
            let mut s = y[i];
            for k in i + 1..n {
                s -= self.l[k * n + i] * y[k];
            }
            y[i] = s / self.l[i * n + i];
        }
        y
    }
}

/// Eigen-decomposition of a symmetric matrix by cyclic Jacobi rotations.
///
/// Returns eigenvalues in non-increasing order together with the matching
/// unit eigenvectors, stored as rows.
pub fn symmetric_eigen(a: &[f64], n: usize) -> (Vec<f64>, Vec<Vec<f64>>) {
    let mut m = a.to_vec();
    let mut v = vec![0.0; n * n];
    for i in 0..n {
        v[i * n + i] = 1.0;
    }
    let norm: f64 = m.iter().map(|x| x * x).sum::<f64>();
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| m[i * n + j] * m[i * n + j])
            .sum();
        if off <= norm * 1e-30 || off == 0.0 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = m[p * n + q];
                if apq == 0.0 {
                    continue;
                }
                let app = m[p * n + p];
                let aqq = m[q * n + q];
                let theta = (aqq - app) / (2.0 * apq);
                let t = if theta >= 0.0 {
                    1.0 / (theta + sqrt(1.0 + theta * theta))
                } else {
                    -1.0 / (-theta + sqrt(1.0 + theta * theta))
                };
                let c = 1.0 / sqrt(1.0 + t * t);
                let s = t * c;
                for k in 0..n {
                    let mkp = m[k * n + p];
                    let mkq = m[k * n + q];
                    m[k * n + p] = c * mkp - s * mkq;
                    m[k * n + q] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let mpk = m[p * n + k];
                    let mqk = m[q * n + k];
                    m[p * n + k] = c * mpk - s * mqk;
                    m[q * n + k] = s * mpk + c * mqk;
                }
                for k in 0..n {
                    let vkp = v[k * n + p];
                    let vkq = v[k * n + q];
                    v[k * n + p] = c * vkp - s * vkq;
                    v[k * n + q] = s * vkp + c * vkq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m[j * n + j].total_cmp(&m[i * n + i]).then(i.cmp(&j)));
    let values = order.iter().map(|&i| m[i * n + i]).collect();
    let vectors = order
        .iter()
        .map(|&i| {
            let mut col: Vec<f64> = (0..n).map(|k| v[k * n + i]).collect();
            // Sign convention: largest-magnitude component positive.
            let lead = col
                .iter()
                .copied()
                .fold(0.0f64, |acc, x| if abs(x) > abs(acc) { x } else { acc });
            if lead < 0.0 {
                for x in &mut col {
                    *x = -*x;
                }
            }
            col
        })
        .collect();
    (values, vectors)
}
