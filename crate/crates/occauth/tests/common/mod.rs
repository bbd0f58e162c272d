//! Helpers shared by the integration tests: reading emitted grid CSVs and
//! measuring the shape of their zero contour.

#![allow(dead_code)]

use std::collections::VecDeque;
use std::path::Path;

use nalgebra::{DMatrix, DVector, Matrix2, SymmetricEigen};

/// A decision grid as written by `grid`: rows of `x,y,score`, x fastest.
pub struct Grid {
    pub xs: Vec<f64>,
    pub ys: Vec<f64>,
    pub scores: Vec<f64>,
}

impl Grid {
    pub fn read(path: &Path) -> Grid {
        let mut rdr = csv::Reader::from_path(path).unwrap();
        assert_eq!(rdr.headers().unwrap(), vec!["x", "y", "score"]);
        let rows: Vec<[f64; 3]> = rdr
            .records()
            .map(|r| {
                let r = r.unwrap();
                [r[0].parse().unwrap(), r[1].parse().unwrap(), r[2].parse().unwrap()]
            })
            .collect();
        let res = (rows.len() as f64).sqrt().round() as usize;
        assert_eq!(res * res, rows.len(), "grid is not square");
        Grid {
            xs: rows[..res].iter().map(|r| r[0]).collect(),
            ys: rows.iter().step_by(res).map(|r| r[1]).collect(),
            scores: rows.iter().map(|r| r[2]).collect(),
        }
    }

    pub fn res(&self) -> usize {
        self.xs.len()
    }

    pub fn accepted(&self) -> Vec<bool> {
        self.scores.iter().map(|s| *s >= 0.0).collect()
    }

    pub fn cell_area(&self) -> f64 {
        (self.xs[1] - self.xs[0]) * (self.ys[1] - self.ys[0])
    }

    pub fn accepted_area(&self) -> f64 {
        self.accepted().iter().filter(|a| **a).count() as f64 * self.cell_area()
    }

    /// 4-connected components of accepted cells.
    pub fn components(&self) -> usize {
        let r = self.res();
        let acc = self.accepted();
        let mut seen = vec![false; acc.len()];
        let mut count = 0;
        for start in 0..acc.len() {
            if !acc[start] || seen[start] {
                continue;
            }
            count += 1;
            seen[start] = true;
            let mut queue = VecDeque::from([start]);
            while let Some(c) = queue.pop_front() {
                let (x, y) = (c % r, c / r);
                let nbrs = [
                    (x > 0).then(|| c - 1),
                    (x + 1 < r).then(|| c + 1),
                    (y > 0).then(|| c - r),
                    (y + 1 < r).then(|| c + r),
                ];
                for nb in nbrs.into_iter().flatten() {
                    if acc[nb] && !seen[nb] {
                        seen[nb] = true;
                        queue.push_back(nb);
                    }
                }
            }
        }
        count
    }

    /// Zero crossings of the score, linearly interpolated along grid rows
    /// and columns.
    pub fn zero_crossings(&self) -> Vec<(f64, f64)> {
        let r = self.res();
        let s = |ix: usize, iy: usize| self.scores[iy * r + ix];
        let mut out = Vec::new();
        for iy in 0..r {
            for ix in 0..r {
                if ix + 1 < r && (s(ix, iy) >= 0.0) != (s(ix + 1, iy) >= 0.0) {
                    let t = s(ix, iy) / (s(ix, iy) - s(ix + 1, iy));
                    out.push((self.xs[ix] + t * (self.xs[ix + 1] - self.xs[ix]), self.ys[iy]));
                }
                if iy + 1 < r && (s(ix, iy) >= 0.0) != (s(ix, iy + 1) >= 0.0) {
                    let t = s(ix, iy) / (s(ix, iy) - s(ix, iy + 1));
                    out.push((self.xs[ix], self.ys[iy] + t * (self.ys[iy + 1] - self.ys[iy])));
                }
            }
        }
        out
    }
}

/// Least-squares conic `a x^2 + b xy + c y^2 + d x + e y = 1`.
pub struct Conic {
    pub coef: [f64; 5],
}

impl Conic {
    pub fn fit(points: &[(f64, f64)]) -> Conic {
        let a = DMatrix::from_fn(points.len(), 5, |i, j| {
            let (x, y) = points[i];
            [x * x, x * y, y * y, x, y][j]
        });
        let rhs = DVector::from_element(points.len(), 1.0);
        let sol = a.svd(true, true).solve(&rhs, 1e-12).unwrap();
        Conic {
            coef: [sol[0], sol[1], sol[2], sol[3], sol[4]],
        }
    }

    pub fn eval(&self, (x, y): (f64, f64)) -> f64 {
        let [a, b, c, d, e] = self.coef;
        a * x * x + b * x * y + c * y * y + d * x + e * y
    }

    /// Negative for ellipses.
    pub fn discriminant(&self) -> f64 {
        let [a, b, c, ..] = self.coef;
        b * b - 4.0 * a * c
    }

    /// Ratio of the semi-axes, at least 1, for an ellipse.
    pub fn axis_ratio(&self) -> f64 {
        let [a, b, c, ..] = self.coef;
        let q = Matrix2::new(a, b / 2.0, b / 2.0, c);
        let ev = SymmetricEigen::new(q).eigenvalues;
        let (lo, hi) = (ev.min(), ev.max());
        (hi / lo).sqrt()
    }

    /// Largest relative deviation of the fitted contour from the points.
    pub fn max_residual(&self, points: &[(f64, f64)]) -> f64 {
        points
            .iter()
            .map(|p| (self.eval(*p) - 1.0).abs())
            .fold(0.0, f64::max)
    }
}
