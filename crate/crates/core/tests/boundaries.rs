//! Geometry of decision regions on two-dimensional synthetic data.

use std::collections::VecDeque;
use std::f64::consts::PI;

use occauth_core::classifiers::{
    decision_grid, ClassifierConfig, EeParams, GridBounds, IfParams, OccModel, OccPipeline,
    ScoreGrid, Scorer, Sv1cParams,
};
use occauth_core::datastream::{generate_synthetic, SynthSpec};
use occauth_core::evaluation::select_threshold;
use occauth_core::{FeatureVector, RngSeed};

const RES: usize = 200;

fn ee_plain() -> ClassifierConfig {
    ClassifierConfig::Ee(EeParams {
        pca_keep: None,
        ..EeParams::default()
    })
}

fn fit(train: &[FeatureVector], cfg: &ClassifierConfig) -> (OccPipeline, f64) {
    let p = OccPipeline::fit(train, cfg).unwrap();
    let theta = select_threshold(&p.training_scores(train).unwrap(), 0.05).unwrap();
    (p, theta)
}

/// Number of 4-connected components of accepted cells.
fn components(grid: &ScoreGrid) -> usize {
    let r = grid.resolution();
    let acc = grid.accepted();
    let mut seen = vec![false; acc.len()];
    let mut count = 0;
    for start in 0..acc.len() {
        if !acc[start] || seen[start] {
            continue;
        }
        count += 1;
        let mut queue = VecDeque::from([start]);
        seen[start] = true;
        while let Some(c) = queue.pop_front() {
            let (x, y) = (c % r, c / r);
            let mut nbrs = vec![];
            if x > 0 {
                nbrs.push(c - 1);
            }
            if x + 1 < r {
                nbrs.push(c + 1);
            }
            if y > 0 {
                nbrs.push(c - r);
            }
            if y + 1 < r {
                nbrs.push(c + r);
            }
            for nb in nbrs {
                if acc[nb] && !seen[nb] {
                    seen[nb] = true;
                    queue.push_back(nb);
                }
            }
        }
    }
    count
}

fn cell_area(grid: &ScoreGrid) -> f64 {
    (grid.xs[1] - grid.xs[0]) * (grid.ys[1] - grid.ys[0])
}

fn score(p: &OccPipeline, x: f64, y: f64) -> f64 {
    p.score_slice(&[x, y]).unwrap()
}

#[test]
fn ee_boundary_on_unimodal_data_is_an_ellipse() {
    let (train, _) = generate_synthetic(&SynthSpec::unimodal_2d(500, 0.0, RngSeed(21))).unwrap();
    let (p, theta) = fit(&train, &ee_plain());
    let grid = decision_grid(&p, &GridBounds::around(&train, 0.5).unwrap(), RES)
        .unwrap()
        .shifted(theta);
    assert_eq!(components(&grid), 1);
    let OccModel::Ee(env) = p.model() else { unreachable!() };
    // Boundary cells: accepted with a rejected 4-neighbor.
    let acc = grid.accepted();
    let mut dists = vec![];
    for iy in 1..RES - 1 {
        for ix in 1..RES - 1 {
            let c = iy * RES + ix;
            if acc[c] && (!acc[c - 1] || !acc[c + 1] || !acc[c - RES] || !acc[c + RES]) {
                let z = p.preprocess(&[grid.xs[ix], grid.ys[iy]]).unwrap();
                dists.push(env.mahalanobis(&z));
            }
        }
    }
    let lo = dists.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = dists.iter().cloned().fold(0.0, f64::max);
    assert!(dists.len() > 50);
    assert!(hi / lo < 1.05, "{lo} {hi}");
}

#[test]
fn bimodal_data_separates_ee_from_sv1c_and_if() {
    let offset = 3.0;
    let (train, _) = generate_synthetic(&SynthSpec::bimodal_2d(400, offset, 0.0, RngSeed(8))).unwrap();
    let bounds = GridBounds::around(&train, 0.5).unwrap();

    let (ee, theta) = fit(&train, &ee_plain());
    let grid = decision_grid(&ee, &bounds, RES).unwrap().shifted(theta);
    assert_eq!(components(&grid), 1);
    let area = grid.accepted().iter().filter(|a| **a).count() as f64 * cell_area(&grid);
    let per_mode_2sigma = 2.0 * PI * 2.0f64.powi(2);
    assert!(area > 2.0 * per_mode_2sigma, "area {area}");
    // One region spanning both modes and the empty space between them.
    for (x, y) in [(-offset, -offset), (offset, offset), (0.0, 0.0)] {
        assert!(score(&ee, x, y) >= theta);
    }

    for cfg in [
        ClassifierConfig::Sv1c(Sv1cParams::default()),
        ClassifierConfig::If(IfParams {
            seed: RngSeed(8),
            ..IfParams::default()
        }),
    ] {
        let (p, _) = fit(&train, &cfg);
        let mid = score(&p, 0.0, 0.0);
        assert!(mid < score(&p, -offset, -offset), "{:?}", p.kind());
        assert!(mid < score(&p, offset, offset), "{:?}", p.kind());
    }

    // The SVM accepts part of each mode's 1-sigma disc.
    let (svm, _) = fit(&train, &ClassifierConfig::Sv1c(Sv1cParams::default()));
    let grid = decision_grid(&svm, &bounds, RES).unwrap();
    for c in [-offset, offset] {
        let hit = grid
            .rows()
            .any(|(x, y, s)| s >= 0.0 && (x - c).hypot(y - c) <= 1.0);
        assert!(hit);
    }
    assert!(score(&svm, 0.0, 0.0) < 0.0);
}
