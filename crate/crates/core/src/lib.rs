//! One-class classifiers for genuine-only continuous authentication.
//!
//! The crate is `no_std` (with `alloc`) and holds every numerical piece of the
//! pipeline:
//!
//! * [`datastream`]: synthetic data, sliding windows and per-window features,
//! * [`preprocess`]: standardization and PCA fitted on genuine training data,
//! * [`classifiers`]: one-class SVM, elliptic envelope (FAST-MCD), isolation
//!   forest and local outlier factor behind a single scoring interface,
//! * [`fusion`]: score normalization, score/decision fusion and stacking,
//! * [`evaluation`]: thresholds, FAR/FRR/HTER/AUC, DET sweeps and the per-user
//!   verification protocol,
//! * [`stats`]: KS, Wilcoxon signed-rank and Friedman tests over per-user HTERs.
//!
//! Every score produced here follows one orientation: higher means more
//! genuine, and a sample is accepted when its score is at least the threshold.
//!
//! File formats, the experiment runner and the command line live in the
//! companion `occauth` crate.

#![no_std]
// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
// Index loops read closer to the matrix formulas they implement.
#![allow(clippy::needless_range_loop)]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod classifiers;
pub mod datastream;
pub mod error;
pub mod evaluation;
pub mod fusion;
pub mod linalg;
pub(crate) mod math;
pub mod preprocess;
pub mod special;
pub mod stats;
pub mod types;

pub use error::{Error, Result};
pub use types::{compare_scores, Decision, FeatureVector, GenuinenessScore, RngSeed, UserDataset};
