//! Experiment runner for `occauth-core`: CSV ingestion, TOML experiment
//! configs, versioned model files, report writers and the subcommands
//! behind the `occauth` binary.
//!
//! ```no_run
//! use occauth::{cmd_run, ExperimentConfig};
//!
//! let mut cfg = ExperimentConfig::default();
//! cfg.out = "results".into();
//! let run = cmd_run(&cfg)?;
//! for r in &run.result.reports {
//!     println!("{} HTER {:.2}", r.method, r.aggregate.hter);
//! }
//! # Ok::<(), occauth::AppError>(())
//! ```

pub mod commands;
pub mod config;
pub mod csv_io;
pub mod error;
pub mod model_io;
pub mod report;

pub use commands::{cmd_grid, cmd_ingest, cmd_run, cmd_stats, cmd_synth, RunOutput, SynthOutput};
pub use config::{ExperimentConfig, FusionChoice, LevelChoice, Overrides};
pub use error::{AppError, Result};
