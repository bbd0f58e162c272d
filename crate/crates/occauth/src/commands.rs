//! The subcommands as library functions. The binary only parses flags and
//! prints summaries.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde_json::json;

use occauth_core::classifiers::{
    decision_grid, ClassifierConfig, GridBounds, OccKind, OccPipeline,
};
use occauth_core::datastream::{generate_synthetic, generate_user_benchmark, SynthMode};
use occauth_core::evaluation::{
    assemble_reports, evaluate_user, prepare_users, select_threshold, Method, NoObserver,
    SuiteResult,
};
use occauth_core::fusion::score_correlation;
use occauth_core::stats::{pairwise_battery, BatteryRow, MIN_PAIRED};
use occauth_core::{FeatureVector, UserDataset};

use crate::config::{DataSource, ExperimentConfig};
use crate::csv_io::{
    generic_names, load_feature_csv, load_sensor_csv, sessions_to_users, write_feature_csv,
    write_points, FeatureTable,
};
use crate::error::{AppError, Result};
use crate::model_io::{load_model, save_model, ModelFile};
use crate::report::{
    read_per_user, write_aggregate, write_correlation, write_det_curves, write_per_user,
    write_stats, Manifest,
};

/// Environment variable capping the worker threads.
pub const THREADS_ENV: &str = "OCC_AUTH_THREADS";

/// Thread cap from `OCC_AUTH_THREADS`; unset, empty or `0` means no cap.
pub fn thread_cap() -> Result<Option<usize>> {
    match std::env::var(THREADS_ENV) {
        Err(_) => Ok(None),
        Ok(v) if v.trim().is_empty() => Ok(None),
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(0) => Ok(None),
            Ok(n) => Ok(Some(n)),
            Err(_) => Err(AppError::Config(format!("{THREADS_ENV}={v:?} is not a thread count"))),
        },
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(AppError::io(dir))
}

/// Loads every user of the configured data source.
pub fn load_users(cfg: &ExperimentConfig) -> Result<FeatureTable> {
    match &cfg.data {
        DataSource::Benchmark(b) => {
            let spec = b.spec(cfg.data_seed());
            let users = generate_user_benchmark(&spec)?.users;
            Ok(FeatureTable {
                names: generic_names("f", spec.feature_dim),
                users,
            })
        }
        DataSource::SensorCsv {
            path,
            window,
            rate_hint,
        } => {
            let log = load_sensor_csv(path, *rate_hint)?;
            Ok(FeatureTable {
                names: log.feature_names(),
                users: sessions_to_users(&log, window)?,
            })
        }
        DataSource::FeatureCsv { path } => load_feature_csv(path),
    }
}

/// Runs the protocol for every user on a thread pool. Each user's result
/// depends only on the protocol seed and the user's index, so the output is
/// the same for any thread count.
pub fn evaluate_parallel(
    datasets: &[UserDataset],
    cfg: &ExperimentConfig,
    methods: &[Method],
) -> Result<SuiteResult> {
    let pc = cfg.protocol_config();
    pc.validate()?;
    let users = prepare_users(datasets)?;
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = thread_cap()? {
        pool = pool.num_threads(n);
    }
    let pool = pool
        .build()
        .map_err(|e| AppError::Config(format!("cannot start worker threads: {e}")))?;
    let outcomes = pool.install(|| {
        (0..users.len())
            .into_par_iter()
            .map(|i| evaluate_user(&users, i, &cfg.suite, methods, &pc, &NoObserver))
            .collect::<occauth_core::Result<Vec<_>>>()
    })?;
    Ok(assemble_reports(methods, outcomes, &pc)?)
}

/// Everything `run` produced.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub result: SuiteResult,
    pub battery: Vec<BatteryRow>,
    /// Result files, excluding the manifest.
    pub files: Vec<PathBuf>,
    pub manifest: PathBuf,
}

/// Pairs of single-classifier reports, in report order.
pub fn single_pairs(labels: &[String]) -> Vec<(String, String)> {
    let singles: Vec<&String> = labels
        .iter()
        .filter(|l| OccKind::parse(l).is_some())
        .collect();
    let mut out = Vec::new();
    for (i, a) in singles.iter().enumerate() {
        for b in &singles[i + 1..] {
            out.push(((*a).clone(), (*b).clone()));
        }
    }
    out
}

pub fn cmd_run(cfg: &ExperimentConfig) -> Result<RunOutput> {
    let out = &cfg.out;
    create_dir(out)?;
    let table = load_users(cfg)?;
    let methods = cfg.methods()?;
    let result = evaluate_parallel(&table.users, cfg, &methods)?;
    for e in &result.excluded {
        log::warn!("user {} excluded: {}", e.user_id, e.reason);
    }

    let mut files = Vec::new();
    let per_user = out.join("per_user.csv");
    write_per_user(&per_user, &result.reports)?;
    files.push(per_user);
    let aggregate = out.join("aggregate.csv");
    write_aggregate(&aggregate, &result.reports)?;
    files.push(aggregate);
    files.extend(write_det_curves(&out.join("det"), &result.reports)?);

    let kinds: Vec<OccKind> = result.users[0].kinds.iter().map(|k| k.kind).collect();
    let table_cols = result.pooled_score_table(&kinds, cfg.suite.norm)?;
    let corr = score_correlation(&table_cols)?;
    let correlation = out.join("correlation.csv");
    write_correlation(&correlation, &kinds, &corr)?;
    files.push(correlation);

    let labels: Vec<String> = result.reports.iter().map(|r| r.method.clone()).collect();
    let battery = if result.users.len() >= MIN_PAIRED {
        pairwise_battery(&result.reports, &single_pairs(&labels))?
    } else {
        log::warn!(
            "{} evaluated users; the statistical battery needs at least {MIN_PAIRED}",
            result.users.len()
        );
        Vec::new()
    };
    let stats = out.join("stats.csv");
    write_stats(&stats, &battery)?;
    files.push(stats);

    let manifest_path = out.join("manifest.json");
    let mut manifest = Manifest::new("run", cfg.seed, cfg);
    manifest.add_files(out, &files);
    manifest.details = json!({
        "methods": labels,
        "features": table.names,
        "n_users": result.users.len(),
        "excluded": result
            .excluded
            .iter()
            .map(|e| json!({ "user_id": e.user_id, "reason": e.reason }))
            .collect::<Vec<_>>(),
    });
    manifest.write(&manifest_path)?;
    Ok(RunOutput {
        result,
        battery,
        files,
        manifest: manifest_path,
    })
}

#[derive(Debug, Clone)]
pub struct SynthOutput {
    pub genuine: Vec<FeatureVector>,
    pub outliers: Vec<FeatureVector>,
    pub n_modes: usize,
    pub files: Vec<PathBuf>,
}

/// Writes `synth/genuine.csv`, `synth/outliers.csv` and a manifest.
pub fn cmd_synth(cfg: &ExperimentConfig) -> Result<SynthOutput> {
    let dir = cfg.out.join("synth");
    create_dir(&dir)?;
    let spec = cfg.synth.spec(cfg.synth_seed());
    let (genuine, outliers) = generate_synthetic(&spec)?;
    let dim = spec.dim();
    let files = vec![dir.join("genuine.csv"), dir.join("outliers.csv")];
    write_points(&files[0], &genuine, dim)?;
    write_points(&files[1], &outliers, dim)?;

    let mut manifest = Manifest::new("synth", cfg.seed, &cfg.synth);
    manifest.add_files(&dir, &files);
    manifest.details = json!({
        "mode": match spec.mode {
            SynthMode::Unimodal => "unimodal",
            SynthMode::Multimodal => "multimodal",
        },
        "n_modes": spec.modes.len(),
        "modes": spec.modes,
        "dim": dim,
        "n_genuine": genuine.len(),
        "n_outliers": outliers.len(),
        "synth_seed": spec.seed.0,
    });
    manifest.write(&dir.join("manifest.json"))?;
    Ok(SynthOutput {
        genuine,
        outliers,
        n_modes: spec.modes.len(),
        files,
    })
}

/// Windows a sensor log into `ingest/features.csv`. `input` overrides the
/// configured sensor source.
pub fn cmd_ingest(cfg: &ExperimentConfig, input: Option<&Path>) -> Result<(FeatureTable, PathBuf)> {
    let (path, window, rate_hint) = match (&cfg.data, input) {
        (DataSource::SensorCsv { window, rate_hint, .. }, Some(p)) => (p.to_path_buf(), *window, *rate_hint),
        (DataSource::SensorCsv { path, window, rate_hint }, None) => (path.clone(), *window, *rate_hint),
        (_, Some(p)) => (p.to_path_buf(), Default::default(), 0.0),
        (_, None) => {
            return Err(AppError::Config(
                "ingest needs a sensor CSV: pass --input or set data.source = \"sensor_csv\"".into(),
            ))
        }
    };
    let log = load_sensor_csv(&path, rate_hint)?;
    let table = FeatureTable {
        names: log.feature_names(),
        users: sessions_to_users(&log, &window)?,
    };
    let dir = cfg.out.join("ingest");
    create_dir(&dir)?;
    let features = dir.join("features.csv");
    write_feature_csv(&features, &table)?;

    let mut manifest = Manifest::new("ingest", cfg.seed, &window);
    manifest.add_files(&dir, [&features]);
    manifest.details = json!({
        "input": path.to_string_lossy(),
        "channels": log.channels,
        "sessions": log.sessions.len(),
        "users": table.users.iter().map(|u| json!({
            "user_id": u.user_id,
            "train": u.train_genuine.len(),
            "test": u.test_genuine.len(),
        })).collect::<Vec<_>>(),
    });
    manifest.write(&dir.join("manifest.json"))?;
    Ok((table, features))
}

/// Grid-ready configuration of `kind`: the envelope runs without PCA so
/// that its ellipse lives in the plotted plane.
fn grid_classifier(cfg: &ExperimentConfig, kind: OccKind) -> ClassifierConfig {
    let seed = cfg.synth_seed().derive(1 + kind as u64);
    match cfg.suite.classifier(kind).with_seed(seed) {
        ClassifierConfig::Ee(mut p) => {
            p.pca_keep = None;
            ClassifierConfig::Ee(p)
        }
        c => c,
    }
}

fn write_grid(path: &Path, grid: &occauth_core::classifiers::ScoreGrid) -> Result<()> {
    let mut w = crate::csv_io::csv_writer(path)?;
    w.write_record(["x", "y", "score"]).map_err(AppError::csv(path))?;
    for (x, y, s) in grid.rows() {
        w.write_record([
            crate::csv_io::fmt_f64(x),
            crate::csv_io::fmt_f64(y),
            crate::csv_io::fmt_f64(s),
        ])
        .map_err(AppError::csv(path))?;
    }
    crate::csv_io::flush(w, path)
}

/// Decision grids over the configured synthetic data. Scores are shifted by
/// the acceptance threshold, so the zero contour is the decision boundary.
/// Without `model`, every configured classifier is fitted on the synthetic
/// genuine sample and saved next to its grid; with `model`, that saved
/// model is evaluated instead.
pub fn cmd_grid(cfg: &ExperimentConfig, model: Option<&Path>) -> Result<Vec<PathBuf>> {
    let dir = cfg.out.join("grid");
    create_dir(&dir)?;
    let spec = cfg.synth.spec(cfg.synth_seed());
    let (genuine, outliers) = generate_synthetic(&spec)?;
    let bounds = GridBounds::around(&genuine, cfg.grid.pad)?;
    let res = cfg.grid.resolution;
    let mut files = Vec::new();

    match model {
        Some(path) => {
            let m = load_model(path)?;
            let grid = decision_grid(&m.pipeline, &bounds, res)?.shifted(m.threshold.unwrap_or(0.0));
            let stem = path.file_stem().map_or("model".into(), |s| s.to_string_lossy());
            let out = dir.join(format!("{}.csv", stem.trim_end_matches(".model")));
            write_grid(&out, &grid)?;
            files.push(out);
        }
        None => {
            let points = dir.join("points.csv");
            write_points(&points, &genuine, spec.dim())?;
            files.push(points);
            if !outliers.is_empty() {
                let p = dir.join("outliers.csv");
                write_points(&p, &outliers, spec.dim())?;
                files.push(p);
            }
            let mut kinds = cfg.classifiers.clone();
            kinds.sort();
            kinds.dedup();
            let fitted = kinds
                .par_iter()
                .map(|&kind| {
                    let p = OccPipeline::fit(&genuine, &grid_classifier(cfg, kind))?;
                    let theta = select_threshold(
                        &p.training_scores(&genuine)?,
                        cfg.protocol.threshold_quantile,
                    )?;
                    let grid = decision_grid(&p, &bounds, res)?.shifted(theta);
                    Ok((kind, p, theta, grid))
                })
                .collect::<occauth_core::Result<Vec<_>>>()?;
            for (kind, p, theta, grid) in fitted {
                for w in p.warnings() {
                    log::warn!("{kind}: {w}");
                }
                let name = kind.label().to_ascii_lowercase();
                let out = dir.join(format!("{name}.csv"));
                write_grid(&out, &grid)?;
                let model_path = dir.join(format!("{name}.model.json"));
                save_model(&model_path, &ModelFile::new(p, Some(theta)))?;
                files.push(out);
                files.push(model_path);
            }
        }
    }

    let mut manifest = Manifest::new("grid", cfg.seed, cfg);
    manifest.add_files(&dir, &files);
    manifest.details = json!({ "bounds": bounds, "resolution": res });
    manifest.write(&dir.join("manifest.json"))?;
    Ok(files)
}

/// Runs the battery on a saved `per_user.csv` and writes `stats/stats.csv`.
/// Without explicit pairs, every pair of single classifiers is tested, or
/// every pair of methods when fewer than two singles are present.
pub fn cmd_stats(
    cfg: &ExperimentConfig,
    per_user: &Path,
    pairs: Option<Vec<(String, String)>>,
) -> Result<(Vec<BatteryRow>, PathBuf)> {
    let reports = read_per_user(per_user)?;
    let labels: Vec<String> = reports.iter().map(|r| r.method.clone()).collect();
    let pairs = pairs.unwrap_or_else(|| {
        let singles = single_pairs(&labels);
        if !singles.is_empty() {
            return singles;
        }
        let mut all = Vec::new();
        for (i, a) in labels.iter().enumerate() {
            for b in &labels[i + 1..] {
                all.push((a.clone(), b.clone()));
            }
        }
        all
    });
    let rows = pairwise_battery(&reports, &pairs)?;
    let dir = cfg.out.join("stats");
    create_dir(&dir)?;
    let out = dir.join("stats.csv");
    write_stats(&out, &rows)?;
    Ok((rows, out))
}
