//! Result files written by `run` and `stats`.
//!
//! | file | columns |
//! |------|---------|
//! | `per_user.csv` | method, user_id, threshold, far, frr, hter, auc, auc_from_hter, n_genuine, n_impostor |
//! | `aggregate.csv` | method, far, frr, hter, auc, auc_from_hter, n_users |
//! | `det/<method>.csv` | threshold, far, frr |
//! | `correlation.csv` | classifier, then one column per classifier |
//! | `stats.csv` | pair, a, b, then statistic / p / note for KS, Wilcoxon and Friedman |
//!
//! Numbers use the shortest decimal form that round-trips, so identical
//! results give byte-identical files.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;

use occauth_core::classifiers::OccKind;
use occauth_core::evaluation::{Aggregate, EvalReport, UserMetrics};
use occauth_core::fusion::CorrelationMatrix;
use occauth_core::stats::{BatteryEntry, BatteryRow, Caveat};

use crate::csv_io::{csv_writer, flush, fmt_f64};
use crate::error::{AppError, Result};

const PER_USER_HEADER: [&str; 10] = [
    "method",
    "user_id",
    "threshold",
    "far",
    "frr",
    "hter",
    "auc",
    "auc_from_hter",
    "n_genuine",
    "n_impostor",
];

/// File-name form of a method label, e.g. `score:IF+LOF` -> `score_if-lof`.
pub fn method_slug(label: &str) -> String {
    label.to_ascii_lowercase().replace(':', "_").replace('+', "-")
}

pub fn write_per_user(path: &Path, reports: &[EvalReport]) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(PER_USER_HEADER).map_err(AppError::csv(path))?;
    for r in reports {
        for u in &r.per_user {
            w.write_record([
                r.method.clone(),
                u.user_id.clone(),
                fmt_f64(u.threshold),
                fmt_f64(u.far),
                fmt_f64(u.frr),
                fmt_f64(u.hter),
                fmt_f64(u.auc),
                fmt_f64(u.auc_from_hter),
                u.n_genuine.to_string(),
                u.n_impostor.to_string(),
            ])
            .map_err(AppError::csv(path))?;
        }
    }
    flush(w, path)
}

pub fn write_aggregate(path: &Path, reports: &[EvalReport]) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(["method", "far", "frr", "hter", "auc", "auc_from_hter", "n_users"])
        .map_err(AppError::csv(path))?;
    for r in reports {
        let a = &r.aggregate;
        w.write_record([
            r.method.clone(),
            fmt_f64(a.far),
            fmt_f64(a.frr),
            fmt_f64(a.hter),
            fmt_f64(a.auc),
            fmt_f64(a.auc_from_hter),
            a.n_users.to_string(),
        ])
        .map_err(AppError::csv(path))?;
    }
    flush(w, path)
}

/// Writes `det/<slug>.csv` for every report and returns the paths.
pub fn write_det_curves(dir: &Path, reports: &[EvalReport]) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(AppError::io(dir))?;
    reports
        .iter()
        .map(|r| {
            let path = dir.join(format!("{}.csv", method_slug(&r.method)));
            let mut w = csv_writer(&path)?;
            w.write_record(["threshold", "far", "frr"])
                .map_err(AppError::csv(&path))?;
            for p in &r.det {
                w.write_record([fmt_f64(p.threshold), fmt_f64(p.far), fmt_f64(p.frr)])
                    .map_err(AppError::csv(&path))?;
            }
            flush(w, &path)?;
            Ok(path)
        })
        .collect()
}

/// Square correlation table; undefined entries (a constant column) are empty.
pub fn write_correlation(path: &Path, kinds: &[OccKind], m: &CorrelationMatrix) -> Result<()> {
    let mut w = csv_writer(path)?;
    let mut header = vec!["classifier".to_string()];
    header.extend(kinds.iter().map(|k| k.label().to_string()));
    w.write_record(&header).map_err(AppError::csv(path))?;
    for (i, k) in kinds.iter().enumerate() {
        let mut rec = vec![k.label().to_string()];
        rec.extend((0..kinds.len()).map(|j| m.get(i, j).map(fmt_f64).unwrap_or_default()));
        w.write_record(&rec).map_err(AppError::csv(path))?;
    }
    flush(w, path)
}

pub const STATS_HEADER: [&str; 12] = [
    "pair",
    "a",
    "b",
    "ks_statistic",
    "ks_p",
    "ks_note",
    "wilcoxon_statistic",
    "wilcoxon_p",
    "wilcoxon_note",
    "friedman_statistic",
    "friedman_p",
    "friedman_note",
];

fn caveat_note(c: Option<Caveat>) -> &'static str {
    match c {
        None => "",
        Some(Caveat::EstimatedParameters) => "estimated_parameters",
        Some(Caveat::NormalApproximation) => "normal_approximation",
        Some(Caveat::SmallSample) => "small_sample",
        Some(Caveat::NoVariation) => "no_variation",
    }
}

fn entry_cells(e: &BatteryEntry) -> [String; 3] {
    match e {
        BatteryEntry::Test(t) => [
            fmt_f64(t.statistic),
            fmt_f64(t.p_value),
            caveat_note(t.caveat).to_string(),
        ],
        BatteryEntry::Degenerate(msg) => [String::new(), String::new(), format!("degenerate: {msg}")],
    }
}

/// Writes the battery; an empty `rows` gives a header-only file.
pub fn write_stats(path: &Path, rows: &[BatteryRow]) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(STATS_HEADER).map_err(AppError::csv(path))?;
    for r in rows {
        let mut rec = vec![format!("{} vs {}", r.a, r.b), r.a.clone(), r.b.clone()];
        for e in [&r.ks, &r.wilcoxon, &r.friedman] {
            rec.extend(entry_cells(e));
        }
        w.write_record(&rec).map_err(AppError::csv(path))?;
    }
    flush(w, path)
}

/// Rebuilds per-method reports from a `per_user.csv`, keeping method order
/// of first appearance. DET curves are not stored there and come back empty.
pub fn read_per_user(path: &Path) -> Result<Vec<EvalReport>> {
    let f = std::fs::File::open(path).map_err(AppError::io(path))?;
    let mut rdr = csv::Reader::from_reader(f);
    let headers = rdr.headers().map_err(AppError::csv(path))?.clone();
    let cols = PER_USER_HEADER
        .iter()
        .map(|name| {
            headers.iter().position(|h| h == *name).ok_or_else(|| AppError::Schema {
                path: path.into(),
                column: (*name).into(),
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let mut order: Vec<String> = Vec::new();
    let mut by_method: BTreeMap<String, Vec<UserMetrics>> = BTreeMap::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(AppError::csv(path))?;
        let row = rec.position().map_or(i + 2, |p| p.line() as usize);
        let field = |c: usize| &rec[cols[c]];
        let num = |c: usize| -> Result<f64> {
            field(c).parse::<f64>().map_err(|_| AppError::Parse {
                path: path.into(),
                row,
                column: PER_USER_HEADER[c].into(),
                value: field(c).into(),
            })
        };
        let count = |c: usize| -> Result<usize> {
            field(c).parse::<usize>().map_err(|_| AppError::Parse {
                path: path.into(),
                row,
                column: PER_USER_HEADER[c].into(),
                value: field(c).into(),
            })
        };
        let method = field(0).to_string();
        let m = UserMetrics {
            user_id: field(1).to_string(),
            threshold: num(2)?,
            far: num(3)?,
            frr: num(4)?,
            hter: num(5)?,
            auc: num(6)?,
            auc_from_hter: num(7)?,
            n_genuine: count(8)?,
            n_impostor: count(9)?,
        };
        if !by_method.contains_key(&method) {
            order.push(method.clone());
        }
        by_method.entry(method).or_default().push(m);
    }
    Ok(order
        .into_iter()
        .map(|method| {
            let mut per_user = by_method.remove(&method).unwrap_or_default();
            per_user.sort_by(|a, b| a.user_id.cmp(&b.user_id));
            EvalReport {
                method,
                aggregate: Aggregate::from_users(&per_user),
                per_user,
                det: Vec::new(),
                excluded: Vec::new(),
            }
        })
        .collect())
}

/// Run record written next to the results. It is the only output that
/// carries a wall-clock timestamp.
#[derive(Debug, Clone, Serialize)]
pub struct Manifest<'a, C: Serialize> {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: &'a str,
    pub seed: u64,
    pub created_unix_s: u64,
    pub config: &'a C,
    pub files: Vec<String>,
    #[serde(skip_serializing_if = "serde_json::Value::is_null")]
    pub details: serde_json::Value,
}

impl<'a, C: Serialize> Manifest<'a, C> {
    pub fn new(command: &'a str, seed: u64, config: &'a C) -> Self {
        Self {
            tool: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            command,
            seed,
            created_unix_s: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map_or(0, |d| d.as_secs()),
            config,
            files: Vec::new(),
            details: serde_json::Value::Null,
        }
    }

    /// Records `paths` relative to `root`.
    pub fn add_files<'p>(&mut self, root: &Path, paths: impl IntoIterator<Item = &'p PathBuf>) {
        for p in paths {
            let rel = p.strip_prefix(root).unwrap_or(p);
            self.files.push(rel.to_string_lossy().replace('\\', "/"));
        }
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).map_err(AppError::json(path))?;
        std::fs::write(path, text + "\n").map_err(AppError::io(path))
    }
}
