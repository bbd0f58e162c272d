use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use occauth::config::{DataSource, FusionChoice, LevelChoice, Overrides};
use occauth::{cmd_grid, cmd_ingest, cmd_run, cmd_stats, cmd_synth, AppError, ExperimentConfig};
use occauth_core::classifiers::OccKind;
use occauth_core::datastream::WindowSpec;
use occauth_core::fusion::NormMethod;

/// `println!` that ignores a closed stdout (e.g. when piped into `head`).
macro_rules! say {
    ($($t:tt)*) => {{
        use std::io::Write;
        let _ = writeln!(std::io::stdout(), $($t)*);
    }};
}

/// One-class classifier evaluation for genuine-only continuous authentication.
#[derive(Parser)]
#[command(name = "occauth", version)]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct GlobalArgs {
    /// TOML experiment config; flags override its values.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Root seed for data generation and the protocol.
    #[arg(long, global = true, value_name = "U64")]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Classifier(s) to report; repeat or separate with commas.
    #[arg(long, global = true, value_delimiter = ',', value_parser = parse_kind)]
    classifier: Vec<OccKind>,
    /// `none`, `all`, or a list such as `sv1c+lof,if+lof+sv1c`.
    #[arg(long, global = true, value_name = "none|all|LIST", value_parser = parse_fusion)]
    fusion: Option<FusionChoice>,
    /// Fusion level: score, decision or both.
    #[arg(long, global = true, value_parser = parse_level)]
    fusion_level: Option<LevelChoice>,
    /// Also evaluate the stacked one-class SVM over all four classifiers.
    #[arg(long, global = true)]
    stacker: bool,
    /// Score normalization: logistic, tanh or softsign.
    #[arg(long, global = true, value_parser = parse_norm)]
    norm: Option<NormMethod>,
    /// Genuine-training-score quantile used as the acceptance threshold.
    #[arg(long, global = true, value_name = "F")]
    threshold_quantile: Option<f64>,
    /// Impostor samples borrowed per user.
    #[arg(long, global = true, value_name = "N")]
    impostors_per_user: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate 2-D synthetic genuine and outlier samples.
    Synth,
    /// Window a sensor CSV into a feature CSV.
    Ingest {
        /// Sensor CSV (`user_id,session,timestamp_s,ch1,...`).
        #[arg(long)]
        input: Option<PathBuf>,
        /// Window length in seconds.
        #[arg(long)]
        window_length: Option<f64>,
        /// Window step in seconds.
        #[arg(long)]
        window_step: Option<f64>,
    },
    /// Train, evaluate, fuse and write reports.
    Run {
        /// Use this feature CSV as the data source.
        #[arg(long, conflicts_with = "sensors")]
        features: Option<PathBuf>,
        /// Use this sensor CSV as the data source.
        #[arg(long)]
        sensors: Option<PathBuf>,
    },
    /// Emit decision grids (`x,y,score`) for contour plots.
    Grid {
        /// Saved model file to grid instead of fitting the classifiers.
        #[arg(long)]
        model: Option<PathBuf>,
        /// Grid points per axis.
        #[arg(long)]
        resolution: Option<usize>,
    },
    /// Run KS, Wilcoxon and Friedman tests on a per-user report.
    Stats {
        /// `per_user.csv` from a previous run; defaults to the one under --out.
        #[arg(long)]
        per_user: Option<PathBuf>,
        /// Method pair `A,B` (report labels); repeatable. Defaults to all single-classifier pairs.
        #[arg(long, value_parser = parse_pair)]
        pair: Vec<(String, String)>,
    },
}

fn parse_kind(s: &str) -> Result<OccKind, String> {
    OccKind::parse(s).ok_or_else(|| format!("unknown classifier {s:?} (sv1c, ee, if, lof)"))
}

fn parse_fusion(s: &str) -> Result<FusionChoice, String> {
    FusionChoice::parse(s).map_err(|e| e.to_string())
}

fn parse_level(s: &str) -> Result<LevelChoice, String> {
    LevelChoice::parse(s).ok_or_else(|| format!("unknown fusion level {s:?} (score, decision, both)"))
}

fn parse_norm(s: &str) -> Result<NormMethod, String> {
    NormMethod::parse(s).ok_or_else(|| format!("unknown normalization {s:?} (logistic, tanh, softsign)"))
}

fn parse_pair(s: &str) -> Result<(String, String), String> {
    let (a, b) = s
        .split_once(',')
        .filter(|(a, b)| !a.is_empty() && !b.is_empty())
        .ok_or_else(|| format!("expected A,B, got {s:?}"))?;
    Ok((a.to_string(), b.to_string()))
}

fn load_config(g: &GlobalArgs) -> Result<ExperimentConfig, AppError> {
    let mut cfg = match &g.config {
        Some(path) => {
            let mut c = ExperimentConfig::load(path)?;
            c.resolve_paths(path.parent().unwrap_or(Path::new(".")));
            c
        }
        None => ExperimentConfig::default(),
    };
    cfg.apply(&Overrides {
        seed: g.seed,
        out: g.out.clone(),
        classifiers: (!g.classifier.is_empty()).then(|| g.classifier.clone()),
        fusion: g.fusion.clone(),
        fusion_level: g.fusion_level,
        stacker: g.stacker,
        norm: g.norm,
        threshold_quantile: g.threshold_quantile,
        impostors_per_user: g.impostors_per_user,
    });
    Ok(cfg)
}

fn run(cli: Cli) -> Result<(), AppError> {
    let mut cfg = load_config(&cli.global)?;
    match cli.command {
        Command::Synth => {
            let s = cmd_synth(&cfg)?;
            say!(
                "{} genuine and {} outlier samples from {} mode(s) in {}",
                s.genuine.len(),
                s.outliers.len(),
                s.n_modes,
                cfg.out.join("synth").display()
            );
        }
        Command::Ingest {
            input,
            window_length,
            window_step,
        } => {
            if window_length.is_some() || window_step.is_some() {
                let path = match (&cfg.data, &input) {
                    (_, Some(p)) => p.clone(),
                    (DataSource::SensorCsv { path, .. }, None) => path.clone(),
                    _ => return Err(AppError::Config("ingest needs --input".into())),
                };
                let d = WindowSpec::default();
                let window = WindowSpec::new(window_length.unwrap_or(d.length_s), window_step.unwrap_or(d.step_s))?;
                let rate_hint = match &cfg.data {
                    DataSource::SensorCsv { rate_hint, .. } => *rate_hint,
                    _ => 0.0,
                };
                cfg.data = DataSource::SensorCsv { path, window, rate_hint };
            }
            let (table, path) = cmd_ingest(&cfg, input.as_deref())?;
            let windows: usize = table
                .users
                .iter()
                .map(|u| u.train_genuine.len() + u.test_genuine.len())
                .sum();
            say!("{} users, {windows} windows -> {}", table.users.len(), path.display());
        }
        Command::Run { features, sensors } => {
            if let Some(path) = features {
                cfg.data = DataSource::FeatureCsv { path };
            } else if let Some(path) = sensors {
                cfg.data = DataSource::SensorCsv {
                    path,
                    window: WindowSpec::default(),
                    rate_hint: 0.0,
                };
            }
            let out = cmd_run(&cfg)?;
            say!("{:<28} {:>7} {:>7} {:>7} {:>7}", "method", "FAR", "FRR", "HTER", "AUC");
            for r in &out.result.reports {
                let a = &r.aggregate;
                say!(
                    "{:<28} {:>7.2} {:>7.2} {:>7.2} {:>7.2}",
                    r.method, a.far, a.frr, a.hter, a.auc
                );
            }
            say!("results in {}", cfg.out.display());
        }
        Command::Grid { model, resolution } => {
            if let Some(r) = resolution {
                cfg.grid.resolution = r;
            }
            for f in cmd_grid(&cfg, model.as_deref())? {
                say!("{}", f.display());
            }
        }
        Command::Stats { per_user, pair } => {
            let per_user = per_user.unwrap_or_else(|| cfg.out.join("per_user.csv"));
            let pairs = (!pair.is_empty()).then_some(pair);
            let (rows, path) = cmd_stats(&cfg, &per_user, pairs)?;
            let p = |e: &occauth_core::stats::BatteryEntry| {
                e.p_value().map_or("-".to_string(), |v| format!("{v:.4}"))
            };
            say!("{:<20} {:>8} {:>8} {:>8}", "pair", "KS", "Wilc.", "Fried.");
            for r in &rows {
                say!(
                    "{:<20} {:>8} {:>8} {:>8}",
                    format!("{} vs {}", r.a, r.b),
                    p(&r.ks),
                    p(&r.wilcoxon),
                    p(&r.friedman)
                );
            }
            say!("written to {}", path.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
