//! Declarative experiment configuration (TOML) and flag overrides.
//!
//! Every random stream is derived from the single root `seed`, so a run is
//! reproducible from the config file and the seed alone.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use occauth_core::classifiers::OccKind;
use occauth_core::datastream::{BenchmarkSpec, SynthMode, SynthSpec, WindowSpec};
use occauth_core::evaluation::{
    Method, ProtocolConfig, SuiteConfig, DEFAULT_DET_POINTS, DEFAULT_THRESHOLD_QUANTILE,
};
use occauth_core::fusion::{enumerate_fusions, NormMethod};
use occauth_core::RngSeed;

use crate::error::{AppError, Result};

pub const DEFAULT_SEED: u64 = 2018;

/// Seed streams derived from the root seed.
const STREAM_DATA: u64 = 0;
const STREAM_PROTOCOL: u64 = 1;
const STREAM_SYNTH: u64 = 2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub out: PathBuf,
    pub data: DataSource,
    /// Classifiers reported on their own.
    pub classifiers: Vec<OccKind>,
    pub suite: SuiteConfig,
    pub protocol: ProtocolSettings,
    pub fusion: FusionSettings,
    pub synth: SynthSettings,
    pub grid: GridSettings,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: DEFAULT_SEED,
            out: PathBuf::from("out"),
            data: DataSource::default(),
            classifiers: OccKind::ALL.to_vec(),
            suite: SuiteConfig::default(),
            protocol: ProtocolSettings::default(),
            fusion: FusionSettings::default(),
            synth: SynthSettings::default(),
            grid: GridSettings::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case", deny_unknown_fields)]
pub enum DataSource {
    /// Seeded multi-user Gaussian benchmark.
    Benchmark(BenchmarkSettings),
    /// Raw sensor log, windowed and featurized on load.
    SensorCsv {
        path: PathBuf,
        #[serde(default)]
        window: WindowSpec,
        /// Samples per second, `0` when unknown.
        #[serde(default)]
        rate_hint: f64,
    },
    /// Precomputed feature table.
    FeatureCsv { path: PathBuf },
}

impl Default for DataSource {
    fn default() -> Self {
        DataSource::Benchmark(BenchmarkSettings::default())
    }
}

/// Benchmark shape; the seed comes from the experiment seed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchmarkSettings {
    pub n_users: usize,
    pub latent_dim: usize,
    pub feature_dim: usize,
    pub separation: f64,
    pub within_std: f64,
    pub noise_std: f64,
    pub n_train: usize,
    pub n_test: usize,
}

impl Default for BenchmarkSettings {
    fn default() -> Self {
        let b = BenchmarkSpec::default();
        Self {
            n_users: b.n_users,
            latent_dim: b.latent_dim,
            feature_dim: b.feature_dim,
            separation: b.separation,
            within_std: b.within_std,
            noise_std: b.noise_std,
            n_train: b.n_train,
            n_test: b.n_test,
        }
    }
}

impl BenchmarkSettings {
    pub fn spec(&self, seed: RngSeed) -> BenchmarkSpec {
        BenchmarkSpec {
            n_users: self.n_users,
            latent_dim: self.latent_dim,
            feature_dim: self.feature_dim,
            separation: self.separation,
            within_std: self.within_std,
            noise_std: self.noise_std,
            n_train: self.n_train,
            n_test: self.n_test,
            seed,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProtocolSettings {
    pub impostors_per_user: Option<usize>,
    pub threshold_quantile: f64,
    pub det_points: usize,
}

impl Default for ProtocolSettings {
    fn default() -> Self {
        Self {
            impostors_per_user: None,
            threshold_quantile: DEFAULT_THRESHOLD_QUANTILE,
            det_points: DEFAULT_DET_POINTS,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum LevelChoice {
    #[default]
    Score,
    Decision,
    Both,
}

impl LevelChoice {
    pub fn parse(s: &str) -> Option<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "score" => Some(LevelChoice::Score),
            "decision" => Some(LevelChoice::Decision),
            "both" => Some(LevelChoice::Both),
            _ => None,
        }
    }

    fn score(self) -> bool {
        self != LevelChoice::Decision
    }

    fn decision(self) -> bool {
        self != LevelChoice::Score
    }
}

/// Which fusions to evaluate: `none`, `all` (the 11 subsets of size two or
/// more) or a comma-separated list of `+`-joined members such as
/// `sv1c+lof,if+lof+sv1c`.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub enum FusionChoice {
    None,
    #[default]
    All,
    List(Vec<Vec<OccKind>>),
}

impl FusionChoice {
    pub fn parse(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "none" | "" => return Ok(FusionChoice::None),
            "all" => return Ok(FusionChoice::All),
            _ => {}
        }
        let list = s
            .split(',')
            .map(|group| {
                let mut members = group
                    .split('+')
                    .map(|k| {
                        OccKind::parse(k)
                            .ok_or_else(|| AppError::Config(format!("unknown classifier {k:?} in fusion {group:?}")))
                    })
                    .collect::<Result<Vec<_>>>()?;
                members.sort();
                Ok(members)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(FusionChoice::List(list))
    }

    pub fn subsets(&self) -> Vec<Vec<OccKind>> {
        match self {
            FusionChoice::None => Vec::new(),
            FusionChoice::All => enumerate_fusions(),
            FusionChoice::List(l) => l.clone(),
        }
    }
}

impl fmt::Display for FusionChoice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FusionChoice::None => f.write_str("none"),
            FusionChoice::All => f.write_str("all"),
            FusionChoice::List(l) => {
                let groups: Vec<String> = l
                    .iter()
                    .map(|m| {
                        m.iter()
                            .map(|k| k.label().to_ascii_lowercase())
                            .collect::<Vec<_>>()
                            .join("+")
                    })
                    .collect();
                f.write_str(&groups.join(","))
            }
        }
    }
}

impl Serialize for FusionChoice {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for FusionChoice {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        FusionChoice::parse(&s).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct FusionSettings {
    pub members: FusionChoice,
    pub level: LevelChoice,
    /// Adds a meta one-class SVM over all four classifiers' scores.
    pub stacker: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSettings {
    pub mode: SynthMode,
    pub n_genuine: usize,
    /// Mode centers of the bimodal spec sit at `(-offset, -offset)` and
    /// `(offset, offset)`.
    pub offset: f64,
    pub outlier_fraction: f64,
}

impl Default for SynthSettings {
    fn default() -> Self {
        Self {
            mode: SynthMode::Unimodal,
            n_genuine: 500,
            offset: 3.0,
            outlier_fraction: 0.05,
        }
    }
}

impl SynthSettings {
    pub fn spec(&self, seed: RngSeed) -> SynthSpec {
        match self.mode {
            SynthMode::Unimodal => SynthSpec::unimodal_2d(self.n_genuine, self.outlier_fraction, seed),
            SynthMode::Multimodal => {
                SynthSpec::bimodal_2d(self.n_genuine, self.offset, self.outlier_fraction, seed)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSettings {
    pub resolution: usize,
    /// Padding around the data, as a fraction of its extent per side.
    pub pad: f64,
}

impl Default for GridSettings {
    fn default() -> Self {
        Self {
            resolution: 100,
            pad: 0.25,
        }
    }
}

/// Command-line values that win over the config file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub classifiers: Option<Vec<OccKind>>,
    pub fusion: Option<FusionChoice>,
    pub fusion_level: Option<LevelChoice>,
    pub stacker: bool,
    pub norm: Option<NormMethod>,
    pub threshold_quantile: Option<f64>,
    pub impostors_per_user: Option<usize>,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(AppError::io(path))?;
        Self::from_toml(&text, path)
    }

    pub fn from_toml(text: &str, origin: &Path) -> Result<Self> {
        toml::from_str(text).map_err(|source| AppError::Toml {
            path: origin.into(),
            source,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("experiment config always serializes")
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(v) = o.seed {
            self.seed = v;
        }
        if let Some(v) = &o.out {
            self.out = v.clone();
        }
        if let Some(v) = &o.classifiers {
            self.classifiers = v.clone();
        }
        if let Some(v) = &o.fusion {
            self.fusion.members = v.clone();
        }
        if let Some(v) = o.fusion_level {
            self.fusion.level = v;
        }
        if o.stacker {
            self.fusion.stacker = true;
        }
        if let Some(v) = o.norm {
            self.suite.norm = v;
        }
        if let Some(v) = o.threshold_quantile {
            self.protocol.threshold_quantile = v;
        }
        if let Some(v) = o.impostors_per_user {
            self.protocol.impostors_per_user = Some(v);
        }
    }

    pub fn root_seed(&self) -> RngSeed {
        RngSeed(self.seed)
    }

    pub fn data_seed(&self) -> RngSeed {
        self.root_seed().derive(STREAM_DATA)
    }

    pub fn synth_seed(&self) -> RngSeed {
        self.root_seed().derive(STREAM_SYNTH)
    }

    pub fn protocol_config(&self) -> ProtocolConfig {
        ProtocolConfig {
            impostors_per_user: self.protocol.impostors_per_user,
            threshold_quantile: self.protocol.threshold_quantile,
            det_points: self.protocol.det_points,
            rng: self.root_seed().derive(STREAM_PROTOCOL),
        }
    }

    /// Singles first, then score fusions, decision fusions and the stacker.
    pub fn methods(&self) -> Result<Vec<Method>> {
        if self.classifiers.is_empty() {
            return Err(AppError::Config("no classifiers selected".into()));
        }
        let mut singles = self.classifiers.clone();
        singles.sort();
        singles.dedup();
        let mut out: Vec<Method> = singles.into_iter().map(Method::single).collect();
        let subsets = self.fusion.members.subsets();
        if self.fusion.level.score() {
            out.extend(subsets.iter().map(|m| Method::ScoreFusion {
                members: m.clone(),
                weights: None,
            }));
        }
        if self.fusion.level.decision() {
            out.extend(
                subsets
                    .iter()
                    .map(|m| Method::DecisionFusion { members: m.clone() }),
            );
        }
        if self.fusion.stacker {
            out.push(Method::Stacked {
                members: OccKind::ALL.to_vec(),
            });
        }
        for m in &out {
            m.validate()?;
        }
        Ok(out)
    }

    /// Resolves a relative data path against the config file's directory.
    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        match &mut self.data {
            DataSource::SensorCsv { path, .. } | DataSource::FeatureCsv { path } => fix(path),
            DataSource::Benchmark(_) => {}
        }
    }
}
