//! Experiment configuration and checkpointed runs.
//!
//! A run directory holds `manifest.json`, `records.ndjson` and
//! `tables/<statistic>_<L>.csv`. Realizations are processed in batches; after
//! every batch the integer tally of the current level is written to the
//! manifest, so an interrupted run resumes exactly where it stopped.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::lattice::{DisorderLaw, DisorderSpec, SchemeKind, DEFAULT_DIMENSION_CAP};
use crate::process::{
    fit_power_law, sample_range, CountEstimator, CoveringConfig, EstimateRecord, Estimator,
    IndependenceEstimator, JointEstimator, LevelConfig, MinamiEstimator, MultiplicityEstimator,
    WegnerEstimator, VERSION, Z95,
};
use crate::spectral::{EnergyWindow, ScaledInterval};

pub const CAP_ENV: &str = "ANDERSON_DECORR_CAP";
pub const DEFAULT_BATCH_SIZE: u64 = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SchemeName {
    RankOne,
    Polymer,
    Fiber,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LawName {
    Uniform,
    Beta,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StatisticKind {
    Wegner,
    Minami,
    Decorrelate,
    Independence,
    Counts,
    Multiplicity,
}

impl StatisticKind {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Wegner => "wegner",
            Self::Minami => "minami",
            Self::Decorrelate => "decorrelate",
            Self::Independence => "independence",
            Self::Counts => "counts",
            Self::Multiplicity => "multiplicity",
        }
    }

    fn uses_covering(&self) -> bool {
        matches!(self, Self::Independence | Self::Counts)
    }

    fn uses_pair(&self) -> bool {
        matches!(self, Self::Decorrelate | Self::Independence)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
#[allow(non_snake_case)]
pub struct ModelSection {
    pub d: usize,
    pub L: Vec<u64>,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    /// Fixed cube half-side; overrides `alpha` when set.
    #[serde(default)]
    pub ell: Option<usize>,
    pub scheme: SchemeName,
    #[serde(default)]
    pub block: Option<usize>,
    #[serde(default)]
    pub m: Option<usize>,
    pub K: f64,
    #[serde(default = "default_law")]
    pub law: LawName,
    #[serde(default)]
    pub beta_a: Option<f64>,
}

fn default_alpha() -> f64 {
    0.5
}

fn default_law() -> LawName {
    LawName::Uniform
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
#[allow(non_snake_case)]
pub struct StatisticSection {
    pub kind: StatisticKind,
    #[serde(default)]
    pub E: Option<f64>,
    #[serde(default)]
    pub E_prime: Option<f64>,
    #[serde(default)]
    pub I: Option<[f64; 2]>,
    #[serde(default)]
    pub J: Option<[f64; 2]>,
    /// Rank threshold for Minami; defaults to the scheme rank.
    #[serde(default)]
    pub m: Option<usize>,
    /// Absolute energy window for the multiplicity census.
    #[serde(default)]
    pub window: Option<[f64; 2]>,
    #[serde(default)]
    pub gap_tolerance: Option<f64>,
    #[serde(default)]
    pub allow_close_energies: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    pub n_realizations: u64,
    pub seed: u64,
    #[serde(default = "default_workers")]
    pub workers: usize,
    #[serde(default)]
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub cap: Option<usize>,
    #[serde(default = "default_batch")]
    pub batch_size: u64,
}

fn default_workers() -> usize {
    1
}

fn default_batch() -> u64 {
    DEFAULT_BATCH_SIZE
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: ModelSection,
    pub statistic: StatisticSection,
    pub run: RunSection,
}

/// Cap from `ANDERSON_DECORR_CAP`, if set and parseable.
pub fn cap_from_env() -> Option<usize> {
    std::env::var(CAP_ENV).ok()?.trim().parse().ok()
}

impl ExperimentConfig {
    /// Parses TOML text without validating it.
    pub fn from_toml(text: &str) -> std::result::Result<Self, String> {
        toml::from_str(text).map_err(|e| e.to_string())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Effective dimension cap: `run.cap`, else the environment, else the default.
    pub fn cap(&self) -> usize {
        self.run.cap.or_else(cap_from_env).unwrap_or(DEFAULT_DIMENSION_CAP)
    }

    pub fn scheme_kind(&self) -> Result<SchemeKind> {
        match self.model.scheme {
            SchemeName::RankOne => Ok(SchemeKind::RankOne),
            SchemeName::Polymer => match self.model.block {
                Some(block) if block >= 1 => Ok(SchemeKind::Polymer { block }),
                _ => Err(Error::Scheme("polymer scheme needs block >= 1".into())),
            },
            SchemeName::Fiber => match self.model.m {
                Some(m) if m >= 1 => Ok(SchemeKind::Fiber { m }),
                _ => Err(Error::Scheme("fiber scheme needs m >= 1".into())),
            },
        }
    }

    pub fn disorder(&self) -> Result<DisorderSpec> {
        let law = match self.model.law {
            LawName::Uniform => DisorderLaw::Uniform,
            LawName::Beta => DisorderLaw::ScaledSymmetricBeta {
                a: self.model.beta_a.unwrap_or(1.0),
            },
        };
        DisorderSpec::new(law, self.model.K, self.run.seed)
    }

    /// Cube half-side at scale `L`.
    pub fn ell(&self, scale: u64) -> Result<usize> {
        match self.model.ell {
            Some(ell) => Ok(ell),
            None => crate::process::ell_for(scale, self.model.alpha),
        }
    }

    pub fn level(&self, scale: u64) -> Result<LevelConfig> {
        LevelConfig::new(
            self.model.d,
            scale,
            self.ell(scale)?,
            self.scheme_kind()?,
            self.disorder()?,
            self.cap(),
        )
    }

    pub fn gap_tolerance(&self) -> f64 {
        self.statistic
            .gap_tolerance
            .unwrap_or(1e-8 * (2.0 * self.model.d as f64 + self.model.K))
    }

    /// Every violated invariant, in a stable order.
    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        let m = &self.model;
        let s = &self.statistic;
        if m.d == 0 {
            v.push("model.d must be at least 1".to_string());
        }
        if m.L.is_empty() {
            v.push("model.L must list at least one scale".to_string());
        }
        if m.L.contains(&0) {
            v.push("model.L entries must be at least 1".to_string());
        }
        if !(m.K.is_finite() && m.K >= 0.0) {
            v.push(format!("model.K must be finite and >= 0, got {}", m.K));
        }
        if m.law == LawName::Beta && !matches!(m.beta_a, Some(a) if a >= 1.0) {
            v.push("model.beta_a must be given and >= 1 for the beta law".to_string());
        }
        if m.ell.is_none() && !(m.alpha > 0.0 && m.alpha < 1.0) {
            v.push(format!("model.alpha must lie in (0, 1), got {}", m.alpha));
        }
        let scheme = match self.scheme_kind() {
            Ok(k) => Some(k),
            Err(e) => {
                v.push(format!("model.scheme: {e}"));
                None
            }
        };
        let cap = self.cap();
        for &scale in m.L.iter().filter(|&&l| l >= 1) {
            let ell = match self.ell(scale) {
                Ok(ell) => ell,
                Err(_) => {
                    v.push(format!(
                        "L^alpha < 1 for L = {scale}, alpha = {} (cube would be empty)",
                        m.alpha
                    ));
                    continue;
                }
            };
            let Some(kind) = scheme else { continue };
            if let SchemeKind::Polymer { block } = kind {
                let cube = kind.box_side(ell);
                if cube % block != 0 {
                    v.push(format!(
                        "block must divide box side: block side {block} does not divide cube side {cube} (ell = {ell})"
                    ));
                }
                if s.kind.uses_covering() {
                    let side = kind.box_side(scale as usize);
                    if side % block != 0 {
                        v.push(format!(
                            "block must divide box side: block side {block} does not divide box side {side} (L = {scale})"
                        ));
                    }
                }
            }
            if m.d >= 1 {
                let side = kind.box_side(ell);
                let dim = side
                    .checked_pow(m.d as u32)
                    .and_then(|n| n.checked_mul(kind.fiber_dim()));
                match dim {
                    Some(dim) if dim <= cap => {}
                    Some(dim) => v.push(format!(
                        "matrix dimension {dim} at L = {scale} exceeds the cap of {cap}"
                    )),
                    None => v.push(format!("matrix dimension overflows at L = {scale}")),
                }
            }
            if s.kind.uses_covering() && kind.box_side(ell) > kind.box_side(scale as usize) {
                v.push(format!("cube half-side {ell} exceeds L = {scale}"));
            }
        }
        let interval = |name: &str, iv: Option<[f64; 2]>, v: &mut Vec<String>| match iv {
            None => v.push(format!("statistic.{name} is required for {}", s.kind.name())),
            Some([a, b]) if !(a.is_finite() && b.is_finite() && a <= b) => {
                v.push(format!("statistic.{name} = [{a}, {b}] must satisfy a <= b"))
            }
            _ => {}
        };
        if s.kind == StatisticKind::Multiplicity {
            interval("window", s.window, &mut v);
            if !(self.gap_tolerance() > 0.0) {
                v.push("statistic.gap_tolerance must be positive".to_string());
            }
        } else {
            if !matches!(s.E, Some(e) if e.is_finite()) {
                v.push(format!("statistic.E is required for {}", s.kind.name()));
            }
            interval("I", s.I, &mut v);
            if s.kind.uses_pair() {
                if !matches!(s.E_prime, Some(e) if e.is_finite()) {
                    v.push(format!("statistic.E_prime is required for {}", s.kind.name()));
                }
                interval("J", s.J, &mut v);
                if let (Some(e), Some(ep)) = (s.E, s.E_prime) {
                    let gap = (e - ep).abs();
                    if !s.allow_close_energies && !(gap > 4.0 * m.d as f64) {
                        v.push(format!(
                            "separation |E - E'| = {gap} must exceed 4d = {} (set allow_close_energies to override)",
                            4 * m.d
                        ));
                    }
                }
            }
        }
        if self.run.n_realizations < 1 {
            v.push("run.n_realizations must be at least 1".to_string());
        }
        if self.run.workers < 1 {
            v.push("run.workers must be at least 1".to_string());
        }
        if self.run.batch_size < 1 {
            v.push("run.batch_size must be at least 1".to_string());
        }
        v
    }

    pub fn validate(&self) -> Result<()> {
        let v = self.violations();
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(v))
        }
    }

    /// SHA-256 over the configuration, ignoring worker count and output path.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.run.workers = 1;
        c.run.out = None;
        let bytes = serde_json::to_vec(&c).expect("config serializes");
        hex::encode(Sha256::digest(&bytes))
    }
}

/// Reads, parses and validates a TOML experiment file.
pub fn load_config(path: &Path) -> Result<ExperimentConfig> {
    let text = fs::read_to_string(path).map_err(|e| Error::ConfigFile {
        path: path.to_path_buf(),
        message: if e.kind() == std::io::ErrorKind::NotFound {
            "file not found".to_string()
        } else {
            e.to_string()
        },
    })?;
    let cfg = ExperimentConfig::from_toml(&text).map_err(|message| Error::ConfigFile {
        path: path.to_path_buf(),
        message,
    })?;
    cfg.validate()?;
    Ok(cfg)
}

/// An estimator built for one scale.
enum LevelEstimator {
    Wegner(WegnerEstimator),
    Minami(MinamiEstimator),
    Decorrelate(JointEstimator),
    Independence(IndependenceEstimator),
    Counts(CountEstimator),
    Multiplicity(MultiplicityEstimator),
}

fn interval(center: Option<f64>, base: Option<[f64; 2]>, scale: u64, dim: usize) -> Result<ScaledInterval> {
    let e = center.ok_or_else(|| Error::InvalidArgument("missing energy".into()))?;
    let [a, b] = base.ok_or_else(|| Error::InvalidArgument("missing interval".into()))?;
    ScaledInterval::new(e, (a, b), scale, dim)
}

fn build_estimator(cfg: &ExperimentConfig, scale: u64) -> Result<LevelEstimator> {
    let level = cfg.level(scale)?;
    let s = &cfg.statistic;
    let d = cfg.model.d;
    let first = || interval(s.E, s.I, scale, d);
    let second = || interval(s.E_prime, s.J, scale, d);
    Ok(match s.kind {
        StatisticKind::Wegner => LevelEstimator::Wegner(WegnerEstimator::new(&level, first()?)?),
        StatisticKind::Minami => LevelEstimator::Minami(MinamiEstimator::new(&level, first()?, s.m)?),
        StatisticKind::Decorrelate => LevelEstimator::Decorrelate(JointEstimator::new(
            &level,
            first()?,
            second()?,
            s.allow_close_energies,
        )?),
        StatisticKind::Independence => LevelEstimator::Independence(IndependenceEstimator::new(
            &CoveringConfig::new(&level)?,
            first()?,
            second()?,
            s.allow_close_energies,
        )?),
        StatisticKind::Counts => {
            LevelEstimator::Counts(CountEstimator::new(&CoveringConfig::new(&level)?, first()?)?)
        }
        StatisticKind::Multiplicity => {
            let [lo, hi] = s.window.ok_or_else(|| Error::InvalidArgument("missing window".into()))?;
            LevelEstimator::Multiplicity(MultiplicityEstimator::new(
                &level,
                EnergyWindow::new(lo, hi)?,
                cfg.gap_tolerance(),
            )?)
        }
    })
}

macro_rules! with_estimator {
    ($le:expr, $e:ident => $body:expr) => {
        match $le {
            LevelEstimator::Wegner($e) => $body,
            LevelEstimator::Minami($e) => $body,
            LevelEstimator::Decorrelate($e) => $body,
            LevelEstimator::Independence($e) => $body,
            LevelEstimator::Counts($e) => $body,
            LevelEstimator::Multiplicity($e) => $body,
        }
    };
}

/// Records for every scale plus exponent fits, computed in memory.
pub fn evaluate(cfg: &ExperimentConfig) -> Result<Vec<EstimateRecord>> {
    cfg.validate()?;
    let pool = pool(cfg.run.workers)?;
    let mut all = Vec::new();
    for &scale in &cfg.model.L {
        let est = build_estimator(cfg, scale)?;
        let records = with_estimator!(&est, e => pool.install(|| -> Result<_> {
            let tally = crate::process::run_estimator(e, cfg.run.n_realizations)?;
            Ok(e.records(&tally))
        }))?;
        all.extend(records);
    }
    let fits = exponent_records(cfg, &all);
    all.extend(fits);
    Ok(all)
}

fn pool(workers: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::InvalidArgument(format!("cannot start {workers} workers: {e}")))
}

const FIT_NAMES: &[&str] = &[
    "wegner",
    "minami_tail",
    "minami_moment",
    "joint",
    "marginal_first",
    "marginal_second",
    "independence_defect",
    "zeta_mean",
];

/// `<name>_exponent` records: fitted L-slope of each scalar estimate, when at
/// least four scales were run.
pub fn exponent_records(cfg: &ExperimentConfig, records: &[EstimateRecord]) -> Vec<EstimateRecord> {
    if cfg.model.L.len() < 4 {
        return Vec::new();
    }
    let mut out = Vec::new();
    for &name in FIT_NAMES {
        let pts: Vec<(f64, f64)> = records
            .iter()
            .filter(|r| r.name == name)
            .filter_map(|r| Some((r.params.get("L")?.as_f64()?, r.value)))
            .collect();
        if pts.len() < 4 {
            continue;
        }
        let (xs, ys): (Vec<f64>, Vec<f64>) = pts.into_iter().unzip();
        let Some(fit) = fit_power_law(&xs, &ys) else { continue };
        let mut params = BTreeMap::new();
        params.insert("d".to_string(), json!(cfg.model.d));
        params.insert("L".to_string(), json!(cfg.model.L));
        params.insert("points".to_string(), json!(fit.points));
        params.insert("intercept".to_string(), json!(fit.intercept));
        out.push(EstimateRecord::new(
            &format!("{name}_exponent"),
            fit.slope,
            Z95 * fit.slope_se,
            cfg.run.n_realizations,
            &params,
            cfg.run.seed,
        ));
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Running,
    Interrupted,
    Incomplete,
    Complete,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelProgress {
    #[serde(rename = "L")]
    pub scale: u64,
    pub batches_done: u64,
    pub realizations_done: u64,
    pub tally: Value,
    pub records: u64,
    pub complete: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub config_hash: String,
    pub version: String,
    pub statistic: StatisticKind,
    pub started_unix: u64,
    pub updated_unix: u64,
    pub batch_size: u64,
    pub levels: Vec<LevelProgress>,
    /// Records in `records.ndjson` referenced by this manifest.
    pub records: u64,
    /// Length of `records.ndjson` covered by `records`.
    pub records_bytes: u64,
    pub status: RunStatus,
    #[serde(default)]
    pub error: Option<String>,
}

/// Fault hook: `(L, batch, attempt) -> fail?`.
pub type FaultHook = Arc<dyn Fn(u64, u64, u32) -> bool + Send + Sync>;

#[derive(Clone, Default)]
pub struct RunOptions {
    /// Stop (as if interrupted) after this many batches in this invocation.
    pub stop_after_batches: Option<u64>,
    pub fault: Option<FaultHook>,
}

fn now() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

struct RunDir {
    root: PathBuf,
}

impl RunDir {
    fn manifest(&self) -> PathBuf {
        self.root.join("manifest.json")
    }

    fn records(&self) -> PathBuf {
        self.root.join("records.ndjson")
    }

    fn table(&self, statistic: StatisticKind, scale: u64) -> PathBuf {
        self.root
            .join("tables")
            .join(format!("{}_{scale}.csv", statistic.name()))
    }

    fn save(&self, m: &RunManifest) -> Result<()> {
        let path = self.manifest();
        let tmp = self.root.join("manifest.json.tmp");
        let text = serde_json::to_string_pretty(m)?;
        fs::write(&tmp, text).map_err(|e| Error::io(&tmp, e))?;
        fs::rename(&tmp, &path).map_err(|e| Error::io(&path, e))
    }

    fn load(&self) -> Result<Option<RunManifest>> {
        let path = self.manifest();
        match fs::read_to_string(&path) {
            Ok(text) => Ok(Some(serde_json::from_str(&text)?)),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(Error::io(&path, e)),
        }
    }

    /// Truncates the ndjson file to `bytes` and appends `lines`; returns the new length.
    fn append(&self, bytes: u64, lines: &str) -> Result<u64> {
        let path = self.records();
        let mut f = fs::OpenOptions::new()
            .create(true)
            .truncate(false)
            .write(true)
            .open(&path)
            .map_err(|e| Error::io(&path, e))?;
        f.set_len(bytes).map_err(|e| Error::io(&path, e))?;
        use std::io::Seek;
        f.seek(std::io::SeekFrom::Start(bytes)).map_err(|e| Error::io(&path, e))?;
        f.write_all(lines.as_bytes()).map_err(|e| Error::io(&path, e))?;
        f.sync_data().map_err(|e| Error::io(&path, e))?;
        Ok(bytes + lines.len() as u64)
    }
}

fn ndjson(records: &[EstimateRecord]) -> Result<String> {
    let mut s = String::new();
    for r in records {
        s.push_str(&serde_json::to_string(r)?);
        s.push('\n');
    }
    Ok(s)
}

/// CSV with one row per record: `name,k,value,ci,n`.
pub fn csv_table(records: &[EstimateRecord]) -> String {
    let mut s = String::from("name,k,value,ci,n\n");
    for r in records {
        let k = r.params.get("k").map(|k| k.to_string()).unwrap_or_default();
        s.push_str(&format!("{},{},{:?},{:?},{}\n", r.name, k, r.value, r.ci, r.n));
    }
    s
}

/// Runs (or resumes) the configured experiment in `cfg.run.out`.
///
/// An existing manifest with the same config hash and an unfinished status is
/// resumed; a finished one is replaced by a fresh run; a different hash is an
/// error.
pub fn run_experiment(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<RunManifest> {
    cfg.validate()?;
    let root = cfg
        .run
        .out
        .clone()
        .ok_or_else(|| Error::Validation(vec!["run.out (output directory) is required".into()]))?;
    fs::create_dir_all(root.join("tables")).map_err(|e| Error::io(&root, e))?;
    let dir = RunDir { root };
    let hash = cfg.hash();
    let fresh = || RunManifest {
        config_hash: hash.clone(),
        version: VERSION.to_string(),
        statistic: cfg.statistic.kind,
        started_unix: now(),
        updated_unix: now(),
        batch_size: cfg.run.batch_size,
        levels: cfg
            .model
            .L
            .iter()
            .map(|&scale| LevelProgress {
                scale,
                batches_done: 0,
                realizations_done: 0,
                tally: Value::Null,
                records: 0,
                complete: false,
            })
            .collect(),
        records: 0,
        records_bytes: 0,
        status: RunStatus::Running,
        error: None,
    };
    let mut manifest = match dir.load()? {
        Some(m) if m.config_hash != hash => {
            return Err(Error::Validation(vec![format!(
                "output directory {} holds a run with a different configuration (hash {})",
                dir.root.display(),
                m.config_hash
            )]))
        }
        Some(m) if m.status != RunStatus::Complete => m,
        _ => fresh(),
    };
    manifest.status = RunStatus::Running;
    manifest.error = None;
    // drop anything written after the last checkpoint
    dir.append(manifest.records_bytes, "")?;
    dir.save(&manifest)?;

    let pool = pool(cfg.run.workers)?;
    let n = cfg.run.n_realizations;
    let batch = cfg.run.batch_size;
    let num_batches = n.div_ceil(batch);
    let mut budget = opts.stop_after_batches;

    for li in 0..manifest.levels.len() {
        let scale = manifest.levels[li].scale;
        let est = build_estimator(cfg, scale)?;
        let outcome = with_estimator!(&est, e => run_level(
            e, cfg, &dir, &mut manifest, li, num_batches, &pool, &mut budget, opts,
        ))?;
        if outcome == LevelOutcome::Stopped {
            manifest.status = RunStatus::Interrupted;
            manifest.updated_unix = now();
            dir.save(&manifest)?;
            return Ok(manifest);
        }
    }

    // exponent fits need every level's records; re-read them from disk so a
    // resumed run sees levels finished before the interruption
    let all = read_records(&dir.records())?;
    let fits = exponent_records(cfg, &all);
    if !fits.is_empty() && !all.iter().any(|r| r.name.ends_with("_exponent")) {
        manifest.records_bytes = dir.append(manifest.records_bytes, &ndjson(&fits)?)?;
        manifest.records += fits.len() as u64;
    }
    manifest.status = RunStatus::Complete;
    manifest.updated_unix = now();
    dir.save(&manifest)?;
    Ok(manifest)
}

pub fn read_records(path: &Path) -> Result<Vec<EstimateRecord>> {
    let text = match fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(Error::io(path, e)),
    };
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(Error::from))
        .collect()
}

#[derive(Debug, PartialEq, Eq)]
enum LevelOutcome {
    Done,
    Stopped,
}

#[allow(clippy::too_many_arguments)]
fn run_level<E: Estimator>(
    est: &E,
    cfg: &ExperimentConfig,
    dir: &RunDir,
    manifest: &mut RunManifest,
    li: usize,
    num_batches: u64,
    pool: &rayon::ThreadPool,
    budget: &mut Option<u64>,
    opts: &RunOptions,
) -> Result<LevelOutcome> {
    if manifest.levels[li].complete {
        return Ok(LevelOutcome::Done);
    }
    let scale = manifest.levels[li].scale;
    let n = cfg.run.n_realizations;
    let batch = cfg.run.batch_size;
    let mut tally: E::Tally = match &manifest.levels[li].tally {
        Value::Null => E::Tally::default(),
        v => serde_json::from_value(v.clone())?,
    };
    for b in manifest.levels[li].batches_done..num_batches {
        if *budget == Some(0) {
            return Ok(LevelOutcome::Stopped);
        }
        let range = b * batch..((b + 1) * batch).min(n);
        let mut attempt = 0u32;
        let samples = loop {
            let injected = opts.fault.as_ref().is_some_and(|f| f(scale, b, attempt));
            let result = if injected {
                Err(Error::RunAborted(format!("injected fault in batch {b} at L = {scale}")))
            } else {
                pool.install(|| sample_range(est, range.clone()))
            };
            match result {
                Ok(s) => break s,
                Err(_) if attempt == 0 => attempt += 1,
                Err(e) => {
                    manifest.status = RunStatus::Incomplete;
                    manifest.error = Some(e.to_string());
                    manifest.updated_unix = now();
                    dir.save(manifest)?;
                    return Err(Error::RunAborted(format!(
                        "batch {b} at L = {scale} failed twice: {e}"
                    )));
                }
            }
        };
        for s in samples {
            est.absorb(&mut tally, s);
        }
        let lp = &mut manifest.levels[li];
        lp.batches_done = b + 1;
        lp.realizations_done = range.end;
        lp.tally = serde_json::to_value(&tally)?;
        manifest.updated_unix = now();
        dir.save(manifest)?;
        if let Some(left) = budget.as_mut() {
            *left -= 1;
        }
    }
    let records = est.records(&tally);
    manifest.records_bytes = dir.append(manifest.records_bytes, &ndjson(&records)?)?;
    manifest.records += records.len() as u64;
    let table = dir.table(cfg.statistic.kind, scale);
    fs::write(&table, csv_table(&records)).map_err(|e| Error::io(&table, e))?;
    let lp = &mut manifest.levels[li];
    lp.records = records.len() as u64;
    lp.complete = true;
    manifest.updated_unix = now();
    dir.save(manifest)?;
    Ok(LevelOutcome::Done)
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
[model]
d = 1
L = [20]
scheme = "rank_one"
K = 2.0

[statistic]
kind = "wegner"
E = 0.0
I = [-1.0, 1.0]

[run]
n_realizations = 1000
seed = 7
"#;

    #[test]
    fn minimal_config_accepted() {
        let cfg = ExperimentConfig::from_toml(MINIMAL).unwrap();
        assert!(cfg.violations().is_empty(), "{:?}", cfg.violations());
        assert_eq!(cfg.run.batch_size, 256);
        assert_eq!(cfg.ell(20).unwrap(), 4);
    }

    #[test]
    fn unknown_key_rejected() {
        let text = MINIMAL.replace("K = 2.0", "K = 2.0\nKK = 1");
        let err = ExperimentConfig::from_toml(&text).unwrap_err();
        assert!(err.contains("KK"), "{err}");
    }

    #[test]
    fn hash_ignores_workers_and_out() {
        let a = ExperimentConfig::from_toml(MINIMAL).unwrap();
        let mut b = a.clone();
        b.run.workers = 8;
        b.run.out = Some("elsewhere".into());
        assert_eq!(a.hash(), b.hash());
        b.run.seed = 8;
        assert_ne!(a.hash(), b.hash());
    }

    #[test]
    fn csv_layout() {
        let r = EstimateRecord::new("zeta_pmf", 0.25, 0.01, 4, &BTreeMap::new(), 1).with_param("k", json!(2));
        assert_eq!(csv_table(&[r]), "name,k,value,ci,n\nzeta_pmf,2,0.25,0.01,4\n");
    }
}
