//! `anderson-decorr`: command-line front end over `anderson-core`.
//!
//! Energies are in units of the hopping amplitude (the free Laplacian on
//! `Z^d` has spectrum `[-2d, 2d]`); lengths are in lattice sites.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anderson_core::harness::{self, cap_from_env, ExperimentConfig, RunOptions, RunStatus};
use anderson_core::lattice::{
    sample_disorder, DisorderLaw, DisorderSpec, LatticeModel, SchemeKind, DEFAULT_DIMENSION_CAP,
};
use anderson_core::process::EstimateRecord;
use anderson_core::spectral::{eigendecompose, ScaledInterval};
use anderson_core::trace::{
    euler_identity_residual, gradient_fd_check, hessian_scaling_probe, minor_inequality_check, weighted_trace,
    HessianProbeConfig,
};
use anderson_core::{Error, Result};
use clap::{Args, Parser, Subcommand};
use serde_json::{json, Map, Value};

#[derive(Parser)]
#[command(name = "anderson-decorr", version, about = "Spectral decorrelation estimators for Anderson-type models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Eigenvalues of one disorder realization on a box of half-side L.
    Spectrum(SpectrumArgs),
    /// Weighted trace, its gradient and the Euler identity residual for one realization.
    Trace(TraceArgs),
    /// P{X(I_L(E)) >= 1} on a single cube, per L.
    Wegner(EstimatorArgs<WindowArgs>),
    /// P{X > m} and E[X(X - m); X > m] on a single cube, per L.
    Minami(EstimatorArgs<MinamiArgs>),
    /// Joint probability of eigenvalues near E and E' on a single cube, with marginals.
    Decorrelate(EstimatorArgs<PairArgs>),
    /// Independence defect of the covering counts near E and E'.
    Independence(EstimatorArgs<PairArgs>),
    /// Distribution of the covering count and of per-cube jump sizes.
    Counts(EstimatorArgs<WindowArgs>),
    /// Largest eigenvalue cluster per realization against the scheme rank.
    Multiplicity(EstimatorArgs<CensusArgs>),
    /// Minor inequality for two probability vectors.
    Minorcheck(MinorArgs),
    /// Finite-difference Hessian magnitude of the weighted trace as L grows.
    HessianProbe(HessianArgs),
    /// Run (or resume) an experiment described by a TOML file.
    Run(RunCommandArgs),
}

#[derive(Args, Clone)]
struct SchemeArgs {
    /// Perturbation scheme: rank_one, polymer or fiber
    #[arg(long, value_name = "NAME")]
    scheme: Option<String>,
    /// Polymer block side b (sites); rank b^d
    #[arg(long, value_name = "SITES")]
    block: Option<usize>,
    /// Fiber dimension m (internal states per site)
    #[arg(long, value_name = "COUNT")]
    m: Option<usize>,
    /// Disorder strength K (energy units); values lie in [-K, K]
    #[arg(long = "K", value_name = "ENERGY", allow_hyphen_values = true)]
    k: Option<f64>,
    /// Single-site law: uniform or beta
    #[arg(long, value_name = "NAME")]
    law: Option<String>,
    /// Beta shape parameter a >= 1 (dimensionless)
    #[arg(long = "beta-a", value_name = "SHAPE")]
    beta_a: Option<f64>,
}

#[derive(Args)]
struct SpectrumArgs {
    /// Lattice dimension d
    #[arg(long, value_name = "DIM")]
    d: usize,
    /// Box half-side (sites)
    #[arg(long = "L", value_name = "SITES")]
    l: usize,
    #[command(flatten)]
    scheme: SchemeArgs,
    /// Base seed of the disorder
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Realization index
    #[arg(long, default_value_t = 0)]
    realization: u64,
    /// Matrix dimension cap (rows); defaults to ANDERSON_DECORR_CAP or 4096
    #[arg(long, value_name = "ROWS")]
    cap: Option<usize>,
    /// Emit JSON on stdout
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct TraceArgs {
    /// Lattice dimension d
    #[arg(long, value_name = "DIM")]
    d: usize,
    /// Cube half-side ell (sites)
    #[arg(long, value_name = "SITES")]
    ell: usize,
    /// Window scale L; the window is E + L^{-d} I (sites)
    #[arg(long = "L", value_name = "SITES")]
    l: u64,
    /// Window center E (energy units)
    #[arg(long = "E", value_name = "ENERGY", allow_hyphen_values = true)]
    e: f64,
    /// Base interval I = a,b (energy units before scaling by L^{-d})
    #[arg(long = "I", value_name = "A,B", value_delimiter = ',', allow_hyphen_values = true)]
    i: Vec<f64>,
    #[command(flatten)]
    scheme: SchemeArgs,
    /// Base seed of the disorder
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Realization index
    #[arg(long, default_value_t = 0)]
    realization: u64,
    /// Also compare the gradient with central differences of this step (energy units)
    #[arg(long = "fd-step", value_name = "ENERGY")]
    fd_step: Option<f64>,
    /// Matrix dimension cap (rows); defaults to ANDERSON_DECORR_CAP or 4096
    #[arg(long, value_name = "ROWS")]
    cap: Option<usize>,
    /// Emit JSON on stdout
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct MinorArgs {
    /// Vector length n
    #[arg(long, value_name = "LEN")]
    n: usize,
    /// First probability vector, comma separated (dimensionless)
    #[arg(long, value_name = "LIST", value_delimiter = ',', allow_hyphen_values = true)]
    u: Vec<f64>,
    /// Second probability vector, comma separated (dimensionless)
    #[arg(long, value_name = "LIST", value_delimiter = ',', allow_hyphen_values = true)]
    v: Vec<f64>,
    /// Emit JSON on stdout
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct HessianArgs {
    /// Lattice dimension d
    #[arg(long, value_name = "DIM")]
    d: usize,
    /// Scales L, comma separated (sites)
    #[arg(long = "L", value_name = "LIST", value_delimiter = ',', required = true)]
    l: Vec<u64>,
    /// Cube half-side exponent: ell = ceil(L^alpha), alpha in (0, 2/3)
    #[arg(long, value_name = "EXPONENT")]
    alpha: f64,
    #[command(flatten)]
    scheme: SchemeArgs,
    /// Window center E (energy units)
    #[arg(long = "E", value_name = "ENERGY", allow_hyphen_values = true)]
    e: f64,
    /// Base interval I = a,b (energy units before scaling by L^{-d})
    #[arg(long = "I", value_name = "A,B", value_delimiter = ',', allow_hyphen_values = true)]
    i: Vec<f64>,
    /// Accepted realizations per scale
    #[arg(long, value_name = "COUNT", default_value_t = 20)]
    probes: usize,
    /// Realizations tried per scale before giving up
    #[arg(long = "max-attempts", value_name = "COUNT", default_value_t = 2000)]
    max_attempts: usize,
    /// Base seed of the disorder
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Matrix dimension cap (rows); defaults to ANDERSON_DECORR_CAP or 4096
    #[arg(long, value_name = "ROWS")]
    cap: Option<usize>,
    /// Emit JSON on stdout
    #[arg(long)]
    json: bool,
}

/// Model keys shared by every estimator; each overrides `[model]` in the config file.
#[derive(Args)]
struct ModelArgs {
    /// Lattice dimension d
    #[arg(long, value_name = "DIM")]
    d: Option<usize>,
    /// Scales L, comma separated (sites)
    #[arg(long = "L", value_name = "LIST", value_delimiter = ',')]
    l: Option<Vec<u64>>,
    /// Cube half-side exponent: ell = floor(L^alpha), alpha in (0, 1)
    #[arg(long, value_name = "EXPONENT")]
    alpha: Option<f64>,
    /// Fixed cube half-side (sites); overrides alpha
    #[arg(long, value_name = "SITES")]
    ell: Option<usize>,
    #[command(flatten)]
    scheme: SchemeArgs,
}

/// Keys of `[run]`.
#[derive(Args)]
struct RunArgs {
    /// Experiment file (TOML); flags override its values
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Realizations per scale
    #[arg(long = "n-realizations", value_name = "COUNT")]
    n_realizations: Option<u64>,
    /// Base seed
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads
    #[arg(long, value_name = "COUNT")]
    workers: Option<usize>,
    /// Output directory; when given the run is checkpointed there
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Matrix dimension cap (rows); defaults to ANDERSON_DECORR_CAP or 4096
    #[arg(long, value_name = "ROWS")]
    cap: Option<usize>,
    /// Realizations per checkpoint batch
    #[arg(long = "batch-size", value_name = "COUNT")]
    batch_size: Option<u64>,
    /// Emit JSON on stdout
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct WindowArgs {
    /// Window center E (energy units)
    #[arg(long = "E", value_name = "ENERGY", allow_hyphen_values = true)]
    e: Option<f64>,
    /// Base interval I = a,b (energy units before scaling by L^{-d})
    #[arg(long = "I", value_name = "A,B", value_delimiter = ',', allow_hyphen_values = true)]
    i: Option<Vec<f64>>,
}

#[derive(Args)]
struct SecondWindowArgs {
    /// Second window center E' (energy units)
    #[arg(long = "E-prime", value_name = "ENERGY", allow_hyphen_values = true)]
    e_prime: Option<f64>,
    /// Second base interval J = a,b (energy units before scaling by L^{-d})
    #[arg(long = "J", value_name = "A,B", value_delimiter = ',', allow_hyphen_values = true)]
    j: Option<Vec<f64>>,
    /// Accept |E - E'| <= 4d
    #[arg(long = "allow-close-energies")]
    allow_close_energies: bool,
}

#[derive(Args)]
struct RankArgs {
    /// Rank threshold m of the tail event X > m; defaults to the scheme rank
    #[arg(long = "rank-m", value_name = "COUNT")]
    rank_m: Option<usize>,
}

#[derive(Args)]
struct CensusOnlyArgs {
    /// Absolute energy window lo,hi for the census (energy units, not scaled)
    #[arg(long, value_name = "LO,HI", value_delimiter = ',', allow_hyphen_values = true)]
    window: Option<Vec<f64>>,
    /// Eigenvalues closer than this share a cluster (energy units); default 1e-8 (2d + K)
    #[arg(long = "gap-tolerance", value_name = "ENERGY")]
    gap_tolerance: Option<f64>,
}

#[derive(Args)]
struct MinamiArgs {
    #[command(flatten)]
    window: WindowArgs,
    #[command(flatten)]
    rank: RankArgs,
}

#[derive(Args)]
struct PairArgs {
    #[command(flatten)]
    first: WindowArgs,
    #[command(flatten)]
    second: SecondWindowArgs,
}

#[derive(Args)]
struct CensusArgs {
    #[command(flatten)]
    census: CensusOnlyArgs,
}

#[derive(Args)]
struct EstimatorArgs<S: Args> {
    #[command(flatten)]
    model: ModelArgs,
    #[command(flatten)]
    statistic: S,
    #[command(flatten)]
    run: RunArgs,
}

#[derive(Args)]
struct RunCommandArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[command(flatten)]
    first: WindowArgs,
    #[command(flatten)]
    second: SecondWindowArgs,
    #[command(flatten)]
    rank: RankArgs,
    #[command(flatten)]
    census: CensusOnlyArgs,
    #[command(flatten)]
    run: RunArgs,
    /// Stop after this many batches, leaving a resumable run
    #[arg(long = "stop-after-batches", value_name = "COUNT")]
    stop_after_batches: Option<u64>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_validation() {
                ExitCode::from(2)
            } else {
                ExitCode::FAILURE
            }
        }
    }
}

fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::Spectrum(a) => spectrum(a),
        Command::Trace(a) => trace(a),
        Command::Minorcheck(a) => minorcheck(a),
        Command::HessianProbe(a) => hessian_probe(a),
        Command::Wegner(a) => estimate("wegner", a.model, &a.run, |s| a.statistic.apply(s)),
        Command::Minami(a) => estimate("minami", a.model, &a.run, |s| {
            a.statistic.window.apply(s);
            a.statistic.rank.apply(s);
        }),
        Command::Decorrelate(a) => estimate("decorrelate", a.model, &a.run, |s| a.statistic.apply(s)),
        Command::Independence(a) => estimate("independence", a.model, &a.run, |s| a.statistic.apply(s)),
        Command::Counts(a) => estimate("counts", a.model, &a.run, |s| a.statistic.apply(s)),
        Command::Multiplicity(a) => estimate("multiplicity", a.model, &a.run, |s| a.statistic.census.apply(s)),
        Command::Run(a) => run(a),
    }
}

// ---------------------------------------------------------------- direct commands

fn scheme_kind(a: &SchemeArgs) -> Result<SchemeKind> {
    match a.scheme.as_deref().unwrap_or("rank_one") {
        "rank_one" => Ok(SchemeKind::RankOne),
        "polymer" => Ok(SchemeKind::Polymer {
            block: a.block.ok_or_else(|| invalid("--block is required for the polymer scheme"))?,
        }),
        "fiber" => Ok(SchemeKind::Fiber {
            m: a.m.ok_or_else(|| invalid("--m is required for the fiber scheme"))?,
        }),
        other => Err(invalid(&format!("unknown scheme {other:?} (expected rank_one, polymer or fiber)"))),
    }
}

fn disorder(a: &SchemeArgs, seed: u64) -> Result<DisorderSpec> {
    let law = match a.law.as_deref().unwrap_or("uniform") {
        "uniform" => DisorderLaw::Uniform,
        "beta" => DisorderLaw::ScaledSymmetricBeta {
            a: a.beta_a.ok_or_else(|| invalid("--beta-a is required for the beta law"))?,
        },
        other => return Err(invalid(&format!("unknown law {other:?} (expected uniform or beta)"))),
    };
    let k = a.k.ok_or_else(|| invalid("--K is required"))?;
    DisorderSpec::new(law, k, seed)
}

fn cap(flag: Option<usize>) -> usize {
    flag.or_else(cap_from_env).unwrap_or(DEFAULT_DIMENSION_CAP)
}

fn invalid(msg: &str) -> Error {
    Error::InvalidArgument(msg.to_string())
}

fn pair(v: &[f64], flag: &str) -> Result<(f64, f64)> {
    match v {
        [a, b] => Ok((*a, *b)),
        _ => Err(invalid(&format!("{flag} takes exactly two values a,b"))),
    }
}

fn print_json<T: serde::Serialize + ?Sized>(v: &T) -> Result<()> {
    println!("{}", serde_json::to_string(v)?);
    Ok(())
}

fn spectrum(a: SpectrumArgs) -> Result<()> {
    let model = LatticeModel::for_half_side(a.d, a.l, scheme_kind(&a.scheme)?, cap(a.cap))?;
    let h = model.realize(&disorder(&a.scheme, a.seed)?, a.realization)?;
    let spec = eigendecompose(&h, false)?;
    if a.json {
        print_json(&json!({ "eigenvalues": spec.eigenvalues }))?;
    } else {
        for x in &spec.eigenvalues {
            println!("{x:?}");
        }
    }
    Ok(())
}

fn trace(a: TraceArgs) -> Result<()> {
    let model = LatticeModel::for_half_side(a.d, a.ell, scheme_kind(&a.scheme)?, cap(a.cap))?;
    let omega = sample_disorder(&disorder(&a.scheme, a.seed)?, a.realization, model.scheme());
    let iv = ScaledInterval::new(a.e, pair(&a.i, "--I")?, a.l, a.d)?;
    let spec = eigendecompose(&model.hamiltonian(&omega)?, true)?;
    let report = weighted_trace(&spec, model.scheme(), &iv)?;
    let residual = euler_identity_residual(&model, &omega, &iv)?;
    let fd = a.fd_step.map(|h| gradient_fd_check(&model, &omega, &iv, h)).transpose()?;
    if a.json {
        let mut out = json!({
            "value": report.value,
            "count": report.count,
            "gradient": report.gradient,
            "gradient_l1": report.gradient_l1(),
            "euler_residual": residual,
        });
        if let Some(fd) = fd {
            out["fd_max_relative_error"] = json!(fd.max_relative_error);
        }
        print_json(&out)?;
    } else {
        println!("value {:?}", report.value);
        println!("count {}", report.count);
        println!("gradient_l1 {:?}", report.gradient_l1());
        println!("euler_residual {residual:?}");
        if let Some(fd) = fd {
            println!("fd_max_relative_error {:?}", fd.max_relative_error);
        }
    }
    Ok(())
}

fn minorcheck(a: MinorArgs) -> Result<()> {
    if a.u.len() != a.n || a.v.len() != a.n {
        return Err(invalid(&format!(
            "--u and --v must have n = {} entries, got {} and {}",
            a.n,
            a.u.len(),
            a.v.len()
        )));
    }
    let check = minor_inequality_check(&a.u, &a.v)?;
    if a.json {
        print_json(&check)?;
    } else {
        println!("lhs {:?}", check.lhs);
        println!("rhs {:?}", check.rhs);
        println!("holds {}", check.holds);
    }
    Ok(())
}

fn hessian_probe(a: HessianArgs) -> Result<()> {
    let cfg = HessianProbeConfig {
        dim: a.d,
        scales: a.l.clone(),
        alpha: a.alpha,
        scheme: scheme_kind(&a.scheme)?,
        disorder: disorder(&a.scheme, a.seed)?,
        center: a.e,
        base: pair(&a.i, "--I")?,
        probes: a.probes,
        max_attempts: a.max_attempts,
        cap: cap(a.cap),
    };
    let probe = hessian_scaling_probe(&cfg)?;
    if a.json {
        print_json(&probe)?;
    } else {
        println!("L,ell,accepted,attempts,median_max_entry,max_asymmetry");
        for r in &probe.rows {
            println!(
                "{},{},{},{},{:?},{:?}",
                r.scale, r.ell, r.accepted, r.attempts, r.median_max_entry, r.max_asymmetry
            );
        }
        match probe.fitted_slope {
            Some(s) => println!("fitted_slope {s:?}"),
            None => println!("fitted_slope none"),
        }
        println!("envelope_slope {:?}", probe.envelope_slope);
    }
    Ok(())
}

// ---------------------------------------------------------------- config-backed commands

type Sections = Map<String, Value>;

fn set(doc: &mut Sections, section: &str, key: &str, value: Option<Value>) {
    if let Some(v) = value {
        doc.entry(section.to_string())
            .or_insert_with(|| Value::Object(Map::new()))
            .as_object_mut()
            .expect("sections are tables")
            .insert(key.to_string(), v);
    }
}

fn read_document(path: Option<&Path>) -> Result<Sections> {
    let Some(path) = path else { return Ok(Map::new()) };
    let config_error = |message: String| Error::ConfigFile {
        path: path.to_path_buf(),
        message,
    };
    let text = fs::read_to_string(path).map_err(|e| {
        config_error(if e.kind() == std::io::ErrorKind::NotFound {
            "file not found".to_string()
        } else {
            e.to_string()
        })
    })?;
    let table: toml::Table = toml::from_str(&text).map_err(|e| config_error(e.to_string()))?;
    match serde_json::to_value(table)? {
        Value::Object(m) => Ok(m),
        _ => Err(config_error("top level must be a table".into())),
    }
}

impl ModelArgs {
    fn apply(&self, doc: &mut Sections) {
        let s = &self.scheme;
        set(doc, "model", "d", self.d.map(|x| json!(x)));
        set(doc, "model", "L", self.l.as_ref().map(|x| json!(x)));
        set(doc, "model", "alpha", self.alpha.map(|x| json!(x)));
        set(doc, "model", "ell", self.ell.map(|x| json!(x)));
        set(doc, "model", "scheme", s.scheme.as_ref().map(|x| json!(x)));
        set(doc, "model", "block", s.block.map(|x| json!(x)));
        set(doc, "model", "m", s.m.map(|x| json!(x)));
        set(doc, "model", "K", s.k.map(|x| json!(x)));
        set(doc, "model", "law", s.law.as_ref().map(|x| json!(x)));
        set(doc, "model", "beta_a", s.beta_a.map(|x| json!(x)));
    }
}

impl RunArgs {
    fn apply(&self, doc: &mut Sections) {
        set(doc, "run", "n_realizations", self.n_realizations.map(|x| json!(x)));
        set(doc, "run", "seed", self.seed.map(|x| json!(x)));
        set(doc, "run", "workers", self.workers.map(|x| json!(x)));
        set(doc, "run", "out", self.out.as_ref().map(|x| json!(x)));
        set(doc, "run", "cap", self.cap.map(|x| json!(x)));
        set(doc, "run", "batch_size", self.batch_size.map(|x| json!(x)));
    }
}

/// Statistic flags written into `[statistic]`.
trait StatisticFlags {
    fn apply(&self, doc: &mut Sections);
}

impl StatisticFlags for WindowArgs {
    fn apply(&self, doc: &mut Sections) {
        set(doc, "statistic", "E", self.e.map(|x| json!(x)));
        set(doc, "statistic", "I", self.i.as_ref().map(|x| json!(x)));
    }
}

impl StatisticFlags for SecondWindowArgs {
    fn apply(&self, doc: &mut Sections) {
        set(doc, "statistic", "E_prime", self.e_prime.map(|x| json!(x)));
        set(doc, "statistic", "J", self.j.as_ref().map(|x| json!(x)));
        if self.allow_close_energies {
            set(doc, "statistic", "allow_close_energies", Some(json!(true)));
        }
    }
}

impl StatisticFlags for RankArgs {
    fn apply(&self, doc: &mut Sections) {
        set(doc, "statistic", "m", self.rank_m.map(|x| json!(x)));
    }
}

impl StatisticFlags for CensusOnlyArgs {
    fn apply(&self, doc: &mut Sections) {
        set(doc, "statistic", "window", self.window.as_ref().map(|x| json!(x)));
        set(doc, "statistic", "gap_tolerance", self.gap_tolerance.map(|x| json!(x)));
    }
}

impl StatisticFlags for PairArgs {
    fn apply(&self, doc: &mut Sections) {
        self.first.apply(doc);
        self.second.apply(doc);
    }
}

const REQUIRED: [(&str, &str, &str); 6] = [
    ("model", "d", "--d"),
    ("model", "L", "--L"),
    ("model", "scheme", "--scheme"),
    ("model", "K", "--K"),
    ("run", "n_realizations", "--n-realizations"),
    ("run", "seed", "--seed"),
];

fn into_config(doc: Sections) -> Result<ExperimentConfig> {
    let missing: Vec<String> = REQUIRED
        .iter()
        .filter(|(section, key, _)| doc.get(*section).and_then(|s| s.get(*key)).is_none())
        .map(|(section, key, flag)| format!("{section}.{key} is required ({flag} or the config file)"))
        .collect();
    if !missing.is_empty() {
        return Err(Error::Validation(missing));
    }
    serde_json::from_value(Value::Object(doc)).map_err(|e| Error::Validation(vec![e.to_string()]))
}

fn estimate(kind: &str, model: ModelArgs, run: &RunArgs, statistic: impl FnOnce(&mut Sections)) -> Result<()> {
    let mut doc = read_document(run.config.as_deref())?;
    model.apply(&mut doc);
    run.apply(&mut doc);
    statistic(&mut doc);
    set(&mut doc, "statistic", "kind", Some(json!(kind)));
    let cfg = into_config(doc)?;
    if cfg.run.out.is_some() {
        return checkpointed(&cfg, &RunOptions::default(), run.json);
    }
    let records = harness::evaluate(&cfg)?;
    print_records(&records, run.json)
}

fn run(a: RunCommandArgs) -> Result<()> {
    if a.run.config.is_none() {
        return Err(Error::Validation(vec!["run needs --config".into()]));
    }
    let mut doc = read_document(a.run.config.as_deref())?;
    a.model.apply(&mut doc);
    a.run.apply(&mut doc);
    a.first.apply(&mut doc);
    a.second.apply(&mut doc);
    a.rank.apply(&mut doc);
    a.census.apply(&mut doc);
    let cfg = into_config(doc)?;
    let opts = RunOptions {
        stop_after_batches: a.stop_after_batches,
        fault: None,
    };
    checkpointed(&cfg, &opts, a.run.json)
}

fn checkpointed(cfg: &ExperimentConfig, opts: &RunOptions, json: bool) -> Result<()> {
    let manifest = harness::run_experiment(cfg, opts)?;
    if json {
        print_json(&manifest)?;
    } else {
        let out = cfg.run.out.as_deref().map(Path::display);
        println!("status {}", status_name(manifest.status));
        println!("records {}", manifest.records);
        if let Some(out) = out {
            println!("out {out}");
        }
    }
    Ok(())
}

fn status_name(s: RunStatus) -> &'static str {
    match s {
        RunStatus::Running => "running",
        RunStatus::Interrupted => "interrupted",
        RunStatus::Incomplete => "incomplete",
        RunStatus::Complete => "complete",
    }
}

fn print_records(records: &[EstimateRecord], json: bool) -> Result<()> {
    if json {
        return print_json(records);
    }
    println!("name,L,k,value,ci,n");
    for r in records {
        let field = |key: &str| r.params.get(key).map(|v| v.to_string()).unwrap_or_default();
        println!(
            "{},{},{},{:?},{:?},{}",
            r.name,
            field("L").replace(',', ";"),
            field("k"),
            r.value,
            r.ci,
            r.n
        );
    }
    Ok(())
}
