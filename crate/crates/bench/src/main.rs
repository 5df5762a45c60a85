use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand, ValueEnum};

use sparsereg_bench::config::{
    Algorithm, AlgorithmConfig, ConfigError, ExperimentConfig, ExperimentKind, NoisePowerCfg,
    ParamValue, SnrDb, Validated, OUTPUT_DIR_ENV,
};
use sparsereg_bench::report::{self, median};
use sparsereg_bench::runner::{self, RunOutput, Sweep, SweepAxis};
use sparsereg_bench::selftest::run_selftest;
use sparsereg_bench::{default_config, BenchError};

#[derive(Parser)]
#[command(name = "sparsereg-bench", version, about = "Sparse-recovery benchmarks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compressive-sensing experiment.
    Cs(RunArgs),
    /// Image deblurring experiment.
    Deblur(RunArgs),
    /// Repeat an experiment over a list of eta, alpha or snr_db values.
    Sweep(SweepArgs),
    /// Discrepancy-principle search for the l1-ball radius of PG.
    RadiusSearch(KindArgs),
    /// Built-in deterministic smoke suite.
    Selftest {
        #[arg(long)]
        output: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Kind {
    Cs,
    Deblur,
}

impl From<Kind> for ExperimentKind {
    fn from(k: Kind) -> Self {
        match k {
            Kind::Cs => ExperimentKind::Cs,
            Kind::Deblur => ExperimentKind::Deblur,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum NoisePowerArg {
    Unit,
    Measured,
}

#[derive(Args, Clone, Default)]
struct RunArgs {
    /// TOML experiment config; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Comma-separated seeds; `a..b` denotes a half-open range.
    #[arg(long)]
    seeds: Option<String>,
    /// Measurement SNR in dB, or `inf` for noise-free data.
    #[arg(long)]
    snr_db: Option<String>,
    #[arg(long)]
    maxiter: Option<usize>,
    #[arg(long)]
    step_tol: Option<f64>,
    /// Output directory (also settable through SPARSEREG_OUTPUT_DIR).
    #[arg(long)]
    output: Option<PathBuf>,
    /// Write per-iteration trace CSVs.
    #[arg(long)]
    trace: bool,
    #[arg(long, value_enum)]
    noise_power: Option<NoisePowerArg>,
    /// Constant of the start vector.
    #[arg(long)]
    x0: Option<f64>,
    /// Comma-separated algorithms: hv, pg, ista, fista, st, ht.
    #[arg(long)]
    algorithms: Option<String>,
    /// Weight of hv, ista, fista, st and ht: a number or `auto`.
    #[arg(long)]
    alpha: Option<String>,
    /// beta/alpha ratio of hv and st.
    #[arg(long)]
    eta: Option<f64>,
    /// beta of pg.
    #[arg(long)]
    beta: Option<f64>,
    /// Step constant L_k of hv.
    #[arg(long)]
    lk: Option<f64>,
    /// Step constant of pg.
    #[arg(long)]
    gamma: Option<f64>,
    /// Step constant of ista, fista, st and ht.
    #[arg(long)]
    lambda: Option<f64>,
    /// Squared l1 radius of pg: a number or `auto`.
    #[arg(long)]
    radius_sq: Option<String>,
    #[arg(long)]
    tau1: Option<f64>,
    #[arg(long)]
    tau2: Option<f64>,
    /// Instance size (cs: signal length; deblur: image side).
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    m: Option<usize>,
    #[arg(long)]
    s: Option<usize>,
    #[arg(long)]
    scale: Option<f64>,
    #[arg(long)]
    band: Option<usize>,
    #[arg(long)]
    sigma: Option<f64>,
    /// Ground-truth image CSV for deblurring.
    #[arg(long)]
    image: Option<PathBuf>,
}

#[derive(Args, Clone)]
struct KindArgs {
    /// Experiment type when no config file is given.
    #[arg(long, value_enum, default_value = "cs")]
    experiment: Kind,
    #[command(flatten)]
    run: RunArgs,
}

#[derive(Args, Clone)]
struct SweepArgs {
    #[command(flatten)]
    kind: KindArgs,
    #[arg(long)]
    axis: String,
    /// Comma-separated values; `inf` is accepted for snr_db.
    #[arg(long)]
    values: String,
}

fn cfg_err(field: &str, message: impl Into<String>) -> BenchError {
    BenchError::Config(ConfigError {
        field: field.to_string(),
        line: None,
        message: message.into(),
    })
}

fn parse_seeds(s: &str) -> Result<Vec<u64>, BenchError> {
    let mut out = Vec::new();
    for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        if let Some((a, b)) = part.split_once("..") {
            let a: u64 = a.trim().parse().map_err(|_| cfg_err("--seeds", format!("bad range {part:?}")))?;
            let b: u64 = b.trim().parse().map_err(|_| cfg_err("--seeds", format!("bad range {part:?}")))?;
            out.extend(a..b);
        } else {
            out.push(part.parse().map_err(|_| cfg_err("--seeds", format!("bad seed {part:?}")))?);
        }
    }
    Ok(out)
}

fn parse_param(flag: &str, s: &str) -> Result<ParamValue, BenchError> {
    if s.eq_ignore_ascii_case("auto") {
        return Ok(ParamValue::Auto);
    }
    s.parse()
        .map(ParamValue::Value)
        .map_err(|_| cfg_err(flag, format!("expected a number or `auto`, got {s:?}")))
}

/// Loads the config (or the defaults) and applies the command-line overrides.
fn build_config(kind: ExperimentKind, args: &RunArgs, check_kind: bool) -> Result<Validated, BenchError> {
    let (mut cfg, source) = match &args.config {
        Some(path) => {
            let (cfg, text) = ExperimentConfig::from_file(path)?;
            (cfg, Some(text))
        }
        None => (default_config(kind), None),
    };
    if check_kind && cfg.experiment != kind {
        return Err(cfg_err(
            "experiment",
            format!("config describes a `{}` experiment", cfg.experiment.as_str()),
        ));
    }
    // Line numbers only refer to the file when nothing was overridden.
    let mut touched = false;
    let mut set = |t: bool| touched |= t;

    if let Some(s) = &args.seeds {
        cfg.seeds = parse_seeds(s)?;
        set(true);
    }
    if let Some(s) = &args.snr_db {
        cfg.snr_db = SnrDb::parse(s).map_err(|m| cfg_err("--snr-db", m))?;
        set(true);
    }
    if let Some(v) = args.maxiter {
        cfg.maxiter = v;
        set(true);
    }
    if let Some(v) = args.step_tol {
        cfg.step_tol = v;
        set(true);
    }
    if let Some(v) = &args.output {
        cfg.output_dir = Some(v.clone());
    }
    if args.trace {
        cfg.trace = true;
    }
    if let Some(p) = args.noise_power {
        cfg.noise_power = match p {
            NoisePowerArg::Unit => NoisePowerCfg::Unit,
            NoisePowerArg::Measured => NoisePowerCfg::Measured,
        };
    }
    if let Some(v) = args.x0 {
        cfg.x0 = v;
    }
    let inst = &mut cfg.instance;
    for (slot, v) in [(&mut inst.n, args.n), (&mut inst.m, args.m), (&mut inst.s, args.s), (&mut inst.band, args.band)] {
        if v.is_some() {
            *slot = v;
            set(true);
        }
    }
    for (slot, v) in [(&mut inst.scale, args.scale), (&mut inst.sigma, args.sigma)] {
        if v.is_some() {
            *slot = v;
            set(true);
        }
    }
    if args.image.is_some() {
        inst.image = args.image.clone();
    }

    if let Some(list) = &args.algorithms {
        let mut algos = std::collections::BTreeMap::new();
        for name in list.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let a = Algorithm::from_name(name)
                .ok_or_else(|| cfg_err("--algorithms", format!("unknown algorithm {name:?}")))?;
            let existing = cfg.algorithms.get(name).cloned();
            algos.insert(a.name().to_string(), existing.unwrap_or_else(|| default_params(a)));
        }
        cfg.algorithms = algos;
        set(true);
    }
    let alpha = args.alpha.as_deref().map(|s| parse_param("--alpha", s)).transpose()?;
    let radius = args.radius_sq.as_deref().map(|s| parse_param("--radius-sq", s)).transpose()?;
    for (name, a) in cfg.algorithms.iter_mut() {
        let Some(algo) = Algorithm::from_name(name) else { continue };
        let before = a.clone();
        if algo.uses_alpha() {
            a.alpha = alpha.or(a.alpha);
            a.lambda = args.lambda.or(a.lambda);
        }
        if algo.uses_eta() {
            a.eta = args.eta.or(a.eta);
        }
        match algo {
            Algorithm::Hv => a.lk = args.lk.or(a.lk),
            Algorithm::Pg => {
                a.beta = args.beta.or(a.beta);
                a.gamma = args.gamma.or(a.gamma);
                a.radius_sq = radius.or(a.radius_sq);
                a.tau1 = args.tau1.or(a.tau1);
                a.tau2 = args.tau2.or(a.tau2);
            }
            _ => {}
        }
        set(*a != before);
    }
    let source = if touched { None } else { source };
    Ok(cfg.validate(source.as_deref())?)
}

/// Parameters given to an algorithm named on the command line but absent
/// from the config.
fn default_params(a: Algorithm) -> AlgorithmConfig {
    match a {
        Algorithm::Pg => AlgorithmConfig {
            radius_sq: Some(ParamValue::Auto),
            ..AlgorithmConfig::default()
        },
        Algorithm::Hv => AlgorithmConfig {
            alpha: Some(ParamValue::Value(6e-5)),
            ..AlgorithmConfig::default()
        },
        _ => AlgorithmConfig {
            alpha: Some(ParamValue::Auto),
            ..AlgorithmConfig::default()
        },
    }
}

fn experiment_kind(args: &KindArgs) -> Result<ExperimentKind, BenchError> {
    match &args.run.config {
        Some(path) => Ok(ExperimentConfig::from_file(path)?.0.experiment),
        None => Ok(args.experiment.into()),
    }
}

fn print_summary(out: &RunOutput, dir: &Path) {
    let mut algos: Vec<_> = out.cells.iter().map(|c| c.outcome.algo).collect();
    algos.dedup();
    for a in algos {
        let snr: Vec<f64> = out
            .cells
            .iter()
            .filter(|c| c.outcome.algo == a)
            .filter_map(|c| c.outcome.snr_out_db)
            .collect();
        println!("{:<6} cells={:<4} median SNR = {:.4} dB", a.name(), snr.len(), median(&snr));
    }
    println!("results written to {}", dir.display());
}

fn run(cli: Cli) -> Result<(), BenchError> {
    match cli.command {
        Command::Cs(args) => run_plain(ExperimentKind::Cs, &args),
        Command::Deblur(args) => run_plain(ExperimentKind::Deblur, &args),
        Command::Sweep(args) => {
            let kind = experiment_kind(&args.kind)?;
            let v = build_config(kind, &args.kind.run, false)?;
            let axis = SweepAxis::parse(&args.axis)
                .ok_or_else(|| cfg_err("--axis", format!("expected eta, alpha or snr_db, got {:?}", args.axis)))?;
            let values = args
                .values
                .split(',')
                .map(str::trim)
                .filter(|p| !p.is_empty())
                .map(|p| SnrDb::parse(p).map(|s| s.0).map_err(|m| cfg_err("--values", m)))
                .collect::<Result<Vec<_>, _>>()?;
            if axis != SweepAxis::SnrDb && values.iter().any(|v| v.is_infinite()) {
                return Err(cfg_err("--values", "inf is only meaningful for snr_db"));
            }
            let sweep = Sweep { axis, values };
            let out = runner::run_experiment(&v, Some(&sweep))?;
            let dir = v.raw.resolved_output_dir();
            report::write_run(&out, &dir, "sweep")?;
            for a in report::aggregate(&out) {
                println!(
                    "{:<6} {}={:<8} median SNR = {:.4} dB  mean = {:.4} dB",
                    a.algorithm,
                    a.axis,
                    SnrDb(a.value).to_string(),
                    a.median_snr_out_db,
                    a.mean_snr_out_db
                );
            }
            println!("results written to {}", dir.display());
            Ok(())
        }
        Command::RadiusSearch(args) => {
            let kind = experiment_kind(&args)?;
            let v = build_config(kind, &args.run, false)?;
            let runs = runner::radius_search(&v)?;
            let dir = v.raw.resolved_output_dir();
            report::write_radius(&runs, &dir)?;
            for r in &runs {
                let truth = r.true_radius_sq.map_or("NA".to_string(), |t| format!("{t:.6e}"));
                println!(
                    "seed {:<4} radius_sq = {:.6e}  true = {truth}  outer steps = {}  bracketed = {}",
                    r.seed,
                    r.radius_sq,
                    r.steps.len(),
                    r.bracketed
                );
            }
            println!("results written to {}", dir.display());
            Ok(())
        }
        Command::Selftest { output } => {
            let dir = output
                .or_else(|| std::env::var_os(OUTPUT_DIR_ENV).map(PathBuf::from))
                .unwrap_or_else(|| PathBuf::from("out/selftest"));
            let report = run_selftest(&dir)?;
            for c in &report.checks {
                println!(
                    "{} {:<28} {:.3e} (limit {:.1e})",
                    if c.passed() { "pass" } else { "FAIL" },
                    c.name,
                    c.value,
                    c.limit
                );
            }
            println!("results written to {}", dir.display());
            if report.passed() {
                Ok(())
            } else {
                let failed: Vec<_> = report.checks.iter().filter(|c| !c.passed()).map(|c| c.name.clone()).collect();
                Err(BenchError::SelfTest(failed.join(", ")))
            }
        }
    }
}

fn run_plain(kind: ExperimentKind, args: &RunArgs) -> Result<(), BenchError> {
    let v = build_config(kind, args, true)?;
    let out = runner::run_experiment(&v, None)?;
    let dir = v.raw.resolved_output_dir();
    report::write_run(&out, &dir, kind.as_str())?;
    print_summary(&out, &dir);
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli).context("sparsereg-bench") {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let code = e.downcast_ref::<BenchError>().map_or(1, BenchError::exit_code);
            eprintln!("error: {:#}", e);
            ExitCode::from(code as u8)
        }
    }
}
