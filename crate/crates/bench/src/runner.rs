//! Experiment execution: instance generation, parameter selection, solves
//! and metrics.

use std::fs::File;
use std::io::BufReader;
use std::time::Instant;

use log::{info, warn};
use rayon::prelude::*;
use sparsereg::io::read_image_csv;
use sparsereg::linops::{estimate_opnorm_sq, LinearOperator, Scaled};
use sparsereg::problems::{
    add_awgn, gen_blur_instance, gen_blur_instance_with_image, gen_cs_instance_with, rerror_metric,
    snr_metric, Amplitude, CsSpec, NoiseSpec, ProblemInstance,
};
use sparsereg::proxops::RadiusSpec;
use sparsereg::regfun::RegParams;
use sparsereg::solvers::{
    expand_radius_bracket, search_radius_mdp, select_alpha_discrepancy, solve_fista_with,
    solve_ht_half, solve_hv, solve_ista, solve_pg_sf, solve_st_l1_l2, AlphaSolver, IterateRecord,
    MdpOptions, MdpStep, SolveResult, SolverOptions, DEFAULT_ALPHA_BRACKET,
};

use crate::config::{AlgoSpec, Algorithm, AmplitudeCfg, InstanceSpec, ParamValue, SnrDb, Validated};
use crate::BenchError;

/// Power-iteration budget for `‖A*A‖`.
const OPNORM_ITERS: usize = 1000;
const OPNORM_TOL: f64 = 1e-9;
/// PG works on `cA`, `cy` with `‖cA‖² = PG_RESCALE_TARGET·γ` when `‖A*A‖ ≥ γ`.
const PG_RESCALE_TARGET: f64 = 0.99;

/// A generated instance together with its cached operator norm.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub seed: u64,
    pub snr: SnrDb,
    pub inst: ProblemInstance,
    pub opnorm_sq: f64,
}

/// Builds the noisy instance for one seed.
pub fn prepare_instance(v: &Validated, seed: u64, snr: SnrDb) -> Result<Prepared, BenchError> {
    let mut inst = match &v.instance {
        InstanceSpec::Cs {
            n,
            m,
            s,
            scale,
            amplitude,
        } => {
            let spec = CsSpec {
                n: *n,
                m: *m,
                s: *s,
                scale: *scale,
                amplitude: match amplitude {
                    AmplitudeCfg::UnitPower => Amplitude::UnitMeasurementPower,
                    AmplitudeCfg::Fixed(sd) => Amplitude::Fixed(*sd),
                },
            };
            gen_cs_instance_with(&spec, seed)?
        }
        InstanceSpec::Deblur {
            n,
            band,
            sigma,
            image,
        } => match image {
            None => gen_blur_instance(*n, *band, *sigma)?,
            Some(path) => {
                let f = File::open(path)
                    .map_err(|e| BenchError::Io(format!("{}: {e}", path.display())))?;
                let (side, img) = read_image_csv(BufReader::new(f))?;
                if side != *n {
                    return Err(BenchError::Config(crate::config::ConfigError {
                        field: "instance.image".into(),
                        line: None,
                        message: format!("image is {side}x{side} but instance.n = {n}"),
                    }));
                }
                gen_blur_instance_with_image(*n, *band, *sigma, img)?
            }
        },
    };
    inst.seed = seed;
    if snr.0.is_finite() {
        let spec = NoiseSpec {
            snr_db: snr.0,
            seed,
            power: v.raw.noise_power.into(),
        };
        inst = add_awgn(&inst, &spec)?;
    }
    let opnorm_sq = estimate_opnorm_sq(&inst.op, OPNORM_ITERS, OPNORM_TOL)?.value;
    Ok(Prepared {
        seed,
        snr,
        inst,
        opnorm_sq,
    })
}

/// Parameters actually used by a solve.
#[derive(Debug, Clone, PartialEq)]
pub struct Chosen {
    pub alpha: Option<f64>,
    pub eta: Option<f64>,
    pub radius_sq: Option<f64>,
    /// Operator scaling applied for PG, 1 when none.
    pub scale: f64,
}

#[derive(Debug, Clone)]
pub struct CellOutcome {
    pub algo: Algorithm,
    pub chosen: Chosen,
    pub result: SolveResult,
    pub mdp_steps: Vec<MdpStep>,
    /// Residual `‖Ax − y^δ‖` in the units of the original data.
    pub residual: f64,
    pub snr_out_db: Option<f64>,
    pub rerror: Option<f64>,
    pub elapsed_ms: f64,
    /// Whether a data-driven parameter search reached its band.
    pub bracketed: Option<bool>,
    pub notes: Vec<String>,
}

pub fn solver_options(v: &Validated, spec: &AlgoSpec, p: &Prepared) -> SolverOptions {
    SolverOptions {
        max_iter: v.raw.maxiter,
        step_tol: v.raw.step_tol,
        l_k: spec.lk,
        gamma: spec.gamma,
        lambda_st: spec.lambda,
        record_trace: v.raw.trace,
        reference: p.inst.x_true.clone(),
        opnorm_sq: Some(p.opnorm_sq),
        ..SolverOptions::default()
    }
}

fn need_delta(p: &Prepared, what: &str) -> Result<f64, BenchError> {
    if p.inst.delta > 0.0 {
        Ok(p.inst.delta)
    } else {
        Err(BenchError::Config(crate::config::ConfigError {
            field: what.into(),
            line: None,
            message: "\"auto\" needs noisy data (finite snr_db)".into(),
        }))
    }
}

/// Solves one (algorithm, instance) cell.
pub fn run_cell(v: &Validated, spec: &AlgoSpec, p: &Prepared) -> Result<CellOutcome, BenchError> {
    run_cell_from(v, spec, p, None)
}

/// As [`run_cell`]; `r0` overrides the first probe of an automatic radius
/// search.
fn run_cell_from(
    v: &Validated,
    spec: &AlgoSpec,
    p: &Prepared,
    r0: Option<f64>,
) -> Result<CellOutcome, BenchError> {
    let start = Instant::now();
    let op = &p.inst.op;
    let y = &p.inst.y_delta;
    let opts = solver_options(v, spec, p);
    let x0 = vec![v.raw.x0; op.domain_dim()];
    let mut notes = Vec::new();
    let mut mdp_steps = Vec::new();
    let mut bracketed = None;
    let name = spec.algo.name();

    let (result, chosen) = match spec.algo {
        Algorithm::Pg => {
            let beta = spec.beta.unwrap_or(0.0);
            let (scale, r_hat) = if p.opnorm_sq >= spec.gamma {
                let c = (PG_RESCALE_TARGET * spec.gamma / p.opnorm_sq).sqrt();
                notes.push(format!(
                    "pg seed={} operator and data scaled by {c:.17e} (|A*A| = {:.6e})",
                    p.seed, p.opnorm_sq
                ));
                (c, PG_RESCALE_TARGET * spec.gamma)
            } else {
                (1.0, p.opnorm_sq)
            };
            let a = Scaled::new(op, scale);
            let ys: Vec<f64> = y.iter().map(|v| v * scale).collect();
            let mut opts = opts.clone();
            opts.opnorm_sq = Some(r_hat);
            let (res, radius_sq) = match spec.radius_sq {
                Some(ParamValue::Value(r)) => {
                    let radius = RadiusSpec::from_sq(r)?;
                    (solve_pg_sf(&a, &ys, beta, spec.gamma, &radius, &opts, &x0)?, r)
                }
                _ => {
                    let delta = need_delta(p, "algorithms.pg.radius_sq")? * scale;
                    let out = mdp_auto(&a, &ys, beta, spec, delta, r_hat, &opts, &x0, r0)?;
                    bracketed = Some(out.1);
                    if !out.1 {
                        notes.push(format!("pg seed={} radius search did not reach the band", p.seed));
                    }
                    mdp_steps = out.2;
                    (out.0, out.3)
                }
            };
            (
                res,
                Chosen {
                    alpha: None,
                    eta: None,
                    radius_sq: Some(radius_sq),
                    scale,
                },
            )
        }
        algo => {
            let eta = match (algo, spec.beta) {
                (Algorithm::Hv, _) | (Algorithm::St, None) => Some(spec.eta),
                _ => None,
            };
            let (res, alpha) = match spec.alpha {
                Some(ParamValue::Value(alpha)) => (solve_fixed(spec, op, y, alpha, &opts, &x0)?, alpha),
                _ => {
                    let delta = need_delta(p, &format!("algorithms.{name}.alpha"))?;
                    if algo == Algorithm::St && spec.beta.is_some() {
                        return Err(BenchError::Config(crate::config::ConfigError {
                            field: "algorithms.st.beta".into(),
                            line: None,
                            message: "alpha = \"auto\" needs `eta` rather than a fixed `beta`".into(),
                        }));
                    }
                    let solver = match algo {
                        Algorithm::Hv => AlphaSolver::Hv,
                        Algorithm::Ista => AlphaSolver::Ista,
                        Algorithm::Fista => AlphaSolver::Fista,
                        Algorithm::St => AlphaSolver::StL1L2,
                        _ => AlphaSolver::HtHalf,
                    };
                    let sel = select_alpha_discrepancy(
                        op,
                        y,
                        delta,
                        spec.eta,
                        solver,
                        &opts,
                        &x0,
                        DEFAULT_ALPHA_BRACKET,
                    )?;
                    bracketed = Some(sel.bracketed);
                    if !sel.bracketed {
                        notes.push(format!("{name} seed={} alpha search did not reach the band", p.seed));
                    }
                    let res = if algo == Algorithm::Fista && !spec.momentum {
                        solve_fixed(spec, op, y, sel.alpha, &opts, &x0)?
                    } else {
                        sel.result
                    };
                    (res, sel.alpha)
                }
            };
            let eta = eta.or_else(|| spec.beta.map(|b| b / alpha));
            (
                res,
                Chosen {
                    alpha: Some(alpha),
                    eta,
                    radius_sq: None,
                    scale: 1.0,
                },
            )
        }
    };
    for w in &result.warnings {
        notes.push(format!("{name} seed={}: {w}", p.seed));
    }
    let residual = {
        let mut r = op.apply(&result.x_final)?;
        r.iter_mut().zip(y).for_each(|(ri, yi)| *ri -= yi);
        r.iter().map(|v| v * v).sum::<f64>().sqrt()
    };
    let (snr_out_db, rerror) = match &p.inst.x_true {
        Some(t) if t.iter().any(|v| *v != 0.0) => (
            Some(snr_metric(&result.x_final, t)?),
            Some(rerror_metric(&result.x_final, t)?),
        ),
        _ => (None, None),
    };
    let elapsed_ms = start.elapsed().as_secs_f64() * 1e3;
    info!(
        "{name} seed={} snr={} iterations={} snr_out={:?}",
        p.seed, p.snr, result.iterations, snr_out_db
    );
    Ok(CellOutcome {
        algo: spec.algo,
        chosen,
        result,
        mdp_steps,
        residual,
        snr_out_db,
        rerror,
        elapsed_ms,
        bracketed,
        notes,
    })
}

fn solve_fixed<A: LinearOperator + ?Sized>(
    spec: &AlgoSpec,
    a: &A,
    y: &[f64],
    alpha: f64,
    opts: &SolverOptions,
    x0: &[f64],
) -> Result<SolveResult, BenchError> {
    Ok(match spec.algo {
        Algorithm::Hv => solve_hv(a, y, &RegParams::from_eta(alpha, spec.eta)?, opts, x0)?,
        Algorithm::Ista => solve_ista(a, y, alpha, opts, x0)?,
        Algorithm::Fista => solve_fista_with(a, y, alpha, opts, x0, spec.momentum)?,
        Algorithm::St => {
            let beta = spec.beta.unwrap_or(spec.eta * alpha);
            solve_st_l1_l2(a, y, alpha, beta, opts, x0)?
        }
        Algorithm::Ht => solve_ht_half(a, y, alpha, opts, x0)?,
        Algorithm::Pg => unreachable!("pg is solved with a radius"),
    })
}

/// Radius search with an automatically expanded bracket. Returns the final
/// solve, whether the band was reached, the outer steps and the radius.
#[allow(clippy::too_many_arguments)]
pub fn mdp_auto<A: LinearOperator + ?Sized>(
    a: &A,
    y: &[f64],
    beta: f64,
    spec: &AlgoSpec,
    delta: f64,
    r_hat: f64,
    opts: &SolverOptions,
    x0: &[f64],
    r0: Option<f64>,
) -> Result<(SolveResult, bool, Vec<MdpStep>, f64), BenchError> {
    let r0 = match r0 {
        Some(r) => r,
        None => {
            let aty = a.apply_adjoint(y)?;
            let l1: f64 = aty.iter().map(|v| v.abs()).sum();
            (l1 / r_hat).powi(2).max(f64::MIN_POSITIVE)
        }
    };
    let mut mdp = MdpOptions::new(r0, r0, delta);
    mdp.tau1 = spec.tau1;
    mdp.tau2 = spec.tau2;
    let mut quiet = opts.clone();
    quiet.record_trace = false;
    let (lo, hi) = expand_radius_bracket(a, y, beta, spec.gamma, &mdp, &quiet, x0, r0)?;
    mdp.r_min = lo;
    mdp.r_max = hi;
    let out = search_radius_mdp(a, y, beta, spec.gamma, &mdp, opts, x0)?;
    let radius_sq = out.radius.radius_l1 * out.radius.radius_l1;
    Ok((out.result, out.bracketed, out.steps, radius_sq))
}

/// Parameter axis of a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepAxis {
    Eta,
    Alpha,
    SnrDb,
}

impl SweepAxis {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "eta" => Some(Self::Eta),
            "alpha" => Some(Self::Alpha),
            "snr_db" | "snr-db" | "snr" => Some(Self::SnrDb),
            _ => None,
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Eta => "eta",
            Self::Alpha => "alpha",
            Self::SnrDb => "snr_db",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sweep {
    pub axis: SweepAxis,
    pub values: Vec<f64>,
}

/// One solved cell with its coordinates.
#[derive(Debug, Clone)]
pub struct Cell {
    pub seed: u64,
    pub snr: SnrDb,
    /// Position of the sweep value, 0 for plain runs.
    pub sweep_index: usize,
    pub sweep_value: Option<f64>,
    pub n: usize,
    pub m: usize,
    pub s: usize,
    pub delta: f64,
    pub outcome: CellOutcome,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub config: Validated,
    pub sweep: Option<Sweep>,
    /// Sorted by algorithm, sweep index, seed.
    pub cells: Vec<Cell>,
    pub notes: Vec<String>,
}

/// Whether `spec` has the parameter that `axis` varies.
fn sweeps(spec: &AlgoSpec, axis: SweepAxis) -> bool {
    match axis {
        SweepAxis::Eta => spec.algo.uses_eta() && spec.beta.is_none(),
        SweepAxis::Alpha => spec.algo.uses_alpha(),
        SweepAxis::SnrDb => true,
    }
}

fn apply_sweep(spec: &AlgoSpec, axis: SweepAxis, value: f64) -> Result<AlgoSpec, BenchError> {
    let mut s = spec.clone();
    let bad = |msg: String| {
        BenchError::Config(crate::config::ConfigError {
            field: format!("sweep.{}", axis.as_str()),
            line: None,
            message: msg,
        })
    };
    match axis {
        SweepAxis::Eta => {
            if !spec.algo.uses_eta() || spec.beta.is_some() {
                return Err(bad(format!("`{}` has no eta parameter", spec.algo.name())));
            }
            if !(0.0..=1.0).contains(&value) {
                return Err(bad(format!("eta must lie in [0, 1], got {value}")));
            }
            s.eta = value;
        }
        SweepAxis::Alpha => {
            if !spec.algo.uses_alpha() {
                return Err(bad(format!("`{}` has no alpha parameter", spec.algo.name())));
            }
            if !(value > 0.0 && value.is_finite()) {
                return Err(bad(format!("alpha must be positive, got {value}")));
            }
            s.alpha = Some(ParamValue::Value(value));
        }
        SweepAxis::SnrDb => {}
    }
    Ok(s)
}

/// Runs every algorithm on every seed (and sweep value) in parallel.
pub fn run_experiment(v: &Validated, sweep: Option<&Sweep>) -> Result<RunOutput, BenchError> {
    let sweep_points: Vec<Option<f64>> = match sweep {
        None => vec![None],
        Some(s) if s.values.is_empty() => {
            return Err(BenchError::Config(crate::config::ConfigError {
                field: "sweep.values".into(),
                line: None,
                message: "at least one value is required".into(),
            }))
        }
        Some(s) => s.values.iter().map(|v| Some(*v)).collect(),
    };
    let snr_of = |pt: Option<f64>| match (sweep, pt) {
        (Some(s), Some(v)) if s.axis == SweepAxis::SnrDb => SnrDb(v),
        _ => v.raw.snr_db,
    };

    // Instances are shared between algorithms and non-SNR sweep points.
    let mut keys: Vec<(u64, u64)> = Vec::new();
    for pt in &sweep_points {
        for &seed in &v.raw.seeds {
            let k = (seed, snr_of(*pt).0.to_bits());
            if !keys.contains(&k) {
                keys.push(k);
            }
        }
    }
    let prepared: Vec<((u64, u64), Prepared)> = keys
        .par_iter()
        .map(|&(seed, bits)| prepare_instance(v, seed, SnrDb(f64::from_bits(bits))).map(|p| ((seed, bits), p)))
        .collect::<Result<_, _>>()?;
    let lookup = |seed: u64, snr: SnrDb| {
        &prepared
            .iter()
            .find(|(k, _)| *k == (seed, snr.0.to_bits()))
            .expect("instance prepared")
            .1
    };

    // Algorithms without the swept parameter are left out of a parameter sweep.
    let mut skipped = Vec::new();
    let specs: Vec<&AlgoSpec> = v
        .algorithms
        .iter()
        .filter(|spec| match sweep {
            Some(s) if !sweeps(spec, s.axis) => {
                skipped.push(format!("`{}` skipped: no {} parameter", spec.algo.name(), s.axis.as_str()));
                false
            }
            _ => true,
        })
        .collect();
    if specs.is_empty() {
        let axis = sweep.map_or("", |s| s.axis.as_str());
        return Err(BenchError::Config(crate::config::ConfigError {
            field: format!("sweep.{axis}"),
            line: None,
            message: format!("no configured algorithm takes {axis}"),
        }));
    }

    let mut jobs = Vec::new();
    for spec in specs {
        for (idx, pt) in sweep_points.iter().enumerate() {
            let spec = match (sweep, pt) {
                (Some(s), Some(val)) => apply_sweep(spec, s.axis, *val)?,
                _ => spec.clone(),
            };
            for &seed in &v.raw.seeds {
                jobs.push((spec.clone(), idx, *pt, seed));
            }
        }
    }
    let mut cells: Vec<Cell> = jobs
        .par_iter()
        .map(|(spec, idx, pt, seed)| {
            let p = lookup(*seed, snr_of(*pt));
            let outcome = run_cell(v, spec, p)?;
            let (n, m, s) = shape(p);
            Ok(Cell {
                seed: *seed,
                snr: p.snr,
                sweep_index: *idx,
                sweep_value: *pt,
                n,
                m,
                s,
                delta: p.inst.delta,
                outcome,
            })
        })
        .collect::<Result<_, BenchError>>()?;
    cells.sort_by_key(|c| (c.outcome.algo, c.sweep_index, c.seed));
    let mut notes = skipped;
    notes.extend(cells.iter().flat_map(|c| c.outcome.notes.clone()));
    notes.dedup();
    for n in &notes {
        warn!("{n}");
    }
    Ok(RunOutput {
        config: v.clone(),
        sweep: sweep.cloned(),
        cells,
        notes,
    })
}

/// `(domain dimension, range dimension, nonzeros of x†)`
pub fn shape(p: &Prepared) -> (usize, usize, usize) {
    let s = p
        .inst
        .x_true
        .as_ref()
        .map_or(0, |x| x.iter().filter(|v| **v != 0.0).count());
    (p.inst.op.domain_dim(), p.inst.op.range_dim(), s)
}

/// Outer steps of a radius search for one seed.
#[derive(Debug, Clone)]
pub struct RadiusRun {
    pub seed: u64,
    pub steps: Vec<MdpStep>,
    pub radius_sq: f64,
    pub true_radius_sq: Option<f64>,
    pub bracketed: bool,
    pub residual: f64,
    pub delta: f64,
    pub scale: f64,
}

/// Radius search driven by `[algorithms.pg]`. A numeric `radius_sq` is
/// used as the starting probe of the bracket expansion.
pub fn radius_search(v: &Validated) -> Result<Vec<RadiusRun>, BenchError> {
    let spec = v
        .algorithms
        .iter()
        .find(|a| a.algo == Algorithm::Pg)
        .ok_or_else(|| {
            BenchError::Config(crate::config::ConfigError {
                field: "algorithms.pg".into(),
                line: None,
                message: "radius search needs an [algorithms.pg] section".into(),
            })
        })?;
    let mut runs: Vec<RadiusRun> = v
        .raw
        .seeds
        .par_iter()
        .map(|&seed| {
            let p = prepare_instance(v, seed, v.raw.snr_db)?;
            let delta = need_delta(&p, "snr_db")?;
            let mut auto = spec.clone();
            auto.radius_sq = Some(ParamValue::Auto);
            let r0 = match spec.radius_sq {
                Some(ParamValue::Value(r)) => Some(r),
                _ => None,
            };
            let out = run_cell_from(v, &auto, &p, r0)?;
            Ok::<_, BenchError>(RadiusRun {
                seed,
                radius_sq: out.chosen.radius_sq.unwrap_or(f64::NAN),
                true_radius_sq: p.inst.true_radius_sq(),
                bracketed: out.bracketed.unwrap_or(false),
                residual: out.residual,
                delta,
                scale: out.chosen.scale,
                steps: out.mdp_steps,
            })
        })
        .collect::<Result<_, _>>()?;
    runs.sort_by_key(|r| r.seed);
    Ok(runs)
}

/// Trace rows of one cell, for the per-iteration CSV.
pub fn trace_of(cell: &Cell) -> &[IterateRecord] {
    &cell.outcome.result.trace
}
