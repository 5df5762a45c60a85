//! Built-in smoke suite: operator and prox checks plus small runs of every
//! subcommand. All inputs are seeded, so the deterministic outputs are
//! byte-for-byte reproducible.

use std::fs;
use std::path::{Path, PathBuf};

use sparsereg::linops::{densify, KroneckerBlur, LinearOperator};
use sparsereg::problems::gen_cs_instance;
use sparsereg::proxops::{project_l1_ball_hv, project_l1_ball_sort, prox_sq_l1, soft_threshold, RadiusSpec};

use crate::config::ExperimentConfig;
use crate::report::{self, num};
use crate::runner::{self, Sweep, SweepAxis};
use crate::BenchError;

pub const CHECKS_FILE: &str = "checks.csv";

const CS_CONFIG: &str = r#"
experiment = "cs"
snr_db = 40
seeds = [0, 1, 2]
maxiter = 400
trace = true

[instance]
n = 100
m = 40
s = 8

[algorithms.hv]
alpha = 6e-5
eta = 1.0

[algorithms.pg]
beta = 6e-5
radius_sq = "auto"

[algorithms.ista]
alpha = 0.01

[algorithms.fista]
alpha = "auto"

[algorithms.st]
alpha = 0.01
eta = 0.5

[algorithms.ht]
alpha = "auto"
"#;

const DEBLUR_CONFIG: &str = r#"
experiment = "deblur"
seeds = [0]
maxiter = 400

[instance]
n = 16
band = 3
sigma = 0.7

[algorithms.hv]
alpha = 1e-5

[algorithms.fista]
alpha = 1e-4
"#;

const SWEEP_CONFIG: &str = r#"
experiment = "cs"
snr_db = 40
seeds = [0, 1]
maxiter = 400

[instance]
n = 100
m = 40
s = 8

[algorithms.hv]
alpha = 6e-5
"#;

const RADIUS_CONFIG: &str = r#"
experiment = "cs"
snr_db = 40
seeds = [0]
maxiter = 400

[instance]
n = 100
m = 40
s = 8

[algorithms.pg]
beta = 6e-5
radius_sq = "auto"
"#;

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub limit: f64,
}

impl Check {
    pub fn passed(&self) -> bool {
        self.value <= self.limit
    }
}

#[derive(Debug, Clone)]
pub struct SelfTestReport {
    pub checks: Vec<Check>,
    /// Files whose content must not depend on timing or scheduling.
    pub deterministic_files: Vec<PathBuf>,
}

impl SelfTestReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(Check::passed)
    }
}

fn validated(text: &str) -> Result<crate::config::Validated, BenchError> {
    let cfg = ExperimentConfig::from_toml_str(text)?;
    Ok(cfg.validate(Some(text))?)
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `|⟨Ax, y⟩ − ⟨x, A*y⟩|`, relative to `‖Ax‖‖y‖`.
fn adjoint_defect<A: LinearOperator>(a: &A, x: &[f64], y: &[f64]) -> Result<f64, BenchError> {
    let ax = a.apply(x)?;
    let aty = a.apply_adjoint(y)?;
    let scale = dot(&ax, &ax).sqrt() * dot(y, y).sqrt();
    Ok((dot(&ax, y) - dot(x, &aty)).abs() / scale.max(f64::MIN_POSITIVE))
}

fn operator_checks() -> Result<Vec<Check>, BenchError> {
    let mut checks = Vec::new();
    let cs = gen_cs_instance(60, 24, 5, 0.04, 7)?;
    let a = &cs.op;
    let x: Vec<f64> = (0..60).map(|i| ((i * 37 % 11) as f64 - 5.0) / 3.0).collect();
    let y: Vec<f64> = (0..24).map(|i| ((i * 13 % 7) as f64 - 3.0) / 2.0).collect();
    checks.push(Check {
        name: "adjoint_dense".into(),
        value: adjoint_defect(a, &x, &y)?,
        limit: 1e-12,
    });
    let blur = KroneckerBlur::new(8, 3, 0.7)?;
    let xb: Vec<f64> = (0..64).map(|i| ((i * 29 % 17) as f64) / 17.0).collect();
    let yb: Vec<f64> = (0..64).map(|i| ((i * 5 % 9) as f64) / 9.0 - 0.4).collect();
    checks.push(Check {
        name: "adjoint_blur".into(),
        value: adjoint_defect(&blur, &xb, &yb)?,
        limit: 1e-12,
    });
    let dense = densify(&blur)?;
    checks.push(Check {
        name: "blur_densify".into(),
        value: max_abs_diff(&dense.apply(&xb)?, &blur.apply(&xb)?),
        limit: 1e-12,
    });

    // Prox and projection on the generated measurements.
    let mut proj_err: f64 = 0.0;
    let mut soft_err: f64 = 0.0;
    for (k, chunk) in cs.y_delta.chunks(6).enumerate() {
        let v: Vec<f64> = chunk.iter().map(|t| t * 10.0).collect();
        let l1: f64 = v.iter().map(|t| t.abs()).sum();
        let r = RadiusSpec::from_l1(l1 * (0.1 + 0.2 * k as f64))?;
        let hv = project_l1_ball_hv(&v, &r, 1e-14)?;
        proj_err = proj_err.max(max_abs_diff(&hv, &project_l1_ball_sort(&v, &r)));
        let alpha = 0.05 * (k + 1) as f64;
        let p = prox_sq_l1(&v, alpha, 1e-12)?;
        let u_l1: f64 = p.value.iter().map(|t| t.abs()).sum();
        let soft = soft_threshold(&v, 2.0 * alpha * u_l1)?;
        soft_err = soft_err.max(max_abs_diff(&p.value, &soft));
    }
    checks.push(Check {
        name: "projection_hv_vs_sort".into(),
        value: proj_err,
        limit: 1e-8,
    });
    checks.push(Check {
        name: "prox_soft_identity".into(),
        value: soft_err,
        limit: 1e-10,
    });
    Ok(checks)
}

fn descent_violation(trace: &[sparsereg::solvers::IterateRecord], start: f64) -> f64 {
    let mut prev = start;
    let mut worst: f64 = 0.0;
    for t in trace {
        worst = worst.max(t.objective - prev);
        prev = t.objective;
    }
    worst
}

/// Runs the suite into `dir`, returning the checks and the list of
/// deterministic output files.
pub fn run_selftest(dir: &Path) -> Result<SelfTestReport, BenchError> {
    fs::create_dir_all(dir)?;
    let mut checks = operator_checks()?;
    let mut det = Vec::new();

    let cs = validated(CS_CONFIG)?;
    let out = runner::run_experiment(&cs, None)?;
    for c in &out.cells {
        let name = c.outcome.algo.name();
        if name == "hv" || name == "pg" || name == "ista" {
            checks.push(Check {
                name: format!("descent_{name}_seed{}", c.seed),
                value: descent_violation(&c.outcome.result.trace, c.outcome.result.initial_objective),
                limit: 1e-10,
            });
        }
    }
    det.push(report::write_run(&out, &dir.join("cs"), "cs")?.deterministic);

    let db = validated(DEBLUR_CONFIG)?;
    let out = runner::run_experiment(&db, None)?;
    if let Some(hv) = out.cells.iter().find(|c| c.outcome.algo.name() == "hv") {
        checks.push(Check {
            name: "deblur_hv_rerror".into(),
            value: hv.outcome.rerror.unwrap_or(f64::INFINITY),
            limit: 0.2,
        });
    }
    det.push(report::write_run(&out, &dir.join("deblur"), "deblur")?.deterministic);

    let sw = validated(SWEEP_CONFIG)?;
    let sweep = Sweep {
        axis: SweepAxis::Eta,
        values: vec![0.0, 0.5, 1.0],
    };
    let out = runner::run_experiment(&sw, Some(&sweep))?;
    checks.push(Check {
        name: "sweep_rows".into(),
        value: (out.cells.len() as f64 - 6.0).abs(),
        limit: 0.0,
    });
    let w = report::write_run(&out, &dir.join("sweep_eta"), "sweep")?;
    det.push(w.deterministic);
    det.extend(w.aggregate);

    let rs = validated(RADIUS_CONFIG)?;
    let runs = runner::radius_search(&rs)?;
    for r in &runs {
        if let Some(t) = r.true_radius_sq {
            checks.push(Check {
                name: format!("radius_ratio_seed{}", r.seed),
                value: (r.radius_sq / t - 1.0).abs(),
                limit: 0.25,
            });
        }
    }
    let (trace, summary) = report::write_radius(&runs, &dir.join("radius"))?;
    det.push(trace);
    det.push(summary);

    let checks_path = dir.join(CHECKS_FILE);
    let mut w = csv::Writer::from_path(&checks_path)?;
    w.write_record(["check", "value", "limit", "status"])?;
    for c in &checks {
        w.write_record([
            c.name.clone(),
            num(c.value),
            num(c.limit),
            if c.passed() { "pass" } else { "fail" }.to_string(),
        ])?;
    }
    w.flush()?;
    det.insert(0, checks_path);

    Ok(SelfTestReport {
        checks,
        deterministic_files: det,
    })
}
