//! Acceptance suite. Every criterion is checked at its stated tolerance and
//! reported as one `PASS`/`FAIL` line; the process fails if any criterion
//! does. Runs without the libtest harness so the report is not interleaved
//! with test progress output.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use sparsereg::linops::{
    densify, estimate_opnorm_sq, singular_values, DenseMatrix, KroneckerBlur, LinearOperator,
    Operator, Scaled,
};
use sparsereg::problems::{
    add_awgn, gen_blur_instance, gen_cs_instance, gen_cs_instance_with, Amplitude, CsSpec, NoiseSpec,
};
use sparsereg::proxops::{project_l1_ball_hv, project_l1_ball_sort, prox_sq_l1, soft_threshold, RadiusSpec};
use sparsereg::regfun::{eval_d, eval_j, grad_f, RegParams};
use sparsereg::solvers::{solve_hv, solve_pg_sf, SolverOptions};
use sparsereg_bench::config::{ExperimentConfig, Validated};
use sparsereg_bench::report::median;
use sparsereg_bench::runner::{radius_search, run_experiment, Sweep, SweepAxis};

struct Outcome {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn rng(seed: u64) -> ChaCha20Rng {
    ChaCha20Rng::seed_from_u64(seed)
}

fn validated(text: &str) -> Validated {
    ExperimentConfig::from_toml_str(text)
        .unwrap()
        .validate(Some(text))
        .unwrap()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn l1(a: &[f64]) -> f64 {
    a.iter().map(|v| v.abs()).sum()
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

fn prox_objective(u: &[f64], x: &[f64], alpha: f64) -> f64 {
    0.5 * dist(u, x).powi(2) + alpha * l1(u).powi(2)
}

fn criterion_01_prox_oracle() -> Outcome {
    let mut r = rng(101);
    let mut worst_gain: f64 = f64::NEG_INFINITY;
    let mut worst_soft: f64 = 0.0;
    for _ in 0..500 {
        let n = r.random_range(1..=4);
        let x: Vec<f64> = (0..n).map(|_| r.random_range(-3.0..3.0)).collect();
        let alpha = 10f64.powf(r.random_range(-3.0..1.5));
        let u = prox_sq_l1(&x, alpha, 1e-12).unwrap().value;
        let base = prox_objective(&u, &x, alpha);
        for k in 0..1000i32 {
            let scale = 10f64.powi(-(k % 7));
            let v: Vec<f64> = u.iter().map(|ui| ui + scale * r.random_range(-1.0..1.0)).collect();
            worst_gain = worst_gain.max(base - prox_objective(&v, &x, alpha));
        }
        let soft = soft_threshold(&x, 2.0 * alpha * l1(&u)).unwrap();
        worst_soft = worst_soft.max(dist(&u, &soft));
    }
    verdict(
        worst_gain <= 1e-9 && worst_soft <= 1e-10,
        format!("max perturbation gain {worst_gain:.2e} (<= 1e-9), soft identity {worst_soft:.2e} (<= 1e-10)"),
    )
}

fn criterion_02_projection_equivalence() -> Outcome {
    let mut r = rng(202);
    let (mut worst_eq, mut worst_ne, mut worst_vi): (f64, f64, f64) = (0.0, f64::NEG_INFINITY, f64::NEG_INFINITY);
    for _ in 0..500 {
        let n = r.random_range(1..=40);
        let amp = 10f64.powf(r.random_range(-2.0..2.0));
        let x: Vec<f64> = (0..n).map(|_| amp * r.random_range(-1.0..1.0)).collect();
        let z: Vec<f64> = (0..n).map(|_| amp * r.random_range(-1.0..1.0)).collect();
        let radius = RadiusSpec::from_l1(l1(&x) * r.random_range(0.01..1.5)).unwrap();
        let ps = project_l1_ball_sort(&x, &radius);
        let ph = project_l1_ball_hv(&x, &radius, 1e-14).unwrap();
        worst_eq = worst_eq.max(dist(&ps, &ph));
        // Nonexpansiveness on the pair (x, z).
        let pz = project_l1_ball_sort(&z, &radius);
        worst_ne = worst_ne.max(dist(&ps, &pz) - dist(&x, &z) - 1e-12);
        // ⟨x − P x, w − P x⟩ ≤ 0 for feasible w.
        for w in [pz.clone(), project_l1_ball_hv(&z, &radius, 1e-14).unwrap(), vec![0.0; n]] {
            let g: Vec<f64> = x.iter().zip(&ps).map(|(a, b)| a - b).collect();
            let d: Vec<f64> = w.iter().zip(&ps).map(|(a, b)| a - b).collect();
            let tol = 1e-10 * (1.0 + norm(&g) * norm(&d));
            worst_vi = worst_vi.max(dot(&g, &d) - tol);
        }
    }
    verdict(
        worst_eq <= 1e-8 && worst_ne <= 0.0 && worst_vi <= 0.0,
        format!(
            "max |hv - sort| {worst_eq:.2e} (<= 1e-8), nonexpansive slack {worst_ne:.2e}, variational slack {worst_vi:.2e}"
        ),
    )
}

fn criterion_03_descent() -> Outcome {
    let mut r = rng(303);
    let mut worst_hv: f64 = f64::NEG_INFINITY;
    let mut worst_pg: f64 = f64::NEG_INFINITY;
    let mut worst_consistency: f64 = 0.0;
    let mut worst_last_step: f64 = 0.0;
    for k in 0..20u64 {
        // Standard-normal amplitudes: the step threshold is absolute.
        let spec = CsSpec {
            n: 60,
            m: 24,
            s: 5,
            scale: 0.04,
            amplitude: Amplitude::Fixed(1.0),
        };
        let inst = gen_cs_instance_with(&spec, 1000 + k).unwrap();
        let inst = add_awgn(&inst, &NoiseSpec::new(30.0, k)).unwrap();
        let a = &inst.op;
        let y = &inst.y_delta;
        let x0 = vec![0.01; 60];
        let r_hat = estimate_opnorm_sq(a, 1000, 1e-10).unwrap().value;

        let alpha = 10f64.powf(r.random_range(-5.0..-2.0));
        let p = RegParams::from_eta(alpha, r.random_range(0.0..=1.0)).unwrap();
        let opts = SolverOptions {
            record_trace: true,
            l_k: (r_hat + 2.0 * p.beta) / 2.0 * 1.05 + 0.5,
            ..SolverOptions::default()
        };
        let res = solve_hv(a, y, &p, &opts, &x0).unwrap();
        let mut prev = eval_j(a, y, &x0, &p).unwrap();
        for t in &res.trace {
            worst_hv = worst_hv.max(t.objective - prev);
            prev = t.objective;
        }
        let j_final = eval_j(a, y, &res.x_final, &p).unwrap();
        worst_consistency = worst_consistency.max((j_final - res.final_objective).abs() / j_final.abs().max(1.0));

        let beta = 10f64.powf(r.random_range(-5.0..-2.0));
        let truth = inst.x_true.as_ref().unwrap();
        let radius = RadiusSpec::from_sq(l1(truth).powi(2) * r.random_range(0.3..1.2)).unwrap();
        let opts = SolverOptions {
            record_trace: true,
            gamma: r_hat.max(2.0 * beta) * 1.01 + 0.05,
            ..SolverOptions::default()
        };
        let res = solve_pg_sf(a, y, beta, opts.gamma, &radius, &opts, &x0).unwrap();
        // x0 lies inside the ball, so descent holds from the first step.
        assert!(radius.contains(&x0));
        let mut prev = res.initial_objective;
        for t in &res.trace {
            worst_pg = worst_pg.max(t.objective - prev);
            prev = t.objective;
        }
        let d_final = eval_d(a, y, &res.x_final, beta).unwrap();
        worst_consistency = worst_consistency.max((d_final - res.final_objective).abs() / d_final.abs().max(1.0));
        worst_last_step = worst_last_step.max(res.trace.last().map_or(0.0, |t| t.step_norm));
    }
    verdict(
        worst_hv <= 1e-10 && worst_pg <= 1e-10 && worst_last_step < 1e-4 && worst_consistency <= 1e-12,
        format!(
            "max HV increase {worst_hv:.2e}, max PG increase {worst_pg:.2e} (<= 1e-10), last PG step {worst_last_step:.2e} (< 1e-4), trace/objective mismatch {worst_consistency:.1e}"
        ),
    )
}

fn adjoint_defect<A: LinearOperator + ?Sized>(a: &A, r: &mut ChaCha20Rng) -> f64 {
    let x: Vec<f64> = (0..a.domain_dim()).map(|_| r.random_range(-1.0..1.0)).collect();
    let y: Vec<f64> = (0..a.range_dim()).map(|_| r.random_range(-1.0..1.0)).collect();
    let ax = a.apply(&x).unwrap();
    let aty = a.apply_adjoint(&y).unwrap();
    (dot(&ax, &y) - dot(&x, &aty)).abs() / (norm(&ax) * norm(&y)).max(1e-300)
}

fn criterion_04_gradient_and_adjoint() -> Outcome {
    let mut r = rng(404);
    let mut worst_grad: f64 = 0.0;
    for k in 0..20u64 {
        let inst = gen_cs_instance(30, 12, 3, 0.04, 2000 + k).unwrap();
        let a = &inst.op;
        let y: Vec<f64> = (0..12).map(|_| r.random_range(-1.0..1.0)).collect();
        let x: Vec<f64> = (0..30).map(|_| r.random_range(-2.0..2.0)).collect();
        let beta = r.random_range(0.0..0.5);
        let g = grad_f(a, &y, &x, beta).unwrap();
        let f = |x: &[f64]| eval_d(a, &y, x, beta).unwrap();
        let h = 1e-5;
        let fd: Vec<f64> = (0..30)
            .map(|i| {
                let mut xp = x.clone();
                let mut xm = x.clone();
                xp[i] += h;
                xm[i] -= h;
                (f(&xp) - f(&xm)) / (2.0 * h)
            })
            .collect();
        worst_grad = worst_grad.max(dist(&g, &fd) / norm(&g).max(1e-12));
    }

    let mut worst_adj: f64 = 0.0;
    let mut ops: Vec<Operator> = Vec::new();
    for k in 0..5u64 {
        ops.push(gen_cs_instance(40 + 10 * k as usize, 20, 4, 0.04, 3000 + k).unwrap().op);
    }
    ops.push(DenseMatrix::identity(7).unwrap().into());
    for n in 1..=16 {
        for band in [1, 2, 3, n] {
            if band <= n {
                ops.push(KroneckerBlur::new(n, band, 0.4 + 0.1 * (n % 5) as f64).unwrap().into());
            }
        }
    }
    for op in &ops {
        for _ in 0..100 {
            worst_adj = worst_adj.max(adjoint_defect(op, &mut r));
        }
        let s = Scaled::new(op, -1.7);
        worst_adj = worst_adj.max(adjoint_defect(&s, &mut r));
    }
    verdict(
        worst_grad <= 1e-5 && worst_adj <= 1e-10,
        format!(
            "grad rel. error {worst_grad:.2e} (<= 1e-5), adjoint defect {worst_adj:.2e} (<= 1e-10) over {} operators",
            ops.len()
        ),
    )
}

const CS_DESK: &str = r#"
experiment = "cs"
snr_db = 40
seeds = [0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 10]
maxiter = 1500

[instance]
n = 200
m = 80
s = 16
scale = 0.04

[algorithms.hv]
alpha = 6e-5
lk = 1.0
"#;

fn median_snr(out: &sparsereg_bench::runner::RunOutput, sweep_index: usize) -> f64 {
    let v: Vec<f64> = out
        .cells
        .iter()
        .filter(|c| c.sweep_index == sweep_index)
        .filter_map(|c| c.outcome.snr_out_db)
        .collect();
    median(&v)
}

fn criterion_05_cs_reproduction() -> Outcome {
    let v = validated(CS_DESK);
    let sweep = Sweep {
        axis: SweepAxis::Eta,
        values: vec![0.0, 1.0],
    };
    let out = run_experiment(&v, Some(&sweep)).unwrap();
    let (eta0, eta1) = (median_snr(&out, 0), median_snr(&out, 1));
    verdict(
        (26.0..=36.0).contains(&eta1) && eta1 >= eta0,
        format!("median SNR over 11 seeds: eta=1 {eta1:.3} dB (in [26, 36]), eta=0 {eta0:.3} dB (<= eta=1)"),
    )
}

fn criterion_06_noise_level_trend() -> Outcome {
    let rows: [(&str, f64); 5] = [("inf", 1e-5), ("50", 2e-5), ("40", 6e-5), ("30", 3.2e-5), ("20", 9e-4)];
    let mut medians = Vec::new();
    for (snr, alpha) in rows {
        let text = CS_DESK
            .replace("snr_db = 40", &format!("snr_db = \"{snr}\""))
            .replace("maxiter = 1500", "maxiter = 10000")
            .replace("alpha = 6e-5", &format!("alpha = {alpha:e}\neta = 1.0"));
        let out = run_experiment(&validated(&text), None).unwrap();
        medians.push(median_snr(&out, 0));
    }
    let decreasing = medians.windows(2).all(|w| w[0] > w[1]);
    let shown: Vec<String> = medians.iter().map(|m| format!("{m:.2}")).collect();
    verdict(
        decreasing && medians[0] >= 45.0,
        format!(
            "median SNR for noise-free/50/40/30/20 dB = [{}] (strictly decreasing, noise-free >= 45)",
            shown.join(", ")
        ),
    )
}

fn criterion_07_blur_operator_facts() -> Outcome {
    let blur = KroneckerBlur::new(16, 3, 0.7).unwrap();
    let sv = singular_values(&densify(&blur).unwrap());
    let norm = sv[0];
    let cond = sv[0] / sv[sv.len() - 1];
    verdict(
        (0.8..=1.2).contains(&norm) && (24.0..=36.0).contains(&cond),
        format!("||A|| = {norm:.4} (in [0.8, 1.2]), cond(A) = {cond:.3} (in [24, 36])"),
    )
}

fn criterion_08_radius_recovery() -> Outcome {
    let cs = validated(
        r#"
experiment = "cs"
snr_db = 40
seeds = [0]

[instance]
n = 200
m = 80
s = 16
scale = 0.04

[algorithms.pg]
beta = 6e-5
gamma = 1.0
radius_sq = "auto"
"#,
    );
    let db = validated(
        r#"
experiment = "deblur"
snr_db = 60
seeds = [0]

[instance]
n = 125
band = 3
sigma = 0.7

[algorithms.pg]
beta = 1e-5
gamma = 1.0
radius_sq = "auto"
"#,
    );
    let run_cs = &radius_search(&cs).unwrap()[0];
    let run_db = &radius_search(&db).unwrap()[0];
    let ratio = |r: &sparsereg_bench::runner::RadiusRun| r.radius_sq / r.true_radius_sq.unwrap();
    let (rc, rd) = (ratio(run_cs), ratio(run_db));
    verdict(
        (rc - 1.0).abs() <= 0.05 && (rd - 1.0).abs() <= 0.05,
        format!(
            "CS R = {:.4e} vs {:.4e} (ratio {rc:.4}), deblur n=125 R = {:.4e} vs {:.4e} (ratio {rd:.4}); both within 5%",
            run_cs.radius_sq,
            run_cs.true_radius_sq.unwrap(),
            run_db.radius_sq,
            run_db.true_radius_sq.unwrap()
        ),
    )
}

fn criterion_09_noise_calibration() -> Outcome {
    let cs_delta = |seed: u64| {
        let inst = gen_cs_instance(200, 80, 16, 0.04, seed).unwrap();
        add_awgn(&inst, &NoiseSpec::new(40.0, seed)).unwrap().delta
    };
    let d_cs = cs_delta(0);
    let spread: Vec<f64> = (0..11).map(cs_delta).collect();
    let (lo, hi) = spread.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), d| (l.min(*d), h.max(*d)));

    let blur = gen_blur_instance(125, 3, 0.7).unwrap();
    let d_db = add_awgn(&blur, &NoiseSpec::new(60.0, 0)).unwrap().delta;
    let x = blur.x_true.clone().unwrap();
    let mut out = vec![0.0; x.len()];
    let start = Instant::now();
    blur.op.apply_to(&x, &mut out);
    let mut back = vec![0.0; x.len()];
    blur.op.apply_adjoint_to(&out, &mut back);
    let secs = start.elapsed().as_secs_f64();
    verdict(
        (0.06..=0.095).contains(&d_cs) && (0.10..=0.15).contains(&d_db) && secs < 1.0,
        format!(
            "CS delta {d_cs:.4} (in [0.06, 0.095]; seeds 0-10 span {lo:.4}-{hi:.4}, median {:.4}), blur n=125 delta {d_db:.4} (in [0.10, 0.15]), apply+adjoint {:.2} ms (< 1 s)",
            median(&spread),
            secs * 1e3
        ),
    )
}

fn collect_files(root: &Path, rel: &Path, out: &mut Vec<std::path::PathBuf>) {
    let mut entries: Vec<_> = std::fs::read_dir(root.join(rel)).unwrap().map(|e| e.unwrap()).collect();
    entries.sort_by_key(|e| e.file_name());
    for e in entries {
        let p = rel.join(e.file_name());
        if e.file_type().unwrap().is_dir() {
            collect_files(root, &p, out);
        } else {
            out.push(p);
        }
    }
}

/// Outputs that carry wall-clock data: `results.csv` (time_ms) and traces
/// (elapsed_s). Everything else must match byte for byte.
fn is_timed(p: &Path) -> bool {
    p.file_name().is_some_and(|n| n == "results.csv") || p.components().any(|c| c.as_os_str() == "traces")
}

fn criterion_10_determinism() -> Outcome {
    let exe = env!("CARGO_BIN_EXE_sparsereg-bench");
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    for d in &dirs {
        let status = Command::new(exe)
            .args(["selftest", "--output"])
            .arg(d.path())
            .env_remove("SPARSEREG_OUTPUT_DIR")
            .output()
            .unwrap();
        assert!(status.status.success(), "selftest failed: {}", String::from_utf8_lossy(&status.stderr));
    }
    let mut files = [Vec::new(), Vec::new()];
    for (d, f) in dirs.iter().zip(files.iter_mut()) {
        collect_files(d.path(), Path::new(""), f);
        f.retain(|p| !is_timed(p));
    }
    let same_list = files[0] == files[1];
    let mut mismatched = Vec::new();
    for p in &files[0] {
        let a = std::fs::read(dirs[0].path().join(p)).unwrap();
        let b = std::fs::read(dirs[1].path().join(p)).ok();
        if b.as_deref() != Some(&a[..]) {
            mismatched.push(p.display().to_string());
        }
    }
    verdict(
        same_list && mismatched.is_empty() && files[0].len() >= 8,
        format!(
            "{} deterministic files compared across two selftest runs, {} differ{}",
            files[0].len(),
            mismatched.len(),
            if mismatched.is_empty() { String::new() } else { format!(": {}", mismatched.join(", ")) }
        ),
    )
}

type Criterion = (&'static str, fn() -> Outcome);

fn main() {
    let criteria: [Criterion; 10] = [
        ("prox oracle equivalence", criterion_01_prox_oracle),
        ("projection equivalence", criterion_02_projection_equivalence),
        ("descent suites", criterion_03_descent),
        ("gradient and adjoint checks", criterion_04_gradient_and_adjoint),
        ("CS reproduction", criterion_05_cs_reproduction),
        ("noise-level trend", criterion_06_noise_level_trend),
        ("blur operator facts", criterion_07_blur_operator_facts),
        ("radius recovery", criterion_08_radius_recovery),
        ("noise calibration", criterion_09_noise_calibration),
        ("determinism", criterion_10_determinism),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Outcome {
                pass: false,
                detail: format!("panicked: {msg}"),
            }
        });
        if !outcome.pass {
            failed += 1;
        }
        println!(
            "criterion {:>2} {} {name}: {} [{:.1}s]",
            i + 1,
            if outcome.pass { "PASS" } else { "FAIL" },
            outcome.detail,
            start.elapsed().as_secs_f64()
        );
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
