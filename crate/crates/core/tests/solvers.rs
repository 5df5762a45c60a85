use sparsereg::linops::{estimate_opnorm_sq, LinearOperator};
use sparsereg::problems::{add_awgn, gen_cs_instance_with, Amplitude, CsSpec, NoiseSpec, ProblemInstance};
use sparsereg::proxops::RadiusSpec;
use sparsereg::regfun::RegParams;
use sparsereg::solvers::{pg_fixed_point_defect, solve_hv, solve_pg_sf, SolveResult, SolverOptions};

fn instance(seed: u64) -> ProblemInstance {
    let spec = CsSpec {
        n: 60,
        m: 24,
        s: 5,
        scale: 1.0 / 24f64.sqrt(),
        amplitude: Amplitude::Fixed(1.0),
    };
    let inst = gen_cs_instance_with(&spec, seed).unwrap();
    add_awgn(&inst, &NoiseSpec::new(30.0, seed)).unwrap()
}

fn traced(max_iter: usize) -> SolverOptions {
    SolverOptions {
        max_iter,
        record_trace: true,
        ..SolverOptions::default()
    }
}

fn assert_monotone(r: &SolveResult) {
    let mut prev = r.initial_objective;
    for rec in &r.trace {
        assert!(
            rec.objective <= prev + 1e-12 * (1.0 + prev.abs()),
            "objective rose at k = {}: {} -> {}",
            rec.k,
            prev,
            rec.objective
        );
        prev = rec.objective;
    }
}

#[test]
fn hv_descends_with_a_large_enough_step_constant() {
    for seed in 0..5 {
        let inst = instance(seed);
        let r_hat = estimate_opnorm_sq(&inst.op, 2000, 1e-12).unwrap().value;
        let p = RegParams::from_eta(1e-3, 0.5).unwrap();
        let opts = SolverOptions {
            l_k: (r_hat + 2.0 * p.beta) / 2.0 * 1.05 + 0.5,
            ..traced(2000)
        };
        let x0 = vec![0.01; inst.op.domain_dim()];
        let r = solve_hv(&inst.op, &inst.y_delta, &p, &opts, &x0).unwrap();
        assert!(r.warnings.is_empty(), "{:?}", r.warnings);
        assert_monotone(&r);
    }
}

#[test]
fn pg_stays_feasible_and_reaches_a_fixed_point() {
    for seed in 0..5 {
        let inst = instance(seed);
        let r_hat = estimate_opnorm_sq(&inst.op, 2000, 1e-12).unwrap().value;
        let beta = 1e-3;
        let gamma = r_hat.max(2.0 * beta) * 1.01 + 0.05;
        let radius = RadiusSpec::from_sq(inst.true_radius_sq().unwrap()).unwrap();
        let opts = SolverOptions {
            gamma,
            ..traced(20000)
        };
        let x0 = vec![0.0; inst.op.domain_dim()];
        let r = solve_pg_sf(&inst.op, &inst.y_delta, beta, gamma, &radius, &opts, &x0).unwrap();
        assert_monotone(&r);
        let l1: f64 = r.x_final.iter().map(|v| v.abs()).sum();
        assert!(l1 <= radius.radius_l1 * (1.0 + 1e-12), "seed {seed}: |x|_1 = {l1}");
        let defect = pg_fixed_point_defect(&inst.op, &inst.y_delta, &r.x_final, beta, gamma, &radius).unwrap();
        assert!(defect <= 10.0 * opts.step_tol, "seed {seed}: defect {defect}");
    }
}

#[test]
fn solvers_are_deterministic() {
    let inst = instance(3);
    let x0 = vec![0.01; inst.op.domain_dim()];
    let opts = SolverOptions {
        l_k: 5.0,
        ..traced(300)
    };
    let p = RegParams::new(1e-3, 5e-4).unwrap();
    let a = solve_hv(&inst.op, &inst.y_delta, &p, &opts, &x0).unwrap();
    let b = solve_hv(&inst.op, &inst.y_delta, &p, &opts, &x0).unwrap();
    assert_eq!(a.x_final, b.x_final);
    assert_eq!(a.iterations, b.iterations);

    let radius = RadiusSpec::from_l1(3.0).unwrap();
    let opts = SolverOptions { gamma: 8.0, ..opts };
    let a = solve_pg_sf(&inst.op, &inst.y_delta, 1e-3, 8.0, &radius, &opts, &x0).unwrap();
    let b = solve_pg_sf(&inst.op, &inst.y_delta, 1e-3, 8.0, &radius, &opts, &x0).unwrap();
    assert_eq!(a.x_final, b.x_final);
}

#[test]
fn pg_rejects_gamma_below_twice_beta() {
    let inst = instance(0);
    let x0 = vec![0.0; inst.op.domain_dim()];
    let radius = RadiusSpec::from_l1(1.0).unwrap();
    let opts = SolverOptions::default();
    assert!(solve_pg_sf(&inst.op, &inst.y_delta, 1.0, 1.5, &radius, &opts, &x0).is_err());
}
