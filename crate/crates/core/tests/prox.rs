use proptest::prelude::*;
use sparsereg::proxops::{
    half_threshold, project_l1_ball_hv, project_l1_ball_sort, prox_sq_l1, soft_threshold, RadiusSpec,
};

fn l1(x: &[f64]) -> f64 {
    x.iter().map(|v| v.abs()).sum()
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn objective(u: &[f64], x: &[f64], alpha: f64) -> f64 {
    0.5 * dist(u, x).powi(2) + alpha * l1(u).powi(2)
}

fn vectors() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-4.0f64..4.0, 1..12)
}

proptest! {
    #[test]
    fn prox_beats_perturbations(
        x in vectors(),
        log_alpha in -3.0f64..2.0,
        dirs in prop::collection::vec(prop::collection::vec(-1.0f64..1.0, 12), 20),
    ) {
        let alpha = 10f64.powf(log_alpha);
        let p = prox_sq_l1(&x, alpha, 1e-12).unwrap();
        let base = objective(&p.value, &x, alpha);
        for (k, d) in dirs.iter().enumerate() {
            let t = 10f64.powi(-((k % 5) as i32));
            let v: Vec<f64> = p.value.iter().zip(d).map(|(u, di)| u + t * di).collect();
            prop_assert!(objective(&v, &x, alpha) >= base - 1e-9);
        }
        let soft = soft_threshold(&x, 2.0 * alpha * l1(&p.value)).unwrap();
        prop_assert!(dist(&soft, &p.value) <= 1e-10);
        prop_assert!((p.lambda.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        prop_assert!(p.lambda.iter().all(|l| *l >= 0.0));
    }

    #[test]
    fn prox_norm_shrinks_with_alpha(x in vectors(), a in 1e-3f64..5.0, factor in 1.0f64..10.0) {
        let small = l1(&prox_sq_l1(&x, a, 1e-12).unwrap().value);
        let large = l1(&prox_sq_l1(&x, a * factor, 1e-12).unwrap().value);
        prop_assert!(large <= small + 1e-10);
        prop_assert!(small <= l1(&x) + 1e-12);
    }

    #[test]
    fn prox_limits(x in vectors()) {
        let near_id = prox_sq_l1(&x, 1e-12, 1e-14).unwrap().value;
        prop_assert!(dist(&near_id, &x) <= 1e-9 * (1.0 + l1(&x)));
        let zero = prox_sq_l1(&x, 1e9, 1e-12).unwrap().value;
        prop_assert!(l1(&zero) <= 1e-8);
    }

    #[test]
    fn projections_agree_and_are_nonexpansive(
        x in prop::collection::vec(-10.0f64..10.0, 1..30),
        z in prop::collection::vec(-10.0f64..10.0, 30),
        frac in 0.01f64..1.5,
    ) {
        let z = &z[..x.len()];
        let r = RadiusSpec::from_l1((l1(&x) * frac).max(1e-6)).unwrap();
        let ps = project_l1_ball_sort(&x, &r);
        let ph = project_l1_ball_hv(&x, &r, 1e-14).unwrap();
        prop_assert!(dist(&ps, &ph) <= 1e-8);
        prop_assert!(l1(&ps) <= r.radius_l1 * (1.0 + 1e-12));
        let pz = project_l1_ball_sort(z, &r);
        prop_assert!(dist(&ps, &pz) <= dist(&x, z) + 1e-12);
        let phz = project_l1_ball_hv(z, &r, 1e-14).unwrap();
        prop_assert!(dist(&ps, &phz) <= dist(&x, z) + 1e-8);
        // Variational inequality against feasible points.
        let g: Vec<f64> = x.iter().zip(&ps).map(|(a, b)| a - b).collect();
        for w in [pz.clone(), vec![0.0; x.len()]] {
            let d: Vec<f64> = w.iter().zip(&ps).map(|(a, b)| a - b).collect();
            prop_assert!(dot(&g, &d) <= 1e-10 * (1.0 + dot(&g, &g).sqrt() * dot(&d, &d).sqrt()));
        }
    }

    #[test]
    fn soft_threshold_is_the_l1_prox(x in vectors(), t in 0.0f64..3.0, dirs in prop::collection::vec(-1.0f64..1.0, 12)) {
        let u = soft_threshold(&x, t).unwrap();
        let f = |v: &[f64]| 0.5 * dist(v, &x).powi(2) + t * l1(v);
        let v: Vec<f64> = u.iter().zip(&dirs).map(|(a, d)| a + 1e-3 * d).collect();
        prop_assert!(f(&v) >= f(&u) - 1e-12);
    }

    #[test]
    fn half_threshold_never_increases_magnitude(x in vectors(), lam in 0.01f64..2.0, step in 0.1f64..2.0) {
        let u = half_threshold(&x, lam, step).unwrap();
        for (a, b) in x.iter().zip(&u) {
            prop_assert!(b.abs() <= a.abs() + 1e-12);
            prop_assert!(*b == 0.0 || b.signum() == a.signum());
        }
    }
}
