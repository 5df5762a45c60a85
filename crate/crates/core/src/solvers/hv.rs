use super::{half_sq, iterate, Driver, SolveResult, SolverOptions};
use crate::error::Result;
use crate::linops::LinearOperator;
use crate::proxops::prox_sq_l1;
use crate::regfun::{eval_r, RegParams};

/// Proximal gradient method for `½‖Ax − y‖² + α‖x‖₁² − β‖x‖₂²`.
///
/// The smooth part `f = ½‖Ax − y‖² − β‖x‖₂²` is linearized and the prox of
/// `(α/L_k)‖·‖₁²` is applied:
///
/// ```text
/// x^{k+1} = H_{α/L_k}(x^k + (2β/L_k)x^k − (1/L_k)A*(Ax^k − y)).
/// ```
///
/// With the default `L_k = 1` this is exactly `H_α` of the gradient step.
/// Monotone decrease of the objective requires `L_k > (‖A*A‖ + 2β)/2`; a
/// smaller value is reported as a warning, not an error.
pub fn solve_hv<A: LinearOperator + ?Sized>(
    a: &A,
    y: &[f64],
    p: &RegParams,
    opts: &SolverOptions,
    x0: &[f64],
) -> Result<SolveResult> {
    let p = RegParams::new(p.alpha, p.beta)?;
    let mut d = Driver::new("hv", a, y, x0, opts, move |x: &[f64], r: &[f64]| {
        half_sq(r) + eval_r(x, &p)
    })?;
    let l = opts.l_k;
    let r_hat = opts.opnorm_sq(a)?;
    let bound = 0.5 * (r_hat + 2.0 * p.beta);
    if l <= bound {
        d.warn(format!(
            "L_k = {l} does not exceed (|A*A| + 2 beta)/2 = {bound:.6e}; descent is not guaranteed"
        ));
    }
    let grow = 1.0 + 2.0 * p.beta / l;
    let alpha_eff = p.alpha / l;
    let tol = opts.prox_tol;
    iterate(d, move |d| {
        let (x, g) = d.data_gradient();
        let z: Vec<f64> = x.iter().zip(g).map(|(xi, gi)| grow * xi - gi / l).collect();
        Ok(prox_sq_l1(&z, alpha_eff, tol)?.value)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linops::DenseMatrix;
    use crate::solvers::Termination;
    use approx::assert_relative_eq;

    #[test]
    fn scalar_first_step() {
        let a = DenseMatrix::identity(1).unwrap();
        let p = RegParams::new(0.25, 0.1).unwrap();
        let opts = SolverOptions {
            max_iter: 1,
            ..Default::default()
        };
        let res = solve_hv(&a, &[1.0], &p, &opts, &[0.0]).unwrap();
        assert_eq!(res.iterations, 1);
        assert_eq!(res.termination, Termination::MaxIter);
        assert_relative_eq!(res.x_final[0], 1.0 / 1.5, max_relative = 1e-12);
    }

    #[test]
    fn huge_alpha_collapses() {
        let a = DenseMatrix::from_rows(&[vec![0.5, 0.1, 0.0], vec![0.0, 0.3, 0.2]]).unwrap();
        let p = RegParams::new(1e8, 0.0).unwrap();
        let res = solve_hv(&a, &[1.0, -2.0], &p, &SolverOptions::default(), &[0.01; 3]).unwrap();
        assert!(res.x_final.iter().all(|v| v.abs() < 1e-7));
    }

    #[test]
    fn small_step_constant_warns() {
        let a = DenseMatrix::new(1, 1, vec![3.0], 1.0).unwrap();
        let p = RegParams::new(0.1, 0.05).unwrap();
        let short = SolverOptions {
            max_iter: 3,
            ..Default::default()
        };
        let res = solve_hv(&a, &[1.0], &p, &short, &[0.0]).unwrap();
        assert_eq!(res.warnings.len(), 1);
        let opts = SolverOptions {
            l_k: 10.0,
            ..Default::default()
        };
        let res = solve_hv(&a, &[1.0], &p, &opts, &[0.0]).unwrap();
        assert!(res.warnings.is_empty());
    }

    #[test]
    fn objective_trace_is_monotone() {
        let a = DenseMatrix::from_rows(&[
            vec![0.4, -0.2, 0.1, 0.0],
            vec![0.1, 0.5, -0.3, 0.2],
            vec![-0.2, 0.1, 0.6, 0.1],
        ])
        .unwrap();
        let p = RegParams::from_eta(0.01, 0.8).unwrap();
        let opts = SolverOptions {
            record_trace: true,
            step_tol: 1e-12,
            ..Default::default()
        };
        let res = solve_hv(&a, &[0.3, -0.7, 0.9], &p, &opts, &[0.01; 4]).unwrap();
        assert_eq!(res.trace.len(), res.iterations);
        let mut prev = res.initial_objective;
        for rec in &res.trace {
            assert!(rec.objective <= prev + 1e-10);
            prev = rec.objective;
        }
    }
}
