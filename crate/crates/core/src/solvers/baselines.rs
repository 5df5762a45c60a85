//! Comparison methods: ISTA, FISTA, ℓ₁−ℓ₂ thresholding and ℓ_{1/2} half
//! thresholding. All use the step size `t = 1/lambda_st`.

use super::{half_sq, iterate, Driver, SolveResult, SolverOptions};
use crate::error::{invalid, Result};
use crate::linops::LinearOperator;
use crate::proxops::{half_threshold, soft_scalar};
use crate::vecops::{norm1, norm2};

/// Floor on `‖x^k‖₂` in the ℓ₁−ℓ₂ step, which divides by it.
pub const ST_NORM_FLOOR: f64 = 1e-12;

fn check_positive(name: &'static str, v: f64) -> Result<()> {
    if !(v > 0.0 && v.is_finite()) {
        return Err(invalid(name, format!("must be positive, got {v}")));
    }
    Ok(())
}

/// `x^{k+1} = S_{αt}(x^k − t·A*(Ax^k − y))` for `½‖Ax − y‖² + α‖x‖₁`.
pub fn solve_ista<A: LinearOperator + ?Sized>(
    a: &A,
    y: &[f64],
    alpha: f64,
    opts: &SolverOptions,
    x0: &[f64],
) -> Result<SolveResult> {
    check_positive("alpha", alpha)?;
    let d = Driver::new("ista", a, y, x0, opts, move |x: &[f64], r: &[f64]| {
        half_sq(r) + alpha * norm1(x)
    })?;
    let t = 1.0 / opts.lambda_st;
    iterate(d, move |d| {
        let (x, g) = d.data_gradient();
        Ok(x.iter()
            .zip(g)
            .map(|(xi, gi)| soft_scalar(xi - t * gi, alpha * t))
            .collect())
    })
}

/// FISTA with the momentum sequence `t_{k+1} = (1 + √(1 + 4t_k²))/2`.
pub fn solve_fista<A: LinearOperator + ?Sized>(
    a: &A,
    y: &[f64],
    alpha: f64,
    opts: &SolverOptions,
    x0: &[f64],
) -> Result<SolveResult> {
    solve_fista_with(a, y, alpha, opts, x0, true)
}

/// Next term of the momentum sequence.
pub(crate) fn fista_next_t(t: f64) -> f64 {
    0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt())
}

/// FISTA; with `momentum = false` every extrapolation weight is zero and the
/// iterates coincide with ISTA.
pub fn solve_fista_with<A: LinearOperator + ?Sized>(
    a: &A,
    y: &[f64],
    alpha: f64,
    opts: &SolverOptions,
    x0: &[f64],
    momentum: bool,
) -> Result<SolveResult> {
    check_positive("alpha", alpha)?;
    let d = Driver::new("fista", a, y, x0, opts, move |x: &[f64], r: &[f64]| {
        half_sq(r) + alpha * norm1(x)
    })?;
    let step = 1.0 / opts.lambda_st;
    let mut t = 1.0_f64;
    iterate(d, move |d| {
        let t_next = fista_next_t(t);
        let m = if momentum { (t - 1.0) / t_next } else { 0.0 };
        t = t_next;
        let (v, g) = d.extrapolated_gradient(m);
        Ok(v.iter()
            .zip(g)
            .map(|(vi, gi)| soft_scalar(vi - step * gi, alpha * step))
            .collect())
    })
}

/// Thresholding for `½‖Ax − y‖² + α‖x‖₁ − β‖x‖₂` with unit relaxation:
///
/// ```text
/// x^{k+1} = S_{α/γ}(x^k + (β/(γ‖x^k‖₂))x^k − (1/γ)A*(Ax^k − y)),   γ = lambda_st.
/// ```
pub fn solve_st_l1_l2<A: LinearOperator + ?Sized>(
    a: &A,
    y: &[f64],
    alpha: f64,
    beta: f64,
    opts: &SolverOptions,
    x0: &[f64],
) -> Result<SolveResult> {
    check_positive("alpha", alpha)?;
    if !(beta >= 0.0 && beta <= alpha) {
        return Err(invalid("beta", format!("must lie in [0, alpha], got {beta}")));
    }
    let d = Driver::new("st", a, y, x0, opts, move |x: &[f64], r: &[f64]| {
        half_sq(r) + alpha * norm1(x) - beta * norm2(x)
    })?;
    let gamma = opts.lambda_st;
    iterate(d, move |d| {
        let (x, g) = d.data_gradient();
        let grow = 1.0 + beta / (gamma * norm2(x).max(ST_NORM_FLOOR));
        Ok(x.iter()
            .zip(g)
            .map(|(xi, gi)| soft_scalar(grow * xi - gi / gamma, alpha / gamma))
            .collect())
    })
}

/// Half thresholding for `½‖Ax − y‖² + lam·Σ|x_i|^{1/2}`.
pub fn solve_ht_half<A: LinearOperator + ?Sized>(
    a: &A,
    y: &[f64],
    lam: f64,
    opts: &SolverOptions,
    x0: &[f64],
) -> Result<SolveResult> {
    check_positive("lam", lam)?;
    let d = Driver::new("ht", a, y, x0, opts, move |x: &[f64], r: &[f64]| {
        half_sq(r) + lam * x.iter().map(|v| v.abs().sqrt()).sum::<f64>()
    })?;
    let t = 1.0 / opts.lambda_st;
    iterate(d, move |d| {
        let (x, g) = d.data_gradient();
        let z: Vec<f64> = x.iter().zip(g).map(|(xi, gi)| xi - t * gi).collect();
        half_threshold(&z, lam, t)
    })
}
