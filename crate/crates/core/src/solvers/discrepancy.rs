use super::{solve_fista, solve_ht_half, solve_hv, solve_ista, solve_st_l1_l2, SolveResult, SolverOptions};
use crate::error::{invalid, Result};
use crate::linops::LinearOperator;
use crate::regfun::RegParams;

pub const DEFAULT_ALPHA_BRACKET: (f64, f64) = (1e-8, 1e-1);
const BISECTION_STEPS: usize = 60;
/// The accepted residual band is `[δ, BAND·δ]`.
const BAND: f64 = 1.05;

/// Solver whose regularization weight is being tuned.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AlphaSolver {
    /// `β = η α`.
    Hv,
    Ista,
    Fista,
    /// `β = η α`.
    StL1L2,
    /// `lam = α`.
    HtHalf,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AlphaSelection {
    pub alpha: f64,
    /// Residual of the solve at `alpha`.
    pub residual: f64,
    /// False when the band was not reached: an endpoint of the bracket already
    /// violates the ordering, or bisection ran out of steps.
    pub bracketed: bool,
    pub steps: usize,
    pub result: SolveResult,
}

fn solve_with<A: LinearOperator + ?Sized>(
    a: &A,
    y: &[f64],
    alpha: f64,
    eta: f64,
    solver: AlphaSolver,
    opts: &SolverOptions,
    x0: &[f64],
) -> Result<SolveResult> {
    match solver {
        AlphaSolver::Hv => solve_hv(a, y, &RegParams::from_eta(alpha, eta)?, opts, x0),
        AlphaSolver::Ista => solve_ista(a, y, alpha, opts, x0),
        AlphaSolver::Fista => solve_fista(a, y, alpha, opts, x0),
        AlphaSolver::StL1L2 => solve_st_l1_l2(a, y, alpha, eta * alpha, opts, x0),
        AlphaSolver::HtHalf => solve_ht_half(a, y, alpha, opts, x0),
    }
}

/// Chooses `α` so that the residual `‖Ax_α − y‖` lies in `[δ, 1.05δ]`, by
/// bisection on `log α`. The residual grows with `α`.
#[allow(clippy::too_many_arguments)]
pub fn select_alpha_discrepancy<A: LinearOperator + ?Sized>(
    a: &A,
    y: &[f64],
    delta: f64,
    eta: f64,
    solver: AlphaSolver,
    opts: &SolverOptions,
    x0: &[f64],
    alpha_bracket: (f64, f64),
) -> Result<AlphaSelection> {
    if !(delta > 0.0 && delta.is_finite()) {
        return Err(invalid("delta", format!("must be positive, got {delta}")));
    }
    let (mut lo, mut hi) = alpha_bracket;
    if !(lo > 0.0 && hi > lo && hi.is_finite()) {
        return Err(invalid(
            "alpha_bracket",
            format!("need 0 < lo < hi, got ({lo}, {hi})"),
        ));
    }
    let mut inner = opts.clone();
    if matches!(solver, AlphaSolver::Hv) && inner.opnorm_sq.is_none() {
        inner.opnorm_sq = Some(opts.opnorm_sq(a)?);
    }
    let in_band = |r: f64| r >= delta && r <= BAND * delta;
    let pick = |alpha: f64, result: SolveResult, bracketed: bool, steps: usize| AlphaSelection {
        alpha,
        residual: result.residual_norm,
        bracketed,
        steps,
        result,
    };

    let at_lo = solve_with(a, y, lo, eta, solver, &inner, x0)?;
    if at_lo.residual_norm >= delta {
        let ok = in_band(at_lo.residual_norm);
        return Ok(pick(lo, at_lo, ok, 0));
    }
    let at_hi = solve_with(a, y, hi, eta, solver, &inner, x0)?;
    if at_hi.residual_norm <= BAND * delta {
        let ok = in_band(at_hi.residual_norm);
        return Ok(pick(hi, at_hi, ok, 0));
    }
    let mut last = None;
    for step in 1..=BISECTION_STEPS {
        let mid = (lo * hi).sqrt();
        let res = solve_with(a, y, mid, eta, solver, &inner, x0)?;
        let r = res.residual_norm;
        if in_band(r) {
            return Ok(pick(mid, res, true, step));
        }
        if r < delta {
            lo = mid;
        } else {
            hi = mid;
        }
        last = Some((mid, res));
    }
    let (alpha, res) = last.expect("bisection ran at least once");
    log::warn!("alpha selection did not reach the discrepancy band after {BISECTION_STEPS} steps");
    Ok(pick(alpha, res, false, BISECTION_STEPS))
}
