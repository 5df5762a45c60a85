//! Regularizer, objectives and surrogate.
//!
//! With `α ≥ β ≥ 0`:
//!
//! * `R(x)  = α‖x‖₁² − β‖x‖₂²`
//! * `J(x)  = ½‖Ax − y‖² + R(x)`
//! * `D(x)  = ½‖Ax − y‖² − β‖x‖₂²`
//! * `S(ω, x) = D(ω) + (γ/2)‖x − ω‖² − ½‖A(x − ω)‖²`

use crate::error::{check_len, invalid, Result};
use crate::linops::LinearOperator;
use crate::vecops::{dist2, norm1, norm2_sq};

/// Weights of the `ℓ₁² − ηℓ₂²` penalty.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegParams {
    pub alpha: f64,
    pub beta: f64,
}

impl RegParams {
    /// Requires `α > 0` and `0 ≤ β ≤ α`.
    pub fn new(alpha: f64, beta: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(invalid("alpha", format!("must be positive, got {alpha}")));
        }
        if !(beta >= 0.0 && beta <= alpha) {
            return Err(invalid(
                "beta",
                format!("must lie in [0, alpha={alpha}], got {beta}"),
            ));
        }
        Ok(Self { alpha, beta })
    }

    /// `β = η·α` with `η ∈ [0, 1]`.
    pub fn from_eta(alpha: f64, eta: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&eta) {
            return Err(invalid("eta", format!("must lie in [0, 1], got {eta}")));
        }
        Self::new(alpha, (eta * alpha).min(alpha))
    }

    pub fn eta(&self) -> f64 {
        self.beta / self.alpha
    }
}

pub fn eval_r(x: &[f64], p: &RegParams) -> f64 {
    let l1 = norm1(x);
    p.alpha * l1 * l1 - p.beta * norm2_sq(x)
}

/// `½‖Ax − y‖²`
pub fn data_misfit<A: LinearOperator + ?Sized>(a: &A, y: &[f64], x: &[f64]) -> Result<f64> {
    check_len("data term (y)", a.range_dim(), y.len())?;
    let ax = a.apply(x)?;
    Ok(0.5 * dist2(&ax, y).powi(2))
}

pub fn eval_j<A: LinearOperator + ?Sized>(
    a: &A,
    y: &[f64],
    x: &[f64],
    p: &RegParams,
) -> Result<f64> {
    Ok(data_misfit(a, y, x)? + eval_r(x, p))
}

pub fn eval_d<A: LinearOperator + ?Sized>(a: &A, y: &[f64], x: &[f64], beta: f64) -> Result<f64> {
    if !(beta >= 0.0) {
        return Err(invalid("beta", format!("must be nonnegative, got {beta}")));
    }
    Ok(data_misfit(a, y, x)? - beta * norm2_sq(x))
}

/// Surrogate `S_{β,γ}(ω, x)`; strictly convex in `ω` only when `γ > 2β`.
pub fn eval_surrogate<A: LinearOperator + ?Sized>(
    a: &A,
    y: &[f64],
    omega: &[f64],
    x: &[f64],
    beta: f64,
    gamma: f64,
) -> Result<f64> {
    if !(gamma > 2.0 * beta) {
        return Err(invalid(
            "gamma",
            format!("must exceed 2*beta = {}, got {gamma}", 2.0 * beta),
        ));
    }
    check_len("eval_surrogate (x)", omega.len(), x.len())?;
    let d = eval_d(a, y, omega, beta)?;
    let diff: Vec<f64> = x.iter().zip(omega).map(|(a, b)| a - b).collect();
    let adiff = a.apply(&diff)?;
    Ok(d + 0.5 * gamma * norm2_sq(&diff) - 0.5 * norm2_sq(&adiff))
}

/// `∇f(x) = A*(Ax − y) − 2βx` for `f = ½‖Ax − y‖² − β‖x‖₂²`.
pub fn grad_f<A: LinearOperator + ?Sized>(
    a: &A,
    y: &[f64],
    x: &[f64],
    beta: f64,
) -> Result<Vec<f64>> {
    check_len("grad_f (y)", a.range_dim(), y.len())?;
    let mut r = a.apply(x)?;
    r.iter_mut().zip(y).for_each(|(ri, yi)| *ri -= yi);
    let mut g = a.apply_adjoint(&r)?;
    g.iter_mut()
        .zip(x)
        .for_each(|(gi, xi)| *gi -= 2.0 * beta * xi);
    Ok(g)
}

/// Perspective of the square: `s²/t` for `t > 0`, `0` at the origin,
/// `+∞` elsewhere.
pub fn phi(s: f64, t: f64) -> f64 {
    if t > 0.0 {
        s * s / t
    } else if s == 0.0 && t == 0.0 {
        0.0
    } else {
        f64::INFINITY
    }
}

/// Minimizer over the simplex of `Σ φ(x_i, λ_i)`: `λ_i = |x_i| / ‖x‖₁`, or
/// uniform weights when `x = 0`.
pub fn optimal_lambda(x: &[f64]) -> Vec<f64> {
    let l1 = norm1(x);
    if l1 == 0.0 {
        let w = 1.0 / x.len().max(1) as f64;
        return vec![w; x.len()];
    }
    x.iter().map(|v| v.abs() / l1).collect()
}
