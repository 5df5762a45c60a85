//! Thresholding, proximal and projection operators.
//!
//! The prox of `α‖·‖₁²` (the map `H_α`) is
//!
//! ```text
//! H_α(x)_i = λ_i x_i / (λ_i + 2α),   λ_i = [√α |x_i| / √μ* − 2α]_+,
//! ```
//!
//! where `μ*` is the positive root of `ψ(μ) = Σ_i [√α |x_i| / √μ − 2α]_+ − 1`.
//! In the variable `s = 1/√μ` the function `ψ` is piecewise linear and
//! nondecreasing, so the root is bracketed by `s_lo = 2√α/‖x‖∞` (where
//! `ψ = −1`) and `s_hi = 2(1 + 2α)/(√α‖x‖∞)` (where `ψ > 0`). Bisection in `s`
//! identifies the active set `K = {i : λ_i > 0}`, after which the root is
//! available in closed form, `s* = (1 + 2α|K|) / (√α Σ_K |x_i|)`.
//!
//! On the active set `λ_i + 2α = √α|x_i|/√μ*`, hence
//! `H_α(x) = soft_threshold(x, 2√(αμ*))`.

use crate::error::{invalid, Error, Result};
use crate::vecops::{norm1, norm_inf};

/// Iteration cap for every bisection in this module.
pub const MAX_BISECTION: usize = 200;

/// Default root tolerance on `|ψ(μ*)|`.
pub const DEFAULT_PROX_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct ProxResult {
    pub value: Vec<f64>,
    /// Root of `ψ`; zero when the input is zero.
    pub mu_star: f64,
    pub lambda: Vec<f64>,
}

/// The ℓ₁ ball `{u : ‖u‖₁ ≤ radius_l1}`. `radius_sq` is the squared radius,
/// the quantity reported as "R" in experiment output.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RadiusSpec {
    pub radius_l1: f64,
    pub radius_sq: f64,
}

impl RadiusSpec {
    pub fn from_l1(radius_l1: f64) -> Result<Self> {
        if !(radius_l1 > 0.0 && radius_l1.is_finite()) {
            return Err(invalid(
                "radius_l1",
                format!("must be positive and finite, got {radius_l1}"),
            ));
        }
        Ok(Self {
            radius_l1,
            radius_sq: radius_l1 * radius_l1,
        })
    }

    pub fn from_sq(radius_sq: f64) -> Result<Self> {
        if !(radius_sq > 0.0 && radius_sq.is_finite()) {
            return Err(invalid(
                "radius_sq",
                format!("must be positive and finite, got {radius_sq}"),
            ));
        }
        Ok(Self {
            radius_l1: radius_sq.sqrt(),
            radius_sq,
        })
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        norm1(x) <= self.radius_l1
    }
}

/// Entrywise `sign(x_i)·max(|x_i| − t, 0)`.
pub fn soft_threshold(x: &[f64], t: f64) -> Result<Vec<f64>> {
    if !(t >= 0.0) {
        return Err(invalid("t", format!("threshold must be nonnegative, got {t}")));
    }
    Ok(x.iter().map(|&v| soft_scalar(v, t)).collect())
}

#[inline]
pub(crate) fn soft_scalar(v: f64, t: f64) -> f64 {
    if v > t {
        v - t
    } else if v < -t {
        v + t
    } else {
        0.0
    }
}

/// Half thresholding: entrywise minimizer of `½(u − a)² + c·|u|^{1/2}` with
/// `c = lam·step`.
///
/// Entries with `|a| ≤ (3/2)·c^{2/3}` map to zero; the others to
/// `(2/3)·a·(1 + cos(2π/3 − (2/3)·φ))` with
/// `φ = arccos((c/4)·(|a|/3)^{−3/2})`.
pub fn half_threshold(x: &[f64], lam: f64, step: f64) -> Result<Vec<f64>> {
    if !(lam > 0.0) {
        return Err(invalid("lam", format!("must be positive, got {lam}")));
    }
    if !(step > 0.0) {
        return Err(invalid("step", format!("must be positive, got {step}")));
    }
    let c = lam * step;
    let thr = 1.5 * c.powf(2.0 / 3.0);
    Ok(x.iter().map(|&a| half_scalar(a, c, thr)).collect())
}

#[inline]
fn half_scalar(a: f64, c: f64, thr: f64) -> f64 {
    if a.abs() <= thr {
        return 0.0;
    }
    let arg = (c / 4.0) * (a.abs() / 3.0).powf(-1.5);
    let phi = arg.clamp(-1.0, 1.0).acos();
    let shift = 2.0 * std::f64::consts::PI / 3.0 - 2.0 * phi / 3.0;
    (2.0 / 3.0) * a * (1.0 + shift.cos())
}

/// `ψ(μ) = Σ_i [√α|x_i|/√μ − 2α]_+ − 1`.
pub fn psi(mu: f64, x: &[f64], alpha: f64) -> Result<f64> {
    if !(mu > 0.0) {
        return Err(invalid("mu", format!("must be positive, got {mu}")));
    }
    if !(alpha > 0.0) {
        return Err(invalid("alpha", format!("must be positive, got {alpha}")));
    }
    Ok(psi_s(1.0 / mu.sqrt(), x, alpha.sqrt(), alpha).0)
}

/// `ψ` at `μ = 1/s²`, with the active-set size and `Σ_K |x_i|`.
fn psi_s(s: f64, x: &[f64], sqrt_alpha: f64, alpha: f64) -> (f64, usize, f64) {
    let mut total = 0.0;
    let mut count = 0;
    let mut mass = 0.0;
    for v in x {
        let a = v.abs();
        let t = sqrt_alpha * a * s - 2.0 * alpha;
        if t > 0.0 {
            total += t;
            count += 1;
            mass += a;
        }
    }
    (total - 1.0, count, mass)
}

/// `H_α(x)`, the minimizer of `½‖u − x‖² + α‖u‖₁²`.
pub fn prox_sq_l1(x: &[f64], alpha: f64, tol: f64) -> Result<ProxResult> {
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(invalid("alpha", format!("must be positive, got {alpha}")));
    }
    if !(tol > 0.0) {
        return Err(invalid("tol", format!("must be positive, got {tol}")));
    }
    let n = x.len();
    let a_max = norm_inf(x);
    if a_max == 0.0 {
        return Ok(ProxResult {
            value: vec![0.0; n],
            mu_star: 0.0,
            lambda: vec![0.0; n],
        });
    }
    if !a_max.is_finite() {
        return Err(invalid("x", "input must be finite"));
    }
    // Each term of ψ carries a rounding error of order ε·(λ_i + 4α); do not
    // ask for more than that resolution.
    let tol = tol.max(4.0 * n as f64 * f64::EPSILON * (1.0 + 4.0 * alpha));
    let sa = alpha.sqrt();
    let mut lo = 2.0 * sa / a_max;
    let mut hi = 2.0 * (1.0 + 2.0 * alpha) / (sa * a_max);

    let mut root = None;
    for _ in 0..MAX_BISECTION {
        let mid = 0.5 * (lo + hi);
        let (val, count, mass) = psi_s(mid, x, sa, alpha);
        if val.abs() <= tol {
            root = Some(mid);
            break;
        }
        if count > 0 {
            // Closed-form root for the active set seen at `mid`.
            let cand = (1.0 + 2.0 * alpha * count as f64) / (sa * mass);
            if cand.is_finite() && cand > 0.0 {
                // The candidate is the exact root when it reproduces the
                // active set it was computed from.
                let (v, c2, m2) = psi_s(cand, x, sa, alpha);
                if v.abs() <= tol || (c2 == count && m2 == mass) {
                    root = Some(cand);
                    break;
                }
            }
        }
        if val > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let s = root.ok_or(Error::BracketFailure {
        context: "prox_sq_l1: root of psi",
        iterations: MAX_BISECTION,
    })?;

    let mut value = vec![0.0; n];
    let mut lambda = vec![0.0; n];
    for ((v, l), &xi) in value.iter_mut().zip(lambda.iter_mut()).zip(x) {
        let li = (sa * xi.abs() * s - 2.0 * alpha).max(0.0);
        *l = li;
        *v = li * xi / (li + 2.0 * alpha);
    }
    Ok(ProxResult {
        value,
        mu_star: 1.0 / (s * s),
        lambda,
    })
}

/// Exact Euclidean projection onto the ℓ₁ ball by sorting magnitudes.
///
/// Ties in `|x_i|` are ordered by index; the projection itself is unique.
pub fn project_l1_ball_sort(x: &[f64], r: &RadiusSpec) -> Vec<f64> {
    if norm1(x) <= r.radius_l1 {
        return x.to_vec();
    }
    let theta = l1_ball_threshold(x, r.radius_l1);
    x.iter().map(|&v| soft_scalar(v, theta)).collect()
}

/// Threshold `θ ≥ 0` with `Σ (|x_i| − θ)_+ = radius`, assuming `‖x‖₁ > radius`.
fn l1_ball_threshold(x: &[f64], radius: f64) -> f64 {
    let mut mags: Vec<f64> = x.iter().map(|v| v.abs()).collect();
    // `sort_by` is stable, so equal magnitudes keep index order.
    mags.sort_by(|a, b| b.total_cmp(a));
    let mut cumsum = 0.0;
    let mut theta = 0.0;
    for (j, &m) in mags.iter().enumerate() {
        cumsum += m;
        let cand = (cumsum - radius) / (j + 1) as f64;
        if m - cand > 0.0 {
            theta = cand;
        } else {
            break;
        }
    }
    theta.max(0.0)
}

/// Projection onto the ℓ₁ ball through the prox of `α‖·‖₁²`: returns
/// `H_α(x)` with `α` tuned by bisection until `‖H_α(x)‖₁` is within
/// `tol·max(1, radius)` of the radius, or until the `α` bracket cannot be
/// split further in floating point.
pub fn project_l1_ball_hv(x: &[f64], r: &RadiusSpec, tol: f64) -> Result<Vec<f64>> {
    if !(tol > 0.0) {
        return Err(invalid("tol", format!("must be positive, got {tol}")));
    }
    if norm1(x) <= r.radius_l1 {
        return Ok(x.to_vec());
    }
    let target = r.radius_l1;
    let tol = tol * target.max(1.0);
    let norm_at = |alpha: f64| -> Result<(f64, Vec<f64>)> {
        let p = prox_sq_l1(x, alpha, DEFAULT_PROX_TOL)?;
        Ok((norm1(&p.value), p.value))
    };

    // ‖H_α(x)‖₁ decreases from ‖x‖₁ (α → 0) to 0 (α → ∞).
    let fail = |iterations| Error::BracketFailure {
        context: "project_l1_ball_hv: alpha bracket",
        iterations,
    };
    let (mut lo, mut hi) = (1.0_f64, 1.0_f64);
    let mut it = 0;
    loop {
        let (g, v) = norm_at(lo)?;
        if (g - target).abs() <= tol {
            return Ok(v);
        }
        if g > target {
            break;
        }
        lo *= 0.25;
        it += 1;
        if it >= MAX_BISECTION || lo == 0.0 {
            return Err(fail(it));
        }
    }
    loop {
        let (g, v) = norm_at(hi)?;
        if (g - target).abs() <= tol {
            return Ok(v);
        }
        if g < target {
            break;
        }
        hi *= 4.0;
        it += 1;
        if it >= MAX_BISECTION || !hi.is_finite() {
            return Err(fail(it));
        }
    }
    let mut best = None;
    for _ in 0..MAX_BISECTION {
        let mid = (lo * hi).sqrt();
        let (g, v) = norm_at(mid)?;
        if (g - target).abs() <= tol || mid <= lo || mid >= hi {
            return Ok(v);
        }
        if g > target {
            lo = mid;
        } else {
            hi = mid;
        }
        best = Some(v);
    }
    best.ok_or_else(|| fail(MAX_BISECTION))
}
