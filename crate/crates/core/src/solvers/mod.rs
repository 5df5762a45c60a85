//! Iterative solvers.
//!
//! Every solver shares one loop skeleton ([`Driver`]): the current iterate,
//! its image `Ax` and the residual are cached so that each iteration costs one
//! forward application and one adjoint. Iteration stops when
//! `‖x^{k+1} − x^k‖₂ < step_tol`, when the objective has not moved for
//! [`STAGNATION_WINDOW`] iterations, or at `max_iter`.

mod baselines;
mod discrepancy;
mod hv;
mod pg;

pub use baselines::{solve_fista, solve_fista_with, solve_ht_half, solve_ista, solve_st_l1_l2, ST_NORM_FLOOR};
pub use discrepancy::{select_alpha_discrepancy, AlphaSelection, AlphaSolver, DEFAULT_ALPHA_BRACKET};
pub use hv::solve_hv;
pub use pg::{
    expand_radius_bracket, pg_fixed_point_defect, search_radius_mdp, solve_pg_sf, MdpOptions,
    MdpOutcome, MdpStep,
};

use std::fmt;
use std::time::Instant;

use crate::error::{check_len, invalid, Error, Result};
use crate::linops::{estimate_opnorm_sq, LinearOperator};
use crate::vecops::{dist2, is_finite, norm2};

/// Consecutive iterations with an unchanged objective that count as stagnation.
pub const STAGNATION_WINDOW: usize = 50;

#[derive(Debug, Clone, PartialEq)]
pub struct SolverOptions {
    pub max_iter: usize,
    /// Threshold on `‖x^{k+1} − x^k‖₂`.
    pub step_tol: f64,
    /// HV step constant.
    pub l_k: f64,
    /// PG step constant; must exceed `2β`.
    pub gamma: f64,
    /// Step constant of ISTA, FISTA, ST and HT (step size `1/lambda_st`).
    pub lambda_st: f64,
    pub record_trace: bool,
    /// Ground truth for the relative error column of the trace.
    pub reference: Option<Vec<f64>>,
    /// Known `‖A*A‖`; estimated by power iteration when absent and needed.
    pub opnorm_sq: Option<f64>,
    /// Root tolerance of the inner prox computation.
    pub prox_tol: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            max_iter: 1500,
            step_tol: 1e-5,
            l_k: 1.0,
            gamma: 1.0,
            lambda_st: 1.0,
            record_trace: false,
            reference: None,
            opnorm_sq: None,
            prox_tol: crate::proxops::DEFAULT_PROX_TOL,
        }
    }
}

impl SolverOptions {
    pub fn validate(&self) -> Result<()> {
        if self.max_iter == 0 {
            return Err(invalid("max_iter", "must be at least 1"));
        }
        if !(self.step_tol > 0.0) {
            return Err(invalid("step_tol", format!("must be positive, got {}", self.step_tol)));
        }
        for (name, v) in [("l_k", self.l_k), ("gamma", self.gamma), ("lambda_st", self.lambda_st)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(invalid(name, format!("must be positive and finite, got {v}")));
            }
        }
        if !(self.prox_tol > 0.0) {
            return Err(invalid("prox_tol", "must be positive"));
        }
        Ok(())
    }

    /// `‖A*A‖`, from the cache or by power iteration.
    pub(crate) fn opnorm_sq<A: LinearOperator + ?Sized>(&self, a: &A) -> Result<f64> {
        match self.opnorm_sq {
            Some(r) => Ok(r),
            None => Ok(estimate_opnorm_sq(a, 1000, 1e-9)?.value),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Termination {
    StepTolReached,
    MaxIter,
    Stagnation,
}

impl Termination {
    pub fn as_str(&self) -> &'static str {
        match self {
            Termination::StepTolReached => "step_tol",
            Termination::MaxIter => "max_iter",
            Termination::Stagnation => "stagnation",
        }
    }
}

impl fmt::Display for Termination {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterateRecord {
    /// 1-based index of the iterate `x^k`.
    pub k: usize,
    pub objective: f64,
    /// `‖Ax^k − y‖₂`
    pub residual_norm: f64,
    /// `‖x^k − x^{k−1}‖₂`
    pub step_norm: f64,
    pub rerror: Option<f64>,
    pub elapsed_s: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveResult {
    pub x_final: Vec<f64>,
    pub iterations: usize,
    pub termination: Termination,
    pub trace: Vec<IterateRecord>,
    /// Objective at `x0`.
    pub initial_objective: f64,
    pub final_objective: f64,
    /// `‖Ax_final − y‖₂`
    pub residual_norm: f64,
    /// Non-fatal diagnostics, such as step constants outside the range that
    /// guarantees descent.
    pub warnings: Vec<String>,
}

/// Shared iteration state: iterate, cached image `Ax`, residual and the
/// data-term gradient `A*(Ax − y)`.
pub(crate) struct Driver<'a, A: ?Sized, F> {
    name: &'static str,
    a: &'a A,
    y: &'a [f64],
    opts: &'a SolverOptions,
    objective: F,
    x: Vec<f64>,
    ax: Vec<f64>,
    x_prev: Vec<f64>,
    ax_prev: Vec<f64>,
    grad: Vec<f64>,
    scratch: Vec<f64>,
    k: usize,
    last_objective: f64,
    initial_objective: f64,
    flat_count: usize,
    trace: Vec<IterateRecord>,
    warnings: Vec<String>,
    start: Instant,
}

impl<'a, A, F> Driver<'a, A, F>
where
    A: LinearOperator + ?Sized,
    F: Fn(&[f64], &[f64]) -> f64,
{
    /// `objective(x, r)` receives the iterate and its residual `Ax − y`.
    pub(crate) fn new(
        name: &'static str,
        a: &'a A,
        y: &'a [f64],
        x0: &[f64],
        opts: &'a SolverOptions,
        objective: F,
    ) -> Result<Self> {
        opts.validate()?;
        check_len("solver data y", a.range_dim(), y.len())?;
        check_len("solver start x0", a.domain_dim(), x0.len())?;
        if let Some(r) = &opts.reference {
            check_len("solver reference", a.domain_dim(), r.len())?;
        }
        if !is_finite(x0) {
            return Err(invalid("x0", "start vector must be finite"));
        }
        let mut ax = vec![0.0; a.range_dim()];
        a.apply_to(x0, &mut ax);
        let start = Instant::now();
        let mut d = Self {
            name,
            a,
            y,
            opts,
            objective,
            x: x0.to_vec(),
            ax_prev: ax.clone(),
            ax,
            x_prev: x0.to_vec(),
            grad: vec![0.0; a.domain_dim()],
            scratch: vec![0.0; a.range_dim()],
            k: 0,
            last_objective: 0.0,
            initial_objective: 0.0,
            flat_count: 0,
            trace: Vec::new(),
            warnings: Vec::new(),
            start,
        };
        d.residual_into_scratch_from_current();
        d.initial_objective = (d.objective)(&d.x, &d.scratch);
        d.last_objective = d.initial_objective;
        Ok(d)
    }

    fn residual_into_scratch_from_current(&mut self) {
        for ((s, ax), y) in self.scratch.iter_mut().zip(&self.ax).zip(self.y) {
            *s = ax - y;
        }
    }

    pub(crate) fn warn(&mut self, msg: String) {
        log::warn!("{}: {}", self.name, msg);
        self.warnings.push(msg);
    }

    /// The current iterate and `A*(Ax − y)` there.
    pub(crate) fn data_gradient(&mut self) -> (&[f64], &[f64]) {
        self.residual_into_scratch_from_current();
        self.a.apply_adjoint_to(&self.scratch, &mut self.grad);
        (&self.x, &self.grad)
    }

    /// Extrapolated point `v = x + m(x − x_prev)` and `A*(Av − y)`, using
    /// linearity to avoid an extra forward application.
    pub(crate) fn extrapolated_gradient(&mut self, m: f64) -> (Vec<f64>, &[f64]) {
        let v: Vec<f64> = self
            .x
            .iter()
            .zip(&self.x_prev)
            .map(|(x, p)| x + m * (x - p))
            .collect();
        for (((s, ax), axp), y) in self
            .scratch
            .iter_mut()
            .zip(&self.ax)
            .zip(&self.ax_prev)
            .zip(self.y)
        {
            *s = ax + m * (ax - axp) - y;
        }
        self.a.apply_adjoint_to(&self.scratch, &mut self.grad);
        (v, &self.grad)
    }

    /// Installs `x_new` as the next iterate; returns the termination reason
    /// once the loop should stop.
    pub(crate) fn accept(&mut self, x_new: Vec<f64>) -> Result<Option<Termination>> {
        self.k += 1;
        if !is_finite(&x_new) {
            return Err(Error::NonFinite {
                solver: self.name,
                iteration: self.k,
            });
        }
        let step = dist2(&x_new, &self.x);
        std::mem::swap(&mut self.x_prev, &mut self.x);
        std::mem::swap(&mut self.ax_prev, &mut self.ax);
        self.x = x_new;
        self.a.apply_to(&self.x, &mut self.ax);
        self.residual_into_scratch_from_current();
        let objective = (self.objective)(&self.x, &self.scratch);
        if !objective.is_finite() {
            return Err(Error::NonFinite {
                solver: self.name,
                iteration: self.k,
            });
        }
        if self.opts.record_trace {
            let rerror = self.opts.reference.as_deref().map(|r| {
                let nr = norm2(r);
                if nr > 0.0 {
                    dist2(&self.x, r) / nr
                } else {
                    f64::NAN
                }
            });
            self.trace.push(IterateRecord {
                k: self.k,
                objective,
                residual_norm: norm2(&self.scratch),
                step_norm: step,
                rerror,
                elapsed_s: self.start.elapsed().as_secs_f64(),
            });
        }
        let scale = objective.abs().max(self.last_objective.abs()).max(f64::MIN_POSITIVE);
        if (objective - self.last_objective).abs() <= 1e-15 * scale {
            self.flat_count += 1;
        } else {
            self.flat_count = 0;
        }
        self.last_objective = objective;

        if step < self.opts.step_tol {
            Ok(Some(Termination::StepTolReached))
        } else if self.flat_count >= STAGNATION_WINDOW {
            Ok(Some(Termination::Stagnation))
        } else if self.k >= self.opts.max_iter {
            Ok(Some(Termination::MaxIter))
        } else {
            Ok(None)
        }
    }

    pub(crate) fn finish(mut self, termination: Termination) -> SolveResult {
        self.residual_into_scratch_from_current();
        SolveResult {
            iterations: self.k,
            termination,
            trace: self.trace,
            initial_objective: self.initial_objective,
            final_objective: self.last_objective,
            residual_norm: norm2(&self.scratch),
            warnings: self.warnings,
            x_final: self.x,
        }
    }
}

/// Runs `step` until the driver reports termination.
pub(crate) fn iterate<'a, A, F, S>(mut d: Driver<'a, A, F>, mut step: S) -> Result<SolveResult>
where
    A: LinearOperator + ?Sized,
    F: Fn(&[f64], &[f64]) -> f64,
    S: FnMut(&mut Driver<'a, A, F>) -> Result<Vec<f64>>,
{
    loop {
        let x_new = step(&mut d)?;
        if let Some(t) = d.accept(x_new)? {
            return Ok(d.finish(t));
        }
    }
}

/// `½‖r‖²`
#[inline]
pub(crate) fn half_sq(r: &[f64]) -> f64 {
    0.5 * crate::vecops::norm2_sq(r)
}
