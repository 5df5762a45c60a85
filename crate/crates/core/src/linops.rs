//! Forward operators `A` with their adjoints.
//!
//! Two realizations are provided: an explicit dense matrix and the separable
//! Gaussian blur `A = (2πσ²)⁻¹ T ⊗ T` whose factor `T` is a symmetric banded
//! Toeplitz matrix. The blur operator never forms the `n² × n²` matrix; it acts
//! on the `n × n` image through `T X Tᵀ`.
//!
//! Images and vectors are related by the column-major reshape
//! `x[i + j·n] = X[i, j]`, under which `(T ⊗ T) vec(X) = vec(T X Tᵀ)`.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::error::{check_len, invalid, Error, Result};
use crate::io::fmt_f64;
use crate::vecops::{dot, norm2};

/// Largest `rows · cols` that [`densify`] will materialize.
pub const DENSIFY_LIMIT: usize = 10_000_000;

/// Seed of the start vector used by [`estimate_opnorm_sq`].
pub const POWER_ITERATION_SEED: u64 = 0x05ee_d0fa_11ce;

/// A bounded linear map `ℝⁿ → ℝᵐ` together with its adjoint.
///
/// `apply_to` and `apply_adjoint_to` assume correctly sized buffers and panic
/// otherwise; the checked `apply`/`apply_adjoint` wrappers return
/// [`Error::DimensionMismatch`] instead.
pub trait LinearOperator: Send + Sync {
    /// `n`, the length of the input vectors.
    fn domain_dim(&self) -> usize;
    /// `m`, the length of the output vectors.
    fn range_dim(&self) -> usize;
    /// `out ← A x`
    fn apply_to(&self, x: &[f64], out: &mut [f64]);
    /// `out ← A* y`
    fn apply_adjoint_to(&self, y: &[f64], out: &mut [f64]);

    fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_len("apply", self.domain_dim(), x.len())?;
        let mut out = vec![0.0; self.range_dim()];
        self.apply_to(x, &mut out);
        Ok(out)
    }

    fn apply_adjoint(&self, y: &[f64]) -> Result<Vec<f64>> {
        check_len("apply_adjoint", self.range_dim(), y.len())?;
        let mut out = vec![0.0; self.domain_dim()];
        self.apply_adjoint_to(y, &mut out);
        Ok(out)
    }
}

impl<T: LinearOperator + ?Sized> LinearOperator for &T {
    fn domain_dim(&self) -> usize {
        (**self).domain_dim()
    }
    fn range_dim(&self) -> usize {
        (**self).range_dim()
    }
    fn apply_to(&self, x: &[f64], out: &mut [f64]) {
        (**self).apply_to(x, out)
    }
    fn apply_adjoint_to(&self, y: &[f64], out: &mut [f64]) {
        (**self).apply_adjoint_to(y, out)
    }
}

/// Explicit `m × n` matrix stored row-major, evaluated as `scale · M`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    entries: Vec<f64>,
    scale: f64,
}

impl DenseMatrix {
    pub fn new(rows: usize, cols: usize, entries: Vec<f64>, scale: f64) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(invalid("shape", "matrix dimensions must be positive"));
        }
        check_len("DenseMatrix::new", rows * cols, entries.len())?;
        if !entries.iter().all(|v| v.is_finite()) {
            return Err(invalid("entries", "matrix entries must be finite"));
        }
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(invalid("scale", format!("must be positive and finite, got {scale}")));
        }
        Ok(Self {
            rows,
            cols,
            entries,
            scale,
        })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut entries = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            check_len("DenseMatrix::from_rows", cols, r.len())?;
            entries.extend_from_slice(r);
        }
        Self::new(rows.len(), cols, entries, 1.0)
    }

    pub fn identity(n: usize) -> Result<Self> {
        let mut entries = vec![0.0; n * n];
        for i in 0..n {
            entries[i * n + i] = 1.0;
        }
        Self::new(n, n, entries, 1.0)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    /// Raw (unscaled) row-major entries.
    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    /// Effective entry `scale · M[i, j]`.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.scale * self.entries[i * self.cols + j]
    }

    /// Same matrix with the scale multiplied into the entries.
    pub fn folded(&self) -> DenseMatrix {
        DenseMatrix {
            rows: self.rows,
            cols: self.cols,
            entries: self.entries.iter().map(|v| v * self.scale).collect(),
            scale: 1.0,
        }
    }

    /// Writes the effective matrix as CSV, one row per line.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        for i in 0..self.rows {
            let line: Vec<String> = (0..self.cols).map(|j| fmt_f64(self.get(i, j))).collect();
            writeln!(w, "{}", line.join(","))?;
        }
        Ok(())
    }

    fn to_nalgebra(&self) -> nalgebra::DMatrix<f64> {
        nalgebra::DMatrix::from_fn(self.rows, self.cols, |i, j| self.get(i, j))
    }
}

impl LinearOperator for DenseMatrix {
    fn domain_dim(&self) -> usize {
        self.cols
    }

    fn range_dim(&self) -> usize {
        self.rows
    }

    fn apply_to(&self, x: &[f64], out: &mut [f64]) {
        assert_eq!(x.len(), self.cols);
        assert_eq!(out.len(), self.rows);
        for (o, row) in out.iter_mut().zip(self.entries.chunks_exact(self.cols)) {
            *o = self.scale * dot(row, x);
        }
    }

    fn apply_adjoint_to(&self, y: &[f64], out: &mut [f64]) {
        assert_eq!(y.len(), self.rows);
        assert_eq!(out.len(), self.cols);
        out.iter_mut().for_each(|v| *v = 0.0);
        for (&yi, row) in y.iter().zip(self.entries.chunks_exact(self.cols)) {
            if yi == 0.0 {
                continue;
            }
            for (o, a) in out.iter_mut().zip(row) {
                *o += yi * a;
            }
        }
        out.iter_mut().for_each(|v| *v *= self.scale);
    }
}

/// Separable Gaussian blur `scale · T ⊗ T` acting on `n × n` images.
#[derive(Debug, Clone, PartialEq)]
pub struct KroneckerBlur {
    n: usize,
    band: usize,
    sigma: f64,
    first_row: Vec<f64>,
    scale: f64,
}

impl KroneckerBlur {
    pub fn new(n: usize, band: usize, sigma: f64) -> Result<Self> {
        if n == 0 {
            return Err(invalid("n", "image side must be positive"));
        }
        if band == 0 || band > n {
            return Err(invalid("band", format!("must lie in [1, {n}], got {band}")));
        }
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(invalid("sigma", format!("must be positive, got {sigma}")));
        }
        let first_row = (0..n)
            .map(|j| {
                if j < band {
                    let j = j as f64;
                    (-(j * j) / (2.0 * sigma * sigma)).exp()
                } else {
                    0.0
                }
            })
            .collect();
        Ok(Self {
            n,
            band,
            sigma,
            first_row,
            scale: 1.0 / (2.0 * std::f64::consts::PI * sigma * sigma),
        })
    }

    pub fn side(&self) -> usize {
        self.n
    }

    pub fn band(&self) -> usize {
        self.band
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    /// First row `z` of the Toeplitz factor `T`.
    pub fn toeplitz_first_row(&self) -> &[f64] {
        &self.first_row
    }

    /// `out ← scale · T X T` with `X` the column-major image in `x`.
    fn blur(&self, x: &[f64], out: &mut [f64]) {
        let n = self.n;
        assert_eq!(x.len(), n * n);
        assert_eq!(out.len(), n * n);
        let z = &self.first_row[..self.band];
        let reach = self.band - 1;

        // Z = T X, column by column.
        let mut tx = vec![0.0; n * n];
        for (xc, zc) in x.chunks_exact(n).zip(tx.chunks_exact_mut(n)) {
            for (i, zi) in zc.iter_mut().enumerate() {
                let lo = i.saturating_sub(reach);
                let hi = (i + reach).min(n - 1);
                let mut acc = 0.0;
                for (k, xk) in xc[lo..=hi].iter().enumerate() {
                    acc += z[(lo + k).abs_diff(i)] * xk;
                }
                *zi = acc;
            }
        }

        // Y = Z T: column j mixes columns l with |l − j| < band.
        out.iter_mut().for_each(|v| *v = 0.0);
        for (j, oc) in out.chunks_exact_mut(n).enumerate() {
            let lo = j.saturating_sub(reach);
            let hi = (j + reach).min(n - 1);
            for l in lo..=hi {
                let w = self.scale * z[l.abs_diff(j)];
                for (o, v) in oc.iter_mut().zip(&tx[l * n..(l + 1) * n]) {
                    *o += w * v;
                }
            }
        }
    }
}

impl LinearOperator for KroneckerBlur {
    fn domain_dim(&self) -> usize {
        self.n * self.n
    }

    fn range_dim(&self) -> usize {
        self.n * self.n
    }

    fn apply_to(&self, x: &[f64], out: &mut [f64]) {
        self.blur(x, out)
    }

    fn apply_adjoint_to(&self, y: &[f64], out: &mut [f64]) {
        self.blur(y, out)
    }
}

/// Either concrete realization.
#[derive(Debug, Clone, PartialEq)]
pub enum Operator {
    Dense(DenseMatrix),
    Blur(KroneckerBlur),
}

impl LinearOperator for Operator {
    fn domain_dim(&self) -> usize {
        match self {
            Operator::Dense(a) => a.domain_dim(),
            Operator::Blur(a) => a.domain_dim(),
        }
    }

    fn range_dim(&self) -> usize {
        match self {
            Operator::Dense(a) => a.range_dim(),
            Operator::Blur(a) => a.range_dim(),
        }
    }

    fn apply_to(&self, x: &[f64], out: &mut [f64]) {
        match self {
            Operator::Dense(a) => a.apply_to(x, out),
            Operator::Blur(a) => a.apply_to(x, out),
        }
    }

    fn apply_adjoint_to(&self, y: &[f64], out: &mut [f64]) {
        match self {
            Operator::Dense(a) => a.apply_adjoint_to(y, out),
            Operator::Blur(a) => a.apply_adjoint_to(y, out),
        }
    }
}

impl From<DenseMatrix> for Operator {
    fn from(a: DenseMatrix) -> Self {
        Operator::Dense(a)
    }
}

impl From<KroneckerBlur> for Operator {
    fn from(a: KroneckerBlur) -> Self {
        Operator::Blur(a)
    }
}

/// `factor · A` for a borrowed operator.
#[derive(Debug, Clone, Copy)]
pub struct Scaled<'a, A: ?Sized> {
    inner: &'a A,
    factor: f64,
}

impl<'a, A: LinearOperator + ?Sized> Scaled<'a, A> {
    pub fn new(inner: &'a A, factor: f64) -> Self {
        Self { inner, factor }
    }

    pub fn factor(&self) -> f64 {
        self.factor
    }
}

impl<A: LinearOperator + ?Sized> LinearOperator for Scaled<'_, A> {
    fn domain_dim(&self) -> usize {
        self.inner.domain_dim()
    }
    fn range_dim(&self) -> usize {
        self.inner.range_dim()
    }
    fn apply_to(&self, x: &[f64], out: &mut [f64]) {
        self.inner.apply_to(x, out);
        out.iter_mut().for_each(|v| *v *= self.factor);
    }
    fn apply_adjoint_to(&self, y: &[f64], out: &mut [f64]) {
        self.inner.apply_adjoint_to(y, out);
        out.iter_mut().for_each(|v| *v *= self.factor);
    }
}

/// Result of the power method on `A*A`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OpNormEstimate {
    /// Estimate of `‖A*A‖ = ‖A‖²`.
    pub value: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Estimates `‖A*A‖` by power iteration from a fixed positive start vector.
pub fn estimate_opnorm_sq<A: LinearOperator + ?Sized>(
    op: &A,
    max_iters: usize,
    tol: f64,
) -> Result<OpNormEstimate> {
    estimate_opnorm_sq_seeded(op, max_iters, tol, POWER_ITERATION_SEED)
}

pub fn estimate_opnorm_sq_seeded<A: LinearOperator + ?Sized>(
    op: &A,
    max_iters: usize,
    tol: f64,
    seed: u64,
) -> Result<OpNormEstimate> {
    if max_iters == 0 {
        return Err(invalid("max_iters", "must be at least 1"));
    }
    if !(tol > 0.0) {
        return Err(invalid("tol", format!("must be positive, got {tol}")));
    }
    let n = op.domain_dim();
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut v: Vec<f64> = (0..n).map(|_| rng.random_range(0.5..1.5)).collect();
    let nv = norm2(&v);
    v.iter_mut().for_each(|x| *x /= nv);

    let mut av = vec![0.0; op.range_dim()];
    let mut w = vec![0.0; n];
    let mut estimate = 0.0;
    for it in 1..=max_iters {
        op.apply_to(&v, &mut av);
        op.apply_adjoint_to(&av, &mut w);
        let rayleigh = dot(&v, &w);
        let nw = norm2(&w);
        if nw == 0.0 {
            return Ok(OpNormEstimate {
                value: 0.0,
                iterations: it,
                converged: true,
            });
        }
        let converged = it > 1 && (rayleigh - estimate).abs() <= tol * rayleigh.abs();
        estimate = rayleigh;
        if converged {
            return Ok(OpNormEstimate {
                value: estimate,
                iterations: it,
                converged: true,
            });
        }
        for (vi, wi) in v.iter_mut().zip(&w) {
            *vi = wi / nw;
        }
    }
    Ok(OpNormEstimate {
        value: estimate,
        iterations: max_iters,
        converged: false,
    })
}

/// Materializes `A` column by column from its action on basis vectors.
pub fn densify<A: LinearOperator + ?Sized>(op: &A) -> Result<DenseMatrix> {
    let (m, n) = (op.range_dim(), op.domain_dim());
    if m.saturating_mul(n) > DENSIFY_LIMIT {
        return Err(Error::TooLarge {
            rows: m,
            cols: n,
            limit: DENSIFY_LIMIT,
        });
    }
    let mut entries = vec![0.0; m * n];
    let mut e = vec![0.0; n];
    let mut col = vec![0.0; m];
    for j in 0..n {
        e[j] = 1.0;
        op.apply_to(&e, &mut col);
        e[j] = 0.0;
        for (i, c) in col.iter().enumerate() {
            entries[i * n + j] = *c;
        }
    }
    DenseMatrix::new(m, n, entries, 1.0)
}

/// Singular values of the effective matrix, largest first.
pub fn singular_values(a: &DenseMatrix) -> Vec<f64> {
    let mut s: Vec<f64> = a.to_nalgebra().singular_values().iter().copied().collect();
    s.sort_by(|x, y| y.total_cmp(x));
    s
}

/// `σ_max / σ_min` over the `min(m, n)` singular values.
pub fn condition_number(a: &DenseMatrix) -> f64 {
    let s = singular_values(a);
    match (s.first(), s.last()) {
        (Some(&hi), Some(&lo)) if lo > 0.0 => hi / lo,
        _ => f64::INFINITY,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn random_matrix(m: usize, n: usize, seed: u64) -> DenseMatrix {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let e = (0..m * n).map(|_| rng.random_range(-1.0..1.0)).collect();
        DenseMatrix::new(m, n, e, 1.0).unwrap()
    }

    #[test]
    fn identity_apply() {
        let a = DenseMatrix::identity(2).unwrap();
        assert_eq!(a.apply(&[1.0, 2.0]).unwrap(), vec![1.0, 2.0]);
    }

    #[test]
    fn shift_adjoint_is_transpose() {
        let a = DenseMatrix::from_rows(&[vec![0.0, 1.0], vec![0.0, 0.0]]).unwrap();
        assert_eq!(a.apply_adjoint(&[1.0, 0.0]).unwrap(), vec![0.0, 1.0]);
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let a = DenseMatrix::identity(3).unwrap();
        assert!(matches!(
            a.apply(&[1.0]),
            Err(Error::DimensionMismatch { .. })
        ));
        let b = KroneckerBlur::new(3, 2, 0.7).unwrap();
        assert!(b.apply_adjoint(&[0.0; 8]).is_err());
    }

    #[test]
    fn rejects_bad_construction() {
        assert!(DenseMatrix::new(1, 1, vec![f64::NAN], 1.0).is_err());
        assert!(DenseMatrix::new(1, 1, vec![1.0], 0.0).is_err());
        assert!(KroneckerBlur::new(4, 0, 1.0).is_err());
        assert!(KroneckerBlur::new(4, 5, 1.0).is_err());
        assert!(KroneckerBlur::new(4, 2, 0.0).is_err());
    }

    #[test]
    fn random_dense_adjoint_identity() {
        let a = random_matrix(5, 3, 11);
        let mut rng = ChaCha20Rng::seed_from_u64(12);
        let x: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
        let y: Vec<f64> = (0..5).map(|_| rng.random_range(-1.0..1.0)).collect();
        let lhs = dot(&a.apply(&x).unwrap(), &y);
        let rhs = dot(&x, &a.apply_adjoint(&y).unwrap());
        assert!((lhs - rhs).abs() < 1e-12);
    }

    #[test]
    fn toeplitz_row_follows_gaussian() {
        let b = KroneckerBlur::new(6, 3, 0.7).unwrap();
        let z = b.toeplitz_first_row();
        for (j, v) in z.iter().enumerate() {
            let want = if j < 3 {
                (-(j as f64).powi(2) / (2.0 * 0.7 * 0.7)).exp()
            } else {
                0.0
            };
            assert_relative_eq!(*v, want, max_relative = 1e-15);
        }
    }

    #[test]
    fn band_one_blur_is_scaled_identity() {
        let sigma = 1.3;
        let b = KroneckerBlur::new(4, 1, sigma).unwrap();
        let x: Vec<f64> = (0..16).map(|i| i as f64 - 3.0).collect();
        let y = b.apply(&x).unwrap();
        let s = 1.0 / (2.0 * std::f64::consts::PI * sigma * sigma);
        for (a, b) in x.iter().zip(&y) {
            assert_relative_eq!(a * s, *b, max_relative = 1e-15);
        }
        let d = densify(&KroneckerBlur::new(2, 1, sigma).unwrap()).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                let want = if i == j { s } else { 0.0 };
                assert_relative_eq!(d.get(i, j), want, max_relative = 1e-15);
            }
        }
    }

    #[test]
    fn blur_first_column_matches_explicit_kronecker() {
        // Explicit T ⊗ T for n = 3, band = 2, σ = 0.7.
        let n = 3;
        let b = KroneckerBlur::new(n, 2, 0.7).unwrap();
        let z = b.toeplitz_first_row().to_vec();
        let t = |i: usize, j: usize| z[i.abs_diff(j)];
        let mut e1 = vec![0.0; n * n];
        e1[0] = 1.0;
        let col = b.apply(&e1).unwrap();
        for (r, got) in col.iter().enumerate() {
            // row index r = i + j n pairs with column 0 = (0, 0):
            // (T ⊗ T)[(i,j),(k,l)] = T[j,l] T[i,k]
            let (i, j) = (r % n, r / n);
            let want = b.scale() * t(j, 0) * t(i, 0);
            assert_relative_eq!(*got, want, max_relative = 1e-14, epsilon = 1e-300);
        }
    }

    #[test]
    fn power_method_on_diagonal() {
        let a = DenseMatrix::from_rows(&[vec![3.0, 0.0], vec![0.0, 1.0]]).unwrap();
        let est = estimate_opnorm_sq(&a, 500, 1e-14).unwrap();
        assert!(est.converged);
        assert_relative_eq!(est.value, 9.0, max_relative = 1e-10);
        let id = DenseMatrix::identity(4).unwrap();
        assert_relative_eq!(estimate_opnorm_sq(&id, 10, 1e-12).unwrap().value, 1.0);
    }

    #[test]
    fn power_method_is_deterministic() {
        let a = random_matrix(7, 9, 3);
        let e1 = estimate_opnorm_sq(&a, 50, 1e-9).unwrap();
        let e2 = estimate_opnorm_sq(&a, 50, 1e-9).unwrap();
        assert_eq!(e1, e2);
    }

    #[test]
    fn power_method_rejects_bad_args() {
        let a = DenseMatrix::identity(2).unwrap();
        assert!(estimate_opnorm_sq(&a, 0, 1e-6).is_err());
        assert!(estimate_opnorm_sq(&a, 5, 0.0).is_err());
    }

    #[test]
    fn densify_dense_folds_scale() {
        let a = DenseMatrix::new(2, 2, vec![1.0, 2.0, 3.0, 4.0], 0.5).unwrap();
        let d = densify(&a).unwrap();
        assert_eq!(d, a.folded());
        assert_eq!(d.scale(), 1.0);
    }

    #[test]
    fn densify_guard() {
        let b = KroneckerBlur::new(60, 2, 1.0).unwrap();
        assert!(matches!(densify(&b), Err(Error::TooLarge { .. })));
    }

    #[test]
    fn csv_dump_round_trips() {
        let a = random_matrix(3, 4, 9);
        let mut buf = Vec::new();
        a.write_csv(&mut buf).unwrap();
        let back = crate::io::read_matrix_csv(buf.as_slice()).unwrap();
        assert_eq!(back, a);
    }

    #[test]
    fn scaled_wrapper() {
        let a = DenseMatrix::identity(2).unwrap();
        let s = Scaled::new(&a, 0.5);
        assert_eq!(s.apply(&[2.0, 4.0]).unwrap(), vec![1.0, 2.0]);
        assert_eq!(s.apply_adjoint(&[2.0, 4.0]).unwrap(), vec![1.0, 2.0]);
    }
}
