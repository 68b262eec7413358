//! Small dense linear-algebra helpers shared by the samplers and filters.

use std::cell::Cell;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{Error, Result};

pub type Mat = DMatrix<f64>;
pub type Vector = DVector<f64>;
pub type Chol = Cholesky<f64, Dyn>;

const JITTER_BASE: f64 = 1e-9;
const JITTER_DECADES: i32 = 3;

thread_local! {
    static JITTER_RETRIES: Cell<u64> = const { Cell::new(0) };
}

/// Number of jitter retries taken on this thread so far.
pub fn jitter_retries() -> u64 {
    JITTER_RETRIES.with(|c| c.get())
}

/// Replace `m` by `(m + mᵀ) / 2`.
pub fn symmetrize(m: &mut Mat) {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

pub fn symmetrized(m: &Mat) -> Mat {
    let mut out = m.clone();
    symmetrize(&mut out);
    out
}

/// Cholesky factorization with the bounded jitter fallback.
///
/// The first attempt uses the symmetrized matrix as is. On failure a diagonal
/// jitter of `1e-9 · trace/dim` is added, growing by a decade per retry up to
/// three decades. Exhausting the schedule is an error.
pub fn cholesky(m: &Mat, context: &str) -> Result<Chol> {
    if m.nrows() != m.ncols() {
        return Err(Error::dims(format!("{context}: non-square {}x{}", m.nrows(), m.ncols())));
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::NotPositiveDefinite {
            context: format!("{context}: non-finite entries"),
        });
    }
    let sym = symmetrized(m);
    if let Some(c) = Cholesky::new(sym.clone()) {
        return Ok(c);
    }
    let n = sym.nrows().max(1) as f64;
    let scale = sym.trace() / n;
    if !(scale > 0.0) {
        return Err(Error::NotPositiveDefinite {
            context: context.to_string(),
        });
    }
    for decade in 0..=JITTER_DECADES {
        JITTER_RETRIES.with(|c| c.set(c.get() + 1));
        let eps = JITTER_BASE * 10f64.powi(decade) * scale;
        let mut jittered = sym.clone();
        for i in 0..jittered.nrows() {
            jittered[(i, i)] += eps;
        }
        if let Some(c) = Cholesky::new(jittered) {
            return Ok(c);
        }
    }
    Err(Error::NotPositiveDefinite {
        context: context.to_string(),
    })
}

/// Inverse of a symmetric positive-definite matrix, returned symmetric.
pub fn spd_inverse(m: &Mat, context: &str) -> Result<Mat> {
    let mut inv = cholesky(m, context)?.inverse();
    symmetrize(&mut inv);
    Ok(inv)
}

/// `log det` from a Cholesky factor.
pub fn chol_logdet(c: &Chol) -> f64 {
    2.0 * c.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>()
}

/// Log density of `N(x; mean, cov)` given the Cholesky factor of `cov`.
pub fn mvn_logpdf_chol(x: &Vector, mean: &Vector, chol: &Chol) -> f64 {
    let diff = x - mean;
    let l = chol.l();
    let z = l
        .solve_lower_triangular(&diff)
        .expect("cholesky factor has a positive diagonal");
    let d = x.len() as f64;
    -0.5 * (d * (2.0 * std::f64::consts::PI).ln() + chol_logdet(chol) + z.norm_squared())
}

/// Log density of `N(x; mean, cov)`.
pub fn mvn_logpdf(x: &Vector, mean: &Vector, cov: &Mat) -> Result<f64> {
    let chol = cholesky(cov, "gaussian covariance")?;
    Ok(mvn_logpdf_chol(x, mean, &chol))
}

/// True when `m` is symmetric within `tol` relative to its largest entry.
pub fn is_symmetric(m: &Mat, tol: f64) -> bool {
    if m.nrows() != m.ncols() {
        return false;
    }
    let scale = m.amax().max(1e-300);
    (m - m.transpose()).amax() <= tol * scale
}

/// Stable `log Σ exp(values)`.
pub fn logsumexp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    if max == f64::INFINITY {
        return f64::INFINITY;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Append a trailing 1 to a regressor.
pub fn augment(x: &Vector) -> Vector {
    let mut out = Vector::zeros(x.len() + 1);
    out.rows_mut(0, x.len()).copy_from(x);
    out[x.len()] = 1.0;
    out
}
