//! Dense complex-matrix kernels.
//!
//! Storage and arithmetic come from `nalgebra`; the factorizations that the
//! rate expressions depend on (SVD, Cholesky log-determinant, Hermitian
//! inverse) are implemented here so their tolerances and failure modes are
//! explicit.

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use thiserror::Error;

use crate::constants::{CONDITION_CAP, HERMITIAN_TOL, RANK_TOL, SVD_MAX_SWEEPS};

/// Dense complex matrix.
pub type ComplexMatrix = DMatrix<Complex64>;

pub const ZERO: Complex64 = Complex64::new(0.0, 0.0);
pub const ONE: Complex64 = Complex64::new(1.0, 0.0);

#[derive(Debug, Clone, PartialEq, Error)]
pub enum NumericsError {
    #[error("empty matrix")]
    Empty,
    #[error("matrix is {rows}x{cols}, expected square")]
    NotSquare { rows: usize, cols: usize },
    #[error("matrix is not Hermitian (relative asymmetry {asymmetry:.3e})")]
    NotHermitian { asymmetry: f64 },
    #[error("matrix is not positive definite (pivot {pivot} = {value:.3e})")]
    NotPositiveDefinite { pivot: usize, value: f64 },
    #[error("matrix is ill-conditioned (condition estimate {condition:.3e})")]
    IllConditioned { condition: f64 },
    #[error("{op} did not converge after {iterations} iterations")]
    NonConvergence { op: &'static str, iterations: usize },
    #[error("non-finite entry in input")]
    NonFinite,
}

pub type NumResult<T> = Result<T, NumericsError>;

/// Thin singular value decomposition `m = u * diag(s) * v^H`.
///
/// For an `r x c` input, `u` is `r x p`, `v` is `c x p` and `s` has `p`
/// entries, where `p = min(r, c)`. Singular values are sorted descending.
#[derive(Debug, Clone)]
pub struct Svd {
    pub u: ComplexMatrix,
    pub s: Vec<f64>,
    pub v: ComplexMatrix,
}

impl Svd {
    pub fn reconstruct(&self) -> ComplexMatrix {
        let mut us = self.u.clone();
        for (j, &sj) in self.s.iter().enumerate() {
            us.column_mut(j).scale_mut(sj);
        }
        us * self.v.adjoint()
    }
}

fn check_finite(m: &ComplexMatrix) -> NumResult<()> {
    if m.iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
        Ok(())
    } else {
        Err(NumericsError::NonFinite)
    }
}

/// One-sided (Hestenes) Jacobi: returns `(m * v, v)` with `v` unitary and the
/// columns of `m * v` mutually orthogonal.
fn one_sided_jacobi(m: &ComplexMatrix) -> NumResult<(ComplexMatrix, ComplexMatrix)> {
    let (rows, cols) = m.shape();
    let mut w = m.clone();
    let mut v = ComplexMatrix::identity(cols, cols);
    let tol = 4.0 * f64::EPSILON;
    // Columns below this squared norm are numerically zero and left alone.
    let negligible = (f64::EPSILON * (rows.max(cols) as f64)).powi(2) * frobenius_sq(m);

    for _ in 0..SVD_MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..cols {
            for q in (p + 1)..cols {
                let mut alpha = 0.0;
                let mut beta = 0.0;
                let mut gamma = ZERO;
                for i in 0..rows {
                    let a = w[(i, p)];
                    let b = w[(i, q)];
                    alpha += a.norm_sqr();
                    beta += b.norm_sqr();
                    gamma += a.conj() * b;
                }
                let g = gamma.norm();
                if g == 0.0 || g <= tol * (alpha * beta).sqrt() || alpha.min(beta) <= negligible {
                    continue;
                }
                rotated = true;
                // Rotate column q by the phase of gamma so the 2x2 problem is real.
                let phase = (gamma / g).conj();
                let zeta = (beta - alpha) / (2.0 * g);
                let t = if zeta == 0.0 { 1.0 } else { zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt()) };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                for i in 0..rows {
                    let a = w[(i, p)];
                    let b = w[(i, q)] * phase;
                    w[(i, p)] = a * c - b * s;
                    w[(i, q)] = a * s + b * c;
                }
                for i in 0..cols {
                    let a = v[(i, p)];
                    let b = v[(i, q)] * phase;
                    v[(i, p)] = a * c - b * s;
                    v[(i, q)] = a * s + b * c;
                }
            }
        }
        if !rotated {
            return Ok((w, v));
        }
    }
    Err(NumericsError::NonConvergence { op: "svd", iterations: SVD_MAX_SWEEPS })
}

/// Extends the (orthonormal) columns of `basis` flagged `filled` to a full
/// orthonormal set by Gram-Schmidt against the standard basis.
fn complete_orthonormal(basis: &mut ComplexMatrix, filled: &[bool]) {
    let n = basis.nrows();
    let mut candidate = 0;
    for j in 0..basis.ncols() {
        if filled[j] {
            continue;
        }
        loop {
            let mut e = nalgebra::DVector::<Complex64>::zeros(n);
            e[candidate % n] = ONE;
            candidate += 1;
            for (k, &f) in filled.iter().enumerate() {
                if f || k < j {
                    let col = basis.column(k).clone_owned();
                    let proj = col.dotc(&e);
                    e -= col * proj;
                }
            }
            // Second pass for numerical orthogonality.
            for (k, &f) in filled.iter().enumerate() {
                if f || k < j {
                    let col = basis.column(k).clone_owned();
                    let proj = col.dotc(&e);
                    e -= col * proj;
                }
            }
            let nrm = e.norm();
            if nrm > 1e-6 {
                basis.set_column(j, &(e / Complex64::new(nrm, 0.0)));
                break;
            }
        }
    }
}

/// Singular values (descending, length `cols`, zero padded when
/// `rows < cols`) and a full `cols x cols` unitary matrix of right singular
/// vectors.
pub fn right_singular_basis(m: &ComplexMatrix) -> NumResult<(Vec<f64>, ComplexMatrix)> {
    if m.is_empty() {
        return Err(NumericsError::Empty);
    }
    check_finite(m)?;
    let (w, v) = one_sided_jacobi(m)?;
    let cols = m.ncols();
    let norms: Vec<f64> = (0..cols).map(|j| w.column(j).norm()).collect();
    let mut order: Vec<usize> = (0..cols).collect();
    order.sort_by(|&a, &b| norms[b].total_cmp(&norms[a]).then(a.cmp(&b)));
    let s = order.iter().map(|&j| norms[j]).collect();
    let v_sorted = ComplexMatrix::from_fn(cols, cols, |i, j| v[(i, order[j])]);
    Ok((s, v_sorted))
}

/// Thin SVD via one-sided Jacobi.
pub fn svd(m: &ComplexMatrix) -> NumResult<Svd> {
    if m.is_empty() {
        return Err(NumericsError::Empty);
    }
    check_finite(m)?;
    let (rows, cols) = m.shape();
    let p = rows.min(cols);
    let (w, v) = one_sided_jacobi(m)?;
    let norms: Vec<f64> = (0..cols).map(|j| w.column(j).norm()).collect();
    let mut order: Vec<usize> = (0..cols).collect();
    order.sort_by(|&a, &b| norms[b].total_cmp(&norms[a]).then(a.cmp(&b)));

    let smax = norms[order[0]];
    let cutoff = smax * f64::EPSILON * (rows.max(cols) as f64);
    let mut u = ComplexMatrix::zeros(rows, p);
    let mut filled = vec![false; p];
    let mut s = Vec::with_capacity(p);
    for (j, &src) in order.iter().take(p).enumerate() {
        let sj = norms[src];
        s.push(sj);
        if sj > cutoff && sj > 0.0 {
            u.set_column(j, &(w.column(src) / Complex64::new(sj, 0.0)));
            filled[j] = true;
        }
    }
    if filled.iter().any(|f| !f) {
        complete_orthonormal(&mut u, &filled);
    }
    let v_thin = ComplexMatrix::from_fn(cols, p, |i, j| v[(i, order[j])]);
    Ok(Svd { u, s, v: v_thin })
}

/// Largest entry of `|m - m^H|` relative to the largest entry of `|m|`.
pub fn hermitian_asymmetry(m: &ComplexMatrix) -> f64 {
    let n = m.nrows();
    let mut scale: f64 = 0.0;
    let mut diff: f64 = 0.0;
    for i in 0..n {
        for j in 0..n {
            scale = scale.max(m[(i, j)].norm());
            diff = diff.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    if scale == 0.0 {
        0.0
    } else {
        diff / scale
    }
}

fn check_hermitian(m: &ComplexMatrix) -> NumResult<()> {
    if m.is_empty() {
        return Err(NumericsError::Empty);
    }
    if !m.is_square() {
        return Err(NumericsError::NotSquare { rows: m.nrows(), cols: m.ncols() });
    }
    check_finite(m)?;
    let asymmetry = hermitian_asymmetry(m);
    if asymmetry > HERMITIAN_TOL {
        return Err(NumericsError::NotHermitian { asymmetry });
    }
    Ok(())
}

/// Lower Cholesky factor of a Hermitian positive definite matrix. Only the
/// lower triangle of `m` is read.
pub fn cholesky(m: &ComplexMatrix) -> NumResult<ComplexMatrix> {
    check_hermitian(m)?;
    let n = m.nrows();
    let scale = (0..n).map(|i| m[(i, i)].re.abs()).fold(0.0, f64::max);
    let floor = scale * f64::EPSILON * n as f64;
    let mut l = ComplexMatrix::zeros(n, n);
    for j in 0..n {
        let mut d = m[(j, j)].re;
        for k in 0..j {
            d -= l[(j, k)].norm_sqr();
        }
        if d.is_nan() || d <= floor || d <= 0.0 {
            return Err(NumericsError::NotPositiveDefinite { pivot: j, value: d });
        }
        let ljj = d.sqrt();
        l[(j, j)] = Complex64::new(ljj, 0.0);
        for i in (j + 1)..n {
            let mut acc = m[(i, j)];
            for k in 0..j {
                acc -= l[(i, k)] * l[(j, k)].conj();
            }
            l[(i, j)] = acc / ljj;
        }
    }
    Ok(l)
}

/// `log2 det(m)` for Hermitian positive definite `m`, via Cholesky.
pub fn logdet_hermitian(m: &ComplexMatrix) -> NumResult<f64> {
    let l = cholesky(m)?;
    Ok((0..l.nrows()).map(|i| 2.0 * l[(i, i)].re.log2()).sum())
}

/// Inverse of a Hermitian positive definite matrix.
///
/// The result is symmetrized so it is exactly Hermitian.
pub fn inverse_hermitian(m: &ComplexMatrix) -> NumResult<ComplexMatrix> {
    let l = cholesky(m)?;
    let n = l.nrows();
    let (dmin, dmax) = (0..n).fold((f64::INFINITY, 0.0_f64), |(lo, hi), i| {
        let d = l[(i, i)].re;
        (lo.min(d), hi.max(d))
    });
    let condition = (dmax / dmin).powi(2);
    if condition.is_nan() || condition >= CONDITION_CAP {
        return Err(NumericsError::IllConditioned { condition });
    }
    // Invert L by forward substitution, then inv(m) = inv(L)^H inv(L).
    let mut linv = ComplexMatrix::zeros(n, n);
    for j in 0..n {
        linv[(j, j)] = ONE / l[(j, j)];
        for i in (j + 1)..n {
            let mut acc = ZERO;
            for k in j..i {
                acc += l[(i, k)] * linv[(k, j)];
            }
            linv[(i, j)] = -acc / l[(i, i)];
        }
    }
    let inv = linv.adjoint() * &linv;
    Ok(hermitian_part(&inv))
}

/// `(m + m^H) / 2`.
pub fn hermitian_part(m: &ComplexMatrix) -> ComplexMatrix {
    (m + m.adjoint()).scale(0.5)
}

/// Inverse square root of a Hermitian positive definite matrix via its
/// eigendecomposition. On rank deficiency returns the index of the
/// coordinate carrying most weight in the weakest eigenvector.
pub fn hermitian_inv_sqrt(m: &ComplexMatrix) -> Result<ComplexMatrix, HermitianRankError> {
    let n = m.nrows();
    let eig = SymmetricEigen::try_new(hermitian_part(m), 1e-15, 10_000).ok_or(HermitianRankError::NonConvergence)?;
    let (imin, lmin) =
        eig.eigenvalues.iter().copied().enumerate().fold((0, f64::INFINITY), |acc, (i, l)| if l < acc.1 { (i, l) } else { acc });
    let lmax = eig.eigenvalues.iter().copied().fold(0.0, f64::max);
    if lmax.is_nan() || lmax <= 0.0 || lmin <= RANK_TOL * lmax {
        let weak = eig.eigenvectors.column(imin);
        let column = (0..n).max_by(|&a, &b| weak[a].norm().total_cmp(&weak[b].norm())).unwrap_or(0);
        return Err(HermitianRankError::Deficient { column });
    }
    let mut scaled = eig.eigenvectors.clone();
    for (j, &l) in eig.eigenvalues.iter().enumerate() {
        scaled.column_mut(j).scale_mut(1.0 / l.sqrt());
    }
    Ok(hermitian_part(&(scaled * eig.eigenvectors.adjoint())))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HermitianRankError {
    Deficient { column: usize },
    NonConvergence,
}

/// Pairwise (cascade) summation; its result does not depend on how the
/// terms were produced, only on their order.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    const BLOCK: usize = 8;
    if xs.len() <= BLOCK {
        xs.iter().sum()
    } else {
        let mid = xs.len() / 2;
        pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
    }
}

/// `(1/n) * sum(xs)` with pairwise summation.
pub fn pairwise_mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        0.0
    } else {
        pairwise_sum(xs) / xs.len() as f64
    }
}

/// Largest absolute entry of `a - b`.
pub fn max_abs_diff(a: &ComplexMatrix, b: &ComplexMatrix) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
}

/// Squared Frobenius norm.
pub fn frobenius_sq(m: &ComplexMatrix) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum()
}

/// Copy of `m` without column `skip`.
pub fn drop_column(m: &ComplexMatrix, skip: usize) -> ComplexMatrix {
    let keep: Vec<usize> = (0..m.ncols()).filter(|&j| j != skip).collect();
    ComplexMatrix::from_fn(m.nrows(), keep.len(), |i, j| m[(i, keep[j])])
}
