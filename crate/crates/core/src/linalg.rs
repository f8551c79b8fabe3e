//! Dense complex linear algebra shared by the rest of the crate.
//!
//! Every operator on the internal space is a small dense [`CMat`]. The only
//! factorization used for decisions is the Hermitian eigendecomposition:
//! supports, square roots and ranks are all read off the spectrum with a
//! relative cutoff `tol * λ_max`, falling back to [`ABSOLUTE_CUTOFF`] when the
//! whole spectrum is numerically zero.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use thiserror::Error;

pub type C64 = Complex64;
pub type CMat = DMatrix<C64>;
pub type CVec = DVector<C64>;

/// Relative rank cutoff used when callers have no better tolerance.
pub const DEFAULT_TOL: f64 = 1e-10;
/// Absolute eigenvalue cutoff applied when `λ_max` is below [`TINY_SPECTRUM`].
pub const ABSOLUTE_CUTOFF: f64 = 1e-14;
pub const TINY_SPECTRUM: f64 = 1e-12;

/// Eigenvalues this close (as a factor) to the cutoff make a rank decision
/// fragile; such supports are flagged `ambiguous`.
pub const AMBIGUITY_FACTOR: f64 = 1e3;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LinalgError {
    #[error("matrix is not square ({rows}x{cols})")]
    NotSquare { rows: usize, cols: usize },
    #[error("matrix is not Hermitian (asymmetry {asymmetry:.3e})")]
    NotHermitian { asymmetry: f64 },
    #[error("matrix is not positive semidefinite (eigenvalue {eigenvalue:.3e})")]
    NotPsd { eigenvalue: f64 },
}

pub type Result<T> = std::result::Result<T, LinalgError>;

pub fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

pub fn identity(n: usize) -> CMat {
    CMat::identity(n, n)
}

pub fn zeros(n: usize) -> CMat {
    CMat::zeros(n, n)
}

/// Builds a matrix from real row-major data.
pub fn real_matrix(rows: &[&[f64]]) -> CMat {
    let n = rows.len();
    let m = rows.first().map_or(0, |r| r.len());
    CMat::from_fn(n, m, |i, j| c(rows[i][j], 0.0))
}

pub fn diag_real(values: &[f64]) -> CMat {
    let n = values.len();
    CMat::from_fn(n, n, |i, j| if i == j { c(values[i], 0.0) } else { C64::default() })
}

/// Rank-one projector `v v*` (no normalization).
pub fn outer(v: &CVec) -> CMat {
    v * v.adjoint()
}

pub fn trace(a: &CMat) -> C64 {
    a.trace()
}

/// Real part of the trace; the imaginary part is noise for Hermitian input.
pub fn trace_re(a: &CMat) -> f64 {
    a.trace().re
}

/// `Tr(a b)` without forming the product.
pub fn trace_product(a: &CMat, b: &CMat) -> C64 {
    let n = a.nrows();
    let mut acc = C64::default();
    for i in 0..n {
        for k in 0..a.ncols() {
            acc += a[(i, k)] * b[(k, i)];
        }
    }
    acc
}

pub fn frobenius(a: &CMat) -> f64 {
    a.norm()
}

/// Largest absolute entry.
pub fn max_abs(a: &CMat) -> f64 {
    a.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

pub fn hermitian_part(a: &CMat) -> CMat {
    (a + a.adjoint()) * c(0.5, 0.0)
}

fn ensure_square(a: &CMat) -> Result<()> {
    if a.nrows() != a.ncols() {
        return Err(LinalgError::NotSquare { rows: a.nrows(), cols: a.ncols() });
    }
    Ok(())
}

fn asymmetry(a: &CMat) -> f64 {
    (a - a.adjoint()).norm()
}

pub fn is_hermitian(a: &CMat, tol: f64) -> bool {
    a.is_square() && asymmetry(a) <= tol * a.norm().max(1.0)
}

/// Spectrum of a Hermitian matrix, eigenvalues in ascending order with the
/// matching orthonormal eigenvectors as columns.
#[derive(Debug, Clone)]
pub struct Spectrum {
    pub values: Vec<f64>,
    pub vectors: CMat,
}

impl Spectrum {
    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    pub fn min(&self) -> f64 {
        self.values.first().copied().unwrap_or(0.0)
    }

    /// Rebuilds `V f(Λ) V*`.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> CMat {
        let n = self.values.len();
        let mut scaled = self.vectors.clone();
        for (k, &lambda) in self.values.iter().enumerate() {
            let w = c(f(lambda), 0.0);
            for r in 0..n {
                scaled[(r, k)] *= w;
            }
        }
        scaled * self.vectors.adjoint()
    }
}

/// Eigendecomposition of the Hermitian part of `a`.
pub fn hermitian_eigen(a: &CMat) -> Spectrum {
    let n = a.nrows();
    if n == 0 {
        return Spectrum { values: Vec::new(), vectors: CMat::zeros(0, 0) };
    }
    let eig = hermitian_part(a).symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&x, &y| eig.eigenvalues[x].total_cmp(&eig.eigenvalues[y]));
    let values = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let vectors = CMat::from_fn(n, n, |r, col| eig.eigenvectors[(r, order[col])]);
    Spectrum { values, vectors }
}

/// Eigenvalue cutoff for rank decisions given the spectral scale.
pub fn rank_cutoff(lambda_max: f64, tol: f64) -> f64 {
    if lambda_max < TINY_SPECTRUM {
        ABSOLUTE_CUTOFF
    } else {
        tol * lambda_max
    }
}

/// Operator (spectral) norm.
pub fn op_norm(a: &CMat) -> f64 {
    if a.is_empty() {
        return 0.0;
    }
    if is_hermitian(a, 1e-14) {
        return hermitian_eigen(a).max_abs();
    }
    let gram = a.adjoint() * a;
    hermitian_eigen(&gram).max_abs().sqrt()
}

pub fn is_psd(a: &CMat, tol: f64) -> bool {
    if !is_hermitian(a, tol) {
        return false;
    }
    let spec = hermitian_eigen(a);
    spec.min() >= -tol * spec.max_abs().max(1.0)
}

pub fn is_projection(a: &CMat, tol: f64) -> bool {
    is_hermitian(a, tol) && (a * a - a).norm() <= tol * a.norm().max(1.0)
}

/// `a ≤ b` in the Loewner order.
pub fn loewner_le(a: &CMat, b: &CMat, tol: f64) -> bool {
    let spec = hermitian_eigen(&(b - a));
    spec.min() >= -tol
}

/// Result of a rank decision on a PSD matrix.
#[derive(Debug, Clone)]
pub struct Support {
    pub projection: CMat,
    pub rank: usize,
    pub cutoff: f64,
    /// Some eigenvalue sits within a factor of 1e3 of the cutoff.
    pub ambiguous: bool,
}

/// Support of a Hermitian PSD matrix together with the rank bookkeeping.
pub fn support(a: &CMat, tol: f64) -> Result<Support> {
    ensure_square(a)?;
    let asym = asymmetry(a);
    if asym > tol * a.norm().max(f64::MIN_POSITIVE) && asym > ABSOLUTE_CUTOFF {
        return Err(LinalgError::NotHermitian { asymmetry: asym });
    }
    let spec = hermitian_eigen(a);
    let lambda_max = spec.max_abs();
    let cutoff = rank_cutoff(lambda_max, tol);
    let n = a.nrows();
    let mut projection = CMat::zeros(n, n);
    let mut rank = 0;
    let mut ambiguous = false;
    for (k, &lambda) in spec.values.iter().enumerate() {
        if lambda > cutoff / AMBIGUITY_FACTOR && lambda <= cutoff * AMBIGUITY_FACTOR && lambda_max >= TINY_SPECTRUM {
            ambiguous = true;
        }
        if lambda > cutoff {
            let v = spec.vectors.column(k).into_owned();
            projection += outer(&v);
            rank += 1;
        }
    }
    Ok(Support { projection, rank, cutoff, ambiguous })
}

/// Orthogonal projector onto the span of eigenvectors with eigenvalue above
/// the cutoff.
pub fn support_projection(a: &CMat, tol: f64) -> Result<CMat> {
    support(a, tol).map(|s| s.projection)
}

pub fn rank(a: &CMat, tol: f64) -> Result<usize> {
    support(a, tol).map(|s| s.rank)
}

/// Hermitian PSD square root.
pub fn psd_sqrt(a: &CMat, tol: f64) -> Result<CMat> {
    ensure_square(a)?;
    let asym = asymmetry(a);
    if asym > tol * a.norm().max(1.0) {
        return Err(LinalgError::NotHermitian { asymmetry: asym });
    }
    let spec = hermitian_eigen(a);
    let floor = -tol * spec.max_abs();
    if let Some(&bad) = spec.values.iter().find(|&&l| l < floor) {
        return Err(LinalgError::NotPsd { eigenvalue: bad });
    }
    Ok(spec.map(|l| l.max(0.0).sqrt()))
}

/// Full rank under the support cutoff.
pub fn is_faithful(rho: &CMat, tol: f64) -> bool {
    matches!(support(rho, tol), Ok(s) if s.rank == rho.nrows())
}

/// Projector onto the column span of `columns` (decided through `V V*`).
pub fn span_projection(columns: &CMat, tol: f64) -> Support {
    let gram = columns * columns.adjoint();
    support(&gram, tol).expect("gram matrix is Hermitian by construction")
}

#[cfg(test)]
mod tests {
    use super::*;

    const TOL: f64 = 1e-12;

    fn close(a: &CMat, b: &CMat) -> bool {
        (a - b).norm() < 1e-12
    }

    #[test]
    fn support_of_diagonal_projection_is_itself() {
        let a = diag_real(&[1.0, 0.0]);
        assert!(close(&support_projection(&a, DEFAULT_TOL).unwrap(), &a));
    }

    #[test]
    fn support_of_zero_is_zero() {
        let a = zeros(3);
        let s = support(&a, DEFAULT_TOL).unwrap();
        assert_eq!(s.rank, 0);
        assert!(close(&s.projection, &zeros(3)));
    }

    #[test]
    fn support_of_rank_one_projector() {
        let a = real_matrix(&[&[0.5, 0.5], &[0.5, 0.5]]);
        let p = support_projection(&a, DEFAULT_TOL).unwrap();
        assert!(close(&p, &a));
    }

    #[test]
    fn support_rejects_non_hermitian() {
        let a = real_matrix(&[&[1.0, 1.0], &[0.0, 1.0]]);
        assert!(matches!(support(&a, DEFAULT_TOL), Err(LinalgError::NotHermitian { .. })));
    }

    #[test]
    fn support_is_scale_free() {
        let a = diag_real(&[1e-8, 0.0, 3e-9]);
        assert_eq!(rank(&a, DEFAULT_TOL).unwrap(), 2);
    }

    #[test]
    fn psd_sqrt_examples() {
        assert!(close(&psd_sqrt(&identity(3), TOL).unwrap(), &identity(3)));
        assert!(close(&psd_sqrt(&diag_real(&[4.0, 0.0]), TOL).unwrap(), &diag_real(&[2.0, 0.0])));
        let p = real_matrix(&[&[0.5, 0.5], &[0.5, 0.5]]);
        assert!(close(&psd_sqrt(&p, TOL).unwrap(), &p));
    }

    #[test]
    fn psd_sqrt_rejects_negative_spectrum() {
        let a = diag_real(&[1.0, -0.5]);
        assert!(matches!(psd_sqrt(&a, TOL), Err(LinalgError::NotPsd { .. })));
    }

    #[test]
    fn faithfulness() {
        assert!(is_faithful(&diag_real(&[0.5, 0.5]), DEFAULT_TOL));
        assert!(!is_faithful(&diag_real(&[1.0, 0.0]), DEFAULT_TOL));
        // determinant 2/9 - 1/9 > 0
        let a = real_matrix(&[&[2.0 / 3.0, 1.0 / 3.0], &[1.0 / 3.0, 1.0 / 3.0]]);
        assert!(is_faithful(&a, DEFAULT_TOL));
    }

    #[test]
    fn complex_hermitian_spectrum() {
        // [[2, i], [-i, 2]] has eigenvalues 1 and 3
        let a = CMat::from_row_slice(2, 2, &[c(2.0, 0.0), c(0.0, 1.0), c(0.0, -1.0), c(2.0, 0.0)]);
        let spec = hermitian_eigen(&a);
        assert!((spec.values[0] - 1.0).abs() < 1e-12);
        assert!((spec.values[1] - 3.0).abs() < 1e-12);
        assert!(close(&spec.map(|l| l), &a));
        assert!((op_norm(&a) - 3.0).abs() < 1e-12);
    }

    #[test]
    fn op_norm_of_non_hermitian() {
        // singular values of [[0, 2], [0, 0]] are {2, 0}
        let a = real_matrix(&[&[0.0, 2.0], &[0.0, 0.0]]);
        assert!((op_norm(&a) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn projection_predicates() {
        assert!(is_projection(&diag_real(&[1.0, 0.0]), TOL));
        assert!(!is_projection(&diag_real(&[0.5, 0.0]), TOL));
        assert!(is_psd(&diag_real(&[0.5, 0.0]), TOL));
        assert!(!is_psd(&diag_real(&[0.5, -0.1]), TOL));
    }

    #[test]
    fn span_of_columns() {
        let v = real_matrix(&[&[1.0, 2.0], &[0.0, 0.0], &[1.0, 2.0]]);
        let s = span_projection(&v, DEFAULT_TOL);
        assert_eq!(s.rank, 1);
        let expected = real_matrix(&[&[0.5, 0.0, 0.5], &[0.0, 0.0, 0.0], &[0.5, 0.0, 0.5]]);
        assert!(close(&s.projection, &expected));
    }
}
