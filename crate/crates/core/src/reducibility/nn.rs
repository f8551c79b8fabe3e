//! Sufficient condition for nearest-neighbour walks on ℤ.
//!
//! A nonzero PSD `x` with `B* x B = 0` and `C* x C = 0` exists exactly when
//! `range(B) + range(C) ≠ H`: for PSD `x`, `B* x B = 0` iff `x^{1/2} B = 0`
//! iff `range(B) ⊆ ker x`. The condition is therefore a rank test on
//! `[B C]`, exact in every dimension.

use nalgebra::DMatrix;

use super::{ReducibilityError, Result};
use crate::linalg::{self, CMat};

#[derive(Debug, Clone)]
pub struct NnCondition {
    /// Only `x = 0` is annihilated by both maps.
    pub holds: bool,
    /// `dim(range(B) + range(C))`.
    pub combined_rank: usize,
    /// Projection onto `(range(B) + range(C))^⊥`: a nonzero PSD `x` with
    /// `B* x B = C* x C = 0` whenever the condition fails.
    pub witness: Option<CMat>,
    /// Real dimension of the Hermitian joint kernel of `x ↦ (B* x B, C* x C)`.
    pub joint_kernel_dim: usize,
}

/// Dimension of the real kernel of `x ↦ (B* x B, C* x C)` on Hermitian `x`.
fn joint_kernel_dim(b: &CMat, c: &CMat) -> usize {
    let h = b.nrows();
    let basis = crate::qmc::hermitian_basis(h);
    let rows = 4 * h * h;
    let mut a = DMatrix::<f64>::zeros(rows, basis.len());
    for (k, x) in basis.iter().enumerate() {
        let images = [b.adjoint() * x * b, c.adjoint() * x * c];
        let mut r = 0;
        for img in &images {
            for z in img.iter() {
                a[(r, k)] = z.re;
                a[(r + 1, k)] = z.im;
                r += 2;
            }
        }
    }
    let svd = a.svd(false, false);
    let smax = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    let cutoff = 1e-10 * smax.max(1.0);
    basis.len() - svd.singular_values.iter().filter(|&&s| s > cutoff).count()
}

pub fn nn_condition_check(b: &CMat, c: &CMat, tol: f64) -> Result<NnCondition> {
    let h = b.nrows();
    let defect = linalg::op_norm(&(b.adjoint() * b + c.adjoint() * c - linalg::identity(h)));
    if defect > tol.max(1e-12) {
        return Err(ReducibilityError::NotNormalized { defect });
    }
    let mut cols = CMat::zeros(h, 2 * h);
    cols.columns_mut(0, h).copy_from(b);
    cols.columns_mut(h, h).copy_from(c);
    let span = linalg::span_projection(&cols, tol);
    let holds = span.rank == h;
    let witness = (!holds).then(|| linalg::identity(h) - &span.projection);
    Ok(NnCondition { holds, combined_rank: span.rank, witness, joint_kernel_dim: joint_kernel_dim(b, c) })
}
