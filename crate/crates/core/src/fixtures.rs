//! Reference walks used throughout the tests, examples and shipped fixture
//! documents.

use nalgebra::DMatrix;

use crate::linalg::{self, c, real_matrix, CMat};
use crate::model::{OqrwModel, SiteId};

const R: f64 = std::f64::consts::FRAC_1_SQRT_2;

/// `B = [[0,0],[r,r]]`, `C = [[0,0],[-r,r]]` with `r = 1/√2`; both ranges are
/// `span{e₂}`.
pub fn rank_one_pair() -> (CMat, CMat) {
    (real_matrix(&[&[0.0, 0.0], &[R, R]]), real_matrix(&[&[0.0, 0.0], &[-R, R]]))
}

/// `B = [[r,0],[-r,0]]`, `C = [[0,r],[0,-r]]`; both ranges are `span{(1,-1)}`.
pub fn antidiagonal_pair() -> (CMat, CMat) {
    (real_matrix(&[&[R, 0.0], &[-R, 0.0]]), real_matrix(&[&[0.0, R], &[0.0, -R]]))
}

/// Three-level jump operators: `L₁` to the left, `L₂` stay, `L₃` to the right.
pub fn three_level_ops() -> [CMat; 3] {
    [
        real_matrix(&[&[0.0, 0.0, 0.0], &[0.0, R, R], &[0.0, 0.0, 0.0]]),
        real_matrix(&[&[0.0, 0.0, 0.0], &[0.0, R, -R], &[0.0, 0.0, 0.0]]),
        real_matrix(&[&[0.0, 0.0, 0.0], &[0.0, 0.0, 0.0], &[1.0, 0.0, 0.0]]),
    ]
}

/// Columns of a real rotation by `theta`: `B = [u 0]`, `C = [0 v]`.
pub fn unitary_column_pair(theta: f64) -> (CMat, CMat) {
    let (s, co) = theta.sin_cos();
    (real_matrix(&[&[co, 0.0], &[s, 0.0]]), real_matrix(&[&[0.0, -s], &[0.0, co]]))
}

/// Walk on ℤ with `B^{i-1}_i = b`, `B^{i+1}_i = c`, truncated to `[-window, window]`.
pub fn nearest_neighbor_walk(b: CMat, c: CMat, window: i64) -> OqrwModel {
    let hdim = b.nrows();
    OqrwModel::lattice1d(hdim, [(-1, b), (1, c)], window).expect("well-formed lattice rule")
}

pub fn rank_one_walk(window: i64) -> OqrwModel {
    let (b, c) = rank_one_pair();
    nearest_neighbor_walk(b, c, window)
}

pub fn antidiagonal_walk(window: i64) -> OqrwModel {
    let (b, c) = antidiagonal_pair();
    nearest_neighbor_walk(b, c, window)
}

pub fn three_level_walk(window: i64) -> OqrwModel {
    let [l1, l2, l3] = three_level_ops();
    OqrwModel::lattice1d(3, [(-1, l1), (0, l2), (1, l3)], window).expect("well-formed lattice rule")
}

/// The nearest-neighbour walk closed up into a ring of `sites ≥ 3` vertices.
pub fn ring_walk(b: &CMat, c: &CMat, sites: usize) -> OqrwModel {
    assert!(sites >= 3, "a ring needs at least three sites");
    let n = sites as i64;
    let ops = (0..n).flat_map(|j| {
        [(SiteId(j), SiteId((j - 1).rem_euclid(n)), b.clone()), (SiteId(j), SiteId((j + 1) % n), c.clone())]
    });
    OqrwModel::explicit(b.nrows(), (0..n).map(SiteId), ops).expect("well-formed ring")
}

pub fn unitary_column_ring(sites: usize, theta: f64) -> OqrwModel {
    let (b, c) = unitary_column_pair(theta);
    ring_walk(&b, &c, sites)
}

/// `P = [[0,1],[1,0]]`.
pub fn two_cycle() -> DMatrix<f64> {
    DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0])
}

/// Closed classes `{0}` and `{1, 2}`.
pub fn two_closed_classes() -> DMatrix<f64> {
    DMatrix::from_row_slice(3, 3, &[1.0, 0.0, 0.0, 0.0, 0.3, 0.7, 0.0, 0.6, 0.4])
}

/// Transient class `{0, 1}` draining into the closed class `{2, 3}`.
pub fn transient_into_closed() -> DMatrix<f64> {
    DMatrix::from_row_slice(
        4,
        4,
        &[
            0.2, 0.5, 0.3, 0.0, //
            0.4, 0.4, 0.0, 0.2, //
            0.0, 0.0, 0.5, 0.5, //
            0.0, 0.0, 0.9, 0.1,
        ],
    )
}

/// An aperiodic irreducible three-state chain.
pub fn irreducible_three() -> DMatrix<f64> {
    DMatrix::from_row_slice(3, 3, &[0.5, 0.5, 0.0, 0.0, 0.5, 0.5, 0.5, 0.0, 0.5])
}

/// `I / hdim` on a single site.
pub fn maximally_mixed(hdim: usize) -> CMat {
    linalg::identity(hdim) * c(1.0 / hdim as f64, 0.0)
}
