//! Vectorized one-step map on finite models and invariant states `ω = M(ω)`.

use std::collections::BTreeMap;

use crate::evolution::{self, BlockState, EvolutionError, Result};
use crate::linalg::{self, c, CMat, CVec, C64};
use crate::model::{OqrwModel, SiteId};

/// Singular values of `S − I` below `NULL_TOL · max(1, σ_max)` span the fixed space.
const NULL_TOL: f64 = 1e-8;
const NULL_GRAY: f64 = 1e2;

/// Superoperator dimension up to which the dense fixed-space solve is used.
pub const DENSE_LIMIT: usize = 2048;

/// Dense matrix of the walk acting on vectorized block-diagonal states.
///
/// Index layout: `site_index · h² + a · h + b` for entry `(a, b)` of the block.
#[derive(Debug, Clone)]
pub struct Superoperator {
    sites: Vec<SiteId>,
    hdim: usize,
    matrix: CMat,
}

/// Orthonormal basis of `ker(S − I)`.
#[derive(Debug, Clone)]
pub struct FixedSpace {
    pub basis: CMat,
    pub dim: usize,
    /// A singular value fell in the gray zone around the null cutoff.
    pub ambiguous: bool,
    /// Smallest singular value above the cutoff, if any.
    pub gap: Option<f64>,
}

impl Superoperator {
    pub fn new(m: &OqrwModel) -> Result<Self> {
        if !m.is_finite() {
            return Err(EvolutionError::Unsupported("superoperator needs a finite site set"));
        }
        let h = m.hdim();
        let sites = m.sites().to_vec();
        let h2 = h * h;
        let d = sites.len() * h2;
        let mut matrix = CMat::zeros(d, d);
        for (from, to, b) in m.operators() {
            let j = m.site_index(from).expect("operator sites belong to the model");
            let i = m.site_index(to).expect("operator sites belong to the model");
            for a in 0..h {
                for bb in 0..h {
                    let row = i * h2 + a * h + bb;
                    for cc in 0..h {
                        let left = b[(a, cc)];
                        if left == C64::default() {
                            continue;
                        }
                        for dd in 0..h {
                            let col = j * h2 + cc * h + dd;
                            matrix[(row, col)] += left * b[(bb, dd)].conj();
                        }
                    }
                }
            }
        }
        Ok(Superoperator { sites, hdim: h, matrix })
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &CMat {
        &self.matrix
    }

    pub fn vectorize(&self, blocks: &BTreeMap<SiteId, CMat>) -> CVec {
        let h = self.hdim;
        let mut v = CVec::zeros(self.dim());
        for (k, site) in self.sites.iter().enumerate() {
            if let Some(b) = blocks.get(site) {
                for a in 0..h {
                    for bb in 0..h {
                        v[k * h * h + a * h + bb] = b[(a, bb)];
                    }
                }
            }
        }
        v
    }

    pub fn devectorize(&self, v: &CVec) -> BTreeMap<SiteId, CMat> {
        let h = self.hdim;
        self.sites
            .iter()
            .enumerate()
            .map(|(k, site)| (*site, CMat::from_fn(h, h, |a, b| v[k * h * h + a * h + b])))
            .collect()
    }

    /// Block-wise trace of a vectorized operator.
    pub fn trace_of(&self, v: &CVec) -> C64 {
        let h = self.hdim;
        let mut t = C64::default();
        for k in 0..self.sites.len() {
            for a in 0..h {
                t += v[k * h * h + a * h + a];
            }
        }
        t
    }

    pub fn fixed_space(&self) -> FixedSpace {
        let d = self.dim();
        let shifted = &self.matrix - CMat::identity(d, d);
        let svd = shifted.svd(false, true);
        let v_t = svd.v_t.expect("requested right singular vectors");
        let sigma_max = svd.singular_values.iter().cloned().fold(0.0, f64::max);
        let cutoff = NULL_TOL * sigma_max.max(1.0);
        let mut cols = Vec::new();
        let mut ambiguous = false;
        let mut gap: Option<f64> = None;
        for (k, &s) in svd.singular_values.iter().enumerate() {
            if s > cutoff / NULL_GRAY && s <= cutoff * NULL_GRAY {
                ambiguous = true;
            }
            if s <= cutoff {
                cols.push(v_t.row(k).adjoint());
            } else {
                gap = Some(gap.map_or(s, |g: f64| g.min(s)));
            }
        }
        let dim = cols.len();
        let basis = if dim == 0 { CMat::zeros(d, 0) } else { CMat::from_columns(&cols) };
        FixedSpace { basis, dim, ambiguous, gap }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FixedPointMethod {
    PowerIteration,
    /// Power iterate projected onto the dense fixed space.
    PolishedPowerIteration,
    DenseNullSpace,
}

#[derive(Debug, Clone)]
pub struct InvariantState {
    pub state: BlockState,
    /// `‖M(ω) − ω‖` (Frobenius over blocks).
    pub residual: f64,
    pub iterations: usize,
    pub method: FixedPointMethod,
    /// Dimension of the fixed space when the dense solve ran; above one the
    /// invariant state is not unique and `state` is just one of them.
    pub fixed_space_dim: Option<usize>,
}

#[derive(Debug, Clone)]
pub enum InvariantSearch {
    Found(InvariantState),
    NotFound { residual: f64, iterations: usize },
}

impl InvariantSearch {
    pub fn found(self) -> Option<InvariantState> {
        match self {
            InvariantSearch::Found(s) => Some(s),
            InvariantSearch::NotFound { .. } => None,
        }
    }
}

fn residual(m: &OqrwModel, omega: &BlockState) -> f64 {
    let next = BlockState::from_blocks_unchecked(evolution::apply_raw(m, omega));
    next.distance(omega)
}

fn normalized(blocks: BTreeMap<SiteId, CMat>) -> Option<BlockState> {
    let blocks = evolution::prune(blocks);
    let raw = BlockState::from_blocks_unchecked(blocks);
    let t = raw.total_trace();
    if !(t.is_finite() && t > 0.0) {
        return None;
    }
    Some(raw.scaled(1.0 / t))
}

fn is_state(omega: &BlockState, tol: f64) -> bool {
    omega.blocks().values().all(|b| linalg::is_psd(b, tol.max(1e-9)))
}

/// Lazy power iteration `ω ← (ω + M(ω)) / 2` from the maximally mixed state,
/// polished (or replaced, when it stalls) by a dense solve of `ker(S − I)`.
pub fn invariant_state(m: &OqrwModel, tol: f64, max_iter: usize) -> Result<InvariantSearch> {
    if !m.is_finite() {
        return Err(EvolutionError::Unsupported("invariant states need a finite site set"));
    }
    let h = m.hdim();
    let weight = 1.0 / (h * m.num_sites()) as f64;
    let mut omega = BlockState::from_blocks_unchecked(
        m.sites().iter().map(|s| (*s, linalg::identity(h) * c(weight, 0.0))).collect(),
    );
    let mut iterations = 0;
    let mut res = f64::INFINITY;
    let mut converged = false;
    while iterations < max_iter {
        let next = evolution::apply_raw(m, &omega);
        res = BlockState::from_blocks_unchecked(next.clone()).distance(&omega);
        if res <= tol * 0.1 {
            converged = true;
            break;
        }
        let mut mixed = omega.clone().into_blocks();
        for (site, block) in next {
            let e = mixed.entry(site).or_insert_with(|| linalg::zeros(h));
            *e += block;
        }
        omega = normalized(mixed.into_iter().map(|(s, b)| (s, b * c(0.5, 0.0))).collect())
            .expect("trace is preserved by the lazy map");
        iterations += 1;
    }

    let sup = Superoperator::new(m)?;
    if sup.dim() <= DENSE_LIMIT {
        let fixed = sup.fixed_space();
        let candidate = if converged || fixed.dim > 1 {
            // orthogonal projection of the power iterate onto the fixed space
            let v = sup.vectorize(omega.blocks());
            let proj = &fixed.basis * (fixed.basis.adjoint() * v);
            Some((proj, if converged { FixedPointMethod::PolishedPowerIteration } else { FixedPointMethod::DenseNullSpace }))
        } else if fixed.dim == 1 {
            let v = fixed.basis.column(0).into_owned();
            let t = sup.trace_of(&v);
            (t.norm() > 1e-12).then(|| (v / t, FixedPointMethod::DenseNullSpace))
        } else {
            None
        };
        if let Some((v, method)) = candidate {
            let blocks = sup.devectorize(&v).into_iter().map(|(s, b)| (s, linalg::hermitian_part(&b))).collect();
            if let Some(polished) = normalized(blocks) {
                let r = residual(m, &polished);
                if r <= tol && is_state(&polished, tol) {
                    return Ok(InvariantSearch::Found(InvariantState {
                        state: polished,
                        residual: r,
                        iterations,
                        method,
                        fixed_space_dim: Some(fixed.dim),
                    }));
                }
            }
        }
    }
    if converged {
        let r = residual(m, &omega);
        return Ok(InvariantSearch::Found(InvariantState {
            state: omega,
            residual: r,
            iterations,
            method: FixedPointMethod::PowerIteration,
            fixed_space_dim: None,
        }));
    }
    Ok(InvariantSearch::NotFound { residual: res, iterations })
}
