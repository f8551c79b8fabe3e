//! Block-diagonal states and the one-step map
//! `ρ ↦ Σ_i (Σ_j B^i_j ρ_j B^i_j*) ⊗ |i⟩⟨i|`.

use std::collections::{BTreeMap, BTreeSet};

use nalgebra::DMatrix;
use thiserror::Error;

use crate::linalg::{self, CMat};
use crate::model::{ModelError, OqrwModel, SiteId};

/// Blocks whose trace falls below this after a step are dropped; the
/// remaining keys are the support `Λ(ρ)`.
pub const PRUNE_TRACE: f64 = 1e-14;

/// Allowed drift of the total trace across one step.
pub const TRACE_TOL: f64 = 1e-10;

const STOCHASTIC_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvolutionError {
    #[error("state has no nonzero block")]
    EmptyState,
    #[error("block traces sum to {total}, expected 1")]
    NotNormalized { total: f64 },
    #[error("block at site {site} is not Hermitian positive semidefinite")]
    NotPsd { site: SiteId },
    #[error("block at site {site} is {rows}x{cols}, expected {hdim}x{hdim}")]
    DimensionMismatch { site: SiteId, rows: usize, cols: usize, hdim: usize },
    #[error("site {0} is not part of the model")]
    UnknownSite(SiteId),
    #[error("support reaches window boundary site {site}; widen the lattice window")]
    BoundaryViolation { site: SiteId },
    #[error("trace drifted to {trace} at step {step}")]
    TraceDrift { step: usize, trace: f64 },
    #[error("{0}")]
    Unsupported(&'static str),
    #[error(transparent)]
    Model(#[from] ModelError),
}

pub type Result<T> = std::result::Result<T, EvolutionError>;

/// `Σ_i ρ_i ⊗ |i⟩⟨i|` stored sparsely by site.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockState {
    blocks: BTreeMap<SiteId, CMat>,
}

impl BlockState {
    /// Validated constructor: every block Hermitian PSD at `tol`, traces
    /// summing to one within `tol`. Blocks with trace below [`PRUNE_TRACE`]
    /// are dropped.
    pub fn new(blocks: impl IntoIterator<Item = (SiteId, CMat)>, tol: f64) -> Result<Self> {
        let mut map = BTreeMap::new();
        let mut hdim = None;
        for (site, block) in blocks {
            let expected = *hdim.get_or_insert(block.nrows());
            if block.nrows() != expected || block.ncols() != expected {
                return Err(EvolutionError::DimensionMismatch {
                    site,
                    rows: block.nrows(),
                    cols: block.ncols(),
                    hdim: expected,
                });
            }
            if !linalg::is_psd(&block, tol) {
                return Err(EvolutionError::NotPsd { site });
            }
            if linalg::trace_re(&block) >= PRUNE_TRACE {
                map.insert(site, linalg::hermitian_part(&block));
            }
        }
        if map.is_empty() {
            return Err(EvolutionError::EmptyState);
        }
        let state = BlockState { blocks: map };
        let total = state.total_trace();
        if (total - 1.0).abs() > tol.max(TRACE_TOL) {
            return Err(EvolutionError::NotNormalized { total });
        }
        Ok(state)
    }

    /// Density matrix `rho` parked at a single site.
    pub fn localized(site: SiteId, rho: CMat) -> Result<Self> {
        Self::new([(site, rho)], linalg::DEFAULT_TOL)
    }

    /// No validation; used for intermediate results and deliberately
    /// corrupted test trajectories.
    pub fn from_blocks_unchecked(blocks: BTreeMap<SiteId, CMat>) -> Self {
        BlockState { blocks }
    }

    pub fn blocks(&self) -> &BTreeMap<SiteId, CMat> {
        &self.blocks
    }

    pub fn block(&self, site: SiteId) -> Option<&CMat> {
        self.blocks.get(&site)
    }

    pub fn support(&self) -> BTreeSet<SiteId> {
        self.blocks.keys().copied().collect()
    }

    pub fn hdim(&self) -> usize {
        self.blocks.values().next().map_or(0, |b| b.nrows())
    }

    pub fn total_trace(&self) -> f64 {
        self.blocks.values().map(linalg::trace_re).sum()
    }

    /// Frobenius norm of the block-diagonal difference.
    pub fn distance(&self, other: &BlockState) -> f64 {
        let sites: BTreeSet<SiteId> = self.blocks.keys().chain(other.blocks.keys()).copied().collect();
        sites
            .into_iter()
            .map(|s| match (self.blocks.get(&s), other.blocks.get(&s)) {
                (Some(a), Some(b)) => (a - b).norm_squared(),
                (Some(a), None) | (None, Some(a)) => a.norm_squared(),
                (None, None) => 0.0,
            })
            .sum::<f64>()
            .sqrt()
    }

    /// Largest entrywise deviation between two states.
    pub fn max_entry_distance(&self, other: &BlockState) -> f64 {
        let sites: BTreeSet<SiteId> = self.blocks.keys().chain(other.blocks.keys()).copied().collect();
        sites
            .into_iter()
            .map(|s| match (self.blocks.get(&s), other.blocks.get(&s)) {
                (Some(a), Some(b)) => linalg::max_abs(&(a - b)),
                (Some(a), None) | (None, Some(a)) => linalg::max_abs(a),
                (None, None) => 0.0,
            })
            .fold(0.0, f64::max)
    }

    pub(crate) fn scaled(&self, factor: f64) -> BlockState {
        let w = linalg::c(factor, 0.0);
        BlockState { blocks: self.blocks.iter().map(|(s, b)| (*s, b * w)).collect() }
    }

    pub(crate) fn into_blocks(self) -> BTreeMap<SiteId, CMat> {
        self.blocks
    }
}

fn check_state(m: &OqrwModel, s: &BlockState) -> Result<()> {
    for (&site, block) in s.blocks() {
        if !m.contains(site) {
            return Err(EvolutionError::UnknownSite(site));
        }
        if block.nrows() != m.hdim() || block.ncols() != m.hdim() {
            return Err(EvolutionError::DimensionMismatch {
                site,
                rows: block.nrows(),
                cols: block.ncols(),
                hdim: m.hdim(),
            });
        }
        if m.boundary_sites().contains(&site) {
            return Err(EvolutionError::BoundaryViolation { site });
        }
    }
    Ok(())
}

/// Applies the walk without the pruning of tiny blocks.
pub(crate) fn apply_raw(m: &OqrwModel, s: &BlockState) -> BTreeMap<SiteId, CMat> {
    let mut out: BTreeMap<SiteId, CMat> = BTreeMap::new();
    for (&j, rho) in s.blocks() {
        for (i, b) in m.outgoing(j) {
            let term = b * rho * b.adjoint();
            match out.get_mut(i) {
                Some(acc) => *acc += term,
                None => {
                    out.insert(*i, term);
                }
            }
        }
    }
    out
}

pub(crate) fn prune(blocks: BTreeMap<SiteId, CMat>) -> BTreeMap<SiteId, CMat> {
    blocks
        .into_iter()
        .filter(|(_, b)| linalg::trace_re(b) >= PRUNE_TRACE)
        .map(|(s, b)| (s, linalg::hermitian_part(&b)))
        .collect()
}

/// One step of the walk.
pub fn step(m: &OqrwModel, s: &BlockState) -> Result<BlockState> {
    check_state(m, s)?;
    Ok(BlockState { blocks: prune(apply_raw(m, s)) })
}

/// The states `ρ⁽⁰⁾ … ρ⁽ᴺ⁾` of a run together with their supports.
#[derive(Debug, Clone)]
pub struct Trajectory {
    model: OqrwModel,
    states: Vec<BlockState>,
    supports: Vec<BTreeSet<SiteId>>,
}

impl Trajectory {
    /// Wraps precomputed states without checking they follow the dynamics.
    pub fn from_states(model: OqrwModel, states: Vec<BlockState>) -> Self {
        let supports = states.iter().map(BlockState::support).collect();
        Trajectory { model, states, supports }
    }

    pub fn model(&self) -> &OqrwModel {
        &self.model
    }

    pub fn states(&self) -> &[BlockState] {
        &self.states
    }

    pub fn state(&self, n: usize) -> Option<&BlockState> {
        self.states.get(n)
    }

    pub fn supports(&self) -> &[BTreeSet<SiteId>] {
        &self.supports
    }

    pub fn support(&self, n: usize) -> Option<&BTreeSet<SiteId>> {
        self.supports.get(n)
    }

    /// Index of the last state, `N`.
    pub fn steps(&self) -> usize {
        self.states.len() - 1
    }

    pub fn initial(&self) -> &BlockState {
        &self.states[0]
    }

    pub fn last(&self) -> &BlockState {
        self.states.last().expect("trajectory holds at least one state")
    }

    /// Runs `more` further steps.
    pub fn extend(&mut self, more: usize) -> Result<()> {
        for _ in 0..more {
            let prev = self.last();
            let next = step(&self.model, prev)?;
            let (before, after) = (prev.total_trace(), next.total_trace());
            if (after - before).abs() > TRACE_TOL {
                return Err(EvolutionError::TraceDrift { step: self.states.len(), trace: after });
            }
            self.supports.push(next.support());
            self.states.push(next);
        }
        Ok(())
    }
}

/// `ρ⁽ⁿ⁾ = Mⁿ(ρ⁽⁰⁾)` for `n = 0..=n_steps`.
pub fn trajectory(m: &OqrwModel, rho0: &BlockState, n_steps: usize) -> Result<Trajectory> {
    check_state(m, rho0)?;
    let mut traj = Trajectory::from_states(m.clone(), vec![rho0.clone()]);
    traj.extend(n_steps)?;
    Ok(traj)
}

/// Position measurement: `i ↦ Tr(ρ_i)`.
pub fn site_distribution(s: &BlockState) -> BTreeMap<SiteId, f64> {
    s.blocks().iter().map(|(site, b)| (*site, linalg::trace_re(b))).collect()
}

/// Walk with one-dimensional internal space whose jump amplitudes are
/// `B^i_j = √P(j, i)`.
pub fn classical_embed(p: &DMatrix<f64>) -> Result<OqrwModel> {
    check_stochastic(p)?;
    let clipped = p.map(|x| x.max(0.0));
    Ok(OqrwModel::from_stochastic(clipped)?)
}

pub(crate) fn check_stochastic(p: &DMatrix<f64>) -> std::result::Result<(), ModelError> {
    if p.nrows() != p.ncols() || p.nrows() == 0 {
        return Err(ModelError::NotStochastic(format!("matrix is {}x{}", p.nrows(), p.ncols())));
    }
    for (r, row) in p.row_iter().enumerate() {
        if let Some(x) = row.iter().find(|x| **x < -STOCHASTIC_TOL || !x.is_finite()) {
            return Err(ModelError::NotStochastic(format!("row {r} has entry {x}")));
        }
        let sum: f64 = row.iter().sum();
        if (sum - 1.0).abs() > STOCHASTIC_TOL {
            return Err(ModelError::NotStochastic(format!("row {r} sums to {sum}")));
        }
    }
    Ok(())
}

/// Probability vector as a state of a classical embedding.
pub fn classical_state(probs: &[f64]) -> Result<BlockState> {
    BlockState::new(
        probs.iter().enumerate().map(|(i, &p)| (SiteId(i as i64), CMat::from_element(1, 1, linalg::c(p, 0.0)))),
        linalg::DEFAULT_TOL,
    )
}

/// Reads a classical state back as a dense probability vector over `n` sites.
pub fn probability_vector(s: &BlockState, n: usize) -> Vec<f64> {
    let mut v = vec![0.0; n];
    for (site, p) in site_distribution(s) {
        if (0..n as i64).contains(&site.0) {
            v[site.0 as usize] = p;
        }
    }
    v
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::linalg::{diag_real, real_matrix};

    fn e1_state() -> BlockState {
        BlockState::localized(SiteId(0), diag_real(&[1.0, 0.0])).unwrap()
    }

    #[test]
    fn first_step_of_rank_one_walk() {
        let m = fixtures::rank_one_walk(4);
        let next = step(&m, &e1_state()).unwrap();
        let expected = diag_real(&[0.0, 0.5]);
        assert_eq!(next.support(), [SiteId(-1), SiteId(1)].into_iter().collect());
        assert!((next.block(SiteId(-1)).unwrap() - &expected).norm() < 1e-15);
        assert!((next.block(SiteId(1)).unwrap() - &expected).norm() < 1e-15);
        let dist = site_distribution(&next);
        assert!((dist[&SiteId(-1)] - 0.5).abs() < 1e-15);
        assert!((dist[&SiteId(1)] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn identity_channel_is_stationary() {
        let m = OqrwModel::explicit(2, [SiteId(0)], [(SiteId(0), SiteId(0), linalg::identity(2))]).unwrap();
        let rho = BlockState::localized(SiteId(0), real_matrix(&[&[0.7, 0.1], &[0.1, 0.3]])).unwrap();
        assert!(step(&m, &rho).unwrap().distance(&rho) < 1e-15);
    }

    #[test]
    fn permutation_chain_swaps_mass() {
        let m = classical_embed(&fixtures::two_cycle()).unwrap();
        let next = step(&m, &classical_state(&[1.0, 0.0]).unwrap()).unwrap();
        assert_eq!(probability_vector(&next, 2), vec![0.0, 1.0]);
    }

    #[test]
    fn zero_steps_returns_initial_state() {
        let m = fixtures::rank_one_walk(3);
        let traj = trajectory(&m, &e1_state(), 0).unwrap();
        assert_eq!(traj.steps(), 0);
        assert_eq!(traj.initial(), &e1_state());
    }

    #[test]
    fn two_steps_spread_by_parity() {
        let m = fixtures::rank_one_walk(4);
        let traj = trajectory(&m, &e1_state(), 2).unwrap();
        let expected: BTreeSet<SiteId> = [SiteId(-2), SiteId(0), SiteId(2)].into_iter().collect();
        assert_eq!(traj.support(2).unwrap(), &expected);
    }

    #[test]
    fn boundary_is_enforced() {
        let m = fixtures::rank_one_walk(2);
        let err = trajectory(&m, &e1_state(), 3).unwrap_err();
        assert!(matches!(err, EvolutionError::BoundaryViolation { .. }));
    }

    #[test]
    fn empty_and_unnormalized_states_are_rejected() {
        assert_eq!(BlockState::new([], 1e-10).unwrap_err(), EvolutionError::EmptyState);
        assert_eq!(
            BlockState::new([(SiteId(0), linalg::zeros(2))], 1e-10).unwrap_err(),
            EvolutionError::EmptyState
        );
        assert!(matches!(
            BlockState::new([(SiteId(0), diag_real(&[0.5, 0.0]))], 1e-10),
            Err(EvolutionError::NotNormalized { .. })
        ));
        assert!(matches!(
            BlockState::new([(SiteId(0), diag_real(&[1.5, -0.5]))], 1e-10),
            Err(EvolutionError::NotPsd { .. })
        ));
    }

    #[test]
    fn embedding_rejects_non_stochastic() {
        let p = DMatrix::from_row_slice(2, 2, &[0.5, 0.4, 0.0, 1.0]);
        assert!(matches!(classical_embed(&p), Err(EvolutionError::Model(ModelError::NotStochastic(_)))));
    }

    #[test]
    fn identity_chain_embedding() {
        let m = classical_embed(&DMatrix::identity(3, 3)).unwrap();
        for j in 0..3 {
            let outs = m.outgoing(SiteId(j));
            assert_eq!(outs.len(), 1);
            assert_eq!(outs[0].0, SiteId(j));
            assert!((outs[0].1[(0, 0)].re - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn two_cycle_embedding_has_unit_swaps() {
        let m = classical_embed(&fixtures::two_cycle()).unwrap();
        assert!((m.operator(SiteId(0), SiteId(1)).unwrap()[(0, 0)].re - 1.0).abs() < 1e-15);
        assert!((m.operator(SiteId(1), SiteId(0)).unwrap()[(0, 0)].re - 1.0).abs() < 1e-15);
        assert!(m.operator(SiteId(0), SiteId(0)).is_none());
    }

    #[test]
    fn closed_singleton_class_traps_mass() {
        let m = classical_embed(&fixtures::two_closed_classes()).unwrap();
        let traj = trajectory(&m, &classical_state(&[1.0, 0.0, 0.0]).unwrap(), 20).unwrap();
        for s in traj.supports() {
            assert_eq!(s, &[SiteId(0)].into_iter().collect());
        }
    }
}
