//! The nonhomogeneous quantum Markov chain attached to a trajectory.
//!
//! For each time `n` the transition expectation is
//!
//! ```text
//! E⁽ⁿ⁾(x ⊗ y) = Σ'_j Σ_i [Tr(ρ⁽ⁿ⁾_j x(j)) / Tr(ρ⁽ⁿ⁾_j)] · B^i_j* y(i) B^i_j ⊗ |j⟩⟨j|
//! ```
//!
//! where `Σ'_j` runs over the support `Λ(ρ⁽ⁿ⁾)`. These maps are only
//! sub-Markovian, so the chain functional needs the limit operators
//! `b̄(n, j)`, obtained by iterating `E(I ⊗ ·)` backwards from the identity.
//! Everything here is computed by backward recursion over site-indexed
//! tables; no path is ever enumerated.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::evolution::{self, BlockState, EvolutionError, Trajectory};
use crate::linalg::{self, c, CMat, C64};
use crate::model::{OqrwModel, SiteId};

/// Extra steps beyond the last cylinder factor used for `b̄`.
pub const DEFAULT_HORIZON: usize = 20;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum QmcError {
    #[error("time index {requested} out of range (trajectory has {available} steps)")]
    IndexOutOfRange { requested: usize, available: usize },
    #[error("cylinder observable needs at least one factor")]
    EmptyCylinder,
    #[error("invariance criteria disagree: {0}")]
    CriterionDisagreement(String),
    #[error(transparent)]
    Evolution(#[from] EvolutionError),
}

pub type Result<T> = std::result::Result<T, QmcError>;

/// `Σ_i a(i) ⊗ |i⟩⟨i|` with finitely many listed blocks; unlisted sites
/// carry `I` when `identity_tail` is set and `0` otherwise.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockObservable {
    blocks: BTreeMap<SiteId, CMat>,
    identity_tail: bool,
}

impl BlockObservable {
    pub fn new(blocks: BTreeMap<SiteId, CMat>, identity_tail: bool) -> Self {
        BlockObservable { blocks, identity_tail }
    }

    pub fn identity() -> Self {
        BlockObservable { blocks: BTreeMap::new(), identity_tail: true }
    }

    pub fn zero() -> Self {
        BlockObservable { blocks: BTreeMap::new(), identity_tail: false }
    }

    /// `x ⊗ |site⟩⟨site|`.
    pub fn at_site(site: SiteId, x: CMat) -> Self {
        BlockObservable { blocks: [(site, x)].into_iter().collect(), identity_tail: false }
    }

    pub fn blocks(&self) -> &BTreeMap<SiteId, CMat> {
        &self.blocks
    }

    pub fn identity_tail(&self) -> bool {
        self.identity_tail
    }

    /// Block at `site`, or `None` when it is the zero block.
    pub fn block(&self, site: SiteId, hdim: usize) -> Option<CMat> {
        match self.blocks.get(&site) {
            Some(b) => Some(b.clone()),
            None if self.identity_tail => Some(linalg::identity(hdim)),
            None => None,
        }
    }

    /// Largest entrywise difference over the listed sites of either side.
    pub fn max_entry_distance(&self, other: &BlockObservable, hdim: usize) -> f64 {
        if self.identity_tail != other.identity_tail {
            return f64::INFINITY;
        }
        let zero = linalg::zeros(hdim);
        self.blocks
            .keys()
            .chain(other.blocks.keys())
            .map(|s| {
                let a = self.block(*s, hdim).unwrap_or_else(|| zero.clone());
                let b = other.block(*s, hdim).unwrap_or_else(|| zero.clone());
                linalg::max_abs(&(a - b))
            })
            .fold(0.0, f64::max)
    }
}

/// `a₀ ⊗ a₁ ⊗ ⋯ ⊗ a_n ⊗ I ⊗ I ⊗ ⋯`.
#[derive(Debug, Clone, PartialEq)]
pub struct CylinderObservable {
    factors: Vec<BlockObservable>,
}

impl CylinderObservable {
    pub fn new(factors: Vec<BlockObservable>) -> Result<Self> {
        if factors.is_empty() {
            return Err(QmcError::EmptyCylinder);
        }
        Ok(CylinderObservable { factors })
    }

    /// `I ⊗ ⋯ ⊗ I` with `len` explicit factors.
    pub fn identity(len: usize) -> Self {
        CylinderObservable { factors: vec![BlockObservable::identity(); len.max(1)] }
    }

    /// `x` in slot `n`, identity everywhere else.
    pub fn single(n: usize, x: BlockObservable) -> Self {
        let mut factors = vec![BlockObservable::identity(); n];
        factors.push(x);
        CylinderObservable { factors }
    }

    pub fn factors(&self) -> &[BlockObservable] {
        &self.factors
    }

    /// Index of the last explicit factor.
    pub fn depth(&self) -> usize {
        self.factors.len() - 1
    }
}

fn check_index(traj: &Trajectory, n: usize) -> Result<()> {
    if n > traj.steps() {
        return Err(QmcError::IndexOutOfRange { requested: n, available: traj.steps() });
    }
    Ok(())
}

/// `Tr(ρ_j x(j)) / Tr(ρ_j)`; zero when `x` vanishes at `j`.
fn trace_ratio(rho: &CMat, x: &BlockObservable, site: SiteId) -> C64 {
    match x.block(site, rho.nrows()) {
        Some(xb) => linalg::trace_product(rho, &xb) / linalg::trace_re(rho),
        None => C64::default(),
    }
}

/// `Σ_i B^i_j* y(i) B^i_j`.
fn pull_back(m: &OqrwModel, j: SiteId, y: &BlockObservable) -> CMat {
    let h = m.hdim();
    let mut acc = linalg::zeros(h);
    for (i, b) in m.outgoing(j) {
        if let Some(yi) = y.block(*i, h) {
            acc += b.adjoint() * yi * b;
        }
    }
    acc
}

/// `E⁽ⁿ⁾(x ⊗ y)`, block by block.
pub fn transition_expectation(
    traj: &Trajectory,
    n: usize,
    x: &BlockObservable,
    y: &BlockObservable,
) -> Result<BlockObservable> {
    check_index(traj, n)?;
    let m = traj.model();
    let state = &traj.states()[n];
    let blocks = state
        .blocks()
        .iter()
        .map(|(&j, rho)| (j, pull_back(m, j, y) * trace_ratio(rho, x, j)))
        .collect();
    Ok(BlockObservable::new(blocks, false))
}

/// Kraus data of `E⁽ⁿ⁾`: the normalized amplitudes `ρ_j^{1/2} / Tr(ρ_j)^{1/2}`
/// for `j ∈ Λ(ρ⁽ⁿ⁾)`. The full operators
/// `K_ij = (B^i_j ⊗ |i⟩⟨j|)* ⊗ (amplitude_j ⊗ |i⟩⟨j|)` are assembled on demand.
#[derive(Debug, Clone)]
pub struct KrausDilation {
    pub n: usize,
    amplitudes: BTreeMap<SiteId, CMat>,
}

impl KrausDilation {
    pub fn new(traj: &Trajectory, n: usize, tol: f64) -> Result<Self> {
        check_index(traj, n)?;
        let mut amplitudes = BTreeMap::new();
        for (&j, rho) in traj.states()[n].blocks() {
            let root = linalg::psd_sqrt(rho, tol.max(1e-9))
                .map_err(|_| QmcError::Evolution(EvolutionError::NotPsd { site: j }))?;
            amplitudes.insert(j, root * c(1.0 / linalg::trace_re(rho).sqrt(), 0.0));
        }
        Ok(KrausDilation { n, amplitudes })
    }

    /// `A_j`; `None` (the zero operator) off the support.
    pub fn amplitude(&self, j: SiteId) -> Option<&CMat> {
        self.amplitudes.get(&j)
    }

    /// `Tr₂(Σ_ij K_ij K_ij*) = Σ'_j (Σ_i B^i_j* B^i_j) ⊗ |j⟩⟨j|`.
    pub fn partial_trace_gram(&self, m: &OqrwModel) -> BlockObservable {
        let blocks = self
            .amplitudes
            .iter()
            .map(|(&j, a)| {
                let weight = linalg::trace_product(a, &a.adjoint());
                (j, pull_back(m, j, &BlockObservable::identity()) * weight)
            })
            .collect();
        BlockObservable::new(blocks, false)
    }

    /// Dense `K_ij` on `(H⊗K) ⊗ (H⊗K)`, with the site factor ordered as
    /// `m.sites()`. Only sensible for small finite models.
    pub fn assemble(&self, m: &OqrwModel, from: SiteId, to: SiteId) -> Option<CMat> {
        let b = m.operator(from, to)?;
        let a = self.amplitude(from)?;
        let jump = site_unit(m, to, from)?;
        let dilated_b = b.kronecker(&jump);
        let dilated_a = a.kronecker(&jump);
        Some(dilated_b.adjoint().kronecker(&dilated_a))
    }
}

/// `|i⟩⟨j|` on the site space of a finite model.
fn site_unit(m: &OqrwModel, i: SiteId, j: SiteId) -> Option<CMat> {
    let n = m.num_sites();
    let (ri, cj) = (m.site_index(i)?, m.site_index(j)?);
    let mut e = CMat::zeros(n, n);
    e[(ri, cj)] = c(1.0, 0.0);
    Some(e)
}

/// Dense `Σ_i a(i) ⊗ |i⟩⟨i|` over the sites of a finite model.
pub fn dense_observable(m: &OqrwModel, x: &BlockObservable) -> CMat {
    let h = m.hdim();
    let d = h * m.num_sites();
    let mut out = CMat::zeros(d, d);
    for &s in m.sites() {
        if let Some(b) = x.block(s, h) {
            out += b.kronecker(&site_unit(m, s, s).expect("model site"));
        }
    }
    out
}

/// Limit operators `b̄(n, j)` for one time index.
#[derive(Debug, Clone)]
pub struct BbarFamily {
    pub n: usize,
    pub values: BTreeMap<SiteId, CMat>,
    pub horizon_used: usize,
    /// Operator-norm change when the horizon is shortened by one step.
    pub delta: f64,
    pub converged: bool,
}

/// `b̄(m, ·)` for `m = from..=depth`, all seeded with the identity on
/// `Λ(ρ^(depth))`; entry `k` of the result belongs to time `from + k`.
pub fn bbar_table(traj: &Trajectory, from: usize, depth: usize) -> Result<Vec<BTreeMap<SiteId, CMat>>> {
    check_index(traj, depth)?;
    let m = traj.model();
    let h = m.hdim();
    let mut current: BTreeMap<SiteId, CMat> =
        traj.supports()[depth].iter().map(|&s| (s, linalg::identity(h))).collect();
    let mut table = vec![current.clone()];
    for t in (from..depth).rev() {
        let next_obs = BlockObservable::new(current, false);
        current = traj.supports()[t].iter().map(|&j| (j, pull_back(m, j, &next_obs))).collect();
        table.push(current.clone());
    }
    table.reverse();
    Ok(table)
}

fn family_delta(a: &BTreeMap<SiteId, CMat>, b: &BTreeMap<SiteId, CMat>, hdim: usize) -> f64 {
    let zero = linalg::zeros(hdim);
    a.keys()
        .chain(b.keys())
        .map(|s| linalg::op_norm(&(a.get(s).unwrap_or(&zero) - b.get(s).unwrap_or(&zero))))
        .fold(0.0, f64::max)
}

/// `b̄(n, ·)` seeded `horizon` steps ahead; convergence is judged by the
/// change against a seed one step closer.
pub fn bbar(traj: &Trajectory, n: usize, horizon: usize, tol: f64) -> Result<BbarFamily> {
    check_index(traj, n + horizon)?;
    let deep = bbar_table(traj, n, n + horizon)?.swap_remove(0);
    let (delta, converged) = if horizon == 0 {
        (f64::INFINITY, false)
    } else {
        let shallow = bbar_table(traj, n, n + horizon - 1)?.swap_remove(0);
        let d = family_delta(&deep, &shallow, traj.model().hdim());
        (d, d <= tol)
    };
    Ok(BbarFamily { n, values: deep, horizon_used: horizon, delta, converged })
}

/// `E_{0]}(a)` given `b̄(n+1, ·)` for the last factor index `n` (or `None` to
/// close the chain with the identity at `n`).
fn e0_with_tail(
    traj: &Trajectory,
    a: &CylinderObservable,
    tail: Option<&BTreeMap<SiteId, CMat>>,
) -> Result<BlockObservable> {
    let n = a.depth();
    check_index(traj, n)?;
    let factors = a.factors();
    let mut acc = match tail {
        Some(bbar_next) => transition_expectation(traj, n, &factors[n], &BlockObservable::new(bbar_next.clone(), false))?,
        None => {
            let blocks = traj.states()[n]
                .blocks()
                .iter()
                .map(|(&j, rho)| (j, linalg::identity(traj.model().hdim()) * trace_ratio(rho, &factors[n], j)))
                .collect();
            BlockObservable::new(blocks, false)
        }
    };
    for k in (0..n).rev() {
        acc = transition_expectation(traj, k, &factors[k], &acc)?;
    }
    Ok(acc)
}

/// `E_{0]}(a₀ ⊗ ⋯ ⊗ a_n ⊗ I ⊗ ⋯)`, nesting `E⁽ᵏ⁾(a_k ⊗ ·)` down from
/// `E⁽ⁿ⁾(a_n ⊗ b̄(n+1))`.
pub fn conditional_expectation_e0(traj: &Trajectory, a: &CylinderObservable, horizon: usize) -> Result<BlockObservable> {
    let n = a.depth();
    check_index(traj, n + horizon)?;
    if horizon == 0 {
        return e0_with_tail(traj, a, None);
    }
    let tail = bbar_table(traj, n + 1, n + horizon)?.swap_remove(0);
    e0_with_tail(traj, a, Some(&tail))
}

/// `Σ_i Tr(ρ⁽⁰⁾_i E_{0]}(a)(i))`.
fn pair_with_initial(traj: &Trajectory, e0: &BlockObservable) -> C64 {
    let h = traj.model().hdim();
    traj.initial()
        .blocks()
        .iter()
        .filter_map(|(&i, rho)| e0.block(i, h).map(|b| linalg::trace_product(rho, &b)))
        .sum()
}

/// The chain functional `ρ(a) = ρ⁽⁰⁾(E_{0]}(a))`.
pub fn qmc_evaluate(traj: &Trajectory, a: &CylinderObservable, horizon: usize) -> Result<C64> {
    Ok(pair_with_initial(traj, &conditional_expectation_e0(traj, a, horizon)?))
}

/// Hermitian basis `{E_aa, (E_ab+E_ba)/2, i(E_ab−E_ba)/2}`; pairing with it
/// reads off real and imaginary parts of the entries.
pub fn hermitian_basis(hdim: usize) -> Vec<CMat> {
    let mut out = Vec::with_capacity(hdim * hdim);
    for a in 0..hdim {
        for b in a..hdim {
            let mut x = linalg::zeros(hdim);
            if a == b {
                x[(a, a)] = c(1.0, 0.0);
                out.push(x);
            } else {
                x[(a, b)] = c(0.5, 0.0);
                x[(b, a)] = c(0.5, 0.0);
                out.push(x);
                let mut y = linalg::zeros(hdim);
                y[(a, b)] = c(0.0, 0.5);
                y[(b, a)] = c(0.0, -0.5);
                out.push(y);
            }
        }
    }
    out
}

#[derive(Debug, Clone)]
pub struct Residual {
    pub name: String,
    pub value: f64,
}

#[derive(Debug, Clone)]
pub struct MarkovPairReport {
    pub tol: f64,
    pub residuals: Vec<Residual>,
}

impl MarkovPairReport {
    pub fn passed(&self) -> bool {
        self.residuals.iter().all(|r| r.value <= self.tol)
    }

    pub fn failures(&self) -> impl Iterator<Item = &Residual> {
        self.residuals.iter().filter(move |r| r.value > self.tol || r.value.is_nan())
    }

    pub fn max_residual(&self) -> f64 {
        self.residuals.iter().map(|r| r.value).fold(0.0, f64::max)
    }
}

/// Checks total mass one, the marginal identity
/// `ρ(I ⊗ ⋯ ⊗ x ⊗ ⋯) = Tr(ρ⁽ⁿ⁾ x)` over a Hermitian basis for every
/// `n ≤ depth`, and that consecutive states follow the walk.
pub fn verify_markov_pair(traj: &Trajectory, depth: usize, horizon: usize, tol: f64) -> Result<MarkovPairReport> {
    check_index(traj, depth + horizon)?;
    let m = traj.model();
    let h = m.hdim();
    let basis = hermitian_basis(h);
    let mut residuals = Vec::new();

    let mass = qmc_evaluate(traj, &CylinderObservable::identity(depth + 1), horizon)?;
    residuals.push(Residual { name: "total_mass".into(), value: (mass - c(1.0, 0.0)).norm() });

    for n in 0..=depth {
        let tail = if horizon == 0 { None } else { Some(bbar_table(traj, n + 1, n + horizon)?.swap_remove(0)) };
        let mut worst: f64 = 0.0;
        for (&site, rho) in traj.states()[n].blocks() {
            for x in &basis {
                let cyl = CylinderObservable::single(n, BlockObservable::at_site(site, x.clone()));
                let value = pair_with_initial(traj, &e0_with_tail(traj, &cyl, tail.as_ref())?);
                let expected = linalg::trace_product(rho, x);
                worst = worst.max((value - expected).norm());
            }
        }
        residuals.push(Residual { name: format!("marginal[{n}]"), value: worst });
    }

    let mut dynamics: f64 = 0.0;
    for n in 0..traj.steps() {
        let next = BlockState::from_blocks_unchecked(evolution::apply_raw(m, &traj.states()[n]));
        dynamics = dynamics.max(next.distance(&traj.states()[n + 1]));
    }
    residuals.push(Residual { name: "dynamics".into(), value: dynamics });

    Ok(MarkovPairReport { tol, residuals })
}

/// Both readings of invariance for a state `ω` seeding a homogeneous chain.
#[derive(Debug, Clone)]
pub struct InvarianceCheck {
    /// `max_x |Tr(ω x) − Tr(ω E⁽⁰⁾(I ⊗ x))|` over a Hermitian basis per site.
    pub functional_residual: f64,
    /// `‖M(ω) − ω‖` (Frobenius over blocks).
    pub fixed_point_residual: f64,
    pub tol: f64,
}

impl InvarianceCheck {
    pub fn functional_holds(&self) -> bool {
        self.functional_residual <= self.tol
    }

    pub fn fixed_point_holds(&self) -> bool {
        self.fixed_point_residual <= self.tol
    }

    /// Verdicts differ and neither residual is near the threshold.
    pub fn disagrees(&self) -> bool {
        let clear_pass = |r: f64| r <= self.tol * 0.25;
        let clear_fail = |r: f64| r > self.tol * 4.0;
        (clear_pass(self.functional_residual) && clear_fail(self.fixed_point_residual))
            || (clear_fail(self.functional_residual) && clear_pass(self.fixed_point_residual))
    }
}

pub fn invariance_check(m: &OqrwModel, omega: &BlockState, tol: f64) -> Result<InvarianceCheck> {
    let traj = evolution::trajectory(m, omega, 0)?;
    let h = m.hdim();
    let basis = hermitian_basis(h);
    let image = BlockState::from_blocks_unchecked(evolution::apply_raw(m, omega));
    let mut sites: Vec<SiteId> = omega.blocks().keys().chain(image.blocks().keys()).copied().collect();
    sites.sort();
    sites.dedup();
    let mut functional: f64 = 0.0;
    for &site in &sites {
        for x in &basis {
            let obs = BlockObservable::at_site(site, x.clone());
            let lhs = omega.block(site).map_or(C64::default(), |w| linalg::trace_product(w, x));
            let pulled = transition_expectation(&traj, 0, &BlockObservable::identity(), &obs)?;
            let rhs = pair_with_initial(&traj, &pulled);
            functional = functional.max((lhs - rhs).norm());
        }
    }
    Ok(InvarianceCheck { functional_residual: functional, fixed_point_residual: image.distance(omega), tol })
}

/// Invariance of `ω` for the chain it seeds; the functional and fixed-point
/// readings must agree.
pub fn is_invariant_state(m: &OqrwModel, omega: &BlockState, tol: f64) -> Result<bool> {
    let check = invariance_check(m, omega, tol)?;
    if check.disagrees() {
        return Err(QmcError::CriterionDisagreement(format!(
            "functional residual {:.3e}, fixed-point residual {:.3e}",
            check.functional_residual, check.fixed_point_residual
        )));
    }
    Ok(check.functional_holds() && check.fixed_point_holds())
}
