use std::collections::BTreeMap;

use super::ProjectionFamily;
use crate::evolution::Trajectory;
use crate::linalg::{self, CMat, Support, C64};
use crate::model::{OqrwModel, SiteId};
use crate::qmc::{self, BlockObservable, CylinderObservable, QmcError};

/// Roundoff allowance when relating the two reducing-check residuals.
const ROUTE_SLACK: f64 = 1e-11;

/// Supports of `Σ_{n0 ≤ n ≤ N} ρ⁽ⁿ⁾_j`, site by site.
#[derive(Debug, Clone)]
pub struct AccumulatedSupport {
    pub n0: usize,
    pub supports: BTreeMap<SiteId, Support>,
    /// The accumulated family did not change over the last step; on a
    /// finite model it then never changes again.
    pub stabilized: bool,
    pub ambiguous: bool,
}

fn accumulate(traj: &Trajectory, from: usize, to: usize) -> BTreeMap<SiteId, CMat> {
    let h = traj.model().hdim();
    let mut acc: BTreeMap<SiteId, CMat> = BTreeMap::new();
    for state in &traj.states()[from..=to] {
        for (&s, b) in state.blocks() {
            *acc.entry(s).or_insert_with(|| linalg::zeros(h)) += b;
        }
    }
    acc
}

fn supports_of(acc: &BTreeMap<SiteId, CMat>, tol: f64) -> BTreeMap<SiteId, Support> {
    acc.iter()
        .map(|(&s, a)| (s, linalg::support(a, tol).expect("sums of trajectory blocks are Hermitian")))
        .collect()
}

pub fn accumulated_support(traj: &Trajectory, n0: usize, tol: f64) -> Result<AccumulatedSupport, QmcError> {
    let n = traj.steps();
    if n0 > n {
        return Err(QmcError::IndexOutOfRange { requested: n0, available: n });
    }
    let supports = supports_of(&accumulate(traj, n0, n), tol);
    let ambiguous = supports.values().any(|s| s.ambiguous);
    let stabilized = traj.model().is_finite() && n > n0 && {
        let before = supports_of(&accumulate(traj, n0, n - 1), tol);
        before.len() == supports.len()
            && before.iter().all(|(s, b)| supports.get(s).is_some_and(|a| a.rank == b.rank))
    };
    Ok(AccumulatedSupport { n0, supports, stabilized, ambiguous })
}

/// Per-site rank of `ρ⁽ⁿ⁾_j` for every step.
pub fn support_ranks(traj: &Trajectory, tol: f64) -> Vec<BTreeMap<SiteId, usize>> {
    traj.states()
        .iter()
        .map(|s| s.blocks().iter().map(|(&j, b)| (j, linalg::rank(b, tol).unwrap_or(usize::MAX))).collect())
        .collect()
}

/// Smallest projection family containing every block from `n0` on. Sites
/// never visited get `p(j) = 0` once the accumulated family has stabilized
/// on a finite model, and are left at the identity otherwise. `None` when
/// the family is trivial.
pub fn support_witness(traj: &Trajectory, n0: usize, tol: f64) -> Option<ProjectionFamily> {
    let acc = accumulated_support(traj, n0, tol).ok()?;
    let m = traj.model();
    let mut p: BTreeMap<SiteId, CMat> = acc.supports.into_iter().map(|(s, sup)| (s, sup.projection)).collect();
    if acc.stabilized {
        for &s in m.sites() {
            p.entry(s).or_insert_with(|| linalg::zeros(m.hdim()));
        }
    }
    let fam = ProjectionFamily::new(n0, p);
    (!fam.is_trivial(m)).then_some(fam)
}

/// `max ‖(I − F(i)) B^i_j F(j)‖` over every operator of `m`, where `F` is
/// `fam` with unlisted sites set to `default`. Zero means the family is
/// invariant under the walk.
pub fn family_invariance_defect(m: &OqrwModel, fam: &ProjectionFamily, default: &CMat) -> f64 {
    let h = m.hdim();
    let id = linalg::identity(h);
    let get = |s: SiteId| fam.p.get(&s).unwrap_or(default);
    m.operators()
        .map(|(from, to, b)| linalg::frobenius(&((&id - get(to)) * b * get(from))))
        .fold(0.0, f64::max)
}

/// [`family_invariance_defect`] with every unlisted site set to `outside`.
/// Lattice models are re-materialized with a margin of `2·max_jump + 1`
/// beyond the listed sites, so that every operator also acts between two
/// unlisted sites; a zero defect then certifies invariance on all of ℤ.
pub fn extended_invariance_defect(m: &OqrwModel, fam: &ProjectionFamily, outside: &CMat) -> f64 {
    match (m.lattice_rule(), m.window()) {
        (Some(rule), Some(window)) => {
            let reach = fam.p.keys().map(|s| s.0.abs()).max().unwrap_or(0);
            let wide = (reach + 2 * rule.max_jump().max(1) + 1).max(window);
            match m.with_window(wide) {
                Ok(wider) => family_invariance_defect(&wider, fam, outside),
                Err(_) => f64::INFINITY,
            }
        }
        _ => family_invariance_defect(m, fam, outside),
    }
}

/// Join of all listed projections.
pub fn join(fam: &ProjectionFamily, hdim: usize, tol: f64) -> CMat {
    let mut sum = linalg::zeros(hdim);
    for q in fam.p.values() {
        sum += q;
    }
    linalg::support_projection(&sum, tol).unwrap_or_else(|_| linalg::identity(hdim))
}

/// Both readings of "`p` reduces the chain from `n0` up to `depth`".
#[derive(Debug, Clone)]
pub struct ReducingCheck {
    /// `max ‖ρ⁽ⁿ⁾_j p(j) − ρ⁽ⁿ⁾_j‖` over `n0 ≤ n ≤ depth`.
    pub support_residual: f64,
    /// `|1 − ρ(p_{[n0, depth]})|`.
    pub functional_residual: f64,
    pub value: C64,
    pub tol: f64,
    pub trivial: bool,
    /// The residuals obey `a² ≤ b` and `b ≤ K·a` (`K` counts the blocks
    /// involved, times `√hdim`) up to roundoff. Both follow from positivity
    /// of the chain functional, so a violation is an internal error.
    pub consistent: bool,
}

impl ReducingCheck {
    pub fn support_holds(&self) -> bool {
        self.support_residual <= self.tol
    }

    pub fn functional_holds(&self) -> bool {
        self.functional_residual <= self.tol
    }

    pub fn routes_agree(&self) -> bool {
        self.support_holds() == self.functional_holds()
    }

    pub fn verified(&self) -> bool {
        self.support_holds() && self.functional_holds()
    }
}

/// Checks `ρ⁽ⁿ⁾_j p(j) = ρ⁽ⁿ⁾_j` for `n0 ≤ n ≤ depth` and, independently,
/// that the chain functional gives the projector cylinder
/// `I ⊗ ⋯ ⊗ I ⊗ p ⊗ ⋯ ⊗ p` (factors `n0..=depth`) mass one.
pub fn verify_reducing(
    traj: &Trajectory,
    fam: &ProjectionFamily,
    depth: usize,
    horizon: usize,
    tol: f64,
) -> Result<ReducingCheck, QmcError> {
    if fam.n0 > depth {
        return Err(QmcError::IndexOutOfRange { requested: fam.n0, available: depth });
    }
    let m = traj.model();
    let h = m.hdim();
    let mut support_residual: f64 = 0.0;
    let mut blocks_seen = 0usize;
    for state in &traj.states()[fam.n0..=depth.min(traj.steps())] {
        for (&j, rho) in state.blocks() {
            let p = fam.projection(j, h);
            support_residual = support_residual.max(linalg::frobenius(&(rho * &p - rho)));
            blocks_seen += 1;
        }
    }
    let mut factors = vec![BlockObservable::identity(); fam.n0];
    factors.extend(std::iter::repeat_n(fam.observable(), depth - fam.n0 + 1));
    let value = qmc::qmc_evaluate(traj, &CylinderObservable::new(factors)?, horizon)?;
    let functional_residual = (C64::new(1.0, 0.0) - value).norm();

    let k = (h as f64).sqrt() * blocks_seen as f64;
    let consistent = support_residual * support_residual <= functional_residual + ROUTE_SLACK
        && functional_residual <= k * support_residual + ROUTE_SLACK;
    Ok(ReducingCheck { support_residual, functional_residual, value, tol, trivial: fam.is_trivial(m), consistent })
}

/// Projection onto the span of all ranges `range(B^i_j)`, when proper and
/// nonzero. Every path operator then satisfies `h B_π = B_π`.
pub fn common_range_condition(m: &OqrwModel, tol: f64) -> Option<CMat> {
    let h = m.hdim();
    let mut gram = linalg::zeros(h);
    for (_, _, b) in m.operators() {
        gram += b * b.adjoint();
    }
    let sup = linalg::support(&gram, tol).ok()?;
    (sup.rank > 0 && sup.rank < h).then_some(sup.projection)
}

/// Every block along the trajectory is faithful and every model site is
/// occupied at every step.
pub fn faithfulness_certificate(traj: &Trajectory, tol: f64) -> bool {
    let m = traj.model();
    traj.states().iter().all(|state| {
        m.sites().iter().all(|s| {
            state.block(*s).is_some_and(|b| linalg::is_faithful(&(b / C64::new(linalg::trace_re(b), 0.0)), tol))
        })
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evolution::{classical_embed, classical_state, trajectory, BlockState};
    use crate::fixtures;
    use crate::linalg::{diag_real, real_matrix};

    fn rank_one_traj(n: usize) -> Trajectory {
        let m = fixtures::rank_one_walk(n as i64 + 2);
        trajectory(&m, &BlockState::localized(SiteId(0), diag_real(&[1.0, 0.0])).unwrap(), n).unwrap()
    }

    #[test]
    fn rank_one_walk_has_lower_level_witness() {
        let traj = rank_one_traj(8);
        let fam = support_witness(&traj, 1, 1e-10).unwrap();
        let e2 = diag_real(&[0.0, 1.0]);
        assert!(fam.p.values().all(|q| (q - &e2).norm() < 1e-10));
        let check = verify_reducing(&traj, &fam, 5, 3, 1e-10).unwrap();
        assert!(check.verified() && check.consistent && !check.trivial);
    }

    #[test]
    fn wrong_family_fails_both_routes() {
        let traj = rank_one_traj(8);
        let fam = ProjectionFamily::uniform(1, traj.model(), &diag_real(&[1.0, 0.0]));
        let check = verify_reducing(&traj, &fam, 5, 3, 1e-10).unwrap();
        assert!(!check.support_holds() && !check.functional_holds() && check.consistent);
    }

    #[test]
    fn identity_family_verifies_but_is_trivial() {
        let traj = rank_one_traj(6);
        let fam = ProjectionFamily::new(1, BTreeMap::new());
        let check = verify_reducing(&traj, &fam, 4, 2, 1e-10).unwrap();
        assert!(check.verified() && check.trivial);
    }

    #[test]
    fn common_ranges_of_reference_walks() {
        let h1 = common_range_condition(&fixtures::rank_one_walk(2), 1e-10).unwrap();
        assert!((h1 - diag_real(&[0.0, 1.0])).norm() < 1e-12);
        let h2 = common_range_condition(&fixtures::antidiagonal_walk(2), 1e-10).unwrap();
        assert!((h2 - real_matrix(&[&[0.5, -0.5], &[-0.5, 0.5]])).norm() < 1e-12);
        let h3 = common_range_condition(&fixtures::three_level_walk(2), 1e-10).unwrap();
        assert!((h3 - diag_real(&[0.0, 1.0, 1.0])).norm() < 1e-12);
        assert!(common_range_condition(&fixtures::unitary_column_ring(3, 0.3), 1e-10).is_none());
    }

    #[test]
    fn classical_closed_class_witness() {
        let m = classical_embed(&fixtures::two_closed_classes()).unwrap();
        let traj = trajectory(&m, &classical_state(&[0.0, 0.5, 0.5]).unwrap(), 8).unwrap();
        let fam = support_witness(&traj, 1, 1e-10).unwrap();
        assert_eq!(fam.p[&SiteId(0)][(0, 0)].re, 0.0);
        assert_eq!(fam.p[&SiteId(1)][(0, 0)].re, 1.0);
        assert_eq!(fam.p[&SiteId(2)][(0, 0)].re, 1.0);
        assert!(family_invariance_defect(&m, &fam, &linalg::identity(1)) < 1e-12);
    }

    #[test]
    fn faithful_ring_trajectory() {
        let m = fixtures::unitary_column_ring(4, 0.6);
        let rho0 = BlockState::new(m.sites().iter().map(|&s| (s, fixtures::maximally_mixed(2) * C64::new(0.25, 0.0))), 1e-12)
            .unwrap();
        let traj = trajectory(&m, &rho0, 10).unwrap();
        assert!(faithfulness_certificate(&traj, 1e-10));
        assert!(support_witness(&traj, 1, 1e-10).is_none());
        assert!(!faithfulness_certificate(&rank_one_traj(3), 1e-10));
    }
}
