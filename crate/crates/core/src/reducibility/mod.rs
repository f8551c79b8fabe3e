//! Reducibility of the chain attached to a walk.
//!
//! Four routes are implemented and cross-checked:
//!
//! - supports of the trajectory ([`support_witness`], checked by
//!   [`verify_reducing`] both blockwise and through the chain functional);
//! - a common range of all jump operators ([`common_range_condition`]);
//! - faithfulness of every block along the trajectory
//!   ([`faithfulness_certificate`]);
//! - invariant subspace families of the walk itself ([`cp::cp_irreducible`]),
//!   plus the strongly connected components of classical chains.
//!
//! [`analyze`] runs all of them and refuses to return a verdict when they
//! contradict each other.

mod analyze;
pub mod classical;
pub mod cp;
pub mod nn;
mod witness;

use std::collections::BTreeMap;

use thiserror::Error;

use crate::evolution::EvolutionError;
use crate::linalg::{self, CMat};
use crate::model::{ModelError, OqrwModel, SiteId};
use crate::qmc::{BlockObservable, QmcError};

pub use analyze::{analyze, AnalysisReport, AnalyzeConfig, Disagreement};
pub use classical::{classical_classes, ClassicalClasses};
pub use cp::{cp_irreducible, cp_irreducible_seeded, invariant_closure, Closure, CP_SEED};
pub use nn::{nn_condition_check, NnCondition};
pub use witness::{
    accumulated_support, common_range_condition, extended_invariance_defect, faithfulness_certificate,
    family_invariance_defect, join, support_ranks, support_witness, verify_reducing, AccumulatedSupport, ReducingCheck,
};

#[derive(Debug, Error)]
pub enum ReducibilityError {
    #[error("operators are not normalized: defect {defect:.3e}")]
    NotNormalized { defect: f64 },
    #[error("criteria disagree: {}", .0.disagreements.iter().map(|d| d.to_string()).collect::<Vec<_>>().join("; "))]
    Inconsistent(Box<AnalysisReport>),
    #[error(transparent)]
    Qmc(#[from] QmcError),
    #[error(transparent)]
    Evolution(#[from] EvolutionError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

pub type Result<T> = std::result::Result<T, ReducibilityError>;

/// Block-diagonal projection `p = Σ_j p(j) ⊗ |j⟩⟨j|` applied from time `n0`
/// on; sites missing from `p` carry the identity.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionFamily {
    pub n0: usize,
    pub p: BTreeMap<SiteId, CMat>,
}

/// Distance below which a block counts as `0` or `I` for triviality.
const TRIVIAL_TOL: f64 = 1e-8;

impl ProjectionFamily {
    pub fn new(n0: usize, p: BTreeMap<SiteId, CMat>) -> Self {
        ProjectionFamily { n0, p }
    }

    /// The same projection `q` at every site of `m`.
    pub fn uniform(n0: usize, m: &OqrwModel, q: &CMat) -> Self {
        ProjectionFamily { n0, p: m.sites().iter().map(|&s| (s, q.clone())).collect() }
    }

    pub fn projection(&self, site: SiteId, hdim: usize) -> CMat {
        self.p.get(&site).cloned().unwrap_or_else(|| linalg::identity(hdim))
    }

    pub fn is_valid(&self, tol: f64) -> bool {
        self.p.values().all(|q| linalg::is_projection(q, tol.max(1e-12)))
    }

    /// `p = I` or `p = 0` on the whole site set of `m`.
    pub fn is_trivial(&self, m: &OqrwModel) -> bool {
        let h = m.hdim();
        let id = linalg::identity(h);
        if self.p.values().all(|q| (q - &id).norm() <= TRIVIAL_TOL) {
            return true;
        }
        let covers = m.is_finite() && m.sites().iter().all(|s| self.p.contains_key(s));
        covers && self.p.values().all(|q| q.norm() <= TRIVIAL_TOL)
    }

    /// `p(j) ≤ h` for every listed site.
    pub fn listed_below(&self, h: &CMat, tol: f64) -> bool {
        self.p.values().all(|q| linalg::loewner_le(q, h, tol.max(1e-9)))
    }

    pub fn observable(&self) -> BlockObservable {
        BlockObservable::new(self.p.clone(), true)
    }

    pub fn ranks(&self, tol: f64) -> BTreeMap<SiteId, usize> {
        self.p.iter().map(|(&s, q)| (s, linalg::rank(q, tol).unwrap_or(usize::MAX))).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Certificate {
    /// Every seed vector generated the full family.
    Seeds { seeds: usize },
    /// Unique invariant state, faithful on every site; `min_eigenvalue` is
    /// its smallest eigenvalue and `gap` the smallest nonzero singular
    /// value of `S − I`.
    FixedPoint { seeds: usize, min_eigenvalue: f64, gap: Option<f64> },
    /// All trajectory blocks faithful on all sites up to `depth`.
    Faithful { depth: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub enum Status {
    Reducible(ProjectionFamily),
    Irreducible(Certificate),
    Inconclusive(String),
}

impl Status {
    pub fn label(&self) -> &'static str {
        match self {
            Status::Reducible(_) => "Reducible",
            Status::Irreducible(_) => "Irreducible",
            Status::Inconclusive(_) => "Inconclusive",
        }
    }

    pub fn is_reducible(&self) -> bool {
        matches!(self, Status::Reducible(_))
    }

    pub fn is_irreducible(&self) -> bool {
        matches!(self, Status::Irreducible(_))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Verdict {
    pub status: Status,
    pub depth_used: usize,
    /// Rank threshold used for every support decision.
    pub tol: f64,
}
