use std::collections::BTreeMap;
use std::fmt;

use log::{debug, info};

use super::classical::{classical_classes, ClassicalClasses};
use super::cp::{cp_irreducible_seeded, default_rounds, CP_SEED};
use super::witness::{
    accumulated_support, common_range_condition, extended_invariance_defect, faithfulness_certificate, join,
    support_ranks, verify_reducing, ReducingCheck,
};
use super::{Certificate, ProjectionFamily, ReducibilityError, Result, Status, Verdict};
use crate::evolution::{trajectory, BlockState};
use crate::linalg::{self, CMat};
use crate::model::{validate_model, OqrwModel, SiteId};
use crate::qmc::DEFAULT_HORIZON;

/// Normalization defect accepted before analysing a model.
const NORMALIZATION_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct AnalyzeConfig {
    /// Last time index the reducing checks look at.
    pub depth: usize,
    pub n0: usize,
    /// Extra steps simulated beyond `depth` for the limit operators.
    pub horizon: usize,
    pub tol: f64,
    pub seed: u64,
}

impl Default for AnalyzeConfig {
    fn default() -> Self {
        AnalyzeConfig { depth: 10, n0: 1, horizon: DEFAULT_HORIZON, tol: linalg::DEFAULT_TOL, seed: CP_SEED }
    }
}

/// A contradiction between criteria that cannot disagree in exact arithmetic.
#[derive(Debug, Clone, PartialEq)]
pub enum Disagreement {
    CommonRangeWithoutWitness,
    WitnessExceedsCommonRange,
    CommonRangeUnverified,
    FaithfulWithWitness,
    CpIrreducibleWithWitness,
    CommonRangeButCpIrreducible,
    ClassicalMismatch { classes_irreducible: bool, cp: &'static str },
    WitnessUnverified,
    ReducingRoutes { family: &'static str, support_residual: f64, functional_residual: f64 },
}

impl fmt::Display for Disagreement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Disagreement::CommonRangeWithoutWitness => write!(f, "common range is proper but the supports are full"),
            Disagreement::WitnessExceedsCommonRange => write!(f, "support witness is not below the common range"),
            Disagreement::CommonRangeUnverified => write!(f, "common-range family fails the reducing check"),
            Disagreement::FaithfulWithWitness => write!(f, "faithful trajectory has a support witness"),
            Disagreement::CpIrreducibleWithWitness => write!(f, "invariant-family search says irreducible, supports say reducible"),
            Disagreement::CommonRangeButCpIrreducible => write!(f, "common range is proper, invariant-family search says irreducible"),
            Disagreement::ClassicalMismatch { classes_irreducible, cp } => {
                write!(f, "classes irreducible={classes_irreducible}, invariant-family search {cp}")
            }
            Disagreement::WitnessUnverified => write!(f, "certified support witness fails the reducing check"),
            Disagreement::ReducingRoutes { family, support_residual, functional_residual } => write!(
                f,
                "{family}: blockwise residual {support_residual:.3e} incompatible with functional residual {functional_residual:.3e}"
            ),
        }
    }
}

/// Every criterion's outcome plus the combined verdict.
#[derive(Debug, Clone)]
pub struct AnalysisReport {
    pub verdict: Verdict,
    /// Configuration actually used (depth may have been raised).
    pub config: AnalyzeConfig,
    /// Trajectory length `depth + horizon`.
    pub steps: usize,
    /// Lattice window used for the trajectory.
    pub window: Option<i64>,
    pub common_range: Option<CMat>,
    pub common_range_check: Option<ReducingCheck>,
    pub support_witness: Option<ProjectionFamily>,
    pub witness_check: Option<ReducingCheck>,
    /// Invariance defect of the witness completed to unvisited sites.
    pub witness_invariance_defect: Option<f64>,
    /// The witness is closed under the walk and therefore holds for all
    /// times, not just the simulated ones.
    pub witness_certified: bool,
    pub supports_stabilized: bool,
    pub faithful: bool,
    pub cp: Verdict,
    pub cp_check: Option<ReducingCheck>,
    pub classical: Option<ClassicalClasses>,
    pub support_ranks: Vec<BTreeMap<SiteId, usize>>,
    pub disagreements: Vec<Disagreement>,
}

fn invariance_tol(tol: f64) -> f64 {
    (tol * 1e3).max(1e-9)
}

/// Runs the trajectory and every criterion, then combines them: a verified
/// reducing family gives `Reducible`; otherwise an irreducibility certificate
/// gives `Irreducible`; otherwise `Inconclusive`. Contradictions are returned
/// as [`ReducibilityError::Inconsistent`].
pub fn analyze(m: &OqrwModel, rho0: &BlockState, cfg: &AnalyzeConfig) -> Result<AnalysisReport> {
    let validation = validate_model(m, NORMALIZATION_TOL);
    if !validation.is_valid() {
        return Err(ReducibilityError::NotNormalized { defect: validation.max_defect() });
    }
    let tol = cfg.tol;
    let h = m.hdim();
    let mut cfg = cfg.clone();
    if m.is_finite() {
        // the accumulated supports stabilize within |sites|·hdim steps
        cfg.depth = cfg.depth.max(cfg.n0 + m.num_sites() * h + 1);
    }
    cfg.depth = cfg.depth.max(cfg.n0);
    let steps = cfg.depth + cfg.horizon;
    let extent = rho0.blocks().keys().map(|s| s.0.abs()).max().unwrap_or(0);
    let walk = m.widened_for(extent, steps)?;
    info!("analyze: {} sites, hdim {h}, {steps} steps", walk.num_sites());
    let traj = trajectory(&walk, rho0, steps)?;

    let common_range = common_range_condition(m, tol);
    let h_n0 = cfg.n0.max(1);
    let common_range_check = match &common_range {
        Some(q) => Some(verify_reducing(&traj, &ProjectionFamily::uniform(h_n0, &walk, q), cfg.depth, cfg.horizon, tol)?),
        None => None,
    };

    let acc = accumulated_support(&traj, cfg.n0, tol)?;
    let supports_stabilized = acc.stabilized;
    let support_witness = super::support_witness(&traj, cfg.n0, tol);
    let (witness_check, witness_invariance_defect) = match &support_witness {
        Some(fam) => {
            let default = if walk.is_finite() {
                if supports_stabilized { linalg::zeros(h) } else { linalg::identity(h) }
            } else {
                join(fam, h, tol)
            };
            (
                Some(verify_reducing(&traj, fam, cfg.depth, cfg.horizon, tol)?),
                Some(extended_invariance_defect(&walk, fam, &default)),
            )
        }
        None => (None, None),
    };
    let witness_certified = witness_invariance_defect.is_some_and(|d| d <= invariance_tol(tol));
    let faithful = faithfulness_certificate(&traj, tol);

    let cp = cp_irreducible_seeded(m, tol, default_rounds(m), cfg.seed);
    let cp_check = match (&cp.status, m.is_finite()) {
        (Status::Reducible(fam), true) => {
            let fam = ProjectionFamily::new(cfg.n0, fam.p.clone());
            Some(verify_reducing(&traj, &fam, cfg.depth, cfg.horizon, tol)?)
        }
        _ => None,
    };
    let classical = match m.stochastic_matrix() {
        Some(p) => Some(classical_classes(p, 1e-14)?),
        None => None,
    };
    debug!("cp verdict {}, witness certified {witness_certified}, faithful {faithful}", cp.status.label());

    let mut disagreements = Vec::new();
    for (name, check) in [("common range", &common_range_check), ("support witness", &witness_check), ("invariant family", &cp_check)] {
        if let Some(c) = check {
            if !c.consistent {
                disagreements.push(Disagreement::ReducingRoutes {
                    family: name,
                    support_residual: c.support_residual,
                    functional_residual: c.functional_residual,
                });
            }
        }
    }
    if let Some(q) = &common_range {
        if cfg.n0 >= 1 {
            match &support_witness {
                None => disagreements.push(Disagreement::CommonRangeWithoutWitness),
                // a rank decision next to the cutoff fixes the direction only
                // to ε·‖ρ‖/gap, so ambiguous sites are not compared
                Some(fam)
                    if fam.p.iter().any(|(s, p)| {
                        !acc.supports.get(s).is_some_and(|sup| sup.ambiguous)
                            && !linalg::loewner_le(p, q, invariance_tol(tol))
                    }) =>
                {
                    disagreements.push(Disagreement::WitnessExceedsCommonRange)
                }
                _ => {}
            }
        }
        if !common_range_check.as_ref().is_some_and(|c| c.verified()) {
            disagreements.push(Disagreement::CommonRangeUnverified);
        }
        if cp.status.is_irreducible() {
            disagreements.push(Disagreement::CommonRangeButCpIrreducible);
        }
    }
    if faithful && support_witness.is_some() {
        disagreements.push(Disagreement::FaithfulWithWitness);
    }
    if cp.status.is_irreducible() && witness_certified {
        disagreements.push(Disagreement::CpIrreducibleWithWitness);
    }
    if witness_certified && !witness_check.as_ref().is_some_and(|c| c.verified()) {
        disagreements.push(Disagreement::WitnessUnverified);
    }
    if let Some(cls) = &classical {
        if !matches!(cp.status, Status::Inconclusive(_)) && cls.irreducible != cp.status.is_irreducible() {
            disagreements.push(Disagreement::ClassicalMismatch { classes_irreducible: cls.irreducible, cp: cp.status.label() });
        }
    }

    let verified = |c: &Option<ReducingCheck>| c.as_ref().is_some_and(|c| c.verified() && !c.trivial);
    let status = if let (Some(q), true) = (&common_range, verified(&common_range_check)) {
        Status::Reducible(ProjectionFamily::uniform(h_n0, m, q))
    } else if witness_certified && verified(&witness_check) {
        Status::Reducible(support_witness.clone().expect("certified witness exists"))
    } else if let (Status::Reducible(fam), true) = (&cp.status, verified(&cp_check)) {
        Status::Reducible(ProjectionFamily::new(cfg.n0, fam.p.clone()))
    } else if let Status::Irreducible(cert) = &cp.status {
        Status::Irreducible(cert.clone())
    } else if faithful {
        Status::Irreducible(Certificate::Faithful { depth: steps })
    } else {
        let why = match (&support_witness, &cp.status) {
            (Some(_), _) => "support witness holds up to the simulated depth but is not closed under the walk",
            (None, Status::Reducible(_)) => "the walk has an invariant family, but the trajectory is not confined to it",
            _ => "no reducing family and no irreducibility certificate at this depth",
        };
        Status::Inconclusive(why.to_string())
    };

    let report = AnalysisReport {
        verdict: Verdict { status, depth_used: cfg.depth, tol },
        config: cfg,
        steps,
        window: walk.window(),
        common_range,
        common_range_check,
        support_witness,
        witness_check,
        witness_invariance_defect,
        witness_certified,
        supports_stabilized,
        faithful,
        cp,
        cp_check,
        classical,
        support_ranks: support_ranks(&traj, tol),
        disagreements,
    };
    if report.disagreements.is_empty() {
        Ok(report)
    } else {
        Err(ReducibilityError::Inconsistent(Box::new(report)))
    }
}
