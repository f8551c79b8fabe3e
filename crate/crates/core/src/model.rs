//! Walk models: sites, transition operators `B^i_j` (effect of jumping from
//! `j` to `i`) and the normalization `Σ_i B^i_j* B^i_j = I`.
//!
//! The dilated operators `B^i_j ⊗ |i⟩⟨j|` are never built; everything works
//! on per-site blocks indexed by [`SiteId`].

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{self, CMat};

/// Vertex label of the site graph.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SiteId(pub i64);

impl fmt::Display for SiteId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl From<i64> for SiteId {
    fn from(v: i64) -> Self {
        SiteId(v)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    Explicit,
    Lattice1d,
    Classical,
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ModelKind::Explicit => "explicit",
            ModelKind::Lattice1d => "lattice1d",
            ModelKind::Classical => "classical",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("hilbert space dimension must be positive")]
    ZeroDimension,
    #[error("operator {from} -> {to} is {rows}x{cols}, expected {hdim}x{hdim}")]
    DimensionMismatch { from: SiteId, to: SiteId, rows: usize, cols: usize, hdim: usize },
    #[error("operator references unknown site {0}")]
    UnknownSite(SiteId),
    #[error("duplicate operator {from} -> {to}")]
    DuplicateOperator { from: SiteId, to: SiteId },
    #[error("model has no transition operators")]
    NoOperators,
    #[error("no operator for step {from} -> {to}")]
    MissingOperator { from: SiteId, to: SiteId },
    #[error("a path needs at least two vertices")]
    PathTooShort,
    #[error("lattice window must be non-negative, got {0}")]
    InvalidWindow(i64),
    #[error("not a stochastic matrix: {0}")]
    NotStochastic(String),
}

/// Translation-invariant jump rule on ℤ: `B^{j+offset}_j = op` for every `j`.
#[derive(Debug, Clone)]
pub struct LatticeRule {
    pub offsets: BTreeMap<i64, CMat>,
    pub window: i64,
}

impl LatticeRule {
    pub fn max_jump(&self) -> i64 {
        self.offsets.keys().map(|o| o.abs()).max().unwrap_or(0)
    }
}

/// An open quantum random walk over a finite site set (possibly a window of
/// an infinite lattice).
#[derive(Debug, Clone)]
pub struct OqrwModel {
    kind: ModelKind,
    hdim: usize,
    sites: Vec<SiteId>,
    outgoing: BTreeMap<SiteId, Vec<(SiteId, CMat)>>,
    incoming: BTreeMap<SiteId, Vec<(SiteId, CMat)>>,
    lattice: Option<LatticeRule>,
    boundary: BTreeSet<SiteId>,
    stochastic: Option<DMatrix<f64>>,
}

impl OqrwModel {
    /// Model over an explicit site list. Exactly-zero operators are dropped.
    pub fn explicit(
        hdim: usize,
        sites: impl IntoIterator<Item = SiteId>,
        ops: impl IntoIterator<Item = (SiteId, SiteId, CMat)>,
    ) -> Result<Self, ModelError> {
        Self::build(ModelKind::Explicit, hdim, sites.into_iter().collect(), ops.into_iter().collect(), None, None)
    }

    /// Nearest-neighbour style lattice walk on `[-window, window]`.
    pub fn lattice1d(
        hdim: usize,
        offsets: impl IntoIterator<Item = (i64, CMat)>,
        window: i64,
    ) -> Result<Self, ModelError> {
        if window < 0 {
            return Err(ModelError::InvalidWindow(window));
        }
        let mut rule = BTreeMap::new();
        for (off, op) in offsets {
            if op.nrows() != hdim || op.ncols() != hdim {
                return Err(ModelError::DimensionMismatch {
                    from: SiteId(0),
                    to: SiteId(off),
                    rows: op.nrows(),
                    cols: op.ncols(),
                    hdim,
                });
            }
            if rule.insert(off, op).is_some() {
                return Err(ModelError::DuplicateOperator { from: SiteId(0), to: SiteId(off) });
            }
        }
        Self::materialize(hdim, LatticeRule { offsets: rule, window })
    }

    fn materialize(hdim: usize, rule: LatticeRule) -> Result<Self, ModelError> {
        let w = rule.window;
        let sites: Vec<SiteId> = (-w..=w).map(SiteId).collect();
        let mut ops = Vec::new();
        let mut boundary = BTreeSet::new();
        for j in -w..=w {
            for (off, op) in &rule.offsets {
                let to = j + off;
                if to.abs() <= w {
                    ops.push((SiteId(j), SiteId(to), op.clone()));
                } else if op.norm() > 0.0 {
                    boundary.insert(SiteId(j));
                }
            }
        }
        let mut model = Self::build(ModelKind::Lattice1d, hdim, sites, ops, Some(rule), None)?;
        model.boundary = boundary;
        Ok(model)
    }

    pub(crate) fn from_stochastic(p: DMatrix<f64>) -> Result<Self, ModelError> {
        let n = p.nrows();
        let sites: Vec<SiteId> = (0..n as i64).map(SiteId).collect();
        let mut ops = Vec::new();
        for j in 0..n {
            for i in 0..n {
                let w = p[(j, i)];
                if w > 0.0 {
                    ops.push((SiteId(j as i64), SiteId(i as i64), CMat::from_element(1, 1, linalg::c(w.sqrt(), 0.0))));
                }
            }
        }
        Self::build(ModelKind::Classical, 1, sites, ops, None, Some(p))
    }

    fn build(
        kind: ModelKind,
        hdim: usize,
        sites: Vec<SiteId>,
        ops: Vec<(SiteId, SiteId, CMat)>,
        lattice: Option<LatticeRule>,
        stochastic: Option<DMatrix<f64>>,
    ) -> Result<Self, ModelError> {
        if hdim == 0 {
            return Err(ModelError::ZeroDimension);
        }
        let site_set: BTreeSet<SiteId> = sites.into_iter().collect();
        let mut seen = BTreeSet::new();
        let mut outgoing: BTreeMap<SiteId, Vec<(SiteId, CMat)>> = BTreeMap::new();
        let mut incoming: BTreeMap<SiteId, Vec<(SiteId, CMat)>> = BTreeMap::new();
        for (from, to, op) in ops {
            if op.nrows() != hdim || op.ncols() != hdim {
                return Err(ModelError::DimensionMismatch { from, to, rows: op.nrows(), cols: op.ncols(), hdim });
            }
            for s in [from, to] {
                if !site_set.contains(&s) {
                    return Err(ModelError::UnknownSite(s));
                }
            }
            if !seen.insert((from, to)) {
                return Err(ModelError::DuplicateOperator { from, to });
            }
            if op.norm() == 0.0 {
                continue;
            }
            outgoing.entry(from).or_default().push((to, op.clone()));
            incoming.entry(to).or_default().push((from, op));
        }
        if outgoing.is_empty() {
            return Err(ModelError::NoOperators);
        }
        Ok(OqrwModel {
            kind,
            hdim,
            sites: site_set.into_iter().collect(),
            outgoing,
            incoming,
            lattice,
            boundary: BTreeSet::new(),
            stochastic,
        })
    }

    pub fn kind(&self) -> ModelKind {
        self.kind
    }

    pub fn hdim(&self) -> usize {
        self.hdim
    }

    pub fn sites(&self) -> &[SiteId] {
        &self.sites
    }

    pub fn num_sites(&self) -> usize {
        self.sites.len()
    }

    pub fn contains(&self, site: SiteId) -> bool {
        self.sites.binary_search(&site).is_ok()
    }

    pub fn site_index(&self, site: SiteId) -> Option<usize> {
        self.sites.binary_search(&site).ok()
    }

    /// `(to, B^to_from)` for every nonzero operator leaving `from`.
    pub fn outgoing(&self, from: SiteId) -> &[(SiteId, CMat)] {
        self.outgoing.get(&from).map_or(&[], Vec::as_slice)
    }

    /// `(from, B^to_from)` for every nonzero operator entering `to`.
    pub fn incoming(&self, to: SiteId) -> &[(SiteId, CMat)] {
        self.incoming.get(&to).map_or(&[], Vec::as_slice)
    }

    pub fn operator(&self, from: SiteId, to: SiteId) -> Option<&CMat> {
        self.outgoing(from).iter().find(|(t, _)| *t == to).map(|(_, op)| op)
    }

    /// All nonzero operators as `(from, to, B^to_from)`.
    pub fn operators(&self) -> impl Iterator<Item = (SiteId, SiteId, &CMat)> + '_ {
        self.outgoing.iter().flat_map(|(from, outs)| outs.iter().map(move |(to, op)| (*from, *to, op)))
    }

    pub fn lattice_rule(&self) -> Option<&LatticeRule> {
        self.lattice.as_ref()
    }

    pub fn stochastic_matrix(&self) -> Option<&DMatrix<f64>> {
        self.stochastic.as_ref()
    }

    /// Whether the site set is the whole graph rather than a truncation window.
    pub fn is_finite(&self) -> bool {
        self.lattice.is_none()
    }

    /// Window sites whose outgoing jumps leave the window.
    pub fn boundary_sites(&self) -> &BTreeSet<SiteId> {
        &self.boundary
    }

    pub fn window(&self) -> Option<i64> {
        self.lattice.as_ref().map(|r| r.window)
    }

    /// Re-materializes a lattice model on a different window; finite models
    /// are returned unchanged.
    pub fn with_window(&self, window: i64) -> Result<Self, ModelError> {
        match &self.lattice {
            Some(rule) => {
                if window < 0 {
                    return Err(ModelError::InvalidWindow(window));
                }
                Self::materialize(self.hdim, LatticeRule { offsets: rule.offsets.clone(), window })
            }
            None => Ok(self.clone()),
        }
    }

    /// Widens a lattice window so that mass starting within `|site| ≤ extent`
    /// stays at least one step away from the boundary for `steps` steps.
    pub fn widened_for(&self, extent: i64, steps: usize) -> Result<Self, ModelError> {
        match &self.lattice {
            Some(rule) => {
                let jump = rule.max_jump().max(1);
                let needed = extent + (steps as i64 + 1) * jump;
                if needed > rule.window {
                    self.with_window(needed)
                } else {
                    Ok(self.clone())
                }
            }
            None => Ok(self.clone()),
        }
    }
}

/// A walk `i_0 → i_1 → … → i_l` with `l ≥ 1`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Path(Vec<SiteId>);

impl Path {
    pub fn new(vertices: impl IntoIterator<Item = SiteId>) -> Result<Self, ModelError> {
        let v: Vec<SiteId> = vertices.into_iter().collect();
        if v.len() < 2 {
            return Err(ModelError::PathTooShort);
        }
        Ok(Path(v))
    }

    pub fn vertices(&self) -> &[SiteId] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Concatenation; the last vertex of `self` must equal the first of `next`.
    pub fn then(&self, next: &Path) -> Option<Path> {
        if self.0.last() != next.0.first() {
            return None;
        }
        let mut v = self.0.clone();
        v.extend_from_slice(&next.0[1..]);
        Some(Path(v))
    }
}

/// Ordered product `B^{i_l}_{i_{l-1}} ⋯ B^{i_1}_{i_0}`; later steps act on the left.
pub fn path_operator(m: &OqrwModel, path: &Path) -> Result<CMat, ModelError> {
    let mut acc = linalg::identity(m.hdim());
    for step in path.0.windows(2) {
        let (from, to) = (step[0], step[1]);
        let op = m.operator(from, to).ok_or(ModelError::MissingOperator { from, to })?;
        acc = op * acc;
    }
    Ok(acc)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SiteStatus {
    Checked,
    /// Lattice window edge: some jumps leave the window, so the sum is exempt.
    Boundary,
    /// No outgoing operator at all; mass parked here would vanish.
    NoOutgoing,
}

#[derive(Debug, Clone)]
pub struct SiteDefect {
    pub site: SiteId,
    /// `‖Σ_i B^i_j* B^i_j − I‖` in operator norm.
    pub defect: f64,
    pub status: SiteStatus,
}

#[derive(Debug, Clone)]
pub struct ValidationReport {
    pub tol: f64,
    pub sites: Vec<SiteDefect>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.sites.iter().all(|s| match s.status {
            SiteStatus::Checked => s.defect <= self.tol,
            SiteStatus::Boundary => true,
            SiteStatus::NoOutgoing => false,
        })
    }

    /// Largest defect among checked sites.
    pub fn max_defect(&self) -> f64 {
        self.sites
            .iter()
            .filter(|s| s.status == SiteStatus::Checked)
            .map(|s| s.defect)
            .fold(0.0, f64::max)
    }

    pub fn failures(&self) -> impl Iterator<Item = &SiteDefect> {
        self.sites.iter().filter(move |s| match s.status {
            SiteStatus::Checked => s.defect > self.tol,
            SiteStatus::Boundary => false,
            SiteStatus::NoOutgoing => true,
        })
    }
}

/// Per-site normalization defects.
pub fn validate_model(m: &OqrwModel, tol: f64) -> ValidationReport {
    let eye = linalg::identity(m.hdim());
    let sites = m
        .sites()
        .iter()
        .map(|&site| {
            if m.boundary_sites().contains(&site) {
                return SiteDefect { site, defect: 0.0, status: SiteStatus::Boundary };
            }
            let outs = m.outgoing(site);
            if outs.is_empty() {
                return SiteDefect { site, defect: 1.0, status: SiteStatus::NoOutgoing };
            }
            let sum = outs.iter().fold(linalg::zeros(m.hdim()), |acc, (_, b)| acc + b.adjoint() * b);
            SiteDefect { site, defect: linalg::op_norm(&(sum - &eye)), status: SiteStatus::Checked }
        })
        .collect();
    ValidationReport { tol, sites }
}
