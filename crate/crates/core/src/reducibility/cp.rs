//! Invariant subspace families `V_j` with `B^i_j V_j ⊆ V_i`.
//!
//! A walk is irreducible exactly when no such family is proper. Seeds are
//! pushed forward to their smallest closed family; a proper closure is a
//! witness. On finite models the absence of one is then certified through
//! the fixed space of the walk: a trace-preserving CP map on a finite
//! dimensional algebra is irreducible iff it has a unique invariant state
//! and that state is faithful.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Certificate, ProjectionFamily, Status, Verdict};
use crate::invariant::{Superoperator, DENSE_LIMIT};
use crate::linalg::{self, c, CMat, CVec};
use crate::model::{OqrwModel, SiteId};

pub const CP_SEED: u64 = 0x5EED;
const RANDOM_SEEDS_PER_SITE: usize = 3;

/// Smallest invariant family containing a seed.
#[derive(Debug, Clone)]
pub struct Closure {
    /// Orthonormal basis (as columns) of `V_j`; sites with `V_j = 0` are absent.
    pub spaces: BTreeMap<SiteId, CMat>,
    /// Total rank `Σ_j dim V_j` after each round, starting with the seed.
    pub rank_history: Vec<usize>,
    pub stabilized: bool,
    pub ambiguous: bool,
}

impl Closure {
    pub fn rank(&self, site: SiteId) -> usize {
        self.spaces.get(&site).map_or(0, |v| v.ncols())
    }

    pub fn is_full(&self, m: &OqrwModel) -> bool {
        m.sites().iter().all(|&s| self.rank(s) == m.hdim())
    }

    pub fn family(&self, m: &OqrwModel, n0: usize) -> ProjectionFamily {
        let p = m
            .sites()
            .iter()
            .map(|&s| (s, self.spaces.get(&s).map_or_else(|| linalg::zeros(m.hdim()), |v| v * v.adjoint())))
            .collect();
        ProjectionFamily::new(n0, p)
    }
}

/// Orthonormal basis of the column span, with the shared rank threshold.
fn orthonormal_span(cols: &CMat, tol: f64) -> (CMat, bool) {
    let h = cols.nrows();
    if cols.ncols() == 0 {
        return (CMat::zeros(h, 0), false);
    }
    let gram = cols * cols.adjoint();
    let spec = linalg::hermitian_eigen(&gram);
    let lambda_max = spec.max_abs();
    let cutoff = linalg::rank_cutoff(lambda_max, tol);
    let mut keep = Vec::new();
    let mut ambiguous = false;
    for (k, &l) in spec.values.iter().enumerate() {
        if lambda_max >= linalg::TINY_SPECTRUM
            && l > cutoff / linalg::AMBIGUITY_FACTOR
            && l <= cutoff * linalg::AMBIGUITY_FACTOR
        {
            ambiguous = true;
        }
        if l > cutoff {
            keep.push(spec.vectors.column(k).into_owned());
        }
    }
    let basis = if keep.is_empty() { CMat::zeros(h, 0) } else { CMat::from_columns(&keep) };
    (basis, ambiguous)
}

fn hcat(parts: &[CMat], rows: usize) -> CMat {
    let total: usize = parts.iter().map(|p| p.ncols()).sum();
    let mut out = CMat::zeros(rows, total);
    let mut at = 0;
    for p in parts {
        out.columns_mut(at, p.ncols()).copy_from(p);
        at += p.ncols();
    }
    out
}

/// Forward propagation `V_i ← V_i + Σ_j B^i_j V_j` from `V_site = span(seed)`
/// until the ranks stop growing (at most `max_rounds` rounds).
pub fn invariant_closure(m: &OqrwModel, site: SiteId, seed: &CMat, tol: f64, max_rounds: usize) -> Closure {
    let h = m.hdim();
    let full = h * m.num_sites();
    let (v0, mut ambiguous) = orthonormal_span(seed, tol);
    let mut spaces: BTreeMap<SiteId, CMat> = BTreeMap::new();
    if v0.ncols() > 0 {
        spaces.insert(site, v0);
    }
    let total = |s: &BTreeMap<SiteId, CMat>| s.values().map(|v| v.ncols()).sum::<usize>();
    let mut rank_history = vec![total(&spaces)];
    let mut stabilized = false;
    for _ in 0..max_rounds {
        let mut next = BTreeMap::new();
        for &i in m.sites() {
            let mut parts: Vec<CMat> = spaces.get(&i).into_iter().cloned().collect();
            for (j, b) in m.incoming(i) {
                if let Some(vj) = spaces.get(j) {
                    parts.push(b * vj);
                }
            }
            let (basis, amb) = orthonormal_span(&hcat(&parts, h), tol);
            ambiguous |= amb;
            if basis.ncols() > 0 {
                next.insert(i, basis);
            }
        }
        let unchanged = next.len() == spaces.len()
            && next.iter().all(|(s, v)| spaces.get(s).is_some_and(|w| w.ncols() == v.ncols()));
        spaces = next;
        rank_history.push(total(&spaces));
        if unchanged || total(&spaces) == full {
            stabilized = true;
            break;
        }
    }
    Closure { spaces, rank_history, stabilized, ambiguous }
}

fn random_unit(rng: &mut ChaCha8Rng, h: usize) -> CMat {
    let v = CVec::from_fn(h, |_, _| c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));
    let norm = v.norm();
    CMat::from_column_slice(h, 1, (v / c(norm, 0.0)).as_slice())
}

fn seeds(m: &OqrwModel, rng_seed: u64) -> Vec<(SiteId, CMat)> {
    let h = m.hdim();
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let mut out = Vec::new();
    for &s in m.sites() {
        let id = linalg::identity(h);
        for k in 0..h {
            out.push((s, id.columns(k, 1).into_owned()));
        }
        for _ in 0..RANDOM_SEEDS_PER_SITE {
            out.push((s, random_unit(&mut rng, h)));
        }
    }
    out
}

enum FixedPointOutcome {
    Irreducible { min_eigenvalue: f64, gap: Option<f64> },
    Reducible(ProjectionFamily),
    Ambiguous(String),
}

/// Support family of a block-diagonal PSD operator, decided against the
/// largest eigenvalue over all blocks.
fn global_support(blocks: &BTreeMap<SiteId, CMat>, m: &OqrwModel, tol: f64) -> (ProjectionFamily, f64, bool) {
    let h = m.hdim();
    let spectra: BTreeMap<SiteId, linalg::Spectrum> =
        blocks.iter().map(|(&s, b)| (s, linalg::hermitian_eigen(b))).collect();
    let lambda_max = spectra.values().map(|sp| sp.max_abs()).fold(0.0, f64::max);
    let cutoff = linalg::rank_cutoff(lambda_max, tol);
    let mut ambiguous = false;
    let mut min_eig = f64::INFINITY;
    let mut p = BTreeMap::new();
    for &s in m.sites() {
        let mut q = linalg::zeros(h);
        if let Some(sp) = spectra.get(&s) {
            for (k, &l) in sp.values.iter().enumerate() {
                min_eig = min_eig.min(l);
                if l > cutoff / linalg::AMBIGUITY_FACTOR && l <= cutoff * linalg::AMBIGUITY_FACTOR {
                    ambiguous = true;
                }
                if l > cutoff {
                    q += linalg::outer(&sp.vectors.column(k).into_owned());
                }
            }
        } else {
            min_eig = min_eig.min(0.0);
        }
        p.insert(s, q);
    }
    (ProjectionFamily::new(0, p), min_eig / lambda_max.max(f64::MIN_POSITIVE), ambiguous)
}

fn positive_part(blocks: &BTreeMap<SiteId, CMat>) -> BTreeMap<SiteId, CMat> {
    blocks.iter().map(|(&s, b)| (s, linalg::hermitian_eigen(b).map(|l| l.max(0.0)))).collect()
}

fn invariance_tol(tol: f64) -> f64 {
    (tol * 1e3).max(1e-9)
}

fn fixed_point_outcome(m: &OqrwModel, tol: f64) -> Option<FixedPointOutcome> {
    let sup = Superoperator::new(m).ok()?;
    if sup.dim() > DENSE_LIMIT {
        return None;
    }
    let fixed = sup.fixed_space();
    if fixed.ambiguous {
        return Some(FixedPointOutcome::Ambiguous("fixed-space dimension is ambiguous".into()));
    }
    if fixed.dim == 0 {
        return Some(FixedPointOutcome::Ambiguous("no fixed point resolved".into()));
    }
    let hermitian = |v: &CVec| -> BTreeMap<SiteId, CMat> {
        sup.devectorize(v).into_iter().map(|(s, b)| (s, linalg::hermitian_part(&b))).collect()
    };
    let trace = |b: &BTreeMap<SiteId, CMat>| b.values().map(linalg::trace_re).sum::<f64>();
    let norm = |b: &BTreeMap<SiteId, CMat>| b.values().map(|x| x.norm_squared()).sum::<f64>().sqrt();

    let mut candidates = Vec::new();
    for k in 0..fixed.dim {
        let v = fixed.basis.column(k).into_owned();
        candidates.push(hermitian(&v));
        candidates.push(hermitian(&(v * c(0.0, 1.0))));
    }
    let (anchor_idx, anchor_trace) = candidates
        .iter()
        .enumerate()
        .map(|(k, b)| (k, trace(b)))
        .max_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))
        .expect("fixed space is nonempty");
    if anchor_trace.abs() < 1e-12 {
        return Some(FixedPointOutcome::Ambiguous("fixed space carries no trace".into()));
    }
    let anchor: BTreeMap<SiteId, CMat> =
        candidates[anchor_idx].iter().map(|(&s, b)| (s, b / c(anchor_trace, 0.0))).collect();

    let state = if fixed.dim == 1 {
        anchor
    } else {
        // a traceless Hermitian fixed point; its positive part is again fixed
        // and has a proper support
        let traceless = candidates
            .iter()
            .map(|b| {
                let t = trace(b);
                b.iter().map(|(&s, x)| (s, x - &anchor[&s] * c(t, 0.0))).collect::<BTreeMap<_, _>>()
            })
            .max_by(|a, b| norm(a).total_cmp(&norm(b)))
            .expect("fixed space is nonempty");
        if norm(&traceless) < 1e-8 {
            return Some(FixedPointOutcome::Ambiguous("no traceless fixed point resolved".into()));
        }
        positive_part(&traceless)
    };

    let (family, min_eigenvalue, ambiguous) = global_support(&state, m, tol);
    if ambiguous {
        return Some(FixedPointOutcome::Ambiguous("support of the fixed state is ambiguous".into()));
    }
    if fixed.dim == 1 && min_eigenvalue > 0.0 && !family.is_trivial_zero() {
        let full = m.sites().iter().all(|s| linalg::rank(&family.p[s], 0.5).unwrap_or(0) == m.hdim());
        if full {
            return Some(FixedPointOutcome::Irreducible { min_eigenvalue, gap: fixed.gap });
        }
    }
    if family.is_trivial(m) {
        return Some(FixedPointOutcome::Ambiguous("fixed-point support is trivial".into()));
    }
    let defect = super::family_invariance_defect(m, &family, &linalg::zeros(m.hdim()));
    if defect > invariance_tol(tol) {
        return Some(FixedPointOutcome::Ambiguous(format!("fixed-point support not invariant (defect {defect:.3e})")));
    }
    Some(FixedPointOutcome::Reducible(family))
}

impl ProjectionFamily {
    fn is_trivial_zero(&self) -> bool {
        self.p.values().all(|q| q.norm() < 1e-8)
    }
}

/// Invariant-family search with the default RNG seed.
pub fn cp_irreducible(m: &OqrwModel, tol: f64, max_rounds: usize) -> Verdict {
    cp_irreducible_seeded(m, tol, max_rounds, CP_SEED)
}

/// Seeds every site with the standard basis and three random unit vectors;
/// the first proper closure is returned as a witness. Without one, finite
/// models are certified (or refuted) through their fixed space. On a lattice
/// window a closure is a witness only if it extends to the whole lattice.
pub fn cp_irreducible_seeded(m: &OqrwModel, tol: f64, max_rounds: usize, rng_seed: u64) -> Verdict {
    let mut depth_used = 0;
    let mut ambiguous = false;
    let mut truncated = false;
    let all = seeds(m, rng_seed);
    for (site, seed) in &all {
        let cl = invariant_closure(m, *site, seed, tol, max_rounds);
        depth_used = depth_used.max(cl.rank_history.len() - 1);
        ambiguous |= cl.ambiguous;
        if !cl.stabilized {
            return Verdict {
                status: Status::Inconclusive(format!("closure from site {site} did not stabilize in {max_rounds} rounds")),
                depth_used,
                tol,
            };
        }
        if !cl.is_full(m) && !cl.ambiguous {
            let fam = cl.family(m, 0);
            if m.is_finite() {
                return Verdict { status: Status::Reducible(fam), depth_used, tol };
            }
            // the window drops operators that leave it, so a closure only
            // counts once it extends to an invariant family on all of ℤ
            let outside = super::join(&fam, m.hdim(), tol);
            if super::extended_invariance_defect(m, &fam, &outside) <= invariance_tol(tol) {
                return Verdict { status: Status::Reducible(fam), depth_used, tol };
            }
            truncated = true;
        }
    }
    if m.is_finite() {
        match fixed_point_outcome(m, tol) {
            Some(FixedPointOutcome::Irreducible { min_eigenvalue, gap }) if !ambiguous => {
                return Verdict {
                    status: Status::Irreducible(Certificate::FixedPoint { seeds: all.len(), min_eigenvalue, gap }),
                    depth_used,
                    tol,
                };
            }
            Some(FixedPointOutcome::Reducible(fam)) => {
                return Verdict { status: Status::Reducible(fam), depth_used, tol };
            }
            Some(FixedPointOutcome::Ambiguous(reason)) => {
                return Verdict { status: Status::Inconclusive(reason), depth_used, tol };
            }
            _ => {}
        }
    }
    let status = if truncated {
        Status::Inconclusive("no seed closure extends beyond the lattice window".into())
    } else if ambiguous {
        Status::Inconclusive("a rank decision fell within the ambiguity band".into())
    } else {
        Status::Irreducible(Certificate::Seeds { seeds: all.len() })
    };
    Verdict { status, depth_used, tol }
}

/// Default round budget: ranks grow at least by one per round until they
/// stop, so `|sites| · hdim + 1` rounds always suffice.
pub fn default_rounds(m: &OqrwModel) -> usize {
    m.num_sites() * m.hdim() + 1
}
