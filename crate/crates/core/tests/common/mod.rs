//! Independent reference computations and random model generators shared by
//! the integration tests. Nothing here calls the routines under test except
//! for plumbing (constructors, accessors).

#![allow(dead_code)]

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use oqrw::evolution::BlockState;
use oqrw::linalg::{c, CMat, C64};
use oqrw::{OqrwModel, SiteId};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub type Blocks = BTreeMap<i64, CMat>;

/// Pruning threshold shared with the library: blocks of smaller trace are
/// treated as absent.
pub const PRUNE: f64 = 1e-14;

pub fn rng(seed: u64) -> ChaCha8Rng {
    rand::SeedableRng::seed_from_u64(seed)
}

pub fn random_complex(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> CMat {
    CMat::from_fn(rows, cols, |_, _| c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
}

pub fn random_hermitian(rng: &mut ChaCha8Rng, h: usize) -> CMat {
    let g = random_complex(rng, h, h);
    (&g + g.adjoint()) * c(0.5, 0.0)
}

pub fn random_density(rng: &mut ChaCha8Rng, h: usize) -> CMat {
    let g = random_complex(rng, h, h);
    let rho = &g * g.adjoint();
    let t = rho.trace();
    rho / t
}

fn inner(a: &CMat, b: &CMat) -> C64 {
    (a.adjoint() * b)[(0, 0)]
}

/// Modified Gram–Schmidt; columns that collapse are redrawn from `rng`
/// inside the span of `mask` (rows allowed to be nonzero).
fn orthonormalize_into(
    rng: &mut ChaCha8Rng,
    basis: &mut Vec<CMat>,
    rows: usize,
    mask: &[bool],
    count: usize,
) {
    let mut added = 0;
    while added < count {
        let mut v = random_complex(rng, rows, 1);
        for (r, allowed) in mask.iter().enumerate() {
            if !allowed {
                v[(r, 0)] = c(0.0, 0.0);
            }
        }
        for q in basis.iter() {
            let proj = inner(q, &v);
            v -= q * proj;
        }
        let norm = v.norm();
        if norm > 1e-3 {
            basis.push(v / c(norm, 0.0));
            added += 1;
        }
    }
}

/// Random isometry `rows × cols`.
pub fn random_isometry(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> CMat {
    let mut basis = Vec::new();
    orthonormalize_into(rng, &mut basis, rows, &vec![true; rows], cols);
    CMat::from_columns(&basis.iter().map(|q| q.column(0).into_owned()).collect::<Vec<_>>())
}

pub fn random_unitary(rng: &mut ChaCha8Rng, h: usize) -> CMat {
    random_isometry(rng, h, h)
}

/// Splits a stacked isometry into one `h × h` operator per target.
fn split_rows(w: &CMat, h: usize, targets: &[i64], from: i64) -> Vec<(SiteId, SiteId, CMat)> {
    targets
        .iter()
        .enumerate()
        .map(|(k, &t)| (SiteId(from), SiteId(t), w.rows(k * h, h).into_owned()))
        .collect()
}

fn random_targets(rng: &mut ChaCha8Rng, sites: usize, density: f64, must: Option<i64>) -> Vec<i64> {
    let mut t: Vec<i64> = (0..sites as i64).filter(|_| rng.random_bool(density)).collect();
    if let Some(s) = must {
        if !t.contains(&s) {
            t.push(s);
            t.sort();
        }
    }
    if t.is_empty() {
        t.push(rng.random_range(0..sites as i64));
    }
    t
}

/// Normalized finite walk: each site's outgoing operators stacked form a
/// random isometry, so `Σ_i B^i_j* B^i_j = I` exactly.
pub fn random_model(rng: &mut ChaCha8Rng, sites: usize, h: usize, density: f64) -> OqrwModel {
    let mut ops = Vec::new();
    for j in 0..sites as i64 {
        let targets = random_targets(rng, sites, density, None);
        let w = random_isometry(rng, h * targets.len(), h);
        ops.extend(split_rows(&w, h, &targets, j));
    }
    OqrwModel::explicit(h, (0..sites as i64).map(SiteId), ops).expect("valid random model")
}

/// Walk with a planted proper invariant family `V_j = U_j span(e_1..e_{d_j})`.
/// Returns the model and the planted dimensions.
pub fn planted_reducible(rng: &mut ChaCha8Rng, sites: usize, h: usize) -> (OqrwModel, Vec<usize>) {
    assert!(h >= 2 || sites >= 2);
    let mut dims: Vec<usize> = (0..sites).map(|_| rng.random_range(0..=h)).collect();
    if dims.iter().all(|&d| d == 0) || dims.iter().all(|&d| d == h) {
        if h >= 2 {
            dims[0] = rng.random_range(1..h);
        } else {
            dims[0] = 1;
            dims[1] = 0;
        }
    }
    let frames: Vec<CMat> = (0..sites).map(|_| random_unitary(rng, h)).collect();
    let mut ops = Vec::new();
    for j in 0..sites {
        let targets = random_targets(rng, sites, 0.6, Some(j as i64));
        let rows = h * targets.len();
        // rows of the stacked operator that land inside the V_i
        let mask: Vec<bool> = (0..rows).map(|r| r % h < dims[targets[r / h] as usize]).collect();
        let mut basis = Vec::new();
        orthonormalize_into(rng, &mut basis, rows, &mask, dims[j]);
        orthonormalize_into(rng, &mut basis, rows, &vec![true; rows], h - dims[j]);
        let w = CMat::from_columns(&basis.iter().map(|q| q.column(0).into_owned()).collect::<Vec<_>>());
        for (k, &t) in targets.iter().enumerate() {
            let block = w.rows(k * h, h).into_owned();
            let b = &frames[t as usize] * block * frames[j].adjoint();
            ops.push((SiteId(j as i64), SiteId(t), b));
        }
    }
    let m = OqrwModel::explicit(h, (0..sites as i64).map(SiteId), ops).expect("valid planted model");
    (m, dims)
}

pub fn random_stochastic(rng: &mut ChaCha8Rng, n: usize, zero_prob: f64) -> DMatrix<f64> {
    let mut p = DMatrix::zeros(n, n);
    for i in 0..n {
        let mut row: Vec<f64> =
            (0..n).map(|_| if rng.random_bool(zero_prob) { 0.0 } else { rng.random_range(0.05..1.0) }).collect();
        if row.iter().all(|&x| x == 0.0) {
            row[rng.random_range(0..n)] = 1.0;
        }
        let s: f64 = row.iter().sum();
        for (j, x) in row.into_iter().enumerate() {
            p[(i, j)] = x / s;
        }
    }
    p
}

/// All operators of a model, keyed `(from, to)`.
pub fn operator_table(m: &OqrwModel) -> BTreeMap<(i64, i64), CMat> {
    m.operators().map(|(f, t, b)| ((f.0, t.0), b.clone())).collect()
}

/// `ρ'_i = Σ_j B^i_j ρ_j B^i_j*`, pruned.
pub fn reference_step(ops: &BTreeMap<(i64, i64), CMat>, rho: &Blocks, h: usize) -> Blocks {
    let mut out: Blocks = BTreeMap::new();
    for (&(from, to), b) in ops {
        if let Some(r) = rho.get(&from) {
            *out.entry(to).or_insert_with(|| CMat::zeros(h, h)) += b * r * b.adjoint();
        }
    }
    out.retain(|_, r| r.trace().re >= PRUNE);
    out
}

pub fn reference_trajectory(m: &OqrwModel, rho0: &Blocks, steps: usize) -> Vec<Blocks> {
    let ops = operator_table(m);
    let mut states = vec![rho0.clone()];
    for _ in 0..steps {
        let next = reference_step(&ops, states.last().unwrap(), m.hdim());
        states.push(next);
    }
    states
}

pub fn blocks_of(s: &BlockState) -> Blocks {
    s.blocks().iter().map(|(k, v)| (k.0, v.clone())).collect()
}

pub fn state_of(b: &Blocks) -> BlockState {
    BlockState::from_blocks_unchecked(b.iter().map(|(&k, v)| (SiteId(k), v.clone())).collect())
}

pub fn max_entry(a: &CMat) -> f64 {
    a.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Entrywise distance between two block families, missing blocks read as 0.
pub fn blocks_distance(a: &Blocks, b: &Blocks, h: usize) -> f64 {
    let zero = CMat::zeros(h, h);
    a.keys()
        .chain(b.keys())
        .map(|k| max_entry(&(a.get(k).unwrap_or(&zero) - b.get(k).unwrap_or(&zero))))
        .fold(0.0, f64::max)
}

fn weight(rho: &CMat, x: Option<&CMat>) -> C64 {
    match x {
        Some(x) => (rho * x).trace() / rho.trace(),
        None => c(0.0, 0.0),
    }
}

/// `E_{0]}(a)` by summing over every path `j_0 → ⋯ → j_D`, `D = n + horizon`:
/// `Σ_π Π_{k≤n} w_k(j_k) · B_π* B_π`, with `w_k(j) = Tr(ρ⁽ᵏ⁾_j a_k(j)) / Tr ρ⁽ᵏ⁾_j`,
/// every vertex required to lie in the support of the state at its time.
/// Factors map sites to blocks; absent sites carry `0`.
pub fn e0_brute_force(m: &OqrwModel, states: &[Blocks], factors: &[Blocks], horizon: usize) -> Blocks {
    let ops = operator_table(m);
    let h = m.hdim();
    let n = factors.len() - 1;
    let depth = n + horizon;
    assert!(states.len() > depth);
    let mut out = Blocks::new();
    for (&j0, rho) in &states[0] {
        let w0 = weight(rho, factors[0].get(&j0));
        let mut acc = CMat::zeros(h, h);
        walk_paths(&ops, states, factors, depth, 0, j0, w0, CMat::identity(h, h), &mut acc);
        out.insert(j0, acc);
    }
    out
}

#[allow(clippy::too_many_arguments)]
fn walk_paths(
    ops: &BTreeMap<(i64, i64), CMat>,
    states: &[Blocks],
    factors: &[Blocks],
    depth: usize,
    t: usize,
    j: i64,
    w: C64,
    path_op: CMat,
    acc: &mut CMat,
) {
    if t == depth {
        *acc += path_op.adjoint() * &path_op * w;
        return;
    }
    for (&(from, to), b) in ops.range((j, i64::MIN)..=(j, i64::MAX)) {
        debug_assert_eq!(from, j);
        let Some(rho) = states[t + 1].get(&to) else { continue };
        let w_next = if t + 1 < factors.len() { w * weight(rho, factors[t + 1].get(&to)) } else { w };
        walk_paths(ops, states, factors, depth, t + 1, to, w_next, b * &path_op, acc);
    }
}

/// `b̄(from, j)` seeded with `I` at time `depth`, by path enumeration.
pub fn bbar_brute_force(m: &OqrwModel, states: &[Blocks], from: usize, depth: usize) -> Blocks {
    let ops = operator_table(m);
    let h = m.hdim();
    let mut out = Blocks::new();
    for &j in states[from].keys() {
        let mut acc = CMat::zeros(h, h);
        walk_paths(&ops, &states[from..], &[], depth - from, 0, j, c(1.0, 0.0), CMat::identity(h, h), &mut acc);
        out.insert(j, acc);
    }
    out
}

/// `E⁽ⁿ⁾(x ⊗ y) = Tr₂ Σ_ij K_ij (Y ⊗ X) K_ij*` with dense `K_ij` built by hand:
/// `K_ij = (B^i_j ⊗ |i⟩⟨j|)* ⊗ (A_j ⊗ |i⟩⟨j|)`, `A_j = (ρ_j / Tr ρ_j)^{1/2}`.
/// Returns the diagonal blocks of the result.
pub fn kraus_oracle(m: &OqrwModel, rho: &Blocks, x: &Blocks, y: &Blocks) -> Blocks {
    let h = m.hdim();
    let sites: Vec<i64> = m.sites().iter().map(|s| s.0).collect();
    let ns = sites.len();
    let d = h * ns;
    let pos = |s: i64| sites.iter().position(|&t| t == s).unwrap();
    let unit = |i: i64, j: i64| {
        let mut e = CMat::zeros(ns, ns);
        e[(pos(i), pos(j))] = c(1.0, 0.0);
        e
    };
    let dense = |blocks: &Blocks| {
        let mut out = CMat::zeros(d, d);
        for (&s, b) in blocks {
            out += b.kronecker(&unit(s, s));
        }
        out
    };
    let big_x = dense(x);
    let big_y = dense(y);
    let inner_op = big_y.kronecker(&big_x);
    let mut total = CMat::zeros(d * d, d * d);
    for ((from, to), b) in operator_table(m) {
        let Some(r) = rho.get(&from) else { continue };
        let a = sqrt_psd(&(r / r.trace()));
        let k = b.kronecker(&unit(to, from)).adjoint().kronecker(&a.kronecker(&unit(to, from)));
        total += &k * &inner_op * k.adjoint();
    }
    // partial trace over the second factor
    let mut reduced = CMat::zeros(d, d);
    for r in 0..d {
        for col in 0..d {
            let mut s = c(0.0, 0.0);
            for k in 0..d {
                s += total[(r * d + k, col * d + k)];
            }
            reduced[(r, col)] = s;
        }
    }
    // `b ⊗ |s⟩⟨s|` puts entry (r, c) of b at (r·ns + s, c·ns + s)
    sites
        .iter()
        .map(|&s| (s, CMat::from_fn(h, h, |r, col| reduced[(r * ns + pos(s), col * ns + pos(s))])))
        .filter(|(_, b)| max_entry(b) > 0.0)
        .collect()
}

/// Square root through the real symmetric embedding `[[Re, -Im], [Im, Re]]`.
fn sqrt_psd(a: &CMat) -> CMat {
    let h = a.nrows();
    let mut real = DMatrix::<f64>::zeros(2 * h, 2 * h);
    for r in 0..h {
        for col in 0..h {
            let z = a[(r, col)];
            real[(r, col)] = z.re;
            real[(r + h, col + h)] = z.re;
            real[(r, col + h)] = -z.im;
            real[(r + h, col)] = z.im;
        }
    }
    let eig = nalgebra::SymmetricEigen::new(real);
    let root = &eig.eigenvectors
        * DMatrix::from_diagonal(&eig.eigenvalues.map(|l| l.max(0.0).sqrt()))
        * eig.eigenvectors.transpose();
    CMat::from_fn(h, h, |r, col| c(root[(r, col)], root[(r + h, col)]))
}

/// Invariant state by least squares on `[S − I; trace] v = [0; 1]`, with
/// `S` assembled entry by entry from the operators (real and imaginary
/// parts split). Returns the state and the residual of the linear system.
pub fn least_squares_invariant(m: &OqrwModel) -> (Blocks, f64) {
    let h = m.hdim();
    let sites: Vec<i64> = m.sites().iter().map(|s| s.0).collect();
    let ns = sites.len();
    let n = ns * h * h;
    let pos = |s: i64| sites.iter().position(|&t| t == s).unwrap();
    let idx = |s: usize, r: usize, col: usize| s * h * h + r * h + col;
    let mut s_op = CMat::zeros(n, n);
    for ((from, to), b) in operator_table(m) {
        let (f, t) = (pos(from), pos(to));
        // (B ρ B*)_{rc} = Σ_{kl} B_rk ρ_kl conj(B_cl)
        for r in 0..h {
            for col in 0..h {
                for k in 0..h {
                    for l in 0..h {
                        s_op[(idx(t, r, col), idx(f, k, l))] += b[(r, k)] * b[(col, l)].conj();
                    }
                }
            }
        }
    }
    let mut a = CMat::zeros(n + 1, n);
    a.rows_mut(0, n).copy_from(&(s_op - CMat::identity(n, n)));
    for s in 0..ns {
        for r in 0..h {
            a[(n, idx(s, r, r))] = c(1.0, 0.0);
        }
    }
    let mut rhs = DVector::<C64>::zeros(n + 1);
    rhs[n] = c(1.0, 0.0);
    let svd = a.clone().svd(true, true);
    let v = svd.solve(&rhs, 1e-12).expect("svd solve");
    let residual = (&a * &v - &rhs).norm();
    let mut out = Blocks::new();
    for (s, &site) in sites.iter().enumerate() {
        let block = CMat::from_fn(h, h, |r, col| v[idx(s, r, col)]);
        let herm = (&block + block.adjoint()) * c(0.5, 0.0);
        if herm.trace().re.abs() >= PRUNE {
            out.insert(site, herm);
        }
    }
    (out, residual)
}

/// Dense `ρ⁰ Pⁿ`.
pub fn classical_reference(p: &DMatrix<f64>, start: &[f64], steps: usize) -> Vec<Vec<f64>> {
    let mut row = nalgebra::RowDVector::from_row_slice(start);
    let mut out = vec![row.iter().copied().collect()];
    for _ in 0..steps {
        row = &row * p;
        out.push(row.iter().copied().collect());
    }
    out
}

/// Initial state compatible with an invariant-family verdict: the normalized
/// projection onto the first nonzero `V_j` when a family is given, the
/// maximally mixed state over all sites otherwise.
pub fn compatible_state(m: &OqrwModel, family: Option<&oqrw::reducibility::ProjectionFamily>) -> BlockState {
    let h = m.hdim();
    match family {
        Some(fam) => {
            let (site, q) = fam
                .p
                .iter()
                .find(|(_, q)| q.trace().re > 0.5)
                .expect("a proper family has a nonzero block");
            let t = q.trace();
            BlockState::localized(*site, q / t).expect("normalized projection")
        }
        None => {
            let w = 1.0 / (h * m.num_sites()) as f64;
            BlockState::new(m.sites().iter().map(|&s| (s, CMat::identity(h, h) * c(w, 0.0))), 1e-10)
                .expect("maximally mixed state")
        }
    }
}

/// Support-witness route from a given start: `Some(family)` when the
/// accumulated supports from time 1 on give a nontrivial family that is
/// closed under the walk and passes both reducing checks.
pub fn witness_procedure(
    m: &OqrwModel,
    rho0: &BlockState,
    tol: f64,
) -> Option<oqrw::reducibility::ProjectionFamily> {
    use oqrw::reducibility::{accumulated_support, family_invariance_defect, support_witness, verify_reducing};
    let h = m.hdim();
    let depth = 2 + m.num_sites() * h;
    let horizon = 10;
    let traj = oqrw::trajectory(m, rho0, depth + horizon).ok()?;
    let fam = support_witness(&traj, 1, tol)?;
    let stabilized = accumulated_support(&traj, 1, tol).ok()?.stabilized;
    let default = if stabilized { CMat::zeros(h, h) } else { CMat::identity(h, h) };
    let closed = family_invariance_defect(m, &fam, &default) <= 1e-9;
    let check = verify_reducing(&traj, &fam, depth, horizon, tol).ok()?;
    (closed && check.verified()).then_some(fam)
}
