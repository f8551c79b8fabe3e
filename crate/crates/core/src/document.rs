//! JSON documents for models, states and cylinder observables, plus the CSV
//! and text outputs of the command-line tool.
//!
//! Matrix entries are either plain reals or `[re, im]` pairs:
//!
//! ```json
//! {"kind": "lattice1d", "hdim": 2, "window": 12,
//!  "offsets": [{"offset": -1, "matrix": [[0, 0], [0.7071067811865476, 0.7071067811865476]]},
//!              {"offset":  1, "matrix": [[0, 0], [[-0.7071067811865476, 0], 0.7071067811865476]]}]}
//! ```

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::{self, Write};

use nalgebra::DMatrix;
use serde::Deserialize;
use serde_json::{json, Value};
use thiserror::Error;

use crate::evolution::{self, BlockState, EvolutionError, Trajectory};
use crate::linalg::{self, c, CMat};
use crate::model::{ModelError, ModelKind, OqrwModel, SiteId};
use crate::qmc::{BlockObservable, CylinderObservable};
use crate::reducibility::{AnalysisReport, Certificate, ProjectionFamily, ReducingCheck, Status};

#[derive(Debug, Error)]
pub enum DocumentError {
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse { line: usize, column: usize, message: String },
    #[error("schema error: {message}")]
    Schema { missing: Vec<String>, message: String },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Evolution(#[from] EvolutionError),
}

pub type Result<T> = std::result::Result<T, DocumentError>;

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum Entry {
    Real(f64),
    Complex([f64; 2]),
}

type RawMatrix = Vec<Vec<Entry>>;

#[derive(Debug, Deserialize)]
struct RawOp {
    from: i64,
    to: i64,
    matrix: RawMatrix,
}

#[derive(Debug, Deserialize)]
struct RawOffset {
    offset: i64,
    matrix: RawMatrix,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawModel {
    kind: Option<String>,
    hdim: Option<usize>,
    sites: Option<Vec<i64>>,
    ops: Option<Vec<RawOp>>,
    offsets: Option<Vec<RawOffset>>,
    window: Option<i64>,
    #[serde(rename = "P")]
    p: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Deserialize)]
struct RawBlock {
    site: i64,
    matrix: RawMatrix,
}

#[derive(Debug, Deserialize)]
struct RawState {
    blocks: Vec<RawBlock>,
}

#[derive(Debug, Deserialize)]
struct RawCylinder {
    factors: Vec<Vec<RawBlock>>,
}

fn from_json<T: for<'de> Deserialize<'de>>(text: &str) -> Result<T> {
    serde_json::from_str(text).map_err(|e| {
        if e.is_data() {
            DocumentError::Schema { missing: missing_field(&e.to_string()), message: e.to_string() }
        } else {
            DocumentError::Parse { line: e.line(), column: e.column(), message: e.to_string() }
        }
    })
}

fn missing_field(message: &str) -> Vec<String> {
    message
        .strip_prefix("missing field `")
        .and_then(|rest| rest.split('`').next())
        .map(|f| vec![f.to_string()])
        .unwrap_or_default()
}

fn schema(missing: Vec<&str>, what: &str) -> DocumentError {
    let missing: Vec<String> = missing.into_iter().map(String::from).collect();
    DocumentError::Schema { message: format!("{what}: missing {}", missing.join(", ")), missing }
}

fn matrix(raw: &RawMatrix, what: &str) -> Result<CMat> {
    let rows = raw.len();
    let cols = raw.first().map_or(0, |r| r.len());
    if rows == 0 || raw.iter().any(|r| r.len() != cols) {
        return Err(DocumentError::Schema { missing: vec![], message: format!("{what}: matrix rows are ragged or empty") });
    }
    Ok(CMat::from_fn(rows, cols, |r, k| match raw[r][k] {
        Entry::Real(x) => c(x, 0.0),
        Entry::Complex([re, im]) => c(re, im),
    }))
}

pub fn load_model(text: &str) -> Result<OqrwModel> {
    let raw: RawModel = from_json(text)?;
    let Some(kind) = raw.kind.as_deref() else {
        return Err(schema(vec!["kind"], "model"));
    };
    match kind {
        "explicit" => {
            let mut missing = vec![];
            if raw.hdim.is_none() {
                missing.push("hdim");
            }
            if raw.sites.is_none() {
                missing.push("sites");
            }
            if raw.ops.as_ref().is_none_or(|o| o.is_empty()) {
                missing.push("ops");
            }
            if !missing.is_empty() {
                return Err(schema(missing, "explicit model"));
            }
            let ops = raw
                .ops
                .unwrap_or_default()
                .iter()
                .map(|op| Ok((SiteId(op.from), SiteId(op.to), matrix(&op.matrix, "ops")?)))
                .collect::<Result<Vec<_>>>()?;
            Ok(OqrwModel::explicit(
                raw.hdim.unwrap_or_default(),
                raw.sites.unwrap_or_default().into_iter().map(SiteId),
                ops,
            )?)
        }
        "lattice1d" => {
            let mut missing = vec![];
            if raw.hdim.is_none() {
                missing.push("hdim");
            }
            if raw.offsets.as_ref().is_none_or(|o| o.is_empty()) {
                missing.push("offsets");
            }
            if raw.window.is_none() {
                missing.push("window");
            }
            if !missing.is_empty() {
                return Err(schema(missing, "lattice1d model"));
            }
            let offsets = raw
                .offsets
                .unwrap_or_default()
                .iter()
                .map(|o| Ok((o.offset, matrix(&o.matrix, "offsets")?)))
                .collect::<Result<Vec<_>>>()?;
            Ok(OqrwModel::lattice1d(raw.hdim.unwrap_or_default(), offsets, raw.window.unwrap_or_default())?)
        }
        "classical" => {
            let Some(rows) = raw.p.filter(|p| !p.is_empty()) else {
                return Err(schema(vec!["P"], "classical model"));
            };
            let n = rows.len();
            if rows.iter().any(|r| r.len() != n) {
                return Err(DocumentError::Model(ModelError::NotStochastic(format!("P must be square, got {n} rows"))));
            }
            let p = DMatrix::from_fn(n, n, |i, j| rows[i][j]);
            Ok(evolution::classical_embed(&p)?)
        }
        other => Err(DocumentError::Schema {
            missing: vec![],
            message: format!("unknown model kind {other:?} (expected explicit, lattice1d or classical)"),
        }),
    }
}

fn blocks(raw: &[RawBlock], what: &str) -> Result<BTreeMap<SiteId, CMat>> {
    let mut out = BTreeMap::new();
    for b in raw {
        if out.insert(SiteId(b.site), matrix(&b.matrix, what)?).is_some() {
            return Err(DocumentError::Schema { missing: vec![], message: format!("{what}: site {} listed twice", b.site) });
        }
    }
    Ok(out)
}

pub fn load_state(text: &str) -> Result<BlockState> {
    let raw: RawState = from_json(text)?;
    Ok(BlockState::new(blocks(&raw.blocks, "state")?, linalg::DEFAULT_TOL)?)
}

/// Each factor lists its blocks; unlisted sites carry the identity, so an
/// empty factor is `I`.
pub fn load_cylinder(text: &str) -> Result<CylinderObservable> {
    let raw: RawCylinder = from_json(text)?;
    let factors = raw
        .factors
        .iter()
        .map(|f| Ok(BlockObservable::new(blocks(f, "cylinder")?, true)))
        .collect::<Result<Vec<_>>>()?;
    CylinderObservable::new(factors)
        .map_err(|_| DocumentError::Schema { missing: vec!["factors".into()], message: "cylinder has no factors".into() })
}

/// Entries as `[re, im]`, or plain numbers when the imaginary part is zero.
pub fn matrix_json(a: &CMat) -> Value {
    Value::Array(
        a.row_iter()
            .map(|row| {
                Value::Array(row.iter().map(|z| if z.im == 0.0 { json!(z.re) } else { json!([z.re, z.im]) }).collect())
            })
            .collect(),
    )
}

pub fn model_json(m: &OqrwModel) -> Value {
    match (m.kind(), m.lattice_rule(), m.stochastic_matrix()) {
        (ModelKind::Lattice1d, Some(rule), _) => json!({
            "kind": "lattice1d",
            "hdim": m.hdim(),
            "window": rule.window,
            "offsets": rule.offsets.iter().map(|(o, b)| json!({"offset": o, "matrix": matrix_json(b)})).collect::<Vec<_>>(),
        }),
        (ModelKind::Classical, _, Some(p)) => json!({
            "kind": "classical",
            "P": p.row_iter().map(|r| r.iter().copied().collect::<Vec<f64>>()).collect::<Vec<_>>(),
        }),
        _ => json!({
            "kind": "explicit",
            "hdim": m.hdim(),
            "sites": m.sites().iter().map(|s| s.0).collect::<Vec<_>>(),
            "ops": m.operators().map(|(f, t, b)| json!({"from": f.0, "to": t.0, "matrix": matrix_json(b)})).collect::<Vec<_>>(),
        }),
    }
}

pub fn state_json(s: &BlockState) -> Value {
    json!({
        "blocks": s.blocks().iter().map(|(site, b)| json!({"site": site.0, "matrix": matrix_json(b)})).collect::<Vec<_>>(),
    })
}

pub fn cylinder_json(a: &CylinderObservable) -> Value {
    json!({
        "factors": a.factors().iter().map(|f| {
            f.blocks().iter().map(|(site, b)| json!({"site": site.0, "matrix": matrix_json(b)})).collect::<Vec<_>>()
        }).collect::<Vec<_>>(),
    })
}

pub fn to_pretty(v: &Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("JSON values always serialize");
    s.push('\n');
    s
}

/// `step,site,probability` with round-trippable doubles.
pub fn write_distribution_csv<W: Write + ?Sized>(traj: &Trajectory, out: &mut W) -> io::Result<()> {
    writeln!(out, "step,site,probability")?;
    for (n, state) in traj.states().iter().enumerate() {
        for (site, p) in evolution::site_distribution(state) {
            writeln!(out, "{n},{site},{p:.16e}")?;
        }
    }
    Ok(())
}

pub fn write_support_ranks_csv<W: Write + ?Sized>(ranks: &[BTreeMap<SiteId, usize>], out: &mut W) -> io::Result<()> {
    writeln!(out, "step,site,rank")?;
    for (n, row) in ranks.iter().enumerate() {
        for (site, r) in row {
            writeln!(out, "{n},{site},{r}")?;
        }
    }
    Ok(())
}

fn family_text(out: &mut String, fam: &ProjectionFamily) {
    let _ = writeln!(out, "  n0: {}", fam.n0);
    // runs of consecutive sites carrying the same projection share a line
    let mut runs: Vec<(SiteId, SiteId, CMat)> = Vec::new();
    for (&site, q) in &fam.p {
        let q = rounded(q);
        match runs.last_mut() {
            Some((_, last, prev)) if last.0 + 1 == site.0 && *prev == q => *last = site,
            _ => runs.push((site, site, q)),
        }
    }
    for (first, last, q) in runs {
        let label = if first == last { first.to_string() } else { format!("{first}..{last}") };
        let _ = writeln!(out, "  p({label}) = {}", matrix_json(&q));
    }
    if fam.p.is_empty() {
        let _ = writeln!(out, "  p(j) = I for every site");
    }
}

/// Entries rounded to 12 decimals so that reports are stable across
/// platforms.
fn rounded(a: &CMat) -> CMat {
    let r = |x: f64| {
        let y = (x * 1e12).round() / 1e12;
        if y == 0.0 { 0.0 } else { y }
    };
    a.map(|z| c(r(z.re), r(z.im)))
}

fn check_text(out: &mut String, name: &str, check: &ReducingCheck) {
    let _ = writeln!(
        out,
        "{name}: verified={} support_residual={:.3e} functional_residual={:.3e} consistent={}",
        check.verified(),
        check.support_residual,
        check.functional_residual,
        check.consistent
    );
}

fn status_text(status: &Status) -> String {
    match status {
        Status::Reducible(_) => "Reducible".into(),
        Status::Irreducible(Certificate::Seeds { seeds }) => format!("Irreducible (all {seeds} seeds generate the full family)"),
        Status::Irreducible(Certificate::FixedPoint { seeds, min_eigenvalue, gap }) => format!(
            "Irreducible (unique faithful invariant state, min eigenvalue {min_eigenvalue:.3e}, gap {}; {seeds} seeds)",
            gap.map_or("n/a".to_string(), |g| format!("{g:.3e}"))
        ),
        Status::Irreducible(Certificate::Faithful { depth }) => format!("Irreducible (faithful blocks up to step {depth})"),
        Status::Inconclusive(why) => format!("Inconclusive ({why})"),
    }
}

/// Deterministic text rendering of an analysis.
pub fn analysis_report_text(r: &AnalysisReport) -> String {
    let mut out = String::new();
    let cfg = &r.config;
    let _ = writeln!(out, "verdict: {}", status_text(&r.verdict.status));
    let _ = writeln!(
        out,
        "depth: {}  n0: {}  horizon: {}  steps: {}  tol: {:e}  seed: {:#x}",
        cfg.depth, cfg.n0, cfg.horizon, r.steps, cfg.tol, cfg.seed
    );
    if let Some(w) = r.window {
        let _ = writeln!(out, "window: [-{w}, {w}]");
    }
    if let Status::Reducible(fam) = &r.verdict.status {
        let _ = writeln!(out, "witness:");
        family_text(&mut out, fam);
    }
    let _ = writeln!(out, "criteria:");
    match &r.common_range {
        Some(h) => {
            let _ = writeln!(out, "common_range: h = {}", matrix_json(&rounded(h)));
        }
        None => {
            let _ = writeln!(out, "common_range: none");
        }
    }
    if let Some(c) = &r.common_range_check {
        check_text(&mut out, "common_range_check", c);
    }
    match &r.support_witness {
        Some(fam) => {
            let _ = writeln!(
                out,
                "support_witness: present certified={} invariance_defect={:.3e} stabilized={}",
                r.witness_certified,
                r.witness_invariance_defect.unwrap_or(f64::NAN),
                r.supports_stabilized
            );
            family_text(&mut out, fam);
        }
        None => {
            let _ = writeln!(out, "support_witness: none stabilized={}", r.supports_stabilized);
        }
    }
    if let Some(c) = &r.witness_check {
        check_text(&mut out, "witness_check", c);
    }
    let _ = writeln!(out, "faithfulness_certificate: {}", r.faithful);
    let _ = writeln!(out, "invariant_family_search: {} (rounds {})", status_text(&r.cp.status), r.cp.depth_used);
    if let Status::Reducible(fam) = &r.cp.status {
        family_text(&mut out, fam);
    }
    if let Some(c) = &r.cp_check {
        check_text(&mut out, "invariant_family_check", c);
    }
    if let Some(cls) = &r.classical {
        let _ = writeln!(out, "classes: irreducible={}", cls.irreducible);
        let _ = writeln!(out, "  class,states,closed");
        for (k, (states, closed)) in cls.classes.iter().zip(&cls.closed).enumerate() {
            let list: Vec<String> = states.iter().map(|s| s.to_string()).collect();
            let _ = writeln!(out, "  {k},{},{closed}", list.join(" "));
        }
    }
    if !r.disagreements.is_empty() {
        let _ = writeln!(out, "disagreements:");
        for d in &r.disagreements {
            let _ = writeln!(out, "  {d}");
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    #[test]
    fn model_roundtrip_for_every_kind() {
        for m in [
            fixtures::rank_one_walk(5),
            fixtures::unitary_column_ring(3, 0.2),
            evolution::classical_embed(&fixtures::transient_into_closed()).unwrap(),
        ] {
            let back = load_model(&to_pretty(&model_json(&m))).unwrap();
            assert_eq!(back.kind(), m.kind());
            assert_eq!(back.sites(), m.sites());
            for (f, t, b) in m.operators() {
                assert!((back.operator(f, t).unwrap() - b).norm() < 1e-15);
            }
        }
    }

    #[test]
    fn classical_document_has_scalar_internal_space() {
        let m = load_model(r#"{"kind":"classical","P":[[0.5,0.5,0],[0,1,0],[0.2,0.3,0.5]]}"#).unwrap();
        assert_eq!(m.hdim(), 1);
        assert_eq!(m.num_sites(), 3);
    }

    #[test]
    fn empty_operator_list_is_a_schema_error() {
        let err = load_model(r#"{"kind":"explicit","hdim":2,"sites":[0],"ops":[]}"#).unwrap_err();
        let DocumentError::Schema { missing, .. } = err else { panic!("{err:?}") };
        assert_eq!(missing, vec!["ops".to_string()]);
    }

    #[test]
    fn missing_fields_are_listed() {
        let err = load_model(r#"{"kind":"lattice1d"}"#).unwrap_err();
        let DocumentError::Schema { missing, .. } = err else { panic!("{err:?}") };
        assert_eq!(missing, vec!["hdim", "offsets", "window"]);
    }

    #[test]
    fn syntax_errors_carry_location() {
        let err = load_model("{\n  \"kind\": \"explicit\",\n  \"hdim\": 2,,\n}").unwrap_err();
        let DocumentError::Parse { line, .. } = err else { panic!("{err:?}") };
        assert_eq!(line, 3);
    }

    #[test]
    fn complex_entries_parse() {
        let s = load_state(r#"{"blocks":[{"site":0,"matrix":[[0.5,[0,0.25]],[[0,-0.25],0.5]]}]}"#).unwrap();
        assert_eq!(s.block(SiteId(0)).unwrap()[(0, 1)], c(0.0, 0.25));
    }

    #[test]
    fn cylinder_factors_default_to_identity() {
        let a = load_cylinder(r#"{"factors":[[],[{"site":1,"matrix":[[1,0],[0,0]]}]]}"#).unwrap();
        assert_eq!(a.depth(), 1);
        assert!(a.factors()[0].identity_tail() && a.factors()[0].blocks().is_empty());
        assert!(load_cylinder(r#"{"factors":[]}"#).is_err());
    }
}
