//! The `oqrw` command-line tool.
//!
//! Exit codes: `0` success (an `Inconclusive` verdict included), `1`
//! validation failure, `2` unreadable input or bad arguments, `3`
//! contradicting criteria.

use std::ffi::OsString;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use log::info;

use crate::document::{self, DocumentError};
use crate::evolution::{self, BlockState, EvolutionError};
use crate::linalg::DEFAULT_TOL;
use crate::model::{validate_model, ModelError, OqrwModel, SiteStatus};
use crate::qmc::{self, DEFAULT_HORIZON};
use crate::reducibility::{self, AnalyzeConfig, ReducibilityError, CP_SEED};

pub const EXIT_OK: i32 = 0;
pub const EXIT_VALIDATION: i32 = 1;
pub const EXIT_PARSE: i32 = 2;
pub const EXIT_INCONSISTENT: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "oqrw", version, about = "Open quantum random walks and their quantum Markov chains")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Evolve a state and write the site distribution per step.
    Evolve(EvolveArgs),
    /// Evaluate the chain functional on a cylinder observable.
    QmcEval(QmcEvalArgs),
    /// Decide reducibility with every available criterion.
    Analyze(AnalyzeArgs),
    /// Check the normalization of a model.
    Validate(ValidateArgs),
    /// Communicating classes of a classical chain.
    Classes(ValidateArgs),
}

#[derive(Debug, Args)]
struct Common {
    /// Model document (JSON).
    #[arg(long)]
    model: PathBuf,
    /// Rank and comparison tolerance, in (0, 1e-2).
    #[arg(long, default_value_t = DEFAULT_TOL)]
    tol: f64,
}

#[derive(Debug, Args)]
struct EvolveArgs {
    #[command(flatten)]
    common: Common,
    /// Initial state document (JSON).
    #[arg(long)]
    state: PathBuf,
    #[arg(long, default_value_t = 10)]
    steps: usize,
    /// Directory for distribution.csv and final_state.json; CSV goes to
    /// stdout otherwise.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct QmcEvalArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    state: PathBuf,
    /// Cylinder document (JSON).
    #[arg(long)]
    cylinder: PathBuf,
    /// Trajectory length; defaults to cylinder depth + horizon.
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long, default_value_t = DEFAULT_HORIZON)]
    horizon: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct AnalyzeArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    state: PathBuf,
    #[arg(long, default_value_t = 10)]
    depth: usize,
    #[arg(long, default_value_t = 1)]
    n0: usize,
    #[arg(long, default_value_t = DEFAULT_HORIZON)]
    horizon: usize,
    /// Seed for the random seed vectors of the invariant-family search.
    #[arg(long, default_value = "0x5EED", value_parser = parse_seed)]
    seed: u64,
    /// Directory for report.txt and support_ranks.csv.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ValidateArgs {
    #[command(flatten)]
    common: Common,
}

fn parse_seed(s: &str) -> Result<u64, String> {
    let parsed = match s.strip_prefix("0x").or_else(|| s.strip_prefix("0X")) {
        Some(hex) => u64::from_str_radix(hex, 16),
        None => s.parse(),
    };
    parsed.map_err(|e| format!("invalid seed {s:?}: {e}"))
}

/// A failure with its exit code.
#[derive(Debug)]
struct Failure {
    code: i32,
    message: String,
}

impl Failure {
    fn new(code: i32, message: impl Into<String>) -> Self {
        Failure { code, message: message.into() }
    }
}

impl From<DocumentError> for Failure {
    fn from(e: DocumentError) -> Self {
        let code = match e {
            DocumentError::Parse { .. } | DocumentError::Schema { .. } => EXIT_PARSE,
            DocumentError::Model(_) | DocumentError::Evolution(_) => EXIT_VALIDATION,
        };
        Failure::new(code, e.to_string())
    }
}

impl From<EvolutionError> for Failure {
    fn from(e: EvolutionError) -> Self {
        Failure::new(EXIT_VALIDATION, e.to_string())
    }
}

impl From<ModelError> for Failure {
    fn from(e: ModelError) -> Self {
        Failure::new(EXIT_VALIDATION, e.to_string())
    }
}

impl From<qmc::QmcError> for Failure {
    fn from(e: qmc::QmcError) -> Self {
        Failure::new(EXIT_VALIDATION, e.to_string())
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::new(EXIT_PARSE, e.to_string())
    }
}

type CmdResult = Result<(), Failure>;

fn read(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| Failure::new(EXIT_PARSE, format!("{}: {e}", path.display())))
}

fn check_tol(tol: f64) -> CmdResult {
    if tol > 0.0 && tol < 1e-2 {
        Ok(())
    } else {
        Err(Failure::new(EXIT_PARSE, format!("--tol must lie in (0, 1e-2), got {tol}")))
    }
}

fn load_model(common: &Common) -> Result<OqrwModel, Failure> {
    check_tol(common.tol)?;
    Ok(document::load_model(&read(&common.model)?)?)
}

fn load_valid_model(common: &Common, err: &mut dyn Write) -> Result<OqrwModel, Failure> {
    let m = load_model(common)?;
    let report = validate_model(&m, common.tol);
    if !report.is_valid() {
        for d in report.failures() {
            writeln!(err, "site {}: defect {:.3e}", d.site, d.defect)?;
        }
        return Err(Failure::new(EXIT_VALIDATION, format!("model is not normalized: max defect {:.3e}", report.max_defect())));
    }
    Ok(m)
}

fn load_state(path: &Path) -> Result<BlockState, Failure> {
    Ok(document::load_state(&read(path)?)?)
}

/// Lattice windows are widened so the run never reaches the boundary.
fn widened(m: &OqrwModel, rho0: &BlockState, steps: usize) -> Result<OqrwModel, Failure> {
    let extent = rho0.blocks().keys().map(|s| s.0.abs()).max().unwrap_or(0);
    let w = m.widened_for(extent, steps)?;
    if w.window() != m.window() {
        info!("window widened from {:?} to {:?}", m.window(), w.window());
    }
    Ok(w)
}

fn out_file(dir: &Path, name: &str) -> Result<fs::File, Failure> {
    fs::create_dir_all(dir)?;
    Ok(fs::File::create(dir.join(name))?)
}

fn cmd_validate(args: &ValidateArgs, out: &mut dyn Write) -> CmdResult {
    let m = load_model(&args.common)?;
    let report = validate_model(&m, args.common.tol);
    writeln!(out, "site,defect,status")?;
    for d in &report.sites {
        let status = match d.status {
            SiteStatus::Checked if d.defect <= report.tol => "ok",
            SiteStatus::Checked => "FAIL",
            SiteStatus::Boundary => "boundary",
            SiteStatus::NoOutgoing => "no-outgoing",
        };
        writeln!(out, "{},{:.3e},{status}", d.site, d.defect)?;
    }
    writeln!(out, "valid: {}  max_defect: {:.3e}  tol: {:e}", report.is_valid(), report.max_defect(), report.tol)?;
    if report.is_valid() {
        Ok(())
    } else {
        Err(Failure::new(EXIT_VALIDATION, format!("model is not normalized: max defect {:.3e}", report.max_defect())))
    }
}

fn cmd_evolve(args: &EvolveArgs, out: &mut dyn Write, err: &mut dyn Write) -> CmdResult {
    let m = load_valid_model(&args.common, err)?;
    let rho0 = load_state(&args.state)?;
    let walk = widened(&m, &rho0, args.steps)?;
    let traj = evolution::trajectory(&walk, &rho0, args.steps)?;
    match &args.out {
        Some(dir) => {
            document::write_distribution_csv(&traj, &mut out_file(dir, "distribution.csv")?)?;
            out_file(dir, "final_state.json")?.write_all(document::to_pretty(&document::state_json(traj.last())).as_bytes())?;
            writeln!(out, "wrote {} and {}", dir.join("distribution.csv").display(), dir.join("final_state.json").display())?;
        }
        None => document::write_distribution_csv(&traj, out)?,
    }
    Ok(())
}

fn cmd_qmc_eval(args: &QmcEvalArgs, out: &mut dyn Write, err: &mut dyn Write) -> CmdResult {
    let m = load_valid_model(&args.common, err)?;
    let rho0 = load_state(&args.state)?;
    let cyl = document::load_cylinder(&read(&args.cylinder)?)?;
    let depth = cyl.depth();
    let needed = depth + args.horizon;
    let steps = args.steps.unwrap_or(needed);
    if steps < needed {
        return Err(Failure::new(
            EXIT_VALIDATION,
            format!("horizon shortfall: cylinder depth {depth} + horizon {} needs {needed} steps, got {steps}", args.horizon),
        ));
    }
    let walk = widened(&m, &rho0, steps)?;
    let traj = evolution::trajectory(&walk, &rho0, steps)?;
    let value = qmc::qmc_evaluate(&traj, &cyl, args.horizon)?;
    let mut text = String::new();
    use std::fmt::Write as _;
    let _ = writeln!(text, "value: {:.12}", value.re);
    let _ = writeln!(text, "imag: {:.3e}", value.im);
    if args.horizon > 0 {
        let fam = qmc::bbar(&traj, depth + 1, args.horizon - 1, args.common.tol)?;
        let _ = writeln!(
            text,
            "bbar: converged={} delta={:.3e} horizon={}",
            fam.converged, fam.delta, fam.horizon_used
        );
    } else {
        let _ = writeln!(text, "bbar: not used (horizon 0)");
    }
    let report = qmc::verify_markov_pair(&traj, depth, args.horizon, (args.common.tol * 10.0).max(1e-9))?;
    let _ = writeln!(text, "markov_pair: passed={} tol={:e}", report.passed(), report.tol);
    for r in &report.residuals {
        let _ = writeln!(text, "  {}: {:.3e}", r.name, r.value);
    }
    out.write_all(text.as_bytes())?;
    if let Some(dir) = &args.out {
        out_file(dir, "report.txt")?.write_all(text.as_bytes())?;
    }
    Ok(())
}

fn cmd_analyze(args: &AnalyzeArgs, out: &mut dyn Write, err: &mut dyn Write) -> CmdResult {
    let m = load_valid_model(&args.common, err)?;
    let rho0 = load_state(&args.state)?;
    let cfg = AnalyzeConfig { depth: args.depth, n0: args.n0, horizon: args.horizon, tol: args.common.tol, seed: args.seed };
    let (report, code) = match reducibility::analyze(&m, &rho0, &cfg) {
        Ok(r) => (r, EXIT_OK),
        Err(ReducibilityError::Inconsistent(r)) => (*r, EXIT_INCONSISTENT),
        Err(ReducibilityError::NotNormalized { defect }) => {
            return Err(Failure::new(EXIT_VALIDATION, format!("model is not normalized: defect {defect:.3e}")))
        }
        Err(ReducibilityError::Evolution(e)) => return Err(e.into()),
        Err(ReducibilityError::Model(e)) => return Err(e.into()),
        Err(ReducibilityError::Qmc(e)) => return Err(e.into()),
    };
    let text = document::analysis_report_text(&report);
    out.write_all(text.as_bytes())?;
    if let Some(dir) = &args.out {
        out_file(dir, "report.txt")?.write_all(text.as_bytes())?;
        document::write_support_ranks_csv(&report.support_ranks, &mut out_file(dir, "support_ranks.csv")?)?;
    }
    if code == EXIT_INCONSISTENT {
        return Err(Failure::new(code, "criteria disagree; see the report"));
    }
    Ok(())
}

fn cmd_classes(args: &ValidateArgs, out: &mut dyn Write) -> CmdResult {
    let m = load_model(&args.common)?;
    let Some(p) = m.stochastic_matrix() else {
        return Err(Failure::new(EXIT_VALIDATION, "classes needs a classical model"));
    };
    let cls = reducibility::classical_classes(p, 1e-14)?;
    let cp = reducibility::cp_irreducible_seeded(&m, args.common.tol, reducibility::cp::default_rounds(&m), CP_SEED);
    writeln!(out, "class,states,closed")?;
    for (k, (states, closed)) in cls.classes.iter().zip(&cls.closed).enumerate() {
        let list: Vec<String> = states.iter().map(|s| s.to_string()).collect();
        writeln!(out, "{k},{},{closed}", list.join(" "))?;
    }
    writeln!(out, "irreducible: {}", cls.irreducible)?;
    writeln!(out, "invariant_family_search: {}", cp.status.label())?;
    if cp.status.is_irreducible() != cls.irreducible && !matches!(cp.status, reducibility::Status::Inconclusive(_)) {
        return Err(Failure::new(EXIT_INCONSISTENT, "class decomposition and invariant-family search disagree"));
    }
    Ok(())
}

fn init_logging() {
    let env = env_logger::Env::new().filter_or("OQRW_LOG", "error");
    let _ = env_logger::Builder::from_env(env).format_timestamp(None).try_init();
}

/// Runs the tool with explicit output streams and returns the exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    init_logging();
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            if e.use_stderr() {
                let _ = write!(err, "{}", e.render());
                return EXIT_PARSE;
            }
            let _ = write!(out, "{}", e.render());
            return EXIT_OK;
        }
    };
    let result = match &cli.command {
        Command::Evolve(a) => cmd_evolve(a, out, err),
        Command::QmcEval(a) => cmd_qmc_eval(a, out, err),
        Command::Analyze(a) => cmd_analyze(a, out, err),
        Command::Validate(a) => cmd_validate(a, out),
        Command::Classes(a) => cmd_classes(a, out),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(f) => {
            let _ = writeln!(err, "error: {}", f.message);
            f.code
        }
    }
}

pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let stdout = io::stdout();
    let stderr = io::stderr();
    run(args, &mut stdout.lock(), &mut stderr.lock())
}
