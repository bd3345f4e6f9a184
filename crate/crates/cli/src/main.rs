mod document;

use std::fs;
use std::io::{self, Read, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand, ValueEnum};
use graph_entropy::corner::{tau, CornerQuery};
use graph_entropy::optimality::{check_fixed_point, OptimalityError, DEFAULT_CHECK_TOL};
use graph_entropy::oracle::{
    brute_force_q, brute_force_r, default_resolution, free_dims_q, free_dims_r, OracleError, OracleResult,
};
use graph_entropy::solver::{solve, Init, SolveError, SolveReport, SolverConfig, Termination};
use graph_entropy::Problem;
use serde::Serialize;

use document::{
    letter_values, r_from_weights, set_labels, set_weights, ProblemDocument, RDocument, ResultDocument, SetWeights,
    Unit, VERSION,
};

const EXIT_INVALID: u8 = 2;
const EXIT_MAX_ITERS: u8 = 3;
const EXIT_REACTIVATION_LIMIT: u8 = 4;
const EXIT_NOT_FIXED_POINT: u8 = 5;

#[derive(Parser)]
#[command(
    name = "graph-entropy",
    version,
    about = "Conditional graph entropy by alternating minimization"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve a problem and print the full result document.
    Solve {
        #[command(flatten)]
        io: Io,
        #[command(flatten)]
        solver: SolverArgs,
        /// Write the convergence trace as CSV.
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Solve a problem and print only the entropy.
    Entropy {
        #[command(flatten)]
        io: Io,
        #[command(flatten)]
        solver: SolverArgs,
    },
    /// List the sets the solver works with, in canonical order.
    Enumerate {
        #[command(flatten)]
        io: Io,
    },
    /// Run the optimality test at a given point.
    Check {
        #[command(flatten)]
        io: Io,
        /// JSON file with a `final_r` list; a result document works.
        r_file: PathBuf,
        #[arg(long, default_value_t = DEFAULT_CHECK_TOL)]
        check_tol: f64,
    },
    /// Bracket the smallest t with t·1 in the convex corner.
    Tau {
        #[command(flatten)]
        io: Io,
        /// Target width of the bracket on log t.
        #[arg(long, default_value_t = 1e-6)]
        tol: f64,
    },
    /// Grid minimization of both objectives with certified slack.
    Oracle {
        #[command(flatten)]
        io: Io,
        /// Grid spacing; picked from the number of free dimensions by default.
        #[arg(long)]
        resolution: Option<f64>,
        #[arg(long, value_enum, default_value_t = Space::Both)]
        space: Space,
    },
}

#[derive(Args)]
struct Io {
    /// Problem document (`-` reads standard input).
    problem: PathBuf,
    /// Write the output document here instead of standard output.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SolverArgs {
    #[arg(long, default_value_t = SolverConfig::default().tol)]
    tol: f64,
    #[arg(long, default_value_t = SolverConfig::default().max_iters)]
    max_iters: usize,
    /// Deactivate sets whose weights all fall below this; 0 disables pruning.
    #[arg(long, default_value_t = 0.0)]
    eps_act: f64,
    #[arg(long, value_enum, default_value_t = InitArg::Uniform)]
    init: InitArg,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Record every n-th iteration in the trace.
    #[arg(long, default_value_t = 1)]
    trace_every: usize,
    /// Reactivations allowed after failed optimality checks.
    #[arg(long, default_value_t = SolverConfig::default().reactivation_limit)]
    reactivation_limit: usize,
    /// Report the headline entropy in bits.
    #[arg(long)]
    bits: bool,
}

impl SolverArgs {
    fn config(&self) -> SolverConfig {
        SolverConfig {
            tol: self.tol,
            max_iters: self.max_iters,
            eps_act: self.eps_act,
            init: match self.init {
                InitArg::Uniform => Init::Uniform,
                InitArg::Random => Init::Perturbed,
            },
            seed: self.seed,
            trace_every: self.trace_every,
            reactivation_limit: self.reactivation_limit,
            ..SolverConfig::default()
        }
    }

    fn unit(&self) -> Unit {
        if self.bits {
            Unit::Bits
        } else {
            Unit::Nats
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum InitArg {
    Uniform,
    Random,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Space {
    Q,
    R,
    Both,
}

/// A failure with its exit code.
struct Failure {
    code: u8,
    error: anyhow::Error,
}

impl Failure {
    fn invalid(error: impl Into<anyhow::Error>) -> Self {
        Self {
            code: EXIT_INVALID,
            error: error.into(),
        }
    }
}

impl From<anyhow::Error> for Failure {
    fn from(error: anyhow::Error) -> Self {
        Self { code: 1, error }
    }
}

type Outcome = Result<u8, Failure>;

fn read_input(path: &Path) -> Result<String, Failure> {
    let mut text = String::new();
    if path == Path::new("-") {
        io::stdin()
            .read_to_string(&mut text)
            .context("reading standard input")
            .map_err(Failure::invalid)?;
    } else {
        text = fs::read_to_string(path)
            .with_context(|| format!("reading {}", path.display()))
            .map_err(Failure::invalid)?;
    }
    Ok(text)
}

fn load_problem(path: &Path) -> Result<Problem, Failure> {
    let text = read_input(path)?;
    let doc: ProblemDocument = serde_json::from_str(&text)
        .with_context(|| format!("parsing problem document {}", path.display()))
        .map_err(Failure::invalid)?;
    doc.to_problem()
        .with_context(|| format!("invalid problem in {}", path.display()))
        .map_err(Failure::invalid)
}

fn emit(out: Option<&Path>, doc: &impl Serialize) -> Result<(), Failure> {
    let mut text = serde_json::to_string_pretty(doc).context("serializing output")?;
    text.push('\n');
    match out {
        Some(path) => fs::write(path, text).with_context(|| format!("writing {}", path.display()))?,
        None => io::stdout()
            .write_all(text.as_bytes())
            .context("writing standard output")?,
    }
    Ok(())
}

fn run_solver(p: &Problem, cfg: &SolverConfig) -> Result<SolveReport, Failure> {
    solve(p, cfg).map_err(|e| match e {
        SolveError::InvalidConfig(_) => Failure::invalid(e),
        e => Failure::from(anyhow::Error::from(e)),
    })
}

fn termination_code(t: Termination) -> u8 {
    match t {
        Termination::Converged => 0,
        Termination::MaxIters => {
            log::warn!("iteration budget exhausted before convergence");
            EXIT_MAX_ITERS
        }
        Termination::ReactivationLimit => {
            log::warn!("optimality check still finds an improving set after the reactivation limit");
            EXIT_REACTIVATION_LIMIT
        }
    }
}

#[derive(Serialize)]
struct TraceRecord {
    iter: usize,
    phi_nats: f64,
    max_delta: f64,
    active_sets: usize,
}

fn write_trace(path: &Path, report: &SolveReport) -> anyhow::Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))?;
    for row in &report.trace {
        w.serialize(TraceRecord {
            iter: row.iteration,
            phi_nats: row.phi_nats,
            max_delta: row.max_delta,
            active_sets: row.active_sets,
        })?;
    }
    if report.trace.is_empty() {
        w.write_record(["iter", "phi_nats", "max_delta", "active_sets"])?;
    }
    w.flush()?;
    Ok(())
}

fn cmd_solve(io: &Io, args: &SolverArgs, trace: Option<&Path>) -> Outcome {
    let p = load_problem(&io.problem)?;
    let cfg = args.config();
    let report = run_solver(&p, &cfg)?;
    if let Some(path) = trace {
        write_trace(path, &report)?;
    }
    emit(io.out.as_deref(), &ResultDocument::new(&p, &report, &cfg, args.unit()))?;
    Ok(termination_code(report.termination))
}

#[derive(Serialize)]
struct EntropyDocument {
    version: &'static str,
    unit: Unit,
    entropy: f64,
    entropy_nats: f64,
    entropy_bits: f64,
    termination: Termination,
}

fn cmd_entropy(io: &Io, args: &SolverArgs) -> Outcome {
    let p = load_problem(&io.problem)?;
    let cfg = SolverConfig {
        trace_every: usize::MAX,
        ..args.config()
    };
    let report = run_solver(&p, &cfg)?;
    let entropy_bits = report.entropy_nats / std::f64::consts::LN_2;
    emit(
        io.out.as_deref(),
        &EntropyDocument {
            version: VERSION,
            unit: args.unit(),
            entropy: args.unit().pick(report.entropy_nats, entropy_bits),
            entropy_nats: report.entropy_nats,
            entropy_bits,
            termination: report.termination,
        },
    )?;
    Ok(termination_code(report.termination))
}

#[derive(Serialize)]
struct SetListDocument {
    version: &'static str,
    count: usize,
    sets: Vec<Vec<String>>,
}

fn cmd_enumerate(io: &Io) -> Outcome {
    let p = load_problem(&io.problem)?;
    let sets: Vec<Vec<String>> = (0..p.n_sets()).map(|j| set_labels(&p, j)).collect();
    emit(
        io.out.as_deref(),
        &SetListDocument {
            version: VERSION,
            count: sets.len(),
            sets,
        },
    )?;
    Ok(0)
}

#[derive(Serialize)]
struct SetVerdict {
    set: Vec<String>,
    non_active: bool,
    value: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    improving_direction: Option<Vec<f64>>,
}

#[derive(Serialize)]
struct VerdictDocument {
    version: &'static str,
    /// `optimal`, `not-optimal` or `not-fixed-point`.
    status: &'static str,
    residual: f64,
    gap: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    worst_set: Option<Vec<String>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    worst_value: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    tolerance: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    active_deviation: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    max_inner_gap: Option<f64>,
    sets: Vec<SetVerdict>,
}

fn cmd_check(io: &Io, r_file: &Path, check_tol: f64) -> Outcome {
    let p = load_problem(&io.problem)?;
    let text = read_input(r_file)?;
    let doc: RDocument = serde_json::from_str(&text)
        .with_context(|| format!("parsing {}", r_file.display()))
        .map_err(Failure::invalid)?;
    let r = r_from_weights(&p, &doc.final_r)
        .with_context(|| format!("invalid point in {}", r_file.display()))
        .map_err(Failure::invalid)?;
    if !(check_tol >= 0.0) {
        return Err(Failure::invalid(anyhow::anyhow!("--check-tol must be non-negative")));
    }
    match check_fixed_point(&p, &r, check_tol) {
        Ok(v) => {
            let sets = (0..p.n_sets())
                .map(|j| SetVerdict {
                    set: set_labels(&p, j),
                    non_active: v.non_active[j],
                    value: v.values[j],
                    improving_direction: v.directions.iter().find(|d| d.set == j).map(|d| d.t.clone()),
                })
                .collect();
            emit(
                io.out.as_deref(),
                &VerdictDocument {
                    version: VERSION,
                    status: if v.optimal { "optimal" } else { "not-optimal" },
                    residual: v.residual,
                    gap: v.gap,
                    worst_set: v.worst_set.map(|j| set_labels(&p, j)),
                    worst_value: Some(v.worst_value),
                    tolerance: Some(v.tolerance),
                    active_deviation: Some(v.active_deviation),
                    max_inner_gap: Some(v.max_gap),
                    sets,
                },
            )?;
            Ok(0)
        }
        Err(OptimalityError::NotFixedPoint { residual, gap }) => {
            log::error!("r is not an approximate fixed point (residual {residual:e}, gap {gap:e})");
            emit(
                io.out.as_deref(),
                &VerdictDocument {
                    version: VERSION,
                    status: "not-fixed-point",
                    residual,
                    gap,
                    worst_set: None,
                    worst_value: None,
                    tolerance: None,
                    active_deviation: None,
                    max_inner_gap: None,
                    sets: Vec::new(),
                },
            )?;
            Ok(EXIT_NOT_FIXED_POINT)
        }
        Err(e @ OptimalityError::OutsideDomain { .. }) => Err(Failure::invalid(e)),
    }
}

#[derive(Serialize)]
struct TauDocument {
    version: &'static str,
    tau: f64,
    lower: f64,
    upper: f64,
    log_tau_nats: f64,
    log_tau_bits: f64,
    /// Width of the bracket on `log τ`.
    gap: f64,
    converged: bool,
    rounds: usize,
    pi: Vec<document::LetterValue>,
    y_alphabet: Vec<String>,
    r: Vec<SetWeights>,
}

fn cmd_tau(io: &Io, tol: f64) -> Outcome {
    let p = load_problem(&io.problem)?;
    if !(tol > 0.0) {
        return Err(Failure::invalid(anyhow::anyhow!("--tol must be positive")));
    }
    let res = tau(
        &p,
        &CornerQuery {
            tol,
            ..CornerQuery::default()
        },
    )
    .map_err(anyhow::Error::from)?;
    if !res.converged {
        log::warn!("bracket did not reach the requested width; it is still valid");
    }
    emit(
        io.out.as_deref(),
        &TauDocument {
            version: VERSION,
            tau: res.tau,
            lower: res.lower,
            upper: res.upper,
            log_tau_nats: res.log_tau_nats,
            log_tau_bits: res.log_tau_bits,
            gap: res.gap,
            converged: res.converged,
            rounds: res.rounds,
            pi: letter_values(&p, &res.pi),
            y_alphabet: p.y_labels().to_vec(),
            r: set_weights(&p, &res.r, false),
        },
    )?;
    Ok(0)
}

#[derive(Serialize)]
#[serde(untagged)]
enum OracleSection {
    Result(OracleResult),
    Refused { refused: String },
}

#[derive(Serialize)]
struct OracleDocument {
    version: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    q: Option<OracleSection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    r: Option<OracleSection>,
}

fn cmd_oracle(io: &Io, resolution: Option<f64>, space: Space) -> Outcome {
    let p = load_problem(&io.problem)?;
    let run = |free: usize, f: fn(&Problem, f64) -> Result<OracleResult, OracleError>| match f(
        &p,
        resolution.unwrap_or_else(|| default_resolution(free)),
    ) {
        Ok(res) => Ok(OracleSection::Result(res)),
        Err(e @ OracleError::TooLarge { .. }) => Ok(OracleSection::Refused { refused: e.to_string() }),
        Err(e) => Err(Failure::invalid(e)),
    };
    let q = (space != Space::R)
        .then(|| run(free_dims_q(&p), brute_force_q))
        .transpose()?;
    let r = (space != Space::Q)
        .then(|| run(free_dims_r(&p), brute_force_r))
        .transpose()?;
    let all_refused = [&q, &r].iter().all(|s| !matches!(s, Some(OracleSection::Result(_))));
    emit(io.out.as_deref(), &OracleDocument { version: VERSION, q, r })?;
    Ok(if all_refused { EXIT_INVALID } else { 0 })
}

fn run(cli: Cli) -> Outcome {
    match &cli.command {
        Command::Solve { io, solver, trace } => cmd_solve(io, solver, trace.as_deref()),
        Command::Entropy { io, solver } => cmd_entropy(io, solver),
        Command::Enumerate { io } => cmd_enumerate(io),
        Command::Check { io, r_file, check_tol } => cmd_check(io, r_file, *check_tol),
        Command::Tau { io, tol } => cmd_tau(io, *tol),
        Command::Oracle { io, resolution, space } => cmd_oracle(io, *resolution, *space),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_INVALID } else { 0 });
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(Failure { code, error }) => {
            eprintln!("error: {error:#}");
            ExitCode::from(code)
        }
    }
}
