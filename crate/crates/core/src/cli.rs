//! Command-line front end.
//!
//! Exit codes: 0 on success, 1 when a check fails or a run ends in a
//! subproblem failure, 2 for usage, input and runtime errors.

use std::ffi::OsString;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::analysis::{check_trace, run_sweep, CheckStatus, Sweep, DEFAULT_SLACK};
use crate::error::{Error, Result};
use crate::model::{PrunePolicy, Variant};
use crate::problems::{builtin, parse_problem_file, ProblemSpec, BUILTIN_PROBLEMS};
use crate::solver::{
    read_trace_csv, read_vectors_json, run, write_trace_csv, write_vectors_json, SolverConfig, Status,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CHECK_FAILED: i32 = 1;
pub const EXIT_ERROR: i32 = 2;

/// Environment variable holding the default seed for generated problems.
pub const SEED_ENV: &str = "BUNDLE_SEED";

#[derive(Debug, Parser)]
#[command(name = "proxbundle", version, about = "Proximal bundle method solver and trace checker")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the method on a problem and write its trace.
    Solve(SolveArgs),
    /// Check a recorded trace against the convergence inequalities.
    Verify(VerifyArgs),
    /// Solve over a decreasing list of tolerances and fit the iteration growth.
    Sweep(SweepArgs),
    /// Print the built-in problems.
    ListProblems,
}

#[derive(Debug, Clone, Args)]
pub struct ProblemArgs {
    /// Built-in problem name or path to a JSON problem file.
    #[arg(long)]
    pub problem: String,
    /// Dimension of a built-in problem.
    #[arg(long)]
    pub dim: Option<usize>,
    /// Seed for generated problems [default: $BUNDLE_SEED or 0].
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Args)]
pub struct MethodArgs {
    #[arg(long, default_value_t = 1.0)]
    pub rho: f64,
    #[arg(long, default_value_t = 0.5)]
    pub beta: f64,
    #[arg(long, default_value_t = 1e-6)]
    pub eps: f64,
    /// multi-cut or aggregate.
    #[arg(long, default_value = "aggregate", value_parser = parse_variant)]
    pub variant: Variant,
    /// keep-all, keep-active or max-size:<m> (multi-cut only).
    #[arg(long, default_value = "keep-all", value_parser = parse_prune)]
    pub prune: PrunePolicy,
    #[arg(long, default_value_t = 100_000)]
    pub max_iter: usize,
}

impl MethodArgs {
    fn config(&self) -> SolverConfig {
        SolverConfig {
            rho: self.rho,
            beta: self.beta,
            eps: self.eps,
            variant: self.variant,
            prune_policy: self.prune,
            max_iter: self.max_iter,
            ..SolverConfig::default()
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct SolveArgs {
    #[command(flatten)]
    pub problem: ProblemArgs,
    /// Starting point as comma-separated values [default: the problem's own].
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub x1: Option<Vec<f64>>,
    #[command(flatten)]
    pub method: MethodArgs,
    /// Output path of the CSV trace.
    #[arg(long)]
    pub trace: Option<PathBuf>,
    /// Output path of the JSON file with the per-iteration vectors.
    #[arg(long)]
    pub vectors: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct VerifyArgs {
    /// CSV trace written by `solve`.
    #[arg(long)]
    pub trace: PathBuf,
    /// Vector sidecar; enables the checks that need the iterates.
    #[arg(long)]
    pub vectors: Option<PathBuf>,
    /// Built-in problem name or path to a JSON problem file.
    #[arg(long)]
    pub problem: String,
    /// Dimension of a built-in problem [default: the trace's].
    #[arg(long)]
    pub dim: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Relative slack granted to every inequality.
    #[arg(long, default_value_t = DEFAULT_SLACK)]
    pub slack: f64,
    /// Output path of the JSON report.
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub problem: ProblemArgs,
    /// Strictly decreasing tolerances, comma-separated.
    #[arg(long = "eps", value_delimiter = ',', required = true)]
    pub eps_list: Vec<f64>,
    #[arg(long, default_value = "aggregate", value_parser = parse_variant)]
    pub variant: Variant,
    #[arg(long, default_value = "keep-all", value_parser = parse_prune)]
    pub prune: PrunePolicy,
    #[arg(long, default_value_t = 1.0)]
    pub rho: f64,
    #[arg(long, default_value_t = 0.5)]
    pub beta: f64,
    #[arg(long, default_value_t = 100_000)]
    pub max_iter: usize,
    /// Output path of the CSV table.
    #[arg(long)]
    pub output: Option<PathBuf>,
}

fn parse_variant(s: &str) -> std::result::Result<Variant, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_prune(s: &str) -> std::result::Result<PrunePolicy, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

/// Parses `args` (program name first) and runs the subcommand, writing
/// normal output to `out` and diagnostics to `err`. Returns the exit code.
pub fn main_with_args<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_ERROR } else { EXIT_OK };
            let target: &mut dyn Write = if e.use_stderr() { err } else { out };
            let _ = write!(target, "{}", e.render());
            return code;
        }
    };
    let outcome = match cli.command {
        Command::Solve(a) => cmd_solve(&a, out),
        Command::Verify(a) => cmd_verify(&a, out),
        Command::Sweep(a) => cmd_sweep(&a, out),
        Command::ListProblems => cmd_list_problems(out),
    };
    match outcome {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            EXIT_ERROR
        }
    }
}

fn default_seed() -> Result<u64> {
    match std::env::var(SEED_ENV) {
        Ok(s) => s
            .trim()
            .parse()
            .map_err(|_| Error::InvalidInput(format!("{SEED_ENV} must be an unsigned integer, got '{s}'"))),
        Err(_) => Ok(0),
    }
}

/// A built-in name, or a path to a JSON problem file when no built-in matches
/// and the path exists.
pub fn resolve_problem(name: &str, dim: Option<usize>, seed: Option<u64>) -> Result<ProblemSpec> {
    let is_builtin = BUILTIN_PROBLEMS.iter().any(|(n, _, _)| *n == name);
    if !is_builtin && Path::new(name).is_file() {
        let problem = parse_problem_file(&std::fs::read(name)?)?;
        if let Some(d) = dim.filter(|&d| d != problem.dim) {
            return Err(Error::DimensionMismatch { expected: problem.dim, got: d });
        }
        return Ok(problem);
    }
    let seed = match seed {
        Some(s) => s,
        None => default_seed()?,
    };
    builtin(name, dim, seed)
}

fn echo_config(out: &mut dyn Write, problem: &ProblemSpec, x1: &[f64], config: &SolverConfig) -> Result<()> {
    writeln!(out, "problem: {}", problem.name)?;
    writeln!(out, "x1: {}", serde_json::to_string(x1).expect("vector serializes"))?;
    writeln!(out, "config: {}", serde_json::to_string(config).expect("config serializes"))?;
    Ok(())
}

pub fn cmd_solve(args: &SolveArgs, out: &mut dyn Write) -> Result<i32> {
    let p = &args.problem;
    let problem = resolve_problem(&p.problem, p.dim, p.seed)?;
    let config = args.method.config();
    config.validate()?;
    let x1 = args.x1.clone().unwrap_or_else(|| problem.default_x1.clone());
    if x1.len() != problem.dim {
        return Err(Error::DimensionMismatch { expected: problem.dim, got: x1.len() });
    }
    echo_config(out, &problem, &x1, &config)?;

    let (x, trace) = run(&problem, &x1, &config)?;
    if let Some(path) = &args.trace {
        let mut w = BufWriter::new(File::create(path)?);
        write_trace_csv(&trace, &mut w)?;
        w.flush()?;
    }
    if let Some(path) = &args.vectors {
        let mut w = BufWriter::new(File::create(path)?);
        write_vectors_json(&trace, &mut w)?;
        w.flush()?;
    }

    let f = problem.value(&x)?;
    write!(out, "status={} iterations={} f={f:.12e}", trace.status, trace.records.len())?;
    if let Some(gap) = problem.gap(&x)? {
        write!(out, " gap={gap:.3e}")?;
    }
    writeln!(out)?;
    if let Some(note) = &trace.note {
        writeln!(out, "note: {note}")?;
    }
    Ok(if trace.status == Status::QpFailure { EXIT_CHECK_FAILED } else { EXIT_OK })
}

pub fn cmd_verify(args: &VerifyArgs, out: &mut dyn Write) -> Result<i32> {
    let mut trace = read_trace_csv(BufReader::new(File::open(&args.trace)?))?;
    if let Some(path) = &args.vectors {
        read_vectors_json(BufReader::new(File::open(path)?), &mut trace)?;
    }
    let problem = resolve_problem(&args.problem, args.dim.or(Some(trace.dim)), args.seed)?;
    if problem.name != trace.problem {
        return Err(Error::Validation(format!("trace was recorded on '{}', not on '{}'", trace.problem, problem.name)));
    }
    if !(args.slack >= 0.0 && args.slack.is_finite()) {
        return Err(Error::InvalidInput(format!("slack must be nonnegative, got {}", args.slack)));
    }
    writeln!(out, "problem: {}", problem.name)?;
    writeln!(out, "config: {}", serde_json::to_string(&trace.config).expect("config serializes"))?;
    writeln!(out, "slack: {:e}", args.slack)?;

    let report = check_trace(&trace, &problem, &trace.config, args.slack);
    for e in &report.entries {
        let status = match e.status {
            CheckStatus::Passed => "pass",
            CheckStatus::Failed => "FAIL",
            CheckStatus::Skipped => "skip",
            CheckStatus::Annotated => "note",
        };
        write!(out, "{status:4} {:32} {}/{}", e.name, e.count_passed, e.count_checked)?;
        if let (Some(m), Some(k)) = (e.worst_margin, e.worst_k) {
            write!(out, "  worst margin {m:.3e} at k={k}")?;
        }
        if let Some(note) = &e.note {
            write!(out, "  ({note})")?;
        }
        writeln!(out)?;
    }
    if let Some(path) = &args.report {
        std::fs::write(path, report.to_json())?;
    }
    Ok(if report.all_passed() { EXIT_OK } else { EXIT_CHECK_FAILED })
}

pub fn cmd_sweep(args: &SweepArgs, out: &mut dyn Write) -> Result<i32> {
    let p = &args.problem;
    let problem = resolve_problem(&p.problem, p.dim, p.seed)?;
    let base = SolverConfig {
        rho: args.rho,
        beta: args.beta,
        variant: args.variant,
        prune_policy: args.prune,
        max_iter: args.max_iter,
        ..SolverConfig::default()
    };
    let x1 = problem.default_x1.clone();
    echo_config(out, &problem, &x1, &base)?;
    writeln!(out, "eps: {}", serde_json::to_string(&args.eps_list).expect("list serializes"))?;

    let sweep = run_sweep(&problem, &x1, &base, &args.eps_list)?;
    let table = sweep_table(&sweep)?;
    out.write_all(&table)?;
    if let Some(path) = &args.output {
        std::fs::write(path, &table)?;
    }
    Ok(if sweep.rows.iter().all(|r| r.ok()) { EXIT_OK } else { EXIT_CHECK_FAILED })
}

/// CSV rows of a sweep followed by `# fit:` comment lines.
pub fn sweep_table(sweep: &Sweep) -> Result<Vec<u8>> {
    let opt = |x: Option<f64>| x.map(|v| format!("{v:.6e}")).unwrap_or_default();
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "eps",
        "status",
        "series",
        "null_steps",
        "total",
        "l_bound",
        "total_bound",
        "gamma",
        "m_hat",
        "error",
    ])
    .map_err(csv_error)?;
    for r in &sweep.rows {
        w.write_record([
            format!("{:e}", r.eps),
            r.status.map(|s| s.to_string()).unwrap_or_default(),
            r.series.to_string(),
            r.null_steps.to_string(),
            r.total.to_string(),
            opt(r.l_bound),
            opt(r.total_bound),
            opt(r.gamma),
            opt(r.m_hat),
            r.error.clone().unwrap_or_default(),
        ])
        .map_err(csv_error)?;
    }
    let mut bytes = w.into_inner().map_err(|e| csv_error(e.into_error().into()))?;
    match &sweep.fit {
        Some(fit) => {
            writeln!(bytes, "# fit: constant={:.6e} max_ratio={:.6e}", fit.fit_constant, fit.max_ratio)?;
            let ratios: Vec<String> = fit.ratios.iter().map(|r| format!("{r:.6e}")).collect();
            writeln!(bytes, "# ratios: {}", ratios.join(","))?;
        }
        None => writeln!(bytes, "# fit: unavailable (fewer than 3 converged rows)")?,
    }
    Ok(bytes)
}

fn csv_error(e: csv::Error) -> Error {
    Error::InvalidInput(format!("writing the sweep table: {e}"))
}

pub fn cmd_list_problems(out: &mut dyn Write) -> Result<i32> {
    for (name, dim, description) in BUILTIN_PROBLEMS {
        writeln!(out, "{name:16} dim {dim:<3} {description}")?;
    }
    Ok(EXIT_OK)
}
