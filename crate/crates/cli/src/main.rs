//! `signls`: sign-constrained least squares, design-condition checks, error
//! bounds and the network-tomography simulation study.
//!
//! Exit codes: 0 success, 1 usage or input error, 2 numerical failure
//! (non-convergence, rank deficiency, degenerate instance), 3 validation
//! suite failure.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::{json, Value};

use signls::bounds::{bounds_report, BoundInputs};
use signls::conditions::{
    check_example1, check_example2, check_example3, compatibility_constant_exact, compatibility_lower_bound,
    positive_eigenvalue, ConditionReport, ExamplesReport, EXACT_MAX_P,
};
use signls::experiments::{
    emit_plot, emit_plot_series, monte_carlo_lemmas, monte_carlo_theorem1, read_results_csv, run_study,
    write_results_csv, DesignSpec, StudyConfig,
};
use signls::io::{read_covariance, read_design, read_response, write_design, write_vector};
use signls::linalg::{apply_sign_pattern, covariance, standardize_columns, CovarianceMatrix, SignPattern};
use signls::nnls::{solve_l1_constrained_nnls, solve_nnls, solve_oracle_nnls, Algorithm, SolverOptions};
use signls::tomography::{generate_network, simulate_observations, toy_instance, TomographyInstance};
use signls::Error;

const OUTPUT_DIR_ENV: &str = "SIGNLS_OUTPUT_DIR";

#[derive(Parser)]
#[command(name = "signls", version, about = "Sign-constrained least squares for sparse high-dimensional regression")]
#[command(arg_required_else_help = true)]
struct Cli {
    /// Master random seed, echoed into every output.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,

    /// Worker threads (default: available parallelism).
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Also write a machine-readable JSON summary to this file.
    #[arg(long, global = true, value_name = "PATH")]
    json: Option<PathBuf>,

    /// Relative KKT tolerance for the solvers.
    #[arg(long, global = true, default_value_t = signls::nnls::DEFAULT_KKT_TOLERANCE)]
    kkt_tol: f64,

    /// Increase log verbosity (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve NNLS (or the l1-constrained variant) for a design/response pair.
    ///
    /// Inputs are comma-separated numeric files, one matrix row per line; an
    /// optional non-numeric header line is skipped. The response is one value
    /// per line. Output is the coefficient vector as one comma-separated line.
    Solve(SolveArgs),
    /// Certify the positive eigenvalue and compatibility conditions.
    ///
    /// Emits a JSON report {phi_pos, examples, compatibility}.
    Check(CheckArgs),
    /// Evaluate every closed-form bound and threshold as JSON.
    Bounds(BoundsArgs),
    /// Generate a tomography instance: topology.json, design.csv, beta.csv, response.csv.
    Simulate(SimulateArgs),
    /// Run the lambda-path simulation study: results.csv, aggregate.json, figure2.svg.
    Study(StudyArgs),
    /// Run Monte Carlo coverage suites; exits 3 when a coverage floor is missed.
    Validate(ValidateArgs),
    /// Render an SVG figure from a results.csv written by `study`.
    Plot(PlotArgs),
}

#[derive(Args)]
struct SolveArgs {
    /// Design matrix CSV (n rows, p columns).
    #[arg(long)]
    design: PathBuf,
    /// Response CSV (n values).
    #[arg(long)]
    response: PathBuf,
    #[arg(long, value_enum, default_value_t = AlgorithmArg::ActiveSet)]
    algorithm: AlgorithmArg,
    /// Solve min ‖Y − Xβ‖² subject to β ≥ 0 and Σβ ≤ λ instead.
    #[arg(long, alias = "lambda", value_name = "λ", conflicts_with = "support")]
    l1_bound: Option<f64>,
    /// Restrict the fit to these columns (0-based, comma-separated); others are fixed at zero.
    #[arg(long, value_delimiter = ',')]
    support: Option<Vec<usize>>,
    /// Relative KKT tolerance (overrides --kkt-tol).
    #[arg(long)]
    tol: Option<f64>,
    /// Comma-separated ±1 per column; columns with −1 are constrained nonpositive.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    signs: Option<Vec<i8>>,
    /// Rescale columns to squared norm n before solving (coefficients are reported on the original scale).
    #[arg(long)]
    standardize: bool,
    #[arg(long)]
    max_iter: Option<usize>,
    /// Write the coefficients here; stdout then carries only the KKT report.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum AlgorithmArg {
    ActiveSet,
    Pg,
}

#[derive(Args)]
struct CheckArgs {
    /// Design CSV; the condition is checked on n⁻¹XᵀX.
    #[arg(long, conflicts_with = "covariance", required_unless_present = "covariance")]
    design: Option<PathBuf>,
    /// Symmetric covariance CSV.
    #[arg(long)]
    covariance: Option<PathBuf>,
    /// Standardize design columns first.
    #[arg(long, requires = "design")]
    standardize: bool,
    /// Support S (0-based, comma-separated) for the compatibility constant.
    #[arg(long, value_delimiter = ',', requires = "l")]
    support: Option<Vec<usize>>,
    /// Cone parameter L for the compatibility constant.
    #[arg(long = "L", id = "l")]
    l: Option<f64>,
    /// JSON list of index lists partitioning the columns, for the block condition.
    #[arg(long, requires = "rho")]
    blocks: Option<PathBuf>,
    #[arg(long)]
    rho: Option<f64>,
}

#[derive(Args)]
struct BoundsArgs {
    /// JSON report from `check`; supplies nu and phi.
    #[arg(long)]
    from_check: Option<PathBuf>,
    #[arg(long)]
    p: usize,
    #[arg(long)]
    n: usize,
    #[arg(long)]
    s: usize,
    #[arg(long)]
    sigma: f64,
    #[arg(long, default_value_t = 0.1)]
    eta: f64,
    #[arg(long, required_unless_present = "from_check")]
    nu: Option<f64>,
    #[arg(long, required_unless_present = "from_check")]
    phi: Option<f64>,
}

#[derive(Args)]
struct SimulateArgs {
    /// Use the three-node toy network instead of a random one.
    #[arg(long)]
    toy: bool,
    #[arg(long, default_value_t = 100)]
    nodes: usize,
    #[arg(long = "K", default_value_t = 5)]
    k: usize,
    /// Edge deletion probability.
    #[arg(long, default_value_t = 0.2)]
    nu_del: f64,
    /// Number of lossy internal nodes.
    #[arg(long, default_value_t = 2)]
    s: usize,
    /// Noise variance.
    #[arg(long, default_value_t = 0.0)]
    sigma_sq: f64,
    /// Output directory (default: $SIGNLS_OUTPUT_DIR or the current directory).
    #[arg(long, env = OUTPUT_DIR_ENV)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct StudyArgs {
    #[arg(long, default_value_t = 100)]
    scenarios: usize,
    #[arg(long, default_value_t = 10)]
    reps: usize,
    #[arg(long, default_value_t = 20)]
    grid: usize,
    #[arg(long, env = OUTPUT_DIR_ENV)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, PartialEq, ValueEnum)]
enum Suite {
    Theorem1,
    Lemmas,
    All,
}

#[derive(Args)]
struct ValidateArgs {
    #[arg(long, value_enum, default_value_t = Suite::All)]
    suite: Suite,
    #[arg(long, default_value_t = 500)]
    trials: usize,
    /// Level C for the lemma suite.
    #[arg(long = "C", default_value_t = 2.5)]
    c: f64,
    #[arg(long, default_value_t = 200)]
    n: usize,
    #[arg(long, default_value_t = 10)]
    p: usize,
    #[arg(long, default_value_t = 2)]
    s: usize,
    #[arg(long, default_value_t = 0.5)]
    rho: f64,
    #[arg(long, default_value_t = 1.0)]
    sigma: f64,
    #[arg(long, default_value_t = 0.1)]
    eta: f64,
    /// Coefficient size on the support (default: 1.1 times the support-recovery threshold).
    #[arg(long)]
    beta_min: Option<f64>,
}

#[derive(Args)]
struct PlotArgs {
    /// results.csv from `study`.
    #[arg(long)]
    results: PathBuf,
    /// Output SVG path.
    #[arg(long)]
    out: PathBuf,
}

/// Failure with its exit code.
struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::RankDeficient(_) | Error::Degenerate(_) => 2,
            _ => 1,
        };
        Failure { code, message: e.to_string() }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure { code: 1, message: e.to_string() }
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        Failure { code: 1, message: e.to_string() }
    }
}

type CmdResult = Result<Value, Failure>;

fn usage(message: impl Into<String>) -> Failure {
    Failure { code: 1, message: message.into() }
}

fn numerical(message: impl Into<String>) -> Failure {
    Failure { code: 2, message: message.into() }
}

/// Writes a line to stdout; a closed pipe (e.g. `| head`) is not an error.
fn out(text: &str) -> Result<(), Failure> {
    match writeln!(std::io::stdout().lock(), "{text}") {
        Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => Ok(()),
        r => Ok(r?),
    }
}

fn out_dir(dir: Option<PathBuf>) -> Result<PathBuf, Failure> {
    let dir = dir.unwrap_or_else(|| PathBuf::from("."));
    fs::create_dir_all(&dir)?;
    Ok(dir)
}

fn write_json(path: &Path, value: &Value) -> Result<(), Failure> {
    fs::write(path, serde_json::to_string_pretty(value)? + "\n")?;
    Ok(())
}

fn to_value<T: Serialize>(v: &T) -> Result<Value, Failure> {
    Ok(serde_json::to_value(v)?)
}

fn solve(cli: &Cli, a: &SolveArgs) -> CmdResult {
    let mut x = read_design(&a.design)?;
    let y = read_response(&a.response)?;
    let signs = match &a.signs {
        Some(s) => {
            let pattern = SignPattern::new(s.clone())?;
            x = apply_sign_pattern(&x, &pattern)?;
            Some(pattern.as_f64())
        }
        None => None,
    };
    if a.standardize {
        x = standardize_columns(&x)?;
    }
    let algorithm = match a.algorithm {
        AlgorithmArg::ActiveSet => Algorithm::ActiveSet,
        AlgorithmArg::Pg => Algorithm::ProjectedGradient,
    };
    let opts = SolverOptions { kkt_tolerance: a.tol.unwrap_or(cli.kkt_tol), max_iterations: a.max_iter, algorithm };
    let sol = match (a.l1_bound, &a.support) {
        (Some(l), _) => solve_l1_constrained_nnls(&x, &y, l, &opts)?,
        (None, Some(s)) => solve_oracle_nnls(&x, &y, s, &opts)?,
        (None, None) => solve_nnls(&x, &y, &opts)?,
    };
    let mut beta = x.unscale_coefficients(sol.values());
    if let Some(s) = &signs {
        beta.iter_mut().zip(s).for_each(|(b, s)| *b *= s);
    }
    let line = format_coefficients(&beta);
    match &a.out {
        Some(path) => fs::write(path, format!("{line}\n"))?,
        None => out(&line)?,
    }
    out(&serde_json::to_string_pretty(&json!({ "kkt": sol.kkt }))?)?;
    let summary = json!({
        "command": "solve",
        "seed": cli.seed,
        "beta": beta,
        "objective": sol.objective,
        "iterations": sol.iterations,
        "converged": sol.converged,
        "rank_deficient": sol.rank_deficient,
        "kkt": sol.kkt,
        "l1_bound": a.l1_bound,
        "support": a.support,
    });
    if !sol.converged {
        emit_summary(cli, &summary)?;
        return Err(numerical(format!("solver did not converge after {} iterations", sol.iterations)));
    }
    Ok(summary)
}

/// Rounds to 12 significant digits and zeroes entries below 1e-12 of the
/// largest one, so solver round-off does not leak into the printed vector.
fn format_coefficients(beta: &[f64]) -> String {
    let scale = beta.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    beta.iter()
        .map(|&v| {
            let r = if v.abs() <= 1e-12 * scale { 0.0 } else { format!("{v:.11e}").parse::<f64>().unwrap_or(v) };
            (r + 0.0).to_string()
        })
        .collect::<Vec<_>>()
        .join(",")
}

fn check(cli: &Cli, a: &CheckArgs) -> CmdResult {
    let sigma: CovarianceMatrix = match (&a.design, &a.covariance) {
        (Some(d), _) => {
            let mut x = read_design(d)?;
            if a.standardize {
                x = standardize_columns(&x)?;
            }
            covariance(&x)
        }
        (None, Some(c)) => read_covariance(c)?,
        (None, None) => return Err(usage("one of --design or --covariance is required")),
    };
    let example3 = match (&a.blocks, a.rho) {
        (Some(path), Some(rho)) => {
            let blocks: Vec<Vec<usize>> = serde_json::from_str(&fs::read_to_string(path)?)?;
            check_example3(&sigma, &blocks, rho)?
        }
        _ => None,
    };
    let compatibility = match (&a.support, a.l) {
        (Some(s), Some(l)) if sigma.p() <= EXACT_MAX_P => Some(compatibility_constant_exact(&sigma, s, l)?),
        (Some(s), Some(l)) => {
            log::warn!("p = {} exceeds {EXACT_MAX_P}; reporting a lower bound", sigma.p());
            Some(compatibility_lower_bound(&sigma, s, l, None)?)
        }
        _ => None,
    };
    let report = ConditionReport {
        phi_pos: positive_eigenvalue(&sigma),
        examples: ExamplesReport { example1: check_example1(&sigma), example2: check_example2(&sigma), example3 },
        compatibility,
    };
    let mut value = to_value(&report)?;
    value["seed"] = json!(cli.seed);
    out(&serde_json::to_string_pretty(&value)?)?;
    Ok(value)
}

fn bounds(cli: &Cli, a: &BoundsArgs) -> CmdResult {
    let (mut nu, mut phi) = (a.nu, a.phi);
    if let Some(path) = &a.from_check {
        let report: Value = serde_json::from_str(&fs::read_to_string(path)?)?;
        nu = nu.or_else(|| report["phi_pos"]["nu"].as_f64());
        phi = phi.or_else(|| report["compatibility"]["phi_sq"].as_f64());
    }
    let nu = nu.ok_or_else(|| usage("nu is missing (pass --nu or a check report with phi_pos)"))?;
    let phi = phi.ok_or_else(|| usage("phi is missing (pass --phi or a check report with compatibility)"))?;
    let inputs = BoundInputs { p: a.p, n: a.n, s: a.s, sigma: a.sigma, eta: a.eta, nu, phi };
    let mut value = to_value(&bounds_report(&inputs)?)?;
    value["seed"] = json!(cli.seed);
    out(&serde_json::to_string_pretty(&value)?)?;
    Ok(value)
}

fn simulate(cli: &Cli, a: &SimulateArgs) -> CmdResult {
    let inst = if a.toy {
        toy_instance()
    } else {
        use signls::experiments::{build_instance, ScenarioConfig};
        let cfg = ScenarioConfig { n_nodes: a.nodes, k: a.k, nu_del: a.nu_del, sigma_sq: a.sigma_sq, s: a.s, seed: cli.seed };
        // Validate the generator arguments before the degenerate-instance check.
        generate_network(a.nodes, a.k, a.nu_del, cli.seed)?;
        build_instance(&cfg)?
    };
    let inst = if a.toy && a.sigma_sq > 0.0 {
        TomographyInstance::new(inst.topology, inst.beta_star.into_values(), a.sigma_sq.sqrt())?
    } else {
        inst
    };
    let dir = out_dir(a.out.clone())?;
    let y = simulate_observations(&inst, signls::experiments::derive_seed(cli.seed, &[1]));
    let mut topology = to_value(&inst.topology)?;
    topology["seed"] = json!(cli.seed);
    topology["column_nodes"] = json!(inst.design.column_nodes);
    write_json(&dir.join("topology.json"), &topology)?;
    write_design(dir.join("design.csv"), inst.x())?;
    write_vector(dir.join("beta.csv"), inst.beta_star.values())?;
    write_vector(dir.join("response.csv"), y.values())?;
    let summary = json!({
        "command": "simulate",
        "seed": cli.seed,
        "out": dir,
        "nodes": inst.topology.n_nodes(),
        "edges": inst.topology.edges.len(),
        "n": inst.x().n(),
        "p": inst.x().p(),
        "sigma": inst.sigma,
    });
    out(&serde_json::to_string_pretty(&summary)?)?;
    Ok(summary)
}

fn study(cli: &Cli, a: &StudyArgs) -> CmdResult {
    let cfg = StudyConfig {
        n_scenarios: a.scenarios,
        reps: a.reps,
        grid: a.grid,
        seed: cli.seed,
        kkt_tolerance: cli.kkt_tol,
        ..StudyConfig::default()
    };
    let study = run_study(&cfg)?;
    let dir = out_dir(a.out.clone())?;
    let mut csv = Vec::new();
    write_results_csv(&study.results, cli.seed, &mut csv)?;
    fs::write(dir.join("results.csv"), csv)?;
    let aggregate = to_value(&study.aggregate)?;
    write_json(&dir.join("aggregate.json"), &aggregate)?;
    fs::write(dir.join("figure2.svg"), emit_plot(&study.results, cli.seed)?)?;
    out(&serde_json::to_string_pretty(&aggregate)?)?;
    Ok(json!({ "command": "study", "seed": cli.seed, "out": dir, "aggregate": aggregate }))
}

fn validate(cli: &Cli, a: &ValidateArgs) -> CmdResult {
    let spec = DesignSpec {
        n: a.n,
        p: a.p,
        s: a.s,
        rho: a.rho,
        sigma: a.sigma,
        eta: a.eta,
        beta_min: a.beta_min,
        design_seed: signls::experiments::derive_seed(cli.seed, &[0]),
    };
    let mut reports = Vec::new();
    if a.suite != Suite::Lemmas {
        reports.push(monte_carlo_theorem1(&spec, a.trials, cli.seed)?);
    }
    if a.suite != Suite::Theorem1 {
        reports.push(monte_carlo_lemmas(&spec, a.trials, a.c, cli.seed)?);
    }
    let pass = reports.iter().all(|r| r.pass);
    let value = json!({ "command": "validate", "seed": cli.seed, "pass": pass, "reports": reports });
    out(&serde_json::to_string_pretty(&value)?)?;
    if !pass {
        emit_summary(cli, &value)?;
        return Err(Failure { code: 3, message: "coverage below the theoretical floor".into() });
    }
    Ok(value)
}

fn plot(cli: &Cli, a: &PlotArgs) -> CmdResult {
    let (series, seed) = read_results_csv(fs::File::open(&a.results)?)?;
    let svg = emit_plot_series(&series, seed.or(Some(cli.seed)))?;
    if let Some(parent) = a.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    fs::write(&a.out, svg)?;
    Ok(json!({ "command": "plot", "seed": seed.unwrap_or(cli.seed), "scenarios": series.len(), "out": a.out }))
}

fn emit_summary(cli: &Cli, value: &Value) -> Result<(), Failure> {
    if let Some(path) = &cli.json {
        write_json(path, value)?;
    }
    Ok(())
}

fn dispatch(cli: &Cli) -> Result<(), Failure> {
    let value = match &cli.command {
        Command::Solve(a) => solve(cli, a)?,
        Command::Check(a) => check(cli, a)?,
        Command::Bounds(a) => bounds(cli, a)?,
        Command::Simulate(a) => simulate(cli, a)?,
        Command::Study(a) => study(cli, a)?,
        Command::Validate(a) => validate(cli, a)?,
        Command::Plot(a) => plot(cli, a)?,
    };
    emit_summary(cli, &value)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: cannot configure {n} threads: {e}");
            return ExitCode::from(1);
        }
    }
    match dispatch(&cli) {
        Ok(()) => {
            let _ = std::io::stdout().flush();
            ExitCode::SUCCESS
        }
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
