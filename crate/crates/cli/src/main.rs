use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use dso_auction::experiment::{
    default_lmp_factors, run_scenario, run_sweep, write_run, write_sweep, RunConfig, SweepSpec,
    DEFAULT_GAMMA_SCALES,
};
use dso_auction::model::BuildOptions;
use dso_auction::scenario::{load_scenario, validate_scenario, Scenario};
use dso_auction::Error;
use dso_milp::bb::{BbConfig, BranchRule};
use log::info;
use serde_json::json;

/// Exit codes shared by all commands.
mod exit {
    pub const OK: u8 = 0;
    /// Scenario violates its invariants.
    pub const INVALID: u8 = 1;
    /// Unreadable or malformed input, or a bad argument.
    pub const INPUT: u8 = 2;
    /// No certified solution (solver limit, infeasibility or numerical trouble).
    pub const SOLVER: u8 = 3;
    /// Solved, but a hard market property failed.
    pub const PROPERTY: u8 = 4;
}

/// Distribution-level day-ahead auction: clear, price and settle a scenario.
#[derive(Parser)]
#[command(name = "dso-auction", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve one scenario and write the solution JSON, property report and CSVs.
    Solve {
        /// Scenario JSON; the bundled scenario when omitted.
        scenario: Option<PathBuf>,
        #[command(flatten)]
        flags: SolveFlags,
    },
    /// Re-solve a scenario over a grid of LMP factors or penalties.
    Sweep {
        #[arg(long, value_enum)]
        kind: Kind,
        /// Strictly increasing factors (lmp_scale) or penalties in $/MWh (gamma).
        #[arg(long, value_delimiter = ',', num_args = 1..)]
        values: Option<Vec<f64>>,
        /// LMP scalings at which a gamma sweep is repeated.
        #[arg(long, value_delimiter = ',', num_args = 1..)]
        scales: Option<Vec<f64>>,
        /// Base scenario JSON; the bundled scenario when omitted.
        #[arg(long)]
        base: Option<PathBuf>,
        #[command(flatten)]
        flags: SolveFlags,
    },
    /// Check a scenario file and list every violated invariant.
    Validate { scenario: PathBuf },
}

#[derive(Clone, Copy, ValueEnum)]
#[value(rename_all = "snake_case")]
enum Kind {
    LmpScale,
    Gamma,
}

#[derive(Clone, Copy, ValueEnum)]
#[value(rename_all = "snake_case")]
enum Rule {
    MostFractional,
    PseudoCost,
}

#[derive(Args, Clone)]
struct SolveFlags {
    /// Relative optimality gap at which branch-and-bound stops.
    #[arg(long, default_value_t = 1e-4)]
    gap: f64,
    /// Wall-clock limit per solve, in seconds.
    #[arg(long, default_value_t = 120.0)]
    time_limit: f64,
    #[arg(long, default_value_t = 200_000)]
    node_limit: usize,
    #[arg(long, value_enum, default_value_t = Rule::MostFractional)]
    branch_rule: Rule,
    /// Parallel solves in a sweep.
    #[arg(long, default_value_t = 1)]
    workers: usize,
    #[arg(long, default_value = "out")]
    out_dir: PathBuf,
    /// Reserved; runs are deterministic.
    #[arg(long)]
    seed: Option<u64>,
    /// Declare the run counters as integer columns.
    #[arg(long)]
    strict_integers: bool,
}

impl SolveFlags {
    fn config(&self) -> RunConfig {
        RunConfig {
            solver: BbConfig {
                mip_gap_rel: self.gap,
                time_limit: self.time_limit,
                node_limit: self.node_limit,
                branch_rule: match self.branch_rule {
                    Rule::MostFractional => BranchRule::MostFractional,
                    Rule::PseudoCost => BranchRule::PseudoCost,
                },
                ..BbConfig::default()
            },
            build: BuildOptions { strict_integers: self.strict_integers },
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .format_target(false)
        .init();
    let cli = Cli::parse();
    let code = match &cli.command {
        Command::Solve { scenario, flags } => solve(scenario.as_deref(), flags),
        Command::Sweep { kind, values, scales, base, flags } => {
            sweep(*kind, values.clone(), scales.clone(), base.as_deref(), flags)
        }
        Command::Validate { scenario } => validate(scenario),
    };
    ExitCode::from(code.unwrap_or_else(|e| report_error(&e)))
}

fn print_json(v: &serde_json::Value) {
    println!("{}", serde_json::to_string_pretty(v).expect("json value"));
}

fn report_error(e: &Error) -> u8 {
    let mut body = json!({ "kind": e.kind(), "message": e.to_string() });
    match e {
        Error::Invalid(v) => body["violations"] = json!(v),
        Error::Parse { line, column, .. } => {
            body["line"] = json!(line);
            body["column"] = json!(column);
        }
        _ => {}
    }
    print_json(&json!({ "error": body }));
    match e {
        Error::Invalid(_) => exit::INVALID,
        Error::Io { .. } | Error::Parse { .. } | Error::InvalidArgument(_) => exit::INPUT,
        _ => exit::SOLVER,
    }
}

fn scenario_or_bundled(path: Option<&Path>) -> Result<Scenario, Error> {
    match path {
        Some(p) => load_scenario(p),
        None => Ok(Scenario::bundled()),
    }
}

fn solve(path: Option<&Path>, flags: &SolveFlags) -> Result<u8, Error> {
    let s = scenario_or_bundled(path)?;
    if let Some(seed) = flags.seed {
        info!("seed {seed} accepted; the solver is deterministic");
    }
    let run = run_scenario(&s, &flags.config())?;
    let artifacts = write_run(&run, &flags.out_dir)?;
    let files: Vec<String> = artifacts
        .solution
        .iter()
        .chain(&artifacts.properties)
        .chain(&artifacts.csv)
        .map(|p| p.display().to_string())
        .collect();
    let failures: Vec<&str> = run.properties.hard_failures().map(|c| c.name.as_str()).collect();
    print_json(&json!({
        "status": run.solution.status,
        "objective": run.solution.objective,
        "bound": run.solution.bound,
        "gap": run.solution.gap,
        "nodes": run.solution.nodes_explored,
        "dso_revenue_gross": run.settlement.dso_revenue_gross,
        "dso_revenue_net": run.settlement.dso_revenue_net,
        "deviation": run.settlement.deviation,
        "hard_property_failures": failures,
        "files": files,
    }));
    Ok(if !run.solution.status.has_certified_gap() {
        exit::SOLVER
    } else if !failures.is_empty() {
        exit::PROPERTY
    } else {
        exit::OK
    })
}

fn sweep(
    kind: Kind,
    values: Option<Vec<f64>>,
    scales: Option<Vec<f64>>,
    base: Option<&Path>,
    flags: &SolveFlags,
) -> Result<u8, Error> {
    let s = scenario_or_bundled(base)?;
    let spec = match kind {
        Kind::LmpScale => {
            if scales.is_some() {
                return Err(Error::InvalidArgument("--scales applies to gamma sweeps only".into()));
            }
            SweepSpec::lmp_scale(values.unwrap_or_else(default_lmp_factors))
        }
        Kind::Gamma => SweepSpec::gamma(
            values.unwrap_or_else(|| (0..=12).map(f64::from).collect()),
            scales.unwrap_or_else(|| DEFAULT_GAMMA_SCALES.to_vec()),
        ),
    };
    let rows_dir = flags.out_dir.join("rows");
    let result = run_sweep(&s, &spec, &flags.config(), flags.workers, Some(&rows_dir))?;
    let artifacts = write_sweep(&result, &flags.out_dir)?;
    let failed: Vec<usize> = result.rows.iter().enumerate().filter(|(_, r)| !r.ok()).map(|(k, _)| k).collect();
    print_json(&json!({
        "kind": spec.kind.name(),
        "rows": result.rows.len(),
        "failed_rows": failed,
        "files": artifacts.csv.iter().map(|p| p.display().to_string()).collect::<Vec<_>>(),
    }));
    Ok(if failed.is_empty() { exit::OK } else { exit::SOLVER })
}

fn validate(path: &Path) -> Result<u8, Error> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Io { path: path.display().to_string(), message: e.to_string() })?;
    // Parse without the validation pass so every violation gets listed.
    let s: Scenario = serde_json::from_str(&text)
        .map_err(|e| Error::Parse { line: e.line(), column: e.column(), message: e.to_string() })?;
    let violations = validate_scenario(&s);
    print_json(&json!({ "valid": violations.is_empty(), "violations": violations }));
    Ok(if violations.is_empty() { exit::OK } else { exit::INVALID })
}
