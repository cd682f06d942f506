//! Command-line front end: Monte Carlo runs, parameter sweeps, one-shot
//! feasibility checks, and the brute-force oracle.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use jpac::admission::JpacConfig;
use jpac::harness::{
    feascheck, run_experiment, AlgorithmChoice, FeascheckMethod, RunConfig, SweepParam, SweepSpec,
};
use jpac::model::{Direction, NetworkTopology, SinrAssignment};
use jpac::scenario::{
    build_hex_7cell, build_three_tier, build_two_tier_4cell, FourCellVariant, ScenarioSpec,
    ThreeTierOverrides,
};

#[derive(Parser)]
#[command(name = "jpac", version, about = "SINR feasibility and prioritized admission control simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a Monte Carlo experiment at a single operating point.
    Run(RunArgs),
    /// Sweep one parameter across a list of values.
    Sweep(SweepArgs),
    /// Check feasibility of one assignment on a topology file.
    Feascheck(FeascheckArgs),
    /// Brute-force optimum admitted set (at most 14 users).
    Oracle(OracleArgs),
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ScenarioName {
    ThreeTier,
    FourCellA,
    FourCellB,
    Hex,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum DirectionArg {
    Uplink,
    Downlink,
}

impl From<DirectionArg> for Direction {
    fn from(d: DirectionArg) -> Self {
        match d {
            DirectionArg::Uplink => Direction::Uplink,
            DirectionArg::Downlink => Direction::Downlink,
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum AlgorithmArg {
    Mespa,
    Mlspa,
    Oracle,
}

impl From<AlgorithmArg> for AlgorithmChoice {
    fn from(a: AlgorithmArg) -> Self {
        match a {
            AlgorithmArg::Mespa => AlgorithmChoice::Mespa,
            AlgorithmArg::Mlspa => AlgorithmChoice::Mlspa,
            AlgorithmArg::Oracle => AlgorithmChoice::Oracle,
        }
    }
}

#[derive(Args)]
struct ExperimentArgs {
    /// Stock scenario to run.
    #[arg(long, value_enum, default_value = "three-tier")]
    scenario: ScenarioName,
    /// JSON scenario spec; overrides --scenario.
    #[arg(long)]
    spec_file: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "downlink")]
    direction: DirectionArg,
    #[arg(long, value_enum, default_value = "mespa")]
    algorithm: AlgorithmArg,
    #[arg(long, default_value_t = 200)]
    snapshots: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Output stem; writes <out>.snapshots.csv and <out>.means.csv.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    workers: usize,
    /// Record wall time per snapshot (makes CSVs non-reproducible).
    #[arg(long, default_value_t = false)]
    timing: bool,
    /// Restrict removal candidates to the worst BS's own users.
    #[arg(long, default_value_t = false)]
    restrict_to_bs: bool,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    experiment: ExperimentArgs,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum SweepParamArg {
    Users,
    Gamma,
    Shadowing,
}

#[derive(Args)]
struct SweepArgs {
    /// Parameter to sweep.
    #[arg(value_enum)]
    param: SweepParamArg,
    /// Comma-separated sweep values (users: mean added per tier;
    /// gamma: dB pivot of the {v, v-6} choice set; shadowing: dB).
    #[arg(long, value_delimiter = ',', required = true)]
    values: Vec<f64>,
    #[command(flatten)]
    experiment: ExperimentArgs,
}

#[derive(Args)]
struct FeascheckArgs {
    /// Topology JSON file.
    #[arg(long)]
    topology: PathBuf,
    #[arg(long, value_enum, default_value = "uplink")]
    direction: DirectionArg,
    #[arg(long, value_enum, default_value = "reduced")]
    method: FeascheckMethodArg,
    /// Admitted users: "all" or a comma-separated index list.
    #[arg(long, default_value = "all")]
    admitted: String,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum FeascheckMethodArg {
    Classic,
    Reduced,
}

#[derive(Args)]
struct OracleArgs {
    #[arg(long)]
    topology: PathBuf,
    #[arg(long, value_enum, default_value = "uplink")]
    direction: DirectionArg,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Run(args) => run_command(args.experiment, None),
        Command::Sweep(args) => {
            let param = match args.param {
                SweepParamArg::Users => SweepParam::Users,
                SweepParamArg::Gamma => SweepParam::Gamma,
                SweepParamArg::Shadowing => SweepParam::Shadowing,
            };
            run_command(args.experiment, Some(SweepSpec { param, values: args.values }))
        }
        Command::Feascheck(args) => feascheck_command(args),
        Command::Oracle(args) => oracle_command(args),
    }
}

fn load_scenario(args: &ExperimentArgs) -> Result<ScenarioSpec, String> {
    if let Some(path) = &args.spec_file {
        let text = std::fs::read_to_string(path)
            .map_err(|e| format!("cannot read {}: {e}", path.display()))?;
        return serde_json::from_str(&text)
            .map_err(|e| format!("cannot parse {}: {e}", path.display()));
    }
    Ok(match args.scenario {
        ScenarioName::ThreeTier => build_three_tier(&ThreeTierOverrides::default()),
        ScenarioName::FourCellA => build_two_tier_4cell(FourCellVariant::SpreadNetworkWide),
        ScenarioName::FourCellB => build_two_tier_4cell(FourCellVariant::NearServingBs),
        ScenarioName::Hex => build_hex_7cell(),
    })
}

fn run_command(args: ExperimentArgs, sweep: Option<SweepSpec>) -> ExitCode {
    let scenario = match load_scenario(&args) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    let config = RunConfig {
        scenario,
        algorithm: args.algorithm.into(),
        direction: args.direction.into(),
        snapshots: args.snapshots,
        master_seed: args.seed,
        sweep,
        workers: args.workers,
        timing: args.timing,
        jpac: JpacConfig { restrict_to_candidate_bs: args.restrict_to_bs, ..Default::default() },
    };
    let stats = match run_experiment(&config) {
        Ok(stats) => stats,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    };
    println!("sweep_value  tier  priority  snapshots  mean_total  mean_outage");
    for agg in &stats.aggregates {
        println!(
            "{:>11}  {:>4}  {:>8}  {:>9}  {:>10.3}  {:>11.4}",
            agg.sweep_value, agg.tier, agg.priority, agg.snapshots, agg.mean_total, agg.mean_outage
        );
    }
    if let Some(out) = &args.out {
        let snapshots_path = out.with_extension("snapshots.csv");
        let means_path = out.with_extension("means.csv");
        if let Err(e) = std::fs::write(&snapshots_path, stats.snapshots_csv())
            .and_then(|_| std::fs::write(&means_path, stats.means_csv()))
        {
            eprintln!("error: cannot write output: {e}");
            return ExitCode::from(1);
        }
        println!("wrote {} and {}", snapshots_path.display(), means_path.display());
    }
    ExitCode::SUCCESS
}

fn load_topology(path: &PathBuf) -> Result<NetworkTopology, String> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| format!("cannot read {}: {e}", path.display()))?;
    serde_json::from_str(&text).map_err(|e| format!("cannot parse {}: {e}", path.display()))
}

fn parse_admitted(raw: &str, num_users: usize) -> Result<Vec<usize>, String> {
    if raw.trim() == "all" {
        return Ok((0..num_users).collect());
    }
    let mut users = Vec::new();
    for part in raw.split(',') {
        let part = part.trim();
        if part.is_empty() {
            continue;
        }
        let idx: usize = part.parse().map_err(|_| format!("bad user index '{part}'"))?;
        if idx >= num_users {
            return Err(format!("user index {idx} out of range (M = {num_users})"));
        }
        users.push(idx);
    }
    Ok(users)
}

fn feascheck_command(args: FeascheckArgs) -> ExitCode {
    let topo = match load_topology(&args.topology) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    let admitted = match parse_admitted(&args.admitted, topo.num_users()) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    let direction: Direction = args.direction.into();
    let assignment = SinrAssignment::from_admitted(topo.num_users(), direction, admitted);
    let method = match args.method {
        FeascheckMethodArg::Classic => FeascheckMethod::Classic,
        FeascheckMethodArg::Reduced => FeascheckMethod::Reduced,
    };
    let outcome = feascheck(&topo, &assignment, method);

    println!(
        "verdict: {}{}",
        if outcome.feasible { "feasible" } else { "infeasible" },
        if outcome.singular { " (singular: assignment sits on the feasibility boundary)" } else { "" }
    );
    if !outcome.aggregate.is_empty() {
        println!("bs  aggregate  bound");
        for (m, (agg, bound)) in outcome.aggregate.iter().zip(&outcome.upper_bound).enumerate() {
            println!("{m:>2}  {agg:.6e}  {bound:.6e}");
        }
    }
    if let Some(powers) = &outcome.powers {
        println!("user  power_w");
        for (i, p) in powers.per_user.iter().enumerate() {
            println!("{i:>4}  {p:.6e}");
        }
    }
    if outcome.feasible {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    }
}

fn oracle_command(args: OracleArgs) -> ExitCode {
    let topo = match load_topology(&args.topology) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    match jpac::admission::brute_force_oracle(&topo, args.direction.into()) {
        Ok(result) => {
            println!("optimal admitted count: {}", result.optimal_count);
            println!("one optimal set: {:?}", result.admitted);
            println!("user  power_w");
            for (i, p) in result.powers.per_user.iter().enumerate() {
                println!("{i:>4}  {p:.6e}");
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
