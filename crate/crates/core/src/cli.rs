//! Command-line front end: `build-cost`, `simulate`, `report`, `generate`.
//!
//! Exit codes: 0 success, 2 invalid input, 3 infeasible scenario.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use thiserror::Error;

use crate::cost::{CostModel, CostParams};
use crate::generate::{generate, GenerateOptions, DEFAULT_SEED};
use crate::network::{load_network, RailNetwork};
use crate::report::{emit, summarize, Format};
use crate::scenario::{
    build_solver_inputs, Scenario, ScenarioError, DEFAULT_CAPACITY_RATIO, DEFAULT_OPERATING_HOURS,
    DEFAULT_T_LM,
};
use crate::solver::{solve, PlanFile, PlanStatus, SolverInstance};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INVALID: i32 = 2;
pub const EXIT_INFEASIBLE: i32 = 3;

pub const LOG_ENV: &str = "RAIL_EVAC_LOG";

#[derive(Parser, Debug)]
#[command(name = "rail-evac", version, about = "Evacuation plans for disrupted railway stations")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Build the fused travel-cost matrix and write its finite entries as JSON.
    BuildCost {
        #[command(flatten)]
        network: NetworkArgs,
        #[command(flatten)]
        cost: CostArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Solve a disruption scenario and write plan.json.
    Simulate {
        #[command(flatten)]
        network: NetworkArgs,
        #[command(flatten)]
        cost: CostArgs,
        #[command(flatten)]
        scenario: ScenarioArgs,
        #[arg(long)]
        out: PathBuf,
        /// Also write a report in `--format`.
        #[arg(long)]
        report_out: Option<PathBuf>,
        #[command(flatten)]
        render: RenderArgs,
    },
    /// Summarize an existing plan.json.
    Report {
        #[command(flatten)]
        network: NetworkArgs,
        #[command(flatten)]
        cost: CostArgs,
        #[command(flatten)]
        scenario: ScenarioArgs,
        #[arg(long)]
        plan: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        render: RenderArgs,
    },
    /// Write a seeded synthetic network (stations.csv, lines.csv, passengers.csv).
    Generate {
        #[arg(long, default_value_t = DEFAULT_SEED)]
        seed: u64,
        #[arg(long = "stations", default_value_t = 10)]
        n_stations: usize,
        #[arg(long = "lines", default_value_t = 2)]
        n_lines: usize,
        #[arg(long, default_value_t = 3)]
        operators: usize,
        #[arg(long)]
        out_dir: PathBuf,
    },
}

#[derive(Args, Debug, Clone)]
pub struct NetworkArgs {
    #[arg(long)]
    pub stations: PathBuf,
    #[arg(long)]
    pub lines: PathBuf,
    #[arg(long)]
    pub passengers: PathBuf,
}

#[derive(Args, Debug, Clone)]
pub struct CostArgs {
    /// Disruption window in minutes [default: 30].
    #[arg(long)]
    pub tlm: Option<f64>,
    /// Walking speed in km/h.
    #[arg(long, default_value_t = 5.0)]
    pub walk_speed: f64,
    /// Minutes per adjacent rail hop.
    #[arg(long, default_value_t = 2.0)]
    pub hop_time: f64,
    /// Allow one intermediate station when computing costs.
    #[arg(long)]
    pub one_transfer: bool,
}

#[derive(Args, Debug, Clone)]
pub struct ScenarioArgs {
    /// scenario.json; excludes the inline scenario flags.
    #[arg(long, conflicts_with_all = ["blocked", "capacity_ratio", "operating_hours", "tlm"])]
    pub scenario: Option<PathBuf>,
    /// Blocked station id; repeat for several.
    #[arg(long)]
    pub blocked: Vec<String>,
    /// Capacity multiplier (> 1) [default: 1.5].
    #[arg(long)]
    pub capacity_ratio: Option<f64>,
    /// Daily operating hours [default: 20].
    #[arg(long)]
    pub operating_hours: Option<f64>,
}

#[derive(Args, Debug, Clone)]
pub struct RenderArgs {
    #[arg(long, default_value = "json")]
    pub format: String,
    #[arg(long)]
    pub top_k: Option<usize>,
}

#[derive(Error, Debug)]
pub enum CliError {
    #[error("{0}")]
    Invalid(String),
    #[error("{0}")]
    Infeasible(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Invalid(_) => EXIT_INVALID,
            CliError::Infeasible(_) => EXIT_INFEASIBLE,
        }
    }
}

fn invalid(e: impl std::fmt::Display) -> CliError {
    CliError::Invalid(e.to_string())
}

/// Runs a parsed command line and returns the process exit code. Errors are
/// printed to stderr.
pub fn run(cli: Cli) -> i32 {
    match execute(cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn execute(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::BuildCost { network, cost, out } => {
            let net = load(&network)?;
            let params = cost_params(&cost, cost.tlm.unwrap_or(DEFAULT_T_LM))?;
            let model = CostModel::build(&net, params).map_err(invalid)?;
            log::info!("{} reachable pairs within {} min", model.reachable_pairs(), params.t_lm);
            write_json(&out, &model.to_dump(&net))
        }
        Command::Simulate {
            network,
            cost,
            scenario,
            out,
            report_out,
            render,
        } => {
            let format = parse_format(&render)?;
            let net = load(&network)?;
            let scenario = load_scenario(&scenario, &cost, &net)?;
            let instance = solver_inputs(&net, &cost, &scenario)?;
            let plan = solve(&instance).map_err(invalid)?;
            if plan.status == PlanStatus::Infeasible {
                let detail: Vec<String> = plan
                    .shortfall
                    .iter()
                    .map(|s| {
                        format!(
                            "{}: demand {:.1}, unmet {:.1}",
                            net.station(s.origin).station_id,
                            s.demand,
                            s.unmet
                        )
                    })
                    .collect();
                return Err(CliError::Infeasible(format!(
                    "infeasible scenario; shortfall {}",
                    detail.join("; ")
                )));
            }
            write_json(&out, &PlanFile::new(&plan, &net))?;
            let report = summarize(&plan, &instance, &net).map_err(invalid)?;
            println!("{}", report.headline());
            if let Some(path) = report_out {
                let body = emit(&report, format, render.top_k).map_err(invalid)?;
                write_atomic(&path, body.as_bytes())?;
            }
            Ok(())
        }
        Command::Report {
            network,
            cost,
            scenario,
            plan,
            out,
            render,
        } => {
            let format = parse_format(&render)?;
            let net = load(&network)?;
            let scenario = load_scenario(&scenario, &cost, &net)?;
            let instance = solver_inputs(&net, &cost, &scenario)?;
            let text = std::fs::read_to_string(&plan)
                .map_err(|e| invalid(format!("{}: {e}", plan.display())))?;
            let file: PlanFile =
                serde_json::from_str(&text).map_err(|e| invalid(format!("{}: {e}", plan.display())))?;
            let plan_data = file
                .to_plan(&net, instance.epsilon)
                .map_err(|e| invalid(format!("{}: {e}", plan.display())))?;
            let report = summarize(&plan_data, &instance, &net).map_err(invalid)?;
            let body = emit(&report, format, render.top_k).map_err(invalid)?;
            write_atomic(&out, body.as_bytes())
        }
        Command::Generate {
            seed,
            n_stations,
            n_lines,
            operators,
            out_dir,
        } => {
            let opts = GenerateOptions {
                seed,
                stations: n_stations,
                lines: n_lines,
                operators,
                ..GenerateOptions::default()
            };
            generate(&opts)
                .and_then(|g| g.write_to(&out_dir))
                .map_err(invalid)
        }
    }
}

fn parse_format(render: &RenderArgs) -> Result<Format, CliError> {
    render.format.parse().map_err(|e| invalid(format!("--format: {e}")))
}

fn load(args: &NetworkArgs) -> Result<RailNetwork, CliError> {
    let (net, summary) = load_network(&args.stations, &args.lines, &args.passengers).map_err(invalid)?;
    if summary.warning_count() > 0 {
        log::warn!(
            "{} station(s) without passenger data: {}",
            summary.warning_count(),
            summary.missing_passengers.join(", ")
        );
    }
    log::info!(
        "loaded {} stations, {} lines, {} operators",
        summary.stations,
        summary.lines,
        summary.operators
    );
    Ok(net)
}

fn cost_params(args: &CostArgs, t_lm: f64) -> Result<CostParams, CliError> {
    let params = CostParams {
        walk_speed: args.walk_speed,
        hop_time: args.hop_time,
        t_lm,
        one_transfer: args.one_transfer,
        ..CostParams::default()
    };
    params.validate().map_err(|e| {
        let flag = match e {
            crate::cost::CostError::WalkSpeed(_) => "--walk-speed",
            crate::cost::CostError::HopTime(_) => "--hop-time",
            crate::cost::CostError::Window(_) => "--tlm",
        };
        invalid(format!("{flag}: {e}"))
    })?;
    Ok(params)
}

fn load_scenario(args: &ScenarioArgs, cost: &CostArgs, net: &RailNetwork) -> Result<Scenario, CliError> {
    if let Some(path) = &args.scenario {
        let text = std::fs::read_to_string(path).map_err(|e| invalid(format!("{}: {e}", path.display())))?;
        let scenario: Scenario =
            serde_json::from_str(&text).map_err(|e| invalid(format!("{}: {e}", path.display())))?;
        scenario
            .validate(net)
            .map_err(|e| invalid(format!("{}: {e}", path.display())))?;
        return Ok(scenario);
    }
    if args.blocked.is_empty() {
        return Err(invalid("--blocked or --scenario is required"));
    }
    let mut scenario = Scenario::new(args.blocked.iter().cloned());
    scenario.t_lm = cost.tlm.unwrap_or(DEFAULT_T_LM);
    scenario.capacity_ratio = args.capacity_ratio.unwrap_or(DEFAULT_CAPACITY_RATIO);
    scenario.operating_hours = args.operating_hours.unwrap_or(DEFAULT_OPERATING_HOURS);
    scenario.validate(net).map_err(|e| {
        let flag = match e {
            ScenarioError::UnknownStation(_) | ScenarioError::NoBlocked => "--blocked",
            ScenarioError::CapacityRatio { .. } => "--capacity-ratio",
            ScenarioError::OperatingHours(_) => "--operating-hours",
            ScenarioError::Window(_) => "--tlm",
            _ => "scenario",
        };
        invalid(format!("{flag}: {e}"))
    })?;
    Ok(scenario)
}

fn solver_inputs(net: &RailNetwork, cost: &CostArgs, scenario: &Scenario) -> Result<SolverInstance, CliError> {
    let params = cost_params(cost, scenario.t_lm)?;
    let model = CostModel::build(net, params).map_err(invalid)?;
    build_solver_inputs(net, &model, scenario).map_err(|e| match e {
        ScenarioError::Infeasible(_) => CliError::Infeasible(e.to_string()),
        other => invalid(other),
    })
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let body = serde_json::to_string_pretty(value).map_err(invalid)? + "\n";
    write_atomic(path, body.as_bytes())
}

/// Writes to a sibling temp file, then renames over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let name = path
        .file_name()
        .ok_or_else(|| invalid(format!("{}: not a file path", path.display())))?;
    let mut tmp_name = std::ffi::OsString::from(".");
    tmp_name.push(name);
    tmp_name.push(format!(".{}.tmp", std::process::id()));
    let tmp = path.with_file_name(tmp_name);
    let fail = |e: std::io::Error| invalid(format!("{}: {e}", path.display()));
    std::fs::write(&tmp, bytes).map_err(fail)?;
    std::fs::rename(&tmp, path).map_err(|e| {
        let _ = std::fs::remove_file(&tmp);
        fail(e)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn cli_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn scenario_file_excludes_inline_flags() {
        let r = Cli::try_parse_from([
            "rail-evac", "simulate", "--stations", "s", "--lines", "l", "--passengers", "p",
            "--scenario", "x.json", "--blocked", "A", "--out", "o",
        ]);
        assert!(r.is_err());
        let r = Cli::try_parse_from([
            "rail-evac", "simulate", "--stations", "s", "--lines", "l", "--passengers", "p",
            "--scenario", "x.json", "--tlm", "60", "--out", "o",
        ]);
        assert!(r.is_err());
    }

    #[test]
    fn repeated_blocked_flag() {
        let cli = Cli::try_parse_from([
            "rail-evac", "simulate", "--stations", "s", "--lines", "l", "--passengers", "p",
            "--blocked", "A", "--blocked", "B", "--out", "o",
        ])
        .unwrap();
        match cli.command {
            Command::Simulate { scenario, .. } => assert_eq!(scenario.blocked, ["A", "B"]),
            _ => unreachable!(),
        }
    }

    #[test]
    fn atomic_write_replaces() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("out.json");
        write_atomic(&p, b"one").unwrap();
        write_atomic(&p, b"two").unwrap();
        assert_eq!(std::fs::read(&p).unwrap(), b"two");
        assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 1);
    }
}
