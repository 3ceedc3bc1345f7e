//! `comm-energy`: solve, baseline, oracle, calibrate and check scenarios.
//!
//! Exit codes: 0 when the run reached an optimum (or the check passed), 2
//! when the scenario is infeasible, 1 on any other error.

mod output;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use comm_energy::analysis::{compare_policies, energy_vs_baseline, priority_trace, DEFAULT_ACTIVITY_FRACTION};
use comm_energy::baselines::{
    brute_force_oracle, calibrate_gain, fixed_speed_profile, max_feasible_data, mean_speed, radio_of, solution_energy,
    water_filling, BaselineError,
};
use comm_energy::model::scenario_from_json;
use comm_energy::solver::{derivative_check, solve, SolveStatus, SolverOptions};
use comm_energy::transcription::{build_program, check_feasibility, evaluate_energy, BuildError};
use comm_energy::{Scenario, Solution};
use serde::Serialize;
use serde_json::json;

use output::{solution_csv, write_atomic, write_json, RunManifest};

const BITS_PER_MB: f64 = 8e6;

#[derive(Parser)]
#[command(name = "comm-energy", version, about = "Joint transmit-power and speed planning for data-offloading nodes")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the joint problem and write solution.csv, summary.json and manifest.json.
    Solve(SolveArgs),
    /// Water-filling power at each node's mean speed, ignoring interference.
    Baseline(BaselineArgs),
    /// Exhaustive speed-grid search on a tiny single-node scenario, next to the solver.
    Oracle(OracleArgs),
    /// Fit the antenna gain product to a fixed-speed maximum data volume.
    Calibrate(CalibrateArgs),
    /// Validate a scenario and compare analytic with finite-difference derivatives.
    Check(CheckArgs),
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Units {
    /// SI only.
    Si,
    /// Also print kJ, MB and km/h.
    Report,
}

#[derive(Args, Clone)]
struct SolverFlags {
    /// Override the number of grid intervals.
    #[arg(long)]
    knots: Option<usize>,
    /// JSON file with solver options; missing fields keep their defaults.
    #[arg(long)]
    options: Option<PathBuf>,
}

#[derive(Args)]
struct SolveArgs {
    /// Scenario JSON.
    #[arg(required_unless_present = "all", conflicts_with = "all")]
    scenario: Option<PathBuf>,
    /// Solve every *.json in this directory, each into its own subdirectory of --out.
    #[arg(long, value_name = "DIR")]
    all: Option<PathBuf>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Also solve the fixed-speed policy and compare deliverable data.
    #[arg(long)]
    compare_policies: bool,
    #[arg(long, value_enum, default_value = "si")]
    units: Units,
    #[command(flatten)]
    solver: SolverFlags,
}

#[derive(Args)]
struct BaselineArgs {
    scenario: PathBuf,
    /// Also write baseline.csv here.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    knots: Option<usize>,
}

#[derive(Args)]
struct OracleArgs {
    scenario: PathBuf,
    /// Speeds per knot in the search grid.
    #[arg(long, default_value_t = 20)]
    speed_grid: usize,
    #[command(flatten)]
    solver: SolverFlags,
}

#[derive(Args)]
struct CalibrateArgs {
    scenario: PathBuf,
    /// Target fixed-speed maximum, MB (8e6 bits).
    #[arg(long, required_unless_present = "target_bits")]
    target_mb: Option<f64>,
    #[arg(long, conflicts_with = "target_mb")]
    target_bits: Option<f64>,
}

#[derive(Args)]
struct CheckArgs {
    scenario: PathBuf,
    /// Finite-difference step, relative.
    #[arg(long, default_value_t = 1e-5)]
    step: f64,
    /// Largest accepted relative error.
    #[arg(long, default_value_t = 1e-6)]
    tolerance: f64,
    #[arg(long)]
    knots: Option<usize>,
}

/// How a command ended, mapped to the exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Outcome {
    Success,
    Infeasible,
    Failed,
}

impl Outcome {
    fn code(self) -> u8 {
        match self {
            Outcome::Success => 0,
            Outcome::Failed => 1,
            Outcome::Infeasible => 2,
        }
    }

    fn worst(self, other: Outcome) -> Outcome {
        use Outcome::*;
        match (self, other) {
            (Failed, _) | (_, Failed) => Failed,
            (Infeasible, _) | (_, Infeasible) => Infeasible,
            _ => Success,
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Solve(a) => cmd_solve(&a),
        Command::Baseline(a) => cmd_baseline(&a),
        Command::Oracle(a) => cmd_oracle(&a),
        Command::Calibrate(a) => cmd_calibrate(&a),
        Command::Check(a) => cmd_check(&a),
    };
    match result {
        Ok(outcome) => ExitCode::from(outcome.code()),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn load_scenario(path: &Path, knots: Option<usize>) -> Result<Scenario> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut cfg = scenario_from_json(&text).with_context(|| format!("invalid scenario {}", path.display()))?;
    if let Some(k) = knots {
        if k == 0 {
            bail!("--knots must be positive");
        }
        cfg.knot_count = k;
    }
    Ok(cfg)
}

fn load_options(flags: &SolverFlags) -> Result<SolverOptions> {
    match &flags.options {
        None => Ok(SolverOptions::default()),
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            serde_json::from_str(&text).with_context(|| format!("invalid solver options {}", p.display()))
        }
    }
}

// ---------------------------------------------------------------------------
// solve
// ---------------------------------------------------------------------------

#[derive(Serialize)]
struct PrioritySummary {
    transmitters: [usize; 2],
    active_knots: usize,
    defined_knots: usize,
    off_segment_knots: usize,
    min_priority: Option<f64>,
    max_priority: Option<f64>,
}

fn cmd_solve(args: &SolveArgs) -> Result<Outcome> {
    let opts = load_options(&args.solver)?;
    if let Some(dir) = &args.all {
        return solve_all(dir, args, &opts);
    }
    let path = args.scenario.as_ref().expect("clap enforces a scenario");
    solve_one(path, &args.out, args, &opts)
}

fn solve_all(dir: &Path, args: &SolveArgs, opts: &SolverOptions) -> Result<Outcome> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .with_context(|| format!("listing {}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    paths.sort();
    if paths.is_empty() {
        bail!("no *.json scenarios in {}", dir.display());
    }
    let results: Vec<(PathBuf, Result<Outcome>)> = std::thread::scope(|s| {
        let handles: Vec<_> = paths
            .iter()
            .map(|p| {
                let stem = p.file_stem().map(|s| s.to_os_string()).unwrap_or_default();
                let out = args.out.join(stem);
                s.spawn(move || (p.clone(), solve_one(p, &out, args, opts)))
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("solver thread panicked")).collect()
    });
    let mut overall = Outcome::Success;
    for (p, r) in results {
        let outcome = match r {
            Ok(o) => o,
            Err(e) => {
                eprintln!("{}: error: {e:#}", p.display());
                Outcome::Failed
            }
        };
        overall = overall.worst(outcome);
    }
    Ok(overall)
}

fn solve_one(path: &Path, out: &Path, args: &SolveArgs, opts: &SolverOptions) -> Result<Outcome> {
    let cfg = load_scenario(path, args.solver.knots)?;
    let mut manifest = RunManifest::start(path, cfg.config_hash(), opts.clone(), out);
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let started = Instant::now();
    let program = match build_program(&cfg) {
        Ok(p) => p,
        Err(e @ BuildError::Kinematics { .. }) => {
            eprintln!("{}: infeasible: {e}", path.display());
            write_json(
                &out.join("summary.json"),
                &json!({ "scenario": path, "status": SolveStatus::Infeasible, "note": e.to_string() }),
            )?;
            manifest.artifacts.push("summary.json".into());
            manifest.finish(SolveStatus::Infeasible)?;
            return Ok(Outcome::Infeasible);
        }
        Err(e) => return Err(e).context("building the program"),
    };
    let solution = solve(&program, opts);
    let status = solution.stats.status;
    let elapsed = started.elapsed().as_secs_f64();

    let mut summary = serde_json::Map::new();
    summary.insert("scenario".into(), json!(path));
    summary.insert("config_hash".into(), json!(manifest.config_hash));
    summary.insert("status".into(), json!(status));
    summary.insert("stats".into(), serde_json::to_value(&solution.stats)?);
    summary.insert("wall_time_s".into(), json!(elapsed));
    if status == SolveStatus::Optimal {
        let energy = evaluate_energy(&cfg, &solution);
        summary.insert("energy".into(), serde_json::to_value(&energy)?);
        summary.insert("extra_propulsion".into(), serde_json::to_value(energy_vs_baseline(&solution, &cfg))?);
        summary.insert("delivered_bits".into(), json!(solution.delivered_bits()));
        summary.insert("feasibility".into(), serde_json::to_value(check_feasibility(&cfg, &solution, 1e-6))?);
        if let Ok(trace) = priority_trace(&solution, &cfg, DEFAULT_ACTIVITY_FRACTION) {
            let p = PrioritySummary {
                transmitters: trace.transmitters,
                active_knots: trace.active_count(),
                defined_knots: trace.priority.iter().flatten().count(),
                off_segment_knots: trace.flagged_count(),
                min_priority: trace.min_priority(),
                max_priority: trace.max_priority(),
            };
            summary.insert("priority".into(), serde_json::to_value(p)?);
        }
        let csv = solution_csv(&cfg, &solution);
        write_atomic(&out.join("solution.csv"), csv.as_bytes())?;
        manifest.artifacts.push("solution.csv".into());
    } else if status == SolveStatus::Infeasible {
        summary.insert("note".into(), json!(solution.stats.message));
        eprintln!("{}: infeasible: {}", path.display(), solution.stats.message);
    } else {
        eprintln!("{}: solver stopped with {:?}: {}", path.display(), status, solution.stats.message);
    }
    if args.compare_policies {
        let comparison = compare_policies(&cfg, opts).context("comparing policies")?;
        summary.insert("policy_comparison".into(), serde_json::to_value(&comparison)?);
        if args.units == Units::Report {
            println!(
                "max data: joint {:.2} MB, fixed speed {:.2} MB, uplift {:.4}",
                comparison.joint.max_data_bits / BITS_PER_MB,
                comparison.fixed_speed.max_data_bits / BITS_PER_MB,
                comparison.uplift
            );
        } else {
            println!(
                "max data: joint {:.6e} bits, fixed speed {:.6e} bits, uplift {:.4}",
                comparison.joint.max_data_bits, comparison.fixed_speed.max_data_bits, comparison.uplift
            );
        }
    }
    write_json(&out.join("summary.json"), &summary)?;
    manifest.artifacts.push("summary.json".into());
    manifest.finish(status)?;

    print_solve_report(path, &cfg, &solution, args.units);
    Ok(match status {
        SolveStatus::Optimal => Outcome::Success,
        SolveStatus::Infeasible => Outcome::Infeasible,
        _ => Outcome::Failed,
    })
}

fn print_solve_report(path: &Path, cfg: &Scenario, solution: &Solution, units: Units) {
    let stats = &solution.stats;
    println!(
        "{}: {:?} after {} iterations ({} in phase one)",
        path.display(),
        stats.status,
        stats.iterations,
        stats.phase_one_iterations
    );
    if stats.status != SolveStatus::Optimal {
        return;
    }
    let energy = evaluate_energy(cfg, solution);
    println!("total energy {:.6e} J", energy.total);
    if units != Units::Report {
        return;
    }
    println!(
        "total {:.2} kJ = transmission {:.2} kJ + propulsion {:.2} kJ",
        energy.total / 1e3,
        energy.transmission / 1e3,
        energy.propulsion / 1e3
    );
    for n in &energy.nodes {
        let speed = &solution.node(n.id).speed;
        let lo = speed.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = speed.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        println!(
            "node {}: transmission {:.2} kJ, propulsion {:.2} kJ (extra {:.2} kJ), data {:.2} MB, speed {:.1}-{:.1} km/h",
            n.id,
            n.transmission / 1e3,
            (n.drag_work + n.kinetic_change) / 1e3,
            n.extra_propulsion / 1e3,
            cfg.node(n.id).initial_data / BITS_PER_MB,
            lo * 3.6,
            hi * 3.6
        );
    }
}

// ---------------------------------------------------------------------------
// baseline
// ---------------------------------------------------------------------------

#[derive(Serialize)]
struct NodeBaseline {
    node: usize,
    mean_speed_mps: f64,
    data_bits: f64,
    max_data_bits: f64,
    water_level_w: Option<f64>,
    energy_j: Option<f64>,
    delivered_bits: Option<f64>,
    note: Option<String>,
}

fn cmd_baseline(args: &BaselineArgs) -> Result<Outcome> {
    let cfg = load_scenario(&args.scenario, args.knots)?;
    let mut outcome = Outcome::Success;
    let mut rows = Vec::new();
    let mut columns: Vec<(String, Vec<f64>)> = Vec::new();
    for id in 1..=cfg.node_count() {
        let profile = fixed_speed_profile(&cfg, id);
        let radio = radio_of(&cfg, id);
        let data = cfg.node(id).initial_data;
        let max = max_feasible_data(&profile, &radio);
        if columns.is_empty() {
            columns.push(("t_s".into(), profile.knot_times.clone()));
        }
        let mut row = NodeBaseline {
            node: id,
            mean_speed_mps: mean_speed(&cfg, id),
            data_bits: data,
            max_data_bits: max,
            water_level_w: None,
            energy_j: None,
            delivered_bits: None,
            note: None,
        };
        match water_filling(&profile, data, &radio) {
            Ok(fill) => {
                row.water_level_w = Some(fill.level);
                row.energy_j = Some(fill.energy);
                row.delivered_bits = Some(fill.delivered);
                columns.push((format!("p_W_{id}_0"), fill.power));
                columns.push((format!("r_bps_{id}_0"), fill.rate));
            }
            Err(e @ BaselineError::Infeasible { .. }) => {
                eprintln!("node {id}: infeasible: {e}");
                row.note = Some(e.to_string());
                outcome = outcome.worst(Outcome::Infeasible);
            }
            Err(e) => return Err(e.into()),
        }
        rows.push(row);
    }
    println!("{}", serde_json::to_string_pretty(&rows)?);
    if let Some(dir) = &args.out {
        let mut csv = columns.iter().map(|c| c.0.as_str()).collect::<Vec<_>>().join(",");
        csv.push('\n');
        for k in 0..columns[0].1.len() {
            let line: Vec<String> = columns.iter().map(|c| c.1[k].to_string()).collect();
            csv.push_str(&line.join(","));
            csv.push('\n');
        }
        write_atomic(&dir.join("baseline.csv"), csv.as_bytes())?;
    }
    Ok(outcome)
}

// ---------------------------------------------------------------------------
// oracle, calibrate, check
// ---------------------------------------------------------------------------

fn cmd_oracle(args: &OracleArgs) -> Result<Outcome> {
    let cfg = load_scenario(&args.scenario, args.solver.knots)?;
    let opts = load_options(&args.solver)?;
    let oracle = brute_force_oracle(&cfg, args.speed_grid)?;
    let program = build_program(&cfg)?;
    let solution = solve(&program, &opts);
    println!("oracle energy  {:.6e} J ({} candidate speed profiles)", oracle.energy, oracle.candidates);
    if solution.stats.status != SolveStatus::Optimal {
        println!("solver status  {:?}: {}", solution.stats.status, solution.stats.message);
        return Ok(if solution.stats.status == SolveStatus::Infeasible {
            Outcome::Infeasible
        } else {
            Outcome::Failed
        });
    }
    let solver = solution_energy(&cfg, &solution);
    println!("solver energy  {solver:.6e} J");
    println!("oracle/solver  {:.6}", oracle.energy / solver);
    Ok(Outcome::Success)
}

fn cmd_calibrate(args: &CalibrateArgs) -> Result<Outcome> {
    let cfg = load_scenario(&args.scenario, None)?;
    let target = match (args.target_mb, args.target_bits) {
        (Some(mb), _) => mb * BITS_PER_MB,
        (None, Some(bits)) => bits,
        (None, None) => unreachable!("clap requires a target"),
    };
    let g = calibrate_gain(&cfg, target)?;
    let mut fitted = cfg.clone();
    fitted.channel.antenna_gain_product = g;
    let reached = max_feasible_data(&fixed_speed_profile(&fitted, 1), &radio_of(&fitted, 1));
    println!("antenna_gain_product = {g:?}");
    println!("fixed-speed maximum  = {reached:.6e} bits ({:.4} MB)", reached / BITS_PER_MB);
    Ok(Outcome::Success)
}

fn cmd_check(args: &CheckArgs) -> Result<Outcome> {
    let cfg = load_scenario(&args.scenario, args.knots)?;
    println!("scenario valid: {} node(s), {} intervals, hash {}", cfg.node_count(), cfg.knot_count, cfg.config_hash());
    let program = match build_program(&cfg) {
        Ok(p) => p,
        Err(e @ BuildError::Kinematics { .. }) => {
            println!("infeasible: {e}");
            return Ok(Outcome::Infeasible);
        }
        Err(e) => return Err(e.into()),
    };
    println!(
        "program: {} slots, {} free, {} inequalities",
        program.variable_count(),
        program.free_count(),
        program.inequalities().len()
    );
    let report = derivative_check(&program, program.initial_point(), args.step);
    println!("objective gradient   {:.3e}", report.objective_gradient);
    println!("objective hessian    {:.3e}", report.objective_hessian);
    println!("inequality gradient  {:.3e}", report.inequality_gradient);
    println!("inequality hessian   {:.3e}", report.inequality_hessian);
    let ok = report.worst() < args.tolerance;
    println!("derivative check {}", if ok { "passed" } else { "FAILED" });
    Ok(if ok { Outcome::Success } else { Outcome::Failed })
}
