//! Command-line frontend: loads a scenario and a vehicle trace, runs the
//! simulation (or a one-shot solve, or trace synthesis), and writes the
//! documented CSV/JSON artifacts.
//!
//! Exit codes are the only process-level failure signal:
//! `0` success, `2` invalid input (arguments, files, overrides),
//! `3` infeasible scenario (demand that cannot be placed at the first
//! window). Every output file is written via a temporary sibling and a
//! rename, so failures never leave partial files behind.

use std::fs::{self, File};
use std::io::BufReader;
use std::path::PathBuf;
use std::process::ExitCode;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

use revsim::delaymodel::compute_delay_matrix;
use revsim::output;
use revsim::placement::{
    map_with_overflow, psvm_table, solve_sp, solve_srp, DemandProfile, PlacementError,
    SecondaryCandidate, SrpMode,
};
use revsim::scenario::{NodeStatus, Scenario};
use revsim::simulator::{self, MetricsLog, RunMode, SimError};
use revsim::traces::{
    bin_requests, parse_trace, synth_trace, write_canonical, Mobility, RequestWindow, TraceFormat,
};

#[derive(Parser)]
#[command(
    name = "revsim",
    version,
    about = "Attack-resilient edge service placement simulator",
    propagate_version = true
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Simulate one policy over a trace and write metrics/summary/decisions.
    Run(RunArgs),
    /// Run both policies on identical inputs and write the paired reports.
    Compare(CompareArgs),
    /// Solve a single window and print the placement as JSON.
    SolveOnce(SolveOnceArgs),
    /// Synthesize a vehicle trace in the canonical CSV format.
    GenTrace(GenTraceArgs),
}

/// Inputs shared by every simulating subcommand.
#[derive(Args)]
struct InputArgs {
    /// Scenario description (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Vehicle trace file.
    #[arg(long)]
    trace: PathBuf,
    /// Trace format: canonical, cabspotting, tdrive, or rome.
    #[arg(long, default_value = "canonical")]
    format: String,
    /// Override the scenario's window length.
    #[arg(long)]
    window_seconds: Option<u32>,
    /// Seed for service assignment and critic initialization.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Override the resource/delay blend of the placement objective (0..=1).
    #[arg(long)]
    alpha: Option<f64>,
    /// Override the re-optimization threshold on the critic score (0..=1).
    #[arg(long)]
    q_threshold: Option<f64>,
    /// Override the signal propagation speed, meters/second.
    #[arg(long)]
    prop_speed: Option<f64>,
    /// Override the critic hidden-layer widths, e.g. `32,16`.
    #[arg(long)]
    critic_hidden: Option<String>,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    input: InputArgs,
    /// Output directory (created if missing).
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Placement policy: `ours` (resilient) or `br` (backup reservation).
    #[arg(long, default_value = "ours")]
    mode: String,
    /// Include solver wall times in the outputs (breaks byte-for-byte
    /// reproducibility across runs).
    #[arg(long)]
    timing: bool,
}

#[derive(Args)]
struct CompareArgs {
    #[command(flatten)]
    input: InputArgs,
    /// Output directory (created if missing).
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Include solver wall times in the outputs.
    #[arg(long)]
    timing: bool,
}

#[derive(Args)]
struct SolveOnceArgs {
    #[command(flatten)]
    input: InputArgs,
    /// Which binned window to solve.
    #[arg(long, default_value_t = 0)]
    window: u32,
    /// Also print the failover table entry and recovery placement for this
    /// node's failure.
    #[arg(long)]
    fail_node: Option<u16>,
}

#[derive(Args)]
struct GenTraceArgs {
    /// Destination file for the canonical CSV.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 240)]
    vehicles: u32,
    #[arg(long, default_value_t = 10)]
    windows: u32,
    #[arg(long, default_value_t = 60)]
    window_seconds: u32,
    /// Vehicle mobility: `stationary` or `waypoint`.
    #[arg(long, default_value = "waypoint")]
    mobility: String,
    /// Study region width, meters.
    #[arg(long, default_value_t = 15_000.0)]
    width_m: f64,
    /// Study region height, meters.
    #[arg(long, default_value_t = 15_000.0)]
    height_m: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

// ---------------------------------------------------------------------------
// Error-to-exit-code mapping
// ---------------------------------------------------------------------------

enum CliError {
    /// Bad arguments, unreadable or malformed inputs → exit 2.
    Validation(String),
    /// Well-formed but unplaceable scenario → exit 3.
    Infeasible(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Validation(_) => 2,
            CliError::Infeasible(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Validation(m) | CliError::Infeasible(m) => m,
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Validation(e.to_string())
    }
}

fn invalid(msg: impl Into<String>) -> CliError {
    CliError::Validation(msg.into())
}

fn sim_error(e: SimError) -> CliError {
    match &e {
        SimError::InitialPlacement(PlacementError::InfeasibleDemand { .. }) => {
            CliError::Infeasible(format!("structurally infeasible: {e}"))
        }
        SimError::InitialPlacement(_) => CliError::Infeasible(e.to_string()),
        _ => CliError::Validation(e.to_string()),
    }
}

fn placement_error(e: PlacementError) -> CliError {
    match &e {
        PlacementError::InfeasibleDemand { .. } => {
            CliError::Infeasible(format!("structurally infeasible: {e}"))
        }
        _ => CliError::Infeasible(e.to_string()),
    }
}

// ---------------------------------------------------------------------------
// Input loading
// ---------------------------------------------------------------------------

fn parse_hidden(spec: &str) -> Result<Vec<usize>, CliError> {
    let widths: Result<Vec<usize>, _> =
        spec.split(',').map(|w| w.trim().parse::<usize>()).collect();
    match widths {
        Ok(w) if !w.is_empty() && w.iter().all(|&x| (1..=4096).contains(&x)) => Ok(w),
        _ => Err(invalid(format!(
            "--critic-hidden expects comma-separated widths in 1..=4096, got `{spec}`"
        ))),
    }
}

fn load_inputs(input: &InputArgs) -> Result<(Scenario, Vec<RequestWindow>), CliError> {
    let mut scenario =
        Scenario::load(&input.config).map_err(|e| invalid(e.to_string()))?;

    if let Some(w) = input.window_seconds {
        if w == 0 {
            return Err(invalid("--window-seconds must be positive"));
        }
        scenario.window_seconds = w;
    }
    if let Some(a) = input.alpha {
        if !(0.0..=1.0).contains(&a) {
            return Err(invalid(format!("--alpha must lie in [0, 1], got {a}")));
        }
        scenario.alpha = a;
    }
    if let Some(q) = input.q_threshold {
        if !(0.0..=1.0).contains(&q) {
            return Err(invalid(format!("--q-threshold must lie in [0, 1], got {q}")));
        }
        scenario.q_threshold = q;
    }
    if let Some(v) = input.prop_speed {
        if !(v.is_finite() && v > 0.0) {
            return Err(invalid(format!("--prop-speed must be positive, got {v}")));
        }
        scenario.prop_speed_mps = v;
    }
    if let Some(spec) = &input.critic_hidden {
        scenario.critic.hidden = parse_hidden(spec)?;
    }

    let format = TraceFormat::from_str(&input.format).map_err(|e| invalid(e.to_string()))?;
    let file = File::open(&input.trace).map_err(|e| {
        invalid(format!("cannot read trace {}: {e}", input.trace.display()))
    })?;
    let parsed =
        parse_trace(BufReader::new(file), format).map_err(|e| invalid(e.to_string()))?;
    if parsed.rejected_lines > 0 {
        eprintln!("note: {} malformed trace lines skipped", parsed.rejected_lines);
    }
    let windows = bin_requests(
        &parsed.points,
        scenario.window_seconds,
        scenario.n_services(),
        input.seed,
    )
    .map_err(|e| invalid(e.to_string()))?;
    Ok((scenario, windows))
}

/// Reject demand that no placement can satisfy before spending solver time,
/// with the structural diagnostic the exit-code contract promises.
fn check_structure(scenario: &Scenario, windows: &[RequestWindow]) -> Result<(), CliError> {
    let first = windows.first().ok_or_else(|| invalid("trace produced no windows"))?;
    let demand = DemandProfile::from_arrivals(first.arrivals.clone(), scenario.instance_capacity);
    let nodes = scenario.operational_nodes().len();
    for (s, &i) in demand.instances.iter().enumerate() {
        if i as usize > nodes {
            return Err(CliError::Infeasible(format!(
                "structurally infeasible: service {s} needs {i} instances but the scenario \
                 has only {nodes} operational nodes"
            )));
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Subcommands
// ---------------------------------------------------------------------------

fn cmd_run(args: &RunArgs) -> Result<(), CliError> {
    let mode = match args.mode.as_str() {
        "ours" => RunMode::Ours,
        "br" => RunMode::Br,
        other => return Err(invalid(format!("--mode must be `ours` or `br`, got `{other}`"))),
    };
    let (scenario, windows) = load_inputs(&args.input)?;
    check_structure(&scenario, &windows)?;

    let log = simulator::run(&scenario, &windows, mode, args.input.seed).map_err(sim_error)?;

    fs::create_dir_all(&args.out)?;
    output::write_metrics(&args.out.join("metrics.csv"), &log, args.timing)?;
    output::write_summary(&args.out.join("summary.json"), &log, args.timing)?;
    output::write_decisions(&args.out.join("decisions.json"), &log)?;
    println!(
        "simulated {} windows (mode {}, seed {}) -> {}",
        log.windows.len(),
        log.mode,
        log.seed,
        args.out.display()
    );
    Ok(())
}

fn cmd_compare(args: &CompareArgs) -> Result<(), CliError> {
    let (scenario, windows) = load_inputs(&args.input)?;
    check_structure(&scenario, &windows)?;

    let cmp = simulator::compare(&scenario, &windows, args.input.seed).map_err(sim_error)?;

    fs::create_dir_all(&args.out)?;
    output::write_metrics(&args.out.join("metrics_ours.csv"), &cmp.ours, args.timing)?;
    // An infeasible baseline still produces its file so downstream tooling
    // sees a fixed file set; the CSV is then header-only and compare.json
    // carries the flag.
    let br_log = cmp.br.clone().unwrap_or(MetricsLog {
        mode: RunMode::Br,
        seed: args.input.seed,
        windows: Vec::new(),
    });
    output::write_metrics(&args.out.join("metrics_br.csv"), &br_log, args.timing)?;
    output::write_compare(&args.out.join("compare.json"), &cmp, args.timing)?;
    println!(
        "compared {} windows (seed {}) -> {}{}",
        cmp.ours.windows.len(),
        args.input.seed,
        args.out.display(),
        if cmp.summary.br_infeasible { " (baseline infeasible)" } else { "" }
    );
    Ok(())
}

fn hosts_json(x: &revsim::scenario::BinaryMatrix) -> Value {
    let mut doc = serde_json::Map::new();
    for s in 0..x.n_services() {
        doc.insert(s.to_string(), json!(x.hosts_of(s)));
    }
    Value::Object(doc)
}

fn candidate_json(c: &SecondaryCandidate) -> Value {
    json!({ "node": c.node, "delay_ms": c.delay_ms })
}

fn cmd_solve_once(args: &SolveOnceArgs) -> Result<(), CliError> {
    let (scenario, windows) = load_inputs(&args.input)?;
    let window = windows.get(args.window as usize).ok_or_else(|| {
        invalid(format!(
            "--window {} out of range; the trace produced {} windows",
            args.window,
            windows.len()
        ))
    })?;
    if let Some(f) = args.fail_node {
        if usize::from(f) >= scenario.n_nodes() {
            return Err(invalid(format!(
                "--fail-node {f} out of range; the scenario has {} nodes",
                scenario.n_nodes()
            )));
        }
    }
    check_structure(&scenario, std::slice::from_ref(window))?;

    let demand = DemandProfile::from_arrivals(window.arrivals.clone(), scenario.instance_capacity);
    let delays = compute_delay_matrix(window, &scenario);
    let sol = solve_sp(&scenario, &demand, &delays).map_err(placement_error)?;

    let mut doc = json!({
        "window": args.window,
        "objective": sol.objective,
        "instances": demand.instances,
        "x": hosts_json(&sol.x),
    });

    if let Some(f) = args.fail_node {
        let (v2e, _) = map_with_overflow(&sol.x, &window.requests, scenario.instance_capacity, &scenario);
        let table = psvm_table(&scenario, &sol.x, &v2e, &window.requests);
        let y = table.get(&f).map_or_else(
            || json!({}),
            |p| {
                let mut failover = serde_json::Map::new();
                for (s, plan) in &p.failover {
                    failover.insert(
                        s.to_string(),
                        json!({
                            "primary": candidate_json(&plan.primary),
                            "backup": plan.backup.as_ref().map(candidate_json),
                            "degraded": plan.degraded,
                        }),
                    );
                }
                json!({
                    "failover": Value::Object(failover),
                    "no_secondary": p.no_secondary,
                    "objective": p.objective,
                })
            },
        );
        doc["y"] = y;

        let mut failed = scenario.clone();
        failed.nodes[usize::from(f)].status = NodeStatus::Failed;
        let z = if sol.x.services_on(usize::from(f)).is_empty() {
            json!({})
        } else {
            match solve_srp(&failed, &sol.x, f, &demand, &delays) {
                Ok(srp) => json!({
                    "mode": match srp.mode {
                        SrpMode::FullReplacement => "full-replacement",
                        SrpMode::FailedOnly => "failed-only",
                    },
                    "placements": hosts_json(&srp.z),
                    "selected": srp.selected.iter()
                        .map(|(s, e)| (s.to_string(), json!(e)))
                        .collect::<serde_json::Map<_, _>>(),
                    "objective": srp.objective,
                }),
                Err(PlacementError::RecoveryImpossible) => json!(null),
                Err(e) => return Err(placement_error(e)),
            }
        };
        doc["fail_node"] = json!(f);
        doc["z"] = z;
    }

    println!("{}", serde_json::to_string_pretty(&doc).expect("document serializes"));
    Ok(())
}

fn cmd_gen_trace(args: &GenTraceArgs) -> Result<(), CliError> {
    let mobility = match args.mobility.as_str() {
        "stationary" => Mobility::Stationary,
        "waypoint" | "random-waypoint" => Mobility::RandomWaypoint,
        other => {
            return Err(invalid(format!(
                "--mobility must be `stationary` or `waypoint`, got `{other}`"
            )))
        }
    };
    if args.vehicles == 0 || args.windows == 0 {
        return Err(invalid("--vehicles and --windows must be positive"));
    }
    if args.window_seconds == 0 {
        return Err(invalid("--window-seconds must be positive"));
    }
    if !(args.width_m > 0.0 && args.height_m > 0.0) {
        return Err(invalid("--width-m and --height-m must be positive"));
    }
    let bbox = revsim::scenario::BoundingBox::new(args.width_m, args.height_m);
    let points = synth_trace(
        args.vehicles,
        args.windows,
        &bbox,
        mobility,
        args.window_seconds,
        args.seed,
    );
    let mut buf = Vec::new();
    write_canonical(&points, &mut buf)?;
    let text = String::from_utf8(buf).expect("canonical CSV is ASCII");
    if let Some(dir) = args.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    output::write_atomic(&args.out, &text)?;
    println!(
        "wrote {} points ({} vehicles x {} windows) -> {}",
        points.len(),
        args.vehicles,
        args.windows,
        args.out.display()
    );
    Ok(())
}

fn dispatch(cli: &Cli) -> Result<(), CliError> {
    match &cli.cmd {
        Cmd::Run(a) => cmd_run(a),
        Cmd::Compare(a) => cmd_compare(a),
        Cmd::SolveOnce(a) => cmd_solve_once(a),
        Cmd::GenTrace(a) => cmd_gen_trace(a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message());
            ExitCode::from(e.exit_code())
        }
    }
}
