//! Window-by-window simulation driver.
//!
//! [`run`] walks a request-window sequence through the control loop: demand →
//! access delays → placement decision → request mapping → observed delays →
//! critic feedback. Scheduled attacks flip a node to `Failed` at their
//! window's start (before any mapping); the attack window itself is served by
//! the proactive secondary mappings, the recovery placement takes over at the
//! next window boundary, and a scheduled restoration brings the node back and
//! re-optimizes once. [`compare`] runs the same inputs under the
//! backup-reservation baseline and reports the deltas.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::delaymodel::{
    compute_delay_matrix, md1_wait, propagation_delay, DelayMatrix, QueueLoad,
};
use crate::drl::{
    actor_decide, critic_forward, critic_train_step, featurize, window_target, ActorAction,
    ActorInput, CriticNet, Degradation, FeedbackRecord, PlacementDecision, SolveTimes,
    TrainBatch,
};
use crate::placement::{
    br_placement, map_with_overflow, occupied_resources, psvm_table, solve_sp, BrPlacement,
    DemandProfile, PlacementError, V2EMap,
};
use crate::scenario::{BinaryMatrix, NodeStatus, Scenario, ServiceRequest};
use crate::traces::RequestWindow;

// ---------------------------------------------------------------------------
// Log types
// ---------------------------------------------------------------------------

/// Which policy a run executes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RunMode {
    /// Full control loop: exact placement, proactive secondaries, recovery.
    Ours,
    /// Backup-reservation baseline: one reserved spare instance per service,
    /// activated on failure; no secondary mapping, no recovery program.
    Br,
}

impl std::fmt::Display for RunMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            RunMode::Ours => "ours",
            RunMode::Br => "br",
        })
    }
}

/// Operating phase of one simulated window.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WindowMode {
    /// Pre-attack: serving the exact primary placement.
    PrASp,
    /// The attack window: stranded requests ride the secondary mappings.
    PoAPsvm,
    /// Post-attack with the recovery placement merged in.
    PoASrp,
    /// Baseline before any failure.
    BrPre,
    /// Baseline while a node is down (backups activated).
    BrPost,
}

impl std::fmt::Display for WindowMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            WindowMode::PrASp => "PrA-SP",
            WindowMode::PoAPsvm => "PoA-PSVM",
            WindowMode::PoASrp => "PoA-SRP",
            WindowMode::BrPre => "BR-pre",
            WindowMode::BrPost => "BR-post",
        })
    }
}

/// How a window's placement came to be.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DecisionKind {
    /// The first window's mandatory full solve.
    Initial,
    /// The cached placement was reused untouched.
    Cached,
    /// Poor quality or drifted demand forced a fresh solve.
    Reoptimized,
    /// An attack rode the secondary mappings and queued a recovery.
    Recovered,
    /// The baseline policy decided (no critic, no recovery program).
    Baseline,
}

impl std::fmt::Display for DecisionKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            DecisionKind::Initial => "initial-solve",
            DecisionKind::Cached => "kept-cache",
            DecisionKind::Reoptimized => "re-optimized",
            DecisionKind::Recovered => "recovered",
            DecisionKind::Baseline => "baseline",
        })
    }
}

/// Everything measured in one window.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowMetrics {
    pub window: u32,
    pub mode: WindowMode,
    pub action: DecisionKind,
    /// Per-service mean observed delay over the window's arrivals,
    /// milliseconds. Unserved arrivals and requests on saturated instances
    /// observe the full window duration. Zero-demand services report 0.
    pub mean_delay_ms: Vec<f64>,
    /// The same observations collapsed to one arrival-weighted scalar.
    pub overall_delay_ms: f64,
    /// Per-node occupancy in percent of capacity, reserved instances
    /// included; a failed node occupies nothing.
    pub usage_pct: Vec<f64>,
    /// Total resource units the occupancy matrix holds.
    pub occupied_units: u64,
    /// Nodes hosting at least one (possibly reserved) instance.
    pub active_nodes: u32,
    /// Exact-solver wall times this window (zero where a phase did not run).
    pub times: SolveTimes,
    /// Baseline placement solve time, when the baseline re-solved.
    pub br_solve: f64,
    /// Critic score that gated this window's decision (1 before feedback).
    pub q_value: f64,
    /// Requests actually mapped to an instance.
    pub mapped: u32,
    /// Requests offered.
    pub arrivals: u32,
    /// Sorted, deduplicated degradation flags; empty in a clean window.
    pub degradations: Vec<Degradation>,
}

/// One run's complete per-window record.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsLog {
    pub mode: RunMode,
    pub seed: u64,
    pub windows: Vec<WindowMetrics>,
}

// ---------------------------------------------------------------------------
// State & errors
// ---------------------------------------------------------------------------

/// Mutable loop state carried across windows.
#[derive(Debug, Clone)]
pub struct SimState {
    /// Index of the window being simulated.
    pub window: u32,
    /// Authoritative node statuses (the scenario copy is synced from these).
    pub statuses: Vec<NodeStatus>,
    /// Decision produced by the previous window (placement, secondary table,
    /// instance counts it was sized for).
    pub cached: PlacementDecision,
    /// The previous window's request-to-instance mapping.
    pub loads: V2EMap,
    pub critic: CriticNet,
    pub seed: u64,
}

/// What an attack hit: the services instantiated on the node and the
/// vehicles whose requests were mapped to it.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct AttackImpact {
    pub services: Vec<u16>,
    pub stranded: Vec<u64>,
}

#[derive(Debug, Error)]
pub enum SimError {
    #[error("simulation needs at least one request window")]
    NoWindows,
    #[error("window {window} carries {got} per-service arrival counts, scenario has {want} services")]
    MalformedWindow { window: u32, got: usize, want: usize },
    #[error("attack schedule: {0}")]
    BadSchedule(String),
    #[error("node {0} is already failed")]
    AlreadyFailed(u16),
    /// The very first window could not be placed; with no prior decision to
    /// fall back on the loop state would be undefined.
    #[error("initial placement failed: {0}")]
    InitialPlacement(#[from] PlacementError),
}

/// Fail `node` and report the blast radius: ζ (services instantiated there)
/// and the vehicles mapped to the node when the attack hit.
pub fn inject_attack(state: &mut SimState, node: u16) -> Result<AttackImpact, SimError> {
    if state.statuses[node as usize] == NodeStatus::Failed {
        return Err(SimError::AlreadyFailed(node));
    }
    state.statuses[node as usize] = NodeStatus::Failed;
    let services =
        state.cached.x.services_on(node as usize).iter().map(|&s| s as u16).collect();
    let stranded = state
        .loads
        .assignment
        .iter()
        .filter(|(_, &(e, _))| e == node)
        .map(|(&v, _)| v)
        .collect();
    Ok(AttackImpact { services, stranded })
}

// ---------------------------------------------------------------------------
// The driver
// ---------------------------------------------------------------------------

/// Simulate `windows` under `mode`. The scenario's attack schedule applies to
/// both modes; identical `(scenario, windows, seed)` yield an identical log
/// up to solver wall times.
pub fn run(
    scenario: &Scenario,
    windows: &[RequestWindow],
    mode: RunMode,
    seed: u64,
) -> Result<MetricsLog, SimError> {
    if windows.is_empty() {
        return Err(SimError::NoWindows);
    }
    for rw in windows {
        if rw.arrivals.len() != scenario.n_services() {
            return Err(SimError::MalformedWindow {
                window: rw.index,
                got: rw.arrivals.len(),
                want: scenario.n_services(),
            });
        }
    }
    validate_schedule(scenario)?;

    let ns = scenario.n_services();
    let mut live = scenario.clone();
    let mut state = SimState {
        window: windows[0].index,
        statuses: live.nodes.iter().map(|n| n.status).collect(),
        cached: PlacementDecision {
            x: BinaryMatrix::zeros(live.n_nodes(), ns),
            psvm: BTreeMap::new(),
            instances: vec![0; ns],
        },
        loads: V2EMap::default(),
        critic: CriticNet::seeded(2 * ns + 1, &scenario.critic.hidden, seed),
        seed,
    };
    let mut batch = TrainBatch::with_capacity(scenario.critic.batch_capacity);
    // No feedback exists yet; trust the (about to be computed) placement.
    let mut q_value = 1.0;
    let mut br: Option<BrPlacement> = None;
    let mut br_sized_for: Vec<u32> = Vec::new();
    let mut log =
        MetricsLog { mode, seed, windows: Vec::with_capacity(windows.len()) };

    for (i, rw) in windows.iter().enumerate() {
        state.window = rw.index;

        // Scheduled events fire at the window's start, before any mapping.
        let mut restored = false;
        for ev in &scenario.attack_schedule {
            if ev.restore == Some(rw.index)
                && state.statuses[ev.node as usize] == NodeStatus::Failed
            {
                state.statuses[ev.node as usize] = NodeStatus::Operational;
                restored = true;
            }
        }
        let mut attacked = None;
        for ev in &scenario.attack_schedule {
            if ev.window == rw.index {
                inject_attack(&mut state, ev.node)?;
                attacked = Some(ev.node);
            }
        }
        for (node, status) in live.nodes.iter_mut().zip(&state.statuses) {
            node.status = *status;
        }

        let demand = DemandProfile::from_arrivals(rw.arrivals.clone(), live.instance_capacity);
        let delays = compute_delay_matrix(rw, &live);

        let row = match mode {
            RunMode::Ours => ours_window(
                OursWindowArgs {
                    live: &live,
                    rw,
                    demand: &demand,
                    delays: &delays,
                    first: i == 0,
                    attacked,
                    restored,
                    q_value,
                },
                &mut state,
            )?,
            RunMode::Br => br_window(
                &live,
                rw,
                &demand,
                &delays,
                &mut br,
                &mut br_sized_for,
                &mut state,
            )?,
        };

        // Feedback: observed quality of this window, then one training step
        // every `update_every` windows. The critic scores the freshest
        // record to gate the next decision (the baseline never consults it).
        let record = FeedbackRecord {
            window: rw.index,
            mean_delay_ms: row.mean_delay_ms.clone(),
            arrivals: rw.arrivals.clone(),
            attack: attacked.is_some(),
        };
        batch.push(featurize(&record, &live), window_target(&record, &live));
        if (i + 1) % scenario.critic.update_every as usize == 0 {
            critic_train_step(&mut state.critic, &batch, scenario.critic.learning_rate);
        }
        q_value = critic_forward(&state.critic, &featurize(&record, &live));

        log.windows.push(row);
    }
    Ok(log)
}

struct OursWindowArgs<'a> {
    live: &'a Scenario,
    rw: &'a RequestWindow,
    demand: &'a DemandProfile,
    delays: &'a DelayMatrix,
    first: bool,
    attacked: Option<u16>,
    restored: bool,
    q_value: f64,
}

fn ours_window(
    args: OursWindowArgs<'_>,
    state: &mut SimState,
) -> Result<WindowMetrics, SimError> {
    let OursWindowArgs { live, rw, demand, delays, first, attacked, restored, q_value } = args;

    let (serving, next, v2e_opt, mut degradations, times, action) = if first {
        let sol = solve_sp(live, demand, delays)?;
        let (v2e, overflow) =
            map_with_overflow(&sol.x, &rw.requests, live.instance_capacity, live);
        let table = psvm_table(live, &sol.x, &v2e, &rw.requests);
        let next = PlacementDecision {
            x: sol.x.clone(),
            psvm: table,
            instances: demand.instances.clone(),
        };
        let times = SolveTimes { sp: sol.wall_time, psvm: 0.0, srp: 0.0 };
        (sol.x, next, Some(v2e), unmapped_flags(&overflow), times, DecisionKind::Initial)
    } else {
        let input = ActorInput {
            cached: &state.cached,
            q_value,
            attack: attacked,
            force_refresh: restored || demand.instances != state.cached.instances,
            demand,
            delays,
            requests: &rw.requests,
        };
        let out = actor_decide(live, &input);
        let action = match out.action {
            ActorAction::KeepCached => DecisionKind::Cached,
            ActorAction::Reoptimize => DecisionKind::Reoptimized,
            ActorAction::Recover { .. } => DecisionKind::Recovered,
        };
        (out.serving, out.next, out.window_map, out.degradations, out.times, action)
    };

    let v2e = match v2e_opt {
        Some(map) => map,
        None => {
            let (map, overflow) =
                map_with_overflow(&serving, &rw.requests, live.instance_capacity, live);
            degradations.extend(unmapped_flags(&overflow));
            map
        }
    };

    let mode = if attacked.is_some() {
        WindowMode::PoAPsvm
    } else if state.statuses.contains(&NodeStatus::Failed) {
        WindowMode::PoASrp
    } else {
        WindowMode::PrASp
    };

    let row =
        finish_window(live, rw, mode, action, &serving, &v2e, degradations, times, 0.0, q_value);
    state.cached = next;
    state.loads = v2e;
    Ok(row)
}

#[allow(clippy::too_many_arguments)]
fn br_window(
    live: &Scenario,
    rw: &RequestWindow,
    demand: &DemandProfile,
    delays: &DelayMatrix,
    br: &mut Option<BrPlacement>,
    br_sized_for: &mut Vec<u32>,
    state: &mut SimState,
) -> Result<WindowMetrics, SimError> {
    let mut degradations = Vec::new();
    let mut br_solve = 0.0;
    if br.is_none() || *br_sized_for != demand.instances {
        match br_placement(live, demand, delays) {
            Ok(placed) => {
                br_solve = placed.wall_time;
                *br = Some(placed);
                *br_sized_for = demand.instances.clone();
            }
            Err(e) => {
                if br.is_none() {
                    return Err(e.into());
                }
                degradations.push(Degradation::PlacementInfeasible);
            }
        }
    }
    let placed = br.as_ref().expect("baseline placement exists past the guard");

    let failed = state.statuses.iter().position(|s| *s == NodeStatus::Failed).map(|e| e as u16);
    let serving = placed.serving_matrix(failed);
    let (v2e, overflow) =
        map_with_overflow(&serving, &rw.requests, live.instance_capacity, live);
    degradations.extend(unmapped_flags(&overflow));

    // Reserved backups occupy capacity whether or not they serve.
    let mut occupancy = placed.x.clone();
    if let Some(f) = failed {
        occupancy.clear_node(f as usize);
    }

    let mode = if failed.is_some() { WindowMode::BrPost } else { WindowMode::BrPre };
    // The baseline never consults the critic; its gate column stays at 1.
    let row = finish_window(
        live,
        rw,
        mode,
        DecisionKind::Baseline,
        &occupancy,
        &v2e,
        degradations,
        SolveTimes::default(),
        br_solve,
        1.0,
    );
    state.cached = PlacementDecision {
        x: placed.x.clone(),
        psvm: BTreeMap::new(),
        instances: demand.instances.clone(),
    };
    state.loads = v2e;
    Ok(row)
}

/// Observed delays, occupancy statistics, and flag cleanup shared by both
/// policies. `occupancy` is the resource-holding matrix (for the baseline it
/// includes reserved spares and can differ from the serving matrix).
#[allow(clippy::too_many_arguments)]
fn finish_window(
    live: &Scenario,
    rw: &RequestWindow,
    mode: WindowMode,
    action: DecisionKind,
    occupancy: &BinaryMatrix,
    v2e: &V2EMap,
    mut degradations: Vec<Degradation>,
    times: SolveTimes,
    br_solve: f64,
    q_value: f64,
) -> WindowMetrics {
    let (mean_delay_ms, overload_flags) = observed_delays(live, rw, v2e);
    degradations.extend(overload_flags);
    degradations.sort();
    degradations.dedup();

    let arrivals: u32 = rw.arrivals.iter().sum();
    let overall_delay_ms = if arrivals == 0 {
        0.0
    } else {
        mean_delay_ms
            .iter()
            .zip(&rw.arrivals)
            .map(|(&d, &a)| d * f64::from(a))
            .sum::<f64>()
            / f64::from(arrivals)
    };

    let mut usage_pct = Vec::with_capacity(live.n_nodes());
    let mut active_nodes = 0;
    for e in 0..live.n_nodes() {
        let held: u64 = occupancy
            .services_on(e)
            .iter()
            .map(|&s| u64::from(live.services[s].resource_units))
            .sum();
        if held > 0 {
            active_nodes += 1;
        }
        usage_pct.push(100.0 * held as f64 / f64::from(live.nodes[e].capacity.max(1)));
    }

    WindowMetrics {
        window: rw.index,
        mode,
        action,
        mean_delay_ms,
        overall_delay_ms,
        usage_pct,
        occupied_units: occupied_resources(live, occupancy),
        active_nodes,
        times,
        br_solve,
        q_value,
        mapped: v2e.assignment.len() as u32,
        arrivals,
        degradations,
    }
}

/// Per-service mean delay actually experienced this window: propagation to
/// the assigned node plus that instance's queueing wait. Requests on a
/// saturated instance, and arrivals that never got an instance, are charged
/// the full window duration.
fn observed_delays(
    live: &Scenario,
    rw: &RequestWindow,
    v2e: &V2EMap,
) -> (Vec<f64>, Vec<Degradation>) {
    let ns = live.n_services();
    let window_ms = live.window_ms();
    let capacity = f64::from(live.instance_capacity);

    let mut waits: BTreeMap<(u16, u16), Option<f64>> = BTreeMap::new();
    let mut flags = Vec::new();
    for (&(e, s), &load) in &v2e.load {
        let wait =
            md1_wait(&QueueLoad::new(f64::from(load), 0.0, capacity), window_ms).finite();
        if wait.is_none() {
            flags.push(Degradation::Overloaded { node: e, service: s });
        }
        waits.insert((e, s), wait);
    }

    let by_vehicle: BTreeMap<u64, &ServiceRequest> =
        rw.requests.iter().map(|r| (r.vehicle, r)).collect();
    let mut sums = vec![0.0; ns];
    let mut mapped = vec![0u32; ns];
    for (vehicle, &(e, s)) in &v2e.assignment {
        let req = by_vehicle[vehicle];
        let observed = match waits[&(e, s)] {
            Some(wait) => {
                wait + propagation_delay(
                    &req.location,
                    &live.nodes[e as usize].position,
                    live.prop_speed_mps,
                )
            }
            None => window_ms,
        };
        sums[s as usize] += observed;
        mapped[s as usize] += 1;
    }

    let mut means = Vec::with_capacity(ns);
    for s in 0..ns {
        let unserved = rw.arrivals[s].saturating_sub(mapped[s]);
        let total = mapped[s] + unserved;
        if total == 0 {
            means.push(0.0);
        } else {
            means.push((sums[s] + f64::from(unserved) * window_ms) / f64::from(total));
        }
    }
    (means, flags)
}

fn unmapped_flags(overflow: &[ServiceRequest]) -> Vec<Degradation> {
    let mut per_service: BTreeMap<u16, u32> = BTreeMap::new();
    for r in overflow {
        *per_service.entry(r.service).or_insert(0) += 1;
    }
    per_service
        .into_iter()
        .map(|(service, count)| Degradation::Unmapped { service, count })
        .collect()
}

fn validate_schedule(scenario: &Scenario) -> Result<(), SimError> {
    let mut events = scenario.attack_schedule.clone();
    events.sort_by_key(|e| e.window);
    let mut prev_end: Option<(u32, u16)> = None;
    for ev in &events {
        if usize::from(ev.node) >= scenario.n_nodes() {
            return Err(SimError::BadSchedule(format!(
                "attack targets node {} but the scenario has {} nodes",
                ev.node,
                scenario.n_nodes()
            )));
        }
        if let Some(restore) = ev.restore {
            if restore <= ev.window {
                return Err(SimError::BadSchedule(format!(
                    "node {} restores at window {restore}, not after its attack window {}",
                    ev.node, ev.window
                )));
            }
        }
        if let Some((end, node)) = prev_end {
            if ev.window < end {
                return Err(SimError::BadSchedule(format!(
                    "attack on node {} at window {} overlaps the failure of node {node} \
                     (restored at window {end}); at most one node may be down",
                    ev.node, ev.window
                )));
            }
        }
        prev_end = Some((ev.restore.unwrap_or(u32::MAX), ev.node));
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Side-by-side comparison
// ---------------------------------------------------------------------------

/// Aggregate deltas between the two policies on identical inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct CompareSummary {
    /// The baseline could not even place its reserved spares.
    pub br_infeasible: bool,
    /// Arrival-weighted mean delay over pre-failure windows, ms.
    pub pre_delay_ours: f64,
    pub pre_delay_br: f64,
    /// Arrival-weighted mean delay over failure-affected windows, ms.
    pub post_delay_ours: f64,
    pub post_delay_br: f64,
    /// Resource units held in the first window.
    pub pre_occupied_ours: u64,
    pub pre_occupied_br: u64,
    /// Mean active-node counts over the whole run.
    pub active_ours: f64,
    pub active_br: f64,
    /// Total exact-solver wall seconds per run.
    pub solve_s_ours: f64,
    pub solve_s_br: f64,
}

/// The paired logs plus their summary; `br` is `None` when the baseline was
/// infeasible at the first window.
#[derive(Debug, Clone)]
pub struct Comparison {
    pub ours: MetricsLog,
    pub br: Option<MetricsLog>,
    pub summary: CompareSummary,
}

/// Run both policies on identical windows and seed.
pub fn compare(
    scenario: &Scenario,
    windows: &[RequestWindow],
    seed: u64,
) -> Result<Comparison, SimError> {
    let ours = run(scenario, windows, RunMode::Ours, seed)?;
    let br = match run(scenario, windows, RunMode::Br, seed) {
        Ok(log) => Some(log),
        Err(SimError::InitialPlacement(_)) => None,
        Err(e) => return Err(e),
    };
    let summary = summarize(&ours, br.as_ref());
    Ok(Comparison { ours, br, summary })
}

fn summarize(ours: &MetricsLog, br: Option<&MetricsLog>) -> CompareSummary {
    fn phase_delay(log: &MetricsLog, pre: bool) -> f64 {
        let mut sum = 0.0;
        let mut n = 0usize;
        for row in &log.windows {
            let is_pre = matches!(row.mode, WindowMode::PrASp | WindowMode::BrPre);
            if is_pre != pre || row.arrivals == 0 {
                continue;
            }
            sum += row.overall_delay_ms;
            n += 1;
        }
        if n == 0 { 0.0 } else { sum / n as f64 }
    }
    fn mean_active(log: &MetricsLog) -> f64 {
        if log.windows.is_empty() {
            return 0.0;
        }
        log.windows.iter().map(|w| f64::from(w.active_nodes)).sum::<f64>()
            / log.windows.len() as f64
    }
    fn total_solve(log: &MetricsLog) -> f64 {
        log.windows
            .iter()
            .map(|w| w.times.sp + w.times.psvm + w.times.srp + w.br_solve)
            .sum()
    }

    CompareSummary {
        br_infeasible: br.is_none(),
        pre_delay_ours: phase_delay(ours, true),
        pre_delay_br: br.map_or(0.0, |l| phase_delay(l, true)),
        post_delay_ours: phase_delay(ours, false),
        post_delay_br: br.map_or(0.0, |l| phase_delay(l, false)),
        pre_occupied_ours: ours.windows.first().map_or(0, |w| w.occupied_units),
        pre_occupied_br: br
            .and_then(|l| l.windows.first())
            .map_or(0, |w| w.occupied_units),
        active_ours: mean_active(ours),
        active_br: br.map_or(0.0, mean_active),
        solve_s_ours: total_solve(ours),
        solve_s_br: br.map_or(0.0, total_solve),
    }
}
