//! Domain types, scenario configuration, and independent constraint checkers.
//!
//! The types here are shared by every other module. [`validate_scenario`]
//! screens a configuration before any simulation work starts, and
//! [`check_sp_solution`] re-verifies primary placement solutions without
//! sharing any code with the solver that produced them (the recovery and
//! secondary-mapping checkers live in [`crate::placement`] next to their
//! builders' data).

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::delaymodel::DelayMatrix;

/// Tolerance used when comparing real-valued quantities against bounds.
pub const FEASIBILITY_TOL: f64 = 1e-9;

/// A planar position in meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const ORIGIN: Point = Point { x: 0.0, y: 0.0 };

    pub fn new(x: f64, y: f64) -> Self {
        Point { x, y }
    }

    /// Euclidean distance to `other` in meters.
    pub fn dist(&self, other: &Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

impl fmt::Display for Point {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({:.1}, {:.1})", self.x, self.y)
    }
}

/// A deployable service type.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ServiceType {
    /// Dense index in `0..services.len()`.
    pub id: u16,
    /// Resource units one instance consumes on its hosting node.
    pub resource_units: u32,
    /// Maximum tolerable access delay for this service, in milliseconds.
    pub delay_threshold_ms: f64,
    /// Human-readable name used in logs and dumps.
    pub label: String,
}

/// Operational state of an edge node.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum NodeStatus {
    Operational,
    Failed,
}

/// A compute-equipped roadside node that hosts service instances.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeNode {
    /// Dense index in `0..nodes.len()`.
    pub id: u16,
    /// Planar position in meters.
    pub position: Point,
    /// Total resource units available on the node.
    pub capacity: u32,
    pub status: NodeStatus,
}

impl EdgeNode {
    pub fn is_operational(&self) -> bool {
        self.status == NodeStatus::Operational
    }
}

/// One vehicle's service request inside a window: who, where, when, what.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ServiceRequest {
    pub vehicle: u64,
    /// Vehicle position at request time, planar meters.
    pub location: Point,
    /// Window index the request belongs to.
    pub time: u32,
    /// Requested service id.
    pub service: u16,
}

/// A scheduled attack: the node fails at the start of `window` and, if
/// `restore` is set, rejoins at the start of that window.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttackEvent {
    pub window: u32,
    pub node: u16,
    #[serde(default)]
    pub restore: Option<u32>,
}

/// The rectangular study region; its origin is always (0, 0).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub width_m: f64,
    pub height_m: f64,
}

impl BoundingBox {
    pub fn new(width_m: f64, height_m: f64) -> Self {
        BoundingBox { width_m, height_m }
    }

    /// Closed-region containment test.
    pub fn contains(&self, p: &Point) -> bool {
        p.x >= 0.0 && p.x <= self.width_m && p.y >= 0.0 && p.y <= self.height_m
    }
}

/// Critic-network hyperparameters (see [`crate::drl`]).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriticConfig {
    /// Hidden layer widths; input/output widths are derived from the scenario.
    pub hidden: Vec<usize>,
    pub learning_rate: f64,
    /// Train one step every this many windows.
    pub update_every: u32,
    /// Maximum number of recent (features, target) records kept for training.
    pub batch_capacity: usize,
}

impl Default for CriticConfig {
    fn default() -> Self {
        CriticConfig {
            hidden: vec![32, 16],
            learning_rate: 0.01,
            update_every: 5,
            batch_capacity: 100,
        }
    }
}

/// Full simulation configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub services: Vec<ServiceType>,
    pub nodes: Vec<EdgeNode>,
    /// Concurrent vehicles one service instance can serve without queueing.
    pub instance_capacity: u32,
    /// Blend between resource usage (alpha) and delay (1 - alpha) in the
    /// placement objective; in `[0, 1]`.
    pub alpha: f64,
    /// Effective signal propagation speed in meters/second.
    pub prop_speed_mps: f64,
    pub bounding_box: BoundingBox,
    /// Placement-quality score below which the control loop re-optimizes.
    pub q_threshold: f64,
    /// Duration of one simulation window, seconds.
    pub window_seconds: u32,
    pub attack_schedule: Vec<AttackEvent>,
    pub critic: CriticConfig,
}

impl Scenario {
    pub fn n_services(&self) -> usize {
        self.services.len()
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    /// Window duration in milliseconds (the unit all delays are reported in).
    pub fn window_ms(&self) -> f64 {
        f64::from(self.window_seconds) * 1000.0
    }

    /// Ids of nodes currently able to host instances.
    pub fn operational_nodes(&self) -> Vec<usize> {
        self.nodes
            .iter()
            .filter(|n| n.is_operational())
            .map(|n| n.id as usize)
            .collect()
    }

    /// The largest delay threshold across services, used to normalize delay
    /// terms in blended objectives.
    pub fn max_delay_threshold(&self) -> f64 {
        self.services
            .iter()
            .map(|s| s.delay_threshold_ms)
            .fold(0.0, f64::max)
    }

    /// A 3x3 grid of 100-unit nodes over a 15 km x 15 km region with eight
    /// services of increasing footprint and threshold. This is the reference
    /// configuration used by the bundled demo and the integration tests.
    pub fn grid_testbed() -> Scenario {
        let services = (0..8u16)
            .map(|s| ServiceType {
                id: s,
                resource_units: 10 + 2 * u32::from(s),
                delay_threshold_ms: 50.0 + 10.0 * f64::from(s),
                label: format!("svc-{s}"),
            })
            .collect();
        let mut nodes = Vec::new();
        for row in 0..3u16 {
            for col in 0..3u16 {
                nodes.push(EdgeNode {
                    id: row * 3 + col,
                    position: Point::new(
                        2500.0 + 5000.0 * f64::from(col),
                        2500.0 + 5000.0 * f64::from(row),
                    ),
                    capacity: 100,
                    status: NodeStatus::Operational,
                });
            }
        }
        Scenario {
            services,
            nodes,
            instance_capacity: 30,
            alpha: 0.5,
            prop_speed_mps: 1.0e6,
            bounding_box: BoundingBox::new(15_000.0, 15_000.0),
            q_threshold: 0.5,
            window_seconds: 60,
            attack_schedule: Vec::new(),
            critic: CriticConfig::default(),
        }
    }

    /// Parse a scenario from its TOML representation (see the README for the
    /// config grammar).
    pub fn from_toml_str(text: &str) -> Result<Scenario, ConfigError> {
        let raw: RawScenarioFile = toml::from_str(text)?;
        Ok(raw.into_scenario())
    }

    /// Load a scenario from a TOML file.
    pub fn load(path: &Path) -> Result<Scenario, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Scenario::from_toml_str(&text)
    }
}

/// Errors raised while reading a scenario file.
#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed scenario file: {0}")]
    Parse(#[from] toml::de::Error),
}

// ---------------------------------------------------------------------------
// Config file representation
// ---------------------------------------------------------------------------

/// On-disk scenario grammar: `[sim]` plus repeated `[[services]]` and
/// `[[nodes]]` sections. Field names mirror the domain types; ids are
/// assigned by position so config authors cannot create sparse id spaces.
#[derive(Debug, Deserialize)]
struct RawScenarioFile {
    sim: RawSim,
    services: Vec<RawService>,
    nodes: Vec<RawNode>,
    #[serde(default)]
    critic: RawCritic,
}

#[derive(Debug, Deserialize)]
struct RawSim {
    instance_capacity: u32,
    alpha: f64,
    #[serde(default = "default_prop_speed")]
    prop_speed_mps: f64,
    #[serde(default = "default_q_threshold")]
    q_threshold: f64,
    #[serde(default = "default_window_seconds")]
    window_seconds: u32,
    /// `[width_m, height_m]` of the study region.
    bounding_box_m: [f64; 2],
    #[serde(default)]
    attacks: Vec<AttackEvent>,
}

fn default_prop_speed() -> f64 {
    1.0e6
}

fn default_q_threshold() -> f64 {
    0.5
}

fn default_window_seconds() -> u32 {
    60
}

#[derive(Debug, Deserialize)]
struct RawService {
    resource_units: u32,
    delay_threshold_ms: f64,
    #[serde(default)]
    label: Option<String>,
}

#[derive(Debug, Deserialize)]
struct RawNode {
    x_m: f64,
    y_m: f64,
    capacity: u32,
}

#[derive(Debug, Default, Deserialize)]
struct RawCritic {
    hidden: Option<Vec<usize>>,
    learning_rate: Option<f64>,
    update_every: Option<u32>,
    batch_capacity: Option<usize>,
}

impl RawScenarioFile {
    fn into_scenario(self) -> Scenario {
        let services = self
            .services
            .into_iter()
            .enumerate()
            .map(|(i, raw)| ServiceType {
                id: i as u16,
                resource_units: raw.resource_units,
                delay_threshold_ms: raw.delay_threshold_ms,
                label: raw.label.unwrap_or_else(|| format!("svc-{i}")),
            })
            .collect();
        let nodes = self
            .nodes
            .into_iter()
            .enumerate()
            .map(|(i, raw)| EdgeNode {
                id: i as u16,
                position: Point::new(raw.x_m, raw.y_m),
                capacity: raw.capacity,
                status: NodeStatus::Operational,
            })
            .collect();
        let defaults = CriticConfig::default();
        Scenario {
            services,
            nodes,
            instance_capacity: self.sim.instance_capacity,
            alpha: self.sim.alpha,
            prop_speed_mps: self.sim.prop_speed_mps,
            bounding_box: BoundingBox::new(self.sim.bounding_box_m[0], self.sim.bounding_box_m[1]),
            q_threshold: self.sim.q_threshold,
            window_seconds: self.sim.window_seconds,
            attack_schedule: self.sim.attacks,
            critic: CriticConfig {
                hidden: self.critic.hidden.unwrap_or(defaults.hidden),
                learning_rate: self.critic.learning_rate.unwrap_or(defaults.learning_rate),
                update_every: self.critic.update_every.unwrap_or(defaults.update_every),
                batch_capacity: self
                    .critic
                    .batch_capacity
                    .unwrap_or(defaults.batch_capacity),
            },
        }
    }
}

// ---------------------------------------------------------------------------
// Binary decision matrices
// ---------------------------------------------------------------------------

/// A dense 0/1 matrix with nodes as rows and services as columns.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BinaryMatrix {
    n_nodes: usize,
    n_services: usize,
    bits: Vec<u8>,
}

impl BinaryMatrix {
    pub fn zeros(n_nodes: usize, n_services: usize) -> Self {
        BinaryMatrix {
            n_nodes,
            n_services,
            bits: vec![0; n_nodes * n_services],
        }
    }

    pub fn n_nodes(&self) -> usize {
        self.n_nodes
    }

    pub fn n_services(&self) -> usize {
        self.n_services
    }

    pub fn get(&self, node: usize, service: usize) -> bool {
        self.bits[node * self.n_services + service] != 0
    }

    pub fn set(&mut self, node: usize, service: usize, value: bool) {
        self.bits[node * self.n_services + service] = u8::from(value);
    }

    /// Number of nodes hosting `service`.
    pub fn service_count(&self, service: usize) -> u32 {
        (0..self.n_nodes).map(|e| u32::from(self.get(e, service))).sum()
    }

    /// Ids of nodes hosting `service`.
    pub fn hosts_of(&self, service: usize) -> Vec<usize> {
        (0..self.n_nodes).filter(|&e| self.get(e, service)).collect()
    }

    /// Services hosted on `node`.
    pub fn services_on(&self, node: usize) -> Vec<usize> {
        (0..self.n_services).filter(|&s| self.get(node, s)).collect()
    }

    /// Total placed entries.
    pub fn ones(&self) -> usize {
        self.bits.iter().filter(|&&b| b != 0).count()
    }

    /// Clear every entry on `node`.
    pub fn clear_node(&mut self, node: usize) {
        for s in 0..self.n_services {
            self.set(node, s, false);
        }
    }

    /// Rows as nested `Vec`s, for JSON output.
    pub fn to_rows(&self) -> Vec<Vec<u8>> {
        (0..self.n_nodes)
            .map(|e| (0..self.n_services).map(|s| u8::from(self.get(e, s))).collect())
            .collect()
    }
}

/// The full set of binary decisions in play for one window.
#[derive(Debug, Clone, PartialEq)]
pub struct PlacementDecision {
    /// Primary placement.
    pub x: BinaryMatrix,
    /// First secondary candidate per (node, service).
    pub y1: BinaryMatrix,
    /// Second secondary candidate per (node, service).
    pub y2: BinaryMatrix,
    /// Recovery placement, present only after an attack has been processed.
    pub z: Option<BinaryMatrix>,
    /// The decision requests are actually mapped against: `x` before an
    /// attack, `x` minus the failed node plus the extracted recovery entries
    /// afterwards.
    pub merged: BinaryMatrix,
}

impl PlacementDecision {
    /// A decision that simply serves `x` (no attack processed).
    pub fn from_primary(x: BinaryMatrix) -> Self {
        let (e, s) = (x.n_nodes(), x.n_services());
        PlacementDecision {
            merged: x.clone(),
            x,
            y1: BinaryMatrix::zeros(e, s),
            y2: BinaryMatrix::zeros(e, s),
            z: None,
        }
    }
}

// ---------------------------------------------------------------------------
// Scenario validation
// ---------------------------------------------------------------------------

/// One scenario invariant violation; an empty violation list means "valid".
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Violation {
    /// Stable machine-readable code, e.g. `alpha-out-of-range`.
    pub code: &'static str,
    /// Human-readable context.
    pub detail: String,
}

impl Violation {
    fn new(code: &'static str, detail: impl Into<String>) -> Self {
        Violation {
            code,
            detail: detail.into(),
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.code, self.detail)
    }
}

/// Check every scenario invariant and return all violations found.
///
/// Violations are data, not failures: callers decide whether to abort.
/// The check is order-insensitive — relabeling-preserving reorderings of
/// nodes or services do not change the outcome.
pub fn validate_scenario(s: &Scenario) -> Vec<Violation> {
    let mut out = Vec::new();

    if s.services.is_empty() {
        out.push(Violation::new("no-services", "at least one service type is required"));
    }
    for (i, svc) in s.services.iter().enumerate() {
        if usize::from(svc.id) != i {
            out.push(Violation::new(
                "service-id-not-dense",
                format!("service at index {i} has id {}", svc.id),
            ));
        }
        if svc.resource_units == 0 {
            out.push(Violation::new(
                "service-zero-resources",
                format!("service {} has resource_units 0", svc.id),
            ));
        }
        if !(svc.delay_threshold_ms > 0.0) || !svc.delay_threshold_ms.is_finite() {
            out.push(Violation::new(
                "service-bad-threshold",
                format!("service {} has delay threshold {}", svc.id, svc.delay_threshold_ms),
            ));
        }
    }

    if s.nodes.is_empty() {
        out.push(Violation::new("no-nodes", "at least one edge node is required"));
    }
    for (i, node) in s.nodes.iter().enumerate() {
        if usize::from(node.id) != i {
            out.push(Violation::new(
                "node-id-not-dense",
                format!("node at index {i} has id {}", node.id),
            ));
        }
        if node.capacity == 0 {
            out.push(Violation::new(
                "node-zero-capacity",
                format!("node {} has capacity 0", node.id),
            ));
        }
        if !node.position.is_finite() {
            out.push(Violation::new(
                "node-position-not-finite",
                format!("node {} at {:?}", node.id, node.position),
            ));
        }
    }

    if s.instance_capacity < 1 {
        out.push(Violation::new(
            "instance-capacity-out-of-range",
            "instance_capacity must be at least 1",
        ));
    }
    if !(0.0..=1.0).contains(&s.alpha) || !s.alpha.is_finite() {
        out.push(Violation::new(
            "alpha-out-of-range",
            format!("alpha = {} is outside [0, 1]", s.alpha),
        ));
    }
    if !(0.0..=1.0).contains(&s.q_threshold) || !s.q_threshold.is_finite() {
        out.push(Violation::new(
            "q-threshold-out-of-range",
            format!("q_threshold = {} is outside [0, 1]", s.q_threshold),
        ));
    }
    if !(s.prop_speed_mps > 0.0) || !s.prop_speed_mps.is_finite() {
        out.push(Violation::new(
            "prop-speed-out-of-range",
            format!("prop_speed_mps = {} must be positive", s.prop_speed_mps),
        ));
    }
    if !(s.bounding_box.width_m > 0.0)
        || !(s.bounding_box.height_m > 0.0)
        || !s.bounding_box.width_m.is_finite()
        || !s.bounding_box.height_m.is_finite()
    {
        out.push(Violation::new(
            "bounding-box-degenerate",
            format!(
                "bounding box {} x {} m must have positive finite extent",
                s.bounding_box.width_m, s.bounding_box.height_m
            ),
        ));
    }
    if s.window_seconds == 0 {
        out.push(Violation::new("window-seconds-zero", "window_seconds must be positive"));
    }

    // Attack schedule: valid node ids, strictly increasing windows, sane
    // restore times, and no two attacks in flight at once (single-failure
    // model).
    let mut prev: Option<&AttackEvent> = None;
    for (i, atk) in s.attack_schedule.iter().enumerate() {
        if usize::from(atk.node) >= s.nodes.len() {
            out.push(Violation::new(
                "attack-unknown-node",
                format!("attack {i} targets node {} of {}", atk.node, s.nodes.len()),
            ));
        }
        if let Some(restore) = atk.restore {
            if restore <= atk.window {
                out.push(Violation::new(
                    "attack-restore-before-start",
                    format!("attack {i} restores at window {restore} <= start {}", atk.window),
                ));
            }
        }
        if let Some(p) = prev {
            if atk.window <= p.window {
                out.push(Violation::new(
                    "overlapping-attacks",
                    format!("attack {i} at window {} does not follow window {}", atk.window, p.window),
                ));
            } else {
                match p.restore {
                    Some(restore) if atk.window >= restore => {}
                    _ => out.push(Violation::new(
                        "overlapping-attacks",
                        format!(
                            "attack {i} at window {} starts before the previous failure is restored",
                            atk.window
                        ),
                    )),
                }
            }
        }
        prev = Some(atk);
    }

    out
}

// ---------------------------------------------------------------------------
// Primary placement checker
// ---------------------------------------------------------------------------

/// The constraint families a primary placement can violate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum SpViolationKind {
    /// The number of hosts for a service differs from its required instances.
    InstanceCount,
    /// A placed (node, service) pair exceeds the service's delay threshold.
    DelayThreshold,
    /// A node's hosted services exceed its resource capacity.
    NodeCapacity,
    /// An instance sits on a non-operational node.
    FailedNodePlacement,
}

/// One violated placement constraint.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpViolation {
    pub kind: SpViolationKind,
    pub node: Option<u16>,
    pub service: Option<u16>,
    pub detail: String,
}

/// Errors from the checker itself (the checked solution being wrong is not an
/// error; it is the reported outcome).
#[derive(Debug, Error)]
pub enum CheckError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
}

/// Independently verify a primary placement `x` against scenario `s`,
/// per-service instance requirements `instances`, and the delay matrix used
/// to build it. Returns every violated constraint; an empty list is a pass.
///
/// This function deliberately shares no code with the placement builder: it
/// re-derives each constraint from the raw inputs.
pub fn check_sp_solution(
    s: &Scenario,
    instances: &[u32],
    delays: &DelayMatrix,
    x: &BinaryMatrix,
) -> Result<Vec<SpViolation>, CheckError> {
    let ne = s.n_nodes();
    let ns = s.n_services();
    if instances.len() != ns {
        return Err(CheckError::DimensionMismatch(format!(
            "instances has {} entries for {} services",
            instances.len(),
            ns
        )));
    }
    if x.n_nodes() != ne || x.n_services() != ns {
        return Err(CheckError::DimensionMismatch(format!(
            "x is {}x{} for a {}x{} scenario",
            x.n_nodes(),
            x.n_services(),
            ne,
            ns
        )));
    }
    if delays.n_nodes() != ne || delays.n_services() != ns {
        return Err(CheckError::DimensionMismatch(format!(
            "delay matrix is {}x{} for a {}x{} scenario",
            delays.n_nodes(),
            delays.n_services(),
            ne,
            ns
        )));
    }

    let mut out = Vec::new();

    for (sid, svc) in s.services.iter().enumerate() {
        let placed = x.service_count(sid);
        if placed != instances[sid] {
            out.push(SpViolation {
                kind: SpViolationKind::InstanceCount,
                node: None,
                service: Some(sid as u16),
                detail: format!("service {sid} has {placed} hosts, needs {}", instances[sid]),
            });
        }
        for e in 0..ne {
            if !x.get(e, sid) {
                continue;
            }
            let d = delays.at(e, sid);
            if d > svc.delay_threshold_ms + FEASIBILITY_TOL {
                out.push(SpViolation {
                    kind: SpViolationKind::DelayThreshold,
                    node: Some(e as u16),
                    service: Some(sid as u16),
                    detail: format!(
                        "delay {:.3} ms exceeds threshold {:.3} ms",
                        d, svc.delay_threshold_ms
                    ),
                });
            }
            if !s.nodes[e].is_operational() {
                out.push(SpViolation {
                    kind: SpViolationKind::FailedNodePlacement,
                    node: Some(e as u16),
                    service: Some(sid as u16),
                    detail: format!("service {sid} placed on failed node {e}"),
                });
            }
        }
    }

    for (e, node) in s.nodes.iter().enumerate() {
        let used: u32 = (0..ns)
            .filter(|&sid| x.get(e, sid))
            .map(|sid| s.services[sid].resource_units)
            .sum();
        if used > node.capacity {
            out.push(SpViolation {
                kind: SpViolationKind::NodeCapacity,
                node: Some(e as u16),
                service: None,
                detail: format!("node {e} uses {used} of {} units", node.capacity),
            });
        }
    }

    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::delaymodel::DelayMatrix;

    fn testbed() -> Scenario {
        Scenario::grid_testbed()
    }

    #[test]
    fn grid_testbed_is_valid() {
        assert!(validate_scenario(&testbed()).is_empty());
    }

    #[test]
    fn grid_testbed_shape_matches_reference_setup() {
        let s = testbed();
        assert_eq!(s.n_nodes(), 9);
        assert_eq!(s.n_services(), 8);
        assert_eq!(s.instance_capacity, 30);
        assert_eq!(s.alpha, 0.5);
        assert!(s.nodes.iter().all(|n| n.capacity == 100));
        let r: Vec<u32> = s.services.iter().map(|x| x.resource_units).collect();
        assert_eq!(r, vec![10, 12, 14, 16, 18, 20, 22, 24]);
        let d: Vec<f64> = s.services.iter().map(|x| x.delay_threshold_ms).collect();
        assert_eq!(d, vec![50.0, 60.0, 70.0, 80.0, 90.0, 100.0, 110.0, 120.0]);
        assert_eq!(s.max_delay_threshold(), 120.0);
    }

    #[test]
    fn alpha_out_of_range_is_reported() {
        let mut s = testbed();
        s.alpha = 1.5;
        let v = validate_scenario(&s);
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].code, "alpha-out-of-range");
    }

    #[test]
    fn same_window_attacks_are_overlapping() {
        let mut s = testbed();
        s.attack_schedule = vec![
            AttackEvent { window: 3, node: 0, restore: Some(5) },
            AttackEvent { window: 3, node: 1, restore: Some(6) },
        ];
        let v = validate_scenario(&s);
        assert!(v.iter().any(|x| x.code == "overlapping-attacks"), "{v:?}");
    }

    #[test]
    fn unrestored_attack_conflicts_with_a_later_one() {
        let mut s = testbed();
        s.attack_schedule = vec![
            AttackEvent { window: 2, node: 0, restore: None },
            AttackEvent { window: 7, node: 1, restore: None },
        ];
        let v = validate_scenario(&s);
        assert!(v.iter().any(|x| x.code == "overlapping-attacks"), "{v:?}");
    }

    #[test]
    fn disjoint_attacks_pass() {
        let mut s = testbed();
        s.attack_schedule = vec![
            AttackEvent { window: 2, node: 0, restore: Some(4) },
            AttackEvent { window: 4, node: 1, restore: Some(6) },
        ];
        assert!(validate_scenario(&s).is_empty());
    }

    #[test]
    fn restore_must_follow_start() {
        let mut s = testbed();
        s.attack_schedule = vec![AttackEvent { window: 5, node: 0, restore: Some(5) }];
        let v = validate_scenario(&s);
        assert!(v.iter().any(|x| x.code == "attack-restore-before-start"));
    }

    #[test]
    fn validation_is_idempotent_and_reorder_insensitive() {
        let mut s = testbed();
        s.alpha = -0.25;
        let first = validate_scenario(&s);
        let second = validate_scenario(&s);
        assert_eq!(first, second);

        // Relabel-preserving reorder: swap two services and renumber.
        let mut reordered = s.clone();
        reordered.services.swap(2, 5);
        for (i, svc) in reordered.services.iter_mut().enumerate() {
            svc.id = i as u16;
        }
        let third = validate_scenario(&reordered);
        assert_eq!(first.len(), third.len());
        assert_eq!(first[0].code, third[0].code);
    }

    #[test]
    fn toml_round_trip_matches_programmatic_testbed() {
        let text = r#"
[sim]
instance_capacity = 30
alpha = 0.5
prop_speed_mps = 1.0e6
q_threshold = 0.5
window_seconds = 60
bounding_box_m = [15000.0, 15000.0]
attacks = [{ window = 5, node = 4, restore = 9 }]

[[services]]
resource_units = 10
delay_threshold_ms = 50.0

[[services]]
resource_units = 12
delay_threshold_ms = 60.0

[[nodes]]
x_m = 2500.0
y_m = 2500.0
capacity = 100

[[nodes]]
x_m = 7500.0
y_m = 2500.0
capacity = 100
"#;
        let s = Scenario::from_toml_str(text).expect("parse");
        assert_eq!(s.n_services(), 2);
        assert_eq!(s.n_nodes(), 2);
        assert_eq!(s.services[1].resource_units, 12);
        assert_eq!(s.nodes[1].position, Point::new(7500.0, 2500.0));
        assert_eq!(
            s.attack_schedule,
            vec![AttackEvent { window: 5, node: 4, restore: Some(9) }]
        );
        assert_eq!(s.critic, CriticConfig::default());
        assert!(validate_scenario(&s)
            .iter()
            .all(|v| v.code == "attack-unknown-node"));
    }

    #[test]
    fn malformed_toml_is_a_parse_error() {
        let err = Scenario::from_toml_str("[sim]\nalpha = \"high\"").unwrap_err();
        assert!(matches!(err, ConfigError::Parse(_)));
    }

    fn zero_delays(s: &Scenario) -> DelayMatrix {
        DelayMatrix::constant(s.n_nodes(), s.n_services(), 0, 0.0)
    }

    #[test]
    fn checker_accepts_all_zero_placement_for_zero_demand() {
        let s = testbed();
        let x = BinaryMatrix::zeros(9, 8);
        let v = check_sp_solution(&s, &[0; 8], &zero_delays(&s), &x).unwrap();
        assert!(v.is_empty());
    }

    #[test]
    fn checker_flags_missing_second_instance() {
        // Two required instances but a binary matrix can mark one node only
        // once, so any single-column placement under-counts.
        let s = testbed();
        let mut demand = [0u32; 8];
        demand[3] = 2;
        let mut x = BinaryMatrix::zeros(9, 8);
        x.set(4, 3, true);
        let v = check_sp_solution(&s, &demand, &zero_delays(&s), &x).unwrap();
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].kind, SpViolationKind::InstanceCount);
    }

    #[test]
    fn checker_flags_capacity_overflow() {
        // Services 6 and 7 (22 + 24) plus 4..5 and others: place 0..7 minus
        // none on one node: sum of all eight is 136 > 100.
        let s = testbed();
        let demand = [1u32; 8];
        let mut x = BinaryMatrix::zeros(9, 8);
        for sid in 0..8 {
            x.set(0, sid, true);
        }
        let v = check_sp_solution(&s, &demand, &zero_delays(&s), &x).unwrap();
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].kind, SpViolationKind::NodeCapacity);
        assert_eq!(v[0].node, Some(0));
    }

    #[test]
    fn checker_flags_delay_threshold_breach() {
        let s = testbed();
        let mut demand = [0u32; 8];
        demand[0] = 1;
        let mut x = BinaryMatrix::zeros(9, 8);
        x.set(2, 0, true);
        // 51 ms at every cell; service 0 tolerates 50 ms.
        let delays = DelayMatrix::constant(9, 8, 0, 51.0);
        let v = check_sp_solution(&s, &demand, &delays, &x).unwrap();
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].kind, SpViolationKind::DelayThreshold);
    }

    #[test]
    fn checker_flags_failed_node_use() {
        let mut s = testbed();
        s.nodes[2].status = NodeStatus::Failed;
        let mut demand = [0u32; 8];
        demand[0] = 1;
        let mut x = BinaryMatrix::zeros(9, 8);
        x.set(2, 0, true);
        let v = check_sp_solution(&s, &demand, &zero_delays(&s), &x).unwrap();
        assert!(v.iter().any(|w| w.kind == SpViolationKind::FailedNodePlacement));
    }

    #[test]
    fn checker_rejects_mismatched_dimensions() {
        let s = testbed();
        let x = BinaryMatrix::zeros(4, 8);
        let err = check_sp_solution(&s, &[0; 8], &zero_delays(&s), &x);
        assert!(err.is_err());
    }

    #[test]
    fn binary_matrix_accessors() {
        let mut m = BinaryMatrix::zeros(3, 2);
        m.set(1, 0, true);
        m.set(2, 0, true);
        m.set(1, 1, true);
        assert_eq!(m.service_count(0), 2);
        assert_eq!(m.hosts_of(0), vec![1, 2]);
        assert_eq!(m.services_on(1), vec![0, 1]);
        assert_eq!(m.ones(), 3);
        m.clear_node(1);
        assert_eq!(m.ones(), 1);
        assert_eq!(m.to_rows(), vec![vec![0, 0], vec![0, 0], vec![1, 0]]);
    }
}
