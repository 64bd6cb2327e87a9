//! Delay mathematics: propagation, mean access delay, the queueing penalty on
//! overloaded instances, and the combined secondary-host delay.
//!
//! All delays are expressed in milliseconds. Queueing quantities are counted
//! in requests per window: an instance absorbs up to its capacity without
//! queueing, and only the excess beyond capacity waits. The waiting-time
//! formula is `excess / (2 * cap * (cap - excess))` windows — a deliberate
//! deviation from the textbook M/D/1 expression `rho / (2 * mu * (1 - rho))`:
//! it treats the excess itself as the queue population, saturating (see
//! [`QueueDelay::Overload`]) once the excess reaches a full instance's
//! capacity.

use serde::Serialize;

use crate::scenario::{Point, Scenario};
use crate::traces::RequestWindow;

/// Per-(node, service) mean access delays for one window, in milliseconds.
#[derive(Debug, Clone, PartialEq)]
pub struct DelayMatrix {
    n_nodes: usize,
    n_services: usize,
    window: u32,
    d: Vec<f64>,
    /// Per-service flag: false when the window had no request for the
    /// service, in which case its delay entries are a defined 0.
    has_demand: Vec<bool>,
}

impl DelayMatrix {
    /// A matrix with every cell set to `value` and demand everywhere;
    /// intended for tests and fixtures.
    pub fn constant(n_nodes: usize, n_services: usize, window: u32, value: f64) -> Self {
        DelayMatrix {
            n_nodes,
            n_services,
            window,
            d: vec![value; n_nodes * n_services],
            has_demand: vec![true; n_services],
        }
    }

    /// Build from explicit rows (one per node); intended for tests.
    pub fn from_rows(window: u32, rows: &[Vec<f64>]) -> Self {
        let n_nodes = rows.len();
        let n_services = rows.first().map_or(0, Vec::len);
        assert!(rows.iter().all(|r| r.len() == n_services), "ragged delay rows");
        DelayMatrix {
            n_nodes,
            n_services,
            window,
            d: rows.iter().flatten().copied().collect(),
            has_demand: vec![true; n_services],
        }
    }

    pub fn n_nodes(&self) -> usize {
        self.n_nodes
    }

    pub fn n_services(&self) -> usize {
        self.n_services
    }

    pub fn window(&self) -> u32 {
        self.window
    }

    /// Mean access delay for `service` at `node`, ms.
    pub fn at(&self, node: usize, service: usize) -> f64 {
        self.d[node * self.n_services + service]
    }

    /// Whether the window contained any request for `service`.
    pub fn service_has_demand(&self, service: usize) -> bool {
        self.has_demand[service]
    }
}

/// Mean propagation delay over a set of requesters, with an explicit marker
/// for the empty set (whose delay is a defined 0 so that zero-demand services
/// never constrain placement).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AccessDelay {
    pub ms: f64,
    /// True when no vehicle requested the service: `ms` is 0 by convention,
    /// not by measurement.
    pub undefined: bool,
}

/// Offered load on one service instance, in requests per window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct QueueLoad {
    /// Requests already mapped to the instance.
    pub base: f64,
    /// Requests redirected onto it (usually from a failed host).
    pub redirected: f64,
    /// Requests one instance serves per window without queueing.
    pub capacity: f64,
}

impl QueueLoad {
    pub fn new(base: f64, redirected: f64, capacity: f64) -> Self {
        QueueLoad { base, redirected, capacity }
    }

    pub fn total(&self) -> f64 {
        self.base + self.redirected
    }

    /// Load beyond what the instance absorbs without queueing.
    pub fn excess(&self) -> f64 {
        (self.total() - self.capacity).max(0.0)
    }
}

/// A queueing delay that may saturate: once the excess load reaches the
/// instance capacity the waiting-time model has no finite value, and callers
/// must treat the instance as unusable rather than see a bogus number.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum QueueDelay {
    Finite(f64),
    Overload,
}

impl QueueDelay {
    pub fn is_overload(&self) -> bool {
        matches!(self, QueueDelay::Overload)
    }

    pub fn finite(&self) -> Option<f64> {
        match *self {
            QueueDelay::Finite(ms) => Some(ms),
            QueueDelay::Overload => None,
        }
    }
}

/// Straight-line propagation delay between two points, in milliseconds.
///
/// `speed_mps` is an effective speed that folds transmission and processing
/// into one constant; it must be positive.
pub fn propagation_delay(p: &Point, q: &Point, speed_mps: f64) -> f64 {
    assert!(
        speed_mps > 0.0 && speed_mps.is_finite(),
        "propagation speed must be positive, got {speed_mps}"
    );
    1000.0 * p.dist(q) / speed_mps
}

/// Mean propagation delay from each requester location to `node`.
///
/// An empty slice yields 0 ms flagged `undefined`, so services nobody asked
/// for do not restrict where instances may go.
pub fn access_delay(requesters: &[Point], node: &Point, speed_mps: f64) -> AccessDelay {
    if requesters.is_empty() {
        return AccessDelay { ms: 0.0, undefined: true };
    }
    let sum: f64 = requesters
        .iter()
        .map(|p| propagation_delay(p, node, speed_mps))
        .sum();
    AccessDelay { ms: sum / requesters.len() as f64, undefined: false }
}

/// Mean waiting time for an instance under `load`, in milliseconds.
///
/// Loads up to the instance capacity are served without any queueing. Beyond
/// that, the excess `total - capacity` forms the queue; once the excess
/// itself reaches the capacity the model saturates and returns
/// [`QueueDelay::Overload`] instead of a negative or infinite delay.
/// `window_ms` converts the window-denominated waiting time to milliseconds.
pub fn md1_wait(load: &QueueLoad, window_ms: f64) -> QueueDelay {
    assert!(load.capacity > 0.0, "instance capacity must be positive");
    let cap = load.capacity;
    if load.total() <= cap {
        return QueueDelay::Finite(0.0);
    }
    let excess = load.total() - cap;
    if excess >= cap {
        return QueueDelay::Overload;
    }
    QueueDelay::Finite((excess / (2.0 * cap * (cap - excess))) * window_ms)
}

/// Delay seen by vehicles redirected to a secondary host: mean propagation to
/// the host plus its queueing penalty. Overload is absorbing.
pub fn secondary_delay(
    requesters: &[Point],
    node: &Point,
    load: &QueueLoad,
    speed_mps: f64,
    window_ms: f64,
) -> QueueDelay {
    match md1_wait(load, window_ms) {
        QueueDelay::Overload => QueueDelay::Overload,
        QueueDelay::Finite(wait) => {
            QueueDelay::Finite(access_delay(requesters, node, speed_mps).ms + wait)
        }
    }
}

/// Mean access delay for every (node, service) cell of one request window.
///
/// Pre-attack queueing is negligible by assumption, so the matrix holds pure
/// propagation means; queue terms enter only through [`secondary_delay`] and
/// the simulator's observed delays.
pub fn compute_delay_matrix(window: &RequestWindow, scenario: &Scenario) -> DelayMatrix {
    let ns = scenario.n_services();
    let ne = scenario.n_nodes();
    let mut per_service: Vec<Vec<Point>> = vec![Vec::new(); ns];
    for req in &window.requests {
        per_service[req.service as usize].push(req.location);
    }
    let mut d = vec![0.0; ne * ns];
    let mut has_demand = vec![false; ns];
    for (sid, locs) in per_service.iter().enumerate() {
        has_demand[sid] = !locs.is_empty();
        for (e, node) in scenario.nodes.iter().enumerate() {
            d[e * ns + sid] = access_delay(locs, &node.position, scenario.prop_speed_mps).ms;
        }
    }
    DelayMatrix {
        n_nodes: ne,
        n_services: ns,
        window: window.index,
        d,
        has_demand,
    }
}
