//! The learning half of the control loop: a small critic network scores each
//! window's placement quality in `[0, 1]`, and a rule-based actor turns that
//! score into one of three moves — keep the cached placement, re-optimize it,
//! or run the attack-recovery pipeline (redirect stranded requests to their
//! precomputed secondary hosts now, re-instantiate the lost instances for the
//! next window).
//!
//! The critic is a plain feed-forward net (tanh hidden layers, identity
//! output clamped to `[0, 1]`) trained by full-batch gradient descent on the
//! mean-squared error against per-window targets derived from observed
//! delays. Nothing here is stochastic at run time: initialization is seeded,
//! and training order is the insertion order of the feedback buffer.

use std::collections::BTreeMap;
use std::collections::VecDeque;
use std::time::Instant;

use ndarray::{Array1, Array2};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::delaymodel::DelayMatrix;
use crate::placement::{
    map_with_overflow, merge_recovery, psvm_table, solve_sp, solve_srp, DemandProfile,
    PsvmSolution, V2EMap,
};
use crate::scenario::{BinaryMatrix, Scenario, ServiceRequest};

// ---------------------------------------------------------------------------
// Critic network
// ---------------------------------------------------------------------------

/// Feed-forward critic: tanh hidden layers, identity output clamped to
/// `[0, 1]`. `widths` runs input → hidden… → 1; `weights[l]` has shape
/// `(widths[l+1], widths[l])`.
#[derive(Debug, Clone, PartialEq)]
pub struct CriticNet {
    widths: Vec<usize>,
    weights: Vec<Array2<f64>>,
    biases: Vec<Array1<f64>>,
}

#[derive(Debug, Error)]
pub enum NetFormatError {
    #[error("critic weight file is not valid JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("critic weight file is malformed: {0}")]
    Shape(String),
}

/// Serialized form: row-major weight matrices, one entry per layer.
#[derive(Serialize, Deserialize)]
struct SavedNet {
    widths: Vec<usize>,
    weights: Vec<Vec<f64>>,
    biases: Vec<Vec<f64>>,
}

impl CriticNet {
    /// Xavier-uniform weights from a seeded generator; hidden biases start at
    /// zero and the output bias at 0.5, so an untrained critic reports a
    /// neutral score rather than a saturated one.
    pub fn seeded(input_dim: usize, hidden: &[usize], seed: u64) -> CriticNet {
        assert!(input_dim > 0, "critic input dimension must be positive");
        assert!(hidden.iter().all(|&w| w > 0), "hidden widths must be positive");
        let mut widths = Vec::with_capacity(hidden.len() + 2);
        widths.push(input_dim);
        widths.extend_from_slice(hidden);
        widths.push(1);

        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        let layers = widths.len() - 1;
        for l in 0..layers {
            let (fan_in, fan_out) = (widths[l], widths[l + 1]);
            let mut limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            if l == layers - 1 {
                // Keep the output layer small so the initial Q sits near the
                // mid-range bias: the clamp only passes gradients while the
                // raw output is inside [0,1], and a wide initial spread can
                // freeze an entire batch before training ever starts.
                limit *= 0.1;
            }
            let w = Array2::from_shape_fn((fan_out, fan_in), |_| {
                rng.random_range(-limit..=limit)
            });
            weights.push(w);
            biases.push(Array1::zeros(fan_out));
        }
        if let Some(out_bias) = biases.last_mut() {
            out_bias[0] = 0.5;
        }
        CriticNet { widths, weights, biases }
    }

    /// All-zero network; forwards to exactly 0 whatever the input.
    pub fn zeroed(input_dim: usize, hidden: &[usize]) -> CriticNet {
        let mut net = CriticNet::seeded(input_dim, hidden, 0);
        for w in &mut net.weights {
            w.fill(0.0);
        }
        for b in &mut net.biases {
            b.fill(0.0);
        }
        net
    }

    pub fn input_dim(&self) -> usize {
        self.widths[0]
    }

    /// Layer widths, input first, output (always 1) last.
    pub fn widths(&self) -> &[usize] {
        &self.widths
    }

    pub fn to_json(&self) -> String {
        let saved = SavedNet {
            widths: self.widths.clone(),
            weights: self.weights.iter().map(|w| w.iter().copied().collect()).collect(),
            biases: self.biases.iter().map(|b| b.to_vec()).collect(),
        };
        serde_json::to_string(&saved).expect("critic serialization cannot fail")
    }

    pub fn from_json(text: &str) -> Result<CriticNet, NetFormatError> {
        let saved: SavedNet = serde_json::from_str(text)?;
        if saved.widths.len() < 2 {
            return Err(NetFormatError::Shape("need at least input and output widths".into()));
        }
        if *saved.widths.last().unwrap() != 1 {
            return Err(NetFormatError::Shape("output width must be 1".into()));
        }
        if saved.widths.iter().any(|&w| w == 0) {
            return Err(NetFormatError::Shape("zero layer width".into()));
        }
        let layers = saved.widths.len() - 1;
        if saved.weights.len() != layers || saved.biases.len() != layers {
            return Err(NetFormatError::Shape(format!(
                "expected {layers} weight/bias layers, got {}/{}",
                saved.weights.len(),
                saved.biases.len()
            )));
        }
        let mut weights = Vec::with_capacity(layers);
        let mut biases = Vec::with_capacity(layers);
        for l in 0..layers {
            let (rows, cols) = (saved.widths[l + 1], saved.widths[l]);
            let w = Array2::from_shape_vec((rows, cols), saved.weights[l].clone())
                .map_err(|_| {
                    NetFormatError::Shape(format!(
                        "layer {l}: expected {rows}×{cols} weights, got {}",
                        saved.weights[l].len()
                    ))
                })?;
            if saved.biases[l].len() != rows {
                return Err(NetFormatError::Shape(format!(
                    "layer {l}: expected {rows} biases, got {}",
                    saved.biases[l].len()
                )));
            }
            if w.iter().any(|v| !v.is_finite())
                || saved.biases[l].iter().any(|v| !v.is_finite())
            {
                return Err(NetFormatError::Shape(format!("layer {l}: non-finite value")));
            }
            weights.push(w);
            biases.push(Array1::from_vec(saved.biases[l].clone()));
        }
        Ok(CriticNet { widths: saved.widths, weights, biases })
    }

    /// Forward pass keeping per-layer activations (index 0 = input) and the
    /// raw pre-clamp output, for backpropagation.
    fn forward_trace(&self, features: &[f64]) -> (Vec<Array1<f64>>, f64) {
        assert_eq!(
            features.len(),
            self.widths[0],
            "feature dimension {} does not match critic input {}",
            features.len(),
            self.widths[0]
        );
        let mut activations = Vec::with_capacity(self.widths.len());
        activations.push(Array1::from_vec(features.to_vec()));
        for (l, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            let z = w.dot(activations.last().unwrap()) + b;
            if l + 1 < self.weights.len() {
                activations.push(z.mapv(f64::tanh));
            } else {
                let raw = z[0];
                return (activations, raw);
            }
        }
        unreachable!("a critic always has at least one layer");
    }
}

/// Deterministic forward pass; the raw output is clamped to `[0, 1]`.
pub fn critic_forward(net: &CriticNet, features: &[f64]) -> f64 {
    let (_, raw) = net.forward_trace(features);
    raw.clamp(0.0, 1.0)
}

// ---------------------------------------------------------------------------
// Feedback, features, targets
// ---------------------------------------------------------------------------

/// What one simulation window observed, as fed back to the critic.
#[derive(Debug, Clone, PartialEq)]
pub struct FeedbackRecord {
    pub window: u32,
    /// Mean observed delay per service over the window's mapped requests,
    /// milliseconds; 0 for services with no requests.
    pub mean_delay_ms: Vec<f64>,
    /// Per-service request counts for the window.
    pub arrivals: Vec<u32>,
    /// Whether an attack fired in this window.
    pub attack: bool,
}

/// Critic input features: per-service offered load normalized by the serving
/// capacity `ℂ·I_s`, then per-service observed delay normalized by its
/// threshold, then the attack flag. Dimension `2·|S| + 1`.
pub fn featurize(record: &FeedbackRecord, scenario: &Scenario) -> Vec<f64> {
    let n = scenario.n_services();
    assert_eq!(record.mean_delay_ms.len(), n, "delay vector must cover every service");
    assert_eq!(record.arrivals.len(), n, "arrival vector must cover every service");
    let mut features = Vec::with_capacity(2 * n + 1);
    for s in 0..n {
        let instances =
            record.arrivals[s].div_ceil(scenario.instance_capacity).max(1);
        let capacity = f64::from(scenario.instance_capacity) * f64::from(instances);
        features.push(f64::from(record.arrivals[s]) / capacity);
    }
    for s in 0..n {
        features.push(record.mean_delay_ms[s] / scenario.services[s].delay_threshold_ms);
    }
    features.push(if record.attack { 1.0 } else { 0.0 });
    features
}

/// Per-service training target: how far below its threshold the observed
/// delay stayed, normalized to `[0, 1]`; 0 once the threshold is reached or
/// exceeded. Nonincreasing in the observed delay.
pub fn target_value(delay_threshold_ms: f64, observed_ms: f64) -> f64 {
    assert!(delay_threshold_ms > 0.0, "delay threshold must be positive");
    if observed_ms < delay_threshold_ms {
        ((delay_threshold_ms - observed_ms) / delay_threshold_ms).clamp(0.0, 1.0)
    } else {
        0.0
    }
}

/// Scalar window target: mean of [`target_value`] over services that saw
/// demand. A window with no demand at all scored perfectly by definition.
pub fn window_target(record: &FeedbackRecord, scenario: &Scenario) -> f64 {
    let mut sum = 0.0;
    let mut count = 0u32;
    for (s, &arrivals) in record.arrivals.iter().enumerate() {
        if arrivals == 0 {
            continue;
        }
        sum += target_value(scenario.services[s].delay_threshold_ms, record.mean_delay_ms[s]);
        count += 1;
    }
    if count == 0 {
        1.0
    } else {
        sum / f64::from(count)
    }
}

/// Bounded FIFO of (features, target) pairs; pushing past capacity drops the
/// oldest record.
#[derive(Debug, Clone)]
pub struct TrainBatch {
    capacity: usize,
    samples: VecDeque<(Vec<f64>, f64)>,
}

impl Default for TrainBatch {
    fn default() -> Self {
        TrainBatch::with_capacity(100)
    }
}

impl TrainBatch {
    pub fn with_capacity(capacity: usize) -> TrainBatch {
        assert!(capacity >= 1, "batch capacity must be at least 1");
        TrainBatch { capacity, samples: VecDeque::new() }
    }

    pub fn push(&mut self, features: Vec<f64>, target: f64) {
        if self.samples.len() == self.capacity {
            self.samples.pop_front();
        }
        self.samples.push_back((features, target));
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&[f64], f64)> {
        self.samples.iter().map(|(f, y)| (f.as_slice(), *y))
    }
}

/// Mean-squared loss and its full-batch gradients. The clamp passes
/// gradient through only while the raw output lies inside `[0, 1]`; outside,
/// the loss is locally flat in the parameters.
fn batch_gradients(
    net: &CriticNet,
    batch: &TrainBatch,
) -> (f64, Vec<Array2<f64>>, Vec<Array1<f64>>) {
    assert!(!batch.is_empty(), "cannot train on an empty batch");
    let n = batch.len() as f64;
    let mut grad_w: Vec<Array2<f64>> =
        net.weights.iter().map(|w| Array2::zeros(w.raw_dim())).collect();
    let mut grad_b: Vec<Array1<f64>> =
        net.biases.iter().map(|b| Array1::zeros(b.raw_dim())).collect();
    let mut loss = 0.0;

    for (features, target) in batch.iter() {
        let (activations, raw) = net.forward_trace(features);
        let q = raw.clamp(0.0, 1.0);
        let err = q - target;
        loss += err * err / n;

        let pass_through = (0.0..=1.0).contains(&raw);
        let dq = if pass_through { 2.0 * err / n } else { 0.0 };
        // delta = ∂loss/∂z for the layer being walked, output first.
        let mut delta = Array1::from_vec(vec![dq]);
        for l in (0..net.weights.len()).rev() {
            let a_prev = &activations[l];
            for (r, &d) in delta.iter().enumerate() {
                if d == 0.0 {
                    continue;
                }
                grad_b[l][r] += d;
                for (c, &a) in a_prev.iter().enumerate() {
                    grad_w[l][(r, c)] += d * a;
                }
            }
            if l > 0 {
                // Pull the delta back through W and the tanh of layer l-1.
                let back = net.weights[l].t().dot(&delta);
                delta = &back * &activations[l].mapv(|a| 1.0 - a * a);
            }
        }
    }
    (loss, grad_w, grad_b)
}

/// One full-batch gradient-descent step. Returns the pre-step loss.
pub fn critic_train_step(net: &mut CriticNet, batch: &TrainBatch, learning_rate: f64) -> f64 {
    let (loss, grad_w, grad_b) = batch_gradients(net, batch);
    for (w, g) in net.weights.iter_mut().zip(&grad_w) {
        *w -= &(g * learning_rate);
    }
    for (b, g) in net.biases.iter_mut().zip(&grad_b) {
        *b -= &(g * learning_rate);
    }
    loss
}

// ---------------------------------------------------------------------------
// Actor policy
// ---------------------------------------------------------------------------

/// A placement the control loop can serve from: the instance matrix, the
/// proactive secondary table keyed by hypothetical failed node, and the
/// per-service instance counts the placement was solved for.
#[derive(Debug, Clone)]
pub struct PlacementDecision {
    pub x: BinaryMatrix,
    pub psvm: BTreeMap<u16, PsvmSolution>,
    pub instances: Vec<u32>,
}

/// Which branch of the policy ran.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ActorAction {
    /// Quality was good: the cached placement is reused untouched.
    KeepCached,
    /// Quality was poor (or the caller forced a refresh) without an attack:
    /// fresh placement and secondary table.
    Reoptimize,
    /// An attack fired: stranded requests redirected to their secondary
    /// hosts now, lost instances re-instantiated for the next window.
    Recover { failed: u16 },
}

/// Why a window could not serve everything it was asked to.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub enum Degradation {
    /// A service lost its host and no admissible secondary exists.
    NoSecondary { service: u16 },
    /// No surviving node can absorb the lost instances.
    RecoveryImpossible,
    /// Re-optimization found the current demand unplaceable; the stale
    /// placement stays in force.
    PlacementInfeasible,
    /// Requests exceeded every instance's capacity for the service.
    Unmapped { service: u16, count: u32 },
    /// An instance's combined load saturated the queueing model; its
    /// requests waited out the whole window.
    Overloaded { node: u16, service: u16 },
}

/// Wall-clock seconds spent in each solver phase (zero where a phase did not
/// run).
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct SolveTimes {
    pub sp: f64,
    pub psvm: f64,
    pub srp: f64,
}

/// Everything the actor needs to decide one window.
#[derive(Debug, Clone, Copy)]
pub struct ActorInput<'a> {
    pub cached: &'a PlacementDecision,
    /// Critic score of the previous window's feedback.
    pub q_value: f64,
    /// Node failing at this window's start, if an attack fired.
    pub attack: Option<u16>,
    /// Caller-forced refresh: the demand's instance vector drifted from the
    /// cached placement, or a restored node rejoined the pool.
    pub force_refresh: bool,
    pub demand: &'a DemandProfile,
    pub delays: &'a DelayMatrix,
    pub requests: &'a [ServiceRequest],
}

/// The actor's verdict for one window.
#[derive(Debug, Clone)]
pub struct ActorOutcome {
    /// Placement serving this window's requests.
    pub serving: BinaryMatrix,
    /// Decision cached for subsequent windows (recovery merges land here;
    /// otherwise its matrix equals `serving`).
    pub next: PlacementDecision,
    pub action: ActorAction,
    /// Stranded (vehicle, service) pairs and the surviving node each was
    /// redirected to.
    pub redirects: BTreeMap<(u64, u16), u16>,
    /// The attack window's request mapping, already redirected; `None` when
    /// the caller should map onto `serving` itself.
    pub window_map: Option<V2EMap>,
    pub degradations: Vec<Degradation>,
    pub times: SolveTimes,
}

/// The per-window policy: good score → cached placement; poor score (or a
/// forced refresh) → re-solve placement and rebuild the secondary table; an
/// attack → redirect the failed node's requests to their precomputed
/// secondary hosts immediately and solve recovery for the next window. An
/// attack always takes the recovery branch regardless of the score — a stale
/// "good" verdict must not strand vehicles on a dead node. Solver failures
/// surface as [`Degradation`] flags, never as errors: the window is always
/// served as well as the state allows.
pub fn actor_decide(scenario: &Scenario, input: &ActorInput) -> ActorOutcome {
    if let Some(failed) = input.attack {
        return recover(scenario, input, failed);
    }
    if input.q_value < scenario.q_threshold || input.force_refresh {
        return reoptimize(scenario, input);
    }
    ActorOutcome {
        serving: input.cached.x.clone(),
        next: input.cached.clone(),
        action: ActorAction::KeepCached,
        redirects: BTreeMap::new(),
        window_map: None,
        degradations: Vec::new(),
        times: SolveTimes::default(),
    }
}

/// Group overflow requests into per-service [`Degradation::Unmapped`] flags.
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

fn reoptimize(scenario: &Scenario, input: &ActorInput) -> ActorOutcome {
    match solve_sp(scenario, input.demand, input.delays) {
        Ok(sol) => {
            let (v2e, overflow) = map_with_overflow(
                &sol.x,
                input.requests,
                scenario.instance_capacity,
                scenario,
            );
            let t = Instant::now();
            let table = psvm_table(scenario, &sol.x, &v2e, input.requests);
            let psvm_time = t.elapsed().as_secs_f64();
            let decision = PlacementDecision {
                x: sol.x,
                psvm: table,
                instances: input.demand.instances.clone(),
            };
            ActorOutcome {
                serving: decision.x.clone(),
                next: decision,
                action: ActorAction::Reoptimize,
                redirects: BTreeMap::new(),
                window_map: None,
                degradations: unmapped_flags(&overflow),
                times: SolveTimes { sp: sol.wall_time, psvm: psvm_time, srp: 0.0 },
            }
        }
        Err(_) => ActorOutcome {
            serving: input.cached.x.clone(),
            next: input.cached.clone(),
            action: ActorAction::Reoptimize,
            redirects: BTreeMap::new(),
            window_map: None,
            degradations: vec![Degradation::PlacementInfeasible],
            times: SolveTimes::default(),
        },
    }
}

fn recover(scenario: &Scenario, input: &ActorInput, failed: u16) -> ActorOutcome {
    let cached = input.cached;
    let affected = cached.x.services_on(failed as usize);

    let mut serving = cached.x.clone();
    for s in 0..serving.n_services() {
        serving.set(failed as usize, s, false);
    }

    if affected.is_empty() {
        // Vacuous attack: nothing was hosted there, nothing to redirect or
        // re-instantiate.
        let mut next = cached.clone();
        next.x = serving.clone();
        return ActorOutcome {
            serving,
            next,
            action: ActorAction::Recover { failed },
            redirects: BTreeMap::new(),
            window_map: None,
            degradations: Vec::new(),
            times: SolveTimes::default(),
        };
    }

    // Route this window's requests as the cached placement would have, then
    // move every request that landed on the dead node to its service's first
    // secondary (second if the first were somehow the dead node itself).
    let (would, overflow) =
        map_with_overflow(&cached.x, input.requests, scenario.instance_capacity, scenario);
    let mut degradations = unmapped_flags(&overflow);
    let plan = cached.psvm.get(&failed);
    let mut redirects: BTreeMap<(u64, u16), u16> = BTreeMap::new();
    let mut lost_services: Vec<u16> = Vec::new();
    let mut v2e = would.clone();
    for (&vehicle, &(node, service)) in &would.assignment {
        if node != failed {
            continue;
        }
        let failover = plan.and_then(|p| p.failover.get(&service));
        match failover {
            Some(f) => {
                let target = if f.primary.node != failed {
                    f.primary.node
                } else {
                    f.backup.map(|b| b.node).unwrap_or(f.primary.node)
                };
                redirects.insert((vehicle, service), target);
                v2e.assignment.insert(vehicle, (target, service));
            }
            None => {
                if !lost_services.contains(&service) {
                    lost_services.push(service);
                }
                v2e.assignment.remove(&vehicle);
            }
        }
    }
    v2e.load.clear();
    for &(node, service) in v2e.assignment.values() {
        *v2e.load.entry((node, service)).or_insert(0) += 1;
    }
    degradations
        .extend(lost_services.into_iter().map(|service| Degradation::NoSecondary { service }));

    // Re-instantiate the lost instances for the next window. The recovery
    // program restores the cached epoch's instance counts; if demand drifted
    // this same window, the next window's forced refresh reconciles it.
    let srp_demand = DemandProfile {
        arrivals: input.demand.arrivals.clone(),
        instances: cached.instances.clone(),
    };
    let t = Instant::now();
    let recovery = solve_srp(scenario, &cached.x, failed, &srp_demand, input.delays);
    let srp_time = t.elapsed().as_secs_f64();
    let next = match recovery {
        Ok(srp) => {
            let merged = merge_recovery(&cached.x, &srp, failed);
            let t = Instant::now();
            let table = psvm_table(scenario, &merged, &v2e, input.requests);
            let psvm_time = t.elapsed().as_secs_f64();
            return ActorOutcome {
                serving,
                next: PlacementDecision {
                    x: merged,
                    psvm: table,
                    instances: cached.instances.clone(),
                },
                action: ActorAction::Recover { failed },
                redirects,
                window_map: Some(v2e),
                degradations,
                times: SolveTimes { sp: 0.0, psvm: psvm_time, srp: srp_time },
            };
        }
        Err(_) => {
            degradations.push(Degradation::RecoveryImpossible);
            PlacementDecision {
                x: serving.clone(),
                psvm: cached.psvm.clone(),
                instances: cached.instances.clone(),
            }
        }
    };
    ActorOutcome {
        serving,
        next,
        action: ActorAction::Recover { failed },
        redirects,
        window_map: Some(v2e),
        degradations,
        times: SolveTimes { sp: 0.0, psvm: 0.0, srp: srp_time },
    }
}
