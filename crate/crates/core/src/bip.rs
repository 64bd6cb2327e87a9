//! Generic exact 0-1 integer programming.
//!
//! [`BinaryProgram`] captures a pure binary program with either a linear
//! objective or a min-max objective over linear group expressions (with a
//! linear tie-break). Two solvers share one deterministic tie-break rule —
//! primary objective, then secondary objective, then the lexicographically
//! smallest assignment (variable 0 is the least-significant position):
//!
//! * [`solve_exhaustive`] enumerates all assignments (≤ 25 variables) and is
//!   the oracle the rest of the crate is tested against;
//! * [`solve_bnb`] is a depth-first branch-and-bound with constraint
//!   propagation that must agree with the oracle exactly, and accepts an
//!   optional warm-start incumbent that can only speed it up, never change
//!   its answer.
//!
//! The min-max objective is never enumerated explicitly: at any node the
//! solver bounds each group independently and takes the max, which is the
//! standard one-auxiliary-variable linearization with the auxiliary computed
//! rather than branched.

use std::fmt::Write as _;
use std::time::Instant;

use thiserror::Error;

/// Absolute tolerance for constraint satisfaction on real coefficients.
pub const FEASIBILITY_TOL: f64 = 1e-9;

/// Slack subtracted from bound comparisons so floating-point drift in the
/// incremental bookkeeping can never prune the true optimum.
const BOUND_EPS: f64 = 1e-9;

/// Near-tie cutoff. Once the search holds an incumbent it found itself, a
/// subtree whose bound cannot beat the incumbent by more than this is cut:
/// exact ties arrive later in enumeration order and can never win, and on
/// symmetric instances the tie plateau is exponentially large. Instances
/// whose distinct objective values are separated by more than this remain
/// solved exactly, argmin included; a pathological sub-1e-12 gap may return
/// the slightly worse of the two.
const TIE_EPS: f64 = 1e-12;

/// Hard cap for the exhaustive oracle.
pub const MAX_EXHAUSTIVE_VARS: usize = 25;

/// Constraint relations.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Relation {
    Le,
    Eq,
    Ge,
}

impl Relation {
    fn symbol(self) -> &'static str {
        match self {
            Relation::Le => "<=",
            Relation::Eq => "=",
            Relation::Ge => ">=",
        }
    }
}

/// One linear constraint `coeffs · x REL bound`.
#[derive(Debug, Clone, PartialEq)]
pub struct Constraint {
    pub coeffs: Vec<f64>,
    pub relation: Relation,
    pub bound: f64,
}

impl Constraint {
    pub fn new(coeffs: Vec<f64>, relation: Relation, bound: f64) -> Self {
        Constraint { coeffs, relation, bound }
    }

    fn satisfied(&self, lhs: f64) -> bool {
        match self.relation {
            Relation::Le => lhs <= self.bound + FEASIBILITY_TOL,
            Relation::Ge => lhs >= self.bound - FEASIBILITY_TOL,
            Relation::Eq => (lhs - self.bound).abs() <= FEASIBILITY_TOL,
        }
    }
}

/// Minimization objective.
#[derive(Debug, Clone, PartialEq)]
pub enum Objective {
    /// Minimize `cost · x`.
    Linear(Vec<f64>),
    /// Minimize the maximum of `group · x` over `groups`, breaking ties by
    /// the linear `tie_break · x`.
    MinMax { groups: Vec<Vec<f64>>, tie_break: Vec<f64> },
}

/// A 0-1 program consumed by the exact solvers.
#[derive(Debug, Clone, PartialEq)]
pub struct BinaryProgram {
    pub n_vars: usize,
    pub objective: Objective,
    pub constraints: Vec<Constraint>,
    /// Optional display names used by [`BinaryProgram::dump_lp`]; empty means
    /// `x0..x{n-1}`.
    pub var_labels: Vec<String>,
}

#[derive(Debug, Error)]
pub enum BipError {
    #[error("exhaustive search supports at most {max} variables, got {n}")]
    TooManyVars { n: usize, max: usize },
}

impl BinaryProgram {
    pub fn linear(n_vars: usize, cost: Vec<f64>, constraints: Vec<Constraint>) -> Self {
        BinaryProgram {
            n_vars,
            objective: Objective::Linear(cost),
            constraints,
            var_labels: Vec::new(),
        }
    }

    pub fn min_max(
        n_vars: usize,
        groups: Vec<Vec<f64>>,
        tie_break: Vec<f64>,
        constraints: Vec<Constraint>,
    ) -> Self {
        BinaryProgram {
            n_vars,
            objective: Objective::MinMax { groups, tie_break },
            constraints,
            var_labels: Vec::new(),
        }
    }

    /// Panic early on malformed programs; builders construct these
    /// internally so a shape error is a bug, not an input condition.
    fn assert_well_formed(&self) {
        let check_vec = |v: &[f64], what: &str| {
            assert_eq!(v.len(), self.n_vars, "{what} has wrong arity");
            assert!(v.iter().all(|c| c.is_finite()), "{what} has non-finite coefficient");
        };
        match &self.objective {
            Objective::Linear(c) => check_vec(c, "objective"),
            Objective::MinMax { groups, tie_break } => {
                assert!(!groups.is_empty(), "min-max objective needs at least one group");
                for g in groups {
                    check_vec(g, "objective group");
                }
                check_vec(tie_break, "tie-break objective");
            }
        }
        for (i, c) in self.constraints.iter().enumerate() {
            assert_eq!(c.coeffs.len(), self.n_vars, "constraint {i} has wrong arity");
            assert!(
                c.bound.is_finite() && c.coeffs.iter().all(|a| a.is_finite()),
                "constraint {i} has non-finite data"
            );
        }
        if !self.var_labels.is_empty() {
            assert_eq!(self.var_labels.len(), self.n_vars, "var_labels has wrong arity");
        }
    }

    /// Primary objective value of a complete assignment.
    pub fn eval_primary(&self, x: &[u8]) -> f64 {
        match &self.objective {
            Objective::Linear(c) => dot(c, x),
            Objective::MinMax { groups, .. } => groups
                .iter()
                .map(|g| dot(g, x))
                .fold(f64::NEG_INFINITY, f64::max),
        }
    }

    /// Secondary (tie-break) objective value of a complete assignment.
    pub fn eval_secondary(&self, x: &[u8]) -> f64 {
        match &self.objective {
            Objective::Linear(_) => 0.0,
            Objective::MinMax { tie_break, .. } => dot(tie_break, x),
        }
    }

    /// Whether `x` satisfies every constraint within [`FEASIBILITY_TOL`].
    pub fn is_feasible(&self, x: &[u8]) -> bool {
        self.constraints.iter().all(|c| c.satisfied(dot(&c.coeffs, x)))
    }

    /// Render the program as LP-format-like text for inspection. The min-max
    /// objective and binary bounds sections are non-standard extensions.
    pub fn dump_lp(&self) -> String {
        let name = |i: usize| -> String {
            self.var_labels.get(i).cloned().unwrap_or_else(|| format!("x{i}"))
        };
        let expr = |coeffs: &[f64]| -> String {
            let mut s = String::new();
            for (i, &c) in coeffs.iter().enumerate() {
                if c == 0.0 {
                    continue;
                }
                if s.is_empty() {
                    let _ = write!(s, "{c} {}", name(i));
                } else if c < 0.0 {
                    let _ = write!(s, " - {} {}", -c, name(i));
                } else {
                    let _ = write!(s, " + {c} {}", name(i));
                }
            }
            if s.is_empty() {
                s.push('0');
            }
            s
        };
        let mut out = String::new();
        let _ = writeln!(
            out,
            "\\ binary program: {} vars, {} constraints",
            self.n_vars,
            self.constraints.len()
        );
        match &self.objective {
            Objective::Linear(c) => {
                let _ = writeln!(out, "Minimize\n obj: {}", expr(c));
            }
            Objective::MinMax { groups, tie_break } => {
                let _ = writeln!(out, "Minimize (max of groups)");
                for (gi, g) in groups.iter().enumerate() {
                    let _ = writeln!(out, " grp{gi}: {}", expr(g));
                }
                let _ = writeln!(out, " tie: {}", expr(tie_break));
            }
        }
        let _ = writeln!(out, "Subject To");
        for (ci, c) in self.constraints.iter().enumerate() {
            let _ = writeln!(out, " c{ci}: {} {} {}", expr(&c.coeffs), c.relation.symbol(), c.bound);
        }
        let _ = writeln!(out, "Binaries");
        let _ = writeln!(out, " {}", (0..self.n_vars).map(name).collect::<Vec<_>>().join(" "));
        let _ = writeln!(out, "End");
        out
    }
}

fn dot(coeffs: &[f64], x: &[u8]) -> f64 {
    coeffs
        .iter()
        .zip(x)
        .map(|(&c, &xi)| if xi != 0 { c } else { 0.0 })
        .sum()
}

/// Solve outcome.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    Optimal,
    Infeasible,
}

/// Result of an exact solve. `wall_time` is excluded from any equality or
/// determinism contract.
#[derive(Debug, Clone)]
pub struct SolveResult {
    pub status: SolveStatus,
    /// Optimal assignment (empty when infeasible).
    pub assignment: Vec<u8>,
    /// Primary objective at the optimum; `+inf` when infeasible.
    pub objective_value: f64,
    pub nodes_explored: u64,
    /// Seconds spent solving.
    pub wall_time: f64,
}

impl SolveResult {
    fn optimal(p: &BinaryProgram, assignment: Vec<u8>, nodes_explored: u64, wall_time: f64) -> Self {
        // Independent re-check: a returned optimum must satisfy everything.
        assert!(
            p.is_feasible(&assignment),
            "solver invariant broken: returned assignment violates a constraint"
        );
        let objective_value = p.eval_primary(&assignment);
        SolveResult {
            status: SolveStatus::Optimal,
            assignment,
            objective_value,
            nodes_explored,
            wall_time,
        }
    }

    fn infeasible(nodes_explored: u64, wall_time: f64) -> Self {
        SolveResult {
            status: SolveStatus::Infeasible,
            assignment: Vec::new(),
            objective_value: f64::INFINITY,
            nodes_explored,
            wall_time,
        }
    }
}

/// Enumerate every assignment in ascending integer encoding (variable 0 is
/// the least-significant bit) and return the first-found minimizer, which
/// realizes the shared tie-break rule by construction.
pub fn solve_exhaustive(p: &BinaryProgram) -> Result<SolveResult, BipError> {
    if p.n_vars > MAX_EXHAUSTIVE_VARS {
        return Err(BipError::TooManyVars { n: p.n_vars, max: MAX_EXHAUSTIVE_VARS });
    }
    p.assert_well_formed();
    let start = Instant::now();
    let n = p.n_vars;
    let mut x = vec![0u8; n];
    let mut best: Option<(f64, f64, Vec<u8>)> = None;
    for v in 0u64..(1u64 << n) {
        for (i, xi) in x.iter_mut().enumerate() {
            *xi = ((v >> i) & 1) as u8;
        }
        if !p.is_feasible(&x) {
            continue;
        }
        let pv = p.eval_primary(&x);
        let sv = p.eval_secondary(&x);
        let better = match &best {
            None => true,
            Some((bp, bs, _)) => pv < *bp || (pv == *bp && sv < *bs),
        };
        if better {
            best = Some((pv, sv, x.clone()));
        }
    }
    let nodes = 1u64 << n;
    let elapsed = start.elapsed().as_secs_f64();
    Ok(match best {
        Some((_, _, assignment)) => SolveResult::optimal(p, assignment, nodes, elapsed),
        None => SolveResult::infeasible(nodes, elapsed),
    })
}

/// Exact depth-first branch-and-bound; agrees with [`solve_exhaustive`] in
/// status, objective value, and (via the shared tie-break) assignment.
pub fn solve_bnb(p: &BinaryProgram) -> SolveResult {
    solve_bnb_with_hint(p, None)
}

/// [`solve_bnb`] warm-started from a feasible `hint` assignment. The hint
/// only seeds the incumbent for pruning: a search-found solution of equal
/// merit always replaces it, so the returned optimum is identical to the
/// unhinted solve. Infeasible or malformed hints are ignored.
pub fn solve_bnb_with_hint(p: &BinaryProgram, hint: Option<&[u8]>) -> SolveResult {
    p.assert_well_formed();
    let start = Instant::now();
    let mut search = Search::new(p);
    if let Some(h) = hint {
        if h.len() == p.n_vars && p.is_feasible(h) {
            search.incumbent = Some(Incumbent {
                primary: p.eval_primary(h),
                secondary: p.eval_secondary(h),
                assignment: h.to_vec(),
                is_seed: true,
            });
        }
    }
    search.dfs();
    let elapsed = start.elapsed().as_secs_f64();
    match search.incumbent {
        Some(inc) => SolveResult::optimal(p, inc.assignment, search.nodes, elapsed),
        None => SolveResult::infeasible(search.nodes, elapsed),
    }
}

/// Best-known solution during search. `is_seed` marks a warm-start hint that
/// has not yet been matched by the search itself: the first search-found tie
/// replaces it so the deterministic tie-break (earliest assignment in
/// enumeration order) is preserved exactly.
struct Incumbent {
    primary: f64,
    secondary: f64,
    assignment: Vec<u8>,
    is_seed: bool,
}

/// Incremental per-constraint bookkeeping: `fixed_sum` covers fixed
/// variables; `neg`/`pos` are the sums of negative/positive coefficients of
/// the still-unfixed variables, giving `min lhs = fixed_sum + neg` and
/// `max lhs = fixed_sum + pos` over all completions.
#[derive(Clone)]
struct RowState {
    fixed_sum: f64,
    neg: f64,
    pos: f64,
}

impl RowState {
    fn from_coeffs(coeffs: &[f64]) -> Self {
        RowState {
            fixed_sum: 0.0,
            neg: coeffs.iter().filter(|&&c| c < 0.0).sum(),
            pos: coeffs.iter().filter(|&&c| c > 0.0).sum(),
        }
    }

    fn on_fix(&mut self, coeff: f64, value: u8) {
        if coeff < 0.0 {
            self.neg -= coeff;
        } else {
            self.pos -= coeff;
        }
        if value != 0 {
            self.fixed_sum += coeff;
        }
    }

    fn on_unfix(&mut self, coeff: f64, value: u8) {
        if coeff < 0.0 {
            self.neg += coeff;
        } else {
            self.pos += coeff;
        }
        if value != 0 {
            self.fixed_sum -= coeff;
        }
    }

    fn min_lhs(&self) -> f64 {
        self.fixed_sum + self.neg
    }

    fn max_lhs(&self) -> f64 {
        self.fixed_sum + self.pos
    }
}

/// A constraint of the shape `Σ x_v >= b` (or `= b`) over unit coefficients:
/// it commits the solver to at least `b` ones among `support`, which prices
/// mandatory picks into the objective bound. Only rows with pairwise-disjoint
/// supports are kept so their mandatory costs can be summed.
struct SelectionRow {
    row: usize,
    support: Vec<usize>,
    /// Every support variable has nonzero coefficients in exactly one
    /// objective group, so each of this row's owed ones must land on (and
    /// pay into) a single known group; rows with this property feed the
    /// integral stacking bound.
    single_group: bool,
}

struct Search<'a> {
    p: &'a BinaryProgram,
    /// -1 unfixed, else 0/1.
    fixed: Vec<i8>,
    n_fixed: usize,
    /// Variables in fix order, for backtracking.
    trail: Vec<usize>,
    rows: Vec<RowState>,
    groups: Vec<RowState>,
    tie: RowState,
    /// Element-wise sum of all group coefficient vectors: the basis of the
    /// water-fill bound, since the max of the groups is bounded below by any
    /// level absorbing their combined total.
    total: RowState,
    total_coeffs: Vec<f64>,
    /// For each variable, the unique group with a nonzero coefficient on it,
    /// when there is exactly one.
    var_group: Vec<Option<usize>>,
    /// Sparse adjacency: rows (and objective groups) each variable appears
    /// in, and each row's nonzero support, so fixing and propagation touch
    /// only the coefficients that exist.
    var_rows: Vec<Vec<(usize, f64)>>,
    var_group_coeffs: Vec<Vec<(usize, f64)>>,
    row_support: Vec<Vec<(usize, f64)>>,
    /// Budget rows covering a whole objective group: a `≤`/`=` row with
    /// positive weights on every group variable caps how much of the group
    /// can still switch on. Items are (var, score, weight) sorted by
    /// score-per-weight, so a fractional-knapsack walk upper-bounds the
    /// group's remaining absorption much tighter than the plain coefficient
    /// sum once the budget tightens.
    group_caps: Vec<Vec<(usize, Vec<(usize, f64, f64)>)>>,
    selection_rows: Vec<SelectionRow>,
    /// Whether the integral stacking bound applies: a min-max objective with
    /// all-nonnegative group coefficients and at least one single-group
    /// selection row.
    stacking: bool,
    /// Per-group sorted (ascending) coefficients of the still-unfixed
    /// variables that live in exactly that group; the j cheapest entries
    /// lower-bound the cost of landing j more ones on the group.
    group_unfixed: Vec<Vec<f64>>,
    incumbent: Option<Incumbent>,
    nodes: u64,
    /// Scratch buffers for the bound computations, reused across nodes.
    heads: std::cell::RefCell<Vec<f64>>,
    pairs: std::cell::RefCell<Vec<(f64, f64)>>,
    positives: std::cell::RefCell<Vec<f64>>,
    landings: std::cell::RefCell<Vec<f64>>,
    groups_seen: std::cell::RefCell<Vec<usize>>,
    reach: std::cell::RefCell<Vec<u32>>,
}

impl<'a> Search<'a> {
    fn new(p: &'a BinaryProgram) -> Self {
        let rows: Vec<RowState> =
            p.constraints.iter().map(|c| RowState::from_coeffs(&c.coeffs)).collect();
        let (groups, tie, total_coeffs) = match &p.objective {
            Objective::Linear(c) => (
                vec![RowState::from_coeffs(c)],
                RowState::from_coeffs(&vec![0.0; p.n_vars]),
                c.clone(),
            ),
            Objective::MinMax { groups, tie_break } => {
                let mut total = vec![0.0; p.n_vars];
                for g in groups {
                    for (t, c) in total.iter_mut().zip(g) {
                        *t += c;
                    }
                }
                (
                    groups.iter().map(|g| RowState::from_coeffs(g)).collect(),
                    RowState::from_coeffs(tie_break),
                    total,
                )
            }
        };
        let total = RowState::from_coeffs(&total_coeffs);

        let var_group: Vec<Option<usize>> = (0..p.n_vars)
            .map(|v| {
                let mut found = None;
                match &p.objective {
                    Objective::Linear(c) => {
                        if c[v] != 0.0 {
                            found = Some(0);
                        }
                    }
                    Objective::MinMax { groups, .. } => {
                        for (gi, g) in groups.iter().enumerate() {
                            if g[v] != 0.0 {
                                if found.is_some() {
                                    return None;
                                }
                                found = Some(gi);
                            }
                        }
                    }
                }
                found
            })
            .collect();

        let mut var_rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); p.n_vars];
        let mut row_support: Vec<Vec<(usize, f64)>> =
            Vec::with_capacity(p.constraints.len());
        for (ri, c) in p.constraints.iter().enumerate() {
            let mut support = Vec::new();
            for (v, &a) in c.coeffs.iter().enumerate() {
                if a != 0.0 {
                    support.push((v, a));
                    var_rows[v].push((ri, a));
                }
            }
            row_support.push(support);
        }
        let mut var_group_coeffs: Vec<Vec<(usize, f64)>> = vec![Vec::new(); p.n_vars];
        match &p.objective {
            Objective::Linear(c) => {
                for (v, &a) in c.iter().enumerate() {
                    if a != 0.0 {
                        var_group_coeffs[v].push((0, a));
                    }
                }
            }
            Objective::MinMax { groups, .. } => {
                for (gi, g) in groups.iter().enumerate() {
                    for (v, &a) in g.iter().enumerate() {
                        if a != 0.0 {
                            var_group_coeffs[v].push((gi, a));
                        }
                    }
                }
            }
        }

        let objective_groups: Vec<&[f64]> = match &p.objective {
            Objective::Linear(c) => vec![c.as_slice()],
            Objective::MinMax { groups, .. } => {
                groups.iter().map(Vec::as_slice).collect()
            }
        };
        let group_caps: Vec<Vec<(usize, Vec<(usize, f64, f64)>)>> = objective_groups
            .iter()
            .map(|g| {
                let support: Vec<usize> =
                    (0..p.n_vars).filter(|&v| g[v] != 0.0).collect();
                let mut caps = Vec::new();
                if support.is_empty() {
                    return caps;
                }
                for (ri, c) in p.constraints.iter().enumerate() {
                    if c.relation == Relation::Ge
                        || c.coeffs.iter().any(|&a| a < 0.0)
                        || support.iter().any(|&v| c.coeffs[v] <= 0.0)
                    {
                        continue;
                    }
                    let mut items: Vec<(usize, f64, f64)> = support
                        .iter()
                        .filter(|&&v| g[v] > 0.0)
                        .map(|&v| (v, g[v], c.coeffs[v]))
                        .collect();
                    items.sort_by(|a, b| {
                        (b.1 / b.2).total_cmp(&(a.1 / a.2)).then(a.0.cmp(&b.0))
                    });
                    caps.push((ri, items));
                }
                caps
            })
            .collect();

        let mut selection_rows: Vec<SelectionRow> = Vec::new();
        let mut claimed = vec![false; p.n_vars];
        for (ri, c) in p.constraints.iter().enumerate() {
            if c.relation == Relation::Le || c.bound <= 0.0 {
                continue;
            }
            if !c.coeffs.iter().all(|&a| a == 0.0 || a == 1.0) {
                continue;
            }
            let support: Vec<usize> =
                (0..p.n_vars).filter(|&v| c.coeffs[v] == 1.0).collect();
            if support.is_empty() || support.iter().any(|&v| claimed[v]) {
                continue;
            }
            for &v in &support {
                claimed[v] = true;
            }
            let single_group = support.iter().all(|&v| var_group[v].is_some());
            selection_rows.push(SelectionRow { row: ri, support, single_group });
        }

        let nonneg_groups = match &p.objective {
            Objective::Linear(_) => false,
            Objective::MinMax { groups, .. } => {
                groups.iter().all(|g| g.iter().all(|&a| a >= 0.0))
            }
        };
        let stacking = nonneg_groups && selection_rows.iter().any(|s| s.single_group);
        let mut group_unfixed: Vec<Vec<f64>> = vec![Vec::new(); groups.len()];
        if stacking {
            for v in 0..p.n_vars {
                if let Some(g) = var_group[v] {
                    group_unfixed[g].push(match &p.objective {
                        Objective::Linear(c) => c[v],
                        Objective::MinMax { groups, .. } => groups[g][v],
                    });
                }
            }
            for list in &mut group_unfixed {
                list.sort_unstable_by(f64::total_cmp);
            }
        }

        let n_groups = groups.len();
        Search {
            p,
            fixed: vec![-1; p.n_vars],
            n_fixed: 0,
            trail: Vec::with_capacity(p.n_vars),
            rows,
            groups,
            tie,
            total,
            total_coeffs,
            var_group,
            var_rows,
            var_group_coeffs,
            row_support,
            group_caps,
            selection_rows,
            stacking,
            group_unfixed,
            incumbent: None,
            nodes: 0,
            heads: std::cell::RefCell::new(Vec::with_capacity(2 * n_groups)),
            pairs: std::cell::RefCell::new(Vec::with_capacity(n_groups)),
            positives: std::cell::RefCell::new(Vec::with_capacity(p.n_vars)),
            landings: std::cell::RefCell::new(Vec::with_capacity(p.n_vars)),
            groups_seen: std::cell::RefCell::new(Vec::with_capacity(n_groups)),
            reach: std::cell::RefCell::new(vec![0; n_groups]),
        }
    }

    fn group_coeff(&self, gi: usize, var: usize) -> f64 {
        match &self.p.objective {
            Objective::Linear(c) => c[var],
            Objective::MinMax { groups, .. } => groups[gi][var],
        }
    }

    fn tie_coeff(&self, var: usize) -> f64 {
        match &self.p.objective {
            Objective::Linear(_) => 0.0,
            Objective::MinMax { tie_break, .. } => tie_break[var],
        }
    }

    fn fix(&mut self, var: usize, value: u8) {
        debug_assert_eq!(self.fixed[var], -1);
        self.fixed[var] = value as i8;
        self.n_fixed += 1;
        self.trail.push(var);
        for &(ci, c) in &self.var_rows[var] {
            self.rows[ci].on_fix(c, value);
        }
        for &(gi, c) in &self.var_group_coeffs[var] {
            self.groups[gi].on_fix(c, value);
        }
        let tot = self.total_coeffs[var];
        if tot != 0.0 {
            self.total.on_fix(tot, value);
        }
        let tc = self.tie_coeff(var);
        if tc != 0.0 {
            self.tie.on_fix(tc, value);
        }
        if self.stacking {
            if let Some(g) = self.var_group[var] {
                let coeff = self.group_coeff(g, var);
                let list = &mut self.group_unfixed[g];
                let at = list
                    .binary_search_by(|x| x.total_cmp(&coeff))
                    .expect("unfixed coefficient must be present");
                list.remove(at);
            }
        }
    }

    fn undo_to(&mut self, mark: usize) {
        while self.trail.len() > mark {
            let var = self.trail.pop().expect("trail underflow");
            let value = self.fixed[var] as u8;
            self.fixed[var] = -1;
            self.n_fixed -= 1;
            for &(ci, c) in &self.var_rows[var] {
                self.rows[ci].on_unfix(c, value);
            }
            for &(gi, c) in &self.var_group_coeffs[var] {
                self.groups[gi].on_unfix(c, value);
            }
            let tot = self.total_coeffs[var];
            if tot != 0.0 {
                self.total.on_unfix(tot, value);
            }
            let tc = self.tie_coeff(var);
            if tc != 0.0 {
                self.tie.on_unfix(tc, value);
            }
            if self.stacking {
                if let Some(g) = self.var_group[var] {
                    let coeff = self.group_coeff(g, var);
                    let list = &mut self.group_unfixed[g];
                    let at = match list.binary_search_by(|x| x.total_cmp(&coeff)) {
                        Ok(i) | Err(i) => i,
                    };
                    list.insert(at, coeff);
                }
            }
        }
    }

    /// Constraint propagation to a fixpoint. Returns false when some
    /// constraint can no longer be satisfied by any completion.
    fn propagate(&mut self) -> bool {
        loop {
            let mut changed = false;
            for ci in 0..self.rows.len() {
                let relation = self.p.constraints[ci].relation;
                let bound = self.p.constraints[ci].bound;
                let (min_lhs, max_lhs) = {
                    let row = &self.rows[ci];
                    (row.min_lhs(), row.max_lhs())
                };
                let le_active = relation != Relation::Ge;
                let ge_active = relation != Relation::Le;
                if le_active && min_lhs > bound + FEASIBILITY_TOL {
                    return false;
                }
                if ge_active && max_lhs < bound - FEASIBILITY_TOL {
                    return false;
                }
                for k in 0..self.row_support[ci].len() {
                    let (var, a) = self.row_support[ci][k];
                    if self.fixed[var] != -1 {
                        continue;
                    }
                    // Re-read the row: earlier forcings in this pass moved it.
                    let row = &self.rows[ci];
                    let min_wo = row.min_lhs() - a.min(0.0);
                    let max_wo = row.max_lhs() - a.max(0.0);
                    let mut impossible = [false, false];
                    for (value, slot) in impossible.iter_mut().enumerate() {
                        let contrib = a * value as f64;
                        if le_active && min_wo + contrib > bound + FEASIBILITY_TOL {
                            *slot = true;
                        }
                        if ge_active && max_wo + contrib < bound - FEASIBILITY_TOL {
                            *slot = true;
                        }
                    }
                    match impossible {
                        [true, true] => return false,
                        [true, false] => {
                            self.fix(var, 1);
                            changed = true;
                        }
                        [false, true] => {
                            self.fix(var, 0);
                            changed = true;
                        }
                        [false, false] => {}
                    }
                }
            }
            if !changed {
                return true;
            }
        }
    }

    /// Minimum additional cost (under coefficient vector `cost`) forced by
    /// the selection rows: a row still owing `k` ones must set at least `k`
    /// unfixed support variables to 1, and the base completion bound only
    /// accounted for the non-positive-cost ones, so the cheapest remaining
    /// strictly-positive coefficients are a valid surcharge. Rows have
    /// disjoint supports, so surcharges add.
    fn mandatory_cost<F: Fn(usize) -> f64>(&self, cost: F) -> f64 {
        let mut addend = 0.0;
        let mut positives = self.positives.borrow_mut();
        for sel in &self.selection_rows {
            let owed = self.p.constraints[sel.row].bound - self.rows[sel.row].fixed_sum;
            let mut k = (owed - FEASIBILITY_TOL).ceil();
            if k <= 0.0 {
                continue;
            }
            positives.clear();
            for &v in &sel.support {
                if self.fixed[v] != -1 {
                    continue;
                }
                let c = cost(v);
                if c <= 0.0 {
                    // Free (or favorable) to switch on; the base bound
                    // already assumed it on if that helps.
                    k -= 1.0;
                } else {
                    positives.push(c);
                }
            }
            if k <= 0.0 {
                continue;
            }
            positives.sort_unstable_by(f64::total_cmp);
            addend += positives.iter().take(k as usize).sum::<f64>();
        }
        addend
    }

    /// Lower bound on the primary objective over all feasible completions.
    fn bound_primary(&self) -> f64 {
        match &self.p.objective {
            Objective::Linear(c) => {
                self.groups[0].min_lhs() + self.mandatory_cost(|v| c[v])
            }
            Objective::MinMax { .. } => self.bound_min_max(),
        }
    }

    /// Min-max lower bound, the max of three admissible arguments:
    /// * every group's own favorable completion (`max_g h_g`);
    /// * the water-fill level: group sums jointly absorb the total favorable
    ///   completion plus all mandatory picks, each group absorbing at most
    ///   up to its own ceiling (its maximum completion) and never ending
    ///   below its head (its minimum completion), so the max is at least the
    ///   level `τ` with `Σ_g clamp(τ, h_g, c_g)` reaching that total;
    /// * the cheapest landing spot of any still-owed pick: some group must
    ///   accept it and then cannot finish below `h_g` plus the pick's cost
    ///   (only priced for variables living in a single group).
    /// Upper bound on a group's achievable sum: its optimistic completion,
    /// tightened by a fractional-knapsack walk of every covering budget row.
    fn group_ceiling(&self, gi: usize) -> f64 {
        let g = &self.groups[gi];
        let mut ceiling = g.max_lhs();
        for (ri, items) in &self.group_caps[gi] {
            let mut rem = self.p.constraints[*ri].bound - self.rows[*ri].fixed_sum;
            let mut add = 0.0;
            for &(v, score, weight) in items {
                if rem <= 0.0 {
                    break;
                }
                if self.fixed[v] != -1 {
                    continue;
                }
                if weight <= rem {
                    add += score;
                    rem -= weight;
                } else {
                    add += score * (rem / weight);
                    rem = 0.0;
                }
            }
            ceiling = ceiling.min(g.min_lhs() + add);
        }
        ceiling
    }

    fn bound_min_max(&self) -> f64 {
        let mut pairs = self.pairs.borrow_mut();
        pairs.clear();
        let mut max_head = f64::NEG_INFINITY;
        let mut head_sum = 0.0;
        let mut ceiling_sum = 0.0;
        for (gi, g) in self.groups.iter().enumerate() {
            let h = g.min_lhs();
            let c = self.group_ceiling(gi);
            max_head = max_head.max(h);
            head_sum += h;
            ceiling_sum += c;
            pairs.push((h, c));
        }

        let mut bound = max_head;
        let target =
            self.total.min_lhs() + self.mandatory_cost(|v| self.total_coeffs[v]);
        if target > head_sum {
            if target > ceiling_sum + FEASIBILITY_TOL {
                // The groups cannot jointly absorb the committed work: no
                // feasible completion exists below any incumbent.
                return f64::INFINITY;
            }
            let heads = &*pairs;
            // Sweep the piecewise-linear absorption Σ_g clamp(τ, h_g, c_g)
            // upward through its breakpoints until it reaches the target.
            let mut events = self.heads.borrow_mut();
            events.clear();
            for &(h, c) in heads.iter() {
                events.push(h);
                events.push(c);
            }
            events.sort_unstable_by(f64::total_cmp);
            let mut level = target / heads.len() as f64; // fallback: plain mean
            let absorb = |tau: f64| -> f64 {
                heads.iter().map(|&(h, c)| tau.clamp(h, c.max(h))).sum()
            };
            let mut prev = events[0];
            let mut prev_val = head_sum;
            for &tau in events.iter() {
                let val = absorb(tau);
                if val >= target - 1e-15 {
                    // Interpolate inside [prev, tau]; the segment is linear.
                    let slope = (val - prev_val) / (tau - prev);
                    level = if slope > 0.0 && tau > prev {
                        prev + (target - prev_val) / slope
                    } else {
                        tau
                    };
                    break;
                }
                prev = tau;
                prev_val = val;
            }
            bound = bound.max(level);
        }

        if self.stacking {
            let st = self.bound_stacking();
            if st == f64::INFINITY {
                return f64::INFINITY;
            }
            bound = bound.max(st);
        }

        for sel in &self.selection_rows {
            let owed = self.p.constraints[sel.row].bound - self.rows[sel.row].fixed_sum;
            let k = (owed - FEASIBILITY_TOL).ceil();
            if k < 1.0 {
                continue;
            }
            // A row's support has unit coefficients on distinct variables, so
            // its owed `k` ones land on `k` distinct landing spots; the max of
            // any such choice is at least the k-th smallest candidate landing.
            let k = k as usize;
            let mut landings = self.landings.borrow_mut();
            landings.clear();
            let mut cheap = 0usize;
            for &v in &sel.support {
                if self.fixed[v] != -1 {
                    continue;
                }
                let landing = match self.var_group[v] {
                    Some(g) => {
                        self.groups[g].min_lhs() + self.group_coeff(g, v).max(0.0)
                    }
                    // Unattributable pick: it may land anywhere, so it
                    // cannot raise the bound past the current max.
                    None => max_head,
                };
                if landing <= bound {
                    cheap += 1;
                    if cheap >= k {
                        // The k-th smallest cannot exceed the running bound.
                        landings.clear();
                        break;
                    }
                }
                landings.push(landing);
            }
            if landings.len() >= k {
                landings.sort_unstable_by(f64::total_cmp);
                bound = bound.max(landings[k - 1]);
            }
        }
        bound
    }

    /// Integral stacking bound. Every completion must still switch on K more
    /// ones, K summed over the single-group selection rows, and each of those
    /// ones lands on its variable's group at no less than that group's
    /// cheapest unfixed coefficients. The smallest level τ whose per-group
    /// quantized absorption capacities sum to K is therefore a valid lower
    /// bound on the max: unlike the fractional water-fill it charges whole
    /// coefficients, so it prices the stacking forced when picks outnumber
    /// groups. Returns `+inf` when the picks cannot land at any level (the
    /// subtree is infeasible) and `-inf` when nothing is owed.
    fn bound_stacking(&self) -> f64 {
        let mut owed_total = 0usize;
        // Each owed row lands at most one pick per group (unit coefficients
        // on distinct variables), so a group absorbs at most as many picks as
        // there are owed rows that still reach it.
        let mut reach = self.reach.borrow_mut();
        reach.fill(0);
        for sel in &self.selection_rows {
            if !sel.single_group {
                continue;
            }
            let owed = self.p.constraints[sel.row].bound - self.rows[sel.row].fixed_sum;
            let k = (owed - FEASIBILITY_TOL).ceil();
            if k <= 0.0 {
                continue;
            }
            owed_total += k as usize;
            let mut seen = self.groups_seen.borrow_mut();
            seen.clear();
            for &v in &sel.support {
                if self.fixed[v] != -1 {
                    continue;
                }
                let g = self.var_group[v].expect("single-group row");
                if !seen.contains(&g) {
                    seen.push(g);
                    reach[g] += 1;
                }
            }
        }
        if owed_total == 0 {
            return f64::NEG_INFINITY;
        }

        // Absorption capacity jointly available at level tau: per group, the
        // longest cheap prefix that keeps the group's sum within tau, never
        // more than the picks that can reach the group.
        let cap_at = |tau: f64| -> usize {
            let mut cap = 0usize;
            for (gi, list) in self.group_unfixed.iter().enumerate() {
                let mut sum = self.groups[gi].min_lhs();
                let mut taken = 0u32;
                for &c in list.iter().take(reach[gi] as usize) {
                    sum += c;
                    if sum <= tau + FEASIBILITY_TOL {
                        taken += 1;
                    } else {
                        break;
                    }
                }
                cap += taken as usize;
            }
            cap
        };

        let mut levels = self.landings.borrow_mut();
        levels.clear();
        for (gi, list) in self.group_unfixed.iter().enumerate() {
            let mut sum = self.groups[gi].min_lhs();
            for &c in list.iter().take(reach[gi] as usize) {
                sum += c;
                levels.push(sum);
            }
        }
        if levels.len() < owed_total {
            return f64::INFINITY;
        }
        levels.sort_unstable_by(f64::total_cmp);
        if cap_at(levels[levels.len() - 1]) < owed_total {
            return f64::INFINITY;
        }
        // Binary search the breakpoints for the smallest sufficient level.
        let (mut lo, mut hi) = (0usize, levels.len() - 1);
        while lo < hi {
            let mid = lo + (hi - lo) / 2;
            if cap_at(levels[mid]) >= owed_total {
                hi = mid;
            } else {
                lo = mid + 1;
            }
        }
        levels[lo]
    }

    fn bound_secondary(&self) -> f64 {
        self.tie.min_lhs() + self.mandatory_cost(|v| self.tie_coeff(v))
    }

    /// Whether the current subtree can still beat (or, for a seed incumbent,
    /// tie) the incumbent.
    fn prunable(&self) -> bool {
        let Some(inc) = &self.incumbent else { return false };
        let bp = self.bound_primary();
        if bp > inc.primary + BOUND_EPS {
            return true;
        }
        if inc.is_seed {
            // A warm-start seed must still be displaced by an equal-merit
            // search leaf, so tied subtrees survive.
            if bp > inc.primary - BOUND_EPS {
                let bs = self.bound_secondary();
                if bs > inc.secondary + BOUND_EPS {
                    return true;
                }
            }
        } else {
            // Leaves arrive in ascending encoding order, so a later exact
            // tie can never displace this incumbent; only a subtree that can
            // still strictly improve is worth entering.
            if bp > inc.primary - TIE_EPS {
                let bs = self.bound_secondary();
                if bs > inc.secondary - TIE_EPS {
                    return true;
                }
            }
        }
        false
    }

    fn at_leaf(&mut self) {
        let assignment: Vec<u8> = self.fixed.iter().map(|&f| f as u8).collect();
        // Evaluate from scratch through the same code path the oracle uses so
        // both solvers compare bit-identical numbers.
        if !self.p.is_feasible(&assignment) {
            return;
        }
        let pv = self.p.eval_primary(&assignment);
        let sv = self.p.eval_secondary(&assignment);
        let replace = match &self.incumbent {
            None => true,
            Some(inc) => {
                pv < inc.primary
                    || (pv == inc.primary && sv < inc.secondary)
                    // DFS visits assignments in ascending encoding order, so
                    // the first tie is the lexicographic winner over a seed.
                    || (pv == inc.primary && sv == inc.secondary && inc.is_seed)
            }
        };
        if replace {
            self.incumbent =
                Some(Incumbent { primary: pv, secondary: sv, assignment, is_seed: false });
        }
    }

    fn dfs(&mut self) {
        self.nodes += 1;
        if self.n_fixed == self.p.n_vars {
            self.at_leaf();
            return;
        }
        if self.prunable() {
            return;
        }
        // Branch the highest-index unfixed variable, value 0 first: leaves
        // are then visited in ascending assignment encoding, matching the
        // oracle's enumeration order.
        let var = (0..self.p.n_vars)
            .rev()
            .find(|&v| self.fixed[v] == -1)
            .expect("an unfixed variable must exist");
        for value in [0u8, 1u8] {
            let mark = self.trail.len();
            self.fix(var, value);
            if self.propagate() {
                self.dfs();
            }
            self.undo_to(mark);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn assert_matches_oracle(p: &BinaryProgram) {
        let oracle = solve_exhaustive(p).expect("oracle");
        let got = solve_bnb(p);
        assert_eq!(got.status, oracle.status, "status mismatch\n{}", p.dump_lp());
        if got.status == SolveStatus::Optimal {
            assert!(
                (got.objective_value - oracle.objective_value).abs() <= 1e-9,
                "objective mismatch: {} vs {}\n{}",
                got.objective_value,
                oracle.objective_value,
                p.dump_lp()
            );
            assert_eq!(got.assignment, oracle.assignment, "tie-break mismatch\n{}", p.dump_lp());
        }
    }

    #[test]
    fn unconstrained_single_var_stays_zero() {
        let p = BinaryProgram::linear(1, vec![1.0], vec![]);
        let r = solve_exhaustive(&p).unwrap();
        assert_eq!(r.status, SolveStatus::Optimal);
        assert_eq!(r.assignment, vec![0]);
        assert_eq!(r.objective_value, 0.0);
        assert_matches_oracle(&p);
    }

    #[test]
    fn symmetric_cover_breaks_tie_toward_low_variable() {
        // min x0 + x1 subject to x0 + x1 >= 1: both single-one assignments
        // cost 1; the smaller encoding (x0=1, x1=0) wins.
        let p = BinaryProgram::linear(
            2,
            vec![1.0, 1.0],
            vec![Constraint::new(vec![1.0, 1.0], Relation::Ge, 1.0)],
        );
        let r = solve_exhaustive(&p).unwrap();
        assert_eq!(r.assignment, vec![1, 0]);
        assert_eq!(r.objective_value, 1.0);
        assert_matches_oracle(&p);
    }

    #[test]
    fn contradictory_single_var_bounds_are_infeasible() {
        let p = BinaryProgram::linear(
            1,
            vec![0.0],
            vec![
                Constraint::new(vec![1.0], Relation::Ge, 1.0),
                Constraint::new(vec![1.0], Relation::Le, 0.0),
            ],
        );
        let r = solve_exhaustive(&p).unwrap();
        assert_eq!(r.status, SolveStatus::Infeasible);
        assert_eq!(solve_bnb(&p).status, SolveStatus::Infeasible);
    }

    #[test]
    fn min_max_two_groups_ties_to_smallest_encoding() {
        // Groups (x0) and (x1) with x0 + x1 = 1: either choice scores 1, the
        // tie-break (sum) also ties, so the smaller encoding (1, 0) wins.
        let p = BinaryProgram::min_max(
            2,
            vec![vec![1.0, 0.0], vec![0.0, 1.0]],
            vec![1.0, 1.0],
            vec![Constraint::new(vec![1.0, 1.0], Relation::Eq, 1.0)],
        );
        let r = solve_exhaustive(&p).unwrap();
        assert_eq!(r.objective_value, 1.0);
        assert_eq!(r.assignment, vec![1, 0]);
        assert_matches_oracle(&p);
    }

    #[test]
    fn min_max_secondary_objective_decides_before_encoding() {
        // Same max value either way, but the tie-break prefers x1.
        let p = BinaryProgram::min_max(
            2,
            vec![vec![1.0, 0.0], vec![0.0, 1.0]],
            vec![3.0, 1.0],
            vec![Constraint::new(vec![1.0, 1.0], Relation::Eq, 1.0)],
        );
        let r = solve_exhaustive(&p).unwrap();
        assert_eq!(r.assignment, vec![0, 1]);
        assert_matches_oracle(&p);
    }

    #[test]
    fn negative_costs_pull_variables_on() {
        let p = BinaryProgram::linear(
            3,
            vec![-1.0, -2.0, 0.5],
            vec![Constraint::new(vec![1.0, 1.0, 0.0], Relation::Le, 1.0)],
        );
        let r = solve_exhaustive(&p).unwrap();
        assert_eq!(r.assignment, vec![0, 1, 0]);
        assert_eq!(r.objective_value, -2.0);
        assert_matches_oracle(&p);
    }

    #[test]
    fn equality_forces_full_assignment() {
        let p = BinaryProgram::linear(
            3,
            vec![1.0, 1.0, 1.0],
            vec![Constraint::new(vec![1.0, 1.0, 1.0], Relation::Eq, 3.0)],
        );
        let r = solve_bnb(&p);
        assert_eq!(r.assignment, vec![1, 1, 1]);
        assert_matches_oracle(&p);
    }

    #[test]
    fn oracle_rejects_oversized_programs() {
        let p = BinaryProgram::linear(26, vec![0.0; 26], vec![]);
        assert!(matches!(
            solve_exhaustive(&p),
            Err(BipError::TooManyVars { n: 26, max: 25 })
        ));
    }

    #[test]
    fn zero_variable_program_is_trivially_solved() {
        let feasible = BinaryProgram::linear(0, vec![], vec![]);
        let r = solve_bnb(&feasible);
        assert_eq!(r.status, SolveStatus::Optimal);
        assert_eq!(r.objective_value, 0.0);

        let infeasible = BinaryProgram::linear(
            0,
            vec![],
            vec![Constraint::new(vec![], Relation::Ge, 1.0)],
        );
        assert_eq!(solve_bnb(&infeasible).status, SolveStatus::Infeasible);
        assert_eq!(
            solve_exhaustive(&infeasible).unwrap().status,
            SolveStatus::Infeasible
        );
    }

    #[test]
    fn solver_is_deterministic() {
        let p = random_program(1234, 10, 5);
        let a = solve_bnb(&p);
        let b = solve_bnb(&p);
        assert_eq!(a.status, b.status);
        assert_eq!(a.assignment, b.assignment);
        assert_eq!(a.objective_value, b.objective_value);
        assert_eq!(a.nodes_explored, b.nodes_explored);
    }

    /// Random programs with dyadic-rational coefficients (multiples of 1/8):
    /// every partial sum is exact in binary floating point, so solver
    /// agreement can be asserted without tolerances.
    fn random_program(seed: u64, n_vars: usize, n_cons: usize) -> BinaryProgram {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dyadic = |rng: &mut ChaCha8Rng| f64::from(rng.random_range(-40i32..=40)) / 8.0;
        let objective = if rng.random_bool(0.5) {
            Objective::Linear((0..n_vars).map(|_| dyadic(&mut rng)).collect())
        } else {
            let n_groups = rng.random_range(2..=4usize);
            Objective::MinMax {
                groups: (0..n_groups)
                    .map(|_| (0..n_vars).map(|_| dyadic(&mut rng)).collect())
                    .collect(),
                tie_break: (0..n_vars).map(|_| dyadic(&mut rng)).collect(),
            }
        };
        let mut constraints = Vec::new();
        for _ in 0..n_cons {
            let coeffs: Vec<f64> = (0..n_vars)
                .map(|_| if rng.random_bool(0.6) { dyadic(&mut rng) } else { 0.0 })
                .collect();
            let relation = match rng.random_range(0..3u8) {
                0 => Relation::Le,
                1 => Relation::Ge,
                _ => Relation::Eq,
            };
            // Anchor the bound at a random assignment's lhs so a good share
            // of instances are feasible, then shift by a dyadic step.
            let anchor: Vec<u8> = (0..n_vars).map(|_| u8::from(rng.random_bool(0.5))).collect();
            let lhs = dot(&coeffs, &anchor);
            let shift = f64::from(rng.random_range(-8i32..=8)) / 8.0;
            constraints.push(Constraint::new(coeffs, relation, lhs + shift));
        }
        BinaryProgram { n_vars, objective, constraints, var_labels: Vec::new() }
    }

    #[test]
    fn matches_oracle_on_one_hundred_random_mid_size_programs() {
        let mut infeasible = 0;
        for seed in 0..100u64 {
            let p = random_program(seed, 12, 6);
            let oracle = solve_exhaustive(&p).unwrap();
            if oracle.status == SolveStatus::Infeasible {
                infeasible += 1;
            }
            assert_matches_oracle(&p);
        }
        // The generator must exercise both outcomes.
        assert!(infeasible > 0 && infeasible < 100, "infeasible = {infeasible}");
    }

    #[test]
    fn warm_start_hint_never_changes_the_answer() {
        for seed in 200..240u64 {
            let p = random_program(seed, 10, 5);
            let base = solve_bnb(&p);
            // Adversarial hint: the feasible assignment with the LARGEST
            // encoding, i.e. the one the tie-break must not let win.
            let mut x = vec![0u8; p.n_vars];
            let mut worst: Option<Vec<u8>> = None;
            for v in 0..(1u64 << p.n_vars) {
                for (i, xi) in x.iter_mut().enumerate() {
                    *xi = ((v >> i) & 1) as u8;
                }
                if p.is_feasible(&x) {
                    worst = Some(x.clone());
                }
            }
            let hinted = solve_bnb_with_hint(&p, worst.as_deref());
            assert_eq!(base.status, hinted.status);
            assert_eq!(base.assignment, hinted.assignment);
            assert_eq!(base.objective_value, hinted.objective_value);

            // A garbage hint is ignored outright.
            let garbage = solve_bnb_with_hint(&p, Some(&vec![1u8; p.n_vars + 3]));
            assert_eq!(base.assignment, garbage.assignment);
        }
    }

    #[test]
    fn propagation_handles_negative_coefficient_forcing() {
        // -2 x0 + x1 <= -1 forces x0 = 1 whenever x1 = 1, and x0 = 1 even
        // when x1 = 0. Minimizing x0 + x1 should land on (1, 0).
        let p = BinaryProgram::linear(
            2,
            vec![1.0, 1.0],
            vec![Constraint::new(vec![-2.0, 1.0], Relation::Le, -1.0)],
        );
        let r = solve_bnb(&p);
        assert_eq!(r.assignment, vec![1, 0]);
        assert_matches_oracle(&p);
    }

    #[test]
    fn dump_lp_renders_both_objective_kinds() {
        let linear = BinaryProgram::linear(
            2,
            vec![1.0, -0.5],
            vec![Constraint::new(vec![1.0, 1.0], Relation::Ge, 1.0)],
        );
        let text = linear.dump_lp();
        assert!(text.contains("Minimize"), "{text}");
        assert!(text.contains("1 x0 - 0.5 x1"), "{text}");
        assert!(text.contains(">= 1"), "{text}");

        let mm = BinaryProgram::min_max(
            2,
            vec![vec![1.0, 0.0], vec![0.0, 1.0]],
            vec![1.0, 1.0],
            vec![],
        );
        let text = mm.dump_lp();
        assert!(text.contains("max of groups"), "{text}");
        assert!(text.contains("grp1"), "{text}");
    }

    #[test]
    fn nodes_explored_reflects_pruning() {
        let p = random_program(7, 14, 7);
        let oracle = solve_exhaustive(&p).unwrap();
        let bnb = solve_bnb(&p);
        assert!(bnb.nodes_explored < oracle.nodes_explored);
    }
}
