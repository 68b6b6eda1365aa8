//! Capacity-constrained evacuation assignment.
//!
//! Every origin must send out exactly its demand, every destination accepts at
//! most its residual capacity, and each passenger pays the cost of the pair
//! they use. Since total flow is fixed by the demands, minimising the average
//! cost per passenger is the same as minimising total cost, which makes this a
//! transportation problem. [`solve`] finds an exact optimum with successive
//! shortest paths and then cancels zero-cost cycles so the result is a basic
//! (tree-shaped, sparse) solution.
//!
//! [`greedy_oracle`] and [`brute_force_oracle`] are independent reference
//! solvers used to check [`solve`].

use std::collections::{BTreeMap, VecDeque};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::network::RailNetwork;

/// Guard term in the average-cost ratio.
pub const DEFAULT_EPSILON: f64 = 1e-6;

pub const BRUTE_FORCE_MAX_DEMAND: f64 = 30.0;
pub const BRUTE_FORCE_MAX_VARIABLES: usize = 6;

#[derive(Error, Debug, Clone, PartialEq)]
pub enum SolverError {
    #[error("invalid instance: {0}")]
    InvalidInstance(String),
    #[error("greedy oracle handles exactly one origin, got {0}")]
    MultiOriginUnsupported(usize),
    #[error("instance too large for brute force: {0}")]
    InstanceTooLarge(String),
    #[error("solver did not converge after {0} augmentations")]
    NumericFailure(usize),
}

/// A permitted (origin, destination) pair and its cost in minutes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Variable {
    pub origin: usize,
    pub dest: usize,
    pub cost: f64,
}

/// Assignment problem over station indices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverInstance {
    pub variables: Vec<Variable>,
    /// `(origin, persons)` for each origin.
    pub demands: Vec<(usize, f64)>,
    /// `(destination, persons)` for each destination.
    pub capacities: Vec<(usize, f64)>,
    pub epsilon: f64,
}

impl SolverInstance {
    pub fn total_demand(&self) -> f64 {
        self.demands.iter().map(|d| d.1).sum()
    }

    pub fn demand_of(&self, origin: usize) -> Option<f64> {
        self.demands.iter().find(|d| d.0 == origin).map(|d| d.1)
    }

    pub fn capacity_of(&self, dest: usize) -> Option<f64> {
        self.capacities.iter().find(|c| c.0 == dest).map(|c| c.1)
    }

    pub fn cost_of(&self, origin: usize, dest: usize) -> Option<f64> {
        self.variables
            .iter()
            .find(|v| v.origin == origin && v.dest == dest)
            .map(|v| v.cost)
    }

    pub fn validate(&self) -> Result<(), SolverError> {
        let bad = |m: String| Err(SolverError::InvalidInstance(m));
        let mut origins = BTreeMap::new();
        for &(o, d) in &self.demands {
            if !(d >= 0.0 && d.is_finite()) {
                return bad(format!("demand of origin {o} is {d}"));
            }
            if origins.insert(o, ()).is_some() {
                return bad(format!("origin {o} listed twice"));
            }
        }
        let mut dests = BTreeMap::new();
        for &(j, c) in &self.capacities {
            if !(c >= 0.0 && c.is_finite()) {
                return bad(format!("capacity of destination {j} is {c}"));
            }
            if origins.contains_key(&j) {
                return bad(format!("station {j} is both origin and destination"));
            }
            if dests.insert(j, ()).is_some() {
                return bad(format!("destination {j} listed twice"));
            }
        }
        let mut seen = BTreeMap::new();
        for v in &self.variables {
            if !origins.contains_key(&v.origin) || !dests.contains_key(&v.dest) {
                return bad(format!("variable ({}, {}) has unknown endpoint", v.origin, v.dest));
            }
            if !(v.cost >= 0.0 && v.cost.is_finite()) {
                return bad(format!("variable ({}, {}) has cost {}", v.origin, v.dest, v.cost));
            }
            if seen.insert((v.origin, v.dest), ()).is_some() {
                return bad(format!("variable ({}, {}) listed twice", v.origin, v.dest));
            }
        }
        if self.epsilon.is_nan() || self.epsilon < 0.0 {
            return bad(format!("epsilon is {}", self.epsilon));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum PlanStatus {
    Optimal,
    Infeasible,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Flow {
    pub origin: usize,
    pub dest: usize,
    pub persons: f64,
    pub cost: f64,
}

/// Demand an origin could not place.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Shortfall {
    pub origin: usize,
    pub demand: f64,
    pub unmet: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvacuationPlan {
    pub status: PlanStatus,
    /// Positive flows sorted by (origin, dest).
    pub flows: Vec<Flow>,
    /// `Σ cost·persons / (Σ persons + ε)` in minutes.
    pub objective_att: f64,
    pub total_evacuated: f64,
    pub total_cost: f64,
    /// Nonempty only for infeasible plans.
    pub shortfall: Vec<Shortfall>,
}

impl EvacuationPlan {
    fn from_flows(mut flows: Vec<Flow>, instance: &SolverInstance) -> Self {
        flows.retain(|f| f.persons > 0.0);
        flows.sort_by_key(|f| (f.origin, f.dest));
        let total_evacuated: f64 = flows.iter().map(|f| f.persons).sum();
        let total_cost: f64 = flows.iter().map(|f| f.persons * f.cost).sum();
        let shortfall: Vec<Shortfall> = instance
            .demands
            .iter()
            .filter_map(|&(origin, demand)| {
                let sent: f64 = flows.iter().filter(|f| f.origin == origin).map(|f| f.persons).sum();
                let unmet = demand - sent;
                (unmet > feasibility_tolerance(demand)).then_some(Shortfall {
                    origin,
                    demand,
                    unmet,
                })
            })
            .collect();
        let status = if shortfall.is_empty() {
            PlanStatus::Optimal
        } else {
            PlanStatus::Infeasible
        };
        EvacuationPlan {
            status,
            flows,
            objective_att: total_cost / (total_evacuated + instance.epsilon),
            total_evacuated,
            total_cost,
            shortfall,
        }
    }

    /// Average cost per evacuated passenger without the ε guard; 0 when
    /// nobody moves.
    pub fn mean_cost(&self) -> f64 {
        if self.total_evacuated > 0.0 {
            self.total_cost / self.total_evacuated
        } else {
            0.0
        }
    }

    pub fn flow(&self, origin: usize, dest: usize) -> f64 {
        self.flows
            .iter()
            .find(|f| f.origin == origin && f.dest == dest)
            .map_or(0.0, |f| f.persons)
    }

    pub fn outflow(&self, origin: usize) -> f64 {
        self.flows.iter().filter(|f| f.origin == origin).map(|f| f.persons).sum()
    }

    pub fn inflow(&self, dest: usize) -> f64 {
        self.flows.iter().filter(|f| f.dest == dest).map(|f| f.persons).sum()
    }
}

fn feasibility_tolerance(amount: f64) -> f64 {
    1e-9 * amount.max(1.0)
}

#[derive(Debug, Clone)]
struct Arc {
    to: usize,
    residual: f64,
    cost: f64,
    rev: usize,
}

struct Residual {
    adj: Vec<Vec<Arc>>,
}

impl Residual {
    fn new(nodes: usize) -> Self {
        Residual {
            adj: vec![Vec::new(); nodes],
        }
    }

    fn add(&mut self, from: usize, to: usize, capacity: f64, cost: f64) -> (usize, usize) {
        let fwd = self.adj[from].len();
        let bwd = self.adj[to].len();
        self.adj[from].push(Arc {
            to,
            residual: capacity,
            cost,
            rev: bwd,
        });
        self.adj[to].push(Arc {
            to: from,
            residual: 0.0,
            cost: -cost,
            rev: fwd,
        });
        (from, fwd)
    }

    /// Label-correcting shortest paths from `source` over arcs with positive
    /// residual. Returns the predecessor arc of each reached node.
    fn shortest_paths(&self, source: usize, tie: f64) -> Vec<Option<(usize, usize)>> {
        let n = self.adj.len();
        let mut dist = vec![f64::INFINITY; n];
        let mut pred = vec![None; n];
        let mut queued = vec![false; n];
        let mut queue = VecDeque::from([source]);
        dist[source] = 0.0;
        queued[source] = true;
        while let Some(u) = queue.pop_front() {
            queued[u] = false;
            for (k, arc) in self.adj[u].iter().enumerate() {
                if arc.residual <= 0.0 {
                    continue;
                }
                let nd = dist[u] + arc.cost;
                if nd < dist[arc.to] - tie {
                    dist[arc.to] = nd;
                    pred[arc.to] = Some((u, k));
                    if !queued[arc.to] {
                        queued[arc.to] = true;
                        queue.push_back(arc.to);
                    }
                }
            }
        }
        pred
    }
}

/// Exact minimum-cost assignment.
///
/// Returns an `Infeasible` plan (with the best partial assignment and
/// per-origin shortfall) when the demands cannot all be placed.
pub fn solve(instance: &SolverInstance) -> Result<EvacuationPlan, SolverError> {
    instance.validate()?;
    let origins = &instance.demands;
    let dests = &instance.capacities;
    let m = origins.len();
    let source = 0;
    let sink = m + dests.len() + 1;
    let origin_node: BTreeMap<usize, usize> =
        origins.iter().enumerate().map(|(k, o)| (o.0, k + 1)).collect();
    let dest_node: BTreeMap<usize, usize> =
        dests.iter().enumerate().map(|(k, d)| (d.0, m + 1 + k)).collect();

    let mut g = Residual::new(sink + 1);
    for (k, &(_, demand)) in origins.iter().enumerate() {
        g.add(source, k + 1, demand, 0.0);
    }
    // Arcs out of an origin in ascending destination order so that equal-cost
    // paths resolve to the lowest destination index.
    let mut vars: Vec<&Variable> = instance.variables.iter().collect();
    vars.sort_by_key(|v| (v.origin, v.dest));
    let mut var_arcs = Vec::with_capacity(vars.len());
    for v in &vars {
        let arc = g.add(origin_node[&v.origin], dest_node[&v.dest], f64::INFINITY, v.cost);
        var_arcs.push(arc);
    }
    for (k, &(_, capacity)) in dests.iter().enumerate() {
        g.add(m + 1 + k, sink, capacity, 0.0);
    }

    let max_cost = vars.iter().map(|v| v.cost).fold(0.0, f64::max);
    let tie = 1e-12 * (1.0 + max_cost);
    let limit = 64 * (g.adj.len() + vars.len()) + 1024;
    let mut augmentations = 0;
    loop {
        if g.adj[source].iter().all(|a| a.residual <= 0.0) {
            break;
        }
        let pred = g.shortest_paths(source, tie);
        if pred[sink].is_none() {
            break;
        }
        augmentations += 1;
        if augmentations > limit {
            return Err(SolverError::NumericFailure(augmentations));
        }
        let mut path = Vec::new();
        let mut v = sink;
        while let Some((u, k)) = pred[v] {
            path.push((u, k));
            v = u;
        }
        let push = path
            .iter()
            .map(|&(u, k)| g.adj[u][k].residual)
            .fold(f64::INFINITY, f64::min);
        for &(u, k) in &path {
            let arc = &mut g.adj[u][k];
            arc.residual = if arc.residual == push { 0.0 } else { arc.residual - push };
            let (to, rev) = (arc.to, arc.rev);
            g.adj[to][rev].residual += push;
        }
    }

    let mut flows: Vec<Flow> = vars
        .iter()
        .zip(&var_arcs)
        .map(|(v, &(u, k))| {
            let arc = &g.adj[u][k];
            Flow {
                origin: v.origin,
                dest: v.dest,
                persons: g.adj[arc.to][arc.rev].residual,
                cost: v.cost,
            }
        })
        .collect();
    cancel_support_cycles(&mut flows, tie);
    Ok(EvacuationPlan::from_flows(flows, instance))
}

/// Removes cycles from the support of a flow by pushing around them in the
/// non-increasing-cost direction until one edge empties. Node balances are
/// unchanged, so the result stays feasible and is a forest.
fn cancel_support_cycles(flows: &mut [Flow], tie: f64) {
    while let Some(cycle) = find_support_cycle(flows) {
        // cycle[0], cycle[2], ... gain; cycle[1], cycle[3], ... lose.
        let delta: f64 = cycle
            .iter()
            .enumerate()
            .map(|(k, &e)| if k % 2 == 0 { flows[e].cost } else { -flows[e].cost })
            .sum();
        let gain_on_even = delta < -tie || (delta.abs() <= tie && cycle[1] > cycle[0]);
        let (mut gain, mut lose) = (Vec::new(), Vec::new());
        for (k, &e) in cycle.iter().enumerate() {
            if (k % 2 == 0) == gain_on_even {
                gain.push(e);
            } else {
                lose.push(e);
            }
        }
        let push = lose.iter().map(|&e| flows[e].persons).fold(f64::INFINITY, f64::min);
        for &e in &lose {
            let f = &mut flows[e].persons;
            *f = if *f == push { 0.0 } else { *f - push };
        }
        for &e in &gain {
            flows[e].persons += push;
        }
    }
}

/// A cycle in the bipartite support graph as a list of flow indices, in walk
/// order. Consecutive entries share an origin or a destination alternately.
fn find_support_cycle(flows: &[Flow]) -> Option<Vec<usize>> {
    // Nodes: origins and destinations, tagged to keep them apart.
    let mut ids: BTreeMap<(u8, usize), usize> = BTreeMap::new();
    for f in flows.iter().filter(|f| f.persons > 0.0) {
        let len = ids.len();
        ids.entry((0, f.origin)).or_insert(len);
        let len = ids.len();
        ids.entry((1, f.dest)).or_insert(len);
    }
    let mut adj: Vec<Vec<(usize, usize)>> = vec![Vec::new(); ids.len()];
    for (e, f) in flows.iter().enumerate().filter(|(_, f)| f.persons > 0.0) {
        let a = ids[&(0, f.origin)];
        let b = ids[&(1, f.dest)];
        adj[a].push((b, e));
        adj[b].push((a, e));
    }

    let mut parent: Vec<Option<(usize, usize)>> = vec![None; adj.len()];
    let mut depth = vec![usize::MAX; adj.len()];
    for root in 0..adj.len() {
        if depth[root] != usize::MAX {
            continue;
        }
        depth[root] = 0;
        let mut stack = vec![root];
        while let Some(u) = stack.pop() {
            for &(v, e) in &adj[u] {
                if parent[u].map(|p| p.1) == Some(e) {
                    continue;
                }
                if depth[v] == usize::MAX {
                    depth[v] = depth[u] + 1;
                    parent[v] = Some((u, e));
                    stack.push(v);
                } else {
                    // Non-tree edge closes a cycle through the two tree paths.
                    let mut left = vec![e];
                    let mut right = Vec::new();
                    let (mut a, mut b) = (u, v);
                    while depth[a] > depth[b] {
                        let (p, pe) = parent[a].unwrap();
                        left.push(pe);
                        a = p;
                    }
                    while depth[b] > depth[a] {
                        let (p, pe) = parent[b].unwrap();
                        right.push(pe);
                        b = p;
                    }
                    while a != b {
                        let (pa, ea) = parent[a].unwrap();
                        let (pb, eb) = parent[b].unwrap();
                        left.push(ea);
                        right.push(eb);
                        a = pa;
                        b = pb;
                    }
                    // `left` walks e, then up from u; `right` goes up from v.
                    // Reverse `right` to walk down to v and close at e.
                    right.reverse();
                    left.extend(right);
                    return Some(left);
                }
            }
        }
    }
    None
}

/// Fills one origin's destinations in ascending (cost, destination) order.
/// Optimal for a single origin.
pub fn greedy_oracle(instance: &SolverInstance) -> Result<EvacuationPlan, SolverError> {
    instance.validate()?;
    if instance.demands.len() != 1 {
        return Err(SolverError::MultiOriginUnsupported(instance.demands.len()));
    }
    let (origin, demand) = instance.demands[0];
    let mut options: Vec<&Variable> = instance.variables.iter().collect();
    options.sort_by(|a, b| a.cost.total_cmp(&b.cost).then(a.dest.cmp(&b.dest)));
    let mut left = demand;
    let mut flows = Vec::new();
    for v in options {
        if left <= 0.0 {
            break;
        }
        let cap = instance.capacity_of(v.dest).unwrap_or(0.0);
        let take = cap.min(left);
        if take > 0.0 {
            flows.push(Flow {
                origin,
                dest: v.dest,
                persons: take,
                cost: v.cost,
            });
            left = if take == left { 0.0 } else { left - take };
        }
    }
    Ok(EvacuationPlan::from_flows(flows, instance))
}

/// Enumerates every integer assignment. Only for tiny integral instances.
pub fn brute_force_oracle(instance: &SolverInstance) -> Result<EvacuationPlan, SolverError> {
    instance.validate()?;
    let integral = |x: f64| x.fract() == 0.0;
    if !instance.demands.iter().all(|d| integral(d.1)) || !instance.capacities.iter().all(|c| integral(c.1)) {
        return Err(SolverError::InstanceTooLarge("demands and capacities must be integers".into()));
    }
    if instance.total_demand() > BRUTE_FORCE_MAX_DEMAND {
        return Err(SolverError::InstanceTooLarge(format!(
            "total demand {} exceeds {}",
            instance.total_demand(),
            BRUTE_FORCE_MAX_DEMAND
        )));
    }
    if instance.variables.len() > BRUTE_FORCE_MAX_VARIABLES {
        return Err(SolverError::InstanceTooLarge(format!(
            "{} variables exceed {}",
            instance.variables.len(),
            BRUTE_FORCE_MAX_VARIABLES
        )));
    }

    let mut vars = instance.variables.clone();
    vars.sort_by_key(|v| (v.origin, v.dest));
    let mut demand_left: BTreeMap<usize, u32> =
        instance.demands.iter().map(|&(o, d)| (o, d as u32)).collect();
    let mut cap_left: BTreeMap<usize, u32> =
        instance.capacities.iter().map(|&(j, c)| (j, c.min(1e6) as u32)).collect();
    // Index of the last variable of each origin; its value is forced.
    let last_of: BTreeMap<usize, usize> = vars.iter().enumerate().map(|(k, v)| (v.origin, k)).collect();

    struct Search<'a> {
        vars: &'a [Variable],
        last_of: &'a BTreeMap<usize, usize>,
        current: Vec<u32>,
        best: Option<(f64, Vec<u32>)>,
    }

    impl Search<'_> {
        fn go(&mut self, k: usize, demand_left: &mut BTreeMap<usize, u32>, cap_left: &mut BTreeMap<usize, u32>) {
            if k == self.vars.len() {
                if demand_left.values().any(|&d| d > 0) {
                    return;
                }
                let cost: f64 = self
                    .vars
                    .iter()
                    .zip(&self.current)
                    .map(|(v, &x)| v.cost * x as f64)
                    .sum();
                if self.best.as_ref().is_none_or(|b| cost < b.0) {
                    self.best = Some((cost, self.current.clone()));
                }
                return;
            }
            let v = self.vars[k];
            let d = demand_left[&v.origin];
            let c = cap_left[&v.dest];
            let (lo, hi) = if self.last_of[&v.origin] == k {
                if d > c {
                    return;
                }
                (d, d)
            } else {
                (0, d.min(c))
            };
            for x in lo..=hi {
                self.current[k] = x;
                *demand_left.get_mut(&v.origin).unwrap() -= x;
                *cap_left.get_mut(&v.dest).unwrap() -= x;
                self.go(k + 1, demand_left, cap_left);
                *demand_left.get_mut(&v.origin).unwrap() += x;
                *cap_left.get_mut(&v.dest).unwrap() += x;
            }
            self.current[k] = 0;
        }
    }

    let mut search = Search {
        vars: &vars,
        last_of: &last_of,
        current: vec![0; vars.len()],
        best: None,
    };
    search.go(0, &mut demand_left, &mut cap_left);

    match search.best {
        Some((_, assignment)) => {
            let flows = vars
                .iter()
                .zip(assignment)
                .map(|(v, x)| Flow {
                    origin: v.origin,
                    dest: v.dest,
                    persons: x as f64,
                    cost: v.cost,
                })
                .collect();
            Ok(EvacuationPlan::from_flows(flows, instance))
        }
        None => Ok(EvacuationPlan {
            status: PlanStatus::Infeasible,
            flows: Vec::new(),
            objective_att: 0.0,
            total_evacuated: 0.0,
            total_cost: 0.0,
            shortfall: instance
                .demands
                .iter()
                .filter(|d| d.1 > 0.0)
                .map(|&(origin, demand)| Shortfall {
                    origin,
                    demand,
                    unmet: demand,
                })
                .collect(),
        }),
    }
}

/// `plan.json`: a plan expressed with station ids.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanFile {
    pub status: PlanStatus,
    pub objective_att_minutes: f64,
    pub total_evacuated: f64,
    pub flows: Vec<PlanFlow>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub shortfall: Vec<PlanShortfall>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanFlow {
    pub from: String,
    pub to: String,
    pub persons: f64,
    pub cost_minutes: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanShortfall {
    pub station_id: String,
    pub demand: f64,
    pub unmet: f64,
}

impl PlanFile {
    pub fn new(plan: &EvacuationPlan, network: &RailNetwork) -> Self {
        let id = |i: usize| network.station(i).station_id.clone();
        PlanFile {
            status: plan.status,
            objective_att_minutes: plan.objective_att,
            total_evacuated: plan.total_evacuated,
            flows: plan
                .flows
                .iter()
                .map(|f| PlanFlow {
                    from: id(f.origin),
                    to: id(f.dest),
                    persons: f.persons,
                    cost_minutes: f.cost,
                })
                .collect(),
            shortfall: plan
                .shortfall
                .iter()
                .map(|s| PlanShortfall {
                    station_id: id(s.origin),
                    demand: s.demand,
                    unmet: s.unmet,
                })
                .collect(),
        }
    }

    /// Rebuilds the index-based plan. Fails on station ids missing from the
    /// network.
    pub fn to_plan(&self, network: &RailNetwork, epsilon: f64) -> Result<EvacuationPlan, String> {
        let idx = |id: &str| network.index_of(id).ok_or_else(|| format!("unknown station `{id}`"));
        let flows = self
            .flows
            .iter()
            .map(|f| {
                Ok(Flow {
                    origin: idx(&f.from)?,
                    dest: idx(&f.to)?,
                    persons: f.persons,
                    cost: f.cost_minutes,
                })
            })
            .collect::<Result<Vec<_>, String>>()?;
        let shortfall = self
            .shortfall
            .iter()
            .map(|s| {
                Ok(Shortfall {
                    origin: idx(&s.station_id)?,
                    demand: s.demand,
                    unmet: s.unmet,
                })
            })
            .collect::<Result<Vec<_>, String>>()?;
        let total_cost = flows.iter().map(|f| f.persons * f.cost).sum();
        let total_evacuated = flows.iter().map(|f| f.persons).sum::<f64>();
        Ok(EvacuationPlan {
            status: self.status,
            objective_att: total_cost / (total_evacuated + epsilon),
            total_evacuated,
            total_cost,
            flows,
            shortfall,
        })
    }
}
