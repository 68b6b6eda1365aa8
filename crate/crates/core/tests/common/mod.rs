//! Seeded instance generators and plan checks shared by the integration tests.
#![allow(dead_code)]

use std::collections::BTreeSet;
use std::path::PathBuf;

use rail_evac::solver::{EvacuationPlan, PlanStatus, SolverInstance, Variable, DEFAULT_EPSILON};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn sample_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("data/sample")
}

/// One origin (station 0), up to 50 destinations, costs in [0, 30], demand
/// no larger than total capacity.
pub fn single_origin(rng: &mut ChaCha8Rng) -> SolverInstance {
    let d = rng.gen_range(1..=50);
    let variables: Vec<Variable> = (1..=d)
        .map(|j| Variable {
            origin: 0,
            dest: j,
            cost: if rng.gen_bool(0.2) {
                // Repeated costs exercise tie-breaking.
                rng.gen_range(0..=6) as f64 * 5.0
            } else {
                rng.gen_range(0.0..=30.0)
            },
        })
        .collect();
    let capacities: Vec<(usize, f64)> = (1..=d).map(|j| (j, rng.gen_range(0.0..2000.0))).collect();
    let total: f64 = capacities.iter().map(|c| c.1).sum();
    let demand = total * rng.gen_range(0.0..=1.0);
    SolverInstance {
        variables,
        demands: vec![(0, demand)],
        capacities,
        epsilon: DEFAULT_EPSILON,
    }
}

/// Two or three origins, integer costs, demands and capacities, at most six
/// variables and total demand at most 30. May be infeasible.
pub fn small_integer(rng: &mut ChaCha8Rng) -> SolverInstance {
    let origins = rng.gen_range(2..=3usize);
    let dests = rng.gen_range(1..=3usize);
    let mut pairs: Vec<(usize, usize)> = (0..origins)
        .flat_map(|o| (0..dests).map(move |d| (o, origins + d)))
        .collect();
    pairs.shuffle(rng);
    // Every origin keeps at least one pair.
    let mut chosen: BTreeSet<(usize, usize)> = (0..origins)
        .map(|o| *pairs.iter().find(|p| p.0 == o).unwrap())
        .collect();
    let target = rng.gen_range(chosen.len()..=6.min(pairs.len()));
    for p in &pairs {
        if chosen.len() >= target {
            break;
        }
        chosen.insert(*p);
    }
    let variables = chosen
        .iter()
        .map(|&(o, d)| Variable {
            origin: o,
            dest: d,
            cost: rng.gen_range(0..=30) as f64,
        })
        .collect();
    let capacities: Vec<(usize, f64)> = (0..dests)
        .map(|d| (origins + d, rng.gen_range(0..=15u32) as f64))
        .collect();
    // Mostly within total capacity; the rest may overflow it.
    let total_cap = capacities.iter().map(|c| c.1 as u32).sum::<u32>();
    let cap = if rng.gen_bool(0.75) { total_cap.min(30) } else { 30 };
    let budget = rng.gen_range(0..=cap);
    let mut demands: Vec<(usize, f64)> = (0..origins).map(|o| (o, 0.0)).collect();
    for _ in 0..budget {
        let o = rng.gen_range(0..origins);
        demands[o].1 += 1.0;
    }
    SolverInstance {
        variables,
        demands,
        capacities,
        epsilon: DEFAULT_EPSILON,
    }
}

pub fn relative_eq(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1.0)
}

/// Conservation, capacity and variable-domain checks. Returns the list of
/// violations (empty when the plan is valid).
pub fn violations(plan: &EvacuationPlan, instance: &SolverInstance) -> Vec<String> {
    let mut out = Vec::new();
    let origins: BTreeSet<usize> = instance.demands.iter().map(|d| d.0).collect();
    let dests: BTreeSet<usize> = instance.capacities.iter().map(|c| c.0).collect();
    let allowed: BTreeSet<(usize, usize)> = instance.variables.iter().map(|v| (v.origin, v.dest)).collect();
    for f in &plan.flows {
        if f.persons < 0.0 {
            out.push(format!("negative flow {f:?}"));
        }
        if f.origin == f.dest {
            out.push(format!("diagonal flow {f:?}"));
        }
        if !origins.contains(&f.origin) {
            out.push(format!("outflow from non-blocked station {f:?}"));
        }
        if origins.contains(&f.dest) || !dests.contains(&f.dest) {
            out.push(format!("inflow into blocked or unknown station {f:?}"));
        }
        if !allowed.contains(&(f.origin, f.dest)) {
            out.push(format!("flow on a pair with no variable {f:?}"));
        }
    }
    if plan.status == PlanStatus::Optimal {
        for &(o, demand) in &instance.demands {
            let sent = plan.outflow(o);
            if (sent - demand).abs() > 1e-6 * demand.max(1.0) {
                out.push(format!("origin {o}: sent {sent} of {demand}"));
            }
        }
    }
    for &(d, cap) in &instance.capacities {
        let got = plan.inflow(d);
        if got > cap + 1e-6 {
            out.push(format!("destination {d}: {got} over capacity {cap}"));
        }
    }
    out
}

/// The average cost per passenger without the ε term.
pub fn eps_free_att(plan: &EvacuationPlan) -> f64 {
    let persons: f64 = plan.flows.iter().map(|f| f.persons).sum();
    let cost: f64 = plan.flows.iter().map(|f| f.persons * f.cost).sum();
    if persons > 0.0 {
        cost / persons
    } else {
        0.0
    }
}
