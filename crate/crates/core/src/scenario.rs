//! Disruption scenarios and the solver instances derived from them.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cost::CostModel;
use crate::network::RailNetwork;
use crate::solver::{SolverInstance, Variable, DEFAULT_EPSILON};

pub const DEFAULT_CAPACITY_RATIO: f64 = 1.5;
pub const DEFAULT_OPERATING_HOURS: f64 = 20.0;
pub const DEFAULT_T_LM: f64 = 30.0;

/// Passengers present during a `t_lm`-minute window, assuming daily traffic
/// is spread evenly over `operating_hours`.
pub fn derive_window_load(daily: f64, operating_hours: f64, t_lm: f64) -> f64 {
    daily / operating_hours * (t_lm / 60.0)
}

#[derive(Error, Debug, Clone, PartialEq)]
pub enum ScenarioError {
    #[error("no blocked stations given")]
    NoBlocked,
    #[error("unknown station `{0}`")]
    UnknownStation(String),
    #[error("capacity ratio for {station} must be greater than 1, got {ratio}")]
    CapacityRatio { station: String, ratio: f64 },
    #[error("{what} for `{station}` must be a nonnegative number, got {value}")]
    Negative {
        what: &'static str,
        station: String,
        value: f64,
    },
    #[error("t_lm must be positive, got {0}")]
    Window(f64),
    #[error("operating hours must be positive, got {0}")]
    OperatingHours(f64),
    #[error("scenario window {scenario} min differs from cost model window {cost} min")]
    WindowMismatch { scenario: f64, cost: f64 },
    #[error("cost model has {cost} stations but network has {network}")]
    SizeMismatch { cost: usize, network: usize },
    #[error("infeasible: {0}")]
    Infeasible(Precheck),
}

/// Per-origin diagnostics produced when the aggregate capacity check fails.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Precheck {
    pub total_demand: f64,
    pub total_capacity: f64,
    pub origins: Vec<OriginCheck>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OriginCheck {
    pub station_id: String,
    pub demand: f64,
    pub candidates: usize,
    pub reachable_capacity: f64,
}

impl std::fmt::Display for Precheck {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "total demand {:.1} vs reachable residual capacity {:.1}",
            self.total_demand, self.total_capacity
        )?;
        for o in &self.origins {
            write!(
                f,
                "; {}: demand {:.1}, {} candidate(s), capacity {:.1}",
                o.station_id, o.demand, o.candidates, o.reachable_capacity
            )?;
        }
        Ok(())
    }
}

/// A disruption: blocked stations, the window and the load/capacity model.
///
/// This is also the `scenario.json` schema.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub blocked: Vec<String>,
    #[serde(rename = "t_lm_minutes", default = "default_t_lm")]
    pub t_lm: f64,
    #[serde(default = "default_ratio")]
    pub capacity_ratio: f64,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub capacity_ratio_overrides: BTreeMap<String, f64>,
    /// Residual capacity in persons, replacing `(x - 1) * y`.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub capacity_overrides: BTreeMap<String, f64>,
    /// Window loads in persons, replacing the derived ones.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub loads: BTreeMap<String, f64>,
    #[serde(default = "default_hours")]
    pub operating_hours: f64,
}

fn default_t_lm() -> f64 {
    DEFAULT_T_LM
}
fn default_ratio() -> f64 {
    DEFAULT_CAPACITY_RATIO
}
fn default_hours() -> f64 {
    DEFAULT_OPERATING_HOURS
}

impl Scenario {
    pub fn new(blocked: impl IntoIterator<Item = impl Into<String>>) -> Self {
        Scenario {
            blocked: blocked.into_iter().map(Into::into).collect(),
            t_lm: DEFAULT_T_LM,
            capacity_ratio: DEFAULT_CAPACITY_RATIO,
            capacity_ratio_overrides: BTreeMap::new(),
            capacity_overrides: BTreeMap::new(),
            loads: BTreeMap::new(),
            operating_hours: DEFAULT_OPERATING_HOURS,
        }
    }

    /// Checks every field against the network.
    pub fn validate(&self, network: &RailNetwork) -> Result<(), ScenarioError> {
        if self.blocked.is_empty() {
            return Err(ScenarioError::NoBlocked);
        }
        let known = |id: &String| {
            network
                .index_of(id)
                .map(|_| ())
                .ok_or_else(|| ScenarioError::UnknownStation(id.clone()))
        };
        self.blocked.iter().try_for_each(known)?;
        self.capacity_ratio_overrides.keys().try_for_each(known)?;
        self.capacity_overrides.keys().try_for_each(known)?;
        self.loads.keys().try_for_each(known)?;

        if !(self.t_lm > 0.0 && self.t_lm.is_finite()) {
            return Err(ScenarioError::Window(self.t_lm));
        }
        if !(self.operating_hours > 0.0 && self.operating_hours.is_finite()) {
            return Err(ScenarioError::OperatingHours(self.operating_hours));
        }
        if !(self.capacity_ratio > 1.0 && self.capacity_ratio.is_finite()) {
            return Err(ScenarioError::CapacityRatio {
                station: "all stations".into(),
                ratio: self.capacity_ratio,
            });
        }
        for (id, &ratio) in &self.capacity_ratio_overrides {
            if !(ratio > 1.0 && ratio.is_finite()) {
                return Err(ScenarioError::CapacityRatio {
                    station: format!("`{id}`"),
                    ratio,
                });
            }
        }
        let nonneg = |what, map: &BTreeMap<String, f64>| {
            for (id, &value) in map {
                if !(value >= 0.0 && value.is_finite()) {
                    return Err(ScenarioError::Negative {
                        what,
                        station: id.clone(),
                        value,
                    });
                }
            }
            Ok(())
        };
        nonneg("capacity override", &self.capacity_overrides)?;
        nonneg("load", &self.loads)?;
        Ok(())
    }

    /// Window load `y_i` of every station, in network index order.
    pub fn loads_y(&self, network: &RailNetwork) -> Vec<f64> {
        network
            .stations()
            .iter()
            .zip(network.daily_passengers())
            .map(|(s, &daily)| {
                self.loads
                    .get(&s.station_id)
                    .copied()
                    .unwrap_or_else(|| derive_window_load(daily, self.operating_hours, self.t_lm))
            })
            .collect()
    }

    /// Capacity ratio `x_i` of every station, in network index order.
    pub fn capacity_ratios(&self, network: &RailNetwork) -> Vec<f64> {
        network
            .stations()
            .iter()
            .map(|s| {
                self.capacity_ratio_overrides
                    .get(&s.station_id)
                    .copied()
                    .unwrap_or(self.capacity_ratio)
            })
            .collect()
    }

    /// Blocked station indices, ascending.
    pub fn blocked_indices(&self, network: &RailNetwork) -> BTreeSet<usize> {
        self.blocked
            .iter()
            .filter_map(|id| network.index_of(id))
            .collect()
    }

    /// Residual capacity `c_j` of every station: `(x_j - 1) * y_j` unless
    /// overridden, zero for blocked stations.
    pub fn residual_capacities(&self, network: &RailNetwork) -> Vec<f64> {
        let blocked = self.blocked_indices(network);
        let y = self.loads_y(network);
        let x = self.capacity_ratios(network);
        network
            .stations()
            .iter()
            .enumerate()
            .map(|(j, s)| {
                if blocked.contains(&j) {
                    0.0
                } else if let Some(&c) = self.capacity_overrides.get(&s.station_id) {
                    c
                } else {
                    (x[j] - 1.0) * y[j]
                }
            })
            .collect()
    }
}

/// Turns a scenario into the assignment problem for the solver.
///
/// Origins are the blocked stations with positive load. Each origin may send
/// passengers to any non-blocked station it can reach within the window.
pub fn build_solver_inputs(
    network: &RailNetwork,
    cost: &CostModel,
    scenario: &Scenario,
) -> Result<SolverInstance, ScenarioError> {
    scenario.validate(network)?;
    if cost.len() != network.len() {
        return Err(ScenarioError::SizeMismatch {
            cost: cost.len(),
            network: network.len(),
        });
    }
    if cost.t_lm() != scenario.t_lm {
        return Err(ScenarioError::WindowMismatch {
            scenario: scenario.t_lm,
            cost: cost.t_lm(),
        });
    }

    let blocked = scenario.blocked_indices(network);
    let y = scenario.loads_y(network);
    let capacity = scenario.residual_capacities(network);

    let mut variables = Vec::new();
    let mut demands = Vec::new();
    let mut used = BTreeSet::new();
    let mut checks = Vec::new();
    for &i in &blocked {
        if y[i] <= 0.0 {
            continue;
        }
        demands.push((i, y[i]));
        let mut candidates = 0;
        let mut reachable_capacity = 0.0;
        for (j, &cap) in capacity.iter().enumerate() {
            if j == i || blocked.contains(&j) {
                continue;
            }
            if let Some(minutes) = cost.cost(i, j) {
                variables.push(Variable {
                    origin: i,
                    dest: j,
                    cost: minutes,
                });
                used.insert(j);
                candidates += 1;
                reachable_capacity += cap;
            }
        }
        checks.push(OriginCheck {
            station_id: network.station(i).station_id.clone(),
            demand: y[i],
            candidates,
            reachable_capacity,
        });
    }

    let capacities: Vec<(usize, f64)> = used.iter().map(|&j| (j, capacity[j])).collect();
    let total_demand: f64 = demands.iter().map(|d| d.1).sum();
    let total_capacity: f64 = capacities.iter().map(|c| c.1).sum();
    let stranded = checks.iter().any(|c| c.candidates == 0);
    if stranded || total_demand > total_capacity {
        return Err(ScenarioError::Infeasible(Precheck {
            total_demand,
            total_capacity,
            origins: checks,
        }));
    }

    Ok(SolverInstance {
        variables,
        demands,
        capacities,
        epsilon: DEFAULT_EPSILON,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cost::{CostParams, EARTH_RADIUS_KM};
    use crate::network::{RailLine, Station};

    fn km_north(km: f64) -> f64 {
        (km / EARTH_RADIUS_KM).to_degrees()
    }

    /// A at the origin, B and C within walking range, D far away.
    fn network(daily: &[(&str, f64)]) -> RailNetwork {
        let st = |id: &str, lat: f64| Station {
            station_id: id.into(),
            name: id.into(),
            operator: "X".into(),
            lat,
            lon: 139.0,
        };
        let stations = vec![
            st("A", 35.0),
            st("B", 35.0 + km_north(0.5)),
            st("C", 35.0 - km_north(1.0)),
            st("D", 35.0 + km_north(10.0)),
        ];
        let lines = vec![RailLine {
            line_id: "L".into(),
            line_name: "L".into(),
            operator: "X".into(),
            stops: vec!["A".into(), "B".into()],
        }];
        let passengers = daily.iter().map(|(s, d)| (s.to_string(), *d)).collect();
        RailNetwork::from_parts(stations, lines, passengers).unwrap().0
    }

    fn cost(net: &RailNetwork) -> CostModel {
        CostModel::build(net, CostParams::default()).unwrap()
    }

    #[test]
    fn window_load_rule() {
        assert_eq!(derive_window_load(40.0, 20.0, 30.0), 1.0);
        assert_eq!(derive_window_load(0.0, 20.0, 30.0), 0.0);
        assert_eq!(derive_window_load(1_339_520.0, 20.0, 30.0), 33488.0);
        assert_eq!(derive_window_load(3_265_560.0, 20.0, 30.0), 81639.0);
        assert_eq!(derive_window_load(2_704_360.0, 20.0, 30.0), 67609.0);
    }

    #[test]
    fn window_load_is_linear() {
        let base = derive_window_load(1000.0, 20.0, 30.0);
        assert_eq!(derive_window_load(3000.0, 20.0, 30.0), 3.0 * base);
        assert_eq!(derive_window_load(1000.0, 20.0, 60.0), 2.0 * base);
    }

    #[test]
    fn single_blocked_station() {
        let net = network(&[("A", 400.0), ("B", 800.0), ("C", 1200.0), ("D", 4000.0)]);
        let inst = build_solver_inputs(&net, &cost(&net), &Scenario::new(["A"])).unwrap();
        assert_eq!(inst.demands, [(0, 10.0)]);
        // D is 10 km away: 120 walking minutes, masked out.
        assert_eq!(inst.capacities, [(1, 0.5 * 20.0), (2, 0.5 * 30.0)]);
        assert_eq!(inst.variables.len(), 2);
        assert_eq!(inst.variables[0].cost, 2.0);
        assert!((inst.variables[1].cost - 12.0).abs() < 1e-9);
    }

    #[test]
    fn zero_load_origin_has_no_variables() {
        let net = network(&[("A", 400.0), ("B", 0.0), ("C", 1200.0), ("D", 4000.0)]);
        let inst = build_solver_inputs(&net, &cost(&net), &Scenario::new(["A", "B"])).unwrap();
        assert_eq!(inst.demands, [(0, 10.0)]);
        assert!(inst.variables.iter().all(|v| v.origin == 0 && v.dest != 1));
    }

    #[test]
    fn shared_destination_over_capacity_is_infeasible() {
        // A and B both blocked; only C is reachable and it takes 15 persons.
        let net = network(&[("A", 400.0), ("B", 400.0), ("C", 1200.0), ("D", 4000.0)]);
        let err = build_solver_inputs(&net, &cost(&net), &Scenario::new(["A", "B"])).unwrap_err();
        match err {
            ScenarioError::Infeasible(p) => {
                assert_eq!(p.total_demand, 20.0);
                assert_eq!(p.total_capacity, 15.0);
                assert_eq!(p.origins.len(), 2);
                assert!(p.origins.iter().all(|o| o.candidates == 1));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn stranded_origin_is_infeasible() {
        let net = network(&[("A", 400.0), ("B", 800.0), ("C", 1200.0), ("D", 4000.0)]);
        let err = build_solver_inputs(&net, &cost(&net), &Scenario::new(["D"])).unwrap_err();
        assert!(matches!(err, ScenarioError::Infeasible(ref p) if p.origins[0].candidates == 0));
    }

    #[test]
    fn capacity_override_enables_empty_station() {
        let net = network(&[("A", 400.0), ("B", 0.0), ("C", 0.0), ("D", 0.0)]);
        let mut s = Scenario::new(["A"]);
        assert!(build_solver_inputs(&net, &cost(&net), &s).is_err());
        s.capacity_overrides.insert("C".into(), 25.0);
        let inst = build_solver_inputs(&net, &cost(&net), &s).unwrap();
        assert_eq!(inst.capacities, [(1, 0.0), (2, 25.0)]);
    }

    #[test]
    fn ratio_override_and_supplied_loads() {
        let net = network(&[("A", 400.0), ("B", 800.0), ("C", 1200.0), ("D", 4000.0)]);
        let mut s = Scenario::new(["A"]);
        s.capacity_ratio_overrides.insert("B".into(), 3.0);
        s.loads.insert("A".into(), 7.0);
        let inst = build_solver_inputs(&net, &cost(&net), &s).unwrap();
        assert_eq!(inst.demands, [(0, 7.0)]);
        assert_eq!(inst.capacities[0], (1, 40.0));
    }

    #[test]
    fn validation_errors() {
        let net = network(&[]);
        let c = cost(&net);
        let check = |s: Scenario| build_solver_inputs(&net, &c, &s).unwrap_err();

        assert_eq!(check(Scenario::new(Vec::<String>::new())), ScenarioError::NoBlocked);
        assert_eq!(
            check(Scenario::new(["NOSUCH"])),
            ScenarioError::UnknownStation("NOSUCH".into())
        );
        let mut s = Scenario::new(["A"]);
        s.capacity_ratio = 1.0;
        assert!(matches!(check(s), ScenarioError::CapacityRatio { .. }));
        let mut s = Scenario::new(["A"]);
        s.t_lm = 60.0;
        assert!(matches!(check(s), ScenarioError::WindowMismatch { .. }));
        let mut s = Scenario::new(["A"]);
        s.loads.insert("B".into(), -1.0);
        assert!(matches!(check(s), ScenarioError::Negative { .. }));
    }

    #[test]
    fn variables_respect_direction_rules() {
        let net = network(&[("A", 400.0), ("B", 800.0), ("C", 1200.0), ("D", 4000.0)]);
        let mut s = Scenario::new(["A", "C"]);
        s.loads.insert("A".into(), 2.0);
        s.loads.insert("C".into(), 3.0);
        let inst = build_solver_inputs(&net, &cost(&net), &s).unwrap();
        assert_eq!(inst.demands, [(0, 2.0), (2, 3.0)]);
        for v in &inst.variables {
            assert!(v.origin == 0 || v.origin == 2);
            assert!(v.dest != 0 && v.dest != 2);
            assert_ne!(v.origin, v.dest);
        }
    }

    #[test]
    fn json_schema() {
        let s: Scenario = serde_json::from_str(
            r#"{"blocked":["A"],"t_lm_minutes":30,"capacity_ratio":1.5,
                "capacity_overrides":{"B":10},"operating_hours":20}"#,
        )
        .unwrap();
        assert_eq!(s.blocked, ["A"]);
        assert_eq!(s.capacity_overrides["B"], 10.0);
        let back: Scenario = serde_json::from_str(&serde_json::to_string(&s).unwrap()).unwrap();
        assert_eq!(back, s);
    }
}
