//! Evacuation planning for disrupted railway stations.
//!
//! The pipeline is `network` (load stations, lines and passenger counts) →
//! `cost` (connection, distance and fused travel-cost matrices) →
//! `scenario` (blocked stations, window loads, residual capacities) →
//! `solver` (exact capacity-constrained assignment) → `report` (EPF / PTT / ATT
//! tables, CSV / JSON / GeoJSON output). `generate` builds seeded synthetic
//! networks and `cli` drives the whole thing from the command line.

pub mod cli;
pub mod cost;
pub mod generate;
pub mod network;
pub mod report;
pub mod scenario;
pub mod solver;

pub use cost::{haversine, CostModel, CostParams, EARTH_RADIUS_KM};
pub use network::{LoadSummary, NetworkError, RailLine, RailNetwork, Station};
pub use report::{ReportError, ScenarioReport};
pub use scenario::{Scenario, ScenarioError};
pub use solver::{EvacuationPlan, PlanStatus, SolverError, SolverInstance};
