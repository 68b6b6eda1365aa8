//! EPF / PTT / ATT metrics and their CSV, JSON and GeoJSON renderings.
//!
//! * EPF: persons assigned to a destination.
//! * PTT: travel minutes to a destination, flow-weighted over origins when
//!   several blocked stations send passengers there.
//! * ATT: flow-weighted mean travel minutes over the whole plan.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;

use crate::network::RailNetwork;
use crate::solver::{EvacuationPlan, PlanStatus, SolverInstance};

#[derive(Error, Debug)]
pub enum ReportError {
    #[error("cannot summarize a plan with status {0:?}")]
    NotOptimal(PlanStatus),
    #[error("unknown format `{0}` (expected csv, json or geojson)")]
    UnknownFormat(String),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Csv,
    Json,
    GeoJson,
}

impl FromStr for Format {
    type Err = ReportError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            "geojson" => Ok(Format::GeoJson),
            _ => Err(ReportError::UnknownFormat(s.to_owned())),
        }
    }
}

impl fmt::Display for Format {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Format::Csv => "csv",
            Format::Json => "json",
            Format::GeoJson => "geojson",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DestinationRow {
    pub station_id: String,
    pub epf: f64,
    pub ptt_minutes: f64,
    pub capacity: f64,
    pub saturated: bool,
    pub lat: f64,
    pub lon: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OriginRow {
    pub station_id: String,
    pub demand: f64,
    pub evacuated: f64,
    pub lat: f64,
    pub lon: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowRow {
    pub from: String,
    pub to: String,
    pub persons: f64,
    pub cost_minutes: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stats {
    pub count: usize,
    pub median: f64,
    pub mean: f64,
    pub min: f64,
    pub max: f64,
}

impl Stats {
    /// Midpoint median; all fields zero for an empty sample.
    pub fn of(values: &[f64]) -> Stats {
        if values.is_empty() {
            return Stats {
                count: 0,
                median: 0.0,
                mean: 0.0,
                min: 0.0,
                max: 0.0,
            };
        }
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        let n = v.len();
        let median = if n % 2 == 1 {
            v[n / 2]
        } else {
            (v[n / 2 - 1] + v[n / 2]) / 2.0
        };
        Stats {
            count: n,
            median,
            mean: v.iter().sum::<f64>() / n as f64,
            min: v[0],
            max: v[n - 1],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioReport {
    /// `Σ ptt·epf / Σ epf` over destinations; 0 when nobody moves.
    pub att_minutes: f64,
    /// The solver's ratio including the ε guard.
    pub objective_att_minutes: f64,
    pub total_evacuated: f64,
    /// Sorted by EPF descending, then station_id.
    pub per_destination: Vec<DestinationRow>,
    pub per_origin: Vec<OriginRow>,
    pub flows: Vec<FlowRow>,
    /// Over destinations with positive EPF.
    pub epf_stats: Stats,
    pub ptt_stats: Stats,
}

/// Aggregates an optimal plan per destination and per origin.
pub fn summarize(
    plan: &EvacuationPlan,
    instance: &SolverInstance,
    network: &RailNetwork,
) -> Result<ScenarioReport, ReportError> {
    if plan.status != PlanStatus::Optimal {
        return Err(ReportError::NotOptimal(plan.status));
    }
    // dest -> (Σ persons, Σ persons·cost, contributing origins, last cost)
    let mut by_dest: BTreeMap<usize, (f64, f64, usize, f64)> = BTreeMap::new();
    for f in plan.flows.iter().filter(|f| f.persons > 0.0) {
        let e = by_dest.entry(f.dest).or_default();
        e.0 += f.persons;
        e.1 += f.persons * f.cost;
        e.2 += 1;
        e.3 = f.cost;
    }

    let mut per_destination: Vec<DestinationRow> = by_dest
        .into_iter()
        .map(|(j, (epf, weighted, origins, cost))| {
            let s = network.station(j);
            let capacity = instance.capacity_of(j).unwrap_or(0.0);
            DestinationRow {
                station_id: s.station_id.clone(),
                epf,
                ptt_minutes: if origins == 1 { cost } else { weighted / epf },
                capacity,
                saturated: epf >= capacity - 1e-6,
                lat: s.lat,
                lon: s.lon,
            }
        })
        .collect();
    per_destination.sort_by(|a, b| b.epf.total_cmp(&a.epf).then_with(|| a.station_id.cmp(&b.station_id)));

    let per_origin = instance
        .demands
        .iter()
        .map(|&(i, demand)| {
            let s = network.station(i);
            OriginRow {
                station_id: s.station_id.clone(),
                demand,
                evacuated: plan.outflow(i),
                lat: s.lat,
                lon: s.lon,
            }
        })
        .collect();

    let flows = plan
        .flows
        .iter()
        .map(|f| FlowRow {
            from: network.station(f.origin).station_id.clone(),
            to: network.station(f.dest).station_id.clone(),
            persons: f.persons,
            cost_minutes: f.cost,
        })
        .collect();

    let epf: Vec<f64> = per_destination.iter().map(|r| r.epf).collect();
    let ptt: Vec<f64> = per_destination.iter().map(|r| r.ptt_minutes).collect();
    Ok(ScenarioReport {
        att_minutes: weighted_mean(&per_destination),
        objective_att_minutes: plan.objective_att,
        total_evacuated: plan.total_evacuated,
        epf_stats: Stats::of(&epf),
        ptt_stats: Stats::of(&ptt),
        per_destination,
        per_origin,
        flows,
    })
}

fn weighted_mean(rows: &[DestinationRow]) -> f64 {
    let total: f64 = rows.iter().map(|r| r.epf).sum();
    if total > 0.0 {
        rows.iter().map(|r| r.epf * r.ptt_minutes).sum::<f64>() / total
    } else {
        0.0
    }
}

impl ScenarioReport {
    /// The same report keeping only the first `k` destinations and the flows
    /// into them.
    pub fn top(&self, k: usize) -> ScenarioReport {
        let mut out = self.clone();
        out.per_destination.truncate(k);
        let kept: Vec<&str> = out.per_destination.iter().map(|r| r.station_id.as_str()).collect();
        out.flows.retain(|f| kept.contains(&f.to.as_str()));
        out
    }

    /// One-paragraph summary with display rounding.
    pub fn headline(&self) -> String {
        let mut s = format!(
            "evacuated {:.0} persons to {} stations, ATT {:.1} min",
            self.total_evacuated,
            self.per_destination.len(),
            self.att_minutes
        );
        if self.epf_stats.count > 0 {
            s.push_str(&format!(
                " (EPF median {:.0} mean {:.0}; PTT mean {:.1} min)",
                self.epf_stats.median, self.epf_stats.mean, self.ptt_stats.mean
            ));
        }
        s
    }
}

/// Renders a report. `top_k` keeps only the highest-EPF destinations.
pub fn emit(report: &ScenarioReport, format: Format, top_k: Option<usize>) -> Result<String, ReportError> {
    let report = match top_k {
        Some(k) => report.top(k),
        None => report.clone(),
    };
    match format {
        Format::Csv => to_csv(&report),
        Format::Json => Ok(serde_json::to_string_pretty(&report)? + "\n"),
        Format::GeoJson => Ok(serde_json::to_string_pretty(&to_geojson(&report))? + "\n"),
    }
}

fn to_csv(report: &ScenarioReport) -> Result<String, ReportError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["station_id", "epf", "ptt_minutes", "capacity", "saturated"])?;
    for r in &report.per_destination {
        w.write_record([
            r.station_id.clone(),
            r.epf.to_string(),
            r.ptt_minutes.to_string(),
            r.capacity.to_string(),
            r.saturated.to_string(),
        ])?;
    }
    let bytes = w.into_inner().map_err(|e| csv::Error::from(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

fn to_geojson(report: &ScenarioReport) -> serde_json::Value {
    let mut features = Vec::new();
    for o in &report.per_origin {
        features.push(json!({
            "type": "Feature",
            "geometry": {"type": "Point", "coordinates": [o.lon, o.lat]},
            "properties": {
                "role": "origin",
                "station_id": o.station_id,
                "demand": o.demand,
                "evacuated": o.evacuated,
            },
        }));
    }
    for d in report.per_destination.iter().filter(|d| d.epf > 0.0) {
        features.push(json!({
            "type": "Feature",
            "geometry": {"type": "Point", "coordinates": [d.lon, d.lat]},
            "properties": {
                "role": "destination",
                "station_id": d.station_id,
                "epf": d.epf,
                "ptt_minutes": d.ptt_minutes,
                "capacity": d.capacity,
                "saturated": d.saturated,
            },
        }));
    }
    let coords: BTreeMap<&str, [f64; 2]> = report
        .per_origin
        .iter()
        .map(|o| (o.station_id.as_str(), [o.lon, o.lat]))
        .chain(report.per_destination.iter().map(|d| (d.station_id.as_str(), [d.lon, d.lat])))
        .collect();
    for f in &report.flows {
        let (Some(a), Some(b)) = (coords.get(f.from.as_str()), coords.get(f.to.as_str())) else {
            continue;
        };
        features.push(json!({
            "type": "Feature",
            "geometry": {"type": "LineString", "coordinates": [a, b]},
            "properties": {
                "role": "flow",
                "from": f.from,
                "to": f.to,
                "persons": f.persons,
                "cost_minutes": f.cost_minutes,
            },
        }));
    }
    json!({"type": "FeatureCollection", "features": features})
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::Station;
    use crate::solver::{solve, Variable, DEFAULT_EPSILON};

    fn toy() -> (RailNetwork, SolverInstance, EvacuationPlan) {
        let st = |id: &str, lat: f64, lon: f64| Station {
            station_id: id.into(),
            name: id.into(),
            operator: "X".into(),
            lat,
            lon,
        };
        let net = RailNetwork::from_parts(
            vec![st("A", 35.68, 139.76), st("B", 35.69, 139.77), st("C", 35.67, 139.75)],
            vec![],
            vec![],
        )
        .unwrap()
        .0;
        let inst = SolverInstance {
            variables: vec![
                Variable { origin: 0, dest: 1, cost: 2.0 },
                Variable { origin: 0, dest: 2, cost: 12.0 },
            ],
            demands: vec![(0, 150.0)],
            capacities: vec![(1, 100.0), (2, 100.0)],
            epsilon: DEFAULT_EPSILON,
        };
        let plan = solve(&inst).unwrap();
        (net, inst, plan)
    }

    #[test]
    fn toy_rows() {
        let (net, inst, plan) = toy();
        let r = summarize(&plan, &inst, &net).unwrap();
        let rows: Vec<_> = r
            .per_destination
            .iter()
            .map(|d| (d.station_id.as_str(), d.epf, d.ptt_minutes, d.saturated))
            .collect();
        assert_eq!(rows, [("B", 100.0, 2.0, true), ("C", 50.0, 12.0, false)]);
        assert!((r.att_minutes - 800.0 / 150.0).abs() < 1e-12);
        assert_eq!(r.per_origin[0].evacuated, 150.0);
        assert_eq!(r.epf_stats.median, 75.0);
        assert_eq!(r.epf_stats.mean, 75.0);
        assert_eq!(r.ptt_stats.max, 12.0);
    }

    #[test]
    fn single_destination_stats() {
        let s = Stats::of(&[42.0]);
        assert_eq!((s.median, s.mean, s.min, s.max), (42.0, 42.0, 42.0, 42.0));
        assert_eq!(Stats::of(&[3.0, 1.0, 2.0]).median, 2.0);
        assert_eq!(Stats::of(&[]).count, 0);
    }

    #[test]
    fn csv_top_k() {
        let (net, inst, plan) = toy();
        let r = summarize(&plan, &inst, &net).unwrap();
        let csv = emit(&r, Format::Csv, Some(1)).unwrap();
        assert_eq!(csv, "station_id,epf,ptt_minutes,capacity,saturated\nB,100,2,100,true\n");
    }

    #[test]
    fn json_round_trip() {
        let (net, inst, plan) = toy();
        let r = summarize(&plan, &inst, &net).unwrap();
        let text = emit(&r, Format::Json, None).unwrap();
        let back: ScenarioReport = serde_json::from_str(&text).unwrap();
        assert_eq!(back, r);
    }

    #[test]
    fn geojson_features() {
        let (net, inst, plan) = toy();
        let r = summarize(&plan, &inst, &net).unwrap();
        let v: serde_json::Value = serde_json::from_str(&emit(&r, Format::GeoJson, None).unwrap()).unwrap();
        let features = v["features"].as_array().unwrap();
        let points = features.iter().filter(|f| f["geometry"]["type"] == "Point").count();
        let lines = features.iter().filter(|f| f["geometry"]["type"] == "LineString").count();
        assert_eq!(points, 3);
        assert_eq!(lines, 2);
        let b = features.iter().find(|f| f["properties"]["station_id"] == "B").unwrap();
        assert_eq!(b["geometry"]["coordinates"][0].as_f64(), Some(139.77));
        assert_eq!(b["geometry"]["coordinates"][1].as_f64(), Some(35.69));
    }

    #[test]
    fn unknown_format() {
        assert!(matches!("pdf".parse::<Format>(), Err(ReportError::UnknownFormat(_))));
        assert_eq!("GeoJSON".parse::<Format>().unwrap(), Format::GeoJson);
    }

    #[test]
    fn infeasible_plan_rejected() {
        let (net, mut inst, _) = toy();
        inst.demands[0].1 = 500.0;
        let plan = solve(&inst).unwrap();
        assert!(matches!(summarize(&plan, &inst, &net), Err(ReportError::NotOptimal(_))));
    }

    #[test]
    fn multi_origin_ptt_is_flow_weighted() {
        let (net, _, _) = toy();
        let inst = SolverInstance {
            variables: vec![
                Variable { origin: 0, dest: 1, cost: 2.0 },
                Variable { origin: 2, dest: 1, cost: 6.0 },
            ],
            demands: vec![(0, 30.0), (2, 10.0)],
            capacities: vec![(1, 100.0)],
            epsilon: DEFAULT_EPSILON,
        };
        let r = summarize(&solve(&inst).unwrap(), &inst, &net).unwrap();
        assert_eq!(r.per_destination.len(), 1);
        assert!((r.per_destination[0].ptt_minutes - 3.0).abs() < 1e-12);
        assert!((r.att_minutes - 3.0).abs() < 1e-12);
    }
}
