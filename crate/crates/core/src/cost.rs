//! Connection, distance and fused travel-cost matrices.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::network::RailNetwork;

/// Mean Earth radius in kilometres.
pub const EARTH_RADIUS_KM: f64 = 6371.0;

#[derive(Error, Debug, PartialEq)]
pub enum CostError {
    #[error("walking speed must be positive, got {0} km/h")]
    WalkSpeed(f64),
    #[error("hop time must be nonnegative, got {0} min")]
    HopTime(f64),
    #[error("disruption window must be positive, got {0} min")]
    Window(f64),
}

/// Great-circle distance in km between two points given in degrees.
pub fn haversine(lat1: f64, lon1: f64, lat2: f64, lon2: f64, radius_km: f64) -> f64 {
    let (phi1, phi2) = (lat1.to_radians(), lat2.to_radians());
    let dphi = (lat1 - lat2).to_radians();
    let dlambda = (lon1 - lon2).to_radians();
    let h = (dphi / 2.0).sin().powi(2) + phi1.cos() * phi2.cos() * (dlambda / 2.0).sin().powi(2);
    2.0 * radius_km * h.clamp(0.0, 1.0).sqrt().asin()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostParams {
    /// km/h
    pub walk_speed: f64,
    /// Minutes per adjacent rail hop.
    pub hop_time: f64,
    /// Disruption window in minutes; costs above it are unreachable.
    pub t_lm: f64,
    pub earth_radius_km: f64,
    /// Allow one intermediate station (rail or walk) before masking.
    pub one_transfer: bool,
}

impl Default for CostParams {
    fn default() -> Self {
        CostParams {
            walk_speed: 5.0,
            hop_time: 2.0,
            t_lm: 30.0,
            earth_radius_km: EARTH_RADIUS_KM,
            one_transfer: false,
        }
    }
}

impl CostParams {
    pub fn validate(&self) -> Result<(), CostError> {
        if !(self.walk_speed > 0.0 && self.walk_speed.is_finite()) {
            return Err(CostError::WalkSpeed(self.walk_speed));
        }
        if !(self.hop_time >= 0.0 && self.hop_time.is_finite()) {
            return Err(CostError::HopTime(self.hop_time));
        }
        if !(self.t_lm > 0.0 && self.t_lm.is_finite()) {
            return Err(CostError::Window(self.t_lm));
        }
        Ok(())
    }

    /// Minutes needed to walk `km`.
    pub fn walking_minutes(&self, km: f64) -> f64 {
        60.0 * km / self.walk_speed
    }
}

/// Dense row-major n×n matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix<T> {
    n: usize,
    data: Vec<T>,
}

impl<T: Clone> Matrix<T> {
    pub fn filled(n: usize, value: T) -> Self {
        Matrix {
            n,
            data: vec![value; n * n],
        }
    }
}

impl<T> Matrix<T> {
    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let data = (0..n * n).map(|k| f(k / n, k % n)).collect();
        Matrix { n, data }
    }

    pub fn size(&self) -> usize {
        self.n
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, &T)> {
        let n = self.n;
        self.data.iter().enumerate().map(move |(k, v)| (k / n, k % n, v))
    }
}

impl<T> std::ops::Index<(usize, usize)> for Matrix<T> {
    type Output = T;
    fn index(&self, (i, j): (usize, usize)) -> &T {
        &self.data[i * self.n + j]
    }
}

impl<T> std::ops::IndexMut<(usize, usize)> for Matrix<T> {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut T {
        &mut self.data[i * self.n + j]
    }
}

/// 1 where two stations are consecutive stops on some line, else 0.
pub fn connection_matrix(network: &RailNetwork) -> Matrix<u8> {
    let mut m = Matrix::filled(network.len(), 0u8);
    for (i, j) in network.adjacency_pairs() {
        m[(i, j)] = 1;
        m[(j, i)] = 1;
    }
    m
}

pub fn distance_matrix(network: &RailNetwork, radius_km: f64) -> Matrix<f64> {
    let s = network.stations();
    Matrix::from_fn(network.len(), |i, j| {
        if i == j {
            0.0
        } else {
            haversine(s[i].lat, s[i].lon, s[j].lat, s[j].lon, radius_km)
        }
    })
}

/// The connection, distance, train-time and fused cost matrices of a network.
///
/// `a_cost[(i, j)]` is `None` when the pair is unreachable inside the
/// disruption window; `Some(minutes)` otherwise.
#[derive(Debug, Clone, PartialEq)]
pub struct CostModel {
    pub params: CostParams,
    pub a_con: Matrix<u8>,
    pub a_dis: Matrix<f64>,
    /// Rail minutes, defined only for connected pairs.
    pub t_train: Matrix<Option<f64>>,
    pub a_cost: Matrix<Option<f64>>,
}

impl CostModel {
    /// Train time for connected pairs, walking time otherwise, zero on the
    /// diagonal, then everything above `t_lm` masked out.
    pub fn build(network: &RailNetwork, params: CostParams) -> Result<Self, CostError> {
        params.validate()?;
        let n = network.len();
        let a_con = connection_matrix(network);
        let a_dis = distance_matrix(network, params.earth_radius_km);
        let t_train = Matrix::from_fn(n, |i, j| (a_con[(i, j)] == 1).then_some(params.hop_time));

        let mut fused = Matrix::from_fn(n, |i, j| {
            if i == j {
                0.0
            } else if let Some(t) = t_train[(i, j)] {
                t
            } else {
                params.walking_minutes(a_dis[(i, j)])
            }
        });
        if params.one_transfer {
            fused = one_transfer_minimum(&fused, params.t_lm);
        }
        let a_cost = Matrix::from_fn(n, |i, j| {
            let c = fused[(i, j)];
            (c <= params.t_lm).then_some(c)
        });
        Ok(CostModel {
            params,
            a_con,
            a_dis,
            t_train,
            a_cost,
        })
    }

    pub fn len(&self) -> usize {
        self.a_cost.size()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn t_lm(&self) -> f64 {
        self.params.t_lm
    }

    pub fn cost(&self, i: usize, j: usize) -> Option<f64> {
        self.a_cost[(i, j)]
    }

    pub fn reachable_pairs(&self) -> usize {
        self.a_cost.iter().filter(|(i, j, c)| i != j && c.is_some()).count()
    }

    pub fn to_dump(&self, network: &RailNetwork) -> CostDump {
        CostDump {
            n: self.len(),
            t_lm_minutes: self.params.t_lm,
            station_ids: network.stations().iter().map(|s| s.station_id.clone()).collect(),
            entries: self
                .a_cost
                .iter()
                .filter_map(|(i, j, c)| c.map(|minutes| CostEntry { i, j, minutes }))
                .collect(),
        }
    }
}

/// `min(a_ij, min_m a_im + a_mj)`. Legs longer than `limit` cannot produce a
/// sum within it, so they are skipped.
fn one_transfer_minimum(base: &Matrix<f64>, limit: f64) -> Matrix<f64> {
    let n = base.size();
    let mut out = base.clone();
    for i in 0..n {
        let row_i = base.row(i);
        for (m, &first) in row_i.iter().enumerate() {
            if m == i || first > limit {
                continue;
            }
            let row_m = base.row(m);
            for (j, &second) in row_m.iter().enumerate() {
                let via = first + second;
                if via < out[(i, j)] {
                    out[(i, j)] = via;
                }
            }
        }
    }
    out
}

/// `cost.json`: the finite entries of the fused cost matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostDump {
    pub n: usize,
    pub t_lm_minutes: f64,
    pub station_ids: Vec<String>,
    pub entries: Vec<CostEntry>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostEntry {
    pub i: usize,
    pub j: usize,
    pub minutes: f64,
}
