//! Seeded synthetic networks in the loader's CSV format.

use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal};
use thiserror::Error;

use crate::cost::{haversine, EARTH_RADIUS_KM};

pub const DEFAULT_SEED: u64 = 42;

#[derive(Error, Debug)]
pub enum GenerateError {
    #[error("need at least 2 stations, got {0}")]
    Stations(usize),
    #[error("need at least 1 line, got {0}")]
    Lines(usize),
    #[error("need at least 1 operator, got {0}")]
    Operators(usize),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GenerateOptions {
    pub seed: u64,
    pub stations: usize,
    pub lines: usize,
    pub operators: usize,
    /// Bounding box `(lat_min, lat_max, lon_min, lon_max)`.
    pub bbox: (f64, f64, f64, f64),
    pub max_line_stops: usize,
    /// Median daily passengers per station.
    pub median_daily: f64,
}

impl Default for GenerateOptions {
    fn default() -> Self {
        GenerateOptions {
            seed: DEFAULT_SEED,
            stations: 10,
            lines: 2,
            operators: 3,
            bbox: (35.55, 35.85, 139.55, 139.95),
            max_line_stops: 20,
            median_daily: 20_000.0,
        }
    }
}

/// CSV text of a generated network.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GeneratedNetwork {
    pub stations_csv: String,
    pub lines_csv: String,
    pub passengers_csv: String,
}

impl GeneratedNetwork {
    /// Writes `stations.csv`, `lines.csv` and `passengers.csv` into `dir`.
    pub fn write_to(&self, dir: &Path) -> Result<(), GenerateError> {
        let io = |path: &Path, source| GenerateError::Io {
            path: path.display().to_string(),
            source,
        };
        std::fs::create_dir_all(dir).map_err(|e| io(dir, e))?;
        for (name, body) in [
            ("stations.csv", &self.stations_csv),
            ("lines.csv", &self.lines_csv),
            ("passengers.csv", &self.passengers_csv),
        ] {
            let path = dir.join(name);
            std::fs::write(&path, body).map_err(|e| io(&path, e))?;
        }
        Ok(())
    }
}

pub fn generate(opts: &GenerateOptions) -> Result<GeneratedNetwork, GenerateError> {
    if opts.stations < 2 {
        return Err(GenerateError::Stations(opts.stations));
    }
    if opts.lines < 1 {
        return Err(GenerateError::Lines(opts.lines));
    }
    if opts.operators < 1 {
        return Err(GenerateError::Operators(opts.operators));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let (lat0, lat1, lon0, lon1) = opts.bbox;
    let width = opts.stations.to_string().len().max(4);

    // Rounded to the precision written out, so the files are self-consistent.
    let coords: Vec<(f64, f64)> = (0..opts.stations)
        .map(|_| {
            let lat: f64 = rng.gen_range(lat0..=lat1);
            let lon: f64 = rng.gen_range(lon0..=lon1);
            ((lat * 1e6).round() / 1e6, (lon * 1e6).round() / 1e6)
        })
        .collect();
    let ids: Vec<String> = (1..=opts.stations).map(|k| format!("S{k:0width$}")).collect();

    let mut station_operator: Vec<Option<usize>> = vec![None; opts.stations];
    let mut lines_csv = String::from("line_id,line_name,operator,seq,station_id\n");
    let max_stops = opts.max_line_stops.clamp(2, opts.stations);
    for l in 0..opts.lines {
        let operator = l % opts.operators;
        let len = rng.gen_range(2..=max_stops);
        let mut visited = vec![false; opts.stations];
        let mut current = rng.gen_range(0..opts.stations);
        let mut stops = vec![current];
        visited[current] = true;
        while stops.len() < len {
            // Step to one of the three nearest unvisited stations.
            let mut near: Vec<(f64, usize)> = (0..opts.stations)
                .filter(|&k| !visited[k])
                .map(|k| {
                    let (a, b) = (coords[current], coords[k]);
                    (haversine(a.0, a.1, b.0, b.1, EARTH_RADIUS_KM), k)
                })
                .collect();
            near.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            near.truncate(3);
            let Some(&(_, next)) = near.choose(&mut rng) else { break };
            visited[next] = true;
            stops.push(next);
            current = next;
        }
        for (seq, &s) in stops.iter().enumerate() {
            station_operator[s].get_or_insert(operator);
            writeln!(
                lines_csv,
                "L{:03},Line {},OP{:02},{},{}",
                l + 1,
                l + 1,
                operator + 1,
                seq + 1,
                ids[s]
            )
            .unwrap();
        }
    }

    let daily_dist = LogNormal::new(opts.median_daily.ln(), 1.0).expect("valid log-normal");
    let mut stations_csv = String::from("station_id,name,operator,lat,lon\n");
    let mut passengers_csv = String::from("station_id,daily_passengers\n");
    for (k, id) in ids.iter().enumerate() {
        let operator = station_operator[k].unwrap_or_else(|| rng.gen_range(0..opts.operators));
        writeln!(
            stations_csv,
            "{id},Station {},OP{:02},{:.6},{:.6}",
            k + 1,
            operator + 1,
            coords[k].0,
            coords[k].1
        )
        .unwrap();
        let daily: f64 = daily_dist.sample(&mut rng);
        writeln!(passengers_csv, "{id},{}", daily.round() as u64).unwrap();
    }

    Ok(GeneratedNetwork {
        stations_csv,
        lines_csv,
        passengers_csv,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::RailNetwork;

    fn opts(seed: u64, stations: usize, lines: usize) -> GenerateOptions {
        GenerateOptions {
            seed,
            stations,
            lines,
            ..GenerateOptions::default()
        }
    }

    #[test]
    fn same_seed_same_bytes() {
        let a = generate(&opts(42, 10, 2)).unwrap();
        let b = generate(&opts(42, 10, 2)).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, generate(&opts(43, 10, 2)).unwrap());
    }

    #[test]
    fn rejects_bad_counts() {
        assert!(matches!(generate(&opts(1, 1, 2)), Err(GenerateError::Stations(1))));
        assert!(matches!(generate(&opts(1, 5, 0)), Err(GenerateError::Lines(0))));
    }

    #[test]
    fn loads_cleanly_over_many_seeds() {
        for seed in 0..100 {
            let g = generate(&opts(seed, 2 + (seed as usize % 40), 1 + seed as usize % 5)).unwrap();
            let (net, summary) = RailNetwork::from_readers(
                g.stations_csv.as_bytes(),
                g.lines_csv.as_bytes(),
                g.passengers_csv.as_bytes(),
            )
            .unwrap_or_else(|e| panic!("seed {seed}: {e}"));
            assert_eq!(summary.warning_count(), 0, "seed {seed}");
            assert_eq!(net.len(), 2 + (seed as usize % 40));
        }
    }
}
