//! Station, line and passenger ingestion.
//!
//! Three CSV files describe a network:
//!
//! * `stations.csv`: `station_id,name,operator,lat,lon`
//! * `lines.csv`: `line_id,line_name,operator,seq,station_id`, one row per stop,
//!   `seq` numbering the stops of a line from 1
//! * `passengers.csv`: `station_id,daily_passengers`
//!
//! Stations are indexed by ascending `station_id`; every matrix built later
//! uses that order for its rows and columns.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs::File;
use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const STATIONS_HEADER: [&str; 5] = ["station_id", "name", "operator", "lat", "lon"];
pub const LINES_HEADER: [&str; 5] = ["line_id", "line_name", "operator", "seq", "station_id"];
pub const PASSENGERS_HEADER: [&str; 2] = ["station_id", "daily_passengers"];

#[derive(Error, Debug)]
pub enum NetworkError {
    #[error("{file}: cannot read: {source}")]
    Io {
        file: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{file}: {source}")]
    Csv {
        file: String,
        #[source]
        source: csv::Error,
    },
    #[error("{file}: missing column `{column}` in header")]
    MissingColumn { file: String, column: String },
    #[error("{file}:{line}: column `{column}`: {message}")]
    Malformed {
        file: String,
        line: u64,
        column: String,
        message: String,
    },
    #[error("duplicate station_id `{0}`")]
    DuplicateStation(String),
    #[error("line `{line_id}` references unknown station `{station_id}`")]
    UnknownLineStop { line_id: String, station_id: String },
    #[error("passenger row references unknown station `{0}`")]
    UnknownPassengerStation(String),
    #[error("duplicate passenger row for station `{0}`")]
    DuplicatePassengers(String),
    #[error("station `{station_id}`: {message}")]
    InvalidCoordinate { station_id: String, message: String },
    #[error("line `{line_id}`: {message}")]
    InvalidLine { line_id: String, message: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Station {
    pub station_id: String,
    pub name: String,
    pub operator: String,
    pub lat: f64,
    pub lon: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RailLine {
    pub line_id: String,
    pub line_name: String,
    pub operator: String,
    /// Ordered stop list by `station_id`.
    pub stops: Vec<String>,
}

/// Non-fatal findings from loading.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LoadSummary {
    pub stations: usize,
    pub lines: usize,
    pub operators: usize,
    /// Stations without a passenger row; their daily count was set to 0.
    pub missing_passengers: Vec<String>,
}

impl LoadSummary {
    pub fn warning_count(&self) -> usize {
        self.missing_passengers.len()
    }
}

/// Immutable railway graph. Index `i` is the row/column of station `i` in
/// every matrix derived from the network.
#[derive(Debug, Clone, PartialEq)]
pub struct RailNetwork {
    stations: Vec<Station>,
    lines: Vec<RailLine>,
    index_of: HashMap<String, usize>,
    daily_passengers: Vec<f64>,
}

impl RailNetwork {
    /// Validates and indexes the parts. `passengers` may omit stations; those
    /// default to zero and are listed in the returned summary.
    pub fn from_parts(
        mut stations: Vec<Station>,
        lines: Vec<RailLine>,
        passengers: Vec<(String, f64)>,
    ) -> Result<(Self, LoadSummary), NetworkError> {
        stations.sort_by(|a, b| a.station_id.cmp(&b.station_id));
        for pair in stations.windows(2) {
            if pair[0].station_id == pair[1].station_id {
                return Err(NetworkError::DuplicateStation(pair[0].station_id.clone()));
            }
        }
        for s in &stations {
            validate_coordinate(s)?;
        }
        let index_of: HashMap<String, usize> = stations
            .iter()
            .enumerate()
            .map(|(i, s)| (s.station_id.clone(), i))
            .collect();

        for line in &lines {
            if line.stops.len() < 2 {
                return Err(NetworkError::InvalidLine {
                    line_id: line.line_id.clone(),
                    message: format!("needs at least 2 stops, has {}", line.stops.len()),
                });
            }
            for stop in &line.stops {
                if !index_of.contains_key(stop) {
                    return Err(NetworkError::UnknownLineStop {
                        line_id: line.line_id.clone(),
                        station_id: stop.clone(),
                    });
                }
            }
            if let Some(w) = line.stops.windows(2).find(|w| w[0] == w[1]) {
                return Err(NetworkError::InvalidLine {
                    line_id: line.line_id.clone(),
                    message: format!("station `{}` repeated on consecutive stops", w[0]),
                });
            }
        }

        let mut daily = vec![None; stations.len()];
        for (id, count) in passengers {
            let idx = *index_of
                .get(&id)
                .ok_or_else(|| NetworkError::UnknownPassengerStation(id.clone()))?;
            if daily[idx].is_some() {
                return Err(NetworkError::DuplicatePassengers(id));
            }
            daily[idx] = Some(count);
        }
        let missing_passengers: Vec<String> = daily
            .iter()
            .zip(&stations)
            .filter(|(d, _)| d.is_none())
            .map(|(_, s)| s.station_id.clone())
            .collect();
        for id in &missing_passengers {
            log::warn!("station `{id}` has no passenger row; using 0");
        }
        let daily_passengers = daily.into_iter().map(|d| d.unwrap_or(0.0)).collect();

        let operators: BTreeSet<&str> = stations
            .iter()
            .map(|s| s.operator.as_str())
            .chain(lines.iter().map(|l| l.operator.as_str()))
            .collect();
        let summary = LoadSummary {
            stations: stations.len(),
            lines: lines.len(),
            operators: operators.len(),
            missing_passengers,
        };
        Ok((
            RailNetwork {
                stations,
                lines,
                index_of,
                daily_passengers,
            },
            summary,
        ))
    }

    pub fn from_readers<A: Read, B: Read, C: Read>(
        stations: A,
        lines: B,
        passengers: C,
    ) -> Result<(Self, LoadSummary), NetworkError> {
        let stations = read_stations(stations, "stations.csv")?;
        let lines = read_lines(lines, "lines.csv")?;
        let passengers = read_passengers(passengers, "passengers.csv")?;
        Self::from_parts(stations, lines, passengers)
    }

    pub fn len(&self) -> usize {
        self.stations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.stations.is_empty()
    }

    pub fn stations(&self) -> &[Station] {
        &self.stations
    }

    pub fn station(&self, index: usize) -> &Station {
        &self.stations[index]
    }

    pub fn lines(&self) -> &[RailLine] {
        &self.lines
    }

    pub fn index_of(&self, station_id: &str) -> Option<usize> {
        self.index_of.get(station_id).copied()
    }

    pub fn daily_passengers(&self) -> &[f64] {
        &self.daily_passengers
    }

    /// Unordered pairs `(i, j)` with `i < j` of stations that are consecutive
    /// stops on at least one line.
    pub fn adjacency_pairs(&self) -> BTreeSet<(usize, usize)> {
        let mut pairs = BTreeSet::new();
        for line in &self.lines {
            for w in line.stops.windows(2) {
                let a = self.index_of[&w[0]];
                let b = self.index_of[&w[1]];
                if a != b {
                    pairs.insert((a.min(b), a.max(b)));
                }
            }
        }
        pairs
    }
}

/// Loads and validates the three network files.
pub fn load_network(
    stations: &Path,
    lines: &Path,
    passengers: &Path,
) -> Result<(RailNetwork, LoadSummary), NetworkError> {
    let open = |p: &Path| {
        File::open(p).map_err(|source| NetworkError::Io {
            file: p.display().to_string(),
            source,
        })
    };
    let s = read_stations(open(stations)?, &stations.display().to_string())?;
    let l = read_lines(open(lines)?, &lines.display().to_string())?;
    let p = read_passengers(open(passengers)?, &passengers.display().to_string())?;
    RailNetwork::from_parts(s, l, p)
}

fn validate_coordinate(s: &Station) -> Result<(), NetworkError> {
    if !(-90.0..=90.0).contains(&s.lat) {
        return Err(NetworkError::InvalidCoordinate {
            station_id: s.station_id.clone(),
            message: format!("latitude {} outside [-90, 90]", s.lat),
        });
    }
    if !(-180.0..=180.0).contains(&s.lon) {
        return Err(NetworkError::InvalidCoordinate {
            station_id: s.station_id.clone(),
            message: format!("longitude {} outside [-180, 180]", s.lon),
        });
    }
    Ok(())
}

/// Reads a headed CSV and hands each record to `row` as a field lookup.
struct Table<R: Read> {
    file: String,
    reader: csv::Reader<R>,
    columns: Vec<usize>,
    names: &'static [&'static str],
}

struct Row<'a> {
    file: &'a str,
    line: u64,
    record: csv::StringRecord,
    columns: &'a [usize],
    names: &'static [&'static str],
}

impl<R: Read> Table<R> {
    fn open(input: R, file: &str, names: &'static [&'static str]) -> Result<Self, NetworkError> {
        let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
        let header = reader.headers().map_err(|source| NetworkError::Csv {
            file: file.to_owned(),
            source,
        })?;
        let columns = names
            .iter()
            .map(|name| {
                header
                    .iter()
                    .position(|h| h.trim_start_matches('\u{feff}') == *name)
                    .ok_or_else(|| NetworkError::MissingColumn {
                        file: file.to_owned(),
                        column: (*name).to_owned(),
                    })
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Table {
            file: file.to_owned(),
            reader,
            columns,
            names,
        })
    }

    fn for_each_row(
        mut self,
        mut f: impl FnMut(&Row<'_>) -> Result<(), NetworkError>,
    ) -> Result<(), NetworkError> {
        for record in self.reader.records() {
            let record = record.map_err(|source| NetworkError::Csv {
                file: self.file.clone(),
                source,
            })?;
            let line = record.position().map(|p| p.line()).unwrap_or(0);
            let row = Row {
                file: &self.file,
                line,
                record,
                columns: &self.columns,
                names: self.names,
            };
            f(&row)?;
        }
        Ok(())
    }
}

impl Row<'_> {
    fn error(&self, col: usize, message: String) -> NetworkError {
        NetworkError::Malformed {
            file: self.file.to_owned(),
            line: self.line,
            column: self.names[col].to_owned(),
            message,
        }
    }

    fn text(&self, col: usize) -> Result<String, NetworkError> {
        let value = self.record.get(self.columns[col]).unwrap_or("");
        if value.is_empty() {
            return Err(self.error(col, "empty value".to_owned()));
        }
        Ok(value.to_owned())
    }

    fn float(&self, col: usize) -> Result<f64, NetworkError> {
        let raw = self.text(col)?;
        match raw.parse::<f64>() {
            Ok(v) if v.is_finite() => Ok(v),
            _ => Err(self.error(col, format!("`{raw}` is not a finite number"))),
        }
    }

    fn count(&self, col: usize) -> Result<u64, NetworkError> {
        let raw = self.text(col)?;
        raw.parse::<u64>()
            .map_err(|_| self.error(col, format!("`{raw}` is not a nonnegative integer")))
    }
}

fn read_stations<R: Read>(input: R, file: &str) -> Result<Vec<Station>, NetworkError> {
    let mut out = Vec::new();
    Table::open(input, file, &STATIONS_HEADER)?.for_each_row(|row| {
        let station = Station {
            station_id: row.text(0)?,
            name: row.text(1)?,
            operator: row.text(2)?,
            lat: row.float(3)?,
            lon: row.float(4)?,
        };
        if !(-90.0..=90.0).contains(&station.lat) {
            return Err(row.error(3, format!("latitude {} outside [-90, 90]", station.lat)));
        }
        if !(-180.0..=180.0).contains(&station.lon) {
            return Err(row.error(4, format!("longitude {} outside [-180, 180]", station.lon)));
        }
        out.push(station);
        Ok(())
    })?;
    Ok(out)
}

fn read_lines<R: Read>(input: R, file: &str) -> Result<Vec<RailLine>, NetworkError> {
    struct Draft {
        name: String,
        operator: String,
        stops: BTreeMap<u64, String>,
    }
    let mut drafts: BTreeMap<String, Draft> = BTreeMap::new();
    Table::open(input, file, &LINES_HEADER)?.for_each_row(|row| {
        let line_id = row.text(0)?;
        let seq = row.count(3)?;
        if seq == 0 {
            return Err(row.error(3, "seq starts at 1".to_owned()));
        }
        let station_id = row.text(4)?;
        let draft = match drafts.get_mut(&line_id) {
            Some(d) => d,
            None => drafts.entry(line_id.clone()).or_insert(Draft {
                name: row.text(1)?,
                operator: row.text(2)?,
                stops: BTreeMap::new(),
            }),
        };
        if draft.stops.insert(seq, station_id).is_some() {
            return Err(row.error(3, format!("seq {seq} repeated for line `{line_id}`")));
        }
        Ok(())
    })?;

    drafts
        .into_iter()
        .map(|(line_id, draft)| {
            if let Some((pos, (&seq, _))) = draft
                .stops
                .iter()
                .enumerate()
                .find(|(pos, (&seq, _))| seq != *pos as u64 + 1)
            {
                return Err(NetworkError::InvalidLine {
                    line_id,
                    message: format!("seq {seq} found where {} was expected", pos + 1),
                });
            }
            Ok(RailLine {
                line_id,
                line_name: draft.name,
                operator: draft.operator,
                stops: draft.stops.into_values().collect(),
            })
        })
        .collect()
}

fn read_passengers<R: Read>(input: R, file: &str) -> Result<Vec<(String, f64)>, NetworkError> {
    let mut out = Vec::new();
    Table::open(input, file, &PASSENGERS_HEADER)?.for_each_row(|row| {
        out.push((row.text(0)?, row.count(1)? as f64));
        Ok(())
    })?;
    Ok(out)
}
