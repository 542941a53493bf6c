//! Trajectory CSV: `vehicle_id,timestamp,lat,lon,speed_kmh,heading_deg`.
//!
//! The header row is required. Speed and heading may be empty. Timestamps are
//! either epoch seconds or ISO-8601; the first parseable row decides which
//! for the whole file. Rows that fail to parse are counted and skipped.

use std::collections::HashMap;
use std::io::{Read, Write};

use anyhow::{bail, Result};
use chrono::{DateTime, NaiveDateTime};
use mapinfer_core::geo::{GpsPoint, Heading, LatLon, VehicleId};
use mapinfer_core::ingest::Trajectory;

pub const COLUMNS: [&str; 6] = ["vehicle_id", "timestamp", "lat", "lon", "speed_kmh", "heading_deg"];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TimeFormat {
    Epoch,
    Iso8601,
}

fn parse_iso(s: &str) -> Option<f64> {
    if let Ok(t) = DateTime::parse_from_rfc3339(s) {
        return Some(t.timestamp() as f64 + f64::from(t.timestamp_subsec_nanos()) * 1e-9);
    }
    ["%Y-%m-%dT%H:%M:%S%.f", "%Y-%m-%d %H:%M:%S%.f"].iter().find_map(|fmt| {
        let t = NaiveDateTime::parse_from_str(s, fmt).ok()?.and_utc();
        Some(t.timestamp() as f64 + f64::from(t.timestamp_subsec_nanos()) * 1e-9)
    })
}

impl TimeFormat {
    fn parse(self, s: &str) -> Option<f64> {
        match self {
            TimeFormat::Epoch => s.parse::<f64>().ok().filter(|t| t.is_finite()),
            TimeFormat::Iso8601 => parse_iso(s),
        }
    }

    fn detect(s: &str) -> Option<TimeFormat> {
        [TimeFormat::Epoch, TimeFormat::Iso8601].into_iter().find(|f| f.parse(s).is_some())
    }
}

/// Maps vehicle names to dense ids in order of first appearance.
#[derive(Debug, Clone, Default)]
pub struct VehicleNames {
    ids: HashMap<String, u32>,
    names: Vec<String>,
}

impl VehicleNames {
    pub fn intern(&mut self, name: &str) -> VehicleId {
        if let Some(&id) = self.ids.get(name) {
            return VehicleId(id);
        }
        let id = self.names.len() as u32;
        self.ids.insert(name.to_string(), id);
        self.names.push(name.to_string());
        VehicleId(id)
    }

    pub fn name(&self, id: VehicleId) -> Option<&str> {
        self.names.get(id.0 as usize).map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }
}

/// Streaming row reader.
pub struct PointReader<R: Read> {
    records: csv::StringRecordsIntoIter<R>,
    format: Option<TimeFormat>,
    pub names: VehicleNames,
    pub malformed: usize,
    pub first_malformed_line: Option<u64>,
}

impl<R: Read> PointReader<R> {
    pub fn new(input: R) -> Result<Self> {
        let mut reader =
            csv::ReaderBuilder::new().has_headers(true).flexible(true).trim(csv::Trim::All).from_reader(input);
        let header = reader.headers()?.clone();
        if header.is_empty() {
            bail!("line 1: missing header row");
        }
        let got: Vec<String> = header.iter().map(str::to_ascii_lowercase).collect();
        if got != COLUMNS {
            bail!("line 1: expected header `{}`, got `{}`", COLUMNS.join(","), got.join(","));
        }
        Ok(PointReader {
            records: reader.into_records(),
            format: None,
            names: VehicleNames::default(),
            malformed: 0,
            first_malformed_line: None,
        })
    }

    pub fn time_format(&self) -> Option<TimeFormat> {
        self.format
    }

    fn parse(&mut self, rec: &csv::StringRecord) -> Option<GpsPoint> {
        if rec.len() != COLUMNS.len() || rec[0].is_empty() {
            return None;
        }
        let format = match self.format {
            Some(f) => f,
            None => TimeFormat::detect(&rec[1])?,
        };
        let timestamp = format.parse(&rec[1])?;
        let location = LatLon::new(rec[2].parse().ok()?, rec[3].parse().ok()?).ok()?;
        let speed_kmh = match &rec[4] {
            "" => None,
            s => Some(s.parse::<f64>().ok().filter(|v| v.is_finite() && *v >= 0.0)?),
        };
        let heading = match &rec[5] {
            "" => None,
            s => Some(Heading::new(s.parse().ok()?).ok()?),
        };
        self.format = Some(format);
        let vehicle_id = self.names.intern(&rec[0]);
        Some(GpsPoint { vehicle_id, location, heading, timestamp, speed_kmh })
    }
}

impl<R: Read> Iterator for PointReader<R> {
    type Item = Result<GpsPoint>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            let rec = match self.records.next()? {
                Ok(rec) => rec,
                Err(e) => {
                    if let csv::ErrorKind::Io(_) = e.kind() {
                        return Some(Err(e.into()));
                    }
                    self.malformed += 1;
                    continue;
                }
            };
            match self.parse(&rec) {
                Some(p) => return Some(Ok(p)),
                None => {
                    self.malformed += 1;
                    self.first_malformed_line.get_or_insert(rec.position().map_or(0, |p| p.line()));
                }
            }
        }
    }
}

/// All valid rows of a file, in file order.
pub struct ParsedPoints {
    pub points: Vec<GpsPoint>,
    pub names: VehicleNames,
    pub malformed: usize,
    pub first_malformed_line: Option<u64>,
}

pub fn read_points(input: impl Read) -> Result<ParsedPoints> {
    let mut reader = PointReader::new(input)?;
    let mut points = Vec::new();
    for p in reader.by_ref() {
        points.push(p?);
    }
    Ok(ParsedPoints {
        points,
        names: reader.names,
        malformed: reader.malformed,
        first_malformed_line: reader.first_malformed_line,
    })
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| format!("{x:.3}"))
}

/// Writes trajectories in the same CSV layout; vehicles are named by their
/// numeric id.
pub fn write_trajectories(out: impl Write, trajectories: &[Trajectory]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(COLUMNS)?;
    for tr in trajectories {
        for p in &tr.points {
            w.write_record([
                p.vehicle_id.0.to_string(),
                format!("{:.3}", p.timestamp),
                format!("{:.9}", p.location.lat),
                format!("{:.9}", p.location.lon),
                opt(p.speed_kmh),
                opt(p.heading.map(Heading::degrees)),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}
