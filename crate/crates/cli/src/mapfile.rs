//! Plain-text edge-list map format.
//!
//! ```text
//! # kharita-map v1
//! N <id> <lat> <lon> <heading_deg> <support> <max_speed_kmh> <last_seen_epoch> <active:0|1>
//! E <from> <to> <weight_m> <traj_count> <last_seen_epoch> <active:0|1>
//! ```
//!
//! Floats carry nine decimals. Nodes appear in id order, edges sorted by
//! `(from, to)`, so equal graphs serialize to equal bytes.

use std::fmt::Write as _;
use std::str::FromStr;

use mapinfer_core::cluster::ClusterCentroid;
use mapinfer_core::geo::{Heading, LatLon};
use mapinfer_core::graph::{Edge, Node, RoadGraph};
use thiserror::Error;

pub const HEADER: &str = "# kharita-map v1";

#[derive(Debug, Error, PartialEq)]
#[error("line {line}: {message}")]
pub struct MapFormatError {
    pub line: usize,
    pub message: String,
}

fn flag(b: bool) -> u8 {
    u8::from(b)
}

pub fn write_map(graph: &RoadGraph) -> String {
    let mut out = String::with_capacity(64 * (graph.node_count() + graph.edge_count()) + 32);
    out.push_str(HEADER);
    out.push('\n');
    for (id, n) in graph.nodes().iter().enumerate() {
        let c = &n.centroid;
        let _ = writeln!(
            out,
            "N {id} {:.9} {:.9} {:.9} {} {:.9} {:.9} {}",
            c.location.lat,
            c.location.lon,
            c.heading.degrees(),
            c.support,
            c.max_speed,
            c.last_seen,
            flag(n.active)
        );
    }
    for ((u, v), e) in graph.edges() {
        let _ = writeln!(out, "E {u} {v} {:.9} {} {:.9} {}", e.weight, e.traj_count, e.last_seen, flag(e.active));
    }
    out
}

struct Fields<'a> {
    line: usize,
    parts: std::str::SplitAsciiWhitespace<'a>,
}

impl<'a> Fields<'a> {
    fn err(&self, message: impl Into<String>) -> MapFormatError {
        MapFormatError { line: self.line, message: message.into() }
    }

    fn next<T: FromStr>(&mut self, name: &str) -> Result<T, MapFormatError> {
        let raw = self.parts.next().ok_or_else(|| self.err(format!("missing field `{name}`")))?;
        raw.parse().map_err(|_| self.err(format!("invalid {name} `{raw}`")))
    }

    fn float(&mut self, name: &str) -> Result<f64, MapFormatError> {
        let v: f64 = self.next(name)?;
        if v.is_finite() {
            Ok(v)
        } else {
            Err(self.err(format!("{name} is not finite")))
        }
    }

    fn active(&mut self) -> Result<bool, MapFormatError> {
        match self.next::<String>("active")?.as_str() {
            "0" => Ok(false),
            "1" => Ok(true),
            other => Err(self.err(format!("active must be 0 or 1, got `{other}`"))),
        }
    }

    fn done(&mut self) -> Result<(), MapFormatError> {
        match self.parts.next() {
            None => Ok(()),
            Some(extra) => Err(self.err(format!("unexpected trailing field `{extra}`"))),
        }
    }
}

pub fn read_map(text: &str) -> Result<RoadGraph, MapFormatError> {
    let mut graph = RoadGraph::new();
    let mut saw_header = false;
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let trimmed = raw.trim();
        if !saw_header {
            if trimmed != HEADER {
                return Err(MapFormatError { line, message: format!("expected header `{HEADER}`") });
            }
            saw_header = true;
            continue;
        }
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let mut f = Fields { line, parts: trimmed.split_ascii_whitespace() };
        match f.next::<String>("record type")?.as_str() {
            "N" => {
                let id: u32 = f.next("node id")?;
                if id as usize != graph.node_count() {
                    return Err(f.err(format!("node id {id} out of sequence, expected {}", graph.node_count())));
                }
                let lat = f.float("lat")?;
                let lon = f.float("lon")?;
                let location = LatLon::new(lat, lon).map_err(|e| f.err(e.to_string()))?;
                let heading = Heading::new(f.float("heading")?).map_err(|e| f.err(e.to_string()))?;
                let support = f.next("support")?;
                let max_speed = f.float("max_speed")?;
                let last_seen = f.float("last_seen")?;
                let active = f.active()?;
                f.done()?;
                graph.add_node(Node {
                    centroid: ClusterCentroid { location, heading, support, heading_var: 0.0, max_speed, last_seen },
                    active,
                });
            }
            "E" => {
                let from: u32 = f.next("from")?;
                let to: u32 = f.next("to")?;
                let weight = f.float("weight")?;
                let traj_count = f.next("traj_count")?;
                let last_seen = f.float("last_seen")?;
                let active = f.active()?;
                f.done()?;
                if graph.contains_edge(from, to) {
                    return Err(f.err(format!("duplicate edge {from} -> {to}")));
                }
                graph
                    .insert_edge(from, to, Edge { weight, traj_count, last_seen, active })
                    .map_err(|e| f.err(e.to_string()))?;
            }
            other => return Err(f.err(format!("unknown record type `{other}`"))),
        }
    }
    if !saw_header {
        return Err(MapFormatError { line: 1, message: format!("expected header `{HEADER}`") });
    }
    Ok(graph)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> RoadGraph {
        let mut g = RoadGraph::new();
        for (i, lat) in [25.3, 25.301, 25.302].into_iter().enumerate() {
            g.add_node(Node {
                centroid: ClusterCentroid {
                    location: LatLon::new(lat, 51.5).unwrap(),
                    heading: Heading::new(i as f64 * 10.0).unwrap(),
                    support: 3,
                    heading_var: 0.0,
                    max_speed: 41.25,
                    last_seen: 1_700_000_000.5,
                },
                active: i != 2,
            });
        }
        g.insert_edge(0, 1, Edge { weight: 110.7, traj_count: 2, last_seen: 5.0, active: true }).unwrap();
        g.insert_edge(1, 2, Edge { weight: 110.8, traj_count: 1, last_seen: 6.0, active: false }).unwrap();
        g
    }

    #[test]
    fn layout_is_fixed() {
        let text = write_map(&sample());
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], HEADER);
        assert_eq!(lines[1], "N 0 25.300000000 51.500000000 0.000000000 3 41.250000000 1700000000.500000000 1");
        assert_eq!(lines[4], "E 0 1 110.700000000 2 5.000000000 1");
        assert_eq!(lines[5], "E 1 2 110.800000000 1 6.000000000 0");
    }

    #[test]
    fn round_trip_is_exact_at_nine_decimals() {
        let g = sample();
        let back = read_map(&write_map(&g)).unwrap();
        assert_eq!(write_map(&back), write_map(&g));
        assert_eq!(back.node_count(), 3);
        assert!(!back.nodes()[2].active);
        assert!(!back.edge(1, 2).unwrap().active);
    }

    #[test]
    fn errors_name_the_line() {
        let bad = format!("{HEADER}\nN 0 25 51 0 1 0 0 1\nE 0 7 1.0 1 0 1\n");
        assert_eq!(read_map(&bad).unwrap_err().line, 3);
        let bad = format!("{HEADER}\n\nN 1 25 51 0 1 0 0 1\n");
        assert_eq!(read_map(&bad).unwrap_err().line, 3);
        let bad = format!("{HEADER}\nN 0 25 51 0 1 0 0 2\n");
        assert!(read_map(&bad).unwrap_err().message.contains("active"));
        assert_eq!(read_map("N 0 25 51 0 1 0 0 1\n").unwrap_err().line, 1);
        assert_eq!(read_map("").unwrap_err().line, 1);
    }

    #[test]
    fn rejects_self_loops_and_duplicates() {
        let base = format!("{HEADER}\nN 0 25 51 0 1 0 0 1\nN 1 25.001 51 0 1 0 0 1\n");
        assert_eq!(read_map(&format!("{base}E 0 0 1 1 0 1\n")).unwrap_err().line, 4);
        assert_eq!(read_map(&format!("{base}E 0 1 1 1 0 1\nE 0 1 2 1 0 1\n")).unwrap_err().line, 5);
    }
}
