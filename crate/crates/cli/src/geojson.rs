//! GeoJSON export (one LineString per edge) and import of LineString maps.

use std::collections::HashMap;

use anyhow::{anyhow, bail, Context, Result};
use mapinfer_core::cluster::ClusterCentroid;
use mapinfer_core::geo::{initial_bearing, vincenty_distance, Heading, LatLon};
use mapinfer_core::graph::{Edge, Node, RoadGraph, MIN_EDGE_WEIGHT};
use serde_json::{json, Value};

pub fn to_geojson(graph: &RoadGraph) -> String {
    let pos = |id: u32| {
        let l = graph.nodes()[id as usize].centroid.location;
        json!([l.lon, l.lat])
    };
    let features: Vec<Value> = graph
        .edges()
        .map(|((u, v), e)| {
            json!({
                "type": "Feature",
                "geometry": { "type": "LineString", "coordinates": [pos(u), pos(v)] },
                "properties": { "weight": e.weight, "traj_count": e.traj_count, "active": e.active },
            })
        })
        .collect();
    let doc = json!({ "type": "FeatureCollection", "features": features });
    let mut s = serde_json::to_string_pretty(&doc).expect("geojson values are finite");
    s.push('\n');
    s
}

struct Builder {
    graph: RoadGraph,
    ids: HashMap<(u64, u64), u32>,
    bearing_set: Vec<bool>,
}

impl Builder {
    fn node(&mut self, loc: LatLon) -> u32 {
        let key = (loc.lat.to_bits(), loc.lon.to_bits());
        if let Some(&id) = self.ids.get(&key) {
            return id;
        }
        let c = ClusterCentroid {
            location: loc,
            heading: Heading::NORTH,
            support: 1,
            heading_var: 0.0,
            max_speed: 0.0,
            last_seen: 0.0,
        };
        let id = self.graph.add_node(Node { centroid: c, active: true });
        self.ids.insert(key, id);
        self.bearing_set.push(false);
        id
    }

    fn orient(&mut self, id: u32, h: Heading) {
        if !self.bearing_set[id as usize] {
            self.bearing_set[id as usize] = true;
            if let Some(n) = self.graph.node_mut(id) {
                n.centroid.heading = h;
            }
        }
    }
}

fn position(v: &Value) -> Result<LatLon> {
    let arr = v.as_array().ok_or_else(|| anyhow!("position is not an array"))?;
    let num = |i: usize| arr.get(i).and_then(Value::as_f64).ok_or_else(|| anyhow!("position needs [lon, lat]"));
    LatLon::new(num(1)?, num(0)?).map_err(|e| anyhow!("{e}"))
}

fn lines(geometry: &Value) -> Result<Vec<&Vec<Value>>> {
    let coords = &geometry["coordinates"];
    match geometry["type"].as_str() {
        Some("LineString") => Ok(vec![coords.as_array().ok_or_else(|| anyhow!("coordinates is not an array"))?]),
        Some("MultiLineString") => coords
            .as_array()
            .ok_or_else(|| anyhow!("coordinates is not an array"))?
            .iter()
            .map(|l| l.as_array().ok_or_else(|| anyhow!("line is not an array")))
            .collect(),
        Some(other) => bail!("unsupported geometry type `{other}`"),
        None => bail!("geometry has no type"),
    }
}

/// Reads a FeatureCollection of (Multi)LineStrings as a directed map. Each
/// line runs in coordinate order; shared coordinates become shared nodes.
/// A two-point line keeps its `weight` property when present; otherwise
/// segments are weighted by geodesic length.
pub fn from_geojson(text: &str) -> Result<RoadGraph> {
    let doc: Value = serde_json::from_str(text).context("invalid JSON")?;
    if doc["type"] != "FeatureCollection" {
        bail!("expected a FeatureCollection");
    }
    let features = doc["features"].as_array().ok_or_else(|| anyhow!("missing features array"))?;
    let mut b = Builder { graph: RoadGraph::new(), ids: HashMap::new(), bearing_set: Vec::new() };
    for (fi, feature) in features.iter().enumerate() {
        let ctx = || format!("feature {fi}");
        let props = &feature["properties"];
        let traj_count = props["traj_count"].as_u64().map_or(1, |c| c.min(u32::MAX as u64) as u32);
        let active = props["active"].as_bool().unwrap_or(true);
        for line in lines(&feature["geometry"]).with_context(ctx)? {
            let pts = line.iter().map(position).collect::<Result<Vec<_>>>().with_context(ctx)?;
            if pts.len() < 2 {
                return Err(anyhow!("line has fewer than two positions")).with_context(ctx);
            }
            let given = props["weight"].as_f64().filter(|w| pts.len() == 2 && w.is_finite() && *w > 0.0);
            for w in pts.windows(2) {
                let (u, v) = (b.node(w[0]), b.node(w[1]));
                if u == v || b.graph.contains_edge(u, v) {
                    continue;
                }
                if let Ok(h) = initial_bearing(w[0], w[1]) {
                    b.orient(u, h);
                    b.orient(v, h);
                }
                let weight = given.unwrap_or_else(|| vincenty_distance(w[0], w[1]).max(MIN_EDGE_WEIGHT));
                b.graph
                    .insert_edge(u, v, Edge { weight, traj_count, last_seen: 0.0, active })
                    .map_err(|e| anyhow!("{e}"))
                    .with_context(ctx)?;
            }
        }
    }
    Ok(b.graph)
}

#[cfg(test)]
mod tests {
    use super::*;
    use mapinfer_core::geo::angle_distance;

    fn square() -> RoadGraph {
        let o = LatLon::new(25.3, 51.5).unwrap();
        let corners = [o, o.offset(100.0, 0.0), o.offset(100.0, 100.0)];
        let mut g = RoadGraph::new();
        for c in corners {
            g.add_node(Node {
                centroid: ClusterCentroid {
                    location: c,
                    heading: Heading::NORTH,
                    support: 1,
                    heading_var: 0.0,
                    max_speed: 0.0,
                    last_seen: 0.0,
                },
                active: true,
            });
        }
        for (u, v) in [(0, 1), (1, 2), (2, 1)] {
            let weight = g.centroid_distance(u, v);
            g.insert_edge(u, v, Edge { weight, traj_count: 2, last_seen: 0.0, active: true }).unwrap();
        }
        g
    }

    #[test]
    fn export_has_one_feature_per_edge() {
        let doc: Value = serde_json::from_str(&to_geojson(&square())).unwrap();
        let features = doc["features"].as_array().unwrap();
        assert_eq!(features.len(), 3);
        assert_eq!(features[0]["geometry"]["type"], "LineString");
        assert_eq!(features[0]["properties"]["traj_count"], 2);
        assert_eq!(features[0]["properties"]["active"], true);
    }

    #[test]
    fn import_recovers_topology_and_weights() {
        let g = square();
        let back = from_geojson(&to_geojson(&g)).unwrap();
        assert_eq!(back.node_count(), 3);
        assert_eq!(back.edge_count(), 3);
        for ((u, v), e) in g.edges() {
            let f = back.edge(u, v).unwrap();
            assert!((f.weight - e.weight).abs() < 1e-9);
            assert_eq!(f.traj_count, 2);
        }
        let east = Heading::new(90.0).unwrap();
        assert!(angle_distance(back.nodes()[0].centroid.heading, east) < 0.1);
    }

    #[test]
    fn polylines_split_into_segments() {
        let text = r#"{"type":"FeatureCollection","features":[
            {"type":"Feature","properties":{},"geometry":{"type":"LineString",
             "coordinates":[[51.5,25.3],[51.501,25.3],[51.501,25.301]]}}]}"#;
        let g = from_geojson(text).unwrap();
        assert_eq!((g.node_count(), g.edge_count()), (3, 2));
        assert!(
            (g.edge(0, 1).unwrap().weight
                - vincenty_distance(g.nodes()[0].centroid.location, g.nodes()[1].centroid.location))
            .abs()
                < 1e-9
        );
    }

    #[test]
    fn bad_features_are_named() {
        let text = r#"{"type":"FeatureCollection","features":[
            {"type":"Feature","geometry":{"type":"LineString","coordinates":[[51.5,25.3],[51.5,25.31]]}},
            {"type":"Feature","geometry":{"type":"Point","coordinates":[51.5,25.3]}}]}"#;
        let err = format!("{:#}", from_geojson(text).unwrap_err());
        assert!(err.contains("feature 1"), "{err}");
        assert!(from_geojson("{").is_err());
    }
}
