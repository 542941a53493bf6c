//! Streaming map construction.
//!
//! Each consecutive pair of fixes from a vehicle is densified and every
//! resulting point is either absorbed by a nearby node with a compatible
//! heading or becomes a new node. Edges between successive nodes are added
//! only when the map has no path short enough already (an online spanner
//! test), so the graph stays sparse as it grows. Nodes and edges remember
//! when they were last traversed; [`StreamState::mark_stale`] deactivates
//! the ones that went quiet and [`StreamState::resparsify`] re-runs the batch
//! spanner over the active part.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use crate::build::{greedy_spanner, SpannerConfig};
use crate::cluster::ClusterCentroid;
use crate::geo::{
    angle_distance, initial_bearing, vincenty_distance, CircularAccumulator, GpsPoint, Heading, LatLon, VehicleId,
};
use crate::graph::{Adjacency, Edge, Node, PathSearch, RoadGraph};
use crate::index::GridIndex;
use crate::ingest::{densify_count, positive, ConfigError, IngestConfig};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OnlineConfig {
    /// A point joins a node only if it lies closer than this (meters).
    pub clustering_radius: f64,
    /// Spacing of points densified between consecutive fixes (meters).
    pub sampling_rate: f64,
    /// Largest heading disagreement (degrees) for joining a node or drawing an edge.
    pub heading_tolerance: f64,
    pub alpha: f64,
    /// Seconds without traffic after which a node or edge goes inactive.
    pub staleness_horizon: f64,
    /// [`OnlineMapper`] resparsifies after this many pairs; 0 disables.
    pub resparsify_interval: u64,
}

impl Default for OnlineConfig {
    fn default() -> Self {
        OnlineConfig {
            clustering_radius: 20.0,
            sampling_rate: 20.0,
            heading_tolerance: 45.0,
            alpha: core::f64::consts::SQRT_2,
            staleness_horizon: 7.0 * 86_400.0,
            resparsify_interval: 100_000,
        }
    }
}

impl OnlineConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        positive("clustering_radius", self.clustering_radius)?;
        positive("sampling_rate", self.sampling_rate)?;
        if !(self.heading_tolerance > 0.0 && self.heading_tolerance <= 180.0) {
            return Err(ConfigError {
                field: "heading_tolerance",
                value: self.heading_tolerance,
                requirement: "in (0, 180]",
            });
        }
        if !(self.alpha.is_finite() && self.alpha > 1.0) {
            return Err(ConfigError { field: "alpha", value: self.alpha, requirement: "greater than 1" });
        }
        positive("staleness_horizon", self.staleness_horizon)
    }

    fn spanner(&self) -> SpannerConfig {
        SpannerConfig { alpha: self.alpha, ..SpannerConfig::default() }
    }
}

#[derive(Debug, Clone, Copy, Default)]
struct RunningMean {
    lat: f64,
    lon: f64,
    headings: CircularAccumulator,
}

#[derive(Debug, Clone, Copy)]
struct Cursor {
    node: u32,
    point: GpsPoint,
}

/// Mutable map state fed one pair of fixes at a time.
#[derive(Debug, Clone, Default)]
pub struct StreamState {
    graph: RoadGraph,
    means: Vec<RunningMean>,
    index: Option<GridIndex>,
    index_lat_bound: f64,
    cursors: BTreeMap<VehicleId, Cursor>,
    pairs_processed: u64,
    adjacency: Adjacency,
    adjacency_stale: bool,
    search: PathSearch,
}

impl StreamState {
    pub fn new() -> Self {
        Self::default()
    }

    /// Full state including inactive elements.
    pub fn graph(&self) -> &RoadGraph {
        &self.graph
    }

    /// The map as exported: active nodes and edges only.
    pub fn export(&self) -> RoadGraph {
        self.graph.active_subgraph()
    }

    pub fn pairs_processed(&self) -> u64 {
        self.pairs_processed
    }

    /// Node the vehicle's last processed point was assigned to.
    pub fn previous_node(&self, vehicle: VehicleId) -> Option<u32> {
        self.cursors.get(&vehicle).map(|c| c.node)
    }

    /// Forgets the vehicle's position so its next fix starts a fresh path.
    pub fn end_trajectory(&mut self, vehicle: VehicleId) {
        self.cursors.remove(&vehicle);
    }

    /// Consumes two consecutive fixes of one vehicle.
    ///
    /// The first fix is skipped when it is the point this vehicle's previous
    /// pair ended on. Missing headings fall back to the pair's bearing.
    pub fn process_pair(&mut self, first: &GpsPoint, second: &GpsPoint, cfg: &OnlineConfig) {
        self.pairs_processed += 1;
        let bearing = initial_bearing(first.location, second.location).ok();
        let with_heading = |p: &GpsPoint| GpsPoint { heading: p.heading.or(bearing).or(Some(Heading::NORTH)), ..*p };
        let a = with_heading(first);
        let b = with_heading(second);

        let continues = self
            .cursors
            .get(&first.vehicle_id)
            .is_some_and(|c| c.point.timestamp == first.timestamp && c.point.location == first.location);
        if !continues {
            self.absorb(&a, cfg);
        }

        let d = vincenty_distance(a.location, b.location);
        let s = densify_count(d, cfg.sampling_rate);
        let steps = (s + 1) as f64;
        for k in 1..=s {
            let t = k as f64 / steps;
            let p = GpsPoint {
                vehicle_id: a.vehicle_id,
                location: a.location.lerp(b.location, t),
                heading: bearing.or(a.heading),
                timestamp: a.timestamp + (b.timestamp - a.timestamp) * t,
                speed_kmh: match (a.speed_kmh, b.speed_kmh) {
                    (Some(x), Some(y)) => Some(x + (y - x) * t),
                    (x, y) => x.or(y),
                },
            };
            self.absorb(&p, cfg);
        }
        self.absorb(&b, cfg);
    }

    fn ensure_index(&mut self, p: LatLon, cfg: &OnlineConfig) {
        let needs_rebuild = match &self.index {
            None => true,
            Some(_) => p.lat.abs() > self.index_lat_bound,
        };
        if needs_rebuild {
            self.index_lat_bound = (p.lat.abs() + 1.0).max(self.index_lat_bound + 1.0).min(89.0);
            let mut index = GridIndex::new(cfg.clustering_radius, self.index_lat_bound);
            for (i, n) in self.graph.nodes().iter().enumerate() {
                index.insert(i as u32, n.centroid.location);
            }
            self.index = Some(index);
        }
    }

    /// Closest node within the radius whose heading is within tolerance.
    fn find_node(&self, p: &GpsPoint, cfg: &OnlineConfig) -> Option<u32> {
        let index = self.index.as_ref()?;
        let heading = p.heading.unwrap_or_default();
        let mut best: Option<(f64, u32)> = None;
        index.for_each_candidate(p.location, cfg.clustering_radius, |id| {
            let c = &self.graph.nodes()[id as usize].centroid;
            if angle_distance(c.heading, heading) > cfg.heading_tolerance {
                return;
            }
            let d = vincenty_distance(p.location, c.location);
            if d >= cfg.clustering_radius {
                return;
            }
            if best.is_none_or(|(bd, bid)| d < bd || (d == bd && id < bid)) {
                best = Some((d, id));
            }
        });
        best.map(|(_, id)| id)
    }

    fn absorb(&mut self, p: &GpsPoint, cfg: &OnlineConfig) {
        self.ensure_index(p.location, cfg);
        let heading = p.heading.unwrap_or_default();
        let node = match self.find_node(p, cfg) {
            Some(id) => {
                let mean = &mut self.means[id as usize];
                mean.lat += p.location.lat;
                mean.lon += p.location.lon;
                mean.headings.push(heading);
                let n = mean.headings.count() as f64;
                let location = LatLon { lat: mean.lat / n, lon: mean.lon / n };
                let new_heading = mean.headings.mean().map(|m| m.mean).unwrap_or(heading);
                let node = self.graph.node_mut(id).expect("indexed node exists");
                let old = node.centroid.location;
                let c = &mut node.centroid;
                c.location = location;
                c.heading = new_heading;
                c.support += 1;
                c.heading_var = 0.0;
                c.max_speed = c.max_speed.max(p.speed_kmh.unwrap_or(0.0));
                c.last_seen = c.last_seen.max(p.timestamp);
                if !node.active {
                    node.active = true;
                }
                if let Some(index) = self.index.as_mut() {
                    index.relocate(id, old, location);
                }
                id
            }
            None => {
                let id = self.graph.add_node(Node { centroid: ClusterCentroid::from_point(p), active: true });
                let mut mean = RunningMean { lat: p.location.lat, lon: p.location.lon, ..Default::default() };
                mean.headings.push(heading);
                self.means.push(mean);
                self.adjacency.add_node();
                if let Some(index) = self.index.as_mut() {
                    index.insert(id, p.location);
                }
                id
            }
        };

        if let Some(prev) = self.cursors.get(&p.vehicle_id).copied() {
            if prev.node != node {
                self.connect(prev, node, p, cfg);
            }
        }
        self.cursors.insert(p.vehicle_id, Cursor { node, point: *p });
    }

    fn connect(&mut self, prev: Cursor, node: u32, p: &GpsPoint, cfg: &OnlineConfig) {
        let nodes = self.graph.nodes();
        let prev_heading = nodes[prev.node as usize].centroid.heading;
        let node_heading = nodes[node as usize].centroid.heading;
        let direction = initial_bearing(prev.point.location, p.location).ok().or(p.heading).unwrap_or_default();
        if angle_distance(prev_heading, node_heading) > cfg.heading_tolerance
            || angle_distance(prev_heading, direction) > cfg.heading_tolerance
        {
            return;
        }

        if let Some(e) = self.graph.edge_mut(prev.node, node) {
            e.traj_count += 1;
            e.last_seen = e.last_seen.max(p.timestamp);
            if !e.active {
                e.active = true;
                self.adjacency_stale = true;
            }
            return;
        }

        if self.adjacency_stale {
            self.adjacency = self.graph.adjacency(true);
            self.adjacency_stale = false;
        }
        let weight = self.graph.centroid_distance(prev.node, node);
        let limit = cfg.alpha * weight;
        if self.search.distance_within(&self.adjacency, prev.node, node, limit).is_none() {
            let edge = Edge { weight, traj_count: 1, last_seen: p.timestamp, active: true };
            self.graph.insert_edge(prev.node, node, edge).expect("distinct live nodes");
            self.adjacency.add(prev.node, node, weight);
        }
    }

    /// Deactivates nodes and edges last seen before `now - staleness_horizon`.
    /// They stay in the state and come back on their next traversal.
    pub fn mark_stale(&mut self, now: f64, cfg: &OnlineConfig) {
        let cutoff = now - cfg.staleness_horizon;
        for id in 0..self.graph.node_count() as u32 {
            let n = self.graph.node_mut(id).expect("in range");
            if n.centroid.last_seen < cutoff {
                n.active = false;
            }
        }
        let stale: Vec<(u32, u32)> =
            self.graph.edges().filter(|(_, e)| e.active && e.last_seen < cutoff).map(|(k, _)| k).collect();
        for (u, v) in stale {
            if let Some(e) = self.graph.edge_mut(u, v) {
                e.active = false;
            }
        }
        self.adjacency_stale = true;
    }

    /// Re-weights active edges from the current centroids and rebuilds them
    /// as a greedy spanner; dropped edges are deleted.
    pub fn resparsify(&mut self, cfg: &OnlineConfig) {
        let keys: Vec<(u32, u32)> = self.graph.edges().filter(|(_, e)| e.active).map(|(k, _)| k).collect();
        for (u, v) in keys {
            let w = self.graph.centroid_distance(u, v);
            if let Some(e) = self.graph.edge_mut(u, v) {
                e.weight = w;
            }
        }
        self.graph = greedy_spanner(&self.graph, &cfg.spanner());
        self.adjacency = self.graph.adjacency(true);
        self.adjacency_stale = false;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct StreamStats {
    pub points: u64,
    pub pairs: u64,
    /// Fixes at or below the minimum speed.
    pub dropped_slow: u64,
    /// Fixes not later than their predecessor.
    pub dropped_out_of_order: u64,
    /// Trajectory restarts caused by time gaps.
    pub gaps: u64,
    pub resparsifications: u64,
}

/// Turns a stream of fixes (any interleaving of vehicles) into pairs for a
/// [`StreamState`], inferring missing speeds and headings on the way.
#[derive(Debug, Clone)]
pub struct OnlineMapper {
    cfg: OnlineConfig,
    ingest: IngestConfig,
    state: StreamState,
    last: BTreeMap<VehicleId, GpsPoint>,
    stats: StreamStats,
}

impl OnlineMapper {
    pub fn new(cfg: OnlineConfig, ingest: IngestConfig) -> Result<Self, ConfigError> {
        cfg.validate()?;
        ingest.validate()?;
        Ok(OnlineMapper {
            cfg,
            ingest,
            state: StreamState::new(),
            last: BTreeMap::new(),
            stats: StreamStats::default(),
        })
    }

    pub fn state(&self) -> &StreamState {
        &self.state
    }

    pub fn state_mut(&mut self) -> &mut StreamState {
        &mut self.state
    }

    pub fn config(&self) -> &OnlineConfig {
        &self.cfg
    }

    pub fn stats(&self) -> StreamStats {
        self.stats
    }

    /// Feeds one fix; returns whether it completed a pair.
    pub fn push(&mut self, point: GpsPoint) -> bool {
        self.stats.points += 1;
        let vehicle = point.vehicle_id;
        let Some(prev) = self.last.get(&vehicle).copied() else {
            if point.speed_kmh.is_some_and(|s| s <= self.ingest.min_speed_kmh) {
                self.stats.dropped_slow += 1;
                return false;
            }
            self.last.insert(vehicle, point);
            return false;
        };
        let dt = point.timestamp - prev.timestamp;
        if dt <= 0.0 {
            self.stats.dropped_out_of_order += 1;
            return false;
        }
        if dt > self.ingest.new_trajectory_gap {
            self.stats.gaps += 1;
            self.state.end_trajectory(vehicle);
            self.last.remove(&vehicle);
            return self.push_fresh(point);
        }
        let mut point = point;
        if point.speed_kmh.is_none() {
            point.speed_kmh = Some(vincenty_distance(prev.location, point.location) / dt * 3.6);
        }
        if point.speed_kmh.is_some_and(|s| s <= self.ingest.min_speed_kmh) {
            self.stats.dropped_slow += 1;
            return false;
        }
        let bearing = initial_bearing(prev.location, point.location).ok();
        if point.heading.is_none() {
            point.heading = bearing.or(prev.heading);
        }
        let prev =
            GpsPoint { heading: prev.heading.or(bearing), speed_kmh: prev.speed_kmh.or(point.speed_kmh), ..prev };
        self.state.process_pair(&prev, &point, &self.cfg);
        self.last.insert(vehicle, point);
        self.stats.pairs += 1;
        if self.cfg.resparsify_interval > 0 && self.stats.pairs.is_multiple_of(self.cfg.resparsify_interval) {
            self.state.resparsify(&self.cfg);
            self.stats.resparsifications += 1;
        }
        true
    }

    fn push_fresh(&mut self, point: GpsPoint) -> bool {
        // undo the double count from the recursive entry
        self.stats.points -= 1;
        self.push(point)
    }

    /// Stored first fixes keep their original fields; this is the finished map.
    pub fn finish(self) -> (StreamState, StreamStats) {
        (self.state, self.stats)
    }
}
