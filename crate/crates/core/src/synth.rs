//! Synthetic road grids and simulated vehicle traces.

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::cluster::ClusterCentroid;
use crate::geo::{initial_bearing, vincenty_distance, GpsPoint, Heading, LatLon, VehicleId};
use crate::graph::{Edge, Node, PathSearch, RoadGraph};
use crate::ingest::Trajectory;

pub const ARTERIAL_SPEED_KMH: f64 = 70.0;
pub const STREET_SPEED_KMH: f64 = 40.0;
pub const ROUNDABOUT_SPEED_KMH: f64 = 25.0;

/// An orthogonal street grid. Rows run east-west, columns north-south.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub rows: usize,
    pub cols: usize,
    /// Block edge length (meters).
    pub block_length: f64,
    /// Probability that an inner street is two-way. Boundary streets always are.
    pub two_way_fraction: f64,
    /// Replace the central intersection with an eight-node one-way ring.
    pub roundabout: bool,
    /// Location of the south-west corner.
    pub origin: LatLon,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec {
            rows: 5,
            cols: 5,
            block_length: 100.0,
            two_way_fraction: 1.0,
            roundabout: false,
            origin: LatLon { lat: 25.3, lon: 51.5 },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthConfig {
    pub n_trajectories: usize,
    /// Isotropic position noise (meters, one sigma).
    pub noise_sigma: f64,
    /// Heading noise (degrees, one sigma).
    pub heading_noise: f64,
    /// Each trajectory draws its fix spacing uniformly from this range (meters).
    pub spacing_min: f64,
    pub spacing_max: f64,
    /// Seconds between consecutive trajectory start times.
    pub start_interval: f64,
    pub rng_seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_trajectories: 200,
            noise_sigma: 5.0,
            heading_noise: 5.0,
            spacing_min: 20.0,
            spacing_max: 20.0,
            start_interval: 60.0,
            rng_seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum SynthError {
    DegenerateGrid(&'static str),
    InvalidConfig(&'static str),
}

impl fmt::Display for SynthError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SynthError::DegenerateGrid(why) => write!(f, "degenerate grid: {why}"),
            SynthError::InvalidConfig(why) => write!(f, "invalid synthetic config: {why}"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticWorld {
    pub truth: RoadGraph,
    pub trajectories: Vec<Trajectory>,
}

struct GridBuilder {
    graph: RoadGraph,
    speed: BTreeMap<(u32, u32), f64>,
}

impl GridBuilder {
    fn node(&mut self, loc: LatLon) -> u32 {
        self.graph.add_node(Node {
            centroid: ClusterCentroid {
                location: loc,
                heading: Heading::NORTH,
                support: 0,
                heading_var: 0.0,
                max_speed: 0.0,
                last_seen: 0.0,
            },
            active: true,
        })
    }

    fn edge(&mut self, from: u32, to: u32, speed: f64) {
        let weight = self.graph.centroid_distance(from, to);
        self.graph
            .insert_edge(from, to, Edge { weight, traj_count: 0, last_seen: 0.0, active: true })
            .expect("grid edges join distinct nodes");
        self.speed.insert((from, to), speed);
        for id in [from, to] {
            let c = &mut self.graph.node_mut(id).expect("exists").centroid;
            c.max_speed = c.max_speed.max(speed);
        }
    }
}

/// Street direction: both ways, or only toward increasing grid index, or only back.
#[derive(Debug, Clone, Copy, PartialEq)]
enum Flow {
    Both,
    Forward,
    Backward,
}

/// The ground-truth grid and the speed of every edge.
fn build_grid(spec: &GridSpec, rng: &mut ChaCha8Rng) -> Result<GridBuilder, SynthError> {
    if spec.rows < 2 || spec.cols < 2 {
        return Err(SynthError::DegenerateGrid("need at least 2 rows and 2 columns"));
    }
    if !(spec.block_length.is_finite() && spec.block_length > 0.0) {
        return Err(SynthError::DegenerateGrid("block length must be positive"));
    }
    if !(0.0..=1.0).contains(&spec.two_way_fraction) {
        return Err(SynthError::DegenerateGrid("two-way fraction must lie in [0, 1]"));
    }
    if spec.roundabout && (spec.rows < 3 || spec.cols < 3) {
        return Err(SynthError::DegenerateGrid("a roundabout needs an interior intersection"));
    }
    let (rows, cols) = (spec.rows, spec.cols);
    let center = spec.roundabout.then_some((rows / 2, cols / 2));
    let mut b = GridBuilder { graph: RoadGraph::new(), speed: BTreeMap::new() };
    let at = |r: usize, c: usize| spec.origin.offset(c as f64 * spec.block_length, r as f64 * spec.block_length);

    let mut ids = vec![vec![u32::MAX; cols]; rows];
    for (r, row) in ids.iter_mut().enumerate() {
        for (c, id) in row.iter_mut().enumerate() {
            if center != Some((r, c)) {
                *id = b.node(at(r, c));
            }
        }
    }
    // ring nodes at bearings 0, 45, ..., 315
    let mut ring = Vec::new();
    if let Some((r, c)) = center {
        let radius = spec.block_length / 4.0;
        for k in 0..8 {
            let a = (45.0 * k as f64).to_radians();
            ring.push(b.node(at(r, c).offset(radius * libm::sin(a), radius * libm::cos(a))));
        }
        for k in 0..8 {
            b.edge(ring[k], ring[(k + 7) % 8], ROUNDABOUT_SPEED_KMH);
        }
    }

    let flow_of = |boundary: bool, rng: &mut ChaCha8Rng| {
        if boundary || rng.random::<f64>() < spec.two_way_fraction {
            Flow::Both
        } else if rng.random::<bool>() {
            Flow::Forward
        } else {
            Flow::Backward
        }
    };
    let row_flows: Vec<Flow> = (0..rows).map(|r| flow_of(r == 0 || r == rows - 1, rng)).collect();
    let col_flows: Vec<Flow> = (0..cols).map(|c| flow_of(c == 0 || c == cols - 1, rng)).collect();

    // each segment runs from a lower to a higher grid index
    let mut segments = Vec::new();
    for (r, &flow) in row_flows.iter().enumerate() {
        for c in 0..cols - 1 {
            segments.push(((r, c), (r, c + 1), flow, r == 0 || r == rows - 1));
        }
    }
    for (c, &flow) in col_flows.iter().enumerate() {
        for r in 0..rows - 1 {
            segments.push(((r, c), (r + 1, c), flow, c == 0 || c == cols - 1));
        }
    }
    for (lo, hi, flow, boundary) in segments {
        let speed = if boundary { ARTERIAL_SPEED_KMH } else { STREET_SPEED_KMH };
        // entering the ring from a neighbor: the ring node facing that neighbor
        let endpoint = |p: (usize, usize), other: (usize, usize)| -> u32 {
            if center == Some(p) {
                let k = if other.0 > p.0 {
                    0
                } else if other.1 > p.1 {
                    2
                } else if other.0 < p.0 {
                    4
                } else {
                    6
                };
                ring[k]
            } else {
                ids[p.0][p.1]
            }
        };
        let (u, v) = (endpoint(lo, hi), endpoint(hi, lo));
        if flow != Flow::Backward {
            b.edge(u, v, speed);
        }
        if flow != Flow::Forward {
            b.edge(v, u, speed);
        }
    }
    Ok(b)
}

/// Builds a grid and simulates trajectories along random shortest routes.
pub fn generate_synthetic(spec: &GridSpec, cfg: &SynthConfig) -> Result<SyntheticWorld, SynthError> {
    if !(cfg.noise_sigma.is_finite() && cfg.noise_sigma >= 0.0) {
        return Err(SynthError::InvalidConfig("noise sigma must be non-negative"));
    }
    if !(cfg.heading_noise.is_finite() && cfg.heading_noise >= 0.0) {
        return Err(SynthError::InvalidConfig("heading noise must be non-negative"));
    }
    if !(cfg.spacing_min > 0.0 && cfg.spacing_max >= cfg.spacing_min && cfg.spacing_max.is_finite()) {
        return Err(SynthError::InvalidConfig("spacing range must be positive and ordered"));
    }
    if !(cfg.start_interval.is_finite() && cfg.start_interval >= 0.0) {
        return Err(SynthError::InvalidConfig("start interval must be non-negative"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
    let grid = build_grid(spec, &mut rng)?;
    let truth = grid.graph;
    let intersections = (spec.rows * spec.cols - usize::from(spec.roundabout)) as u32;
    let adj = truth.adjacency(false);
    let mut search = PathSearch::new();
    let position = Normal::new(0.0, cfg.noise_sigma).expect("validated sigma");
    let turn = Normal::new(0.0, cfg.heading_noise).expect("validated sigma");

    let mut trajectories = Vec::with_capacity(cfg.n_trajectories);
    for i in 0..cfg.n_trajectories {
        let src = rng.random_range(0..intersections);
        let mut dst = rng.random_range(0..intersections - 1);
        if dst >= src {
            dst += 1;
        }
        let route = search.shortest_path(&adj, src, dst).expect("grid is strongly connected");
        let spacing = if cfg.spacing_max > cfg.spacing_min {
            rng.random_range(cfg.spacing_min..cfg.spacing_max)
        } else {
            cfg.spacing_min
        };
        let vehicle = VehicleId(i as u32);
        let t0 = i as f64 * cfg.start_interval;
        let mut points = Vec::new();
        trace_route(
            &truth,
            &route,
            spacing,
            t0,
            |loc, bearing, speed, t| {
                let loc = loc.offset(position.sample(&mut rng), position.sample(&mut rng));
                let heading = bearing.rotate(turn.sample(&mut rng));
                let speed = speed * rng.random_range(0.9..1.1);
                points.push(GpsPoint::new(vehicle, loc, heading, t, speed));
            },
            &grid.speed,
        );
        trajectories.push(Trajectory::new(vehicle, points));
    }
    Ok(SyntheticWorld { truth, trajectories })
}

/// Walks `route` emitting a fix every `spacing` meters plus one at the end.
fn trace_route(
    graph: &RoadGraph,
    route: &[u32],
    spacing: f64,
    t0: f64,
    mut emit: impl FnMut(LatLon, Heading, f64, f64),
    speed: &BTreeMap<(u32, u32), f64>,
) {
    let loc = |id: u32| graph.nodes()[id as usize].centroid.location;
    let mut next_at = 0.0;
    let mut walked = 0.0;
    let mut t = t0;
    let mut last_emit = 0.0;
    let mut tail = None;
    for w in route.windows(2) {
        let (a, b) = (loc(w[0]), loc(w[1]));
        let len = vincenty_distance(a, b);
        let bearing = initial_bearing(a, b).unwrap_or_default();
        let v = speed.get(&(w[0], w[1])).copied().unwrap_or(STREET_SPEED_KMH);
        while next_at <= walked + len + 1e-3 {
            t += (next_at - last_emit) / (v / 3.6);
            last_emit = next_at;
            emit(a.lerp(b, ((next_at - walked) / len).min(1.0)), bearing, v, t);
            next_at += spacing;
        }
        walked += len;
        tail = Some((b, bearing, v));
    }
    if let Some((b, bearing, v)) = tail {
        if walked - last_emit > 1e-3 {
            t += (walked - last_emit) / (v / 3.6);
            emit(b, bearing, v, t);
        }
    }
}

/// One noiseless trajectory per edge with fixes every `spacing` meters,
/// so that every edge counts as driven.
pub fn edge_sweeps(graph: &RoadGraph, spacing: f64) -> Vec<Trajectory> {
    graph
        .edges()
        .enumerate()
        .map(|(i, ((u, v), _))| {
            let vehicle = VehicleId(i as u32);
            let mut points = Vec::new();
            trace_route(
                graph,
                &[u, v],
                spacing,
                0.0,
                |loc, heading, speed, t| points.push(GpsPoint::new(vehicle, loc, heading, t, speed)),
                &BTreeMap::new(),
            );
            Trajectory::new(vehicle, points)
        })
        .collect()
}
