//! Holes-and-marbles map comparison.
//!
//! Both maps are sampled at a fixed spacing along every edge: samples on the
//! inferred map are marbles, samples on the ground truth are holes. GEO
//! counts marbles that fall near some hole (precision) and holes near some
//! marble (recall). TOPO repeats that comparison on the sets reachable from
//! matched random start points, so it also penalizes missing or extra
//! connections.

use alloc::collections::BTreeSet;
use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Ordering;
use core::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::geo::{angle_distance, initial_bearing, meters_per_degree, vincenty_distance, Heading, LatLon, LocalFrame};
use crate::graph::{Adjacency, PathSearch, RoadGraph};
use crate::index::{FrozenGrid, APPROX_SLACK};
use crate::ingest::{positive, ConfigError, Trajectory};

#[derive(Debug, Clone, PartialEq)]
pub struct EvalConfig {
    /// Distance between consecutive samples along an edge (meters).
    pub sample_spacing: f64,
    pub matching_thresholds: Vec<f64>,
    /// Graph-distance radius of a TOPO reachable set (meters).
    pub topo_radius: f64,
    pub topo_samples: usize,
    /// A TOPO start marble must have a hole this close (meters)...
    pub start_match_distance: f64,
    /// ...with a heading within this many degrees.
    pub start_angle_tolerance: f64,
    /// Draws allowed per TOPO sample before it is skipped.
    pub max_start_draws: usize,
    /// A truth edge counts as driven when a trajectory point lies this close to it (meters)...
    pub visit_distance: f64,
    /// ...heading along it within this many degrees.
    pub visit_angle_tolerance: f64,
    pub rng_seed: u64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            sample_spacing: 5.0,
            matching_thresholds: vec![5.0, 10.0, 15.0, 20.0, 25.0, 30.0],
            topo_radius: 2000.0,
            topo_samples: 200,
            start_match_distance: 1.0,
            start_angle_tolerance: 10.0,
            max_start_draws: 1000,
            visit_distance: 30.0,
            visit_angle_tolerance: 45.0,
            rng_seed: 0,
        }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        positive("sample_spacing", self.sample_spacing)?;
        if self.matching_thresholds.is_empty() {
            return Err(ConfigError { field: "matching_thresholds", value: 0.0, requirement: "non-empty" });
        }
        for &t in &self.matching_thresholds {
            positive("matching_thresholds", t)?;
        }
        positive("topo_radius", self.topo_radius)?;
        positive("topo_samples", self.topo_samples as f64)?;
        positive("start_match_distance", self.start_match_distance)?;
        positive("start_angle_tolerance", self.start_angle_tolerance)?;
        positive("max_start_draws", self.max_start_draws as f64)?;
        positive("visit_distance", self.visit_distance)?;
        positive("visit_angle_tolerance", self.visit_angle_tolerance)
    }

    fn max_threshold(&self) -> f64 {
        self.matching_thresholds.iter().copied().fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThresholdScore {
    pub threshold: f64,
    pub precision: f64,
    pub recall: f64,
    pub f_score: f64,
}

impl ThresholdScore {
    fn new(threshold: f64, precision: f64, recall: f64) -> Self {
        ThresholdScore { threshold, precision, recall, f_score: f_score(precision, recall) }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct EvalReport {
    /// GEO scores, one per threshold.
    pub geo: Vec<ThresholdScore>,
    /// TOPO scores averaged over the used samples, one per threshold.
    pub topo: Vec<ThresholdScore>,
    pub marbles: usize,
    pub holes: usize,
    pub topo_samples_used: usize,
    pub topo_samples_skipped: usize,
    /// Truth edges removed as never driven.
    pub pruned_truth_edges: usize,
    /// The inferred map had no edges; all scores are 0.
    pub empty_inferred: bool,
    pub seed: u64,
}

impl EvalReport {
    pub fn geo_at(&self, threshold: f64) -> Option<&ThresholdScore> {
        self.geo.iter().find(|s| s.threshold == threshold)
    }

    pub fn topo_at(&self, threshold: f64) -> Option<&ThresholdScore> {
        self.topo.iter().find(|s| s.threshold == threshold)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum EvalError {
    Config(ConfigError),
    EmptyTruth,
    /// Every TOPO sample failed to find a matching start.
    NoStartPairs {
        attempts: usize,
    },
}

impl fmt::Display for EvalError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EvalError::Config(e) => write!(f, "{e}"),
            EvalError::EmptyTruth => write!(f, "ground-truth map has no edges"),
            EvalError::NoStartPairs { attempts } => {
                write!(f, "no matching TOPO start pair in {attempts} samples")
            }
        }
    }
}

impl From<ConfigError> for EvalError {
    fn from(e: ConfigError) -> Self {
        EvalError::Config(e)
    }
}

pub fn f_score(precision: f64, recall: f64) -> f64 {
    if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    }
}

/// A point sampled on a map edge.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sample {
    pub location: LatLon,
    pub heading: Heading,
    /// Index into [`SampledMap::edges`].
    pub edge: u32,
    /// Distance from the edge's tail (meters).
    pub offset: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SampledEdge {
    pub from: u32,
    pub to: u32,
    pub length: f64,
    /// Range of this edge's samples in [`SampledMap::samples`].
    pub first: u32,
    pub count: u32,
}

/// Samples of one map in a canonical order that does not depend on node ids.
#[derive(Debug, Clone, Default)]
pub struct SampledMap {
    pub samples: Vec<Sample>,
    pub edges: Vec<SampledEdge>,
    adjacency: Adjacency,
    /// Sampled edges leaving each node.
    outgoing: Vec<Vec<u32>>,
}

impl SampledMap {
    pub fn new(graph: &RoadGraph, spacing: f64) -> Self {
        let loc = |id: u32| graph.nodes()[id as usize].centroid.location;
        let mut keyed: Vec<((u32, u32), [f64; 4])> = graph
            .edges()
            .map(|(k, _)| {
                let (a, b) = (loc(k.0), loc(k.1));
                (k, [a.lat, a.lon, b.lat, b.lon])
            })
            .collect();
        keyed.sort_by(|x, y| cmp_f64s(&x.1, &y.1).then(x.0.cmp(&y.0)));

        let n = graph.node_count();
        let mut map = SampledMap {
            samples: Vec::new(),
            edges: Vec::with_capacity(keyed.len()),
            adjacency: Adjacency::new(n),
            outgoing: vec![Vec::new(); n],
        };
        for ((u, v), _) in keyed {
            let (a, b) = (loc(u), loc(v));
            let length = vincenty_distance(a, b);
            let heading = initial_bearing(a, b).unwrap_or(graph.nodes()[u as usize].centroid.heading);
            let steps = libm::ceil(length / spacing - 1e-3).max(1.0) as u32;
            let idx = map.edges.len() as u32;
            let first = map.samples.len() as u32;
            for k in 0..=steps {
                let t = k as f64 / steps as f64;
                map.samples.push(Sample { location: a.lerp(b, t), heading, edge: idx, offset: length * t });
            }
            map.edges.push(SampledEdge { from: u, to: v, length, first, count: steps + 1 });
            map.adjacency.add(u, v, length);
            map.outgoing[u as usize].push(idx);
        }
        map
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    fn locations(&self) -> impl Iterator<Item = LatLon> + '_ {
        self.samples.iter().map(|s| s.location)
    }

    /// Samples reachable from `start` within `radius` of travel along the map.
    fn reachable(&self, start: u32, radius: f64, search: &mut PathSearch) -> Vec<u32> {
        let s = self.samples[start as usize];
        let e = self.edges[s.edge as usize];
        let mut out = BTreeSet::new();
        for i in e.first..e.first + e.count {
            let d = self.samples[i as usize].offset - s.offset;
            if d >= 0.0 && d <= radius {
                out.insert(i);
            }
        }
        let reached = search.distances_within(&self.adjacency, &[(e.to, e.length - s.offset)], radius);
        for (node, dist) in reached {
            for &ei in &self.outgoing[node as usize] {
                let oe = self.edges[ei as usize];
                for i in oe.first..oe.first + oe.count {
                    if dist + self.samples[i as usize].offset <= radius {
                        out.insert(i);
                    } else {
                        break;
                    }
                }
            }
        }
        out.into_iter().collect()
    }
}

fn cmp_f64s(a: &[f64], b: &[f64]) -> Ordering {
    a.iter().zip(b).map(|(x, y)| x.total_cmp(y)).find(|o| o.is_ne()).unwrap_or(Ordering::Equal)
}

/// Latitude headroom a grid over `indexed` needs to serve `queries`.
fn lat_margin(queries: impl Iterator<Item = LatLon>, indexed: &[LatLon]) -> f64 {
    let top = |it: &mut dyn Iterator<Item = LatLon>| it.map(|p| p.lat.abs()).fold(0.0, f64::max);
    (top(&mut { queries }) - top(&mut indexed.iter().copied())).max(0.0) + 0.01
}

/// For every sample of `from`, the samples of `to` within `radius` with
/// their distances, nearest first.
fn neighbor_lists(from: &SampledMap, to: &SampledMap, radius: f64) -> Vec<Vec<(u32, f64)>> {
    if to.is_empty() {
        return vec![Vec::new(); from.len()];
    }
    let locations: Vec<LatLon> = to.locations().collect();
    let index = FrozenGrid::new(radius, &locations, lat_margin(from.locations(), &locations));
    from.samples
        .iter()
        .map(|s| {
            let frame = LocalFrame::at(s.location.lat);
            let mut found = Vec::new();
            index.for_each_candidate(s.location, radius, |j| {
                let q = to.samples[j as usize].location;
                if frame.distance(s.location, q) > radius * (1.0 + APPROX_SLACK) {
                    return;
                }
                let d = vincenty_distance(s.location, q);
                if d <= radius {
                    found.push((j, d));
                }
            });
            found.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
            found
        })
        .collect()
}

fn fraction(hit: usize, total: usize) -> f64 {
    if total == 0 {
        0.0
    } else {
        hit as f64 / total as f64
    }
}

/// GEO comparison of an inferred map against ground truth.
pub fn geo_score(inferred: &RoadGraph, truth: &RoadGraph, cfg: &EvalConfig) -> Result<EvalReport, EvalError> {
    cfg.validate()?;
    if truth.edge_count() == 0 {
        return Err(EvalError::EmptyTruth);
    }
    let marbles = SampledMap::new(inferred, cfg.sample_spacing);
    let holes = SampledMap::new(truth, cfg.sample_spacing);
    let mut report = EvalReport {
        marbles: marbles.len(),
        holes: holes.len(),
        empty_inferred: inferred.edge_count() == 0,
        seed: cfg.rng_seed,
        ..EvalReport::default()
    };
    let radius = cfg.max_threshold();
    let nearest = |from: &SampledMap, to: &SampledMap| -> Vec<f64> {
        neighbor_lists(from, to, radius).into_iter().map(|l| l.first().map_or(f64::INFINITY, |x| x.1)).collect()
    };
    let marble_d = nearest(&marbles, &holes);
    let hole_d = nearest(&holes, &marbles);
    for &t in &cfg.matching_thresholds {
        let p = fraction(marble_d.iter().filter(|&&d| d <= t).count(), marble_d.len());
        let r = fraction(hole_d.iter().filter(|&&d| d <= t).count(), hole_d.len());
        report.geo.push(ThresholdScore::new(t, p, r));
    }
    Ok(report)
}

/// Truth with every edge removed that no trajectory point drove along.
pub fn prune_unvisited(truth: &RoadGraph, trajectories: &[Trajectory], cfg: &EvalConfig) -> RoadGraph {
    let sampled = SampledMap::new(truth, cfg.sample_spacing);
    let mut visited = vec![false; sampled.edges.len()];
    if !sampled.is_empty() {
        let reach = cfg.visit_distance + cfg.sample_spacing;
        let locations: Vec<LatLon> = sampled.locations().collect();
        let queries = trajectories.iter().flat_map(|t| t.points.iter().map(|p| p.location));
        let index = FrozenGrid::new(reach, &locations, lat_margin(queries, &locations));
        let loc = |id: u32| truth.nodes()[id as usize].centroid.location;
        for p in trajectories.iter().flat_map(|t| t.points.iter()) {
            index.for_each_candidate(p.location, reach, |j| {
                let s = sampled.samples[j as usize];
                let ei = s.edge as usize;
                if visited[ei] {
                    return;
                }
                if let Some(h) = p.heading {
                    if angle_distance(h, s.heading) > cfg.visit_angle_tolerance {
                        return;
                    }
                }
                let e = sampled.edges[ei];
                if point_segment_distance(p.location, loc(e.from), loc(e.to)) <= cfg.visit_distance {
                    visited[ei] = true;
                }
            });
        }
    }
    let keep: BTreeSet<(u32, u32)> =
        sampled.edges.iter().zip(&visited).filter(|(_, &v)| v).map(|(e, _)| (e.from, e.to)).collect();
    let mut pruned = truth.clone();
    pruned.retain_edges(|k, _| keep.contains(&k));
    pruned
}

/// Distance (meters) from `p` to the segment `a`-`b`, in a local planar
/// frame around `p`.
pub fn point_segment_distance(p: LatLon, a: LatLon, b: LatLon) -> f64 {
    let (mlat, mlon) = meters_per_degree(p.lat);
    let xy = |q: LatLon| ((q.lon - p.lon) * mlon, (q.lat - p.lat) * mlat);
    let (ax, ay) = xy(a);
    let (bx, by) = xy(b);
    let (dx, dy) = (bx - ax, by - ay);
    let len2 = dx * dx + dy * dy;
    let t = if len2 > 0.0 { (-(ax * dx + ay * dy) / len2).clamp(0.0, 1.0) } else { 0.0 };
    let (cx, cy) = (ax + t * dx, ay + t * dy);
    libm::sqrt(cx * cx + cy * cy)
}

/// TOPO comparison. The truth map is first pruned to the edges the
/// trajectories actually drove.
pub fn topo_score(
    inferred: &RoadGraph,
    truth: &RoadGraph,
    trajectories: &[Trajectory],
    cfg: &EvalConfig,
) -> Result<EvalReport, EvalError> {
    cfg.validate()?;
    let pruned = prune_unvisited(truth, trajectories, cfg);
    if pruned.edge_count() == 0 {
        return Err(EvalError::EmptyTruth);
    }
    let marbles = SampledMap::new(inferred, cfg.sample_spacing);
    let holes = SampledMap::new(&pruned, cfg.sample_spacing);
    let mut report = EvalReport {
        marbles: marbles.len(),
        holes: holes.len(),
        pruned_truth_edges: truth.edge_count() - pruned.edge_count(),
        empty_inferred: inferred.edge_count() == 0,
        seed: cfg.rng_seed,
        ..EvalReport::default()
    };
    let thresholds = &cfg.matching_thresholds;
    if marbles.is_empty() {
        report.topo = thresholds.iter().map(|&t| ThresholdScore::new(t, 0.0, 0.0)).collect();
        report.topo_samples_skipped = cfg.topo_samples;
        return Ok(report);
    }

    let radius = cfg.max_threshold().max(cfg.start_match_distance);
    let m2h = neighbor_lists(&marbles, &holes, radius);
    let h2m = neighbor_lists(&holes, &marbles, radius);

    let mut sums = vec![(0.0, 0.0, 0.0); thresholds.len()];
    let mut search = PathSearch::new();
    let mut in_holes = vec![false; holes.len()];
    let mut in_marbles = vec![false; marbles.len()];
    for sample in 0..cfg.topo_samples {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
        rng.set_stream(sample as u64);
        let Some((m0, h0)) = draw_start(&mut rng, &marbles, &holes, &m2h, cfg) else {
            report.topo_samples_skipped += 1;
            continue;
        };
        report.topo_samples_used += 1;
        let rm = marbles.reachable(m0, cfg.topo_radius, &mut search);
        let rh = holes.reachable(h0, cfg.topo_radius, &mut search);
        for &i in &rm {
            in_marbles[i as usize] = true;
        }
        for &i in &rh {
            in_holes[i as usize] = true;
        }
        let nearest_in = |list: &[(u32, f64)], member: &[bool]| {
            list.iter().find(|(j, _)| member[*j as usize]).map_or(f64::INFINITY, |x| x.1)
        };
        let md: Vec<f64> = rm.iter().map(|&i| nearest_in(&m2h[i as usize], &in_holes)).collect();
        let hd: Vec<f64> = rh.iter().map(|&i| nearest_in(&h2m[i as usize], &in_marbles)).collect();
        for (k, &t) in thresholds.iter().enumerate() {
            let p = fraction(md.iter().filter(|&&d| d <= t).count(), md.len());
            let r = fraction(hd.iter().filter(|&&d| d <= t).count(), hd.len());
            sums[k].0 += p;
            sums[k].1 += r;
            sums[k].2 += f_score(p, r);
        }
        for &i in &rm {
            in_marbles[i as usize] = false;
        }
        for &i in &rh {
            in_holes[i as usize] = false;
        }
    }
    if report.topo_samples_used == 0 {
        return Err(EvalError::NoStartPairs { attempts: cfg.topo_samples });
    }
    let n = report.topo_samples_used as f64;
    report.topo = thresholds
        .iter()
        .zip(&sums)
        .map(|(&t, &(p, r, f))| ThresholdScore { threshold: t, precision: p / n, recall: r / n, f_score: f / n })
        .collect();
    Ok(report)
}

/// A random marble and the nearest hole close to it in place and heading.
fn draw_start(
    rng: &mut ChaCha8Rng,
    marbles: &SampledMap,
    holes: &SampledMap,
    m2h: &[Vec<(u32, f64)>],
    cfg: &EvalConfig,
) -> Option<(u32, u32)> {
    for _ in 0..cfg.max_start_draws {
        let m = rng.random_range(0..marbles.len() as u32);
        let heading = marbles.samples[m as usize].heading;
        let hit = m2h[m as usize].iter().find(|&&(h, d)| {
            d <= cfg.start_match_distance
                && angle_distance(heading, holes.samples[h as usize].heading) <= cfg.start_angle_tolerance
        });
        if let Some(&(h, _)) = hit {
            return Some((m, h));
        }
    }
    None
}
