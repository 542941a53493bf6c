//! Batch map construction: edges from trajectories, spanner sparsification
//! and duplexification of slow roads.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::vec::Vec;
use core::fmt;

use libm::log;

use crate::cluster::{self, ClusterCentroid, ClusterConfig};
use crate::geo::GpsPoint;
use crate::graph::{Adjacency, Edge, PathSearch, RoadGraph};
use crate::ingest::{self, ConfigError, IngestConfig, Trajectory};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpannerConfig {
    /// Allowed stretch, > 1.
    pub alpha: f64,
    /// Edges whose endpoints never saw speeds above this (km/h) get a
    /// reverse twin.
    pub duplex_speed_kmh: f64,
}

impl Default for SpannerConfig {
    fn default() -> Self {
        SpannerConfig { alpha: core::f64::consts::SQRT_2, duplex_speed_kmh: 60.0 }
    }
}

impl SpannerConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(self.alpha.is_finite() && self.alpha > 1.0) {
            return Err(ConfigError { field: "alpha", value: self.alpha, requirement: "greater than 1" });
        }
        ingest::positive("duplex_speed_kmh", self.duplex_speed_kmh)
    }
}

/// Minimum number of trajectories an edge between clusters of the given
/// sizes needs to be kept: `max(1, ln(min(f(u), f(v))) - 1)`.
pub fn spurious_edge_threshold(support_u: u32, support_v: u32) -> f64 {
    let m = support_u.min(support_v).max(1) as f64;
    (log(m) - 1.0).max(1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct EdgeStats {
    /// Distinct directed cluster transitions seen.
    pub drawn: usize,
    /// Transitions dropped by the spurious-edge rule.
    pub rejected: usize,
}

/// Maps each trajectory onto its nearest centroids and records an edge for
/// every change of centroid between consecutive points.
///
/// An edge's count is the number of trajectories that draw it; edges below
/// [`spurious_edge_threshold`] are dropped. Weights are centroid-to-centroid
/// geodesic distances.
pub fn infer_candidate_edges(
    trajectories: &[Trajectory],
    centroids: &[ClusterCentroid],
    cfg: &ClusterConfig,
) -> (RoadGraph, EdgeStats) {
    let mut graph = RoadGraph::from_centroids(centroids);
    if centroids.is_empty() {
        return (graph, EdgeStats::default());
    }
    let all: Vec<GpsPoint> = trajectories.iter().flat_map(|t| t.points.iter().copied()).collect();
    let nearest = cluster::assign_nearest(&all, centroids, cfg);

    let mut counts: BTreeMap<(u32, u32), (u32, f64)> = BTreeMap::new();
    let mut offset = 0usize;
    let mut drawn_here: BTreeSet<(u32, u32)> = BTreeSet::new();
    for tr in trajectories {
        drawn_here.clear();
        let n = tr.points.len();
        for k in 1..n {
            let u = nearest[offset + k - 1].0;
            let v = nearest[offset + k].0;
            if u == v {
                continue;
            }
            let ts = tr.points[k].timestamp;
            let entry = counts.entry((u, v)).or_insert((0, f64::NEG_INFINITY));
            if drawn_here.insert((u, v)) {
                entry.0 += 1;
            }
            entry.1 = entry.1.max(ts);
        }
        offset += n;
    }

    let mut stats = EdgeStats { drawn: counts.len(), rejected: 0 };
    for ((u, v), (count, last_seen)) in counts {
        let threshold = spurious_edge_threshold(centroids[u as usize].support, centroids[v as usize].support);
        if (count as f64) < threshold {
            stats.rejected += 1;
            continue;
        }
        let weight = graph.centroid_distance(u, v);
        graph
            .insert_edge(u, v, Edge { weight, traj_count: count, last_seen, active: true })
            .expect("edge between distinct known nodes");
    }
    (graph, stats)
}

/// Greedy α-spanner over the active edges.
///
/// Edges are examined by increasing weight (ties by key); an edge `(u, v)`
/// of weight `w` is kept iff the spanner built so far has no `u → v` path of
/// length at most `α·w`. Inactive edges are carried over untouched.
pub fn greedy_spanner(graph: &RoadGraph, cfg: &SpannerConfig) -> RoadGraph {
    let mut order: Vec<((u32, u32), Edge)> = graph.edges().filter(|(_, e)| e.active).map(|(k, e)| (k, *e)).collect();
    order.sort_by(|a, b| a.1.weight.total_cmp(&b.1.weight).then(a.0.cmp(&b.0)));

    let mut out = graph.clone();
    out.retain_edges(|_, e| !e.active);
    let mut adj = Adjacency::new(graph.node_count());
    let mut search = PathSearch::new();
    for ((u, v), e) in order {
        let limit = cfg.alpha * e.weight;
        if search.distance_within(&adj, u, v, limit).is_none() {
            adj.add(u, v, e.weight);
            out.insert_edge(u, v, e).expect("edge copied from a valid graph");
        }
    }
    out
}

/// Adds `(v, u)` for every `(u, v)` whose endpoints' maximum observed speed
/// is at most `duplex_speed_kmh`, unless the reverse already exists.
pub fn duplexify(graph: &RoadGraph, cfg: &SpannerConfig) -> RoadGraph {
    let mut out = graph.clone();
    let candidates: Vec<((u32, u32), Edge)> = graph.edges().map(|(k, e)| (k, *e)).collect();
    for ((u, v), e) in candidates {
        if out.contains_edge(v, u) {
            continue;
        }
        let nodes = graph.nodes();
        let top = nodes[u as usize].centroid.max_speed.max(nodes[v as usize].centroid.max_speed);
        if top <= cfg.duplex_speed_kmh {
            out.insert_edge(v, u, Edge { traj_count: 0, ..e }).expect("reverse of a valid edge");
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PipelineConfig {
    pub ingest: IngestConfig,
    pub cluster: ClusterConfig,
    pub spanner: SpannerConfig,
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        self.ingest.validate()?;
        self.cluster.validate()?;
        self.spanner.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Stage {
    Preprocess,
    Densify,
    DistinctPoints,
    SelectSeeds,
    KMeans,
    Split,
    CandidateEdges,
    Spanner,
    Duplexify,
}

impl Stage {
    pub fn name(self) -> &'static str {
        match self {
            Stage::Preprocess => "preprocess",
            Stage::Densify => "densify",
            Stage::DistinctPoints => "distinct-points",
            Stage::SelectSeeds => "select-seeds",
            Stage::KMeans => "kmeans",
            Stage::Split => "split",
            Stage::CandidateEdges => "candidate-edges",
            Stage::Spanner => "spanner",
            Stage::Duplexify => "duplexify",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Hooks for timing or logging pipeline stages. `items` is the stage's
/// output size (points, clusters or edges).
pub trait StageObserver {
    fn started(&mut self, _stage: Stage) {}
    fn finished(&mut self, _stage: Stage, _items: usize) {}
}

impl StageObserver for () {}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct PipelineReport {
    pub input_points: usize,
    /// Trajectories dropped because speed/heading could not be inferred.
    pub dropped_trajectories: usize,
    pub densified_points: usize,
    pub distinct_points: usize,
    pub seeds: usize,
    pub kmeans_iterations: usize,
    pub clusters: usize,
    pub edge_stats: EdgeStats,
    pub candidate_edges: usize,
    pub spanner_edges: usize,
    pub final_edges: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OfflineOutput {
    pub graph: RoadGraph,
    pub report: PipelineReport,
}

/// Unique points by exact location and heading, first occurrence kept.
pub fn distinct_points(trajectories: &[Trajectory]) -> Vec<GpsPoint> {
    let mut seen: BTreeSet<(u64, u64, u64)> = BTreeSet::new();
    let mut out = Vec::new();
    for p in trajectories.iter().flat_map(|t| t.points.iter()) {
        let key =
            (p.location.lat.to_bits(), p.location.lon.to_bits(), p.heading.unwrap_or_default().degrees().to_bits());
        if seen.insert(key) {
            out.push(*p);
        }
    }
    out
}

/// The two-phase batch pipeline: preprocessing, densification, clustering,
/// candidate edges, spanner and duplexification.
pub fn run_offline_pipeline(
    trajectories: &[Trajectory],
    cfg: &PipelineConfig,
    observer: &mut dyn StageObserver,
) -> Result<OfflineOutput, ConfigError> {
    cfg.validate()?;
    let mut report =
        PipelineReport { input_points: trajectories.iter().map(Trajectory::len).sum(), ..Default::default() };

    observer.started(Stage::Preprocess);
    let mut prepared = Vec::with_capacity(trajectories.len());
    for tr in trajectories {
        match ingest::infer_speed_heading(tr) {
            Ok(t) => {
                let t = ingest::filter_slow_points(&t, cfg.ingest.min_speed_kmh);
                if !t.is_empty() {
                    prepared.push(t);
                }
            }
            Err(_) => report.dropped_trajectories += 1,
        }
    }
    observer.finished(Stage::Preprocess, prepared.iter().map(Trajectory::len).sum());

    observer.started(Stage::Densify);
    let dense: Vec<Trajectory> = prepared.iter().map(|t| ingest::densify(t, &cfg.ingest)).collect();
    report.densified_points = dense.iter().map(Trajectory::len).sum();
    observer.finished(Stage::Densify, report.densified_points);

    observer.started(Stage::DistinctPoints);
    let points = distinct_points(&dense);
    report.distinct_points = points.len();
    observer.finished(Stage::DistinctPoints, points.len());

    observer.started(Stage::SelectSeeds);
    let seeds = cluster::select_seeds(&points, &cfg.cluster);
    report.seeds = seeds.len();
    observer.finished(Stage::SelectSeeds, seeds.len());

    observer.started(Stage::KMeans);
    let km = cluster::kmeans(&points, &seeds, &cfg.cluster);
    report.kmeans_iterations = km.iterations;
    observer.finished(Stage::KMeans, km.clustering.centroids.len());

    observer.started(Stage::Split);
    let clustering = cluster::split_heterogeneous(&points, &km.clustering, &cfg.cluster);
    report.clusters = clustering.centroids.len();
    observer.finished(Stage::Split, report.clusters);

    observer.started(Stage::CandidateEdges);
    let (candidates, stats) = infer_candidate_edges(&dense, &clustering.centroids, &cfg.cluster);
    report.edge_stats = stats;
    report.candidate_edges = candidates.edge_count();
    observer.finished(Stage::CandidateEdges, report.candidate_edges);

    observer.started(Stage::Spanner);
    let spanner = greedy_spanner(&candidates, &cfg.spanner);
    report.spanner_edges = spanner.edge_count();
    observer.finished(Stage::Spanner, report.spanner_edges);

    observer.started(Stage::Duplexify);
    let graph = duplexify(&spanner, &cfg.spanner);
    report.final_edges = graph.edge_count();
    observer.finished(Stage::Duplexify, report.final_edges);

    Ok(OfflineOutput { graph, report })
}
