//! Seed selection, k-means under the location/heading metric, and splitting
//! of clusters whose member headings disagree.

use alloc::vec;
use alloc::vec::Vec;

use crate::geo::{
    angle_distance, combined_distance, heading_variability, CircularAccumulator, GpsPoint, Heading, LatLon, LocalFrame,
    Pose,
};
use crate::index::{FrozenGrid, GridIndex};
use crate::ingest::{positive, ConfigError};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClusterConfig {
    /// Minimum combined distance between seeds, meters.
    pub seed_radius: f64,
    /// Meters charged for a 180° heading disagreement.
    pub theta: f64,
    /// Clusters with a larger heading variability (degrees) are split.
    pub split_threshold: f64,
    /// k-means stops when the cost drops by less than this fraction.
    pub convergence_ratio: f64,
    pub max_iterations: usize,
}

impl Default for ClusterConfig {
    fn default() -> Self {
        ClusterConfig::with_seed_radius(20.0)
    }
}

impl ClusterConfig {
    /// Defaults with `theta = 2 * seed_radius`.
    pub fn with_seed_radius(seed_radius: f64) -> Self {
        ClusterConfig {
            seed_radius,
            theta: 2.0 * seed_radius,
            split_threshold: 10.0,
            convergence_ratio: 1e-4,
            max_iterations: 100,
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        positive("seed_radius", self.seed_radius)?;
        if !(self.theta.is_finite() && self.theta >= 0.0) {
            return Err(ConfigError { field: "theta", value: self.theta, requirement: "non-negative" });
        }
        positive("split_threshold", self.split_threshold)?;
        positive("convergence_ratio", self.convergence_ratio)?;
        positive("max_iterations", self.max_iterations as f64)
    }

    fn cell_size(&self) -> f64 {
        self.seed_radius + self.theta
    }
}

/// A cluster of GPS points; becomes a node of the inferred map.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClusterCentroid {
    pub location: LatLon,
    pub heading: Heading,
    /// Number of member points.
    pub support: u32,
    /// Mean angular deviation of members from `heading`, degrees.
    pub heading_var: f64,
    /// Highest member speed, km/h (0 when no member reports one).
    pub max_speed: f64,
    /// Latest member timestamp.
    pub last_seen: f64,
}

impl ClusterCentroid {
    pub fn pose(&self) -> Pose {
        Pose::new(self.location, self.heading)
    }

    /// A one-member cluster.
    pub fn from_point(p: &GpsPoint) -> Self {
        ClusterCentroid {
            location: p.location,
            heading: p.heading.unwrap_or_default(),
            support: 1,
            heading_var: 0.0,
            max_speed: p.speed_kmh.unwrap_or(0.0),
            last_seen: p.timestamp,
        }
    }
}

/// Centroids plus the cluster index of every input point.
#[derive(Debug, Clone, PartialEq)]
pub struct Clustering {
    pub centroids: Vec<ClusterCentroid>,
    pub assignment: Vec<u32>,
}

impl Clustering {
    /// Member point indices per cluster, in point order.
    pub fn members(&self) -> Vec<Vec<u32>> {
        let mut m = vec![Vec::new(); self.centroids.len()];
        for (i, &c) in self.assignment.iter().enumerate() {
            m[c as usize].push(i as u32);
        }
        m
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansResult {
    pub clustering: Clustering,
    /// Number of centroid update steps.
    pub iterations: usize,
    /// Sum of squared distances after each assignment step that was kept.
    pub cost_history: Vec<f64>,
}

/// Centroid of a non-empty member set: arithmetic lat/lon mean and circular
/// heading mean, plus member statistics.
pub fn summarize(points: &[GpsPoint], members: &[u32]) -> ClusterCentroid {
    debug_assert!(!members.is_empty());
    let mut lat = 0.0;
    let mut lon = 0.0;
    let mut acc = CircularAccumulator::default();
    let mut max_speed = 0.0_f64;
    let mut last_seen = f64::NEG_INFINITY;
    for &i in members {
        let p = &points[i as usize];
        lat += p.location.lat;
        lon += p.location.lon;
        acc.push(p.heading.unwrap_or_default());
        max_speed = max_speed.max(p.speed_kmh.unwrap_or(0.0));
        last_seen = last_seen.max(p.timestamp);
    }
    let n = members.len() as f64;
    let heading = acc.mean().map(|m| m.mean).unwrap_or_default();
    let heading_var =
        heading_variability(members.iter().map(|&i| points[i as usize].heading.unwrap_or_default()), heading);
    ClusterCentroid {
        location: LatLon { lat: lat / n, lon: lon / n },
        heading,
        support: members.len() as u32,
        heading_var,
        max_speed,
        last_seen,
    }
}

/// Sequential scan: a point becomes a seed unless some earlier seed lies
/// within `seed_radius` under the combined metric.
pub fn select_seeds(points: &[GpsPoint], cfg: &ClusterConfig) -> Vec<ClusterCentroid> {
    let mut seeds: Vec<ClusterCentroid> = Vec::new();
    let mut index = GridIndex::for_points(cfg.cell_size(), points.iter().map(|p| p.location), 0.01);
    let slack = 1.0 + crate::index::APPROX_SLACK;
    for p in points {
        let pose = p.pose();
        let frame = LocalFrame::at(p.location.lat);
        let mut covered = false;
        index.for_each_candidate(p.location, cfg.seed_radius, |id| {
            if covered {
                return;
            }
            let s = seeds[id as usize].pose();
            if frame.combined(pose, s, cfg.theta) > cfg.seed_radius * slack {
                return;
            }
            if combined_distance(pose, s, cfg.theta) < cfg.seed_radius {
                covered = true;
            }
        });
        if !covered {
            index.insert(seeds.len() as u32, p.location);
            seeds.push(ClusterCentroid::from_point(p));
        }
    }
    seeds
}

struct Locator {
    index: FrozenGrid,
    poses: Vec<Pose>,
    theta: f64,
}

impl Locator {
    fn new(centroids: &[ClusterCentroid], theta: f64, cell: f64) -> Self {
        let locations: Vec<LatLon> = centroids.iter().map(|c| c.location).collect();
        let index = FrozenGrid::new(cell, &locations, 0.5);
        Locator { index, poses: centroids.iter().map(|c| c.pose()).collect(), theta }
    }

    fn nearest(&self, p: Pose) -> Option<(u32, f64)> {
        let frame = LocalFrame::at(p.location.lat);
        self.index.nearest(
            p.location,
            |id| frame.combined(p, self.poses[id as usize], self.theta),
            |id| combined_distance(p, self.poses[id as usize], self.theta),
        )
    }
}

/// Nearest centroid of every point under the combined metric (ties to the
/// lowest index).
pub fn assign_nearest(points: &[GpsPoint], centroids: &[ClusterCentroid], cfg: &ClusterConfig) -> Vec<(u32, f64)> {
    let locator = Locator::new(centroids, cfg.theta, cfg.cell_size());
    points.iter().map(|p| locator.nearest(p.pose()).expect("at least one centroid")).collect()
}

/// Lloyd iterations from the given seeds.
///
/// Each round assigns points to their nearest centroid and recomputes
/// centroids from the members; empty clusters are dropped. Iteration stops
/// when assignments are stable, when the cost improves by less than
/// `convergence_ratio * cost`, or after `max_iterations` updates. A round
/// that would increase the cost is discarded.
pub fn kmeans(points: &[GpsPoint], seeds: &[ClusterCentroid], cfg: &ClusterConfig) -> KMeansResult {
    let mut centroids: Vec<ClusterCentroid> = seeds.to_vec();
    if points.is_empty() || centroids.is_empty() {
        return KMeansResult {
            clustering: Clustering { centroids: Vec::new(), assignment: Vec::new() },
            iterations: 0,
            cost_history: Vec::new(),
        };
    }
    let mut assignment: Vec<u32> = Vec::new();
    let mut cost_history: Vec<f64> = Vec::new();
    let mut iterations = 0usize;

    loop {
        let nearest = assign_nearest(points, &centroids, cfg);
        let cost: f64 = nearest.iter().map(|&(_, d)| d * d).sum();
        let next: Vec<u32> = nearest.iter().map(|&(c, _)| c).collect();

        if next == assignment {
            break;
        }
        let prev_cost = cost_history.last().copied();
        if let Some(prev) = prev_cost {
            if cost > prev {
                // keep the previous (consistent) centroids and assignment
                break;
            }
        }
        cost_history.push(cost);
        let (c, a) = update_centroids(points, &next, centroids.len());
        centroids = c;
        assignment = a;
        iterations += 1;

        if let Some(prev) = prev_cost {
            if prev - cost < cfg.convergence_ratio * cost {
                break;
            }
        }
        if iterations >= cfg.max_iterations {
            break;
        }
    }

    KMeansResult { clustering: Clustering { centroids, assignment }, iterations, cost_history }
}

/// Recomputes centroids for an assignment over `k` clusters, dropping empty
/// ones and renumbering the rest in order.
fn update_centroids(points: &[GpsPoint], assignment: &[u32], k: usize) -> (Vec<ClusterCentroid>, Vec<u32>) {
    let mut members: Vec<Vec<u32>> = vec![Vec::new(); k];
    for (i, &c) in assignment.iter().enumerate() {
        members[c as usize].push(i as u32);
    }
    let mut remap = vec![u32::MAX; k];
    let mut centroids = Vec::with_capacity(k);
    for (c, m) in members.iter().enumerate() {
        if !m.is_empty() {
            remap[c] = centroids.len() as u32;
            centroids.push(summarize(points, m));
        }
    }
    let assignment = assignment.iter().map(|&c| remap[c as usize]).collect();
    (centroids, assignment)
}

/// Splits every cluster whose heading variability exceeds `split_threshold`
/// in two by 2-means on member headings, repeating on the halves until each
/// is homogeneous or a singleton. Split halves take the place of their parent
/// in the cluster order.
pub fn split_heterogeneous(points: &[GpsPoint], clustering: &Clustering, cfg: &ClusterConfig) -> Clustering {
    let mut groups: Vec<(Vec<u32>, ClusterCentroid)> = Vec::new();
    for members in clustering.members() {
        if members.is_empty() {
            continue;
        }
        let mut stack = vec![members];
        while let Some(m) = stack.pop() {
            let c = summarize(points, &m);
            if m.len() < 2 || c.heading_var <= cfg.split_threshold {
                groups.push((m, c));
                continue;
            }
            let headings: Vec<Heading> = m.iter().map(|&i| points[i as usize].heading.unwrap_or_default()).collect();
            let side = two_means_headings(&headings);
            let (mut a, mut b) = (Vec::new(), Vec::new());
            for (k, &i) in m.iter().enumerate() {
                if side[k] {
                    b.push(i);
                } else {
                    a.push(i);
                }
            }
            stack.push(b);
            stack.push(a);
        }
    }

    let mut assignment = vec![0u32; points.len()];
    let mut centroids = Vec::with_capacity(groups.len());
    for (ci, (members, c)) in groups.into_iter().enumerate() {
        for i in members {
            assignment[i as usize] = ci as u32;
        }
        centroids.push(c);
    }
    Clustering { centroids, assignment }
}

/// Two pairwise-farthest headings under the circle metric (indices into
/// `headings`, first index smallest among ties).
fn farthest_pair(headings: &[Heading]) -> (usize, usize) {
    let mut order: Vec<usize> = (0..headings.len()).collect();
    order.sort_by(|&a, &b| headings[a].degrees().total_cmp(&headings[b].degrees()).then(a.cmp(&b)));
    let sorted: Vec<f64> = order.iter().map(|&i| headings[i].degrees()).collect();
    let n = sorted.len();
    let mut best = (0usize, 0usize, -1.0f64);
    for (i, h) in headings.iter().enumerate() {
        let target = h.reversed().degrees();
        let pos = sorted.partition_point(|&x| x < target);
        for cand in [pos % n, (pos + n - 1) % n] {
            let j = order[cand];
            let d = angle_distance(*h, headings[j]);
            let key = (i.min(j), i.max(j));
            if d > best.2 || (d == best.2 && key < (best.0, best.1)) {
                best = (key.0, key.1, d);
            }
        }
    }
    (best.0, best.1)
}

/// 2-means on the circle. Returns `true` for members of the second group.
/// Both groups are guaranteed non-empty when the input has two distinct
/// headings.
fn two_means_headings(headings: &[Heading]) -> Vec<bool> {
    let (i, j) = farthest_pair(headings);
    let mut centers = [headings[i], headings[j]];
    let assign = |centers: &[Heading; 2]| -> Vec<bool> {
        headings.iter().map(|&h| angle_distance(h, centers[1]) < angle_distance(h, centers[0])).collect()
    };
    let mut side = assign(&centers);
    for _ in 0..100 {
        let mut acc = [CircularAccumulator::default(), CircularAccumulator::default()];
        for (k, &h) in headings.iter().enumerate() {
            acc[side[k] as usize].push(h);
        }
        let (Some(m0), Some(m1)) = (acc[0].mean(), acc[1].mean()) else {
            break;
        };
        centers = [m0.mean, m1.mean];
        let next = assign(&centers);
        if next == side || next.iter().all(|&s| s) || next.iter().all(|&s| !s) {
            break;
        }
        side = next;
    }
    side
}

/// Seeds, k-means and splitting in sequence.
pub fn cluster_points(points: &[GpsPoint], cfg: &ClusterConfig) -> Clustering {
    let seeds = select_seeds(points, cfg);
    let km = kmeans(points, &seeds, cfg);
    split_heterogeneous(points, &km.clustering, cfg)
}
