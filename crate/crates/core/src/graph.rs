//! Directed geometric road graph and bounded shortest-path search.

use alloc::collections::{BTreeMap, BinaryHeap};
use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Ordering;
use core::fmt;

use crate::cluster::ClusterCentroid;
use crate::geo::vincenty_distance;

/// Edges between centroids closer than this get this weight instead.
pub const MIN_EDGE_WEIGHT: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Node {
    pub centroid: ClusterCentroid,
    pub active: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edge {
    /// Meters.
    pub weight: f64,
    /// Number of trajectories (or traversals, when streaming) drawing the edge.
    pub traj_count: u32,
    pub last_seen: f64,
    pub active: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GraphError {
    SelfLoop(u32),
    UnknownNode(u32),
    NonPositiveWeight(f64),
}

impl fmt::Display for GraphError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GraphError::SelfLoop(id) => write!(f, "self-loop on node {id}"),
            GraphError::UnknownNode(id) => write!(f, "edge references unknown node {id}"),
            GraphError::NonPositiveWeight(w) => write!(f, "edge weight {w} is not positive"),
        }
    }
}

/// Nodes are identified by their position in `nodes`; edges are keyed by
/// `(from, to)` and kept in key order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RoadGraph {
    nodes: Vec<Node>,
    edges: BTreeMap<(u32, u32), Edge>,
}

impl RoadGraph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_centroids(centroids: &[ClusterCentroid]) -> Self {
        RoadGraph {
            nodes: centroids.iter().map(|&centroid| Node { centroid, active: true }).collect(),
            edges: BTreeMap::new(),
        }
    }

    pub fn add_node(&mut self, node: Node) -> u32 {
        self.nodes.push(node);
        (self.nodes.len() - 1) as u32
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn node(&self, id: u32) -> Option<&Node> {
        self.nodes.get(id as usize)
    }

    pub fn node_mut(&mut self, id: u32) -> Option<&mut Node> {
        self.nodes.get_mut(id as usize)
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn edges(&self) -> impl Iterator<Item = ((u32, u32), &Edge)> + '_ {
        self.edges.iter().map(|(&k, e)| (k, e))
    }

    pub fn edge(&self, from: u32, to: u32) -> Option<&Edge> {
        self.edges.get(&(from, to))
    }

    pub fn edge_mut(&mut self, from: u32, to: u32) -> Option<&mut Edge> {
        self.edges.get_mut(&(from, to))
    }

    pub fn contains_edge(&self, from: u32, to: u32) -> bool {
        self.edges.contains_key(&(from, to))
    }

    /// Inserts or replaces an edge after checking the graph invariants.
    pub fn insert_edge(&mut self, from: u32, to: u32, edge: Edge) -> Result<Option<Edge>, GraphError> {
        if from == to {
            return Err(GraphError::SelfLoop(from));
        }
        for id in [from, to] {
            if id as usize >= self.nodes.len() {
                return Err(GraphError::UnknownNode(id));
            }
        }
        if edge.weight.is_nan() || edge.weight <= 0.0 {
            return Err(GraphError::NonPositiveWeight(edge.weight));
        }
        Ok(self.edges.insert((from, to), edge))
    }

    pub fn remove_edge(&mut self, from: u32, to: u32) -> Option<Edge> {
        self.edges.remove(&(from, to))
    }

    /// Keeps only edges for which `keep` returns true.
    pub fn retain_edges(&mut self, mut keep: impl FnMut((u32, u32), &Edge) -> bool) {
        self.edges.retain(|&k, e| keep(k, e));
    }

    /// Geodesic distance between two nodes' centroids, floored at
    /// [`MIN_EDGE_WEIGHT`].
    pub fn centroid_distance(&self, from: u32, to: u32) -> f64 {
        let a = self.nodes[from as usize].centroid.location;
        let b = self.nodes[to as usize].centroid.location;
        vincenty_distance(a, b).max(MIN_EDGE_WEIGHT)
    }

    /// Active nodes and the active edges between them, renumbered densely in
    /// id order.
    pub fn active_subgraph(&self) -> RoadGraph {
        let mut remap = vec![u32::MAX; self.nodes.len()];
        let mut out = RoadGraph::new();
        for (i, n) in self.nodes.iter().enumerate() {
            if n.active {
                remap[i] = out.add_node(*n);
            }
        }
        for (&(u, v), e) in &self.edges {
            let (nu, nv) = (remap[u as usize], remap[v as usize]);
            if e.active && nu != u32::MAX && nv != u32::MAX {
                out.edges.insert((nu, nv), *e);
            }
        }
        out
    }

    /// Applies a node permutation: node `i` becomes `perm[i]`.
    pub fn relabel(&self, perm: &[u32]) -> RoadGraph {
        assert_eq!(perm.len(), self.nodes.len());
        let mut nodes = self.nodes.clone();
        for (i, &p) in perm.iter().enumerate() {
            nodes[p as usize] = self.nodes[i];
        }
        let edges = self.edges.iter().map(|(&(u, v), &e)| ((perm[u as usize], perm[v as usize]), e)).collect();
        RoadGraph { nodes, edges }
    }

    pub fn adjacency(&self, active_only: bool) -> Adjacency {
        let mut adj = Adjacency::new(self.nodes.len());
        for (&(u, v), e) in &self.edges {
            if !active_only || e.active {
                adj.add(u, v, e.weight);
            }
        }
        adj
    }
}

/// Out-adjacency lists with edge weights.
#[derive(Debug, Clone, Default)]
pub struct Adjacency {
    out: Vec<Vec<(u32, f64)>>,
}

impl Adjacency {
    pub fn new(nodes: usize) -> Self {
        Adjacency { out: vec![Vec::new(); nodes] }
    }

    pub fn len(&self) -> usize {
        self.out.len()
    }

    pub fn is_empty(&self) -> bool {
        self.out.is_empty()
    }

    pub fn add_node(&mut self) -> u32 {
        self.out.push(Vec::new());
        (self.out.len() - 1) as u32
    }

    pub fn add(&mut self, from: u32, to: u32, weight: f64) {
        self.out[from as usize].push((to, weight));
    }

    pub fn neighbors(&self, node: u32) -> &[(u32, f64)] {
        &self.out[node as usize]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct State {
    dist: f64,
    node: u32,
}

impl Eq for State {}

impl Ord for State {
    fn cmp(&self, other: &Self) -> Ordering {
        other.dist.total_cmp(&self.dist).then_with(|| other.node.cmp(&self.node))
    }
}

impl PartialOrd for State {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Reusable Dijkstra workspace; resets only the entries it touched.
#[derive(Debug, Clone, Default)]
pub struct PathSearch {
    dist: Vec<f64>,
    touched: Vec<u32>,
    heap: BinaryHeap<State>,
}

impl PathSearch {
    pub fn new() -> Self {
        Self::default()
    }

    fn reset(&mut self, n: usize) {
        for &t in &self.touched {
            self.dist[t as usize] = f64::INFINITY;
        }
        self.touched.clear();
        self.heap.clear();
        if self.dist.len() < n {
            self.dist.resize(n, f64::INFINITY);
        }
    }

    fn relax(&mut self, node: u32, d: f64) -> bool {
        let slot = &mut self.dist[node as usize];
        if d < *slot {
            if slot.is_infinite() {
                self.touched.push(node);
            }
            *slot = d;
            self.heap.push(State { dist: d, node });
            true
        } else {
            false
        }
    }

    /// Shortest distance from `source` to `target`, or `None` if it exceeds
    /// `limit` (or `target` is unreachable).
    pub fn distance_within(&mut self, adj: &Adjacency, source: u32, target: u32, limit: f64) -> Option<f64> {
        if source == target {
            return Some(0.0);
        }
        self.reset(adj.len());
        self.relax(source, 0.0);
        while let Some(State { dist, node }) = self.heap.pop() {
            if dist > limit {
                return None;
            }
            if node == target {
                return Some(dist);
            }
            if dist > self.dist[node as usize] {
                continue;
            }
            for &(next, w) in adj.neighbors(node) {
                let nd = dist + w;
                if nd <= limit {
                    self.relax(next, nd);
                }
            }
        }
        None
    }

    /// Distances from every source (seeded with its initial offset) to every
    /// node reachable within `limit`. Unreached nodes are absent.
    pub fn distances_within(&mut self, adj: &Adjacency, sources: &[(u32, f64)], limit: f64) -> BTreeMap<u32, f64> {
        self.reset(adj.len());
        for &(s, d0) in sources {
            if d0 <= limit {
                self.relax(s, d0);
            }
        }
        while let Some(State { dist, node }) = self.heap.pop() {
            if dist > self.dist[node as usize] {
                continue;
            }
            for &(next, w) in adj.neighbors(node) {
                let nd = dist + w;
                if nd <= limit {
                    self.relax(next, nd);
                }
            }
        }
        self.touched.iter().map(|&t| (t, self.dist[t as usize])).collect()
    }

    /// Node sequence of a shortest `source` to `target` path.
    pub fn shortest_path(&mut self, adj: &Adjacency, source: u32, target: u32) -> Option<Vec<u32>> {
        self.reset(adj.len());
        let mut pred: BTreeMap<u32, u32> = BTreeMap::new();
        self.relax(source, 0.0);
        while let Some(State { dist, node }) = self.heap.pop() {
            if node == target {
                break;
            }
            if dist > self.dist[node as usize] {
                continue;
            }
            for &(next, w) in adj.neighbors(node) {
                if self.relax(next, dist + w) {
                    pred.insert(next, node);
                }
            }
        }
        if self.dist[target as usize].is_infinite() {
            return None;
        }
        let mut path = vec![target];
        let mut at = target;
        while at != source {
            at = pred[&at];
            path.push(at);
        }
        path.reverse();
        Some(path)
    }
}
