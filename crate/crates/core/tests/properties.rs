use mapinfer_core::build::{greedy_spanner, infer_candidate_edges, spurious_edge_threshold, SpannerConfig};
use mapinfer_core::cluster::{kmeans, select_seeds, ClusterCentroid, ClusterConfig};
use mapinfer_core::eval::{geo_score, EvalConfig};
use mapinfer_core::geo::{
    angle_distance, circular_mean, combined_distance, vincenty_distance, GpsPoint, Heading, LatLon, Pose, VehicleId,
};
use mapinfer_core::graph::{Edge, Node, RoadGraph};
use mapinfer_core::ingest::{densify, densify_count, IngestConfig, Trajectory};
use mapinfer_core::online::{OnlineConfig, StreamState};
use proptest::prelude::*;

fn origin() -> LatLon {
    LatLon::new(25.3, 51.5).unwrap()
}

fn pose_strategy(extent: f64) -> impl Strategy<Value = Pose> {
    (0.0..extent, 0.0..extent, 0.0..360.0f64)
        .prop_map(|(e, n, h)| Pose::new(origin().offset(e, n), Heading::new(h).unwrap()))
}

fn point(p: Pose, t: f64) -> GpsPoint {
    GpsPoint::new(VehicleId(0), p.location, p.heading, t, 30.0)
}

fn node(loc: LatLon) -> Node {
    Node {
        centroid: ClusterCentroid {
            location: loc,
            heading: Heading::NORTH,
            support: 1,
            heading_var: 0.0,
            max_speed: 0.0,
            last_seen: 0.0,
        },
        active: true,
    }
}

fn floyd(g: &RoadGraph) -> Vec<Vec<f64>> {
    let n = g.node_count();
    let mut d = vec![vec![f64::INFINITY; n]; n];
    for (i, row) in d.iter_mut().enumerate() {
        row[i] = 0.0;
    }
    for ((u, v), e) in g.edges() {
        d[u as usize][v as usize] = d[u as usize][v as usize].min(e.weight);
    }
    for k in 0..n {
        for i in 0..n {
            for j in 0..n {
                let via = d[i][k] + d[k][j];
                if via < d[i][j] {
                    d[i][j] = via;
                }
            }
        }
    }
    d
}

fn graph_strategy() -> impl Strategy<Value = RoadGraph> {
    (2usize..14)
        .prop_flat_map(|n| {
            (
                prop::collection::vec((0.0..800.0f64, 0.0..800.0f64), n),
                prop::collection::vec((0..n as u32, 0..n as u32, 1.0..1.6f64), 0..60),
            )
        })
        .prop_map(|(locs, edges)| {
            let mut g = RoadGraph::new();
            for (e, n) in locs {
                g.add_node(node(origin().offset(e, n)));
            }
            for (u, v, stretch) in edges {
                if u != v {
                    let w = g.centroid_distance(u, v) * stretch;
                    g.insert_edge(u, v, Edge { weight: w, traj_count: 1, last_seen: 0.0, active: true }).unwrap();
                }
            }
            g
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn combined_distance_is_a_metric(x in pose_strategy(5000.0), y in pose_strategy(5000.0), z in pose_strategy(5000.0), theta in 0.0..200.0f64) {
        let d = |a, b| combined_distance(a, b, theta);
        prop_assert_eq!(d(x, x), 0.0);
        prop_assert_eq!(d(x, y), d(y, x));
        prop_assert!(d(x, y) >= 0.0);
        prop_assert!(d(x, y) + d(y, z) - d(x, z) >= -1e-6);
    }

    #[test]
    fn circular_mean_rotates_with_its_inputs(hs in prop::collection::vec(0.0..360.0f64, 1..20), shift in 0.0..360.0f64) {
        let base: Vec<Heading> = hs.iter().map(|&h| Heading::new(h).unwrap()).collect();
        let m = circular_mean(base.iter().copied()).unwrap();
        prop_assume!(!m.degenerate);
        let resultant = {
            let (s, c) = base.iter().fold((0.0, 0.0), |(s, c), h| {
                let r = h.degrees().to_radians();
                (s + r.sin(), c + r.cos())
            });
            (s * s + c * c).sqrt() / base.len() as f64
        };
        // nearly cancelling sets leave the direction ill-conditioned
        prop_assume!(resultant > 1e-3);
        let rotated = circular_mean(base.iter().map(|h| h.rotate(shift))).unwrap();
        prop_assert!(angle_distance(rotated.mean, m.mean.rotate(shift)) < 1e-6);
    }

    #[test]
    fn seeds_are_packed_and_cover(poses in prop::collection::vec(pose_strategy(300.0), 1..120)) {
        let cfg = ClusterConfig::default();
        let points: Vec<GpsPoint> = poses.iter().enumerate().map(|(i, &p)| point(p, i as f64)).collect();
        let seeds = select_seeds(&points, &cfg);
        for (i, a) in seeds.iter().enumerate() {
            for b in &seeds[i + 1..] {
                prop_assert!(combined_distance(a.pose(), b.pose(), cfg.theta) >= cfg.seed_radius);
            }
        }
        for p in &points {
            prop_assert!(seeds.iter().any(|s| combined_distance(p.pose(), s.pose(), cfg.theta) < cfg.seed_radius));
        }
    }

    #[test]
    fn kmeans_cost_never_rises(poses in prop::collection::vec(pose_strategy(400.0), 1..150)) {
        let cfg = ClusterConfig::default();
        let points: Vec<GpsPoint> = poses.iter().enumerate().map(|(i, &p)| point(p, i as f64)).collect();
        let result = kmeans(&points, &select_seeds(&points, &cfg), &cfg);
        for w in result.cost_history.windows(2) {
            prop_assert!(w[1] <= w[0]);
        }
        prop_assert_eq!(result.clustering.assignment.len(), points.len());
        prop_assert!(result.clustering.centroids.iter().all(|c| c.support >= 1));
    }

    #[test]
    fn spanner_keeps_stretch_and_reachability(g in graph_strategy(), alpha in 1.05..3.0f64) {
        let h = greedy_spanner(&g, &SpannerConfig { alpha, ..SpannerConfig::default() });
        prop_assert_eq!(h.node_count(), g.node_count());
        for (k, e) in h.edges() {
            prop_assert_eq!(g.edge(k.0, k.1), Some(e));
        }
        let (dg, dh) = (floyd(&g), floyd(&h));
        for i in 0..g.node_count() {
            for j in 0..g.node_count() {
                if dg[i][j].is_infinite() {
                    prop_assert!(dh[i][j].is_infinite());
                } else {
                    prop_assert!(dh[i][j] <= alpha * dg[i][j] + 1e-6);
                }
            }
        }
    }

    #[test]
    fn densified_gaps_stay_below_spacing(lengths in prop::collection::vec(1.0..400.0f64, 1..8), spacing in 5.0..60.0f64) {
        let mut north = 0.0;
        let mut pts = vec![GpsPoint::new(VehicleId(1), origin(), Heading::NORTH, 0.0, 40.0)];
        for (i, l) in lengths.iter().enumerate() {
            north += l;
            pts.push(GpsPoint::new(VehicleId(1), origin().offset(0.0, north), Heading::NORTH, (i + 1) as f64, 40.0));
        }
        let cfg = IngestConfig { densify_spacing: spacing, ..IngestConfig::default() };
        let dense = densify(&Trajectory::new(VehicleId(1), pts.clone()), &cfg);
        let expected: usize = pts.windows(2).map(|w| densify_count(vincenty_distance(w[0].location, w[1].location), spacing)).sum();
        prop_assert_eq!(dense.len(), pts.len() + expected);
        prop_assert_eq!(dense.points.first(), pts.first());
        prop_assert_eq!(dense.points.last(), pts.last());
        for w in dense.points.windows(2) {
            prop_assert!(vincenty_distance(w[0].location, w[1].location) < spacing + 1e-4);
            prop_assert!(w[1].timestamp >= w[0].timestamp);
        }
    }

    #[test]
    fn spurious_threshold_is_monotone(fu in 1u32..100_000, fv in 1u32..100_000, fe in 1u32..50) {
        let t = spurious_edge_threshold(fu, fv);
        if f64::from(fe) >= t {
            prop_assert!(f64::from(fe + 1) >= t);
        }
        prop_assert!(t >= 1.0);
    }

    #[test]
    fn candidate_edges_have_no_self_loops(poses in prop::collection::vec(pose_strategy(500.0), 2..60)) {
        let cfg = ClusterConfig::default();
        let points: Vec<GpsPoint> = poses.iter().enumerate().map(|(i, &p)| point(p, i as f64)).collect();
        let centroids = select_seeds(&points, &cfg);
        let (g, _) = infer_candidate_edges(&[Trajectory::new(VehicleId(0), points)], &centroids, &cfg);
        prop_assert!(g.edges().all(|((u, v), e)| u != v && e.weight > 0.0));
    }

    #[test]
    fn geo_scores_grow_with_threshold(shift_e in -40.0..40.0f64, shift_n in -40.0..40.0f64, len in 50.0..400.0f64) {
        let mut truth = RoadGraph::new();
        truth.add_node(node(origin()));
        truth.add_node(node(origin().offset(0.0, len)));
        truth.insert_edge(0, 1, Edge { weight: len, traj_count: 1, last_seen: 0.0, active: true }).unwrap();
        let mut inferred = RoadGraph::new();
        inferred.add_node(node(origin().offset(shift_e, shift_n)));
        inferred.add_node(node(origin().offset(shift_e, shift_n + len * 0.7)));
        inferred.insert_edge(0, 1, Edge { weight: len, traj_count: 1, last_seen: 0.0, active: true }).unwrap();
        let r = geo_score(&inferred, &truth, &EvalConfig::default()).unwrap();
        for s in &r.geo {
            prop_assert!((0.0..=1.0).contains(&s.precision));
            prop_assert!((0.0..=1.0).contains(&s.recall));
            prop_assert!((0.0..=1.0).contains(&s.f_score));
        }
        for w in r.geo.windows(2) {
            prop_assert!(w[1].precision >= w[0].precision);
            prop_assert!(w[1].recall >= w[0].recall);
            prop_assert!(w[1].f_score >= w[0].f_score);
        }
    }

    #[test]
    fn online_state_only_grows(poses in prop::collection::vec(pose_strategy(300.0), 2..40)) {
        let cfg = OnlineConfig::default();
        let mut state = StreamState::new();
        let points: Vec<GpsPoint> = poses.iter().enumerate().map(|(i, &p)| point(p, i as f64)).collect();
        let mut last = (0, 0);
        for w in points.windows(2) {
            state.process_pair(&w[0], &w[1], &cfg);
            let now = (state.graph().node_count(), state.graph().edge_count());
            prop_assert!(now.0 >= last.0 && now.1 >= last.1);
            last = now;
        }
        prop_assert!(state.graph().edges().all(|((u, v), _)| u != v));
    }
}
