//! Acceptance criteria. Each test writes one PASS/FAIL line to stdout
//! (uncaptured) and then asserts.

use std::io::Write;
use std::time::{Duration, Instant};

use mapinfer_core::build::{greedy_spanner, run_offline_pipeline, PipelineConfig, SpannerConfig};
use mapinfer_core::cluster::ClusterCentroid;
use mapinfer_core::eval::{geo_score, topo_score, EvalConfig};
use mapinfer_core::geo::{
    angle_distance, circular_mean, combined_distance, vincenty_distance, GpsPoint, Heading, LatLon, Pose, VehicleId,
};
use mapinfer_core::graph::{Edge, Node, RoadGraph};
use mapinfer_core::ingest::{IngestConfig, Trajectory};
use mapinfer_core::online::{OnlineConfig, OnlineMapper};
use mapinfer_core::synth::{edge_sweeps, generate_synthetic, GridSpec, SynthConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn report(n: u32, name: &str, pass: bool, detail: &str) {
    let mut out = std::io::stdout().lock();
    let verdict = if pass { "PASS" } else { "FAIL" };
    writeln!(out, "acceptance {n:>2} {verdict} {name}: {detail}").unwrap();
    out.flush().unwrap();
}

fn origin() -> LatLon {
    LatLon::new(25.3, 51.5).unwrap()
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

fn edge(weight: f64) -> Edge {
    Edge { weight, traj_count: 1, last_seen: 0.0, active: true }
}

fn all_pairs(g: &RoadGraph) -> Vec<Vec<f64>> {
    let n = g.node_count();
    let mut d = vec![vec![f64::INFINITY; n]; n];
    for (i, row) in d.iter_mut().enumerate() {
        row[i] = 0.0;
    }
    for ((u, v), e) in g.edges() {
        let cell = &mut d[u as usize][v as usize];
        *cell = cell.min(e.weight);
    }
    for k in 0..n {
        for i in 0..n {
            if d[i][k].is_infinite() {
                continue;
            }
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

#[test]
fn c01_metric_axioms() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let o = origin();
    let pose = |rng: &mut ChaCha8Rng| {
        let loc = o.offset(rng.random_range(0.0..10_000.0), rng.random_range(0.0..10_000.0));
        Pose::new(loc, Heading::new(rng.random_range(0.0..360.0)).unwrap())
    };
    let mut worst_slack = f64::INFINITY;
    let mut violations = 0;
    for _ in 0..10_000 {
        let (x, y, z) = (pose(&mut rng), pose(&mut rng), pose(&mut rng));
        for theta in [10.0, 40.0, 100.0] {
            let d = |a: Pose, b: Pose| combined_distance(a, b, theta);
            let (xy, yz, xz) = (d(x, y), d(y, z), d(x, z));
            if d(x, x) != 0.0 || xy < 0.0 || xy != d(y, x) || (xy == 0.0 && x != y) {
                violations += 1;
            }
            let slack = xy + yz - xz;
            worst_slack = worst_slack.min(slack);
            if slack < -1e-6 {
                violations += 1;
            }
        }
    }
    let elapsed = start.elapsed();
    let pass = violations == 0 && elapsed < Duration::from_secs(5);
    report(
        1,
        "metric axioms",
        pass,
        &format!("{violations} violations, worst triangle slack {worst_slack:.3e} m, {elapsed:.2?}"),
    );
    assert!(pass);
}

#[test]
fn c02_spanner_oracle() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut failures = 0;
    let mut checked_pairs = 0u64;
    for _ in 0..100 {
        let n = rng.random_range(2..=50usize);
        let mut g = RoadGraph::new();
        for _ in 0..n {
            g.add_node(node(origin().offset(rng.random_range(0.0..2000.0), rng.random_range(0.0..2000.0))));
        }
        let m = rng.random_range(0..=300usize.min(n * (n - 1)));
        while g.edge_count() < m {
            let (u, v) = (rng.random_range(0..n as u32), rng.random_range(0..n as u32));
            if u != v && !g.contains_edge(u, v) {
                let w = g.centroid_distance(u, v) * rng.random_range(1.0..1.5);
                g.insert_edge(u, v, edge(w)).unwrap();
            }
        }
        let dg = all_pairs(&g);
        for alpha in [1.2, std::f64::consts::SQRT_2, 2.0] {
            let h = greedy_spanner(&g, &SpannerConfig { alpha, ..SpannerConfig::default() });
            if h.node_count() != n || h.edges().any(|(k, e)| g.edge(k.0, k.1) != Some(e)) {
                failures += 1;
                continue;
            }
            let dh = all_pairs(&h);
            for i in 0..n {
                for j in 0..n {
                    checked_pairs += 1;
                    let ok = if dg[i][j].is_infinite() {
                        dh[i][j].is_infinite()
                    } else {
                        dh[i][j] <= alpha * dg[i][j] + 1e-6
                    };
                    if !ok {
                        failures += 1;
                    }
                }
            }
        }
    }
    let elapsed = start.elapsed();
    let pass = failures == 0 && elapsed < Duration::from_secs(30);
    report(2, "spanner oracle", pass, &format!("{failures} failures over {checked_pairs} pairs, {elapsed:.2?}"));
    assert!(pass);
}

#[test]
fn c03_cross_edge_removal() {
    let spec = GridSpec { rows: 6, cols: 6, ..GridSpec::default() };
    let world = generate_synthetic(&spec, &SynthConfig { n_trajectories: 0, ..SynthConfig::default() }).unwrap();
    let mut g = world.truth.clone();
    let streets = g.edge_count();
    let id = |r: usize, c: usize| (r * spec.cols + c) as u32;
    let mut chords = Vec::new();
    for r in 0..spec.rows - 1 {
        for c in 0..spec.cols - 1 {
            for (a, b) in [(id(r, c), id(r + 1, c + 1)), (id(r, c + 1), id(r + 1, c))] {
                for (u, v) in [(a, b), (b, a)] {
                    let w = g.centroid_distance(u, v);
                    g.insert_edge(u, v, edge(w)).unwrap();
                    chords.push((u, v));
                }
            }
        }
    }
    let h = greedy_spanner(&g, &SpannerConfig::default());
    let kept_chords = chords.iter().filter(|&&(u, v)| h.contains_edge(u, v)).count();
    let kept_streets = world.truth.edges().filter(|&(k, _)| h.contains_edge(k.0, k.1)).count();
    let pass = kept_chords == 0 && kept_streets == streets && h.edge_count() == streets;
    report(
        3,
        "cross-edge removal",
        pass,
        &format!("{kept_chords}/{} chords kept, {kept_streets}/{streets} street edges kept", chords.len()),
    );
    assert!(pass);
}

#[test]
fn c04_circular_mean_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst = 0.0f64;
    let mut tested = 0;
    while tested < 100 {
        let k = rng.random_range(1..=30usize);
        let center: f64 = rng.random_range(0.0..360.0);
        let spread: f64 = rng.random_range(1.0..180.0);
        let hs: Vec<Heading> =
            (0..k).map(|_| Heading::new(center + rng.random_range(-spread..spread)).unwrap()).collect();
        let Some(m) = circular_mean(hs.iter().copied()) else { continue };
        if m.degenerate {
            continue;
        }
        let mut best = (f64::INFINITY, 0.0);
        for step in 0..3600 {
            let mu = step as f64 * 0.1;
            let cost: f64 = hs.iter().map(|h| 1.0 - (h.degrees() - mu).to_radians().cos()).sum();
            if cost < best.0 {
                best = (cost, mu);
            }
        }
        worst = worst.max(angle_distance(m.mean, Heading::new(best.1).unwrap()));
        tested += 1;
    }
    let pass = worst <= 0.1;
    report(4, "circular mean oracle", pass, &format!("worst disagreement {worst:.4} deg over {tested} multisets"));
    assert!(pass);
}

const GEO_FLOOR: f64 = 0.80;
const TOPO_FLOOR: f64 = 0.70;
// first run of this exact configuration (seed 5)
const GEO_CALIBRATED: f64 = 0.9995;
const TOPO_CALIBRATED: f64 = 0.9214;
const REGRESSION_TOLERANCE: f64 = 0.02;

#[test]
fn c05_end_to_end_synthetic() {
    let start = Instant::now();
    let spec = GridSpec::default();
    let synth = SynthConfig {
        n_trajectories: 200,
        noise_sigma: 5.0,
        spacing_min: 20.0,
        spacing_max: 170.0,
        rng_seed: 5,
        ..SynthConfig::default()
    };
    let world = generate_synthetic(&spec, &synth).unwrap();
    let out = run_offline_pipeline(&world.trajectories, &PipelineConfig::default(), &mut ()).unwrap();
    let cfg = EvalConfig { rng_seed: 5, ..EvalConfig::default() };
    let geo = geo_score(&out.graph, &world.truth, &cfg).unwrap();
    let topo = topo_score(&out.graph, &world.truth, &world.trajectories, &cfg).unwrap();
    let elapsed = start.elapsed();
    let g30 = geo.geo_at(30.0).unwrap();
    let t30 = topo.topo_at(30.0).unwrap();
    let pass = g30.f_score >= GEO_FLOOR.max(GEO_CALIBRATED - REGRESSION_TOLERANCE)
        && t30.f_score >= TOPO_FLOOR.max(TOPO_CALIBRATED - REGRESSION_TOLERANCE)
        && elapsed < Duration::from_secs(60);
    report(
        5,
        "end-to-end synthetic",
        pass,
        &format!(
            "GEO f@30 {:.4} (p {:.4} r {:.4}), TOPO f@30 {:.4} ({} samples), {} nodes {} edges, {elapsed:.2?}",
            g30.f_score,
            g30.precision,
            g30.recall,
            t30.f_score,
            topo.topo_samples_used,
            out.graph.node_count(),
            out.graph.edge_count()
        ),
    );
    assert!(pass);
}

fn straight_km(vehicle: u32, t0: f64) -> Trajectory {
    let o = origin();
    // northbound at 72 km/h, one fix per 100 m
    let pts = (0..=10)
        .map(|i| {
            GpsPoint::new(
                VehicleId(vehicle),
                o.offset(0.0, 100.0 * i as f64),
                Heading::NORTH,
                t0 + 5.0 * i as f64,
                72.0,
            )
        })
        .collect();
    Trajectory::new(VehicleId(vehicle), pts)
}

fn run_online(trajectories: &[Trajectory], cfg: OnlineConfig) -> OnlineMapper {
    let mut m = OnlineMapper::new(cfg, IngestConfig::default()).unwrap();
    for t in trajectories {
        for p in &t.points {
            m.push(*p);
        }
    }
    m
}

/// Node order along a simple directed path, if the graph is one.
fn path_order(g: &RoadGraph) -> Option<Vec<u32>> {
    let n = g.node_count();
    if n == 0 || g.edge_count() != n - 1 {
        return None;
    }
    let mut next = vec![None; n];
    let mut indeg = vec![0; n];
    for ((u, v), _) in g.edges() {
        if next[u as usize].replace(v).is_some() {
            return None;
        }
        indeg[v as usize] += 1;
    }
    let head = (0..n).find(|&i| indeg[i] == 0)? as u32;
    let mut order = vec![head];
    while let Some(v) = next[*order.last().unwrap() as usize] {
        order.push(v);
    }
    (order.len() == n).then_some(order)
}

#[test]
fn c06_online_offline_consistency() {
    let tr = straight_km(1, 0.0);
    let offline = run_offline_pipeline(std::slice::from_ref(&tr), &PipelineConfig::default(), &mut ()).unwrap().graph;
    let cfg = OnlineConfig::default();
    let online = run_online(std::slice::from_ref(&tr), cfg).state().export();

    let off_path = path_order(&offline);
    let on_path = path_order(&online);
    let eval = EvalConfig { matching_thresholds: vec![15.0], ..EvalConfig::default() };
    let f = geo_score(&online, &offline, &eval).unwrap().geo[0].f_score;
    let spacings: Vec<f64> = on_path
        .as_deref()
        .unwrap_or(&[])
        .windows(2)
        .map(|w| {
            vincenty_distance(
                online.node(w[0]).unwrap().centroid.location,
                online.node(w[1]).unwrap().centroid.location,
            )
        })
        .collect();
    let sr = cfg.sampling_rate;
    let spacing_ok = !spacings.is_empty() && spacings.iter().all(|&d| d >= sr && d < 2.0 * sr);
    let (lo, hi) = spacings.iter().fold((f64::INFINITY, 0.0f64), |(a, b), &d| (a.min(d), b.max(d)));
    let pass = off_path.is_some() && on_path.is_some() && f == 1.0 && spacing_ok;
    report(
        6,
        "online/offline consistency",
        pass,
        &format!(
            "offline path {} ({} nodes), online path {} ({} nodes), GEO f@15 {f:.4}, online spacing [{lo:.2}, {hi:.2}] m",
            off_path.is_some(),
            offline.node_count(),
            on_path.is_some(),
            online.node_count()
        ),
    );
    assert!(pass);
}

fn retimed(tr: &Trajectory, vehicle: u32, dt: f64) -> Trajectory {
    let pts = tr
        .points
        .iter()
        .map(|p| GpsPoint { vehicle_id: VehicleId(vehicle), timestamp: p.timestamp + dt, ..*p })
        .collect();
    Trajectory::new(VehicleId(vehicle), pts)
}

#[test]
fn c07_replay_adds_nothing() {
    let mut cases = vec![("straight".to_string(), straight_km(1, 0.0))];
    let quiet = SynthConfig {
        n_trajectories: 5,
        noise_sigma: 0.0,
        heading_noise: 0.0,
        spacing_min: 20.0,
        spacing_max: 170.0,
        rng_seed: 7,
        ..SynthConfig::default()
    };
    let noisy = SynthConfig { noise_sigma: 5.0, heading_noise: 5.0, rng_seed: 8, ..quiet };
    for (label, cfg) in [("noiseless route", quiet), ("noisy route", noisy)] {
        let w = generate_synthetic(&GridSpec::default(), &cfg).unwrap();
        for (i, t) in w.trajectories.into_iter().enumerate() {
            cases.push((format!("{label} {i}"), t));
        }
    }
    let mut failed = Vec::new();
    for (label, tr) in &cases {
        let mut m = run_online(std::slice::from_ref(tr), OnlineConfig::default());
        let before = (m.state().graph().node_count(), m.state().graph().edge_count());
        for p in &retimed(tr, 1000, 3600.0).points {
            m.push(*p);
        }
        let after = (m.state().graph().node_count(), m.state().graph().edge_count());
        if before != after {
            failed.push(format!("{label}: {before:?} -> {after:?}"));
        }
    }
    let pass = failed.is_empty();
    report(
        7,
        "replay adds nothing",
        pass,
        &format!("{}/{} trajectories unchanged {}", cases.len() - failed.len(), cases.len(), failed.join("; ")),
    );
    assert!(pass);
}

#[test]
fn c08_self_evaluation() {
    let maps = [
        ("5x5 two-way grid", GridSpec::default()),
        (
            "5x5 one-way mix with roundabout",
            GridSpec { two_way_fraction: 0.3, roundabout: true, ..GridSpec::default() },
        ),
        (
            "3x7 mixed grid",
            GridSpec { rows: 3, cols: 7, block_length: 150.0, two_way_fraction: 0.5, ..GridSpec::default() },
        ),
    ];
    let mut lines = Vec::new();
    let mut pass = true;
    for (i, (label, spec)) in maps.iter().enumerate() {
        let w = generate_synthetic(
            spec,
            &SynthConfig { n_trajectories: 0, rng_seed: 80 + i as u64, ..SynthConfig::default() },
        )
        .unwrap();
        let m = &w.truth;
        let cfg = EvalConfig { rng_seed: i as u64, ..EvalConfig::default() };
        let geo = geo_score(m, m, &cfg).unwrap();
        let topo = topo_score(m, m, &edge_sweeps(m, 10.0), &cfg).unwrap();
        let geo_ok = geo.geo.iter().all(|s| s.f_score == 1.0);
        let topo_ok = topo.topo.iter().all(|s| s.f_score == 1.0);
        pass &= geo_ok && topo_ok;
        lines.push(format!("{label}: geo {geo_ok} topo {topo_ok}"));
    }
    report(8, "self-evaluation identities", pass, &lines.join(", "));
    assert!(pass);
}

fn scaled_world(target_points: usize, seed: u64) -> Vec<Trajectory> {
    let spec = GridSpec { rows: 20, cols: 20, ..GridSpec::default() };
    let cfg = SynthConfig {
        n_trajectories: 1,
        noise_sigma: 5.0,
        spacing_min: 20.0,
        spacing_max: 20.0,
        rng_seed: seed,
        ..SynthConfig::default()
    };
    // size the trajectory count from a probe run
    let probe = generate_synthetic(&spec, &SynthConfig { n_trajectories: 200, ..cfg }).unwrap();
    let per = probe.trajectories.iter().map(|t| t.len()).sum::<usize>() as f64 / 200.0;
    let n = (target_points as f64 / per).ceil() as usize;
    let w = generate_synthetic(&spec, &SynthConfig { n_trajectories: n, ..cfg }).unwrap();
    let mut left = target_points;
    w.trajectories
        .into_iter()
        .filter_map(|mut t| {
            if left == 0 {
                return None;
            }
            t.points.truncate(left);
            left -= t.points.len();
            Some(t)
        })
        .collect()
}

#[test]
fn c09_scalability() {
    let small = scaled_world(50_000, 9);
    let large = scaled_world(200_000, 9);
    let count = |ts: &[Trajectory]| ts.iter().map(|t| t.len()).sum::<usize>();
    let time = |ts: &[Trajectory]| {
        let start = Instant::now();
        let out = run_offline_pipeline(ts, &PipelineConfig::default(), &mut ()).unwrap();
        (start.elapsed(), out.graph.node_count())
    };
    let (t_small, n_small) = time(&small);
    let (t_large, n_large) = time(&large);
    let size_ratio = count(&large) as f64 / count(&small) as f64;
    let time_ratio = t_large.as_secs_f64() / t_small.as_secs_f64();
    let pass = t_large < Duration::from_secs(180) && time_ratio < size_ratio * size_ratio;
    report(
        9,
        "scalability",
        pass,
        &format!(
            "{} pts {t_small:.2?} ({n_small} nodes), {} pts {t_large:.2?} ({n_large} nodes), time ratio {time_ratio:.2} vs size ratio^2 {:.1}",
            count(&small),
            count(&large),
            size_ratio * size_ratio
        ),
    );
    assert!(pass);
}

#[test]
fn c10_determinism() {
    let run = || {
        let spec = GridSpec { two_way_fraction: 0.6, roundabout: true, ..GridSpec::default() };
        let synth = SynthConfig {
            n_trajectories: 60,
            spacing_min: 20.0,
            spacing_max: 170.0,
            rng_seed: 10,
            ..SynthConfig::default()
        };
        let w = generate_synthetic(&spec, &synth).unwrap();
        let offline = run_offline_pipeline(&w.trajectories, &PipelineConfig::default(), &mut ()).unwrap();
        let online = run_online(&w.trajectories, OnlineConfig { resparsify_interval: 200, ..OnlineConfig::default() });
        let cfg = EvalConfig { topo_samples: 50, rng_seed: 10, ..EvalConfig::default() };
        let geo = geo_score(&offline.graph, &w.truth, &cfg).unwrap();
        let topo = topo_score(&offline.graph, &w.truth, &w.trajectories, &cfg).unwrap();
        format!(
            "{:?}|{:?}|{:?}|{:?}|{:?}|{:?}",
            w.truth,
            w.trajectories,
            offline.graph,
            online.state().graph(),
            geo,
            topo
        )
    };
    let (a, b) = (run(), run());
    let pass = a == b;
    report(
        10,
        "determinism (library; CLI byte identity runs in the mapinfer crate tests)",
        pass,
        &format!("{} bytes of debug output compared", a.len()),
    );
    assert!(pass);
}
