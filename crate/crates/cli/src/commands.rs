use std::fs::File;
use std::io::{self, BufReader, Read};
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{anyhow, Context};
use mapinfer_core::build::{run_offline_pipeline, PipelineConfig, SpannerConfig, Stage, StageObserver};
use mapinfer_core::cluster::ClusterConfig;
use mapinfer_core::eval::{geo_score, topo_score, EvalConfig, EvalError, EvalReport, ThresholdScore};
use mapinfer_core::geo::LatLon;
use mapinfer_core::graph::RoadGraph;
use mapinfer_core::ingest::{infer_speed_heading, segment_trajectories, IngestConfig, Trajectory};
use mapinfer_core::online::{OnlineConfig, OnlineMapper};
use mapinfer_core::synth::{generate_synthetic, GridSpec, SynthConfig};
use serde_json::{json, Map, Value};

use crate::args::{Cli, Command, EvalArgs, OfflineArgs, OnlineArgs, SynthArgs};
use crate::manifest::{HashingReader, Manifest};
use crate::trajcsv::{read_points, write_trajectories, PointReader};
use crate::{geojson, mapfile, CliError};

pub fn dispatch(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Offline(a) => offline(&a),
        Command::Online(a) => online(&a),
        Command::Eval(a) => eval(&a),
        Command::Synth(a) => synth(&a),
    }
}

/// `PREFIX` + `suffix`, keeping any dots already in the prefix.
pub fn with_suffix(prefix: &Path, suffix: &str) -> PathBuf {
    let mut s = prefix.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn object(v: Value) -> Map<String, Value> {
    match v {
        Value::Object(m) => m,
        _ => unreachable!("config is built as a JSON object"),
    }
}

fn require_file(what: &str, path: &Path) -> Result<(), CliError> {
    if path.is_file() {
        Ok(())
    } else {
        Err(CliError::missing(what, path))
    }
}

fn write_output(manifest: &mut Manifest, path: &Path, bytes: &[u8]) -> anyhow::Result<()> {
    std::fs::write(path, bytes).with_context(|| format!("cannot write {}", path.display()))?;
    manifest.output(path, bytes);
    Ok(())
}

fn write_map_files(manifest: &mut Manifest, prefix: &Path, graph: &RoadGraph) -> anyhow::Result<()> {
    write_output(manifest, &with_suffix(prefix, ".edges"), mapfile::write_map(graph).as_bytes())?;
    write_output(manifest, &with_suffix(prefix, ".geojson"), geojson::to_geojson(graph).as_bytes())
}

fn finish_manifest(manifest: &Manifest, prefix: &Path) -> anyhow::Result<()> {
    let path = with_suffix(prefix, ".manifest.json");
    std::fs::write(&path, manifest.to_json()).with_context(|| format!("cannot write {}", path.display()))
}

/// Reads a whole trajectory file, returning trajectories and the file hash.
fn load_trajectories(path: &Path, gap: f64) -> anyhow::Result<(Vec<Trajectory>, String)> {
    let file = File::open(path).with_context(|| format!("cannot open {}", path.display()))?;
    let mut reader = HashingReader::new(BufReader::new(file));
    let parsed = read_points(&mut reader).with_context(|| format!("{}", path.display()))?;
    io::copy(&mut reader, &mut io::sink())?;
    if parsed.malformed > 0 {
        eprintln!(
            "warning: {}: skipped {} malformed row(s), first at line {}",
            path.display(),
            parsed.malformed,
            parsed.first_malformed_line.unwrap_or(0)
        );
    }
    if parsed.points.is_empty() {
        return Err(anyhow!("{}: no valid trajectory rows", path.display()));
    }
    Ok((segment_trajectories(parsed.points, gap), reader.finish()))
}

fn load_map(path: &Path) -> anyhow::Result<RoadGraph> {
    let text = std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    let ext = path.extension().and_then(|e| e.to_str()).unwrap_or("").to_ascii_lowercase();
    let graph = if ext == "geojson" || ext == "json" {
        geojson::from_geojson(&text)
    } else {
        mapfile::read_map(&text).map_err(anyhow::Error::from)
    };
    graph.with_context(|| format!("{}", path.display()))
}

struct StageTimer {
    started: Instant,
}

impl StageObserver for StageTimer {
    fn started(&mut self, _stage: Stage) {
        self.started = Instant::now();
    }

    fn finished(&mut self, stage: Stage, items: usize) {
        let ms = self.started.elapsed().as_secs_f64() * 1e3;
        eprintln!("  {:<16} {items:>10} {ms:>10.1} ms", stage.name());
    }
}

pub fn offline_config(a: &OfflineArgs) -> PipelineConfig {
    PipelineConfig {
        ingest: IngestConfig {
            min_speed_kmh: a.ingest.min_speed,
            densify_spacing: a.sr,
            densify_angle_gate: a.angle_gate,
            new_trajectory_gap: a.ingest.gap,
        },
        cluster: ClusterConfig {
            seed_radius: a.cr,
            theta: a.theta.unwrap_or(2.0 * a.cr),
            split_threshold: a.split_threshold,
            convergence_ratio: a.convergence,
            max_iterations: a.max_iterations,
        },
        spanner: SpannerConfig { alpha: a.alpha, duplex_speed_kmh: a.duplex_speed },
    }
}

fn offline(a: &OfflineArgs) -> Result<(), CliError> {
    let cfg = offline_config(a);
    cfg.validate()?;
    require_file("input file", &a.input)?;
    let (trajectories, digest) = load_trajectories(&a.input, cfg.ingest.new_trajectory_gap)?;

    eprintln!("  {:<16} {:>10} {:>13}", "stage", "items", "time");
    let t0 = Instant::now();
    let out = run_offline_pipeline(&trajectories, &cfg, &mut StageTimer { started: t0 })
        .map_err(|e| CliError::usage(e.to_string()))?;
    let r = &out.report;
    eprintln!(
        "offline: {} points in {} trajectories -> {} nodes, {} edges ({} dropped trajectories) in {:.2} s",
        r.input_points,
        trajectories.len(),
        out.graph.node_count(),
        out.graph.edge_count(),
        r.dropped_trajectories,
        t0.elapsed().as_secs_f64()
    );

    let config = object(json!({
        "cr": cfg.cluster.seed_radius,
        "theta": cfg.cluster.theta,
        "split-threshold": cfg.cluster.split_threshold,
        "convergence": cfg.cluster.convergence_ratio,
        "max-iterations": cfg.cluster.max_iterations,
        "alpha": cfg.spanner.alpha,
        "duplex-speed": cfg.spanner.duplex_speed_kmh,
        "sr": cfg.ingest.densify_spacing,
        "angle-gate": cfg.ingest.densify_angle_gate,
        "min-speed": cfg.ingest.min_speed_kmh,
        "gap": cfg.ingest.new_trajectory_gap,
    }));
    let mut manifest = Manifest::new("offline", config, None);
    manifest.input(&a.input, digest);
    write_map_files(&mut manifest, &a.out, &out.graph)?;
    finish_manifest(&manifest, &a.out)?;
    Ok(())
}

pub fn online_config(a: &OnlineArgs) -> (OnlineConfig, IngestConfig) {
    let online = OnlineConfig {
        clustering_radius: a.cr,
        sampling_rate: a.sr,
        heading_tolerance: a.ha,
        alpha: a.alpha,
        staleness_horizon: a.staleness,
        resparsify_interval: a.resparsify_every,
    };
    let ingest =
        IngestConfig { min_speed_kmh: a.ingest.min_speed, new_trajectory_gap: a.ingest.gap, ..IngestConfig::default() };
    (online, ingest)
}

fn online(a: &OnlineArgs) -> Result<(), CliError> {
    let (cfg, ingest) = online_config(a);
    ingest.validate()?;
    let mut mapper = OnlineMapper::new(cfg, ingest)?;
    let stdin = a.input.as_os_str() == "-";
    let source: Box<dyn Read> = if stdin {
        Box::new(io::stdin().lock())
    } else {
        require_file("input file", &a.input)?;
        let file = File::open(&a.input).with_context(|| format!("cannot open {}", a.input.display()))?;
        Box::new(BufReader::new(file))
    };
    let mut hashed = HashingReader::new(source);
    let mut manifest_outputs = Manifest::new("online", Map::new(), None);
    let mut latest = f64::NEG_INFINITY;
    let mut snapshots = 0u64;
    let (malformed, first_bad) = {
        let mut rows = PointReader::new(&mut hashed).with_context(|| format!("{}", a.input.display()))?;
        for p in rows.by_ref() {
            let p = p.with_context(|| format!("{}", a.input.display()))?;
            latest = latest.max(p.timestamp);
            let paired = mapper.push(p);
            if paired && a.snapshot_every > 0 && mapper.stats().pairs.is_multiple_of(a.snapshot_every) {
                snapshots += 1;
                let path = with_suffix(&a.out, &format!(".snapshot-{snapshots:06}.edges"));
                write_output(&mut manifest_outputs, &path, mapfile::write_map(mapper.state().graph()).as_bytes())?;
            }
        }
        (rows.malformed, rows.first_malformed_line)
    };
    io::copy(&mut hashed, &mut io::sink()).context("reading input")?;
    if malformed > 0 {
        eprintln!(
            "warning: {}: skipped {malformed} malformed row(s), first at line {}",
            a.input.display(),
            first_bad.unwrap_or(0)
        );
    }
    if latest.is_finite() {
        mapper.state_mut().mark_stale(latest, &cfg);
    }
    let (state, stats) = mapper.finish();
    if stats.points == 0 {
        eprintln!("warning: {}: empty stream, writing an empty map", a.input.display());
    }
    eprintln!(
        "online: {} points, {} pairs ({} slow, {} out of order, {} gaps, {} resparsifications) -> {} nodes, {} edges",
        stats.points,
        stats.pairs,
        stats.dropped_slow,
        stats.dropped_out_of_order,
        stats.gaps,
        stats.resparsifications,
        state.graph().node_count(),
        state.graph().edge_count()
    );

    let config = object(json!({
        "cr": cfg.clustering_radius,
        "sr": cfg.sampling_rate,
        "ha": cfg.heading_tolerance,
        "alpha": cfg.alpha,
        "staleness": cfg.staleness_horizon,
        "resparsify-every": cfg.resparsify_interval,
        "min-speed": ingest.min_speed_kmh,
        "gap": ingest.new_trajectory_gap,
        "snapshot-every": a.snapshot_every,
    }));
    let mut manifest = Manifest::new("online", config, None);
    manifest.input(&a.input, hashed.finish());
    manifest.outputs = manifest_outputs.outputs;
    write_map_files(&mut manifest, &a.out, state.graph())?;
    finish_manifest(&manifest, &a.out)?;
    Ok(())
}

pub fn parse_thresholds(s: &str) -> Result<Vec<f64>, CliError> {
    s.split(',')
        .map(|t| {
            t.trim()
                .parse::<f64>()
                .map_err(|_| CliError::usage(format!("invalid threshold `{}` in --thresholds", t.trim())))
        })
        .collect()
}

pub fn eval_config(a: &EvalArgs) -> Result<EvalConfig, CliError> {
    let cfg = EvalConfig {
        sample_spacing: a.spacing,
        matching_thresholds: parse_thresholds(&a.thresholds)?,
        topo_radius: a.topo_radius,
        topo_samples: a.samples,
        start_match_distance: a.start_distance,
        start_angle_tolerance: a.start_angle,
        max_start_draws: a.max_draws,
        visit_distance: a.visit_distance,
        visit_angle_tolerance: a.visit_angle,
        rng_seed: a.seed,
    };
    cfg.validate()?;
    Ok(cfg)
}

fn eval_failure(e: EvalError) -> CliError {
    match e {
        EvalError::Config(c) => c.into(),
        other => CliError::Runtime(anyhow!("{other}")),
    }
}

fn score_json(s: &ThresholdScore) -> Value {
    json!({ "threshold": s.threshold, "precision": s.precision, "recall": s.recall, "f_score": s.f_score })
}

pub fn report_json(r: &EvalReport, topo: bool) -> Value {
    let mut v = json!({
        "seed": r.seed,
        "marbles": r.marbles,
        "holes": r.holes,
        "empty_inferred": r.empty_inferred,
        "geo": r.geo.iter().map(score_json).collect::<Vec<_>>(),
    });
    if topo {
        v["topo"] = r.topo.iter().map(score_json).collect();
        v["topo_samples_used"] = r.topo_samples_used.into();
        v["topo_samples_skipped"] = r.topo_samples_skipped.into();
        v["pruned_truth_edges"] = r.pruned_truth_edges.into();
    }
    v
}

pub fn report_table(r: &EvalReport, topo: bool) -> String {
    let mut out = String::from("threshold_m  geo_p   geo_r   geo_f");
    if topo {
        out.push_str("    topo_p  topo_r  topo_f");
    }
    out.push('\n');
    for (i, g) in r.geo.iter().enumerate() {
        out.push_str(&format!("{:>11.1}  {:.4}  {:.4}  {:.4}", g.threshold, g.precision, g.recall, g.f_score));
        if let Some(t) = r.topo.get(i).filter(|_| topo) {
            out.push_str(&format!("    {:.4}  {:.4}  {:.4}", t.precision, t.recall, t.f_score));
        }
        out.push('\n');
    }
    out
}

fn eval(a: &EvalArgs) -> Result<(), CliError> {
    let cfg = eval_config(a)?;
    require_file("inferred map", &a.inferred)?;
    require_file("truth map", &a.truth)?;
    if let Some(t) = &a.trajectories {
        require_file("trajectory file", t)?;
    }
    if !(a.gap.is_finite() && a.gap > 0.0) {
        return Err(CliError::usage(format!("invalid gap = {}: must be positive", a.gap)));
    }
    let inferred = load_map(&a.inferred)?.active_subgraph();
    let truth = load_map(&a.truth)?.active_subgraph();
    let mut report = geo_score(&inferred, &truth, &cfg).map_err(eval_failure)?;
    let mut traj_digest = None;
    if a.topo {
        let path = a.trajectories.as_deref().ok_or_else(|| CliError::usage("--topo needs --trajectories"))?;
        let (trajectories, digest) = load_trajectories(path, a.gap)?;
        let prepared: Vec<Trajectory> = trajectories.iter().filter_map(|t| infer_speed_heading(t).ok()).collect();
        let t = topo_score(&inferred, &truth, &prepared, &cfg).map_err(eval_failure)?;
        report.topo = t.topo;
        report.topo_samples_used = t.topo_samples_used;
        report.topo_samples_skipped = t.topo_samples_skipped;
        report.pruned_truth_edges = t.pruned_truth_edges;
        traj_digest = Some((path.to_path_buf(), digest));
    }
    print!("{}", report_table(&report, a.topo));
    eprintln!("eval: {} marbles, {} holes, seed {}", report.marbles, report.holes, report.seed);

    if let Some(json_path) = &a.json {
        let thresholds: Vec<Value> = cfg.matching_thresholds.iter().map(|&t| t.into()).collect();
        let config = object(json!({
            "spacing": cfg.sample_spacing,
            "thresholds": thresholds,
            "topo": a.topo,
            "topo-radius": cfg.topo_radius,
            "samples": cfg.topo_samples,
            "start-distance": cfg.start_match_distance,
            "start-angle": cfg.start_angle_tolerance,
            "max-draws": cfg.max_start_draws,
            "visit-distance": cfg.visit_distance,
            "visit-angle": cfg.visit_angle_tolerance,
            "gap": a.gap,
        }));
        let mut manifest = Manifest::new("eval", config, Some(cfg.rng_seed));
        for p in [&a.inferred, &a.truth] {
            let bytes = std::fs::read(p).with_context(|| format!("cannot read {}", p.display()))?;
            manifest.input(p, crate::manifest::sha256_hex(&bytes));
        }
        if let Some((p, d)) = traj_digest {
            manifest.input(&p, d);
        }
        let mut text = serde_json::to_string_pretty(&report_json(&report, a.topo)).context("serializing report")?;
        text.push('\n');
        write_output(&mut manifest, json_path, text.as_bytes())?;
        let prefix = json_path.with_extension("");
        finish_manifest(&manifest, &prefix)?;
    }
    Ok(())
}

pub fn synth_config(a: &SynthArgs) -> Result<(GridSpec, SynthConfig), CliError> {
    let origin = LatLon::new(a.origin_lat, a.origin_lon).map_err(|e| CliError::usage(e.to_string()))?;
    let spec = GridSpec {
        rows: a.rows,
        cols: a.cols,
        block_length: a.block,
        two_way_fraction: a.two_way,
        roundabout: a.roundabout,
        origin,
    };
    let cfg = SynthConfig {
        n_trajectories: a.traj,
        noise_sigma: a.noise,
        heading_noise: a.heading_noise,
        spacing_min: a.spacing_min,
        spacing_max: a.spacing_max,
        start_interval: a.start_interval,
        rng_seed: a.seed,
    };
    Ok((spec, cfg))
}

fn synth(a: &SynthArgs) -> Result<(), CliError> {
    let (spec, cfg) = synth_config(a)?;
    let world = generate_synthetic(&spec, &cfg).map_err(|e| CliError::usage(e.to_string()))?;
    let config = object(json!({
        "rows": spec.rows,
        "cols": spec.cols,
        "block": spec.block_length,
        "two-way": spec.two_way_fraction,
        "roundabout": spec.roundabout,
        "origin-lat": spec.origin.lat,
        "origin-lon": spec.origin.lon,
        "traj": cfg.n_trajectories,
        "noise": cfg.noise_sigma,
        "heading-noise": cfg.heading_noise,
        "spacing-min": cfg.spacing_min,
        "spacing-max": cfg.spacing_max,
        "start-interval": cfg.start_interval,
    }));
    let mut manifest = Manifest::new("synth", config, Some(cfg.rng_seed));
    write_output(&mut manifest, &with_suffix(&a.out, ".truth.edges"), mapfile::write_map(&world.truth).as_bytes())?;
    let mut csv = Vec::new();
    write_trajectories(&mut csv, &world.trajectories)?;
    write_output(&mut manifest, &with_suffix(&a.out, ".trajectories.csv"), &csv)?;
    finish_manifest(&manifest, &a.out)?;
    eprintln!(
        "synth: {} nodes, {} edges, {} trajectories, {} fixes",
        world.truth.node_count(),
        world.truth.edge_count(),
        world.trajectories.len(),
        world.trajectories.iter().map(Trajectory::len).sum::<usize>()
    );
    Ok(())
}
