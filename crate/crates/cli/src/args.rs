use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

/// Road-map inference from GPS trajectories.
///
/// Every subcommand accepts `--config FILE` with `key=value` lines, where keys
/// are the long flag names. Flags on the command line win over the file.
#[derive(Debug, Parser)]
#[command(name = "mapinfer", version, args_override_self = true)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Batch inference: clustering, candidate edges and the greedy spanner.
    Offline(OfflineArgs),
    /// Streaming inference over fixes in arrival order.
    Online(OnlineArgs),
    /// GEO/TOPO comparison of an inferred map against ground truth.
    Eval(EvalArgs),
    /// Synthetic street grid plus simulated vehicle traces.
    Synth(SynthArgs),
}

#[derive(Debug, Args)]
pub struct OfflineArgs {
    /// Trajectory CSV (vehicle_id,timestamp,lat,lon,speed_kmh,heading_deg).
    #[arg(long)]
    pub input: PathBuf,
    /// Output prefix; writes PREFIX.edges, PREFIX.geojson, PREFIX.manifest.json.
    #[arg(long)]
    pub out: PathBuf,
    /// Clustering radius in meters.
    #[arg(long, default_value_t = 20.0)]
    pub cr: f64,
    /// Heading weight in meters per 180 degrees [default: 2 * cr].
    #[arg(long)]
    pub theta: Option<f64>,
    /// Heading variability (degrees) above which a cluster is split.
    #[arg(long, default_value_t = 10.0)]
    pub split_threshold: f64,
    /// k-means stops once the cost drops by less than this fraction.
    #[arg(long, default_value_t = 1e-4)]
    pub convergence: f64,
    #[arg(long, default_value_t = 100)]
    pub max_iterations: usize,
    /// Spanner stretch factor.
    #[arg(long, default_value_t = std::f64::consts::SQRT_2)]
    pub alpha: f64,
    /// Edges between nodes never faster than this (km/h) become two-way.
    #[arg(long, default_value_t = 60.0)]
    pub duplex_speed: f64,
    #[command(flatten)]
    pub ingest: IngestArgs,
    /// Densification spacing in meters.
    #[arg(long, default_value_t = 20.0)]
    pub sr: f64,
    /// Densify only pairs whose headings differ by less than this (degrees).
    #[arg(long, default_value_t = 5.0)]
    pub angle_gate: f64,
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    /// Fixes at or below this speed (km/h) are discarded.
    #[arg(long, default_value_t = 5.0)]
    pub min_speed: f64,
    /// Seconds without a fix that end a trajectory.
    #[arg(long, default_value_t = 300.0)]
    pub gap: f64,
}

#[derive(Debug, Args)]
pub struct OnlineArgs {
    /// Trajectory CSV, or `-` for standard input.
    #[arg(long)]
    pub input: PathBuf,
    /// Output prefix; writes PREFIX.edges, PREFIX.geojson, PREFIX.manifest.json.
    #[arg(long)]
    pub out: PathBuf,
    /// Clustering radius in meters.
    #[arg(long, default_value_t = 20.0)]
    pub cr: f64,
    /// Spacing of the points a pair is densified into, in meters.
    #[arg(long, default_value_t = 20.0)]
    pub sr: f64,
    /// Heading tolerance in degrees.
    #[arg(long, default_value_t = 45.0)]
    pub ha: f64,
    #[arg(long, default_value_t = std::f64::consts::SQRT_2)]
    pub alpha: f64,
    /// Nodes and edges unseen for this many seconds become inactive.
    #[arg(long, default_value_t = 604_800.0)]
    pub staleness: f64,
    /// Re-run the spanner after this many pairs (0 disables).
    #[arg(long, default_value_t = 100_000)]
    pub resparsify_every: u64,
    #[command(flatten)]
    pub ingest: IngestArgs,
    /// Write PREFIX.snapshot-NNNNNN.edges after every N pairs (0 disables).
    #[arg(long, default_value_t = 0)]
    pub snapshot_every: u64,
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Inferred map (.edges, or .geojson/.json).
    #[arg(long)]
    pub inferred: PathBuf,
    /// Ground-truth map (.edges, or .geojson/.json).
    #[arg(long)]
    pub truth: PathBuf,
    /// Trajectory CSV used to prune undriven truth edges for TOPO.
    #[arg(long)]
    pub trajectories: Option<PathBuf>,
    /// Also compute TOPO scores (needs --trajectories).
    #[arg(long, requires = "trajectories")]
    pub topo: bool,
    /// Write the report as JSON (plus a manifest next to it).
    #[arg(long)]
    pub json: Option<PathBuf>,
    /// Distance between samples along map edges, in meters.
    #[arg(long, default_value_t = 5.0)]
    pub spacing: f64,
    /// Comma-separated matching thresholds in meters.
    #[arg(long, default_value = "5,10,15,20,25,30")]
    pub thresholds: String,
    /// Path-length radius explored from each TOPO start, in meters.
    #[arg(long, default_value_t = 2000.0)]
    pub topo_radius: f64,
    /// Number of TOPO start samples.
    #[arg(long, default_value_t = 200)]
    pub samples: usize,
    /// A start marble and hole must be this close (meters).
    #[arg(long, default_value_t = 1.0)]
    pub start_distance: f64,
    /// ... and this well aligned (degrees).
    #[arg(long, default_value_t = 10.0)]
    pub start_angle: f64,
    /// Marble draws per TOPO sample before giving up.
    #[arg(long, default_value_t = 1000)]
    pub max_draws: usize,
    /// A trajectory point this close to a truth edge marks it driven (meters).
    #[arg(long, default_value_t = 30.0)]
    pub visit_distance: f64,
    /// ... if its heading is within this many degrees of the edge.
    #[arg(long, default_value_t = 45.0)]
    pub visit_angle: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Seconds without a fix that end a trajectory.
    #[arg(long, default_value_t = 300.0)]
    pub gap: f64,
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Output prefix; writes PREFIX.truth.edges, PREFIX.trajectories.csv and
    /// PREFIX.manifest.json.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 5)]
    pub rows: usize,
    #[arg(long, default_value_t = 5)]
    pub cols: usize,
    /// Block length in meters.
    #[arg(long, default_value_t = 100.0)]
    pub block: f64,
    /// Fraction of inner streets that are two-way.
    #[arg(long, default_value_t = 1.0)]
    pub two_way: f64,
    /// Put a one-way roundabout at the grid center.
    #[arg(long)]
    pub roundabout: bool,
    #[arg(long, default_value_t = 25.3)]
    pub origin_lat: f64,
    #[arg(long, default_value_t = 51.5)]
    pub origin_lon: f64,
    /// Number of trajectories.
    #[arg(long, default_value_t = 200)]
    pub traj: usize,
    /// Position noise, one sigma in meters.
    #[arg(long, default_value_t = 5.0)]
    pub noise: f64,
    /// Heading noise, one sigma in degrees.
    #[arg(long, default_value_t = 5.0)]
    pub heading_noise: f64,
    /// Fix spacing is drawn per trajectory from [spacing-min, spacing-max] meters.
    #[arg(long, default_value_t = 20.0)]
    pub spacing_min: f64,
    #[arg(long, default_value_t = 170.0)]
    pub spacing_max: f64,
    /// Seconds between trajectory start times.
    #[arg(long, default_value_t = 60.0)]
    pub start_interval: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub config: Option<PathBuf>,
}
