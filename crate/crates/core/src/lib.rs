//! Road-network inference from raw GPS trajectories.
//!
//! The crate is `no_std` (with `alloc`) and free of IO. It covers:
//!
//! - [`geo`]: geodesic and angular primitives and the location/heading metric.
//! - [`ingest`]: speed/heading inference, slow-point filtering and densification.
//! - [`cluster`]: seed selection, angle-aware k-means and heading-based splitting.
//! - [`build`]: candidate edges, the greedy spanner, duplexification and the
//!   batch pipeline.
//! - [`online`]: streaming map construction and incremental maintenance.
//! - [`eval`]: GEO/TOPO holes-and-marbles map comparison.
//! - [`synth`]: synthetic road grids with simulated vehicle traces.
#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod build;
pub mod cluster;
pub mod eval;
pub mod geo;
pub mod graph;
pub mod index;
pub mod ingest;
pub mod online;
pub mod synth;

pub use build::{run_offline_pipeline, OfflineOutput, PipelineConfig, SpannerConfig};
pub use cluster::{ClusterCentroid, ClusterConfig};
pub use eval::{EvalConfig, EvalReport};
pub use geo::{GpsPoint, Heading, LatLon, Pose, VehicleId};
pub use graph::{Edge, Node, RoadGraph};
pub use ingest::{IngestConfig, Trajectory};
pub use online::{OnlineConfig, OnlineMapper, StreamState};
