//! Trajectory preprocessing: segmentation, speed/heading inference,
//! slow-point filtering and densification.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;
use core::fmt;

use libm::floor;

use crate::geo::{angle_distance, initial_bearing, vincenty_distance, GpsPoint, Heading, VehicleId};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IngestConfig {
    /// Points at or below this speed (km/h) are dropped.
    pub min_speed_kmh: f64,
    /// Target spacing of densified points, meters.
    pub densify_spacing: f64,
    /// Consecutive fixes are densified only when their headings differ by
    /// less than this many degrees.
    pub densify_angle_gate: f64,
    /// A larger gap between fixes of one vehicle starts a new trajectory (s).
    pub new_trajectory_gap: f64,
}

impl Default for IngestConfig {
    fn default() -> Self {
        IngestConfig { min_speed_kmh: 5.0, densify_spacing: 20.0, densify_angle_gate: 5.0, new_trajectory_gap: 300.0 }
    }
}

impl IngestConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        positive("min_speed_kmh", self.min_speed_kmh)?;
        positive("densify_spacing", self.densify_spacing)?;
        positive("densify_angle_gate", self.densify_angle_gate)?;
        positive("new_trajectory_gap", self.new_trajectory_gap)
    }
}

/// A configuration field failed validation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConfigError {
    pub field: &'static str,
    pub value: f64,
    pub requirement: &'static str,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "invalid {} = {}: must be {}", self.field, self.value, self.requirement)
    }
}

pub(crate) fn positive(field: &'static str, value: f64) -> Result<(), ConfigError> {
    if value.is_finite() && value > 0.0 {
        Ok(())
    } else {
        Err(ConfigError { field, value, requirement: "positive" })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IngestError {
    /// Fewer than two usable points, so speed/heading cannot be inferred.
    TooShort { vehicle_id: VehicleId, points: usize },
}

impl fmt::Display for IngestError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            IngestError::TooShort { vehicle_id, points } => write!(
                f,
                "trajectory of vehicle {} has {points} usable point(s); need at least 2 to infer speed/heading",
                vehicle_id.0
            ),
        }
    }
}

/// Chronologically ordered fixes of one vehicle.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Trajectory {
    pub vehicle_id: VehicleId,
    pub points: Vec<GpsPoint>,
}

impl Trajectory {
    pub fn new(vehicle_id: VehicleId, points: Vec<GpsPoint>) -> Self {
        Trajectory { vehicle_id, points }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    fn with_points(&self, points: Vec<GpsPoint>) -> Trajectory {
        Trajectory { vehicle_id: self.vehicle_id, points }
    }
}

/// Groups fixes by vehicle, sorts each group by time (stable) and cuts it
/// wherever consecutive fixes are more than `gap` seconds apart.
///
/// Output is ordered by vehicle id, then time.
pub fn segment_trajectories(points: impl IntoIterator<Item = GpsPoint>, gap: f64) -> Vec<Trajectory> {
    let mut by_vehicle: BTreeMap<VehicleId, Vec<GpsPoint>> = BTreeMap::new();
    for p in points {
        by_vehicle.entry(p.vehicle_id).or_default().push(p);
    }
    let mut out = Vec::new();
    for (vehicle_id, mut pts) in by_vehicle {
        pts.sort_by(|a, b| a.timestamp.total_cmp(&b.timestamp));
        let mut current: Vec<GpsPoint> = Vec::new();
        for p in pts {
            if let Some(last) = current.last() {
                if p.timestamp - last.timestamp > gap {
                    out.push(Trajectory::new(vehicle_id, core::mem::take(&mut current)));
                }
            }
            current.push(p);
        }
        if !current.is_empty() {
            out.push(Trajectory::new(vehicle_id, current));
        }
    }
    out
}

/// Fills missing headings (bearing to the next fix) and speeds (distance over
/// elapsed time, km/h). Fully populated trajectories are returned unchanged.
///
/// Fixes with no time elapsed since the previous fix are dropped first.
pub fn infer_speed_heading(tr: &Trajectory) -> Result<Trajectory, IngestError> {
    if tr.points.iter().all(|p| p.heading.is_some() && p.speed_kmh.is_some()) {
        return Ok(tr.clone());
    }
    let mut pts: Vec<GpsPoint> = Vec::with_capacity(tr.points.len());
    for &p in &tr.points {
        match pts.last() {
            Some(last) if p.timestamp - last.timestamp <= 0.0 => {}
            _ => pts.push(p),
        }
    }
    if pts.len() < 2 {
        return Err(IngestError::TooShort { vehicle_id: tr.vehicle_id, points: pts.len() });
    }

    let n = pts.len();
    let mut bearings: Vec<Option<Heading>> = Vec::with_capacity(n);
    let mut speeds: Vec<f64> = Vec::with_capacity(n);
    for w in pts.windows(2) {
        bearings.push(initial_bearing(w[0].location, w[1].location).ok());
        let dt = w[1].timestamp - w[0].timestamp;
        speeds.push(vincenty_distance(w[0].location, w[1].location) / dt * 3.6);
    }
    // last fix copies its predecessor
    bearings.push(None);
    speeds.push(speeds[n - 2]);

    // coincident consecutive fixes have no bearing: borrow from neighbours
    let mut carry = None;
    for b in bearings.iter_mut() {
        match b {
            Some(h) => carry = Some(*h),
            None => *b = carry,
        }
    }
    let mut carry = None;
    for b in bearings.iter_mut().rev() {
        match b {
            Some(h) => carry = Some(*h),
            None => *b = carry,
        }
    }

    for (i, p) in pts.iter_mut().enumerate() {
        if p.heading.is_none() {
            p.heading = Some(bearings[i].unwrap_or_default());
        }
        if p.speed_kmh.is_none() {
            p.speed_kmh = Some(speeds[i]);
        }
    }
    Ok(tr.with_points(pts))
}

/// Drops fixes whose speed is at or below `min_speed_kmh`. Fixes without a
/// speed are kept.
pub fn filter_slow_points(tr: &Trajectory, min_speed_kmh: f64) -> Trajectory {
    let points = tr.points.iter().filter(|p| p.speed_kmh.is_none_or(|s| s > min_speed_kmh)).copied().collect();
    tr.with_points(points)
}

/// Number of points inserted between two fixes `distance` meters apart.
pub fn densify_count(distance: f64, spacing: f64) -> usize {
    if distance <= 0.0 || spacing <= 0.0 {
        0
    } else {
        floor(distance / spacing) as usize
    }
}

/// Inserts `floor(d / spacing)` evenly spaced points between consecutive
/// fixes whose headings agree within the angle gate.
///
/// Inserted points are linear in lat/lon, carry the bearing of the pair and
/// interpolated timestamps (and speeds, when both ends have one).
pub fn densify(tr: &Trajectory, cfg: &IngestConfig) -> Trajectory {
    let Some(first) = tr.points.first() else {
        return tr.clone();
    };
    let mut out = Vec::with_capacity(tr.points.len() * 2);
    out.push(*first);
    for w in tr.points.windows(2) {
        let (a, b) = (w[0], w[1]);
        if let (Some(ha), Some(hb)) = (a.heading, b.heading) {
            if angle_distance(ha, hb) < cfg.densify_angle_gate {
                interpolate_between(&a, &b, cfg.densify_spacing, &mut out);
            }
        }
        out.push(b);
    }
    tr.with_points(out)
}

/// Pushes the points strictly between `a` and `b` onto `out`.
pub(crate) fn interpolate_between(a: &GpsPoint, b: &GpsPoint, spacing: f64, out: &mut Vec<GpsPoint>) {
    let d = vincenty_distance(a.location, b.location);
    let s = densify_count(d, spacing);
    if s == 0 {
        return;
    }
    let Ok(heading) = initial_bearing(a.location, b.location) else {
        return;
    };
    let steps = (s + 1) as f64;
    for k in 1..=s {
        let t = k as f64 / steps;
        out.push(GpsPoint {
            vehicle_id: a.vehicle_id,
            location: a.location.lerp(b.location, t),
            heading: Some(heading),
            timestamp: a.timestamp + (b.timestamp - a.timestamp) * t,
            speed_kmh: match (a.speed_kmh, b.speed_kmh) {
                (Some(x), Some(y)) => Some(x + (y - x) * t),
                _ => None,
            },
        });
    }
}
