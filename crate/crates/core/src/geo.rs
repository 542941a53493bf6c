//! Geodesic and angular primitives.
//!
//! Angles are kept in degrees everywhere; trigonometry converts internally.

use core::fmt;

use libm::{atan, atan2, cos, fabs, floor, fmod, sin, sqrt, tan};

/// WGS-84 semi-major axis in meters.
pub const WGS84_A: f64 = 6_378_137.0;
/// WGS-84 flattening.
pub const WGS84_F: f64 = 1.0 / 298.257_223_563;
/// WGS-84 semi-minor axis in meters.
pub const WGS84_B: f64 = (1.0 - WGS84_F) * WGS84_A;
/// Mean earth radius used by the spherical fallback.
pub const MEAN_EARTH_RADIUS: f64 = 6_371_008.8;

const VINCENTY_MAX_ITER: usize = 100;
const VINCENTY_EPS: f64 = 1e-12;
const DEG: f64 = core::f64::consts::PI / 180.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GeoError {
    InvalidLatitude(f64),
    InvalidLongitude(f64),
    NonFiniteHeading,
    /// Bearing between two identical locations.
    UndefinedBearing,
}

impl fmt::Display for GeoError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GeoError::InvalidLatitude(v) => write!(f, "latitude {v} outside [-90, 90]"),
            GeoError::InvalidLongitude(v) => write!(f, "longitude {v} outside [-180, 180]"),
            GeoError::NonFiniteHeading => f.write_str("heading is not finite"),
            GeoError::UndefinedBearing => f.write_str("undefined bearing"),
        }
    }
}

/// A location in degrees.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct LatLon {
    pub lat: f64,
    pub lon: f64,
}

impl LatLon {
    pub fn new(lat: f64, lon: f64) -> Result<Self, GeoError> {
        if !lat.is_finite() || !(-90.0..=90.0).contains(&lat) {
            return Err(GeoError::InvalidLatitude(lat));
        }
        if !lon.is_finite() || !(-180.0..=180.0).contains(&lon) {
            return Err(GeoError::InvalidLongitude(lon));
        }
        Ok(LatLon { lat, lon })
    }

    /// Moves the point by a local east/north displacement in meters.
    ///
    /// Uses the WGS-84 curvature radii at the point; accurate for
    /// displacements of a few kilometers.
    pub fn offset(self, east_m: f64, north_m: f64) -> LatLon {
        let (m_lat, m_lon) = meters_per_degree(self.lat);
        LatLon { lat: self.lat + north_m / m_lat, lon: self.lon + east_m / m_lon }
    }

    /// Linear interpolation in lat/lon.
    pub fn lerp(self, other: LatLon, t: f64) -> LatLon {
        LatLon { lat: self.lat + (other.lat - self.lat) * t, lon: self.lon + (other.lon - self.lon) * t }
    }
}

/// Heading clockwise from north, normalized into `[0, 360)`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Default)]
pub struct Heading(f64);

impl Heading {
    pub const NORTH: Heading = Heading(0.0);

    /// Normalizes any finite angle modulo 360.
    pub fn new(degrees: f64) -> Result<Self, GeoError> {
        if !degrees.is_finite() {
            return Err(GeoError::NonFiniteHeading);
        }
        Ok(Heading::wrap(degrees))
    }

    fn wrap(degrees: f64) -> Heading {
        let mut r = fmod(degrees, 360.0);
        if r < 0.0 {
            r += 360.0;
        }
        if r >= 360.0 {
            r = 0.0;
        }
        Heading(r)
    }

    pub fn degrees(self) -> f64 {
        self.0
    }

    /// Rotates clockwise by `delta` degrees.
    pub fn rotate(self, delta: f64) -> Heading {
        Heading::wrap(self.0 + delta)
    }

    pub fn reversed(self) -> Heading {
        self.rotate(180.0)
    }
}

/// Opaque vehicle identifier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct VehicleId(pub u32);

/// One GPS fix. Heading and speed may be absent in location-only data and
/// are filled in by [`crate::ingest::infer_speed_heading`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GpsPoint {
    pub vehicle_id: VehicleId,
    pub location: LatLon,
    pub heading: Option<Heading>,
    /// Seconds since the epoch.
    pub timestamp: f64,
    /// km/h.
    pub speed_kmh: Option<f64>,
}

impl GpsPoint {
    pub fn new(vehicle_id: VehicleId, location: LatLon, heading: Heading, timestamp: f64, speed_kmh: f64) -> Self {
        GpsPoint { vehicle_id, location, heading: Some(heading), timestamp, speed_kmh: Some(speed_kmh) }
    }

    /// Location plus heading; a missing heading counts as north.
    pub fn pose(&self) -> Pose {
        Pose { location: self.location, heading: self.heading.unwrap_or_default() }
    }
}

/// A location with a direction of travel: the space the combined metric lives in.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    pub location: LatLon,
    pub heading: Heading,
}

impl Pose {
    pub fn new(location: LatLon, heading: Heading) -> Self {
        Pose { location, heading }
    }
}

/// Meters per degree of latitude and of longitude at `lat` on WGS-84.
pub fn meters_per_degree(lat: f64) -> (f64, f64) {
    let phi = lat * DEG;
    let e2 = WGS84_F * (2.0 - WGS84_F);
    let s = sin(phi);
    let w = sqrt(1.0 - e2 * s * s);
    let meridional = WGS84_A * (1.0 - e2) / (w * w * w);
    let prime_vertical = WGS84_A / w;
    (meridional * DEG, prime_vertical * cos(phi) * DEG)
}

/// Equirectangular distance using the curvature radii at the mean latitude.
///
/// Within ~1e-3 relative of the geodesic for separations below a few tens
/// of kilometers away from the poles; used to prune candidates before exact
/// evaluation.
pub fn approx_distance(a: LatLon, b: LatLon) -> f64 {
    let (m_lat, m_lon) = meters_per_degree(0.5 * (a.lat + b.lat));
    let dy = (b.lat - a.lat) * m_lat;
    let dx = (b.lon - a.lon) * m_lon;
    sqrt(dx * dx + dy * dy)
}

/// Vincenty's inverse formula on WGS-84. `None` when the iteration does not
/// converge (nearly antipodal points).
pub fn vincenty_inverse(a: LatLon, b: LatLon) -> Option<f64> {
    let l = (b.lon - a.lon) * DEG;
    let u1 = atan((1.0 - WGS84_F) * tan(a.lat * DEG));
    let u2 = atan((1.0 - WGS84_F) * tan(b.lat * DEG));
    let (sin_u1, cos_u1) = (sin(u1), cos(u1));
    let (sin_u2, cos_u2) = (sin(u2), cos(u2));

    let mut lambda = l;
    for _ in 0..VINCENTY_MAX_ITER {
        let (sin_l, cos_l) = (sin(lambda), cos(lambda));
        let t1 = cos_u2 * sin_l;
        let t2 = cos_u1 * sin_u2 - sin_u1 * cos_u2 * cos_l;
        let sin_sigma = sqrt(t1 * t1 + t2 * t2);
        if sin_sigma == 0.0 {
            return Some(0.0);
        }
        let cos_sigma = sin_u1 * sin_u2 + cos_u1 * cos_u2 * cos_l;
        let sigma = atan2(sin_sigma, cos_sigma);
        let sin_alpha = cos_u1 * cos_u2 * sin_l / sin_sigma;
        let cos2_alpha = 1.0 - sin_alpha * sin_alpha;
        // equatorial line: cos2_alpha = 0
        let cos_2sm = if cos2_alpha != 0.0 { cos_sigma - 2.0 * sin_u1 * sin_u2 / cos2_alpha } else { 0.0 };
        let c = WGS84_F / 16.0 * cos2_alpha * (4.0 + WGS84_F * (4.0 - 3.0 * cos2_alpha));
        let prev = lambda;
        lambda = l
            + (1.0 - c)
                * WGS84_F
                * sin_alpha
                * (sigma + c * sin_sigma * (cos_2sm + c * cos_sigma * (-1.0 + 2.0 * cos_2sm * cos_2sm)));
        if fabs(lambda - prev) < VINCENTY_EPS {
            let u_sq = cos2_alpha * (WGS84_A * WGS84_A - WGS84_B * WGS84_B) / (WGS84_B * WGS84_B);
            let big_a = 1.0 + u_sq / 16384.0 * (4096.0 + u_sq * (-768.0 + u_sq * (320.0 - 175.0 * u_sq)));
            let big_b = u_sq / 1024.0 * (256.0 + u_sq * (-128.0 + u_sq * (74.0 - 47.0 * u_sq)));
            let delta_sigma = big_b
                * sin_sigma
                * (cos_2sm
                    + big_b / 4.0
                        * (cos_sigma * (-1.0 + 2.0 * cos_2sm * cos_2sm)
                            - big_b / 6.0
                                * cos_2sm
                                * (-3.0 + 4.0 * sin_sigma * sin_sigma)
                                * (-3.0 + 4.0 * cos_2sm * cos_2sm)));
            return Some(WGS84_B * big_a * (sigma - delta_sigma));
        }
    }
    None
}

/// Great-circle (haversine) distance on the mean-radius sphere.
pub fn great_circle_distance(a: LatLon, b: LatLon) -> f64 {
    let dlat = (b.lat - a.lat) * DEG;
    let dlon = (b.lon - a.lon) * DEG;
    let h = sin(dlat / 2.0) * sin(dlat / 2.0) + cos(a.lat * DEG) * cos(b.lat * DEG) * sin(dlon / 2.0) * sin(dlon / 2.0);
    2.0 * MEAN_EARTH_RADIUS * atan2(sqrt(h), sqrt(1.0 - h))
}

/// Geodesic distance in meters (Vincenty, spherical fallback).
///
/// Arguments are put in a canonical order first so the result is bitwise
/// symmetric.
pub fn vincenty_distance(a: LatLon, b: LatLon) -> f64 {
    let (p, q) = if (a.lat, a.lon) <= (b.lat, b.lon) { (a, b) } else { (b, a) };
    vincenty_inverse(p, q).unwrap_or_else(|| great_circle_distance(p, q))
}

/// Angular distance on the circle, in `[0, 180]`.
pub fn angle_distance(a: Heading, b: Heading) -> f64 {
    let d = fabs(a.0 - b.0);
    if d > 180.0 {
        360.0 - d
    } else {
        d
    }
}

/// Location/heading metric: `sqrt(v² + (θ·d∘/180)²)` in meters.
pub fn combined_distance(p: Pose, q: Pose, theta: f64) -> f64 {
    let v = vincenty_distance(p.location, q.location);
    let h = theta * angle_distance(p.heading, q.heading) / 180.0;
    sqrt(v * v + h * h)
}

/// The same metric with the geodesic term replaced by [`approx_distance`].
pub fn approx_combined_distance(p: Pose, q: Pose, theta: f64) -> f64 {
    let v = approx_distance(p.location, q.location);
    let h = theta * angle_distance(p.heading, q.heading) / 180.0;
    sqrt(v * v + h * h)
}

/// Equirectangular approximation with the curvature radii fixed at one
/// latitude. Cheaper than [`approx_distance`] when many distances are taken
/// around the same point; comparable accuracy for separations of a few
/// kilometers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalFrame {
    m_lat: f64,
    m_lon: f64,
}

impl LocalFrame {
    pub fn at(lat: f64) -> Self {
        let (m_lat, m_lon) = meters_per_degree(lat);
        LocalFrame { m_lat, m_lon }
    }

    pub fn distance(&self, a: LatLon, b: LatLon) -> f64 {
        let dy = (b.lat - a.lat) * self.m_lat;
        let dx = (b.lon - a.lon) * self.m_lon;
        sqrt(dx * dx + dy * dy)
    }

    /// [`approx_combined_distance`] in this frame.
    pub fn combined(&self, p: Pose, q: Pose, theta: f64) -> f64 {
        let v = self.distance(p.location, q.location);
        let h = theta * angle_distance(p.heading, q.heading) / 180.0;
        sqrt(v * v + h * h)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CircularMean {
    pub mean: Heading,
    /// The resultant vector vanished (antipodal mass); `mean` is then the
    /// first input heading.
    pub degenerate: bool,
}

/// Accumulates unit vectors for a circular mean.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct CircularAccumulator {
    sum_sin: f64,
    sum_cos: f64,
    count: u64,
    first: Option<Heading>,
}

impl CircularAccumulator {
    pub fn push(&mut self, h: Heading) {
        let r = h.0 * DEG;
        self.sum_sin += sin(r);
        self.sum_cos += cos(r);
        self.count += 1;
        if self.first.is_none() {
            self.first = Some(h);
        }
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn mean(&self) -> Option<CircularMean> {
        let first = self.first?;
        let n = self.count as f64;
        let (s, c) = (self.sum_sin / n, self.sum_cos / n);
        if fabs(s) < 1e-12 && fabs(c) < 1e-12 {
            return Some(CircularMean { mean: first, degenerate: true });
        }
        Some(CircularMean { mean: Heading::wrap(atan2(s, c) / DEG), degenerate: false })
    }
}

/// `atan2(mean sin, mean cos)`; `None` for an empty input.
pub fn circular_mean<I>(headings: I) -> Option<CircularMean>
where
    I: IntoIterator<Item = Heading>,
{
    let mut acc = CircularAccumulator::default();
    headings.into_iter().for_each(|h| acc.push(h));
    acc.mean()
}

/// Mean angular deviation from `mean`; 0 for an empty input.
pub fn heading_variability<I>(headings: I, mean: Heading) -> f64
where
    I: IntoIterator<Item = Heading>,
{
    let mut sum = 0.0;
    let mut n = 0usize;
    for h in headings {
        sum += angle_distance(h, mean);
        n += 1;
    }
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

/// Spherical initial bearing from `a` to `b`.
pub fn initial_bearing(a: LatLon, b: LatLon) -> Result<Heading, GeoError> {
    if a == b {
        return Err(GeoError::UndefinedBearing);
    }
    let (phi1, phi2) = (a.lat * DEG, b.lat * DEG);
    let dl = (b.lon - a.lon) * DEG;
    let y = sin(dl) * cos(phi2);
    let x = cos(phi1) * sin(phi2) - sin(phi1) * cos(phi2) * cos(dl);
    Ok(Heading::wrap(atan2(y, x) / DEG))
}

/// Integer cell coordinate for a value on a regular grid.
pub(crate) fn cell_of(value: f64, size: f64) -> i64 {
    floor(value / size) as i64
}
