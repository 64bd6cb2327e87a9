//! Mobility-trace ingestion: format adapters, region extraction, per-window
//! request binning, and synthetic trace generation for deterministic tests.
//!
//! Four input formats are supported; each adapter normalizes into the
//! canonical planar form (one sample line per format):
//!
//! | format        | sample line                                              |
//! |---------------|----------------------------------------------------------|
//! | `canonical`   | `7,1213084687,512.5,9100.0` (vehicle, unix s, x m, y m)  |
//! | `cabspotting` | `[abgibo] 37.75134 -122.39488 0 1213084687` (vehicle, lat, lon, occupancy, unix s; the vehicle column may be absent in single-taxi files) |
//! | `tdrive`      | `368,2008-02-02 15:36:08,116.51172,39.92123` (vehicle, local datetime, lon, lat) |
//! | `rome`        | `156;2014-02-01 00:00:00.739166+01;POINT(41.8945 12.4839)` (vehicle; datetime with utc offset; lat lon) |
//!
//! Geographic formats are projected to planar meters with an equirectangular
//! projection about the point centroid, which is accurate to well under a
//! meter across a 15 km study region.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use chrono::NaiveDateTime;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::scenario::{BoundingBox, Point, ServiceRequest};

/// Mean Earth radius in meters, used by the equirectangular projection.
const EARTH_RADIUS_M: f64 = 6_371_000.0;

/// Supported trace file formats.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum TraceFormat {
    /// Already-planar CSV `vehicle,timestamp,x,y`.
    Canonical,
    /// Whitespace-separated `[vehicle] lat lon occupancy unixtime`.
    Cabspotting,
    /// CSV `vehicle,datetime,lon,lat`.
    TDrive,
    /// Semicolon-separated `vehicle;datetime+offset;POINT(lat lon)`.
    Rome,
}

impl std::str::FromStr for TraceFormat {
    type Err = TraceError;

    fn from_str(s: &str) -> Result<Self, TraceError> {
        match s.to_ascii_lowercase().as_str() {
            "canonical" => Ok(TraceFormat::Canonical),
            "cabspotting" => Ok(TraceFormat::Cabspotting),
            "tdrive" | "t-drive" => Ok(TraceFormat::TDrive),
            "rome" => Ok(TraceFormat::Rome),
            other => Err(TraceError::UnknownFormat(other.to_string())),
        }
    }
}

/// One normalized vehicle fix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TracePoint {
    pub vehicle: u64,
    /// Unix seconds.
    pub timestamp: i64,
    /// Planar position in meters (projected for geographic formats).
    pub position: Point,
}

/// Parser output: normalized points plus a count of rejected input lines.
#[derive(Debug, Clone, PartialEq)]
pub struct ParsedTrace {
    /// Points sorted by (vehicle, timestamp).
    pub points: Vec<TracePoint>,
    /// Lines that could not be parsed (reported, never fatal on their own).
    pub rejected_lines: usize,
}

/// The per-window batch of service requests.
#[derive(Debug, Clone, PartialEq)]
pub struct RequestWindow {
    pub index: u32,
    /// Requests sorted by vehicle id.
    pub requests: Vec<ServiceRequest>,
    /// Per-service request counts; `arrivals[s]` is the offered load for
    /// service `s` this window.
    pub arrivals: Vec<u32>,
}

/// Vehicle movement models for synthetic traces.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mobility {
    /// Each vehicle keeps one uniformly drawn position.
    Stationary,
    /// Vehicles move at constant speed toward uniformly drawn waypoints.
    RandomWaypoint,
}

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("unrecognized trace format `{0}` (expected canonical, cabspotting, tdrive, or rome)")]
    UnknownFormat(String),
    #[error("zero valid lines in trace input ({rejected} rejected)")]
    NoValidLines { rejected: usize },
    #[error("no trace points to bin")]
    EmptyTrace,
    #[error("window_seconds must be positive")]
    ZeroWindow,
    #[error("trace I/O failed: {0}")]
    Io(#[from] std::io::Error),
}

// ---------------------------------------------------------------------------
// Parsing
// ---------------------------------------------------------------------------

/// A raw record before projection: geographic formats carry (lat, lon),
/// canonical carries planar (y, x) in the same slots.
struct RawFix {
    vehicle_key: VehicleKey,
    timestamp: i64,
    lat_or_y: f64,
    lon_or_x: f64,
}

enum VehicleKey {
    Numeric(u64),
    Named(String),
}

/// Parse a trace stream into normalized, projected points.
///
/// Invalid lines are counted in [`ParsedTrace::rejected_lines`]; a stream
/// with no valid line at all is an error. Output points are sorted by
/// (vehicle, timestamp) so per-vehicle timestamps are nondecreasing.
pub fn parse_trace(input: impl BufRead, format: TraceFormat) -> Result<ParsedTrace, TraceError> {
    let mut raw = Vec::new();
    let mut rejected = 0usize;
    for line in input.lines() {
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        match parse_line(trimmed, format) {
            Some(fix) => raw.push(fix),
            None => rejected += 1,
        }
    }
    if raw.is_empty() {
        return Err(TraceError::NoValidLines { rejected });
    }

    // Non-numeric vehicle names map to dense ids in first-appearance order,
    // offset past the numeric id range actually used so the two never clash.
    let max_numeric = raw
        .iter()
        .filter_map(|f| match f.vehicle_key {
            VehicleKey::Numeric(n) => Some(n),
            VehicleKey::Named(_) => None,
        })
        .max();
    let name_base = max_numeric.map_or(0, |m| m + 1);
    let mut name_ids: BTreeMap<String, u64> = BTreeMap::new();
    let mut next_name_id = name_base;
    let mut vehicle_id = |key: &VehicleKey| -> u64 {
        match key {
            VehicleKey::Numeric(n) => *n,
            VehicleKey::Named(name) => *name_ids.entry(name.clone()).or_insert_with(|| {
                let id = next_name_id;
                next_name_id += 1;
                id
            }),
        }
    };

    let mut points: Vec<TracePoint> = if format == TraceFormat::Canonical {
        raw.iter()
            .map(|f| TracePoint {
                vehicle: vehicle_id(&f.vehicle_key),
                timestamp: f.timestamp,
                position: Point::new(f.lon_or_x, f.lat_or_y),
            })
            .collect()
    } else {
        // Equirectangular projection about the centroid.
        let n = raw.len() as f64;
        let lat0 = raw.iter().map(|f| f.lat_or_y).sum::<f64>() / n;
        let lon0 = raw.iter().map(|f| f.lon_or_x).sum::<f64>() / n;
        let cos_lat0 = lat0.to_radians().cos();
        raw.iter()
            .map(|f| TracePoint {
                vehicle: vehicle_id(&f.vehicle_key),
                timestamp: f.timestamp,
                position: Point::new(
                    EARTH_RADIUS_M * (f.lon_or_x - lon0).to_radians() * cos_lat0,
                    EARTH_RADIUS_M * (f.lat_or_y - lat0).to_radians(),
                ),
            })
            .collect()
    };

    points.sort_by(|a, b| {
        (a.vehicle, a.timestamp)
            .cmp(&(b.vehicle, b.timestamp))
            .then(a.position.x.total_cmp(&b.position.x))
            .then(a.position.y.total_cmp(&b.position.y))
    });
    Ok(ParsedTrace { points, rejected_lines: rejected })
}

fn parse_line(line: &str, format: TraceFormat) -> Option<RawFix> {
    match format {
        TraceFormat::Canonical => {
            let mut it = line.split(',');
            let vehicle = VehicleKey::Numeric(it.next()?.trim().parse().ok()?);
            let timestamp = it.next()?.trim().parse().ok()?;
            let x: f64 = it.next()?.trim().parse().ok()?;
            let y: f64 = it.next()?.trim().parse().ok()?;
            if it.next().is_some() || !x.is_finite() || !y.is_finite() {
                return None;
            }
            Some(RawFix { vehicle_key: vehicle, timestamp, lat_or_y: y, lon_or_x: x })
        }
        TraceFormat::Cabspotting => {
            let fields: Vec<&str> = line.split_whitespace().collect();
            let (vehicle_key, rest) = match fields.len() {
                4 => (VehicleKey::Numeric(0), &fields[0..]),
                5 => {
                    let name = fields[0].trim_matches(|c| c == '[' || c == ']');
                    let key = match name.parse::<u64>() {
                        Ok(n) => VehicleKey::Numeric(n),
                        Err(_) => VehicleKey::Named(name.to_string()),
                    };
                    (key, &fields[1..])
                }
                _ => return None,
            };
            let lat: f64 = rest[0].parse().ok()?;
            let lon: f64 = rest[1].parse().ok()?;
            let _occupancy: i64 = rest[2].parse().ok()?;
            let timestamp: i64 = rest[3].parse().ok()?;
            valid_geo(lat, lon)?;
            Some(RawFix { vehicle_key, timestamp, lat_or_y: lat, lon_or_x: lon })
        }
        TraceFormat::TDrive => {
            let mut it = line.split(',');
            let vehicle_key = vehicle_key_from(it.next()?.trim());
            let timestamp = parse_datetime(it.next()?.trim())?;
            let lon: f64 = it.next()?.trim().parse().ok()?;
            let lat: f64 = it.next()?.trim().parse().ok()?;
            if it.next().is_some() {
                return None;
            }
            valid_geo(lat, lon)?;
            Some(RawFix { vehicle_key, timestamp, lat_or_y: lat, lon_or_x: lon })
        }
        TraceFormat::Rome => {
            let mut it = line.split(';');
            let vehicle_key = vehicle_key_from(it.next()?.trim());
            let timestamp = parse_datetime(it.next()?.trim())?;
            let point = it.next()?.trim();
            let inner = point.strip_prefix("POINT(")?.strip_suffix(')')?;
            let mut coords = inner.split_whitespace();
            let lat: f64 = coords.next()?.parse().ok()?;
            let lon: f64 = coords.next()?.parse().ok()?;
            valid_geo(lat, lon)?;
            Some(RawFix { vehicle_key, timestamp, lat_or_y: lat, lon_or_x: lon })
        }
    }
}

fn vehicle_key_from(token: &str) -> VehicleKey {
    match token.parse::<u64>() {
        Ok(n) => VehicleKey::Numeric(n),
        Err(_) => VehicleKey::Named(token.to_string()),
    }
}

fn valid_geo(lat: f64, lon: f64) -> Option<()> {
    ((-90.0..=90.0).contains(&lat) && (-180.0..=180.0).contains(&lon)).then_some(())
}

/// Parse `YYYY-MM-DD HH:MM:SS[.frac][±HH[:MM]]` into unix seconds,
/// interpreting a missing offset as UTC.
fn parse_datetime(s: &str) -> Option<i64> {
    // Split off a trailing utc offset if present (a sign after the date part).
    let (body, offset_secs) = match s[10..].find(['+', '-']) {
        Some(rel) => {
            let idx = 10 + rel;
            (&s[..idx], parse_utc_offset(&s[idx..])?)
        }
        None => (s, 0i64),
    };
    // Drop fractional seconds; binning works on whole seconds.
    let body = body.split('.').next()?;
    let naive = NaiveDateTime::parse_from_str(body, "%Y-%m-%d %H:%M:%S").ok()?;
    Some(naive.and_utc().timestamp() - offset_secs)
}

/// Parse `±HH`, `±HHMM`, or `±HH:MM` into seconds east of UTC.
fn parse_utc_offset(s: &str) -> Option<i64> {
    let sign = match s.as_bytes().first()? {
        b'+' => 1i64,
        b'-' => -1i64,
        _ => return None,
    };
    let digits: String = s[1..].chars().filter(|c| c.is_ascii_digit()).collect();
    let (hours, minutes) = match digits.len() {
        1 | 2 => (digits.parse::<i64>().ok()?, 0),
        4 => (digits[..2].parse::<i64>().ok()?, digits[2..].parse::<i64>().ok()?),
        _ => return None,
    };
    (hours <= 14 && minutes < 60).then_some(sign * (hours * 3600 + minutes * 60))
}

// ---------------------------------------------------------------------------
// Region extraction
// ---------------------------------------------------------------------------

/// An axis-aligned extraction window in projected coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rect {
    pub min_x: f64,
    pub min_y: f64,
    pub max_x: f64,
    pub max_y: f64,
}

impl Rect {
    pub fn new(min_x: f64, min_y: f64, width: f64, height: f64) -> Self {
        assert!(width >= 0.0 && height >= 0.0, "negative rect extent");
        Rect { min_x, min_y, max_x: min_x + width, max_y: min_y + height }
    }

    /// The `width` x `height` rectangle centered on the centroid of `points`.
    pub fn centered_on_points(points: &[TracePoint], width: f64, height: f64) -> Self {
        let n = points.len().max(1) as f64;
        let cx = points.iter().map(|p| p.position.x).sum::<f64>() / n;
        let cy = points.iter().map(|p| p.position.y).sum::<f64>() / n;
        Rect::new(cx - width / 2.0, cy - height / 2.0, width, height)
    }

    pub fn contains(&self, p: &Point) -> bool {
        p.x >= self.min_x && p.x <= self.max_x && p.y >= self.min_y && p.y <= self.max_y
    }
}

/// Keep exactly the points inside the closed rectangle, re-based so the
/// rectangle's corner becomes the origin.
pub fn extract_region(points: &[TracePoint], rect: &Rect) -> Vec<TracePoint> {
    points
        .iter()
        .filter(|p| rect.contains(&p.position))
        .map(|p| TracePoint {
            vehicle: p.vehicle,
            timestamp: p.timestamp,
            position: Point::new(p.position.x - rect.min_x, p.position.y - rect.min_y),
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Request binning
// ---------------------------------------------------------------------------

/// The 64-bit finalizer of the splitmix64 generator; used as a stateless,
/// seedable hash so service draws are reproducible under any input order or
/// parallel binning.
fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Uniform service draw for a (vehicle, window) pair under `seed`.
fn draw_service(seed: u64, vehicle: u64, window: u32, n_services: usize) -> u16 {
    let h = mix64(mix64(seed ^ mix64(vehicle)) ^ u64::from(window));
    // Multiply-shift keeps the draw uniform without rejection sampling.
    ((u128::from(h) * n_services as u128) >> 64) as u16
}

/// Bin trace points into per-window request batches.
///
/// Each vehicle active in a window contributes exactly one request, located
/// at the vehicle's last fix in that window (ties on the timestamp break by
/// position so the result is independent of input order). The requested
/// service is a seeded uniform hash draw per (vehicle, window), so re-runs
/// and reorderings are bit-identical. Windows with no active vehicle still
/// appear, keeping window indices aligned with attack schedules.
pub fn bin_requests(
    points: &[TracePoint],
    window_seconds: u32,
    n_services: usize,
    seed: u64,
) -> Result<Vec<RequestWindow>, TraceError> {
    if window_seconds == 0 {
        return Err(TraceError::ZeroWindow);
    }
    if points.is_empty() {
        return Err(TraceError::EmptyTrace);
    }
    assert!(n_services > 0, "n_services must be positive");

    let t0 = points.iter().map(|p| p.timestamp).min().expect("nonempty");
    let span = i64::from(window_seconds);

    // Last fix per (window, vehicle); BTreeMap gives deterministic order.
    let mut last_fix: BTreeMap<(u32, u64), TracePoint> = BTreeMap::new();
    for p in points {
        let window = ((p.timestamp - t0) / span) as u32;
        last_fix
            .entry((window, p.vehicle))
            .and_modify(|cur| {
                let newer = (p.timestamp, p.position.x, p.position.y);
                let old = (cur.timestamp, cur.position.x, cur.position.y);
                if newer > old {
                    *cur = *p;
                }
            })
            .or_insert(*p);
    }

    let max_window = last_fix.keys().map(|&(w, _)| w).max().unwrap_or(0);
    let mut windows: Vec<RequestWindow> = (0..=max_window)
        .map(|index| RequestWindow {
            index,
            requests: Vec::new(),
            arrivals: vec![0; n_services],
        })
        .collect();

    for ((window, vehicle), fix) in last_fix {
        let service = draw_service(seed, vehicle, window, n_services);
        let w = &mut windows[window as usize];
        w.arrivals[service as usize] += 1;
        w.requests.push(ServiceRequest {
            vehicle,
            location: fix.position,
            time: window,
            service,
        });
    }
    Ok(windows)
}

// ---------------------------------------------------------------------------
// Synthetic traces
// ---------------------------------------------------------------------------

/// Constant vehicle speed for the random-waypoint model, meters/second.
const WAYPOINT_SPEED_MPS: f64 = 12.0;

/// Generate a reproducible synthetic trace: one fix per vehicle per window,
/// spaced `window_seconds` apart inside `bbox`. A zero-area box degenerates
/// to every position at the origin.
pub fn synth_trace(
    n_vehicles: u32,
    n_windows: u32,
    bbox: &BoundingBox,
    mobility: Mobility,
    window_seconds: u32,
    seed: u64,
) -> Vec<TracePoint> {
    assert!(n_vehicles >= 1, "need at least one vehicle");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let draw_point = |rng: &mut ChaCha8Rng| -> Point {
        let x = if bbox.width_m > 0.0 { rng.random_range(0.0..=bbox.width_m) } else { 0.0 };
        let y = if bbox.height_m > 0.0 { rng.random_range(0.0..=bbox.height_m) } else { 0.0 };
        Point::new(x, y)
    };

    let mut positions: Vec<Point> = (0..n_vehicles).map(|_| draw_point(&mut rng)).collect();
    let mut targets: Vec<Point> = match mobility {
        Mobility::Stationary => positions.clone(),
        Mobility::RandomWaypoint => (0..n_vehicles).map(|_| draw_point(&mut rng)).collect(),
    };

    let mut out = Vec::with_capacity((n_vehicles * n_windows) as usize);
    for window in 0..n_windows {
        for v in 0..n_vehicles as usize {
            out.push(TracePoint {
                vehicle: v as u64,
                timestamp: i64::from(window) * i64::from(window_seconds),
                position: positions[v],
            });
        }
        if mobility == Mobility::RandomWaypoint && window + 1 < n_windows {
            let step = WAYPOINT_SPEED_MPS * f64::from(window_seconds);
            for v in 0..n_vehicles as usize {
                let mut remaining = step;
                // Walk toward the target, re-drawing waypoints as they are hit.
                while remaining > 0.0 {
                    let to_target = positions[v].dist(&targets[v]);
                    if to_target <= remaining {
                        positions[v] = targets[v];
                        remaining -= to_target;
                        let fresh = draw_point(&mut rng);
                        if fresh == positions[v] {
                            // Degenerate box: nowhere to go.
                            break;
                        }
                        targets[v] = fresh;
                    } else {
                        let f = remaining / to_target;
                        positions[v] = Point::new(
                            positions[v].x + f * (targets[v].x - positions[v].x),
                            positions[v].y + f * (targets[v].y - positions[v].y),
                        );
                        remaining = 0.0;
                    }
                }
            }
        }
    }
    out
}

/// Write points in the canonical CSV form (`vehicle,timestamp,x,y`,
/// millimeter-precision coordinates).
pub fn write_canonical(points: &[TracePoint], mut out: impl Write) -> std::io::Result<()> {
    for p in points {
        writeln!(out, "{},{},{:.3},{:.3}", p.vehicle, p.timestamp, p.position.x, p.position.y)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Cursor;

    fn parse(text: &str, format: TraceFormat) -> ParsedTrace {
        parse_trace(Cursor::new(text.as_bytes()), format).expect("parse")
    }

    #[test]
    fn canonical_line_parses_exactly() {
        let got = parse("7,1213084687,512.5,9100.0\n", TraceFormat::Canonical);
        assert_eq!(got.rejected_lines, 0);
        assert_eq!(
            got.points,
            vec![TracePoint {
                vehicle: 7,
                timestamp: 1_213_084_687,
                position: Point::new(512.5, 9100.0),
            }]
        );
    }

    #[test]
    fn empty_stream_is_an_error() {
        let err = parse_trace(Cursor::new(b"" as &[u8]), TraceFormat::Canonical).unwrap_err();
        assert!(matches!(err, TraceError::NoValidLines { .. }));
    }

    #[test]
    fn malformed_lines_are_counted_not_fatal() {
        let text = "1,100,10.0,20.0\n2,101,30.0,40.0\nnot,a,line\n3,102,50.0,60.0\n";
        let got = parse(text, TraceFormat::Canonical);
        assert_eq!(got.points.len(), 3);
        assert_eq!(got.rejected_lines, 1);
    }

    #[test]
    fn unknown_format_tag_is_rejected() {
        let err = "gpx".parse::<TraceFormat>().unwrap_err();
        assert!(matches!(err, TraceError::UnknownFormat(_)));
        assert_eq!("T-Drive".parse::<TraceFormat>().unwrap(), TraceFormat::TDrive);
    }

    #[test]
    fn cabspotting_lines_project_around_centroid() {
        // Two fixes of one unnamed taxi, ~222 m apart in latitude.
        let text = "37.75000 -122.39000 0 1213084687\n37.75200 -122.39000 1 1213084747\n";
        let got = parse(text, TraceFormat::Cabspotting);
        assert_eq!(got.points.len(), 2);
        assert_eq!(got.points[0].vehicle, 0);
        let dy = got.points[1].position.y - got.points[0].position.y;
        // 0.002 degrees of latitude = 0.002 * pi/180 * R = 222.4 m.
        assert!((dy - 222.39).abs() < 0.5, "dy = {dy}");
        // Centroid projection keeps coordinates near the origin.
        assert!(got.points.iter().all(|p| p.position.x.abs() < 1000.0));
    }

    #[test]
    fn cabspotting_named_vehicles_get_stable_ids() {
        let text = "[newabboip] 37.75 -122.39 0 100\n[enyenewl] 37.76 -122.38 0 101\n\
                    [newabboip] 37.77 -122.37 0 102\n";
        let got = parse(text, TraceFormat::Cabspotting);
        let mut vehicles: Vec<u64> = got.points.iter().map(|p| p.vehicle).collect();
        vehicles.dedup();
        assert_eq!(vehicles.len(), 2, "{vehicles:?}");
    }

    #[test]
    fn tdrive_datetime_and_lonlat_order() {
        let text = "368,2008-02-02 15:36:08,116.51172,39.92123\n\
                    368,2008-02-02 15:46:08,116.51135,39.93883\n";
        let got = parse(text, TraceFormat::TDrive);
        assert_eq!(got.points.len(), 2);
        assert_eq!(got.points[0].vehicle, 368);
        assert_eq!(got.points[1].timestamp - got.points[0].timestamp, 600);
        // Latitude difference ~0.0176 deg = ~1956 m in y.
        let dy = got.points[1].position.y - got.points[0].position.y;
        assert!((dy - 1956.0).abs() < 5.0, "dy = {dy}");
    }

    #[test]
    fn rome_semicolon_point_syntax() {
        let text = "156;2014-02-01 00:00:00.739166+01;POINT(41.8945 12.4839)\n\
                    156;2014-02-01 00:00:30.000000+01;POINT(41.8946 12.4840)\n";
        let got = parse(text, TraceFormat::Rome);
        assert_eq!(got.points.len(), 2);
        assert_eq!(got.points[1].timestamp - got.points[0].timestamp, 30);
        // +01 offset: 2014-02-01T00:00:00+01:00 = 2014-01-31T23:00:00Z.
        assert_eq!(got.points[0].timestamp, 1_391_209_200);
    }

    #[test]
    fn datetime_offset_variants() {
        assert_eq!(parse_datetime("2014-02-01 00:00:00+01"), Some(1_391_209_200));
        assert_eq!(parse_datetime("2014-02-01 00:00:00+0100"), Some(1_391_209_200));
        assert_eq!(parse_datetime("2014-02-01 00:00:00+01:00"), Some(1_391_209_200));
        assert_eq!(parse_datetime("2014-02-01 00:00:00"), Some(1_391_212_800));
        assert_eq!(
            parse_datetime("2014-02-01 01:00:00-02").unwrap(),
            1_391_212_800 + 3 * 3600
        );
        assert_eq!(parse_datetime("2014-13-01 00:00:00"), None);
    }

    fn pt(vehicle: u64, timestamp: i64, x: f64, y: f64) -> TracePoint {
        TracePoint { vehicle, timestamp, position: Point::new(x, y) }
    }

    #[test]
    fn extract_region_rebases_center_point() {
        let rect = Rect::new(1000.0, 2000.0, 15_000.0, 15_000.0);
        let inside = pt(1, 0, 8500.0, 9500.0); // rect center
        let got = extract_region(&[inside], &rect);
        assert_eq!(got.len(), 1);
        assert_eq!(got[0].position, Point::new(7500.0, 7500.0));
    }

    #[test]
    fn extract_region_drops_outside_points() {
        let rect = Rect::new(0.0, 0.0, 15_000.0, 15_000.0);
        let outside = pt(1, 0, 15_001.0, 10.0);
        assert!(extract_region(&[outside], &rect).is_empty());
    }

    #[test]
    fn extract_region_conserves_inside_points() {
        let rect = Rect::new(0.0, 0.0, 100.0, 100.0);
        let pts: Vec<TracePoint> =
            (0..25).map(|i| pt(i, i as i64, (i % 10) as f64 * 10.0, (i / 5) as f64 * 20.0)).collect();
        assert_eq!(extract_region(&pts, &rect).len(), pts.len());
    }

    #[test]
    fn one_vehicle_one_window_yields_one_request() {
        let windows = bin_requests(&[pt(9, 100, 5.0, 5.0)], 60, 8, 1).unwrap();
        assert_eq!(windows.len(), 1);
        assert_eq!(windows[0].requests.len(), 1);
        assert_eq!(windows[0].arrivals.iter().sum::<u32>(), 1);
        assert_eq!(windows[0].requests[0].vehicle, 9);
    }

    #[test]
    fn service_draws_are_roughly_uniform() {
        // 240 vehicles in one window over 8 services: each empirical share
        // should sit comfortably inside [0.05, 0.25] around the uniform 0.125.
        let pts: Vec<TracePoint> = (0..240).map(|v| pt(v, 0, v as f64, 0.0)).collect();
        let windows = bin_requests(&pts, 60, 8, 42).unwrap();
        assert_eq!(windows.len(), 1);
        let total: u32 = windows[0].arrivals.iter().sum();
        assert_eq!(total, 240);
        for (s, &count) in windows[0].arrivals.iter().enumerate() {
            let share = f64::from(count) / 240.0;
            assert!((0.05..=0.25).contains(&share), "service {s} share {share}");
        }
    }

    #[test]
    fn binning_is_deterministic_and_reorder_invariant() {
        let mut pts: Vec<TracePoint> = Vec::new();
        for v in 0..40u64 {
            for w in 0..5i64 {
                pts.push(pt(v, w * 60 + (v as i64 % 7), (v * 3) as f64, (w * 11) as f64));
            }
        }
        let a = bin_requests(&pts, 60, 8, 7).unwrap();
        let b = bin_requests(&pts, 60, 8, 7).unwrap();
        assert_eq!(a, b);

        let mut shuffled = pts.clone();
        shuffled.reverse();
        shuffled.swap(3, 77);
        let c = bin_requests(&shuffled, 60, 8, 7).unwrap();
        assert_eq!(a, c);
    }

    #[test]
    fn last_fix_in_window_wins() {
        let pts = vec![pt(1, 0, 0.0, 0.0), pt(1, 59, 500.0, 600.0), pt(1, 30, 250.0, 250.0)];
        let windows = bin_requests(&pts, 60, 4, 0).unwrap();
        assert_eq!(windows[0].requests[0].location, Point::new(500.0, 600.0));
    }

    #[test]
    fn empty_windows_are_preserved() {
        // Fixes in windows 0 and 2 only; window 1 must still exist.
        let pts = vec![pt(1, 0, 0.0, 0.0), pt(1, 130, 5.0, 5.0)];
        let windows = bin_requests(&pts, 60, 4, 0).unwrap();
        assert_eq!(windows.len(), 3);
        assert!(windows[1].requests.is_empty());
        assert_eq!(windows[1].arrivals, vec![0; 4]);
    }

    #[test]
    fn binning_conserves_active_pairs() {
        let mut pts = Vec::new();
        for v in 0..13u64 {
            for w in 0..4i64 {
                if (v + w as u64) % 3 != 0 {
                    pts.push(pt(v, w * 30, v as f64, w as f64));
                }
            }
        }
        let mut expected: BTreeMap<(u32, u64), u32> = BTreeMap::new();
        for p in &pts {
            *expected.entry(((p.timestamp / 30) as u32, p.vehicle)).or_default() += 1;
        }
        let windows = bin_requests(&pts, 30, 5, 99).unwrap();
        let total: u32 = windows.iter().flat_map(|w| w.arrivals.iter()).sum();
        assert_eq!(total as usize, expected.len());
    }

    #[test]
    fn zero_window_is_rejected() {
        let err = bin_requests(&[pt(1, 0, 0.0, 0.0)], 0, 4, 0).unwrap_err();
        assert!(matches!(err, TraceError::ZeroWindow));
    }

    #[test]
    fn stationary_vehicles_do_not_move() {
        let bbox = BoundingBox::new(1000.0, 1000.0);
        let pts = synth_trace(2, 3, &bbox, Mobility::Stationary, 60, 5);
        assert_eq!(pts.len(), 6);
        for v in 0..2u64 {
            let fixes: Vec<&TracePoint> = pts.iter().filter(|p| p.vehicle == v).collect();
            assert_eq!(fixes.len(), 3);
            assert!(fixes.windows(2).all(|w| w[0].position == w[1].position));
        }
    }

    #[test]
    fn random_waypoint_is_reproducible() {
        let bbox = BoundingBox::new(15_000.0, 15_000.0);
        let a = synth_trace(10, 6, &bbox, Mobility::RandomWaypoint, 60, 77);
        let b = synth_trace(10, 6, &bbox, Mobility::RandomWaypoint, 60, 77);
        assert_eq!(a, b);
        // And vehicles actually move.
        assert!(a[0].position != a[10].position || a[1].position != a[11].position);
    }

    #[test]
    fn degenerate_box_pins_everything_to_origin() {
        let bbox = BoundingBox::new(0.0, 0.0);
        let pts = synth_trace(3, 2, &bbox, Mobility::RandomWaypoint, 60, 3);
        assert!(pts.iter().all(|p| p.position == Point::ORIGIN));
    }

    #[test]
    fn waypoint_positions_stay_inside_box() {
        let bbox = BoundingBox::new(500.0, 800.0);
        let pts = synth_trace(8, 20, &bbox, Mobility::RandomWaypoint, 120, 11);
        for p in &pts {
            assert!(p.position.x >= 0.0 && p.position.x <= 500.0);
            assert!(p.position.y >= 0.0 && p.position.y <= 800.0);
        }
    }

    #[test]
    fn canonical_round_trip_is_sub_meter() {
        let bbox = BoundingBox::new(15_000.0, 15_000.0);
        let original = synth_trace(20, 4, &bbox, Mobility::RandomWaypoint, 60, 13);
        let mut buf = Vec::new();
        write_canonical(&original, &mut buf).unwrap();
        let reparsed = parse_trace(Cursor::new(buf), TraceFormat::Canonical).unwrap();
        assert_eq!(reparsed.points.len(), original.len());
        let mut sorted = original.clone();
        sorted.sort_by_key(|p| (p.vehicle, p.timestamp));
        for (a, b) in sorted.iter().zip(&reparsed.points) {
            assert_eq!(a.vehicle, b.vehicle);
            assert_eq!(a.timestamp, b.timestamp);
            assert!(a.position.dist(&b.position) < 1.0);
        }
        // Binning the round-tripped trace gives identical service draws.
        let wa = bin_requests(&sorted, 60, 8, 5).unwrap();
        let wb = bin_requests(&reparsed.points, 60, 8, 5).unwrap();
        for (x, y) in wa.iter().zip(&wb) {
            assert_eq!(x.arrivals, y.arrivals);
        }
    }

    #[test]
    fn geographic_projection_round_trip_stays_sub_meter() {
        // Project a small lat/lon cluster, then invert the projection by hand
        // and compare: over a 15 km box the equirectangular error is < 1 m.
        let text = "1,2008-02-02 15:36:08,116.40000,39.90000\n\
                    2,2008-02-02 15:36:09,116.48000,39.96000\n\
                    3,2008-02-02 15:36:10,116.32000,39.84000\n";
        let got = parse(text, TraceFormat::TDrive);
        let lat0 = (39.90 + 39.96 + 39.84) / 3.0_f64;
        let lon0 = (116.40 + 116.48 + 116.32) / 3.0_f64;
        let cos0 = lat0.to_radians().cos();
        let expect = [(116.40, 39.90), (116.48, 39.96), (116.32, 39.84)];
        for (p, (lon, lat)) in got.points.iter().zip(expect) {
            let lat_back = lat0 + (p.position.y / EARTH_RADIUS_M).to_degrees();
            let lon_back = lon0 + (p.position.x / (EARTH_RADIUS_M * cos0)).to_degrees();
            assert!((lat_back - lat).abs() * 111_000.0 < 1.0);
            assert!((lon_back - lon).abs() * 111_000.0 * cos0 < 1.0);
        }
    }
}
