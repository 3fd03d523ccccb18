//! Simplification error measures.
//!
//! Each measure scores an original point `p` (and, for the direction and
//! speed measures, its outgoing original segment `p -> p_next`) against the
//! anchor segment `ps -> pe` that approximates it after simplification.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::model::{Point, Trajectory};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ErrorMeasure {
    /// Synchronized Euclidean distance (meters).
    Sed,
    /// Perpendicular Euclidean distance (meters).
    Ped,
    /// Direction-aware distance (radians).
    Dad,
    /// Speed-aware distance (meters per second).
    Sad,
}

impl ErrorMeasure {
    pub const ALL: [ErrorMeasure; 4] = [ErrorMeasure::Sed, ErrorMeasure::Ped, ErrorMeasure::Dad, ErrorMeasure::Sad];

    pub fn name(self) -> &'static str {
        match self {
            ErrorMeasure::Sed => "sed",
            ErrorMeasure::Ped => "ped",
            ErrorMeasure::Dad => "dad",
            ErrorMeasure::Sad => "sad",
        }
    }

    /// Whether the measure reads the point's outgoing original segment.
    pub fn needs_next(self) -> bool {
        matches!(self, ErrorMeasure::Dad | ErrorMeasure::Sad)
    }
}

impl fmt::Display for ErrorMeasure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ErrorMeasure {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        match s.to_ascii_lowercase().as_str() {
            "sed" => Ok(ErrorMeasure::Sed),
            "ped" => Ok(ErrorMeasure::Ped),
            "dad" => Ok(ErrorMeasure::Dad),
            "sad" => Ok(ErrorMeasure::Sad),
            other => Err(Error::Config(format!("unknown error measure {other:?}"))),
        }
    }
}

/// Distance from `p` to the position on `ps -> pe` at time `p.t`.
/// Falls back to the distance to `ps` when the segment has no duration.
#[inline]
pub fn sed(ps: &Point, pe: &Point, p: &Point) -> f64 {
    let dt = pe.t - ps.t;
    if dt == 0.0 {
        return p.spatial_distance(ps);
    }
    let ratio = (p.t - ps.t) / dt;
    let sx = ps.x + ratio * (pe.x - ps.x);
    let sy = ps.y + ratio * (pe.y - ps.y);
    (p.x - sx).hypot(p.y - sy)
}

/// Distance from `p` to the line through `ps` and `pe`.
#[inline]
pub fn ped(ps: &Point, pe: &Point, p: &Point) -> f64 {
    let dx = pe.x - ps.x;
    let dy = pe.y - ps.y;
    let len = dx.hypot(dy);
    if len == 0.0 {
        return p.spatial_distance(ps);
    }
    ((p.x - ps.x) * dy - (p.y - ps.y) * dx).abs() / len
}

/// Unsigned heading difference in `[0, pi]`; zero-length vectors score 0.
#[inline]
pub fn dad(ps: &Point, pe: &Point, p: &Point, p_next: &Point) -> f64 {
    let (ax, ay) = (pe.x - ps.x, pe.y - ps.y);
    let (bx, by) = (p_next.x - p.x, p_next.y - p.y);
    if (ax == 0.0 && ay == 0.0) || (bx == 0.0 && by == 0.0) {
        return 0.0;
    }
    let cross = ax * by - ay * bx;
    let dot = ax * bx + ay * by;
    cross.abs().atan2(dot).clamp(0.0, PI)
}

#[inline]
fn speed(a: &Point, b: &Point) -> f64 {
    let dt = b.t - a.t;
    if dt <= 0.0 {
        0.0
    } else {
        a.spatial_distance(b) / dt
    }
}

/// Absolute speed difference between the original segment and the anchor.
#[inline]
pub fn sad(ps: &Point, pe: &Point, p: &Point, p_next: &Point) -> f64 {
    (speed(p, p_next) - speed(ps, pe)).abs()
}

/// Error of `p` with respect to the anchor segment `ps -> pe`.
///
/// DAD and SAD read the original segment `p -> p_next`; without a next point
/// (the last point of a trajectory) they score 0.
#[inline]
pub fn point_error(measure: ErrorMeasure, ps: &Point, pe: &Point, p: &Point, p_next: Option<&Point>) -> f64 {
    match measure {
        ErrorMeasure::Sed => sed(ps, pe, p),
        ErrorMeasure::Ped => ped(ps, pe, p),
        ErrorMeasure::Dad => p_next.map_or(0.0, |n| dad(ps, pe, p, n)),
        ErrorMeasure::Sad => p_next.map_or(0.0, |n| sad(ps, pe, p, n)),
    }
}

/// Error of original point `i` when approximated by the segment `start -> end` of `traj`.
#[inline]
pub fn indexed_point_error(measure: ErrorMeasure, traj: &Trajectory, start: usize, end: usize, i: usize) -> f64 {
    let pts = traj.points();
    point_error(measure, &pts[start], &pts[end], &pts[i], pts.get(i + 1))
}

/// Maximum point error over the original points in `[start, end)`.
pub fn segment_error(measure: ErrorMeasure, traj: &Trajectory, start: usize, end: usize) -> f64 {
    debug_assert!(start < end && end < traj.len());
    (start..end).fold(0.0, |acc: f64, i| acc.max(indexed_point_error(measure, traj, start, end, i)))
}

/// Maximum segment error over consecutive kept indices.
pub fn trajectory_error(measure: ErrorMeasure, traj: &Trajectory, kept: &[usize]) -> f64 {
    kept.windows(2)
        .fold(0.0, |acc: f64, w| acc.max(segment_error(measure, traj, w[0], w[1])))
}
