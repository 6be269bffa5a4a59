//! Error series and distribution summaries for flight records.
//!
//! Positioning error compares the estimate against the true position.
//! Navigation error compares the true position against the commanded
//! path: the planar distance to the vertical line for climbs, and the
//! planar distance to the square perimeter (climb excluded) for square
//! flights.

use serde::{Deserialize, Serialize};

use crate::error::MetricsError;
use crate::flightsim::{FlightRecord, Trajectory};
use crate::geometry::Vec3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorKind {
    Positioning,
    Navigation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorSeries {
    pub kind: ErrorKind,
    pub t: Vec<f64>,
    pub xy: Vec<f64>,
    /// Absent for navigation series where altitude is not part of the
    /// commanded-path comparison.
    pub z: Option<Vec<f64>>,
}

/// Per-sample positioning errors: planar and vertical distance between
/// estimate and truth.
pub fn positioning_errors(record: &FlightRecord) -> Result<ErrorSeries, MetricsError> {
    if !record.has_estimates() {
        return Err(MetricsError::NoEstimates);
    }
    let mut t = Vec::new();
    let mut xy = Vec::new();
    let mut z = Vec::new();
    for s in &record.samples {
        if let Some(est) = s.estimated_position {
            let d = est - s.true_pose.position;
            t.push(s.t);
            xy.push(d.norm_xy());
            z.push(d.z.abs());
        }
    }
    Ok(ErrorSeries { kind: ErrorKind::Positioning, t, xy, z: Some(z) })
}

fn point_to_segment_xy(p: &Vec3, a: &Vec3, b: &Vec3) -> f64 {
    let abx = b.x - a.x;
    let aby = b.y - a.y;
    let apx = p.x - a.x;
    let apy = p.y - a.y;
    let len_sq = abx * abx + aby * aby;
    let s = if len_sq > 0.0 { ((apx * abx + apy * aby) / len_sq).clamp(0.0, 1.0) } else { 0.0 };
    let dx = apx - s * abx;
    let dy = apy - s * aby;
    (dx * dx + dy * dy).sqrt()
}

/// Per-sample navigation errors of the true path against the commanded
/// trajectory.
pub fn navigation_errors(record: &FlightRecord) -> Result<ErrorSeries, MetricsError> {
    match record.meta.trajectory {
        Trajectory::Vertical { .. } => {
            let mut t = Vec::new();
            let mut xy = Vec::new();
            for s in &record.samples {
                t.push(s.t);
                xy.push(s.true_pose.position.norm_xy());
            }
            Ok(ErrorSeries { kind: ErrorKind::Navigation, t, xy, z: None })
        }
        Trajectory::Square { .. } => {
            let polyline = record.meta.trajectory.cruise_polyline();
            let cruise_start = record.meta.cruise_start_time;
            let mut t = Vec::new();
            let mut xy = Vec::new();
            for s in &record.samples {
                if s.t < cruise_start {
                    continue;
                }
                let d = polyline
                    .windows(2)
                    .map(|w| point_to_segment_xy(&s.true_pose.position, &w[0], &w[1]))
                    .fold(f64::INFINITY, f64::min);
                t.push(s.t);
                xy.push(d);
            }
            Ok(ErrorSeries { kind: ErrorKind::Navigation, t, xy, z: None })
        }
    }
}

/// Box-plot style summary: type-7 (linear interpolation) quartiles,
/// whiskers at 1.5 IQR clipped to the data range.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoxStats {
    pub median: f64,
    pub q1: f64,
    pub q3: f64,
    pub whisker_low: f64,
    pub whisker_high: f64,
    pub mean: f64,
    pub max: f64,
}

fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = (n - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn box_stats(values: &[f64]) -> Result<BoxStats, MetricsError> {
    if values.is_empty() {
        return Err(MetricsError::EmptySeries);
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let q1 = quantile_sorted(&sorted, 0.25);
    let median = quantile_sorted(&sorted, 0.50);
    let q3 = quantile_sorted(&sorted, 0.75);
    let iqr = q3 - q1;
    let lo_fence = q1 - 1.5 * iqr;
    let hi_fence = q3 + 1.5 * iqr;
    let whisker_low = sorted.iter().copied().find(|v| *v >= lo_fence).unwrap_or(sorted[0]);
    let whisker_high = sorted
        .iter()
        .rev()
        .copied()
        .find(|v| *v <= hi_fence)
        .unwrap_or(*sorted.last().unwrap());
    let mean = sorted.iter().sum::<f64>() / sorted.len() as f64;
    Ok(BoxStats {
        median,
        q1,
        q3,
        whisker_low,
        whisker_high,
        mean,
        max: *sorted.last().unwrap(),
    })
}

/// Fraction of samples strictly above the threshold.
pub fn fraction_above(values: &[f64], threshold: f64) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    values.iter().filter(|v| **v > threshold).count() as f64 / values.len() as f64
}

pub fn median(values: &[f64]) -> Result<f64, MetricsError> {
    if values.is_empty() {
        return Err(MetricsError::EmptySeries);
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    Ok(quantile_sorted(&sorted, 0.5))
}
