//! Error types shared across the crate.

use thiserror::Error;

use crate::geometry::Vec3;

#[derive(Debug, Error)]
pub enum GeometryError {
    #[error("offset components must be finite")]
    NonFiniteOffset,
    #[error("offset magnitude {0} m exceeds the small-UAV bound")]
    OffsetTooLarge(f64),
    #[error("layout needs at least one initiator")]
    NoInitiators,
    #[error("layout needs at least one responder")]
    NoResponders,
    #[error("responder {0} has non-finite coordinates")]
    NonFiniteResponder(usize),
    #[error("responder positions must be pairwise distinct")]
    DuplicateResponders,
    #[error("initiator offsets must be pairwise distinct")]
    DuplicateInitiators,
    #[error("separation must be positive, got {0}")]
    NonPositiveSeparation(f64),
}

#[derive(Debug, Error)]
pub enum SolveError {
    #[error("underdetermined: {got} measurements, at least {need} required")]
    Underdetermined { got: usize, need: usize },
    #[error("degenerate responder geometry: anchors are collinear")]
    DegenerateGeometry,
    #[error("yaw is unobservable with a single initiator")]
    YawUnobservable,
    #[error("measurement references responder {0} outside the layout")]
    UnknownResponder(usize),
    #[error("measurement references initiator {0} outside the layout")]
    UnknownInitiator(usize),
}

#[derive(Debug, Error)]
pub enum FlightError {
    #[error(transparent)]
    Solve(#[from] SolveError),
    #[error("estimator diverged: {count} consecutive non-converged solves at t = {t} s")]
    EstimatorDiverged { count: usize, t: f64 },
    #[error("trajectory parameter out of range: {0}")]
    BadTrajectory(String),
}

#[derive(Debug, Error)]
pub enum TrackError {
    #[error("empty point cloud frame")]
    EmptyFrame,
    #[error("track lost: no points within gate radius of prediction ({predicted:?})")]
    TrackLost { predicted: Vec3 },
}

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("flight record carries no position estimates")]
    NoEstimates,
    #[error("empty series")]
    EmptySeries,
}
