//! Cooperative UWB relative localization toolkit.
//!
//! Simulates two-way UWB ranging between initiators on a UAV and ground
//! responders, estimates the tag position (or full position+yaw pose)
//! by nonlinear least squares, flies closed-loop trajectories on either
//! ground-truth or UWB feedback, and extracts ground truth from lidar
//! point clouds by kd-tree tracking. A campaign runner sweeps anchor
//! separations, trajectories and seeds and writes CSV/JSON reports.

pub mod campaign;
pub mod config;
pub mod error;
pub mod estimator;
pub mod flightsim;
pub mod geometry;
pub mod groundtruth;
pub mod metrics;
pub mod ranging;

pub use estimator::{solve_pose, solve_position, PoseEstimate, PositionEstimate, SolverConfig};
pub use flightsim::{run_flight, FeedbackSource, FlightRecord, Trajectory};
pub use geometry::{apply_pose, square_anchor_layout, Pose, TransceiverLayout, Vec3};
pub use ranging::{measure_range, sweep, NoiseModel, RangeMeasurement};
