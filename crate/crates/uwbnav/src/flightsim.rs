//! Closed-loop flight simulation: setpoint generation, a first-order
//! velocity plant, a proportional position controller and per-tick UWB
//! estimation. The same flight can be flown on ground-truth feedback
//! (to measure positioning error in isolation) or on the UWB estimate
//! (to measure navigation error).

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::FlightError;
use crate::estimator::{solve_position, PositionEstimate, SolverConfig};
use crate::geometry::{Pose, TransceiverLayout, Vec3};
use crate::ranging::{sweep, NoiseModel, RangeMeasurement};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Trajectory {
    /// Straight climb from the origin along +z.
    Vertical { target_altitude: f64, speed: f64 },
    /// Climb to altitude, then traverse the corners of a centered
    /// axis-aligned square and return to the first corner.
    Square { side: f64, altitude: f64, speed: f64 },
}

impl Trajectory {
    pub fn validate(&self) -> Result<(), FlightError> {
        let ok = match self {
            Trajectory::Vertical { target_altitude, speed } => {
                *target_altitude > 0.0 && *speed > 0.0
            }
            Trajectory::Square { side, altitude, speed } => {
                *side > 0.0 && *altitude > 0.0 && *speed > 0.0
            }
        };
        if ok {
            Ok(())
        } else {
            Err(FlightError::BadTrajectory(format!("{self:?}")))
        }
    }

    /// Waypoints of the commanded path, starting at the origin.
    pub fn waypoints(&self) -> Vec<Vec3> {
        match *self {
            Trajectory::Vertical { target_altitude, .. } => {
                vec![Vec3::ZERO, Vec3::new(0.0, 0.0, target_altitude)]
            }
            Trajectory::Square { side, altitude, .. } => {
                let h = side / 2.0;
                vec![
                    Vec3::ZERO,
                    Vec3::new(0.0, 0.0, altitude),
                    Vec3::new(-h, -h, altitude),
                    Vec3::new(h, -h, altitude),
                    Vec3::new(h, h, altitude),
                    Vec3::new(-h, h, altitude),
                    Vec3::new(-h, -h, altitude),
                ]
            }
        }
    }

    pub fn speed(&self) -> f64 {
        match *self {
            Trajectory::Vertical { speed, .. } => speed,
            Trajectory::Square { speed, .. } => speed,
        }
    }

    /// Time at which the setpoint reaches the first square corner; the
    /// climb and transit before it are excluded from navigation error.
    /// Zero for vertical flights.
    pub fn cruise_start_time(&self) -> f64 {
        match *self {
            Trajectory::Vertical { .. } => 0.0,
            Trajectory::Square { side, altitude, speed } => {
                let h = side / 2.0;
                (altitude + (2.0 * h * h).sqrt()) / speed
            }
        }
    }

    /// The square perimeter as a closed 2D polyline (corner sequence),
    /// empty for vertical flights.
    pub fn cruise_polyline(&self) -> Vec<Vec3> {
        match *self {
            Trajectory::Vertical { .. } => Vec::new(),
            Trajectory::Square { .. } => self.waypoints()[2..].to_vec(),
        }
    }
}

/// Constant-speed piecewise-linear interpolation along the waypoint
/// path, sampled every `dt`, endpoint included.
pub fn generate_setpoints(traj: &Trajectory, dt: f64) -> Vec<(f64, Vec3)> {
    assert!(dt > 0.0);
    let wps = traj.waypoints();
    let speed = traj.speed();
    let mut cumulative = vec![0.0];
    for w in wps.windows(2) {
        cumulative.push(cumulative.last().unwrap() + w[0].distance(&w[1]));
    }
    let total_len = *cumulative.last().unwrap();
    let total_time = total_len / speed;
    let steps = (total_time / dt).ceil() as usize;

    let mut out = Vec::with_capacity(steps + 1);
    for k in 0..=steps {
        let t = (k as f64 * dt).min(total_time);
        let s = (t * speed).min(total_len);
        // segment containing arc length s
        let mut seg = 0;
        while seg + 2 < cumulative.len() && s > cumulative[seg + 1] {
            seg += 1;
        }
        let seg_len = cumulative[seg + 1] - cumulative[seg];
        let alpha = if seg_len > 0.0 { (s - cumulative[seg]) / seg_len } else { 0.0 };
        let p = wps[seg] + (wps[seg + 1] - wps[seg]).scale(alpha);
        out.push((k as f64 * dt, p));
    }
    out
}

/// UAV plant state: pose plus world-frame velocity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UavState {
    pub pose: Pose,
    pub velocity: Vec3,
}

impl UavState {
    pub fn at_rest(position: Vec3) -> Self {
        UavState { pose: Pose::new(position, 0.0), velocity: Vec3::ZERO }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControllerConfig {
    /// Proportional gain, 1/s.
    pub kp: f64,
    /// Commanded speed limit, m/s.
    pub max_speed: f64,
    /// Control (and ranging sweep) rate, Hz.
    pub control_rate: f64,
    /// Velocity-tracking time constant of the plant, s.
    pub tau: f64,
}

impl Default for ControllerConfig {
    fn default() -> Self {
        ControllerConfig { kp: 1.0, max_speed: 2.0, control_rate: 10.0, tau: 0.3 }
    }
}

fn clamp_speed(v: Vec3, max_speed: f64) -> Vec3 {
    let n = v.norm();
    if n > max_speed {
        v.scale(max_speed / n)
    } else {
        v
    }
}

/// First-order velocity tracking: the commanded velocity is clamped,
/// the velocity relaxes toward it with time constant tau, and position
/// integrates the updated velocity.
pub fn step_plant(state: &UavState, velocity_command: Vec3, dt: f64, cfg: &ControllerConfig) -> UavState {
    assert!(dt > 0.0);
    let cmd = clamp_speed(velocity_command, cfg.max_speed);
    let alpha = (dt / cfg.tau).min(1.0);
    let velocity = state.velocity + (cmd - state.velocity).scale(alpha);
    let position = state.pose.position + velocity.scale(dt);
    UavState { pose: Pose::new(position, state.pose.yaw), velocity }
}

/// Which position feeds the controller.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeedbackSource {
    Truth,
    Uwb,
}

impl std::fmt::Display for FeedbackSource {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            FeedbackSource::Truth => write!(f, "truth"),
            FeedbackSource::Uwb => write!(f, "uwb"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlightConfig {
    pub controller: ControllerConfig,
    pub solver: SolverConfig,
    /// Run the estimator each tick even on truth feedback, so the
    /// positioning error of the same flight can be measured.
    pub estimate: bool,
    /// Keep the per-tick range measurements in the record.
    pub record_ranges: bool,
}

impl Default for FlightConfig {
    fn default() -> Self {
        FlightConfig {
            controller: ControllerConfig::default(),
            solver: SolverConfig::default(),
            estimate: true,
            record_ranges: false,
        }
    }
}

/// One recorded control tick.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlightSample {
    pub t: f64,
    pub true_pose: Pose,
    pub estimated_position: Option<Vec3>,
    pub setpoint: Vec3,
}

/// Metadata echoed into every serialized record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlightMeta {
    pub layout: TransceiverLayout,
    pub noise: NoiseModel,
    pub trajectory: Trajectory,
    pub seed: u64,
    pub feedback: FeedbackSource,
    pub controller: ControllerConfig,
    pub solver: SolverConfig,
    pub cruise_start_time: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlightRecord {
    pub meta: FlightMeta,
    pub samples: Vec<FlightSample>,
    /// Present when `record_ranges` was set.
    pub ranges: Vec<RangeMeasurement>,
}

impl FlightRecord {
    pub fn has_estimates(&self) -> bool {
        self.samples.iter().any(|s| s.estimated_position.is_some())
    }
}

const MAX_CONSECUTIVE_DIVERGED: usize = 10;

/// Fly the trajectory in closed loop and record truth, estimate and
/// setpoint at every control tick.
pub fn run_flight(
    traj: &Trajectory,
    layout: &TransceiverLayout,
    noise: &NoiseModel,
    feedback: FeedbackSource,
    config: &FlightConfig,
) -> Result<FlightRecord, FlightError> {
    traj.validate()?;
    let dt = 1.0 / config.controller.control_rate;
    let setpoints = generate_setpoints(traj, dt);
    let mut rng = ChaCha8Rng::seed_from_u64(noise.seed);

    let mut state = UavState::at_rest(setpoints[0].1);
    // first solve warm-starts from the anchor centroid lifted to 1 m
    let mut warm_start = layout.responder_centroid() + Vec3::new(0.0, 0.0, 1.0);
    let mut consecutive_diverged = 0usize;

    let mut samples = Vec::with_capacity(setpoints.len());
    let mut ranges = Vec::new();

    for &(t, sp) in &setpoints {
        let measurements = sweep(layout, &state.pose, noise, t, &mut rng);

        let estimate: Option<PositionEstimate> = if config.estimate {
            let est = solve_position(&measurements, &layout.responders, &warm_start, &config.solver)?;
            if est.converged {
                consecutive_diverged = 0;
            } else {
                consecutive_diverged += 1;
                if consecutive_diverged > MAX_CONSECUTIVE_DIVERGED {
                    return Err(FlightError::EstimatorDiverged {
                        count: consecutive_diverged,
                        t,
                    });
                }
            }
            // keep the warm start above the anchor plane; estimates that fall
            // onto the z floor sit in a ring of spurious boundary minima and
            // would trap every subsequent solve there
            warm_start = est.position;
            let plane_z = layout.responder_centroid().z;
            if warm_start.z < plane_z + 1.0 {
                warm_start.z = plane_z + 1.0;
            }
            Some(est)
        } else {
            None
        };

        if config.record_ranges {
            ranges.extend_from_slice(&measurements);
        }

        let fb = match feedback {
            FeedbackSource::Truth => state.pose.position,
            FeedbackSource::Uwb => {
                let est = estimate.expect("uwb feedback requires estimation").position;
                match traj {
                    // altitude is held on truth for square flights; only
                    // the planar feedback comes from UWB
                    Trajectory::Square { .. } => {
                        Vec3::new(est.x, est.y, state.pose.position.z)
                    }
                    Trajectory::Vertical { .. } => est,
                }
            }
        };

        samples.push(FlightSample {
            t,
            true_pose: state.pose,
            estimated_position: estimate.map(|e| e.position),
            setpoint: sp,
        });

        let command = (sp - fb).scale(config.controller.kp);
        state = step_plant(&state, command, dt, &config.controller);
    }

    Ok(FlightRecord {
        meta: FlightMeta {
            layout: layout.clone(),
            noise: *noise,
            trajectory: *traj,
            seed: noise.seed,
            feedback,
            controller: config.controller,
            solver: config.solver,
            cruise_start_time: traj.cruise_start_time(),
        },
        samples,
        ranges,
    })
}

/// CSV header for flight records.
pub const FLIGHT_CSV_HEADER: &str = "t,true_x,true_y,true_z,yaw,est_x,est_y,est_z,sp_x,sp_y,sp_z";

pub fn flight_sample_csv_line(s: &FlightSample) -> String {
    let (ex, ey, ez) = match s.estimated_position {
        Some(e) => (format!("{}", e.x), format!("{}", e.y), format!("{}", e.z)),
        None => (String::from("nan"), String::from("nan"), String::from("nan")),
    };
    format!(
        "{},{},{},{},{},{},{},{},{},{},{}",
        s.t,
        s.true_pose.position.x,
        s.true_pose.position.y,
        s.true_pose.position.z,
        s.true_pose.yaw,
        ex,
        ey,
        ez,
        s.setpoint.x,
        s.setpoint.y,
        s.setpoint.z
    )
}
