//! Experiment configuration: a single TOML file describing layouts,
//! noise, trajectories, solver and controller settings for a campaign.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::estimator::SolverConfig;
use crate::flightsim::{ControllerConfig, Trajectory};
use crate::geometry::{square_anchor_layout, RigidOffset, TransceiverLayout, Vec3};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("config parse error: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
    #[error(transparent)]
    Geometry(#[from] crate::error::GeometryError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayoutSpec {
    /// Square anchor layouts, one per separation.
    #[serde(default)]
    pub separations: Vec<f64>,
    /// Explicit responder coordinates; used when `separations` is empty.
    #[serde(default)]
    pub responders: Vec<[f64; 3]>,
    /// Body-frame initiator offsets; one entry at the origin by default.
    #[serde(default = "default_initiators")]
    pub initiator_offsets: Vec<[f64; 3]>,
}

fn default_initiators() -> Vec<[f64; 3]> {
    vec![[0.0, 0.0, 0.0]]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSpec {
    pub sigma: f64,
    pub seeds: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrajectorySpec {
    /// Target altitude of the vertical flight; 0 disables it.
    #[serde(default = "default_vertical_target")]
    pub vertical_target: f64,
    #[serde(default = "default_square_side")]
    pub square_side: f64,
    #[serde(default = "default_square_altitudes")]
    pub square_altitudes: Vec<f64>,
    #[serde(default = "default_speed")]
    pub speed: f64,
}

fn default_vertical_target() -> f64 {
    30.0
}
fn default_square_side() -> f64 {
    8.0
}
fn default_square_altitudes() -> Vec<f64> {
    vec![5.0, 10.0, 20.0]
}
fn default_speed() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub layout: LayoutSpec,
    pub noise: NoiseSpec,
    #[serde(default = "default_trajectories")]
    pub trajectories: TrajectorySpec,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub controller: ControllerConfig,
    /// Default output directory, overridable on the command line.
    #[serde(default = "default_output_dir")]
    pub output_dir: String,
}

fn default_trajectories() -> TrajectorySpec {
    TrajectorySpec {
        vertical_target: default_vertical_target(),
        square_side: default_square_side(),
        square_altitudes: default_square_altitudes(),
        speed: default_speed(),
    }
}

fn default_output_dir() -> String {
    "out".to_string()
}

impl ExperimentConfig {
    pub fn from_path(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let config: ExperimentConfig = toml::from_str(&text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.noise.seeds.is_empty() {
            return Err(ConfigError::Invalid("at least one seed is required".into()));
        }
        if self.noise.sigma < 0.0 {
            return Err(ConfigError::Invalid("noise sigma must be non-negative".into()));
        }
        if self.layout.separations.is_empty() && self.layout.responders.is_empty() {
            return Err(ConfigError::Invalid(
                "layout needs separations or explicit responders".into(),
            ));
        }
        if self.layout.initiator_offsets.is_empty() {
            return Err(ConfigError::Invalid("at least one initiator offset".into()));
        }
        for sep in &self.layout.separations {
            if *sep <= 0.0 {
                return Err(ConfigError::Invalid(format!("separation {sep} must be > 0")));
            }
        }
        if self.trajectories.speed <= 0.0 {
            return Err(ConfigError::Invalid("trajectory speed must be > 0".into()));
        }
        // materialize layouts to surface geometry errors at load time
        self.layouts()?;
        Ok(())
    }

    /// Labeled transceiver layouts described by the config.
    pub fn layouts(&self) -> Result<Vec<(String, TransceiverLayout)>, ConfigError> {
        let initiators: Result<Vec<RigidOffset>, _> = self
            .layout
            .initiator_offsets
            .iter()
            .map(|o| RigidOffset::new(o[0], o[1], o[2]))
            .collect();
        let initiators = initiators?;
        let mut out = Vec::new();
        if self.layout.separations.is_empty() {
            let responders =
                self.layout.responders.iter().map(|r| Vec3::new(r[0], r[1], r[2])).collect();
            out.push((
                "custom".to_string(),
                TransceiverLayout::new(initiators, responders)?,
            ));
        } else {
            for sep in &self.layout.separations {
                out.push((
                    format!("sep{sep}"),
                    TransceiverLayout::new(
                        initiators.clone(),
                        square_anchor_layout(*sep, 0.0)?,
                    )?,
                ));
            }
        }
        Ok(out)
    }

    /// Labeled trajectories: the vertical flight (when enabled) plus one
    /// square flight per altitude.
    pub fn trajectories(&self) -> Vec<(String, Trajectory)> {
        let mut out = Vec::new();
        let t = &self.trajectories;
        if t.vertical_target > 0.0 {
            out.push((
                "vertical".to_string(),
                Trajectory::Vertical { target_altitude: t.vertical_target, speed: t.speed },
            ));
        }
        for alt in &t.square_altitudes {
            out.push((
                format!("square{alt}"),
                Trajectory::Square { side: t.square_side, altitude: *alt, speed: t.speed },
            ));
        }
        out
    }

    /// Separation label used in reports; NaN for explicit layouts.
    pub fn separation_of(&self, layout_idx: usize) -> f64 {
        self.layout.separations.get(layout_idx).copied().unwrap_or(f64::NAN)
    }

    /// Reference-campaign settings used by tests and shipped as the canonical
    /// example.
    pub fn repro_defaults(seeds: Vec<u64>) -> Self {
        ExperimentConfig {
            layout: LayoutSpec {
                separations: vec![0.6, 1.2, 3.0, 4.0, 12.0, 16.0],
                responders: Vec::new(),
                initiator_offsets: default_initiators(),
            },
            noise: NoiseSpec { sigma: 0.10, seeds },
            trajectories: default_trajectories(),
            solver: crate::estimator::SolverConfig {
                max_iterations: 50,
                gradient_tolerance: 1e-9,
                step_tolerance: 1e-10,
                damping_init: 1e-3,
                z_floor: 0.0,
            },
            controller: ControllerConfig::default(),
            output_dir: default_output_dir(),
        }
    }
}
