//! World/body frames, rigid transceiver offsets and anchor layouts.
//!
//! The world frame is z-up with the ground plane at z = 0. The UAV body
//! frame is x forward, y left, z up; yaw is positive counter-clockwise
//! seen from above.

use serde::{Deserialize, Serialize};

use crate::error::GeometryError;

/// A point or displacement in meters.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Vec3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Vec3 {
    pub const ZERO: Vec3 = Vec3 { x: 0.0, y: 0.0, z: 0.0 };

    pub fn new(x: f64, y: f64, z: f64) -> Self {
        Vec3 { x, y, z }
    }

    pub fn norm(&self) -> f64 {
        (self.x * self.x + self.y * self.y + self.z * self.z).sqrt()
    }

    /// Planar (xy) norm.
    pub fn norm_xy(&self) -> f64 {
        (self.x * self.x + self.y * self.y).sqrt()
    }

    pub fn distance(&self, other: &Vec3) -> f64 {
        (*self - *other).norm()
    }

    pub fn dot(&self, other: &Vec3) -> f64 {
        self.x * other.x + self.y * other.y + self.z * other.z
    }

    pub fn scale(&self, s: f64) -> Vec3 {
        Vec3::new(self.x * s, self.y * s, self.z * s)
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }
}

impl std::ops::Add for Vec3 {
    type Output = Vec3;
    fn add(self, rhs: Vec3) -> Vec3 {
        Vec3::new(self.x + rhs.x, self.y + rhs.y, self.z + rhs.z)
    }
}

impl std::ops::Sub for Vec3 {
    type Output = Vec3;
    fn sub(self, rhs: Vec3) -> Vec3 {
        Vec3::new(self.x - rhs.x, self.y - rhs.y, self.z - rhs.z)
    }
}

impl std::ops::Neg for Vec3 {
    type Output = Vec3;
    fn neg(self) -> Vec3 {
        Vec3::new(-self.x, -self.y, -self.z)
    }
}

/// UAV position plus heading. Yaw is kept normalized to (-pi, pi].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub position: Vec3,
    pub yaw: f64,
}

impl Pose {
    pub fn new(position: Vec3, yaw: f64) -> Self {
        Pose { position, yaw: normalize_angle(yaw) }
    }
}

/// Wrap an angle to (-pi, pi].
pub fn normalize_angle(angle: f64) -> f64 {
    let mut a = angle.rem_euclid(2.0 * std::f64::consts::PI);
    if a > std::f64::consts::PI {
        a -= 2.0 * std::f64::consts::PI;
    }
    a
}

/// Body-frame mounting offset of a transceiver on the UAV.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RigidOffset {
    pub body_offset: Vec3,
}

/// Sanity bound on mounting offsets for a small UAV.
pub const MAX_OFFSET_M: f64 = 2.0;

impl RigidOffset {
    pub fn new(x: f64, y: f64, z: f64) -> Result<Self, GeometryError> {
        let body_offset = Vec3::new(x, y, z);
        if !body_offset.is_finite() {
            return Err(GeometryError::NonFiniteOffset);
        }
        if body_offset.norm() >= MAX_OFFSET_M {
            return Err(GeometryError::OffsetTooLarge(body_offset.norm()));
        }
        Ok(RigidOffset { body_offset })
    }
}

/// Initiator offsets on the UAV plus responder positions on the ground.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransceiverLayout {
    pub initiators: Vec<RigidOffset>,
    pub responders: Vec<Vec3>,
}

impl TransceiverLayout {
    pub fn new(
        initiators: Vec<RigidOffset>,
        responders: Vec<Vec3>,
    ) -> Result<Self, GeometryError> {
        if initiators.is_empty() {
            return Err(GeometryError::NoInitiators);
        }
        if responders.is_empty() {
            return Err(GeometryError::NoResponders);
        }
        for (i, a) in responders.iter().enumerate() {
            if !a.is_finite() {
                return Err(GeometryError::NonFiniteResponder(i));
            }
            for b in responders.iter().skip(i + 1) {
                if a.distance(b) < 1e-9 {
                    return Err(GeometryError::DuplicateResponders);
                }
            }
        }
        if initiators.len() > 1 {
            for (i, a) in initiators.iter().enumerate() {
                for b in initiators.iter().skip(i + 1) {
                    if a.body_offset.distance(&b.body_offset) < 1e-9 {
                        return Err(GeometryError::DuplicateInitiators);
                    }
                }
            }
        }
        Ok(TransceiverLayout { initiators, responders })
    }

    /// Single initiator at the body origin with responders in a square of
    /// the given side length on the ground plane.
    pub fn single_initiator_square(separation: f64) -> Result<Self, GeometryError> {
        Self::new(
            vec![RigidOffset::new(0.0, 0.0, 0.0)?],
            square_anchor_layout(separation, 0.0)?,
        )
    }

    pub fn num_initiators(&self) -> usize {
        self.initiators.len()
    }

    pub fn num_responders(&self) -> usize {
        self.responders.len()
    }

    pub fn responder_centroid(&self) -> Vec3 {
        let mut c = Vec3::ZERO;
        for q in &self.responders {
            c = c + *q;
        }
        c.scale(1.0 / self.responders.len() as f64)
    }
}

/// World position of an initiator given the UAV pose: yaw rotation about
/// body z, then translation.
pub fn apply_pose(pose: &Pose, offset: &RigidOffset) -> Vec3 {
    let (s, c) = pose.yaw.sin_cos();
    let o = offset.body_offset;
    Vec3::new(
        pose.position.x + c * o.x - s * o.y,
        pose.position.y + s * o.x + c * o.y,
        pose.position.z + o.z,
    )
}

/// Four responders at the corners of an axis-aligned square of side
/// `separation`, centered on the origin at the given height.
pub fn square_anchor_layout(separation: f64, height: f64) -> Result<Vec<Vec3>, GeometryError> {
    if !(separation > 0.0) {
        return Err(GeometryError::NonPositiveSeparation(separation));
    }
    let h = separation / 2.0;
    Ok(vec![
        Vec3::new(-h, -h, height),
        Vec3::new(h, -h, height),
        Vec3::new(h, h, height),
        Vec3::new(-h, h, height),
    ])
}
