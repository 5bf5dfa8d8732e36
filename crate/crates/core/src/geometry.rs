//! Rigid-body transforms between named frames.
//!
//! A [`Pose`] named `parent <- child` maps coordinates expressed in the child
//! frame into the parent frame. Composition checks the frame names so that a
//! chain such as `C_i <- R <- P` cannot be assembled in the wrong order.

use nalgebra::{Isometry3, Matrix3, Quaternion, Translation3, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A 3D point in meters. The frame it lives in is implied by context.
pub type Point3 = nalgebra::Point3<f64>;

/// Continuous pixel coordinates, `(0, 0)` is the center of the top-left pixel.
///
/// Invalid projections are represented as `None` by the functions that
/// produce pixel coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PixelCoord {
    pub u: f64,
    pub v: f64,
}

impl PixelCoord {
    pub const fn new(u: f64, v: f64) -> Self {
        Self { u, v }
    }

    pub fn distance_to(&self, other: &PixelCoord) -> f64 {
        (self.u - other.u).hypot(self.v - other.v)
    }
}

/// Rigid transform `parent <- child`.
#[derive(Debug, Clone, PartialEq)]
pub struct Pose {
    rotation: UnitQuaternion<f64>,
    translation: Vector3<f64>,
    parent: String,
    child: String,
}

impl Pose {
    pub fn new(
        parent: impl Into<String>,
        child: impl Into<String>,
        rotation: UnitQuaternion<f64>,
        translation: Vector3<f64>,
    ) -> Self {
        Self {
            rotation,
            translation,
            parent: parent.into(),
            child: child.into(),
        }
    }

    pub fn identity(parent: impl Into<String>, child: impl Into<String>) -> Self {
        Self::new(parent, child, UnitQuaternion::identity(), Vector3::zeros())
    }

    pub fn from_translation(parent: impl Into<String>, child: impl Into<String>, t: Vector3<f64>) -> Self {
        Self::new(parent, child, UnitQuaternion::identity(), t)
    }

    /// Rotation given as roll/pitch/yaw about the parent's x, y and z axes,
    /// applied in that order (`R = Rz(yaw) * Ry(pitch) * Rx(roll)`).
    pub fn from_euler(
        parent: impl Into<String>,
        child: impl Into<String>,
        roll: f64,
        pitch: f64,
        yaw: f64,
        t: Vector3<f64>,
    ) -> Self {
        Self::new(parent, child, UnitQuaternion::from_euler_angles(roll, pitch, yaw), t)
    }

    /// Rotation about a unit axis through the origin, followed by translation.
    pub fn from_axis_angle(
        parent: impl Into<String>,
        child: impl Into<String>,
        axis: Vector3<f64>,
        angle: f64,
        t: Vector3<f64>,
    ) -> Self {
        let axis = nalgebra::Unit::new_normalize(axis);
        Self::new(parent, child, UnitQuaternion::from_axis_angle(&axis, angle), t)
    }

    pub fn parent_frame(&self) -> &str {
        &self.parent
    }

    pub fn child_frame(&self) -> &str {
        &self.child
    }

    pub fn rotation(&self) -> &UnitQuaternion<f64> {
        &self.rotation
    }

    pub fn translation(&self) -> &Vector3<f64> {
        &self.translation
    }

    pub fn isometry(&self) -> Isometry3<f64> {
        Isometry3::from_parts(Translation3::from(self.translation), self.rotation)
    }

    /// Same transform with different frame labels.
    pub fn relabeled(mut self, parent: impl Into<String>, child: impl Into<String>) -> Self {
        self.parent = parent.into();
        self.child = child.into();
        self
    }

    /// `self * other`: maps `other.child` into `self.parent`.
    pub fn compose(&self, other: &Pose) -> Result<Pose> {
        if self.child != other.parent {
            return Err(Error::FrameChain {
                expected: self.child.clone(),
                found: other.parent.clone(),
            });
        }
        let rotation = renormalize(self.rotation * other.rotation);
        let translation = self.rotation * other.translation + self.translation;
        Ok(Pose {
            rotation,
            translation,
            parent: self.parent.clone(),
            child: other.child.clone(),
        })
    }

    pub fn inverse(&self) -> Pose {
        let rotation = self.rotation.inverse();
        let translation = -(rotation * self.translation);
        Pose {
            rotation,
            translation,
            parent: self.child.clone(),
            child: self.parent.clone(),
        }
    }

    /// `R * pt + t`, taking `pt` from the child frame to the parent frame.
    pub fn transform_point(&self, pt: &Point3) -> Point3 {
        Point3::from(self.rotation * pt.coords + self.translation)
    }

    pub fn transform_vector(&self, v: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * v
    }

    /// Rotation angle (radians) of the relative transform between two poses
    /// and the norm of their translation difference.
    pub fn distance(&self, other: &Pose) -> (f64, f64) {
        let angle = self.rotation.angle_to(&other.rotation);
        let dt = (self.translation - other.translation).norm();
        (angle, dt)
    }

    /// Flattened form for inner loops: the rotation matrix and translation.
    pub fn to_rigid(&self) -> RigidTransform {
        RigidTransform {
            rotation: *self.rotation.to_rotation_matrix().matrix(),
            translation: self.translation,
        }
    }
}

fn renormalize(q: UnitQuaternion<f64>) -> UnitQuaternion<f64> {
    UnitQuaternion::new_normalize(q.into_inner())
}

/// Frame-less rigid transform with a precomputed rotation matrix, used in
/// per-pixel and per-point loops.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidTransform {
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
}

impl RigidTransform {
    #[inline]
    pub fn apply(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p + self.translation
    }
}

/// Serialized pose as it appears inside configuration files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PoseJson {
    pub parent: String,
    pub child: String,
    pub translation: [f64; 3],
    pub rotation_quaternion_wxyz: [f64; 4],
}

/// Largest accepted deviation of a loaded quaternion from unit norm.
pub const QUATERNION_NORM_TOLERANCE: f64 = 1e-6;

impl PoseJson {
    /// Validates and converts to a [`Pose`]. `path` names the JSON location
    /// for error messages.
    pub fn to_pose(&self, path: &str) -> Result<Pose> {
        if self.translation.iter().any(|v| !v.is_finite()) {
            return Err(Error::validation(format!("{path}.translation"), "non-finite component"));
        }
        let [w, x, y, z] = self.rotation_quaternion_wxyz;
        let q = Quaternion::new(w, x, y, z);
        let norm = q.norm();
        if !norm.is_finite() || (norm - 1.0).abs() > QUATERNION_NORM_TOLERANCE {
            return Err(Error::validation(
                format!("{path}.rotation_quaternion_wxyz"),
                format!("quaternion norm {norm} is not 1"),
            ));
        }
        if self.parent.is_empty() || self.child.is_empty() {
            return Err(Error::validation(path, "frame names must be non-empty"));
        }
        // Already-unit quaternions are kept bit-exact so that load -> save ->
        // load is a fixed point.
        let rotation = if (norm - 1.0).abs() <= 4.0 * f64::EPSILON {
            UnitQuaternion::new_unchecked(q)
        } else {
            UnitQuaternion::new_normalize(q)
        };
        Ok(Pose::new(
            self.parent.clone(),
            self.child.clone(),
            rotation,
            Vector3::from(self.translation),
        ))
    }
}

impl From<&Pose> for PoseJson {
    fn from(p: &Pose) -> Self {
        let q = p.rotation.quaternion();
        PoseJson {
            parent: p.parent.clone(),
            child: p.child.clone(),
            translation: [p.translation.x, p.translation.y, p.translation.z],
            rotation_quaternion_wxyz: [q.w, q.i, q.j, q.k],
        }
    }
}
