//! Intrinsic camera models.
//!
//! Camera frame convention: z forward, x right, y down.

use nalgebra::{Matrix2, Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{PixelCoord, Point3, Pose};

/// Iteration cap for distortion inversion.
pub const MAX_UNDISTORT_ITERATIONS: usize = 20;
/// Convergence threshold for distortion inversion, in pixels.
pub const UNDISTORT_TOLERANCE_PX: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CameraModel {
    /// Pinhole with radial-tangential distortion `k1, k2, p1, p2`.
    Pinhole,
    /// Equidistant fisheye, `d = θ (1 + k1 θ² + k2 θ⁴ + k3 θ⁶ + k4 θ⁸)`.
    EquidistantFisheye,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CameraIntrinsics {
    pub model: CameraModel,
    pub width: u32,
    pub height: u32,
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub distortion: [f64; 4],
    /// Largest angle between a ray and the optical axis that still projects.
    pub fov_limit: f64,
}

impl CameraIntrinsics {
    /// Distortion-free pinhole with a field-of-view limit just short of 90°.
    pub fn pinhole(width: u32, height: u32, fx: f64, fy: f64, cx: f64, cy: f64) -> Self {
        Self {
            model: CameraModel::Pinhole,
            width,
            height,
            fx,
            fy,
            cx,
            cy,
            distortion: [0.0; 4],
            fov_limit: 89f64.to_radians(),
        }
    }

    /// Distortion-free equidistant fisheye.
    pub fn equidistant(width: u32, height: u32, fx: f64, fy: f64, cx: f64, cy: f64, fov_limit: f64) -> Self {
        Self {
            model: CameraModel::EquidistantFisheye,
            width,
            height,
            fx,
            fy,
            cx,
            cy,
            distortion: [0.0; 4],
            fov_limit,
        }
    }

    pub fn with_distortion(mut self, distortion: [f64; 4]) -> Self {
        self.distortion = distortion;
        self
    }

    pub fn principal_point(&self) -> PixelCoord {
        PixelCoord::new(self.cx, self.cy)
    }

    pub fn validate(&self, path: &str) -> Result<()> {
        let all = [self.fx, self.fy, self.cx, self.cy, self.fov_limit];
        if all.iter().chain(&self.distortion).any(|v| !v.is_finite()) {
            return Err(Error::validation(path, "non-finite intrinsic parameter"));
        }
        if self.width == 0 || self.height == 0 {
            return Err(Error::validation(format!("{path}.width"), "image size must be positive"));
        }
        if self.fx <= 0.0 {
            return Err(Error::validation(format!("{path}.fx"), "focal length must be positive"));
        }
        if self.fy <= 0.0 {
            return Err(Error::validation(format!("{path}.fy"), "focal length must be positive"));
        }
        if !(0.0..f64::from(self.width)).contains(&self.cx) {
            return Err(Error::validation(format!("{path}.cx"), "principal point outside image"));
        }
        if !(0.0..f64::from(self.height)).contains(&self.cy) {
            return Err(Error::validation(format!("{path}.cy"), "principal point outside image"));
        }
        let max_fov = match self.model {
            CameraModel::Pinhole => std::f64::consts::FRAC_PI_2,
            CameraModel::EquidistantFisheye => std::f64::consts::PI,
        };
        let fov_ok = match self.model {
            CameraModel::Pinhole => self.fov_limit > 0.0 && self.fov_limit < max_fov,
            CameraModel::EquidistantFisheye => self.fov_limit > 0.0 && self.fov_limit <= max_fov,
        };
        if !fov_ok {
            return Err(Error::validation(
                format!("{path}.fov_limit_deg"),
                format!("{}° is out of range for {:?}", self.fov_limit.to_degrees(), self.model),
            ));
        }
        Ok(())
    }

    /// Projects a camera-frame point. `None` when the point is outside the
    /// field-of-view limit, behind a pinhole camera, or lands off the image.
    pub fn project(&self, pt: &Point3) -> Option<PixelCoord> {
        self.project_vec(&pt.coords, false)
    }

    /// Like [`project`](Self::project) but treats rays exactly on the
    /// field-of-view limit as invalid. Used wherever a camera is selected to
    /// supply color, so that the lens rim is never sampled.
    pub fn project_interior(&self, pt: &Point3) -> Option<PixelCoord> {
        self.project_vec(&pt.coords, true)
    }

    #[inline]
    pub(crate) fn project_vec(&self, p: &Vector3<f64>, strict_fov: bool) -> Option<PixelCoord> {
        let rxy = p.x.hypot(p.y);
        let theta = rxy.atan2(p.z);
        let outside = if strict_fov {
            theta >= self.fov_limit
        } else {
            theta > self.fov_limit
        };
        if outside || !theta.is_finite() {
            return None;
        }
        let (mx, my) = match self.model {
            CameraModel::Pinhole => {
                if p.z <= 0.0 {
                    return None;
                }
                let d = radtan_distort(&self.distortion, Vector2::new(p.x / p.z, p.y / p.z));
                (d.x, d.y)
            }
            CameraModel::EquidistantFisheye => {
                if rxy == 0.0 {
                    (0.0, 0.0)
                } else {
                    let d = equidistant_radius(&self.distortion, theta);
                    (d * p.x / rxy, d * p.y / rxy)
                }
            }
        };
        let u = snap_to_zero(self.fx * mx + self.cx);
        let v = snap_to_zero(self.fy * my + self.cy);
        let inside = u >= 0.0 && u < f64::from(self.width) && v >= 0.0 && v < f64::from(self.height);
        inside.then_some(PixelCoord { u, v })
    }

    /// Unit ray through a pixel. Distortion is inverted iteratively.
    pub fn unproject(&self, px: &PixelCoord) -> Result<Vector3<f64>> {
        let mx = (px.u - self.cx) / self.fx;
        let my = (px.v - self.cy) / self.fy;
        match self.model {
            CameraModel::Pinhole => {
                let n = self.radtan_undistort(Vector2::new(mx, my))?;
                Ok(Vector3::new(n.x, n.y, 1.0).normalize())
            }
            CameraModel::EquidistantFisheye => {
                let d = mx.hypot(my);
                if d == 0.0 {
                    return Ok(Vector3::z());
                }
                let theta = self.equidistant_undistort(d)?;
                let s = theta.sin();
                Ok(Vector3::new(s * mx / d, s * my / d, theta.cos()))
            }
        }
    }

    fn radtan_undistort(&self, target: Vector2<f64>) -> Result<Vector2<f64>> {
        let k = &self.distortion;
        if k.iter().all(|&c| c == 0.0) {
            return Ok(target);
        }
        let scale = self.fx.max(self.fy);
        let mut x = target;
        let mut residual = f64::INFINITY;
        for _ in 0..MAX_UNDISTORT_ITERATIONS {
            let err = radtan_distort(k, x) - target;
            residual = err.norm() * scale;
            if residual < UNDISTORT_TOLERANCE_PX {
                return Ok(x);
            }
            let jac = radtan_jacobian(k, x);
            match jac.try_inverse() {
                Some(inv) => x -= inv * err,
                None => break,
            }
        }
        let err = radtan_distort(k, x) - target;
        residual = residual.min(err.norm() * scale);
        if residual < UNDISTORT_TOLERANCE_PX {
            return Ok(x);
        }
        Err(Error::NoConvergence {
            iterations: MAX_UNDISTORT_ITERATIONS,
            residual,
        })
    }

    fn equidistant_undistort(&self, d: f64) -> Result<f64> {
        let k = &self.distortion;
        if k.iter().all(|&c| c == 0.0) {
            return Ok(d);
        }
        let scale = self.fx.max(self.fy);
        let mut theta = d;
        for _ in 0..MAX_UNDISTORT_ITERATIONS {
            let err = equidistant_radius(k, theta) - d;
            if err.abs() * scale < UNDISTORT_TOLERANCE_PX {
                return Ok(theta);
            }
            let t2 = theta * theta;
            let deriv = 1.0 + t2 * (3.0 * k[0] + t2 * (5.0 * k[1] + t2 * (7.0 * k[2] + t2 * 9.0 * k[3])));
            if deriv == 0.0 {
                break;
            }
            theta -= err / deriv;
        }
        let residual = (equidistant_radius(k, theta) - d).abs() * scale;
        if residual < UNDISTORT_TOLERANCE_PX {
            return Ok(theta);
        }
        Err(Error::NoConvergence {
            iterations: MAX_UNDISTORT_ITERATIONS,
            residual,
        })
    }
}

/// Round-off can push a coordinate meant to be exactly 0 (the center of the
/// first pixel) slightly negative.
const EDGE_SNAP_PX: f64 = 1e-9;

#[inline]
fn snap_to_zero(x: f64) -> f64 {
    if x < 0.0 && x > -EDGE_SNAP_PX {
        0.0
    } else {
        x
    }
}

#[inline]
fn equidistant_radius(k: &[f64; 4], theta: f64) -> f64 {
    let t2 = theta * theta;
    theta * (1.0 + t2 * (k[0] + t2 * (k[1] + t2 * (k[2] + t2 * k[3]))))
}

#[inline]
fn radtan_distort(k: &[f64; 4], n: Vector2<f64>) -> Vector2<f64> {
    let [k1, k2, p1, p2] = *k;
    let (x, y) = (n.x, n.y);
    let r2 = x * x + y * y;
    let radial = 1.0 + r2 * (k1 + r2 * k2);
    Vector2::new(
        x * radial + 2.0 * p1 * x * y + p2 * (r2 + 2.0 * x * x),
        y * radial + p1 * (r2 + 2.0 * y * y) + 2.0 * p2 * x * y,
    )
}

fn radtan_jacobian(k: &[f64; 4], n: Vector2<f64>) -> Matrix2<f64> {
    let [k1, k2, p1, p2] = *k;
    let (x, y) = (n.x, n.y);
    let r2 = x * x + y * y;
    let radial = 1.0 + r2 * (k1 + r2 * k2);
    // d(radial)/dx = (k1 + 2 k2 r2) * 2x
    let dr = k1 + 2.0 * k2 * r2;
    let dxdx = radial + x * dr * 2.0 * x + 2.0 * p1 * y + 6.0 * p2 * x;
    let dxdy = x * dr * 2.0 * y + 2.0 * p1 * x + 2.0 * p2 * y;
    let dydx = y * dr * 2.0 * x + 2.0 * p1 * x + 2.0 * p2 * y;
    let dydy = radial + y * dr * 2.0 * y + 6.0 * p1 * y + 2.0 * p2 * x;
    Matrix2::new(dxdx, dxdy, dydx, dydy)
}

/// A calibrated camera: intrinsics plus its pose in the rig reference frame.
#[derive(Debug, Clone, PartialEq)]
pub struct Camera {
    pub name: String,
    pub intrinsics: CameraIntrinsics,
    /// `R <- C_i`
    pub extrinsic: Pose,
}

impl Camera {
    pub fn new(name: impl Into<String>, intrinsics: CameraIntrinsics, extrinsic: Pose) -> Self {
        Self {
            name: name.into(),
            intrinsics,
            extrinsic,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use std::f64::consts::{FRAC_PI_4, PI};

    fn pin() -> CameraIntrinsics {
        CameraIntrinsics::pinhole(200, 200, 100.0, 100.0, 100.0, 100.0)
    }

    #[test]
    fn pinhole_axis_hits_principal_point() {
        let px = pin().project(&Point3::new(0.0, 0.0, 1.0)).unwrap();
        assert_eq!(px, PixelCoord::new(100.0, 100.0));
    }

    #[test]
    fn pinhole_behind_camera_is_invalid() {
        assert!(pin().project(&Point3::new(0.0, 0.0, -1.0)).is_none());
    }

    #[test]
    fn equidistant_closed_form() {
        let cam = CameraIntrinsics::equidistant(400, 400, 100.0, 100.0, 200.0, 200.0, PI);
        let px = cam.project(&Point3::new(1.0, 0.0, 1.0)).unwrap();
        assert_relative_eq!(px.u, 200.0 + 100.0 * FRAC_PI_4, epsilon = 1e-12);
        assert_relative_eq!(px.u, 278.5398, epsilon = 1e-4);
        assert_relative_eq!(px.v, 200.0);
    }

    #[test]
    fn unproject_principal_point() {
        let r = pin().unproject(&PixelCoord::new(100.0, 100.0)).unwrap();
        assert_eq!(r, Vector3::z());
        let fish = CameraIntrinsics::equidistant(400, 400, 100.0, 100.0, 200.0, 200.0, PI);
        assert_eq!(fish.unproject(&PixelCoord::new(200.0, 200.0)).unwrap(), Vector3::z());
    }

    #[test]
    fn pinhole_closed_form_inverse() {
        let r = pin().unproject(&PixelCoord::new(200.0, 100.0)).unwrap();
        assert_relative_eq!(r, Vector3::new(1.0, 0.0, 1.0).normalize(), epsilon = 1e-15);
    }

    #[test]
    fn out_of_bounds_is_invalid() {
        // 60° off axis lands at u = 100 + 100 tan 60° ≈ 273 > width
        let cam = pin();
        let p = Point3::new(60f64.to_radians().tan(), 0.0, 1.0);
        assert!(cam.project(&p).is_none());
    }

    #[test]
    fn fov_boundary_inclusive_and_interior_strict() {
        let cam = CameraIntrinsics::equidistant(800, 800, 100.0, 100.0, 400.0, 400.0, FRAC_PI_4);
        let p = Point3::new(1.0, 0.0, 1.0);
        assert!(cam.project(&p).is_some());
        assert!(cam.project_interior(&p).is_none());
        let inside = Point3::new(0.99, 0.0, 1.0);
        assert!(cam.project_interior(&inside).is_some());
    }

    #[test]
    fn validation_rejects_bad_parameters() {
        let mut c = pin();
        c.fx = 0.0;
        assert!(c.validate("cam").unwrap_err().to_string().contains("cam.fx"));
        let mut c = pin();
        c.cx = 200.0;
        assert!(c.validate("cam").is_err());
        let mut c = pin();
        c.fov_limit = std::f64::consts::FRAC_PI_2;
        assert!(c.validate("cam").is_err());
        let mut c = CameraIntrinsics::equidistant(10, 10, 1.0, 1.0, 5.0, 5.0, PI);
        assert!(c.validate("cam").is_ok());
        c.fov_limit = PI + 0.01;
        assert!(c.validate("cam").is_err());
    }

    #[test]
    fn equidistant_radius_monotone_without_distortion() {
        let cam = CameraIntrinsics::equidistant(2000, 2000, 300.0, 300.0, 1000.0, 1000.0, 105f64.to_radians());
        let mut last = -1.0;
        for i in 1..1000 {
            let theta = cam.fov_limit * i as f64 / 1000.0;
            let p = Point3::new(theta.sin(), 0.0, theta.cos());
            let r = cam.project(&p).unwrap().u - cam.cx;
            assert!(r > last);
            last = r;
        }
    }

    #[test]
    fn non_convergent_inversion_reports_error() {
        // Heavy barrel distortion folds the mapping over; far pixels have no preimage.
        let cam = pin().with_distortion([-2.0, 0.0, 0.0, 0.0]);
        let err = cam.unproject(&PixelCoord::new(199.0, 199.0)).unwrap_err();
        assert!(matches!(err, Error::NoConvergence { .. }));
    }

    proptest! {
        #[test]
        fn projections_stay_in_bounds(x in -5.0..5.0f64, y in -5.0..5.0f64, z in -5.0..5.0f64) {
            let fish = CameraIntrinsics::equidistant(640, 480, 150.0, 150.0, 320.0, 240.0, 100f64.to_radians())
                .with_distortion([0.02, -0.01, 0.0, 0.0]);
            let pin = CameraIntrinsics::pinhole(640, 480, 300.0, 300.0, 320.0, 240.0)
                .with_distortion([-0.1, 0.01, 1e-3, -1e-3]);
            for cam in [&fish, &pin] {
                if let Some(px) = cam.project(&Point3::new(x, y, z)) {
                    prop_assert!(px.u >= 0.0 && px.u < 640.0 && px.v >= 0.0 && px.v < 480.0);
                }
            }
        }
    }
}
