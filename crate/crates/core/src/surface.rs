//! Projection surfaces: each output pixel `(u_p, v_p)` is assigned a 3D
//! sample point in the surface frame `P`.

use std::f64::consts::{PI, TAU};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Point3, Pose, PoseJson};

/// Planar surface at distance `focal_length` along +z.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PerspectiveParams {
    /// Meters.
    pub focal_length: f64,
    /// Horizontal field of view across the output width, radians.
    pub hfov: f64,
}

impl PerspectiveParams {
    /// Metric size of one output pixel on the plane.
    pub fn pixel_size(&self, width: u32) -> f64 {
        2.0 * self.focal_length * (self.hfov / 2.0).tan() / f64::from(width)
    }
}

/// Cylinder around the z axis covering the full azimuth.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MercatorParams {
    /// Half of the vertical field of view, radians.
    pub vertical_half_fov: f64,
    /// Meters.
    pub cylinder_radius: f64,
}

impl MercatorParams {
    pub fn angular_pixel_size(width: u32) -> f64 {
        TAU / f64::from(width)
    }

    pub fn cylinder_height(&self) -> f64 {
        2.0 * self.cylinder_radius * self.vertical_half_fov.tan()
    }
}

/// Sphere around the origin; the image's inscribed circle spans `fov`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SphericalParams {
    /// Full field of view across the inscribed circle, radians.
    pub fov: f64,
    /// Meters.
    pub sphere_radius: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Surface {
    Perspective(PerspectiveParams),
    Mercator(MercatorParams),
    Spherical(SphericalParams),
}

impl Surface {
    pub fn kind(&self) -> &'static str {
        match self {
            Surface::Perspective(_) => "perspective",
            Surface::Mercator(_) => "mercator",
            Surface::Spherical(_) => "spherical",
        }
    }
}

/// A virtual view: surface shape, output resolution and the surface pose
/// `R <- P` in the rig reference frame.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionSpec {
    pub surface: Surface,
    pub width: u32,
    pub height: u32,
    pub surface_pose: Pose,
}

impl ProjectionSpec {
    pub fn new(surface: Surface, width: u32, height: u32, surface_pose: Pose) -> Self {
        Self {
            surface,
            width,
            height,
            surface_pose,
        }
    }

    pub fn validate(&self, path: &str) -> Result<()> {
        if self.width == 0 {
            return Err(Error::validation(format!("{path}.width"), "must be at least 1"));
        }
        if self.height == 0 {
            return Err(Error::validation(format!("{path}.height"), "must be at least 1"));
        }
        let positive = |v: f64| v.is_finite() && v > 0.0;
        match self.surface {
            Surface::Perspective(p) => {
                if !positive(p.focal_length) {
                    return Err(Error::validation(format!("{path}.focal_length_m"), "must be positive"));
                }
                if !(p.hfov > 0.0 && p.hfov < PI) {
                    return Err(Error::validation(format!("{path}.hfov_deg"), "must lie in (0, 180)"));
                }
            }
            Surface::Mercator(m) => {
                if !(m.vertical_half_fov > 0.0 && m.vertical_half_fov < PI / 2.0) {
                    return Err(Error::validation(
                        format!("{path}.vertical_half_fov_deg"),
                        "must lie in (0, 90)",
                    ));
                }
                if !positive(m.cylinder_radius) {
                    return Err(Error::validation(format!("{path}.cylinder_radius_m"), "must be positive"));
                }
            }
            Surface::Spherical(s) => {
                if !(s.fov > 0.0 && s.fov <= TAU) {
                    return Err(Error::validation(format!("{path}.fov_deg"), "must lie in (0, 360]"));
                }
                if !positive(s.sphere_radius) {
                    return Err(Error::validation(format!("{path}.sphere_radius_m"), "must be positive"));
                }
            }
        }
        Ok(())
    }

    /// Surface point for continuous output coordinates, in frame `P`.
    /// `None` for spherical pixels outside the inscribed circle.
    pub fn surface_point(&self, u_p: f64, v_p: f64) -> Option<Point3> {
        let (w, h) = (f64::from(self.width), f64::from(self.height));
        match &self.surface {
            Surface::Perspective(p) => Some(perspective_point(p, w, h, u_p, v_p)),
            Surface::Mercator(m) => Some(mercator_point(m, w, h, u_p, v_p)),
            Surface::Spherical(s) => spherical_point(s, w, h, u_p, v_p),
        }
    }

    /// Samples the surface at every pixel center `(u + 0.5, v + 0.5)`,
    /// row-major.
    pub fn sample_surface(&self) -> Vec<Option<Point3>> {
        let w = self.width as usize;
        let mut out = vec![None; w * self.height as usize];
        out.par_chunks_mut(w).enumerate().for_each(|(v, row)| {
            for (u, slot) in row.iter_mut().enumerate() {
                *slot = self.surface_point(u as f64 + 0.5, v as f64 + 0.5);
            }
        });
        out
    }
}

#[inline]
fn perspective_point(p: &PerspectiveParams, w: f64, h: f64, u_p: f64, v_p: f64) -> Point3 {
    let m = 2.0 * p.focal_length * (p.hfov / 2.0).tan() / w;
    Point3::new((u_p - w / 2.0) * m, (v_p - h / 2.0) * m, p.focal_length)
}

#[inline]
fn mercator_point(m: &MercatorParams, w: f64, h: f64, u_p: f64, v_p: f64) -> Point3 {
    let alpha = TAU / w;
    let azimuth = -u_p * alpha;
    let (s, c) = azimuth.sin_cos();
    Point3::new(
        m.cylinder_radius * c,
        m.cylinder_radius * s,
        m.cylinder_height() * (0.5 - v_p / h),
    )
}

#[inline]
fn spherical_point(s: &SphericalParams, w: f64, h: f64, u_p: f64, v_p: f64) -> Option<Point3> {
    let px = u_p / w - 0.5;
    let py = 0.5 - v_p / h;
    // Normalized so that r = 1 on the inscribed circle.
    let r = 2.0 * px.hypot(py);
    if r > 1.0 {
        return None;
    }
    let gamma = py.atan2(px);
    let theta = r * s.fov / 2.0;
    let (st, ct) = theta.sin_cos();
    let (sg, cg) = gamma.sin_cos();
    Some(Point3::new(
        s.sphere_radius * st * cg,
        -s.sphere_radius * st * sg,
        s.sphere_radius * ct,
    ))
}

/// Serialized form of a [`ProjectionSpec`]; angles in degrees.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectionSpecJson {
    pub schema: String,
    #[serde(flatten)]
    pub surface: SurfaceJson,
    pub width: u32,
    pub height: u32,
    pub pose: PoseJson,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum SurfaceJson {
    Perspective { focal_length_m: f64, hfov_deg: f64 },
    Mercator { vertical_half_fov_deg: f64, cylinder_radius_m: f64 },
    Spherical { fov_deg: f64, sphere_radius_m: f64 },
}

impl From<&Surface> for SurfaceJson {
    fn from(s: &Surface) -> Self {
        match *s {
            Surface::Perspective(p) => SurfaceJson::Perspective {
                focal_length_m: p.focal_length,
                hfov_deg: p.hfov.to_degrees(),
            },
            Surface::Mercator(m) => SurfaceJson::Mercator {
                vertical_half_fov_deg: m.vertical_half_fov.to_degrees(),
                cylinder_radius_m: m.cylinder_radius,
            },
            Surface::Spherical(s) => SurfaceJson::Spherical {
                fov_deg: s.fov.to_degrees(),
                sphere_radius_m: s.sphere_radius,
            },
        }
    }
}

impl From<&SurfaceJson> for Surface {
    fn from(s: &SurfaceJson) -> Self {
        match *s {
            SurfaceJson::Perspective {
                focal_length_m,
                hfov_deg,
            } => Surface::Perspective(PerspectiveParams {
                focal_length: focal_length_m,
                hfov: hfov_deg.to_radians(),
            }),
            SurfaceJson::Mercator {
                vertical_half_fov_deg,
                cylinder_radius_m,
            } => Surface::Mercator(MercatorParams {
                vertical_half_fov: vertical_half_fov_deg.to_radians(),
                cylinder_radius: cylinder_radius_m,
            }),
            SurfaceJson::Spherical { fov_deg, sphere_radius_m } => Surface::Spherical(SphericalParams {
                fov: fov_deg.to_radians(),
                sphere_radius: sphere_radius_m,
            }),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn pose() -> Pose {
        Pose::identity("R", "P")
    }

    fn perspective(f: f64, hfov_deg: f64, w: u32, h: u32) -> ProjectionSpec {
        ProjectionSpec::new(
            Surface::Perspective(PerspectiveParams {
                focal_length: f,
                hfov: hfov_deg.to_radians(),
            }),
            w,
            h,
            pose(),
        )
    }

    fn mercator(half_deg: f64, radius: f64, w: u32, h: u32) -> ProjectionSpec {
        ProjectionSpec::new(
            Surface::Mercator(MercatorParams {
                vertical_half_fov: half_deg.to_radians(),
                cylinder_radius: radius,
            }),
            w,
            h,
            pose(),
        )
    }

    fn spherical(fov_deg: f64, radius: f64, w: u32, h: u32) -> ProjectionSpec {
        ProjectionSpec::new(
            Surface::Spherical(SphericalParams {
                fov: fov_deg.to_radians(),
                sphere_radius: radius,
            }),
            w,
            h,
            pose(),
        )
    }

    #[test]
    fn perspective_examples() {
        let s = perspective(2.5, 90.0, 512, 256);
        assert_eq!(s.surface_point(256.0, 128.0).unwrap(), Point3::new(0.0, 0.0, 2.5));

        let p = PerspectiveParams {
            focal_length: 1.0,
            hfov: 90f64.to_radians(),
        };
        assert_relative_eq!(p.pixel_size(512), 0.00390625, epsilon = 1e-15);

        let s = perspective(1.0, 90.0, 512, 256);
        assert_relative_eq!(s.surface_point(512.0, 128.0).unwrap(), Point3::new(1.0, 0.0, 1.0), epsilon = 1e-12);
    }

    #[test]
    fn mercator_examples() {
        let s = mercator(45.0, 1.0, 512, 256);
        assert_relative_eq!(s.surface_point(0.0, 128.0).unwrap(), Point3::new(1.0, 0.0, 0.0));
        assert_relative_eq!(s.surface_point(128.0, 128.0).unwrap(), Point3::new(0.0, -1.0, 0.0), epsilon = 1e-12);
        assert_relative_eq!(s.surface_point(77.0, 0.0).unwrap().z, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn spherical_examples() {
        let s = spherical(180.0, 1.0, 512, 512);
        assert_relative_eq!(s.surface_point(256.0, 256.0).unwrap(), Point3::new(0.0, 0.0, 1.0));
        assert_relative_eq!(s.surface_point(512.0, 256.0).unwrap(), Point3::new(1.0, 0.0, 0.0), epsilon = 1e-12);
        assert!(s.surface_point(0.0, 0.0).is_none());
    }

    #[test]
    fn grid_one_by_one() {
        let g = perspective(1.0, 60.0, 1, 1).sample_surface();
        assert_eq!(g, vec![Some(Point3::new(0.0, 0.0, 1.0))]);
    }

    #[test]
    fn grid_two_by_two_is_symmetric() {
        let g = perspective(1.0, 60.0, 2, 2).sample_surface();
        let g: Vec<Point3> = g.into_iter().map(Option::unwrap).collect();
        assert_relative_eq!(g[0].x, -g[1].x);
        assert_relative_eq!(g[0].y, -g[2].y);
        assert_relative_eq!(g[0], -g[3] + nalgebra::Vector3::new(0.0, 0.0, 2.0));
    }

    #[test]
    fn mercator_grid_spans_full_azimuth() {
        let s = mercator(30.0, 1.0, 512, 256);
        let g = s.sample_surface();
        let step = TAU / 512.0;
        for u in 0..512 {
            let p = g[u].unwrap();
            let az = (-p.y).atan2(p.x).rem_euclid(TAU);
            assert_relative_eq!(az, (u as f64 + 0.5) * step, epsilon = 1e-12);
        }
    }

    #[test]
    fn validation() {
        assert!(spherical(0.0, 1.0, 10, 10).validate("spec").is_err());
        assert!(spherical(360.0, 1.0, 10, 10).validate("spec").is_ok());
        assert!(perspective(1.0, 180.0, 10, 10).validate("spec").is_err());
        assert!(perspective(0.0, 90.0, 10, 10).validate("spec").is_err());
        assert!(mercator(90.0, 1.0, 10, 10).validate("spec").is_err());
        assert!(perspective(1.0, 130.0, 0, 10).validate("spec").is_err());
    }

    #[test]
    fn grid_invariants() {
        let p = perspective(1.7, 130.0, 64, 48);
        for pt in p.sample_surface() {
            assert_eq!(pt.unwrap().z, 1.7);
        }
        let m = mercator(40.0, 2.0, 64, 32);
        let ch = 2.0 * 2.0 * 40f64.to_radians().tan();
        for pt in m.sample_surface() {
            let pt = pt.unwrap();
            assert!((pt.x.hypot(pt.y) - 2.0).abs() < 1e-12);
            assert!(pt.z.abs() <= ch / 2.0);
        }
        let s = spherical(200.0, 3.0, 64, 64);
        for pt in s.sample_surface().into_iter().flatten() {
            assert!((pt.coords.norm() - 3.0).abs() < 1e-12);
            let theta = pt.coords.angle(&nalgebra::Vector3::z());
            assert!(theta <= 100f64.to_radians() + 1e-12);
        }
    }

    proptest! {
        #[test]
        fn mirroring_u(u in 0.0..512.0f64, v in 0.0..256.0f64) {
            let p = perspective(1.0, 100.0, 512, 256);
            let a = p.surface_point(u, v).unwrap();
            let b = p.surface_point(512.0 - u, v).unwrap();
            prop_assert!((a.x + b.x).abs() < 1e-12);
            prop_assert!((a.y - b.y).abs() < 1e-12);

            let m = mercator(45.0, 1.0, 512, 256);
            let a = m.surface_point(u, v).unwrap();
            let b = m.surface_point(512.0 - u, v).unwrap();
            prop_assert!((a.x - b.x).abs() < 1e-9);
            prop_assert!((a.y + b.y).abs() < 1e-9);
        }
    }
}
