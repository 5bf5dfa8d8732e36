use std::f64::consts::TAU;

use omniview_core::{Camera, CameraRig, Error, ImageFrame, PixelCoord, Point3, ProjectionSpec, Result, Surface, Vector3};
use rayon::prelude::*;

use crate::scene::Scene;

/// Color of rays that hit no geometry.
pub const BACKGROUND: [u8; 3] = [255, 0, 255];
/// Color of camera pixels outside the lens field of view.
pub const OUTSIDE_LENS: [u8; 3] = [0, 0, 0];
/// Color of reference-view pixels that have no ray (spherical corners).
pub const NO_RAY: [u8; 3] = [0, 0, 0];

fn render(width: u32, height: u32, ray: impl Fn(u32, u32) -> Option<(Point3, Vector3<f64>)> + Sync, scene: &Scene) -> Vec<u8> {
    let w = width as usize;
    let mut data = vec![0u8; w * height as usize * 3];
    data.par_chunks_mut(w * 3).enumerate().for_each(|(y, row)| {
        for (x, px) in row.chunks_exact_mut(3).enumerate() {
            let color = match ray(x as u32, y as u32) {
                None => NO_RAY,
                Some((o, d)) => scene.trace(&o, &d).map_or(BACKGROUND, |h| scene.shade(&h)),
            };
            px.copy_from_slice(&color);
        }
    });
    data
}

/// Renders what `camera` sees of `scene`. Each pixel is a single ray
/// through its center; no anti-aliasing and no lighting.
pub fn raycast(scene: &Scene, camera: &Camera) -> Result<ImageFrame> {
    if camera.extrinsic.parent_frame() != scene.frame {
        return Err(Error::FrameChain {
            expected: scene.frame.clone(),
            found: camera.extrinsic.parent_frame().to_owned(),
        });
    }
    let intr = &camera.intrinsics;
    let origin = Point3::from(*camera.extrinsic.translation());
    let rot = *camera.extrinsic.rotation();
    let data = render(
        intr.width,
        intr.height,
        |x, y| {
            let d = intr.unproject(&PixelCoord::new(f64::from(x), f64::from(y))).ok()?;
            let theta = d.xy().norm().atan2(d.z);
            (theta <= intr.fov_limit).then(|| (origin, rot * d))
        },
        scene,
    );
    // Outside-lens pixels come back as NO_RAY, which equals OUTSIDE_LENS.
    Ok(ImageFrame::new(intr.width, intr.height, 3, data)?.with_camera(&camera.name))
}

/// Renders every camera of the rig; all frames share `timestamp_ns`.
pub fn render_rig(scene: &Scene, rig: &CameraRig, timestamp_ns: u64) -> Result<Vec<ImageFrame>> {
    rig.cameras
        .iter()
        .map(|c| raycast(scene, c).map(|f| f.with_timestamp(timestamp_ns)))
        .collect()
}

/// Viewing direction (surface frame) of output pixel `(x, y)`: the ray from
/// the surface frame origin through the pixel's surface sample.
///
/// Written independently of the projection surfaces in the core crate.
pub fn view_ray(spec: &ProjectionSpec, x: u32, y: u32) -> Option<Vector3<f64>> {
    let (w, h) = (f64::from(spec.width), f64::from(spec.height));
    // Pixel center in normalized [-0.5, 0.5] coordinates.
    let nx = (f64::from(x) + 0.5) / w - 0.5;
    let ny = (f64::from(y) + 0.5) / h - 0.5;
    match spec.surface {
        Surface::Perspective(p) => {
            // Image spans [-tan(hfov/2), tan(hfov/2)] horizontally at unit depth.
            let k = 2.0 * (p.hfov * 0.5).tan();
            Some(Vector3::new(nx * k, ny * k * h / w, 1.0))
        }
        Surface::Mercator(m) => {
            let azimuth = -(f64::from(x) + 0.5) * TAU / w;
            let rise = -2.0 * m.vertical_half_fov.tan() * ny;
            Some(Vector3::new(azimuth.cos(), azimuth.sin(), rise))
        }
        Surface::Spherical(s) => {
            let rho = nx.hypot(ny);
            if 2.0 * rho > 1.0 {
                return None;
            }
            if rho == 0.0 {
                return Some(Vector3::z());
            }
            let polar = rho * s.fov;
            let sp = polar.sin();
            // Image x maps to +x, image up (-ny) maps to -y.
            Some(Vector3::new(sp * nx / rho, sp * ny / rho, polar.cos()))
        }
    }
}

/// The image an ideal virtual camera at the surface origin would record,
/// bypassing the physical cameras entirely.
pub fn reference_view(scene: &Scene, spec: &ProjectionSpec) -> Result<ImageFrame> {
    if spec.surface_pose.parent_frame() != scene.frame {
        return Err(Error::FrameChain {
            expected: scene.frame.clone(),
            found: spec.surface_pose.parent_frame().to_owned(),
        });
    }
    let origin = Point3::from(*spec.surface_pose.translation());
    let rot = *spec.surface_pose.rotation();
    let data = render(
        spec.width,
        spec.height,
        |x, y| view_ray(spec, x, y).map(|d| (origin, rot * d)),
        scene,
    );
    ImageFrame::new(spec.width, spec.height, 3, data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::{Primitive, Shape, Texture};
    use omniview_core::{CameraIntrinsics, PerspectiveParams, Pose};

    fn red_wall() -> Scene {
        Scene {
            frame: "R".into(),
            primitives: vec![Primitive {
                shape: Shape::Plane {
                    half_extents: [100.0, 100.0],
                },
                pose: Pose::from_translation("R", "wall", Vector3::new(0.0, 0.0, 5.0)),
                texture: Texture::Solid([255, 0, 0]),
            }],
        }
    }

    fn pinhole() -> Camera {
        Camera::new(
            "cam",
            CameraIntrinsics::pinhole(64, 48, 50.0, 50.0, 31.5, 23.5),
            Pose::identity("R", "cam"),
        )
    }

    #[test]
    fn solid_plane_fills_view() {
        let f = raycast(&red_wall(), &pinhole()).unwrap();
        assert!(f.data.chunks(3).all(|p| p == [255, 0, 0]));
        assert_eq!(f.camera_name, "cam");
    }

    #[test]
    fn empty_direction_is_background() {
        let mut cam = pinhole();
        cam.extrinsic = Pose::from_axis_angle("R", "cam", Vector3::y(), std::f64::consts::PI, Vector3::zeros());
        let f = raycast(&red_wall(), &cam).unwrap();
        assert!(f.data.chunks(3).all(|p| p == BACKGROUND));
    }

    #[test]
    fn checker_edges_land_on_predicted_columns() {
        // Checker plane at z = 2, cells 0.25 m: edges at x = k * 0.25, i.e.
        // pixel column u = cx + fx * x / z.
        let scene = Scene {
            frame: "R".into(),
            primitives: vec![Primitive {
                shape: Shape::Plane {
                    half_extents: [100.0, 100.0],
                },
                pose: Pose::from_translation("R", "wall", Vector3::new(0.0, 0.0, 2.0)),
                texture: Texture::Checker {
                    color_a: [255, 255, 255],
                    color_b: [0, 0, 0],
                    cell_size_m: 0.25,
                },
            }],
        };
        let cam = Camera::new(
            "cam",
            CameraIntrinsics::pinhole(101, 11, 40.0, 40.0, 50.3, 5.3),
            Pose::identity("R", "cam"),
        );
        let f = raycast(&scene, &cam).unwrap();
        let row = 5;
        let mut edges = vec![];
        for u in 1..101 {
            if f.pixel(u, row) != f.pixel(u - 1, row) {
                edges.push(u);
            }
        }
        // Edge between columns u-1 and u where x crosses k * 0.25.
        let expected: Vec<u32> = (-10..=10)
            .map(|k| 50.3 + 40.0 * (f64::from(k) * 0.25) / 2.0)
            .filter(|&c| c > 0.0 && c < 100.0)
            .map(|c| c.ceil() as u32)
            .collect();
        assert_eq!(edges, expected);
    }

    #[test]
    fn reference_view_is_deterministic() {
        let spec = ProjectionSpec::new(
            Surface::Perspective(PerspectiveParams {
                focal_length: 1.0,
                hfov: 1.5,
            }),
            32,
            16,
            Pose::identity("R", "P"),
        );
        let a = reference_view(&red_wall(), &spec).unwrap();
        let b = reference_view(&red_wall(), &spec).unwrap();
        assert_eq!(a, b);
        assert!(a.data.chunks(3).all(|p| p == [255, 0, 0]));
    }

    #[test]
    fn frame_mismatch_is_reported() {
        let mut cam = pinhole();
        cam.extrinsic = Pose::identity("world", "cam");
        assert!(raycast(&red_wall(), &cam).is_err());
    }
}
