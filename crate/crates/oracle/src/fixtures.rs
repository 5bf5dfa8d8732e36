//! Standard synthetic rigs and scenes used by the test suites, the CLI and
//! the benches.

use std::f64::consts::{FRAC_PI_2, PI};

use omniview_core::{Camera, CameraIntrinsics, CameraRig, Pose, Vector3};

use crate::scene::{Primitive, Scene, Shape, Texture};

pub const RIG_FRAME: &str = "rig";

/// Side length of each fisheye image.
pub const FISHEYE_SIZE: u32 = 1504;
/// Half-angle of each fisheye lens (210° full field).
pub const FISHEYE_HALF_FOV_DEG: f64 = 105.0;
/// Image radius, in pixels, at the half-angle.
pub const FISHEYE_IMAGE_RADIUS: f64 = 740.0;
/// Distance between the two optical centers.
pub const FISHEYE_BASELINE_M: f64 = 0.02;

/// Two 210° equidistant fisheyes, back to back along z.
///
/// `front` looks along +z, `back` along -z (rotated 180° about y).
pub fn two_fisheye_rig() -> CameraRig {
    let half_fov = FISHEYE_HALF_FOV_DEG.to_radians();
    let f = FISHEYE_IMAGE_RADIUS / half_fov;
    let c = (f64::from(FISHEYE_SIZE) - 1.0) / 2.0;
    let intr = CameraIntrinsics::equidistant(FISHEYE_SIZE, FISHEYE_SIZE, f, f, c, c, half_fov);
    let b = FISHEYE_BASELINE_M / 2.0;
    CameraRig::new(
        RIG_FRAME,
        vec![
            Camera::new(
                "front",
                intr.clone(),
                Pose::from_translation(RIG_FRAME, "front", Vector3::new(0.0, 0.0, b)),
            ),
            Camera::new(
                "back",
                intr,
                Pose::from_axis_angle(RIG_FRAME, "back", Vector3::y(), PI, Vector3::new(0.0, 0.0, -b)),
            ),
        ],
    )
}

/// One undistorted pinhole at the rig origin looking along +z.
pub fn single_pinhole_rig(width: u32, height: u32, focal_px: f64) -> CameraRig {
    let intr = CameraIntrinsics::pinhole(
        width,
        height,
        focal_px,
        focal_px,
        (f64::from(width) - 1.0) / 2.0,
        (f64::from(height) - 1.0) / 2.0,
    );
    CameraRig::new(RIG_FRAME, vec![Camera::new("cam0", intr, Pose::identity(RIG_FRAME, "cam0"))])
}

fn checker(color_a: [u8; 3], color_b: [u8; 3], cell: f64) -> Texture {
    Texture::Checker {
        color_a,
        color_b,
        cell_size_m: cell,
    }
}

fn wall(name: &str, axis: Vector3<f64>, angle: f64, at: Vector3<f64>, half: f64, texture: Texture) -> Primitive {
    Primitive {
        shape: Shape::Plane {
            half_extents: [half, half],
        },
        pose: Pose::from_axis_angle(RIG_FRAME, name, axis, angle, at),
        texture,
    }
}

/// Closed 8 m cube with a differently colored checkerboard (0.5 m cells) on
/// every face, plus a checkered sphere and a solid box inside.
///
/// Frame conventions follow the cameras: +z forward, +y down.
pub fn checker_room() -> Scene {
    const H: f64 = 4.0;
    const CELL: f64 = 0.5;
    let x = Vector3::x();
    let y = Vector3::y();
    let mut primitives = vec![
        wall("front", y, 0.0, Vector3::new(0.0, 0.0, H), H, checker([230, 60, 40], [40, 60, 200], CELL)),
        wall("back", y, PI, Vector3::new(0.0, 0.0, -H), H, checker([240, 220, 60], [30, 120, 60], CELL)),
        wall("right", y, FRAC_PI_2, Vector3::new(H, 0.0, 0.0), H, checker([250, 250, 250], [20, 20, 20], CELL)),
        wall("left", y, -FRAC_PI_2, Vector3::new(-H, 0.0, 0.0), H, checker([200, 90, 200], [90, 200, 200], CELL)),
        wall("floor", x, FRAC_PI_2, Vector3::new(0.0, H, 0.0), H, checker([180, 140, 90], [70, 50, 30], CELL)),
        wall("ceiling", x, -FRAC_PI_2, Vector3::new(0.0, -H, 0.0), H, checker([160, 200, 240], [60, 80, 140], CELL)),
    ];
    primitives.push(Primitive {
        shape: Shape::Sphere { radius: 0.6 },
        pose: Pose::from_translation(RIG_FRAME, "ball", Vector3::new(1.5, 1.0, 2.5)),
        texture: checker([255, 140, 0], [0, 0, 120], 0.3),
    });
    primitives.push(Primitive {
        shape: Shape::Box {
            half_extents: [0.5, 0.5, 0.5],
        },
        pose: Pose::from_euler(RIG_FRAME, "crate", 0.0, 0.4, 0.0, Vector3::new(-1.5, 1.5, -2.0)),
        texture: Texture::Solid([120, 200, 80]),
    });
    Scene {
        frame: RIG_FRAME.into(),
        primitives,
    }
}

/// Unbounded (400 m) checker floor `depth` meters below the rig, i.e. the
/// plane y = depth, with `cell` sized squares.
pub fn checker_floor(depth: f64, cell: f64) -> Scene {
    Scene {
        frame: RIG_FRAME.into(),
        primitives: vec![wall(
            "floor",
            Vector3::x(),
            FRAC_PI_2,
            Vector3::new(0.0, depth, 0.0),
            200.0,
            checker([255, 255, 255], [0, 0, 0], cell),
        )],
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use omniview_core::Point3;

    #[test]
    fn fisheye_rig_is_valid() {
        let rig = two_fisheye_rig();
        rig.validate().unwrap();
        let front = &rig.cameras[0];
        // The lens rim sits FISHEYE_IMAGE_RADIUS px from the center.
        let theta = FISHEYE_HALF_FOV_DEG.to_radians() - 1e-9;
        let p = Point3::new(theta.sin(), 0.0, theta.cos());
        let px = front.intrinsics.project(&p).unwrap();
        assert!((px.u - 751.5 - FISHEYE_IMAGE_RADIUS).abs() < 1e-6);
    }

    #[test]
    fn room_walls_enclose_origin() {
        let room = checker_room();
        room.validate().unwrap();
        for d in [
            Vector3::x(),
            -Vector3::x(),
            Vector3::y(),
            -Vector3::y(),
            Vector3::z(),
            -Vector3::z(),
            Vector3::new(1.0, 1.0, 1.0),
            Vector3::new(-0.3, 0.9, -0.2),
        ] {
            assert!(room.trace(&Point3::origin(), &d).is_some(), "{d:?}");
        }
    }

    #[test]
    fn floor_is_below() {
        let floor = checker_floor(2.0, 0.5);
        let hit = floor.trace(&Point3::origin(), &Vector3::y()).unwrap();
        assert!((hit.distance - 2.0).abs() < 1e-12);
        assert!(floor.trace(&Point3::origin(), &-Vector3::y()).is_none());
    }
}
