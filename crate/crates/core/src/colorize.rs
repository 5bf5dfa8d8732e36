//! Lidar point cloud colorization from the rig's camera images.

use nalgebra::Vector3;
use rayon::prelude::*;

use crate::calibration::CameraRig;
use crate::error::{Error, Result};
use crate::frame::ImageFrame;
use crate::geometry::{Point3, Pose};
use crate::mapper::CameraSet;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LidarPoint {
    pub position: Point3,
    pub intensity: Option<f32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    /// Frame the points are expressed in (the Lidar frame).
    pub frame: String,
    pub timestamp_ns: u64,
    pub points: Vec<LidarPoint>,
}

impl PointCloud {
    pub fn from_positions(frame: impl Into<String>, positions: impl IntoIterator<Item = Point3>) -> Self {
        Self {
            frame: frame.into(),
            timestamp_ns: 0,
            points: positions
                .into_iter()
                .map(|position| LidarPoint {
                    position,
                    intensity: None,
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ColoredPoint {
    pub position: Point3,
    pub intensity: Option<f32>,
    pub color: [u8; 3],
    /// Camera that supplied the color; `None` if no camera observed the point.
    pub source_camera: Option<u16>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ColoredPointCloud {
    pub frame: String,
    pub timestamp_ns: u64,
    pub points: Vec<ColoredPoint>,
    /// Camera frames ignored because they were outside the time window.
    pub stale_frames: usize,
}

/// Oriented box (in the rig reference frame) covering part of the robot body.
/// Camera rays passing through it cannot color points behind it.
#[derive(Debug, Clone, PartialEq)]
pub struct ExclusionVolume {
    /// `R <- box`; the box is centered on its frame origin.
    pub pose: Pose,
    pub half_extents: Vector3<f64>,
}

impl ExclusionVolume {
    pub fn new(pose: Pose, half_extents: Vector3<f64>) -> Self {
        Self { pose, half_extents }
    }

    /// Distance along the normalized ray `origin + t * dir` at which it
    /// enters the box (0 if it starts inside). Box faces are inclusive.
    pub fn ray_entry(&self, origin: &Point3, dir: &Vector3<f64>) -> Option<f64> {
        let inv = self.pose.inverse();
        let o = inv.transform_point(origin).coords;
        let d = inv.transform_vector(&dir.normalize());
        let mut t_min = f64::NEG_INFINITY;
        let mut t_max = f64::INFINITY;
        for axis in 0..3 {
            let h = self.half_extents[axis];
            if d[axis] == 0.0 {
                if o[axis] < -h || o[axis] > h {
                    return None;
                }
                continue;
            }
            let t1 = (-h - o[axis]) / d[axis];
            let t2 = (h - o[axis]) / d[axis];
            t_min = t_min.max(t1.min(t2));
            t_max = t_max.min(t1.max(t2));
        }
        if t_max < t_min || t_max < 0.0 {
            return None;
        }
        Some(t_min.max(0.0))
    }

    /// True if the segment from `origin` toward `target` enters the box
    /// before reaching `target`.
    pub fn occludes(&self, origin: &Point3, target: &Point3) -> bool {
        let delta = target - origin;
        let dist = delta.norm();
        if dist == 0.0 {
            return false;
        }
        self.ray_entry(origin, &delta).is_some_and(|t| t < dist)
    }
}

/// `ray_entry` under its interface name: intersection distance if the ray
/// hits the volume.
pub fn ray_intersects_box(origin: &Point3, dir: &Vector3<f64>, vol: &ExclusionVolume) -> Option<f64> {
    vol.ray_entry(origin, dir)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ColorizeOptions {
    /// Largest allowed |frame timestamp - scan timestamp|.
    pub max_frame_age_ns: u64,
    pub fill: [u8; 3],
}

impl Default for ColorizeOptions {
    fn default() -> Self {
        Self {
            max_frame_age_ns: 100_000_000,
            fill: [128, 128, 128],
        }
    }
}

/// Colors every point from the camera that sees it closest to its principal
/// point. `lidar_extrinsic` is `R <- L`.
pub fn colorize(
    rig: &CameraRig,
    frames: &[ImageFrame],
    lidar_extrinsic: &Pose,
    cloud: &PointCloud,
    volumes: &[ExclusionVolume],
    opts: &ColorizeOptions,
) -> Result<ColoredPointCloud> {
    if lidar_extrinsic.parent_frame() != rig.reference_frame {
        return Err(Error::FrameChain {
            expected: rig.reference_frame.clone(),
            found: lidar_extrinsic.parent_frame().to_owned(),
        });
    }
    if lidar_extrinsic.child_frame() != cloud.frame {
        return Err(Error::FrameChain {
            expected: cloud.frame.clone(),
            found: lidar_extrinsic.child_frame().to_owned(),
        });
    }
    for v in volumes {
        if v.pose.parent_frame() != rig.reference_frame {
            return Err(Error::FrameChain {
                expected: rig.reference_frame.clone(),
                found: v.pose.parent_frame().to_owned(),
            });
        }
    }
    let cams = CameraSet::new(rig, lidar_extrinsic)?;

    let mut sources: Vec<Option<&ImageFrame>> = Vec::with_capacity(rig.cameras.len());
    let mut stale_frames = 0;
    for cam in &rig.cameras {
        let frame = frames
            .iter()
            .find(|f| f.camera_name == cam.name)
            .ok_or_else(|| Error::MissingFrame {
                camera: cam.name.clone(),
            })?;
        if frame.width != cam.intrinsics.width || frame.height != cam.intrinsics.height {
            return Err(Error::FrameSize {
                camera: cam.name.clone(),
                got_w: frame.width,
                got_h: frame.height,
                want_w: cam.intrinsics.width,
                want_h: cam.intrinsics.height,
            });
        }
        if frame.timestamp_ns.abs_diff(cloud.timestamp_ns) > opts.max_frame_age_ns {
            stale_frames += 1;
            sources.push(None);
        } else {
            sources.push(Some(frame));
        }
    }
    let centers: Vec<Point3> = rig
        .cameras
        .iter()
        .map(|c| Point3::from(*c.extrinsic.translation()))
        .collect();
    let to_ref = lidar_extrinsic.to_rigid();

    let points = cloud
        .points
        .par_iter()
        .map(|lp| {
            let p = lp.position.coords;
            let p_ref = Point3::from(to_ref.apply(&p));
            let hit = cams.best(&p, |i| {
                sources[i].is_some() && !volumes.iter().any(|v| v.occludes(&centers[i], &p_ref))
            });
            match hit {
                Some((i, px)) => ColoredPoint {
                    position: lp.position,
                    intensity: lp.intensity,
                    color: sources[i].expect("allowed cameras have frames").sample_rgb8(px.u as f32, px.v as f32),
                    source_camera: Some(i as u16),
                },
                None => ColoredPoint {
                    position: lp.position,
                    intensity: lp.intensity,
                    color: opts.fill,
                    source_camera: None,
                },
            }
        })
        .collect();

    Ok(ColoredPointCloud {
        frame: cloud.frame.clone(),
        timestamp_ns: cloud.timestamp_ns,
        points,
        stale_frames,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::camera::{Camera, CameraIntrinsics};

    fn unit_box() -> ExclusionVolume {
        ExclusionVolume::new(Pose::identity("R", "box"), Vector3::new(1.0, 1.0, 1.0))
    }

    #[test]
    fn ray_through_center() {
        let t = unit_box().ray_entry(&Point3::new(-5.0, 0.0, 0.0), &Vector3::x()).unwrap();
        assert!((t - 4.0).abs() < 1e-12);
    }

    #[test]
    fn parallel_outside_face_misses() {
        assert!(unit_box().ray_entry(&Point3::new(-5.0, 1.5, 0.0), &Vector3::x()).is_none());
    }

    #[test]
    fn grazing_corner_counts_as_hit() {
        // Passes exactly through the corner (1, 1, 0) edge.
        let o = Point3::new(0.0, 2.0, 0.0);
        let d = Vector3::new(1.0, -1.0, 0.0);
        assert!(unit_box().ray_entry(&o, &d).is_some());
        // Parallel and lying on the face plane.
        assert!(unit_box().ray_entry(&Point3::new(-5.0, 1.0, 1.0), &Vector3::x()).is_some());
        // Just outside.
        assert!(unit_box()
            .ray_entry(&Point3::new(-5.0, 1.0 + 1e-9, 0.0), &Vector3::x())
            .is_none());
    }

    #[test]
    fn box_behind_origin_misses() {
        assert!(unit_box().ray_entry(&Point3::new(5.0, 0.0, 0.0), &Vector3::x()).is_none());
    }

    #[test]
    fn occlusion_needs_box_before_target() {
        let b = unit_box();
        assert!(b.occludes(&Point3::new(-5.0, 0.0, 0.0), &Point3::new(5.0, 0.0, 0.0)));
        assert!(!b.occludes(&Point3::new(-5.0, 0.0, 0.0), &Point3::new(-2.0, 0.0, 0.0)));
    }

    #[test]
    fn rotated_box() {
        let pose = Pose::from_axis_angle("R", "box", Vector3::z(), std::f64::consts::FRAC_PI_4, Vector3::new(3.0, 0.0, 0.0));
        let b = ExclusionVolume::new(pose, Vector3::new(1.0, 1.0, 1.0));
        // Diagonal of the rotated square reaches x = 3 - sqrt(2).
        let t = b.ray_entry(&Point3::origin(), &Vector3::x()).unwrap();
        assert!((t - (3.0 - 2f64.sqrt())).abs() < 1e-12);
    }

    fn two_cam_rig() -> CameraRig {
        let a = CameraIntrinsics::pinhole(200, 200, 100.0, 100.0, 90.0, 100.0);
        let b = CameraIntrinsics::pinhole(200, 200, 100.0, 100.0, 150.0, 100.0);
        CameraRig::new(
            "R",
            vec![
                Camera::new("a", a, Pose::identity("R", "a")),
                Camera::new("b", b, Pose::identity("R", "b")),
            ],
        )
    }

    fn frames() -> Vec<ImageFrame> {
        vec![
            ImageFrame::filled(200, 200, [255, 0, 0]).with_camera("a"),
            ImageFrame::filled(200, 200, [0, 0, 255]).with_camera("b"),
        ]
    }

    #[test]
    fn colors_from_camera_nearest_its_center() {
        let rig = two_cam_rig();
        let cloud = PointCloud::from_positions("L", [Point3::new(0.0, 0.0, 2.0), Point3::new(0.0, 0.0, -2.0)]);
        let lidar = Pose::identity("R", "L");
        let out = colorize(&rig, &frames(), &lidar, &cloud, &[], &ColorizeOptions::default()).unwrap();
        assert_eq!(out.points[0].color, [255, 0, 0]);
        assert_eq!(out.points[0].source_camera, Some(0));
        assert_eq!(out.points[1].source_camera, None);
        assert_eq!(out.points[1].color, [128, 128, 128]);
    }

    #[test]
    fn exclusion_falls_back_to_next_camera() {
        let rig = two_cam_rig();
        let cloud = PointCloud::from_positions("L", [Point3::new(0.0, 0.0, 2.0)]);
        let lidar = Pose::identity("R", "L");
        // Both cameras share the origin, so the box blocks both.
        let vol = ExclusionVolume::new(Pose::from_translation("R", "box", Vector3::new(0.0, 0.0, 1.0)), Vector3::repeat(0.1));
        let out = colorize(&rig, &frames(), &lidar, &cloud, &[vol], &ColorizeOptions::default()).unwrap();
        assert_eq!(out.points[0].source_camera, None);
    }

    #[test]
    fn stale_frames_are_skipped() {
        let rig = two_cam_rig();
        let mut cloud = PointCloud::from_positions("L", [Point3::new(0.0, 0.0, 2.0)]);
        cloud.timestamp_ns = 1_000_000_000;
        let mut fr = frames();
        fr[0].timestamp_ns = 1_050_000_000;
        fr[1].timestamp_ns = 800_000_000;
        let out = colorize(&rig, &fr, &Pose::identity("R", "L"), &cloud, &[], &ColorizeOptions::default()).unwrap();
        assert_eq!(out.stale_frames, 1);
        assert_eq!(out.points[0].source_camera, Some(0));
        fr[0].timestamp_ns = 0;
        let out = colorize(&rig, &fr, &Pose::identity("R", "L"), &cloud, &[], &ColorizeOptions::default()).unwrap();
        assert_eq!(out.stale_frames, 2);
        assert_eq!(out.points[0].source_camera, None);
    }

    #[test]
    fn frame_mismatch_errors() {
        let rig = two_cam_rig();
        let cloud = PointCloud::from_positions("L", [Point3::new(0.0, 0.0, 2.0)]);
        let opts = ColorizeOptions::default();
        assert!(matches!(
            colorize(&rig, &frames(), &Pose::identity("R", "velodyne"), &cloud, &[], &opts),
            Err(Error::FrameChain { .. })
        ));
        assert!(matches!(
            colorize(&rig, &frames(), &Pose::identity("base", "L"), &cloud, &[], &opts),
            Err(Error::FrameChain { .. })
        ));
        assert!(matches!(
            colorize(&rig, &frames()[..1], &Pose::identity("R", "L"), &cloud, &[], &opts),
            Err(Error::MissingFrame { .. })
        ));
    }
}
