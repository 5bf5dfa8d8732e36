//! Virtual views from calibrated multi-camera rigs.
//!
//! A [`ProjectionSpec`] describes a virtual view as a surface (plane,
//! cylinder or sphere) posed in the rig's reference frame. Building a
//! [`ProjectionMap`] resolves, once, which camera pixel feeds every output
//! pixel; [`remap`] then produces views from new frames at table-lookup cost.
//! The same camera selection colors Lidar scans ([`colorize`]).
//!
//! ```no_run
//! use omniview_core::{build_projection_map, calibration, remap, ImageFrame, DEFAULT_FILL};
//!
//! let rig = calibration::load_rig("rig.json")?;
//! let spec = calibration::load_projection_spec("front.json")?;
//! let map = build_projection_map(&rig, &spec)?;
//! let frames: Vec<ImageFrame> = rig
//!     .cameras
//!     .iter()
//!     .map(|c| ImageFrame::load_png(format!("{}.png", c.name)).map(|f| f.with_camera(&c.name)))
//!     .collect::<Result<_, _>>()?;
//! remap(&map, &frames, DEFAULT_FILL)?.save_png("front.png")?;
//! # Ok::<(), omniview_core::Error>(())
//! ```

pub mod calibration;
pub mod camera;
pub mod colorize;
mod error;
pub mod frame;
pub mod geometry;
pub mod mapper;
pub mod ply;
pub mod surface;

pub use calibration::CameraRig;
pub use camera::{Camera, CameraIntrinsics, CameraModel};
pub use colorize::{
    colorize, ray_intersects_box, ColorizeOptions, ColoredPoint, ColoredPointCloud, ExclusionVolume, LidarPoint,
    PointCloud,
};
pub use error::{Error, Result};
pub use frame::ImageFrame;
pub use geometry::{PixelCoord, Point3, Pose, PoseJson};
pub use mapper::{build_projection_map, remap, MapEntry, ProjectionMap, ProjectionMapper, DEFAULT_FILL};
pub use surface::{MercatorParams, PerspectiveParams, ProjectionSpec, SphericalParams, Surface};

pub use nalgebra::{UnitQuaternion, Vector3};
