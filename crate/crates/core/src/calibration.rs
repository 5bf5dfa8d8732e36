//! Loading and validation of rig calibrations, projection specs and
//! exclusion volumes. Files carry angles in degrees; everything in memory is
//! radians.

use std::collections::HashSet;
use std::path::Path;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::camera::{Camera, CameraIntrinsics, CameraModel};
use crate::colorize::ExclusionVolume;
use crate::error::{Error, Result};
use crate::geometry::{Pose, PoseJson};
use crate::surface::{ProjectionSpec, ProjectionSpecJson, SurfaceJson};

/// Version tag every configuration file must carry.
pub const SCHEMA: &str = "omniview/1";

/// Ordered set of cameras sharing a reference frame, optionally with a Lidar.
#[derive(Debug, Clone, PartialEq)]
pub struct CameraRig {
    pub reference_frame: String,
    pub cameras: Vec<Camera>,
    /// `R <- L`
    pub lidar_extrinsic: Option<Pose>,
}

impl CameraRig {
    pub fn new(reference_frame: impl Into<String>, cameras: Vec<Camera>) -> Self {
        Self {
            reference_frame: reference_frame.into(),
            cameras,
            lidar_extrinsic: None,
        }
    }

    pub fn with_lidar(mut self, lidar_extrinsic: Pose) -> Self {
        self.lidar_extrinsic = Some(lidar_extrinsic);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.cameras.is_empty() {
            return Err(Error::EmptyRig);
        }
        let mut names = HashSet::new();
        for (i, cam) in self.cameras.iter().enumerate() {
            let path = format!("cameras[{i}] ({})", cam.name);
            if !names.insert(cam.name.as_str()) {
                return Err(Error::validation(format!("{path}.name"), "duplicate camera name"));
            }
            cam.intrinsics.validate(&path)?;
            if cam.extrinsic.parent_frame() != self.reference_frame {
                return Err(Error::validation(
                    format!("{path}.extrinsic.parent"),
                    format!(
                        "expected reference frame `{}`, found `{}`",
                        self.reference_frame,
                        cam.extrinsic.parent_frame()
                    ),
                ));
            }
        }
        if let Some(lidar) = &self.lidar_extrinsic {
            if lidar.parent_frame() != self.reference_frame {
                return Err(Error::validation(
                    "lidar_extrinsic.parent",
                    format!("expected reference frame `{}`", self.reference_frame),
                ));
            }
        }
        Ok(())
    }

    pub fn camera_index(&self, name: &str) -> Option<usize> {
        self.cameras.iter().position(|c| c.name == name)
    }

    /// Content hash of the canonical serialization, first 8 bytes.
    pub fn fingerprint(&self) -> [u8; 8] {
        fingerprint_of(&RigJson::from(self))
    }
}

pub(crate) fn fingerprint_of<T: Serialize>(value: &T) -> [u8; 8] {
    let bytes = serde_json::to_vec(value).expect("configuration types always serialize");
    let digest = Sha256::digest(&bytes);
    let mut out = [0u8; 8];
    out.copy_from_slice(&digest[..8]);
    out
}

impl ProjectionSpec {
    pub fn fingerprint(&self) -> [u8; 8] {
        fingerprint_of(&ProjectionSpecJson::from(self))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RigJson {
    pub schema: String,
    pub reference_frame: String,
    pub cameras: Vec<CameraJson>,
    #[serde(default)]
    pub lidar_extrinsic: Option<PoseJson>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CameraJson {
    pub name: String,
    pub model: CameraModel,
    pub width: u32,
    pub height: u32,
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub distortion: [f64; 4],
    pub fov_limit_deg: f64,
    pub extrinsic: PoseJson,
}

impl From<&CameraRig> for RigJson {
    fn from(rig: &CameraRig) -> Self {
        RigJson {
            schema: SCHEMA.to_owned(),
            reference_frame: rig.reference_frame.clone(),
            cameras: rig
                .cameras
                .iter()
                .map(|c| {
                    let i = &c.intrinsics;
                    CameraJson {
                        name: c.name.clone(),
                        model: i.model,
                        width: i.width,
                        height: i.height,
                        fx: i.fx,
                        fy: i.fy,
                        cx: i.cx,
                        cy: i.cy,
                        distortion: i.distortion,
                        fov_limit_deg: i.fov_limit.to_degrees(),
                        extrinsic: PoseJson::from(&c.extrinsic),
                    }
                })
                .collect(),
            lidar_extrinsic: rig.lidar_extrinsic.as_ref().map(PoseJson::from),
        }
    }
}

impl RigJson {
    pub fn to_rig(&self) -> Result<CameraRig> {
        check_schema(&self.schema)?;
        let mut cameras = Vec::with_capacity(self.cameras.len());
        for (i, c) in self.cameras.iter().enumerate() {
            let path = format!("cameras[{i}] ({})", c.name);
            let intrinsics = CameraIntrinsics {
                model: c.model,
                width: c.width,
                height: c.height,
                fx: c.fx,
                fy: c.fy,
                cx: c.cx,
                cy: c.cy,
                distortion: c.distortion,
                fov_limit: c.fov_limit_deg.to_radians(),
            };
            let extrinsic = c.extrinsic.to_pose(&format!("{path}.extrinsic"))?;
            cameras.push(Camera::new(c.name.clone(), intrinsics, extrinsic));
        }
        let lidar_extrinsic = self
            .lidar_extrinsic
            .as_ref()
            .map(|p| p.to_pose("lidar_extrinsic"))
            .transpose()?;
        let rig = CameraRig {
            reference_frame: self.reference_frame.clone(),
            cameras,
            lidar_extrinsic,
        };
        rig.validate()?;
        Ok(rig)
    }
}

impl From<&ProjectionSpec> for ProjectionSpecJson {
    fn from(spec: &ProjectionSpec) -> Self {
        ProjectionSpecJson {
            schema: SCHEMA.to_owned(),
            surface: SurfaceJson::from(&spec.surface),
            width: spec.width,
            height: spec.height,
            pose: PoseJson::from(&spec.surface_pose),
        }
    }
}

impl ProjectionSpecJson {
    pub fn to_spec(&self) -> Result<ProjectionSpec> {
        check_schema(&self.schema)?;
        let spec = ProjectionSpec::new(
            (&self.surface).into(),
            self.width,
            self.height,
            self.pose.to_pose("pose")?,
        );
        spec.validate("spec")?;
        Ok(spec)
    }
}

fn check_schema(schema: &str) -> Result<()> {
    if schema != SCHEMA {
        return Err(Error::validation("schema", format!("expected `{SCHEMA}`, found `{schema}`")));
    }
    Ok(())
}

/// Deserializes with the JSON path of the first offending field in the error.
fn parse_json<T: serde::de::DeserializeOwned>(text: &str, what: &str) -> Result<T> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        let path = if path == "." { what.to_owned() } else { format!("{what}: {path}") };
        Error::validation(path, e.into_inner().to_string())
    })
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_json(&text, &path.display().to_string())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn parse_rig(text: &str) -> Result<CameraRig> {
    let json: RigJson = parse_json(text, "rig")?;
    json.to_rig()
}

pub fn load_rig(path: impl AsRef<Path>) -> Result<CameraRig> {
    read_json::<RigJson>(path.as_ref())?.to_rig()
}

pub fn save_rig(path: impl AsRef<Path>, rig: &CameraRig) -> Result<()> {
    write_json(path.as_ref(), &RigJson::from(rig))
}

pub fn parse_projection_spec(text: &str) -> Result<ProjectionSpec> {
    let json: ProjectionSpecJson = parse_json(text, "spec")?;
    json.to_spec()
}

pub fn load_projection_spec(path: impl AsRef<Path>) -> Result<ProjectionSpec> {
    read_json::<ProjectionSpecJson>(path.as_ref())?.to_spec()
}

pub fn save_projection_spec(path: impl AsRef<Path>, spec: &ProjectionSpec) -> Result<()> {
    write_json(path.as_ref(), &ProjectionSpecJson::from(spec))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExclusionsJson {
    pub schema: String,
    pub volumes: Vec<ExclusionVolumeJson>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExclusionVolumeJson {
    pub pose: PoseJson,
    pub half_extents: [f64; 3],
}

impl ExclusionsJson {
    pub fn to_volumes(&self, reference_frame: &str) -> Result<Vec<ExclusionVolume>> {
        check_schema(&self.schema)?;
        self.volumes
            .iter()
            .enumerate()
            .map(|(i, v)| {
                let path = format!("volumes[{i}]");
                let pose = v.pose.to_pose(&format!("{path}.pose"))?;
                if pose.parent_frame() != reference_frame {
                    return Err(Error::validation(
                        format!("{path}.pose.parent"),
                        format!("expected reference frame `{reference_frame}`"),
                    ));
                }
                if v.half_extents.iter().any(|&e| !(e.is_finite() && e > 0.0)) {
                    return Err(Error::validation(format!("{path}.half_extents"), "must be positive"));
                }
                Ok(ExclusionVolume::new(pose, Vector3::from(v.half_extents)))
            })
            .collect()
    }
}

impl From<&[ExclusionVolume]> for ExclusionsJson {
    fn from(volumes: &[ExclusionVolume]) -> Self {
        ExclusionsJson {
            schema: SCHEMA.to_owned(),
            volumes: volumes
                .iter()
                .map(|v| ExclusionVolumeJson {
                    pose: PoseJson::from(&v.pose),
                    half_extents: [v.half_extents.x, v.half_extents.y, v.half_extents.z],
                })
                .collect(),
        }
    }
}

/// Loads exclusion volumes; their poses must be expressed in `reference_frame`.
pub fn load_exclusions(path: impl AsRef<Path>, reference_frame: &str) -> Result<Vec<ExclusionVolume>> {
    read_json::<ExclusionsJson>(path.as_ref())?.to_volumes(reference_frame)
}

pub fn save_exclusions(path: impl AsRef<Path>, volumes: &[ExclusionVolume]) -> Result<()> {
    write_json(path.as_ref(), &ExclusionsJson::from(volumes))
}
