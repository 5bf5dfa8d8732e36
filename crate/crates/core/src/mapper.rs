//! Per-pixel projection maps.
//!
//! Building a map samples the projection surface, moves every sample into
//! each camera frame (`T_Ci_R * T_R_P`), projects it, and keeps the camera
//! whose image point lies closest to its principal point. Applying a map
//! ("remap") is then a table lookup plus bilinear interpolation, cheap enough
//! to run on every incoming frame set.

use std::io::{Read, Write};
use std::sync::Arc;

use nalgebra::Vector3;
use rayon::prelude::*;

use crate::calibration::CameraRig;
use crate::camera::CameraIntrinsics;
use crate::error::{Error, Result};
use crate::frame::{quantize, ImageFrame};
use crate::geometry::{PixelCoord, Pose, RigidTransform};
use crate::surface::ProjectionSpec;

/// One lookup-table record.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MapEntry {
    /// Source camera index, `-1` when no camera sees the pixel.
    pub camera: i16,
    pub u: f32,
    pub v: f32,
}

impl MapEntry {
    pub const NONE: MapEntry = MapEntry {
        camera: -1,
        u: 0.0,
        v: 0.0,
    };

    pub fn camera_index(&self) -> Option<usize> {
        usize::try_from(self.camera).ok()
    }
}

/// Source camera geometry captured when a map is built, used to check the
/// frames handed to [`remap`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SourceCamera {
    pub name: String,
    pub width: u32,
    pub height: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionMap {
    pub width: u32,
    pub height: u32,
    pub entries: Vec<MapEntry>,
    pub sources: Vec<SourceCamera>,
    pub rig_fingerprint: [u8; 8],
    pub spec_fingerprint: [u8; 8],
}

impl ProjectionMap {
    pub fn entry(&self, u: u32, v: u32) -> MapEntry {
        self.entries[v as usize * self.width as usize + u as usize]
    }

    pub fn none_count(&self) -> usize {
        self.entries.iter().filter(|e| e.camera < 0).count()
    }
}

/// The cameras of a rig prepared for projecting points given in some frame
/// `F`: each holds `T_Ci_F` and its intrinsics.
pub(crate) struct CameraSet {
    cams: Vec<(RigidTransform, CameraIntrinsics)>,
}

impl CameraSet {
    /// `from_frame` is `R <- F`.
    pub(crate) fn new(rig: &CameraRig, from_frame: &Pose) -> Result<Self> {
        if rig.cameras.is_empty() {
            return Err(Error::EmptyRig);
        }
        let cams = rig
            .cameras
            .iter()
            .map(|c| {
                let t = c.extrinsic.inverse().compose(from_frame)?;
                Ok((t.to_rigid(), c.intrinsics.clone()))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { cams })
    }

    /// Camera whose projection of `p` lands closest to its principal point.
    /// Ties go to the lower index. `allow` can veto a camera; it is only
    /// consulted for candidates that would improve on the current best.
    #[inline]
    pub(crate) fn best(&self, p: &Vector3<f64>, mut allow: impl FnMut(usize) -> bool) -> Option<(usize, PixelCoord)> {
        let mut best: Option<(usize, PixelCoord, f64)> = None;
        for (i, (t, intr)) in self.cams.iter().enumerate() {
            let Some(px) = intr.project_vec(&t.apply(p), true) else {
                continue;
            };
            let d = px.distance_to(&intr.principal_point());
            if best.is_none_or(|(_, _, bd)| d < bd) && allow(i) {
                best = Some((i, px, d));
            }
        }
        best.map(|(i, px, _)| (i, px))
    }
}

fn check_rig_and_spec(rig: &CameraRig, spec: &ProjectionSpec) -> Result<()> {
    if rig.cameras.is_empty() {
        return Err(Error::EmptyRig);
    }
    if rig.cameras.len() > i16::MAX as usize {
        return Err(Error::validation("cameras", "too many cameras for a projection map"));
    }
    if spec.surface_pose.parent_frame() != rig.reference_frame {
        return Err(Error::FrameChain {
            expected: rig.reference_frame.clone(),
            found: spec.surface_pose.parent_frame().to_owned(),
        });
    }
    Ok(())
}

/// Computes the lookup table mapping every output pixel of `spec` to a
/// source camera pixel.
pub fn build_projection_map(rig: &CameraRig, spec: &ProjectionSpec) -> Result<ProjectionMap> {
    check_rig_and_spec(rig, spec)?;
    let cams = CameraSet::new(rig, &spec.surface_pose)?;
    let w = spec.width as usize;
    let mut entries = vec![MapEntry::NONE; w * spec.height as usize];
    entries.par_chunks_mut(w).enumerate().for_each(|(v, row)| {
        let vp = v as f64 + 0.5;
        for (u, slot) in row.iter_mut().enumerate() {
            let Some(x_p) = spec.surface_point(u as f64 + 0.5, vp) else {
                continue;
            };
            if let Some((i, px)) = cams.best(&x_p.coords, |_| true) {
                let src = &rig.cameras[i].intrinsics;
                *slot = MapEntry {
                    camera: i as i16,
                    u: narrow_below(px.u, src.width),
                    v: narrow_below(px.v, src.height),
                };
            }
        }
    });
    Ok(ProjectionMap {
        width: spec.width,
        height: spec.height,
        entries,
        sources: rig
            .cameras
            .iter()
            .map(|c| SourceCamera {
                name: c.name.clone(),
                width: c.intrinsics.width,
                height: c.intrinsics.height,
            })
            .collect(),
        rig_fingerprint: rig.fingerprint(),
        spec_fingerprint: spec.fingerprint(),
    })
}

/// Rounds to `f32` without letting a coordinate just under the image edge
/// round up onto it.
#[inline]
fn narrow_below(x: f64, limit: u32) -> f32 {
    let f = x as f32;
    let limit = limit as f32;
    if f >= limit {
        limit.next_down()
    } else {
        f
    }
}

/// Default color for pixels no camera observes.
pub const DEFAULT_FILL: [u8; 3] = [0, 0, 0];

/// Applies a projection map to a set of camera frames, matched to the map's
/// source cameras by `camera_name`. The output is always RGB; gray sources
/// are replicated. Its timestamp is the newest timestamp among the frames
/// used.
pub fn remap(map: &ProjectionMap, frames: &[ImageFrame], fill: [u8; 3]) -> Result<ImageFrame> {
    let mut used = vec![false; map.sources.len()];
    for e in &map.entries {
        if let Some(i) = e.camera_index() {
            used[i] = true;
        }
    }
    let mut lookup: Vec<Option<&ImageFrame>> = Vec::with_capacity(map.sources.len());
    for (src, &needed) in map.sources.iter().zip(&used) {
        let frame = frames.iter().find(|f| f.camera_name == src.name);
        match frame {
            Some(f) if f.width != src.width || f.height != src.height => {
                return Err(Error::FrameSize {
                    camera: src.name.clone(),
                    got_w: f.width,
                    got_h: f.height,
                    want_w: src.width,
                    want_h: src.height,
                });
            }
            None if needed => {
                return Err(Error::MissingFrame {
                    camera: src.name.clone(),
                });
            }
            _ => {}
        }
        lookup.push(frame.filter(|_| needed));
    }
    let timestamp_ns = lookup.iter().flatten().map(|f| f.timestamp_ns).max().unwrap_or(0);

    let w = map.width as usize;
    let mut data = vec![0u8; w * map.height as usize * 3];
    data.par_chunks_mut(w * 3)
        .zip(map.entries.par_chunks(w))
        .for_each(|(out_row, map_row)| {
            for (px, e) in out_row.chunks_exact_mut(3).zip(map_row) {
                let rgb = match e.camera_index() {
                    // `lookup` holds every camera the map references.
                    Some(i) => {
                        let s = lookup[i].expect("checked above").sample_bilinear(e.u, e.v);
                        [quantize(s[0]), quantize(s[1]), quantize(s[2])]
                    }
                    None => fill,
                };
                px.copy_from_slice(&rgb);
            }
        });
    Ok(ImageFrame {
        width: map.width,
        height: map.height,
        channels: 3,
        data,
        camera_name: String::new(),
        timestamp_ns,
    })
}

/// Keeps the rig and spec a map was built from so the view can be re-posed
/// (virtual pan-tilt) without reloading anything.
#[derive(Debug, Clone)]
pub struct ProjectionMapper {
    rig: Arc<CameraRig>,
    spec: ProjectionSpec,
}

impl ProjectionMapper {
    pub fn new(rig: Arc<CameraRig>, spec: ProjectionSpec) -> Result<Self> {
        check_rig_and_spec(&rig, &spec)?;
        Ok(Self { rig, spec })
    }

    pub fn rig(&self) -> &Arc<CameraRig> {
        &self.rig
    }

    pub fn spec(&self) -> &ProjectionSpec {
        &self.spec
    }

    pub fn build(&self) -> Result<ProjectionMap> {
        build_projection_map(&self.rig, &self.spec)
    }

    /// Replaces the surface pose and rebuilds. On error the previous pose is
    /// kept.
    pub fn retarget(&mut self, surface_pose: Pose) -> Result<ProjectionMap> {
        let mut spec = self.spec.clone();
        spec.surface_pose = surface_pose;
        let map = build_projection_map(&self.rig, &spec)?;
        self.spec = spec;
        Ok(map)
    }
}

const LUT_MAGIC: &[u8; 4] = b"OVPM";
const LUT_VERSION: u16 = 1;
const LUT_HEADER_LEN: usize = 4 + 2 + 4 + 4 + 8 + 8;
const LUT_RECORD_LEN: usize = 10;

impl ProjectionMap {
    /// Serializes to the binary cache layout (little-endian).
    pub fn to_lut_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(LUT_HEADER_LEN + self.entries.len() * LUT_RECORD_LEN);
        out.extend_from_slice(LUT_MAGIC);
        out.extend_from_slice(&LUT_VERSION.to_le_bytes());
        out.extend_from_slice(&self.width.to_le_bytes());
        out.extend_from_slice(&self.height.to_le_bytes());
        out.extend_from_slice(&self.rig_fingerprint);
        out.extend_from_slice(&self.spec_fingerprint);
        for e in &self.entries {
            out.extend_from_slice(&e.camera.to_le_bytes());
            out.extend_from_slice(&e.u.to_le_bytes());
            out.extend_from_slice(&e.v.to_le_bytes());
        }
        out
    }

    pub fn write_lut(&self, mut w: impl Write) -> std::io::Result<()> {
        w.write_all(&self.to_lut_bytes())
    }

    /// Parses a cache file. The fingerprints must match `rig` and `spec`,
    /// otherwise the cache is stale and rejected.
    pub fn read_lut(mut r: impl Read, rig: &CameraRig, spec: &ProjectionSpec) -> Result<ProjectionMap> {
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes)
            .map_err(|e| Error::Lut(format!("read failed: {e}")))?;
        Self::from_lut_bytes(&bytes, rig, spec)
    }

    pub fn from_lut_bytes(bytes: &[u8], rig: &CameraRig, spec: &ProjectionSpec) -> Result<ProjectionMap> {
        if bytes.len() < LUT_HEADER_LEN || &bytes[..4] != LUT_MAGIC {
            return Err(Error::Lut("bad magic".into()));
        }
        let version = u16::from_le_bytes([bytes[4], bytes[5]]);
        if version != LUT_VERSION {
            return Err(Error::Lut(format!("unsupported version {version}")));
        }
        let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
        let width = u32_at(6);
        let height = u32_at(10);
        let mut rig_fingerprint = [0u8; 8];
        rig_fingerprint.copy_from_slice(&bytes[14..22]);
        let mut spec_fingerprint = [0u8; 8];
        spec_fingerprint.copy_from_slice(&bytes[22..30]);
        if rig_fingerprint != rig.fingerprint() {
            return Err(Error::Lut("rig fingerprint mismatch".into()));
        }
        if spec_fingerprint != spec.fingerprint() || width != spec.width || height != spec.height {
            return Err(Error::Lut("spec fingerprint mismatch".into()));
        }
        let n = width as usize * height as usize;
        let body = &bytes[LUT_HEADER_LEN..];
        if body.len() != n * LUT_RECORD_LEN {
            return Err(Error::Lut(format!(
                "expected {} record bytes, found {}",
                n * LUT_RECORD_LEN,
                body.len()
            )));
        }
        let entries = body
            .chunks_exact(LUT_RECORD_LEN)
            .map(|r| {
                let camera = i16::from_le_bytes([r[0], r[1]]);
                MapEntry {
                    camera,
                    u: f32::from_le_bytes(r[2..6].try_into().unwrap()),
                    v: f32::from_le_bytes(r[6..10].try_into().unwrap()),
                }
            })
            .collect::<Vec<_>>();
        if entries
            .iter()
            .any(|e| e.camera < -1 || e.camera as isize >= rig.cameras.len() as isize)
        {
            return Err(Error::Lut("camera index out of range".into()));
        }
        Ok(ProjectionMap {
            width,
            height,
            entries,
            sources: rig
                .cameras
                .iter()
                .map(|c| SourceCamera {
                    name: c.name.clone(),
                    width: c.intrinsics.width,
                    height: c.intrinsics.height,
                })
                .collect(),
            rig_fingerprint,
            spec_fingerprint,
        })
    }
}
