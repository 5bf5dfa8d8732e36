//! Timing of map builds and map operations over the standard resolution grid.

use std::time::Instant;

use omniview_core::{
    build_projection_map, remap, CameraRig, ImageFrame, MercatorParams, PerspectiveParams, Pose, ProjectionSpec,
    SphericalParams, Surface, DEFAULT_FILL,
};
use serde::{Deserialize, Serialize};

pub const REPORT_SCHEMA: &str = "omniview-bench/1";
pub const MIN_ITERATIONS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stats {
    pub mean: f64,
    pub p50: f64,
    pub p95: f64,
    pub min: f64,
    pub max: f64,
}

impl Stats {
    /// Nearest-rank percentiles over `samples` (milliseconds).
    pub fn from_samples(samples: &[f64]) -> Stats {
        assert!(!samples.is_empty());
        let mut s = samples.to_vec();
        s.sort_by(f64::total_cmp);
        let rank = |p: f64| s[((p * s.len() as f64).ceil() as usize).clamp(1, s.len()) - 1];
        Stats {
            mean: s.iter().sum::<f64>() / s.len() as f64,
            p50: rank(0.5),
            p95: rank(0.95),
            min: s[0],
            max: s[s.len() - 1],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Row {
    pub projection: String,
    pub width: u32,
    pub height: u32,
    pub build_ms: Stats,
    pub remap_ms: Stats,
    pub none_pixels: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Machine {
    pub os: String,
    pub arch: String,
    pub logical_cpus: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub schema: String,
    pub iterations: usize,
    pub cameras: usize,
    pub machine: Machine,
    pub rows: Vec<Row>,
}

impl Report {
    /// Ratios of mean build time between successive perspective rows
    /// (each a 4x pixel step).
    pub fn perspective_build_ratios(&self) -> Vec<f64> {
        let p: Vec<&Row> = self.rows.iter().filter(|r| r.projection == "perspective").collect();
        p.windows(2).map(|w| w[1].build_ms.mean / w[0].build_ms.mean).collect()
    }
}

/// The resolution grid: perspective at three sizes, Mercator and spherical.
/// Surfaces of the same kind as `base` take its parameters; all take its
/// pose.
pub fn standard_grid(base: &ProjectionSpec) -> Vec<ProjectionSpec> {
    let pose: Pose = base.surface_pose.clone();
    let perspective = match base.surface {
        Surface::Perspective(p) => p,
        _ => PerspectiveParams {
            focal_length: 1.0,
            hfov: 130f64.to_radians(),
        },
    };
    let mercator = match base.surface {
        Surface::Mercator(m) => m,
        _ => MercatorParams {
            vertical_half_fov: 45f64.to_radians(),
            cylinder_radius: 1.0,
        },
    };
    let spherical = match base.surface {
        Surface::Spherical(s) => s,
        _ => SphericalParams {
            fov: 210f64.to_radians(),
            sphere_radius: 1.0,
        },
    };
    vec![
        ProjectionSpec::new(Surface::Perspective(perspective), 512, 256, pose.clone()),
        ProjectionSpec::new(Surface::Perspective(perspective), 1024, 512, pose.clone()),
        ProjectionSpec::new(Surface::Perspective(perspective), 2048, 1024, pose.clone()),
        ProjectionSpec::new(Surface::Mercator(mercator), 1024, 512, pose.clone()),
        ProjectionSpec::new(Surface::Spherical(spherical), 512, 512, pose),
    ]
}

/// Deterministic stand-in images (remap cost does not depend on content).
pub fn placeholder_frames(rig: &CameraRig) -> Vec<ImageFrame> {
    rig.cameras
        .iter()
        .map(|c| {
            let (w, h) = (c.intrinsics.width, c.intrinsics.height);
            let mut data = Vec::with_capacity(w as usize * h as usize * 3);
            for y in 0..h {
                for x in 0..w {
                    data.extend_from_slice(&[(x ^ y) as u8, (x >> 2) as u8, (y >> 2) as u8]);
                }
            }
            ImageFrame::new(w, h, 3, data).expect("sized buffer").with_camera(&c.name)
        })
        .collect()
}

pub fn run(
    rig: &CameraRig,
    specs: &[ProjectionSpec],
    frames: &[ImageFrame],
    iterations: usize,
) -> omniview_core::Result<Report> {
    let mut rows = Vec::with_capacity(specs.len());
    for spec in specs {
        let mut build = Vec::with_capacity(iterations);
        let mut map = None;
        for _ in 0..iterations {
            let t = Instant::now();
            let m = build_projection_map(rig, spec)?;
            build.push(t.elapsed().as_secs_f64() * 1e3);
            map = Some(m);
        }
        let map = map.expect("iterations >= 1");
        // One untimed pass to fault in the output buffer path.
        remap(&map, frames, DEFAULT_FILL)?;
        let mut apply = Vec::with_capacity(iterations);
        for _ in 0..iterations {
            let t = Instant::now();
            let out = remap(&map, frames, DEFAULT_FILL)?;
            apply.push(t.elapsed().as_secs_f64() * 1e3);
            std::hint::black_box(out);
        }
        log::info!(
            "{} {}x{}: build {:.1} ms, remap {:.1} ms",
            spec.surface.kind(),
            spec.width,
            spec.height,
            Stats::from_samples(&build).mean,
            Stats::from_samples(&apply).mean
        );
        rows.push(Row {
            projection: spec.surface.kind().to_owned(),
            width: spec.width,
            height: spec.height,
            build_ms: Stats::from_samples(&build),
            remap_ms: Stats::from_samples(&apply),
            none_pixels: map.none_count(),
        });
    }
    Ok(Report {
        schema: REPORT_SCHEMA.to_owned(),
        iterations,
        cameras: rig.cameras.len(),
        machine: Machine {
            os: std::env::consts::OS.to_owned(),
            arch: std::env::consts::ARCH.to_owned(),
            logical_cpus: std::thread::available_parallelism().map_or(1, |n| n.get()),
        },
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn percentiles_nearest_rank() {
        let s: Vec<f64> = (1..=20).map(f64::from).collect();
        let st = Stats::from_samples(&s);
        assert_eq!(st.p50, 10.0);
        assert_eq!(st.p95, 19.0);
        assert_eq!(st.mean, 10.5);
        assert_eq!((st.min, st.max), (1.0, 20.0));
    }
}
