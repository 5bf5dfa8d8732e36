use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use omniview_core::{ply, CameraRig, ImageFrame, PointCloud};
use omniview_oracle::{render_rig, Scene};

/// Subdirectory of a recorded source holding Lidar scans.
pub const LIDAR_DIR: &str = "lidar";

/// One synchronized set of camera images (rig order) plus an optional scan.
#[derive(Debug)]
pub struct FrameSet {
    pub timestamp_ns: u64,
    pub frames: Vec<ImageFrame>,
    pub cloud: Option<PointCloud>,
}

#[derive(Debug, Clone)]
pub enum SourceConfig {
    /// `DIR/<camera>/<timestamp_ns>.png`, optionally `DIR/lidar/<timestamp_ns>.ply`.
    Recorded { dir: PathBuf, looping: bool },
    /// The scene is rendered once through the rig and replayed with
    /// advancing timestamps.
    Synthetic { scene: Scene, period_ns: u64 },
}

pub(crate) enum Source {
    Recorded(Recorded),
    Synthetic(Synthetic),
}

impl Source {
    pub(crate) fn open(config: SourceConfig, rig: &CameraRig) -> omniview_core::Result<Source> {
        Ok(match config {
            SourceConfig::Recorded { dir, looping } => Source::Recorded(Recorded {
                dir,
                looping,
                cameras: rig.cameras.iter().map(|c| c.name.clone()).collect(),
                timestamps: Vec::new(),
                cursor: 0,
            }),
            SourceConfig::Synthetic { scene, period_ns } => {
                scene.validate()?;
                let frames = render_rig(&scene, rig, 0)?;
                Source::Synthetic(Synthetic {
                    frames: Arc::new(frames),
                    period_ns,
                    next: 0,
                })
            }
        })
    }

    /// Loads the next frame set, or `None` when nothing new is available.
    pub(crate) fn advance(&mut self) -> Option<FrameSet> {
        match self {
            Source::Recorded(r) => r.advance(),
            Source::Synthetic(s) => Some(s.advance()),
        }
    }

    pub(crate) fn kind(&self) -> &'static str {
        match self {
            Source::Recorded(_) => "recorded",
            Source::Synthetic(_) => "synthetic",
        }
    }
}

pub(crate) struct Synthetic {
    frames: Arc<Vec<ImageFrame>>,
    period_ns: u64,
    next: u64,
}

impl Synthetic {
    fn advance(&mut self) -> FrameSet {
        let ts = self.next * self.period_ns;
        self.next += 1;
        FrameSet {
            timestamp_ns: ts,
            frames: self.frames.iter().map(|f| f.clone().with_timestamp(ts)).collect(),
            cloud: None,
        }
    }
}

pub(crate) struct Recorded {
    dir: PathBuf,
    looping: bool,
    cameras: Vec<String>,
    /// Timestamps complete for every camera, ascending.
    timestamps: Vec<u64>,
    cursor: usize,
}

fn stamps(dir: &Path, ext: &str) -> BTreeSet<u64> {
    let Ok(entries) = std::fs::read_dir(dir) else {
        return BTreeSet::new();
    };
    entries
        .filter_map(|e| {
            let path = e.ok()?.path();
            if path.extension()?.to_str()? != ext {
                return None;
            }
            path.file_stem()?.to_str()?.parse().ok()
        })
        .collect()
}

impl Recorded {
    fn rescan(&mut self) {
        let mut common: Option<BTreeSet<u64>> = None;
        for cam in &self.cameras {
            let s = stamps(&self.dir.join(cam), "png");
            common = Some(match common {
                None => s,
                Some(c) => c.intersection(&s).copied().collect(),
            });
        }
        let last = self.cursor.checked_sub(1).and_then(|i| self.timestamps.get(i)).copied();
        self.timestamps = common.unwrap_or_default().into_iter().collect();
        // Keep the cursor just past the last delivered stamp.
        self.cursor = match last {
            Some(t) => self.timestamps.partition_point(|&s| s <= t),
            None => 0,
        };
    }

    fn advance(&mut self) -> Option<FrameSet> {
        if self.cursor >= self.timestamps.len() {
            self.rescan();
        }
        if self.cursor >= self.timestamps.len() && self.looping && !self.timestamps.is_empty() {
            self.cursor = 0;
        }
        while let Some(&ts) = self.timestamps.get(self.cursor) {
            self.cursor += 1;
            match self.load(ts) {
                Ok(set) => return Some(set),
                Err(e) => log::warn!("skipping frame set {ts}: {e}"),
            }
        }
        None
    }

    fn load(&self, ts: u64) -> omniview_core::Result<FrameSet> {
        let frames = self
            .cameras
            .iter()
            .map(|cam| {
                let path = self.dir.join(cam).join(format!("{ts}.png"));
                Ok(ImageFrame::load_png(path)?.with_camera(cam.as_str()).with_timestamp(ts))
            })
            .collect::<omniview_core::Result<Vec<_>>>()?;
        let scan = self.dir.join(LIDAR_DIR).join(format!("{ts}.ply"));
        let cloud = if scan.is_file() {
            let mut c = ply::load_cloud(&scan)?;
            c.timestamp_ns = ts;
            Some(c)
        } else {
            None
        };
        Ok(FrameSet {
            timestamp_ns: ts,
            frames,
            cloud,
        })
    }
}
