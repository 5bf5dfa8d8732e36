use std::io::Cursor;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex, RwLock};

use axum::body::Bytes;
use image::codecs::jpeg::JpegEncoder;
use omniview_core::{build_projection_map, remap, CameraRig, ImageFrame, ProjectionMap, ProjectionSpec};
use tokio::sync::{broadcast, watch, Notify};

use crate::source::FrameSet;

/// Frames buffered per stream subscriber before it starts dropping.
const STREAM_BACKLOG: usize = 64;

/// A map together with the spec it was built from.
pub(crate) struct Installed {
    pub generation: u64,
    pub spec: ProjectionSpec,
    pub map: Arc<ProjectionMap>,
}

#[derive(Debug)]
pub struct EncodedFrame {
    pub timestamp_ns: u64,
    pub width: u32,
    pub height: u32,
    pub jpeg: Bytes,
}

impl EncodedFrame {
    /// WebSocket payload: little-endian `u64` timestamp, `u32` width,
    /// `u32` height, then the JPEG bytes.
    pub fn ws_payload(&self) -> Bytes {
        let mut out = Vec::with_capacity(16 + self.jpeg.len());
        out.extend_from_slice(&self.timestamp_ns.to_le_bytes());
        out.extend_from_slice(&self.width.to_le_bytes());
        out.extend_from_slice(&self.height.to_le_bytes());
        out.extend_from_slice(&self.jpeg);
        out.into()
    }
}

pub(crate) fn encode_jpeg(frame: &ImageFrame, quality: u8) -> Bytes {
    let mut buf = Cursor::new(Vec::new());
    JpegEncoder::new_with_quality(&mut buf, quality)
        .encode_image(&frame.to_dynamic())
        .expect("encoding into memory cannot fail");
    buf.into_inner().into()
}

pub(crate) struct View {
    pub id: String,
    rig: Arc<CameraRig>,
    installed: RwLock<Arc<Installed>>,
    /// Latest requested spec; deltas compose onto this, not onto the
    /// installed one, so quick successive updates are not lost.
    requested: Mutex<ProjectionSpec>,
    pending: Mutex<Option<(u64, ProjectionSpec)>>,
    next_generation: AtomicU64,
    wake: Notify,
    /// Highest generation whose request has been fully handled.
    handled: watch::Sender<u64>,
    failed: Mutex<Option<(u64, String)>>,
    stream: broadcast::Sender<Arc<EncodedFrame>>,
    latest: Mutex<Option<Arc<EncodedFrame>>>,
    /// Serializes render+publish so subscribers see frames in a single order.
    publish: tokio::sync::Mutex<()>,
    jpeg_quality: u8,
}

pub(crate) enum UpdateOutcome {
    Applied(Arc<Installed>),
    Failed(String),
}

impl View {
    pub fn new(id: String, rig: Arc<CameraRig>, spec: ProjectionSpec, jpeg_quality: u8) -> omniview_core::Result<View> {
        let map = build_projection_map(&rig, &spec)?;
        Ok(View {
            id,
            rig,
            installed: RwLock::new(Arc::new(Installed {
                generation: 0,
                spec: spec.clone(),
                map: Arc::new(map),
            })),
            requested: Mutex::new(spec),
            pending: Mutex::new(None),
            next_generation: AtomicU64::new(1),
            wake: Notify::new(),
            handled: watch::channel(0).0,
            failed: Mutex::new(None),
            stream: broadcast::channel(STREAM_BACKLOG).0,
            latest: Mutex::new(None),
            publish: tokio::sync::Mutex::new(()),
            jpeg_quality,
        })
    }

    pub fn installed(&self) -> Arc<Installed> {
        self.installed.read().unwrap().clone()
    }

    pub fn latest(&self) -> Option<Arc<EncodedFrame>> {
        self.latest.lock().unwrap().clone()
    }

    /// Derives a new spec from the latest requested one and queues it (last
    /// write wins). Read, derive and enqueue happen under one lock, so
    /// concurrent deltas all compose.
    pub fn update<E>(&self, derive: impl FnOnce(&ProjectionSpec) -> Result<ProjectionSpec, E>) -> Result<u64, E> {
        let mut requested = self.requested.lock().unwrap();
        let spec = derive(&requested)?;
        *requested = spec.clone();
        let generation = self.next_generation.fetch_add(1, Ordering::SeqCst);
        *self.pending.lock().unwrap() = Some((generation, spec));
        drop(requested);
        self.wake.notify_one();
        Ok(generation)
    }

    /// Waits until request `generation`, or a newer one, is installed.
    pub async fn wait(&self, generation: u64) -> UpdateOutcome {
        let mut rx = self.handled.subscribe();
        if rx.wait_for(|&g| g >= generation).await.is_err() {
            return UpdateOutcome::Failed("view worker stopped".into());
        }
        if let Some((g, msg)) = self.failed.lock().unwrap().clone() {
            if g == generation {
                return UpdateOutcome::Failed(msg);
            }
        }
        UpdateOutcome::Applied(self.installed())
    }

    /// Subscribes to rendered frames; the returned frame is the one
    /// published just before subscription, if any. Nothing is lost or
    /// duplicated between the two.
    pub async fn subscribe(&self) -> (Option<Arc<EncodedFrame>>, broadcast::Receiver<Arc<EncodedFrame>>) {
        let _guard = self.publish.lock().await;
        (self.latest(), self.stream.subscribe())
    }

    /// Remaps `set` through the installed map and pushes the result.
    pub async fn render(&self, set: &Arc<FrameSet>) {
        let _guard = self.publish.lock().await;
        let installed = self.installed();
        let set = set.clone();
        let quality = self.jpeg_quality;
        let job = tokio::task::spawn_blocking(move || -> omniview_core::Result<EncodedFrame> {
            let img = remap(&installed.map, &set.frames, omniview_core::DEFAULT_FILL)?;
            Ok(EncodedFrame {
                timestamp_ns: set.timestamp_ns,
                width: img.width,
                height: img.height,
                jpeg: encode_jpeg(&img, quality),
            })
        });
        match job.await {
            Ok(Ok(frame)) => {
                let frame = Arc::new(frame);
                *self.latest.lock().unwrap() = Some(frame.clone());
                // No receivers is fine.
                let _ = self.stream.send(frame);
            }
            Ok(Err(e)) => log::warn!("view {}: remap failed: {e}", self.id),
            Err(e) => log::error!("view {}: render task panicked: {e}", self.id),
        }
    }

    /// Builds pending specs one at a time and installs them. `current`
    /// yields the frame set to re-render after an install.
    pub async fn run_worker(self: Arc<Self>, current: impl Fn() -> Option<Arc<FrameSet>>) {
        loop {
            self.wake.notified().await;
            let Some((generation, spec)) = self.pending.lock().unwrap().take() else {
                continue;
            };
            let rig = self.rig.clone();
            let built = tokio::task::spawn_blocking(move || build_projection_map(&rig, &spec).map(|m| (spec, m))).await;
            match built {
                Ok(Ok((spec, map))) => {
                    log::debug!("view {}: installed generation {generation}", self.id);
                    *self.installed.write().unwrap() = Arc::new(Installed {
                        generation,
                        spec,
                        map: Arc::new(map),
                    });
                    if let Some(set) = current() {
                        self.render(&set).await;
                    }
                }
                Ok(Err(e)) => {
                    log::warn!("view {}: rebuild failed: {e}", self.id);
                    *self.failed.lock().unwrap() = Some((generation, e.to_string()));
                }
                Err(e) => {
                    *self.failed.lock().unwrap() = Some((generation, format!("rebuild panicked: {e}")));
                }
            }
            self.handled.send_replace(generation);
        }
    }
}
