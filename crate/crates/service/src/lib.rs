//! Live virtual views over HTTP.
//!
//! Each view owns a projection spec that clients can steer (pan, tilt, roll
//! and zoom). Every new source frame set is remapped once per view and pushed
//! to MJPEG and WebSocket subscribers. Rebuilds run off the delivery path:
//! the old map keeps serving until the new one is swapped in.
//!
//! With `fps == 0` the source only advances on `POST /source/advance`, which
//! makes the delivered frame sequence a pure function of the request
//! sequence.

pub mod client;
mod routes;
mod source;
mod view;

use std::collections::BTreeMap;
use std::net::SocketAddr;
use std::sync::{Arc, Mutex, RwLock};
use std::time::Duration;

use omniview_core::{
    colorize, ply, CameraRig, ColorizeOptions, ExclusionVolume, Pose, ProjectionSpec,
};
use tokio::net::TcpListener;
use tokio::task::JoinHandle;

pub use source::{FrameSet, SourceConfig, LIDAR_DIR};
pub use routes::{delta_rotation, ZOOM_RANGE_DEG};
pub use view::EncodedFrame;

use source::Source;
use view::View;

pub const DEFAULT_JPEG_QUALITY: u8 = 85;

#[derive(Debug, thiserror::Error)]
pub enum ServiceError {
    #[error("at least one view is required")]
    NoViews,
    #[error("duplicate view id `{0}`")]
    DuplicateView(String),
    #[error("view `{id}`: {source}")]
    View {
        id: String,
        #[source]
        source: omniview_core::Error,
    },
    #[error(transparent)]
    Core(#[from] omniview_core::Error),
    #[error("cannot bind {addr}: {source}")]
    Bind {
        addr: SocketAddr,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    pub rig: CameraRig,
    /// `(view id, initial spec)`
    pub views: Vec<(String, ProjectionSpec)>,
    pub source: SourceConfig,
    /// Source frame sets per second; 0 advances only on request.
    pub fps: f64,
    pub exclusions: Vec<ExclusionVolume>,
    pub colorize: ColorizeOptions,
    pub jpeg_quality: u8,
}

impl ServiceConfig {
    pub fn new(rig: CameraRig, views: Vec<(String, ProjectionSpec)>, source: SourceConfig) -> Self {
        ServiceConfig {
            rig,
            views,
            source,
            fps: 10.0,
            exclusions: Vec::new(),
            colorize: ColorizeOptions::default(),
            jpeg_quality: DEFAULT_JPEG_QUALITY,
        }
    }
}

pub(crate) struct AppState {
    pub rig: Arc<CameraRig>,
    pub views: BTreeMap<String, Arc<View>>,
    pub source: tokio::sync::Mutex<Source>,
    pub source_kind: &'static str,
    pub current: RwLock<Option<Arc<FrameSet>>>,
    pub lockstep: bool,
    pub lidar: Option<Pose>,
    pub exclusions: Vec<ExclusionVolume>,
    pub colorize: ColorizeOptions,
    pub cloud: Mutex<Option<Arc<Vec<u8>>>>,
}

impl AppState {
    pub fn current(&self) -> Option<Arc<FrameSet>> {
        self.current.read().unwrap().clone()
    }

    /// Pulls the next frame set and renders it into every view. Returns its
    /// timestamp, or `None` if the source had nothing new.
    pub async fn advance(&self) -> Option<u64> {
        let mut source = self.source.lock().await;
        let next = {
            // Decoding PNGs is blocking work.
            tokio::task::block_in_place(|| source.advance())
        }?;
        let set = Arc::new(next);
        *self.current.write().unwrap() = Some(set.clone());
        for view in self.views.values() {
            view.render(&set).await;
        }
        if let (Some(cloud), Some(lidar)) = (&set.cloud, &self.lidar) {
            let colored = tokio::task::block_in_place(|| {
                colorize(&self.rig, &set.frames, lidar, cloud, &self.exclusions, &self.colorize)
            });
            match colored {
                Ok(c) => {
                    let mut bytes = Vec::new();
                    ply::write_colored_cloud(&mut bytes, &c).expect("writing to memory");
                    *self.cloud.lock().unwrap() = Some(Arc::new(bytes));
                }
                Err(e) => log::warn!("colorize failed at {}: {e}", set.timestamp_ns),
            }
        }
        Some(set.timestamp_ns)
    }
}

/// A running service; dropping it does not stop the server.
pub struct Service {
    pub addr: SocketAddr,
    server: JoinHandle<std::io::Result<()>>,
    tasks: Vec<JoinHandle<()>>,
}

impl Service {
    /// Stops serving and all background tasks.
    pub fn shutdown(self) {
        self.server.abort();
        for t in self.tasks {
            t.abort();
        }
    }

    /// Runs until the server fails.
    pub async fn wait(self) -> std::io::Result<()> {
        let r = match self.server.await {
            Ok(r) => r,
            Err(e) if e.is_cancelled() => Ok(()),
            Err(e) => Err(std::io::Error::other(e)),
        };
        for t in self.tasks {
            t.abort();
        }
        r
    }
}

/// Builds all views, opens the source, binds `addr` and starts serving.
/// Must be called on a multi-threaded tokio runtime.
pub async fn start(config: ServiceConfig, addr: SocketAddr) -> Result<Service, ServiceError> {
    if config.views.is_empty() {
        return Err(ServiceError::NoViews);
    }
    config.rig.validate()?;
    let rig = Arc::new(config.rig);
    let mut views = BTreeMap::new();
    for (id, spec) in config.views {
        if views.contains_key(&id) {
            return Err(ServiceError::DuplicateView(id));
        }
        let r = rig.clone();
        let q = config.jpeg_quality;
        let vid = id.clone();
        let view = tokio::task::spawn_blocking(move || View::new(vid, r, spec, q))
            .await
            .expect("map build panicked")
            .map_err(|source| ServiceError::View { id: id.clone(), source })?;
        views.insert(id, Arc::new(view));
    }
    let source = {
        let rig = rig.clone();
        let cfg = config.source;
        tokio::task::spawn_blocking(move || Source::open(cfg, &rig)).await.expect("source open panicked")?
    };
    let lidar = rig.lidar_extrinsic.clone();
    let lockstep = config.fps.is_nan() || config.fps <= 0.0;
    let state = Arc::new(AppState {
        rig,
        views,
        source_kind: source.kind(),
        source: tokio::sync::Mutex::new(source),
        current: RwLock::new(None),
        lockstep,
        lidar,
        exclusions: config.exclusions,
        colorize: config.colorize,
        cloud: Mutex::new(None),
    });
    if state.advance().await.is_none() {
        log::warn!("frame source has no frames yet; stream endpoints answer 503");
    }

    let listener = TcpListener::bind(addr).await.map_err(|source| ServiceError::Bind { addr, source })?;
    let addr = listener.local_addr()?;

    let mut tasks = Vec::new();
    for view in state.views.values() {
        let st = state.clone();
        tasks.push(tokio::spawn(view.clone().run_worker(move || st.current())));
    }
    if !lockstep {
        let st = state.clone();
        let period = Duration::from_secs_f64(1.0 / config.fps);
        tasks.push(tokio::spawn(async move {
            let mut tick = tokio::time::interval(period);
            tick.set_missed_tick_behavior(tokio::time::MissedTickBehavior::Skip);
            tick.tick().await;
            loop {
                tick.tick().await;
                st.advance().await;
            }
        }));
    }
    let app = routes::router(state);
    let server = tokio::spawn(async move { axum::serve(listener, app).await });
    log::info!("serving on http://{addr}");
    Ok(Service { addr, server, tasks })
}
