use std::convert::Infallible;
use std::sync::Arc;

use axum::body::{Body, Bytes};
use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::{Path, State};
use axum::http::{header, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use futures::stream::{self, StreamExt};
use omniview_core::surface::ProjectionSpecJson;
use omniview_core::{Pose, PoseJson, ProjectionSpec, Surface, UnitQuaternion, Vector3};
use serde::Deserialize;
use serde_json::{json, Value};
use tokio::sync::broadcast::error::RecvError;

use crate::view::{EncodedFrame, UpdateOutcome, View};
use crate::AppState;

/// Accepted zoom range, exclusive, in degrees.
pub const ZOOM_RANGE_DEG: (f64, f64) = (10.0, 170.0);

const BOUNDARY: &str = "omniview-frame";

type Shared = Arc<AppState>;

pub(crate) fn router(state: Shared) -> Router {
    Router::new()
        .route("/healthz", get(healthz))
        .route("/views", get(list_views))
        .route("/views/{id}", get(get_view))
        .route("/views/{id}/pose", post(post_pose))
        .route("/views/{id}/zoom", post(post_zoom))
        .route("/views/{id}/frame", get(get_frame))
        .route("/views/{id}/stream", get(get_stream))
        .route("/views/{id}/ws", get(get_ws))
        .route("/cloud/latest", get(get_cloud))
        .route("/source", get(get_source))
        .route("/source/advance", post(post_advance))
        .with_state(state)
}

fn error(status: StatusCode, message: impl Into<String>) -> Response {
    (status, Json(json!({ "error": message.into() }))).into_response()
}

fn unavailable() -> Response {
    error(StatusCode::SERVICE_UNAVAILABLE, "frame source unavailable")
}

fn view(state: &AppState, id: &str) -> Result<Arc<View>, Response> {
    state
        .views
        .get(id)
        .cloned()
        .ok_or_else(|| error(StatusCode::NOT_FOUND, format!("unknown view `{id}`")))
}

fn describe(id: &str, generation: u64, spec: &ProjectionSpec) -> Value {
    json!({
        "id": id,
        "generation": generation,
        "spec": ProjectionSpecJson::from(spec),
    })
}

async fn healthz(State(state): State<Shared>) -> Json<Value> {
    Json(json!({
        "status": "ok",
        "views": state.views.len(),
        "source": state.source_kind,
        "timestamp_ns": state.current().map(|s| s.timestamp_ns),
    }))
}

async fn list_views(State(state): State<Shared>) -> Json<Value> {
    let list: Vec<Value> = state
        .views
        .values()
        .map(|v| {
            let inst = v.installed();
            describe(&v.id, inst.generation, &inst.spec)
        })
        .collect();
    Json(Value::Array(list))
}

async fn get_view(State(state): State<Shared>, Path(id): Path<String>) -> Response {
    match view(&state, &id) {
        Ok(v) => {
            let inst = v.installed();
            Json(describe(&v.id, inst.generation, &inst.spec)).into_response()
        }
        Err(r) => r,
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct PoseUpdate {
    #[serde(default)]
    yaw_deg: f64,
    #[serde(default)]
    pitch_deg: f64,
    #[serde(default)]
    roll_deg: f64,
    absolute: Option<PoseJson>,
}

/// Rotation for a pan/tilt/roll delta in the view frame: yaw about +y
/// (positive turns right), then pitch about +x (positive tilts up), then
/// roll about the viewing axis.
pub fn delta_rotation(yaw: f64, pitch: f64, roll: f64) -> UnitQuaternion<f64> {
    UnitQuaternion::from_axis_angle(&Vector3::y_axis(), yaw)
        * UnitQuaternion::from_axis_angle(&Vector3::x_axis(), pitch)
        * UnitQuaternion::from_axis_angle(&Vector3::z_axis(), roll)
}

/// Derives, validates and queues a new spec, then answers with the spec in
/// effect once it is installed.
async fn update(
    v: &View,
    derive: impl FnOnce(&ProjectionSpec) -> Result<ProjectionSpec, Response>,
) -> Response {
    let generation = v.update(|current| {
        let spec = derive(current)?;
        spec.validate("spec")
            .map_err(|e| error(StatusCode::UNPROCESSABLE_ENTITY, e.to_string()))?;
        Ok(spec)
    });
    let generation = match generation {
        Ok(g) => g,
        Err(r) => return r,
    };
    match v.wait(generation).await {
        UpdateOutcome::Applied(inst) => Json(describe(&v.id, inst.generation, &inst.spec)).into_response(),
        UpdateOutcome::Failed(msg) => error(StatusCode::INTERNAL_SERVER_ERROR, msg),
    }
}

fn unprocessable(message: impl Into<String>) -> Response {
    error(StatusCode::UNPROCESSABLE_ENTITY, message)
}

async fn post_pose(State(state): State<Shared>, Path(id): Path<String>, Json(body): Json<PoseUpdate>) -> Response {
    let v = match view(&state, &id) {
        Ok(v) => v,
        Err(r) => return r,
    };
    let deltas = [body.yaw_deg, body.pitch_deg, body.roll_deg];
    let absolute = match body.absolute {
        None => None,
        Some(_) if deltas.iter().any(|&d| d != 0.0) => {
            return unprocessable("give either deltas or an absolute pose");
        }
        Some(p) => match p.to_pose("absolute") {
            Ok(pose) if pose.parent_frame() == state.rig.reference_frame => Some(pose),
            Ok(_) => return unprocessable(format!("absolute.parent must be `{}`", state.rig.reference_frame)),
            Err(e) => return unprocessable(e.to_string()),
        },
    };
    if deltas.iter().any(|d| !d.is_finite()) {
        return unprocessable("deltas must be finite");
    }
    update(&v, move |current| {
        let mut spec = current.clone();
        spec.surface_pose = match absolute {
            Some(pose) => pose,
            None => {
                let frame = spec.surface_pose.child_frame().to_owned();
                let [yaw, pitch, roll] = deltas.map(f64::to_radians);
                let delta = Pose::new(frame.clone(), frame, delta_rotation(yaw, pitch, roll), Vector3::zeros());
                spec.surface_pose.compose(&delta).expect("same frame")
            }
        };
        Ok(spec)
    })
    .await
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ZoomUpdate {
    hfov_deg: f64,
}

async fn post_zoom(State(state): State<Shared>, Path(id): Path<String>, Json(body): Json<ZoomUpdate>) -> Response {
    let v = match view(&state, &id) {
        Ok(v) => v,
        Err(r) => return r,
    };
    let (lo, hi) = ZOOM_RANGE_DEG;
    if !(body.hfov_deg > lo && body.hfov_deg < hi) {
        return unprocessable(format!("hfov_deg must lie strictly between {lo} and {hi}"));
    }
    update(&v, |current| {
        let mut spec = current.clone();
        match &mut spec.surface {
            Surface::Perspective(p) => p.hfov = body.hfov_deg.to_radians(),
            other => return Err(unprocessable(format!("zoom applies to perspective views, not {}", other.kind()))),
        }
        Ok(spec)
    })
    .await
}

fn frame_headers(f: &EncodedFrame) -> [(header::HeaderName, HeaderValue); 2] {
    [
        (header::CONTENT_TYPE, HeaderValue::from_static("image/jpeg")),
        (header::HeaderName::from_static("x-timestamp-ns"), HeaderValue::from(f.timestamp_ns)),
    ]
}

async fn get_frame(State(state): State<Shared>, Path(id): Path<String>) -> Response {
    let v = match view(&state, &id) {
        Ok(v) => v,
        Err(r) => return r,
    };
    match v.latest() {
        Some(f) => (frame_headers(&f), f.jpeg.clone()).into_response(),
        None => unavailable(),
    }
}

fn mjpeg_part(f: &EncodedFrame) -> Bytes {
    let head = format!(
        "--{BOUNDARY}\r\nContent-Type: image/jpeg\r\nContent-Length: {}\r\nX-Timestamp-Ns: {}\r\n\r\n",
        f.jpeg.len(),
        f.timestamp_ns
    );
    let mut part = Vec::with_capacity(head.len() + f.jpeg.len() + 2);
    part.extend_from_slice(head.as_bytes());
    part.extend_from_slice(&f.jpeg);
    part.extend_from_slice(b"\r\n");
    part.into()
}

async fn get_stream(State(state): State<Shared>, Path(id): Path<String>) -> Response {
    let v = match view(&state, &id) {
        Ok(v) => v,
        Err(r) => return r,
    };
    let (first, rx) = v.subscribe().await;
    let Some(first) = first else {
        return unavailable();
    };
    let head = stream::once(async move { Ok::<_, Infallible>(mjpeg_part(&first)) });
    let rest = stream::unfold(rx, |mut rx| async move {
        loop {
            match rx.recv().await {
                Ok(f) => return Some((Ok::<_, Infallible>(mjpeg_part(&f)), rx)),
                Err(RecvError::Lagged(n)) => log::debug!("stream subscriber dropped {n} frames"),
                Err(RecvError::Closed) => return None,
            }
        }
    });
    let body = Body::from_stream(head.chain(rest));
    (
        [
            (
                header::CONTENT_TYPE,
                HeaderValue::from_str(&format!("multipart/x-mixed-replace; boundary={BOUNDARY}")).unwrap(),
            ),
            (header::CACHE_CONTROL, HeaderValue::from_static("no-cache")),
        ],
        body,
    )
        .into_response()
}

async fn get_ws(State(state): State<Shared>, Path(id): Path<String>, ws: WebSocketUpgrade) -> Response {
    let v = match view(&state, &id) {
        Ok(v) => v,
        Err(r) => return r,
    };
    if v.latest().is_none() {
        return unavailable();
    }
    ws.on_upgrade(move |socket| ws_session(socket, v))
}

async fn ws_session(mut socket: WebSocket, v: Arc<View>) {
    let (first, mut rx) = v.subscribe().await;
    if let Some(f) = first {
        if socket.send(Message::Binary(f.ws_payload())).await.is_err() {
            return;
        }
    }
    loop {
        tokio::select! {
            frame = rx.recv() => match frame {
                Ok(f) => {
                    if socket.send(Message::Binary(f.ws_payload())).await.is_err() {
                        return;
                    }
                }
                Err(RecvError::Lagged(_)) => continue,
                Err(RecvError::Closed) => return,
            },
            msg = socket.recv() => match msg {
                Some(Ok(Message::Close(_))) | None | Some(Err(_)) => return,
                Some(Ok(_)) => {}
            },
        }
    }
}

async fn get_cloud(State(state): State<Shared>) -> Response {
    if state.lidar.is_none() {
        return error(StatusCode::NOT_FOUND, "rig has no Lidar extrinsic");
    }
    let cloud = state.cloud.lock().unwrap().clone();
    match cloud {
        Some(bytes) => (
            [(header::CONTENT_TYPE, HeaderValue::from_static("application/x-ply"))],
            Bytes::from((*bytes).clone()),
        )
            .into_response(),
        None => error(StatusCode::SERVICE_UNAVAILABLE, "no colorized scan yet"),
    }
}

async fn get_source(State(state): State<Shared>) -> Json<Value> {
    Json(json!({
        "kind": state.source_kind,
        "lockstep": state.lockstep,
        "timestamp_ns": state.current().map(|s| s.timestamp_ns),
    }))
}

async fn post_advance(State(state): State<Shared>) -> Response {
    if !state.lockstep {
        return error(StatusCode::CONFLICT, "source advances on its own clock (fps > 0)");
    }
    match state.advance().await {
        Some(ts) => Json(json!({ "timestamp_ns": ts })).into_response(),
        None => error(StatusCode::SERVICE_UNAVAILABLE, "no new frame set"),
    }
}
