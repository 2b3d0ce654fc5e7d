//! HTTP API over an append-only store of rendered scene snapshots.

use std::net::SocketAddr;
use std::sync::{Arc, RwLock};

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::{header, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use regiongrasp::eval::{eligible_targets, judge_grasp, EvalConfig, SceneSnapshot};
use regiongrasp::geom::{CameraModel, GraspPose};
use regiongrasp::guidance::Mask;
use regiongrasp::scene::{default_library, generate_clutter, Scene};
use regiongrasp::Error;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::formats;
use crate::pipeline::{detect, view, Guide, Timings};

/// Environment variable that overrides the listening port.
pub const PORT_ENV: &str = "REGIONGRASP_PORT";

/// Scene snapshots by id. Ids are indices, so they only ever grow.
#[derive(Default)]
pub struct SceneStore {
    scenes: RwLock<Vec<Arc<SceneSnapshot>>>,
}

impl SceneStore {
    pub fn insert(&self, scene: Scene) -> usize {
        let snap = Arc::new(SceneSnapshot::new(scene));
        let mut scenes = self.scenes.write().expect("scene store poisoned");
        scenes.push(snap);
        scenes.len() - 1
    }

    pub fn get(&self, id: usize) -> Option<Arc<SceneSnapshot>> {
        self.scenes.read().expect("scene store poisoned").get(id).cloned()
    }

    pub fn len(&self) -> usize {
        self.scenes.read().expect("scene store poisoned").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

pub struct ApiError {
    status: StatusCode,
    kind: String,
    message: String,
}

impl ApiError {
    fn new(status: StatusCode, kind: &str, message: impl Into<String>) -> Self {
        Self { status, kind: kind.into(), message: message.into() }
    }

    fn unknown_scene(id: usize) -> Self {
        Self::new(StatusCode::NOT_FOUND, "unknown-scene", format!("no scene with id {id}"))
    }
}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::NoTarget(_) | Error::Patch(_) | Error::Degenerate(_) | Error::NoEligibleTarget | Error::Placement(_) => StatusCode::UNPROCESSABLE_ENTITY,
            Error::Io(_) => StatusCode::INTERNAL_SERVER_ERROR,
            _ => StatusCode::BAD_REQUEST,
        };
        Self::new(status, e.kind(), e.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(json!({ "error": { "kind": self.kind, "message": self.message } }))).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;
type AppState = Arc<SceneStore>;

fn parse_body<T: DeserializeOwned>(body: &[u8]) -> ApiResult<T> {
    serde_json::from_slice(body).map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, "format", format!("malformed body: {e}")))
}

fn snapshot(store: &SceneStore, id: usize) -> ApiResult<Arc<SceneSnapshot>> {
    store.get(id).ok_or_else(|| ApiError::unknown_scene(id))
}

/// Runs CPU-bound work off the async executor.
async fn blocking<T: Send + 'static>(f: impl FnOnce() -> ApiResult<T> + Send + 'static) -> ApiResult<T> {
    tokio::task::spawn_blocking(f).await.map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string()))?
}

async fn version() -> Json<serde_json::Value> {
    Json(json!({ "name": "regiongrasp", "version": env!("CARGO_PKG_VERSION") }))
}

async fn list_scenes(State(store): State<AppState>) -> Json<serde_json::Value> {
    Json(json!({ "scenes": (0..store.len()).collect::<Vec<_>>() }))
}

#[derive(Deserialize)]
struct NewScene {
    seed: u64,
    n_objects: usize,
}

async fn create_scene(State(store): State<AppState>, body: Bytes) -> ApiResult<Response> {
    let req: NewScene = parse_body(&body)?;
    let id = blocking(move || {
        let scene = generate_clutter(req.seed, req.n_objects, &default_library(), CameraModel::default())?;
        Ok(store.insert(scene))
    })
    .await?;
    Ok((StatusCode::CREATED, Json(json!({ "scene_id": id }))).into_response())
}

async fn image(State(store): State<AppState>, Path(id): Path<usize>) -> ApiResult<Response> {
    let snap = snapshot(&store, id)?;
    let png = formats::rgb_png(&snap.image)?;
    Ok(([(header::CONTENT_TYPE, "image/png")], png).into_response())
}

async fn depth(State(store): State<AppState>, Path(id): Path<usize>) -> ApiResult<Response> {
    let snap = snapshot(&store, id)?;
    Ok(([(header::CONTENT_TYPE, "application/octet-stream")], formats::depth_bytes(&snap.image)).into_response())
}

async fn targets(State(store): State<AppState>, Path(id): Path<usize>) -> ApiResult<Json<serde_json::Value>> {
    let snap = snapshot(&store, id)?;
    let min = EvalConfig::default().min_visible_pixels;
    let list: Vec<_> = eligible_targets(&snap.image, min).into_iter().map(|(id, n)| json!({ "id": id, "visible_pixels": n })).collect();
    Ok(Json(json!({ "min_visible_pixels": min, "targets": list })))
}

fn default_k() -> usize {
    10
}

#[derive(Deserialize)]
struct ClickRequest {
    u: f64,
    v: f64,
    #[serde(default = "default_k")]
    k: usize,
    #[serde(default)]
    timings: bool,
}

#[derive(Deserialize)]
struct MaskQuery {
    #[serde(default = "default_k")]
    k: usize,
    #[serde(default)]
    timings: bool,
}

#[derive(Serialize)]
struct DetectResponse {
    centers: Vec<[f64; 3]>,
    grasps: Vec<crate::pipeline::GraspView>,
    #[serde(skip_serializing_if = "Option::is_none")]
    timings: Option<Timings>,
}

/// Runs detection; timings go in the body only on request so that equal
/// requests give byte-identical bodies. The header always carries them.
async fn run_detect(store: AppState, id: usize, guide: Guide, k: usize, want_timings: bool) -> ApiResult<Response> {
    let snap = snapshot(&store, id)?;
    let (det, t) = blocking(move || Ok(detect(&snap, &guide, k)?)).await?;
    let body = DetectResponse { centers: det.centers, grasps: det.grasps, timings: want_timings.then(|| t.clone()) };
    let mut resp = Json(body).into_response();
    let server_timing = format!("guidance;dur={:.3}, detect;dur={:.3}, total;dur={:.3}", t.guidance_ms, t.detect_ms, t.total_ms);
    if let Ok(v) = HeaderValue::from_str(&server_timing) {
        resp.headers_mut().insert("server-timing", v);
    }
    Ok(resp)
}

async fn click(State(store): State<AppState>, Path(id): Path<usize>, body: Bytes) -> ApiResult<Response> {
    let req: ClickRequest = parse_body(&body)?;
    run_detect(store, id, Guide::Click { u: req.u, v: req.v }, req.k, req.timings).await
}

async fn mask(State(store): State<AppState>, Path(id): Path<usize>, Query(q): Query<MaskQuery>, body: Bytes) -> ApiResult<Response> {
    let mask = Mask::parse(&body)?;
    run_detect(store, id, Guide::Mask(mask), q.k, q.timings).await
}

#[derive(Deserialize)]
struct SimulateRequest {
    grasp: GraspPose,
    #[serde(default)]
    target: Option<u32>,
}

async fn simulate(State(store): State<AppState>, Path(id): Path<usize>, body: Bytes) -> ApiResult<Json<serde_json::Value>> {
    let req: SimulateRequest = parse_body(&body)?;
    let snap = snapshot(&store, id)?;
    blocking(move || {
        let cfg = EvalConfig::default();
        req.grasp.validate(&cfg.gripper)?;
        let (success, reason, collision, min_mu) = judge_grasp(&req.grasp, &snap, req.target, &cfg);
        let outline = view(&req.grasp, &snap, &cfg.gripper);
        Ok(Json(json!({
            "success": success,
            "reason": reason,
            "report": { "collision": collision, "min_friction": min_mu, "target": req.target, "success_mu": cfg.success_mu, "grasp": outline },
        })))
    })
    .await
}

pub fn router(store: AppState) -> Router {
    Router::new()
        .route("/version", get(version))
        .route("/scenes", get(list_scenes).post(create_scene))
        .route("/scenes/{id}/image", get(image))
        .route("/scenes/{id}/depth", get(depth))
        .route("/scenes/{id}/targets", get(targets))
        .route("/scenes/{id}/click", post(click))
        .route("/scenes/{id}/mask", post(mask))
        .route("/scenes/{id}/simulate", post(simulate))
        .with_state(store)
}

/// Port from the environment override, else the given default.
pub fn resolve_port(default: u16) -> regiongrasp::Result<u16> {
    match std::env::var(PORT_ENV) {
        Ok(v) => v.trim().parse().map_err(|_| Error::Config(format!("{PORT_ENV}={v:?} is not a port number"))),
        Err(_) => Ok(default),
    }
}

pub async fn serve(store: AppState, addr: SocketAddr) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    eprintln!("listening on http://{}", listener.local_addr()?);
    axum::serve(listener, router(store)).with_graceful_shutdown(async {
        let _ = tokio::signal::ctrl_c().await;
    })
    .await
}
