//! Local HTTP service: render, query and edit a scene.
//!
//! Readers clone an `Arc` of the current scene snapshot and never block on
//! edits. Edits are serialized by a mutex, applied to a private copy, saved
//! atomically when a checkpoint path is configured, and then published as
//! the next snapshot with an incremented version.

use std::path::PathBuf;
use std::sync::{Arc, RwLock};

use axum::extract::rejection::{JsonRejection, QueryRejection};
use axum::extract::{Query, State};
use axum::http::{header, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};

use crate::edit;
use crate::error::Error;
use crate::io::{image::encode_rgb_png, save_checkpoint};
use crate::model::{Camera, Scene};
use crate::render::render;
use crate::rle::RleMask;
use crate::semantics::{self, embed_query, gaussian_classes, resolve_query, QuerySource};

pub const VERSION_HEADER: &str = "x-scene-version";

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    /// Checkpoint rewritten after every committed edit.
    pub checkpoint_path: Option<PathBuf>,
    /// Cameras addressable by `frame`; poses reuse their intrinsics.
    pub cameras: Vec<Camera>,
    pub query_source: QuerySource,
    pub default_threshold: f64,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        ServiceConfig {
            checkpoint_path: None,
            cameras: Vec::new(),
            query_source: QuerySource::default(),
            default_threshold: semantics::DEFAULT_THRESHOLD,
        }
    }
}

#[derive(Clone)]
struct Snapshot {
    scene: Arc<Scene<f32>>,
    version: u64,
}

pub struct AppState {
    snapshot: RwLock<Snapshot>,
    edit_lock: tokio::sync::Mutex<()>,
    config: ServiceConfig,
}

impl AppState {
    pub fn new(scene: Scene<f32>, config: ServiceConfig) -> Arc<Self> {
        Arc::new(AppState {
            snapshot: RwLock::new(Snapshot {
                scene: Arc::new(scene),
                version: 0,
            }),
            edit_lock: tokio::sync::Mutex::new(()),
            config,
        })
    }

    fn current(&self) -> Snapshot {
        self.snapshot.read().unwrap_or_else(|e| e.into_inner()).clone()
    }

    pub fn scene(&self) -> Arc<Scene<f32>> {
        self.current().scene
    }

    pub fn version(&self) -> u64 {
        self.current().version
    }
}

/// Error body: `{"error": kind, "message": text}`.
#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    kind: &'static str,
    message: String,
}

#[derive(Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: String,
    pub message: String,
}

impl ApiError {
    fn bad_request(message: impl Into<String>) -> Self {
        ApiError {
            status: StatusCode::BAD_REQUEST,
            kind: "invalid_parameter",
            message: message.into(),
        }
    }
}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::InvalidParameter(_) | Error::Config(_) => StatusCode::BAD_REQUEST,
            Error::EncoderUnavailable(_) => StatusCode::SERVICE_UNAVAILABLE,
            Error::Encoder(_) => StatusCode::BAD_GATEWAY,
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        };
        ApiError {
            status,
            kind: e.kind(),
            message: e.to_string(),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = ErrorBody {
            error: self.kind.to_string(),
            message: self.message,
        };
        (self.status, Json(body)).into_response()
    }
}

// Malformed requests are validation failures (400), not axum's default 422.
impl From<JsonRejection> for ApiError {
    fn from(e: JsonRejection) -> Self {
        ApiError::bad_request(e.body_text())
    }
}

impl From<QueryRejection> for ApiError {
    fn from(e: QueryRejection) -> Self {
        ApiError::bad_request(e.body_text())
    }
}

type ApiResult<T> = std::result::Result<T, ApiError>;

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> ApiResult<T> + Send + 'static) -> ApiResult<T> {
    tokio::task::spawn_blocking(f).await.map_err(|e| ApiError {
        status: StatusCode::INTERNAL_SERVER_ERROR,
        kind: "internal",
        message: e.to_string(),
    })?
}

/// PNG of the scene seen from `camera`; the CLI and `/render` share it.
pub fn render_png(scene: &Scene<f32>, camera: &Camera) -> Vec<u8> {
    let out = render(scene, camera);
    encode_rgb_png(camera.width, camera.height, &out.color)
}

/// Parses 16 comma-separated numbers as a row-major camera-to-world matrix.
pub fn parse_pose(text: &str) -> crate::Result<[[f64; 4]; 4]> {
    let values: Vec<f64> = text
        .split(',')
        .map(|s| s.trim().parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| Error::invalid(format!("pose: {e}")))?;
    if values.len() != 16 {
        return Err(Error::invalid(format!("pose needs 16 values, got {}", values.len())));
    }
    Ok(std::array::from_fn(|r| std::array::from_fn(|c| values[4 * r + c])))
}

fn select_camera(config: &ServiceConfig, frame: Option<usize>, pose: Option<&str>) -> ApiResult<Camera> {
    let n = config.cameras.len();
    let base = |i: usize| {
        config
            .cameras
            .get(i)
            .cloned()
            .ok_or_else(|| ApiError::bad_request(format!("frame {i} out of range ({n} frames)")))
    };
    match pose {
        Some(p) => {
            let intr = base(frame.unwrap_or(0))?;
            let c2w = parse_pose(p)?;
            Ok(Camera::from_camera_to_world(
                intr.fx,
                intr.fy,
                intr.cx,
                intr.cy,
                intr.width,
                intr.height,
                c2w,
            )?)
        }
        None => base(frame.unwrap_or(0)),
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct RenderParams {
    pub frame: Option<usize>,
    /// 16 comma-separated camera-to-world values, row-major.
    pub pose: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct QueryRequest {
    pub prompt: String,
    pub threshold: Option<f64>,
    pub frame: Option<usize>,
    pub pose: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedLabelResponse {
    pub label: String,
    pub class_index: usize,
    pub relevancy: f64,
    pub mask: RleMask,
    pub gaussian_ids: Vec<usize>,
    pub centroid3d: Option<[f64; 3]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryResponse {
    pub query: String,
    pub ranked: Vec<RankedLabelResponse>,
    pub threshold_used: f64,
    pub width: usize,
    pub height: usize,
    pub version: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EditOp {
    Recolor,
    Delete,
    Translate,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EditParams {
    pub rgb: Option<[f32; 3]>,
    pub offset: Option<[f32; 3]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EditRequest {
    pub op: EditOp,
    pub label: Option<String>,
    pub ids: Option<Vec<usize>>,
    #[serde(default)]
    pub params: EditParams,
    /// When set, the edit is rejected with 409 unless it matches the
    /// current scene version.
    pub base_version: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EditResponse {
    pub version: u64,
    pub affected: usize,
    pub num_gaussians: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelSummary {
    pub label: String,
    pub class_index: usize,
    pub gaussians: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneSummary {
    pub version: u64,
    pub num_gaussians: usize,
    pub sh_degree: usize,
    pub embedding_dim: usize,
    pub frames: usize,
    pub labels: Vec<LabelSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Health {
    pub status: String,
    pub version: u64,
}

async fn health(State(state): State<Arc<AppState>>) -> Json<Health> {
    Json(Health {
        status: "ok".into(),
        version: state.version(),
    })
}

async fn render_handler(State(state): State<Arc<AppState>>, p: std::result::Result<Query<RenderParams>, QueryRejection>) -> ApiResult<Response> {
    let Query(p) = p?;
    let snap = state.current();
    let camera = select_camera(&state.config, p.frame, p.pose.as_deref())?;
    let png = blocking(move || Ok(render_png(&snap.scene, &camera))).await?;
    let mut resp = ([(header::CONTENT_TYPE, "image/png")], png).into_response();
    resp.headers_mut()
        .insert(VERSION_HEADER, HeaderValue::from(snap.version));
    Ok(resp)
}

async fn query_handler(State(state): State<Arc<AppState>>, req: std::result::Result<Json<QueryRequest>, JsonRejection>) -> ApiResult<Json<QueryResponse>> {
    let Json(req) = req?;
    let snap = state.current();
    let camera = select_camera(&state.config, req.frame, req.pose.as_deref())?;
    let threshold = req.threshold.unwrap_or(state.config.default_threshold);
    let st = state.clone();
    let resp = blocking(move || {
        let scene = &snap.scene;
        let emb = embed_query(&req.prompt, &st.config.query_source, scene.embeddings.dim())?;
        let r = resolve_query(scene.as_ref(), &req.prompt, &emb, &camera, threshold)?;
        Ok(QueryResponse {
            ranked: r
                .ranked
                .into_iter()
                .map(|l| RankedLabelResponse {
                    mask: RleMask::from_mask(r.width, r.height, &l.pixel_mask),
                    label: l.label,
                    class_index: l.class_index,
                    relevancy: l.relevancy,
                    gaussian_ids: l.gaussian_ids,
                    centroid3d: l.centroid3d,
                })
                .collect(),
            query: r.query,
            threshold_used: r.threshold_used,
            width: r.width,
            height: r.height,
            version: snap.version,
        })
    })
    .await?;
    Ok(Json(resp))
}

/// Applies `req` to `scene`, returning the number of Gaussians affected.
pub fn apply_edit(scene: &mut Scene<f32>, req: &EditRequest) -> crate::Result<usize> {
    let ids = match (&req.label, &req.ids) {
        (Some(label), None) => edit::select_by_label(scene, label)?,
        (None, Some(ids)) => ids.clone(),
        _ => return Err(Error::invalid("exactly one of label or ids is required")),
    };
    match req.op {
        EditOp::Recolor => {
            let rgb = req.params.rgb.ok_or_else(|| Error::invalid("recolor needs params.rgb"))?;
            edit::recolor(scene, &ids, rgb)?;
        }
        EditOp::Delete => {
            edit::delete(scene, &ids)?;
        }
        EditOp::Translate => {
            let t = req.params.offset.ok_or_else(|| Error::invalid("translate needs params.offset"))?;
            edit::translate(scene, &ids, t)?;
        }
    }
    Ok(ids.len())
}

async fn edit_handler(State(state): State<Arc<AppState>>, req: std::result::Result<Json<EditRequest>, JsonRejection>) -> ApiResult<Json<EditResponse>> {
    let Json(req) = req?;
    let _guard = state.edit_lock.lock().await;
    let snap = state.current();
    if let Some(base) = req.base_version {
        if base != snap.version {
            return Err(ApiError {
                status: StatusCode::CONFLICT,
                kind: "conflict",
                message: format!("edit based on version {base}, scene is at {}", snap.version),
            });
        }
    }
    let st = state.clone();
    let (scene, affected) = blocking(move || {
        let mut scene = (*snap.scene).clone();
        let affected = apply_edit(&mut scene, &req)?;
        if let Some(path) = &st.config.checkpoint_path {
            save_checkpoint(&scene, path)?;
        }
        Ok((scene, affected))
    })
    .await?;
    let num_gaussians = scene.len();
    let version = {
        let mut w = state.snapshot.write().unwrap_or_else(|e| e.into_inner());
        w.version += 1;
        w.scene = Arc::new(scene);
        w.version
    };
    log::info!("edit committed: version {version}, {affected} Gaussians affected");
    Ok(Json(EditResponse {
        version,
        affected,
        num_gaussians,
    }))
}

async fn summary(State(state): State<Arc<AppState>>) -> Json<SceneSummary> {
    let snap = state.current();
    let scene = &snap.scene;
    let mut counts = vec![0usize; scene.dictionary.num_classes()];
    for c in gaussian_classes(scene.as_ref()) {
        counts[c] += 1;
    }
    let labels = counts
        .iter()
        .enumerate()
        .map(|(i, &n)| LabelSummary {
            label: scene.dictionary.label_of(i).unwrap_or_default().to_string(),
            class_index: i,
            gaussians: n,
        })
        .collect();
    Json(SceneSummary {
        version: snap.version,
        num_gaussians: scene.len(),
        sh_degree: scene.sh_degree(),
        embedding_dim: scene.embeddings.dim(),
        frames: state.config.cameras.len(),
        labels,
    })
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/health", get(health))
        .route("/render", get(render_handler))
        .route("/query", post(query_handler))
        .route("/edit", post(edit_handler))
        .route("/scene/summary", get(summary))
        .with_state(state)
}

/// Serves until the listener fails.
pub async fn serve(listener: tokio::net::TcpListener, state: Arc<AppState>) -> std::io::Result<()> {
    axum::serve(listener, router(state)).await
}
