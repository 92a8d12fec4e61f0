//! HTTP workbench over a directory store: breeding sessions, content-addressed
//! genomes and networks, lineage, rendering and analysis endpoints, and
//! polled training jobs.

pub mod jobs;
pub mod session;
pub mod store;

use std::collections::HashMap;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::{Arc, Mutex};

use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use cppnlab::analysis::{
    colormap_render, feature_maps_genome, feature_maps_mlp, feature_panel, novelty_flags, pca_features, sweep_frame,
    sweep_strip, Layout, Palette, SweepTarget, DEFAULT_TAU,
};
use cppnlab::evolve::EvolveConfig;
use cppnlab::train::{TargetSpec, TrainConfig};
use cppnlab::{layerize_with, render, verify_equivalence, ImageRgb, LayerizeOptions};
use serde::{Deserialize, Serialize};
use serde_json::json;

use jobs::Jobs;
use session::SessionError;
use store::{check_id, LineageNode, MlpMeta, Store, StoreError};

pub const DEFAULT_RESOLUTION: usize = 256;
pub const MAX_RESOLUTION: usize = 1024;
/// Default resolution of feature-map and PCA panels.
pub const PANEL_RESOLUTION: usize = 64;

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    message: String,
}

impl ApiError {
    fn new(status: StatusCode, message: impl Into<String>) -> Self {
        ApiError { status, message: message.into() }
    }

    fn bad_request(message: impl Into<String>) -> Self {
        ApiError::new(StatusCode::BAD_REQUEST, message)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(json!({ "error": self.message }))).into_response()
    }
}

impl From<StoreError> for ApiError {
    fn from(e: StoreError) -> Self {
        let status = match e {
            StoreError::NotFound { .. } => StatusCode::NOT_FOUND,
            StoreError::BadId(_) => StatusCode::BAD_REQUEST,
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        };
        ApiError::new(status, e.to_string())
    }
}

impl From<SessionError> for ApiError {
    fn from(e: SessionError) -> Self {
        match e {
            SessionError::Store(s) => s.into(),
            SessionError::StaleGeneration { .. } => ApiError::new(StatusCode::CONFLICT, e.to_string()),
            _ => ApiError::bad_request(e.to_string()),
        }
    }
}

type ApiResult<T> = Result<T, ApiError>;

pub struct AppState {
    pub store: Arc<Store>,
    jobs: Arc<Jobs>,
    session_locks: Mutex<HashMap<String, Arc<Mutex<()>>>>,
    png_cache: Mutex<HashMap<(String, usize), Vec<u8>>>,
}

impl AppState {
    pub fn new(store: Store) -> Arc<Self> {
        Arc::new(AppState {
            store: Arc::new(store),
            jobs: Arc::default(),
            session_locks: Mutex::default(),
            png_cache: Mutex::default(),
        })
    }

    fn session_lock(&self, id: &str) -> Arc<Mutex<()>> {
        let mut locks = self.session_locks.lock().expect("lock table poisoned");
        Arc::clone(locks.entry(id.to_string()).or_default())
    }
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/sessions", post(create_session))
        .route("/sessions/{id}", get(get_session))
        .route("/sessions/{id}/select", post(select))
        .route("/sessions/{id}/replay", get(replay))
        .route("/genomes/{file}", get(genome_file))
        .route("/genomes/{id}/lineage", get(lineage))
        .route("/genomes/{id}/maps.png", get(genome_maps))
        .route("/genomes/{id}/layerize", post(layerize_genome))
        .route("/genomes/{id}/verify", post(verify))
        .route("/genomes/{id}/publish", post(publish))
        .route("/gallery", get(gallery))
        .route("/mlps/{file}", get(mlp_file))
        .route("/mlps/{id}/maps.png", get(mlp_maps))
        .route("/mlps/{id}/novelty", get(mlp_novelty))
        .route("/mlps/{id}/sweep.png", get(mlp_sweep))
        .route("/mlps/{id}/pca/{layer}", get(mlp_pca))
        .route("/mlps/{id}/pca/{layer}/panel.png", get(mlp_pca_panel))
        .route("/mlps/{id}/train", post(start_training))
        .route("/jobs/{id}", get(job_status))
        .with_state(state)
}

/// Serves the workbench over the store at `root` until the process exits.
pub async fn serve(addr: SocketAddr, root: PathBuf) -> std::io::Result<()> {
    let store = Store::open(root).map_err(|e| std::io::Error::other(e.to_string()))?;
    let listener = tokio::net::TcpListener::bind(addr).await?;
    axum::serve(listener, router(AppState::new(store))).await
}

fn png(bytes: Vec<u8>) -> Response {
    ([(header::CONTENT_TYPE, "image/png")], bytes).into_response()
}

fn encode(img: &ImageRgb) -> ApiResult<Vec<u8>> {
    img.encode_png().map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))
}

fn resolution(r: Option<usize>, default: usize) -> ApiResult<usize> {
    let r = r.unwrap_or(default);
    if (2..=MAX_RESOLUTION).contains(&r) {
        Ok(r)
    } else {
        Err(ApiError::bad_request(format!("resolution must be in 2..={MAX_RESOLUTION}, got {r}")))
    }
}

/// Splits `abc.json` into `("abc", "json")`.
fn split_file(file: &str) -> ApiResult<(&str, &str)> {
    let (id, ext) = file.rsplit_once('.').ok_or_else(|| ApiError::bad_request(format!("expected {{id}}.{{ext}}, got `{file}`")))?;
    check_id(id)?;
    Ok((id, ext))
}

#[derive(Deserialize, Default)]
struct CreateSession {
    #[serde(default)]
    config: Option<EvolveConfig>,
    #[serde(default)]
    seed_genome: Option<String>,
}

async fn create_session(State(s): State<Arc<AppState>>, body: Option<Json<CreateSession>>) -> ApiResult<impl IntoResponse> {
    let req = body.map(|Json(b)| b).unwrap_or_default();
    let config = req.config.unwrap_or_default();
    if let Some(seed) = &req.seed_genome {
        check_id(seed)?;
    }
    let session = session::create_session(&s.store, config, req.seed_genome.as_deref())?;
    Ok((StatusCode::CREATED, Json(session)))
}

async fn get_session(State(s): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult<impl IntoResponse> {
    Ok(Json(session::load_session(&s.store, &id)?))
}

#[derive(Deserialize)]
struct Select {
    selected: Vec<String>,
    #[serde(default)]
    generation: Option<u64>,
}

async fn select(State(s): State<Arc<AppState>>, Path(id): Path<String>, Json(req): Json<Select>) -> ApiResult<impl IntoResponse> {
    check_id(&id)?;
    let lock = s.session_lock(&id);
    let _guard = lock.lock().expect("session lock poisoned");
    Ok(Json(session::select_and_advance(&s.store, &id, &req.selected, req.generation)?))
}

async fn replay(State(s): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult<impl IntoResponse> {
    Ok(Json(session::replay(&s.store, &id)?))
}

#[derive(Deserialize)]
struct ResQuery {
    r: Option<usize>,
}

async fn genome_file(State(s): State<Arc<AppState>>, Path(file): Path<String>, Query(q): Query<ResQuery>) -> ApiResult<Response> {
    let (id, ext) = split_file(&file)?;
    match ext {
        "json" => Ok(([(header::CONTENT_TYPE, "application/json")], s.store.genome_text(id)?).into_response()),
        "png" => {
            let r = resolution(q.r, DEFAULT_RESOLUTION)?;
            let key = (id.to_string(), r);
            if let Some(bytes) = s.png_cache.lock().expect("cache poisoned").get(&key) {
                return Ok(png(bytes.clone()));
            }
            let genome = s.store.genome(id)?;
            let img = render(&genome, r).map_err(|e| ApiError::bad_request(e.to_string()))?;
            let bytes = encode(&img)?;
            s.png_cache.lock().expect("cache poisoned").insert(key, bytes.clone());
            Ok(png(bytes))
        }
        other => Err(ApiError::new(StatusCode::NOT_FOUND, format!("no `.{other}` representation"))),
    }
}

#[derive(Serialize)]
struct LineageEntry {
    #[serde(flatten)]
    node: LineageNode,
    published: bool,
}

async fn lineage(State(s): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult<impl IntoResponse> {
    let ancestry = s.store.ancestry(&id)?;
    let gallery = s.store.gallery()?;
    let mut nodes: Vec<LineageEntry> = ancestry
        .into_values()
        .map(|node| LineageEntry { published: gallery.iter().any(|e| e.genome == node.genome), node })
        .collect();
    nodes.sort_by(|a, b| (a.node.generation, &a.node.genome).cmp(&(b.node.generation, &b.node.genome)));
    let edges: Vec<[&str; 2]> = nodes
        .iter()
        .flat_map(|n| n.node.parents.iter().map(move |p| [p.as_str(), n.node.genome.as_str()]))
        .collect();
    Ok(Json(json!({ "genome": id, "nodes": nodes, "edges": edges })))
}

#[derive(Deserialize)]
struct PanelQuery {
    r: Option<usize>,
    palette: Option<String>,
    tau: Option<f64>,
}

fn palette(p: Option<&str>, default: Palette) -> ApiResult<Palette> {
    p.map_or(Ok(default), |p| p.parse().map_err(ApiError::bad_request))
}

async fn genome_maps(State(s): State<Arc<AppState>>, Path(id): Path<String>, Query(q): Query<PanelQuery>) -> ApiResult<Response> {
    let genome = s.store.genome(&id)?;
    let maps = feature_maps_genome(&genome, resolution(q.r, PANEL_RESOLUTION)?).map_err(|e| ApiError::bad_request(e.to_string()))?;
    let flags = novelty_flags(&maps, q.tau.unwrap_or(DEFAULT_TAU)).map_err(|e| ApiError::bad_request(e.to_string()))?;
    let panel = feature_panel(&maps, &flags, palette(q.palette.as_deref(), Palette::RedBlackWhite)?)
        .map_err(|e| ApiError::bad_request(e.to_string()))?;
    Ok(png(encode(&panel)?))
}

#[derive(Deserialize, Default)]
struct LayerizeRequest {
    #[serde(default)]
    carry_bias_input: bool,
}

async fn layerize_genome(
    State(s): State<Arc<AppState>>,
    Path(id): Path<String>,
    body: Option<Json<LayerizeRequest>>,
) -> ApiResult<impl IntoResponse> {
    let req = body.map(|Json(b)| b).unwrap_or_default();
    let genome = s.store.genome(&id)?;
    let mlp = layerize_with(&genome, LayerizeOptions { carry_bias_input: req.carry_bias_input })
        .map_err(|e| ApiError::bad_request(e.to_string()))?;
    let mlp_id = s.store.put_mlp(&mlp, &MlpMeta { source_genome: Some(id.clone()), trained_from: None })?;
    Ok((
        StatusCode::CREATED,
        Json(json!({
            "mlp": mlp_id,
            "genome": id,
            "widths": mlp.widths(),
            "carriers": mlp.carrier_count(),
            "parameters": mlp.parameter_count(),
        })),
    ))
}

#[derive(Deserialize)]
struct VerifyRequest {
    mlp: String,
    #[serde(default)]
    resolution: Option<usize>,
    #[serde(default)]
    tolerance: Option<f64>,
}

async fn verify(State(s): State<Arc<AppState>>, Path(id): Path<String>, Json(req): Json<VerifyRequest>) -> ApiResult<impl IntoResponse> {
    let genome = s.store.genome(&id)?;
    let mlp = s.store.mlp(&req.mlp)?;
    let report = verify_equivalence(&genome, &mlp, resolution(req.resolution, 64)?, req.tolerance.unwrap_or(1e-9))
        .map_err(|e| ApiError::bad_request(e.to_string()))?;
    Ok(Json(report))
}

#[derive(Deserialize, Default)]
struct PublishRequest {
    #[serde(default)]
    title: String,
}

async fn publish(State(s): State<Arc<AppState>>, Path(id): Path<String>, body: Option<Json<PublishRequest>>) -> ApiResult<impl IntoResponse> {
    let req = body.map(|Json(b)| b).unwrap_or_default();
    Ok(Json(s.store.publish(&id, &req.title)?))
}

async fn gallery(State(s): State<Arc<AppState>>) -> ApiResult<impl IntoResponse> {
    let entries: Vec<_> = s
        .store
        .gallery()?
        .into_iter()
        .map(|e| {
            let lineage = format!("/genomes/{}/lineage", e.genome);
            json!({ "genome": e.genome, "title": e.title, "created": e.created, "lineage": lineage })
        })
        .collect();
    Ok(Json(entries))
}

async fn mlp_file(State(s): State<Arc<AppState>>, Path(file): Path<String>) -> ApiResult<Response> {
    match split_file(&file)? {
        (id, "json") => Ok(([(header::CONTENT_TYPE, "application/json")], s.store.mlp_text(id)?).into_response()),
        (_, other) => Err(ApiError::new(StatusCode::NOT_FOUND, format!("no `.{other}` representation"))),
    }
}

async fn mlp_maps(State(s): State<Arc<AppState>>, Path(id): Path<String>, Query(q): Query<PanelQuery>) -> ApiResult<Response> {
    let mlp = s.store.mlp(&id)?;
    let maps = feature_maps_mlp(&mlp, resolution(q.r, PANEL_RESOLUTION)?).map_err(|e| ApiError::bad_request(e.to_string()))?;
    let flags = novelty_flags(&maps, q.tau.unwrap_or(DEFAULT_TAU)).map_err(|e| ApiError::bad_request(e.to_string()))?;
    let panel = feature_panel(&maps, &flags, palette(q.palette.as_deref(), Palette::RedWhiteBlue)?)
        .map_err(|e| ApiError::bad_request(e.to_string()))?;
    Ok(png(encode(&panel)?))
}

async fn mlp_novelty(State(s): State<Arc<AppState>>, Path(id): Path<String>, Query(q): Query<PanelQuery>) -> ApiResult<impl IntoResponse> {
    let mlp = s.store.mlp(&id)?;
    let tau = q.tau.unwrap_or(DEFAULT_TAU);
    let maps = feature_maps_mlp(&mlp, resolution(q.r, PANEL_RESOLUTION)?).map_err(|e| ApiError::bad_request(e.to_string()))?;
    let flags = novelty_flags(&maps, tau).map_err(|e| ApiError::bad_request(e.to_string()))?;
    let entries: Vec<_> = maps
        .iter()
        .zip(&flags)
        .map(|(m, &novel)| json!({ "layer": m.layer, "index": m.index, "provenance": m.provenance, "novel": novel }))
        .collect();
    Ok(Json(json!({ "tau": tau, "novel": flags.iter().filter(|&&n| n).count(), "maps": entries })))
}

#[derive(Deserialize)]
struct SweepQuery {
    layer: usize,
    #[serde(default)]
    row: Option<usize>,
    col: usize,
    #[serde(default)]
    t: f64,
    r: Option<usize>,
    /// Comma-separated unit vector; selects column mode.
    #[serde(default)]
    direction: Option<String>,
}

async fn mlp_sweep(State(s): State<Arc<AppState>>, Path(id): Path<String>, Query(q): Query<SweepQuery>) -> ApiResult<Response> {
    let mlp = s.store.mlp(&id)?;
    let target = match (&q.direction, q.row) {
        (Some(dir), _) => SweepTarget::Column {
            layer: q.layer,
            col: q.col,
            direction: dir
                .split(',')
                .map(|v| v.trim().parse::<f64>().map_err(|e| ApiError::bad_request(format!("direction: {e}"))))
                .collect::<ApiResult<_>>()?,
        },
        (None, Some(row)) => SweepTarget::Weight { layer: q.layer, row, col: q.col },
        (None, None) => return Err(ApiError::bad_request("either row or direction is required")),
    };
    let frame = sweep_frame(&mlp, &target, q.t, resolution(q.r, DEFAULT_RESOLUTION)?).map_err(|e| ApiError::bad_request(e.to_string()))?;
    Ok(png(encode(&frame)?))
}

async fn mlp_pca(State(s): State<Arc<AppState>>, Path((id, layer)): Path<(String, usize)>, Query(q): Query<ResQuery>) -> ApiResult<impl IntoResponse> {
    let mlp = s.store.mlp(&id)?;
    let r = pca_features(&mlp, resolution(q.r, PANEL_RESOLUTION)?, layer).map_err(|e| ApiError::bad_request(e.to_string()))?;
    Ok(Json(json!({
        "layer": r.layer,
        "resolution": r.resolution,
        "variances": r.variances,
        "directions": r.directions,
        "mean": r.mean,
    })))
}

async fn mlp_pca_panel(State(s): State<Arc<AppState>>, Path((id, layer)): Path<(String, usize)>, Query(q): Query<ResQuery>) -> ApiResult<Response> {
    let mlp = s.store.mlp(&id)?;
    let r = pca_features(&mlp, resolution(q.r, PANEL_RESOLUTION)?, layer).map_err(|e| ApiError::bad_request(e.to_string()))?;
    let images: Vec<ImageRgb> = r
        .projections
        .iter()
        .map(|p| {
            let scale = p.values.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-12);
            colormap_render(p, Palette::RedWhiteBlue, (-scale, scale))
        })
        .collect();
    let strip = sweep_strip(&images, Layout::Horizontal).map_err(|e| ApiError::bad_request(e.to_string()))?;
    Ok(png(encode(&strip)?))
}

#[derive(Deserialize, Default)]
struct TrainRequest {
    #[serde(default)]
    target_genome: Option<String>,
    #[serde(default)]
    config: Option<TrainConfig>,
}

async fn start_training(State(s): State<Arc<AppState>>, Path(id): Path<String>, body: Option<Json<TrainRequest>>) -> ApiResult<impl IntoResponse> {
    let req = body.map(|Json(b)| b).unwrap_or_default();
    let arch = s.store.mlp(&id)?;
    let target_id = match req.target_genome {
        Some(t) => t,
        None => s.store.mlp_meta(&id)?.source_genome.ok_or_else(|| ApiError::bad_request("network has no source genome; pass target_genome"))?,
    };
    let cfg = req.config.unwrap_or_default();
    cfg.validate().map_err(|e| ApiError::bad_request(e.to_string()))?;
    let target = TargetSpec::from_genome(&s.store.genome(&target_id)?, cfg.resolution).map_err(|e| ApiError::bad_request(e.to_string()))?;
    let job = s.jobs.start_training(Arc::clone(&s.store), id, arch, target, cfg);
    Ok((StatusCode::ACCEPTED, Json(json!({ "job": job }))))
}

async fn job_status(State(s): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult<impl IntoResponse> {
    s.jobs.get(&id).map(Json).ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, format!("job `{id}` not found")))
}
