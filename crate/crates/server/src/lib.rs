//! HTTP editing sessions over frozen checkpoints.
//!
//! Each session holds a current source shape, the last unaccepted edit and an
//! append-only history of accepts and undos. Edits run on the blocking pool;
//! requests for one session are serialized by its mutex.

use std::collections::HashMap;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex, RwLock};

use axum::body::Bytes;
use axum::extract::{Path, State};
use axum::http::{HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use shapeedit_core::autoencoder::{Autoencoder, Structure};
use shapeedit_core::checkpoint::Checkpoint;
use shapeedit_core::editor::{mean_volume, EditConfig, EditTrace, Editor, NeighborIndex};
use shapeedit_core::jointspace::JointModel;
use shapeedit_core::metrics::{pep, PepEntry};
use shapeedit_core::rng::{derive_seed, stream_rng};
use shapeedit_core::shapeworld::{
    read_dataset, realize_shape, sample_shape, shapes_of, BoxSet, DatasetConfig, Part, ShapeParams,
    Split,
};
use tower_http::cors::{AllowOrigin, Any, CorsLayer};

/// Largest step count a client may request.
pub const MAX_STEPS: usize = 1000;

#[derive(Clone, Debug)]
pub struct ServerConfig {
    pub checkpoint: PathBuf,
    pub autoencoder: PathBuf,
    /// Dataset whose training split seeds the neighbor index.
    pub dataset: PathBuf,
    pub edit: EditConfig,
    pub swell: f64,
}

struct Models {
    autoencoder: Autoencoder,
    model: JointModel,
    index: NeighborIndex,
    mean_volume: f64,
    edit: EditConfig,
    swell: f64,
    checkpoint_hash: String,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
struct Pending {
    utterance: String,
    summary: TraceSummary,
    params: ShapeParams,
    #[serde(skip)]
    latent: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct TraceSummary {
    pub steps: usize,
    pub initial_h: f64,
    pub final_h: f64,
    pub failed: bool,
    pub pep: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
enum EventKind {
    Accept,
    Undo,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
struct HistoryEntry {
    kind: EventKind,
    utterance: Option<String>,
    summary: Option<TraceSummary>,
    /// Source after this event.
    result: ShapeParams,
}

#[derive(Clone, Debug)]
struct Session {
    id: String,
    params: ShapeParams,
    latent: Vec<f64>,
    /// Sources replaced by accepts, most recent last.
    previous: Vec<(ShapeParams, Vec<f64>)>,
    history: Vec<HistoryEntry>,
    pending: Option<Pending>,
    edits: u64,
    seed: u64,
}

/// Shared, read-only models plus the session table.
#[derive(Clone)]
pub struct AppState {
    models: Arc<Models>,
    sessions: Arc<RwLock<HashMap<String, Arc<Mutex<Session>>>>>,
    next_id: Arc<AtomicU64>,
}

impl AppState {
    pub fn load(cfg: &ServerConfig) -> shapeedit_core::Result<Self> {
        let autoencoder = Autoencoder::from_checkpoint(&Checkpoint::load(&cfg.autoencoder)?)?;
        let ck = Checkpoint::load(&cfg.checkpoint)?;
        let model = JointModel::from_checkpoint(&ck)?;
        let triplets = read_dataset(&cfg.dataset)?;
        let train = shapes_of(&triplets, Some(Split::Train));
        Self::new(autoencoder, model, &train, cfg.edit.clone(), cfg.swell)
    }

    /// State over in-memory models; `train_shapes` build the neighbor index.
    pub fn new(
        autoencoder: Autoencoder,
        model: JointModel,
        train_shapes: &[ShapeParams],
        edit: EditConfig,
        swell: f64,
    ) -> shapeedit_core::Result<Self> {
        edit.validate()?;
        let index = NeighborIndex::from_shapes(&autoencoder, train_shapes)?;
        let mean_volume = mean_volume(train_shapes)?;
        let checkpoint_hash = model.hash()?;
        Ok(Self {
            models: Arc::new(Models {
                autoencoder,
                model,
                index,
                mean_volume,
                edit,
                swell,
                checkpoint_hash,
            }),
            sessions: Arc::default(),
            next_id: Arc::new(AtomicU64::new(1)),
        })
    }

    fn session(&self, id: &str) -> Result<Arc<Mutex<Session>>, ApiError> {
        self.sessions
            .read()
            .expect("session table lock")
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, format!("unknown session {id}")))
    }
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    message: String,
    step: Option<usize>,
}

impl ApiError {
    fn new(status: StatusCode, message: impl Into<String>) -> Self {
        Self {
            status,
            message: message.into(),
            step: None,
        }
    }

    fn bad_request(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, message)
    }
}

impl From<shapeedit_core::Error> for ApiError {
    fn from(e: shapeedit_core::Error) -> Self {
        use shapeedit_core::Error as E;
        match e {
            E::Edit { step, .. } => Self {
                status: StatusCode::INTERNAL_SERVER_ERROR,
                message: e.to_string(),
                step: Some(step),
            },
            E::Validity(_) | E::Argument(_) | E::Config(_) => Self::bad_request(e.to_string()),
            _ => Self::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let mut body = json!({ "error": self.message });
        if let Some(step) = self.step {
            body["step"] = json!(step);
        }
        (self.status, Json(body)).into_response()
    }
}

type ApiResult = Result<Json<Value>, ApiError>;

fn parse_body<T: for<'de> Deserialize<'de>>(body: &Bytes) -> Result<T, ApiError> {
    let bytes: &[u8] = if body.is_empty() { b"{}" } else { body };
    serde_json::from_slice(bytes).map_err(|e| ApiError::bad_request(format!("malformed body: {e}")))
}

#[derive(Serialize)]
struct WireBox {
    min: [f64; 3],
    max: [f64; 3],
    label: Part,
}

fn shape_json(p: &ShapeParams) -> Result<Value, ApiError> {
    let boxes: BoxSet = realize_shape(p)?;
    let wire: Vec<WireBox> = boxes
        .boxes
        .iter()
        .map(|b| WireBox {
            min: b.min,
            max: b.max,
            label: b.part,
        })
        .collect();
    Ok(json!({ "boxes": wire }))
}

async fn blocking<T: Send + 'static>(
    f: impl FnOnce() -> Result<T, ApiError> + Send + 'static,
) -> Result<T, ApiError> {
    tokio::task::spawn_blocking(f).await.map_err(|e| {
        ApiError::new(
            StatusCode::INTERNAL_SERVER_ERROR,
            format!("worker failed: {e}"),
        )
    })?
}

fn session_json(s: &Session) -> Result<Value, ApiError> {
    Ok(json!({
        "sessionId": s.id,
        "params": s.params,
        "shape": shape_json(&s.params)?,
        "history": s.history,
        "pending": s.pending,
    }))
}

#[derive(Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
struct CreateRequest {
    params: Option<ShapeParams>,
    random_seed: Option<u64>,
}

async fn create_session(State(state): State<AppState>, body: Bytes) -> ApiResult {
    let req: CreateRequest = parse_body(&body)?;
    let n = state.next_id.fetch_add(1, Ordering::Relaxed);
    let seed = req.random_seed.unwrap_or(n);
    let params = match req.params {
        Some(p) => {
            p.validate()?;
            p
        }
        None => sample_shape(
            &DatasetConfig::default(),
            &mut stream_rng(seed, "session-shape", 0),
        ),
    };
    let latent = state.models.autoencoder.encode(&params);
    let id = format!("s{n}");
    let session = Session {
        id: id.clone(),
        params,
        latent,
        previous: Vec::new(),
        history: Vec::new(),
        pending: None,
        edits: 0,
        seed,
    };
    let body =
        json!({ "sessionId": id, "shape": shape_json(&session.params)?, "params": session.params });
    state
        .sessions
        .write()
        .expect("session table lock")
        .insert(id, Arc::new(Mutex::new(session)));
    Ok(Json(body))
}

async fn get_session(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult {
    let session = state.session(&id)?;
    let s = session.lock().expect("session lock");
    Ok(Json(session_json(&s)?))
}

#[derive(Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
struct EditRequest {
    utterance: String,
    steps: Option<usize>,
    /// Target per-step volume change in world units.
    delta: Option<f64>,
    seed: Option<u64>,
}

fn run_edit(models: &Models, s: &mut Session, req: EditRequest) -> Result<Value, ApiError> {
    if req.utterance.trim().is_empty() {
        return Err(ApiError::bad_request("utterance is empty"));
    }
    let steps = req.steps.unwrap_or(models.edit.steps);
    if steps > MAX_STEPS {
        return Err(ApiError::bad_request(format!(
            "steps must be at most {MAX_STEPS}"
        )));
    }
    let mut cfg = models.edit.clone();
    if let Some(delta) = req.delta {
        if !(delta > 0.0 && delta.is_finite()) {
            return Err(ApiError::bad_request("delta must be positive"));
        }
        cfg.step_volume_fraction = delta / models.mean_volume;
    }
    let editor = Editor::new(
        &models.autoencoder,
        &models.model,
        &models.index,
        cfg,
        models.mean_volume,
    )?;
    let structure = Structure::of(&s.params);
    let seed = req
        .seed
        .unwrap_or_else(|| derive_seed(s.seed, "session-edit", s.edits));
    s.edits += 1;
    let trace: EditTrace =
        editor.edit_with_steps(&s.latent, structure, &req.utterance, seed, steps)?;

    let source = realize_shape(&s.params)?;
    let entry: PepEntry = pep(
        &source,
        &realize_shape(trace.final_params())?,
        &req.utterance,
        models.swell,
    );
    let steps_json = trace
        .steps
        .iter()
        .map(|st| {
            Ok(json!({
                "step": st.step,
                "h": st.h,
                "deltaV": st.delta_volume,
                "stepScale": st.step_scale,
                "clipped": st.clipped,
                "shape": shape_json(&st.params)?,
                "params": st.params,
            }))
        })
        .collect::<Result<Vec<_>, ApiError>>()?;
    let summary = TraceSummary {
        steps: trace.steps.len() - 1,
        initial_h: trace.steps[0].h,
        final_h: trace.last().h,
        failed: trace.failed,
        pep: entry.score().filter(|p| p.is_finite()),
    };
    let mut body = json!({
        "trace": steps_json,
        "finalParams": trace.final_params(),
        "failed": trace.failed,
    });
    match entry.flag {
        None => body["pep"] = serde_json::to_value(&entry).map_err(shapeedit_core::Error::from)?,
        Some(flag) => {
            body["pepReason"] = serde_json::to_value(flag).map_err(shapeedit_core::Error::from)?
        }
    }
    s.pending = Some(Pending {
        utterance: req.utterance,
        summary,
        params: trace.final_params().clone(),
        latent: trace.last().latent.clone(),
    });
    Ok(body)
}

async fn edit_session(
    State(state): State<AppState>,
    Path(id): Path<String>,
    body: Bytes,
) -> ApiResult {
    let req: EditRequest = parse_body(&body)?;
    let session = state.session(&id)?;
    let models = state.models.clone();
    let body = blocking(move || {
        let mut s = session.lock().expect("session lock");
        run_edit(&models, &mut s, req)
    })
    .await?;
    Ok(Json(body))
}

async fn accept(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult {
    let session = state.session(&id)?;
    let mut s = session.lock().expect("session lock");
    let Some(p) = s.pending.take() else {
        return Err(ApiError::new(StatusCode::CONFLICT, "no edit to accept"));
    };
    let old = (
        std::mem::replace(&mut s.params, p.params.clone()),
        std::mem::replace(&mut s.latent, p.latent),
    );
    s.previous.push(old);
    s.history.push(HistoryEntry {
        kind: EventKind::Accept,
        utterance: Some(p.utterance),
        summary: Some(p.summary),
        result: p.params,
    });
    Ok(Json(
        json!({ "newSourceParams": s.params, "shape": shape_json(&s.params)? }),
    ))
}

async fn undo(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult {
    let session = state.session(&id)?;
    let mut s = session.lock().expect("session lock");
    let Some((params, latent)) = s.previous.pop() else {
        return Err(ApiError::new(StatusCode::CONFLICT, "nothing to undo"));
    };
    s.params = params;
    s.latent = latent;
    s.pending = None;
    let result = s.params.clone();
    s.history.push(HistoryEntry {
        kind: EventKind::Undo,
        utterance: None,
        summary: None,
        result,
    });
    Ok(Json(
        json!({ "sourceParams": s.params, "shape": shape_json(&s.params)? }),
    ))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct EncodeRequest {
    utterance: String,
}

async fn encode_text(State(state): State<AppState>, body: Bytes) -> ApiResult {
    let req: EncodeRequest = parse_body(&body)?;
    let code = state.models.model.encode_text(&req.utterance)?;
    Ok(Json(json!({
        "embedding": code.embedding,
        "votingWeights": code.weights,
        "truncated": code.truncated,
    })))
}

async fn model_info(State(state): State<AppState>) -> ApiResult {
    let m = &state.models.model;
    Ok(Json(json!({
        "checkpointHash": state.models.checkpoint_hash,
        "k": m.config.experts,
        "jointDim": m.config.joint_dim,
        "miningStrategy": m.config.mining,
        "lambda": m.config.lambda,
        "valAccuracy": m.meta.best_val_accuracy,
        "temperature": m.temperature(),
    })))
}

async fn health() -> Json<Value> {
    Json(json!({ "status": "ok" }))
}

/// All endpoints, with CORS for `cors_origin` (any origin when `None`).
pub fn router(state: AppState, cors_origin: Option<&str>) -> Result<Router, shapeedit_core::Error> {
    let origin = match cors_origin {
        Some(o) => AllowOrigin::exact(
            HeaderValue::from_str(o)
                .map_err(|e| shapeedit_core::Error::Argument(format!("bad origin: {e}")))?,
        ),
        None => AllowOrigin::from(Any),
    };
    let cors = CorsLayer::new()
        .allow_origin(origin)
        .allow_methods(Any)
        .allow_headers(Any);
    Ok(Router::new()
        .route("/sessions", post(create_session))
        .route("/sessions/{id}", get(get_session))
        .route("/sessions/{id}/edit", post(edit_session))
        .route("/sessions/{id}/accept", post(accept))
        .route("/sessions/{id}/undo", post(undo))
        .route("/text/encode", post(encode_text))
        .route("/model/info", get(model_info))
        .route("/health", get(health))
        .layer(cors)
        .with_state(state))
}

pub async fn serve(
    state: AppState,
    port: u16,
    cors_origin: Option<String>,
) -> shapeedit_core::Result<()> {
    let app = router(state, cors_origin.as_deref())?;
    let addr = SocketAddr::from(([127, 0, 0, 1], port));
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!("listening on http://{addr}");
    axum::serve(listener, app).await?;
    Ok(())
}
