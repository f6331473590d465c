//! HTTP service over one loaded checkpoint.
//!
//! `GET /v1/schema`, `GET /v1/health` and `POST /v1/manipulate`. Images
//! travel as base64 PNG; every error body is `{error_code, message, field?}`.

use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::{Arc, OnceLock};
use std::time::{Duration, Instant};

use axum::body::{to_bytes, Body};
use axum::extract::State;
use axum::http::{HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use dlgan_core::infer::Manipulator;
use dlgan_core::label::{LabelGroup, LabelVector};
use dlgan_core::model::ModelBundle;
use dlgan_core::{Error as CoreError, Tensor};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use tokio::sync::Semaphore;
use tower_http::cors::{AllowOrigin, CorsLayer};

use crate::error::{AppError, Result};
use crate::imageio::{batch, decode_png, encode_png, unbatch};

/// Upper bound on `n_samples` per request.
pub const MAX_SAMPLES: usize = 64;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ServiceConfig {
    pub bind: SocketAddr,
    pub checkpoint: PathBuf,
    pub max_body_bytes: usize,
    pub request_timeout_s: u64,
    /// Concurrent forward passes.
    pub workers: usize,
    /// Allowed browser origin; `None` allows any.
    pub cors_origin: Option<String>,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            bind: SocketAddr::from(([127, 0, 0, 1], 8080)),
            checkpoint: PathBuf::new(),
            max_body_bytes: 4 << 20,
            request_timeout_s: 30,
            workers: 2,
            cors_origin: None,
        }
    }
}

/// Shared state: the model snapshot once loaded, plus limits.
pub struct AppState {
    model: OnceLock<Arc<ModelBundle<f32>>>,
    started: Instant,
    workers: Semaphore,
    timeout: Duration,
    max_body_bytes: usize,
}

impl AppState {
    /// State with no model yet; requests get 503 until [`AppState::set_model`].
    pub fn loading(cfg: &ServiceConfig) -> Arc<Self> {
        Arc::new(Self {
            model: OnceLock::new(),
            started: Instant::now(),
            workers: Semaphore::new(cfg.workers.max(1)),
            timeout: Duration::from_secs(cfg.request_timeout_s.max(1)),
            max_body_bytes: cfg.max_body_bytes,
        })
    }

    pub fn loaded(bundle: ModelBundle<f32>, cfg: &ServiceConfig) -> Arc<Self> {
        let s = Self::loading(cfg);
        s.set_model(bundle);
        s
    }

    /// Installs the model; later calls are ignored.
    pub fn set_model(&self, bundle: ModelBundle<f32>) {
        let _ = self.model.set(Arc::new(bundle));
    }

    fn model(&self) -> std::result::Result<Arc<ModelBundle<f32>>, ApiError> {
        self.model.get().cloned().ok_or_else(|| ApiError::new(StatusCode::SERVICE_UNAVAILABLE, "not_loaded", "model is still loading"))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error_code: String,
    pub message: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub field: Option<String>,
}

#[derive(Debug)]
pub struct ApiError {
    pub status: StatusCode,
    pub body: ErrorBody,
}

impl ApiError {
    fn new(status: StatusCode, code: &str, message: impl Into<String>) -> Self {
        Self { status, body: ErrorBody { error_code: code.into(), message: message.into(), field: None } }
    }

    fn field(mut self, field: &str) -> Self {
        self.body.field = Some(field.into());
        self
    }

    fn missing(field: &str, mode: Mode) -> Self {
        Self::new(StatusCode::UNPROCESSABLE_ENTITY, "missing_field", format!("mode {} requires `{field}`", mode.name()))
            .field(field)
    }

    fn bad(code: &str, message: impl Into<String>, field: &str) -> Self {
        Self::new(StatusCode::BAD_REQUEST, code, message).field(field)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self.body)).into_response()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Interpolate,
    LabelOnly,
    Hybrid,
    Stochastic,
}

impl Mode {
    fn name(self) -> &'static str {
        match self {
            Mode::Interpolate => "interpolate",
            Mode::LabelOnly => "label_only",
            Mode::Hybrid => "hybrid",
            Mode::Stochastic => "stochastic",
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManipulateRequest {
    pub mode: Option<Mode>,
    pub image_b64: Option<String>,
    pub label_bits: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference_b64: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference_a_b64: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference_b_b64: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_list: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_samples: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResponseMeta {
    pub mode: Mode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_list: Option<Vec<f64>>,
    pub seed: u64,
    pub checkpoint_id: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManipulateResponse {
    pub images_b64: Vec<String>,
    pub meta: ResponseMeta,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SchemaResponse {
    pub groups: Vec<LabelGroup>,
    pub total_bits: usize,
    pub image_shape: [usize; 3],
    pub checkpoint_id: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HealthResponse {
    pub status: String,
    pub checkpoint_id: String,
    pub uptime_s: f64,
}

async fn schema(State(state): State<Arc<AppState>>) -> std::result::Result<Json<SchemaResponse>, ApiError> {
    let m = state.model()?;
    Ok(Json(SchemaResponse {
        groups: m.schema.groups().to_vec(),
        total_bits: m.schema.total_bits(),
        image_shape: m.image_shape(),
        checkpoint_id: m.checkpoint_id.clone(),
    }))
}

async fn health(State(state): State<Arc<AppState>>) -> std::result::Result<Json<HealthResponse>, ApiError> {
    let m = state.model()?;
    Ok(Json(HealthResponse {
        status: "ok".into(),
        checkpoint_id: m.checkpoint_id.clone(),
        uptime_s: state.started.elapsed().as_secs_f64(),
    }))
}

/// Fully checked request, ready for the model.
struct Job {
    mode: Mode,
    x: Tensor<f32>,
    label: LabelVector,
    reference: Option<Tensor<f32>>,
    reference_a: Option<Tensor<f32>>,
    reference_b: Option<Tensor<f32>>,
    t_list: Option<Vec<f64>>,
    n_samples: usize,
    seed: u64,
}

fn decode_image(b64: &str, field: &str, bundle: &ModelBundle<f32>) -> std::result::Result<Tensor<f32>, ApiError> {
    let bytes = STANDARD.decode(b64.trim()).map_err(|e| ApiError::bad("invalid_image", format!("`{field}` is not base64: {e}"), field))?;
    let img = decode_png(&bytes).map_err(|e| ApiError::bad("invalid_image", format!("`{field}`: {e}"), field))?;
    let [h, w, _] = bundle.image_shape();
    let s = img.shape();
    if s[1] != h || s[2] != w {
        return Err(ApiError::bad(
            "wrong_image_size",
            format!("`{field}` is {}x{}, the model takes {h}x{w}", s[2], s[1]),
            field,
        ));
    }
    Ok(batch(&[&img]).expect("one image"))
}

fn validate(req: ManipulateRequest, bundle: &ModelBundle<f32>) -> std::result::Result<Job, ApiError> {
    let mode = req.mode.ok_or_else(|| {
        ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "missing_field", "`mode` is required").field("mode")
    })?;
    let image_b64 = req.image_b64.ok_or_else(|| ApiError::missing("image_b64", mode))?;
    let bits = req.label_bits.ok_or_else(|| ApiError::missing("label_bits", mode))?;
    let label = bundle.schema.parse_bits(&bits).map_err(|e| {
        let code = match e {
            CoreError::MalformedLabel { .. } => "malformed_label",
            _ => "invalid_label",
        };
        ApiError::bad(code, e.to_string(), "label_bits")
    })?;
    let x = decode_image(&image_b64, "image_b64", bundle)?;
    let need = |v: Option<String>, field: &str| -> std::result::Result<Tensor<f32>, ApiError> {
        decode_image(&v.ok_or_else(|| ApiError::missing(field, mode))?, field, bundle)
    };
    let mut job = Job {
        mode,
        x,
        label,
        reference: None,
        reference_a: None,
        reference_b: None,
        t_list: None,
        n_samples: 1,
        seed: req.seed.unwrap_or(0),
    };
    match mode {
        Mode::LabelOnly => {}
        Mode::Hybrid => job.reference = Some(need(req.reference_b64, "reference_b64")?),
        Mode::Interpolate => {
            job.reference_a = Some(need(req.reference_a_b64, "reference_a_b64")?);
            job.reference_b = Some(need(req.reference_b_b64, "reference_b_b64")?);
            let ts = req.t_list.ok_or_else(|| ApiError::missing("t_list", mode))?;
            if ts.is_empty() || ts.len() > MAX_SAMPLES {
                return Err(ApiError::bad("invalid_t_list", format!("`t_list` needs 1 to {MAX_SAMPLES} values"), "t_list"));
            }
            if let Some(t) = ts.iter().find(|t| !(0.0..=1.0).contains(*t)) {
                return Err(ApiError::bad("invalid_t_list", format!("t = {t} is outside [0, 1]"), "t_list"));
            }
            job.t_list = Some(ts);
        }
        Mode::Stochastic => {
            let n = req.n_samples.unwrap_or(1);
            if n == 0 || n > MAX_SAMPLES {
                return Err(ApiError::bad(
                    "invalid_n_samples",
                    format!("`n_samples` must be between 1 and {MAX_SAMPLES}"),
                    "n_samples",
                ));
            }
            job.n_samples = n;
        }
    }
    Ok(job)
}

fn run_job(bundle: &ModelBundle<f32>, job: &Job) -> Result<Vec<String>> {
    let m = Manipulator::new(bundle);
    let y = [job.label.clone()];
    let outs: Vec<Tensor<f32>> = match job.mode {
        Mode::LabelOnly => vec![m.label_only(&job.x, &y)?],
        Mode::Hybrid => vec![m.hybrid(&job.x, job.reference.as_ref().expect("validated"), &y)?],
        Mode::Interpolate => m.interpolate(
            &job.x,
            job.reference_a.as_ref().expect("validated"),
            job.reference_b.as_ref().expect("validated"),
            job.t_list.as_deref().expect("validated"),
            &y,
        )?,
        Mode::Stochastic => m.stochastic(&job.x, &y, job.n_samples, &mut ChaCha8Rng::seed_from_u64(job.seed))?,
    };
    outs.iter().flat_map(unbatch).map(|img| Ok(STANDARD.encode(encode_png(&img)?))).collect()
}

async fn manipulate(State(state): State<Arc<AppState>>, body: Body) -> Response {
    match manipulate_inner(state, body).await {
        Ok(r) => Json(r).into_response(),
        Err(e) => e.into_response(),
    }
}

async fn manipulate_inner(state: Arc<AppState>, body: Body) -> std::result::Result<ManipulateResponse, ApiError> {
    let bundle = state.model()?;
    let bytes = to_bytes(body, state.max_body_bytes).await.map_err(|_| {
        ApiError::new(
            StatusCode::PAYLOAD_TOO_LARGE,
            "payload_too_large",
            format!("request body exceeds {} bytes", state.max_body_bytes),
        )
    })?;
    let req: ManipulateRequest = serde_json::from_slice(&bytes)
        .map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, "invalid_json", e.to_string()))?;
    let job = validate(req, &bundle)?;
    let _permit = state.workers.acquire().await.expect("semaphore never closes");
    let work = {
        let bundle = bundle.clone();
        tokio::task::spawn_blocking(move || run_job(&bundle, &job).map(|imgs| (imgs, job)))
    };
    let (images_b64, job) = tokio::time::timeout(state.timeout, work)
        .await
        .map_err(|_| ApiError::new(StatusCode::GATEWAY_TIMEOUT, "timeout", "request timed out"))?
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string()))?
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string()))?;
    Ok(ManipulateResponse {
        images_b64,
        meta: ResponseMeta { mode: job.mode, t_list: job.t_list, seed: job.seed, checkpoint_id: bundle.checkpoint_id.clone() },
    })
}

async fn not_found() -> ApiError {
    ApiError::new(StatusCode::NOT_FOUND, "not_found", "no such endpoint")
}

pub fn router(state: Arc<AppState>, cors_origin: Option<&str>) -> Result<Router> {
    let origin = match cors_origin {
        None => AllowOrigin::any(),
        Some(o) => AllowOrigin::exact(
            HeaderValue::from_str(o).map_err(|_| AppError::Usage(format!("invalid CORS origin `{o}`")))?,
        ),
    };
    let cors = CorsLayer::new().allow_origin(origin).allow_methods(tower_http::cors::Any).allow_headers(tower_http::cors::Any);
    Ok(Router::new()
        .route("/v1/schema", get(schema))
        .route("/v1/health", get(health))
        .route("/v1/manipulate", post(manipulate))
        .fallback(not_found)
        .layer(cors)
        .with_state(state))
}

/// Binds, loads the checkpoint in the background and serves until ctrl-c.
/// A checkpoint that fails to load stops the service with that error.
pub async fn serve(cfg: ServiceConfig, on_ready: impl FnOnce(SocketAddr) + Send) -> Result<()> {
    let state = AppState::loading(&cfg);
    let app = router(state.clone(), cfg.cors_origin.as_deref())?;
    let listener = tokio::net::TcpListener::bind(cfg.bind).await.map_err(|e| AppError::io(cfg.bind.to_string(), e))?;
    let addr = listener.local_addr().map_err(|e| AppError::io(cfg.bind.to_string(), e))?;
    let path = cfg.checkpoint.clone();
    let load = tokio::task::spawn_blocking(move || crate::checkpoint::load(&path));
    let (tx, rx) = tokio::sync::oneshot::channel::<AppError>();
    let loader = {
        let state = state.clone();
        async move {
            match load.await {
                Ok(Ok((bundle, _))) => state.set_model(bundle),
                Ok(Err(e)) => {
                    let _ = tx.send(e);
                }
                Err(e) => {
                    let _ = tx.send(AppError::Checkpoint(e.to_string()));
                }
            }
        }
    };
    tokio::spawn(loader);
    on_ready(addr);
    let (etx, erx) = tokio::sync::oneshot::channel::<AppError>();
    let shutdown = async move {
        tokio::select! {
            _ = tokio::signal::ctrl_c() => {}
            r = rx => if let Ok(e) = r { let _ = etx.send(e); }
        }
    };
    axum::serve(listener, app)
        .with_graceful_shutdown(shutdown)
        .await
        .map_err(|e| AppError::io(cfg.bind.to_string(), e))?;
    match erx.await {
        Ok(e) => Err(e),
        Err(_) => Ok(()),
    }
}
