//! HTTP service exposing the fingerprinting pipeline.
//!
//! Every endpoint takes a JSON body from [`snoopy_core::api`] and answers
//! with a JSON document. Failures come back as an [`ApiError`] with a
//! category the client maps onto exit codes. Compute-heavy work runs on the
//! blocking pool so the reactor stays responsive.

use std::net::SocketAddr;

use axum::extract::DefaultBodyLimit;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use tokio::net::TcpListener;
use tokio::task::JoinHandle;

use snoopy_core::api::{
    ApiError, EnsembleRequest, ErrorCategory, ExperimentRequest, Health, IngestRequest,
    PredictRequest, ProfileRequest, ScoreRequest, SimulateRequest, SimulateResponse,
    StabilityRequest,
};
use snoopy_core::eval::{
    self, AccuracyReport, EnsembleStudyReport, EvalError, ExperimentReport, NearestCentroid,
    StabilityTable,
};
use snoopy_core::persist::TraceRecord;
use snoopy_core::predictor::{self, PredictionResult};
use snoopy_core::profiler::{self, ProfileError, QueryBudget, SnoopyDatabase};
use snoopy_core::sim::{self, SimError};
use snoopy_core::site::{self, Ingested, SiteError, SiteSpec, Website};

/// Request bodies carry whole databases, so the default 2 MiB cap is far
/// too small.
const BODY_LIMIT: usize = 1 << 30;

pub struct AppError {
    status: StatusCode,
    body: ApiError,
}

impl AppError {
    fn new(category: ErrorCategory, message: impl Into<String>) -> Self {
        let status = match category {
            ErrorCategory::Budget => StatusCode::UNPROCESSABLE_ENTITY,
            ErrorCategory::Internal | ErrorCategory::Io | ErrorCategory::Transport => {
                StatusCode::INTERNAL_SERVER_ERROR
            }
            _ => StatusCode::BAD_REQUEST,
        };
        Self {
            status,
            body: ApiError {
                category,
                message: message.into(),
            },
        }
    }
}

impl IntoResponse for AppError {
    fn into_response(self) -> Response {
        (self.status, Json(self.body)).into_response()
    }
}

impl From<SiteError> for AppError {
    fn from(e: SiteError) -> Self {
        Self::new(ErrorCategory::InvalidInput, e.to_string())
    }
}

impl From<SimError> for AppError {
    fn from(e: SimError) -> Self {
        Self::new(ErrorCategory::InvalidInput, e.to_string())
    }
}

impl From<ProfileError> for AppError {
    fn from(e: ProfileError) -> Self {
        let cat = match e {
            ProfileError::BudgetExceeded { .. } => ErrorCategory::Budget,
            _ => ErrorCategory::InvalidInput,
        };
        Self::new(cat, e.to_string())
    }
}

impl From<EvalError> for AppError {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::Profile(p) => p.into(),
            other => Self::new(ErrorCategory::InvalidInput, other.to_string()),
        }
    }
}

type ApiResult<T> = Result<Json<T>, AppError>;

async fn blocking<T, F>(f: F) -> ApiResult<T>
where
    F: FnOnce() -> Result<T, AppError> + Send + 'static,
    T: Send + 'static,
{
    match tokio::task::spawn_blocking(f).await {
        Ok(r) => r.map(Json),
        Err(e) => Err(AppError::new(ErrorCategory::Internal, format!("worker failed: {e}"))),
    }
}

async fn health() -> Json<Health> {
    Json(Health {
        status: "ok".into(),
        version: env!("CARGO_PKG_VERSION").into(),
    })
}

async fn generate(Json(spec): Json<SiteSpec>) -> ApiResult<Website> {
    blocking(move || Ok(site::generate_synthetic_site(&spec)?)).await
}

async fn ingest(Json(req): Json<IngestRequest>) -> ApiResult<Ingested> {
    blocking(move || Ok(site::ingest_corpus(&req.corpus, &req.base_url)?)).await
}

async fn simulate(Json(req): Json<SimulateRequest>) -> ApiResult<SimulateResponse> {
    blocking(move || {
        let batch = sim::simulate_batch(
            &req.website,
            &req.context,
            req.sessions,
            req.pages_per_session,
            &req.params,
            req.seed,
        )?;
        let records = batch
            .into_iter()
            .enumerate()
            .map(|(session, s)| TraceRecord {
                session,
                context: Some(req.context.clone()),
                plan: Some(s.plan),
                trace: s.trace,
                ground_truth: Some(s.truth),
            })
            .collect();
        Ok(SimulateResponse { records })
    })
    .await
}

async fn profile(Json(req): Json<ProfileRequest>) -> ApiResult<SnoopyDatabase> {
    blocking(move || {
        let budget = QueryBudget::new(req.budget);
        let db = profiler::profile_website(
            &req.website,
            &req.context,
            req.samples_per_page,
            &req.variants,
            &budget,
            &req.params,
            req.seed,
        )?;
        tracing::info!(consumed = budget.consumed(), max = budget.max_queries(), "profiled");
        Ok(db)
    })
    .await
}

async fn predict(Json(req): Json<PredictRequest>) -> ApiResult<Vec<PredictionResult>> {
    blocking(move || {
        Ok(req
            .traces
            .iter()
            .map(|t| {
                let mut hints = req.hints.clone();
                if req.use_trace_hint && hints.bo_hint.is_none() {
                    hints.bo_hint = t.context_hint.clone();
                }
                predictor::predict(t, &req.database, &hints)
            })
            .collect())
    })
    .await
}

async fn experiment(Json(req): Json<ExperimentRequest>) -> ApiResult<ExperimentReport> {
    blocking(move || Ok(eval::run_experiment(&req.spec, &req.website, &req.params)?)).await
}

async fn score(Json(req): Json<ScoreRequest>) -> ApiResult<AccuracyReport> {
    blocking(move || Ok(eval::fingerprinting_accuracy(&req.predictions, &req.truths)?)).await
}

async fn ensemble(Json(req): Json<EnsembleRequest>) -> ApiResult<EnsembleStudyReport> {
    blocking(move || {
        let mut clf = NearestCentroid::new();
        Ok(eval::run_ensemble_study(&req.website, &req.spec, &mut clf, &req.params)?)
    })
    .await
}

async fn stability(Json(req): Json<StabilityRequest>) -> ApiResult<StabilityTable> {
    blocking(move || {
        Ok(eval::assess_feature_stability(
            &req.website,
            &req.contexts,
            req.feature,
            &req.params,
            req.seed,
        )?)
    })
    .await
}

pub fn router() -> Router {
    Router::new()
        .route("/health", get(health))
        .route("/v1/sites/generate", post(generate))
        .route("/v1/sites/ingest", post(ingest))
        .route("/v1/simulate", post(simulate))
        .route("/v1/profile", post(profile))
        .route("/v1/predict", post(predict))
        .route("/v1/evaluate/experiment", post(experiment))
        .route("/v1/evaluate/score", post(score))
        .route("/v1/ensemble", post(ensemble))
        .route("/v1/stability", post(stability))
        .layer(DefaultBodyLimit::max(BODY_LIMIT))
}

pub async fn serve(listener: TcpListener) -> std::io::Result<()> {
    axum::serve(listener, router()).await
}

/// Binds an ephemeral loopback port and serves on a background task.
pub async fn spawn_local() -> std::io::Result<(SocketAddr, JoinHandle<std::io::Result<()>>)> {
    let listener = TcpListener::bind(("127.0.0.1", 0)).await?;
    let addr = listener.local_addr()?;
    Ok((addr, tokio::spawn(serve(listener))))
}
