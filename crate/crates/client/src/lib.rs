//! Thin async client for the snoopy HTTP service.

use serde::de::DeserializeOwned;
use serde::Serialize;
use thiserror::Error;
use url::Url;

use snoopy_core::api::{
    ApiError, EnsembleRequest, ErrorCategory, ExperimentRequest, Health, IngestRequest,
    PredictRequest, ProfileRequest, ScoreRequest, SimulateRequest, SimulateResponse,
    StabilityRequest,
};
use snoopy_core::eval::{AccuracyReport, EnsembleStudyReport, ExperimentReport, StabilityTable};
use snoopy_core::predictor::PredictionResult;
use snoopy_core::profiler::SnoopyDatabase;
use snoopy_core::site::{Ingested, SiteSpec, Website};

#[derive(Debug, Error)]
pub enum ClientError {
    #[error("invalid server url: {0}")]
    BadUrl(String),
    #[error("transport error: {0}")]
    Transport(String),
    /// The service rejected the request.
    #[error("{}", .0.message)]
    Api(ApiError),
    #[error("undecodable response ({status}): {message}")]
    Decode { status: u16, message: String },
}

impl ClientError {
    pub fn category(&self) -> ErrorCategory {
        match self {
            Self::Api(e) => e.category,
            Self::BadUrl(_) => ErrorCategory::Usage,
            Self::Transport(_) | Self::Decode { .. } => ErrorCategory::Transport,
        }
    }
}

#[derive(Clone, Debug)]
pub struct SnoopyClient {
    base: Url,
    http: reqwest::Client,
}

impl SnoopyClient {
    pub fn new(base: &str) -> Result<Self, ClientError> {
        let mut base = Url::parse(base).map_err(|e| ClientError::BadUrl(format!("{base}: {e}")))?;
        if !base.path().ends_with('/') {
            base.set_path(&format!("{}/", base.path()));
        }
        Ok(Self {
            base,
            http: reqwest::Client::new(),
        })
    }

    pub fn base_url(&self) -> &Url {
        &self.base
    }

    fn url(&self, path: &str) -> Result<Url, ClientError> {
        self.base.join(path).map_err(|e| ClientError::BadUrl(e.to_string()))
    }

    async fn decode<T: DeserializeOwned>(resp: reqwest::Response) -> Result<T, ClientError> {
        let status = resp.status();
        let bytes = resp.bytes().await.map_err(|e| ClientError::Transport(e.to_string()))?;
        if status.is_success() {
            return serde_json::from_slice(&bytes).map_err(|e| ClientError::Decode {
                status: status.as_u16(),
                message: e.to_string(),
            });
        }
        match serde_json::from_slice::<ApiError>(&bytes) {
            Ok(e) => Err(ClientError::Api(e)),
            // Extractor rejections arrive as plain text.
            Err(_) if status.is_client_error() => Err(ClientError::Api(ApiError {
                category: ErrorCategory::InvalidInput,
                message: String::from_utf8_lossy(&bytes).into_owned(),
            })),
            Err(_) => Err(ClientError::Decode {
                status: status.as_u16(),
                message: String::from_utf8_lossy(&bytes).into_owned(),
            }),
        }
    }

    async fn post<B: Serialize, T: DeserializeOwned>(&self, path: &str, body: &B) -> Result<T, ClientError> {
        let resp = self
            .http
            .post(self.url(path)?)
            .json(body)
            .send()
            .await
            .map_err(|e| ClientError::Transport(e.to_string()))?;
        Self::decode(resp).await
    }

    pub async fn health(&self) -> Result<Health, ClientError> {
        let resp = self
            .http
            .get(self.url("health")?)
            .send()
            .await
            .map_err(|e| ClientError::Transport(e.to_string()))?;
        Self::decode(resp).await
    }

    pub async fn generate_site(&self, spec: &SiteSpec) -> Result<Website, ClientError> {
        self.post("v1/sites/generate", spec).await
    }

    pub async fn ingest(&self, req: &IngestRequest) -> Result<Ingested, ClientError> {
        self.post("v1/sites/ingest", req).await
    }

    pub async fn simulate(&self, req: &SimulateRequest) -> Result<SimulateResponse, ClientError> {
        self.post("v1/simulate", req).await
    }

    pub async fn profile(&self, req: &ProfileRequest) -> Result<SnoopyDatabase, ClientError> {
        self.post("v1/profile", req).await
    }

    pub async fn predict(&self, req: &PredictRequest) -> Result<Vec<PredictionResult>, ClientError> {
        self.post("v1/predict", req).await
    }

    pub async fn run_experiment(&self, req: &ExperimentRequest) -> Result<ExperimentReport, ClientError> {
        self.post("v1/evaluate/experiment", req).await
    }

    pub async fn score(&self, req: &ScoreRequest) -> Result<AccuracyReport, ClientError> {
        self.post("v1/evaluate/score", req).await
    }

    pub async fn ensemble(&self, req: &EnsembleRequest) -> Result<EnsembleStudyReport, ClientError> {
        self.post("v1/ensemble", req).await
    }

    pub async fn stability(&self, req: &StabilityRequest) -> Result<StabilityTable, ClientError> {
        self.post("v1/stability", req).await
    }
}
