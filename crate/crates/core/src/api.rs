//! Request and response bodies shared by the HTTP service and its client.

use serde::{Deserialize, Serialize};

use crate::eval::{EnsembleSpec, ExperimentSpec, StabilityFeature};
use crate::persist::TraceRecord;
use crate::predictor::{ContextHints, PredictionResult};
use crate::profiler::{ProfileVariant, SnoopyDatabase};
use crate::sim::{BrowsingContext, EncoderParams, EncryptedTrace, GroundTruth};
use crate::site::{Corpus, CountRange, Website};

/// Machine-readable error class carried by every failed response.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorCategory {
    Usage,
    Io,
    Parse,
    Budget,
    InvalidInput,
    Transport,
    Internal,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ApiError {
    pub category: ErrorCategory,
    pub message: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Health {
    pub status: String,
    pub version: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IngestRequest {
    pub corpus: Corpus,
    pub base_url: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimulateRequest {
    pub website: Website,
    pub context: BrowsingContext,
    pub sessions: usize,
    pub pages_per_session: CountRange,
    #[serde(default)]
    pub params: EncoderParams,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProfileRequest {
    pub website: Website,
    pub context: BrowsingContext,
    pub samples_per_page: u32,
    pub variants: Vec<ProfileVariant>,
    pub budget: u64,
    #[serde(default)]
    pub params: EncoderParams,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PredictRequest {
    pub database: SnoopyDatabase,
    pub traces: Vec<EncryptedTrace>,
    /// Applied to every trace; a missing bo hint is filled from the trace's
    /// own annotation when `use_trace_hint` is set.
    pub hints: ContextHints,
    #[serde(default = "yes")]
    pub use_trace_hint: bool,
}

fn yes() -> bool {
    true
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentRequest {
    pub spec: ExperimentSpec,
    pub website: Website,
    #[serde(default)]
    pub params: EncoderParams,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoreRequest {
    pub predictions: Vec<PredictionResult>,
    pub truths: Vec<GroundTruth>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnsembleRequest {
    pub website: Website,
    pub spec: EnsembleSpec,
    #[serde(default)]
    pub params: EncoderParams,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StabilityRequest {
    pub website: Website,
    pub contexts: Vec<BrowsingContext>,
    pub feature: StabilityFeature,
    #[serde(default)]
    pub params: EncoderParams,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimulateResponse {
    pub records: Vec<TraceRecord>,
}
