//! Deterministic encrypted-traffic simulator.
//!
//! A resource is encoded as a list of TLS record sizes. The payload is the
//! plaintext plus response headers plus optional tracking and session cookie
//! bytes, pushed through an affine ciphertext expansion and segmented into
//! records of at most the OS's maximum record payload.

mod network;
mod session;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::site::{PageId, Resource, ResourceId};

pub use network::perturb_network;
pub use session::{
    sample_session_plan, simulate_batch, simulate_session, SimulatedSession, MAX_SESSION_PAGES,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("unknown operating system `{0}`")]
    UnknownOs(String),
    #[error("no user agent configured for ({os}, {browser})")]
    UnknownUserAgent { os: String, browser: String },
    #[error("invalid browsing context: {0}")]
    InvalidContext(String),
    #[error("invalid encoder parameters: {0}")]
    InvalidParams(String),
    #[error("invalid session plan: {0}")]
    InvalidPlan(String),
    #[error("plan references unknown page `{0}`")]
    UnknownPage(PageId),
    #[error("no session walk possible: {0}")]
    WalkInfeasible(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DelayRange {
    pub min: f64,
    pub max: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetworkProfile {
    pub added_delay_ms: DelayRange,
    pub drop_probability: f64,
    /// Dropped records are retransmitted, so record sizes survive intact.
    pub retransmit: bool,
}

impl Default for NetworkProfile {
    fn default() -> Self {
        Self {
            added_delay_ms: DelayRange { min: 0.0, max: 0.0 },
            drop_probability: 0.0,
            retransmit: true,
        }
    }
}

impl NetworkProfile {
    pub fn lossy(drop_probability: f64) -> Self {
        Self {
            drop_probability,
            retransmit: false,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let d = self.added_delay_ms;
        if !(0.0..=1.0).contains(&self.drop_probability) {
            return Err(SimError::InvalidContext("drop_probability outside [0, 1]".into()));
        }
        if !(d.min.is_finite() && d.max.is_finite() && 0.0 <= d.min && d.min <= d.max) {
            return Err(SimError::InvalidContext("delay range needs 0 <= min <= max".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BrowsingContext {
    pub os: String,
    pub browser: String,
    pub cache_enabled: bool,
    pub cookies_allowed: bool,
    pub tab_count: u32,
    #[serde(default)]
    pub network: NetworkProfile,
}

impl BrowsingContext {
    pub fn new(os: &str, browser: &str) -> Self {
        Self {
            os: os.to_owned(),
            browser: browser.to_owned(),
            cache_enabled: false,
            cookies_allowed: false,
            tab_count: 1,
            network: NetworkProfile::default(),
        }
    }

    pub fn with_cache(mut self, cache_enabled: bool, cookies_allowed: bool) -> Self {
        self.cache_enabled = cache_enabled;
        self.cookies_allowed = cookies_allowed;
        self
    }

    pub fn with_tabs(mut self, tab_count: u32) -> Self {
        self.tab_count = tab_count;
        self
    }

    pub fn with_network(mut self, network: NetworkProfile) -> Self {
        self.network = network;
        self
    }

    pub fn validate(&self, params: &EncoderParams) -> Result<(), SimError> {
        if self.tab_count < 1 {
            return Err(SimError::InvalidContext("tab_count must be at least 1".into()));
        }
        params.max_record_payload(&self.os)?;
        params.bo(&self.os, &self.browser)?;
        self.network.validate()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Affine {
    pub a: f64,
    pub b: f64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct UserAgent {
    pub os: String,
    pub browser: String,
    /// Browser/OS identifier string carried in the session cookie.
    pub bo: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EncoderParams {
    pub record_overhead: u64,
    pub response_header_base: u64,
    pub session_cookie_base: u64,
    pub ciphertext_expansion: Affine,
    /// Maximum record payload per OS.
    pub operating_systems: BTreeMap<String, u64>,
    pub user_agents: Vec<UserAgent>,
}

impl Default for EncoderParams {
    fn default() -> Self {
        let ua = |os: &str, browser: &str, bo: &str| UserAgent {
            os: os.into(),
            browser: browser.into(),
            bo: bo.into(),
        };
        Self {
            record_overhead: 21,
            response_header_base: 180,
            session_cookie_base: 60,
            ciphertext_expansion: Affine { a: 1.0, b: 0.0 },
            operating_systems: BTreeMap::from([("os_a".into(), 16384), ("os_b".into(), 8192)]),
            user_agents: vec![
                ua(
                    "os_a",
                    "browser_a",
                    "Mozilla/5.0 (X11; Ubuntu; Linux x86_64; rv:121.0) Gecko/20100101 Firefox/121.0",
                ),
                ua(
                    "os_a",
                    "browser_b",
                    "Mozilla/5.0 (X11; Linux x86_64) AppleWebKit/537.36 (KHTML, like Gecko) Chrome/120.0.0.0 Safari/537.36",
                ),
                ua(
                    "os_b",
                    "browser_a",
                    "Mozilla/5.0 (Windows NT 10.0; Win64; x64; rv:121.0) Gecko/20100101 Firefox/121.0",
                ),
                ua(
                    "os_b",
                    "browser_b",
                    "Mozilla/5.0 (Windows NT 10.0; Win64; x64) AppleWebKit/537.36 (KHTML, like Gecko) Chrome/120.0.0.0 Safari/537.36 Edg/120.0",
                ),
            ],
        }
    }
}

impl EncoderParams {
    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: &str| Err(SimError::InvalidParams(m.to_owned()));
        if self.record_overhead < 1 {
            return bad("record_overhead must be at least 1");
        }
        let Affine { a, b } = self.ciphertext_expansion;
        if !(a.is_finite() && b.is_finite() && a >= 1.0 && b >= 0.0) {
            return bad("ciphertext expansion needs a >= 1 and b >= 0");
        }
        if self.operating_systems.is_empty() {
            return bad("at least one operating system is required");
        }
        for (os, m) in &self.operating_systems {
            if !(256..=16384).contains(m) {
                return Err(SimError::InvalidParams(format!(
                    "max record payload for `{os}` outside [256, 16384]"
                )));
            }
        }
        for ua in &self.user_agents {
            if !self.operating_systems.contains_key(&ua.os) {
                return Err(SimError::UnknownOs(ua.os.clone()));
            }
        }
        Ok(())
    }

    pub fn max_record_payload(&self, os: &str) -> Result<u64, SimError> {
        self.operating_systems
            .get(os)
            .copied()
            .ok_or_else(|| SimError::UnknownOs(os.to_owned()))
    }

    pub fn bo(&self, os: &str, browser: &str) -> Result<&str, SimError> {
        self.user_agents
            .iter()
            .find(|u| u.os == os && u.browser == browser)
            .map(|u| u.bo.as_str())
            .ok_or_else(|| SimError::UnknownUserAgent {
                os: os.to_owned(),
                browser: browser.to_owned(),
            })
    }

    /// Plaintext bytes before expansion: size, headers and cookie bytes.
    pub fn apply_expansion(&self, plaintext: u64) -> u64 {
        let Affine { a, b } = self.ciphertext_expansion;
        (a * plaintext as f64 + b).round() as u64
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubTrace {
    /// Transport grouping key shared by all records of one resource.
    pub group_key: u64,
    pub record_sizes: Vec<u64>,
    /// Byte offset of the first record in the captured stream.
    pub first_byte_index: u64,
    #[serde(default)]
    pub truncated: bool,
}

impl SubTrace {
    /// Encrypted size: the sum of record sizes.
    pub fn f_value(&self) -> u64 {
        self.record_sizes.iter().sum()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContextHint {
    pub os: String,
    pub browser: String,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncryptedTrace {
    pub sub_traces: Vec<SubTrace>,
    #[serde(default)]
    pub context_hint: Option<ContextHint>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionPlan {
    pub tabs: Vec<Vec<PageId>>,
    pub interleaving_seed: u64,
}

impl SessionPlan {
    pub fn total_pages(&self) -> usize {
        self.tabs.iter().map(Vec::len).sum()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TruthEntry {
    pub resource: ResourceId,
    pub page: PageId,
    pub tab: u32,
    pub downloaded: bool,
    /// Index of the emitted sub-trace, absent when suppressed by the cache.
    pub sub_trace_index: Option<usize>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub entries: Vec<TruthEntry>,
    pub session_pages: std::collections::BTreeSet<PageId>,
}

impl GroundTruth {
    /// Marks resources whose sub-trace lost records as not downloaded.
    pub fn apply_truncation(&mut self, trace: &EncryptedTrace) {
        for e in &mut self.entries {
            if let Some(i) = e.sub_trace_index {
                if trace.sub_traces.get(i).is_some_and(|s| s.truncated) {
                    e.downloaded = false;
                }
            }
        }
    }

    /// Ground-truth resource for each sub-trace index.
    pub fn resource_at(&self, index: usize) -> Option<&TruthEntry> {
        self.entries.iter().find(|e| e.sub_trace_index == Some(index))
    }
}

/// Splits an encrypted payload into record sizes.
pub fn segment(payload: u64, max_record_payload: u64, overhead: u64) -> Vec<u64> {
    if payload == 0 {
        return Vec::new();
    }
    let n = payload.div_ceil(max_record_payload);
    let mut out = vec![max_record_payload + overhead; n as usize];
    out[n as usize - 1] = payload - (n - 1) * max_record_payload + overhead;
    out
}

/// Encrypted payload of `resource` before segmentation.
pub fn encoded_payload(
    resource: &Resource,
    context: &BrowsingContext,
    params: &EncoderParams,
    is_first_of_session: bool,
    prev_url: Option<&str>,
) -> Result<u64, SimError> {
    let tc = match prev_url {
        Some(url) if resource.carries_tracking_cookie && context.cookies_allowed => url.len() as u64,
        _ => 0,
    };
    let sc = if context.cookies_allowed && is_first_of_session {
        params.session_cookie_base + params.bo(&context.os, &context.browser)?.len() as u64
    } else {
        0
    };
    Ok(params.apply_expansion(resource.plaintext_size + params.response_header_base + tc + sc))
}

/// Encodes one resource download. Group key and stream offset are left at
/// zero; [`simulate_session`] assigns them.
pub fn encode_resource(
    resource: &Resource,
    context: &BrowsingContext,
    params: &EncoderParams,
    is_first_of_session: bool,
    prev_url: Option<&str>,
) -> Result<SubTrace, SimError> {
    let payload = encoded_payload(resource, context, params, is_first_of_session, prev_url)?;
    let m = params.max_record_payload(&context.os)?;
    Ok(SubTrace {
        group_key: 0,
        record_sizes: segment(payload, m, params.record_overhead),
        first_byte_index: 0,
        truncated: false,
    })
}
