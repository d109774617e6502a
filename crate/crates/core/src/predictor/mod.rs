//! Blind-trace prediction: resolve each encrypted sub-trace to a resource,
//! then extract the set of visited pages from the resolved sequence.

mod extract;
mod steps;

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::profiler::{Instance, SnoopyDatabase};
use crate::sim::{ContextHint, EncryptedTrace};
use crate::site::{PageId, ResourceId};

pub use extract::{extract_webpages, Extraction, PageMatch};
pub use steps::{
    adjust_cookie_variation, candidate_lookup, prune_reachability, select_resource, Adjusted,
    AdjustInput,
};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FValue {
    pub index: usize,
    pub f: u64,
    pub group_key: u64,
    pub truncated: bool,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContextHints {
    /// Estimated (os, browser) of the victim.
    pub bo_hint: Option<ContextHint>,
    pub cache_assumed: Option<bool>,
    /// Whether the victim sends cookies. Unknown means both are considered.
    #[serde(default)]
    pub cookies_assumed: Option<bool>,
}

impl ContextHints {
    /// Hints taken from the trace's own context annotation.
    pub fn from_trace(trace: &EncryptedTrace) -> Self {
        Self {
            bo_hint: trace.context_hint.clone(),
            ..Self::default()
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CandidateScore {
    pub resource_id: ResourceId,
    pub freq: u32,
    pub adjusted_sig: u64,
    /// `adjusted_sig - f`.
    pub diff: i64,
    /// `freq / |diff|`; absent for exact matches.
    pub weight: Option<f64>,
}

impl CandidateScore {
    pub fn is_exact(&self) -> bool {
        self.diff == 0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResourceStatus {
    Identified,
    UnidentifiedIncomplete,
    UnidentifiedConflict,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PredictedResource {
    pub index: usize,
    pub f: u64,
    pub status: ResourceStatus,
    pub resource: Option<ResourceId>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StepDiagnostics {
    pub index: usize,
    pub window: (u64, u64),
    pub relevant: Vec<Instance>,
    pub reachable: Vec<Instance>,
    pub eliminated: Vec<ResourceId>,
    pub scores: Vec<CandidateScore>,
    pub notes: Vec<String>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PredictionResult {
    pub predicted_resources: Vec<PredictedResource>,
    pub predicted_webpages: BTreeSet<PageId>,
    pub diagnostics: Vec<StepDiagnostics>,
    pub extraction: Extraction,
}

impl PredictionResult {
    /// The single page best supported by the trace: the extracted page with
    /// the most matched resources.
    pub fn top_page(&self) -> Option<&PageId> {
        self.extraction
            .matches
            .iter()
            .max_by(|a, b| {
                a.positions
                    .len()
                    .cmp(&b.positions.len())
                    .then_with(|| b.page.cmp(&a.page))
            })
            .map(|m| &m.page)
    }

    pub fn count(&self, status: ResourceStatus) -> usize {
        self.predicted_resources.iter().filter(|p| p.status == status).count()
    }
}

/// One entry per sub-trace, ordered by stream position.
pub fn split_trace(trace: &EncryptedTrace) -> Vec<FValue> {
    let mut subs: Vec<_> = trace.sub_traces.iter().collect();
    subs.sort_by_key(|s| s.first_byte_index);
    subs.into_iter()
        .enumerate()
        .map(|(index, s)| FValue {
            index,
            f: s.f_value(),
            group_key: s.group_key,
            truncated: s.truncated,
        })
        .collect()
}

/// Resolves every sub-trace in order, threading the visited-page set.
pub fn predict_resources(
    trace: &EncryptedTrace,
    db: &SnoopyDatabase,
    hints: &ContextHints,
) -> (Vec<PredictedResource>, Vec<StepDiagnostics>) {
    let site = db.website();
    let mut visited: BTreeSet<PageId> = BTreeSet::new();
    let mut out = Vec::new();
    let mut diags = Vec::new();
    for fv in split_trace(trace) {
        let mut diag = StepDiagnostics {
            index: fv.index,
            ..StepDiagnostics::default()
        };
        if fv.truncated || fv.f == 0 {
            diag.notes.push("incomplete download; not resolved".into());
            out.push(PredictedResource {
                index: fv.index,
                f: fv.f,
                status: ResourceStatus::UnidentifiedIncomplete,
                resource: None,
            });
            diags.push(diag);
            continue;
        }
        diag.window = db.search_window(fv.f);
        diag.relevant = candidate_lookup(fv.f, db);
        let reachable_pages = site.reachable_pages(&visited).expect("visited pages come from the site");
        diag.reachable = prune_reachability(&diag.relevant, &visited, db)
            .expect("visited pages come from the site");
        let adjusted = adjust_cookie_variation(
            &diag.reachable,
            &AdjustInput {
                index: fv.index,
                f: fv.f,
                visited: &visited,
                hints,
            },
            db,
        );
        diag.eliminated = adjusted.eliminated;
        diag.notes.extend(adjusted.notes);
        diag.scores = adjusted.scores;
        let chosen = select_resource(&diag.scores).map(|c| c.resource_id.clone());
        match chosen {
            Some(r) => {
                visited.extend(
                    site.pages_containing(&r)
                        .filter(|p| reachable_pages.contains(*p))
                        .cloned(),
                );
                out.push(PredictedResource {
                    index: fv.index,
                    f: fv.f,
                    status: ResourceStatus::Identified,
                    resource: Some(r),
                });
            }
            None => {
                diag.notes.push("no candidate survived".into());
                out.push(PredictedResource {
                    index: fv.index,
                    f: fv.f,
                    status: ResourceStatus::UnidentifiedConflict,
                    resource: None,
                });
            }
        }
        diags.push(diag);
    }
    (out, diags)
}

/// Resource resolution followed by page extraction.
pub fn predict(trace: &EncryptedTrace, db: &SnoopyDatabase, hints: &ContextHints) -> PredictionResult {
    let (predicted_resources, diagnostics) = predict_resources(trace, db, hints);
    let extraction = extract_webpages(&predicted_resources, db, hints);
    PredictionResult {
        predicted_webpages: extraction.pages(),
        predicted_resources,
        diagnostics,
        extraction,
    }
}
