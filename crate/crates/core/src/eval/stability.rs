use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::derive_seed;
use crate::sim::{
    sample_session_plan, simulate_session, BrowsingContext, EncoderParams, EncryptedTrace,
    GroundTruth, SessionPlan, MAX_SESSION_PAGES,
};
use crate::site::Website;

/// Simulated link rate used for transfer times, in bytes per millisecond.
const LINK_BYTES_PER_MS: f64 = 1250.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StabilityFeature {
    ResourceSize,
    BurstPattern,
    Rtdt,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StabilityRow {
    /// Resource id, or burst position for the burst feature.
    pub key: String,
    /// One value per context, in context order.
    pub values: Vec<f64>,
    pub cv: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StabilityTable {
    pub feature: StabilityFeature,
    pub contexts: usize,
    pub rows: Vec<StabilityRow>,
    pub max_cv: f64,
    pub mean_cv: f64,
    /// Number of distinct per-context feature vectors.
    pub distinct_sequences: usize,
}

/// Population standard deviation over the absolute mean; 0 when the mean
/// is 0 or there are fewer than two values.
pub fn coefficient_of_variation(values: &[f64]) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if mean == 0.0 {
        return 0.0;
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    var.sqrt() / mean.abs()
}

/// Splits `walk` into `tabs` contiguous chunks of near-equal length.
fn chunk_walk(walk: &[crate::site::PageId], tabs: usize) -> Vec<Vec<crate::site::PageId>> {
    let mut out = Vec::with_capacity(tabs);
    let mut at = 0;
    for t in 0..tabs {
        let len = walk.len() / tabs + usize::from(t < walk.len() % tabs);
        out.push(walk[at..at + len].to_vec());
        at += len;
    }
    out
}

/// First-download F value per resource.
fn sizes(trace: &EncryptedTrace, truth: &GroundTruth) -> BTreeMap<String, f64> {
    let mut out = BTreeMap::new();
    for e in &truth.entries {
        if let Some(i) = e.sub_trace_index {
            out.entry(e.resource.to_string())
                .or_insert(trace.sub_traces[i].f_value() as f64);
        }
    }
    out
}

/// Transfer time per resource: serialisation of every record plus a delay
/// drawn per record from the context's delay range.
fn transfer_times(
    trace: &EncryptedTrace,
    truth: &GroundTruth,
    ctx: &BrowsingContext,
    seed: u64,
) -> BTreeMap<String, f64> {
    let d = ctx.network.added_delay_ms;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = BTreeMap::new();
    for e in &truth.entries {
        let Some(i) = e.sub_trace_index else { continue };
        let t: f64 = trace.sub_traces[i]
            .record_sizes
            .iter()
            .map(|&r| {
                let jitter = if d.max > d.min { rng.gen_range(d.min..d.max) } else { d.min };
                r as f64 / LINK_BYTES_PER_MS + jitter
            })
            .sum();
        out.entry(e.resource.to_string()).or_insert(t);
    }
    out
}

/// Signed burst sequence. Requests go out until a tab that already has a
/// request in flight asks again, which closes the round; each round adds
/// `+requests` followed by `-records received`.
fn bursts(trace: &EncryptedTrace, truth: &GroundTruth) -> Vec<f64> {
    let mut order: Vec<(usize, u32)> = truth
        .entries
        .iter()
        .filter_map(|e| e.sub_trace_index.map(|i| (i, e.tab)))
        .collect();
    order.sort_unstable();
    let mut out = Vec::new();
    let mut tabs: BTreeSet<u32> = BTreeSet::new();
    let (mut up, mut down) = (0u64, 0u64);
    for (i, tab) in order {
        if !tabs.insert(tab) {
            out.extend([up as f64, -(down as f64)]);
            tabs.clear();
            tabs.insert(tab);
            (up, down) = (0, 0);
        }
        up += 1;
        down += trace.sub_traces[i].record_sizes.len() as u64;
    }
    if up > 0 {
        out.extend([up as f64, -(down as f64)]);
    }
    out
}

/// Replays one fixed walk in every context and measures how much a traffic
/// feature varies across them.
///
/// Each context splits the walk into contiguous tabs and interleaves them
/// with its own seed, so repeated multi-tab contexts differ only in the
/// order of requests.
pub fn assess_feature_stability(
    website: &Website,
    contexts: &[BrowsingContext],
    feature: StabilityFeature,
    params: &EncoderParams,
    seed: u64,
) -> Result<StabilityTable, EvalError> {
    if contexts.is_empty() {
        return Err(EvalError::InvalidSpec("no contexts to compare".into()));
    }
    let max_tabs = contexts.iter().map(|c| c.tab_count as usize).max().unwrap_or(1);
    let mut len = website.page_count().min(MAX_SESSION_PAGES);
    if website.edge_count() == 0 {
        len = 1;
    }
    if max_tabs > len {
        return Err(EvalError::InvalidSpec(format!(
            "{max_tabs} tabs need at least as many pages in the walk, have {len}"
        )));
    }
    let walk = sample_session_plan(website, 1, len, derive_seed(seed, 0))?
        .tabs
        .remove(0);

    let mut per_ctx: Vec<BTreeMap<String, f64>> = Vec::with_capacity(contexts.len());
    for (i, ctx) in contexts.iter().enumerate() {
        let plan = SessionPlan {
            tabs: chunk_walk(&walk, ctx.tab_count as usize),
            interleaving_seed: derive_seed(seed, 100 + i as u64),
        };
        let (trace, truth) = simulate_session(website, &plan, ctx, params, derive_seed(seed, 1))?;
        per_ctx.push(match feature {
            StabilityFeature::ResourceSize => sizes(&trace, &truth),
            StabilityFeature::Rtdt => {
                transfer_times(&trace, &truth, ctx, derive_seed(seed, 200 + i as u64))
            }
            StabilityFeature::BurstPattern => bursts(&trace, &truth)
                .into_iter()
                .enumerate()
                .map(|(j, v)| (format!("{j:04}"), v))
                .collect(),
        });
    }

    // A key missing from a context counts as 0 for bursts (shorter
    // sequence) and is dropped for per-resource features (cached away).
    let keys: BTreeSet<&String> = per_ctx.iter().flat_map(|m| m.keys()).collect();
    let mut rows = Vec::new();
    for key in keys {
        let values: Option<Vec<f64>> = per_ctx
            .iter()
            .map(|m| match feature {
                StabilityFeature::BurstPattern => Some(m.get(key).copied().unwrap_or(0.0)),
                _ => m.get(key).copied(),
            })
            .collect();
        if let Some(values) = values {
            rows.push(StabilityRow {
                key: key.clone(),
                cv: coefficient_of_variation(&values),
                values,
            });
        }
    }
    let distinct_sequences = per_ctx
        .iter()
        .map(|m| m.values().map(|v| v.to_bits()).collect::<Vec<_>>())
        .collect::<BTreeSet<_>>()
        .len();
    let max_cv = rows.iter().map(|r| r.cv).fold(0.0, f64::max);
    let mean_cv = if rows.is_empty() {
        0.0
    } else {
        rows.iter().map(|r| r.cv).sum::<f64>() / rows.len() as f64
    };
    Ok(StabilityTable {
        feature,
        contexts: contexts.len(),
        rows,
        max_cv,
        mean_cv,
        distinct_sequences,
    })
}
