use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::{FeatureDB, ProfileError};
use crate::sim::EncoderParams;
use crate::site::{PageId, ResourceId, Website};

/// Affine estimate of the encryption function, fitted in record-free
/// payload space: `payload ~ slope * (plaintext + headers) + intercept`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EncoderFit {
    pub slope: f64,
    pub intercept: f64,
    pub pairs: usize,
}

impl EncoderFit {
    /// Encrypted bytes added by `plain` extra plaintext bytes.
    pub fn delta(&self, plain: u64) -> u64 {
        (self.slope * plain as f64).round().max(0.0) as u64
    }
}

/// Removes per-record overhead from a signature: finds the record count `n`
/// for which `sig - n * overhead` segments into exactly `n` records.
pub fn strip_records(sig: u64, max_record_payload: u64, overhead: u64) -> Option<u64> {
    (1..=sig / overhead.max(1)).find_map(|n| {
        let payload = sig.checked_sub(n * overhead)?;
        (payload > 0 && payload.div_ceil(max_record_payload) == n).then_some(payload)
    })
}

/// Least squares over one (plaintext + headers, payload) pair per resource,
/// using the resource's smallest signature.
pub fn fit_encoder(
    website: &Website,
    feature_db: &FeatureDB,
    params: &EncoderParams,
    max_record_payload: u64,
) -> Result<EncoderFit, ProfileError> {
    let mut min_sig: BTreeMap<&ResourceId, u64> = BTreeMap::new();
    for e in &feature_db.entries {
        let m = min_sig.entry(&e.resource_id).or_insert(e.sig);
        *m = (*m).min(e.sig);
    }
    let mut pairs = Vec::new();
    for (rid, sig) in min_sig {
        let Some(resource) = website.resource(rid) else {
            return Err(ProfileError::Inconsistent(format!("unknown resource `{rid}`")));
        };
        if let Some(y) = strip_records(sig, max_record_payload, params.record_overhead) {
            let x = resource.plaintext_size + params.response_header_base;
            pairs.push((x as f64, y as f64));
        }
    }
    let distinct: BTreeSet<u64> = pairs.iter().map(|(x, _)| *x as u64).collect();
    if distinct.len() < 2 {
        return Err(ProfileError::EncoderFit(format!(
            "{} distinct plaintext sizes, need at least 2",
            distinct.len()
        )));
    }
    let n = pairs.len() as f64;
    let mx = pairs.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pairs.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pairs.iter().map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = pairs.iter().map(|(x, _)| (x - mx) * (x - mx)).sum();
    let slope = sxy / sxx;
    Ok(EncoderFit {
        slope,
        intercept: my - slope * mx,
        pairs: pairs.len(),
    })
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrackingDelta {
    pub url: String,
    /// The page behind `url`.
    pub page: PageId,
    pub delta: u64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionDelta {
    pub os: String,
    pub browser: String,
    pub bo: String,
    pub delta: u64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CookieVarEntry {
    /// `None` when the resource carries no tracking cookie.
    pub c_t: Option<Vec<TrackingDelta>>,
    pub c_s: Vec<SessionDelta>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CookieVarTable {
    pub entries: BTreeMap<ResourceId, CookieVarEntry>,
}

impl CookieVarTable {
    pub fn get(&self, r: &ResourceId) -> Option<&CookieVarEntry> {
        self.entries.get(r)
    }

    pub fn max_ct(&self) -> u64 {
        self.entries
            .values()
            .flat_map(|e| e.c_t.iter().flatten())
            .map(|t| t.delta)
            .max()
            .unwrap_or(0)
    }

    pub fn max_cs(&self) -> u64 {
        self.entries
            .values()
            .flat_map(|e| &e.c_s)
            .map(|s| s.delta)
            .max()
            .unwrap_or(0)
    }
}

/// Tracking-cookie deltas for every page a user can arrive from, and
/// session-cookie deltas for every configured user agent.
pub fn compute_cookie_var(
    website: &Website,
    fit: &EncoderFit,
    params: &EncoderParams,
) -> CookieVarTable {
    let c_s: Vec<SessionDelta> = params
        .user_agents
        .iter()
        .map(|ua| SessionDelta {
            os: ua.os.clone(),
            browser: ua.browser.clone(),
            bo: ua.bo.clone(),
            delta: fit.delta(params.session_cookie_base + ua.bo.len() as u64),
        })
        .collect();
    let mut table = CookieVarTable::default();
    for r in website.resources() {
        let c_t = r.carries_tracking_cookie.then(|| {
            let preds: BTreeSet<&PageId> = website
                .pages_containing(&r.id)
                .flat_map(|p| website.predecessors(p))
                .collect();
            preds
                .into_iter()
                .map(|p| {
                    let url = website.page(p).expect("edge endpoints exist").url.clone();
                    TrackingDelta {
                        delta: fit.delta(url.len() as u64),
                        url,
                        page: p.clone(),
                    }
                })
                .collect()
        });
        table.entries.insert(
            r.id.clone(),
            CookieVarEntry {
                c_t,
                c_s: c_s.clone(),
            },
        );
    }
    table
}
