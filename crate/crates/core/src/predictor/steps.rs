use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};

use super::{CandidateScore, ContextHints};
use crate::profiler::{strip_records, Instance, SnoopyDatabase};
use crate::site::{PageId, ResourceId, SiteError};

/// Step 1: every profiled instance whose signature falls in the widened
/// window around `f`.
pub fn candidate_lookup(f: u64, db: &SnoopyDatabase) -> Vec<Instance> {
    let (lo, hi) = db.search_window(f);
    db.reverse_db().range(lo, hi).map(|(_, i)| i.clone()).collect()
}

/// Step 2: drops instances attributed to pages the user cannot be on.
pub fn prune_reachability(
    candidates: &[Instance],
    visited: &BTreeSet<PageId>,
    db: &SnoopyDatabase,
) -> Result<Vec<Instance>, SiteError> {
    let reachable = db.website().reachable_pages(visited)?;
    Ok(candidates
        .iter()
        .filter(|i| reachable.contains(&i.page))
        .cloned()
        .collect())
}

pub struct AdjustInput<'a> {
    /// Position of the sub-trace in the trace; only index 0 can carry the
    /// session cookie.
    pub index: usize,
    pub f: u64,
    pub visited: &'a BTreeSet<PageId>,
    pub hints: &'a ContextHints,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Adjusted {
    pub scores: Vec<CandidateScore>,
    pub eliminated: Vec<ResourceId>,
    pub notes: Vec<String>,
}

/// Step 3: predicts each candidate's encrypted size under the victim's
/// context and keeps the cookie hypothesis closest to the observation.
///
/// The profiled base signature is cookie free. Tracking-cookie hypotheses
/// are the deltas of visited predecessor pages; the session cookie applies
/// only to the first sub-trace and needs a browser/OS hint. Candidates whose
/// best prediction leaves the search window are eliminated.
pub fn adjust_cookie_variation(
    candidates: &[Instance],
    input: &AdjustInput,
    db: &SnoopyDatabase,
) -> Adjusted {
    let mut out = Adjusted::default();
    let params = db.params();
    let o = params.record_overhead;
    let m_prof = db.profiling_payload();
    let hints = input.hints;
    let cookies = hints.cookies_assumed;

    let m_target = match &hints.bo_hint {
        Some(h) => match params.max_record_payload(&h.os) {
            Ok(m) => m,
            Err(_) => {
                out.notes.push(format!("unknown hinted os `{}`; using profiling record size", h.os));
                m_prof
            }
        },
        None => m_prof,
    };

    let mut freq: BTreeMap<&ResourceId, u32> = BTreeMap::new();
    for c in candidates {
        *freq.entry(&c.resource).or_insert(0) += 1;
    }

    let mut session_note = None;
    let (lo, hi) = db.search_window(input.f);
    for (rid, n) in freq {
        let Some(base) = db.base_signature(rid) else {
            continue;
        };
        let payload = strip_records(base, m_prof, o).unwrap_or(base);
        let entry = db.cookie_var().get(rid);

        let mut ct_options = vec![0u64];
        if cookies != Some(false) {
            let visited_deltas: Vec<u64> = entry
                .and_then(|e| e.c_t.as_ref())
                .into_iter()
                .flatten()
                .filter(|t| input.visited.contains(&t.page))
                .map(|t| t.delta)
                .collect();
            if cookies == Some(true) && !visited_deltas.is_empty() {
                ct_options.clear();
            }
            ct_options.extend(visited_deltas);
        }

        let mut cs_options = vec![0u64];
        if input.index == 0 && cookies != Some(false) {
            match &hints.bo_hint {
                Some(h) => {
                    let hit = entry
                        .into_iter()
                        .flat_map(|e| &e.c_s)
                        .find(|s| s.os == h.os && s.browser == h.browser);
                    match hit {
                        Some(s) if cookies == Some(true) => cs_options = vec![s.delta],
                        Some(s) => cs_options.push(s.delta),
                        None => {
                            session_note = Some(format!(
                                "no session-cookie entry for ({}, {}); term omitted",
                                h.os, h.browser
                            ))
                        }
                    }
                }
                None => session_note = Some("no browser/OS hint; session-cookie term omitted".into()),
            }
        }

        let best = ct_options
            .iter()
            .flat_map(|ct| cs_options.iter().map(move |cs| payload + ct + cs))
            .map(|p| p + p.div_ceil(m_target) * o)
            .min_by_key(|&adj| (adj.abs_diff(input.f), adj))
            .expect("at least one hypothesis");

        if best < lo || best > hi {
            out.eliminated.push(rid.clone());
            continue;
        }
        let diff = best as i64 - input.f as i64;
        out.scores.push(CandidateScore {
            resource_id: rid.clone(),
            freq: n,
            adjusted_sig: best,
            diff,
            weight: (diff != 0).then(|| f64::from(n) / diff.unsigned_abs() as f64),
        });
    }
    out.notes.extend(session_note);
    out
}

/// Orders candidates best first: exact matches by frequency, then by
/// `freq / |diff|` compared exactly, then smaller `|diff|`, then id.
fn rank(a: &CandidateScore, b: &CandidateScore) -> Ordering {
    match (a.is_exact(), b.is_exact()) {
        (true, false) => return Ordering::Less,
        (false, true) => return Ordering::Greater,
        (true, true) => {
            return b.freq.cmp(&a.freq).then_with(|| a.resource_id.cmp(&b.resource_id));
        }
        (false, false) => {}
    }
    let (da, db) = (u128::from(a.diff.unsigned_abs()), u128::from(b.diff.unsigned_abs()));
    let wa = u128::from(a.freq) * db;
    let wb = u128::from(b.freq) * da;
    wb.cmp(&wa)
        .then_with(|| da.cmp(&db))
        .then_with(|| a.resource_id.cmp(&b.resource_id))
}

/// Step 4: the highest-ranked candidate, or `None` on conflict.
pub fn select_resource(scored: &[CandidateScore]) -> Option<&CandidateScore> {
    scored.iter().min_by(|a, b| rank(a, b))
}
