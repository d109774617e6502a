use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{
    encode_resource, perturb_network, BrowsingContext, ContextHint, EncoderParams, EncryptedTrace, GroundTruth,
    SessionPlan, SimError, TruthEntry,
};
use crate::seed::{derive_seed, fnv1a};
use crate::site::{CountRange, PageId, ResourceId, Website};

pub const MAX_SESSION_PAGES: usize = 15;

fn check_plan(website: &Website, plan: &SessionPlan) -> Result<(), SimError> {
    if plan.tabs.is_empty() {
        return Err(SimError::InvalidPlan("plan has no tabs".into()));
    }
    if plan.total_pages() > MAX_SESSION_PAGES {
        return Err(SimError::InvalidPlan(format!(
            "{} pages exceed the {MAX_SESSION_PAGES}-page session limit",
            plan.total_pages()
        )));
    }
    for (t, tab) in plan.tabs.iter().enumerate() {
        if tab.is_empty() {
            return Err(SimError::InvalidPlan(format!("tab {t} is empty")));
        }
        for page in tab {
            if website.page(page).is_none() {
                return Err(SimError::UnknownPage(page.clone()));
            }
        }
        for pair in tab.windows(2) {
            if !website.has_edge(&pair[0], &pair[1]) {
                return Err(SimError::InvalidPlan(format!(
                    "tab {t} moves from `{}` to `{}` without a link",
                    pair[0], pair[1]
                )));
            }
        }
    }
    Ok(())
}

struct Pending<'a> {
    page_idx: usize,
    page: &'a PageId,
    resource: &'a ResourceId,
}

/// Simulates one browsing session and returns the captured trace with its
/// ground truth.
///
/// Tabs open in order: tab `k` may start only after tab `k - 1` emitted its
/// first resource. Which open tab emits next is drawn from the plan's
/// interleaving seed. The cache is shared by all tabs.
pub fn simulate_session(
    website: &Website,
    plan: &SessionPlan,
    context: &BrowsingContext,
    params: &EncoderParams,
    seed: u64,
) -> Result<(EncryptedTrace, GroundTruth), SimError> {
    context.validate(params)?;
    check_plan(website, plan)?;
    if plan.tabs.len() != context.tab_count as usize {
        return Err(SimError::InvalidPlan(format!(
            "plan has {} tabs but the context opens {}",
            plan.tabs.len(),
            context.tab_count
        )));
    }

    let queues: Vec<Vec<Pending>> = plan
        .tabs
        .iter()
        .map(|tab| {
            tab.iter()
                .enumerate()
                .flat_map(|(page_idx, page)| {
                    let wp = website.page(page).expect("plan checked");
                    wp.download_sequence.iter().map(move |resource| Pending {
                        page_idx,
                        page,
                        resource,
                    })
                })
                .collect()
        })
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(plan.interleaving_seed);
    let mut cursor = vec![0usize; queues.len()];
    let mut cached: BTreeSet<&ResourceId> = BTreeSet::new();
    let mut occurrences: BTreeMap<&ResourceId, u64> = BTreeMap::new();
    let mut trace = EncryptedTrace {
        sub_traces: Vec::new(),
        context_hint: Some(ContextHint {
            os: context.os.clone(),
            browser: context.browser.clone(),
        }),
    };
    let mut truth = GroundTruth {
        entries: Vec::new(),
        session_pages: plan.tabs.iter().flatten().cloned().collect(),
    };
    let mut offset = 0u64;

    loop {
        let open: Vec<usize> = (0..queues.len())
            .take_while(|&t| t == 0 || cursor[t - 1] > 0)
            .filter(|&t| cursor[t] < queues[t].len())
            .collect();
        let Some(&tab) = open.choose(&mut rng) else {
            break;
        };
        let item = &queues[tab][cursor[tab]];
        cursor[tab] += 1;
        let resource = website.resource(item.resource).expect("site invariant");

        if context.cache_enabled && resource.cacheable && cached.contains(item.resource) {
            truth.entries.push(TruthEntry {
                resource: item.resource.clone(),
                page: item.page.clone(),
                tab: tab as u32,
                downloaded: false,
                sub_trace_index: None,
            });
            continue;
        }
        let prev_url = (item.page_idx > 0)
            .then(|| &plan.tabs[tab][item.page_idx - 1])
            .and_then(|p| website.page(p))
            .map(|p| p.url.as_str());
        let first = trace.sub_traces.is_empty();
        let mut sub = encode_resource(resource, context, params, first, prev_url)?;
        let n = occurrences.entry(item.resource).or_insert(0);
        sub.group_key = derive_seed(seed ^ fnv1a(item.resource.as_str().as_bytes()), *n);
        *n += 1;
        sub.first_byte_index = offset;
        offset += sub.f_value();
        cached.insert(item.resource);
        truth.entries.push(TruthEntry {
            resource: item.resource.clone(),
            page: item.page.clone(),
            tab: tab as u32,
            downloaded: true,
            sub_trace_index: Some(trace.sub_traces.len()),
        });
        trace.sub_traces.push(sub);
    }
    Ok((trace, truth))
}

const WALK_ATTEMPTS: usize = 200;

/// Draws a random session: pages split evenly over tabs, each tab an
/// edge-respecting walk. Tab 0 starts anywhere; every later tab starts on a
/// page linked from the previous tab's first page, or anywhere when that
/// page has no links.
pub fn sample_session_plan(
    website: &Website,
    tab_count: u32,
    total_pages: usize,
    seed: u64,
) -> Result<SessionPlan, SimError> {
    let tabs = tab_count as usize;
    if !(1..=MAX_SESSION_PAGES).contains(&total_pages) {
        return Err(SimError::InvalidPlan(format!(
            "total_pages must lie in [1, {MAX_SESSION_PAGES}]"
        )));
    }
    if tabs < 1 || tabs > total_pages {
        return Err(SimError::InvalidPlan("need 1 <= tab_count <= total_pages".into()));
    }
    if website.is_empty() {
        return Err(SimError::WalkInfeasible("website has no pages".into()));
    }
    if website.edge_count() == 0 && total_pages > tabs {
        return Err(SimError::WalkInfeasible(
            "website has no links but tabs must visit several pages".into(),
        ));
    }
    let lengths: Vec<usize> = (0..tabs)
        .map(|t| total_pages / tabs + usize::from(t < total_pages % tabs))
        .collect();
    let pages: Vec<&PageId> = website.page_ids().collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    'attempt: for _ in 0..WALK_ATTEMPTS {
        let mut plan: Vec<Vec<PageId>> = Vec::with_capacity(tabs);
        let mut seen: BTreeSet<&PageId> = BTreeSet::new();
        for (t, &len) in lengths.iter().enumerate() {
            let start = if t == 0 {
                *pages.choose(&mut rng).expect("non-empty")
            } else {
                let succ: Vec<&PageId> = website.successors(&plan[t - 1][0]).collect();
                match succ.choose(&mut rng) {
                    Some(p) => *p,
                    None => *pages.choose(&mut rng).expect("non-empty"),
                }
            };
            let mut walk = vec![start.clone()];
            seen.insert(start);
            while walk.len() < len {
                let here = walk.last().expect("non-empty");
                let succ: Vec<&PageId> = website.successors(here).collect();
                if succ.is_empty() {
                    continue 'attempt;
                }
                let fresh: Vec<&PageId> =
                    succ.iter().copied().filter(|p| !seen.contains(p)).collect();
                let next = if fresh.is_empty() || rng.gen_bool(0.05) {
                    *succ.choose(&mut rng).expect("non-empty")
                } else {
                    *fresh.choose(&mut rng).expect("non-empty")
                };
                seen.insert(next);
                walk.push(next.clone());
            }
            plan.push(walk);
        }
        return Ok(SessionPlan {
            tabs: plan,
            interleaving_seed: derive_seed(seed, 1),
        });
    }
    Err(SimError::WalkInfeasible(format!(
        "no valid walk found in {WALK_ATTEMPTS} attempts"
    )))
}

/// One session of a batch: the walk that was browsed and what it produced.
#[derive(Clone, Debug, PartialEq)]
pub struct SimulatedSession {
    pub plan: SessionPlan,
    pub trace: EncryptedTrace,
    pub truth: GroundTruth,
}

/// Draws and simulates `sessions` random sessions in `context`, applying its
/// network profile. Session `k` depends only on `(seed, k)`.
pub fn simulate_batch(
    website: &Website,
    context: &BrowsingContext,
    sessions: usize,
    pages_per_session: CountRange,
    params: &EncoderParams,
    seed: u64,
) -> Result<Vec<SimulatedSession>, SimError> {
    let r = pages_per_session;
    if r.min < 1 || r.min > r.max {
        return Err(SimError::InvalidPlan("pages_per_session needs 1 <= min <= max".into()));
    }
    (0..sessions)
        .map(|k| {
            let s = derive_seed(seed, k as u64);
            let mut rng = ChaCha8Rng::seed_from_u64(s);
            let pages = (rng.gen_range(r.min..=r.max) as usize).max(context.tab_count as usize);
            let plan = sample_session_plan(website, context.tab_count, pages, derive_seed(s, 1))?;
            let (clean, mut truth) = simulate_session(website, &plan, context, params, derive_seed(s, 2))?;
            let trace = perturb_network(&clean, &context.network, derive_seed(s, 3))?;
            truth.apply_truncation(&trace);
            Ok(SimulatedSession { plan, trace, truth })
        })
        .collect()
}
