use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{ProfileError, ProfileVariant, QueryBudget};
use crate::seed::derive_seed;
use crate::sim::{simulate_session, BrowsingContext, EncoderParams, SessionPlan, SubTrace};
use crate::site::{PageId, ResourceId, Website};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TSampleEntry {
    pub sub_trace: SubTrace,
    pub resource_id: ResourceId,
    /// Page whose access produced the sample.
    pub page: PageId,
    pub profiling_context: BrowsingContext,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TSamples {
    pub entries: Vec<TSampleEntry>,
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct FeatureEntry {
    pub resource_id: ResourceId,
    pub sig: u64,
    pub page: PageId,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureDB {
    pub entries: Vec<FeatureEntry>,
}

/// One profiled occurrence of a resource, attributed to the page it was
/// fetched for.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Instance {
    pub resource: ResourceId,
    pub page: PageId,
}

/// Signature-keyed multiset of resource instances.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ReverseFeatureDB {
    map: BTreeMap<u64, Vec<Instance>>,
}

impl ReverseFeatureDB {
    pub fn get(&self, f: u64) -> &[Instance] {
        self.map.get(&f).map_or(&[], Vec::as_slice)
    }

    /// Every instance whose signature lies in the closed range.
    pub fn range(&self, lo: u64, hi: u64) -> impl Iterator<Item = (u64, &Instance)> {
        let hi = hi.max(lo);
        self.map
            .range(lo..=hi)
            .flat_map(|(k, v)| v.iter().map(move |i| (*k, i)))
    }

    pub fn keys(&self) -> impl Iterator<Item = u64> + '_ {
        self.map.keys().copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (u64, &[Instance])> {
        self.map.iter().map(|(k, v)| (*k, v.as_slice()))
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    pub fn total_instances(&self) -> usize {
        self.map.values().map(Vec::len).sum()
    }
}

/// Accesses every page `samples_per_page` times under every variant.
///
/// Fails before any access when the budget cannot cover the whole pass.
pub fn collect_samples(
    website: &Website,
    context: &BrowsingContext,
    samples_per_page: u32,
    variants: &[ProfileVariant],
    budget: &QueryBudget,
    params: &EncoderParams,
    seed: u64,
) -> Result<TSamples, ProfileError> {
    if website.is_empty() {
        return Err(ProfileError::EmptyWebsite);
    }
    if samples_per_page == 0 {
        return Err(ProfileError::InvalidArgument("samples_per_page must be at least 1".into()));
    }
    if variants.is_empty() {
        return Err(ProfileError::InvalidArgument("at least one variant is required".into()));
    }
    context.validate(params)?;
    let required = website.page_count() as u64 * u64::from(samples_per_page) * variants.len() as u64;
    let available = budget.remaining();
    if required > available {
        return Err(ProfileError::BudgetExceeded {
            required,
            available,
            shortfall: required - available,
        });
    }

    let pages: Vec<&PageId> = website.page_ids().collect();
    let jobs: Vec<(usize, &ProfileVariant, &PageId, u32)> = variants
        .iter()
        .flat_map(|v| {
            pages
                .iter()
                .flat_map(move |p| (0..samples_per_page).map(move |s| (v, *p, s)))
        })
        .enumerate()
        .map(|(i, (v, p, s))| (i, v, p, s))
        .collect();

    let batches: Vec<Vec<TSampleEntry>> = jobs
        .par_iter()
        .map(|&(i, variant, page, _)| {
            budget.try_consume(1)?;
            let ctx = BrowsingContext {
                cache_enabled: variant.cache_enabled,
                cookies_allowed: variant.cookies_allowed,
                tab_count: 1,
                network: Default::default(),
                ..context.clone()
            };
            let job_seed = derive_seed(seed, i as u64);
            let plan = SessionPlan {
                tabs: vec![vec![page.clone()]],
                interleaving_seed: job_seed,
            };
            let (trace, truth) = simulate_session(website, &plan, &ctx, params, job_seed)?;
            Ok(truth
                .entries
                .iter()
                .filter_map(|e| {
                    e.sub_trace_index.map(|ix| TSampleEntry {
                        sub_trace: trace.sub_traces[ix].clone(),
                        resource_id: e.resource.clone(),
                        page: e.page.clone(),
                        profiling_context: ctx.clone(),
                    })
                })
                .collect())
        })
        .collect::<Result<_, ProfileError>>()?;

    Ok(TSamples {
        entries: batches.into_iter().flatten().collect(),
    })
}

/// One signature per usable sample. Returns the database and the indices of
/// skipped (truncated) samples.
pub fn build_signatures(tsamples: &TSamples) -> Result<(FeatureDB, Vec<usize>), ProfileError> {
    if tsamples.entries.is_empty() {
        return Err(ProfileError::NoSamples);
    }
    let mut db = FeatureDB::default();
    let mut skipped = Vec::new();
    for (i, e) in tsamples.entries.iter().enumerate() {
        let sig = e.sub_trace.f_value();
        if e.sub_trace.truncated || sig == 0 {
            tracing::warn!(resource = %e.resource_id, "skipping truncated profiling sample");
            skipped.push(i);
            continue;
        }
        db.entries.push(FeatureEntry {
            resource_id: e.resource_id.clone(),
            sig,
            page: e.page.clone(),
        });
    }
    if db.entries.is_empty() {
        return Err(ProfileError::NoSamples);
    }
    Ok((db, skipped))
}

/// Inverts the feature database; duplicates are kept.
pub fn construct_dictionary(feature_db: &FeatureDB) -> ReverseFeatureDB {
    let mut map: BTreeMap<u64, Vec<Instance>> = BTreeMap::new();
    for e in &feature_db.entries {
        map.entry(e.sig).or_default().push(Instance {
            resource: e.resource_id.clone(),
            page: e.page.clone(),
        });
    }
    for v in map.values_mut() {
        v.sort();
    }
    ReverseFeatureDB { map }
}
