use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::classifier::{compute_validation_threshold, TraceClassifier};
use super::EvalError;
use crate::derive_seed;
use crate::predictor::{predict, ContextHints};
use crate::profiler::{profile_website, BudgetReport, ProfileVariant, QueryBudget, SnoopyDatabase};
use crate::sim::{simulate_session, BrowsingContext, EncoderParams, EncryptedTrace, SessionPlan};
use crate::site::{PageId, Resource, ResourceId, SiteError, Webpage, Website};

/// Tolerance for the gate comparison, so that values equal up to float
/// rounding count as meeting the threshold.
const GATE_EPS: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnsembleConfig {
    pub snoopy_pages: BTreeSet<PageId>,
    pub ml_pages: BTreeSet<PageId>,
    pub p_v: f64,
    #[serde(default = "default_margin")]
    pub margin: f64,
}

fn default_margin() -> f64 {
    0.10
}

impl EnsembleConfig {
    /// Checks the partition against the site's pages.
    pub fn validate(&self, website: &Website) -> Result<(), EvalError> {
        if !(0.0..=1.0).contains(&self.p_v) || !(0.0..=1.0).contains(&self.margin) {
            return Err(EvalError::InvalidConfig("p_v and margin must lie in [0, 1]".into()));
        }
        if let Some(p) = self.snoopy_pages.intersection(&self.ml_pages).next() {
            return Err(EvalError::InvalidConfig(format!("`{p}` is in both page sets")));
        }
        let all: BTreeSet<&PageId> = website.page_ids().collect();
        let union: BTreeSet<&PageId> = self.snoopy_pages.union(&self.ml_pages).collect();
        if union != all {
            return Err(EvalError::InvalidConfig(
                "page sets must together cover every page".into(),
            ));
        }
        Ok(())
    }
}

/// True when the classifier's answer is trusted.
pub fn gate(p_ml: f64, p_v: f64, margin: f64) -> bool {
    p_ml + GATE_EPS >= p_v - margin
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnsembleSource {
    Classifier,
    Snoopy,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnsembleDecision {
    pub page: Option<PageId>,
    pub source: EnsembleSource,
    pub p_ml: Option<f64>,
    pub classifier_page: Option<PageId>,
    pub snoopy_page: Option<PageId>,
    pub diagnostic: Option<String>,
}

/// Asks the classifier first and keeps its answer when confident enough,
/// otherwise falls back to the best page found by size matching.
pub fn ensemble_predict(
    trace: &EncryptedTrace,
    db: &SnoopyDatabase,
    classifier: &dyn TraceClassifier,
    config: &EnsembleConfig,
    hints: &ContextHints,
) -> EnsembleDecision {
    let (ml, diagnostic) = match classifier.predict(trace) {
        Ok(v) => (Some(v), None),
        Err(e) => (None, Some(format!("classifier failed: {e}"))),
    };
    if let Some((page, p)) = &ml {
        if gate(*p, config.p_v, config.margin) {
            return EnsembleDecision {
                page: Some(page.clone()),
                source: EnsembleSource::Classifier,
                p_ml: Some(*p),
                classifier_page: Some(page.clone()),
                snoopy_page: None,
                diagnostic,
            };
        }
    }
    let snoopy = predict(trace, db, hints).top_page().cloned();
    EnsembleDecision {
        page: snoopy.clone(),
        source: EnsembleSource::Snoopy,
        p_ml: ml.as_ref().map(|(_, p)| *p),
        classifier_page: ml.map(|(p, _)| p),
        snoopy_page: snoopy,
        diagnostic,
    }
}

/// Adds `count` pages that mimic existing ones: each copies a source page's
/// resource sizes and flags under new ids that sort after the originals,
/// then fetches one extra large resource of its own. Size matching
/// resolves the copied resources to the source page, so the copy is lost,
/// while its total size stays distinctive.
///
/// Returns the new site and the ids of the added pages.
pub fn engineer_collisions(
    website: &Website,
    count: usize,
    seed: u64,
) -> Result<(Website, BTreeSet<PageId>), SiteError> {
    let ids: Vec<&PageId> = website.page_ids().collect();
    if count > ids.len() {
        return Err(SiteError::InvalidSpec(format!(
            "cannot copy {count} of {} pages",
            ids.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pool = ids.clone();
    let mut sources = Vec::with_capacity(count);
    for _ in 0..count {
        sources.push(pool.swap_remove(rng.gen_range(0..pool.len())));
    }
    sources.sort();

    let mut pages: Vec<Webpage> = website.pages().cloned().collect();
    let mut resources: Vec<Resource> = website.resources().cloned().collect();
    let mut edges: Vec<(PageId, PageId)> = website.edges().cloned().collect();
    let mut used: BTreeSet<u64> = resources.iter().map(|r| r.plaintext_size).collect();
    let top = used.iter().max().copied().unwrap_or(0);
    let mut extra_size = top.max(1_000) * 8 + 1;
    let mut added = BTreeSet::new();

    for (k, src) in sources.into_iter().enumerate() {
        let page = website.page(src).expect("listed page");
        let copy_id = PageId::new(format!("/z{src}"));
        let mut seq = Vec::with_capacity(page.download_sequence.len() + 1);
        for r in &page.download_sequence {
            let orig = website.resource(r).expect("site invariant");
            let id = ResourceId::new(format!("/z{src}{r}"));
            resources.push(Resource {
                id: id.clone(),
                ..orig.clone()
            });
            seq.push(id);
        }
        while used.contains(&extra_size) {
            extra_size += 1;
        }
        used.insert(extra_size);
        let extra = ResourceId::new(format!("/z{src}/extra-{k}.bin"));
        resources.push(Resource {
            id: extra.clone(),
            plaintext_size: extra_size,
            content_kind: crate::site::ContentKind::Binary,
            cacheable: false,
            carries_tracking_cookie: false,
        });
        extra_size += 7_919;
        seq.push(extra);
        edges.push((src.clone(), copy_id.clone()));
        edges.push((copy_id.clone(), src.clone()));
        pages.push(Webpage {
            id: copy_id.clone(),
            url: format!("{}/z", page.url.trim_end_matches('/')),
            download_sequence: seq,
        });
        added.insert(copy_id);
    }
    Ok((Website::new(pages, resources, edges)?, added))
}

/// `per_page` single-page visits of every page, labelled with the page.
pub fn single_page_traces(
    website: &Website,
    context: &BrowsingContext,
    params: &EncoderParams,
    per_page: usize,
    seed: u64,
) -> Result<Vec<(EncryptedTrace, PageId)>, EvalError> {
    let ctx = context.clone().with_tabs(1);
    let mut out = Vec::new();
    for (i, page) in website.page_ids().enumerate() {
        for k in 0..per_page {
            let s = derive_seed(derive_seed(seed, i as u64), k as u64);
            let plan = SessionPlan {
                tabs: vec![vec![page.clone()]],
                interleaving_seed: s,
            };
            let (trace, _) = simulate_session(website, &plan, &ctx, params, s)?;
            out.push((trace, page.clone()));
        }
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EnsembleSpec {
    pub context: BrowsingContext,
    pub variants: Vec<ProfileVariant>,
    pub samples_per_page: u32,
    pub budget: u64,
    /// Pages handed to the classifier. When absent they are the pages the
    /// size-matching predictor gets wrong on its own profiling visits.
    pub ml_pages: Option<BTreeSet<PageId>>,
    pub ml_samples_per_page: usize,
    pub test_samples_per_page: usize,
    pub margin: f64,
    pub seed: u64,
}

impl Default for EnsembleSpec {
    fn default() -> Self {
        Self {
            context: BrowsingContext::new("os_a", "browser_a"),
            variants: ProfileVariant::standard(),
            samples_per_page: 3,
            budget: 0,
            ml_pages: None,
            ml_samples_per_page: 3,
            test_samples_per_page: 2,
            margin: default_margin(),
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PageAttribution {
    pub page: PageId,
    pub in_ml_set: bool,
    pub traces: usize,
    pub snoopy_correct: usize,
    pub classifier_correct: usize,
    pub ensemble_correct: usize,
    pub routed_to_classifier: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnsembleStudyReport {
    pub snoopy_fa: f64,
    pub classifier_fa: f64,
    pub ensemble_fa: f64,
    pub config: EnsembleConfig,
    pub pages: Vec<PageAttribution>,
    pub profiling_budget: BudgetReport,
    /// Extra adversary visits spent on classifier training and validation.
    pub ml_queries: u64,
    pub notes: Vec<String>,
}

fn pct(n: usize, d: usize) -> f64 {
    if d == 0 {
        0.0
    } else {
        100.0 * n as f64 / d as f64
    }
}

/// Profiles the whole site, trains the classifier on the ML pages, derives
/// p_v from a validation pass and scores the three predictors on fresh
/// single-page visits of every page.
pub fn run_ensemble_study(
    website: &Website,
    spec: &EnsembleSpec,
    classifier: &mut dyn TraceClassifier,
    params: &EncoderParams,
) -> Result<EnsembleStudyReport, EvalError> {
    let budget = QueryBudget::new(spec.budget);
    let db = profile_website(
        website,
        &spec.context,
        spec.samples_per_page,
        &spec.variants,
        &budget,
        params,
        derive_seed(spec.seed, 0),
    )?;
    let hints = ContextHints {
        bo_hint: None,
        cache_assumed: Some(spec.context.cache_enabled),
        cookies_assumed: Some(spec.context.cookies_allowed),
    };
    let mut notes = Vec::new();
    let ml_pages = match &spec.ml_pages {
        Some(p) => p.clone(),
        None => {
            let probe = single_page_traces(website, &spec.context, params, 1, derive_seed(spec.seed, 1))?;
            probe
                .iter()
                .filter(|(t, page)| {
                    let mut h = hints.clone();
                    h.bo_hint = t.context_hint.clone();
                    predict(t, &db, &h).top_page() != Some(page)
                })
                .map(|(_, page)| page.clone())
                .collect()
        }
    };
    let snoopy_pages: BTreeSet<PageId> = website
        .page_ids()
        .filter(|p| !ml_pages.contains(*p))
        .cloned()
        .collect();

    let ml_site = website.restrict(&ml_pages)?;
    let mut ml_queries = 0u64;
    let p_v = if ml_pages.is_empty() {
        notes.push("no pages for the classifier; every trace goes to size matching".into());
        1.0
    } else {
        let train = single_page_traces(&ml_site, &spec.context, params, spec.ml_samples_per_page, derive_seed(spec.seed, 2))?;
        let validation = single_page_traces(&ml_site, &spec.context, params, 1, derive_seed(spec.seed, 3))?;
        ml_queries = (train.len() + validation.len()) as u64;
        classifier.train(&train)?;
        let v: Vec<EncryptedTrace> = validation.into_iter().map(|(t, _)| t).collect();
        compute_validation_threshold(classifier, &v)?
    };
    let config = EnsembleConfig {
        snoopy_pages,
        ml_pages,
        p_v,
        margin: spec.margin,
    };
    config.validate(website)?;

    let tests = single_page_traces(website, &spec.context, params, spec.test_samples_per_page, derive_seed(spec.seed, 4))?;
    let mut pages: Vec<PageAttribution> = Vec::new();
    let (mut s_ok, mut c_ok, mut e_ok) = (0, 0, 0);
    for (trace, truth) in &tests {
        let mut h = hints.clone();
        h.bo_hint = trace.context_hint.clone();
        let decision = ensemble_predict(trace, &db, classifier, &config, &h);
        let snoopy = match &decision.snoopy_page {
            Some(p) => Some(p.clone()),
            None => predict(trace, &db, &h).top_page().cloned(),
        };
        let cls = classifier.predict(trace).ok().map(|(p, _)| p);
        if pages.last().is_none_or(|a| &a.page != truth) {
            pages.push(PageAttribution {
                page: truth.clone(),
                in_ml_set: config.ml_pages.contains(truth),
                traces: 0,
                snoopy_correct: 0,
                classifier_correct: 0,
                ensemble_correct: 0,
                routed_to_classifier: 0,
            });
        }
        let a = pages.last_mut().expect("pushed above");
        a.traces += 1;
        let hit = |p: &Option<PageId>| usize::from(p.as_ref() == Some(truth));
        a.snoopy_correct += hit(&snoopy);
        a.classifier_correct += hit(&cls);
        a.ensemble_correct += hit(&decision.page);
        a.routed_to_classifier += usize::from(decision.source == EnsembleSource::Classifier);
        s_ok += hit(&snoopy);
        c_ok += hit(&cls);
        e_ok += hit(&decision.page);
        if let Some(d) = decision.diagnostic {
            tracing::debug!(page = %truth, "{d}");
        }
    }
    Ok(EnsembleStudyReport {
        snoopy_fa: pct(s_ok, tests.len()),
        classifier_fa: pct(c_ok, tests.len()),
        ensemble_fa: pct(e_ok, tests.len()),
        config,
        pages,
        profiling_budget: budget.report(),
        ml_queries,
        notes,
    })
}
