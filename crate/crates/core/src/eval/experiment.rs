use std::collections::BTreeSet;
use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::metrics::{session_counts, AccuracyReport, Counts};
use super::EvalError;
use crate::derive_seed;
use crate::predictor::{predict, ContextHints};
use crate::profiler::{profile_website, BudgetReport, ProfileVariant, QueryBudget, SnoopyDatabase};
use crate::sim::{
    perturb_network, sample_session_plan, simulate_session, BrowsingContext, EncoderParams,
    NetworkProfile, MAX_SESSION_PAGES,
};
use crate::site::{CountRange, PageId, Website};

/// The axes a test grid varies over. Every list must be non-empty for the
/// grid to contain a cell.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeneralizationFactors {
    /// Page subset under study; all pages when absent.
    #[serde(default)]
    pub pages: Option<Vec<PageId>>,
    /// (cache enabled, cookies allowed) pairs.
    pub cache_cookies: Vec<(bool, bool)>,
    pub tabs: Vec<u32>,
    pub os: Vec<String>,
    pub browsers: Vec<String>,
    pub networks: Vec<NetworkProfile>,
}

impl Default for GeneralizationFactors {
    fn default() -> Self {
        Self {
            pages: None,
            cache_cookies: vec![(false, false)],
            tabs: vec![1],
            os: vec!["os_a".into()],
            browsers: vec!["browser_a".into()],
            networks: vec![NetworkProfile::default()],
        }
    }
}

/// Which true context properties the predictor is told about.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct HintPolicy {
    pub bo_hint: bool,
    pub cache: bool,
    pub cookies: bool,
}

impl Default for HintPolicy {
    fn default() -> Self {
        Self {
            bo_hint: true,
            cache: true,
            cookies: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentSpec {
    pub factors: GeneralizationFactors,
    pub profiling_context: BrowsingContext,
    pub variants: Vec<ProfileVariant>,
    pub samples_per_page: u32,
    /// Cap on profiling accesses. Test sessions are not metered.
    pub budget: u64,
    pub sessions_per_cell: usize,
    pub pages_per_session: CountRange,
    pub hints: HintPolicy,
    pub seed: u64,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        Self {
            factors: GeneralizationFactors::default(),
            profiling_context: BrowsingContext::new("os_a", "browser_a"),
            variants: ProfileVariant::standard(),
            samples_per_page: 3,
            budget: 0,
            sessions_per_cell: 50,
            pages_per_session: CountRange { min: 1, max: 5 },
            hints: HintPolicy::default(),
            seed: 0,
        }
    }
}

impl ExperimentSpec {
    /// Profiling accesses needed for `pages` pages.
    pub fn required_queries(&self, pages: usize) -> u64 {
        pages as u64 * u64::from(self.samples_per_page) * self.variants.len() as u64
    }

    pub fn validate(&self) -> Result<(), EvalError> {
        let r = self.pages_per_session;
        if r.min < 1 || r.min > r.max || r.max as usize > MAX_SESSION_PAGES {
            return Err(EvalError::InvalidSpec(format!(
                "pages_per_session must satisfy 1 <= min <= max <= {MAX_SESSION_PAGES}"
            )));
        }
        if self.samples_per_page == 0 {
            return Err(EvalError::InvalidSpec("samples_per_page must be positive".into()));
        }
        if self.variants.is_empty() {
            return Err(EvalError::InvalidSpec("no profiling variants".into()));
        }
        if self.factors.tabs.iter().any(|&t| t == 0) {
            return Err(EvalError::InvalidSpec("tab counts must be positive".into()));
        }
        Ok(())
    }

    pub fn cells(&self) -> Vec<CellSpec> {
        let f = &self.factors;
        let mut out = Vec::new();
        for os in &f.os {
            for browser in &f.browsers {
                for &(cache, cookies) in &f.cache_cookies {
                    for &tabs in &f.tabs {
                        for network in &f.networks {
                            out.push(CellSpec {
                                os: os.clone(),
                                browser: browser.clone(),
                                cache_enabled: cache,
                                cookies_allowed: cookies,
                                tabs,
                                network: network.clone(),
                            });
                        }
                    }
                }
            }
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellSpec {
    pub os: String,
    pub browser: String,
    pub cache_enabled: bool,
    pub cookies_allowed: bool,
    pub tabs: u32,
    pub network: NetworkProfile,
}

impl CellSpec {
    pub fn context(&self) -> BrowsingContext {
        BrowsingContext::new(&self.os, &self.browser)
            .with_cache(self.cache_enabled, self.cookies_allowed)
            .with_tabs(self.tabs)
            .with_network(self.network.clone())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellReport {
    pub cell: CellSpec,
    pub report: AccuracyReport,
    pub skipped_sessions: usize,
    pub notes: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub overall: AccuracyReport,
    pub cells: Vec<CellReport>,
    pub budget: BudgetReport,
    pub notes: Vec<String>,
}

#[derive(Serialize)]
struct CsvRow<'a> {
    scope: &'a str,
    os: &'a str,
    browser: &'a str,
    cache: Option<bool>,
    cookies: Option<bool>,
    tabs: Option<u32>,
    drop_probability: Option<f64>,
    delay_min_ms: Option<f64>,
    delay_max_ms: Option<f64>,
    sessions: u64,
    accessed_pages: u64,
    fa_percent: f64,
    accurately_identified: f64,
    not_identified: f64,
    wrongly_identified: f64,
    resource_accurate: f64,
    resource_misidentified: f64,
    incomplete_download: f64,
    conflict: f64,
}

impl<'a> CsvRow<'a> {
    fn new(scope: &'a str, cell: Option<&'a CellSpec>, r: &AccuracyReport) -> Self {
        Self {
            scope,
            os: cell.map_or("", |c| &c.os),
            browser: cell.map_or("", |c| &c.browser),
            cache: cell.map(|c| c.cache_enabled),
            cookies: cell.map(|c| c.cookies_allowed),
            tabs: cell.map(|c| c.tabs),
            drop_probability: cell.map(|c| c.network.drop_probability),
            delay_min_ms: cell.map(|c| c.network.added_delay_ms.min),
            delay_max_ms: cell.map(|c| c.network.added_delay_ms.max),
            sessions: r.counts.sessions,
            accessed_pages: r.counts.accessed_pages,
            fa_percent: r.fa_percent,
            accurately_identified: r.webpages.accurately_identified,
            not_identified: r.webpages.not_identified,
            wrongly_identified: r.webpages.wrongly_identified,
            resource_accurate: r.resources.accurate,
            resource_misidentified: r.resources.misidentified,
            incomplete_download: r.resources.incomplete,
            conflict: r.resources.conflict,
        }
    }
}

impl ExperimentReport {
    /// One `overall` row followed by one row per grid cell.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), csv::Error> {
        let mut w = csv::Writer::from_writer(out);
        w.serialize(CsvRow::new("overall", None, &self.overall))?;
        for c in &self.cells {
            w.serialize(CsvRow::new("cell", Some(&c.cell), &c.report))?;
        }
        w.flush()?;
        Ok(())
    }
}

fn run_cell(
    spec: &ExperimentSpec,
    cell: &CellSpec,
    site: &Website,
    db: &SnoopyDatabase,
    params: &EncoderParams,
) -> CellReport {
    let ctx = cell.context();
    let mut counts = Counts::default();
    let mut notes = Vec::new();
    let mut skipped = 0;
    if let Err(e) = ctx.validate(params) {
        notes.push(format!("cell skipped: {e}"));
        return CellReport {
            cell: cell.clone(),
            report: AccuracyReport::default(),
            skipped_sessions: spec.sessions_per_cell,
            notes,
        };
    }
    for k in 0..spec.sessions_per_cell {
        // Independent of the cell, so every cell replays the same sessions.
        let s = derive_seed(spec.seed, 1 + k as u64);
        let mut rng = ChaCha8Rng::seed_from_u64(s);
        let r = spec.pages_per_session;
        let pages = (rng.gen_range(r.min..=r.max) as usize).max(cell.tabs as usize);
        let run = || -> Result<_, EvalError> {
            let plan = sample_session_plan(site, cell.tabs, pages, derive_seed(s, 2))?;
            let (clean, mut truth) = simulate_session(site, &plan, &ctx, params, derive_seed(s, 3))?;
            let trace = perturb_network(&clean, &ctx.network, derive_seed(s, 4))?;
            truth.apply_truncation(&trace);
            let hints = ContextHints {
                bo_hint: trace.context_hint.clone().filter(|_| spec.hints.bo_hint),
                cache_assumed: spec.hints.cache.then_some(ctx.cache_enabled),
                cookies_assumed: spec.hints.cookies.then_some(ctx.cookies_allowed),
            };
            Ok(session_counts(&predict(&trace, db, &hints), &truth))
        };
        match run() {
            Ok(c) => counts += c,
            Err(e) => {
                skipped += 1;
                notes.push(format!("session {k} skipped: {e}"));
            }
        }
    }
    CellReport {
        cell: cell.clone(),
        report: AccuracyReport::from_counts(counts),
        skipped_sessions: skipped,
        notes,
    }
}

/// Profiles once in `spec.profiling_context`, then replays a fixed set
/// of sessions in every cell of the test grid.
pub fn run_experiment(
    spec: &ExperimentSpec,
    website: &Website,
    params: &EncoderParams,
) -> Result<ExperimentReport, EvalError> {
    spec.validate()?;
    let site = match &spec.factors.pages {
        Some(pages) => website.restrict(&pages.iter().cloned().collect::<BTreeSet<_>>())?,
        None => website.clone(),
    };
    let cells = spec.cells();
    let budget = QueryBudget::new(spec.budget);
    if cells.is_empty() {
        return Ok(ExperimentReport {
            overall: AccuracyReport::default(),
            cells: Vec::new(),
            budget: budget.report(),
            notes: vec!["empty test grid".into()],
        });
    }
    let db = profile_website(
        &site,
        &spec.profiling_context,
        spec.samples_per_page,
        &spec.variants,
        &budget,
        params,
        derive_seed(spec.seed, 0),
    )?;
    let reports: Vec<CellReport> = cells
        .par_iter()
        .map(|c| run_cell(spec, c, &site, &db, params))
        .collect();
    let mut total = Counts::default();
    for c in &reports {
        total += c.report.counts;
    }
    let budget = budget.report();
    debug_assert!(budget.consumed <= budget.max_queries);
    tracing::info!(consumed = budget.consumed, max = budget.max_queries, "profiling budget");
    Ok(ExperimentReport {
        overall: AccuracyReport::from_counts(total),
        cells: reports,
        budget,
        notes: Vec::new(),
    })
}
