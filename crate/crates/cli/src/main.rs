mod args;

use std::collections::BTreeSet;
use std::path::Path;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::Parser;
use tracing_subscriber::EnvFilter;

use snoopy_client::{ClientError, SnoopyClient};
use snoopy_core::api::{
    EnsembleRequest, ErrorCategory, ExperimentRequest, IngestRequest, PredictRequest, ProfileRequest,
    ScoreRequest, SimulateRequest, StabilityRequest,
};
use snoopy_core::eval::{EnsembleSpec, ExperimentReport, ExperimentSpec};
use snoopy_core::persist::{self, PersistError, TraceRecord};
use snoopy_core::predictor::{ContextHints, PredictionResult};
use snoopy_core::profiler::{BudgetReport, ProfileVariant};
use snoopy_core::sim::{BrowsingContext, DelayRange, EncoderParams, NetworkProfile};
use snoopy_core::site::{Corpus, CountRange, PageId, SiteSpec, Website};

use args::{Cli, Command};

#[derive(Debug)]
struct Failure {
    category: ErrorCategory,
    message: String,
}

impl Failure {
    fn new(category: ErrorCategory, message: impl Into<String>) -> Self {
        Self {
            category,
            message: message.into(),
        }
    }

    fn exit_code(&self) -> u8 {
        match self.category {
            ErrorCategory::Usage => 2,
            ErrorCategory::Io => 3,
            ErrorCategory::Parse => 4,
            ErrorCategory::Budget => 5,
            ErrorCategory::InvalidInput => 6,
            ErrorCategory::Transport => 7,
            ErrorCategory::Internal => 1,
        }
    }

    fn report(&self) {
        let doc = serde_json::json!({
            "error": { "category": self.category, "message": self.message }
        });
        eprintln!("{doc}");
    }
}

impl From<PersistError> for Failure {
    fn from(e: PersistError) -> Self {
        let category = match e {
            PersistError::Io { .. } => ErrorCategory::Io,
            PersistError::Encode(_) => ErrorCategory::Internal,
            _ => ErrorCategory::Parse,
        };
        Self::new(category, e.to_string())
    }
}

impl From<ClientError> for Failure {
    fn from(e: ClientError) -> Self {
        Self::new(e.category(), e.to_string())
    }
}

type Result<T> = std::result::Result<T, Failure>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion | ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand => {
                    ExitCode::SUCCESS
                }
                _ => {
                    let f = Failure::new(ErrorCategory::Usage, e.kind().to_string());
                    f.report();
                    ExitCode::from(f.exit_code())
                }
            };
        }
    };
    let filter = EnvFilter::try_from_env("SNOOPY_LOG").unwrap_or_else(|_| EnvFilter::new(&cli.log_level));
    tracing_subscriber::fmt().with_env_filter(filter).with_writer(std::io::stderr).init();

    let rt = match tokio::runtime::Runtime::new() {
        Ok(rt) => rt,
        Err(e) => {
            let f = Failure::new(ErrorCategory::Internal, format!("runtime: {e}"));
            f.report();
            return ExitCode::from(f.exit_code());
        }
    };
    match rt.block_on(run(cli)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            f.report();
            ExitCode::from(f.exit_code())
        }
    }
}

async fn connect(server: Option<&str>) -> Result<SnoopyClient> {
    match server {
        Some(url) => Ok(SnoopyClient::new(url)?),
        None => {
            let (addr, _task) = snoopy_server::spawn_local()
                .await
                .map_err(|e| Failure::new(ErrorCategory::Io, format!("embedded server: {e}")))?;
            tracing::debug!(%addr, "embedded server started");
            Ok(SnoopyClient::new(&format!("http://{addr}"))?)
        }
    }
}

fn encoder_params(cli: &Cli) -> Result<EncoderParams> {
    let mut params = match &cli.params {
        Some(p) => persist::load::<EncoderParams>(p)?,
        None => EncoderParams::default(),
    };
    if let Some(o) = cli.record_overhead {
        params.record_overhead = o;
    }
    if let Some(h) = cli.header_base {
        params.response_header_base = h;
    }
    params
        .validate()
        .map_err(|e| Failure::new(ErrorCategory::InvalidInput, e.to_string()))?;
    Ok(params)
}

fn write_csv(path: &Path, report: &ExperimentReport) -> Result<()> {
    let mut buf = Vec::new();
    report
        .write_csv(&mut buf)
        .map_err(|e| Failure::new(ErrorCategory::Internal, e.to_string()))?;
    Ok(persist::write_atomic(path, &buf)?)
}

async fn run(cli: Cli) -> Result<()> {
    let params = encoder_params(&cli)?;
    let client = connect(cli.server.as_deref()).await?;
    match cli.command {
        Command::GenerateSite(a) => {
            let mut spec = match &a.spec {
                Some(p) => persist::load::<SiteSpec>(p)?,
                None => SiteSpec::new(a.pages.unwrap_or(20), a.seed),
            };
            spec.rng_seed = a.seed;
            if let Some(n) = a.pages {
                spec.page_count = n;
            }
            if let Some(f) = a.shared_fraction {
                spec.shared_resource_fraction = f;
            }
            let site = client.generate_site(&spec).await?;
            persist::save(&a.out, &site)?;
        }
        Command::Ingest(a) => {
            let corpus = Corpus::load(&a.dir).map_err(|e| Failure::new(ErrorCategory::Io, e.to_string()))?;
            let ingested = client
                .ingest(&IngestRequest {
                    corpus,
                    base_url: a.base_url,
                })
                .await?;
            for w in &ingested.warnings {
                tracing::warn!(file = %w.file, "{}", w.message);
            }
            persist::save(&a.out, &ingested.website)?;
        }
        Command::Simulate(a) => {
            let website: Website = persist::load(&a.site)?;
            let resp = client
                .simulate(&SimulateRequest {
                    website,
                    context: a.context(),
                    sessions: a.sessions,
                    pages_per_session: CountRange {
                        min: a.min_pages,
                        max: a.max_pages,
                    },
                    params,
                    seed: a.seed,
                })
                .await?;
            persist::save_traces(&a.out, &resp.records)?;
            if let Some(blind) = &a.blind_out {
                let blinded: Vec<TraceRecord> = resp.records.iter().map(TraceRecord::blind).collect();
                persist::save_traces(blind, &blinded)?;
            }
        }
        Command::Profile(a) => {
            let website: Website = persist::load(&a.site)?;
            let db = client
                .profile(&ProfileRequest {
                    website,
                    context: a.context.context(),
                    samples_per_page: a.samples_per_page,
                    variants: dedup_variants(a.variants.iter().map(|&v| v.into())),
                    budget: a.budget,
                    params,
                    seed: a.seed,
                })
                .await?;
            let b = db.budget();
            tracing::info!(consumed = b.consumed, max = b.max_queries, "profiled");
            persist::save(&a.out, &db)?;
        }
        Command::Predict(a) => {
            let database = persist::load(&a.db)?;
            let records = persist::load_traces(&a.traces)?;
            let predictions = client
                .predict(&PredictRequest {
                    database,
                    traces: records.into_iter().map(|r| r.trace).collect(),
                    hints: ContextHints {
                        bo_hint: None,
                        cache_assumed: a.cache_assumed,
                        cookies_assumed: a.cookies_assumed,
                    },
                    use_trace_hint: !a.no_trace_hint,
                })
                .await?;
            persist::save(&a.out, &predictions)?;
        }
        Command::Evaluate(a) => {
            let report = if let Some(spec_path) = &a.spec {
                let spec: ExperimentSpec = persist::load(spec_path)?;
                // `requires` guarantees the site is present.
                let website: Website = persist::load(a.site.as_deref().expect("site"))?;
                client
                    .run_experiment(&ExperimentRequest { spec, website, params })
                    .await?
            } else {
                let predictions: Vec<PredictionResult> = persist::load(a.predictions.as_deref().expect("predictions"))?;
                let records = persist::load_traces(a.traces.as_deref().expect("traces"))?;
                let truths = records
                    .into_iter()
                    .map(|r| {
                        r.ground_truth.ok_or_else(|| {
                            Failure::new(
                                ErrorCategory::InvalidInput,
                                format!("session {} has no ground truth; pass the non-blind trace file", r.session),
                            )
                        })
                    })
                    .collect::<Result<Vec<_>>>()?;
                let overall = client.score(&ScoreRequest { predictions, truths }).await?;
                ExperimentReport {
                    overall,
                    cells: Vec::new(),
                    budget: BudgetReport {
                        max_queries: 0,
                        consumed: 0,
                    },
                    notes: Vec::new(),
                }
            };
            write_csv(&a.out, &report)?;
            if let Some(p) = &a.report {
                persist::save(p, &report)?;
            }
        }
        Command::Ensemble(a) => {
            let website: Website = persist::load(&a.site)?;
            let mut spec = match &a.spec {
                Some(p) => persist::load::<EnsembleSpec>(p)?,
                None => EnsembleSpec::default(),
            };
            spec.seed = a.seed;
            if let Some(s) = a.samples_per_page {
                spec.samples_per_page = s;
            }
            if let Some(pages) = a.ml_pages {
                spec.ml_pages = Some(pages.into_iter().map(PageId::new).collect());
            }
            match a.budget {
                Some(b) => spec.budget = b,
                // No budget anywhere: allow exactly one full profiling run.
                None if spec.budget == 0 => {
                    spec.budget =
                        website.page_count() as u64 * u64::from(spec.samples_per_page) * spec.variants.len() as u64;
                }
                None => {}
            }
            let report = client.ensemble(&EnsembleRequest { website, spec, params }).await?;
            persist::save(&a.out, &report)?;
        }
        Command::Stability(a) => {
            let website: Website = persist::load(&a.site)?;
            let contexts = match &a.contexts {
                Some(p) => persist::load::<Vec<BrowsingContext>>(p)?,
                None => delay_contexts(&a.delays, a.tabs, a.repeats)?,
            };
            let table = client
                .stability(&StabilityRequest {
                    website,
                    contexts,
                    feature: a.feature.into(),
                    params,
                    seed: a.seed,
                })
                .await?;
            persist::save(&a.out, &table)?;
        }
    }
    Ok(())
}

fn dedup_variants(vs: impl Iterator<Item = ProfileVariant>) -> Vec<ProfileVariant> {
    let mut seen = BTreeSet::new();
    vs.filter(|v| seen.insert(*v)).collect()
}

fn parse_delay(s: &str) -> Result<DelayRange> {
    let bad = || Failure::new(ErrorCategory::Usage, format!("delay `{s}` is not `min:max` in ms"));
    let (lo, hi) = s.split_once(':').ok_or_else(bad)?;
    let min = lo.trim().parse().map_err(|_| bad())?;
    let max = hi.trim().parse().map_err(|_| bad())?;
    Ok(DelayRange { min, max })
}

fn delay_contexts(delays: &[String], tabs: u32, repeats: usize) -> Result<Vec<BrowsingContext>> {
    let mut out = Vec::new();
    for d in delays {
        let range = parse_delay(d)?;
        for _ in 0..repeats.max(1) {
            out.push(BrowsingContext::new("os_a", "browser_a").with_tabs(tabs).with_network(NetworkProfile {
                added_delay_ms: range,
                drop_probability: 0.0,
                retransmit: true,
            }));
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn delay_parsing() {
        let r = parse_delay("5:12.5").unwrap();
        assert_eq!((r.min, r.max), (5.0, 12.5));
        assert_eq!(parse_delay("5").unwrap_err().category, ErrorCategory::Usage);
        assert_eq!(parse_delay("a:b").unwrap_err().exit_code(), 2);
    }

    #[test]
    fn repeats_multiply_contexts() {
        let ctxs = delay_contexts(&["0:0".into(), "1:2".into()], 2, 3).unwrap();
        assert_eq!(ctxs.len(), 6);
        assert!(ctxs.iter().all(|c| c.tab_count == 2));
    }

    #[test]
    fn variants_keep_first_order() {
        let v = dedup_variants(
            [ProfileVariant::PLAIN, ProfileVariant::CACHE_COOKIES, ProfileVariant::PLAIN].into_iter(),
        );
        assert_eq!(v, vec![ProfileVariant::PLAIN, ProfileVariant::CACHE_COOKIES]);
    }

    #[test]
    fn persist_errors_map_to_exit_codes() {
        let io: Failure = PersistError::Io {
            path: "x".into(),
            reason: "gone".into(),
        }
        .into();
        assert_eq!(io.exit_code(), 3);
        let schema: Failure = PersistError::Schema {
            expected: "a".into(),
            found: "b".into(),
        }
        .into();
        assert_eq!(schema.exit_code(), 4);
    }
}
