use std::path::PathBuf;

use clap::{ArgGroup, Args, Parser, Subcommand, ValueEnum};

use snoopy_core::eval::StabilityFeature;
use snoopy_core::profiler::ProfileVariant;
use snoopy_core::sim::{BrowsingContext, DelayRange, NetworkProfile};

#[derive(Parser, Debug)]
#[command(name = "snoopy", version, about = "Webpage fingerprinting of encrypted traffic under a finite query budget")]
pub struct Cli {
    /// Service base URL. Without it an embedded server is started on a
    /// loopback port for the duration of the command.
    #[arg(long, global = true)]
    pub server: Option<String>,
    /// Log filter (`error`, `warn`, `info`, `debug`). SNOOPY_LOG overrides.
    #[arg(long, global = true, default_value = "warn")]
    pub log_level: String,
    /// Encoder parameters document replacing the built-in defaults.
    #[arg(long, global = true)]
    pub params: Option<PathBuf>,
    /// Override the per-record overhead in bytes.
    #[arg(long, global = true)]
    pub record_overhead: Option<u64>,
    /// Override the response header size in bytes.
    #[arg(long, global = true)]
    pub header_base: Option<u64>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate a synthetic website.
    GenerateSite(GenerateArgs),
    /// Build a website model from a local corpus directory.
    Ingest(IngestArgs),
    /// Simulate browsing sessions into a trace file.
    Simulate(SimulateArgs),
    /// Profile a website within a query budget.
    Profile(ProfileArgs),
    /// Predict visited pages for every trace in a trace file.
    Predict(PredictArgs),
    /// Run an experiment grid, or score predictions against ground truth.
    Evaluate(EvaluateArgs),
    /// Run the classifier ensemble study.
    Ensemble(EnsembleArgs),
    /// Measure how stable a traffic feature is across contexts.
    Stability(StabilityArgs),
}

#[derive(Args, Debug)]
pub struct GenerateArgs {
    #[arg(long)]
    pub pages: Option<u32>,
    #[arg(long)]
    pub seed: u64,
    /// Site-spec document; `--pages` and `--seed` override its fields.
    #[arg(long)]
    pub spec: Option<PathBuf>,
    #[arg(long)]
    pub shared_fraction: Option<f64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct IngestArgs {
    #[arg(long)]
    pub dir: PathBuf,
    #[arg(long)]
    pub base_url: String,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug, Clone)]
pub struct ContextArgs {
    #[arg(long, default_value = "os_a")]
    pub os: String,
    #[arg(long, default_value = "browser_a")]
    pub browser: String,
    #[arg(long)]
    pub cache: bool,
    #[arg(long)]
    pub cookies: bool,
}

impl ContextArgs {
    pub fn context(&self) -> BrowsingContext {
        BrowsingContext::new(&self.os, &self.browser).with_cache(self.cache, self.cookies)
    }
}

#[derive(Args, Debug)]
pub struct SimulateArgs {
    #[arg(long)]
    pub site: PathBuf,
    #[arg(long, default_value_t = 10)]
    pub sessions: usize,
    #[arg(long)]
    pub seed: u64,
    #[command(flatten)]
    pub context: ContextArgs,
    #[arg(long, default_value_t = 1)]
    pub tabs: u32,
    #[arg(long, default_value_t = 1)]
    pub min_pages: u32,
    #[arg(long, default_value_t = 5)]
    pub max_pages: u32,
    #[arg(long, default_value_t = 0.0)]
    pub drop_probability: f64,
    /// Lost records stay lost instead of being retransmitted.
    #[arg(long)]
    pub no_retransmit: bool,
    #[arg(long, default_value_t = 0.0)]
    pub delay_min: f64,
    #[arg(long, default_value_t = 0.0)]
    pub delay_max: f64,
    /// Trace file with ground truth.
    #[arg(long)]
    pub out: PathBuf,
    /// Optional second trace file holding only what an observer sees.
    #[arg(long)]
    pub blind_out: Option<PathBuf>,
}

impl SimulateArgs {
    pub fn context(&self) -> BrowsingContext {
        self.context.context().with_tabs(self.tabs).with_network(NetworkProfile {
            added_delay_ms: DelayRange {
                min: self.delay_min,
                max: self.delay_max,
            },
            drop_probability: self.drop_probability,
            retransmit: !self.no_retransmit,
        })
    }
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum VariantArg {
    Plain,
    CacheCookies,
}

impl From<VariantArg> for ProfileVariant {
    fn from(v: VariantArg) -> Self {
        match v {
            VariantArg::Plain => ProfileVariant::PLAIN,
            VariantArg::CacheCookies => ProfileVariant::CACHE_COOKIES,
        }
    }
}

#[derive(Args, Debug)]
pub struct ProfileArgs {
    #[arg(long)]
    pub site: PathBuf,
    #[arg(long)]
    pub samples_per_page: u32,
    #[arg(long)]
    pub budget: u64,
    #[arg(long)]
    pub seed: u64,
    #[command(flatten)]
    pub context: ContextArgs,
    /// Profiling passes, comma separated.
    #[arg(long, value_enum, value_delimiter = ',', default_values_t = [VariantArg::CacheCookies, VariantArg::Plain])]
    pub variants: Vec<VariantArg>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct PredictArgs {
    #[arg(long)]
    pub db: PathBuf,
    #[arg(long)]
    pub traces: PathBuf,
    #[arg(long)]
    pub cache_assumed: Option<bool>,
    #[arg(long)]
    pub cookies_assumed: Option<bool>,
    /// Ignore the (os, browser) annotation carried by each trace.
    #[arg(long)]
    pub no_trace_hint: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
#[command(group(ArgGroup::new("mode").required(true).args(["spec", "predictions"])))]
pub struct EvaluateArgs {
    /// Experiment-spec document; needs `--site`.
    #[arg(long, requires = "site")]
    pub spec: Option<PathBuf>,
    #[arg(long)]
    pub site: Option<PathBuf>,
    /// Predictions document; needs `--traces` with ground truth.
    #[arg(long, requires = "traces")]
    pub predictions: Option<PathBuf>,
    #[arg(long)]
    pub traces: Option<PathBuf>,
    /// CSV table: one overall row, then one row per grid cell.
    #[arg(long)]
    pub out: PathBuf,
    /// Optional full report document.
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct EnsembleArgs {
    #[arg(long)]
    pub site: PathBuf,
    /// Ensemble-spec document; the flags below fill a default one.
    #[arg(long)]
    pub spec: Option<PathBuf>,
    #[arg(long)]
    pub seed: u64,
    #[arg(long)]
    pub budget: Option<u64>,
    #[arg(long)]
    pub samples_per_page: Option<u32>,
    /// Pages handed to the classifier, comma separated. Derived from
    /// size-matching failures when omitted.
    #[arg(long, value_delimiter = ',')]
    pub ml_pages: Option<Vec<String>>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum FeatureArg {
    ResourceSize,
    BurstPattern,
    Rtdt,
}

impl From<FeatureArg> for StabilityFeature {
    fn from(f: FeatureArg) -> Self {
        match f {
            FeatureArg::ResourceSize => StabilityFeature::ResourceSize,
            FeatureArg::BurstPattern => StabilityFeature::BurstPattern,
            FeatureArg::Rtdt => StabilityFeature::Rtdt,
        }
    }
}

#[derive(Args, Debug)]
pub struct StabilityArgs {
    #[arg(long)]
    pub site: PathBuf,
    #[arg(long, value_enum)]
    pub feature: FeatureArg,
    /// Contexts document. Without it, one context per `--delays` entry.
    #[arg(long)]
    pub contexts: Option<PathBuf>,
    /// Delay ranges in ms as `min:max`, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "0:0,0:25")]
    pub delays: Vec<String>,
    #[arg(long, default_value_t = 1)]
    pub tabs: u32,
    /// Repeat every delay context this many times.
    #[arg(long, default_value_t = 1)]
    pub repeats: usize,
    #[arg(long)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}
