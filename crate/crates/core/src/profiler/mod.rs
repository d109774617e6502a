//! Website profiling under a finite query budget.
//!
//! Dummy clients access every page in isolated single-page sessions, the
//! labelled sub-traces become signatures, the signatures are inverted into a
//! size-keyed dictionary and cookie-induced size variations are derived
//! analytically from a fitted encoder.

mod budget;
mod cookies;
mod database;
mod samples;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::sim::SimError;

pub use budget::{BudgetReport, QueryBudget};
pub use cookies::{
    compute_cookie_var, fit_encoder, strip_records, CookieVarEntry, CookieVarTable, EncoderFit,
    SessionDelta, TrackingDelta,
};
pub use database::{profile_website, DatabaseDoc, SearchSlack, SnoopyDatabase};
pub use samples::{
    build_signatures, collect_samples, construct_dictionary, FeatureDB, FeatureEntry, Instance,
    ReverseFeatureDB, TSampleEntry, TSamples,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProfileError {
    #[error("query budget exceeded: {required} accesses needed, {available} available (short by {shortfall})")]
    BudgetExceeded {
        required: u64,
        available: u64,
        shortfall: u64,
    },
    #[error("website has no pages")]
    EmptyWebsite,
    #[error("invalid profiling request: {0}")]
    InvalidArgument(String),
    #[error("no usable samples")]
    NoSamples,
    #[error("cannot fit the encoder: {0}")]
    EncoderFit(String),
    #[error("inconsistent database: {0}")]
    Inconsistent(String),
    #[error(transparent)]
    Sim(#[from] SimError),
}

/// Browser configuration a dummy client uses for one pass over the site.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ProfileVariant {
    pub cache_enabled: bool,
    pub cookies_allowed: bool,
}

impl ProfileVariant {
    pub const CACHE_COOKIES: Self = Self {
        cache_enabled: true,
        cookies_allowed: true,
    };
    pub const PLAIN: Self = Self {
        cache_enabled: false,
        cookies_allowed: false,
    };

    /// Cache on with cookies allowed, then cache off with cookies blocked.
    pub fn standard() -> Vec<Self> {
        vec![Self::CACHE_COOKIES, Self::PLAIN]
    }
}
