use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{
    build_signatures, collect_samples, compute_cookie_var, construct_dictionary, fit_encoder,
    strip_records, BudgetReport, CookieVarTable, EncoderFit, FeatureDB, ProfileError,
    ProfileVariant, QueryBudget, ReverseFeatureDB,
};
use crate::sim::{BrowsingContext, EncoderParams};
use crate::site::{ResourceId, Website};

/// Extra width of the signature search window beyond the cookie maxima,
/// covering record-count changes between the profiling OS and any other.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchSlack {
    pub below: u64,
    pub above: u64,
}

/// Stored form of a [`SnoopyDatabase`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatabaseDoc {
    pub website: Website,
    pub feature_db: FeatureDB,
    pub reverse_db: ReverseFeatureDB,
    pub cookie_var: CookieVarTable,
    pub profiling_context: BrowsingContext,
    pub encoder_fit: EncoderFit,
    pub params: EncoderParams,
    pub budget: BudgetReport,
    pub variants: Vec<ProfileVariant>,
    pub samples_per_page: u32,
}

/// Everything prediction needs. Immutable once built.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "DatabaseDoc", into = "DatabaseDoc")]
pub struct SnoopyDatabase {
    doc: DatabaseDoc,
    base_signatures: BTreeMap<ResourceId, u64>,
    profiling_payload: u64,
    slack: SearchSlack,
}

impl TryFrom<DatabaseDoc> for SnoopyDatabase {
    type Error = ProfileError;

    fn try_from(doc: DatabaseDoc) -> Result<Self, ProfileError> {
        let bad = |m: String| Err(ProfileError::Inconsistent(m));
        doc.params.validate()?;
        doc.profiling_context.validate(&doc.params)?;
        for e in &doc.feature_db.entries {
            if doc.website.resource(&e.resource_id).is_none() {
                return bad(format!("feature entry for unknown resource `{}`", e.resource_id));
            }
            if doc.website.page(&e.page).is_none() {
                return bad(format!("feature entry for unknown page `{}`", e.page));
            }
            if e.sig == 0 {
                return bad(format!("zero signature for `{}`", e.resource_id));
            }
        }
        if construct_dictionary(&doc.feature_db) != doc.reverse_db {
            return bad("reverse database does not match the feature database".into());
        }
        for rid in doc.cookie_var.entries.keys() {
            if doc.website.resource(rid).is_none() {
                return bad(format!("cookie entry for unknown resource `{rid}`"));
            }
        }
        if doc.budget.consumed > doc.budget.max_queries {
            return bad("budget report exceeds its cap".into());
        }

        let mut base_signatures: BTreeMap<ResourceId, u64> = BTreeMap::new();
        for e in &doc.feature_db.entries {
            let m = base_signatures.entry(e.resource_id.clone()).or_insert(e.sig);
            *m = (*m).min(e.sig);
        }
        let profiling_payload = doc.params.max_record_payload(&doc.profiling_context.os)?;
        let o = doc.params.record_overhead;
        let (max_ct, max_cs) = (doc.cookie_var.max_ct(), doc.cookie_var.max_cs());
        let (mut grow, mut shrink) = (0u64, 0u64);
        for &sig in base_signatures.values() {
            let p = strip_records(sig, profiling_payload, o).unwrap_or(sig);
            let n_prof = p.div_ceil(profiling_payload);
            for &m in doc.params.operating_systems.values() {
                grow = grow.max((p + max_ct + max_cs).div_ceil(m).saturating_sub(n_prof));
                shrink = shrink.max(n_prof.saturating_sub(p.div_ceil(m)));
            }
        }
        let slack = SearchSlack {
            below: max_cs + grow * o,
            above: (shrink * o).saturating_sub(max_cs),
        };
        Ok(Self {
            doc,
            base_signatures,
            profiling_payload,
            slack,
        })
    }
}

impl From<SnoopyDatabase> for DatabaseDoc {
    fn from(db: SnoopyDatabase) -> Self {
        db.doc
    }
}

impl SnoopyDatabase {
    pub fn website(&self) -> &Website {
        &self.doc.website
    }

    pub fn feature_db(&self) -> &FeatureDB {
        &self.doc.feature_db
    }

    pub fn reverse_db(&self) -> &ReverseFeatureDB {
        &self.doc.reverse_db
    }

    pub fn cookie_var(&self) -> &CookieVarTable {
        &self.doc.cookie_var
    }

    pub fn profiling_context(&self) -> &BrowsingContext {
        &self.doc.profiling_context
    }

    pub fn encoder_fit(&self) -> &EncoderFit {
        &self.doc.encoder_fit
    }

    pub fn params(&self) -> &EncoderParams {
        &self.doc.params
    }

    pub fn budget(&self) -> BudgetReport {
        self.doc.budget
    }

    pub fn variants(&self) -> &[ProfileVariant] {
        &self.doc.variants
    }

    pub fn samples_per_page(&self) -> u32 {
        self.doc.samples_per_page
    }

    pub fn doc(&self) -> &DatabaseDoc {
        &self.doc
    }

    /// Smallest profiled signature of a resource.
    pub fn base_signature(&self, r: &ResourceId) -> Option<u64> {
        self.base_signatures.get(r).copied()
    }

    pub fn profiling_payload(&self) -> u64 {
        self.profiling_payload
    }

    pub fn slack(&self) -> SearchSlack {
        self.slack
    }

    /// Closed signature range searched for an observed value `f`.
    pub fn search_window(&self, f: u64) -> (u64, u64) {
        let c = &self.doc.cookie_var;
        (
            f.saturating_sub(c.max_ct() + self.slack.below),
            f + c.max_cs() + self.slack.above,
        )
    }
}

/// Full profiling pass: sample, sign, invert, fit, derive cookie deltas.
#[allow(clippy::too_many_arguments)]
pub fn profile_website(
    website: &Website,
    context: &BrowsingContext,
    samples_per_page: u32,
    variants: &[ProfileVariant],
    budget: &QueryBudget,
    params: &EncoderParams,
    seed: u64,
) -> Result<SnoopyDatabase, ProfileError> {
    params.validate()?;
    let samples = collect_samples(website, context, samples_per_page, variants, budget, params, seed)?;
    let (feature_db, skipped) = build_signatures(&samples)?;
    if !skipped.is_empty() {
        tracing::warn!(count = skipped.len(), "profiling samples skipped");
    }
    let covered = construct_dictionary(&feature_db);
    let seen: std::collections::BTreeSet<&ResourceId> =
        covered.iter().flat_map(|(_, l)| l.iter().map(|i| &i.resource)).collect();
    if seen.len() < website.resource_count() {
        tracing::warn!(
            missing = website.resource_count() - seen.len(),
            "some resources have no usable sample"
        );
    }
    let m = params.max_record_payload(&context.os)?;
    let encoder_fit = fit_encoder(website, &feature_db, params, m)?;
    let cookie_var = compute_cookie_var(website, &encoder_fit, params);
    let doc = DatabaseDoc {
        website: website.clone(),
        reverse_db: covered,
        feature_db,
        cookie_var,
        profiling_context: BrowsingContext {
            tab_count: 1,
            ..context.clone()
        },
        encoder_fit,
        params: params.clone(),
        budget: budget.report(),
        variants: variants.to_vec(),
        samples_per_page,
    };
    SnoopyDatabase::try_from(doc)
}
