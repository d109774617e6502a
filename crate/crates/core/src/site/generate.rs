//! Seeded synthetic website generator.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal};
use serde::{Deserialize, Serialize};

use super::corpus::render_markup;
use super::{ContentKind, PageId, Resource, ResourceId, SiteError, Webpage, Website};

/// Inclusive integer range.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CountRange {
    pub min: u32,
    pub max: u32,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SizeDistribution {
    Uniform { min: u64, max: u64 },
    LogNormal { mu: f64, sigma: f64 },
    /// Distinct sizes `base + step * k`, drawn without replacement. Keeps
    /// every resource size unique, which makes encrypted sizes collision free.
    Lattice { base: u64, step: u64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SiteSpec {
    pub page_count: u32,
    /// Resources per page, root document included.
    pub resources_per_page: CountRange,
    /// Fraction of embedded resources that are shared by two pages.
    pub shared_resource_fraction: f64,
    pub size_distribution: SizeDistribution,
    pub edge_density: f64,
    pub cacheable_fraction: f64,
    pub tracking_cookie_fraction: f64,
    /// Fraction of embedded resources that are text (css/js).
    pub text_fraction: f64,
    pub base_url: String,
    pub rng_seed: u64,
}

impl Default for SiteSpec {
    fn default() -> Self {
        Self {
            page_count: 10,
            resources_per_page: CountRange { min: 3, max: 6 },
            shared_resource_fraction: 0.2,
            size_distribution: SizeDistribution::Lattice {
                base: 2000,
                step: 300,
            },
            edge_density: 0.15,
            cacheable_fraction: 0.6,
            tracking_cookie_fraction: 0.3,
            text_fraction: 0.5,
            base_url: "https://site.test".to_owned(),
            rng_seed: 0,
        }
    }
}

impl SiteSpec {
    pub fn new(page_count: u32, rng_seed: u64) -> Self {
        Self {
            page_count,
            rng_seed,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), SiteError> {
        let bad = |m: &str| Err(SiteError::InvalidSpec(m.to_owned()));
        if self.page_count < 1 {
            return bad("page_count must be at least 1");
        }
        let r = self.resources_per_page;
        if r.min < 1 || r.min > r.max {
            return bad("resources_per_page needs 1 <= min <= max");
        }
        for (name, v) in [
            ("shared_resource_fraction", self.shared_resource_fraction),
            ("edge_density", self.edge_density),
            ("cacheable_fraction", self.cacheable_fraction),
            ("tracking_cookie_fraction", self.tracking_cookie_fraction),
            ("text_fraction", self.text_fraction),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(SiteError::InvalidSpec(format!("{name} must lie in [0, 1]")));
            }
        }
        match self.size_distribution {
            SizeDistribution::Uniform { min, max } if min < 1 || min > max => {
                bad("uniform sizes need 1 <= min <= max")
            }
            SizeDistribution::LogNormal { mu, sigma }
                if !mu.is_finite() || !sigma.is_finite() || sigma < 0.0 =>
            {
                bad("log-normal sizes need finite mu and sigma >= 0")
            }
            SizeDistribution::Lattice { base, step } if base < 1 || step < 1 => {
                bad("lattice sizes need base >= 1 and step >= 1")
            }
            _ => {
                url::Url::parse(&self.base_url)
                    .map_err(|_| SiteError::InvalidBaseUrl(self.base_url.clone()))?;
                Ok(())
            }
        }
    }
}

struct SizeSampler {
    dist: SizeDistribution,
    pool: Vec<u64>,
}

const ROOT_REDRAWS: usize = 64;

impl SizeSampler {
    fn new(dist: &SizeDistribution, count: usize, rng: &mut ChaCha8Rng) -> Self {
        let mut pool = Vec::new();
        if let SizeDistribution::Lattice { base, step } = *dist {
            let slots = count + count.div_ceil(3) + 1;
            pool = (0..slots as u64).map(|k| base + step * k).collect();
            pool.shuffle(rng);
        }
        Self {
            dist: dist.clone(),
            pool,
        }
    }

    fn draw(&mut self, rng: &mut ChaCha8Rng, at_least: u64) -> Option<u64> {
        match self.dist {
            SizeDistribution::Lattice { .. } => {
                let n = self.pool.len();
                let pos = (0..n.min(ROOT_REDRAWS))
                    .map(|i| n - 1 - i)
                    .find(|&i| self.pool[i] >= at_least)?;
                Some(self.pool.remove(pos))
            }
            SizeDistribution::Uniform { min, max } => (0..ROOT_REDRAWS)
                .map(|_| rng.gen_range(min..=max))
                .find(|&s| s >= at_least),
            SizeDistribution::LogNormal { mu, sigma } => {
                let d = LogNormal::new(mu, sigma).ok()?;
                (0..ROOT_REDRAWS)
                    .map(|_| (d.sample(rng).round() as u64).max(1))
                    .find(|&s| s >= at_least)
            }
        }
    }
}

struct Draft {
    kind: ContentKind,
    ext: &'static str,
}

/// Builds a website from `spec`. Identical specs give identical sites.
pub fn generate_synthetic_site(spec: &SiteSpec) -> Result<Website, SiteError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.rng_seed);
    let n_pages = spec.page_count as usize;
    let width = n_pages.to_string().len().max(2);
    let page_ids: Vec<PageId> = (1..=n_pages)
        .map(|i| PageId(format!("/p{i:0width$}.html")))
        .collect();

    let counts: Vec<usize> = (0..n_pages)
        .map(|_| {
            rng.gen_range(spec.resources_per_page.min..=spec.resources_per_page.max) as usize
        })
        .collect();
    let slots: usize = counts.iter().map(|c| c - 1).sum();
    let f = spec.shared_resource_fraction;
    if f > 0.0 && slots == 0 {
        return Err(SiteError::Infeasible(
            "sharing requested but pages have no embedded resources".into(),
        ));
    }
    let unique = (slots as f64 / (1.0 + f)).round() as usize;
    let shared = slots - unique;

    // Shared resources go on the two pages with the most free slots; a random
    // rank breaks ties so shared pairs spread across the site.
    let mut free: Vec<usize> = counts.iter().map(|c| c - 1).collect();
    let mut rank: Vec<usize> = (0..n_pages).collect();
    rank.shuffle(&mut rng);
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); n_pages];
    let mut drafts: Vec<Draft> = Vec::new();
    let mut new_draft = |rng: &mut ChaCha8Rng| {
        let text = rng.gen_bool(spec.text_fraction);
        let (kind, ext) = if text {
            (ContentKind::Text, if rng.gen_bool(0.5) { "css" } else { "js" })
        } else {
            (ContentKind::Binary, if rng.gen_bool(0.5) { "png" } else { "jpg" })
        };
        drafts.push(Draft { kind, ext });
        drafts.len() - 1
    };
    for _ in 0..shared {
        let mut order: Vec<usize> = (0..n_pages).filter(|&p| free[p] > 0).collect();
        order.sort_by_key(|&p| (std::cmp::Reverse(free[p]), rank[p]));
        if order.len() < 2 {
            return Err(SiteError::Infeasible(format!(
                "cannot place {shared} shared resources on distinct page pairs"
            )));
        }
        let r = new_draft(&mut rng);
        for &p in &order[..2] {
            free[p] -= 1;
            members[p].push(r);
        }
    }
    for p in 0..n_pages {
        for _ in 0..free[p] {
            let r = new_draft(&mut rng);
            members[p].push(r);
        }
        members[p].shuffle(&mut rng);
    }

    let width_r = drafts.len().to_string().len().max(4);
    let res_ids: Vec<ResourceId> = drafts
        .iter()
        .enumerate()
        .map(|(i, d)| ResourceId(format!("/r/{:0width_r$}.{}", i + 1, d.ext)))
        .collect();

    let mut edges = BTreeSet::new();
    if spec.edge_density > 0.0 && n_pages > 1 {
        for i in 0..n_pages {
            edges.insert((i, (i + 1) % n_pages));
        }
        for i in 0..n_pages {
            for j in 0..n_pages {
                if i != j && rng.gen_bool(spec.edge_density) {
                    edges.insert((i, j));
                }
            }
        }
    }

    let total = n_pages + drafts.len();
    let mut sizes = SizeSampler::new(&spec.size_distribution, total, &mut rng);
    let mut resources = Vec::with_capacity(total);
    let mut pages = Vec::with_capacity(n_pages);
    for (p, pid) in page_ids.iter().enumerate() {
        let embedded: Vec<&str> = members[p].iter().map(|&r| res_ids[r].as_str()).collect();
        let links: Vec<&str> = edges
            .iter()
            .filter(|(a, _)| *a == p)
            .map(|(_, b)| page_ids[*b].as_str())
            .collect();
        let needed = render_markup(pid.as_str(), &embedded, &links, 0).len() as u64;
        let size = sizes.draw(&mut rng, needed).ok_or_else(|| SiteError::RootTooSmall {
            page: pid.clone(),
            needed,
            size: 0,
        })?;
        resources.push(Resource {
            id: ResourceId(pid.0.clone()),
            plaintext_size: size,
            content_kind: ContentKind::Text,
            cacheable: false,
            carries_tracking_cookie: rng.gen_bool(spec.tracking_cookie_fraction),
        });
        let mut seq = vec![ResourceId(pid.0.clone())];
        seq.extend(members[p].iter().map(|&r| res_ids[r].clone()));
        pages.push(Webpage {
            id: pid.clone(),
            url: format!("{}{}", spec.base_url.trim_end_matches('/'), pid),
            download_sequence: seq,
        });
    }
    for (i, d) in drafts.iter().enumerate() {
        let size = sizes.draw(&mut rng, 1).ok_or_else(|| {
            SiteError::Infeasible("size distribution exhausted".into())
        })?;
        let text = d.kind == ContentKind::Text;
        resources.push(Resource {
            id: res_ids[i].clone(),
            plaintext_size: size,
            content_kind: d.kind,
            cacheable: rng.gen_bool(spec.cacheable_fraction),
            carries_tracking_cookie: text && rng.gen_bool(spec.tracking_cookie_fraction),
        });
    }

    let edge_ids = edges
        .into_iter()
        .map(|(a, b)| (page_ids[a].clone(), page_ids[b].clone()));
    Website::new(pages, resources, edge_ids)
}
