//! Website structure: page graph, embedded resources, the page/resource
//! bipartite map and per-page download sequences.

mod corpus;
mod generate;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use corpus::{
    export_corpus, ingest_corpus, ingest_site, render_page, Corpus, FileContent, IngestWarning,
    Ingested, ResourceMeta, SiteMeta, SITE_META_FILE,
};
pub use generate::{generate_synthetic_site, CountRange, SiteSpec, SizeDistribution};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SiteError {
    #[error("unknown page `{0}`")]
    UnknownPage(PageId),
    #[error("page `{page}` references unknown resource `{resource}`")]
    UnknownResource { page: PageId, resource: ResourceId },
    #[error("duplicate page `{0}`")]
    DuplicatePage(PageId),
    #[error("duplicate resource `{0}`")]
    DuplicateResource(ResourceId),
    #[error("page `{0}` has an empty download sequence")]
    EmptySequence(PageId),
    #[error("page `{page}` lists resource `{resource}` more than once")]
    RepeatedResource { page: PageId, resource: ResourceId },
    #[error("resource `{0}` is not embedded in any page")]
    OrphanResource(ResourceId),
    #[error("resource `{0}` has zero plaintext size")]
    EmptyResource(ResourceId),
    #[error("binary resource `{0}` cannot carry a tracking cookie")]
    BinaryTrackingCookie(ResourceId),
    #[error("self loop on page `{0}`")]
    SelfLoop(PageId),
    #[error("stored resource map disagrees with the download sequences")]
    InconsistentResourceMap,
    #[error("invalid site spec: {0}")]
    InvalidSpec(String),
    #[error("infeasible site spec: {0}")]
    Infeasible(String),
    #[error("corpus root `{path}` is unreadable: {reason}")]
    UnreadableCorpus { path: String, reason: String },
    #[error("invalid site metadata: {0}")]
    BadMeta(String),
    #[error("corpus contains no hypertext document")]
    NoHypertext,
    #[error("invalid base url `{0}`")]
    InvalidBaseUrl(String),
    #[error("page `{page}` needs {needed} bytes of markup but its root document is {size} bytes")]
    RootTooSmall { page: PageId, needed: u64, size: u64 },
    #[error("i/o error on `{path}`: {reason}")]
    Io { path: String, reason: String },
}

macro_rules! string_id {
    ($name:ident) => {
        #[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        #[serde(transparent)]
        pub struct $name(pub String);

        impl $name {
            pub fn new(id: impl Into<String>) -> Self {
                Self(id.into())
            }

            pub fn as_str(&self) -> &str {
                &self.0
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.0)
            }
        }

        impl From<&str> for $name {
            fn from(s: &str) -> Self {
                Self(s.to_owned())
            }
        }
    };
}

string_id!(PageId);
string_id!(ResourceId);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContentKind {
    Text,
    Binary,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Resource {
    pub id: ResourceId,
    /// Payload bytes before headers and encryption.
    pub plaintext_size: u64,
    pub content_kind: ContentKind,
    pub cacheable: bool,
    /// Only text resources embed tracking cookies.
    pub carries_tracking_cookie: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Webpage {
    pub id: PageId,
    pub url: String,
    /// Root document first, then embedded resources in fetch order.
    pub download_sequence: Vec<ResourceId>,
}

impl Webpage {
    pub fn root(&self) -> &ResourceId {
        &self.download_sequence[0]
    }
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Edge {
    pub from: PageId,
    pub to: PageId,
}

/// Immutable website model. Construct through [`Website::new`]; all
/// invariants hold for every value of this type.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "WebsiteDoc", into = "WebsiteDoc")]
pub struct Website {
    pages: BTreeMap<PageId, Webpage>,
    resources: BTreeMap<ResourceId, Resource>,
    edges: BTreeSet<(PageId, PageId)>,
    resource_map: BTreeMap<PageId, BTreeSet<ResourceId>>,
    pages_by_resource: BTreeMap<ResourceId, BTreeSet<PageId>>,
    successors: BTreeMap<PageId, BTreeSet<PageId>>,
    predecessors: BTreeMap<PageId, BTreeSet<PageId>>,
}

impl Website {
    pub fn new(
        pages: impl IntoIterator<Item = Webpage>,
        resources: impl IntoIterator<Item = Resource>,
        edges: impl IntoIterator<Item = (PageId, PageId)>,
    ) -> Result<Self, SiteError> {
        let mut page_map = BTreeMap::new();
        for page in pages {
            if page_map.contains_key(&page.id) {
                return Err(SiteError::DuplicatePage(page.id));
            }
            page_map.insert(page.id.clone(), page);
        }
        let mut resource_map_by_id = BTreeMap::new();
        for resource in resources {
            if resource.plaintext_size == 0 {
                return Err(SiteError::EmptyResource(resource.id));
            }
            if resource.carries_tracking_cookie && resource.content_kind != ContentKind::Text {
                return Err(SiteError::BinaryTrackingCookie(resource.id));
            }
            if resource_map_by_id.contains_key(&resource.id) {
                return Err(SiteError::DuplicateResource(resource.id));
            }
            resource_map_by_id.insert(resource.id.clone(), resource);
        }

        let mut resource_map: BTreeMap<PageId, BTreeSet<ResourceId>> = BTreeMap::new();
        let mut pages_by_resource: BTreeMap<ResourceId, BTreeSet<PageId>> = BTreeMap::new();
        for page in page_map.values() {
            if page.download_sequence.is_empty() {
                return Err(SiteError::EmptySequence(page.id.clone()));
            }
            let entry = resource_map.entry(page.id.clone()).or_default();
            for rid in &page.download_sequence {
                if !resource_map_by_id.contains_key(rid) {
                    return Err(SiteError::UnknownResource {
                        page: page.id.clone(),
                        resource: rid.clone(),
                    });
                }
                if !entry.insert(rid.clone()) {
                    return Err(SiteError::RepeatedResource {
                        page: page.id.clone(),
                        resource: rid.clone(),
                    });
                }
                pages_by_resource
                    .entry(rid.clone())
                    .or_default()
                    .insert(page.id.clone());
            }
        }
        if let Some(orphan) = resource_map_by_id
            .keys()
            .find(|rid| !pages_by_resource.contains_key(*rid))
        {
            return Err(SiteError::OrphanResource(orphan.clone()));
        }

        let mut edge_set = BTreeSet::new();
        let mut successors: BTreeMap<PageId, BTreeSet<PageId>> = BTreeMap::new();
        let mut predecessors: BTreeMap<PageId, BTreeSet<PageId>> = BTreeMap::new();
        for (from, to) in edges {
            for end in [&from, &to] {
                if !page_map.contains_key(end) {
                    return Err(SiteError::UnknownPage(end.clone()));
                }
            }
            if from == to {
                return Err(SiteError::SelfLoop(from));
            }
            successors.entry(from.clone()).or_default().insert(to.clone());
            predecessors.entry(to.clone()).or_default().insert(from.clone());
            edge_set.insert((from, to));
        }

        Ok(Self {
            pages: page_map,
            resources: resource_map_by_id,
            edges: edge_set,
            resource_map,
            pages_by_resource,
            successors,
            predecessors,
        })
    }

    pub fn pages(&self) -> impl Iterator<Item = &Webpage> {
        self.pages.values()
    }

    pub fn page_ids(&self) -> impl Iterator<Item = &PageId> {
        self.pages.keys()
    }

    pub fn page(&self, id: &PageId) -> Option<&Webpage> {
        self.pages.get(id)
    }

    pub fn page_count(&self) -> usize {
        self.pages.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pages.is_empty()
    }

    pub fn resources(&self) -> impl Iterator<Item = &Resource> {
        self.resources.values()
    }

    pub fn resource(&self, id: &ResourceId) -> Option<&Resource> {
        self.resources.get(id)
    }

    pub fn resource_count(&self) -> usize {
        self.resources.len()
    }

    pub fn edges(&self) -> impl Iterator<Item = &(PageId, PageId)> {
        self.edges.iter()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn has_edge(&self, from: &PageId, to: &PageId) -> bool {
        self.edges.contains(&(from.clone(), to.clone()))
    }

    /// The bipartite map: resources embedded in `page`.
    pub fn resources_of(&self, page: &PageId) -> Option<&BTreeSet<ResourceId>> {
        self.resource_map.get(page)
    }

    /// Pages embedding `resource` (the inverse side of the bipartite map).
    pub fn pages_containing(&self, resource: &ResourceId) -> impl Iterator<Item = &PageId> {
        self.pages_by_resource.get(resource).into_iter().flatten()
    }

    pub fn successors(&self, page: &PageId) -> impl Iterator<Item = &PageId> {
        self.successors.get(page).into_iter().flatten()
    }

    pub fn predecessors(&self, page: &PageId) -> impl Iterator<Item = &PageId> {
        self.predecessors.get(page).into_iter().flatten()
    }

    /// Pages a user may be on next given the pages already visited in the
    /// session: everything when nothing was visited, otherwise the visited
    /// pages plus their direct successors.
    pub fn reachable_pages(
        &self,
        visited: &BTreeSet<PageId>,
    ) -> Result<BTreeSet<PageId>, SiteError> {
        if visited.is_empty() {
            return Ok(self.pages.keys().cloned().collect());
        }
        let mut out = BTreeSet::new();
        for page in visited {
            if !self.pages.contains_key(page) {
                return Err(SiteError::UnknownPage(page.clone()));
            }
            out.insert(page.clone());
            out.extend(self.successors(page).cloned());
        }
        Ok(out)
    }

    /// Sub-site induced by `keep`: those pages, the edges among them and the
    /// resources they embed.
    pub fn restrict(&self, keep: &BTreeSet<PageId>) -> Result<Website, SiteError> {
        for page in keep {
            if !self.pages.contains_key(page) {
                return Err(SiteError::UnknownPage(page.clone()));
            }
        }
        let pages: Vec<Webpage> = keep.iter().map(|p| self.pages[p].clone()).collect();
        let used: BTreeSet<&ResourceId> =
            pages.iter().flat_map(|p| p.download_sequence.iter()).collect();
        let resources: Vec<Resource> = used.iter().map(|r| self.resources[*r].clone()).collect();
        let edges = self
            .edges
            .iter()
            .filter(|(a, b)| keep.contains(a) && keep.contains(b))
            .cloned();
        Website::new(pages, resources, edges)
    }
}

/// Persisted shape of a [`Website`]; field names follow the model types.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct WebsiteDoc {
    pub pages: Vec<Webpage>,
    pub resources: Vec<Resource>,
    pub edges: Vec<Edge>,
    pub resource_map: BTreeMap<PageId, Vec<ResourceId>>,
}

impl From<Website> for WebsiteDoc {
    fn from(site: Website) -> Self {
        WebsiteDoc {
            resource_map: site
                .resource_map
                .iter()
                .map(|(p, rs)| (p.clone(), rs.iter().cloned().collect()))
                .collect(),
            edges: site
                .edges
                .into_iter()
                .map(|(from, to)| Edge { from, to })
                .collect(),
            pages: site.pages.into_values().collect(),
            resources: site.resources.into_values().collect(),
        }
    }
}

impl TryFrom<WebsiteDoc> for Website {
    type Error = SiteError;

    fn try_from(doc: WebsiteDoc) -> Result<Self, Self::Error> {
        let site = Website::new(
            doc.pages,
            doc.resources,
            doc.edges.into_iter().map(|e| (e.from, e.to)),
        )?;
        let stored: BTreeMap<PageId, BTreeSet<ResourceId>> = doc
            .resource_map
            .into_iter()
            .map(|(p, rs)| (p, rs.into_iter().collect()))
            .collect();
        if stored != site.resource_map {
            return Err(SiteError::InconsistentResourceMap);
        }
        Ok(site)
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    pub(crate) fn res(id: &str, size: u64) -> Resource {
        Resource {
            id: ResourceId::new(id),
            plaintext_size: size,
            content_kind: ContentKind::Binary,
            cacheable: true,
            carries_tracking_cookie: false,
        }
    }

    pub(crate) fn page(id: &str, seq: &[&str]) -> Webpage {
        Webpage {
            id: PageId::new(id),
            url: format!("https://site.test{id}"),
            download_sequence: seq.iter().map(|s| ResourceId::new(*s)).collect(),
        }
    }

    pub(crate) fn edge(a: &str, b: &str) -> (PageId, PageId) {
        (PageId::new(a), PageId::new(b))
    }

    fn ids(list: &[&str]) -> BTreeSet<PageId> {
        list.iter().map(|s| PageId::new(*s)).collect()
    }

    /// The two-page example: W_X = {r1, r2}, W_Y = {r1, r3}, W_X -> W_Y.
    fn xy_site() -> Website {
        Website::new(
            [page("/x", &["r1", "r2"]), page("/y", &["r1", "r3"])],
            [res("r1", 10), res("r2", 20), res("r3", 30)],
            [edge("/x", "/y")],
        )
        .unwrap()
    }

    #[test]
    fn bipartite_map_follows_sequences() {
        let site = xy_site();
        let x: Vec<_> = site.resources_of(&"/x".into()).unwrap().iter().cloned().collect();
        assert_eq!(x, vec![ResourceId::new("r1"), ResourceId::new("r2")]);
        let r1: Vec<_> = site.pages_containing(&"r1".into()).cloned().collect();
        assert_eq!(r1, vec![PageId::new("/x"), PageId::new("/y")]);
        assert_eq!(site.edge_count(), 1);
    }

    #[test]
    fn reachable_from_empty_is_everything() {
        let site = xy_site();
        assert_eq!(site.reachable_pages(&BTreeSet::new()).unwrap(), ids(&["/x", "/y"]));
    }

    #[test]
    fn reachable_follows_one_hop() {
        // w3 -> w4, w3 -> w5; w1 -> w2 -> w3.
        let site = Website::new(
            (1..=5).map(|i| page(&format!("/w{i}"), &[&format!("r{i}")])),
            (1..=5).map(|i| res(&format!("r{i}"), 100)),
            [edge("/w1", "/w2"), edge("/w2", "/w3"), edge("/w3", "/w4"), edge("/w3", "/w5")],
        )
        .unwrap();
        assert_eq!(
            site.reachable_pages(&ids(&["/w3"])).unwrap(),
            ids(&["/w3", "/w4", "/w5"])
        );
    }

    #[test]
    fn reachable_on_complete_digraph() {
        let names = ["/a", "/b", "/c", "/d"];
        let mut edges = Vec::new();
        for a in names {
            for b in names {
                if a != b {
                    edges.push(edge(a, b));
                }
            }
        }
        let site = Website::new(
            names.iter().map(|n| page(n, &[n])),
            names.iter().map(|n| res(n, 5)),
            edges,
        )
        .unwrap();
        assert_eq!(site.reachable_pages(&ids(&names)).unwrap(), ids(&names));
        assert_eq!(site.reachable_pages(&ids(&["/a"])).unwrap(), ids(&names));
    }

    #[test]
    fn unknown_visited_page_is_an_error() {
        let site = xy_site();
        assert_eq!(
            site.reachable_pages(&ids(&["/nope"])),
            Err(SiteError::UnknownPage("/nope".into()))
        );
    }

    #[test]
    fn rejects_invariant_violations() {
        let orphan = Website::new([page("/x", &["r1"])], [res("r1", 1), res("r2", 1)], []);
        assert_eq!(orphan, Err(SiteError::OrphanResource("r2".into())));

        let mut bad = res("r1", 1);
        bad.carries_tracking_cookie = true;
        let tracking = Website::new([page("/x", &["r1"])], [bad], []);
        assert_eq!(tracking, Err(SiteError::BinaryTrackingCookie("r1".into())));

        let dangling = Website::new([page("/x", &["r1"])], [res("r1", 1)], [edge("/x", "/z")]);
        assert_eq!(dangling, Err(SiteError::UnknownPage("/z".into())));

        let empty = Website::new([page("/x", &[])], [], []);
        assert_eq!(empty, Err(SiteError::EmptySequence("/x".into())));
    }

    #[test]
    fn serde_rejects_inconsistent_map() {
        let site = xy_site();
        let mut doc = WebsiteDoc::from(site.clone());
        doc.resource_map.insert("/x".into(), vec!["r1".into()]);
        let json = serde_json::to_string(&doc).unwrap();
        assert!(serde_json::from_str::<Website>(&json).is_err());

        let json = serde_json::to_string(&site).unwrap();
        assert_eq!(serde_json::from_str::<Website>(&json).unwrap(), site);
    }

    #[test]
    fn restrict_keeps_induced_structure() {
        let site = xy_site();
        let sub = site.restrict(&ids(&["/y"])).unwrap();
        assert_eq!(sub.page_count(), 1);
        assert_eq!(sub.resource_count(), 2);
        assert_eq!(sub.edge_count(), 0);
    }
}
