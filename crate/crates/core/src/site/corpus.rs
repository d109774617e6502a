//! Local hypertext corpora: loading, ingestion into a [`Website`] and export.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use scraper::{Html, Selector};
use serde::{Deserialize, Serialize};
use url::Url;
use walkdir::WalkDir;

use super::{ContentKind, PageId, Resource, ResourceId, SiteError, Webpage, Website};

pub const SITE_META_FILE: &str = "site-meta.json";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResourceMeta {
    pub cacheable: bool,
    pub tracking_cookie: bool,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SiteMeta {
    pub resources: BTreeMap<String, ResourceMeta>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FileContent {
    Hypertext { text: String },
    /// A hypertext file that is not valid UTF-8.
    Undecodable { size: u64 },
    /// Any other file; only its size matters.
    Opaque { size: u64 },
}

impl FileContent {
    pub fn size(&self) -> u64 {
        match self {
            FileContent::Hypertext { text } => text.len() as u64,
            FileContent::Undecodable { size } | FileContent::Opaque { size } => *size,
        }
    }
}

/// In-memory view of a corpus directory, keyed by absolute path ("/a/b.css").
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Corpus {
    pub files: BTreeMap<String, FileContent>,
    #[serde(default)]
    pub meta: Option<SiteMeta>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestWarning {
    pub file: String,
    pub message: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Ingested {
    pub website: Website,
    pub warnings: Vec<IngestWarning>,
}

fn is_hypertext(path: &str) -> bool {
    let lower = path.to_ascii_lowercase();
    lower.ends_with(".html") || lower.ends_with(".htm")
}

fn kind_of(path: &str) -> ContentKind {
    let ext = path.rsplit_once('.').map(|(_, e)| e.to_ascii_lowercase());
    match ext.as_deref() {
        Some("html" | "htm" | "css" | "js" | "mjs" | "json" | "txt" | "svg" | "xml") => {
            ContentKind::Text
        }
        _ => ContentKind::Binary,
    }
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> SiteError {
    SiteError::Io {
        path: path.display().to_string(),
        reason: e.to_string(),
    }
}

impl Corpus {
    pub fn load(root: &Path) -> Result<Corpus, SiteError> {
        let unreadable = |reason: String| SiteError::UnreadableCorpus {
            path: root.display().to_string(),
            reason,
        };
        let md = fs::metadata(root).map_err(|e| unreadable(e.to_string()))?;
        if !md.is_dir() {
            return Err(unreadable("not a directory".into()));
        }
        let mut corpus = Corpus::default();
        for entry in WalkDir::new(root).sort_by_file_name() {
            let entry = entry.map_err(|e| unreadable(e.to_string()))?;
            if !entry.file_type().is_file() {
                continue;
            }
            let rel = entry.path().strip_prefix(root).expect("walk stays under root");
            let key = format!(
                "/{}",
                rel.components()
                    .map(|c| c.as_os_str().to_string_lossy())
                    .collect::<Vec<_>>()
                    .join("/")
            );
            if key == format!("/{SITE_META_FILE}") {
                let raw = fs::read(entry.path()).map_err(|e| io_err(entry.path(), e))?;
                let meta: SiteMeta =
                    serde_json::from_slice(&raw).map_err(|e| SiteError::BadMeta(e.to_string()))?;
                corpus.meta = Some(meta);
                continue;
            }
            let content = if is_hypertext(&key) {
                let raw = fs::read(entry.path()).map_err(|e| io_err(entry.path(), e))?;
                let size = raw.len() as u64;
                match String::from_utf8(raw) {
                    Ok(text) => FileContent::Hypertext { text },
                    Err(_) => FileContent::Undecodable { size },
                }
            } else {
                let size = entry.metadata().map_err(|e| io_err(entry.path(), e))?.len();
                FileContent::Opaque { size }
            };
            corpus.files.insert(key, content);
        }
        Ok(corpus)
    }
}

/// Reads a corpus directory and builds its website.
pub fn ingest_site(root: &Path, base_url: &str) -> Result<Ingested, SiteError> {
    ingest_corpus(&Corpus::load(root)?, base_url)
}

fn same_origin(a: &Url, b: &Url) -> bool {
    a.scheme() == b.scheme() && a.host_str() == b.host_str() && a.port_or_known_default() == b.port_or_known_default()
}

pub fn ingest_corpus(corpus: &Corpus, base_url: &str) -> Result<Ingested, SiteError> {
    let base = Url::parse(base_url).map_err(|_| SiteError::InvalidBaseUrl(base_url.to_owned()))?;
    if base.cannot_be_a_base() {
        return Err(SiteError::InvalidBaseUrl(base_url.to_owned()));
    }
    let base_str = base_url.trim_end_matches('/');
    let base_path = base.path().trim_end_matches('/').to_owned();
    let selector = Selector::parse(
        "link[href], script[src], img[src], source[src], audio[src], video[src], embed[src], a[href]",
    )
    .expect("static selector");

    let mut warnings = Vec::new();
    let mut warn = |file: &str, message: String| {
        tracing::warn!(file, "{message}");
        warnings.push(IngestWarning {
            file: file.to_owned(),
            message,
        });
    };

    let mut documents = Vec::new();
    for (path, content) in &corpus.files {
        match content {
            FileContent::Hypertext { text } if is_hypertext(path) => documents.push((path, text)),
            FileContent::Undecodable { .. } => warn(path, "malformed document: not valid UTF-8".into()),
            _ => {}
        }
    }
    if documents.is_empty() {
        return Err(SiteError::NoHypertext);
    }
    let page_paths: BTreeSet<&str> = documents.iter().map(|(p, _)| p.as_str()).collect();

    let mut pages = Vec::new();
    let mut used: BTreeSet<String> = BTreeSet::new();
    let mut edges = BTreeSet::new();
    for (path, text) in &documents {
        let page_url = format!("{base_str}{path}");
        let Ok(page_loc) = Url::parse(&page_url) else {
            warn(path, format!("cannot form url `{page_url}`"));
            continue;
        };
        let doc = Html::parse_document(text);
        let mut sequence = vec![ResourceId((*path).clone())];
        let mut seen: BTreeSet<String> = BTreeSet::from([(*path).clone()]);
        used.insert((*path).clone());
        for el in doc.select(&selector) {
            let name = el.value().name();
            let attr = match name {
                "a" | "link" => "href",
                _ => "src",
            };
            if name == "link" {
                let rel = el.value().attr("rel").unwrap_or("").to_ascii_lowercase();
                if !rel
                    .split_whitespace()
                    .any(|r| matches!(r, "stylesheet" | "icon" | "preload"))
                {
                    continue;
                }
            }
            let raw = el.value().attr(attr).unwrap_or("").trim();
            if raw.is_empty() || raw.starts_with('#') {
                continue;
            }
            let target = match page_loc.join(raw) {
                Ok(t) => t,
                Err(e) => {
                    warn(path, format!("unresolvable reference `{raw}`: {e}"));
                    continue;
                }
            };
            let local = same_origin(&target, &base)
                .then(|| target.path().strip_prefix(base_path.as_str()))
                .flatten()
                .filter(|p| p.starts_with('/'));
            let Some(id) = local else {
                warn(path, format!("dropping external reference `{raw}`"));
                continue;
            };
            if name == "a" {
                if !page_paths.contains(id) {
                    warn(path, format!("link target `{id}` is not a page of the corpus"));
                } else if id != path.as_str() {
                    edges.insert((PageId(path.to_string()), PageId(id.to_owned())));
                }
                continue;
            }
            if !corpus.files.contains_key(id) {
                warn(path, format!("embedded resource `{id}` is missing from the corpus"));
                continue;
            }
            if seen.insert(id.to_owned()) {
                sequence.push(ResourceId(id.to_owned()));
                used.insert(id.to_owned());
            }
        }
        pages.push(Webpage {
            id: PageId((*path).clone()),
            url: page_url,
            download_sequence: sequence,
        });
    }

    let empty = SiteMeta::default();
    let meta = corpus.meta.as_ref().unwrap_or(&empty);
    let mut resources = Vec::new();
    for id in &used {
        let kind = kind_of(id);
        let is_root = page_paths.contains(id.as_str());
        let mut flags = meta.resources.get(id).copied().unwrap_or(ResourceMeta {
            cacheable: !is_root,
            tracking_cookie: is_root,
        });
        if flags.tracking_cookie && kind != ContentKind::Text {
            warn(id, "binary resource cannot carry a tracking cookie; flag ignored".into());
            flags.tracking_cookie = false;
        }
        let size = corpus.files[id].size();
        if size == 0 {
            warn(id, "empty resource counted as one byte".into());
        }
        resources.push(Resource {
            id: ResourceId(id.clone()),
            plaintext_size: size.max(1),
            content_kind: kind,
            cacheable: flags.cacheable,
            carries_tracking_cookie: flags.tracking_cookie,
        });
    }

    let website = Website::new(pages, resources, edges)?;
    Ok(Ingested { website, warnings })
}

fn resource_tag(id: &str) -> String {
    if id.ends_with(".css") {
        format!("<link rel=\"stylesheet\" href=\"{id}\">")
    } else if id.ends_with(".js") {
        format!("<script src=\"{id}\"></script>")
    } else {
        format!("<img src=\"{id}\" alt=\"\">")
    }
}

/// HTML for a root document embedding `embedded` in order and linking to
/// `links`, padded to exactly `pad_to` bytes when that is at least the bare
/// markup length.
pub(crate) fn render_markup(page: &str, embedded: &[&str], links: &[&str], pad_to: u64) -> String {
    let mut head = format!(
        "<!DOCTYPE html>\n<html>\n<head><title>{page}</title></head>\n<body>\n"
    );
    for r in embedded {
        head.push_str(&resource_tag(r));
        head.push('\n');
    }
    for l in links {
        head.push_str(&format!("<a href=\"{l}\">{l}</a>\n"));
    }
    let tail = "</body>\n</html>\n";
    let bare = (head.len() + tail.len()) as u64;
    if pad_to > bare {
        let gap = (pad_to - bare) as usize;
        if gap >= 8 {
            head.push_str(&format!("<!--{}-->\n", "x".repeat(gap - 8)));
        } else {
            head.push_str(&" ".repeat(gap));
        }
    }
    head.push_str(tail);
    head
}

pub fn render_page(site: &Website, page: &PageId) -> Result<String, SiteError> {
    let wp = site.page(page).ok_or_else(|| SiteError::UnknownPage(page.clone()))?;
    let embedded: Vec<&str> = wp.download_sequence[1..].iter().map(|r| r.as_str()).collect();
    let links: Vec<&str> = site.successors(page).map(|p| p.as_str()).collect();
    let size = site.resource(wp.root()).map_or(0, |r| r.plaintext_size);
    let html = render_markup(page.as_str(), &embedded, &links, size);
    if html.len() as u64 != size {
        return Err(SiteError::RootTooSmall {
            page: page.clone(),
            needed: html.len() as u64,
            size,
        });
    }
    Ok(html)
}

/// Writes `site` as a corpus directory that [`ingest_site`] reads back to
/// an equal website (given the same base url).
pub fn export_corpus(site: &Website, dir: &Path) -> Result<(), SiteError> {
    let roots: BTreeSet<&ResourceId> = site.pages().map(|p| p.root()).collect();
    let target = |id: &str| dir.join(id.trim_start_matches('/'));
    for page in site.pages() {
        if page.root().as_str() != page.id.as_str() {
            return Err(SiteError::InvalidSpec(format!(
                "page `{}` is not named after its root document",
                page.id
            )));
        }
        let path = target(page.id.as_str());
        write_file(&path, render_page(site, &page.id)?.as_bytes())?;
    }
    let mut meta = SiteMeta::default();
    for r in site.resources() {
        meta.resources.insert(
            r.id.0.clone(),
            ResourceMeta {
                cacheable: r.cacheable,
                tracking_cookie: r.carries_tracking_cookie,
            },
        );
        if !roots.contains(&r.id) {
            write_file(&target(r.id.as_str()), &vec![b'x'; r.plaintext_size as usize])?;
        }
    }
    let json = serde_json::to_vec_pretty(&meta).expect("meta serializes");
    write_file(&dir.join(SITE_META_FILE), &json)
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), SiteError> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| io_err(parent, e))?;
    }
    fs::write(path, bytes).map_err(|e| io_err(path, e))
}
