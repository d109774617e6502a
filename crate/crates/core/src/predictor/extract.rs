use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::{ContextHints, PredictedResource};
use crate::profiler::SnoopyDatabase;
use crate::site::{PageId, ResourceId, Webpage};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PageMatch {
    pub page: PageId,
    /// Trace indices consumed by the page, head first.
    pub positions: Vec<usize>,
    /// The head was not the page's root document.
    pub fallback: bool,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Extraction {
    pub matches: Vec<PageMatch>,
    /// Trace indices of head resources no page could explain.
    pub skipped_heads: Vec<usize>,
}

impl Extraction {
    pub fn pages(&self) -> BTreeSet<PageId> {
        self.matches.iter().map(|m| m.page.clone()).collect()
    }
}

struct Matcher<'a> {
    items: Vec<Option<&'a ResourceId>>,
    consumed: Vec<bool>,
}

impl Matcher<'_> {
    /// Greedy leftmost match of `required` after the head at `h`. Resources
    /// missing from the trace may be covered by an unresolved index.
    fn try_match(&self, h: usize, required: &[&ResourceId]) -> Option<Vec<usize>> {
        let mut taken = vec![h];
        let mut pos = h;
        for r in required {
            let free = |j: &usize| !self.consumed[*j] && !taken.contains(j);
            let next = (pos + 1..self.items.len())
                .filter(free)
                .find(|&j| self.items[j] == Some(*r))
                .or_else(|| {
                    (pos + 1..self.items.len())
                        .filter(free)
                        .find(|&j| self.items[j].is_none())
                })?;
            taken.push(next);
            pos = next;
        }
        Some(taken)
    }
}

/// Recovers the visited pages from the resolved resource sequence.
///
/// Repeatedly takes the first unconsumed resource as the head of a page,
/// considers pages whose download sequence starts with it (or, failing that,
/// contains it), keeps those whose remaining sequence occurs in order in the
/// trace and picks the one with the tightest span. With caching assumed,
/// cacheable resources of already extracted pages need not reappear.
pub fn extract_webpages(
    predicted: &[PredictedResource],
    db: &SnoopyDatabase,
    hints: &ContextHints,
) -> Extraction {
    let site = db.website();
    let mut m = Matcher {
        items: predicted.iter().map(|p| p.resource.as_ref()).collect(),
        consumed: vec![false; predicted.len()],
    };
    let modes: &[bool] = match hints.cache_assumed {
        Some(true) => &[true],
        Some(false) => &[false],
        None => &[false, true],
    };
    let mut cached: BTreeSet<&ResourceId> = BTreeSet::new();
    let mut out = Extraction::default();

    while let Some(h) = (0..m.items.len()).find(|&j| !m.consumed[j] && m.items[j].is_some()) {
        let head = m.items[h].expect("identified");
        let by_root: Vec<&Webpage> = site.pages().filter(|p| p.root() == head).collect();
        let fallback = by_root.is_empty();
        let candidates: Vec<&Webpage> = if fallback {
            site.pages_containing(head)
                .filter_map(|p| site.page(p))
                .collect()
        } else {
            by_root
        };

        let mut best: Option<(usize, &PageId, Vec<usize>)> = None;
        for &use_cache in modes {
            for page in &candidates {
                let seq = &page.download_sequence;
                let start = seq.iter().position(|r| r == head).expect("page contains head");
                let required: Vec<&ResourceId> = seq[start + 1..]
                    .iter()
                    .filter(|r| {
                        !(use_cache
                            && cached.contains(r)
                            && site.resource(r).is_some_and(|x| x.cacheable))
                    })
                    .collect();
                if let Some(positions) = m.try_match(h, &required) {
                    let span = positions.last().copied().unwrap_or(h) - h;
                    let better = best
                        .as_ref()
                        .is_none_or(|(s, id, _)| (span, &page.id) < (*s, *id));
                    if better {
                        best = Some((span, &page.id, positions));
                    }
                }
            }
            if best.is_some() {
                break;
            }
        }

        match best {
            Some((_, page, positions)) => {
                for &j in &positions {
                    m.consumed[j] = true;
                }
                let wp = site.page(page).expect("candidate exists");
                cached.extend(
                    wp.download_sequence
                        .iter()
                        .filter(|r| site.resource(r).is_some_and(|x| x.cacheable)),
                );
                out.matches.push(PageMatch {
                    page: page.clone(),
                    positions: positions.iter().map(|&j| predicted[j].index).collect(),
                    fallback,
                });
            }
            None => {
                tracing::debug!(index = predicted[h].index, resource = %head, "unmatched head resource");
                m.consumed[h] = true;
                out.skipped_heads.push(predicted[h].index);
            }
        }
    }
    out
}
