use std::collections::BTreeSet;

use proptest::prelude::*;

use snoopy_core::eval::{fingerprinting_accuracy, AccuracyReport, Counts};
use snoopy_core::predictor::{PredictionResult, PredictedResource, ResourceStatus};
use snoopy_core::profiler::{collect_samples, profile_website, ProfileError, ProfileVariant, QueryBudget};
use snoopy_core::sim::{
    encode_resource, sample_session_plan, segment, simulate_session, BrowsingContext,
    EncoderParams, GroundTruth, SessionPlan, SubTrace,
};
use snoopy_core::site::{generate_synthetic_site, ContentKind, PageId, Resource, ResourceId, SiteSpec, Website};

fn small_site(pages: u32, seed: u64) -> Website {
    generate_synthetic_site(&SiteSpec::new(pages, seed)).unwrap()
}

fn resource(size: u64, kind: ContentKind) -> Resource {
    Resource {
        id: ResourceId::new("/r/x"),
        plaintext_size: size,
        content_kind: kind,
        cacheable: false,
        carries_tracking_cookie: kind == ContentKind::Text,
    }
}

fn f_values(subs: &[SubTrace]) -> Vec<u64> {
    let mut v: Vec<u64> = subs.iter().map(SubTrace::f_value).collect();
    v.sort_unstable();
    v
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn segment_is_additive(payload in 0u64..200_000, m in 1u64..20_000, o in 0u64..64) {
        let recs = segment(payload, m, o);
        prop_assert_eq!(recs.len() as u64, payload.div_ceil(m));
        prop_assert_eq!(recs.iter().sum::<u64>(), payload + recs.len() as u64 * o);
        prop_assert!(recs.iter().all(|&r| r <= m + o && r > o));
    }

    #[test]
    fn os_delta_is_extra_overhead(size in 1u64..120_000) {
        let p = EncoderParams::default();
        let r = resource(size, ContentKind::Binary);
        let a = encode_resource(&r, &BrowsingContext::new("os_a", "browser_a"), &p, false, None).unwrap();
        let b = encode_resource(&r, &BrowsingContext::new("os_b", "browser_a"), &p, false, None).unwrap();
        let extra = (b.record_sizes.len() - a.record_sizes.len()) as u64;
        prop_assert_eq!(b.f_value() - a.f_value(), extra * p.record_overhead);
    }

    #[test]
    fn cookie_deltas_grow_with_identifier(size in 1u64..50_000) {
        let p = EncoderParams::default();
        let r = resource(size, ContentKind::Binary);
        let mut by_len: Vec<(usize, u64)> = p
            .user_agents
            .iter()
            .map(|ua| {
                let ctx = BrowsingContext::new(&ua.os, &ua.browser).with_cache(false, true);
                let plain = BrowsingContext::new(&ua.os, &ua.browser);
                let with = encode_resource(&r, &ctx, &p, true, None).unwrap().f_value();
                let without = encode_resource(&r, &plain, &p, true, None).unwrap().f_value();
                (ua.bo.len(), with - without)
            })
            .collect();
        by_len.sort_unstable();
        for w in by_len.windows(2) {
            prop_assert!(w[0].1 <= w[1].1);
        }
    }

    #[test]
    fn reachability_is_monotone(seed in 0u64..500, picks in proptest::collection::vec(0usize..8, 1..6)) {
        let site = small_site(8, seed);
        let ids: Vec<PageId> = site.page_ids().cloned().collect();
        let small: BTreeSet<PageId> = picks.iter().take(1).map(|&i| ids[i].clone()).collect();
        let big: BTreeSet<PageId> = picks.iter().map(|&i| ids[i].clone()).collect();
        let a = site.reachable_pages(&small).unwrap();
        let b = site.reachable_pages(&big).unwrap();
        prop_assert!(a.is_subset(&b));
        prop_assert!(big.is_subset(&b));
    }

    #[test]
    fn website_serde_round_trip(seed in 0u64..1_000, pages in 2u32..12) {
        let site = small_site(pages, seed);
        let text = serde_json::to_string(&site).unwrap();
        let back: Website = serde_json::from_str(&text).unwrap();
        prop_assert_eq!(back, site);
    }

    #[test]
    fn cache_only_removes_downloads(seed in 0u64..300) {
        let site = small_site(8, seed);
        let p = EncoderParams::default();
        let plan = sample_session_plan(&site, 1, 6, seed).unwrap();
        let off = BrowsingContext::new("os_a", "browser_a");
        let on = off.clone().with_cache(true, false);
        let (t_off, _) = simulate_session(&site, &plan, &off, &p, seed).unwrap();
        let (t_on, g_on) = simulate_session(&site, &plan, &on, &p, seed).unwrap();
        prop_assert!(t_on.sub_traces.len() <= t_off.sub_traces.len());
        let mut rest = f_values(&t_off.sub_traces);
        for f in f_values(&t_on.sub_traces) {
            let i = rest.iter().position(|&x| x == f);
            prop_assert!(i.is_some());
            rest.remove(i.unwrap());
        }
        let skipped = g_on.entries.iter().filter(|e| !e.downloaded).count();
        prop_assert_eq!(skipped + t_on.sub_traces.len(), g_on.entries.len());
    }

    #[test]
    fn interleaving_preserves_the_multiset(seed in 0u64..300, tabs in 2u32..4) {
        let site = small_site(10, seed);
        let p = EncoderParams::default();
        let plan = sample_session_plan(&site, tabs, 6, seed).unwrap();
        let ctx = BrowsingContext::new("os_a", "browser_a").with_tabs(tabs);
        let (multi, _) = simulate_session(&site, &plan, &ctx, &p, seed).unwrap();
        let mut singles = Vec::new();
        for tab in &plan.tabs {
            let one = SessionPlan { tabs: vec![tab.clone()], interleaving_seed: 0 };
            let (t, _) = simulate_session(&site, &one, &BrowsingContext::new("os_a", "browser_a"), &p, seed).unwrap();
            singles.extend(t.sub_traces);
        }
        prop_assert_eq!(f_values(&multi.sub_traces), f_values(&singles));
    }

    #[test]
    fn budget_is_never_overspent(pages in 2u32..8, s in 1u32..4, cap in 0u64..60) {
        let site = small_site(pages, 3);
        let budget = QueryBudget::new(cap);
        let needed = u64::from(pages) * u64::from(s) * 2;
        let r = collect_samples(&site, &BrowsingContext::new("os_a", "browser_a"), s, &ProfileVariant::standard(), &budget, &EncoderParams::default(), 1);
        prop_assert!(budget.consumed() <= cap);
        if needed <= cap {
            prop_assert!(r.is_ok());
            prop_assert_eq!(budget.consumed(), needed);
        } else {
            let is_budget_error = matches!(r, Err(ProfileError::BudgetExceeded { .. }));
            prop_assert!(is_budget_error);
            prop_assert_eq!(budget.consumed(), 0);
        }
    }

    #[test]
    fn reverse_index_inverts_features(seed in 0u64..200) {
        let site = small_site(6, seed);
        let db = profile_website(&site, &BrowsingContext::new("os_a", "browser_a"), 2, &ProfileVariant::standard(), &QueryBudget::new(24), &EncoderParams::default(), seed).unwrap();
        for (sig, list) in db.reverse_db().iter() {
            for inst in list {
                let present = db.feature_db().entries.iter().any(|e| e.sig == sig && e.resource_id == inst.resource && e.page == inst.page);
                prop_assert!(present);
            }
        }
        prop_assert_eq!(db.reverse_db().total_instances(), db.feature_db().entries.len());
    }

    #[test]
    fn breakdowns_partition_hundred(hit in 0u64..50, missed in 0u64..50, wrong in 0u64..50, acc in 0u64..40, mis in 0u64..40, inc in 0u64..40, con in 0u64..40) {
        let c = Counts {
            sessions: 1,
            accessed_pages: hit + missed + wrong,
            accurately_identified: hit,
            not_identified: missed,
            wrongly_identified: wrong,
            sub_traces: acc + mis + inc + con,
            res_accurate: acc,
            res_misidentified: mis,
            res_incomplete: inc,
            res_conflict: con,
            ..Counts::default()
        };
        let r = AccuracyReport::from_counts(c);
        if c.accessed_pages > 0 {
            let w = r.webpages;
            prop_assert!((w.accurately_identified + w.not_identified + w.wrongly_identified - 100.0).abs() < 0.5);
        }
        if c.sub_traces > 0 {
            let x = r.resources;
            prop_assert!((x.accurate + x.misidentified + x.incomplete + x.conflict - 100.0).abs() < 0.5);
        }
    }

    #[test]
    fn accuracy_ignores_session_order(
        sessions in proptest::collection::vec((proptest::collection::btree_set(0u8..6, 0..4), proptest::collection::btree_set(0u8..6, 1..4)), 1..12),
        rotate in 0usize..12,
    ) {
        let page = |i: &u8| PageId::new(format!("/p{i}"));
        let build = |list: &[(BTreeSet<u8>, BTreeSet<u8>)]| {
            let results: Vec<PredictionResult> = list.iter().map(|(p, _)| PredictionResult {
                predicted_webpages: p.iter().map(page).collect(),
                predicted_resources: vec![PredictedResource { index: 0, f: 1, status: ResourceStatus::UnidentifiedConflict, resource: None }],
                ..PredictionResult::default()
            }).collect();
            let truths: Vec<GroundTruth> = list.iter().map(|(_, t)| GroundTruth {
                entries: Vec::new(),
                session_pages: t.iter().map(page).collect(),
            }).collect();
            fingerprinting_accuracy(&results, &truths).unwrap()
        };
        let mut shuffled = sessions.clone();
        let k = rotate % shuffled.len();
        shuffled.rotate_left(k);
        prop_assert_eq!(build(&sessions), build(&shuffled));
    }
}
