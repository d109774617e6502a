use std::ops::AddAssign;

use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::predictor::{PredictionResult, ResourceStatus};
use crate::sim::GroundTruth;

/// Raw tallies; percentages are derived from these.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counts {
    pub sessions: u64,
    pub accessed_pages: u64,
    pub accurately_identified: u64,
    pub not_identified: u64,
    pub wrongly_identified: u64,
    /// Predicted pages beyond those that replace a missed page.
    pub spurious: u64,
    pub sub_traces: u64,
    pub res_accurate: u64,
    pub res_misidentified: u64,
    pub res_incomplete: u64,
    pub res_conflict: u64,
}

impl AddAssign for Counts {
    fn add_assign(&mut self, o: Counts) {
        self.sessions += o.sessions;
        self.accessed_pages += o.accessed_pages;
        self.accurately_identified += o.accurately_identified;
        self.not_identified += o.not_identified;
        self.wrongly_identified += o.wrongly_identified;
        self.spurious += o.spurious;
        self.sub_traces += o.sub_traces;
        self.res_accurate += o.res_accurate;
        self.res_misidentified += o.res_misidentified;
        self.res_incomplete += o.res_incomplete;
        self.res_conflict += o.res_conflict;
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PageBreakdown {
    pub accurately_identified: f64,
    pub not_identified: f64,
    pub wrongly_identified: f64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ResourceBreakdown {
    pub accurate: f64,
    pub misidentified: f64,
    pub incomplete: f64,
    pub conflict: f64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct AccuracyReport {
    pub fa_percent: f64,
    pub webpages: PageBreakdown,
    pub resources: ResourceBreakdown,
    pub counts: Counts,
}

fn pct(n: u64, d: u64) -> f64 {
    if d == 0 {
        0.0
    } else {
        100.0 * n as f64 / d as f64
    }
}

impl AccuracyReport {
    pub fn from_counts(c: Counts) -> Self {
        let a = c.accessed_pages;
        let s = c.sub_traces;
        Self {
            fa_percent: pct(c.accurately_identified, a),
            webpages: PageBreakdown {
                accurately_identified: pct(c.accurately_identified, a),
                not_identified: pct(c.not_identified, a),
                wrongly_identified: pct(c.wrongly_identified, a),
            },
            resources: ResourceBreakdown {
                accurate: pct(c.res_accurate, s),
                misidentified: pct(c.res_misidentified, s),
                incomplete: pct(c.res_incomplete, s),
                conflict: pct(c.res_conflict, s),
            },
            counts: c,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.counts.accessed_pages == 0
    }
}

/// Tallies one session. An accessed page missing from the prediction is
/// wrongly identified when a non-accessed page was predicted in its place,
/// otherwise not identified.
pub fn session_counts(result: &PredictionResult, truth: &GroundTruth) -> Counts {
    let predicted = &result.predicted_webpages;
    let actual = &truth.session_pages;
    let hit = predicted.intersection(actual).count() as u64;
    let extra = predicted.difference(actual).count() as u64;
    let missed = actual.difference(predicted).count() as u64;
    let wrong = extra.min(missed);
    let mut c = Counts {
        sessions: 1,
        accessed_pages: actual.len() as u64,
        accurately_identified: hit,
        not_identified: missed - wrong,
        wrongly_identified: wrong,
        spurious: extra - wrong,
        ..Counts::default()
    };
    for p in &result.predicted_resources {
        c.sub_traces += 1;
        match p.status {
            ResourceStatus::UnidentifiedIncomplete => c.res_incomplete += 1,
            ResourceStatus::UnidentifiedConflict => c.res_conflict += 1,
            ResourceStatus::Identified => {
                let actual = truth.resource_at(p.index).map(|e| &e.resource);
                if actual.is_some() && actual == p.resource.as_ref() {
                    c.res_accurate += 1;
                } else {
                    c.res_misidentified += 1;
                }
            }
        }
    }
    c
}

pub fn fingerprinting_accuracy(
    results: &[PredictionResult],
    truths: &[GroundTruth],
) -> Result<AccuracyReport, EvalError> {
    if results.len() != truths.len() {
        return Err(EvalError::LengthMismatch {
            predictions: results.len(),
            truths: truths.len(),
        });
    }
    let mut total = Counts::default();
    for (r, t) in results.iter().zip(truths) {
        total += session_counts(r, t);
    }
    Ok(AccuracyReport::from_counts(total))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::site::PageId;
    use std::collections::BTreeSet;

    fn set(pages: &[&str]) -> BTreeSet<PageId> {
        pages.iter().map(|p| PageId::new(*p)).collect()
    }

    fn session(pred: &[&str], truth: &[&str]) -> (PredictionResult, GroundTruth) {
        (
            PredictionResult {
                predicted_webpages: set(pred),
                ..PredictionResult::default()
            },
            GroundTruth {
                entries: Vec::new(),
                session_pages: set(truth),
            },
        )
    }

    fn report(sessions: Vec<(PredictionResult, GroundTruth)>) -> AccuracyReport {
        let (r, t): (Vec<_>, Vec<_>) = sessions.into_iter().unzip();
        fingerprinting_accuracy(&r, &t).unwrap()
    }

    #[test]
    fn perfect_is_hundred() {
        let r = report(vec![session(&["a", "b"], &["a", "b"]), session(&["c"], &["c"])]);
        assert_eq!(r.fa_percent, 100.0);
        assert_eq!(
            (r.webpages.accurately_identified, r.webpages.not_identified, r.webpages.wrongly_identified),
            (100.0, 0.0, 0.0)
        );
    }

    #[test]
    fn counting_example() {
        // 10 sessions of 3 pages: 24 correct, 4 missed, 2 replaced.
        let mut s = Vec::new();
        for _ in 0..4 {
            s.push(session(&["a", "b"], &["a", "b", "c"]));
        }
        for _ in 0..2 {
            s.push(session(&["a", "b", "x"], &["a", "b", "c"]));
        }
        for _ in 0..4 {
            s.push(session(&["a", "b", "c"], &["a", "b", "c"]));
        }
        let r = report(s);
        assert_eq!(r.counts.accurately_identified, 24);
        assert_eq!(r.fa_percent, 80.0);
        assert_eq!(r.counts.not_identified, 4);
        assert_eq!(r.counts.wrongly_identified, 2);
        let b = r.webpages;
        let total = b.accurately_identified + b.not_identified + b.wrongly_identified;
        assert!((total - 100.0).abs() < 1e-9);
    }

    #[test]
    fn breakdown_shape_sums_to_hundred() {
        // 93 accurate, 7 missed, 0 wrong out of 100 pages.
        let mut s = Vec::new();
        for i in 0..100 {
            let p = format!("p{i}");
            s.push(if i < 93 { session(&[&p], &[&p]) } else { session(&[], &[&p]) });
        }
        let r = report(s);
        assert_eq!(
            (r.webpages.accurately_identified, r.webpages.not_identified, r.webpages.wrongly_identified),
            (93.0, 7.0, 0.0)
        );
    }

    #[test]
    fn spurious_predictions_are_separate() {
        let r = report(vec![session(&["a", "x", "y"], &["a"])]);
        assert_eq!(r.counts.spurious, 2);
        assert_eq!(r.fa_percent, 100.0);
    }

    #[test]
    fn order_does_not_matter() {
        let a = vec![session(&["a"], &["a", "b"]), session(&["c"], &["d"])];
        let mut b = a.clone();
        b.reverse();
        assert_eq!(report(a), report(b));
    }

    #[test]
    fn mismatched_lengths() {
        let (r, _) = session(&[], &[]);
        assert!(matches!(
            fingerprinting_accuracy(&[r], &[]),
            Err(EvalError::LengthMismatch { .. })
        ));
    }
}
