use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::sim::EncryptedTrace;
use crate::site::PageId;

pub const FEATURE_LEN: usize = 7;

/// Pluggable page classifier used by the ensemble.
pub trait TraceClassifier: Send + Sync {
    fn train(&mut self, samples: &[(EncryptedTrace, PageId)]) -> Result<(), EvalError>;
    /// Most likely page and its probability.
    fn predict(&self, trace: &EncryptedTrace) -> Result<(PageId, f64), EvalError>;
}

/// Total bytes, sub-trace count, then the five largest sub-traces in
/// descending order, zero padded.
pub fn trace_features(trace: &EncryptedTrace) -> [f64; FEATURE_LEN] {
    let mut f: Vec<u64> = trace.sub_traces.iter().map(|s| s.f_value()).collect();
    f.sort_unstable_by(|a, b| b.cmp(a));
    let mut out = [0.0; FEATURE_LEN];
    out[0] = f.iter().sum::<u64>() as f64;
    out[1] = f.len() as f64;
    for (slot, v) in out[2..].iter_mut().zip(&f) {
        *slot = *v as f64;
    }
    out
}

fn distance(a: &[f64; FEATURE_LEN], b: &[f64; FEATURE_LEN]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

/// One centroid per page; probabilities are inverse distances normalised
/// over all centroids.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct NearestCentroid {
    centroids: BTreeMap<PageId, [f64; FEATURE_LEN]>,
}

impl NearestCentroid {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn is_trained(&self) -> bool {
        !self.centroids.is_empty()
    }

    pub fn pages(&self) -> impl Iterator<Item = &PageId> {
        self.centroids.keys()
    }

    /// Probability per page, in page order.
    pub fn probabilities(&self, trace: &EncryptedTrace) -> Result<Vec<(PageId, f64)>, EvalError> {
        if !self.is_trained() {
            return Err(EvalError::Untrained);
        }
        let x = trace_features(trace);
        let d: Vec<(&PageId, f64)> = self.centroids.iter().map(|(p, c)| (p, distance(&x, c))).collect();
        let zeros = d.iter().filter(|(_, v)| *v == 0.0).count();
        let probs = if zeros > 0 {
            d.iter()
                .map(|(p, v)| ((*p).clone(), if *v == 0.0 { 1.0 / zeros as f64 } else { 0.0 }))
                .collect()
        } else {
            let total: f64 = d.iter().map(|(_, v)| 1.0 / v).sum();
            d.iter().map(|(p, v)| ((*p).clone(), (1.0 / v) / total)).collect()
        };
        Ok(probs)
    }
}

impl TraceClassifier for NearestCentroid {
    fn train(&mut self, samples: &[(EncryptedTrace, PageId)]) -> Result<(), EvalError> {
        if samples.is_empty() {
            return Err(EvalError::Classifier("no training samples".into()));
        }
        let mut sums: BTreeMap<PageId, ([f64; FEATURE_LEN], usize)> = BTreeMap::new();
        for (trace, page) in samples {
            let f = trace_features(trace);
            let e = sums.entry(page.clone()).or_insert(([0.0; FEATURE_LEN], 0));
            for (acc, v) in e.0.iter_mut().zip(f) {
                *acc += v;
            }
            e.1 += 1;
        }
        self.centroids = sums
            .into_iter()
            .map(|(p, (mut s, n))| {
                s.iter_mut().for_each(|v| *v /= n as f64);
                (p, s)
            })
            .collect();
        Ok(())
    }

    /// Ties go to the lexicographically first page.
    fn predict(&self, trace: &EncryptedTrace) -> Result<(PageId, f64), EvalError> {
        self.probabilities(trace)?
            .into_iter()
            .fold(None, |best: Option<(PageId, f64)>, (p, v)| match best {
                Some((_, b)) if b >= v => best,
                _ => Some((p, v)),
            })
            .ok_or(EvalError::Untrained)
    }
}

/// Smallest top-class probability over the validation points.
pub fn threshold_from_probabilities(top: &[f64]) -> Result<f64, EvalError> {
    top.iter()
        .copied()
        .reduce(f64::min)
        .ok_or(EvalError::EmptyValidation)
}

pub fn compute_validation_threshold(
    classifier: &dyn TraceClassifier,
    validation: &[EncryptedTrace],
) -> Result<f64, EvalError> {
    let top = validation
        .iter()
        .map(|t| classifier.predict(t).map(|(_, p)| p))
        .collect::<Result<Vec<_>, _>>()?;
    threshold_from_probabilities(&top)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::SubTrace;

    fn trace(sizes: &[u64]) -> EncryptedTrace {
        EncryptedTrace {
            sub_traces: sizes
                .iter()
                .enumerate()
                .map(|(i, &s)| SubTrace {
                    group_key: i as u64,
                    record_sizes: vec![s],
                    first_byte_index: i as u64,
                    truncated: false,
                })
                .collect(),
            context_hint: None,
        }
    }

    #[test]
    fn features_layout() {
        let f = trace_features(&trace(&[5, 50, 20]));
        assert_eq!(f, [75.0, 3.0, 50.0, 20.0, 5.0, 0.0, 0.0]);
    }

    #[test]
    fn single_page_own_sample() {
        let mut c = NearestCentroid::new();
        let t = trace(&[300, 40]);
        c.train(&[(t.clone(), "/a".into())]).unwrap();
        assert_eq!(c.predict(&t).unwrap(), ("/a".into(), 1.0));
        assert_eq!(c.predict(&trace(&[9])).unwrap(), ("/a".into(), 1.0));
    }

    #[test]
    fn separated_pages() {
        let mut c = NearestCentroid::new();
        c.train(&[
            (trace(&[1_000]), "/small".into()),
            (trace(&[1_010]), "/small".into()),
            (trace(&[100_000]), "/big".into()),
        ])
        .unwrap();
        assert_eq!(c.predict(&trace(&[990])).unwrap().0, PageId::new("/small"));
        assert_eq!(c.predict(&trace(&[98_000])).unwrap().0, PageId::new("/big"));
    }

    #[test]
    fn identical_pages_split_evenly() {
        let mut c = NearestCentroid::new();
        c.train(&[(trace(&[500]), "/b".into()), (trace(&[500]), "/a".into())]).unwrap();
        assert_eq!(c.predict(&trace(&[700])).unwrap(), ("/a".into(), 0.5));
        assert_eq!(c.predict(&trace(&[500])).unwrap(), ("/a".into(), 0.5));
    }

    #[test]
    fn untrained_errors() {
        let c = NearestCentroid::new();
        assert_eq!(c.predict(&trace(&[1])), Err(EvalError::Untrained));
        assert_eq!(compute_validation_threshold(&c, &[trace(&[1])]), Err(EvalError::Untrained));
    }

    #[test]
    fn threshold_is_minimum() {
        assert_eq!(threshold_from_probabilities(&[0.9, 0.5, 0.7]).unwrap(), 0.5);
        assert_eq!(threshold_from_probabilities(&[0.325]).unwrap(), 0.325);
        assert_eq!(threshold_from_probabilities(&[]), Err(EvalError::EmptyValidation));
    }

    #[test]
    fn threshold_from_classifier() {
        let mut c = NearestCentroid::new();
        c.train(&[(trace(&[100]), "/a".into()), (trace(&[200]), "/b".into())]).unwrap();
        let p = compute_validation_threshold(&c, &[trace(&[100]), trace(&[130])]).unwrap();
        // 130 sits 30 from /a and 70 from /b.
        assert!((p - 0.7).abs() < 1e-12);
    }
}
