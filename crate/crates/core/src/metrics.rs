//! Per-impression ranking metrics: AUC, MRR, nDCG@k.
//!
//! Conventions, frozen here and in the tests: AUC counts tied pairs as 0.5;
//! ranking ties are broken by stable input order; multi-click MRR averages
//! the reciprocal ranks of all clicks; dataset-level numbers are macro
//! averages over valid impressions.

use serde::{Deserialize, Serialize};

/// Scores and click labels of one impression's candidates.
#[derive(Debug, Clone)]
pub struct RankedImpression {
    pub scores: Vec<f64>,
    pub labels: Vec<bool>,
}

impl RankedImpression {
    /// AUC, MRR, and nDCG need at least one positive and one negative.
    pub fn is_valid(&self) -> bool {
        self.labels.iter().any(|&l| l) && self.labels.iter().any(|&l| !l)
    }

    /// Candidate indices in descending score order, ties in input order.
    fn ranking(&self) -> Vec<usize> {
        let mut order: Vec<usize> = (0..self.scores.len()).collect();
        order.sort_by(|&a, &b| self.scores[b].partial_cmp(&self.scores[a]).unwrap());
        order
    }
}

/// Pairwise AUC via the rank-sum formulation with average ranks for ties.
pub fn auc(imp: &RankedImpression) -> Option<f64> {
    if !imp.is_valid() {
        return None;
    }
    let n = imp.scores.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| imp.scores[a].partial_cmp(&imp.scores[b]).unwrap());
    // average rank per tie group, ranks 1-based ascending
    let mut ranks = vec![0.0f64; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && imp.scores[order[j + 1]] == imp.scores[order[i]] {
            j += 1;
        }
        let avg = (i + 1 + j + 1) as f64 / 2.0;
        for &k in &order[i..=j] {
            ranks[k] = avg;
        }
        i = j + 1;
    }
    let pos = imp.labels.iter().filter(|&&l| l).count() as f64;
    let neg = n as f64 - pos;
    let rank_sum: f64 =
        ranks.iter().zip(&imp.labels).filter(|(_, &l)| l).map(|(r, _)| *r).sum();
    Some((rank_sum - pos * (pos + 1.0) / 2.0) / (pos * neg))
}

/// Mean reciprocal rank over all clicked items.
pub fn mrr(imp: &RankedImpression) -> Option<f64> {
    if !imp.is_valid() {
        return None;
    }
    let order = imp.ranking();
    let mut sum = 0.0;
    let mut count = 0usize;
    for (rank0, &idx) in order.iter().enumerate() {
        if imp.labels[idx] {
            sum += 1.0 / (rank0 + 1) as f64;
            count += 1;
        }
    }
    Some(sum / count as f64)
}

/// Binary-label nDCG at cutoff `k`; the ideal ranking places every positive
/// first.
pub fn ndcg_at_k(imp: &RankedImpression, k: usize) -> Option<f64> {
    if !imp.is_valid() {
        return None;
    }
    let order = imp.ranking();
    let dcg: f64 = order
        .iter()
        .take(k)
        .enumerate()
        .filter(|(_, &idx)| imp.labels[idx])
        .map(|(rank0, _)| 1.0 / ((rank0 + 2) as f64).log2())
        .sum();
    let positives = imp.labels.iter().filter(|&&l| l).count();
    let idcg: f64 =
        (0..positives.min(k)).map(|rank0| 1.0 / ((rank0 + 2) as f64).log2()).sum();
    Some(dcg / idcg)
}

/// Macro-averaged metrics over a set of impressions.
#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize, PartialEq)]
pub struct MetricsRecord {
    pub auc: f64,
    pub mrr: f64,
    pub ndcg5: f64,
    pub ndcg10: f64,
    pub impressions: usize,
    pub excluded: usize,
}

pub fn aggregate(impressions: &[RankedImpression]) -> MetricsRecord {
    let mut rec = MetricsRecord::default();
    for imp in impressions {
        match (auc(imp), mrr(imp), ndcg_at_k(imp, 5), ndcg_at_k(imp, 10)) {
            (Some(a), Some(m), Some(n5), Some(n10)) => {
                rec.auc += a;
                rec.mrr += m;
                rec.ndcg5 += n5;
                rec.ndcg10 += n10;
                rec.impressions += 1;
            }
            _ => rec.excluded += 1,
        }
    }
    if rec.impressions > 0 {
        let n = rec.impressions as f64;
        rec.auc /= n;
        rec.mrr /= n;
        rec.ndcg5 /= n;
        rec.ndcg10 /= n;
    }
    rec
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn imp(scores: &[f64], labels: &[bool]) -> RankedImpression {
        RankedImpression { scores: scores.to_vec(), labels: labels.to_vec() }
    }

    // Brute-force oracles with the same tie conventions.
    fn auc_oracle(imp: &RankedImpression) -> Option<f64> {
        if !imp.is_valid() {
            return None;
        }
        let (mut hits, mut pairs) = (0.0f64, 0usize);
        for (i, &li) in imp.labels.iter().enumerate() {
            if !li {
                continue;
            }
            for (j, &lj) in imp.labels.iter().enumerate() {
                if lj {
                    continue;
                }
                pairs += 1;
                if imp.scores[i] > imp.scores[j] {
                    hits += 1.0;
                } else if imp.scores[i] == imp.scores[j] {
                    hits += 0.5;
                }
            }
        }
        Some(hits / pairs as f64)
    }

    fn mrr_oracle(imp: &RankedImpression) -> Option<f64> {
        if !imp.is_valid() {
            return None;
        }
        let mut order: Vec<usize> = (0..imp.scores.len()).collect();
        order.sort_by(|&a, &b| imp.scores[b].partial_cmp(&imp.scores[a]).unwrap());
        let rrs: Vec<f64> = order
            .iter()
            .enumerate()
            .filter(|(_, &i)| imp.labels[i])
            .map(|(r, _)| 1.0 / (r + 1) as f64)
            .collect();
        Some(rrs.iter().sum::<f64>() / rrs.len() as f64)
    }

    fn ndcg_oracle(imp: &RankedImpression, k: usize) -> Option<f64> {
        if !imp.is_valid() {
            return None;
        }
        let mut order: Vec<usize> = (0..imp.scores.len()).collect();
        order.sort_by(|&a, &b| imp.scores[b].partial_cmp(&imp.scores[a]).unwrap());
        let mut dcg = 0.0;
        for (r, &i) in order.iter().enumerate().take(k) {
            if imp.labels[i] {
                dcg += 1.0 / ((r + 2) as f64).log2();
            }
        }
        let p = imp.labels.iter().filter(|&&l| l).count();
        let mut idcg = 0.0;
        for r in 0..p.min(k) {
            idcg += 1.0 / ((r + 2) as f64).log2();
        }
        Some(dcg / idcg)
    }

    #[test]
    fn auc_perfect_ranking() {
        let i = imp(&[0.9, 0.5, 0.4, 0.3, 0.2], &[true, false, false, false, false]);
        assert_eq!(auc(&i), Some(1.0));
    }

    #[test]
    fn auc_all_tied_is_half() {
        let i = imp(&[0.5; 5], &[true, false, false, false, false]);
        assert_eq!(auc(&i), Some(0.5));
    }

    #[test]
    fn auc_worked_example() {
        let i = imp(&[0.9, 0.8, 0.3, 0.1], &[true, false, true, false]);
        assert!((auc(&i).unwrap() - 0.75).abs() < 1e-12);
    }

    #[test]
    fn mrr_single_click_cases() {
        let first = imp(&[0.9, 0.5, 0.1], &[true, false, false]);
        assert_eq!(mrr(&first), Some(1.0));
        let third = imp(&[0.9, 0.5, 0.1], &[false, false, true]);
        assert!((mrr(&third).unwrap() - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn mrr_multi_click_averages() {
        // clicks at ranks 1 and 4 → (1 + 0.25)/2
        let i = imp(&[0.9, 0.8, 0.7, 0.6], &[true, false, false, true]);
        assert!((mrr(&i).unwrap() - 0.625).abs() < 1e-12);
    }

    #[test]
    fn ndcg_single_click_at_rank_one() {
        let top = imp(&[0.9, 0.1, 0.05], &[true, false, false]);
        assert_eq!(ndcg_at_k(&top, 5), Some(1.0));
    }

    #[test]
    fn ndcg_click_at_rank_six_is_zero_at_k5() {
        let i = imp(
            &[0.9, 0.8, 0.7, 0.6, 0.5, 0.4],
            &[false, false, false, false, false, true],
        );
        assert_eq!(ndcg_at_k(&i, 5), Some(0.0));
    }

    #[test]
    fn ndcg_worked_example() {
        // clicks at ranks 2 and 3 of 5, k=5
        let i = imp(&[0.9, 0.8, 0.7, 0.6, 0.5], &[false, true, true, false, false]);
        let expect = (1.0 / 3f64.log2() + 1.0 / 4f64.log2()) / (1.0 + 1.0 / 3f64.log2());
        let got = ndcg_at_k(&i, 5).unwrap();
        assert!((got - expect).abs() < 1e-12);
        assert!((got - 0.6934).abs() < 5e-4);
    }

    #[test]
    fn invalid_impressions_are_none() {
        assert_eq!(auc(&imp(&[0.5, 0.4], &[true, true])), None);
        assert_eq!(mrr(&imp(&[0.5, 0.4], &[false, false])), None);
        assert_eq!(ndcg_at_k(&imp(&[0.5], &[true]), 5), None);
    }

    #[test]
    fn metrics_match_brute_force_on_random_impressions() {
        let mut rng = nrnf_tensor::rng::stream(99, &[1]);
        let mut checked = 0;
        for _ in 0..1000 {
            let n = rng.gen_range(2..=20usize);
            // coarse score grid to force plenty of ties
            let scores: Vec<f64> =
                (0..n).map(|_| rng.gen_range(0..8) as f64 / 4.0).collect();
            let labels: Vec<bool> = (0..n).map(|_| rng.gen_bool(0.35)).collect();
            let i = RankedImpression { scores, labels };
            assert_eq!(auc(&i), auc_oracle(&i));
            if let (Some(a), Some(b)) = (mrr(&i), mrr_oracle(&i)) {
                assert!((a - b).abs() < 1e-12);
            }
            for k in [1, 3, 5, 10, 25] {
                match (ndcg_at_k(&i, k), ndcg_oracle(&i, k)) {
                    (Some(a), Some(b)) => assert!((a - b).abs() < 1e-12),
                    (None, None) => {}
                    other => panic!("validity mismatch {other:?}"),
                }
            }
            if i.is_valid() {
                checked += 1;
            }
        }
        assert!(checked > 500, "want mostly valid impressions, got {checked}");
    }

    #[test]
    fn metrics_are_invariant_under_monotone_transforms() {
        let mut rng = nrnf_tensor::rng::stream(7, &[2]);
        for _ in 0..200 {
            let n = rng.gen_range(3..=15usize);
            let scores: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let labels: Vec<bool> = (0..n).map(|i| i == 0 || rng.gen_bool(0.3)).collect();
            let i1 = RankedImpression { scores: scores.clone(), labels: labels.clone() };
            let transformed: Vec<f64> = scores.iter().map(|s| (3.0 * s).exp() + 1.0).collect();
            let i2 = RankedImpression { scores: transformed, labels };
            if !i1.is_valid() {
                continue;
            }
            assert!((auc(&i1).unwrap() - auc(&i2).unwrap()).abs() < 1e-9);
            assert!((mrr(&i1).unwrap() - mrr(&i2).unwrap()).abs() < 1e-12);
            assert!(
                (ndcg_at_k(&i1, 5).unwrap() - ndcg_at_k(&i2, 5).unwrap()).abs() < 1e-12
            );
        }
    }

    #[test]
    fn all_metrics_bounded() {
        let mut rng = nrnf_tensor::rng::stream(13, &[3]);
        for _ in 0..300 {
            let n = rng.gen_range(2..=12usize);
            let scores: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let labels: Vec<bool> = (0..n).map(|_| rng.gen_bool(0.5)).collect();
            let i = RankedImpression { scores, labels };
            if let Some(a) = auc(&i) {
                assert!((0.0..=1.0).contains(&a));
            }
            if let Some(m) = mrr(&i) {
                assert!(m > 0.0 && m <= 1.0);
            }
            if let Some(nd) = ndcg_at_k(&i, 5) {
                assert!((0.0..=1.0).contains(&nd));
            }
        }
    }
}
