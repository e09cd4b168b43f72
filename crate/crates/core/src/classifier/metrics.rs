use alloc::format;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::rng::rng_stream;
use crate::stats::percentile_interval;
use crate::{Error, Result};

/// Probability that a random positive outscores a random negative; ties count 1/2.
///
/// Computed from mid-ranks (Mann–Whitney U), `O(n log n)`.
pub fn auroc(scores: &[f64], labels: &[u8]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::LengthMismatch {
            expected: scores.len(),
            found: labels.len(),
        });
    }
    let n_pos = labels.iter().filter(|&&l| l == 1).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::SingleClass("AUROC input".into()));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));

    // Sum of 2·rank over positives keeps tied mid-ranks integral.
    let mut twice_rank_sum: u128 = 0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        // ranks i+1..=j+1, mid-rank = (i + j + 2) / 2
        let twice_mid = (i + j + 2) as u128;
        let pos_in_group = order[i..=j].iter().filter(|&&k| labels[k] == 1).count() as u128;
        twice_rank_sum += twice_mid * pos_in_group;
        i = j + 1;
    }
    let np = n_pos as u128;
    let twice_u = twice_rank_sum - np * (np + 1);
    Ok(twice_u as f64 / (2.0 * n_pos as f64 * n_neg as f64))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BootstrapInterval {
    pub point: f64,
    pub low: f64,
    pub high: f64,
    /// Resamples discarded because they contained a single class.
    pub n_redrawn: usize,
}

/// Percentile bootstrap of AUROC over `(score, label)` pairs.
pub fn bootstrap_metric(
    scores: &[f64],
    labels: &[u8],
    b: usize,
    level: f64,
    seed: u64,
) -> Result<BootstrapInterval> {
    if b < 100 {
        return Err(Error::InvalidConfig(format!("bootstrap needs B >= 100, got {b}")));
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::InvalidConfig(format!("level {level} not in (0, 1)")));
    }
    let point = auroc(scores, labels)?;
    let n = scores.len();
    let mut rng = rng_stream(seed, "bootstrap-metric");
    let mut reps = Vec::with_capacity(b);
    let mut s = Vec::with_capacity(n);
    let mut l = Vec::with_capacity(n);
    let mut n_redrawn = 0;
    while reps.len() < b {
        s.clear();
        l.clear();
        for _ in 0..n {
            let k = rng.index(n);
            s.push(scores[k]);
            l.push(labels[k]);
        }
        match auroc(&s, &l) {
            Ok(v) => reps.push(v),
            Err(_) => {
                n_redrawn += 1;
                if n_redrawn > 1000 * b {
                    return Err(Error::SingleClass("bootstrap resamples".into()));
                }
            }
        }
    }
    let (low, high) = percentile_interval(&reps, level);
    Ok(BootstrapInterval {
        point,
        low: low.min(point),
        high: high.max(point),
        n_redrawn,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_stream;
    use proptest::prelude::*;

    fn brute(scores: &[f64], labels: &[u8]) -> f64 {
        let mut num = 0.0;
        let mut den = 0.0;
        for (i, &si) in scores.iter().enumerate() {
            for (j, &sj) in scores.iter().enumerate() {
                if labels[i] == 1 && labels[j] == 0 {
                    den += 1.0;
                    num += if si > sj {
                        1.0
                    } else if si == sj {
                        0.5
                    } else {
                        0.0
                    };
                }
            }
        }
        num / den
    }

    #[test]
    fn hand_example() {
        let v = auroc(&[0.1, 0.4, 0.35, 0.8], &[0, 0, 1, 1]).unwrap();
        assert_eq!(v, 0.75);
    }

    #[test]
    fn perfect_and_tied() {
        assert_eq!(auroc(&[0.1, 0.2, 0.8, 0.9], &[0, 0, 1, 1]).unwrap(), 1.0);
        assert_eq!(auroc(&[0.3; 6], &[0, 1, 0, 1, 1, 0]).unwrap(), 0.5);
    }

    #[test]
    fn single_class_rejected() {
        assert!(matches!(auroc(&[0.1, 0.2], &[1, 1]), Err(Error::SingleClass(_))));
    }

    #[test]
    fn bootstrap_perfect_separation() {
        let s: Vec<f64> = (0..40).map(|i| i as f64).collect();
        let l: Vec<u8> = (0..40).map(|i| u8::from(i >= 20)).collect();
        let bi = bootstrap_metric(&s, &l, 200, 0.95, 3).unwrap();
        assert_eq!((bi.point, bi.low, bi.high), (1.0, 1.0, 1.0));
    }

    #[test]
    fn bootstrap_ordering() {
        let mut r = rng_stream(9, "bm");
        let l: Vec<u8> = (0..60).map(|i| (i % 2) as u8).collect();
        let s: Vec<f64> = l.iter().map(|&y| f64::from(y) * 0.5 + r.normal()).collect();
        let bi = bootstrap_metric(&s, &l, 1000, 0.95, 11).unwrap();
        assert!(bi.low <= bi.point && bi.point <= bi.high);
        assert!(bootstrap_metric(&s, &l, 99, 0.95, 11).is_err());
    }

    proptest! {
        #[test]
        fn matches_pairwise_oracle(
            pairs in proptest::collection::vec((0u8..6, 0u8..2), 2..60)
        ) {
            let scores: Vec<f64> = pairs.iter().map(|p| f64::from(p.0) / 5.0).collect();
            let mut labels: Vec<u8> = pairs.iter().map(|p| p.1).collect();
            labels[0] = 0;
            labels[1] = 1;
            let a = auroc(&scores, &labels).unwrap();
            prop_assert!((a - brute(&scores, &labels)).abs() < 1e-12);
        }

        #[test]
        fn label_flip_complements(seed in 0u64..1000, n in 4usize..50) {
            let mut r = rng_stream(seed, "flip");
            let scores: Vec<f64> = (0..n).map(|_| r.uniform()).collect();
            let mut labels: Vec<u8> = (0..n).map(|_| u8::from(r.uniform() < 0.5)).collect();
            labels[0] = 0;
            labels[1] = 1;
            let flipped: Vec<u8> = labels.iter().map(|l| 1 - l).collect();
            let a = auroc(&scores, &labels).unwrap();
            let b = auroc(&scores, &flipped).unwrap();
            prop_assert!((a - (1.0 - b)).abs() < 1e-12);
        }
    }
}
