use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)] // inherent when a dependency links std
use num_traits::Float;
use serde::{Deserialize, Serialize};

use crate::stats::sigmoid;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoostOptions {
    pub rounds: usize,
    pub learning_rate: f64,
    /// L2 penalty on leaf values.
    pub lambda: f64,
}

impl Default for BoostOptions {
    fn default() -> Self {
        Self {
            rounds: 200,
            learning_rate: 0.1,
            lambda: 1.0,
        }
    }
}

/// Depth-1 regression tree on one feature. Rows with the feature missing take `missing`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Stump {
    pub feature: usize,
    pub threshold: f64,
    pub left: f64,
    pub right: f64,
    pub missing: f64,
}

impl Stump {
    fn value(&self, row: &[Option<f64>]) -> f64 {
        match row[self.feature] {
            None => self.missing,
            Some(v) if v <= self.threshold => self.left,
            Some(_) => self.right,
        }
    }
}

/// Gradient-boosted stumps under the logistic loss.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoostedStumps {
    pub base_score: f64,
    pub learning_rate: f64,
    pub n_features: usize,
    pub stumps: Vec<Stump>,
}

impl BoostedStumps {
    pub fn margin(&self, row: &[Option<f64>]) -> f64 {
        self.base_score + self.learning_rate * self.stumps.iter().map(|s| s.value(row)).sum::<f64>()
    }

    /// `p(label = 1 | row)`.
    pub fn predict(&self, row: &[Option<f64>]) -> f64 {
        sigmoid(self.margin(row))
    }
}

#[derive(Default, Clone, Copy)]
struct Acc {
    g: f64,
    h: f64,
}

impl Acc {
    fn add(&mut self, g: f64, h: f64) {
        self.g += g;
        self.h += h;
    }

    fn score(&self, lambda: f64) -> f64 {
        self.g * self.g / (self.h + lambda)
    }

    fn leaf(&self, lambda: f64) -> f64 {
        -self.g / (self.h + lambda)
    }
}

/// Fits boosted stumps with second-order leaf values `−G / (H + λ)`.
///
/// `rows` may contain missing entries; each split learns its own value for them.
pub fn train_stumps(rows: &[Vec<Option<f64>>], labels: &[u8], opts: &BoostOptions) -> Result<BoostedStumps> {
    if rows.is_empty() || rows.len() != labels.len() {
        return Err(Error::LengthMismatch {
            expected: labels.len(),
            found: rows.len(),
        });
    }
    let n_f = rows[0].len();
    if rows.iter().any(|r| r.len() != n_f) {
        return Err(Error::ShapeMismatch("feature rows differ in length".into()));
    }
    if labels.iter().any(|&l| l > 1) {
        return Err(Error::InvalidDataset("labels must be 0 or 1".into()));
    }
    let pos = labels.iter().filter(|&&l| l == 1).count();
    if pos == 0 || pos == labels.len() {
        return Err(Error::SingleClass("boosting needs both classes".into()));
    }
    let prior = pos as f64 / labels.len() as f64;
    let base_score = (prior / (1.0 - prior)).ln();
    // per feature: row indices with a value, sorted by that value
    let orders: Vec<Vec<usize>> = (0..n_f)
        .map(|f| {
            let mut idx: Vec<usize> = (0..rows.len()).filter(|&i| rows[i][f].is_some_and(|v| v.is_finite())).collect();
            idx.sort_by(|&a, &b| rows[a][f].unwrap().total_cmp(&rows[b][f].unwrap()));
            idx
        })
        .collect();

    let mut model = BoostedStumps {
        base_score,
        learning_rate: opts.learning_rate,
        n_features: n_f,
        stumps: Vec::with_capacity(opts.rounds),
    };
    let mut margin = vec![base_score; rows.len()];
    let mut grad = vec![0.0; rows.len()];
    let mut hess = vec![0.0; rows.len()];
    let mut present = vec![false; rows.len()];
    for _ in 0..opts.rounds {
        let mut total = Acc::default();
        for i in 0..rows.len() {
            let p = sigmoid(margin[i]);
            grad[i] = p - labels[i] as f64;
            hess[i] = (p * (1.0 - p)).max(1e-12);
            total.add(grad[i], hess[i]);
        }
        let mut best: Option<(f64, Stump)> = None;
        for (f, order) in orders.iter().enumerate() {
            present.iter_mut().for_each(|p| *p = false);
            let mut have = Acc::default();
            for &i in order {
                present[i] = true;
                have.add(grad[i], hess[i]);
            }
            let miss = Acc {
                g: total.g - have.g,
                h: total.h - have.h,
            };
            let mut left = Acc::default();
            for w in 0..order.len().saturating_sub(1) {
                let i = order[w];
                left.add(grad[i], hess[i]);
                let (a, b) = (rows[i][f].unwrap(), rows[order[w + 1]][f].unwrap());
                if a == b {
                    continue;
                }
                let right = Acc {
                    g: have.g - left.g,
                    h: have.h - left.h,
                };
                let gain = left.score(opts.lambda) + right.score(opts.lambda) + miss.score(opts.lambda)
                    - total.score(opts.lambda);
                if best.as_ref().is_none_or(|(g, _)| gain > *g + 1e-12) {
                    best = Some((
                        gain,
                        Stump {
                            feature: f,
                            threshold: a + (b - a) / 2.0,
                            left: left.leaf(opts.lambda),
                            right: right.leaf(opts.lambda),
                            missing: miss.leaf(opts.lambda),
                        },
                    ));
                }
            }
        }
        // no usable split: a constant update, identical for every row
        let stump = best.map(|b| b.1).unwrap_or(Stump {
            feature: 0,
            threshold: f64::INFINITY,
            left: total.leaf(opts.lambda),
            right: total.leaf(opts.lambda),
            missing: total.leaf(opts.lambda),
        });
        for (m, r) in margin.iter_mut().zip(rows) {
            *m += opts.learning_rate * stump.value(r);
        }
        model.stumps.push(stump);
    }
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classifier::auroc;
    use crate::rng::rng_stream;

    #[test]
    fn perfect_feature() {
        let labels: Vec<u8> = (0..100).map(|i| (i % 2) as u8).collect();
        let rows: Vec<Vec<Option<f64>>> = labels.iter().map(|&l| vec![Some(l as f64), Some(0.3)]).collect();
        let m = train_stumps(&rows, &labels, &BoostOptions::default()).unwrap();
        let scores: Vec<f64> = rows.iter().map(|r| m.predict(r)).collect();
        assert_eq!(auroc(&scores, &labels).unwrap(), 1.0);
        assert!(m.stumps.iter().all(|s| s.feature == 0));
    }

    #[test]
    fn constant_features_give_half() {
        let labels: Vec<u8> = (0..50).map(|i| (i % 3 == 0) as u8).collect();
        let rows = vec![vec![Some(1.0), None]; 50];
        let m = train_stumps(&rows, &labels, &BoostOptions::default()).unwrap();
        let scores: Vec<f64> = rows.iter().map(|r| m.predict(r)).collect();
        assert_eq!(auroc(&scores, &labels).unwrap(), 0.5);
    }

    #[test]
    fn missing_branch_is_learned() {
        // label 1 exactly when the feature is missing
        let labels: Vec<u8> = (0..60).map(|i| (i % 2) as u8).collect();
        let rows: Vec<Vec<Option<f64>>> = labels
            .iter()
            .enumerate()
            .map(|(i, &l)| vec![if l == 1 { None } else { Some(i as f64) }])
            .collect();
        let m = train_stumps(&rows, &labels, &BoostOptions::default()).unwrap();
        let scores: Vec<f64> = rows.iter().map(|r| m.predict(r)).collect();
        assert_eq!(auroc(&scores, &labels).unwrap(), 1.0);
    }

    #[test]
    fn loss_decreases_with_rounds() {
        let mut r = rng_stream(1, "b");
        let rows: Vec<Vec<Option<f64>>> = (0..300).map(|_| vec![Some(r.normal()), Some(r.normal())]).collect();
        let labels: Vec<u8> = rows.iter().map(|x| (x[0].unwrap() + 0.5 * r.normal() > 0.0) as u8).collect();
        let loss = |m: &BoostedStumps| -> f64 {
            rows.iter()
                .zip(&labels)
                .map(|(x, &y)| {
                    let p = m.predict(x);
                    -(if y == 1 { p.ln() } else { (1.0 - p).ln() })
                })
                .sum()
        };
        let few = train_stumps(&rows, &labels, &BoostOptions { rounds: 5, ..Default::default() }).unwrap();
        let many = train_stumps(&rows, &labels, &BoostOptions::default()).unwrap();
        assert!(loss(&many) < loss(&few));
    }

    #[test]
    fn single_class_is_error() {
        let rows = vec![vec![Some(1.0)]; 4];
        assert!(matches!(train_stumps(&rows, &[1, 1, 1, 1], &BoostOptions::default()), Err(Error::SingleClass(_))));
    }
}
