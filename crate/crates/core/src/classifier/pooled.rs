use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::{auroc, ProbClassifier};
use crate::data::{Dataset, MultivariateSeries, Split};
use crate::stats::{mean, sigmoid, softplus, std_population};
use crate::{Error, Result};

/// Per-channel mean/std/min/max followed by the global mean and std.
pub fn pooled_features(x: &MultivariateSeries) -> Vec<f64> {
    let mut out = Vec::with_capacity(4 * x.n_channels() + 2);
    for ch in 0..x.n_channels() {
        let v = x.channel(ch);
        out.push(mean(v));
        out.push(std_population(v));
        out.push(v.iter().copied().fold(f64::INFINITY, f64::min));
        out.push(v.iter().copied().fold(f64::NEG_INFINITY, f64::max));
    }
    out.push(mean(x.values()));
    out.push(std_population(x.values()));
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogisticOptions {
    pub l2: f64,
    pub epochs: usize,
    pub lr: f64,
}

impl Default for LogisticOptions {
    fn default() -> Self {
        Self {
            l2: 1e-3,
            epochs: 200,
            lr: 0.1,
        }
    }
}

/// Logistic regression on standardized pooled features.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PooledLogisticModel {
    pub n_channels: usize,
    pub feature_mean: Vec<f64>,
    pub feature_std: Vec<f64>,
    pub weights: Vec<f64>,
    pub bias: f64,
    pub l2: f64,
    /// Epoch whose parameters were kept (0 = initial zeros).
    pub selected_epoch: usize,
    pub selected_val_auroc: Option<f64>,
    pub fingerprint: String,
}

impl PooledLogisticModel {
    fn standardize(&self, raw: &[f64]) -> Vec<f64> {
        raw.iter()
            .zip(self.feature_mean.iter().zip(&self.feature_std))
            .map(|(v, (m, s))| (v - m) / s)
            .collect()
    }

    pub fn score(&self, x: &MultivariateSeries) -> Result<f64> {
        if x.n_channels() != self.n_channels {
            return Err(Error::ShapeMismatch(format!(
                "model expects {} channels, got {}",
                self.n_channels,
                x.n_channels()
            )));
        }
        let z = self.standardize(&pooled_features(x));
        Ok(self.bias + z.iter().zip(&self.weights).map(|(a, b)| a * b).sum::<f64>())
    }

    /// Regularized mean logistic loss and its gradient `(d/dw, d/db)` on standardized rows.
    pub fn loss_and_grad(&self, rows: &[Vec<f64>], labels: &[f64]) -> (f64, Vec<f64>, f64) {
        logistic_loss_grad(&self.weights, self.bias, self.l2, rows, labels)
    }
}

impl ProbClassifier for PooledLogisticModel {
    fn name(&self) -> &str {
        "pooled-logistic"
    }

    fn predict(&self, x: &MultivariateSeries) -> Result<f64> {
        Ok(sigmoid(self.score(x)?))
    }
}

fn logistic_loss_grad(
    w: &[f64],
    b: f64,
    l2: f64,
    rows: &[Vec<f64>],
    labels: &[f64],
) -> (f64, Vec<f64>, f64) {
    let n = rows.len() as f64;
    let mut gw = vec![0.0; w.len()];
    let mut gb = 0.0;
    let mut loss = 0.0;
    for (x, &y) in rows.iter().zip(labels) {
        let z = b + x.iter().zip(w).map(|(a, c)| a * c).sum::<f64>();
        loss += softplus(z) - y * z;
        let r = sigmoid(z) - y;
        gb += r;
        for (g, xi) in gw.iter_mut().zip(x) {
            *g += r * xi;
        }
    }
    loss /= n;
    loss += 0.5 * l2 * w.iter().map(|v| v * v).sum::<f64>();
    for (g, wi) in gw.iter_mut().zip(w) {
        *g = *g / n + l2 * wi;
    }
    (loss, gw, gb / n)
}

fn fingerprint(d: &Dataset, opts: &LogisticOptions) -> String {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    let mut eat = |bytes: &[u8]| {
        for &b in bytes {
            h = (h ^ u64::from(b)).wrapping_mul(0x100_0000_01b3);
        }
    };
    for s in d.in_split(Split::Train) {
        eat(s.sample_id.as_bytes());
        eat(&[s.label.value()]);
        for v in s.series.values() {
            eat(&v.to_le_bytes());
        }
    }
    eat(&opts.l2.to_le_bytes());
    eat(&(opts.epochs as u64).to_le_bytes());
    eat(&opts.lr.to_le_bytes());
    format!("{h:016x}")
}

/// Full-batch gradient descent; keeps the epoch with the best validation AUROC.
///
/// When the validation split is empty or single-class the final epoch is kept.
pub fn train_pooled_logistic(d: &Dataset, opts: &LogisticOptions) -> Result<PooledLogisticModel> {
    let train: Vec<_> = d.in_split(Split::Train).collect();
    if train.is_empty() {
        return Err(Error::InvalidDataset("empty training split".into()));
    }
    let labels: Vec<f64> = train.iter().map(|s| s.label.as_f64()).collect();
    if labels.iter().all(|&l| l == labels[0]) {
        return Err(Error::SingleClass("training split".into()));
    }
    let n_channels = train[0].series.n_channels();
    let raw: Vec<Vec<f64>> = train.iter().map(|s| pooled_features(&s.series)).collect();
    let n_feat = raw[0].len();
    let feature_mean: Vec<f64> = (0..n_feat)
        .map(|j| mean(&raw.iter().map(|r| r[j]).collect::<Vec<_>>()))
        .collect();
    let feature_std: Vec<f64> = (0..n_feat)
        .map(|j| {
            let s = std_population(&raw.iter().map(|r| r[j]).collect::<Vec<_>>());
            if s > 1e-12 {
                s
            } else {
                1.0
            }
        })
        .collect();

    let mut model = PooledLogisticModel {
        n_channels,
        feature_mean,
        feature_std,
        weights: vec![0.0; n_feat],
        bias: 0.0,
        l2: opts.l2,
        selected_epoch: 0,
        selected_val_auroc: None,
        fingerprint: fingerprint(d, opts),
    };
    let rows: Vec<Vec<f64>> = raw.iter().map(|r| model.standardize(r)).collect();

    let val: Vec<_> = d.in_split(Split::Validation).collect();
    let val_labels: Vec<u8> = val.iter().map(|s| s.label.value()).collect();
    let val_usable = val_labels.contains(&0) && val_labels.contains(&1);
    let val_auroc = |m: &PooledLogisticModel| -> Result<f64> {
        let scores = val.iter().map(|s| m.score(&s.series)).collect::<Result<Vec<_>>>()?;
        auroc(&scores, &val_labels)
    };

    let mut best = model.clone();
    if val_usable {
        best.selected_val_auroc = Some(val_auroc(&model)?);
    }
    for epoch in 1..=opts.epochs {
        let (_, gw, gb) = model.loss_and_grad(&rows, &labels);
        for (w, g) in model.weights.iter_mut().zip(&gw) {
            *w -= opts.lr * g;
        }
        model.bias -= opts.lr * gb;
        if !model.weights.iter().all(|w| w.is_finite()) || !model.bias.is_finite() {
            return Err(Error::InvalidConfig(format!("training diverged at epoch {epoch}")));
        }
        model.selected_epoch = epoch;
        if val_usable {
            let a = val_auroc(&model)?;
            if best.selected_val_auroc.is_none_or(|b| a > b) {
                model.selected_val_auroc = Some(a);
                best = model.clone();
            }
        } else {
            best = model.clone();
        }
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classifier::classify;
    use crate::data::{ClassLabel, ConceptMask, LabeledSample};
    use crate::rng::rng_stream;

    fn toy(n: usize, sep: f64, seed: u64) -> Dataset {
        let mut r = rng_stream(seed, "toy");
        let pairs = (0..n)
            .map(|i| {
                let y = (i % 2) as u8;
                let rows = vec![
                    (0..8).map(|_| r.normal() + sep * f64::from(y)).collect(),
                    (0..8).map(|_| r.normal()).collect(),
                ];
                let s = MultivariateSeries::from_rows(rows, None).unwrap();
                let m = ConceptMask::per_timestep(vec![1; 8], 1).unwrap();
                let split = match i % 5 {
                    0..=2 => Split::Train,
                    3 => Split::Validation,
                    _ => Split::Test,
                };
                (
                    LabeledSample::new(format!("t{i}"), s, m, ClassLabel::new(y).unwrap()).unwrap(),
                    split,
                )
            })
            .collect();
        Dataset::from_pairs(pairs).unwrap()
    }

    #[test]
    fn separable_training_auroc_one() {
        let d = toy(100, 10.0, 1);
        let m = train_pooled_logistic(&d, &LogisticOptions::default()).unwrap();
        let train: Vec<_> = d.in_split(Split::Train).collect();
        let s: Vec<f64> = train.iter().map(|x| m.predict(&x.series).unwrap()).collect();
        let l: Vec<u8> = train.iter().map(|x| x.label.value()).collect();
        assert_eq!(auroc(&s, &l).unwrap(), 1.0);
    }

    #[test]
    fn zero_epochs_is_half() {
        let d = toy(20, 1.0, 2);
        let m = train_pooled_logistic(
            &d,
            &LogisticOptions {
                epochs: 0,
                ..Default::default()
            },
        )
        .unwrap();
        assert!(m.weights.iter().all(|&w| w == 0.0));
        assert_eq!(classify(&m, &d.samples()[0].series).unwrap(), 0.5);
    }

    #[test]
    fn gradient_matches_central_differences() {
        let d = toy(40, 1.0, 3);
        let mut m = train_pooled_logistic(
            &d,
            &LogisticOptions {
                epochs: 5,
                l2: 0.05,
                lr: 0.1,
            },
        )
        .unwrap();
        let train: Vec<_> = d.in_split(Split::Train).collect();
        let rows: Vec<Vec<f64>> = train
            .iter()
            .map(|s| m.standardize(&pooled_features(&s.series)))
            .collect();
        let y: Vec<f64> = train.iter().map(|s| s.label.as_f64()).collect();
        let (_, gw, gb) = m.loss_and_grad(&rows, &y);
        let h = 1e-5;
        let mut max_rel: f64 = 0.0;
        for j in 0..m.weights.len() {
            let w0 = m.weights[j];
            m.weights[j] = w0 + h;
            let lp = m.loss_and_grad(&rows, &y).0;
            m.weights[j] = w0 - h;
            let lm = m.loss_and_grad(&rows, &y).0;
            m.weights[j] = w0;
            let fd = (lp - lm) / (2.0 * h);
            max_rel = max_rel.max((fd - gw[j]).abs() / fd.abs().max(gw[j].abs()).max(1e-8));
        }
        let b0 = m.bias;
        m.bias = b0 + h;
        let lp = m.loss_and_grad(&rows, &y).0;
        m.bias = b0 - h;
        let lm = m.loss_and_grad(&rows, &y).0;
        let fd = (lp - lm) / (2.0 * h);
        max_rel = max_rel.max((fd - gb).abs() / fd.abs().max(gb.abs()).max(1e-8));
        assert!(max_rel < 1e-4, "max relative error {max_rel}");
    }

    #[test]
    fn loss_non_increasing_small_lr() {
        let d = toy(60, 1.0, 4);
        let m0 = train_pooled_logistic(
            &d,
            &LogisticOptions {
                epochs: 0,
                ..Default::default()
            },
        )
        .unwrap();
        let train: Vec<_> = d.in_split(Split::Train).collect();
        let rows: Vec<Vec<f64>> = train
            .iter()
            .map(|s| m0.standardize(&pooled_features(&s.series)))
            .collect();
        let y: Vec<f64> = train.iter().map(|s| s.label.as_f64()).collect();
        let (mut w, mut b) = (m0.weights.clone(), 0.0);
        let mut prev = f64::INFINITY;
        for _ in 0..200 {
            let (loss, gw, gb) = logistic_loss_grad(&w, b, 1e-3, &rows, &y);
            assert!(loss <= prev + 1e-15);
            prev = loss;
            for (wi, g) in w.iter_mut().zip(&gw) {
                *wi -= 1e-3 * g;
            }
            b -= 1e-3 * gb;
        }
    }

    #[test]
    fn monotone_in_positive_weight_feature() {
        let d = toy(100, 2.0, 5);
        let m = train_pooled_logistic(&d, &LogisticOptions::default()).unwrap();
        // channel 0 mean carries the class signal
        assert!(m.weights[0] > 0.0);
        let x = &d.samples()[0].series;
        let mut rows = x.rows();
        for v in rows[0].iter_mut() {
            *v += 0.5;
        }
        let shifted = MultivariateSeries::from_rows(rows, None).unwrap();
        assert!(m.score(&shifted).unwrap() > m.score(x).unwrap());
    }

    #[test]
    fn single_class_and_shape_errors() {
        let d = toy(20, 1.0, 6);
        let ones: Vec<_> = d
            .samples()
            .iter()
            .filter(|s| s.label == ClassLabel::TARGET)
            .map(|s| (s.clone(), Split::Train))
            .collect();
        let only = Dataset::from_pairs(ones).unwrap();
        assert!(matches!(
            train_pooled_logistic(&only, &LogisticOptions::default()),
            Err(Error::SingleClass(_))
        ));
        let m = train_pooled_logistic(&d, &LogisticOptions::default()).unwrap();
        assert!(m.predict(&MultivariateSeries::zeros(3, 8).unwrap()).is_err());
        let x = &d.samples()[1].series;
        assert_eq!(m.predict(x).unwrap(), m.predict(x).unwrap());
    }

    #[test]
    fn extreme_input_clamps() {
        let d = toy(100, 10.0, 7);
        let m = train_pooled_logistic(&d, &LogisticOptions::default()).unwrap();
        let big = MultivariateSeries::from_rows(vec![vec![1e6; 8], vec![0.0; 8]], None).unwrap();
        assert_eq!(classify(&m, &big).unwrap(), 1.0 - 1e-6);
    }
}
