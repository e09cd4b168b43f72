use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::boost::{train_stumps, BoostOptions};
use crate::classifier::{auroc, bootstrap_metric, BootstrapInterval};
use crate::data::{Dataset, LabeledSample, Split};
use crate::stats::{mean, median, std_population};
use crate::{Error, Result};

/// Summary statistics of one concept region. `channel = None` pools all channels.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConceptStatsRow {
    pub sample_id: String,
    pub channel: Option<usize>,
    pub concept: u32,
    pub min: f64,
    pub max: f64,
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
    pub median: f64,
    pub count: usize,
    pub label: u8,
    /// Concept absent: every statistic is 0 by convention.
    pub absent: bool,
}

/// Rows for every concept `1..=C`, per channel or pooled over channels.
pub fn concept_stats(sample: &LabeledSample, per_channel: bool) -> Vec<ConceptStatsRow> {
    let n_ch = sample.series.n_channels();
    let groups: Vec<Option<usize>> = if per_channel {
        (0..n_ch).map(Some).collect()
    } else {
        alloc::vec![None]
    };
    let mut out = Vec::new();
    for ch in groups {
        for c in 1..=sample.mask.n_concepts() {
            let values: Vec<f64> = match sample.segment(c, ch) {
                Ok(idx) => idx.positions().iter().map(|&(k, t)| sample.series.get(k, t)).collect(),
                Err(_) => Vec::new(),
            };
            let absent = values.is_empty();
            let (min, max, m, s, med) = if absent {
                (0.0, 0.0, 0.0, 0.0, 0.0)
            } else {
                (
                    values.iter().copied().fold(f64::INFINITY, f64::min),
                    values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
                    mean(&values),
                    std_population(&values),
                    median(&values),
                )
            };
            out.push(ConceptStatsRow {
                sample_id: sample.sample_id.clone(),
                channel: ch,
                concept: c,
                min,
                max,
                mean: m,
                std: s,
                median: med,
                count: values.len(),
                label: sample.label.value(),
                absent,
            });
        }
    }
    out
}

/// Validation feature vector of a sample: per channel and concept the five
/// value statistics (missing when the concept is absent) and the count.
pub fn concept_feature_row(sample: &LabeledSample, n_concepts: u32) -> Vec<Option<f64>> {
    let mut row = Vec::new();
    for ch in 0..sample.series.n_channels() {
        for c in 1..=n_concepts {
            let values: Vec<f64> = if c <= sample.mask.n_concepts() {
                sample
                    .segment(c, Some(ch))
                    .map(|idx| idx.positions().iter().map(|&(k, t)| sample.series.get(k, t)).collect())
                    .unwrap_or_default()
            } else {
                Vec::new()
            };
            if values.is_empty() {
                row.extend([None; 5]);
            } else {
                row.push(values.iter().copied().reduce(f64::min));
                row.push(values.iter().copied().reduce(f64::max));
                row.push(Some(mean(&values)));
                row.push(Some(std_population(&values)));
                row.push(Some(median(&values)));
            }
            row.push(Some(values.len() as f64));
        }
    }
    row
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConceptValidation {
    pub auroc: f64,
    pub interval: BootstrapInterval,
    pub n_train: usize,
    pub n_test: usize,
    pub n_features: usize,
}

/// Trains boosted stumps on per-concept statistics of the training split and
/// reports the test AUROC with a 95 % bootstrap interval over 1000 resamples.
pub fn validate_concepts(d: &Dataset, seed: u64) -> Result<ConceptValidation> {
    let c = d.n_concepts();
    let table = |split: Split| -> (Vec<Vec<Option<f64>>>, Vec<u8>) {
        d.in_split(split)
            .map(|s| (concept_feature_row(s, c), s.label.value()))
            .unzip()
    };
    let (xtr, ytr) = table(Split::Train);
    let (xte, yte) = table(Split::Test);
    if xtr.is_empty() || xte.is_empty() {
        return Err(Error::InvalidDataset("validation needs non-empty train and test splits".into()));
    }
    let model = train_stumps(&xtr, &ytr, &BoostOptions::default())?;
    let scores: Vec<f64> = xte.iter().map(|r| model.predict(r)).collect();
    let a = auroc(&scores, &yte)?;
    let interval = bootstrap_metric(&scores, &yte, 1000, 0.95, seed)?;
    Ok(ConceptValidation {
        auroc: a,
        interval,
        n_train: xtr.len(),
        n_test: xte.len(),
        n_features: model.n_features,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{ClassLabel, ConceptMask, MultivariateSeries};
    use crate::rng::rng_stream;
    use alloc::format;
    use alloc::vec;
    use proptest::prelude::*;

    fn sample(values: Vec<f64>, mask: Vec<u32>, c: u32) -> LabeledSample {
        LabeledSample::new(
            "s",
            MultivariateSeries::from_rows(vec![values], None).unwrap(),
            ConceptMask::per_timestep(mask, c).unwrap(),
            ClassLabel::TARGET,
        )
        .unwrap()
    }

    #[test]
    fn hand_example() {
        let s = sample(vec![1.0, 2.0, 3.0, 9.0], vec![1, 1, 1, 2], 3);
        let rows = concept_stats(&s, true);
        assert_eq!(rows.len(), 3);
        let r = &rows[0];
        assert_eq!((r.min, r.max, r.mean, r.median, r.count), (1.0, 3.0, 2.0, 2.0, 3));
        assert!((r.std - 0.816_496_580_927_726).abs() < 1e-12);
        let single = &rows[1];
        assert_eq!((single.min, single.max, single.mean, single.median, single.std, single.count), (9.0, 9.0, 9.0, 9.0, 0.0, 1));
        let absent = &rows[2];
        assert!(absent.absent);
        assert_eq!((absent.count, absent.min, absent.std), (0, 0.0, 0.0));
    }

    #[test]
    fn even_count_median_is_midpoint() {
        let s = sample(vec![4.0, 1.0, 3.0, 2.0], vec![1; 4], 1);
        assert_eq!(concept_stats(&s, false)[0].median, 2.5);
    }

    proptest! {
        #[test]
        fn stats_invariants(
            values in prop::collection::vec(-100.0f64..100.0, 2 * 12),
            mask in prop::collection::vec(1u32..=4, 12),
        ) {
            let s = LabeledSample::new(
                "p",
                MultivariateSeries::from_rows(vec![values[..12].to_vec(), values[12..].to_vec()], None).unwrap(),
                ConceptMask::per_timestep(mask, 4).unwrap(),
                ClassLabel::BASELINE,
            )
            .unwrap();
            let rows = concept_stats(&s, true);
            for ch in 0..2 {
                let total: usize = rows.iter().filter(|r| r.channel == Some(ch)).map(|r| r.count).sum();
                prop_assert_eq!(total, 12);
            }
            for r in rows.iter().filter(|r| !r.absent) {
                prop_assert!(r.min <= r.median && r.median <= r.max);
                prop_assert!(r.min <= r.mean + 1e-9 && r.mean <= r.max + 1e-9);
                prop_assert!(r.std >= 0.0);
            }
        }
    }

    fn validation_data(n: usize, informative: bool, seed: u64) -> Dataset {
        let mut r = rng_stream(seed, "val");
        let pairs = (0..n)
            .map(|i| {
                let label = (r.uniform() < 0.5) as u8;
                let shift = if informative { 2.0 * label as f64 } else { 0.0 };
                let row: Vec<f64> = (0..12).map(|t| if t < 6 { r.normal() + shift } else { r.normal() }).collect();
                let s = LabeledSample::new(
                    format!("v{i}"),
                    MultivariateSeries::from_rows(vec![row], None).unwrap(),
                    ConceptMask::per_timestep((0..12).map(|t| 1 + (t >= 6) as u32).collect(), 2).unwrap(),
                    ClassLabel::new(label).unwrap(),
                )
                .unwrap();
                (s, if i % 2 == 0 { Split::Train } else { Split::Test })
            })
            .collect();
        Dataset::from_pairs(pairs).unwrap()
    }

    #[test]
    fn informative_concept_validates() {
        let v = validate_concepts(&validation_data(400, true, 1), 0).unwrap();
        assert!(v.auroc > 0.95, "{}", v.auroc);
        assert!(v.interval.low <= v.auroc && v.auroc <= v.interval.high);
        assert_eq!(v.n_features, 2 * 6);
    }

    #[test]
    fn uninformative_concepts_near_half() {
        let v = validate_concepts(&validation_data(4000, false, 2), 0).unwrap();
        assert!((0.45..=0.55).contains(&v.auroc), "{}", v.auroc);
    }

    #[test]
    fn single_class_test_split_is_error() {
        let d = validation_data(40, true, 3);
        let pairs = d
            .samples()
            .iter()
            .map(|s| {
                let split = if s.label == ClassLabel::TARGET { Split::Test } else { Split::Train };
                (s.clone(), split)
            })
            .collect();
        let d = Dataset::from_pairs(pairs).unwrap();
        assert!(validate_concepts(&d, 0).is_err());
    }
}
