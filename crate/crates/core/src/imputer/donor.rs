use alloc::vec::Vec;

use super::{Conditioning, SegmentImputer};
use crate::data::{ClassLabel, Dataset, LabeledSample, SegmentIndex, Split};
use crate::rng::RngStream;
use crate::{Error, Result};

/// Donor draws before giving up on a concept no donor carries.
pub const MAX_DONOR_ATTEMPTS: usize = 50;

/// Training samples used as an empirical class-conditional sampler.
///
/// A draw picks a donor uniformly and copies its values into the region.
/// The complement of the target sample is ignored.
#[derive(Clone, Debug)]
pub struct DonorPool {
    donors: Vec<LabeledSample>,
    conditioning: Conditioning,
}

/// Collects the training split, keeping only `label_filter` when given.
pub fn donor_fit(d: &Dataset, label_filter: Option<ClassLabel>) -> Result<DonorPool> {
    let donors: Vec<_> = d
        .in_split(Split::Train)
        .filter(|s| label_filter.is_none_or(|l| s.label == l))
        .cloned()
        .collect();
    if donors.is_empty() {
        return Err(Error::EmptyPool(match label_filter {
            Some(l) => alloc::format!("no training samples with label {}", l.value()),
            None => "empty training split".into(),
        }));
    }
    Ok(DonorPool {
        donors,
        conditioning: label_filter.map_or(Conditioning::Unconditional, Conditioning::ClassSpecific),
    })
}

impl DonorPool {
    pub fn donors(&self) -> &[LabeledSample] {
        &self.donors
    }

    /// Donor values at `idx`, or `None` when the donor lacks the concept on a needed channel.
    fn copy_from(donor: &LabeledSample, idx: &SegmentIndex) -> Option<Vec<f64>> {
        let n_t = donor.series.n_timesteps();
        let mut out = Vec::with_capacity(idx.len());
        for &(ch, t) in idx.positions() {
            if ch >= donor.series.n_channels() {
                return None;
            }
            let covered = |tt: usize| tt < n_t && donor.mask.concept_at(ch, tt) == idx.concept;
            if covered(t) {
                out.push(donor.series.get(ch, t));
                continue;
            }
            // nearest covered timestep, earlier wins ties
            let nearest = (1..n_t).find_map(|off| {
                if t >= off && covered(t - off) {
                    Some(t - off)
                } else if covered(t + off) {
                    Some(t + off)
                } else {
                    None
                }
            })?;
            out.push(donor.series.get(ch, nearest));
        }
        Some(out)
    }
}

impl SegmentImputer for DonorPool {
    fn conditioning(&self) -> Conditioning {
        self.conditioning
    }

    fn blackout_capable(&self) -> bool {
        true
    }

    fn impute(&self, _sample: &LabeledSample, idx: &SegmentIndex, rng: &mut RngStream) -> Result<Vec<f64>> {
        if idx.is_empty() {
            return Ok(Vec::new());
        }
        for _ in 0..MAX_DONOR_ATTEMPTS {
            let donor = &self.donors[rng.index(self.donors.len())];
            if let Some(v) = Self::copy_from(donor, idx) {
                return Ok(v);
            }
        }
        Err(Error::DonorExhausted {
            concept: idx.concept,
            attempts: MAX_DONOR_ATTEMPTS,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{extract, ConceptMask, MultivariateSeries};
    use crate::rng::rng_stream;
    use alloc::format;
    use alloc::vec;

    fn sample(id: &str, level: f64, mask: Vec<u32>, label: u8) -> LabeledSample {
        let n = mask.len();
        LabeledSample::new(
            id,
            MultivariateSeries::from_rows(vec![(0..n).map(|t| level + t as f64).collect()], None).unwrap(),
            ConceptMask::per_timestep(mask, 3).unwrap(),
            ClassLabel::new(label).unwrap(),
        )
        .unwrap()
    }

    fn pool_data() -> Dataset {
        let pairs = (0..6)
            .map(|i| {
                (
                    sample(&format!("d{i}"), 100.0 * i as f64, vec![1, 1, 2, 2, 3, 3], (i % 2) as u8),
                    if i < 4 { Split::Train } else { Split::Test },
                )
            })
            .collect();
        Dataset::from_pairs(pairs).unwrap()
    }

    #[test]
    fn filtering() {
        let d = pool_data();
        let p = donor_fit(&d, Some(ClassLabel::TARGET)).unwrap();
        assert!(p.donors().iter().all(|s| s.label == ClassLabel::TARGET));
        assert_eq!(donor_fit(&d, None).unwrap().donors().len(), 4);
        assert_eq!(p.conditioning(), Conditioning::ClassSpecific(ClassLabel::TARGET));
    }

    #[test]
    fn absent_label_is_error() {
        let pairs = vec![(sample("a", 0.0, vec![1, 2, 3], 0), Split::Train)];
        let d = Dataset::from_pairs(pairs).unwrap();
        assert!(matches!(donor_fit(&d, Some(ClassLabel::TARGET)), Err(Error::EmptyPool(_))));
    }

    #[test]
    fn single_donor_copies_segment() {
        let donor = sample("d", 50.0, vec![1, 1, 2, 2, 3, 3], 1);
        let d = Dataset::from_pairs(vec![(donor.clone(), Split::Train)]).unwrap();
        let p = donor_fit(&d, None).unwrap();
        let target = sample("x", 0.0, vec![1, 1, 2, 2, 3, 3], 0);
        let idx = target.segment(2, None).unwrap();
        let v = p.impute(&target, &idx, &mut rng_stream(1, "d")).unwrap();
        assert_eq!(v, extract(&donor.series, &idx));
    }

    #[test]
    fn mismatched_geometry_uses_nearest_covered_timestep() {
        let donor = sample("d", 0.0, vec![1, 2, 2, 3, 3, 3], 1);
        let d = Dataset::from_pairs(vec![(donor, Split::Train)]).unwrap();
        let p = donor_fit(&d, None).unwrap();
        let target = sample("x", 0.0, vec![1, 1, 1, 2, 3, 3], 0);
        // concept 1 at t = 0, 1, 2; donor covers only t = 0
        let idx = target.segment(1, None).unwrap();
        let v = p.impute(&target, &idx, &mut rng_stream(1, "d")).unwrap();
        assert_eq!(v, vec![0.0, 0.0, 0.0]);
        // concept 2 at t = 3; donor covers 1, 2 → nearest is 2
        let idx = target.segment(2, None).unwrap();
        assert_eq!(p.impute(&target, &idx, &mut rng_stream(1, "d")).unwrap(), vec![2.0]);
    }

    #[test]
    fn donor_without_concept_exhausts() {
        let donor = sample("d", 0.0, vec![1, 1, 2, 2, 2, 2], 1);
        let d = Dataset::from_pairs(vec![(donor, Split::Train)]).unwrap();
        let p = donor_fit(&d, None).unwrap();
        let target = sample("x", 0.0, vec![1, 1, 2, 2, 3, 3], 0);
        let idx = target.segment(3, None).unwrap();
        assert!(matches!(
            p.impute(&target, &idx, &mut rng_stream(1, "d")),
            Err(Error::DonorExhausted { concept: 3, .. })
        ));
    }

    #[test]
    fn uniform_donor_choice() {
        let a = sample("a", 0.0, vec![1, 1, 2, 2, 3, 3], 1);
        let b = sample("b", 1000.0, vec![1, 1, 2, 2, 3, 3], 1);
        let d = Dataset::from_pairs(vec![(a, Split::Train), (b, Split::Train)]).unwrap();
        let p = donor_fit(&d, None).unwrap();
        let idx = p.donors()[0].segment(1, None).unwrap();
        let mut r = rng_stream(3, "u");
        let n = 10_000;
        let from_a = (0..n)
            .filter(|_| p.impute(&p.donors()[0], &idx, &mut r).unwrap()[0] < 500.0)
            .count();
        assert!((from_a as f64 / n as f64 - 0.5).abs() < 0.02);
    }
}
