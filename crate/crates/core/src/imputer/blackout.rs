use alloc::vec::Vec;

use super::SegmentImputer;
use crate::data::{splice, LabeledSample, MultivariateSeries};
use crate::rng::RngStream;
use crate::{Error, Result};

/// Imputes the whole multi-channel region of `concept`, then restores every
/// channel except `channel` to its original values.
///
/// Only positions of `(channel, concept)` can differ from the input.
pub fn impute_channel_blackout(
    imputer: &(impl SegmentImputer + ?Sized),
    sample: &LabeledSample,
    concept: u32,
    channel: usize,
    rng: &mut RngStream,
) -> Result<MultivariateSeries> {
    if !imputer.blackout_capable() {
        return Err(Error::Unsupported("imputer was not trained for blackout imputation".into()));
    }
    let full = sample.segment(concept, None)?;
    if channel >= sample.series.n_channels() {
        return Err(Error::ChannelOutOfRange {
            channel,
            n_channels: sample.series.n_channels(),
        });
    }
    if full.is_empty() {
        return Err(Error::ConceptAbsent {
            concept,
            sample_id: sample.sample_id.clone(),
        });
    }
    let values = imputer
        .impute(sample, &full, rng)
        .map_err(|e| Error::imputer(&sample.sample_id, e))?;
    if values.len() != full.len() {
        return Err(Error::LengthMismatch {
            expected: full.len(),
            found: values.len(),
        });
    }
    let target = full.restrict_to_channel(channel);
    let kept: Vec<f64> = full
        .positions()
        .iter()
        .zip(&values)
        .filter(|((ch, _), _)| *ch == channel)
        .map(|(_, &v)| v)
        .collect();
    splice(&sample.series, &target, &kept)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{ClassLabel, ConceptMask, SegmentIndex};
    use crate::imputer::{Conditioning, IdentityImputer};
    use crate::rng::rng_stream;
    use alloc::vec;

    struct Noise;
    impl SegmentImputer for Noise {
        fn conditioning(&self) -> Conditioning {
            Conditioning::Unconditional
        }
        fn blackout_capable(&self) -> bool {
            true
        }
        fn impute(&self, _s: &LabeledSample, idx: &SegmentIndex, rng: &mut RngStream) -> Result<Vec<f64>> {
            Ok((0..idx.len()).map(|_| rng.normal()).collect())
        }
    }

    fn sample() -> LabeledSample {
        let x = MultivariateSeries::from_rows(
            vec![vec![1.0; 6], vec![2.0; 6], vec![3.0; 6]],
            None,
        )
        .unwrap();
        let m = ConceptMask::per_timestep(vec![1, 1, 2, 2, 2, 1], 2).unwrap();
        LabeledSample::new("s", x, m, ClassLabel::TARGET).unwrap()
    }

    #[test]
    fn identity_is_noop() {
        let s = sample();
        let out = impute_channel_blackout(
            &IdentityImputer(Conditioning::Unconditional),
            &s,
            2,
            1,
            &mut rng_stream(0, "b"),
        )
        .unwrap();
        assert_eq!(out, s.series);
    }

    #[test]
    fn differences_confined_to_target_region() {
        let s = sample();
        let allowed = s.segment(2, Some(1)).unwrap();
        let out = impute_channel_blackout(&Noise, &s, 2, 1, &mut rng_stream(0, "b")).unwrap();
        for ch in 0..3 {
            for t in 0..6 {
                if out.get(ch, t) != s.series.get(ch, t) {
                    assert!(allowed.positions().contains(&(ch, t)));
                }
            }
        }
        assert!(allowed.positions().iter().all(|&(c, t)| out.get(c, t) != s.series.get(c, t)));
    }

    #[test]
    fn two_channels_share_draws() {
        let s = sample();
        let a = impute_channel_blackout(&Noise, &s, 2, 0, &mut rng_stream(5, "b")).unwrap();
        let b = impute_channel_blackout(&Noise, &s, 2, 2, &mut rng_stream(5, "b")).unwrap();
        for t in 0..6 {
            assert_eq!(a.get(1, t), b.get(1, t));
            assert_eq!(a.get(2, t), s.series.get(2, t));
            assert_eq!(b.get(0, t), s.series.get(0, t));
        }
    }

    #[test]
    fn absent_concept_is_error() {
        let x = MultivariateSeries::from_rows(vec![vec![1.0; 3]], None).unwrap();
        let m = ConceptMask::per_timestep(vec![1, 1, 1], 2).unwrap();
        let s = LabeledSample::new("s", x, m, ClassLabel::TARGET).unwrap();
        assert!(matches!(
            impute_channel_blackout(&Noise, &s, 2, 0, &mut rng_stream(0, "b")),
            Err(Error::ConceptAbsent { .. })
        ));
    }
}
