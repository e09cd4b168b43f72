use alloc::format;
use alloc::vec::Vec;


use super::{GroundTruth, LatentPosterior, SegmentMechanisms};
use crate::data::{ClassLabel, LabeledSample, SegmentIndex};
use crate::imputer::{Conditioning, SegmentImputer};
use crate::rng::RngStream;
use crate::{Error, Result};

/// Rejection attempts when sampling `ε_S | D, X_c^∁`.
const MAX_REJECTIONS: usize = 100_000;

/// Exact sampler of a concept region under the synthetic SCM.
///
/// Class-specific instances draw from `p(X_c | do(D = d))`: the latent is drawn
/// from its prior and the observed complement is ignored. The unconditional
/// instance draws from `p(X_c | X_c^∁)`, marginalizing `D` and `ε_S` under their
/// posterior given the complement. Both are exact when `idx` covers whole
/// (concept, channel) blocks, which is what [`crate::data::segment_index`] returns.
#[derive(Clone, Debug)]
pub struct ScmImputer {
    gt: GroundTruth,
    conditioning: Conditioning,
}

pub fn interventional_imputer(gt: &GroundTruth, d: ClassLabel) -> ScmImputer {
    ScmImputer {
        gt: gt.clone(),
        conditioning: Conditioning::ClassSpecific(d),
    }
}

pub fn conditional_imputer(gt: &GroundTruth) -> ScmImputer {
    ScmImputer {
        gt: gt.clone(),
        conditioning: Conditioning::Unconditional,
    }
}

impl ScmImputer {
    pub fn ground_truth(&self) -> &GroundTruth {
        &self.gt
    }

    /// `(d, ε_S)` for one draw.
    fn draw_class_and_latent(
        &self,
        sample: &LabeledSample,
        idx: &SegmentIndex,
        rng: &mut RngStream,
    ) -> (u8, f64) {
        let cfg = self.gt.config();
        match self.conditioning {
            Conditioning::ClassSpecific(d) => (d.value(), cfg.noise.latent * rng.normal()),
            Conditioning::Unconditional => {
                let blocks = self.gt.blocks(
                    &sample.series,
                    |ch, t| sample.mask.concept_at(ch, t),
                    Some(idx),
                );
                let post = self.gt.latent_posterior(&blocks);
                let p1 = self.gt.posterior_target(&post);
                let d = u8::from(rng.uniform() < p1);
                let latent = match &cfg.segments {
                    SegmentMechanisms::LinearGaussian { .. } => {
                        sample_tilted_latent(&self.gt, &post[d as usize], d, rng)
                    }
                    // X does not depend on ε_S in the discrete family.
                    SegmentMechanisms::Discrete { .. } => 0.0,
                };
                (d, latent)
            }
        }
    }
}

/// Draws from `N(mu, sd²)·p(D = d | s)` by rejection.
fn sample_tilted_latent(gt: &GroundTruth, post: &LatentPosterior, d: u8, rng: &mut RngStream) -> f64 {
    let cfg = gt.config();
    if cfg.noise.latent == 0.0 {
        return 0.0;
    }
    let mut s = post.mu;
    for _ in 0..MAX_REJECTIONS {
        s = post.mu + post.sd * rng.normal();
        if rng.uniform() < cfg.p_class_given_latent(d, s) {
            return s;
        }
    }
    // Only reachable when p(D = d | s) is negligible over the Gaussian part.
    s
}

impl SegmentImputer for ScmImputer {
    fn conditioning(&self) -> Conditioning {
        self.conditioning
    }

    fn blackout_capable(&self) -> bool {
        true
    }

    fn impute(&self, sample: &LabeledSample, idx: &SegmentIndex, rng: &mut RngStream) -> Result<Vec<f64>> {
        let cfg = self.gt.config();
        self.gt.check_series(&sample.series)?;
        let concept = idx.concept as usize;
        if concept == 0 || concept > cfg.n_concepts as usize {
            return Err(Error::ConceptOutOfRange {
                concept: idx.concept,
                n_concepts: cfg.n_concepts,
            });
        }
        if idx.is_empty() {
            return Ok(Vec::new());
        }
        let (d, latent) = self.draw_class_and_latent(sample, idx, rng);
        let mut out = Vec::with_capacity(idx.len());
        let mut current: Option<(usize, f64)> = None;
        for &(ch, _) in idx.positions() {
            let level = match current {
                Some((c, level)) if c == ch => level,
                _ => {
                    let level = super::segment_level(cfg, concept - 1, ch, d, latent, rng);
                    current = Some((ch, level));
                    level
                }
            };
            out.push(level + cfg.noise.position * rng.normal());
        }
        if out.iter().any(|v| !v.is_finite()) {
            return Err(Error::Unsupported(format!("non-finite SCM draw for concept {concept}")));
        }
        Ok(out)
    }
}
