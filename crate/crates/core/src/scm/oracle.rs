use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)] // inherent when a dependency links std
use num_traits::Float;
use serde::{Deserialize, Serialize};

use super::{GroundTruth, SegmentMechanisms};
use crate::classifier::{classify, clamp_prob, ProbClassifier, PROB_CLAMP};
use crate::data::{splice, LabeledSample, SegmentIndex};
use crate::quadrature::GaussHermite;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleOptions {
    /// Gauss–Hermite order per latent dimension; at least 32.
    pub order: usize,
    pub clamp: f64,
}

impl Default for OracleOptions {
    fn default() -> Self {
        Self {
            order: super::QUADRATURE_ORDER,
            clamp: PROB_CLAMP,
        }
    }
}

/// Exact effect values for one (sample, concept) with target class 1 and baseline 0.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExactEffects {
    pub ite: f64,
    pub iaa: f64,
    /// `E f` under `do(D = 1)` imputation.
    pub mean_prob_target: f64,
    /// `E f` under `do(D = 0)` imputation.
    pub mean_prob_baseline: f64,
    /// `E f` under `p(X_c | X_c^∁)` imputation.
    pub mean_prob_conditional: f64,
    pub observed_prob: f64,
}

/// A weighted list of region fillings.
type Grid = Vec<(f64, Vec<f64>)>;

/// ITE and IAA of `concept` computed without sampling.
///
/// The discrete family is enumerated over every support tuple; the
/// linear-Gaussian family is integrated with a tensor Gauss–Hermite rule over
/// `ε_S` and the concept noise, which needs zero position noise and at most two
/// latent dimensions.
pub fn brute_force_effects(
    gt: &GroundTruth,
    sample: &LabeledSample,
    f: &(impl ProbClassifier + ?Sized),
    concept: u32,
    opts: &OracleOptions,
) -> Result<ExactEffects> {
    if opts.order < 32 {
        return Err(Error::InvalidConfig(format!(
            "quadrature order {} below the minimum of 32",
            opts.order
        )));
    }
    gt.check_series(&sample.series)?;
    let idx = sample.segment(concept, None)?;
    if idx.is_empty() {
        return Err(Error::ConceptAbsent {
            concept,
            sample_id: sample.sample_id.clone(),
        });
    }
    let channels = idx_channels(&idx);
    let cfg = gt.config();

    let grids: [Grid; 3] = match &cfg.segments {
        SegmentMechanisms::Discrete { concepts } => {
            let m = &concepts[concept as usize - 1];
            let tuples = support_tuples(m.support.len(), channels.len());
            let interv = |d: u8| -> Grid {
                tuples
                    .iter()
                    .map(|ks| {
                        let w: f64 = ks.iter().map(|&k| m.row(d)[k]).product();
                        (w, ks.iter().map(|&k| m.support[k]).collect())
                    })
                    .filter(|(w, _)| *w > 0.0)
                    .collect()
            };
            let post = gt.latent_posterior(&complement_blocks(gt, sample, &idx));
            let p1 = gt.posterior_target(&post);
            let mut cond = scale(interv(1), p1);
            cond.extend(scale(interv(0), 1.0 - p1));
            [interv(1), interv(0), cond]
        }
        SegmentMechanisms::LinearGaussian { concepts } => {
            if cfg.noise.position != 0.0 {
                return Err(Error::Unsupported(
                    "quadrature oracle needs position noise 0 (one shared level per block)".into(),
                ));
            }
            let m = &concepts[concept as usize - 1];
            let dims = usize::from(cfg.noise.latent > 0.0) + if m.noise > 0.0 { channels.len() } else { 0 };
            if dims > 2 {
                return Err(Error::Unsupported(format!(
                    "{dims} latent dimensions; the quadrature oracle supports at most 2"
                )));
            }
            let gh = GaussHermite::new(opts.order);
            let noise_nodes = noise_grid(&gh, m.noise, channels.len());
            let levels = |d: u8, latent: &[(f64, f64)]| -> Grid {
                let mut out = Vec::with_capacity(latent.len() * noise_nodes.len());
                for &(ws, s) in latent {
                    for (we, e) in &noise_nodes {
                        let vals = channels
                            .iter()
                            .zip(e)
                            .map(|(&ch, ei)| m.effect[ch] * f64::from(d) + m.latent[ch] * s + m.noise * ei)
                            .collect();
                        out.push((ws * we, vals));
                    }
                }
                out
            };
            let prior: Vec<(f64, f64)> = if cfg.noise.latent > 0.0 {
                gh.weights
                    .iter()
                    .zip(&gh.nodes)
                    .map(|(&w, &z)| (w, cfg.noise.latent * z))
                    .collect()
            } else {
                vec![(1.0, 0.0)]
            };
            let post = gt.latent_posterior(&complement_blocks(gt, sample, &idx));
            let p1 = gt.posterior_target(&post);
            let mut cond = Vec::new();
            for d in [1u8, 0] {
                let pd = if d == 1 { p1 } else { 1.0 - p1 };
                if pd == 0.0 {
                    continue;
                }
                let tilted: Vec<(f64, f64)> = if cfg.noise.latent > 0.0 {
                    let lp = &post[d as usize];
                    let raw: Vec<(f64, f64)> = gh
                        .weights
                        .iter()
                        .zip(&gh.nodes)
                        .map(|(&w, &z)| {
                            let s = lp.mu + lp.sd * z;
                            (w * cfg.p_class_given_latent(d, s), s)
                        })
                        .collect();
                    let norm: f64 = raw.iter().map(|r| r.0).sum();
                    if norm > 0.0 {
                        raw.into_iter().map(|(w, s)| (w / norm, s)).collect()
                    } else {
                        vec![(1.0, lp.mu)]
                    }
                } else {
                    vec![(1.0, 0.0)]
                };
                cond.extend(scale(levels(d, &tilted), pd));
            }
            [levels(1, &prior), levels(0, &prior), cond]
        }
    };

    let expect = |grid: &Grid| -> Result<f64> {
        let mut acc = 0.0;
        let mut wsum = 0.0;
        let mut fill = vec![0.0; idx.len()];
        for (w, levels) in grid {
            for (slot, &(ch, _)) in fill.iter_mut().zip(idx.positions()) {
                let k = channels.iter().position(|&c| c == ch).expect("channel in idx");
                *slot = levels[k];
            }
            let hybrid = splice(&sample.series, &idx, &fill)?;
            acc += w * classify(f, &hybrid)?;
            wsum += w;
        }
        Ok(acc / wsum)
    };
    let [gt_grid, gb_grid, gc_grid] = &grids;
    let e_t = expect(gt_grid)?;
    let e_b = expect(gb_grid)?;
    let e_c = expect(gc_grid)?;
    let observed = classify(f, &sample.series)?;
    let c = opts.clamp;
    Ok(ExactEffects {
        ite: clamp_prob(e_t, c).log2() - clamp_prob(e_b, c).log2(),
        iaa: clamp_prob(observed, c).log2() - clamp_prob(e_c, c).log2(),
        mean_prob_target: e_t,
        mean_prob_baseline: e_b,
        mean_prob_conditional: e_c,
        observed_prob: observed,
    })
}

fn idx_channels(idx: &SegmentIndex) -> Vec<usize> {
    let mut ch: Vec<usize> = idx.positions().iter().map(|&(c, _)| c).collect();
    ch.dedup();
    ch
}

fn complement_blocks(gt: &GroundTruth, sample: &LabeledSample, idx: &SegmentIndex) -> Vec<super::Block> {
    gt.blocks(&sample.series, |ch, t| sample.mask.concept_at(ch, t), Some(idx))
}

fn scale(grid: Grid, by: f64) -> Grid {
    grid.into_iter().map(|(w, v)| (w * by, v)).collect()
}

fn support_tuples(k: usize, n: usize) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::new()];
    for _ in 0..n {
        out = out
            .into_iter()
            .flat_map(|t| {
                (0..k).map(move |j| {
                    let mut t2 = t.clone();
                    t2.push(j);
                    t2
                })
            })
            .collect();
    }
    out
}

/// Tensor grid over per-channel concept noise; a single zero node when noise is 0.
fn noise_grid(gh: &GaussHermite, noise: f64, n_channels: usize) -> Vec<(f64, Vec<f64>)> {
    if noise == 0.0 {
        return vec![(1.0, vec![0.0; n_channels])];
    }
    let mut out = vec![(1.0, Vec::new())];
    for _ in 0..n_channels {
        out = out
            .into_iter()
            .flat_map(|(w, e)| {
                gh.weights.iter().zip(&gh.nodes).map(move |(&wi, &zi)| {
                    let mut e2 = e.clone();
                    e2.push(zi);
                    (w * wi, e2)
                })
            })
            .collect();
    }
    out
}
