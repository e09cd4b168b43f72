//! Masked-denoising diffusion imputer.
//!
//! Noise is applied only to the positions being imputed; the remaining
//! positions stay at their observed values and act as conditioning.

mod denoiser;
mod schedule;
mod train;

pub use denoiser::{DenoiserConfig, DenoiserModel, Standardizer};
pub use schedule::{DiffusionSchedule, DEFAULT_BETA0, DEFAULT_BETA1, DEFAULT_STEPS};
pub use train::{ddpm_eval_loss, ddpm_train, DdpmTrainOptions, TrainReport};

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)] // inherent when a dependency links std
use num_traits::Float;
use serde::{Deserialize, Serialize};

use super::{Conditioning, SegmentImputer};
use crate::data::{LabeledSample, SegmentIndex};
use crate::rng::RngStream;
use crate::{Error, Result};
use denoiser::{Layout, Pass, State};

/// Which positions are corrupted during training.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MaskSampler {
    /// The full region of a uniformly chosen concept present in the sample.
    ConceptRegions,
    /// A contiguous window of 10–40 % of the series, across all channels.
    BlackoutRandom,
}

impl MaskSampler {
    pub fn as_str(self) -> &'static str {
        match self {
            MaskSampler::ConceptRegions => "concept-regions",
            MaskSampler::BlackoutRandom => "blackout-random",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "concept-regions" => Some(MaskSampler::ConceptRegions),
            "blackout-random" => Some(MaskSampler::BlackoutRandom),
            _ => None,
        }
    }
}

/// Runs the reverse chain `x_T → x_0` on the masked entries of `values`.
///
/// `values` starts with the masked entries already replaced by `x_T`.
/// `eps_fn(t, values, out)` writes the noise estimate of each masked entry (in
/// order) into `out`. The added noise has std `noise_scale · √β̃_t`; zero gives
/// the deterministic limit.
pub(crate) fn reverse_chain(
    schedule: &DiffusionSchedule,
    values: &mut [f64],
    masked: &[usize],
    mut eps_fn: impl FnMut(usize, &[f64], &mut [f64]),
    noise_scale: f64,
    rng: &mut RngStream,
) {
    let mut eps = vec![0.0; masked.len()];
    for t in (1..=schedule.steps()).rev() {
        eps_fn(t, values, &mut eps);
        let sd = if t > 1 {
            noise_scale * schedule.posterior_variance(t).sqrt()
        } else {
            0.0
        };
        for (&k, &e) in masked.iter().zip(&eps) {
            let mean = schedule.reverse_mean(t, values[k], e);
            values[k] = if sd > 0.0 { mean + sd * rng.normal() } else { mean };
        }
    }
}

/// Draws replacement values for `idx` by reverse diffusion from `t = T` to 1.
///
/// Positions outside `idx` keep their observed values at every step.
pub fn ddpm_impute(
    model: &DenoiserModel,
    schedule: &DiffusionSchedule,
    sample: &LabeledSample,
    idx: &SegmentIndex,
    rng: &mut RngStream,
) -> Result<Vec<f64>> {
    if schedule != model.schedule() {
        return Err(Error::ShapeMismatch(format!(
            "model was trained with a {}-step schedule",
            model.schedule().steps()
        )));
    }
    let n_ch = sample.series.n_channels();
    let n_t = sample.series.n_timesteps();
    if n_ch != model.n_channels() {
        return Err(Error::ShapeMismatch(format!(
            "model expects {} channels, sample {} has {n_ch}",
            model.n_channels(),
            sample.sample_id
        )));
    }
    if idx.is_empty() {
        return Ok(Vec::new());
    }
    let mut values = vec![0.0; n_ch * n_t];
    for ch in 0..n_ch {
        for (t, v) in sample.series.channel(ch).iter().enumerate() {
            values[ch * n_t + t] = model.standardize(ch, *v);
        }
    }
    let mut masked = vec![false; n_ch * n_t];
    let mut flat = Vec::with_capacity(idx.len());
    for &(ch, t) in idx.positions() {
        if ch >= n_ch || t >= n_t {
            return Err(Error::ShapeMismatch(format!("position ({ch}, {t}) outside series")));
        }
        let k = ch * n_t + t;
        if masked[k] {
            return Err(Error::ShapeMismatch(format!("position ({ch}, {t}) listed twice")));
        }
        masked[k] = true;
        flat.push(k);
    }
    for &k in &flat {
        values[k] = rng.normal();
    }
    let mut steps: Vec<usize> = idx.positions().iter().map(|&(_, t)| t).collect();
    steps.sort_unstable();
    steps.dedup();

    let mut pass = Pass::new(&Layout::new(&model.config(), n_ch));
    let mut eps_grid = vec![0.0; n_ch * n_t];
    let mut eps_col = vec![0.0; n_ch];
    let noise_fn = |t: usize, vals: &[f64], out: &mut [f64]| {
        let st = State {
            n_t,
            values: vals,
            masked: &masked,
        };
        for &p in &steps {
            model.predict_noise(&st, p, t, &mut pass, &mut eps_col);
            for ch in 0..n_ch {
                eps_grid[ch * n_t + p] = eps_col[ch];
            }
        }
        for (o, &k) in out.iter_mut().zip(&flat) {
            *o = eps_grid[k];
        }
    };
    reverse_chain(schedule, &mut values, &flat, noise_fn, 1.0, rng);

    let out: Vec<f64> = idx
        .positions()
        .iter()
        .zip(&flat)
        .map(|(&(ch, _), &k)| model.destandardize(ch, values[k]))
        .collect();
    if out.iter().any(|v| !v.is_finite()) {
        return Err(Error::Imputer {
            sample_id: sample.sample_id.clone(),
            source: alloc::boxed::Box::new(Error::InvalidConfig("non-finite diffusion output".into())),
        });
    }
    Ok(out)
}

/// A trained denoiser used as a [`SegmentImputer`].
#[derive(Clone, Debug, PartialEq)]
pub struct DdpmImputer {
    pub model: DenoiserModel,
}

impl DdpmImputer {
    pub fn new(model: DenoiserModel) -> Self {
        Self { model }
    }
}

impl SegmentImputer for DdpmImputer {
    fn conditioning(&self) -> Conditioning {
        self.model.conditioning()
    }

    fn blackout_capable(&self) -> bool {
        self.model.mask_sampler() == MaskSampler::BlackoutRandom
    }

    fn impute(&self, sample: &LabeledSample, idx: &SegmentIndex, rng: &mut RngStream) -> Result<Vec<f64>> {
        ddpm_impute(&self.model, self.model.schedule(), sample, idx, rng)
    }
}
