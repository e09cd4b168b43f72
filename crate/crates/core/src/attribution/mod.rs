//! Causal and associational concept attributions.
//!
//! For one sample and concept, the individual treatment effect is
//!
//! ```text
//! ITE = log2 E f(X | X_c ~ do(D = D*)) − log2 E f(X | X_c ~ do(D = D0))
//! ```
//!
//! and the individual associational attribution is
//!
//! ```text
//! IAA = log2 f(X) − log2 E f(X | X_c ~ p(X_c | X_c^∁)).
//! ```
//!
//! Expectations are Monte-Carlo means over imputed hybrids; the log is taken
//! of the clamped mean. Averaging over test samples of the target class gives
//! the ATE with a percentile bootstrap interval.

mod ate;

pub use ate::{
    ate, ate_from_effects, effect_matrix, effect_matrix_in, sample_effect, AteCell, AteSummary,
    AttributionResult, Executor, ImputerSet, SampleEffect, Sequential,
};

use alloc::vec::Vec;

#[allow(unused_imports)] // inherent when a dependency links std
use num_traits::Float;
use serde::{Deserialize, Serialize};

use crate::classifier::{clamp_prob, classify, ProbClassifier, PROB_CLAMP};
use crate::data::{splice, ClassLabel, LabeledSample, MultivariateSeries};
use crate::imputer::{impute_channel_blackout, SegmentImputer};
use crate::rng::{rng_stream, RngStream};
use crate::stats::{bootstrap_replicates, mean, std_sample};
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EngineConfig {
    pub n_imputations: usize,
    pub bootstrap_b: usize,
    pub level: f64,
    pub prob_clamp: f64,
    pub seed: u64,
    /// Class `D*` whose test samples enter the ATE.
    pub target_class: ClassLabel,
    /// Resamples of the imputation batches behind each effect's stderr.
    pub stderr_resamples: usize,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self {
            n_imputations: 40,
            bootstrap_b: 1000,
            level: 0.95,
            prob_clamp: PROB_CLAMP,
            seed: 0,
            target_class: ClassLabel::TARGET,
            stderr_resamples: 200,
        }
    }
}

impl EngineConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_imputations == 0 {
            return Err(Error::InvalidConfig("n_imputations must be at least 1".into()));
        }
        if !(self.level > 0.0 && self.level < 1.0) {
            return Err(Error::InvalidConfig(alloc::format!("level {} outside (0, 1)", self.level)));
        }
        if !(self.prob_clamp > 0.0 && self.prob_clamp < 0.5) {
            return Err(Error::InvalidConfig("prob_clamp must lie in (0, 0.5)".into()));
        }
        if self.bootstrap_b == 0 {
            return Err(Error::InvalidConfig("bootstrap_b must be positive".into()));
        }
        Ok(())
    }
}

/// Whether the first term of an effect is an imputed expectation or `f(X)` itself.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FirstTermMode {
    Imputed,
    Observed,
}

/// One individual effect in bits.
///
/// `value = log2(clamp(mean_prob_target)) − log2(clamp(mean_prob_baseline))`;
/// for an IAA `mean_prob_target` is the observed `f(X)` and
/// `mean_prob_baseline` the unconditional expectation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EffectEstimate {
    pub value: f64,
    pub stderr: f64,
    pub n_imputations: usize,
    pub mean_prob_target: f64,
    pub mean_prob_baseline: f64,
    pub first_term_mode: FirstTermMode,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Kind {
    Causal,
    Associational,
}

impl Kind {
    pub fn as_str(self) -> &'static str {
        match self {
            Kind::Causal => "causal",
            Kind::Associational => "associational",
        }
    }
}

/// Region replaced in a hybrid: the concept on all channels, or on one channel
/// through blackout imputation.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Region {
    Global(u32),
    Channel(u32, usize),
}

impl Region {
    pub fn concept(self) -> u32 {
        match self {
            Region::Global(c) | Region::Channel(c, _) => c,
        }
    }

    pub fn channel(self) -> Option<usize> {
        match self {
            Region::Global(_) => None,
            Region::Channel(_, ch) => Some(ch),
        }
    }

    /// Whether the sample has any position in the region.
    pub fn present_in(self, s: &LabeledSample) -> Result<bool> {
        Ok(!s.segment(self.concept(), self.channel())?.is_empty())
    }
}

/// Stream of one `(sample, concept, channel, kind)` cell.
pub fn cell_stream(seed: u64, sample_id: &str, region: Region, kind: Kind) -> RngStream {
    rng_stream(seed, "attribution")
        .substream(sample_id)
        .substream_idx("concept", region.concept() as u64)
        .substream_idx("channel", region.channel().map_or(u64::MAX, |c| c as u64))
        .substream(kind.as_str())
}

/// One hybrid drawn from `imputer`.
pub fn draw_hybrid(
    sample: &LabeledSample,
    region: Region,
    imputer: &(impl SegmentImputer + ?Sized),
    rng: &mut RngStream,
) -> Result<MultivariateSeries> {
    match region {
        Region::Global(c) => {
            let idx = sample.segment(c, None)?;
            let values = imputer
                .impute(sample, &idx, rng)
                .map_err(|e| Error::imputer(&sample.sample_id, e))?;
            splice(&sample.series, &idx, &values)
        }
        Region::Channel(c, ch) => impute_channel_blackout(imputer, sample, c, ch, rng),
    }
}

/// Classifier outputs on `n` hybrids. Draw `k` uses the child stream
/// `(imputer conditioning, k)`, so the same imputer sees the same draws
/// regardless of its role.
fn hybrid_probs(
    sample: &LabeledSample,
    f: &(impl ProbClassifier + ?Sized),
    region: Region,
    imputer: &(impl SegmentImputer + ?Sized),
    n: usize,
    rng: &RngStream,
) -> Result<Vec<f64>> {
    let base = rng.substream(&imputer.conditioning().tag());
    (0..n)
        .map(|k| {
            let mut r = base.substream_idx("draw", k as u64);
            let x = draw_hybrid(sample, region, imputer, &mut r)?;
            classify(f, &x)
        })
        .collect()
}

fn log_ratio(p: f64, q: f64, clamp: f64) -> f64 {
    clamp_prob(p, clamp).log2() - clamp_prob(q, clamp).log2()
}

/// Bootstrap std of the log-ratio over the imputation batches. `target` is
/// `None` when the first term is observed.
fn batch_stderr(
    target: Option<(&[f64], &str)>,
    baseline: (&[f64], &str),
    observed: f64,
    cfg: &EngineConfig,
    rng: &RngStream,
) -> f64 {
    let b = cfg.stderr_resamples;
    if b < 2 {
        return 0.0;
    }
    let root = rng.substream("stderr");
    let means = |(v, tag): (&[f64], &str)| {
        bootstrap_replicates(v, b, &mut root.substream(tag), mean)
    };
    let tm = target.map(means);
    let bm = means(baseline);
    let reps: Vec<f64> = (0..b)
        .map(|i| {
            let t = tm.as_ref().map_or(observed, |m| m[i]);
            log_ratio(t, bm[i], cfg.prob_clamp)
        })
        .collect();
    std_sample(&reps)
}

/// ITE of `region` for one sample; `None` when the sample lacks the region.
pub fn effect_ite(
    sample: &LabeledSample,
    f: &(impl ProbClassifier + ?Sized),
    region: Region,
    target: &(impl SegmentImputer + ?Sized),
    baseline: &(impl SegmentImputer + ?Sized),
    cfg: &EngineConfig,
    rng: &RngStream,
) -> Result<Option<EffectEstimate>> {
    cfg.validate()?;
    if !region.present_in(sample)? {
        return Ok(None);
    }
    let n = cfg.n_imputations;
    let pt = hybrid_probs(sample, f, region, target, n, rng)?;
    let pb = hybrid_probs(sample, f, region, baseline, n, rng)?;
    let (mt, mb) = (mean(&pt), mean(&pb));
    let (tt, tb) = (target.conditioning().tag(), baseline.conditioning().tag());
    Ok(Some(EffectEstimate {
        value: log_ratio(mt, mb, cfg.prob_clamp),
        stderr: batch_stderr(Some((&pt, &tt)), (&pb, &tb), 0.0, cfg, rng),
        n_imputations: n,
        mean_prob_target: mt,
        mean_prob_baseline: mb,
        first_term_mode: FirstTermMode::Imputed,
    }))
}

/// IAA of `region` for one sample; `None` when the sample lacks the region.
pub fn effect_iaa(
    sample: &LabeledSample,
    f: &(impl ProbClassifier + ?Sized),
    region: Region,
    unconditional: &(impl SegmentImputer + ?Sized),
    cfg: &EngineConfig,
    rng: &RngStream,
) -> Result<Option<EffectEstimate>> {
    cfg.validate()?;
    if !region.present_in(sample)? {
        return Ok(None);
    }
    let observed = classify(f, &sample.series)?;
    let pu = hybrid_probs(sample, f, region, unconditional, cfg.n_imputations, rng)?;
    let mu = mean(&pu);
    let tag = unconditional.conditioning().tag();
    Ok(Some(EffectEstimate {
        value: log_ratio(observed, mu, cfg.prob_clamp),
        stderr: batch_stderr(None, (&pu, &tag), observed, cfg, rng),
        n_imputations: cfg.n_imputations,
        mean_prob_target: observed,
        mean_prob_baseline: mu,
        first_term_mode: FirstTermMode::Observed,
    }))
}

/// Individual treatment effect of `concept` across all channels.
pub fn ite(
    sample: &LabeledSample,
    f: &(impl ProbClassifier + ?Sized),
    concept: u32,
    target: &(impl SegmentImputer + ?Sized),
    baseline: &(impl SegmentImputer + ?Sized),
    cfg: &EngineConfig,
    rng: &RngStream,
) -> Result<Option<EffectEstimate>> {
    effect_ite(sample, f, Region::Global(concept), target, baseline, cfg, rng)
}

/// Individual associational attribution of `concept` across all channels.
pub fn iaa(
    sample: &LabeledSample,
    f: &(impl ProbClassifier + ?Sized),
    concept: u32,
    unconditional: &(impl SegmentImputer + ?Sized),
    cfg: &EngineConfig,
    rng: &RngStream,
) -> Result<Option<EffectEstimate>> {
    effect_iaa(sample, f, Region::Global(concept), unconditional, cfg, rng)
}

/// Imputers behind one channel-specific effect.
#[derive(Clone, Copy)]
pub enum ChannelImputers<'a> {
    Causal {
        target: &'a dyn SegmentImputer,
        baseline: &'a dyn SegmentImputer,
    },
    Associational {
        unconditional: &'a dyn SegmentImputer,
    },
}

/// Effect of `concept` restricted to `channel`, with hybrids from blackout imputation.
pub fn channel_effect(
    sample: &LabeledSample,
    f: &(impl ProbClassifier + ?Sized),
    concept: u32,
    channel: usize,
    imputers: ChannelImputers<'_>,
    cfg: &EngineConfig,
    rng: &RngStream,
) -> Result<Option<EffectEstimate>> {
    let region = Region::Channel(concept, channel);
    match imputers {
        ChannelImputers::Causal { target, baseline } => {
            effect_ite(sample, f, region, target, baseline, cfg, rng)
        }
        ChannelImputers::Associational { unconditional } => {
            effect_iaa(sample, f, region, unconditional, cfg, rng)
        }
    }
}

/// `log2 E f(D*-imputed hybrids) − log2 f(X)`: how far the imputed first term
/// of the ITE is from the observed output. `None` when the concept is absent.
pub fn first_term_diagnostic(
    sample: &LabeledSample,
    f: &(impl ProbClassifier + ?Sized),
    concept: u32,
    target: &(impl SegmentImputer + ?Sized),
    cfg: &EngineConfig,
    rng: &RngStream,
) -> Result<Option<f64>> {
    cfg.validate()?;
    let region = Region::Global(concept);
    if !region.present_in(sample)? {
        return Ok(None);
    }
    let pt = hybrid_probs(sample, f, region, target, cfg.n_imputations, rng)?;
    let observed = classify(f, &sample.series)?;
    Ok(Some(log_ratio(mean(&pt), observed, cfg.prob_clamp)))
}

#[cfg(test)]
mod tests;
