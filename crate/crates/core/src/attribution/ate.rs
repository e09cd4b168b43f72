use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::{cell_stream, effect_iaa, effect_ite, EffectEstimate, EngineConfig, Kind, Region};
use crate::classifier::ProbClassifier;
use crate::data::{Dataset, LabeledSample, Split};
use crate::imputer::SegmentImputer;
use crate::rng::{rng_stream, RngStream};
use crate::stats::{bootstrap_replicates, mean, percentile_interval};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AteSummary {
    pub ate: f64,
    pub low: f64,
    pub high: f64,
    /// `0 ∉ [low, high]`.
    pub significant: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleEffect {
    pub sample_id: String,
    pub effect: EffectEstimate,
}

/// One `(concept, channel)` entry of an attribution grid; `channel = None` is the global column.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AteCell {
    pub concept: u32,
    pub channel: Option<usize>,
    pub kind: Kind,
    pub n_used: usize,
    pub n_skipped: usize,
    /// `None` when the cell could not be computed; see `error`.
    pub summary: Option<AteSummary>,
    pub error: Option<String>,
    pub effects: Vec<SampleEffect>,
}

impl AteCell {
    pub fn region(&self) -> Region {
        match self.channel {
            Some(ch) => Region::Channel(self.concept, ch),
            None => Region::Global(self.concept),
        }
    }
}

/// Attribution grid of one kind: concepts ascending, channels in dataset order, global last.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttributionResult {
    pub kind: Kind,
    pub concepts: Vec<u32>,
    pub channels: Vec<String>,
    pub cells: Vec<AteCell>,
}

impl AttributionResult {
    pub fn cell(&self, concept: u32, channel: Option<usize>) -> Option<&AteCell> {
        self.cells.iter().find(|c| c.concept == concept && c.channel == channel)
    }
}

fn ate_stream(seed: u64, region: Region, kind: Kind) -> RngStream {
    rng_stream(seed, "ate")
        .substream_idx("concept", region.concept() as u64)
        .substream_idx("channel", region.channel().map_or(u64::MAX, |c| c as u64))
        .substream(kind.as_str())
}

/// Mean of the per-sample effects with a percentile bootstrap interval.
///
/// The interval is widened to contain the mean when the resampled quantiles miss it.
pub fn ate_from_effects(concept: u32, values: &[f64], cfg: &EngineConfig, rng: &mut RngStream) -> Result<AteSummary> {
    if values.is_empty() {
        return Err(Error::NoUsableSamples { concept });
    }
    let ate = mean(values);
    let reps = bootstrap_replicates(values, cfg.bootstrap_b, rng, mean);
    let (low, high) = percentile_interval(&reps, cfg.level);
    let (low, high) = (low.min(ate), high.max(ate));
    Ok(AteSummary {
        ate,
        low,
        high,
        significant: low > 0.0 || high < 0.0,
    })
}

/// ATE of `region` over test samples of `cfg.target_class`.
///
/// `effect_fn` returns `None` for samples lacking the region; they are counted as skipped.
pub fn ate(
    d: &Dataset,
    effect_fn: impl Fn(&LabeledSample) -> Result<Option<EffectEstimate>>,
    region: Region,
    kind: Kind,
    cfg: &EngineConfig,
) -> Result<AteCell> {
    cfg.validate()?;
    let results = eligible(d, cfg).map(|s| (s.sample_id.clone(), effect_fn(s))).collect();
    assemble_cell(region, kind, results, cfg)
}

fn eligible<'d>(d: &'d Dataset, cfg: &EngineConfig) -> impl Iterator<Item = &'d LabeledSample> + 'd {
    let target = cfg.target_class;
    d.in_split(Split::Test).filter(move |s| s.label == target)
}

fn assemble_cell(
    region: Region,
    kind: Kind,
    results: Vec<(String, Result<Option<EffectEstimate>>)>,
    cfg: &EngineConfig,
) -> Result<AteCell> {
    let mut effects = Vec::new();
    let mut n_skipped = 0;
    for (sample_id, r) in results {
        match r? {
            Some(effect) => effects.push(SampleEffect { sample_id, effect }),
            None => n_skipped += 1,
        }
    }
    let values: Vec<f64> = effects.iter().map(|e| e.effect.value).collect();
    let summary = ate_from_effects(region.concept(), &values, cfg, &mut ate_stream(cfg.seed, region, kind))?;
    Ok(AteCell {
        concept: region.concept(),
        channel: region.channel(),
        kind,
        n_used: effects.len(),
        n_skipped,
        summary: Some(summary),
        error: None,
        effects,
    })
}

/// Imputers available to an attribution run. Causal cells need `target` and
/// `baseline`, associational cells `unconditional`; channel cells use the
/// `channel_*` variants, which must be blackout-capable.
#[derive(Clone, Copy, Default)]
pub struct ImputerSet<'a> {
    pub target: Option<&'a dyn SegmentImputer>,
    pub baseline: Option<&'a dyn SegmentImputer>,
    pub unconditional: Option<&'a dyn SegmentImputer>,
    pub channel_target: Option<&'a dyn SegmentImputer>,
    pub channel_baseline: Option<&'a dyn SegmentImputer>,
    pub channel_unconditional: Option<&'a dyn SegmentImputer>,
}

impl<'a> ImputerSet<'a> {
    /// Uses the same imputers for global and channel cells.
    pub fn shared(
        target: Option<&'a dyn SegmentImputer>,
        baseline: Option<&'a dyn SegmentImputer>,
        unconditional: Option<&'a dyn SegmentImputer>,
    ) -> Self {
        Self {
            target,
            baseline,
            unconditional,
            channel_target: target,
            channel_baseline: baseline,
            channel_unconditional: unconditional,
        }
    }

    pub fn kinds(&self) -> Vec<Kind> {
        let mut k = Vec::new();
        if self.target.is_some() && self.baseline.is_some() {
            k.push(Kind::Causal);
        }
        if self.unconditional.is_some() {
            k.push(Kind::Associational);
        }
        k
    }
}

fn missing(what: &str, region: Region) -> Error {
    Error::Unsupported(alloc::format!(
        "no {what} imputer for {}",
        match region {
            Region::Global(_) => "global cells",
            Region::Channel(..) => "channel cells",
        }
    ))
}

fn pick<'a>(global: bool, g: Option<&'a dyn SegmentImputer>, c: Option<&'a dyn SegmentImputer>) -> Option<&'a dyn SegmentImputer> {
    if global {
        g
    } else {
        c
    }
}

/// Effect of one `(sample, region, kind)` cell on its own stream.
pub fn sample_effect(
    sample: &LabeledSample,
    f: &(impl ProbClassifier + ?Sized),
    region: Region,
    kind: Kind,
    imputers: &ImputerSet<'_>,
    cfg: &EngineConfig,
) -> Result<Option<EffectEstimate>> {
    let rng = cell_stream(cfg.seed, &sample.sample_id, region, kind);
    let global = matches!(region, Region::Global(_));
    match kind {
        Kind::Causal => {
            let t = pick(global, imputers.target, imputers.channel_target).ok_or_else(|| missing("target-class", region))?;
            let b = pick(global, imputers.baseline, imputers.channel_baseline)
                .ok_or_else(|| missing("baseline-class", region))?;
            effect_ite(sample, f, region, t, b, cfg, &rng)
        }
        Kind::Associational => {
            let u = pick(global, imputers.unconditional, imputers.channel_unconditional)
                .ok_or_else(|| missing("unconditional", region))?;
            effect_iaa(sample, f, region, u, cfg, &rng)
        }
    }
}

/// Runs independent jobs, possibly in parallel; results keep job order.
pub trait Executor {
    fn map<R: Send>(&self, n: usize, job: &(dyn Fn(usize) -> R + Sync)) -> Vec<R>;
}

#[derive(Clone, Copy, Debug, Default)]
pub struct Sequential;

impl Executor for Sequential {
    fn map<R: Send>(&self, n: usize, job: &(dyn Fn(usize) -> R + Sync)) -> Vec<R> {
        (0..n).map(job).collect()
    }
}

/// [`effect_matrix_in`] on the current thread.
pub fn effect_matrix(
    d: &Dataset,
    f: &(impl ProbClassifier + ?Sized),
    imputers: &ImputerSet<'_>,
    concepts: &[u32],
    cfg: &EngineConfig,
) -> Result<Vec<AttributionResult>> {
    effect_matrix_in(&Sequential, d, f, imputers, concepts, cfg)
}

/// Full attribution grids, one per kind the imputers allow (causal first).
///
/// Every cell is a concept crossed with each channel plus the global column.
/// A failing cell is recorded with its error and the run continues. Each
/// `(sample, concept, channel, kind)` draws from its own stream, so results
/// do not depend on the executor.
pub fn effect_matrix_in(
    exec: &impl Executor,
    d: &Dataset,
    f: &(impl ProbClassifier + ?Sized),
    imputers: &ImputerSet<'_>,
    concepts: &[u32],
    cfg: &EngineConfig,
) -> Result<Vec<AttributionResult>> {
    cfg.validate()?;
    let kinds = imputers.kinds();
    if kinds.is_empty() {
        return Err(Error::InvalidConfig("no imputers for either kind of attribution".into()));
    }
    let mut concepts = concepts.to_vec();
    concepts.sort_unstable();
    concepts.dedup();
    let n_ch = d.n_channels().unwrap_or(0);
    let regions: Vec<Region> = concepts
        .iter()
        .flat_map(|&c| (0..n_ch).map(move |ch| Region::Channel(c, ch)).chain(core::iter::once(Region::Global(c))))
        .collect();
    let samples: Vec<&LabeledSample> = eligible(d, cfg).collect();
    let n_s = samples.len();
    let n_jobs = kinds.len() * regions.len() * n_s;
    let job = |j: usize| {
        let (kr, s) = (j / n_s, j % n_s);
        let (k, r) = (kr / regions.len(), kr % regions.len());
        sample_effect(samples[s], f, regions[r], kinds[k], imputers, cfg)
    };
    let mut results = exec.map(n_jobs, &job).into_iter();

    let channels = d.channel_names();
    let mut out = Vec::with_capacity(kinds.len());
    for &kind in &kinds {
        let mut cells = Vec::with_capacity(regions.len());
        for &region in &regions {
            let batch: Vec<_> = samples
                .iter()
                .map(|s| (s.sample_id.clone(), results.next().expect("one result per job")))
                .collect();
            let cell = assemble_cell(region, kind, batch, cfg).unwrap_or_else(|e| AteCell {
                concept: region.concept(),
                channel: region.channel(),
                kind,
                n_used: 0,
                n_skipped: 0,
                summary: None,
                error: Some(e.to_string()),
                effects: Vec::new(),
            });
            cells.push(cell);
        }
        out.push(AttributionResult {
            kind,
            concepts: concepts.clone(),
            channels: channels.clone(),
            cells,
        });
    }
    Ok(out)
}
