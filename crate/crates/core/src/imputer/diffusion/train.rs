use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)] // inherent when a dependency links std
use num_traits::Float;
use serde::{Deserialize, Serialize};

use super::denoiser::{DenoiserConfig, DenoiserModel, Layout, Pass, Standardizer, State};
use super::schedule::DiffusionSchedule;
use super::MaskSampler;
use crate::data::{ClassLabel, Dataset, LabeledSample, Split};
use crate::imputer::Conditioning;
use crate::rng::{rng_stream, RngStream};
use crate::{Error, Result};

/// Smallest channel std kept by the standardization; constant channels map to 0.
const STD_FLOOR: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq)]
pub struct DdpmTrainOptions {
    pub schedule: DiffusionSchedule,
    pub label_filter: Option<ClassLabel>,
    pub mask_sampler: MaskSampler,
    /// Restricts concept-region masks to this concept where the sample has it.
    pub concept_filter: Option<u32>,
    pub iters: usize,
    pub lr: f64,
    /// Training series per Adam step.
    pub batch_size: usize,
    /// Validation loss is evaluated and the best parameters kept every this many iterations.
    pub eval_every: usize,
    /// Fixed `(sample, mask, t, ε)` draws making up the validation loss.
    pub val_draws: usize,
    pub denoiser: DenoiserConfig,
    pub seed: u64,
}

impl Default for DdpmTrainOptions {
    fn default() -> Self {
        Self {
            schedule: DiffusionSchedule::default(),
            label_filter: None,
            mask_sampler: MaskSampler::ConceptRegions,
            concept_filter: None,
            iters: 10_000,
            lr: 2e-4,
            batch_size: 16,
            eval_every: 1000,
            val_draws: 64,
            denoiser: DenoiserConfig::default(),
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    /// Mean training loss of each iteration.
    pub losses: Vec<f64>,
    /// `(iteration, validation loss)` at every evaluation.
    pub validation: Vec<(usize, f64)>,
    pub selected_iter: usize,
    pub selected_loss: f64,
}

/// One corrupted training example.
struct Draw {
    sample: usize,
    positions: Vec<(usize, usize)>,
    t: usize,
    eps: Vec<f64>,
}

pub(crate) fn fit_standardizer(samples: &[&LabeledSample], n_channels: usize) -> Standardizer {
    let mut mean = vec![0.0; n_channels];
    let mut std = vec![0.0; n_channels];
    let mut signal_var = vec![1.0; n_channels];
    for ch in 0..n_channels {
        let vals: Vec<f64> = samples.iter().flat_map(|s| s.series.channel(ch).iter().copied()).collect();
        let m = crate::stats::mean(&vals);
        let s = crate::stats::std_population(&vals);
        mean[ch] = m;
        if s > STD_FLOOR {
            std[ch] = s;
        } else {
            std[ch] = 1.0;
            signal_var[ch] = 0.0;
        }
    }
    Standardizer { mean, std, signal_var }
}

/// Positions corrupted in one training example.
pub(crate) fn draw_mask(
    sampler: MaskSampler,
    concept: Option<u32>,
    s: &LabeledSample,
    rng: &mut RngStream,
) -> Vec<(usize, usize)> {
    let n_ch = s.series.n_channels();
    let n_t = s.series.n_timesteps();
    if sampler == MaskSampler::ConceptRegions {
        let mut present: Vec<u32> = s.mask.expand(n_ch).into_iter().filter(|&c| c > 0).collect();
        present.sort_unstable();
        present.dedup();
        if let Some(c) = concept.filter(|c| present.contains(c)) {
            present = vec![c];
        }
        if !present.is_empty() {
            let c = present[rng.index(present.len())];
            if let Ok(idx) = s.segment(c, None) {
                return idx.positions().to_vec();
            }
        }
    }
    let lo = (n_t as f64 * 0.1).ceil().max(1.0) as usize;
    let hi = ((n_t as f64 * 0.4).ceil() as usize).clamp(lo, n_t);
    let len = lo + rng.index(hi - lo + 1);
    let start = rng.index(n_t - len + 1);
    (0..n_ch)
        .flat_map(|ch| (start..start + len).map(move |t| (ch, t)))
        .collect()
}

fn make_draw(
    pool: &[&LabeledSample],
    sampler: MaskSampler,
    concept: Option<u32>,
    steps: usize,
    rng: &mut RngStream,
) -> Draw {
    let sample = rng.index(pool.len());
    let positions = draw_mask(sampler, concept, pool[sample], rng);
    let t = 1 + rng.index(steps);
    let eps = (0..positions.len()).map(|_| rng.normal()).collect();
    Draw {
        sample,
        positions,
        t,
        eps,
    }
}

/// Adds the loss of one draw; accumulates gradients when `grad` is given.
/// Returns `(sum of squared errors, number of masked entries)`.
fn draw_loss(
    model: &DenoiserModel,
    pool: &[&LabeledSample],
    d: &Draw,
    pass: &mut Pass,
    mut grad: Option<&mut [f64]>,
) -> (f64, usize) {
    let s = pool[d.sample];
    let n_ch = s.series.n_channels();
    let n_t = s.series.n_timesteps();
    let mut values = vec![0.0; n_ch * n_t];
    for ch in 0..n_ch {
        for (t, v) in s.series.channel(ch).iter().enumerate() {
            values[ch * n_t + t] = model.standardize(ch, *v);
        }
    }
    let mut masked = vec![false; n_ch * n_t];
    let mut target = vec![0.0; n_ch * n_t];
    for (&(ch, t), &e) in d.positions.iter().zip(&d.eps) {
        let k = ch * n_t + t;
        masked[k] = true;
        target[k] = e;
        values[k] = model.schedule().q_sample(values[k], d.t, e);
    }
    let st = State {
        n_t,
        values: &values,
        masked: &masked,
    };
    let mut eps_hat = vec![0.0; n_ch];
    let mut d_out = vec![0.0; n_ch];
    let mut sse = 0.0;
    let mut count = 0;
    for p in 0..n_t {
        if !(0..n_ch).any(|ch| masked[ch * n_t + p]) {
            continue;
        }
        model.predict_noise(&st, p, d.t, pass, &mut eps_hat);
        for ch in 0..n_ch {
            let k = ch * n_t + p;
            d_out[ch] = 0.0;
            if masked[k] {
                let r = eps_hat[ch] - target[k];
                sse += r * r;
                count += 1;
                d_out[ch] = 2.0 * r * model.preconditioning(ch, d.t).1;
            }
        }
        if let Some(g) = grad.as_deref_mut() {
            model.backward(pass, &d_out, g);
        }
    }
    (sse, count)
}

fn mean_loss(model: &DenoiserModel, pool: &[&LabeledSample], draws: &[Draw], pass: &mut Pass) -> f64 {
    let (sse, n) = draws
        .iter()
        .map(|d| draw_loss(model, pool, d, pass, None))
        .fold((0.0, 0), |(a, b), (x, y)| (a + x, b + y));
    if n == 0 {
        0.0
    } else {
        sse / n as f64
    }
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    step: i32,
}

impl Adam {
    const B1: f64 = 0.9;
    const B2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn new(n: usize) -> Self {
        Self {
            m: vec![0.0; n],
            v: vec![0.0; n],
            step: 0,
        }
    }

    fn update(&mut self, params: &mut [f64], grad: &[f64], lr: f64) {
        self.step += 1;
        let c1 = 1.0 - Self::B1.powi(self.step);
        let c2 = 1.0 - Self::B2.powi(self.step);
        for k in 0..params.len() {
            self.m[k] = Self::B1 * self.m[k] + (1.0 - Self::B1) * grad[k];
            self.v[k] = Self::B2 * self.v[k] + (1.0 - Self::B2) * grad[k] * grad[k];
            params[k] -= lr * (self.m[k] / c1) / ((self.v[k] / c2).sqrt() + Self::EPS);
        }
    }
}

/// Trains a masked-denoising noise predictor on the training split.
///
/// Each iteration draws `batch_size` training series, corrupts one mask region
/// per series at a uniform step `t ∈ [1, T]` and takes one Adam step on the
/// noise MSE over the corrupted positions. Every `eval_every` iterations the
/// validation loss is computed on a fixed set of draws from the validation
/// split (the training pool when the split is empty); the returned model
/// carries the parameters with the lowest validation loss.
pub fn ddpm_train(d: &Dataset, opts: &DdpmTrainOptions) -> Result<(DenoiserModel, TrainReport)> {
    if opts.batch_size == 0 || opts.eval_every == 0 || !(opts.lr > 0.0 && opts.lr.is_finite()) {
        return Err(Error::InvalidConfig(
            "batch_size and eval_every must be positive and lr finite and positive".into(),
        ));
    }
    let keep = |s: &&LabeledSample| opts.label_filter.is_none_or(|l| s.label == l);
    let train: Vec<&LabeledSample> = d.in_split(Split::Train).filter(keep).collect();
    if train.is_empty() {
        return Err(Error::EmptyPool("no training samples for the diffusion imputer".into()));
    }
    let mut val: Vec<&LabeledSample> = d.in_split(Split::Validation).filter(keep).collect();
    if val.is_empty() {
        val = train.clone();
    }
    let n_ch = train[0].series.n_channels();
    let root = rng_stream(opts.seed, "ddpm-train");
    let conditioning = opts.label_filter.map_or(Conditioning::Unconditional, Conditioning::ClassSpecific);
    let mut model = DenoiserModel::init(
        opts.denoiser,
        n_ch,
        opts.schedule.clone(),
        fit_standardizer(&train, n_ch),
        conditioning,
        opts.mask_sampler,
        &mut root.substream("init"),
    )?;
    let steps = opts.schedule.steps();
    let mut vrng = root.substream("validation");
    let val_draws: Vec<Draw> = (0..opts.val_draws.max(1))
        .map(|_| make_draw(&val, opts.mask_sampler, opts.concept_filter, steps, &mut vrng))
        .collect();

    let layout = Layout::new(&opts.denoiser, n_ch);
    let mut pass = Pass::new(&layout);
    let n = model.params().len();
    let mut adam = Adam::new(n);
    let mut grad = vec![0.0; n];
    let mut rng = root.substream("iterations");
    let mut report = TrainReport::default();
    let mut best = (mean_loss(&model, &val, &val_draws, &mut pass), model.params().to_vec(), 0);
    report.validation.push((0, best.0));

    for it in 1..=opts.iters {
        grad.iter_mut().for_each(|g| *g = 0.0);
        let mut sse = 0.0;
        let mut count = 0;
        for _ in 0..opts.batch_size {
            let draw = make_draw(&train, opts.mask_sampler, opts.concept_filter, steps, &mut rng);
            let (s, c) = draw_loss(&model, &train, &draw, &mut pass, Some(&mut grad));
            sse += s;
            count += c;
        }
        if count > 0 {
            let scale = 1.0 / count as f64;
            grad.iter_mut().for_each(|g| *g *= scale);
            adam.update(model.params_mut(), &grad, opts.lr);
        }
        report.losses.push(if count > 0 { sse / count as f64 } else { 0.0 });
        if it % opts.eval_every == 0 || it == opts.iters {
            let v = mean_loss(&model, &val, &val_draws, &mut pass);
            report.validation.push((it, v));
            if v < best.0 {
                best = (v, model.params().to_vec(), it);
            }
        }
    }
    model.params_mut().copy_from_slice(&best.1);
    report.selected_iter = best.2;
    report.selected_loss = best.0;
    Ok((model, report))
}

/// Validation-style loss of `model` on `n` fresh draws from `d`'s `split`.
pub fn ddpm_eval_loss(model: &DenoiserModel, d: &Dataset, split: Split, n: usize, seed: u64) -> Result<f64> {
    let pool: Vec<&LabeledSample> = d.in_split(split).collect();
    if pool.is_empty() {
        return Err(Error::EmptyPool("no samples to evaluate on".into()));
    }
    let mut rng = rng_stream(seed, "ddpm-eval");
    let draws: Vec<Draw> = (0..n)
        .map(|_| make_draw(&pool, model.mask_sampler(), None, model.schedule().steps(), &mut rng))
        .collect();
    let mut pass = Pass::new(&Layout::new(&model.config(), model.n_channels()));
    Ok(mean_loss(model, &pool, &draws, &mut pass))
}
