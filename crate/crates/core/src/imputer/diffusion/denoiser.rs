use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)] // inherent when a dependency links std
use num_traits::Float;
use serde::{Deserialize, Serialize};

use super::schedule::DiffusionSchedule;
use super::MaskSampler;
use crate::imputer::Conditioning;
use crate::rng::RngStream;
use crate::{Error, Result};

/// Lower bound of the output scale, keeps the network trainable on degenerate channels.
const MIN_OUT_SCALE: f64 = 0.05;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DenoiserConfig {
    /// Half-width of the temporal window read at each position.
    pub radius: usize,
    pub hidden: usize,
    /// Width of the sinusoidal step embedding (even).
    pub time_dim: usize,
}

impl Default for DenoiserConfig {
    fn default() -> Self {
        Self {
            radius: 8,
            hidden: 128,
            time_dim: 16,
        }
    }
}

impl DenoiserConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hidden == 0 || self.time_dim == 0 || self.time_dim % 2 != 0 {
            return Err(Error::InvalidConfig(
                "denoiser needs hidden > 0 and an even, positive time_dim".into(),
            ));
        }
        Ok(())
    }

    /// Input width for `n_channels`: per window slot one value and one mask bit
    /// per channel plus a padding bit, then the step embedding.
    pub fn input_dim(&self, n_channels: usize) -> usize {
        (2 * self.radius + 1) * (2 * n_channels + 1) + self.time_dim
    }

    pub fn n_params(&self, n_channels: usize) -> usize {
        let (i, h, o) = (self.input_dim(n_channels), self.hidden, n_channels);
        h * i + h + h * h + h + o * h + o
    }
}

/// Noise predictor for masked diffusion imputation.
///
/// At every position a two-layer residual MLP reads the standardized window of
/// radius `r` (values and mask bits of all channels) plus the step embedding
/// and outputs one value per channel. The noise estimate is
/// `c_skip(t)·x_t + c_out(t)·F(window, t)`, where `c_skip` is the exact
/// estimator for independent positions with the channel's standardized
/// variance, so `F` only learns the dependence on the context.
#[derive(Clone, Debug, PartialEq)]
pub struct DenoiserModel {
    config: DenoiserConfig,
    n_channels: usize,
    schedule: DiffusionSchedule,
    channel_mean: Vec<f64>,
    channel_std: Vec<f64>,
    signal_var: Vec<f64>,
    conditioning: Conditioning,
    mask_sampler: MaskSampler,
    params: Vec<f64>,
}

/// Per-channel standardization fitted on training data.
#[derive(Clone, Debug, PartialEq)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    /// Variance of the standardized values: 1, or 0 for a constant channel.
    pub signal_var: Vec<f64>,
}

impl DenoiserModel {
    #[allow(clippy::too_many_arguments)]
    pub fn from_parts(
        config: DenoiserConfig,
        n_channels: usize,
        schedule: DiffusionSchedule,
        standardizer: Standardizer,
        conditioning: Conditioning,
        mask_sampler: MaskSampler,
        params: Vec<f64>,
    ) -> Result<Self> {
        config.validate()?;
        if n_channels == 0 {
            return Err(Error::ShapeMismatch("denoiser needs at least one channel".into()));
        }
        let Standardizer { mean, std, signal_var } = standardizer;
        if mean.len() != n_channels || std.len() != n_channels || signal_var.len() != n_channels {
            return Err(Error::ShapeMismatch(format!(
                "standardization vectors must have {n_channels} entries"
            )));
        }
        if std.iter().any(|s| !(*s > 0.0 && s.is_finite())) || mean.iter().chain(&signal_var).any(|v| !v.is_finite()) {
            return Err(Error::InvalidConfig("invalid standardization parameters".into()));
        }
        let n = config.n_params(n_channels);
        if params.len() != n {
            return Err(Error::LengthMismatch {
                expected: n,
                found: params.len(),
            });
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::InvalidConfig("non-finite denoiser parameter".into()));
        }
        Ok(Self {
            config,
            n_channels,
            schedule,
            channel_mean: mean,
            channel_std: std,
            signal_var,
            conditioning,
            mask_sampler,
            params,
        })
    }

    /// Randomly initialized network.
    pub fn init(
        config: DenoiserConfig,
        n_channels: usize,
        schedule: DiffusionSchedule,
        standardizer: Standardizer,
        conditioning: Conditioning,
        mask_sampler: MaskSampler,
        rng: &mut RngStream,
    ) -> Result<Self> {
        config.validate()?;
        let (i, h, o) = (config.input_dim(n_channels), config.hidden, n_channels);
        let mut params = Vec::with_capacity(config.n_params(n_channels));
        let s1 = (1.0 / i as f64).sqrt();
        let s2 = (1.0 / h as f64).sqrt();
        params.extend((0..h * i).map(|_| rng.normal() * s1));
        params.extend(core::iter::repeat_n(0.0, h));
        params.extend((0..h * h).map(|_| rng.normal() * s2 * 0.5));
        params.extend(core::iter::repeat_n(0.0, h));
        params.extend((0..o * h).map(|_| rng.normal() * s2 * 0.1));
        params.extend(core::iter::repeat_n(0.0, o));
        Self::from_parts(config, n_channels, schedule, standardizer, conditioning, mask_sampler, params)
    }

    pub fn config(&self) -> DenoiserConfig {
        self.config
    }

    pub fn n_channels(&self) -> usize {
        self.n_channels
    }

    pub fn schedule(&self) -> &DiffusionSchedule {
        &self.schedule
    }

    pub fn standardizer(&self) -> Standardizer {
        Standardizer {
            mean: self.channel_mean.clone(),
            std: self.channel_std.clone(),
            signal_var: self.signal_var.clone(),
        }
    }

    pub fn conditioning(&self) -> Conditioning {
        self.conditioning
    }

    pub fn mask_sampler(&self) -> MaskSampler {
        self.mask_sampler
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub(crate) fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn standardize(&self, ch: usize, v: f64) -> f64 {
        (v - self.channel_mean[ch]) / self.channel_std[ch]
    }

    pub fn destandardize(&self, ch: usize, z: f64) -> f64 {
        z * self.channel_std[ch] + self.channel_mean[ch]
    }

    /// `(c_skip, c_out)` for channel `ch` at step `t`.
    pub fn preconditioning(&self, ch: usize, t: usize) -> (f64, f64) {
        let ab = self.schedule.alpha_bar(t);
        let s2 = self.signal_var[ch];
        let denom = ab * s2 + 1.0 - ab;
        let skip = (1.0 - ab).sqrt() / denom;
        let out = (ab * s2 / denom).sqrt().max(MIN_OUT_SCALE);
        (skip, out)
    }

    fn layout(&self) -> Layout {
        Layout::new(&self.config, self.n_channels)
    }
}

#[derive(Clone, Copy)]
pub(crate) struct Layout {
    pub i: usize,
    pub h: usize,
    pub o: usize,
    w1: usize,
    b1: usize,
    w2: usize,
    b2: usize,
    w3: usize,
    b3: usize,
}

impl Layout {
    pub fn new(cfg: &DenoiserConfig, n_channels: usize) -> Self {
        let (i, h, o) = (cfg.input_dim(n_channels), cfg.hidden, n_channels);
        let w1 = 0;
        let b1 = w1 + h * i;
        let w2 = b1 + h;
        let b2 = w2 + h * h;
        let w3 = b2 + h;
        let b3 = w3 + o * h;
        Self { i, h, o, w1, b1, w2, b2, w3, b3 }
    }
}

/// Standardized working state of one series: values and mask bits, channel-major.
pub(crate) struct State<'a> {
    pub n_t: usize,
    pub values: &'a [f64],
    pub masked: &'a [bool],
}

fn silu(z: f64) -> f64 {
    z / (1.0 + (-z).exp())
}

fn silu_grad(z: f64) -> f64 {
    let s = 1.0 / (1.0 + (-z).exp());
    s * (1.0 + z * (1.0 - s))
}

/// Activations of one forward pass, kept for the backward pass.
pub(crate) struct Pass {
    pub x: Vec<f64>,
    z1: Vec<f64>,
    h1: Vec<f64>,
    z2: Vec<f64>,
    h2: Vec<f64>,
    /// Raw network output `F`.
    pub out: Vec<f64>,
}

impl Pass {
    pub fn new(l: &Layout) -> Self {
        Self {
            x: vec![0.0; l.i],
            z1: vec![0.0; l.h],
            h1: vec![0.0; l.h],
            z2: vec![0.0; l.h],
            h2: vec![0.0; l.h],
            out: vec![0.0; l.o],
        }
    }
}

impl DenoiserModel {
    pub(crate) fn write_features(&self, st: &State<'_>, p: usize, t: usize, x: &mut [f64]) {
        let r = self.config.radius as isize;
        let n_ch = self.n_channels;
        let mut k = 0;
        for off in -r..=r {
            let q = p as isize + off;
            if q < 0 || q >= st.n_t as isize {
                for _ in 0..2 * n_ch {
                    x[k] = 0.0;
                    k += 1;
                }
                x[k] = 1.0;
                k += 1;
                continue;
            }
            let q = q as usize;
            for ch in 0..n_ch {
                x[k] = st.values[ch * st.n_t + q];
                x[k + 1] = if st.masked[ch * st.n_t + q] { 1.0 } else { 0.0 };
                k += 2;
            }
            x[k] = 0.0;
            k += 1;
        }
        let half = self.config.time_dim / 2;
        let tau = 1000.0 * t as f64 / self.schedule.steps() as f64;
        for j in 0..half {
            let f = (-(10_000f64.ln()) * j as f64 / half as f64).exp();
            x[k + j] = (tau * f).sin();
            x[k + half + j] = (tau * f).cos();
        }
    }

    /// Raw network output at position `p`; activations land in `pass`.
    pub(crate) fn forward(&self, st: &State<'_>, p: usize, t: usize, pass: &mut Pass) {
        let l = self.layout();
        let w = &self.params;
        self.write_features(st, p, t, &mut pass.x);
        for j in 0..l.h {
            let row = &w[l.w1 + j * l.i..l.w1 + (j + 1) * l.i];
            let z = w[l.b1 + j] + dot(row, &pass.x);
            pass.z1[j] = z;
            pass.h1[j] = silu(z);
        }
        for j in 0..l.h {
            let row = &w[l.w2 + j * l.h..l.w2 + (j + 1) * l.h];
            let z = w[l.b2 + j] + dot(row, &pass.h1);
            pass.z2[j] = z;
            pass.h2[j] = pass.h1[j] + silu(z);
        }
        for c in 0..l.o {
            let row = &w[l.w3 + c * l.h..l.w3 + (c + 1) * l.h];
            pass.out[c] = w[l.b3 + c] + dot(row, &pass.h2);
        }
    }

    /// Accumulates `∂L/∂θ` into `grad` given `∂L/∂F` for the last forward pass.
    pub(crate) fn backward(&self, pass: &Pass, d_out: &[f64], grad: &mut [f64]) {
        let l = self.layout();
        let w = &self.params;
        let mut dh2 = vec![0.0; l.h];
        for c in 0..l.o {
            let g = d_out[c];
            if g == 0.0 {
                continue;
            }
            grad[l.b3 + c] += g;
            let base = l.w3 + c * l.h;
            for j in 0..l.h {
                grad[base + j] += g * pass.h2[j];
                dh2[j] += g * w[base + j];
            }
        }
        let mut dh1 = dh2.clone();
        for j in 0..l.h {
            let dz = dh2[j] * silu_grad(pass.z2[j]);
            if dz == 0.0 {
                continue;
            }
            grad[l.b2 + j] += dz;
            let base = l.w2 + j * l.h;
            for k in 0..l.h {
                grad[base + k] += dz * pass.h1[k];
                dh1[k] += dz * w[base + k];
            }
        }
        for j in 0..l.h {
            let dz = dh1[j] * silu_grad(pass.z1[j]);
            grad[l.b1 + j] += dz;
            let base = l.w1 + j * l.i;
            for k in 0..l.i {
                grad[base + k] += dz * pass.x[k];
            }
        }
    }

    /// Noise estimates at every masked position of timestep `p`, written into
    /// `eps` (one entry per channel; unmasked channels are left untouched).
    pub(crate) fn predict_noise(&self, st: &State<'_>, p: usize, t: usize, pass: &mut Pass, eps: &mut [f64]) {
        self.forward(st, p, t, pass);
        for ch in 0..self.n_channels {
            if st.masked[ch * st.n_t + p] {
                let (skip, out) = self.preconditioning(ch, t);
                eps[ch] = skip * st.values[ch * st.n_t + p] + out * pass.out[ch];
            }
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_stream;

    fn small_model(n_ch: usize) -> DenoiserModel {
        let cfg = DenoiserConfig {
            radius: 2,
            hidden: 6,
            time_dim: 4,
        };
        let std = Standardizer {
            mean: vec![0.0; n_ch],
            std: vec![1.0; n_ch],
            signal_var: vec![1.0; n_ch],
        };
        let mut m = DenoiserModel::init(
            cfg,
            n_ch,
            DiffusionSchedule::new(20, 1e-3, 0.1).unwrap(),
            std,
            Conditioning::Unconditional,
            MaskSampler::ConceptRegions,
            &mut rng_stream(3, "init"),
        )
        .unwrap();
        // spread the parameters so that every path carries gradient
        let mut r = rng_stream(4, "perturb");
        for p in m.params_mut() {
            *p += 0.3 * r.normal();
        }
        m
    }

    fn loss(m: &DenoiserModel, st: &State<'_>, t: usize, target: &[f64]) -> f64 {
        let mut pass = Pass::new(&m.layout());
        let mut total = 0.0;
        for p in 0..st.n_t {
            m.forward(st, p, t, &mut pass);
            for ch in 0..m.n_channels {
                total += 0.5 * (pass.out[ch] - target[ch * st.n_t + p]).powi(2);
            }
        }
        total
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let n_ch = 2;
        let n_t = 5;
        let mut m = small_model(n_ch);
        let mut r = rng_stream(5, "data");
        let values: Vec<f64> = (0..n_ch * n_t).map(|_| r.normal()).collect();
        let masked: Vec<bool> = (0..n_ch * n_t).map(|i| i % 3 != 0).collect();
        let target: Vec<f64> = (0..n_ch * n_t).map(|_| r.normal()).collect();
        let st = State {
            n_t,
            values: &values,
            masked: &masked,
        };
        let t = 7;
        let mut grad = vec![0.0; m.params().len()];
        let mut pass = Pass::new(&m.layout());
        for p in 0..n_t {
            m.forward(&st, p, t, &mut pass);
            let d: Vec<f64> = (0..n_ch).map(|ch| pass.out[ch] - target[ch * n_t + p]).collect();
            m.backward(&pass, &d, &mut grad);
        }
        let h = 1e-6;
        for k in (0..m.params().len()).step_by(7) {
            let orig = m.params[k];
            m.params[k] = orig + h;
            let up = loss(&m, &st, t, &target);
            m.params[k] = orig - h;
            let down = loss(&m, &st, t, &target);
            m.params[k] = orig;
            let fd = (up - down) / (2.0 * h);
            let tol = 1e-6 * (1.0 + fd.abs().max(grad[k].abs()));
            assert!((fd - grad[k]).abs() < tol, "param {k}: fd {fd} vs analytic {}", grad[k]);
        }
    }

    #[test]
    fn features_pad_outside_series() {
        let m = small_model(1);
        let values = [1.0, 2.0, 3.0];
        let masked = [false, true, false];
        let st = State {
            n_t: 3,
            values: &values,
            masked: &masked,
        };
        let mut x = vec![0.0; m.config().input_dim(1)];
        m.write_features(&st, 0, 1, &mut x);
        // slots: t-2 (pad), t-1 (pad), t, t+1, t+2 with [value, mask, pad]
        assert_eq!(&x[..15], &[0.0, 0.0, 1.0, 0.0, 0.0, 1.0, 1.0, 0.0, 0.0, 2.0, 1.0, 0.0, 3.0, 0.0, 0.0]);
    }

    #[test]
    fn constant_channel_preconditioning_is_exact() {
        let mut m = small_model(1);
        m.signal_var = vec![0.0];
        for t in [1, 10, 20] {
            let (skip, out) = m.preconditioning(0, t);
            let eps = 0.7;
            let xt = m.schedule.q_sample(0.0, t, eps);
            assert!((skip * xt - eps).abs() < 1e-12);
            assert_eq!(out, MIN_OUT_SCALE);
        }
    }

    #[test]
    fn from_parts_rejects_bad_shapes() {
        let m = small_model(1);
        let mut std = m.standardizer();
        let cfg = m.config();
        assert!(DenoiserModel::from_parts(
            cfg,
            1,
            m.schedule().clone(),
            std.clone(),
            Conditioning::Unconditional,
            MaskSampler::ConceptRegions,
            vec![0.0; 3]
        )
        .is_err());
        std.std[0] = 0.0;
        assert!(DenoiserModel::from_parts(
            cfg,
            1,
            m.schedule().clone(),
            std,
            Conditioning::Unconditional,
            MaskSampler::ConceptRegions,
            m.params().to_vec()
        )
        .is_err());
    }
}
