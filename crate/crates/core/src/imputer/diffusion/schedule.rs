use alloc::format;
use alloc::vec::Vec;

#[allow(unused_imports)] // inherent when a dependency links std
use num_traits::Float;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub const DEFAULT_STEPS: usize = 200;
pub const DEFAULT_BETA0: f64 = 1e-4;
pub const DEFAULT_BETA1: f64 = 0.02;

/// Linear variance schedule `β_1..β_T` with `ᾱ_t = Π_{s≤t} (1 − β_s)`.
///
/// Steps are 1-based throughout.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ScheduleSpec", into = "ScheduleSpec")]
pub struct DiffusionSchedule {
    beta0: f64,
    beta1: f64,
    betas: Vec<f64>,
    alpha_bars: Vec<f64>,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
struct ScheduleSpec {
    steps: usize,
    beta0: f64,
    beta1: f64,
}

impl TryFrom<ScheduleSpec> for DiffusionSchedule {
    type Error = Error;
    fn try_from(s: ScheduleSpec) -> Result<Self> {
        DiffusionSchedule::new(s.steps, s.beta0, s.beta1)
    }
}

impl From<DiffusionSchedule> for ScheduleSpec {
    fn from(s: DiffusionSchedule) -> Self {
        ScheduleSpec {
            steps: s.steps(),
            beta0: s.beta0,
            beta1: s.beta1,
        }
    }
}

impl Default for DiffusionSchedule {
    fn default() -> Self {
        Self::new(DEFAULT_STEPS, DEFAULT_BETA0, DEFAULT_BETA1).expect("default schedule is valid")
    }
}

impl DiffusionSchedule {
    pub fn new(steps: usize, beta0: f64, beta1: f64) -> Result<Self> {
        if steps == 0 {
            return Err(Error::InvalidConfig("diffusion needs at least one step".into()));
        }
        if !(beta0 > 0.0 && beta0 <= beta1 && beta1 < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "schedule needs 0 < beta0 <= beta1 < 1, got {beta0} and {beta1}"
            )));
        }
        let betas: Vec<f64> = (0..steps)
            .map(|i| {
                if steps == 1 {
                    beta0
                } else {
                    beta0 + (beta1 - beta0) * i as f64 / (steps - 1) as f64
                }
            })
            .collect();
        let mut acc = 1.0;
        let alpha_bars = betas
            .iter()
            .map(|b| {
                acc *= 1.0 - b;
                acc
            })
            .collect();
        Ok(Self {
            beta0,
            beta1,
            betas,
            alpha_bars,
        })
    }

    pub fn steps(&self) -> usize {
        self.betas.len()
    }

    pub fn beta0(&self) -> f64 {
        self.beta0
    }

    pub fn beta1(&self) -> f64 {
        self.beta1
    }

    pub fn beta(&self, t: usize) -> f64 {
        self.betas[t - 1]
    }

    pub fn alpha(&self, t: usize) -> f64 {
        1.0 - self.betas[t - 1]
    }

    /// `ᾱ_t`; `ᾱ_0 = 1`.
    pub fn alpha_bar(&self, t: usize) -> f64 {
        if t == 0 {
            1.0
        } else {
            self.alpha_bars[t - 1]
        }
    }

    /// Variance `β̃_t = (1 − ᾱ_{t−1}) / (1 − ᾱ_t) · β_t` of `q(x_{t−1} | x_t, x_0)`.
    pub fn posterior_variance(&self, t: usize) -> f64 {
        (1.0 - self.alpha_bar(t - 1)) / (1.0 - self.alpha_bar(t)) * self.beta(t)
    }

    /// `x_t = √ᾱ_t x_0 + √(1 − ᾱ_t) ε`.
    pub fn q_sample(&self, x0: f64, t: usize, eps: f64) -> f64 {
        let ab = self.alpha_bar(t);
        ab.sqrt() * x0 + (1.0 - ab).sqrt() * eps
    }

    /// Mean of `p(x_{t−1} | x_t)` given a noise estimate.
    pub fn reverse_mean(&self, t: usize, x: f64, eps_hat: f64) -> f64 {
        (x - self.beta(t) / (1.0 - self.alpha_bar(t)).sqrt() * eps_hat) / self.alpha(t).sqrt()
    }
}
