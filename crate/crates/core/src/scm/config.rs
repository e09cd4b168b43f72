use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::stats::sigmoid;
use crate::{Error, Result};

/// `p(D = 1 | ε_S) = σ((intercept + latent_weight · ε_S) / τ)`, with `τ = noise.disease`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiseaseMechanism {
    pub intercept: f64,
    pub latent_weight: f64,
}

/// How the segmentation mask is produced. Masks never depend on `D`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaskMechanism {
    /// `C` contiguous segments of (nearly) equal width, boundaries jittered by
    /// up to `noise.mask` timesteps.
    #[default]
    EqualWidth,
}

/// Concept `c` on channel `ch`: every covered position equals
/// `effect[ch]·D + latent[ch]·ε_S + noise·ε_X^c[ch]`, plus `noise.position · ε_X` per position.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearGaussianConcept {
    pub effect: Vec<f64>,
    pub latent: Vec<f64>,
    pub noise: f64,
}

/// Concept `c` on channel `ch`: every covered position equals one support value drawn
/// from `p_target` (D = 1) or `p_baseline` (D = 0), independently per channel.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiscreteConcept {
    pub support: Vec<f64>,
    pub p_baseline: Vec<f64>,
    pub p_target: Vec<f64>,
}

impl DiscreteConcept {
    pub fn row(&self, d: u8) -> &[f64] {
        if d == 1 {
            &self.p_target
        } else {
            &self.p_baseline
        }
    }

    /// Support index closest to `v` (ties to the lower index).
    pub fn nearest(&self, v: f64) -> usize {
        let mut best = 0;
        for (k, s) in self.support.iter().enumerate() {
            if (s - v).abs() < (self.support[best] - v).abs() {
                best = k;
            }
        }
        best
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum SegmentMechanisms {
    LinearGaussian { concepts: Vec<LinearGaussianConcept> },
    Discrete { concepts: Vec<DiscreteConcept> },
}

impl SegmentMechanisms {
    pub fn len(&self) -> usize {
        match self {
            SegmentMechanisms::LinearGaussian { concepts } => concepts.len(),
            SegmentMechanisms::Discrete { concepts } => concepts.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseScales {
    /// Temperature of the disease noise ε_D; 0 makes `D` a threshold of ε_S.
    pub disease: f64,
    /// Standard deviation of the shared latent ε_S.
    pub latent: f64,
    /// Maximal boundary shift of the mask, in timesteps.
    pub mask: f64,
    /// Per-position white noise ε_X.
    pub position: f64,
}

impl Default for NoiseScales {
    fn default() -> Self {
        Self {
            disease: 1.0,
            latent: 1.0,
            mask: 0.0,
            position: 0.0,
        }
    }
}

/// Configuration of the synthetic data-generating process.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScmConfig {
    pub n_channels: usize,
    pub n_timesteps: usize,
    pub n_concepts: u32,
    pub disease: DiseaseMechanism,
    #[serde(default)]
    pub mask: MaskMechanism,
    pub segments: SegmentMechanisms,
    pub noise: NoiseScales,
}

impl ScmConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: alloc::string::String| Err(Error::InvalidConfig(m));
        if self.n_channels == 0 || self.n_timesteps == 0 || self.n_concepts == 0 {
            return bad("n_channels, n_timesteps and n_concepts must be positive".into());
        }
        if self.n_concepts as usize > self.n_timesteps {
            return bad(format!(
                "{} concepts do not fit into {} timesteps",
                self.n_concepts, self.n_timesteps
            ));
        }
        if self.segments.len() != self.n_concepts as usize {
            return bad(format!(
                "{} segment mechanisms for {} concepts",
                self.segments.len(),
                self.n_concepts
            ));
        }
        let n = &self.noise;
        for (name, v) in [
            ("disease", n.disease),
            ("latent", n.latent),
            ("mask", n.mask),
            ("position", n.position),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return bad(format!("noise scale `{name}` must be finite and >= 0"));
            }
        }
        if !(self.disease.intercept.is_finite() && self.disease.latent_weight.is_finite()) {
            return bad("disease mechanism parameters must be finite".into());
        }
        match &self.segments {
            SegmentMechanisms::LinearGaussian { concepts } => {
                for (i, c) in concepts.iter().enumerate() {
                    if c.effect.len() != self.n_channels || c.latent.len() != self.n_channels {
                        return bad(format!("concept {}: coefficient vectors need one entry per channel", i + 1));
                    }
                    if !(c.noise >= 0.0 && c.noise.is_finite()) {
                        return bad(format!("concept {}: noise must be finite and >= 0", i + 1));
                    }
                    if c.effect.iter().chain(&c.latent).any(|v| !v.is_finite()) {
                        return bad(format!("concept {}: non-finite coefficient", i + 1));
                    }
                }
            }
            SegmentMechanisms::Discrete { concepts } => {
                if n.position != 0.0 {
                    return bad("the discrete family requires position noise 0".into());
                }
                for (i, c) in concepts.iter().enumerate() {
                    let k = c.support.len();
                    if k == 0 || c.p_baseline.len() != k || c.p_target.len() != k {
                        return bad(format!("concept {}: support and tables must have equal length", i + 1));
                    }
                    if c.support.iter().any(|v| !v.is_finite()) {
                        return bad(format!("concept {}: non-finite support value", i + 1));
                    }
                    let mut s = c.support.clone();
                    s.sort_by(f64::total_cmp);
                    if s.windows(2).any(|w| w[0] == w[1]) {
                        return bad(format!("concept {}: support values must be distinct", i + 1));
                    }
                    for row in [&c.p_baseline, &c.p_target] {
                        if row.iter().any(|p| !(*p >= 0.0)) || (row.iter().sum::<f64>() - 1.0).abs() > 1e-12 {
                            return bad(format!("concept {}: table rows must be non-negative and sum to 1", i + 1));
                        }
                    }
                }
            }
        }
        Ok(())
    }

    /// `p(D = 1 | ε_S = s)`.
    pub fn p_target_given_latent(&self, s: f64) -> f64 {
        let z = self.disease.intercept + self.disease.latent_weight * s;
        let tau = self.noise.disease;
        if tau > 0.0 {
            sigmoid(z / tau)
        } else if z > 0.0 {
            1.0
        } else if z < 0.0 {
            0.0
        } else {
            0.5
        }
    }

    /// `p(D = d | ε_S = s)`.
    pub fn p_class_given_latent(&self, d: u8, s: f64) -> f64 {
        let p1 = self.p_target_given_latent(s);
        if d == 1 {
            p1
        } else {
            1.0 - p1
        }
    }

    /// Boundaries `b_0 = 0 < b_1 < … < b_C = n_timesteps` of the unjittered mask.
    pub fn nominal_boundaries(&self) -> Vec<usize> {
        let c = self.n_concepts as usize;
        (0..=c).map(|k| (k * self.n_timesteps + c / 2) / c).collect()
    }

    /// Channel-agnostic labels for the given boundaries.
    pub fn labels_from_boundaries(&self, b: &[usize]) -> Vec<u32> {
        let mut labels = vec![0u32; self.n_timesteps];
        for c in 0..self.n_concepts as usize {
            for l in &mut labels[b[c]..b[c + 1]] {
                *l = c as u32 + 1;
            }
        }
        labels
    }

    /// Linear-Gaussian config with `C` equal-width concepts and default noise.
    pub fn linear_gaussian(
        n_channels: usize,
        n_timesteps: usize,
        concepts: Vec<LinearGaussianConcept>,
    ) -> Self {
        Self {
            n_channels,
            n_timesteps,
            n_concepts: concepts.len() as u32,
            disease: DiseaseMechanism {
                intercept: 0.0,
                latent_weight: 0.0,
            },
            mask: MaskMechanism::EqualWidth,
            segments: SegmentMechanisms::LinearGaussian { concepts },
            noise: NoiseScales::default(),
        }
    }

    pub fn discrete(n_channels: usize, n_timesteps: usize, concepts: Vec<DiscreteConcept>) -> Self {
        Self {
            n_channels,
            n_timesteps,
            n_concepts: concepts.len() as u32,
            disease: DiseaseMechanism {
                intercept: 0.0,
                latent_weight: 0.0,
            },
            mask: MaskMechanism::EqualWidth,
            segments: SegmentMechanisms::Discrete { concepts },
            noise: NoiseScales::default(),
        }
    }
}
