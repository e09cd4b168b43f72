//! Synthetic structural causal model with exact oracles.
//!
//! Each sample is drawn in four stages:
//!
//! 1. a shared latent `ε_S ~ N(0, σ_S²)` and the class `D ~ Bernoulli(p(D=1 | ε_S))`,
//! 2. a `D`-independent contiguous mask `M`,
//! 3. each concept region `X_c = h_X^c(D, ε_S, ε_X^c)`,
//! 4. the series is scored by a fixed classifier.
//!
//! Because every mechanism is known, the posterior `p(D = 1 | X)`, the
//! interventional law `p(X_c | do(D = d))` and the conditional law
//! `p(X_c | X_c^∁)` are available exactly. [`bayes_classifier`],
//! [`interventional_imputer`] and [`conditional_imputer`] expose them, and
//! [`brute_force_effects`] evaluates the effect expectations by enumeration
//! or Gauss–Hermite quadrature.

mod config;
mod imputers;
mod oracle;

pub use config::{
    DiscreteConcept, DiseaseMechanism, LinearGaussianConcept, MaskMechanism, NoiseScales,
    ScmConfig, SegmentMechanisms,
};
pub use imputers::{conditional_imputer, interventional_imputer, ScmImputer};
pub use oracle::{brute_force_effects, ExactEffects, OracleOptions};

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)] // inherent when a dependency links std
use num_traits::Float;

use crate::classifier::ProbClassifier;
use crate::data::{
    ClassLabel, ConceptMask, Dataset, LabeledSample, MultivariateSeries, SegmentIndex, Split,
};
use crate::quadrature::GaussHermite;
use crate::rng::{rng_stream, RngStream};
use crate::stats::log_add_exp;
use crate::{Error, Result};

/// Gauss–Hermite order used for every latent integral.
pub const QUADRATURE_ORDER: usize = 32;

/// Floor on block variances so noise-free mechanisms stay numerically defined.
const VAR_FLOOR: f64 = 1e-8;

/// A validated config together with the quantities the exact posterior needs.
#[derive(Clone, Debug)]
pub struct GroundTruth {
    scm: ScmConfig,
    prior_target: f64,
    nominal_labels: Vec<u32>,
    gh: GaussHermite,
}

impl GroundTruth {
    pub fn new(scm: ScmConfig) -> Result<Self> {
        scm.validate()?;
        let gh = GaussHermite::new(QUADRATURE_ORDER);
        let prior_target = if scm.noise.latent > 0.0 {
            gh.expect(0.0, scm.noise.latent, |s| scm.p_target_given_latent(s))
        } else {
            scm.p_target_given_latent(0.0)
        };
        let nominal_labels = scm.labels_from_boundaries(&scm.nominal_boundaries());
        Ok(Self {
            scm,
            prior_target,
            nominal_labels,
            gh,
        })
    }

    pub fn config(&self) -> &ScmConfig {
        &self.scm
    }

    /// Marginal `p(D = 1)`.
    pub fn prior_target(&self) -> f64 {
        self.prior_target
    }

    /// The unjittered mask, which the Bayes classifier assumes.
    pub fn nominal_mask(&self) -> ConceptMask {
        ConceptMask::per_timestep(self.nominal_labels.clone(), self.scm.n_concepts)
            .expect("nominal labels are in range")
    }

    fn check_series(&self, x: &MultivariateSeries) -> Result<()> {
        if x.n_channels() != self.scm.n_channels || x.n_timesteps() != self.scm.n_timesteps {
            return Err(Error::ShapeMismatch(format!(
                "SCM expects {}×{}, got {}×{}",
                self.scm.n_channels,
                self.scm.n_timesteps,
                x.n_channels(),
                x.n_timesteps()
            )));
        }
        Ok(())
    }

    /// Per-(concept, channel) block sums and counts, skipping `exclude`.
    fn blocks(
        &self,
        x: &MultivariateSeries,
        concept_at: impl Fn(usize, usize) -> u32,
        exclude: Option<&SegmentIndex>,
    ) -> Vec<Block> {
        let n_ch = self.scm.n_channels;
        let c = self.scm.n_concepts as usize;
        let mut sums = vec![(0.0, 0usize); c * n_ch];
        let mut skip = vec![false; n_ch * x.n_timesteps()];
        if let Some(idx) = exclude {
            for &(ch, t) in idx.positions() {
                skip[ch * x.n_timesteps() + t] = true;
            }
        }
        for ch in 0..n_ch {
            for t in 0..x.n_timesteps() {
                if skip[ch * x.n_timesteps() + t] {
                    continue;
                }
                let k = concept_at(ch, t) as usize - 1;
                let e = &mut sums[k * n_ch + ch];
                e.0 += x.get(ch, t);
                e.1 += 1;
            }
        }
        sums.iter()
            .enumerate()
            .filter(|(_, (_, n))| *n > 0)
            .map(|(i, &(s, n))| Block {
                concept: i / n_ch,
                channel: i % n_ch,
                mean: s / n as f64,
                count: n,
            })
            .collect()
    }

    /// Posterior over `(D, ε_S)` given observed blocks.
    fn latent_posterior(&self, blocks: &[Block]) -> [LatentPosterior; 2] {
        let cfg = &self.scm;
        match &cfg.segments {
            SegmentMechanisms::LinearGaussian { concepts } => {
                let sig_s = cfg.noise.latent;
                let obs: Vec<(f64, f64, f64, f64)> = blocks
                    .iter()
                    .map(|b| {
                        let m = &concepts[b.concept];
                        let var = (m.noise * m.noise
                            + cfg.noise.position * cfg.noise.position / b.count as f64)
                            .max(VAR_FLOOR);
                        (m.effect[b.channel], m.latent[b.channel], var, b.mean)
                    })
                    .collect();
                [0u8, 1].map(|d| {
                    let df = f64::from(d);
                    let rss: f64 = obs
                        .iter()
                        .map(|&(a, _, v, y)| (y - a * df) * (y - a * df) / v)
                        .sum();
                    if sig_s > 0.0 {
                        let precision = 1.0 / (sig_s * sig_s)
                            + obs.iter().map(|&(_, b, v, _)| b * b / v).sum::<f64>();
                        let m: f64 = obs.iter().map(|&(a, b, v, y)| b * (y - a * df) / v).sum();
                        let mu = m / precision;
                        let e = self
                            .gh
                            .expect(mu, precision.sqrt().recip(), |s| cfg.p_class_given_latent(d, s));
                        LatentPosterior {
                            log_weight: -0.5 * rss + 0.5 * m * m / precision + e.ln(),
                            mu,
                            sd: precision.sqrt().recip(),
                        }
                    } else {
                        LatentPosterior {
                            log_weight: -0.5 * rss + cfg.p_class_given_latent(d, 0.0).ln(),
                            mu: 0.0,
                            sd: 0.0,
                        }
                    }
                })
            }
            SegmentMechanisms::Discrete { concepts } => [0u8, 1].map(|d| {
                let prior = if d == 1 {
                    self.prior_target
                } else {
                    1.0 - self.prior_target
                };
                let ll: f64 = blocks
                    .iter()
                    .map(|b| {
                        let m = &concepts[b.concept];
                        m.row(d)[m.nearest(b.mean)].ln()
                    })
                    .sum();
                LatentPosterior {
                    log_weight: prior.ln() + ll,
                    mu: 0.0,
                    sd: 0.0,
                }
            }),
        }
    }

    /// `p(D = 1 | blocks)`; falls back to the prior for impossible observations.
    fn posterior_target(&self, post: &[LatentPosterior; 2]) -> f64 {
        let norm = log_add_exp(post[0].log_weight, post[1].log_weight);
        if !norm.is_finite() {
            return self.prior_target;
        }
        (post[1].log_weight - norm).exp()
    }
}

#[derive(Clone, Copy, Debug)]
struct Block {
    concept: usize,
    channel: usize,
    mean: f64,
    count: usize,
}

/// Unnormalized `log p(D = d, observed)`, and the Gaussian part `N(mu, sd²)` of `ε_S | d`.
#[derive(Clone, Copy, Debug)]
struct LatentPosterior {
    log_weight: f64,
    mu: f64,
    sd: f64,
}

/// Draws `n` i.i.d. samples; splits are 60/20/20 by generation index.
pub fn generate_dataset(cfg: &ScmConfig, n: usize, seed: u64) -> Result<Dataset> {
    cfg.validate()?;
    if n == 0 {
        return Err(Error::InvalidConfig("n must be at least 1".into()));
    }
    let root = rng_stream(seed, "scm");
    let pairs = (0..n)
        .map(|i| {
            let mut rng = root.substream_idx("sample", i as u64);
            let sample = draw_sample(cfg, &format!("s{i:06}"), &mut rng)?;
            let split = if 5 * i < 3 * n {
                Split::Train
            } else if 5 * i < 4 * n {
                Split::Validation
            } else {
                Split::Test
            };
            Ok((sample, split))
        })
        .collect::<Result<Vec<_>>>()?;
    Dataset::from_pairs(pairs)
}

fn draw_sample(cfg: &ScmConfig, id: &str, rng: &mut RngStream) -> Result<LabeledSample> {
    let latent = cfg.noise.latent * rng.normal();
    let d = u8::from(rng.uniform() < cfg.p_target_given_latent(latent));

    let mut b = cfg.nominal_boundaries();
    let jitter = cfg.noise.mask.floor() as i64;
    let c = cfg.n_concepts as usize;
    if jitter > 0 {
        for k in 1..c {
            let shift = rng.index(2 * jitter as usize + 1) as i64 - jitter;
            let lo = b[k - 1] as i64 + 1;
            let hi = (cfg.n_timesteps - (c - k)) as i64;
            b[k] = (b[k] as i64 + shift).clamp(lo, hi) as usize;
        }
    }
    let labels = cfg.labels_from_boundaries(&b);

    let mut values = vec![0.0; cfg.n_channels * cfg.n_timesteps];
    for concept in 0..c {
        for ch in 0..cfg.n_channels {
            let level = segment_level(cfg, concept, ch, d, latent, rng);
            for t in b[concept]..b[concept + 1] {
                values[ch * cfg.n_timesteps + t] = level + cfg.noise.position * rng.normal();
            }
        }
    }
    let series = MultivariateSeries::from_flat(cfg.n_channels, cfg.n_timesteps, values, None)?;
    let mask = ConceptMask::per_timestep(labels, cfg.n_concepts)?;
    LabeledSample::new(id, series, mask, ClassLabel::new(d)?)
}

/// Shared level of a (concept, channel) block before position noise.
fn segment_level(
    cfg: &ScmConfig,
    concept: usize,
    ch: usize,
    d: u8,
    latent: f64,
    rng: &mut RngStream,
) -> f64 {
    match &cfg.segments {
        SegmentMechanisms::LinearGaussian { concepts } => {
            let m = &concepts[concept];
            m.effect[ch] * f64::from(d) + m.latent[ch] * latent + m.noise * rng.normal()
        }
        SegmentMechanisms::Discrete { concepts } => {
            let m = &concepts[concept];
            m.support[categorical(m.row(d), rng)]
        }
    }
}

fn categorical(p: &[f64], rng: &mut RngStream) -> usize {
    let u = rng.uniform();
    let mut acc = 0.0;
    for (k, &pk) in p.iter().enumerate() {
        acc += pk;
        if u < acc {
            return k;
        }
    }
    p.iter().rposition(|&pk| pk > 0.0).unwrap_or(0)
}

/// The exact posterior `p(D = 1 | X)` under the nominal mask.
#[derive(Clone, Debug)]
pub struct BayesClassifier {
    gt: GroundTruth,
}

pub fn bayes_classifier(gt: &GroundTruth) -> BayesClassifier {
    BayesClassifier { gt: gt.clone() }
}

impl ProbClassifier for BayesClassifier {
    fn name(&self) -> &str {
        "scm-bayes"
    }

    fn predict(&self, x: &MultivariateSeries) -> Result<f64> {
        self.gt.check_series(x)?;
        let labels = &self.gt.nominal_labels;
        let blocks = self.gt.blocks(x, |_, t| labels[t], None);
        Ok(self.gt.posterior_target(&self.gt.latent_posterior(&blocks)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classifier::classify;

    pub(crate) fn lg(effect: f64, latent: f64, noise: f64) -> LinearGaussianConcept {
        LinearGaussianConcept {
            effect: vec![effect],
            latent: vec![latent],
            noise,
        }
    }

    #[test]
    fn deterministic_mechanisms() {
        let mut cfg = ScmConfig::linear_gaussian(1, 12, vec![lg(1.0, 0.0, 0.0), lg(1.0, 0.0, 0.0)]);
        cfg.noise = NoiseScales {
            disease: 1.0,
            latent: 1.0,
            mask: 0.0,
            position: 0.0,
        };
        let d = generate_dataset(&cfg, 50, 3).unwrap();
        for s in d.samples() {
            let want = s.label.as_f64();
            assert!(s.series.values().iter().all(|&v| v == want));
        }
    }

    #[test]
    fn fixed_seed_reproduces() {
        let mut cfg = ScmConfig::linear_gaussian(2, 10, vec![
            LinearGaussianConcept { effect: vec![1.0, 0.0], latent: vec![0.5, 0.5], noise: 0.3 },
            LinearGaussianConcept { effect: vec![0.0, 1.0], latent: vec![0.5, 0.2], noise: 0.3 },
        ]);
        cfg.noise.mask = 2.0;
        cfg.noise.position = 0.1;
        assert_eq!(generate_dataset(&cfg, 30, 9).unwrap(), generate_dataset(&cfg, 30, 9).unwrap());
        assert_ne!(generate_dataset(&cfg, 30, 9).unwrap(), generate_dataset(&cfg, 30, 10).unwrap());
    }

    #[test]
    fn class_balance_binomial() {
        let cfg = ScmConfig::linear_gaussian(1, 6, vec![lg(1.0, 0.0, 1.0)]);
        let d = generate_dataset(&cfg, 10_000, 1).unwrap();
        let frac = d.samples().iter().filter(|s| s.label == ClassLabel::TARGET).count() as f64 / 1e4;
        assert!((frac - 0.5).abs() < 0.02, "fraction {frac}");
    }

    #[test]
    fn splits_sixty_twenty_twenty() {
        let cfg = ScmConfig::linear_gaussian(1, 6, vec![lg(1.0, 0.0, 1.0)]);
        let d = generate_dataset(&cfg, 10, 1).unwrap();
        assert_eq!(d.in_split(Split::Train).count(), 6);
        assert_eq!(d.in_split(Split::Validation).count(), 2);
        assert_eq!(d.in_split(Split::Test).count(), 2);
    }

    #[test]
    fn jittered_masks_keep_every_concept() {
        let mut cfg = ScmConfig::linear_gaussian(1, 8, vec![lg(1.0, 0.0, 1.0); 4]);
        cfg.noise.mask = 5.0;
        let d = generate_dataset(&cfg, 200, 2).unwrap();
        for s in d.samples() {
            for c in 1..=4 {
                assert!(s.has_concept(c));
            }
        }
    }

    #[test]
    fn invalid_configs_rejected() {
        let mut cfg = ScmConfig::linear_gaussian(1, 6, vec![lg(1.0, 0.0, 1.0)]);
        cfg.noise.latent = -1.0;
        assert!(generate_dataset(&cfg, 5, 0).is_err());
        let bad_table = ScmConfig::discrete(1, 6, vec![DiscreteConcept {
            support: vec![0.0, 1.0],
            p_baseline: vec![0.5, 0.6],
            p_target: vec![0.5, 0.5],
        }]);
        assert!(matches!(GroundTruth::new(bad_table), Err(Error::InvalidConfig(_))));
        let cfg = ScmConfig::linear_gaussian(1, 6, vec![lg(1.0, 0.0, 1.0)]);
        assert!(generate_dataset(&cfg, 0, 0).is_err());
    }

    #[test]
    fn symmetric_config_is_half() {
        let mut cfg = ScmConfig::linear_gaussian(1, 8, vec![lg(0.0, 1.0, 0.5), lg(0.0, 0.3, 0.5)]);
        cfg.noise.position = 0.2;
        let gt = GroundTruth::new(cfg.clone()).unwrap();
        let f = bayes_classifier(&gt);
        for s in generate_dataset(&cfg, 20, 4).unwrap().samples() {
            assert!((f.predict(&s.series).unwrap() - 0.5).abs() < 1e-12);
        }
    }

    #[test]
    fn noise_free_class_one_is_confident() {
        let mut cfg = ScmConfig::linear_gaussian(1, 8, vec![lg(1.0, 0.0, 0.0), lg(1.0, 0.0, 0.0)]);
        cfg.noise.latent = 1.0;
        let gt = GroundTruth::new(cfg.clone()).unwrap();
        let f = bayes_classifier(&gt);
        for s in generate_dataset(&cfg, 40, 5).unwrap().samples() {
            let p = classify(&f, &s.series).unwrap();
            if s.label == ClassLabel::TARGET {
                assert!(p >= 0.99, "p = {p}");
            } else {
                assert!(p <= 0.01, "p = {p}");
            }
        }
    }

    #[test]
    fn closed_form_without_latent_is_logistic() {
        // One block, no latent: log-odds = a(y - a/2)/v.
        let mut cfg = ScmConfig::linear_gaussian(1, 4, vec![lg(2.0, 0.0, 1.0)]);
        cfg.noise.latent = 0.0;
        let gt = GroundTruth::new(cfg).unwrap();
        let f = bayes_classifier(&gt);
        let x = MultivariateSeries::from_rows(vec![vec![0.7; 4]], None).unwrap();
        let want = crate::stats::sigmoid(2.0 * (0.7 - 1.0));
        assert!((f.predict(&x).unwrap() - want).abs() < 1e-12);
    }

    #[test]
    fn posterior_calibration_monte_carlo() {
        let mut cfg = ScmConfig::linear_gaussian(1, 12, vec![
            lg(0.6, 0.5, 0.7),
            lg(0.0, 0.8, 0.5),
            lg(0.4, 0.2, 0.6),
        ]);
        cfg.disease.latent_weight = 1.0;
        cfg.noise.position = 0.3;
        let gt = GroundTruth::new(cfg.clone()).unwrap();
        let f = bayes_classifier(&gt);
        let d = generate_dataset(&cfg, 5000, 21).unwrap();
        let (mut n, mut pos) = (0usize, 0usize);
        for s in d.samples() {
            let p = f.predict(&s.series).unwrap();
            if (0.7..=0.8).contains(&p) {
                n += 1;
                pos += usize::from(s.label == ClassLabel::TARGET);
            }
        }
        assert!(n > 100, "only {n} samples in bin");
        let freq = pos as f64 / n as f64;
        assert!((0.65..=0.85).contains(&freq), "empirical {freq} over {n}");
    }

    #[test]
    fn discrete_bayes_by_hand() {
        let cfg = ScmConfig::discrete(1, 4, vec![
            DiscreteConcept { support: vec![0.0, 1.0], p_baseline: vec![0.8, 0.2], p_target: vec![0.3, 0.7] },
            DiscreteConcept { support: vec![-1.0, 1.0], p_baseline: vec![0.5, 0.5], p_target: vec![0.1, 0.9] },
        ]);
        let gt = GroundTruth::new(cfg).unwrap();
        let f = bayes_classifier(&gt);
        let x = MultivariateSeries::from_rows(vec![vec![1.0, 1.0, 1.0, 1.0]], None).unwrap();
        // 0.5·0.7·0.9 / (0.5·0.7·0.9 + 0.5·0.2·0.5)
        let want = 0.63 / (0.63 + 0.10);
        assert!((f.predict(&x).unwrap() - want).abs() < 1e-12);
    }
}
