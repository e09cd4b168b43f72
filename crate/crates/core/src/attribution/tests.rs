use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use super::*;
use crate::classifier::{ConstantClassifier, FnClassifier};
use crate::data::{ConceptMask, Dataset, SegmentIndex, Split};
use crate::imputer::{Conditioning, IdentityImputer};

/// Fills the region with a constant.
struct Fill(Conditioning, f64);

impl SegmentImputer for Fill {
    fn conditioning(&self) -> Conditioning {
        self.0
    }
    fn blackout_capable(&self) -> bool {
        true
    }
    fn impute(&self, _s: &LabeledSample, idx: &SegmentIndex, _r: &mut RngStream) -> Result<Vec<f64>> {
        Ok(vec![self.1; idx.len()])
    }
}

/// Fills the region with `a` or `b`, each with probability one half.
struct Coin(Conditioning, f64, f64);

impl SegmentImputer for Coin {
    fn conditioning(&self) -> Conditioning {
        self.0
    }
    fn blackout_capable(&self) -> bool {
        true
    }
    fn impute(&self, _s: &LabeledSample, idx: &SegmentIndex, r: &mut RngStream) -> Result<Vec<f64>> {
        let v = if r.uniform() < 0.5 { self.1 } else { self.2 };
        Ok(vec![v; idx.len()])
    }
}

/// Gaussian noise around `mu`.
struct Noise(Conditioning, f64);

impl SegmentImputer for Noise {
    fn conditioning(&self) -> Conditioning {
        self.0
    }
    fn blackout_capable(&self) -> bool {
        true
    }
    fn impute(&self, _s: &LabeledSample, idx: &SegmentIndex, r: &mut RngStream) -> Result<Vec<f64>> {
        Ok((0..idx.len()).map(|_| self.1 + r.normal()).collect())
    }
}

const T: Conditioning = Conditioning::ClassSpecific(ClassLabel::TARGET);
const B: Conditioning = Conditioning::ClassSpecific(ClassLabel::BASELINE);
const U: Conditioning = Conditioning::Unconditional;

fn sample(id: &str, first: f64, label: ClassLabel) -> LabeledSample {
    let x = MultivariateSeries::from_rows(vec![vec![first, 0.1, 0.2, 0.3], vec![0.5; 4], vec![0.6; 4]], None).unwrap();
    let m = ConceptMask::per_timestep(vec![1, 1, 2, 2], 2).unwrap();
    LabeledSample::new(id, x, m, label).unwrap()
}

/// Reads the first value of channel 0, a position in concept 1.
fn first_value() -> FnClassifier<impl Fn(&MultivariateSeries) -> f64 + Sync> {
    FnClassifier::new("first", |x: &MultivariateSeries| x.get(0, 0))
}

fn cfg() -> EngineConfig {
    EngineConfig {
        n_imputations: 40,
        ..EngineConfig::default()
    }
}

fn root() -> RngStream {
    rng_stream(7, "test")
}

#[test]
fn constant_classifier_gives_zero() {
    let s = sample("a", 0.3, ClassLabel::TARGET);
    let e = ite(&s, &ConstantClassifier(0.5), 1, &Noise(T, 1.0), &Noise(B, -1.0), &cfg(), &root())
        .unwrap()
        .unwrap();
    assert_eq!(e.value, 0.0);
    assert_eq!(e.stderr, 0.0);
    assert_eq!(e.first_term_mode, FirstTermMode::Imputed);
}

#[test]
fn deterministic_imputers_give_exact_log_ratio() {
    let s = sample("a", 0.3, ClassLabel::TARGET);
    let e = ite(&s, &first_value(), 1, &Fill(T, 0.8), &Fill(B, 0.2), &cfg(), &root())
        .unwrap()
        .unwrap();
    assert!((e.value - 2.0).abs() < 1e-12);
    assert_eq!(e.value, e.mean_prob_target.log2() - e.mean_prob_baseline.log2());
}

#[test]
fn identity_imputation_gives_zero_iaa() {
    let s = sample("a", 0.3, ClassLabel::TARGET);
    let e = iaa(&s, &first_value(), 1, &IdentityImputer(U), &cfg(), &root()).unwrap().unwrap();
    assert_eq!(e.value, 0.0);
    assert_eq!(e.first_term_mode, FirstTermMode::Observed);
    assert_eq!(e.mean_prob_target, 0.3);
}

#[test]
fn two_outcome_iaa() {
    let s = sample("a", 0.8, ClassLabel::TARGET);
    let c = EngineConfig {
        n_imputations: 4000,
        ..cfg()
    };
    let e = iaa(&s, &first_value(), 1, &Coin(U, 0.8, 0.2), &c, &root()).unwrap().unwrap();
    let exact = 0.8f64.log2() - 0.5f64.log2();
    assert!((e.value - exact).abs() < 4.0 * e.stderr + 1e-9, "{} vs {exact}", e.value);
    assert!((e.value - 0.678).abs() < 0.03);
}

#[test]
fn log_of_mean_not_mean_of_logs() {
    let s = sample("a", 0.8, ClassLabel::TARGET);
    let e = ite(&s, &first_value(), 1, &Coin(T, 0.9, 0.1), &Fill(B, 0.5), &cfg(), &root())
        .unwrap()
        .unwrap();
    assert_eq!(e.value, e.mean_prob_target.log2() - 0.5f64.log2());
}

#[test]
fn swapping_imputers_negates_exactly() {
    let s = sample("a", 0.3, ClassLabel::TARGET);
    let f = FnClassifier::new("sig", |x: &MultivariateSeries| crate::stats::sigmoid(x.get(0, 0) + x.get(1, 1)));
    let (a, b) = (Noise(T, 1.0), Noise(B, -0.5));
    let fwd = ite(&s, &f, 1, &a, &b, &cfg(), &root()).unwrap().unwrap();
    let rev = ite(&s, &f, 1, &b, &a, &cfg(), &root()).unwrap().unwrap();
    assert_eq!(fwd.value, -rev.value);
    assert_eq!(fwd.stderr, rev.stderr);
}

#[test]
fn clamping_bounds_the_value() {
    let s = sample("a", 0.3, ClassLabel::TARGET);
    let e = ite(&s, &first_value(), 1, &Fill(T, 1.0), &Fill(B, 0.0), &cfg(), &root())
        .unwrap()
        .unwrap();
    let bound = 2.0 * 1e-6f64.log2().abs();
    assert!(e.value.abs() <= bound);
    assert!((e.value - ((1.0 - 1e-6f64).log2() - 1e-6f64.log2())).abs() < 1e-9);
}

#[test]
fn absent_concept_is_skipped() {
    let x = MultivariateSeries::from_rows(vec![vec![0.1; 4]], None).unwrap();
    let s = LabeledSample::new("a", x, ConceptMask::per_timestep(vec![1; 4], 2).unwrap(), ClassLabel::TARGET).unwrap();
    let r = ite(&s, &first_value(), 2, &Fill(T, 1.0), &Fill(B, 0.0), &cfg(), &root()).unwrap();
    assert!(r.is_none());
}

#[test]
fn channel_effect_identity_is_zero() {
    let s = sample("a", 0.3, ClassLabel::TARGET);
    let id = IdentityImputer(U);
    let e = channel_effect(
        &s,
        &first_value(),
        1,
        0,
        ChannelImputers::Associational { unconditional: &id },
        &cfg(),
        &root(),
    )
    .unwrap()
    .unwrap();
    assert_eq!(e.value, 0.0);
}

#[test]
fn channel_effect_only_sees_its_channel() {
    let s = sample("a", 0.3, ClassLabel::TARGET);
    let (t, b) = (Fill(T, 0.8), Fill(B, 0.2));
    let imps = ChannelImputers::Causal {
        target: &t,
        baseline: &b,
    };
    let on = channel_effect(&s, &first_value(), 1, 0, imps, &cfg(), &root()).unwrap().unwrap();
    let off = channel_effect(&s, &first_value(), 1, 1, imps, &cfg(), &root()).unwrap().unwrap();
    assert!((on.value - 2.0).abs() < 1e-12);
    assert_eq!(off.value, 0.0);
}

#[test]
fn first_term_diagnostic_identity_is_zero() {
    let s = sample("a", 0.3, ClassLabel::TARGET);
    let v = first_term_diagnostic(&s, &first_value(), 1, &IdentityImputer(T), &cfg(), &root())
        .unwrap()
        .unwrap();
    assert_eq!(v, 0.0);
}

#[test]
fn stderr_shrinks_with_more_imputations() {
    let s = sample("a", 0.3, ClassLabel::TARGET);
    let f = FnClassifier::new("sig", |x: &MultivariateSeries| crate::stats::sigmoid(x.get(0, 0)));
    let se = |n| {
        let c = EngineConfig {
            n_imputations: n,
            ..cfg()
        };
        ite(&s, &f, 1, &Noise(T, 0.5), &Noise(B, -0.5), &c, &root()).unwrap().unwrap().stderr
    };
    let ratio = se(10) / se(160);
    assert!(ratio > 2.0 && ratio < 8.0, "ratio {ratio}");
}

#[test]
fn invalid_config_rejected() {
    let s = sample("a", 0.3, ClassLabel::TARGET);
    for c in [
        EngineConfig {
            n_imputations: 0,
            ..cfg()
        },
        EngineConfig { level: 1.0, ..cfg() },
    ] {
        assert!(ite(&s, &first_value(), 1, &Fill(T, 0.8), &Fill(B, 0.2), &c, &root()).is_err());
    }
}

#[test]
fn ate_two_point_mean() {
    let s = ate_from_effects(1, &[2.0, 1.0], &cfg(), &mut root()).unwrap();
    assert_eq!(s.ate, 1.5);
    assert!(s.low <= 1.5 && s.high >= 1.5);
    assert!(s.significant);
}

#[test]
fn ate_degenerate_interval() {
    for c in [0.0, 0.7] {
        let s = ate_from_effects(1, &[c; 20], &cfg(), &mut root()).unwrap();
        assert_eq!((s.low, s.high), (c, c));
        assert_eq!(s.significant, c != 0.0);
    }
    assert!(matches!(
        ate_from_effects(3, &[], &cfg(), &mut root()),
        Err(Error::NoUsableSamples { concept: 3 })
    ));
}

#[test]
fn ate_calibrated_under_symmetric_null() {
    let mut hits = 0;
    for rep in 0..100 {
        let mut r = rng_stream(rep, "null");
        let effects: Vec<f64> = (0..100).flat_map(|_| {
            let v = r.normal();
            [v, -v]
        })
        .collect();
        let s = ate_from_effects(1, &effects, &cfg(), &mut r).unwrap();
        if !s.significant {
            hits += 1;
        }
    }
    assert!(hits >= 90, "{hits}");
}

fn grid_data() -> Dataset {
    let mut pairs = Vec::new();
    for i in 0..12 {
        let label = ClassLabel::new((i % 2) as u8).unwrap();
        let mut s = sample(&format!("s{i:02}"), 0.1 * i as f64 / 12.0, label);
        if i == 3 {
            // lacks concept 2
            s = LabeledSample::new(
                "s03",
                s.series.clone(),
                ConceptMask::per_timestep(vec![1; 4], 2).unwrap(),
                label,
            )
            .unwrap();
        }
        pairs.push((s, if i < 4 { Split::Test } else { Split::Train }));
    }
    Dataset::from_pairs(pairs).unwrap()
}

#[test]
fn effect_matrix_shape_and_order() {
    let d = grid_data();
    let (t, b, u) = (Fill(T, 0.8), Fill(B, 0.2), Noise(U, 0.5));
    let set = ImputerSet::shared(Some(&t), Some(&b), Some(&u));
    let f = first_value();
    let res = effect_matrix(&d, &f, &set, &[2, 1], &cfg()).unwrap();
    assert_eq!(res.len(), 2);
    assert_eq!(res[0].kind, Kind::Causal);
    assert_eq!(res[1].kind, Kind::Associational);
    for r in &res {
        assert_eq!(r.cells.len(), 2 * 4);
        let order: Vec<(u32, Option<usize>)> = r.cells.iter().map(|c| (c.concept, c.channel)).collect();
        assert_eq!(
            order,
            vec![
                (1, Some(0)),
                (1, Some(1)),
                (1, Some(2)),
                (1, None),
                (2, Some(0)),
                (2, Some(1)),
                (2, Some(2)),
                (2, None)
            ]
        );
    }
    // test samples of class 1: s01, s03; s03 lacks concept 2
    for (a, c) in res[0].cells.iter().zip(&res[1].cells) {
        assert_eq!(a.n_used, c.n_used);
        assert_eq!(a.n_skipped, c.n_skipped);
    }
    let c2 = res[0].cell(2, None).unwrap();
    assert_eq!((c2.n_used, c2.n_skipped), (1, 1));
    let c1 = res[0].cell(1, Some(0)).unwrap();
    assert!((c1.summary.unwrap().ate - 2.0).abs() < 1e-12);
    assert_eq!(res[0].cell(1, Some(1)).unwrap().summary.unwrap().ate, 0.0);
}

#[test]
fn missing_channel_imputers_leave_cells_missing() {
    let d = grid_data();
    let (t, b) = (Fill(T, 0.8), Fill(B, 0.2));
    let set = ImputerSet {
        target: Some(&t),
        baseline: Some(&b),
        ..ImputerSet::default()
    };
    let res = effect_matrix(&d, &first_value(), &set, &[1], &cfg()).unwrap();
    assert_eq!(res.len(), 1);
    let cells = &res[0].cells;
    assert!(cells[..3].iter().all(|c| c.summary.is_none() && c.error.is_some()));
    assert!(cells[3].summary.is_some());
}

#[test]
fn effect_matrix_is_deterministic() {
    let d = grid_data();
    let (t, b, u) = (Noise(T, 0.8), Noise(B, 0.2), Noise(U, 0.5));
    let set = ImputerSet::shared(Some(&t), Some(&b), Some(&u));
    let f = FnClassifier::new("sig", |x: &MultivariateSeries| crate::stats::sigmoid(x.get(0, 0) - x.get(0, 3)));
    let a = effect_matrix(&d, &f, &set, &[1, 2], &cfg()).unwrap();
    let b2 = effect_matrix(&d, &f, &set, &[1, 2], &cfg()).unwrap();
    assert_eq!(a, b2);
}

#[test]
fn ate_function_matches_matrix_cell() {
    let d = grid_data();
    let (t, b) = (Noise(T, 0.8), Noise(B, 0.2));
    let set = ImputerSet::shared(Some(&t), Some(&b), None);
    let f = FnClassifier::new("sig", |x: &MultivariateSeries| crate::stats::sigmoid(x.get(0, 0)));
    let c = cfg();
    let region = Region::Global(1);
    let cell = ate(&d, |s| sample_effect(s, &f, region, Kind::Causal, &set, &c), region, Kind::Causal, &c).unwrap();
    let grid = effect_matrix(&d, &f, &set, &[1], &c).unwrap();
    assert_eq!(&cell, grid[0].cell(1, None).unwrap());
}
