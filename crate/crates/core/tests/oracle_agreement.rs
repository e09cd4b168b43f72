use ccts_core::attribution::{iaa, ite, cell_stream, EngineConfig, Kind, Region};
use ccts_core::classifier::FnClassifier;
use ccts_core::data::{ClassLabel, Split};
use ccts_core::scm::{
    bayes_classifier, brute_force_effects, conditional_imputer, generate_dataset, interventional_imputer,
    DiscreteConcept, GroundTruth, LinearGaussianConcept, OracleOptions, ScmConfig,
};

fn discrete_scm() -> ScmConfig {
    let table = |b: [f64; 3], t: [f64; 3]| DiscreteConcept {
        support: vec![-1.0, 0.0, 1.0],
        p_baseline: b.to_vec(),
        p_target: t.to_vec(),
    };
    let mut cfg = ScmConfig::discrete(1, 8, vec![
        table([0.5, 0.3, 0.2], [0.2, 0.3, 0.5]),
        table([0.6, 0.2, 0.2], [0.2, 0.2, 0.6]),
        table([0.3, 0.4, 0.3], [0.3, 0.4, 0.3]),
        table([0.2, 0.5, 0.3], [0.4, 0.2, 0.4]),
    ]);
    cfg.disease.intercept = 0.2;
    cfg
}

/// Fraction of (sample, concept) cells whose Monte-Carlo estimate lies within
/// four standard errors of the exact value, for ITE and IAA.
fn agreement(cfg: &ScmConfig, n_samples: usize, seed: u64) -> (f64, f64) {
    let gt = GroundTruth::new(cfg.clone()).unwrap();
    let f = bayes_classifier(&gt);
    let (t, b, u) = (
        interventional_imputer(&gt, ClassLabel::TARGET),
        interventional_imputer(&gt, ClassLabel::BASELINE),
        conditional_imputer(&gt),
    );
    let ecfg = EngineConfig { seed, ..Default::default() };
    let d = generate_dataset(cfg, 5 * n_samples, seed).unwrap();
    let (mut ok_ite, mut ok_iaa, mut n) = (0, 0, 0);
    for s in d.in_split(Split::Test).take(n_samples) {
        for c in 1..=cfg.n_concepts {
            let exact = brute_force_effects(&gt, s, &f, c, &OracleOptions::default()).unwrap();
            let r = Region::Global(c);
            let e = ite(s, &f, c, &t, &b, &ecfg, &cell_stream(seed, &s.sample_id, r, Kind::Causal))
                .unwrap()
                .unwrap();
            let a = iaa(s, &f, c, &u, &ecfg, &cell_stream(seed, &s.sample_id, r, Kind::Associational))
                .unwrap()
                .unwrap();
            ok_ite += usize::from((e.value - exact.ite).abs() <= 4.0 * e.stderr + 1e-12);
            ok_iaa += usize::from((a.value - exact.iaa).abs() <= 4.0 * a.stderr + 1e-12);
            n += 1;
        }
    }
    (ok_ite as f64 / n as f64, ok_iaa as f64 / n as f64)
}

#[test]
fn discrete_monte_carlo_matches_enumeration() {
    let (fi, fa) = agreement(&discrete_scm(), 60, 3);
    assert!(fi >= 0.95, "ITE agreement {fi}");
    assert!(fa >= 0.95, "IAA agreement {fa}");
}

#[test]
fn linear_gaussian_monte_carlo_matches_quadrature() {
    let lg = |a: f64, b: f64, s: f64| LinearGaussianConcept { effect: vec![a], latent: vec![b], noise: s };
    let mut cfg = ScmConfig::linear_gaussian(1, 9, vec![lg(0.8, 0.4, 0.7), lg(0.0, 0.6, 0.5), lg(-0.5, 0.3, 0.8)]);
    cfg.disease.latent_weight = 0.8;
    let (fi, fa) = agreement(&cfg, 40, 11);
    assert!(fi >= 0.95, "ITE agreement {fi}");
    assert!(fa >= 0.95, "IAA agreement {fa}");
}

#[test]
fn classifier_blind_to_concept_gives_exact_zero() {
    let cfg = discrete_scm();
    let gt = GroundTruth::new(cfg.clone()).unwrap();
    // reads only the first concept's timesteps (0 and 1 under the nominal mask)
    let f = FnClassifier::new("first-concept", |x: &ccts_core::data::MultivariateSeries| {
        ccts_core::stats::sigmoid(x.get(0, 0) + x.get(0, 1))
    });
    let (t, b, u) = (
        interventional_imputer(&gt, ClassLabel::TARGET),
        interventional_imputer(&gt, ClassLabel::BASELINE),
        conditional_imputer(&gt),
    );
    let ecfg = EngineConfig::default();
    let d = generate_dataset(&cfg, 50, 5).unwrap();
    for s in d.samples() {
        for c in 2..=4 {
            let r = Region::Global(c);
            let e = ite(s, &f, c, &t, &b, &ecfg, &cell_stream(0, &s.sample_id, r, Kind::Causal)).unwrap().unwrap();
            let a = iaa(s, &f, c, &u, &ecfg, &cell_stream(0, &s.sample_id, r, Kind::Associational))
                .unwrap()
                .unwrap();
            assert_eq!((e.value, e.stderr), (0.0, 0.0));
            assert_eq!((a.value, a.stderr), (0.0, 0.0));
        }
    }
}

#[test]
fn more_imputations_tighten_error() {
    let cfg = discrete_scm();
    let gt = GroundTruth::new(cfg.clone()).unwrap();
    let f = bayes_classifier(&gt);
    let (t, b) = (
        interventional_imputer(&gt, ClassLabel::TARGET),
        interventional_imputer(&gt, ClassLabel::BASELINE),
    );
    let d = generate_dataset(&cfg, 250, 8).unwrap();
    let mean_err = |n: usize| {
        let ecfg = EngineConfig { n_imputations: n, stderr_resamples: 50, ..Default::default() };
        let (mut total, mut cells) = (0.0, 0);
        for s in d.in_split(Split::Test) {
            for c in 1..=4 {
                let exact = brute_force_effects(&gt, s, &f, c, &OracleOptions::default()).unwrap();
                let rng = cell_stream(0, &s.sample_id, Region::Global(c), Kind::Causal);
                let e = ite(s, &f, c, &t, &b, &ecfg, &rng).unwrap().unwrap();
                total += (e.value - exact.ite).abs();
                cells += 1;
            }
        }
        total / cells as f64
    };
    let (coarse, fine) = (mean_err(40), mean_err(400));
    assert!(coarse >= 2.0 * fine, "mean error {coarse} at n=40 vs {fine} at n=400");
}
