use ccts_core::classifier::bootstrap_metric;
use ccts_core::rng::rng_stream;

/// Negatives ~ U(0, 1), positives ~ U(a, 1 + a): the AUROC is 1 − (1 − a)²/2.
#[test]
fn auroc_interval_covers_truth() {
    let a = 0.5;
    let truth = 1.0 - (1.0 - a) * (1.0 - a) / 2.0;
    let mut covered = 0;
    let reps = 200;
    for r in 0..reps {
        let mut rng = rng_stream(r, "coverage-data");
        let mut scores = Vec::new();
        let mut labels = Vec::new();
        for i in 0..120 {
            let y = (i % 2) as u8;
            scores.push(rng.uniform() + a * y as f64);
            labels.push(y);
        }
        let iv = bootstrap_metric(&scores, &labels, 1000, 0.95, r).unwrap();
        covered += usize::from(iv.low <= truth && truth <= iv.high);
    }
    let rate = covered as f64 / reps as f64;
    assert!((0.90..=0.99).contains(&rate), "coverage {rate}");
}
