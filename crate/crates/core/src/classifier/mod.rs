//! The fixed classifier `f` and its evaluation metrics.
//!
//! Any model mapping a series to a probability of the target class can be
//! attributed; it only has to implement [`ProbClassifier`]. [`classify`]
//! applies the shared probability clamp so downstream `log2` calls stay finite.

mod metrics;
mod pooled;

pub use metrics::{auroc, bootstrap_metric, BootstrapInterval};
pub use pooled::{pooled_features, train_pooled_logistic, LogisticOptions, PooledLogisticModel};

use alloc::string::String;

use crate::data::MultivariateSeries;
use crate::{Error, Result};

/// Outputs are clamped to `[PROB_CLAMP, 1 − PROB_CLAMP]`.
pub const PROB_CLAMP: f64 = 1e-6;

/// A probabilistic binary classifier; `predict` returns `p(D = 1 | x)`.
pub trait ProbClassifier: Sync {
    fn name(&self) -> &str;

    fn predict(&self, x: &MultivariateSeries) -> Result<f64>;
}

impl<T: ProbClassifier + ?Sized> ProbClassifier for &T {
    fn name(&self) -> &str {
        (**self).name()
    }

    fn predict(&self, x: &MultivariateSeries) -> Result<f64> {
        (**self).predict(x)
    }
}

pub fn clamp_prob(p: f64, eps: f64) -> f64 {
    p.clamp(eps, 1.0 - eps)
}

/// Clamped classifier output.
pub fn classify(m: &(impl ProbClassifier + ?Sized), x: &MultivariateSeries) -> Result<f64> {
    let p = m.predict(x)?;
    if p.is_nan() {
        return Err(Error::Unsupported(alloc::format!("classifier `{}` returned NaN", m.name())));
    }
    Ok(clamp_prob(p, PROB_CLAMP))
}

/// Classifier backed by a closure, handy for constructed test classifiers.
pub struct FnClassifier<F> {
    name: String,
    f: F,
}

impl<F: Fn(&MultivariateSeries) -> f64 + Sync> FnClassifier<F> {
    pub fn new(name: impl Into<String>, f: F) -> Self {
        Self { name: name.into(), f }
    }
}

impl<F: Fn(&MultivariateSeries) -> f64 + Sync> ProbClassifier for FnClassifier<F> {
    fn name(&self) -> &str {
        &self.name
    }

    fn predict(&self, x: &MultivariateSeries) -> Result<f64> {
        Ok((self.f)(x))
    }
}

/// Always returns the same probability.
#[derive(Clone, Debug)]
pub struct ConstantClassifier(pub f64);

impl ProbClassifier for ConstantClassifier {
    fn name(&self) -> &str {
        "constant"
    }

    fn predict(&self, _x: &MultivariateSeries) -> Result<f64> {
        Ok(self.0)
    }
}
