//! Segment imputers: samplers of replacement values for a concept region.
//!
//! A class-specific imputer approximates the interventional distribution
//! `p(X_c | do(D = d))`; an unconditional one samples `p(X_c | X_c^∁)`.
//! Three families are provided: empirical donors, the exact samplers of the
//! synthetic SCM (see [`crate::scm`]) and a masked-denoising diffusion model.

mod blackout;
pub mod diffusion;
mod donor;

pub use blackout::impute_channel_blackout;
pub use diffusion::{
    ddpm_impute, ddpm_train, DdpmImputer, DdpmTrainOptions, DenoiserConfig, DenoiserModel,
    DiffusionSchedule, MaskSampler, TrainReport,
};
pub use donor::{donor_fit, DonorPool};

use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::data::{ClassLabel, LabeledSample, SegmentIndex};
use crate::rng::RngStream;
use crate::Result;

/// What an imputer conditions on.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Conditioning {
    ClassSpecific(ClassLabel),
    Unconditional,
}

impl Conditioning {
    /// Stream tag; draws for one conditioning come from the same child stream.
    pub fn tag(self) -> String {
        match self {
            Conditioning::ClassSpecific(l) => alloc::format!("class-{}", l.value()),
            Conditioning::Unconditional => "unconditional".into(),
        }
    }
}

pub trait SegmentImputer: Sync {
    fn conditioning(&self) -> Conditioning;

    /// Whether the imputer can fill a region spanning every channel without
    /// reading same-time values of other channels.
    fn blackout_capable(&self) -> bool;

    /// Replacement values aligned to `idx.positions()`.
    fn impute(&self, sample: &LabeledSample, idx: &SegmentIndex, rng: &mut RngStream) -> Result<Vec<f64>>;
}

impl<T: SegmentImputer + ?Sized> SegmentImputer for &T {
    fn conditioning(&self) -> Conditioning {
        (**self).conditioning()
    }

    fn blackout_capable(&self) -> bool {
        (**self).blackout_capable()
    }

    fn impute(&self, sample: &LabeledSample, idx: &SegmentIndex, rng: &mut RngStream) -> Result<Vec<f64>> {
        (**self).impute(sample, idx, rng)
    }
}

/// Returns the sample's own values; every effect computed with it is zero.
#[derive(Clone, Copy, Debug)]
pub struct IdentityImputer(pub Conditioning);

impl SegmentImputer for IdentityImputer {
    fn conditioning(&self) -> Conditioning {
        self.0
    }

    fn blackout_capable(&self) -> bool {
        true
    }

    fn impute(&self, sample: &LabeledSample, idx: &SegmentIndex, _rng: &mut RngStream) -> Result<Vec<f64>> {
        Ok(crate::data::extract(&sample.series, idx))
    }
}
