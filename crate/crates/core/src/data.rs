//! Series, concept masks, labelled samples and datasets.
//!
//! Values are stored channel-major (`values[ch * n_timesteps + t]`).
//! A [`SegmentIndex`] lists `(channel, timestep)` positions in the same
//! channel-major order, and replacement vectors passed to [`splice`] are
//! aligned to that order.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Real-valued `n_channels × n_timesteps` signal.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MultivariateSeries {
    n_channels: usize,
    n_timesteps: usize,
    values: Vec<f64>,
    channel_names: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    dt: Option<f64>,
}

impl MultivariateSeries {
    /// Builds a series from one row per channel. Missing names default to `ch{i}`.
    pub fn from_rows(rows: Vec<Vec<f64>>, channel_names: Option<Vec<String>>) -> Result<Self> {
        let n_channels = rows.len();
        let n_timesteps = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != n_timesteps) {
            return Err(Error::ShapeMismatch("channels have different lengths".into()));
        }
        Self::from_flat(n_channels, n_timesteps, rows.concat(), channel_names)
    }

    pub fn from_flat(
        n_channels: usize,
        n_timesteps: usize,
        values: Vec<f64>,
        channel_names: Option<Vec<String>>,
    ) -> Result<Self> {
        if n_channels == 0 || n_timesteps == 0 {
            return Err(Error::ShapeMismatch("series needs at least one channel and one timestep".into()));
        }
        if values.len() != n_channels * n_timesteps {
            return Err(Error::LengthMismatch {
                expected: n_channels * n_timesteps,
                found: values.len(),
            });
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::ShapeMismatch(format!(
                "non-finite value at channel {}, timestep {}",
                pos / n_timesteps,
                pos % n_timesteps
            )));
        }
        let channel_names = match channel_names {
            Some(names) if names.len() != n_channels => {
                return Err(Error::ShapeMismatch(format!(
                    "{} channel names for {} channels",
                    names.len(),
                    n_channels
                )))
            }
            Some(names) => names,
            None => default_channel_names(n_channels),
        };
        Ok(Self {
            n_channels,
            n_timesteps,
            values,
            channel_names,
            dt: None,
        })
    }

    pub fn with_dt(mut self, dt: Option<f64>) -> Self {
        self.dt = dt;
        self
    }

    pub fn zeros(n_channels: usize, n_timesteps: usize) -> Result<Self> {
        Self::from_flat(n_channels, n_timesteps, vec![0.0; n_channels * n_timesteps], None)
    }

    pub fn n_channels(&self) -> usize {
        self.n_channels
    }

    pub fn n_timesteps(&self) -> usize {
        self.n_timesteps
    }

    pub fn channel_names(&self) -> &[String] {
        &self.channel_names
    }

    pub fn dt(&self) -> Option<f64> {
        self.dt
    }

    /// Flat channel-major values.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn channel(&self, ch: usize) -> &[f64] {
        &self.values[ch * self.n_timesteps..(ch + 1) * self.n_timesteps]
    }

    #[inline]
    pub fn get(&self, ch: usize, t: usize) -> f64 {
        self.values[ch * self.n_timesteps + t]
    }

    /// Sets one value. Panics on a non-finite value or an out-of-bounds position.
    #[inline]
    pub fn set(&mut self, ch: usize, t: usize, v: f64) {
        assert!(v.is_finite(), "non-finite value written to series");
        self.values[ch * self.n_timesteps + t] = v;
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        (0..self.n_channels).map(|c| self.channel(c).to_vec()).collect()
    }
}

pub fn default_channel_names(n: usize) -> Vec<String> {
    (0..n).map(|i| format!("ch{i}")).collect()
}

/// Concept labels, per timestep (shared by all channels) or per position.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaskLabels {
    PerTimestep(Vec<u32>),
    PerPosition { n_channels: usize, labels: Vec<u32> },
}

/// Segmentation of a series into concepts `1..=n_concepts`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConceptMask {
    labels: MaskLabels,
    n_concepts: u32,
}

impl ConceptMask {
    pub fn per_timestep(labels: Vec<u32>, n_concepts: u32) -> Result<Self> {
        Self::new(MaskLabels::PerTimestep(labels), n_concepts)
    }

    pub fn per_position(n_channels: usize, labels: Vec<u32>, n_concepts: u32) -> Result<Self> {
        if n_channels == 0 || labels.len() % n_channels != 0 {
            return Err(Error::ShapeMismatch("mask length is not a multiple of n_channels".into()));
        }
        Self::new(MaskLabels::PerPosition { n_channels, labels }, n_concepts)
    }

    fn new(labels: MaskLabels, n_concepts: u32) -> Result<Self> {
        let raw = match &labels {
            MaskLabels::PerTimestep(l) => l,
            MaskLabels::PerPosition { labels, .. } => labels,
        };
        if n_concepts == 0 {
            return Err(Error::InvalidConfig("n_concepts must be at least 1".into()));
        }
        if raw.is_empty() {
            return Err(Error::ShapeMismatch("empty mask".into()));
        }
        if let Some(&bad) = raw.iter().find(|&&c| c == 0 || c > n_concepts) {
            return Err(Error::ConceptOutOfRange {
                concept: bad,
                n_concepts,
            });
        }
        Ok(Self { labels, n_concepts })
    }

    pub fn n_concepts(&self) -> u32 {
        self.n_concepts
    }

    pub fn labels(&self) -> &MaskLabels {
        &self.labels
    }

    pub fn is_channel_agnostic(&self) -> bool {
        matches!(self.labels, MaskLabels::PerTimestep(_))
    }

    pub fn n_timesteps(&self) -> usize {
        match &self.labels {
            MaskLabels::PerTimestep(l) => l.len(),
            MaskLabels::PerPosition { n_channels, labels } => labels.len() / n_channels,
        }
    }

    /// Concept at `(ch, t)`. Channel-agnostic masks broadcast over channels.
    #[inline]
    pub fn concept_at(&self, ch: usize, t: usize) -> u32 {
        match &self.labels {
            MaskLabels::PerTimestep(l) => l[t],
            MaskLabels::PerPosition { labels, .. } => labels[ch * self.n_timesteps() + t],
        }
    }

    /// Checks that the mask can be paired with a series of the given shape.
    pub fn check_shape(&self, n_channels: usize, n_timesteps: usize) -> Result<()> {
        if self.n_timesteps() != n_timesteps {
            return Err(Error::ShapeMismatch(format!(
                "mask covers {} timesteps, series has {}",
                self.n_timesteps(),
                n_timesteps
            )));
        }
        if let MaskLabels::PerPosition { n_channels: mc, .. } = &self.labels {
            if *mc != n_channels {
                return Err(Error::ShapeMismatch(format!(
                    "mask has {mc} channels, series has {n_channels}"
                )));
            }
        }
        Ok(())
    }

    /// Expands to a per-position label matrix (channel-major).
    pub fn expand(&self, n_channels: usize) -> Vec<u32> {
        let n_t = self.n_timesteps();
        (0..n_channels)
            .flat_map(|ch| (0..n_t).map(move |t| (ch, t)))
            .map(|(ch, t)| self.concept_at(ch, t))
            .collect()
    }
}

/// Binary class label; `1` is the target class, `0` the baseline class.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub struct ClassLabel(u8);

impl ClassLabel {
    pub const BASELINE: ClassLabel = ClassLabel(0);
    pub const TARGET: ClassLabel = ClassLabel(1);

    pub fn new(value: u8) -> Result<Self> {
        match value {
            0 | 1 => Ok(ClassLabel(value)),
            v => Err(Error::InvalidConfig(format!("class label {v} is not binary"))),
        }
    }

    pub fn value(self) -> u8 {
        self.0
    }

    pub fn as_f64(self) -> f64 {
        f64::from(self.0)
    }

    pub fn flipped(self) -> Self {
        ClassLabel(1 - self.0)
    }
}

impl TryFrom<u8> for ClassLabel {
    type Error = Error;
    fn try_from(v: u8) -> Result<Self> {
        ClassLabel::new(v)
    }
}

impl From<ClassLabel> for u8 {
    fn from(l: ClassLabel) -> u8 {
        l.0
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabeledSample {
    pub sample_id: String,
    pub series: MultivariateSeries,
    pub mask: ConceptMask,
    pub label: ClassLabel,
}

impl LabeledSample {
    pub fn new(
        sample_id: impl Into<String>,
        series: MultivariateSeries,
        mask: ConceptMask,
        label: ClassLabel,
    ) -> Result<Self> {
        let sample_id = sample_id.into();
        mask.check_shape(series.n_channels(), series.n_timesteps())
            .map_err(|e| Error::InvalidSample {
                sample_id: sample_id.clone(),
                reason: e.to_string(),
            })?;
        Ok(Self {
            sample_id,
            series,
            mask,
            label,
        })
    }

    /// Positions of `concept`, optionally restricted to one channel.
    pub fn segment(&self, concept: u32, channel: Option<usize>) -> Result<SegmentIndex> {
        segment_index(&self.mask, self.series.n_channels(), concept, channel)
    }

    pub fn has_concept(&self, concept: u32) -> bool {
        let n_t = self.series.n_timesteps();
        (0..self.series.n_channels())
            .any(|ch| (0..n_t).any(|t| self.mask.concept_at(ch, t) == concept))
    }

    pub fn with_series(&self, series: MultivariateSeries) -> Self {
        Self {
            series,
            ..self.clone()
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Validation,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Validation => "validation",
            Split::Test => "test",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "train" => Some(Split::Train),
            "validation" => Some(Split::Validation),
            "test" => Some(Split::Test),
            _ => None,
        }
    }
}

/// Samples plus the split assignment of every sample id.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    samples: Vec<LabeledSample>,
    split: BTreeMap<String, Split>,
}

impl Dataset {
    /// Validates uniqueness of ids, shared channel layout and split coverage.
    pub fn new(samples: Vec<LabeledSample>, split: BTreeMap<String, Split>) -> Result<Self> {
        let mut seen = BTreeMap::new();
        for (i, s) in samples.iter().enumerate() {
            if seen.insert(s.sample_id.as_str(), i).is_some() {
                return Err(Error::InvalidDataset(format!("duplicate sample_id `{}`", s.sample_id)));
            }
            if !split.contains_key(&s.sample_id) {
                return Err(Error::InvalidDataset(format!("sample `{}` has no split", s.sample_id)));
            }
        }
        if let Some(id) = split.keys().find(|k| !seen.contains_key(k.as_str())) {
            return Err(Error::InvalidDataset(format!("split names unknown sample `{id}`")));
        }
        if let Some(first) = samples.first() {
            let names = first.series.channel_names();
            for s in &samples[1..] {
                if s.series.channel_names() != names {
                    return Err(Error::InvalidSample {
                        sample_id: s.sample_id.clone(),
                        reason: "channel layout differs from the first sample".into(),
                    });
                }
            }
        }
        Ok(Self { samples, split })
    }

    /// Builds a dataset from `(sample, split)` pairs, preserving order.
    pub fn from_pairs(pairs: Vec<(LabeledSample, Split)>) -> Result<Self> {
        let split = pairs.iter().map(|(s, sp)| (s.sample_id.clone(), *sp)).collect();
        let samples = pairs.into_iter().map(|(s, _)| s).collect();
        Self::new(samples, split)
    }

    pub fn samples(&self) -> &[LabeledSample] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn split_of(&self, sample_id: &str) -> Option<Split> {
        self.split.get(sample_id).copied()
    }

    pub fn in_split(&self, split: Split) -> impl Iterator<Item = &LabeledSample> + '_ {
        self.samples
            .iter()
            .filter(move |s| self.split.get(&s.sample_id) == Some(&split))
    }

    pub fn n_channels(&self) -> Option<usize> {
        self.samples.first().map(|s| s.series.n_channels())
    }

    pub fn channel_names(&self) -> Vec<String> {
        self.samples
            .first()
            .map(|s| s.series.channel_names().to_vec())
            .unwrap_or_default()
    }

    pub fn n_concepts(&self) -> u32 {
        self.samples.iter().map(|s| s.mask.n_concepts()).max().unwrap_or(0)
    }

    /// Same samples with masks replaced, e.g. after concept discovery.
    pub fn with_masks(&self, masks: Vec<ConceptMask>) -> Result<Self> {
        if masks.len() != self.samples.len() {
            return Err(Error::LengthMismatch {
                expected: self.samples.len(),
                found: masks.len(),
            });
        }
        let samples = self
            .samples
            .iter()
            .zip(masks)
            .map(|(s, m)| LabeledSample::new(s.sample_id.clone(), s.series.clone(), m, s.label))
            .collect::<Result<Vec<_>>>()?;
        Self::new(samples, self.split.clone())
    }
}

/// `(channel, timestep)` positions of one concept, channel-major.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SegmentIndex {
    pub concept: u32,
    pub channel: Option<usize>,
    positions: Vec<(usize, usize)>,
}

impl SegmentIndex {
    pub fn positions(&self) -> &[(usize, usize)] {
        &self.positions
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    /// Subset of positions on one channel.
    pub fn restrict_to_channel(&self, channel: usize) -> SegmentIndex {
        SegmentIndex {
            concept: self.concept,
            channel: Some(channel),
            positions: self.positions.iter().copied().filter(|&(c, _)| c == channel).collect(),
        }
    }

    /// Distinct timesteps covered on any channel, ascending.
    pub fn timesteps(&self) -> Vec<usize> {
        let mut ts: Vec<usize> = self.positions.iter().map(|&(_, t)| t).collect();
        ts.sort_unstable();
        ts.dedup();
        ts
    }
}

/// All positions where `mask == concept`, optionally on one channel only.
pub fn segment_index(
    mask: &ConceptMask,
    n_channels: usize,
    concept: u32,
    channel: Option<usize>,
) -> Result<SegmentIndex> {
    if concept == 0 || concept > mask.n_concepts() {
        return Err(Error::ConceptOutOfRange {
            concept,
            n_concepts: mask.n_concepts(),
        });
    }
    if let Some(ch) = channel {
        if ch >= n_channels {
            return Err(Error::ChannelOutOfRange {
                channel: ch,
                n_channels,
            });
        }
    }
    let n_t = mask.n_timesteps();
    let channels = match channel {
        Some(ch) => ch..ch + 1,
        None => 0..n_channels,
    };
    let positions = channels
        .flat_map(|ch| (0..n_t).map(move |t| (ch, t)))
        .filter(|&(ch, t)| mask.concept_at(ch, t) == concept)
        .collect();
    Ok(SegmentIndex {
        concept,
        channel,
        positions,
    })
}

/// Values of `series` at the positions of `idx`.
pub fn extract(series: &MultivariateSeries, idx: &SegmentIndex) -> Vec<f64> {
    idx.positions.iter().map(|&(ch, t)| series.get(ch, t)).collect()
}

/// Copy of `base` with the positions of `idx` overwritten by `replacement`.
pub fn splice(
    base: &MultivariateSeries,
    idx: &SegmentIndex,
    replacement: &[f64],
) -> Result<MultivariateSeries> {
    if replacement.len() != idx.len() {
        return Err(Error::LengthMismatch {
            expected: idx.len(),
            found: replacement.len(),
        });
    }
    if let Some(bad) = replacement.iter().position(|v| !v.is_finite()) {
        return Err(Error::ShapeMismatch(format!("non-finite replacement value at index {bad}")));
    }
    let mut out = base.clone();
    for (&(ch, t), &v) in idx.positions.iter().zip(replacement) {
        if ch >= base.n_channels() || t >= base.n_timesteps() {
            return Err(Error::ShapeMismatch(format!("position ({ch}, {t}) outside series")));
        }
        out.set(ch, t, v);
    }
    Ok(out)
}
