//! Model checkpoints.
//!
//! Classifiers are JSON documents. Denoisers use a little-endian binary
//! layout:
//!
//! ```text
//! offset  size        field
//! 0       8           magic "CCTSDDPM"
//! 8       4  u32      format version (1)
//! 12      4  u32      n_channels
//! 16      4  u32      window radius
//! 20      4  u32      hidden width
//! 24      4  u32      step-embedding width
//! 28      4  u32      diffusion steps T
//! 32      8  f64      beta_0
//! 40      8  f64      beta_1
//! 48      1  u8       conditioning: 0 unconditional, 1 class-specific
//! 49      1  u8       class label (0 when unconditional)
//! 50      1  u8       mask sampler: 0 concept-regions, 1 blackout-random
//! 51      1  u8       reserved, 0
//! 52      8  u64      number of network parameters P
//! 60      8·C f64     channel means
//!         8·C f64     channel stds
//!         8·C f64     standardized signal variances
//!         8·P f64     network parameters
//! ```

use std::path::Path;

use ccts_core::classifier::{PooledLogisticModel, PROB_CLAMP};
use ccts_core::data::ClassLabel;
use ccts_core::imputer::diffusion::Standardizer;
use ccts_core::imputer::{Conditioning, DenoiserConfig, DenoiserModel, DiffusionSchedule, MaskSampler};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DDPM_MAGIC: &[u8; 8] = b"CCTSDDPM";
pub const DDPM_VERSION: u32 = 1;
const HEADER_LEN: usize = 60;

pub const CLASSIFIER_FORMAT: &str = "ccts-classifier";
pub const CLASSIFIER_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassifierCheckpoint {
    pub format: String,
    pub version: u32,
    pub kind: String,
    /// Features the weights apply to, in order.
    pub feature_spec: String,
    pub clamp: f64,
    pub model: PooledLogisticModel,
}

impl ClassifierCheckpoint {
    pub fn new(model: PooledLogisticModel) -> Self {
        Self {
            format: CLASSIFIER_FORMAT.into(),
            version: CLASSIFIER_VERSION,
            kind: "pooled-logistic".into(),
            feature_spec: "per channel: mean, std, min, max; then global mean, std; standardized".into(),
            clamp: PROB_CLAMP,
            model,
        }
    }
}

pub fn save_classifier(model: &PooledLogisticModel, path: &Path) -> Result<()> {
    let mut text = serde_json::to_string_pretty(&ClassifierCheckpoint::new(model.clone()))?;
    text.push('\n');
    std::fs::write(path, text).map_err(Error::io(path))
}

pub fn load_classifier(path: &Path) -> Result<PooledLogisticModel> {
    let text = std::fs::read_to_string(path).map_err(Error::io(path))?;
    let ck: ClassifierCheckpoint = serde_json::from_str(&text).map_err(|e| Error::Checkpoint {
        path: path.to_path_buf(),
        msg: e.to_string(),
    })?;
    if ck.format != CLASSIFIER_FORMAT || ck.version != CLASSIFIER_VERSION {
        return Err(Error::Checkpoint {
            path: path.to_path_buf(),
            msg: format!("unsupported classifier format {} v{}", ck.format, ck.version),
        });
    }
    Ok(ck.model)
}

pub fn encode_denoiser(m: &DenoiserModel) -> Vec<u8> {
    let cfg = m.config();
    let st = m.standardizer();
    let n_ch = m.n_channels();
    let params = m.params();
    let mut out = Vec::with_capacity(HEADER_LEN + 8 * (3 * n_ch + params.len()));
    out.extend_from_slice(DDPM_MAGIC);
    for v in [DDPM_VERSION, n_ch as u32, cfg.radius as u32, cfg.hidden as u32, cfg.time_dim as u32] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out.extend_from_slice(&(m.schedule().steps() as u32).to_le_bytes());
    out.extend_from_slice(&m.schedule().beta0().to_le_bytes());
    out.extend_from_slice(&m.schedule().beta1().to_le_bytes());
    let (cond, label) = match m.conditioning() {
        Conditioning::Unconditional => (0u8, 0u8),
        Conditioning::ClassSpecific(l) => (1, l.value()),
    };
    let sampler = match m.mask_sampler() {
        MaskSampler::ConceptRegions => 0u8,
        MaskSampler::BlackoutRandom => 1,
    };
    out.extend_from_slice(&[cond, label, sampler, 0]);
    out.extend_from_slice(&(params.len() as u64).to_le_bytes());
    for v in st.mean.iter().chain(&st.std).chain(&st.signal_var).chain(params) {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> std::result::Result<&'a [u8], String> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or_else(|| {
            format!("truncated at byte {} (needed {n} more)", self.pos)
        })?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> std::result::Result<u8, String> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> std::result::Result<u32, String> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> std::result::Result<u64, String> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f64s(&mut self, n: usize) -> std::result::Result<Vec<f64>, String> {
        let raw = self.take(n.checked_mul(8).ok_or("length overflow")?)?;
        Ok(raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect())
    }
}

pub fn decode_denoiser(bytes: &[u8]) -> std::result::Result<DenoiserModel, String> {
    let mut c = Cursor { bytes, pos: 0 };
    if c.take(8)? != DDPM_MAGIC {
        return Err("bad magic bytes".into());
    }
    let version = c.u32()?;
    if version != DDPM_VERSION {
        return Err(format!("unsupported version {version}"));
    }
    let n_ch = c.u32()? as usize;
    let config = DenoiserConfig {
        radius: c.u32()? as usize,
        hidden: c.u32()? as usize,
        time_dim: c.u32()? as usize,
    };
    let steps = c.u32()? as usize;
    let beta0 = f64::from_le_bytes(c.take(8)?.try_into().expect("8 bytes"));
    let beta1 = f64::from_le_bytes(c.take(8)?.try_into().expect("8 bytes"));
    let schedule = DiffusionSchedule::new(steps, beta0, beta1).map_err(|e| e.to_string())?;
    let conditioning = match (c.u8()?, c.u8()?) {
        (0, _) => Conditioning::Unconditional,
        (1, l) => Conditioning::ClassSpecific(ClassLabel::new(l).map_err(|e| e.to_string())?),
        (k, _) => return Err(format!("unknown conditioning tag {k}")),
    };
    let sampler = match c.u8()? {
        0 => MaskSampler::ConceptRegions,
        1 => MaskSampler::BlackoutRandom,
        k => return Err(format!("unknown mask sampler tag {k}")),
    };
    c.u8()?;
    let n_params = usize::try_from(c.u64()?).map_err(|_| "parameter count overflows")?;
    if n_params != config.n_params(n_ch) {
        return Err(format!("header declares {n_params} parameters, shape needs {}", config.n_params(n_ch)));
    }
    let standardizer = Standardizer {
        mean: c.f64s(n_ch)?,
        std: c.f64s(n_ch)?,
        signal_var: c.f64s(n_ch)?,
    };
    let params = c.f64s(n_params)?;
    if c.pos != bytes.len() {
        return Err(format!("{} trailing bytes", bytes.len() - c.pos));
    }
    DenoiserModel::from_parts(config, n_ch, schedule, standardizer, conditioning, sampler, params)
        .map_err(|e| e.to_string())
}

pub fn save_denoiser(m: &DenoiserModel, path: &Path) -> Result<()> {
    std::fs::write(path, encode_denoiser(m)).map_err(Error::io(path))
}

pub fn load_denoiser(path: &Path) -> Result<DenoiserModel> {
    let bytes = std::fs::read(path).map_err(Error::io(path))?;
    decode_denoiser(&bytes).map_err(|msg| Error::Checkpoint { path: path.to_path_buf(), msg })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ccts_core::rng::rng_stream;

    fn model(cond: Conditioning, sampler: MaskSampler) -> DenoiserModel {
        let cfg = DenoiserConfig { radius: 2, hidden: 5, time_dim: 4 };
        let st = Standardizer { mean: vec![0.5, -1.0], std: vec![2.0, 0.25], signal_var: vec![1.0, 0.0] };
        let sched = DiffusionSchedule::new(50, 1e-4, 0.05).unwrap();
        DenoiserModel::init(cfg, 2, sched, st, cond, sampler, &mut rng_stream(3, "ck")).unwrap()
    }

    #[test]
    fn denoiser_roundtrip_is_exact() {
        for (cond, sampler) in [
            (Conditioning::Unconditional, MaskSampler::ConceptRegions),
            (Conditioning::ClassSpecific(ClassLabel::TARGET), MaskSampler::BlackoutRandom),
        ] {
            let m = model(cond, sampler);
            let bytes = encode_denoiser(&m);
            assert_eq!(&bytes[..8], b"CCTSDDPM");
            assert_eq!(bytes.len(), HEADER_LEN + 8 * (6 + m.params().len()));
            assert_eq!(decode_denoiser(&bytes).unwrap(), m);
        }
    }

    #[test]
    fn corrupt_denoisers_are_rejected() {
        let bytes = encode_denoiser(&model(Conditioning::Unconditional, MaskSampler::ConceptRegions));
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(decode_denoiser(&bad).unwrap_err().contains("magic"));
        assert!(decode_denoiser(&bytes[..bytes.len() - 3]).unwrap_err().contains("truncated"));
        let mut long = bytes.clone();
        long.push(0);
        assert!(decode_denoiser(&long).unwrap_err().contains("trailing"));
        let mut v2 = bytes;
        v2[8] = 2;
        assert!(decode_denoiser(&v2).unwrap_err().contains("version"));
    }

    #[test]
    fn classifier_roundtrip() {
        let m = PooledLogisticModel {
            n_channels: 1,
            feature_mean: vec![0.0; 6],
            feature_std: vec![1.0; 6],
            weights: vec![0.1, -0.2, 0.3, 0.0, 1e-17, 2.0],
            bias: -0.5,
            l2: 1e-3,
            selected_epoch: 4,
            selected_val_auroc: Some(0.75),
            fingerprint: "abc".into(),
        };
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.json");
        save_classifier(&m, &p).unwrap();
        assert_eq!(load_classifier(&p).unwrap(), m);
        std::fs::write(&p, "{}").unwrap();
        assert!(matches!(load_classifier(&p), Err(Error::Checkpoint { .. })));
    }
}
