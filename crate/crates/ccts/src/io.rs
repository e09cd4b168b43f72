//! Dataset files.
//!
//! * `csv-long`: header `sample_id,label,split,channel,timestep,value,concept`,
//!   one row per (channel, timestep). The `concept` column may be left out, in
//!   which case every position belongs to concept 1. The number of concepts is
//!   the largest label in the file.
//! * `jsonl`: one object per sample with `sample_id`, `label`, `split`,
//!   `values` (one array per channel), `mask` (per-timestep array, or one array
//!   per channel) and `n_concepts`, plus optional `channel_names` and `dt`.
//!
//! Values are written in shortest round-trip form, so save → load reproduces
//! the dataset exactly.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use ccts_core::data::{
    ClassLabel, ConceptMask, Dataset, LabeledSample, MaskLabels, MultivariateSeries, Split,
};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DatasetFormat {
    CsvLong,
    Jsonl,
}

impl DatasetFormat {
    /// `.csv` → csv-long, `.jsonl`/`.json` → jsonl.
    pub fn from_path(path: &Path) -> Option<Self> {
        match path.extension()?.to_str()? {
            "csv" => Some(Self::CsvLong),
            "jsonl" | "json" => Some(Self::Jsonl),
            _ => None,
        }
    }

    pub fn extension(self) -> &'static str {
        match self {
            Self::CsvLong => "csv",
            Self::Jsonl => "jsonl",
        }
    }
}

impl FromStr for DatasetFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "csv-long" | "csv" => Ok(Self::CsvLong),
            "jsonl" => Ok(Self::Jsonl),
            _ => Err(format!("unknown dataset format `{s}` (expected csv-long or jsonl)")),
        }
    }
}

pub const CSV_HEADER: [&str; 7] = ["sample_id", "label", "split", "channel", "timestep", "value", "concept"];

pub fn load_dataset(path: &Path, format: DatasetFormat) -> Result<Dataset> {
    match format {
        DatasetFormat::CsvLong => load_csv(path),
        DatasetFormat::Jsonl => load_jsonl(path),
    }
}

/// Loads with the format implied by the file extension.
pub fn load_dataset_auto(path: &Path) -> Result<Dataset> {
    let format = DatasetFormat::from_path(path)
        .ok_or_else(|| Error::Invalid(format!("cannot infer dataset format of {}", path.display())))?;
    load_dataset(path, format)
}

pub fn save_dataset(d: &Dataset, path: &Path, format: DatasetFormat) -> Result<()> {
    let file = File::create(path).map_err(Error::io(path))?;
    let mut w = BufWriter::new(file);
    match format {
        DatasetFormat::CsvLong => write_csv(d, &mut w),
        DatasetFormat::Jsonl => write_jsonl(d, &mut w),
    }
    .map_err(Error::io(path))?;
    w.flush().map_err(Error::io(path))
}

fn split_of(d: &Dataset, s: &LabeledSample) -> Split {
    d.split_of(&s.sample_id).expect("every sample has a split")
}

fn write_csv(d: &Dataset, w: &mut impl Write) -> std::io::Result<()> {
    let mut out = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(w);
    out.write_record(CSV_HEADER)?;
    for s in d.samples() {
        let label = s.label.value().to_string();
        let split = split_of(d, s).as_str();
        let names = s.series.channel_names();
        for (ch, name) in names.iter().enumerate() {
            for t in 0..s.series.n_timesteps() {
                out.write_record([
                    s.sample_id.as_str(),
                    &label,
                    split,
                    name,
                    &t.to_string(),
                    &format!("{:?}", s.series.get(ch, t)),
                    &s.mask.concept_at(ch, t).to_string(),
                ])?;
            }
        }
    }
    out.flush()
}

#[derive(Default)]
struct PendingSample {
    label: u8,
    split: String,
    first_line: u64,
    channels: Vec<String>,
    /// `(channel slot, timestep, value, concept)`
    cells: Vec<(usize, usize, f64, u32)>,
}

fn load_csv(path: &Path) -> Result<Dataset> {
    let file = File::open(path).map_err(Error::io(path))?;
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(BufReader::new(file));
    let parse_err = |line: u64, msg: String| Error::Parse { path: path.to_path_buf(), line, msg };
    let header = rdr.headers().map_err(|e| parse_err(1, e.to_string()))?.clone();
    let cols: Vec<&str> = header.iter().collect();
    let with_concept = match cols.as_slice() {
        c if c == CSV_HEADER => true,
        c if c == &CSV_HEADER[..6] => false,
        _ => return Err(parse_err(1, format!("expected header `{}`", CSV_HEADER.join(",")))),
    };

    let mut order: Vec<String> = Vec::new();
    let mut pending: HashMap<String, PendingSample> = HashMap::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            parse_err(line, e.to_string())
        })?;
        let line = rec.position().map_or(0, |p| p.line());
        let field = |i: usize| rec.get(i).unwrap_or("");
        let num = |i: usize, what: &str| -> Result<f64> {
            field(i).trim().parse::<f64>().map_err(|_| parse_err(line, format!("invalid {what} `{}`", field(i))))
        };
        let int = |i: usize, what: &str| -> Result<u64> {
            field(i).trim().parse::<u64>().map_err(|_| parse_err(line, format!("invalid {what} `{}`", field(i))))
        };
        let id = field(0).to_string();
        let label = int(1, "label")?;
        if label > 1 {
            return Err(parse_err(line, format!("label {label} is not binary")));
        }
        let split = field(2).to_string();
        if Split::parse(&split).is_none() {
            return Err(parse_err(line, format!("unknown split `{split}`")));
        }
        let t = int(4, "timestep")? as usize;
        let value = num(5, "value")?;
        let concept = if with_concept { int(6, "concept")? as u32 } else { 1 };

        let p = pending.entry(id.clone()).or_insert_with(|| {
            order.push(id.clone());
            PendingSample {
                label: label as u8,
                split: split.clone(),
                first_line: line,
                ..Default::default()
            }
        });
        if p.label != label as u8 || p.split != split {
            return Err(parse_err(line, format!("sample `{id}` changes label or split")));
        }
        let slot = match p.channels.iter().position(|c| c == field(3)) {
            Some(k) => k,
            None => {
                p.channels.push(field(3).to_string());
                p.channels.len() - 1
            }
        };
        p.cells.push((slot, t, value, concept));
    }

    let n_concepts = pending
        .values()
        .flat_map(|p| p.cells.iter().map(|c| c.3))
        .max()
        .unwrap_or(1)
        .max(1);
    let mut pairs = Vec::with_capacity(order.len());
    for id in order {
        let p = pending.remove(&id).expect("collected above");
        let sample_err = |msg: String| Error::Sample { sample_id: id.clone(), msg };
        let n_ch = p.channels.len();
        let n_t = p.cells.iter().map(|c| c.1 + 1).max().unwrap_or(0);
        if p.cells.len() != n_ch * n_t {
            return Err(sample_err(format!(
                "{} rows for {} channels × {} timesteps (line {})",
                p.cells.len(),
                n_ch,
                n_t,
                p.first_line
            )));
        }
        let mut values = vec![f64::NAN; n_ch * n_t];
        let mut labels = vec![0u32; n_ch * n_t];
        let mut seen = vec![false; n_ch * n_t];
        for &(ch, t, v, c) in &p.cells {
            let k = ch * n_t + t;
            if std::mem::replace(&mut seen[k], true) {
                return Err(sample_err(format!("duplicate row for channel `{}`, timestep {t}", p.channels[ch])));
            }
            values[k] = v;
            labels[k] = c;
        }
        let series = MultivariateSeries::from_flat(n_ch, n_t, values, Some(p.channels))
            .map_err(|e| sample_err(e.to_string()))?;
        let mask = if (1..n_ch).all(|ch| labels[ch * n_t..(ch + 1) * n_t] == labels[..n_t]) {
            ConceptMask::per_timestep(labels[..n_t].to_vec(), n_concepts)
        } else {
            ConceptMask::per_position(n_ch, labels, n_concepts)
        }
        .map_err(|e| sample_err(e.to_string()))?;
        let label = ClassLabel::new(p.label)?;
        let sample = LabeledSample::new(id.clone(), series, mask, label).map_err(|e| sample_err(e.to_string()))?;
        pairs.push((sample, Split::parse(&p.split).expect("checked per row")));
    }
    Ok(Dataset::from_pairs(pairs)?)
}

#[derive(Serialize, Deserialize)]
struct JsonSample {
    sample_id: String,
    label: u8,
    split: Split,
    values: Vec<Vec<f64>>,
    mask: JsonMask,
    n_concepts: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    channel_names: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    dt: Option<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum JsonMask {
    PerTimestep(Vec<u32>),
    PerChannel(Vec<Vec<u32>>),
}

fn write_jsonl(d: &Dataset, w: &mut impl Write) -> std::io::Result<()> {
    for s in d.samples() {
        let n_t = s.series.n_timesteps();
        let mask = match s.mask.labels() {
            MaskLabels::PerTimestep(l) => JsonMask::PerTimestep(l.clone()),
            MaskLabels::PerPosition { labels, .. } => {
                JsonMask::PerChannel(labels.chunks(n_t).map(<[u32]>::to_vec).collect())
            }
        };
        let rec = JsonSample {
            sample_id: s.sample_id.clone(),
            label: s.label.value(),
            split: split_of(d, s),
            values: s.series.rows(),
            mask,
            n_concepts: s.mask.n_concepts(),
            channel_names: Some(s.series.channel_names().to_vec()),
            dt: s.series.dt(),
        };
        serde_json::to_writer(&mut *w, &rec)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

fn load_jsonl(path: &Path) -> Result<Dataset> {
    let file = File::open(path).map_err(Error::io(path))?;
    let mut pairs = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(Error::io(path))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: JsonSample = serde_json::from_str(&line).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: i as u64 + 1,
            msg: e.to_string(),
        })?;
        let id = rec.sample_id;
        let sample_err = |msg: String| Error::Sample { sample_id: id.clone(), msg };
        let n_ch = rec.values.len();
        let series = MultivariateSeries::from_rows(rec.values, rec.channel_names)
            .map_err(|e| sample_err(e.to_string()))?
            .with_dt(rec.dt);
        let mask = match rec.mask {
            JsonMask::PerTimestep(l) => ConceptMask::per_timestep(l, rec.n_concepts),
            JsonMask::PerChannel(rows) => ConceptMask::per_position(n_ch, rows.concat(), rec.n_concepts),
        }
        .map_err(|e| sample_err(e.to_string()))?;
        let label = ClassLabel::new(rec.label).map_err(|e| sample_err(e.to_string()))?;
        let sample = LabeledSample::new(id.clone(), series, mask, label).map_err(|e| sample_err(e.to_string()))?;
        pairs.push((sample, rec.split));
    }
    Ok(Dataset::from_pairs(pairs)?)
}
