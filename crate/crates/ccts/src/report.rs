//! Attribution tables, heatmaps and the paired causal/associational report.

use std::fmt::Write as _;
use std::path::Path;

use ccts_core::attribution::{AteCell, AttributionResult, Kind};
use ccts_core::concepts::ConceptStatsRow;
use ccts_core::stats::{mean, quantile_sorted, sorted, std_population};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const ATTRIBUTION_CSV_HEADER: &str = "concept,channel,kind,ate,low,high,significant,n_used,n_skipped";
pub const CONCEPT_STATS_HEADER: &str = "sample_id,channel,concept,min,max,mean,std,median,count,label";

/// Shortest representation that parses back to the same value.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:?}")
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(Error::io(path))
}

pub fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_text(path, &text)
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(Error::io(path))?;
    serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        line: e.line() as u64,
        msg: e.to_string(),
    })
}

fn channel_label(result: &AttributionResult, channel: Option<usize>) -> String {
    match channel {
        None => "global".into(),
        Some(ch) => result.channels.get(ch).cloned().unwrap_or_else(|| format!("ch{ch}")),
    }
}

/// One row per cell; cells without a result leave the numeric fields empty.
pub fn attribution_csv(result: &AttributionResult) -> String {
    let mut out = String::from(ATTRIBUTION_CSV_HEADER);
    out.push('\n');
    for c in &result.cells {
        let (ate, low, high, sig) = match &c.summary {
            Some(s) => (fmt_f64(s.ate), fmt_f64(s.low), fmt_f64(s.high), s.significant.to_string()),
            None => (String::new(), String::new(), String::new(), String::new()),
        };
        let _ = writeln!(
            out,
            "{},{},{},{ate},{low},{high},{sig},{},{}",
            c.concept,
            csv_field(&channel_label(result, c.channel)),
            c.kind.as_str(),
            c.n_used,
            c.n_skipped
        );
    }
    out
}

pub fn concept_stats_csv(rows: &[ConceptStatsRow], channel_names: &[String]) -> String {
    let mut out = String::from(CONCEPT_STATS_HEADER);
    out.push('\n');
    for r in rows {
        let ch = match r.channel {
            Some(ch) => channel_names.get(ch).cloned().unwrap_or_else(|| format!("ch{ch}")),
            None => "all".into(),
        };
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{}",
            csv_field(&r.sample_id),
            csv_field(&ch),
            r.concept,
            fmt_f64(r.min),
            fmt_f64(r.max),
            fmt_f64(r.mean),
            fmt_f64(r.std),
            fmt_f64(r.median),
            r.count,
            r.label
        );
    }
    out
}

fn xml_escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for ch in s.chars() {
        match ch {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            c => out.push(c),
        }
    }
    out
}

/// Diverging map: white at 0, red towards `+1`, blue towards `-1`.
pub fn diverging_color(t: f64) -> String {
    let t = if t.is_finite() { t.clamp(-1.0, 1.0) } else { 0.0 };
    let end = if t >= 0.0 { (178.0, 24.0, 43.0) } else { (33.0, 102.0, 172.0) };
    let a = t.abs();
    let mix = |e: f64| (255.0 + (e - 255.0) * a).round() as u8;
    format!("#{:02x}{:02x}{:02x}", mix(end.0), mix(end.1), mix(end.2))
}

const CELL_W: f64 = 72.0;
const CELL_H: f64 = 40.0;
const LEFT: f64 = 96.0;
const TOP: f64 = 64.0;

fn star_points(cx: f64, cy: f64, r: f64) -> String {
    let mut pts = Vec::with_capacity(10);
    for k in 0..10 {
        let rad = if k % 2 == 0 { r } else { r * 0.4 };
        let ang = std::f64::consts::PI * (k as f64 / 5.0 - 0.5);
        pts.push(format!("{:.2},{:.2}", cx + rad * ang.cos(), cy + rad * ang.sin()));
    }
    pts.join(" ")
}

fn cell_title(result: &AttributionResult, c: &AteCell) -> String {
    let head = format!("concept {}, {}", c.concept, channel_label(result, c.channel));
    match (&c.summary, &c.error) {
        (Some(s), _) => format!(
            "{head}: ATE {:.4} bits [{:.4}, {:.4}]{}, n={}",
            s.ate,
            s.low,
            s.high,
            if s.significant { " *" } else { "" },
            c.n_used
        ),
        (None, Some(e)) => format!("{head}: missing ({e})"),
        (None, None) => format!("{head}: missing"),
    }
}

/// SVG heatmap: rows are concepts, columns the channels then `global`.
pub fn render_heatmap(result: &AttributionResult) -> Result<String> {
    if result.cells.is_empty() || result.concepts.is_empty() {
        return Err(Error::Invalid("cannot draw an empty attribution result".into()));
    }
    let cols: Vec<Option<usize>> = (0..result.channels.len()).map(Some).chain([None]).collect();
    let range = result
        .cells
        .iter()
        .filter_map(|c| c.summary.map(|s| s.ate.abs()))
        .fold(0.0_f64, f64::max);
    let width = LEFT + CELL_W * cols.len() as f64 + 16.0;
    let height = TOP + CELL_H * result.concepts.len() as f64 + 16.0;

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(
        svg,
        r#"<text x="{LEFT}" y="20" font-size="14">{} effects (bits), color range ±{:.4}</text>"#,
        result.kind.as_str(),
        range
    );
    for (j, ch) in cols.iter().enumerate() {
        let x = LEFT + CELL_W * (j as f64 + 0.5);
        let _ = writeln!(
            svg,
            r#"<text x="{x}" y="{}" text-anchor="middle">{}</text>"#,
            TOP - 10.0,
            xml_escape(&channel_label(result, *ch))
        );
    }
    for (i, concept) in result.concepts.iter().enumerate() {
        let y = TOP + CELL_H * i as f64;
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{}" text-anchor="end">concept {concept}</text>"#,
            LEFT - 8.0,
            y + CELL_H / 2.0 + 4.0
        );
        for (j, ch) in cols.iter().enumerate() {
            let x = LEFT + CELL_W * j as f64;
            let cell = result.cell(*concept, *ch);
            let fill = match cell.and_then(|c| c.summary) {
                Some(s) if range > 0.0 => diverging_color(s.ate / range),
                Some(_) => diverging_color(0.0),
                None => "#bdbdbd".into(),
            };
            let title = cell.map_or_else(|| "missing".into(), |c| cell_title(result, c));
            let _ = writeln!(
                svg,
                r##"<rect x="{x}" y="{y}" width="{CELL_W}" height="{CELL_H}" fill="{fill}" stroke="#ffffff"><title>{}</title></rect>"##,
                xml_escape(&title)
            );
            if cell.and_then(|c| c.summary).is_some_and(|s| s.significant) {
                let _ = writeln!(
                    svg,
                    r##"<polygon class="star" points="{}" fill="#000000"/>"##,
                    star_points(x + CELL_W / 2.0, y + CELL_H / 2.0, 9.0)
                );
            }
        }
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}

pub fn emit_heatmap(result: &AttributionResult, path: &Path) -> Result<()> {
    write_text(path, &render_heatmap(result)?)
}

/// `log2 E f(D*-imputed) − log2 f(X)` for one sample and concept.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticRow {
    pub sample_id: String,
    pub concept: u32,
    pub value: f64,
}

/// Estimated against exact ATE for one global cell of an SCM run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleRow {
    pub concept: u32,
    pub kind: Kind,
    pub estimate: f64,
    pub oracle: f64,
    pub abs_error: f64,
    pub n: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellAgreement {
    pub concept: u32,
    pub channel: String,
    pub causal: Option<f64>,
    pub associational: Option<f64>,
    /// `None` unless both ATEs exist and are nonzero.
    pub same_sign: Option<bool>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SignAgreement {
    /// Cells where both ATEs exist and are nonzero.
    pub n_compared: usize,
    pub n_agree: usize,
    pub fraction: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Distribution {
    pub n: usize,
    pub mean: f64,
    pub std: f64,
    pub min: f64,
    pub q25: f64,
    pub median: f64,
    pub q75: f64,
    pub max: f64,
}

impl Distribution {
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let s = sorted(values);
        Some(Self {
            n: s.len(),
            mean: mean(&s),
            std: std_population(&s),
            min: s[0],
            q25: quantile_sorted(&s, 0.25),
            median: quantile_sorted(&s, 0.5),
            q75: quantile_sorted(&s, 0.75),
            max: s[s.len() - 1],
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConceptDiagnostics {
    pub concept: u32,
    pub distribution: Distribution,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FirstTermSummary {
    pub overall: Option<Distribution>,
    pub per_concept: Vec<ConceptDiagnostics>,
}

impl FirstTermSummary {
    pub fn of(rows: &[DiagnosticRow]) -> Self {
        let mut concepts: Vec<u32> = rows.iter().map(|r| r.concept).collect();
        concepts.sort_unstable();
        concepts.dedup();
        let per_concept = concepts
            .into_iter()
            .filter_map(|c| {
                let v: Vec<f64> = rows.iter().filter(|r| r.concept == c).map(|r| r.value).collect();
                Distribution::of(&v).map(|distribution| ConceptDiagnostics { concept: c, distribution })
            })
            .collect();
        Self {
            overall: Distribution::of(&rows.iter().map(|r| r.value).collect::<Vec<_>>()),
            per_concept,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportSummary {
    pub concepts: Vec<u32>,
    pub channels: Vec<String>,
    pub sign_agreement: SignAgreement,
    pub cells: Vec<CellAgreement>,
    pub first_term_diagnostics: FirstTermSummary,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub oracle: Option<Vec<OracleRow>>,
}

fn check_grid(causal: &AttributionResult, assoc: &AttributionResult) -> Result<()> {
    let same = causal.concepts == assoc.concepts
        && causal.channels == assoc.channels
        && causal.cells.len() == assoc.cells.len()
        && causal.cells.iter().zip(&assoc.cells).all(|(a, b)| (a.concept, a.channel) == (b.concept, b.channel));
    if !same {
        return Err(Error::Invalid("causal and associational results cover different grids".into()));
    }
    if causal.kind != Kind::Causal || assoc.kind != Kind::Associational {
        return Err(Error::Invalid("expected one causal and one associational result".into()));
    }
    Ok(())
}

pub fn summarize(
    causal: &AttributionResult,
    assoc: &AttributionResult,
    diagnostics: &[DiagnosticRow],
    oracle: Option<&[OracleRow]>,
) -> Result<ReportSummary> {
    check_grid(causal, assoc)?;
    let mut cells = Vec::with_capacity(causal.cells.len());
    let (mut n_compared, mut n_agree) = (0, 0);
    for (c, a) in causal.cells.iter().zip(&assoc.cells) {
        let (x, y) = (c.summary.map(|s| s.ate), a.summary.map(|s| s.ate));
        let same_sign = match (x, y) {
            (Some(x), Some(y)) if x != 0.0 && y != 0.0 => Some((x > 0.0) == (y > 0.0)),
            _ => None,
        };
        if let Some(s) = same_sign {
            n_compared += 1;
            n_agree += usize::from(s);
        }
        cells.push(CellAgreement {
            concept: c.concept,
            channel: channel_label(causal, c.channel),
            causal: x,
            associational: y,
            same_sign,
        });
    }
    Ok(ReportSummary {
        concepts: causal.concepts.clone(),
        channels: causal.channels.clone(),
        sign_agreement: SignAgreement {
            n_compared,
            n_agree,
            fraction: (n_compared > 0).then(|| n_agree as f64 / n_compared as f64),
        },
        cells,
        first_term_diagnostics: FirstTermSummary::of(diagnostics),
        oracle: oracle.map(<[OracleRow]>::to_vec),
    })
}

pub fn oracle_csv(rows: &[OracleRow]) -> String {
    let mut out = String::from("concept,kind,estimate,oracle,abs_error,n\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            r.concept,
            r.kind.as_str(),
            fmt_f64(r.estimate),
            fmt_f64(r.oracle),
            fmt_f64(r.abs_error),
            r.n
        );
    }
    out
}

/// Paired CSVs and SVGs plus `summary.json` (and `oracle.csv` when given) in `dir`.
pub fn emit_report(
    causal: &AttributionResult,
    assoc: &AttributionResult,
    diagnostics: &[DiagnosticRow],
    oracle: Option<&[OracleRow]>,
    dir: &Path,
) -> Result<ReportSummary> {
    let summary = summarize(causal, assoc, diagnostics, oracle)?;
    std::fs::create_dir_all(dir).map_err(Error::io(dir))?;
    for r in [causal, assoc] {
        let k = r.kind.as_str();
        write_text(&dir.join(format!("attribution-{k}.csv")), &attribution_csv(r))?;
        emit_heatmap(r, &dir.join(format!("heatmap-{k}.svg")))?;
    }
    if let Some(rows) = oracle {
        write_text(&dir.join("oracle.csv"), &oracle_csv(rows))?;
    }
    write_json(&summary, &dir.join("summary.json"))?;
    Ok(summary)
}
