use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::data::{ConceptMask, Dataset, Split};
use crate::rng::{rng_stream, RngStream};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct KmeansOptions {
    pub n_restarts: usize,
    pub max_iter: usize,
}

impl Default for KmeansOptions {
    fn default() -> Self {
        Self {
            n_restarts: 10,
            max_iter: 100,
        }
    }
}

/// k-means centroids over per-timestep cross-channel vectors.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClusteringModel {
    /// `k × n_channels`; centroid `j` defines concept `j + 1`.
    pub centroids: Vec<Vec<f64>>,
    pub inertia: f64,
    /// Inertia after every Lloyd iteration of the selected restart.
    pub inertia_trace: Vec<f64>,
}

impl ClusteringModel {
    pub fn k(&self) -> usize {
        self.centroids.len()
    }

    pub fn n_channels(&self) -> usize {
        self.centroids.first().map_or(0, Vec::len)
    }

    /// Index of the nearest centroid; ties go to the lowest index.
    pub fn nearest(&self, point: &[f64]) -> (usize, f64) {
        nearest(&self.centroids, point)
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(centroids: &[Vec<f64>], p: &[f64]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (j, c) in centroids.iter().enumerate() {
        let d = sq_dist(c, p);
        if d < best.1 {
            best = (j, d);
        }
    }
    best
}

/// Every timestep of every training sample as a cross-channel vector.
pub fn timestep_points(d: &Dataset) -> Vec<Vec<f64>> {
    d.in_split(Split::Train)
        .flat_map(|s| (0..s.series.n_timesteps()).map(move |t| (0..s.series.n_channels()).map(|ch| s.series.get(ch, t)).collect()))
        .collect()
}

fn distinct_count(points: &[Vec<f64>]) -> usize {
    let mut p: Vec<&Vec<f64>> = points.iter().collect();
    let cmp = |a: &&Vec<f64>, b: &&Vec<f64>| {
        a.iter()
            .zip(b.iter())
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| o.is_ne())
            .unwrap_or(core::cmp::Ordering::Equal)
    };
    p.sort_by(cmp);
    p.dedup_by(|a, b| cmp(&&**a, &&**b).is_eq());
    p.len()
}

fn kmeans_pp(points: &[Vec<f64>], k: usize, rng: &mut RngStream) -> Vec<Vec<f64>> {
    let mut centroids = vec![points[rng.index(points.len())].clone()];
    let mut d2: Vec<f64> = points.iter().map(|p| sq_dist(p, &centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let mut u = rng.uniform() * total;
            let mut pick = points.len() - 1;
            for (i, w) in d2.iter().enumerate() {
                if u < *w {
                    pick = i;
                    break;
                }
                u -= w;
            }
            pick
        } else {
            rng.index(points.len())
        };
        let c = points[next].clone();
        for (i, p) in points.iter().enumerate() {
            d2[i] = d2[i].min(sq_dist(p, &c));
        }
        centroids.push(c);
    }
    centroids
}

/// One Lloyd run from k-means++ seeds. Returns centroids, inertia and trace.
fn lloyd(points: &[Vec<f64>], k: usize, max_iter: usize, rng: &mut RngStream) -> (Vec<Vec<f64>>, f64, Vec<f64>) {
    let n_ch = points[0].len();
    let mut centroids = kmeans_pp(points, k, rng);
    let mut assign: Vec<usize> = vec![usize::MAX; points.len()];
    let mut trace = Vec::new();
    for _ in 0..max_iter.max(1) {
        let mut changed = false;
        let mut dist = vec![0.0; points.len()];
        for (i, p) in points.iter().enumerate() {
            let (j, d) = nearest(&centroids, p);
            dist[i] = d;
            if assign[i] != j {
                assign[i] = j;
                changed = true;
            }
        }
        let inertia: f64 = dist.iter().sum();
        if let Some(&prev) = trace.last() {
            debug_assert!(inertia <= prev * (1.0 + 1e-9) + 1e-9, "Lloyd step increased inertia");
        }
        trace.push(inertia);
        if !changed && trace.len() > 1 {
            break;
        }
        let mut sums = vec![vec![0.0; n_ch]; k];
        let mut counts = vec![0usize; k];
        for (p, &j) in points.iter().zip(&assign) {
            counts[j] += 1;
            for (s, v) in sums[j].iter_mut().zip(p) {
                *s += v;
            }
        }
        for j in 0..k {
            if counts[j] > 0 {
                centroids[j] = sums[j].iter().map(|s| s / counts[j] as f64).collect();
            } else {
                // move an empty centroid onto the worst-fitted point
                let far = (0..points.len())
                    .max_by(|&a, &b| dist[a].total_cmp(&dist[b]).then(b.cmp(&a)))
                    .unwrap_or(0);
                centroids[j] = points[far].clone();
                dist[far] = 0.0;
            }
        }
    }
    let inertia = points.iter().map(|p| nearest(&centroids, p).1).sum();
    if let Some(&last) = trace.last() {
        if inertia < last {
            trace.push(inertia);
        }
    }
    (centroids, inertia, trace)
}

/// Best of `n_restarts` Lloyd runs on `points`.
pub fn kmeans_fit_points(points: &[Vec<f64>], k: usize, seed: u64, opts: &KmeansOptions) -> Result<ClusteringModel> {
    if k == 0 {
        return Err(Error::InvalidConfig("k must be at least 1".into()));
    }
    if points.is_empty() {
        return Err(Error::InvalidDataset("no points to cluster".into()));
    }
    let n_ch = points[0].len();
    if n_ch == 0 || points.iter().any(|p| p.len() != n_ch) {
        return Err(Error::ShapeMismatch("points must share a positive dimension".into()));
    }
    if points.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::InvalidDataset("non-finite value in clustering input".into()));
    }
    let distinct = distinct_count(points);
    if k > distinct {
        return Err(Error::TooManyClusters { k, distinct });
    }
    let root = rng_stream(seed, "kmeans");
    let mut best: Option<ClusteringModel> = None;
    for r in 0..opts.n_restarts.max(1) {
        let (centroids, inertia, trace) = lloyd(points, k, opts.max_iter, &mut root.substream_idx("restart", r as u64));
        if best.as_ref().is_none_or(|b| inertia < b.inertia) {
            best = Some(ClusteringModel {
                centroids,
                inertia,
                inertia_trace: trace,
            });
        }
    }
    Ok(best.expect("at least one restart"))
}

/// k-means on the training split's per-timestep vectors.
pub fn kmeans_fit(d: &Dataset, k: usize, seed: u64, opts: &KmeansOptions) -> Result<ClusteringModel> {
    let points = timestep_points(d);
    if points.is_empty() {
        return Err(Error::InvalidDataset("empty training split".into()));
    }
    kmeans_fit_points(&points, k, seed, opts)
}

/// Replaces every mask by the nearest-centroid labelling (channel-agnostic, `C = k`).
pub fn assign_concepts(model: &ClusteringModel, d: &Dataset) -> Result<Dataset> {
    let n_ch = model.n_channels();
    let masks = d
        .samples()
        .iter()
        .map(|s| {
            if s.series.n_channels() != n_ch {
                return Err(Error::ShapeMismatch(alloc::format!(
                    "model has {n_ch} channels, sample {} has {}",
                    s.sample_id,
                    s.series.n_channels()
                )));
            }
            let mut p = vec![0.0; n_ch];
            let labels = (0..s.series.n_timesteps())
                .map(|t| {
                    for (ch, v) in p.iter_mut().enumerate() {
                        *v = s.series.get(ch, t);
                    }
                    model.nearest(&p).0 as u32 + 1
                })
                .collect();
            ConceptMask::per_timestep(labels, model.k() as u32)
        })
        .collect::<Result<Vec<_>>>()?;
    d.with_masks(masks)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ElbowWarning {
    /// Inertia does not decrease over the range (e.g. identical points); smallest k returned.
    Degenerate,
    /// The selected k leaves more than a quarter of the total inertia unexplained.
    WeakStructure,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ElbowResult {
    pub k_star: usize,
    pub ks: Vec<usize>,
    pub inertias: Vec<f64>,
    /// Relative second difference for each interior k (aligned with `ks[1..len-1]`).
    pub scores: Vec<f64>,
    pub warning: Option<ElbowWarning>,
}

/// Fraction of the total inertia the elbow must explain before the structure counts as real.
const MIN_EXPLAINED: f64 = 0.75;

/// Selects k in `k_lo..=k_hi` at the point of maximal curvature of the inertia curve.
///
/// With drops `Δ_k = I_{k−1} − I_k`, interior `k` scores `(Δ_k − Δ_{k+1}) / Δ_k`,
/// the second difference relative to the drop that precedes it (0 when the
/// drop vanishes). The smallest `k` wins ties. A `k` above the number of
/// distinct points has inertia 0.
pub fn elbow_select(d: &Dataset, k_lo: usize, k_hi: usize, seed: u64, opts: &KmeansOptions) -> Result<ElbowResult> {
    if k_lo < 1 || k_hi > 12 || k_hi < k_lo + 2 {
        return Err(Error::InvalidConfig(alloc::format!(
            "k range {k_lo}..={k_hi} must lie in 1..=12 and span at least 3 values"
        )));
    }
    let points = timestep_points(d);
    if points.is_empty() {
        return Err(Error::InvalidDataset("empty training split".into()));
    }
    let fit = |k: usize| match kmeans_fit_points(&points, k, seed, opts) {
        Ok(m) => Ok(m.inertia),
        Err(Error::TooManyClusters { .. }) => Ok(0.0),
        Err(e) => Err(e),
    };
    let i1 = fit(1)?;
    let ks: Vec<usize> = (k_lo..=k_hi).collect();
    let inertias = ks
        .iter()
        .map(|&k| if k == 1 { Ok(i1) } else { fit(k) })
        .collect::<Result<Vec<f64>>>()?;
    let tiny = 1e-12 * points.len() as f64;
    let degenerate = i1 <= tiny || inertias[inertias.len() - 1] >= inertias[0] * (1.0 - 1e-9);
    let scores: Vec<f64> = (1..ks.len() - 1)
        .map(|i| {
            let drop = inertias[i - 1] - inertias[i];
            if drop <= 1e-12 * i1 {
                0.0
            } else {
                (drop - (inertias[i] - inertias[i + 1])) / drop
            }
        })
        .collect();
    if degenerate {
        return Ok(ElbowResult {
            k_star: k_lo,
            ks,
            inertias,
            scores,
            warning: Some(ElbowWarning::Degenerate),
        });
    }
    let mut best = 0;
    for (i, s) in scores.iter().enumerate() {
        if *s > scores[best] {
            best = i;
        }
    }
    let k_star = ks[best + 1];
    let explained = 1.0 - inertias[best + 1] / i1;
    Ok(ElbowResult {
        k_star,
        ks,
        inertias,
        scores,
        warning: (explained < MIN_EXPLAINED).then_some(ElbowWarning::WeakStructure),
    })
}
