//! Two-stage clustering of pooled segment features: k-means to `K₁` centers,
//! then average-linkage agglomeration of those centers into `K₂` units.

use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::StnsTensor;
use crate::segmenter::Segmentation;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KMeansConfig {
    pub max_iter: usize,
    /// Stop once `(previous − current) / previous` inertia drops below this.
    pub rel_tol: f64,
    /// Independent k-means++ restarts; the lowest final inertia wins.
    pub n_init: usize,
    pub seed: u64,
}

impl Default for KMeansConfig {
    fn default() -> Self {
        Self {
            max_iter: 100,
            rel_tol: 1e-4,
            n_init: 1,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansResult {
    pub centers: Array2<f64>,
    pub assignments: Vec<usize>,
    pub inertia: f64,
    /// Inertia after every assignment step, starting with the initial one.
    pub inertia_history: Vec<f64>,
}

fn sq_dist(a: ArrayView1<f64>, b: ArrayView1<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Index and squared distance of the nearest row of `centers`; ties go to
/// the lowest index.
pub fn nearest(x: ArrayView1<f64>, centers: &ArrayView2<f64>) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (k, c) in centers.rows().into_iter().enumerate() {
        let d = sq_dist(x, c);
        if d < best.1 {
            best = (k, d);
        }
    }
    best
}

fn assign(x: &ArrayView2<f64>, centers: &Array2<f64>) -> (Vec<usize>, Vec<f64>) {
    let cv = centers.view();
    let pairs: Vec<(usize, f64)> = if x.nrows() * centers.nrows() > 1 << 16 {
        (0..x.nrows()).into_par_iter().map(|i| nearest(x.row(i), &cv)).collect()
    } else {
        (0..x.nrows()).map(|i| nearest(x.row(i), &cv)).collect()
    };
    pairs.into_iter().unzip()
}

fn kmeans_pp(x: &ArrayView2<f64>, k: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
    let n = x.nrows();
    let mut centers = Array2::<f64>::zeros((k, x.ncols()));
    let first = rng.random_range(0..n);
    centers.row_mut(0).assign(&x.row(first));
    let mut d2: Vec<f64> = (0..n).map(|i| sq_dist(x.row(i), x.row(first))).collect();
    for c in 1..k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut r = rng.random_range(0.0..total);
            let mut idx = n - 1;
            for (i, &d) in d2.iter().enumerate() {
                if r < d {
                    idx = i;
                    break;
                }
                r -= d;
            }
            idx
        } else {
            rng.random_range(0..n)
        };
        centers.row_mut(c).assign(&x.row(pick));
        for (i, d) in d2.iter_mut().enumerate() {
            *d = d.min(sq_dist(x.row(i), x.row(pick)));
        }
    }
    centers
}

fn lloyd(x: &ArrayView2<f64>, mut centers: Array2<f64>, cfg: &KMeansConfig) -> KMeansResult {
    let k = centers.nrows();
    let (mut assignments, mut dists) = assign(x, &centers);
    let mut inertia: f64 = dists.iter().sum();
    let mut history = vec![inertia];
    for _ in 0..cfg.max_iter {
        let mut sums = Array2::<f64>::zeros(centers.raw_dim());
        let mut counts = vec![0usize; k];
        for (i, &a) in assignments.iter().enumerate() {
            sums.row_mut(a).scaled_add(1.0, &x.row(i));
            counts[a] += 1;
        }
        let mut taken = vec![false; x.nrows()];
        for c in 0..k {
            if counts[c] > 0 {
                centers.row_mut(c).assign(&(&sums.row(c) / counts[c] as f64));
            } else {
                // Reseed with the point farthest from its own center.
                let far = (0..x.nrows())
                    .filter(|&i| !taken[i])
                    .fold((0, -1.0), |b, i| if dists[i] > b.1 { (i, dists[i]) } else { b })
                    .0;
                taken[far] = true;
                centers.row_mut(c).assign(&x.row(far));
            }
        }
        let (a, d) = assign(x, &centers);
        let new_inertia: f64 = d.iter().sum();
        history.push(new_inertia);
        let unchanged = a == assignments;
        let improvement = inertia - new_inertia;
        assignments = a;
        dists = d;
        let prev = inertia;
        inertia = new_inertia;
        if unchanged || inertia == 0.0 || improvement <= cfg.rel_tol * prev {
            break;
        }
    }
    KMeansResult {
        centers,
        assignments,
        inertia,
        inertia_history: history,
    }
}

/// k-means++ seeding followed by Lloyd iterations.
pub fn kmeans(x: &ArrayView2<f64>, k: usize, cfg: &KMeansConfig) -> Result<KMeansResult> {
    let n = x.nrows();
    if k == 0 {
        return Err(Error::invalid("k must be ≥ 1"));
    }
    if n < k {
        return Err(Error::invalid(format!("{n} points cannot form {k} clusters")));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("non-finite input to k-means"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut best: Option<KMeansResult> = None;
    for _ in 0..cfg.n_init.max(1) {
        let init = kmeans_pp(x, k, &mut rng);
        let r = lloyd(x, init, cfg);
        if best.as_ref().is_none_or(|b| r.inertia < b.inertia) {
            best = Some(r);
        }
    }
    Ok(best.unwrap())
}

// ---------------------------------------------------------------------------

struct Condensed {
    n: usize,
    d: Vec<f64>,
}

impl Condensed {
    fn idx(&self, i: usize, j: usize) -> usize {
        let (i, j) = if i < j { (i, j) } else { (j, i) };
        i * self.n - i * (i + 1) / 2 + (j - i - 1)
    }
    fn get(&self, i: usize, j: usize) -> f64 {
        self.d[self.idx(i, j)]
    }
    fn set(&mut self, i: usize, j: usize, v: f64) {
        let k = self.idx(i, j);
        self.d[k] = v;
    }
}

/// Average-linkage (UPGMA) clustering of the rows of `centers` with Euclidean
/// distance, merged until `k2` clusters remain. Each cluster is represented
/// by its lowest member index and ties go to the lowest index pair. Units are
/// numbered in order of their lowest member.
pub fn agglomerate(centers: &ArrayView2<f64>, k2: usize) -> Result<Vec<usize>> {
    let n = centers.nrows();
    if k2 == 0 || k2 > n {
        return Err(Error::invalid(format!("need 1 ≤ K₂ ≤ K₁, got K₂={k2}, K₁={n}")));
    }
    let mut dm = Condensed {
        n,
        d: vec![0.0; n * n.saturating_sub(1) / 2],
    };
    for i in 0..n {
        for j in i + 1..n {
            dm.set(i, j, sq_dist(centers.row(i), centers.row(j)).sqrt());
        }
    }
    let mut active = vec![true; n];
    let mut size = vec![1usize; n];
    let mut parent: Vec<usize> = (0..n).collect();
    // nn[i]: nearest active j > i and its distance.
    let mut nn: Vec<(usize, f64)> = vec![(usize::MAX, f64::INFINITY); n];
    let refresh = |i: usize, active: &[bool], dm: &Condensed| -> (usize, f64) {
        let mut best = (usize::MAX, f64::INFINITY);
        for j in i + 1..n {
            if active[j] {
                let d = dm.get(i, j);
                if d < best.1 {
                    best = (j, d);
                }
            }
        }
        best
    };
    for (i, slot) in nn.iter_mut().enumerate() {
        *slot = refresh(i, &active, &dm);
    }
    let mut clusters = n;
    while clusters > k2 {
        let mut a = usize::MAX;
        let mut best = f64::INFINITY;
        for i in 0..n {
            if active[i] && nn[i].0 != usize::MAX && nn[i].1 < best {
                best = nn[i].1;
                a = i;
            }
        }
        let b = nn[a].0;
        // Merge b into a (a < b).
        active[b] = false;
        parent[b] = a;
        let (na, nb) = (size[a] as f64, size[b] as f64);
        for k in 0..n {
            if active[k] && k != a {
                let v = (na * dm.get(a, k) + nb * dm.get(b, k)) / (na + nb);
                dm.set(a, k, v);
            }
        }
        size[a] += size[b];
        clusters -= 1;
        for i in 0..n {
            if !active[i] {
                continue;
            }
            if i == a || nn[i].0 == a || nn[i].0 == b {
                nn[i] = refresh(i, &active, &dm);
            } else if i < a {
                let d = dm.get(i, a);
                if d < nn[i].1 || (d == nn[i].1 && a < nn[i].0) {
                    nn[i] = (a, d);
                }
            }
        }
    }
    let root = |mut i: usize| {
        while parent[i] != i {
            i = parent[i];
        }
        i
    };
    let mut unit_of_root = vec![usize::MAX; n];
    let mut next = 0;
    let mut map = Vec::with_capacity(n);
    for i in 0..n {
        let r = root(i);
        if unit_of_root[r] == usize::MAX {
            unit_of_root[r] = next;
            next += 1;
        }
        map.push(unit_of_root[r]);
    }
    Ok(map)
}

// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
pub struct Codebook {
    pub centers: Array2<f64>,
    pub center_to_unit: Vec<usize>,
    pub num_units: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct CodebookIndex {
    num_units: usize,
    center_to_unit: Vec<usize>,
}

impl Codebook {
    pub fn new(centers: Array2<f64>, center_to_unit: Vec<usize>) -> Result<Self> {
        if centers.nrows() != center_to_unit.len() {
            return Err(Error::Shape(format!(
                "{} centers but {} map entries",
                centers.nrows(),
                center_to_unit.len()
            )));
        }
        let num_units = center_to_unit.iter().max().map_or(0, |m| m + 1);
        Ok(Self {
            centers,
            center_to_unit,
            num_units,
        })
    }

    /// Unit of the nearest center (ties to the lowest center index).
    pub fn unit_of(&self, x: ArrayView1<f64>) -> Result<usize> {
        if x.len() != self.centers.ncols() {
            return Err(Error::Shape(format!(
                "feature dim {} vs codebook dim {}",
                x.len(),
                self.centers.ncols()
            )));
        }
        Ok(self.center_to_unit[nearest(x, &self.centers.view()).0])
    }

    /// Writes `centers.stns` and `codebook.json` into `dir`.
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let c = self.centers.mapv(|v| v as f32);
        StnsTensor::from(&c).write(dir.join("centers.stns"))?;
        let idx = CodebookIndex {
            num_units: self.num_units,
            center_to_unit: self.center_to_unit.clone(),
        };
        let p = dir.join("codebook.json");
        fs::write(&p, serde_json::to_vec_pretty(&idx)?).map_err(|e| Error::io(&p, e))
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let t = StnsTensor::read(dir.join("centers.stns"))?;
        if t.shape.len() != 2 {
            return Err(Error::Tensor(format!("centers must be rank 2, got {:?}", t.shape)));
        }
        let centers = Array2::from_shape_vec((t.shape[0], t.shape[1]), t.data.into_iter().map(f64::from).collect())
            .map_err(|e| Error::Shape(e.to_string()))?;
        let p = dir.join("codebook.json");
        let text = fs::read_to_string(&p).map_err(|e| Error::io(&p, e))?;
        let idx: CodebookIndex = serde_json::from_str(&text)?;
        Self::new(centers, idx.center_to_unit)
    }
}

/// k-means to `k1` centers, then agglomeration to `k2` units.
pub fn fit_codebook(x: &ArrayView2<f64>, k1: usize, k2: usize, cfg: &KMeansConfig) -> Result<Codebook> {
    if k2 > k1 {
        return Err(Error::invalid(format!("K₂={k2} exceeds K₁={k1}")));
    }
    let km = kmeans(x, k1, cfg)?;
    let map = agglomerate(&km.centers.view(), k2)?;
    Codebook::new(km.centers, map)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct UnitToken {
    pub start: usize,
    pub end: usize,
    pub unit: usize,
}

pub type UnitSequence = Vec<UnitToken>;

/// One token per segment with the unit of the nearest codebook center.
pub fn assign_units(pooled: &ArrayView2<f64>, seg: &Segmentation, codebook: &Codebook) -> Result<UnitSequence> {
    if pooled.nrows() != seg.num_segments() {
        return Err(Error::Shape(format!(
            "{} pooled rows for {} segments",
            pooled.nrows(),
            seg.num_segments()
        )));
    }
    seg.segments()
        .zip(pooled.rows())
        .map(|((start, end), row)| {
            Ok(UnitToken {
                start,
                end,
                unit: codebook.unit_of(row)?,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClustererConfig {
    pub k1: usize,
    pub k2: usize,
    pub max_iter: usize,
    pub rel_tol: f64,
    pub n_init: usize,
    pub seed: u64,
}

impl Default for ClustererConfig {
    fn default() -> Self {
        Self {
            k1: 16384,
            k2: 4096,
            max_iter: 100,
            rel_tol: 1e-4,
            n_init: 1,
            seed: 0,
        }
    }
}

impl ClustererConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k1 == 0 || self.k2 == 0 || self.k2 > self.k1 {
            return Err(Error::Config(format!(
                "need 1 ≤ k2 ≤ k1, got k1={}, k2={}",
                self.k1, self.k2
            )));
        }
        Ok(())
    }

    pub fn kmeans(&self) -> KMeansConfig {
        KMeansConfig {
            max_iter: self.max_iter,
            rel_tol: self.rel_tol,
            n_init: self.n_init,
            seed: self.seed,
        }
    }
}

/// Segments, codebook and unit sequences for a corpus.
#[derive(Debug, Clone)]
pub struct Discovery {
    pub segmentations: Vec<Segmentation>,
    pub pooled: Vec<Array2<f64>>,
    pub codebook: Codebook,
    pub units: Vec<UnitSequence>,
    /// `K₁`, `K₂` actually used, after clamping to the number of segments.
    pub k1: usize,
    pub k2: usize,
}

/// Segments every utterance, pools segment means, fits a codebook on all
/// pooled rows and assigns units. `K₁` is clamped to the number of pooled
/// segments and `K₂` to `K₁`.
pub fn discover_units(
    features: &[Array2<f64>],
    frame_rate: f64,
    seg_cfg: &crate::segmenter::SegmenterConfig,
    cfg: &ClustererConfig,
) -> Result<Discovery> {
    use crate::segmenter::{pool_segments, segment_features};
    cfg.validate()?;
    if features.is_empty() {
        return Err(Error::invalid("no utterances to cluster"));
    }
    let segmentations = features
        .par_iter()
        .map(|z| segment_features(&z.view(), frame_rate, seg_cfg))
        .collect::<Result<Vec<_>>>()?;
    let pooled = segmentations
        .iter()
        .zip(features)
        .map(|(s, z)| pool_segments(s, &z.view()))
        .collect::<Result<Vec<_>>>()?;
    let all = stack(&pooled)?;
    let k1 = cfg.k1.min(all.nrows());
    let k2 = cfg.k2.min(k1);
    if k1 < cfg.k1 {
        log::warn!("k1 clamped from {} to {} pooled segments", cfg.k1, k1);
    }
    let codebook = fit_codebook(&all.view(), k1, k2, &cfg.kmeans())?;
    let units = segmentations
        .iter()
        .zip(&pooled)
        .map(|(s, p)| assign_units(&p.view(), s, &codebook))
        .collect::<Result<Vec<_>>>()?;
    Ok(Discovery {
        segmentations,
        pooled,
        codebook,
        units,
        k1,
        k2,
    })
}

/// Stacks rows from many matrices.
pub fn stack(parts: &[Array2<f64>]) -> Result<Array2<f64>> {
    let views: Vec<_> = parts.iter().map(|p| p.view()).collect();
    ndarray::concatenate(Axis(0), &views).map_err(|e| Error::Shape(e.to_string()))
}

/// Column means; handy for centering before clustering.
pub fn column_means(x: &ArrayView2<f64>) -> Array1<f64> {
    x.mean_axis(Axis(0)).unwrap_or_else(|| Array1::zeros(x.ncols()))
}
