//! Boundary discovery on frame features: self-similarity, normalized-cut
//! dynamic programming, greedy merging of similar neighbours and mean pooling.

use ndarray::{s, Array1, Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `Z·Zᵀ` shifted by `shift = −min(Z·Zᵀ)` so every weight is nonnegative.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityMatrix {
    pub data: Array2<f64>,
    pub shift: f64,
}

impl SimilarityMatrix {
    pub fn len(&self) -> usize {
        self.data.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.data.nrows() == 0
    }
}

pub fn self_similarity(z: &ArrayView2<f64>) -> SimilarityMatrix {
    let mut a = z.dot(&z.t());
    let min = a.iter().copied().fold(f64::INFINITY, f64::min);
    let shift = if min.is_finite() { -min } else { 0.0 };
    a += shift;
    SimilarityMatrix { data: a, shift }
}

/// Strictly increasing frame boundaries from 0 to `T`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Segmentation {
    pub boundaries: Vec<usize>,
}

impl Segmentation {
    pub fn new(boundaries: Vec<usize>) -> Result<Self> {
        if boundaries.len() < 2 || boundaries[0] != 0 {
            return Err(Error::invalid(
                "segmentation needs boundaries starting at 0 and at least one segment",
            ));
        }
        if boundaries.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::invalid(format!(
                "boundaries not strictly increasing: {boundaries:?}"
            )));
        }
        Ok(Self { boundaries })
    }

    pub fn single(t: usize) -> Self {
        Self { boundaries: vec![0, t] }
    }

    pub fn num_segments(&self) -> usize {
        self.boundaries.len() - 1
    }

    pub fn num_frames(&self) -> usize {
        *self.boundaries.last().unwrap()
    }

    pub fn segments(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.boundaries.windows(2).map(|w| (w[0], w[1]))
    }

    /// Boundaries strictly inside the utterance (excluding 0 and `T`).
    pub fn interior(&self) -> &[usize] {
        &self.boundaries[1..self.boundaries.len() - 1]
    }

    pub fn to_seconds(&self, frame_rate: f64) -> Vec<f64> {
        boundaries_to_seconds(&self.boundaries, frame_rate)
    }
}

pub fn boundaries_to_seconds(frames: &[usize], frame_rate: f64) -> Vec<f64> {
    frames.iter().map(|&b| b as f64 / frame_rate).collect()
}

/// `max(1, round_half_up(duration / second_per_syllable))`.
pub fn num_segments(duration: f64, second_per_syllable: f64) -> usize {
    ((duration / second_per_syllable + 0.5).floor() as usize).max(1)
}

/// Constant-time block sums over a square matrix.
pub struct PrefixSums {
    p: Array2<f64>,
    t: usize,
}

impl PrefixSums {
    pub fn new(w: &Array2<f64>) -> Self {
        let t = w.nrows();
        let mut p = Array2::<f64>::zeros((t + 1, t + 1));
        for i in 0..t {
            let mut row = 0.0;
            for j in 0..t {
                row += w[[i, j]];
                p[[i + 1, j + 1]] = p[[i, j + 1]] + row;
            }
        }
        Self { p, t }
    }

    /// Sum of rows `r0..r1`, columns `c0..c1`.
    pub fn block(&self, r0: usize, r1: usize, c0: usize, c1: usize) -> f64 {
        self.p[[r1, c1]] - self.p[[r0, c1]] - self.p[[r1, c0]] + self.p[[r0, c0]]
    }

    /// `cut/vol` of the segment `[s, e)`; zero when the volume vanishes.
    pub fn ncut_cost(&self, s: usize, e: usize) -> f64 {
        let vol = self.block(s, e, 0, self.t);
        if vol <= 0.0 {
            return 0.0;
        }
        let within = self.block(s, e, s, e);
        (vol - within) / vol
    }
}

/// Relative margin below which two candidate costs count as tied, so that
/// rounding in the prefix sums cannot override the earliest-boundary rule.
pub const TIE_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct MinCutResult {
    pub segmentation: Segmentation,
    /// Sum of per-segment `cut/vol`.
    pub objective: f64,
}

/// Exactly-`S` contiguous partition minimizing `Σ cut/vol` in `O(S·T²)`.
/// Among optimal partitions the lexicographically earliest boundary vector
/// wins.
pub fn mincut_segment(a: &SimilarityMatrix, s: usize) -> Result<MinCutResult> {
    let t = a.len();
    if s == 0 || s > t {
        return Err(Error::invalid(format!("need 1 ≤ S ≤ T, got S={s}, T={t}")));
    }
    let ps = PrefixSums::new(&a.data);
    // g[k][i]: best cost of splitting [i, T) into k segments; arg[k][i]: the
    // smallest end of the first segment achieving it.
    let inf = f64::INFINITY;
    let mut g = vec![vec![inf; t + 1]; s + 1];
    let mut arg = vec![vec![usize::MAX; t + 1]; s + 1];
    for i in 0..t {
        g[1][i] = ps.ncut_cost(i, t);
        arg[1][i] = t;
    }
    for k in 2..=s {
        // [i, T) must hold k nonempty segments.
        for i in 0..=t - k {
            let mut best = inf;
            let mut best_e = usize::MAX;
            for e in i + 1..=t - (k - 1) {
                let v = ps.ncut_cost(i, e) + g[k - 1][e];
                if best_e == usize::MAX || v < best - TIE_TOLERANCE * best.abs().max(1.0) {
                    best = v;
                    best_e = e;
                }
            }
            g[k][i] = best;
            arg[k][i] = best_e;
        }
    }
    let mut boundaries = Vec::with_capacity(s + 1);
    boundaries.push(0);
    let mut i = 0;
    for k in (1..=s).rev() {
        i = arg[k][i];
        boundaries.push(i);
    }
    Ok(MinCutResult {
        segmentation: Segmentation { boundaries },
        objective: g[s][0],
    })
}

fn segment_sums(z: &ArrayView2<f64>, seg: &Segmentation) -> Vec<Array1<f64>> {
    seg.segments()
        .map(|(a, b)| z.slice(s![a..b, ..]).sum_axis(Axis(0)))
        .collect()
}

fn cosine(a: &Array1<f64>, b: &Array1<f64>) -> f64 {
    let na = a.dot(a).sqrt();
    let nb = b.dot(b).sqrt();
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    a.dot(b) / (na * nb)
}

/// Repeatedly merges the adjacent pair whose mean features have the highest
/// cosine similarity, while that similarity exceeds `threshold`. Ties go to
/// the earliest pair.
pub fn merge_adjacent(seg: &Segmentation, z: &ArrayView2<f64>, threshold: f64) -> Result<Segmentation> {
    if seg.num_frames() != z.nrows() {
        return Err(Error::Shape(format!(
            "segmentation covers {} frames, features have {}",
            seg.num_frames(),
            z.nrows()
        )));
    }
    let mut bounds = seg.boundaries.clone();
    // Cosine of means equals cosine of sums.
    let mut sums = segment_sums(z, seg);
    while sums.len() > 1 {
        let mut best = f64::NEG_INFINITY;
        let mut at = 0;
        for k in 0..sums.len() - 1 {
            let c = cosine(&sums[k], &sums[k + 1]);
            if c > best {
                best = c;
                at = k;
            }
        }
        if best <= threshold {
            break;
        }
        let right = sums.remove(at + 1);
        sums[at] += &right;
        bounds.remove(at + 1);
    }
    Segmentation::new(bounds)
}

/// Row `k` is the mean of the frames in segment `k`.
pub fn pool_segments(seg: &Segmentation, z: &ArrayView2<f64>) -> Result<Array2<f64>> {
    if seg.num_frames() != z.nrows() {
        return Err(Error::Shape(format!(
            "segmentation covers {} frames, features have {}",
            seg.num_frames(),
            z.nrows()
        )));
    }
    let mut out = Array2::<f64>::zeros((seg.num_segments(), z.ncols()));
    for (k, (a, b)) in seg.segments().enumerate() {
        let m = z.slice(s![a..b, ..]).sum_axis(Axis(0)) / (b - a) as f64;
        out.row_mut(k).assign(&m);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SegmenterConfig {
    pub second_per_syllable: f64,
    pub merge_threshold: f64,
}

impl Default for SegmenterConfig {
    fn default() -> Self {
        Self {
            second_per_syllable: 0.2,
            merge_threshold: 0.3,
        }
    }
}

impl SegmenterConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.second_per_syllable > 0.0) {
            return Err(Error::Config("second_per_syllable must be > 0".into()));
        }
        Ok(())
    }
}

/// Min-cut into `num_segments(T / frame_rate)` segments (clamped to `T`),
/// then merging.
pub fn segment_features(z: &ArrayView2<f64>, frame_rate: f64, cfg: &SegmenterConfig) -> Result<Segmentation> {
    let t = z.nrows();
    if t == 0 {
        return Err(Error::Shape("cannot segment zero frames".into()));
    }
    let s = num_segments(t as f64 / frame_rate, cfg.second_per_syllable).min(t);
    let a = self_similarity(z);
    let cut = mincut_segment(&a, s)?;
    merge_adjacent(&cut.segmentation, z, cfg.merge_threshold)
}
