//! Boundary and unit-quality metrics, speaker information measures, a linear
//! speaker probe and the per-layer sweep.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::clusterer::{discover_units, ClustererConfig, UnitSequence};
use crate::error::{Error, Result};
use crate::io::AlignmentEntry;
use crate::segmenter::{Segmentation, SegmenterConfig};

/// Slack added to the boundary tolerance so that distances that equal the
/// tolerance in exact arithmetic still match after rounding.
pub const TOLERANCE_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    /// Encoder layer whose outputs are segmented, clustered and scored.
    pub layer: usize,
    /// Boundary hit tolerance in seconds.
    pub tolerance: f64,
    pub probe_epochs: usize,
    pub probe_lr: f64,
    pub probe_l2: f64,
    pub probe_test_frac: f64,
    pub seed: u64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            layer: 8,
            tolerance: 0.05,
            probe_epochs: 300,
            probe_lr: 0.5,
            probe_l2: 1e-4,
            probe_test_frac: 0.3,
            seed: 0,
        }
    }
}

// ---------------------------------------------------------------------------
// Boundaries

/// Number of one-to-one matches within `tol`, chosen greedily by increasing
/// distance (ties by reference index, then hypothesis index).
pub fn match_boundaries(reference: &[f64], hyp: &[f64], tol: f64) -> usize {
    let lim = tol + TOLERANCE_SLACK;
    let mut cand = Vec::new();
    for (i, &r) in reference.iter().enumerate() {
        for (j, &h) in hyp.iter().enumerate() {
            let d = (r - h).abs();
            if d <= lim {
                cand.push((d, i, j));
            }
        }
    }
    cand.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut used_r = vec![false; reference.len()];
    let mut used_h = vec![false; hyp.len()];
    let mut hits = 0;
    for (_, i, j) in cand {
        if !used_r[i] && !used_h[j] {
            used_r[i] = true;
            used_h[j] = true;
            hits += 1;
        }
    }
    hits
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundaryScores {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub r_value: f64,
}

impl BoundaryScores {
    pub fn from_counts(hits: usize, n_ref: usize, n_hyp: usize) -> Self {
        let p = if n_hyp == 0 { 0.0 } else { hits as f64 / n_hyp as f64 };
        let r = if n_ref == 0 { 0.0 } else { hits as f64 / n_ref as f64 };
        let os = if n_ref == 0 {
            0.0
        } else {
            n_hyp as f64 / n_ref as f64 - 1.0
        };
        Self::with_over_segmentation(p, r, os)
    }

    /// Scores from precision and recall, with over-segmentation `R/P − 1`.
    pub fn from_pr(p: f64, r: f64) -> Self {
        let os = if p > 0.0 { r / p - 1.0 } else { 0.0 };
        Self::with_over_segmentation(p, r, os)
    }

    fn with_over_segmentation(p: f64, r: f64, os: f64) -> Self {
        let f1 = if p + r > 0.0 { 2.0 * p * r / (p + r) } else { 0.0 };
        let r1 = ((1.0 - r).powi(2) + os * os).sqrt();
        let r2 = (-os + r - 1.0) / std::f64::consts::SQRT_2;
        Self {
            precision: p,
            recall: r,
            f1,
            r_value: 1.0 - (r1.abs() + r2.abs()) / 2.0,
        }
    }
}

/// Corpus-level boundary counts, summed before computing scores.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BoundaryCounts {
    pub hits: usize,
    pub n_ref: usize,
    pub n_hyp: usize,
}

impl BoundaryCounts {
    pub fn add(&mut self, other: BoundaryCounts) {
        self.hits += other.hits;
        self.n_ref += other.n_ref;
        self.n_hyp += other.n_hyp;
    }

    pub fn scores(&self) -> BoundaryScores {
        BoundaryScores::from_counts(self.hits, self.n_ref, self.n_hyp)
    }
}

/// Distinct syllable start/end times strictly inside `(0, duration)`.
pub fn reference_boundaries(alignments: &[AlignmentEntry], duration: f64) -> Vec<f64> {
    let eps = 1e-6;
    let mut b: Vec<f64> = alignments
        .iter()
        .flat_map(|a| [a.start, a.end])
        .filter(|&t| t > eps && t < duration - eps)
        .collect();
    b.sort_by(f64::total_cmp);
    b.dedup_by(|a, b| (*a - *b).abs() < eps);
    b
}

pub fn utterance_boundary_counts(
    alignments: &[AlignmentEntry],
    duration: f64,
    seg: &Segmentation,
    frame_rate: f64,
    tol: f64,
) -> BoundaryCounts {
    let reference = reference_boundaries(alignments, duration);
    let hyp: Vec<f64> = seg.interior().iter().map(|&b| b as f64 / frame_rate).collect();
    BoundaryCounts {
        hits: match_boundaries(&reference, &hyp, tol),
        n_ref: reference.len(),
        n_hyp: hyp.len(),
    }
}

// ---------------------------------------------------------------------------
// Segment matching

/// Maximum-weight assignment on a rectangular matrix (Hungarian method with
/// potentials). Returns, for each row, its column if assigned.
pub fn max_weight_matching(w: &ArrayView2<f64>) -> Vec<Option<usize>> {
    let (rows, cols) = w.dim();
    if rows == 0 || cols == 0 {
        return vec![None; rows];
    }
    let transposed = rows > cols;
    let m = if transposed { w.t().to_owned() } else { w.to_owned() };
    let (n, k) = m.dim();
    let maxw = m.iter().copied().fold(0.0f64, f64::max);
    // Minimize maxw − w over an n × k matrix, n ≤ k; 1-based arrays.
    let cost = |i: usize, j: usize| maxw - m[[i - 1, j - 1]];
    let inf = f64::INFINITY;
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; k + 1];
    let mut p = vec![0usize; k + 1];
    let mut way = vec![0usize; k + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![inf; k + 1];
        let mut used = vec![false; k + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = inf;
            let mut j1 = 0;
            for j in 1..=k {
                if !used[j] {
                    let cur = cost(i0, j) - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=k {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut row_of_col = vec![None; k];
    for j in 1..=k {
        if p[j] != 0 {
            row_of_col[j - 1] = Some(p[j] - 1);
        }
    }
    if transposed {
        // Rows of `m` are original columns.
        let mut out = vec![None; rows];
        for (j, r) in row_of_col.iter().enumerate() {
            if let Some(c) = r {
                out[j] = Some(*c);
            }
        }
        out
    } else {
        let mut out = vec![None; rows];
        for (j, r) in row_of_col.iter().enumerate() {
            if let Some(i) = r {
                out[*i] = Some(j);
            }
        }
        out
    }
}

pub fn interval_iou(a: (f64, f64), b: (f64, f64)) -> f64 {
    let inter = (a.1.min(b.1) - a.0.max(b.0)).max(0.0);
    let union = (a.1 - a.0) + (b.1 - b.0) - inter;
    if union <= 0.0 {
        0.0
    } else {
        inter / union
    }
}

/// `(label, unit)` pairs from the maximum-weight IoU matching of reference
/// syllables and hypothesis tokens; pairs with zero overlap are dropped.
pub fn iou_match(reference: &[AlignmentEntry], tokens: &UnitSequence, frame_rate: f64) -> Vec<(String, usize)> {
    let w = Array2::from_shape_fn((reference.len(), tokens.len()), |(i, j)| {
        let t = &tokens[j];
        interval_iou(
            (reference[i].start, reference[i].end),
            (t.start as f64 / frame_rate, t.end as f64 / frame_rate),
        )
    });
    max_weight_matching(&w.view())
        .into_iter()
        .enumerate()
        .filter_map(|(i, j)| {
            j.filter(|&j| w[[i, j]] > 0.0)
                .map(|j| (reference[i].label.clone(), tokens[j].unit))
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Unit quality

/// Co-occurrence counts of reference labels and discovered units.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct JointCounts {
    pub counts: BTreeMap<(String, usize), u64>,
}

impl JointCounts {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, label: &str, unit: usize) {
        *self.counts.entry((label.to_string(), unit)).or_insert(0) += 1;
    }

    pub fn merge(&mut self, other: &JointCounts) {
        for (k, &v) in &other.counts {
            *self.counts.entry(k.clone()).or_insert(0) += v;
        }
    }

    pub fn total(&self) -> u64 {
        self.counts.values().sum()
    }

    pub fn from_pairs<'a>(pairs: impl IntoIterator<Item = &'a (String, usize)>) -> Self {
        let mut j = Self::new();
        for (l, u) in pairs {
            j.add(l, *u);
        }
        j
    }

    /// Dense `labels × units` matrix with row and column keys.
    pub fn to_matrix(&self) -> (Vec<String>, Vec<usize>, Array2<f64>) {
        let labels: Vec<String> = self
            .counts
            .keys()
            .map(|k| k.0.clone())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        let units: Vec<usize> = self
            .counts
            .keys()
            .map(|k| k.1)
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        let li: BTreeMap<&String, usize> = labels.iter().enumerate().map(|(i, l)| (l, i)).collect();
        let ui: BTreeMap<usize, usize> = units.iter().enumerate().map(|(i, &u)| (u, i)).collect();
        let mut m = Array2::zeros((labels.len(), units.len()));
        for ((l, u), &c) in &self.counts {
            m[[li[l], ui[u]]] += c as f64;
        }
        (labels, units, m)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UnitQualityScores {
    pub syllable_purity: f64,
    pub cluster_purity: f64,
    /// Nats.
    pub mutual_info: f64,
}

/// Purities and mutual information of a nonnegative `labels × units` joint
/// (counts or probabilities).
pub fn unit_quality_from_matrix(joint: &ArrayView2<f64>) -> Result<UnitQualityScores> {
    let total: f64 = joint.sum();
    if !(total > 0.0) || joint.iter().any(|&v| v < 0.0) {
        return Err(Error::invalid("joint counts must be nonnegative with a positive total"));
    }
    let p = joint.mapv(|v| v / total);
    let ps = p.sum_axis(Axis(1));
    let pu = p.sum_axis(Axis(0));
    let syllable_purity = p.columns().into_iter().map(|c| c.fold(0.0f64, |a, &b| a.max(b))).sum();
    let cluster_purity = p.rows().into_iter().map(|r| r.fold(0.0f64, |a, &b| a.max(b))).sum();
    let mut mi = 0.0;
    for ((i, j), &v) in p.indexed_iter() {
        if v > 0.0 {
            mi += v * (v / (ps[i] * pu[j])).ln();
        }
    }
    Ok(UnitQualityScores {
        syllable_purity,
        cluster_purity,
        mutual_info: mi.max(0.0),
    })
}

pub fn unit_quality(j: &JointCounts) -> Result<UnitQualityScores> {
    if j.total() == 0 {
        return Err(Error::invalid("empty joint counts"));
    }
    unit_quality_from_matrix(&j.to_matrix().2.view())
}

fn entropy(counts: impl Iterator<Item = f64>) -> f64 {
    let c: Vec<f64> = counts.collect();
    let n: f64 = c.iter().sum();
    c.iter().filter(|&&v| v > 0.0).map(|&v| -(v / n) * (v / n).ln()).sum()
}

/// `I(X;Y) / H(X)` with plug-in estimates.
pub fn speaker_nmi(x: &[usize], y: &[usize]) -> Result<f64> {
    if x.len() != y.len() || x.is_empty() {
        return Err(Error::invalid(
            "speaker and category lists must be nonempty and equal length",
        ));
    }
    let mut jx: BTreeMap<usize, f64> = BTreeMap::new();
    let mut jy: BTreeMap<usize, f64> = BTreeMap::new();
    let mut jxy: BTreeMap<(usize, usize), f64> = BTreeMap::new();
    for (&a, &b) in x.iter().zip(y) {
        *jx.entry(a).or_default() += 1.0;
        *jy.entry(b).or_default() += 1.0;
        *jxy.entry((a, b)).or_default() += 1.0;
    }
    if jx.len() < 2 {
        return Err(Error::invalid("speaker entropy is zero (single speaker)"));
    }
    let hx = entropy(jx.values().copied());
    let hy = entropy(jy.values().copied());
    let hxy = entropy(jxy.values().copied());
    Ok(((hx + hy - hxy) / hx).clamp(0.0, 1.0))
}

// ---------------------------------------------------------------------------
// Speaker probe

/// Stratified split: roughly `test_frac` of each class goes to the test side
/// (at least one item per class when the class has two or more).
pub fn stratified_split(labels: &[usize], test_frac: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut by_class: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, &l) in labels.iter().enumerate() {
        by_class.entry(l).or_default().push(i);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for (_, mut idx) in by_class {
        idx.shuffle(&mut rng);
        let n_test = if idx.len() >= 2 {
            ((idx.len() as f64 * test_frac).round() as usize).clamp(1, idx.len() - 1)
        } else {
            0
        };
        test.extend_from_slice(&idx[..n_test]);
        train.extend_from_slice(&idx[n_test..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    (train, test)
}

#[derive(Debug, Clone)]
pub struct LinearProbe {
    mean: Array1<f64>,
    std: Array1<f64>,
    w: Array2<f64>,
    b: Array1<f64>,
    classes: Vec<usize>,
}

impl LinearProbe {
    /// Multinomial logistic regression on standardized inputs, full-batch
    /// gradient descent from zero weights.
    pub fn fit(x: &ArrayView2<f64>, y: &[usize], epochs: usize, lr: f64, l2: f64) -> Result<Self> {
        if x.nrows() != y.len() || x.nrows() == 0 {
            return Err(Error::invalid("probe needs one label per row"));
        }
        let classes: Vec<usize> = y.iter().copied().collect::<BTreeSet<_>>().into_iter().collect();
        if classes.len() < 2 {
            return Err(Error::invalid("probe needs at least two classes in the training split"));
        }
        let idx: BTreeMap<usize, usize> = classes.iter().enumerate().map(|(i, &c)| (c, i)).collect();
        let n = x.nrows() as f64;
        let mean = x.mean_axis(Axis(0)).unwrap();
        let std = x.std_axis(Axis(0), 0.0).mapv(|s| s.max(1e-8));
        let xs = (x - &mean) / &std;
        let k = classes.len();
        let mut onehot = Array2::<f64>::zeros((x.nrows(), k));
        for (i, c) in y.iter().enumerate() {
            onehot[[i, idx[c]]] = 1.0;
        }
        let mut w = Array2::<f64>::zeros((x.ncols(), k));
        let mut b = Array1::<f64>::zeros(k);
        for _ in 0..epochs {
            let logits = xs.dot(&w) + &b;
            let p = crate::neural::layers::softmax_rows(logits);
            let d = (p - &onehot) / n;
            let gw = xs.t().dot(&d) + &w * l2;
            let gb = d.sum_axis(Axis(0));
            w.scaled_add(-lr, &gw);
            b.scaled_add(-lr, &gb);
        }
        Ok(Self {
            mean,
            std,
            w,
            b,
            classes,
        })
    }

    pub fn predict(&self, x: &ArrayView2<f64>) -> Vec<usize> {
        let logits = ((x - &self.mean) / &self.std).dot(&self.w) + &self.b;
        logits
            .rows()
            .into_iter()
            .map(|r| {
                let mut best = 0;
                for (j, &v) in r.iter().enumerate() {
                    if v > r[best] {
                        best = j;
                    }
                }
                self.classes[best]
            })
            .collect()
    }
}

/// Test accuracy of a linear speaker classifier.
pub fn speaker_probe(
    train_x: &ArrayView2<f64>,
    train_y: &[usize],
    test_x: &ArrayView2<f64>,
    test_y: &[usize],
    cfg: &EvalConfig,
) -> Result<f64> {
    if test_x.nrows() == 0 || test_x.nrows() != test_y.len() {
        return Err(Error::invalid("degenerate probe split: empty or mislabeled test set"));
    }
    if train_x.ncols() != test_x.ncols() {
        return Err(Error::Shape("train and test feature dims differ".into()));
    }
    let probe = LinearProbe::fit(train_x, train_y, cfg.probe_epochs, cfg.probe_lr, cfg.probe_l2)?;
    let pred = probe.predict(test_x);
    Ok(pred.iter().zip(test_y).filter(|(a, b)| a == b).count() as f64 / test_y.len() as f64)
}

/// Probe accuracy on utterance-level features with a stratified split.
pub fn speaker_probe_split(x: &ArrayView2<f64>, speakers: &[usize], cfg: &EvalConfig) -> Result<f64> {
    let (tr, te) = stratified_split(speakers, cfg.probe_test_frac, cfg.seed);
    let pick = |ids: &[usize]| x.select(Axis(0), ids);
    let ys = |ids: &[usize]| ids.iter().map(|&i| speakers[i]).collect::<Vec<_>>();
    speaker_probe(&pick(&tr).view(), &ys(&tr), &pick(&te).view(), &ys(&te), cfg)
}

// ---------------------------------------------------------------------------
// Corpus evaluation and layer sweep

/// Reference annotation of one utterance.
#[derive(Debug, Clone, PartialEq)]
pub struct Reference {
    pub alignments: Vec<AlignmentEntry>,
    pub duration: f64,
}

/// The seven reported metrics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorpusScores {
    pub boundary: BoundaryScores,
    pub units: UnitQualityScores,
}

impl CorpusScores {
    pub const CSV_HEADER: &'static str = "precision,recall,f1,r_value,syllable_purity,cluster_purity,mutual_info_nats";

    pub fn csv_fields(&self) -> String {
        let b = &self.boundary;
        let u = &self.units;
        format!(
            "{},{},{},{},{},{},{}",
            b.precision, b.recall, b.f1, b.r_value, u.syllable_purity, u.cluster_purity, u.mutual_info
        )
    }
}

pub fn evaluate_boundaries(
    refs: &[Reference],
    segs: &[Segmentation],
    frame_rate: f64,
    tol: f64,
) -> Result<BoundaryCounts> {
    if refs.len() != segs.len() {
        return Err(Error::invalid(format!(
            "{} references for {} segmentations",
            refs.len(),
            segs.len()
        )));
    }
    let mut c = BoundaryCounts::default();
    for (r, s) in refs.iter().zip(segs) {
        c.add(utterance_boundary_counts(&r.alignments, r.duration, s, frame_rate, tol));
    }
    Ok(c)
}

pub fn evaluate_units(refs: &[Reference], units: &[UnitSequence], frame_rate: f64) -> Result<JointCounts> {
    if refs.len() != units.len() {
        return Err(Error::invalid(format!(
            "{} references for {} unit sequences",
            refs.len(),
            units.len()
        )));
    }
    let mut j = JointCounts::new();
    for (r, u) in refs.iter().zip(units) {
        for (l, unit) in iou_match(&r.alignments, u, frame_rate) {
            j.add(&l, unit);
        }
    }
    Ok(j)
}

pub fn evaluate_corpus(
    refs: &[Reference],
    segs: &[Segmentation],
    units: &[UnitSequence],
    frame_rate: f64,
    cfg: &EvalConfig,
) -> Result<CorpusScores> {
    let b = evaluate_boundaries(refs, segs, frame_rate, cfg.tolerance)?;
    let j = evaluate_units(refs, units, frame_rate)?;
    Ok(CorpusScores {
        boundary: b.scores(),
        units: unit_quality(&j)?,
    })
}

/// Per-utterance frame features for any encoder layer.
pub trait LayerFeatures: Sync {
    fn num_utterances(&self) -> usize;
    fn features(&self, utterance: usize, layer: usize) -> Result<Array2<f64>>;
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LayerScores {
    pub layer: usize,
    pub scores: CorpusScores,
}

/// Segment, cluster and score every requested layer.
pub fn layer_sweep(
    src: &dyn LayerFeatures,
    layers: &[usize],
    refs: &[Reference],
    frame_rate: f64,
    seg_cfg: &SegmenterConfig,
    clu_cfg: &ClustererConfig,
    eval_cfg: &EvalConfig,
) -> Result<Vec<LayerScores>> {
    if refs.len() != src.num_utterances() {
        return Err(Error::invalid(format!(
            "{} references for {} utterances",
            refs.len(),
            src.num_utterances()
        )));
    }
    layers
        .iter()
        .map(|&layer| {
            let feats = (0..src.num_utterances())
                .map(|u| src.features(u, layer))
                .collect::<Result<Vec<_>>>()?;
            let d = discover_units(&feats, frame_rate, seg_cfg, clu_cfg)?;
            let scores = evaluate_corpus(refs, &d.segmentations, &d.units, frame_rate, eval_cfg)?;
            Ok(LayerScores { layer, scores })
        })
        .collect()
}

pub fn write_sweep_csv<W: Write>(w: &mut W, rows: &[LayerScores]) -> std::io::Result<()> {
    writeln!(w, "layer,{}", CorpusScores::CSV_HEADER)?;
    for r in rows {
        writeln!(w, "{},{}", r.layer, r.scores.csv_fields())?;
    }
    Ok(())
}
