//! Synthetic data: vowel-like voices, syllabic utterances with reference
//! alignments, and frame-feature corpora with planted segment structure.

use std::f64::consts::PI;

use ndarray::{Array1, Array2};
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::io::{AlignmentEntry, Waveform};

/// Source-filter voice description.
#[derive(Debug, Clone, PartialEq)]
pub struct VoiceSpec {
    pub f0: f64,
    /// (center Hz, bandwidth Hz) resonances, applied in cascade.
    pub formants: Vec<(f64, f64)>,
    /// Relative vibrato depth (0.03 = ±3 %).
    pub vibrato_depth: f64,
    pub vibrato_rate: f64,
    pub amplitude: f64,
}

impl VoiceSpec {
    /// An /a/-like vowel at the given f0.
    pub fn vowel(f0: f64) -> Self {
        Self {
            f0,
            formants: vec![(730.0, 90.0), (1090.0, 110.0), (2440.0, 160.0)],
            vibrato_depth: 0.03,
            vibrato_rate: 5.0,
            amplitude: 0.3,
        }
    }
}

pub const VOWELS: [(&str, [f64; 3]); 5] = [
    ("a", [730.0, 1090.0, 2440.0]),
    ("i", [270.0, 2290.0, 3010.0]),
    ("u", [300.0, 870.0, 2240.0]),
    ("e", [530.0, 1840.0, 2480.0]),
    ("o", [570.0, 840.0, 2410.0]),
];

const ONSETS: [&str; 4] = ["t", "k", "s", "p"];

/// Two-pole resonator with unit gain at its center frequency.
#[derive(Clone, Copy)]
struct Resonator {
    g: f64,
    a1: f64,
    a2: f64,
}

impl Resonator {
    fn new(freq: f64, bw: f64, sr: f64) -> Self {
        let r = (-PI * bw / sr).exp();
        let th = 2.0 * PI * freq / sr;
        let g = (1.0 - r) * ((1.0 - r * (2.0 * th).cos()).powi(2) + (r * (2.0 * th).sin()).powi(2)).sqrt();
        Self {
            g,
            a1: -2.0 * r * th.cos(),
            a2: r * r,
        }
    }
}

fn harmonic_sample(phase: f64, f0: f64, sr: f64) -> f64 {
    let n_harm = ((0.45 * sr) / f0).floor().max(1.0) as usize;
    (1..=n_harm).map(|k| (k as f64 * phase).sin() / k as f64).sum()
}

/// A sustained voice with vibrato, 1 % aspiration noise and the given
/// formant envelope.
pub fn voice(spec: &VoiceSpec, secs: f64, sample_rate: u32, seed: u64) -> Waveform {
    let sr = sample_rate as f64;
    let n = (secs * sr).round() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, 0.01).unwrap();
    let vib_phase = rng.random_range(0.0..2.0 * PI);
    let mut phase = rng.random_range(0.0..2.0 * PI);
    let mut src = Vec::with_capacity(n);
    for i in 0..n {
        let t = i as f64 / sr;
        let f0 = spec.f0 * (1.0 + spec.vibrato_depth * (2.0 * PI * spec.vibrato_rate * t + vib_phase).sin());
        phase += 2.0 * PI * f0 / sr;
        src.push(harmonic_sample(phase, f0, sr) + noise.sample(&mut rng));
    }
    let res: Vec<Resonator> = spec.formants.iter().map(|&(f, bw)| Resonator::new(f, bw, sr)).collect();
    let shaped = cascade(&src, |_| &res[..]);
    normalize(shaped, spec.amplitude, sample_rate)
}

fn cascade<'a>(src: &[f64], coeffs_at: impl Fn(usize) -> &'a [Resonator]) -> Vec<f64> {
    let mut state = [(0.0f64, 0.0f64); 8];
    src.iter()
        .enumerate()
        .map(|(i, &x)| {
            let mut v = x;
            for (k, r) in coeffs_at(i).iter().enumerate() {
                let (y1, y2) = state[k];
                let y = r.g * v - r.a1 * y1 - r.a2 * y2;
                state[k] = (y, y1);
                v = y;
            }
            v
        })
        .collect()
}

fn normalize(x: Vec<f64>, peak: f64, sample_rate: u32) -> Waveform {
    let m = x.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let scale = if m > 0.0 { peak / m } else { 0.0 };
    Waveform {
        samples: x.into_iter().map(|v| (v * scale) as f32).collect(),
        sample_rate,
    }
}

/// A sequence of consonant-vowel syllables with reference alignments.
///
/// Each syllable is a short noise onset followed by a voiced nucleus whose
/// formants come from [`VOWELS`]; 50 ms of silence pads both ends.
pub fn syllabic_utterance(f0: f64, secs: f64, sample_rate: u32, seed: u64) -> (Waveform, Vec<AlignmentEntry>) {
    let sr = sample_rate as f64;
    let n = (secs * sr).round() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let aspiration = Normal::new(0.0, 0.01).unwrap();
    let burst = Normal::new(0.0, 0.15).unwrap();

    let edge = 0.05;
    let mut plan = Vec::new();
    let mut t = edge;
    let mut last_vowel = usize::MAX;
    while t < secs - edge {
        let onset = rng.random_range(0.03..0.06);
        let nucleus = rng.random_range(0.10..0.25);
        if t + onset + nucleus > secs - edge {
            break;
        }
        let mut v = rng.random_range(0..VOWELS.len());
        if v == last_vowel {
            v = (v + 1) % VOWELS.len();
        }
        last_vowel = v;
        let c = *ONSETS.choose(&mut rng).unwrap();
        plan.push((t, t + onset, t + onset + nucleus, c, v));
        t += onset + nucleus;
    }

    let resonators: Vec<Vec<Resonator>> = VOWELS
        .iter()
        .map(|(_, f)| {
            f.iter()
                .zip([80.0, 100.0, 150.0])
                .map(|(&fc, bw)| Resonator::new(fc, bw, sr))
                .collect()
        })
        .collect();
    let silent: Vec<Resonator> = Vec::new();
    let mut which: Vec<Option<usize>> = vec![None; n];
    let mut src = vec![0.0f64; n];
    let mut phase = 0.0;
    for &(s, on_end, e, _, v) in &plan {
        let (i0, i1, i2) = ((s * sr) as usize, (on_end * sr) as usize, ((e * sr) as usize).min(n));
        for x in src.iter_mut().take(i1).skip(i0) {
            *x = burst.sample(&mut rng);
        }
        for (i, slot) in which.iter_mut().enumerate().take(i2).skip(i1) {
            let tt = i as f64 / sr;
            let f = f0 * (1.0 - 0.1 * tt / secs) * (1.0 + 0.02 * (2.0 * PI * 5.0 * tt).sin());
            phase += 2.0 * PI * f / sr;
            // Raised-cosine amplitude over the nucleus.
            let pos = (i - i1) as f64 / (i2 - i1) as f64;
            let env = 0.5 - 0.5 * (2.0 * PI * pos).cos();
            src[i] = (0.3 + 0.7 * env) * harmonic_sample(phase, f, sr) + aspiration.sample(&mut rng);
            *slot = Some(v);
        }
    }
    let shaped = cascade(&src, |i| match which[i] {
        Some(v) => &resonators[v][..],
        None => &silent[..],
    });
    let alignments = plan
        .iter()
        .map(|&(s, _, e, c, v)| AlignmentEntry {
            start: s,
            end: e,
            label: format!("{c}{}", VOWELS[v].0),
        })
        .collect();
    (normalize(shaped, 0.5, sample_rate), alignments)
}

// ---------------------------------------------------------------------------
// Frame-feature corpora

/// Frame features built from piecewise-constant prototype vectors plus noise.
#[derive(Debug, Clone)]
pub struct PlantedUtterance {
    pub features: Array2<f64>,
    /// Segment boundaries in frames, starting at 0 and ending at `T`.
    pub boundaries: Vec<usize>,
    /// Prototype index per segment.
    pub labels: Vec<usize>,
}

impl PlantedUtterance {
    pub fn alignments(&self, frame_rate: f64) -> Vec<AlignmentEntry> {
        self.boundaries
            .windows(2)
            .zip(&self.labels)
            .map(|(b, &l)| AlignmentEntry {
                start: b[0] as f64 / frame_rate,
                end: b[1] as f64 / frame_rate,
                label: format!("p{l}"),
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlantedSpec {
    pub dim: usize,
    pub min_len: usize,
    pub max_len: usize,
    pub noise: f64,
    pub min_segments: usize,
    pub max_segments: usize,
}

impl Default for PlantedSpec {
    fn default() -> Self {
        Self {
            dim: 32,
            min_len: 10,
            max_len: 30,
            noise: 0.1,
            min_segments: 4,
            max_segments: 10,
        }
    }
}

/// `n` unit-norm prototype rows. With `orthonormal` (requires `n ≤ dim`) the
/// rows are Gram-Schmidt orthogonalized.
pub fn prototypes(n: usize, dim: usize, orthonormal: bool, rng: &mut impl Rng) -> Array2<f64> {
    let normal = Normal::new(0.0, 1.0).unwrap();
    let mut p = Array2::<f64>::zeros((n, dim));
    for i in 0..n {
        let mut v: Array1<f64> = (0..dim).map(|_| normal.sample(rng)).collect();
        if orthonormal {
            assert!(n <= dim, "cannot orthonormalize {n} prototypes in {dim} dims");
            for j in 0..i {
                let pj = p.row(j);
                let d = v.dot(&pj);
                v.scaled_add(-d, &pj);
            }
        }
        let norm = v.dot(&v).sqrt();
        p.row_mut(i).assign(&(v / norm));
    }
    p
}

/// Draws a segment plan (lengths and non-repeating prototype labels) and
/// renders it with i.i.d. Gaussian noise.
pub fn planted_utterance(protos: &Array2<f64>, spec: &PlantedSpec, rng: &mut impl Rng) -> PlantedUtterance {
    let n_seg = rng.random_range(spec.min_segments..=spec.max_segments);
    let mut boundaries = vec![0usize];
    let mut labels = Vec::with_capacity(n_seg);
    for _ in 0..n_seg {
        let len = rng.random_range(spec.min_len..=spec.max_len);
        boundaries.push(boundaries.last().unwrap() + len);
        let mut l = rng.random_range(0..protos.nrows());
        if protos.nrows() > 1 {
            while labels.last() == Some(&l) {
                l = rng.random_range(0..protos.nrows());
            }
        }
        labels.push(l);
    }
    let features = render_segments(protos, &boundaries, &labels, spec.noise, rng);
    PlantedUtterance {
        features,
        boundaries,
        labels,
    }
}

pub fn render_segments(
    protos: &Array2<f64>,
    boundaries: &[usize],
    labels: &[usize],
    noise: f64,
    rng: &mut impl Rng,
) -> Array2<f64> {
    let t = *boundaries.last().unwrap();
    let dim = protos.ncols();
    let normal = Normal::new(0.0, noise.max(0.0)).unwrap();
    let mut x = Array2::<f64>::zeros((t, dim));
    for (seg, &l) in boundaries.windows(2).zip(labels) {
        for f in seg[0]..seg[1] {
            for d in 0..dim {
                x[[f, d]] = protos[[l, d]] + if noise > 0.0 { normal.sample(rng) } else { 0.0 };
            }
        }
    }
    x
}

pub fn planted_corpus(
    n_utts: usize,
    n_protos: usize,
    spec: &PlantedSpec,
    orthonormal: bool,
    seed: u64,
) -> (Array2<f64>, Vec<PlantedUtterance>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let protos = prototypes(n_protos, spec.dim, orthonormal, &mut rng);
    let utts = (0..n_utts)
        .map(|_| planted_utterance(&protos, spec, &mut rng))
        .collect();
    (protos, utts)
}

/// Content carried by planted prototypes in one subspace and speaker identity
/// by a constant per-speaker offset in a complementary subspace; both
/// subspaces come from one random rotation.
#[derive(Debug, Clone)]
pub struct SpeakerCorpus {
    pub dim: usize,
    pub content_protos: Array2<f64>,
    /// Orthonormal rows spanning the speaker subspace.
    pub speaker_basis: Array2<f64>,
    pub speaker_offsets: Array2<f64>,
    pub offset_scale: f64,
    pub noise: f64,
    pub utterances: Vec<SpeakerUtterance>,
}

#[derive(Debug, Clone)]
pub struct SpeakerUtterance {
    pub speaker: usize,
    pub boundaries: Vec<usize>,
    pub labels: Vec<usize>,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpeakerCorpusSpec {
    pub content_dim: usize,
    pub speaker_dim: usize,
    pub n_protos: usize,
    pub n_speakers: usize,
    pub utts_per_speaker: usize,
    pub offset_scale: f64,
    pub noise: f64,
    pub segments: PlantedSpec,
}

impl SpeakerCorpus {
    pub fn generate(spec: &SpeakerCorpusSpec, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dim = spec.content_dim + spec.speaker_dim;
        let rot = prototypes(dim, dim, true, &mut rng);
        let content_basis = rot.slice(ndarray::s![..spec.content_dim, ..]).to_owned();
        let speaker_basis = rot.slice(ndarray::s![spec.content_dim.., ..]).to_owned();
        let coeffs = prototypes(spec.n_protos, spec.content_dim, false, &mut rng);
        let content_protos = coeffs.dot(&content_basis);
        let normal = Normal::new(0.0, 1.0).unwrap();
        let mut offsets = Array2::<f64>::zeros((spec.n_speakers, dim));
        for s in 0..spec.n_speakers {
            let c: Array1<f64> = (0..spec.speaker_dim).map(|_| normal.sample(&mut rng)).collect();
            let c = &c / c.dot(&c).sqrt() * spec.offset_scale;
            offsets.row_mut(s).assign(&c.dot(&speaker_basis));
        }
        let mut utterances = Vec::new();
        for s in 0..spec.n_speakers {
            for _ in 0..spec.utts_per_speaker {
                let plan = planted_utterance(
                    &content_protos,
                    &PlantedSpec {
                        noise: 0.0,
                        ..spec.segments.clone()
                    },
                    &mut rng,
                );
                utterances.push(SpeakerUtterance {
                    speaker: s,
                    boundaries: plan.boundaries,
                    labels: plan.labels,
                    seed: rng.random(),
                });
            }
        }
        Self {
            dim,
            content_protos,
            speaker_basis,
            speaker_offsets: offsets,
            offset_scale: spec.offset_scale,
            noise: spec.noise,
            utterances,
        }
    }

    /// Features of utterance `i` as spoken by its own speaker.
    pub fn clean(&self, i: usize) -> Array2<f64> {
        let u = &self.utterances[i];
        let off = self.speaker_offsets.row(u.speaker).to_owned();
        self.render(i, &off, u.seed)
    }

    /// Features of utterance `i` with a freshly drawn random speaker offset.
    pub fn perturbed(&self, i: usize, seed: u64) -> Array2<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, 1.0).unwrap();
        let k = self.speaker_basis.nrows();
        let c: Array1<f64> = (0..k).map(|_| normal.sample(&mut rng)).collect();
        let c = &c / c.dot(&c).sqrt() * self.offset_scale;
        let off = c.dot(&self.speaker_basis);
        self.render(i, &off, seed ^ 0x9e37_79b9_7f4a_7c15)
    }

    fn render(&self, i: usize, offset: &Array1<f64>, seed: u64) -> Array2<f64> {
        let u = &self.utterances[i];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut x = render_segments(&self.content_protos, &u.boundaries, &u.labels, self.noise, &mut rng);
        x += offset;
        x
    }
}
