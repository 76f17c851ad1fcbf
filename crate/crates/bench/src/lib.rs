//! Deterministic inputs shared by the benchmarks.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use syllabion_core::io::Waveform;
use syllabion_core::synth::{planted_corpus, PlantedSpec};

/// Planted frame features of roughly `frames` frames.
pub fn planted_frames(frames: usize, seed: u64) -> Array2<f64> {
    let spec = PlantedSpec {
        min_segments: frames / 20,
        max_segments: frames / 20,
        ..Default::default()
    };
    let (_, utts) = planted_corpus(1, 16, &spec, true, seed);
    utts.into_iter().next().unwrap().features
}

/// `n × dim` standard-uniform points.
pub fn points(n: usize, dim: usize, seed: u64) -> Array2<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Array2::from_shape_fn((n, dim), |_| rng.random::<f64>())
}

/// A 16 kHz chirp with a little noise.
pub fn chirp(secs: f64, seed: u64) -> Waveform {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = (secs * 16_000.0) as usize;
    let samples = (0..n)
        .map(|i| {
            let t = i as f64 / 16_000.0;
            let f = 120.0 + 200.0 * t / secs;
            (0.5 * (std::f64::consts::TAU * f * t).sin() + 0.01 * (rng.random::<f64>() - 0.5)) as f32
        })
        .collect();
    Waveform::new(samples, 16_000).expect("valid waveform")
}
