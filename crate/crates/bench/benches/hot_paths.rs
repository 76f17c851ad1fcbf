use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use syllabion_bench::{chirp, planted_frames, points};
use syllabion_core::clusterer::{kmeans, KMeansConfig};
use syllabion_core::featurize::{log_mel, FeaturizerConfig};
use syllabion_core::neural::{EncoderConfig, MlpHeadConfig, Model, ModelConfig};
use syllabion_core::segmenter::{mincut_segment, segment_features, self_similarity, SegmenterConfig};

fn mincut(c: &mut Criterion) {
    let mut g = c.benchmark_group("mincut");
    for frames in [100, 250, 500] {
        let z = planted_frames(frames, 3);
        let sim = self_similarity(&z.view());
        let s = z.nrows() / 10;
        g.bench_with_input(BenchmarkId::new("dp", z.nrows()), &sim, |b, sim| {
            b.iter(|| mincut_segment(black_box(sim), s).unwrap())
        });
    }
    let z = planted_frames(250, 4);
    g.bench_function("segment_features_250", |b| {
        b.iter(|| segment_features(black_box(&z.view()), 50.0, &SegmenterConfig::default()).unwrap())
    });
    g.finish();
}

fn clustering(c: &mut Criterion) {
    let mut g = c.benchmark_group("kmeans");
    g.sample_size(10);
    let x = points(4000, 32, 5);
    for k in [16, 128] {
        let cfg = KMeansConfig {
            max_iter: 20,
            ..Default::default()
        };
        g.bench_with_input(BenchmarkId::new("lloyd_4000x32", k), &k, |b, &k| {
            b.iter(|| kmeans(black_box(&x.view()), k, &cfg).unwrap())
        });
    }
    g.finish();
}

fn features(c: &mut Criterion) {
    let mut g = c.benchmark_group("log_mel");
    let cfg = FeaturizerConfig::default();
    for secs in [1.0, 10.0] {
        let w = chirp(secs, 6);
        g.bench_with_input(BenchmarkId::from_parameter(format!("{secs}s")), &w, |b, w| {
            b.iter(|| log_mel(black_box(w), &cfg).unwrap())
        });
    }
    g.finish();
}

fn encoder(c: &mut Criterion) {
    let mut g = c.benchmark_group("encoder");
    g.sample_size(10);
    let cfg = ModelConfig {
        encoder: EncoderConfig {
            input_dim: 40,
            n_layers: 4,
            d_model: 128,
            n_heads: 4,
            d_ff: 512,
            reinit_last_n: 1,
        },
        projector: MlpHeadConfig { hidden: 256, out: 64 },
        predictor: MlpHeadConfig { hidden: 256, out: 64 },
    };
    let model = Model::new(&cfg).unwrap();
    let ps = model.init(7).unwrap();
    let x = log_mel(&chirp(4.0, 8), &FeaturizerConfig::default()).unwrap().to_f64();
    g.bench_function("forward_4x128_200frames", |b| {
        b.iter(|| model.encoder.layer_output(&ps, black_box(&x), 4).unwrap())
    });
    g.finish();
}

criterion_group!(benches, mincut, clustering, features, encoder);
criterion_main!(benches);
