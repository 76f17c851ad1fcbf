mod common;

use common::{check_layer, LAYERS};

const SHAPES: u64 = 20;
const TOLERANCE: f64 = 1e-4;

fn run(kind: &str) {
    for seed in 0..SHAPES {
        let (shape, err) = check_layer(kind, 1000 * seed + 7);
        assert!(err < TOLERANCE, "{kind} {shape}: relative error {err:e}");
    }
}

#[test]
fn every_layer_is_listed() {
    assert_eq!(LAYERS.len(), 10);
}

macro_rules! layer_tests {
    ($($name:ident),*) => {
        $(#[test] fn $name() { run(stringify!($name)); })*
    };
}

layer_tests!(
    linear,
    gelu,
    layer_norm,
    batch_norm,
    attention,
    feed_forward,
    encoder_block,
    encoder,
    mlp_head,
    byol_loss
);
