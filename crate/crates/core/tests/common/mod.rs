//! Finite-difference checks shared by the gradient suite and the acceptance
//! target.

#![allow(dead_code)]

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use syllabion_core::neural::gradcheck::{
    max_param_error, numerical_input_grad, numerical_param_grads, relative_error, DEFAULT_STEP,
};
use syllabion_core::neural::layers::{gelu_backward, gelu_forward};
use syllabion_core::neural::{
    BatchNorm, Encoder, EncoderBlock, EncoderConfig, FeedForward, Grads, Init, LayerNorm, Linear, MlpHead,
    MlpHeadConfig, MultiHeadAttention, ParamFlags, ParamStore,
};
use syllabion_core::trainer::{byol_loss, byol_loss_grad};

pub const LAYERS: &[&str] = &[
    "linear",
    "gelu",
    "layer_norm",
    "batch_norm",
    "attention",
    "feed_forward",
    "encoder_block",
    "encoder",
    "mlp_head",
    "byol_loss",
];

pub fn randn(rng: &mut ChaCha8Rng, r: usize, c: usize, std: f64) -> Array2<f64> {
    let n = Normal::new(0.0, std).unwrap();
    Array2::from_shape_fn((r, c), |_| n.sample(rng))
}

/// Replaces every non-buffer tensor with N(0, std) draws so that checks do
/// not depend on the structured initial values (unit gains, zero biases).
fn scramble(ps: &mut ParamStore, rng: &mut ChaCha8Rng, std: f64) {
    let n = Normal::new(0.0, std).unwrap();
    let names: Vec<String> = ps
        .iter()
        .filter(|(_, p)| !p.flags.buffer)
        .map(|(k, _)| k.clone())
        .collect();
    for name in names {
        ps.value_mut(&name).unwrap().mapv_inplace(|_| n.sample(rng));
    }
}

/// Max of parameter and input errors for `L = Σ f(x) ⊙ R`.
fn check<F, B>(ps: &ParamStore, x: &Array2<f64>, r: &Array2<f64>, forward: F, backward: B) -> f64
where
    F: Fn(&ParamStore, &Array2<f64>) -> Array2<f64>,
    B: Fn(&ParamStore, &Array2<f64>, &Array2<f64>, &mut Grads) -> Array2<f64>,
{
    let loss = |p: &ParamStore, x: &Array2<f64>| (forward(p, x) * r).sum();
    let mut g = Grads::new();
    let dx = backward(ps, x, r, &mut g);
    let num = numerical_param_grads(ps, |p| loss(p, x), DEFAULT_STEP);
    let pe = if num.iter().next().is_some() {
        max_param_error(&g, &num).0
    } else {
        0.0
    };
    let ndx = numerical_input_grad(x, |x| loss(ps, x), DEFAULT_STEP);
    pe.max(relative_error(&dx.into_dyn(), &ndx.into_dyn()))
}

/// Checks one layer kind on a shape drawn from `seed`. Returns the shape
/// description and the worst relative error.
pub fn check_layer(kind: &str, seed: u64) -> (String, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let t = rng.random_range(2..6);
    let heads = rng.random_range(1..4);
    let d = heads * rng.random_range(1..4);
    let d_in = rng.random_range(1..6);
    let d_ff = rng.random_range(1..8);
    let mut ps = ParamStore::new();
    let x = randn(&mut rng, t, d, 1.0);
    match kind {
        "linear" => {
            let l = Linear::new("l", d, d_in);
            l.init(&mut ps, Init::XavierUniform, ParamFlags::TRAINABLE, &mut rng)
                .unwrap();
            scramble(&mut ps, &mut rng, 0.5);
            let r = randn(&mut rng, t, d_in, 1.0);
            let e = check(
                &ps,
                &x,
                &r,
                |p, x| l.forward(p, &x.view()),
                |p, x, dy, g| l.backward(p, &x.view(), dy, g),
            );
            (format!("T={t} in={d} out={d_in}"), e)
        }
        "gelu" => {
            let x = randn(&mut rng, t, d, 2.0);
            let r = randn(&mut rng, t, d, 1.0);
            let e = check(&ps, &x, &r, |_, x| gelu_forward(x), |_, x, dy, _| gelu_backward(x, dy));
            (format!("T={t} D={d}"), e)
        }
        "layer_norm" => {
            let l = LayerNorm::new("ln", d.max(2));
            let x = randn(&mut rng, t, d.max(2), 1.0);
            l.init(&mut ps, ParamFlags::TRAINABLE).unwrap();
            scramble(&mut ps, &mut rng, 1.0);
            let r = randn(&mut rng, t, d.max(2), 1.0);
            let e = check(
                &ps,
                &x,
                &r,
                |p, x| l.forward(p, x).0,
                |p, x, dy, g| {
                    let (_, c) = l.forward(p, x);
                    l.backward(p, &c, dy, g)
                },
            );
            (format!("T={t} D={}", d.max(2)), e)
        }
        "batch_norm" => {
            let l = BatchNorm::new("bn", d);
            l.init(&mut ps, ParamFlags::TRAINABLE).unwrap();
            scramble(&mut ps, &mut rng, 1.0);
            let r = randn(&mut rng, t, d, 1.0);
            let e = check(
                &ps,
                &x,
                &r,
                |p, x| l.forward(p, x, true).unwrap().0,
                |p, x, dy, g| {
                    let (_, c) = l.forward(p, x, true).unwrap();
                    l.backward(p, &c, dy, g)
                },
            );
            (format!("N={t} D={d}"), e)
        }
        "attention" => {
            let a = MultiHeadAttention::new("att", d, heads);
            a.init(
                &mut ps,
                Init::XavierUniform,
                Init::XavierUniform,
                ParamFlags::TRAINABLE,
                &mut rng,
            )
            .unwrap();
            scramble(&mut ps, &mut rng, 0.5);
            let r = randn(&mut rng, t, d, 1.0);
            let e = check(
                &ps,
                &x,
                &r,
                |p, x| a.forward(p, x).0,
                |p, x, dy, g| {
                    let (_, c) = a.forward(p, x);
                    a.backward(p, &c, dy, g)
                },
            );
            (format!("T={t} d={d} h={heads}"), e)
        }
        "feed_forward" => {
            let f = FeedForward::new("ff", d, d_ff);
            f.init(
                &mut ps,
                Init::XavierUniform,
                Init::XavierUniform,
                ParamFlags::TRAINABLE,
                &mut rng,
            )
            .unwrap();
            scramble(&mut ps, &mut rng, 0.5);
            let r = randn(&mut rng, t, d, 1.0);
            let e = check(
                &ps,
                &x,
                &r,
                |p, x| f.forward(p, x).0,
                |p, x, dy, g| {
                    let (_, c) = f.forward(p, x);
                    f.backward(p, &c, dy, g)
                },
            );
            (format!("T={t} d={d} ff={d_ff}"), e)
        }
        "encoder_block" => {
            let b = EncoderBlock::new("blk", d, heads, d_ff);
            b.init(
                &mut ps,
                Init::XavierUniform,
                Init::XavierUniform,
                ParamFlags::TRAINABLE,
                &mut rng,
            )
            .unwrap();
            scramble(&mut ps, &mut rng, 0.5);
            let r = randn(&mut rng, t, d, 1.0);
            let e = check(
                &ps,
                &x,
                &r,
                |p, x| b.forward(p, x).0,
                |p, x, dy, g| {
                    let (_, c) = b.forward(p, x);
                    b.backward(p, &c, dy, g)
                },
            );
            (format!("T={t} d={d} h={heads} ff={d_ff}"), e)
        }
        "encoder" => {
            let layers = rng.random_range(1..3);
            let cfg = EncoderConfig {
                input_dim: d_in,
                n_layers: layers,
                d_model: d,
                n_heads: heads,
                d_ff,
                reinit_last_n: rng.random_range(0..=layers),
            };
            let enc = Encoder::new(&cfg, "enc");
            enc.init(&mut ps, &mut rng).unwrap();
            scramble(&mut ps, &mut rng, 0.5);
            let x = randn(&mut rng, t, d_in, 1.0);
            let upto = rng.random_range(0..=layers);
            let r = randn(&mut rng, t, d, 1.0);
            let e = check(
                &ps,
                &x,
                &r,
                |p, x| enc.layer_output(p, x, upto).unwrap(),
                |p, x, dy, g| {
                    let (_, c) = enc.forward(p, x, upto).unwrap();
                    enc.backward(p, &c, dy, g)
                },
            );
            (
                format!("T={t} in={d_in} L={layers} upto={upto} d={d} h={heads} ff={d_ff}"),
                e,
            )
        }
        "mlp_head" => {
            let cfg = MlpHeadConfig {
                hidden: d_ff,
                out: d_in,
            };
            let h = MlpHead::new("head", d, &cfg);
            h.init(&mut ps, &mut rng).unwrap();
            scramble(&mut ps, &mut rng, 0.5);
            let r = randn(&mut rng, t, d_in, 1.0);
            let e = check(
                &ps,
                &x,
                &r,
                |p, x| h.forward(p, x, true).unwrap().0,
                |p, x, dy, g| {
                    let (_, c) = h.forward(p, x, true).unwrap();
                    h.backward(p, &c, dy, g)
                },
            );
            (format!("N={t} in={d} hidden={d_ff} out={d_in}"), e)
        }
        "byol_loss" => {
            let s = randn(&mut rng, t, d.max(2), 1.0);
            let tt = randn(&mut rng, t, d.max(2), 1.0);
            let (_, ds, dt) = byol_loss_grad(&s, &tt).unwrap();
            let ns = numerical_input_grad(&s, |s| byol_loss(s, &tt).unwrap(), DEFAULT_STEP);
            let nt = numerical_input_grad(&tt, |t| byol_loss(&s, t).unwrap(), DEFAULT_STEP);
            let e = relative_error(&ds.into_dyn(), &ns.into_dyn()).max(relative_error(&dt.into_dyn(), &nt.into_dyn()));
            (format!("T={t} d={}", d.max(2)), e)
        }
        other => panic!("unknown layer {other}"),
    }
}
