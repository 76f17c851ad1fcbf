use ndarray::Array2;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::layers::{
    AttentionCache, FeedForward, FeedForwardCache, Init, LayerNorm, Linear, MultiHeadAttention, NormCache,
};
use super::params::{Grads, ParamFlags, ParamStore};
use crate::error::{Error, Result};

/// Std of the Gaussian used for re-initialized tensors.
pub const REINIT_STD: f64 = 0.02;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EncoderConfig {
    pub input_dim: usize,
    pub n_layers: usize,
    pub d_model: usize,
    pub n_heads: usize,
    pub d_ff: usize,
    pub reinit_last_n: usize,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self {
            input_dim: 40,
            n_layers: 4,
            d_model: 64,
            n_heads: 4,
            d_ff: 128,
            reinit_last_n: 3,
        }
    }
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.input_dim == 0 || self.d_model == 0 || self.d_ff == 0 || self.n_heads == 0 {
            return bad("encoder dims and n_heads must be ≥ 1".into());
        }
        if !self.d_model.is_multiple_of(self.n_heads) {
            return bad(format!(
                "d_model {} is not divisible by n_heads {}",
                self.d_model, self.n_heads
            ));
        }
        if self.reinit_last_n > self.n_layers {
            return bad(format!(
                "reinit_last_n {} exceeds n_layers {}",
                self.reinit_last_n, self.n_layers
            ));
        }
        Ok(())
    }
}

/// Sinusoidal position table: `sin` on even columns, `cos` on odd ones.
pub fn positional_encoding(t: usize, d: usize) -> Array2<f64> {
    Array2::from_shape_fn((t, d), |(pos, j)| {
        let i = (j / 2) as f64;
        let angle = pos as f64 / 10000f64.powf(2.0 * i / d as f64);
        if j % 2 == 0 {
            angle.sin()
        } else {
            angle.cos()
        }
    })
}

/// Pre-norm transformer block: `h = x + Attn(LN(x))`, `y = h + FF(LN(h))`.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderBlock {
    pub ln1: LayerNorm,
    pub attn: MultiHeadAttention,
    pub ln2: LayerNorm,
    pub ff: FeedForward,
}

#[derive(Debug, Clone)]
pub struct BlockCache {
    ln1: NormCache,
    attn: AttentionCache,
    ln2: NormCache,
    ff: FeedForwardCache,
}

impl BlockCache {
    pub fn attention(&self) -> &AttentionCache {
        &self.attn
    }
}

impl EncoderBlock {
    pub fn new(name: &str, d_model: usize, n_heads: usize, d_ff: usize) -> Self {
        Self {
            ln1: LayerNorm::new(format!("{name}.ln1"), d_model),
            attn: MultiHeadAttention::new(format!("{name}.attn"), d_model, n_heads),
            ln2: LayerNorm::new(format!("{name}.ln2"), d_model),
            ff: FeedForward::new(&format!("{name}.ff"), d_model, d_ff),
        }
    }

    /// `out_init` applies to the two residual-branch output projections.
    pub fn init(
        &self,
        ps: &mut ParamStore,
        init: Init,
        out_init: Init,
        flags: ParamFlags,
        rng: &mut impl Rng,
    ) -> Result<()> {
        self.ln1.init(ps, flags)?;
        self.attn.init(ps, init, out_init, flags, rng)?;
        self.ln2.init(ps, flags)?;
        self.ff.init(ps, init, out_init, flags, rng)
    }

    pub fn forward(&self, ps: &ParamStore, x: &Array2<f64>) -> (Array2<f64>, BlockCache) {
        let (n1, ln1) = self.ln1.forward(ps, x);
        let (a, attn) = self.attn.forward(ps, &n1);
        let h = x + &a;
        let (n2, ln2) = self.ln2.forward(ps, &h);
        let (f, ff) = self.ff.forward(ps, &n2);
        (h + &f, BlockCache { ln1, attn, ln2, ff })
    }

    pub fn backward(&self, ps: &ParamStore, c: &BlockCache, dy: &Array2<f64>, grads: &mut Grads) -> Array2<f64> {
        let dn2 = self.ff.backward(ps, &c.ff, dy, grads);
        let dh = dy + &self.ln2.backward(ps, &c.ln2, &dn2, grads);
        let dn1 = self.attn.backward(ps, &c.attn, &dh, grads);
        &dh + &self.ln1.backward(ps, &c.ln1, &dn1, grads)
    }
}

/// Input projection plus positional encoding (hidden state 0) followed by
/// `n_layers` blocks (hidden states 1..=n_layers).
#[derive(Debug, Clone, PartialEq)]
pub struct Encoder {
    pub cfg: EncoderConfig,
    pub input: Linear,
    pub blocks: Vec<EncoderBlock>,
}

#[derive(Debug, Clone)]
pub struct EncoderCache {
    x: Array2<f64>,
    pub blocks: Vec<BlockCache>,
}

impl Encoder {
    pub fn new(cfg: &EncoderConfig, name: &str) -> Self {
        Self {
            cfg: cfg.clone(),
            input: Linear::new(format!("{name}.input"), cfg.input_dim, cfg.d_model),
            blocks: (0..cfg.n_layers)
                .map(|i| EncoderBlock::new(&format!("{name}.layers.{i}"), cfg.d_model, cfg.n_heads, cfg.d_ff))
                .collect(),
        }
    }

    /// Xavier init for the "pretrained" part and N(0, 0.02) for the last
    /// `reinit_last_n` blocks, which are flagged as re-initialized.
    pub fn init(&self, ps: &mut ParamStore, rng: &mut impl Rng) -> Result<()> {
        self.input.init(ps, Init::XavierUniform, ParamFlags::TRAINABLE, rng)?;
        let first_reinit = self.cfg.n_layers - self.cfg.reinit_last_n;
        for (i, b) in self.blocks.iter().enumerate() {
            if i >= first_reinit {
                let g = Init::Normal(REINIT_STD);
                b.init(ps, g, g, ParamFlags::REINIT, rng)?;
            } else {
                b.init(ps, Init::XavierUniform, Init::XavierUniform, ParamFlags::TRAINABLE, rng)?;
            }
        }
        Ok(())
    }

    pub fn n_layers(&self) -> usize {
        self.blocks.len()
    }

    fn check_input(&self, x: &Array2<f64>) -> Result<()> {
        if x.ncols() != self.cfg.input_dim {
            return Err(Error::Shape(format!(
                "encoder expects {}-dim input, got {}",
                self.cfg.input_dim,
                x.ncols()
            )));
        }
        if x.nrows() == 0 {
            return Err(Error::Shape("encoder input has no frames".into()));
        }
        Ok(())
    }

    /// Runs through layer `upto` and returns hidden states `0..=upto`.
    pub fn forward(&self, ps: &ParamStore, x: &Array2<f64>, upto: usize) -> Result<(Vec<Array2<f64>>, EncoderCache)> {
        self.check_input(x)?;
        self.check_layer(upto)?;
        let mut h = self.input.forward(ps, &x.view()) + positional_encoding(x.nrows(), self.cfg.d_model);
        let mut hidden = Vec::with_capacity(upto + 1);
        let mut caches = Vec::with_capacity(upto);
        for b in &self.blocks[..upto] {
            let (y, c) = b.forward(ps, &h);
            hidden.push(std::mem::replace(&mut h, y));
            caches.push(c);
        }
        hidden.push(h);
        Ok((
            hidden,
            EncoderCache {
                x: x.clone(),
                blocks: caches,
            },
        ))
    }

    /// All hidden states `0..=n_layers`.
    pub fn hidden_states(&self, ps: &ParamStore, x: &Array2<f64>) -> Result<Vec<Array2<f64>>> {
        Ok(self.forward(ps, x, self.n_layers())?.0)
    }

    pub fn layer_output(&self, ps: &ParamStore, x: &Array2<f64>, layer: usize) -> Result<Array2<f64>> {
        Ok(self.forward(ps, x, layer)?.0.pop().expect("at least one hidden state"))
    }

    pub fn check_layer(&self, layer: usize) -> Result<()> {
        if layer > self.n_layers() {
            return Err(Error::invalid(format!(
                "layer {layer} out of range 0..={}",
                self.n_layers()
            )));
        }
        Ok(())
    }

    /// Backpropagates a gradient on the last hidden state in `cache`.
    pub fn backward(
        &self,
        ps: &ParamStore,
        cache: &EncoderCache,
        d_top: &Array2<f64>,
        grads: &mut Grads,
    ) -> Array2<f64> {
        let mut d = d_top.clone();
        for (b, c) in self.blocks[..cache.blocks.len()].iter().zip(&cache.blocks).rev() {
            d = b.backward(ps, c, &d, grads);
        }
        self.input.backward(ps, &cache.x.view(), &d, grads)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn random(t: usize, d: usize, seed: u64) -> Array2<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = Normal::new(0.0, 1.0).unwrap();
        Array2::from_shape_fn((t, d), |_| n.sample(&mut rng))
    }

    #[test]
    fn shape_contract() {
        let cfg = EncoderConfig {
            input_dim: 6,
            ..Default::default()
        };
        let enc = Encoder::new(&cfg, "encoder");
        let mut ps = ParamStore::new();
        enc.init(&mut ps, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        let x = random(5, 6, 1);
        let h = enc.layer_output(&ps, &x, 2).unwrap();
        assert_eq!(h.dim(), (5, cfg.d_model));
        assert_eq!(enc.hidden_states(&ps, &x).unwrap().len(), 5);
        assert!(enc.layer_output(&ps, &x, 5).is_err());
        assert!(enc.layer_output(&ps, &random(5, 7, 1), 1).is_err());
    }

    #[test]
    fn zero_residual_branches_give_identity() {
        let cfg = EncoderConfig {
            input_dim: 5,
            n_layers: 3,
            d_model: 8,
            n_heads: 2,
            d_ff: 16,
            reinit_last_n: 0,
        };
        let enc = Encoder::new(&cfg, "encoder");
        let mut ps = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        enc.input
            .init(&mut ps, Init::XavierUniform, ParamFlags::TRAINABLE, &mut rng)
            .unwrap();
        for b in &enc.blocks {
            b.init(
                &mut ps,
                Init::XavierUniform,
                Init::Zeros,
                ParamFlags::TRAINABLE,
                &mut rng,
            )
            .unwrap();
        }
        let x = random(4, 5, 3);
        let hs = enc.hidden_states(&ps, &x).unwrap();
        let proj = enc.input.forward(&ps, &x.view()) + positional_encoding(4, 8);
        for h in &hs {
            assert!((h - &proj).iter().all(|v| v.abs() < 1e-12));
        }
    }

    #[test]
    fn parameter_count_is_a_function_of_config() {
        let cfg = EncoderConfig::default();
        let enc = Encoder::new(&cfg, "encoder");
        let mut a = ParamStore::new();
        let mut b = ParamStore::new();
        enc.init(&mut a, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        enc.init(&mut b, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let (d, f, i) = (cfg.d_model, cfg.d_ff, cfg.input_dim);
        let per_block = 4 * (d * d + d) + 4 * d + (d * f + f) + (f * d + d);
        assert_eq!(a.num_parameters(), i * d + d + cfg.n_layers * per_block);
        assert_eq!(a.num_parameters(), b.num_parameters());
        assert_eq!(a.num_parameters(), 136_512);
    }

    #[test]
    fn reinit_flags_cover_last_blocks() {
        let cfg = EncoderConfig::default();
        let enc = Encoder::new(&cfg, "encoder");
        let mut ps = ParamStore::new();
        enc.init(&mut ps, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        for (name, p) in ps.iter() {
            let reinit = ["layers.1.", "layers.2.", "layers.3."].iter().any(|s| name.contains(s));
            assert_eq!(p.flags.reinitialized, reinit, "{name}");
        }
    }
}
