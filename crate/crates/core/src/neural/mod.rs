//! Transformer encoder, MLP heads, AdamW and the learning-rate schedule, with
//! hand-written backward passes.
//!
//! Computation is in `f64`; checkpoints store `f32`.

pub mod encoder;
pub mod gradcheck;
pub mod head;
pub mod layers;
pub mod optim;
pub mod params;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use encoder::{positional_encoding, Encoder, EncoderBlock, EncoderConfig};
pub use head::{MlpHead, MlpHeadConfig};
pub use layers::{gelu, BatchNorm, FeedForward, Init, LayerNorm, Linear, MultiHeadAttention};
pub use optim::{AdamW, AdamWConfig, LrSchedule};
pub use params::{Grads, ParamFlags, ParamStore};

use crate::error::Result;

pub const ENCODER_PREFIX: &str = "encoder";
pub const PROJECTOR_PREFIX: &str = "projector";
pub const PREDICTOR_PREFIX: &str = "predictor";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub encoder: EncoderConfig,
    pub projector: MlpHeadConfig,
    pub predictor: MlpHeadConfig,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            encoder: EncoderConfig::default(),
            projector: MlpHeadConfig { hidden: 256, out: 64 },
            predictor: MlpHeadConfig { hidden: 256, out: 64 },
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        self.encoder.validate()?;
        self.projector.validate()?;
        self.predictor.validate()
    }
}

/// Student architecture: encoder, projector and predictor. The teacher uses
/// the same modules minus the predictor.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub cfg: ModelConfig,
    pub encoder: Encoder,
    pub projector: MlpHead,
    pub predictor: MlpHead,
}

impl Model {
    pub fn new(cfg: &ModelConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            cfg: cfg.clone(),
            encoder: Encoder::new(&cfg.encoder, ENCODER_PREFIX),
            projector: MlpHead::new(PROJECTOR_PREFIX, cfg.encoder.d_model, &cfg.projector),
            predictor: MlpHead::new(PREDICTOR_PREFIX, cfg.projector.out, &cfg.predictor),
        })
    }

    pub fn init(&self, seed: u64) -> Result<ParamStore> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut ps = ParamStore::new();
        self.encoder.init(&mut ps, &mut rng)?;
        self.projector.init(&mut ps, &mut rng)?;
        self.predictor.init(&mut ps, &mut rng)?;
        Ok(ps)
    }
}
