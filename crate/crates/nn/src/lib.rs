//! Minimal reverse-mode autodiff over dense `f64` matrices, plus the layers
//! the graphex models are assembled from (GRU, attention, transformer blocks).

pub mod gradcheck;
pub mod layers;
pub mod optim;
pub mod params;
pub mod tape;

pub use layers::{BiGru, Dropout, GruCell, Linear};
pub use optim::{Adam, Sgd};
pub use params::{Grads, ParamId, ParamSet, SerializedParam};
pub use tape::{Tape, Var};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, thiserror::Error)]
pub enum NnError {
    #[error("checkpoint: {0}")]
    Checkpoint(String),
}

pub fn seeded_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
