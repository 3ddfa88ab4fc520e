//! Training loop: model assembly, the combined detection and text-embedding
//! loss, AdamW updates and checkpoints.
//!
//! Every step draws its batch from a random stream keyed by the seed and the
//! step index, so a run resumed from a checkpoint follows the same
//! trajectory as an unbroken one.

mod config;
mod model;
mod optim;
mod trainer;

pub use config::{LossMode, TrainConfig};
pub use model::{default_vocab, Embedded, Model, BOX_B, BOX_W, ROOT};
pub use optim::{AdamW, AdamWConfig, Moments};
pub use trainer::{batch_loss, eval_items, Checkpoint, LossReport, LossVars, TrainData, Trainer};
