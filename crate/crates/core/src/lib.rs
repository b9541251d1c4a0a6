//! Memory-based contextual spoken language understanding.
//!
//! A joint intent classifier and IOB slot tagger reads the current driver
//! utterance together with a knowledge vector retrieved from the dialogue
//! history. Four variants differ in how that vector is retrieved and
//! injected. Training can add a dialogue logistic inference loss, which asks
//! the memory module to pick the true next utterance of a session.
//!
//! Everything runs on a small reverse-mode autodiff tape in [`tensor`].

pub mod commands;
pub mod data;
pub mod dli;
pub mod error;
pub mod eval;
pub mod memory;
pub mod model;
pub mod rnn;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use model::{ModelDims, SluModel, SluVariant};
pub use train::{fit, TrainConfig, TrainedModel};
