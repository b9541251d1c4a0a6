//! Joint SLU + DLI training: configuration, the epoch loop with early
//! stopping, checkpoints and the λ sweep.

mod adam;
mod dataset;
mod early_stop;
mod fit;
mod sweep;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use dataset::{EncodedDataset, EncodedExample};
pub use early_stop::{replay, EarlyStopping, EpochDecision};
pub use fit::{evaluate, fit, EvalOutcome, FitOutcome};
pub use sweep::{lambda_sweep, SweepMean, SweepRow, SweepTable};

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::Vocab;
use crate::error::{Error, Result};
use crate::model::{ModelDims, SluModel, SluVariant};
use crate::tensor::{read_checkpoint, write_checkpoint, ParameterStore};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub variant: SluVariant,
    /// Adds the dialogue logistic inference loss.
    pub dli: bool,
    pub lambda: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Epochs without validation improvement before stopping; `None` disables.
    pub patience: Option<usize>,
    /// Drop probability on embeddings and first-layer outputs.
    pub dropout: f64,
    pub embedding_dim: usize,
    pub hidden_dim: usize,
    pub adam: AdamConfig,
    pub clip_norm: Option<f64>,
    pub seed: u64,
    /// Keep parameters on the `f32` grid so checkpoints reload exactly.
    pub round_f32: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            variant: SluVariant::SdenDagger,
            dli: true,
            lambda: 0.3,
            batch_size: 64,
            max_epochs: 30,
            patience: Some(5),
            dropout: 0.3,
            embedding_dim: 100,
            hidden_dim: 64,
            adam: AdamConfig::default(),
            clip_norm: Some(5.0),
            seed: 1,
            round_f32: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(Error::invalid(format!("lambda {} not in [0, 1]", self.lambda)));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::invalid(format!("dropout {} not in [0, 1)", self.dropout)));
        }
        for (name, v) in [
            ("batch_size", self.batch_size),
            ("max_epochs", self.max_epochs),
            ("embedding_dim", self.embedding_dim),
            ("hidden_dim", self.hidden_dim),
        ] {
            if v == 0 {
                return Err(Error::invalid(format!("{name} must be positive")));
            }
        }
        if self.patience == Some(0) {
            return Err(Error::invalid("patience must be positive"));
        }
        if let Some(c) = self.clip_norm {
            if c.is_nan() || c <= 0.0 {
                return Err(Error::invalid(format!("clip_norm {c} must be positive")));
            }
        }
        if self.dli && !self.variant.uses_memory() {
            return Err(Error::Variant {
                variant: self.variant.to_string(),
                reason: "dialogue logistic inference needs a knowledge vector".into(),
            });
        }
        Ok(())
    }

    /// Weight of the DLI loss actually used: `lambda`, or 0 without DLI.
    pub fn effective_lambda(&self) -> f64 {
        if self.dli {
            self.lambda
        } else {
            0.0
        }
    }

    pub fn dims(&self, vocab: &Vocab) -> ModelDims {
        ModelDims {
            vocab_size: vocab.token_count(),
            embedding_dim: self.embedding_dim,
            hidden_dim: self.hidden_dim,
            intent_count: vocab.intent_count(),
            slot_label_count: vocab.slot_label_count(),
        }
    }
}

/// `(1 - λ) l_slu + λ l_dli`.
pub fn joint_loss(l_slu: f64, l_dli: f64, lambda: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&lambda) {
        return Err(Error::invalid(format!("lambda {lambda} not in [0, 1]")));
    }
    Ok((1.0 - lambda) * l_slu + lambda * l_dli)
}

/// One line of the metrics file. Slot scores are percentages.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub slot_p: f64,
    pub slot_r: f64,
    pub slot_f1: f64,
    pub intent_acc: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsHistory {
    pub epochs: Vec<EpochMetrics>,
}

impl MetricsHistory {
    pub fn push(&mut self, m: EpochMetrics) -> Result<()> {
        let expected = self.epochs.len() + 1;
        if m.epoch != expected {
            return Err(Error::invalid(format!(
                "epoch {} recorded, expected {expected}",
                m.epoch
            )));
        }
        self.epochs.push(m);
        Ok(())
    }

    pub fn get(&self, epoch: usize) -> Option<&EpochMetrics> {
        epoch.checked_sub(1).and_then(|i| self.epochs.get(i))
    }

    pub fn to_jsonl(&self) -> Result<String> {
        let mut out = String::new();
        for m in &self.epochs {
            out.push_str(&serde_json::to_string(m)?);
            out.push('\n');
        }
        Ok(out)
    }
}

pub const CHECKPOINT_FORMAT: &str = "ctx-slu/1";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub format: String,
    pub variant: SluVariant,
    pub dims: ModelDims,
    pub config: TrainConfig,
    pub vocab_fingerprint: String,
    pub best_epoch: usize,
    pub best_val_loss: f64,
    /// How the stored parameters were chosen among epochs.
    pub selection: String,
}

#[derive(Clone, Debug)]
pub struct TrainedModel {
    pub model: SluModel,
    pub store: ParameterStore,
    pub header: CheckpointHeader,
}

impl TrainedModel {
    pub fn save(&self, path: &Path) -> Result<()> {
        let header = serde_json::to_value(&self.header)?;
        write_checkpoint(path, &header, &self.store.to_named())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = read_checkpoint(path)?;
        let header: CheckpointHeader = serde_json::from_value(file.header)
            .map_err(|e| Error::Checkpoint(format!("{}: bad header: {e}", path.display())))?;
        if header.format != CHECKPOINT_FORMAT {
            return Err(Error::Checkpoint(format!(
                "{}: format {:?}, expected {CHECKPOINT_FORMAT:?}",
                path.display(),
                header.format
            )));
        }
        let mut store = ParameterStore::new(header.config.seed);
        let model = SluModel::new(header.variant, header.dims, &mut store)?;
        store.load_named(&file.tensors)?;
        Ok(TrainedModel { model, store, header })
    }

    /// Fails unless `vocab` is the vocabulary the model was trained with.
    pub fn check_vocab(&self, vocab: &Vocab) -> Result<()> {
        let fp = vocab.fingerprint();
        if fp != self.header.vocab_fingerprint || self.header.dims != self.header.config.dims(vocab) {
            return Err(Error::Checkpoint(format!(
                "vocabulary {fp} does not match checkpoint vocabulary {}",
                self.header.vocab_fingerprint
            )));
        }
        Ok(())
    }
}
