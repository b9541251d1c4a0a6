//! Trains a small model on a KVRET directory and reports dev metrics per
//! epoch. Defaults to the bundled eight-session fixture.
//!
//! cargo run --release --example train_fixture [KVRET_DIR] [VARIANT]

use std::path::PathBuf;

use ctx_slu::data::{build_vocab, load_kvret};
use ctx_slu::train::AdamConfig;
use ctx_slu::{fit, SluVariant, TrainConfig};

fn main() -> ctx_slu::Result<()> {
    let mut args = std::env::args().skip(1);
    let dir = args
        .next()
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/kvret_mini"));
    let variant: SluVariant = args.next().map_or(Ok(SluVariant::SdenDagger), |v| v.parse())?;

    let corpus = load_kvret(&dir)?;
    let vocab = build_vocab(&corpus.train, 1);
    let config = TrainConfig {
        variant,
        dli: variant.uses_memory(),
        embedding_dim: 32,
        hidden_dim: 24,
        max_epochs: 40,
        batch_size: 4,
        adam: AdamConfig {
            lr: 0.01,
            ..AdamConfig::default()
        },
        patience: None,
        ..TrainConfig::default()
    };
    let out = fit(&config, &vocab, &corpus.train, &corpus.dev, |m| {
        println!(
            "epoch {:>3}  train {:.4}  dev {:.4}  slot F1 {:6.2}  intent {:.3}",
            m.epoch, m.train_loss, m.val_loss, m.slot_f1, m.intent_acc
        );
    })?;
    let best = out.best_metrics();
    println!("kept epoch {} (dev loss {:.4})", best.epoch, best.val_loss);
    Ok(())
}
