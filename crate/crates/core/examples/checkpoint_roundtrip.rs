//! Saves a trained model, reloads it, and predicts on a dev session turn
//! by turn with the growing history.
//!
//! cargo run --release --example checkpoint_roundtrip

use std::path::PathBuf;

use ctx_slu::data::{build_vocab, load_kvret, make_examples};
use ctx_slu::train::AdamConfig;
use ctx_slu::{fit, TrainConfig, TrainedModel};

fn argmax(p: &[f64]) -> usize {
    (0..p.len()).max_by(|&a, &b| p[a].total_cmp(&p[b])).unwrap_or(0)
}

fn main() -> ctx_slu::Result<()> {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/kvret_mini");
    let corpus = load_kvret(&dir)?;
    let vocab = build_vocab(&corpus.train, 1);
    let config = TrainConfig {
        embedding_dim: 24,
        hidden_dim: 16,
        max_epochs: 30,
        batch_size: 4,
        adam: AdamConfig {
            lr: 0.01,
            ..AdamConfig::default()
        },
        ..TrainConfig::default()
    };
    let out = fit(&config, &vocab, &corpus.train, &corpus.dev, |_| {})?;

    let path = std::env::temp_dir().join("ctx-slu-example.ckpt");
    out.best.save(&path)?;
    let loaded = TrainedModel::load(&path)?;
    loaded.check_vocab(&vocab)?;
    println!("reloaded {} (epoch {})", path.display(), loaded.header.best_epoch);

    for ex in make_examples(&corpus.dev[0]) {
        let history: Vec<Vec<usize>> = ex.history.iter().map(|t| vocab.encode(t)).collect();
        let pred = loaded
            .model
            .predict(&loaded.store, &history, &vocab.encode(&ex.tokens))?;
        let tags: Vec<&str> = pred.slots.iter().map(|p| vocab.slot_label(argmax(p))).collect();
        println!("{}", ex.tokens.join(" "));
        println!(
            "  intent {}  tags {}",
            vocab.intent(argmax(&pred.intent)),
            tags.join(" ")
        );
    }
    Ok(())
}
