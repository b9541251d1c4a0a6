//! Sweeps the auxiliary-loss weight over a few seeds and prints the CSV.
//!
//! cargo run --release --example lambda_sweep [KVRET_DIR]

use std::path::PathBuf;

use ctx_slu::data::{build_vocab, load_kvret};
use ctx_slu::train::{lambda_sweep, AdamConfig};
use ctx_slu::TrainConfig;

fn main() -> ctx_slu::Result<()> {
    let dir = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/kvret_mini"));
    let corpus = load_kvret(&dir)?;
    let vocab = build_vocab(&corpus.train, 1);
    let base = TrainConfig {
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
    let jobs = std::thread::available_parallelism().map_or(1, |n| n.get());
    let table = lambda_sweep(
        &base,
        &[0.1, 0.3, 0.9],
        &[1, 2],
        &vocab,
        &corpus.train,
        &corpus.dev,
        jobs,
    )?;
    print!("{}", table.to_csv());
    Ok(())
}
