//! Loads a KVRET directory and builds multi-domain sessions by recombining
//! pairs of single-domain ones.
//!
//! cargo run --release --example kvret_star [KVRET_DIR] [PROB]

use std::collections::BTreeMap;
use std::path::PathBuf;

use ctx_slu::data::{build_kvret_star, load_kvret, DatasetStats};

fn main() -> ctx_slu::Result<()> {
    let mut args = std::env::args().skip(1);
    let dir = args
        .next()
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/kvret_mini"));
    let prob: f64 = args.next().map_or(0.5, |p| p.parse().expect("PROB is a number"));

    let corpus = load_kvret(&dir)?;
    let plain = DatasetStats::compute(&corpus.train, &corpus.dev, &corpus.test);
    println!(
        "KVRET   {} / {} / {} sessions, {:.2} turns per train session",
        plain.train, plain.dev, plain.test, plain.avg_turns
    );
    println!("skipped annotations: {}", corpus.skipped.lines.len());

    for seed in 1..=3 {
        let train = build_kvret_star(&corpus.train, prob, seed)?;
        let stats = DatasetStats::compute(&train, &[], &[]);
        let mut domains = BTreeMap::new();
        for s in &train {
            *domains.entry(s.domains.join("+")).or_insert(0) += 1;
        }
        println!(
            "KVRET* seed {seed}: {} train sessions, {:.2} turns each, {domains:?}",
            stats.train, stats.avg_turns
        );
    }
    Ok(())
}
