//! Candidate groups for next-utterance inference on one session, scored by
//! an untrained model.
//!
//! cargo run --release --example dli_candidates [KVRET_DIR]

use std::path::PathBuf;

use ctx_slu::data::{build_vocab, load_kvret};
use ctx_slu::dli::session_groups;
use ctx_slu::tensor::{softmax, ParameterStore, Tape};
use ctx_slu::{SluModel, SluVariant, TrainConfig};

fn main() -> ctx_slu::Result<()> {
    let dir = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/kvret_mini"));
    let corpus = load_kvret(&dir)?;
    let vocab = build_vocab(&corpus.train, 1);
    let mut store = ParameterStore::new(1);
    let model = SluModel::new(SluVariant::SdenDagger, TrainConfig::default().dims(&vocab), &mut store)?;

    let session = &corpus.train[0];
    let turns: Vec<Vec<usize>> = session.turns.iter().map(|t| vocab.encode(&t.tokens)).collect();
    for (i, t) in session.turns.iter().enumerate() {
        println!("{i}: {}", t.tokens.join(" "));
    }
    let mut tape = Tape::inference(&store);
    for group in session_groups(session) {
        let k = group[0].context_len;
        let memory = model.encode_memory(&mut tape, &turns[..k])?;
        println!("context 0..{k}");
        for ex in group {
            let c = model.encode_current(&mut tape, &turns[ex.candidate])?;
            let logits = model.dli_logits(&mut tape, c, &memory)?;
            let p = softmax(tape.value(logits).data())?;
            println!("  candidate {}  next={}  p(next)={:.3}", ex.candidate, ex.label, p[0]);
        }
    }
    Ok(())
}
