//! Attention over encoded history, and the two ways of turning it into
//! context knowledge.
//!
//! cargo run --release --example memory_retrieval

use ctx_slu::memory::attend;
use ctx_slu::tensor::{ParameterStore, Tape};
use ctx_slu::{ModelDims, SluModel, SluVariant};

fn main() -> ctx_slu::Result<()> {
    let dims = ModelDims {
        vocab_size: 10,
        embedding_dim: 6,
        hidden_dim: 4,
        intent_count: 2,
        slot_label_count: 3,
    };
    let history = vec![vec![1usize, 2, 3], vec![4, 5], vec![6, 7, 8, 9]];
    let current = [2usize, 3];

    for variant in [SluVariant::MemNet, SluVariant::Sden] {
        let mut store = ParameterStore::new(3);
        let model = SluModel::new(variant, dims, &mut store)?;
        let mut tape = Tape::inference(&store);
        let memory = model.encode_memory(&mut tape, &history)?;
        let c = model.encode_current(&mut tape, &current)?;
        let (p, _) = attend(&mut tape, c, &memory)?;
        let h = model.knowledge(&mut tape, c, &memory)?;
        println!("{variant}");
        println!("  attention  {:.4?}", tape.value(p).data());
        println!("  knowledge  {:.4?}", tape.value(h).data());

        // Reversing the history changes SDEN's knowledge but not MemNet's.
        let reversed: Vec<_> = history.iter().rev().cloned().collect();
        let memory = model.encode_memory(&mut tape, &reversed)?;
        let h_rev = model.knowledge(&mut tape, c, &memory)?;
        let diff = tape
            .value(h)
            .data()
            .iter()
            .zip(tape.value(h_rev).data())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        println!("  max change after reversing history {diff:.2e}");
    }
    Ok(())
}
