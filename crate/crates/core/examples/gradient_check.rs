//! Finite-difference check of every model variant.
//!
//! cargo run --release --example gradient_check

use ctx_slu::model::slu_loss_on_tape;
use ctx_slu::tensor::{grad_check, ParameterStore, Tape};
use ctx_slu::{ModelDims, SluModel, SluVariant};

fn main() -> ctx_slu::Result<()> {
    let dims = ModelDims {
        vocab_size: 8,
        embedding_dim: 4,
        hidden_dim: 3,
        intent_count: 3,
        slot_label_count: 5,
    };
    let history = vec![vec![1usize, 2, 3], vec![4, 5]];
    let tokens = [6usize, 7, 2];
    for variant in SluVariant::ALL {
        let mut store = ParameterStore::new(7);
        let model = SluModel::new(variant, dims, &mut store)?;
        let report = grad_check(&mut store, 1e-5, |tape: &mut Tape<'_>| {
            let h = model.context_knowledge(tape, &history, &tokens)?;
            let out = model.forward_slu(tape, &tokens, h)?;
            slu_loss_on_tape(tape, &out, 1, &[0, 3, 4])
        })?;
        println!(
            "{:<11} {:>5} entries  max rel error {:.2e}  at {:?}",
            variant.to_string(),
            report.checked,
            report.max_rel_error,
            report.worst
        );
    }
    Ok(())
}
