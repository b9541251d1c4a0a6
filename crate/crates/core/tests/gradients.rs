mod common;

use ctx_slu::dli::{candidate_group, dli_loss_on_tape};
use ctx_slu::model::{slu_loss_on_tape, ModelDims, SluModel, SluVariant};
use ctx_slu::tensor::{grad_check, GradCheckReport, ParameterStore, Tape};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const STEP: f64 = 1e-5;
const TOL: f64 = 1e-4;

fn dims() -> ModelDims {
    ModelDims {
        vocab_size: 6,
        embedding_dim: 3,
        hidden_dim: 2,
        intent_count: 3,
        slot_label_count: 4,
    }
}

fn model(variant: SluVariant, seed: u64) -> (SluModel, ParameterStore) {
    let mut store = ParameterStore::new(seed);
    let model = SluModel::new(variant, dims(), &mut store).unwrap();
    common::randomize(&mut store, &mut ChaCha8Rng::seed_from_u64(seed), 0.8);
    (model, store)
}

/// SLU loss of the second turn of a two-turn dialogue.
fn slu_check(variant: SluVariant) -> GradCheckReport {
    let (model, mut store) = model(variant, 21);
    let history = vec![vec![1usize, 4, 2]];
    let tokens = [3usize, 5];
    grad_check(&mut store, STEP, |tape: &mut Tape<'_>| {
        let hist: &[Vec<usize>] = if variant.uses_memory() { &history } else { &[] };
        let h = model.context_knowledge(tape, hist, &tokens)?;
        let out = model.forward_slu(tape, &tokens, h)?;
        slu_loss_on_tape(tape, &out, 2, &[1, 3])
    })
    .unwrap()
}

#[test]
fn gradients_nomem() {
    let r = slu_check(SluVariant::NoMem);
    assert!(r.max_rel_error < TOL, "{r:?}");
}

#[test]
fn gradients_memnet() {
    let r = slu_check(SluVariant::MemNet);
    assert!(r.max_rel_error < TOL, "{r:?}");
}

#[test]
fn gradients_sden() {
    let r = slu_check(SluVariant::Sden);
    assert!(r.max_rel_error < TOL, "{r:?}");
}

#[test]
fn gradients_sden_dagger() {
    let r = slu_check(SluVariant::SdenDagger);
    assert!(r.max_rel_error < TOL, "{r:?}");
}

/// DLI loss for context `[x_1]` and candidates `x_2` (true) and `x_3`.
pub fn dli_check(variant: SluVariant) -> GradCheckReport {
    let (model, mut store) = model(variant, 22);
    let turns = [vec![1usize, 2], vec![3usize, 4, 1], vec![5usize]];
    let group = candidate_group(turns.len(), 1).unwrap();
    grad_check(&mut store, STEP, |tape: &mut Tape<'_>| {
        let memory = model.encode_memory(tape, &turns[..1])?;
        let logits = group
            .iter()
            .map(|g| {
                let c = model.encode_current(tape, &turns[g.candidate])?;
                model.dli_logits(tape, c, &memory)
            })
            .collect::<ctx_slu::Result<Vec<_>>>()?;
        dli_loss_on_tape(tape, &logits, &group)
    })
    .unwrap()
}

#[test]
fn gradients_dli_head() {
    for variant in [SluVariant::MemNet, SluVariant::Sden, SluVariant::SdenDagger] {
        let r = dli_check(variant);
        assert!(r.max_rel_error < TOL, "{variant}: {r:?}");
    }
}

/// With the knowledge columns of the second tagger layer zeroed, the
/// concatenating variant computes exactly the single-turn tagger.
#[test]
fn zeroed_knowledge_columns_reduce_to_nomem() {
    let (nomem, nomem_store) = model(SluVariant::NoMem, 5);
    let (dagger, mut store) = model(SluVariant::SdenDagger, 6);
    let k = dims().knowledge_dim();
    for name in nomem_store.names().map(String::from).collect::<Vec<_>>() {
        let src = nomem_store.get(nomem_store.id(&name).unwrap()).clone();
        let dst = store.get_mut(store.id(&name).unwrap());
        if src.shape() == dst.shape() {
            *dst = src;
            continue;
        }
        // Layer-2 input weights: [hid, k] in NoMem, [hid, 2k] here.
        let (rows, wide) = (src.shape()[0], dst.shape()[1]);
        assert_eq!(wide, 2 * k, "{name}");
        for r in 0..rows {
            for c in 0..wide {
                dst.data_mut()[r * wide + c] = if c < k { src.data()[r * k + c] } else { 0.0 };
            }
        }
    }
    let history = vec![vec![1usize, 2, 3], vec![4usize]];
    let tokens = [5usize, 1, 2];
    let a = nomem.predict(&nomem_store, &[] as &[Vec<usize>], &tokens).unwrap();
    let b = dagger.predict(&store, &history, &tokens).unwrap();
    assert!(common::max_abs_diff(&a.intent, &b.intent) < 1e-9);
    for (x, y) in a.slots.iter().zip(&b.slots) {
        assert!(common::max_abs_diff(x, y) < 1e-9);
    }
}
