//! Dialogue logistic inference: given the true prefix `x_1..x_k` of a
//! session, decide for every later utterance `x_j` whether it is the next
//! one (`j = k + 1`). Scoring reuses the SLU model's current-utterance
//! encoder and retrieval, followed by a two-way softmax over `W_d h`.

use crate::data::DialogueSession;
use crate::error::{Error, Result};
use crate::memory::{MemoryBank, Retriever};
use crate::tensor::{softmax, ParamId, Tape, Var};

/// Class index of "is the next utterance".
pub const IS_NEXT: usize = 0;
/// Class index of "is not the next utterance".
pub const NOT_NEXT: usize = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DliExample {
    /// `k`: the context is turns `0..k` (0-based) in original order.
    pub context_len: usize,
    /// 0-based turn index of the candidate, in `k..n`.
    pub candidate: usize,
    pub label: bool,
}

impl DliExample {
    pub fn target(&self) -> usize {
        if self.label {
            IS_NEXT
        } else {
            NOT_NEXT
        }
    }
}

/// Candidate group for a context of `k` turns out of `n`.
pub fn candidate_group(turn_count: usize, k: usize) -> Result<Vec<DliExample>> {
    if k < 1 || k >= turn_count {
        return Err(Error::invalid(format!(
            "context length {k} must satisfy 1 <= k < {turn_count}"
        )));
    }
    Ok((k..turn_count)
        .map(|j| DliExample {
            context_len: k,
            candidate: j,
            label: j == k,
        })
        .collect())
}

pub fn make_candidates(session: &DialogueSession, k: usize) -> Result<Vec<DliExample>> {
    candidate_group(session.turns.len(), k)
}

/// Every group of a session, one per `k` in `1..n`.
pub fn session_groups(session: &DialogueSession) -> Vec<Vec<DliExample>> {
    (1..session.turns.len())
        .map(|k| candidate_group(session.turns.len(), k).expect("k in range"))
        .collect()
}

/// `W_d h` where `h` is retrieved for the candidate encoding over `memory`.
pub fn dli_logits(
    tape: &mut Tape<'_>,
    candidate: Var,
    memory: &MemoryBank,
    retriever: &Retriever,
    w_d: ParamId,
) -> Result<Var> {
    let h = retriever.knowledge(tape, candidate, memory)?;
    let w = tape.param(w_d);
    tape.matmul(w, h)
}

/// `(p(is next), p(not next))`.
pub fn dli_score(
    tape: &mut Tape<'_>,
    candidate: Var,
    memory: &MemoryBank,
    retriever: &Retriever,
    w_d: ParamId,
) -> Result<[f64; 2]> {
    let logits = dli_logits(tape, candidate, memory, retriever, w_d)?;
    let p = softmax(tape.value(logits).data())?;
    Ok([p[IS_NEXT], p[NOT_NEXT]])
}

/// Summed negative log-likelihood of the true labels.
pub fn dli_loss(scored: &[([f64; 2], bool)]) -> f64 {
    scored
        .iter()
        .map(|(p, label)| -(if *label { p[IS_NEXT] } else { p[NOT_NEXT] }).ln())
        .sum()
}

/// Differentiable [`dli_loss`] over logit nodes.
pub fn dli_loss_on_tape(tape: &mut Tape<'_>, logits: &[Var], examples: &[DliExample]) -> Result<Var> {
    if logits.len() != examples.len() || logits.is_empty() {
        return Err(Error::invalid(format!(
            "{} logits for {} candidates",
            logits.len(),
            examples.len()
        )));
    }
    let terms = logits
        .iter()
        .zip(examples)
        .map(|(&l, ex)| tape.nll(l, ex.target()))
        .collect::<Result<Vec<_>>>()?;
    tape.sum(&terms)
}
