//! Dialogue-history memory and retrieval of the context knowledge vector.
//!
//! History utterances are encoded into memory slots `m_i` (final states of
//! a BiGRU) and the current utterance into `c` by a second BiGRU. The
//! knowledge vector `h` is then either
//!
//! * attention based: `p = softmax(<c, m_i>)`, `m_ws = sum_i p_i m_i`,
//!   `h = W_o (c + m_ws)`, or
//! * sequential: `g_i = sigmoid(FF([c ; m_i]))`, `h = BiGRU_g(g_1..g_k)`.
//!
//! With no history, the attention path uses `h = W_o c` and the sequential
//! path uses `h = 0`.

use crate::error::{Error, Result};
use crate::rnn::BiGru;
use crate::tensor::{ParamId, ParameterStore, Tape, Tensor, Var};

/// Looks up token embeddings, applying the tape's training dropout to each.
pub fn embed_tokens(tape: &mut Tape<'_>, table: ParamId, tokens: &[usize]) -> Result<Vec<Var>> {
    tokens
        .iter()
        .map(|&t| {
            let e = tape.embedding(table, t)?;
            tape.train_dropout(e)
        })
        .collect()
}

/// Encoded history `m_1..m_k` in chronological order.
#[derive(Clone, Debug, Default)]
pub struct MemoryBank {
    pub slots: Vec<Var>,
}

impl MemoryBank {
    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    /// The first `k` slots.
    pub fn prefix(&self, k: usize) -> MemoryBank {
        MemoryBank {
            slots: self.slots[..k.min(self.slots.len())].to_vec(),
        }
    }
}

/// Encodes a single utterance to the final state of `encoder`.
pub fn encode_utterance(tape: &mut Tape<'_>, tokens: &[usize], embedding: ParamId, encoder: &BiGru) -> Result<Var> {
    if tokens.is_empty() {
        return Err(Error::invalid("empty utterance"));
    }
    let xs = embed_tokens(tape, embedding, tokens)?;
    Ok(encoder.encode(tape, &xs)?.final_state)
}

pub fn encode_history<T: AsRef<[usize]>>(
    tape: &mut Tape<'_>,
    history: &[T],
    embedding: ParamId,
    encoder: &BiGru,
) -> Result<MemoryBank> {
    let slots = history
        .iter()
        .map(|u| encode_utterance(tape, u.as_ref(), embedding, encoder))
        .collect::<Result<Vec<_>>>()?;
    Ok(MemoryBank { slots })
}

/// Attention distribution over memory and the weighted memory sum.
pub fn attend(tape: &mut Tape<'_>, c: Var, memory: &MemoryBank) -> Result<(Var, Var)> {
    if memory.is_empty() {
        return Err(Error::invalid("attention over an empty memory"));
    }
    let stacked = tape.stack(&memory.slots)?;
    let scores = tape.matmul(stacked, c)?;
    let p = tape.softmax(scores)?;
    let m_ws = tape.weighted_sum(p, &memory.slots)?;
    Ok((p, m_ws))
}

/// `h = W_o (c + m_ws)`.
pub fn memnet_knowledge(tape: &mut Tape<'_>, c: Var, m_ws: Var, w_o: ParamId) -> Result<Var> {
    let shape = tape.store().get(w_o).shape().to_vec();
    if shape.len() != 2 || shape[0] != shape[1] {
        return Err(Error::ShapeMismatch {
            op: "memnet projection (must be square)",
            left: shape,
            right: tape.shape(c).to_vec(),
        });
    }
    let sum = tape.add(c, m_ws)?;
    let w = tape.param(w_o);
    tape.matmul(w, sum)
}

/// Single affine layer.
#[derive(Clone, Debug)]
pub struct FeedForward {
    pub w: ParamId,
    pub b: ParamId,
}

impl FeedForward {
    pub fn new(store: &mut ParameterStore, prefix: &str, input_dim: usize, output_dim: usize) -> Result<Self> {
        Ok(FeedForward {
            w: store.add_uniform(&format!("{prefix}.w"), &[output_dim, input_dim])?,
            b: store.add_zeros(&format!("{prefix}.b"), &[output_dim])?,
        })
    }

    pub fn apply(&self, tape: &mut Tape<'_>, x: Var) -> Result<Var> {
        let (w, b) = (tape.param(self.w), tape.param(self.b));
        tape.affine(w, x, b)
    }
}

/// `g_i = sigmoid(FF([c ; m_i]))`, `h = BiGRU_g(g_1..g_k).final_state`.
pub fn sden_knowledge(
    tape: &mut Tape<'_>,
    c: Var,
    memory: &MemoryBank,
    ff: &FeedForward,
    gru_g: &BiGru,
) -> Result<Var> {
    if memory.is_empty() {
        return Err(Error::invalid("sequential retrieval over an empty memory"));
    }
    let gs = memory
        .slots
        .iter()
        .map(|&m| {
            let joined = tape.concat(&[c, m])?;
            let pre = ff.apply(tape, joined)?;
            Ok(tape.sigmoid(pre))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(gru_g.encode(tape, &gs)?.final_state)
}

/// The retrieval half of a contextual model.
#[derive(Clone, Debug)]
pub enum Retriever {
    Attention { w_o: ParamId },
    Sequential { ff: FeedForward, gru_g: BiGru },
}

impl Retriever {
    /// Knowledge vector for `c` given (possibly empty) `memory`.
    pub fn knowledge(&self, tape: &mut Tape<'_>, c: Var, memory: &MemoryBank) -> Result<Var> {
        match self {
            Retriever::Attention { w_o } => {
                if memory.is_empty() {
                    let w = tape.param(*w_o);
                    return tape.matmul(w, c);
                }
                let (_, m_ws) = attend(tape, c, memory)?;
                memnet_knowledge(tape, c, m_ws, *w_o)
            }
            Retriever::Sequential { ff, gru_g } => {
                if memory.is_empty() {
                    return Ok(tape.input(Tensor::zeros(&[gru_g.output_dim()])));
                }
                sden_knowledge(tape, c, memory, ff, gru_g)
            }
        }
    }
}
