//! Contextual SLU tagger: BiGRU → BiLSTM with variant-specific use of the
//! knowledge vector `h`, an intent head over the final BiLSTM state and a
//! slot head over every BiLSTM output.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::memory::{embed_tokens, encode_history, encode_utterance, FeedForward, MemoryBank, Retriever};
use crate::rnn::{bi_encode, BiGru, BiLstm, LstmState};
use crate::tensor::{argmax, softmax, ParamId, ParameterStore, Tape, Var};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SluVariant {
    /// Single-turn tagger, no memory.
    NoMem,
    /// Attention retrieval, `h` concatenated to every BiLSTM input.
    MemNet,
    /// Sequential retrieval, `h` initializes the BiLSTM states.
    Sden,
    /// Sequential retrieval, `h` concatenated to every BiLSTM input.
    SdenDagger,
}

impl SluVariant {
    pub const ALL: [SluVariant; 4] = [
        SluVariant::NoMem,
        SluVariant::MemNet,
        SluVariant::Sden,
        SluVariant::SdenDagger,
    ];

    pub fn uses_memory(self) -> bool {
        self != SluVariant::NoMem
    }

    fn concatenates_h(self) -> bool {
        matches!(self, SluVariant::MemNet | SluVariant::SdenDagger)
    }
}

impl fmt::Display for SluVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            SluVariant::NoMem => "NoMem",
            SluVariant::MemNet => "MemNet",
            SluVariant::Sden => "Sden",
            SluVariant::SdenDagger => "SdenDagger",
        };
        f.write_str(s)
    }
}

impl FromStr for SluVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        SluVariant::ALL
            .into_iter()
            .find(|v| v.to_string().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::invalid(format!("unknown variant {s:?} (NoMem, MemNet, Sden, SdenDagger)")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelDims {
    pub vocab_size: usize,
    pub embedding_dim: usize,
    /// Per direction; bidirectional outputs are twice this.
    pub hidden_dim: usize,
    pub intent_count: usize,
    pub slot_label_count: usize,
}

impl ModelDims {
    pub fn knowledge_dim(&self) -> usize {
        2 * self.hidden_dim
    }
}

#[derive(Clone, Debug)]
pub struct ContextModule {
    pub memory_encoder: BiGru,
    pub current_encoder: BiGru,
    pub retriever: Retriever,
}

/// Affine maps from `h` to the BiLSTM's initial `(hidden, cell)` per direction.
#[derive(Clone, Debug)]
pub struct StateInit {
    pub h_fwd: FeedForward,
    pub c_fwd: FeedForward,
    pub h_bwd: FeedForward,
    pub c_bwd: FeedForward,
}

#[derive(Clone, Debug)]
pub struct Tagger {
    pub layer1: BiGru,
    pub layer2: BiLstm,
    pub init: Option<StateInit>,
    /// `U`, `[intent_count, 2 * hidden]`.
    pub intent_out: ParamId,
    /// `V`, `[slot_label_count, 2 * hidden]`.
    pub slot_out: ParamId,
}

#[derive(Clone, Debug)]
pub struct SluModel {
    pub variant: SluVariant,
    pub dims: ModelDims,
    pub embedding: ParamId,
    pub context: Option<ContextModule>,
    pub tagger: Tagger,
    /// `W_d`, `[2, 2 * hidden]`; present for every contextual variant.
    pub dli_head: Option<ParamId>,
}

/// Logit nodes of one forward pass.
#[derive(Clone, Debug)]
pub struct SluOutput {
    pub intent_logits: Var,
    pub slot_logits: Vec<Var>,
}

/// Intent distribution and one slot distribution per token.
#[derive(Clone, Debug, PartialEq)]
pub struct SluPrediction {
    pub intent: Vec<f64>,
    pub slots: Vec<Vec<f64>>,
}

impl SluPrediction {
    pub fn intent_label(&self) -> usize {
        argmax(&self.intent)
    }

    pub fn slot_labels(&self) -> Vec<usize> {
        self.slots.iter().map(|p| argmax(p)).collect()
    }
}

impl SluModel {
    /// Registers all parameters of `variant` in `store`.
    pub fn new(variant: SluVariant, dims: ModelDims, store: &mut ParameterStore) -> Result<Self> {
        let ModelDims {
            vocab_size,
            embedding_dim: emb,
            hidden_dim: hid,
            intent_count,
            slot_label_count,
        } = dims;
        if [vocab_size, emb, hid, intent_count, slot_label_count].contains(&0) {
            return Err(Error::invalid(format!(
                "all model dimensions must be positive: {dims:?}"
            )));
        }
        let kdim = dims.knowledge_dim();
        let embedding = store.add_uniform("embedding", &[vocab_size, emb])?;

        let context = if variant.uses_memory() {
            let memory_encoder = BiGru::new(store, "memory.encoder", emb, hid)?;
            let current_encoder = BiGru::new(store, "memory.current", emb, hid)?;
            let retriever = match variant {
                SluVariant::MemNet => Retriever::Attention {
                    w_o: store.add_uniform("memory.w_o", &[kdim, kdim])?,
                },
                _ => Retriever::Sequential {
                    ff: FeedForward::new(store, "memory.ff", 2 * kdim, hid)?,
                    gru_g: BiGru::new(store, "memory.gru_g", hid, hid)?,
                },
            };
            Some(ContextModule {
                memory_encoder,
                current_encoder,
                retriever,
            })
        } else {
            None
        };

        let layer1 = BiGru::new(store, "tagger.layer1", emb, hid)?;
        let layer2_in = if variant.concatenates_h() { 2 * kdim } else { kdim };
        let layer2 = BiLstm::new(store, "tagger.layer2", layer2_in, hid)?;
        let init = if variant == SluVariant::Sden {
            Some(StateInit {
                h_fwd: FeedForward::new(store, "tagger.init.h_fwd", kdim, hid)?,
                c_fwd: FeedForward::new(store, "tagger.init.c_fwd", kdim, hid)?,
                h_bwd: FeedForward::new(store, "tagger.init.h_bwd", kdim, hid)?,
                c_bwd: FeedForward::new(store, "tagger.init.c_bwd", kdim, hid)?,
            })
        } else {
            None
        };
        let tagger = Tagger {
            layer1,
            layer2,
            init,
            intent_out: store.add_uniform("tagger.intent_out", &[intent_count, kdim])?,
            slot_out: store.add_uniform("tagger.slot_out", &[slot_label_count, kdim])?,
        };
        let dli_head = if variant.uses_memory() {
            Some(store.add_uniform("dli.w_d", &[2, kdim])?)
        } else {
            None
        };

        Ok(SluModel {
            variant,
            dims,
            embedding,
            context,
            tagger,
            dli_head,
        })
    }

    fn context(&self) -> Result<&ContextModule> {
        self.context.as_ref().ok_or_else(|| Error::Variant {
            variant: self.variant.to_string(),
            reason: "has no memory".into(),
        })
    }

    /// `c = BiGRU_c(x)`.
    pub fn encode_current(&self, tape: &mut Tape<'_>, tokens: &[usize]) -> Result<Var> {
        let ctx = self.context()?;
        encode_utterance(tape, tokens, self.embedding, &ctx.current_encoder)
    }

    /// `m_i = BiGRU_m(x_i)` for every history utterance.
    pub fn encode_memory<T: AsRef<[usize]>>(&self, tape: &mut Tape<'_>, history: &[T]) -> Result<MemoryBank> {
        let ctx = self.context()?;
        encode_history(tape, history, self.embedding, &ctx.memory_encoder)
    }

    pub fn knowledge(&self, tape: &mut Tape<'_>, c: Var, memory: &MemoryBank) -> Result<Var> {
        self.context()?.retriever.knowledge(tape, c, memory)
    }

    /// `h` for `tokens` given `history`, or `None` for the single-turn variant.
    pub fn context_knowledge<T: AsRef<[usize]>>(
        &self,
        tape: &mut Tape<'_>,
        history: &[T],
        tokens: &[usize],
    ) -> Result<Option<Var>> {
        if !self.variant.uses_memory() {
            return Ok(None);
        }
        let memory = self.encode_memory(tape, history)?;
        let c = self.encode_current(tape, tokens)?;
        self.knowledge(tape, c, &memory).map(Some)
    }

    pub fn forward_slu(&self, tape: &mut Tape<'_>, tokens: &[usize], h: Option<Var>) -> Result<SluOutput> {
        if tokens.is_empty() {
            return Err(Error::invalid("empty utterance"));
        }
        let h = match (self.variant.uses_memory(), h) {
            (true, Some(h)) => Some(h),
            (false, None) => None,
            (true, None) => {
                return Err(Error::Variant {
                    variant: self.variant.to_string(),
                    reason: "requires a knowledge vector".into(),
                })
            }
            (false, Some(_)) => {
                return Err(Error::Variant {
                    variant: self.variant.to_string(),
                    reason: "takes no knowledge vector".into(),
                })
            }
        };

        let xs = embed_tokens(tape, self.embedding, tokens)?;
        let layer1 = self.tagger.layer1.encode(tape, &xs)?;
        let mut inputs = Vec::with_capacity(layer1.outputs.len());
        for o in layer1.outputs {
            let o = tape.train_dropout(o)?;
            inputs.push(match h {
                Some(h) if self.variant.concatenates_h() => tape.concat(&[o, h])?,
                _ => o,
            });
        }

        let init = match (&self.tagger.init, h) {
            (Some(init), Some(h)) => Some((
                LstmState {
                    h: init.h_fwd.apply(tape, h)?,
                    c: init.c_fwd.apply(tape, h)?,
                },
                LstmState {
                    h: init.h_bwd.apply(tape, h)?,
                    c: init.c_bwd.apply(tape, h)?,
                },
            )),
            _ => None,
        };
        let lstm = &self.tagger.layer2;
        let layer2 = bi_encode(tape, &inputs, &lstm.fwd, &lstm.bwd, init, false)?;

        let u = tape.param(self.tagger.intent_out);
        let intent_logits = tape.matmul(u, layer2.final_state)?;
        let v = tape.param(self.tagger.slot_out);
        let slot_logits = layer2
            .outputs
            .iter()
            .map(|&o| tape.matmul(v, o))
            .collect::<Result<Vec<_>>>()?;
        Ok(SluOutput {
            intent_logits,
            slot_logits,
        })
    }

    /// Two-class logits `W_d h` for a candidate encoding `c_j`.
    pub fn dli_logits(&self, tape: &mut Tape<'_>, candidate: Var, memory: &MemoryBank) -> Result<Var> {
        let w_d = self.dli_head.ok_or_else(|| Error::Variant {
            variant: self.variant.to_string(),
            reason: "dialogue logistic inference needs a knowledge vector".into(),
        })?;
        crate::dli::dli_logits(tape, candidate, memory, &self.context()?.retriever, w_d)
    }

    /// Inference-mode prediction for one utterance.
    pub fn predict<T: AsRef<[usize]>>(
        &self,
        store: &ParameterStore,
        history: &[T],
        tokens: &[usize],
    ) -> Result<SluPrediction> {
        let mut tape = Tape::inference(store);
        let h = self.context_knowledge(&mut tape, history, tokens)?;
        let out = self.forward_slu(&mut tape, tokens, h)?;
        prediction(&tape, &out)
    }
}

pub fn prediction(tape: &Tape<'_>, out: &SluOutput) -> Result<SluPrediction> {
    Ok(SluPrediction {
        intent: softmax(tape.value(out.intent_logits).data())?,
        slots: out
            .slot_logits
            .iter()
            .map(|&l| softmax(tape.value(l).data()))
            .collect::<Result<Vec<_>>>()?,
    })
}

fn nll_of(dist: &[f64], target: usize, what: &'static str) -> Result<f64> {
    match dist.get(target) {
        Some(p) => Ok(-p.ln()),
        None => Err(Error::OutOfRange {
            what,
            index: target,
            size: dist.len(),
        }),
    }
}

/// `-log p(intent) - sum_t log p(slot_t)`.
pub fn slu_loss(pred: &SluPrediction, intent: usize, slots: &[usize]) -> Result<f64> {
    if slots.len() != pred.slots.len() {
        return Err(Error::invalid(format!(
            "{} slot targets for {} tokens",
            slots.len(),
            pred.slots.len()
        )));
    }
    let mut loss = nll_of(&pred.intent, intent, "intent label")?;
    for (dist, &t) in pred.slots.iter().zip(slots) {
        loss += nll_of(dist, t, "slot label")?;
    }
    Ok(loss)
}

/// Differentiable [`slu_loss`] on logits.
pub fn slu_loss_on_tape(tape: &mut Tape<'_>, out: &SluOutput, intent: usize, slots: &[usize]) -> Result<Var> {
    if slots.len() != out.slot_logits.len() {
        return Err(Error::invalid(format!(
            "{} slot targets for {} tokens",
            slots.len(),
            out.slot_logits.len()
        )));
    }
    let mut terms = vec![tape.nll(out.intent_logits, intent)?];
    for (&logits, &t) in out.slot_logits.iter().zip(slots) {
        terms.push(tape.nll(logits, t)?);
    }
    tape.sum(&terms)
}
