//! Sessions converted to ids, and the per-session forward pass shared by
//! training and evaluation.

use crate::data::{DialogueSession, Vocab};
use crate::dli::{candidate_group, dli_loss_on_tape};
use crate::error::{Error, Result};
use crate::memory::MemoryBank;
use crate::model::{slu_loss_on_tape, SluModel, SluOutput};
use crate::tensor::{Tape, Var};

/// A labelled driver turn plus the dialogue-inference groups it carries.
#[derive(Clone, Debug)]
pub struct EncodedExample {
    pub session: usize,
    pub turn: usize,
    pub intent: usize,
    pub slots: Vec<usize>,
    pub gold_tags: Vec<String>,
    /// Context lengths `k` of the candidate groups attached to this example.
    pub dli_contexts: Vec<usize>,
}

#[derive(Clone, Debug)]
pub struct EncodedDataset {
    /// Token ids per turn per session.
    pub sessions: Vec<Vec<Vec<usize>>>,
    pub examples: Vec<EncodedExample>,
}

impl EncodedDataset {
    /// Slot labels unseen in `vocab` are trained as `O`; gold tag strings
    /// are kept verbatim for scoring.
    pub fn new(sessions: &[DialogueSession], vocab: &Vocab) -> Result<Self> {
        let mut encoded = Vec::with_capacity(sessions.len());
        let mut examples = Vec::new();
        for (si, session) in sessions.iter().enumerate() {
            session.validate()?;
            encoded.push(session.turns.iter().map(|t| vocab.encode(&t.tokens)).collect());
            let first = examples.len();
            for (ti, turn) in session.driver_turns() {
                let intent_name = turn.intent.as_deref().unwrap_or_default();
                let intent = vocab.intent_id(intent_name).ok_or_else(|| {
                    Error::invalid(format!(
                        "session {}: intent {intent_name:?} not in vocabulary",
                        session.id
                    ))
                })?;
                let tags = turn.tags.clone().unwrap_or_default();
                examples.push(EncodedExample {
                    session: si,
                    turn: ti,
                    intent,
                    slots: tags.iter().map(|t| vocab.slot_id(t).unwrap_or(0)).collect(),
                    gold_tags: tags,
                    dli_contexts: Vec::new(),
                });
            }
            let owned = &mut examples[first..];
            if owned.is_empty() {
                continue;
            }
            // Group k goes to the last example at or before turn k, or to
            // the first example when the session opens with other turns.
            for k in 1..session.turns.len() {
                let owner = owned.iter().rposition(|e| e.turn <= k).unwrap_or(0);
                owned[owner].dli_contexts.push(k);
            }
        }
        Ok(EncodedDataset {
            sessions: encoded,
            examples,
        })
    }

    pub fn group_count(&self) -> usize {
        self.examples.iter().map(|e| e.dli_contexts.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }
}

/// Lazily encoded memory slots and current-utterance encodings of one session.
struct SessionCache {
    memory: Vec<Option<Var>>,
    current: Vec<Option<Var>>,
}

impl SessionCache {
    fn new(n: usize) -> Self {
        SessionCache {
            memory: vec![None; n],
            current: vec![None; n],
        }
    }

    fn memory(&mut self, tape: &mut Tape<'_>, model: &SluModel, turns: &[Vec<usize>], k: usize) -> Result<MemoryBank> {
        for i in 0..k {
            if self.memory[i].is_none() {
                let bank = model.encode_memory(tape, &turns[i..=i])?;
                self.memory[i] = Some(bank.slots[0]);
            }
        }
        Ok(MemoryBank {
            slots: self.memory[..k].iter().map(|m| m.expect("encoded")).collect(),
        })
    }

    fn current(&mut self, tape: &mut Tape<'_>, model: &SluModel, turns: &[Vec<usize>], j: usize) -> Result<Var> {
        if let Some(c) = self.current[j] {
            return Ok(c);
        }
        let c = model.encode_current(tape, &turns[j])?;
        self.current[j] = Some(c);
        Ok(c)
    }
}

pub(crate) struct SessionPass {
    pub outputs: Vec<SluOutput>,
    /// Per-example SLU loss nodes.
    pub slu: Vec<Var>,
    /// Per-group DLI loss nodes.
    pub dli: Vec<Var>,
}

/// Runs `examples` (all from one session) on `tape`; DLI groups only when
/// `with_dli`.
pub(crate) fn session_pass(
    tape: &mut Tape<'_>,
    model: &SluModel,
    turns: &[Vec<usize>],
    examples: &[&EncodedExample],
    with_dli: bool,
) -> Result<SessionPass> {
    let mut cache = SessionCache::new(turns.len());
    let mut pass = SessionPass {
        outputs: Vec::with_capacity(examples.len()),
        slu: Vec::with_capacity(examples.len()),
        dli: Vec::new(),
    };
    for ex in examples {
        let h = if model.variant.uses_memory() {
            let memory = cache.memory(tape, model, turns, ex.turn)?;
            let c = cache.current(tape, model, turns, ex.turn)?;
            Some(model.knowledge(tape, c, &memory)?)
        } else {
            None
        };
        let out = model.forward_slu(tape, &turns[ex.turn], h)?;
        pass.slu.push(slu_loss_on_tape(tape, &out, ex.intent, &ex.slots)?);
        pass.outputs.push(out);

        if with_dli {
            for &k in &ex.dli_contexts {
                let group = candidate_group(turns.len(), k)?;
                let memory = cache.memory(tape, model, turns, k)?;
                let logits = group
                    .iter()
                    .map(|cand| {
                        let c = cache.current(tape, model, turns, cand.candidate)?;
                        model.dli_logits(tape, c, &memory)
                    })
                    .collect::<Result<Vec<_>>>()?;
                pass.dli.push(dli_loss_on_tape(tape, &logits, &group)?);
            }
        }
    }
    Ok(pass)
}
