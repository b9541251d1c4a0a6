use std::collections::{BTreeSet, HashMap};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::DialogueSession;
use crate::error::{Error, Result};

pub const PAD_ID: usize = 0;
pub const UNK_ID: usize = 1;
const PAD: &str = "<pad>";
const UNK: &str = "<unk>";

/// Token, slot-label and intent inventories.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vocab {
    tokens: Vec<String>,
    slot_labels: Vec<String>,
    intents: Vec<String>,
    #[serde(skip)]
    token_index: HashMap<String, usize>,
    #[serde(skip)]
    slot_index: HashMap<String, usize>,
    #[serde(skip)]
    intent_index: HashMap<String, usize>,
}

fn index_of(items: &[String]) -> HashMap<String, usize> {
    items.iter().enumerate().map(|(i, s)| (s.clone(), i)).collect()
}

impl Vocab {
    fn from_parts(tokens: Vec<String>, slot_labels: Vec<String>, intents: Vec<String>) -> Self {
        Vocab {
            token_index: index_of(&tokens),
            slot_index: index_of(&slot_labels),
            intent_index: index_of(&intents),
            tokens,
            slot_labels,
            intents,
        }
    }

    pub fn token_count(&self) -> usize {
        self.tokens.len()
    }

    pub fn slot_label_count(&self) -> usize {
        self.slot_labels.len()
    }

    pub fn intent_count(&self) -> usize {
        self.intents.len()
    }

    pub fn token_id(&self, token: &str) -> usize {
        self.token_index.get(token).copied().unwrap_or(UNK_ID)
    }

    pub fn encode<S: AsRef<str>>(&self, tokens: &[S]) -> Vec<usize> {
        tokens.iter().map(|t| self.token_id(t.as_ref())).collect()
    }

    pub fn token(&self, id: usize) -> &str {
        &self.tokens[id]
    }

    pub fn slot_id(&self, label: &str) -> Option<usize> {
        self.slot_index.get(label).copied()
    }

    pub fn slot_label(&self, id: usize) -> &str {
        &self.slot_labels[id]
    }

    pub fn slot_labels(&self) -> &[String] {
        &self.slot_labels
    }

    pub fn intent_id(&self, intent: &str) -> Option<usize> {
        self.intent_index.get(intent).copied()
    }

    pub fn intent(&self, id: usize) -> &str {
        &self.intents[id]
    }

    pub fn intents(&self) -> &[String] {
        &self.intents
    }

    /// FNV-1a over the serialized inventories; ties checkpoints to vocab files.
    pub fn fingerprint(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("vocab serializes");
        let mut h: u64 = 0xcbf29ce484222325;
        for b in bytes {
            h ^= b as u64;
            h = h.wrapping_mul(0x100000001b3);
        }
        format!("{h:016x}")
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let raw: Vocab = serde_json::from_str(&text)?;
        if raw.tokens.get(PAD_ID).map(String::as_str) != Some(PAD)
            || raw.tokens.get(UNK_ID).map(String::as_str) != Some(UNK)
        {
            return Err(Error::invalid(format!(
                "{}: reserved token ids missing",
                path.display()
            )));
        }
        Ok(Vocab::from_parts(raw.tokens, raw.slot_labels, raw.intents))
    }
}

/// Builds inventories from training sessions only.
///
/// Token ids follow `<pad>`, `<unk>`, then frequency descending with ties
/// broken lexicographically; tokens rarer than `min_freq` map to `<unk>`.
/// Slot labels are `O` followed by `B-x`, `I-x` for every slot type seen,
/// types sorted by name.
pub fn build_vocab(train: &[DialogueSession], min_freq: usize) -> Vocab {
    let mut counts: HashMap<&str, usize> = HashMap::new();
    let mut slot_types = BTreeSet::new();
    let mut intents = BTreeSet::new();
    for session in train {
        for turn in &session.turns {
            for tok in &turn.tokens {
                *counts.entry(tok.as_str()).or_default() += 1;
            }
            for tag in turn.tags.iter().flatten() {
                if let Some(kind) = tag.strip_prefix("B-").or_else(|| tag.strip_prefix("I-")) {
                    slot_types.insert(kind.to_string());
                }
            }
            if let Some(intent) = &turn.intent {
                intents.insert(intent.clone());
            }
        }
    }
    let mut ranked: Vec<(&str, usize)> = counts
        .into_iter()
        .filter(|(t, c)| *c >= min_freq.max(1) && *t != PAD && *t != UNK)
        .collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));

    let mut tokens = vec![PAD.to_string(), UNK.to_string()];
    tokens.extend(ranked.into_iter().map(|(t, _)| t.to_string()));
    let mut slot_labels = vec!["O".to_string()];
    for kind in slot_types {
        slot_labels.push(format!("B-{kind}"));
        slot_labels.push(format!("I-{kind}"));
    }
    Vocab::from_parts(tokens, slot_labels, intents.into_iter().collect())
}
