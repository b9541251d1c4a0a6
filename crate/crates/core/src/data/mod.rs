//! Dialogue sessions, the KVRET loader and its multi-domain recombination,
//! SLU example construction and vocabularies.

mod iob;
mod kvret;
mod star;
mod stats;
mod tokenize;
mod vocab;

pub use iob::{derive_iob, IobOutcome};
pub use kvret::{load_kvret, load_kvret_split, KvretCorpus, SkipReport, KVRET_SPLIT_FILES};
pub use star::build_kvret_star;
pub use stats::DatasetStats;
pub use tokenize::tokenize;
pub use vocab::{build_vocab, Vocab, PAD_ID, UNK_ID};

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Speaker {
    Driver,
    Assistant,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Turn {
    pub speaker: Speaker,
    pub tokens: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tags: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub intent: Option<String>,
}

impl Turn {
    pub fn is_labelled_driver(&self) -> bool {
        self.speaker == Speaker::Driver && self.tags.is_some() && self.intent.is_some()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DialogueSession {
    pub id: String,
    pub domains: Vec<String>,
    pub turns: Vec<Turn>,
}

impl DialogueSession {
    pub fn driver_turns(&self) -> impl Iterator<Item = (usize, &Turn)> {
        self.turns.iter().enumerate().filter(|(_, t)| t.is_labelled_driver())
    }

    /// Checks per-turn tagging invariants.
    pub fn validate(&self) -> Result<()> {
        for (i, turn) in self.turns.iter().enumerate() {
            if turn.tokens.is_empty() {
                return Err(Error::invalid(format!("session {} turn {i}: empty utterance", self.id)));
            }
            if let Some(tags) = &turn.tags {
                if tags.len() != turn.tokens.len() {
                    return Err(Error::invalid(format!(
                        "session {} turn {i}: {} tags for {} tokens",
                        self.id,
                        tags.len(),
                        turn.tokens.len()
                    )));
                }
            }
        }
        Ok(())
    }
}

/// One supervised SLU instance: a driver turn with all preceding turns.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SluExample {
    pub session_id: String,
    pub turn_index: usize,
    pub history: Vec<Vec<String>>,
    pub tokens: Vec<String>,
    pub intent: String,
    pub tags: Vec<String>,
}

/// One example per labelled driver turn; history covers both speakers.
pub fn make_examples(session: &DialogueSession) -> Vec<SluExample> {
    session
        .driver_turns()
        .map(|(i, turn)| SluExample {
            session_id: session.id.clone(),
            turn_index: i,
            history: session.turns[..i].iter().map(|t| t.tokens.clone()).collect(),
            tokens: turn.tokens.clone(),
            intent: turn.intent.clone().expect("labelled driver turn"),
            tags: turn.tags.clone().expect("labelled driver turn"),
        })
        .collect()
}

/// One session per line.
pub fn write_jsonl(path: &Path, sessions: &[DialogueSession]) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    for s in sessions {
        serde_json::to_writer(&mut out, s)?;
        out.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    out.flush().map_err(|e| Error::io(path, e))
}

pub fn read_jsonl(path: &Path) -> Result<Vec<DialogueSession>> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut sessions = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let session: DialogueSession = serde_json::from_str(&line).map_err(|e| Error::Corpus {
            path: path.to_path_buf(),
            record: i + 1,
            reason: e.to_string(),
        })?;
        session.validate().map_err(|e| Error::Corpus {
            path: path.to_path_buf(),
            record: i + 1,
            reason: e.to_string(),
        })?;
        sessions.push(session);
    }
    Ok(sessions)
}
