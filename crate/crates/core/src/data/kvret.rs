//! Reader for the public KVRET JSON release.
//!
//! Each record holds a `dialogue` list of `{turn, data: {utterance, slots?}}`
//! and a `scenario.task.intent`. Slot values annotating a driver utterance
//! are carried by the `slots` map of the assistant turn that follows it.

use std::fmt;
use std::fs;
use std::path::Path;

use serde_json::Value;

use super::{derive_iob, tokenize, DialogueSession, Speaker, Turn};
use crate::error::{Error, Result};

pub const KVRET_SPLIT_FILES: [(&str, &str); 3] = [
    ("train", "kvret_train_public.json"),
    ("dev", "kvret_dev_public.json"),
    ("test", "kvret_test_public.json"),
];

/// Dropped records and unmatched slot values, one line each.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct SkipReport {
    pub lines: Vec<String>,
}

impl SkipReport {
    pub fn push(&mut self, line: String) {
        self.lines.push(line);
    }

    pub fn dropped_sessions(&self) -> usize {
        self.lines.iter().filter(|l| l.starts_with("dropped session")).count()
    }
}

impl fmt::Display for SkipReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for line in &self.lines {
            writeln!(f, "{line}")?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Default)]
pub struct KvretCorpus {
    pub train: Vec<DialogueSession>,
    pub dev: Vec<DialogueSession>,
    pub test: Vec<DialogueSession>,
    pub skipped: SkipReport,
}

impl KvretCorpus {
    pub fn splits(&self) -> [(&'static str, &[DialogueSession]); 3] {
        [("train", &self.train), ("dev", &self.dev), ("test", &self.test)]
    }
}

/// Loads the three split files from `dir`.
pub fn load_kvret(dir: &Path) -> Result<KvretCorpus> {
    let mut corpus = KvretCorpus::default();
    for (split, file) in KVRET_SPLIT_FILES {
        let sessions = load_kvret_split(&dir.join(file), split, &mut corpus.skipped)?;
        match split {
            "train" => corpus.train = sessions,
            "dev" => corpus.dev = sessions,
            _ => corpus.test = sessions,
        }
    }
    Ok(corpus)
}

pub fn load_kvret_split(path: &Path, split: &str, skipped: &mut SkipReport) -> Result<Vec<DialogueSession>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let records: Vec<Value> = serde_json::from_str(&text).map_err(|e| Error::Corpus {
        path: path.to_path_buf(),
        record: 0,
        reason: e.to_string(),
    })?;
    let mut sessions = Vec::with_capacity(records.len());
    for (i, record) in records.iter().enumerate() {
        let fail = |reason: String| Error::Corpus {
            path: path.to_path_buf(),
            record: i,
            reason,
        };
        if let Some(s) = parse_record(record, split, i, skipped).map_err(fail)? {
            sessions.push(s);
        }
    }
    Ok(sessions)
}

fn parse_record(
    record: &Value,
    split: &str,
    index: usize,
    skipped: &mut SkipReport,
) -> std::result::Result<Option<DialogueSession>, String> {
    let intent = record
        .pointer("/scenario/task/intent")
        .and_then(Value::as_str)
        .ok_or("missing scenario.task.intent")?
        .to_string();
    let id = record
        .pointer("/scenario/uuid")
        .and_then(Value::as_str)
        .map(String::from)
        .unwrap_or_else(|| format!("{split}-{index}"));
    let dialogue = record
        .get("dialogue")
        .and_then(Value::as_array)
        .ok_or("missing dialogue list")?;
    if dialogue.is_empty() {
        skipped.push(format!("dropped session {split}/{index} ({id}): empty dialogue"));
        return Ok(None);
    }

    struct RawTurn {
        speaker: Speaker,
        tokens: Vec<String>,
        slots: Vec<(String, String)>,
    }
    let mut raw = Vec::with_capacity(dialogue.len());
    for (t, turn) in dialogue.iter().enumerate() {
        let speaker = match turn.get("turn").and_then(Value::as_str) {
            Some("driver") => Speaker::Driver,
            Some("assistant") => Speaker::Assistant,
            other => return Err(format!("turn {t}: unknown speaker {other:?}")),
        };
        let utterance = turn
            .pointer("/data/utterance")
            .and_then(Value::as_str)
            .ok_or_else(|| format!("turn {t}: missing data.utterance"))?;
        let mut slots = Vec::new();
        if let Some(map) = turn.pointer("/data/slots").and_then(Value::as_object) {
            for (name, value) in map {
                match value {
                    Value::String(s) => slots.push((name.clone(), s.clone())),
                    Value::Number(n) => slots.push((name.clone(), n.to_string())),
                    other => skipped.push(format!(
                        "non-string slot value {split}/{index} turn {t}: {name}={other}"
                    )),
                }
            }
        }
        raw.push(RawTurn {
            speaker,
            tokens: tokenize(utterance),
            slots,
        });
    }

    let mut turns = Vec::with_capacity(raw.len());
    for (t, r) in raw.iter().enumerate() {
        if r.tokens.is_empty() {
            skipped.push(format!("dropped turn {split}/{index} turn {t}: empty utterance"));
            continue;
        }
        let (tags, turn_intent) = if r.speaker == Speaker::Driver {
            let annotation = match raw.get(t + 1) {
                Some(next) if next.speaker == Speaker::Assistant => next.slots.as_slice(),
                _ => &[],
            };
            let outcome = derive_iob(&r.tokens, annotation);
            for (slot, value) in outcome.unmatched {
                skipped.push(format!("unmatched slot {split}/{index} turn {t}: {slot}={value:?}"));
            }
            (Some(outcome.tags), Some(intent.clone()))
        } else {
            (None, None)
        };
        turns.push(Turn {
            speaker: r.speaker,
            tokens: r.tokens.clone(),
            tags,
            intent: turn_intent,
        });
    }
    if turns.is_empty() {
        skipped.push(format!("dropped session {split}/{index} ({id}): no non-empty turns"));
        return Ok(None);
    }
    Ok(Some(DialogueSession {
        id,
        domains: vec![intent],
        turns,
    }))
}
