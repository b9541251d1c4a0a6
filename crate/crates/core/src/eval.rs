//! Chunk-level slot metrics and intent accuracy.

use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A typed span `[start, end)` of one utterance.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Chunk {
    pub label: String,
    pub start: usize,
    pub end: usize,
}

enum Tag<'a> {
    Outside,
    Begin(&'a str),
    Inside(&'a str),
}

fn parse_tag(tag: &str) -> Result<Tag<'_>> {
    if tag == "O" {
        return Ok(Tag::Outside);
    }
    match tag.split_once('-') {
        Some(("B", kind)) if !kind.is_empty() => Ok(Tag::Begin(kind)),
        Some(("I", kind)) if !kind.is_empty() => Ok(Tag::Inside(kind)),
        _ => Err(Error::UnknownTag(tag.to_string())),
    }
}

/// Decodes IOB tags into chunks. An `I-X` without an open `X` chunk starts
/// a new chunk.
pub fn decode_chunks<S: AsRef<str>>(tags: &[S]) -> Result<Vec<Chunk>> {
    let mut chunks = Vec::new();
    let mut open: Option<Chunk> = None;
    for (i, tag) in tags.iter().enumerate() {
        match parse_tag(tag.as_ref())? {
            Tag::Outside => chunks.extend(open.take()),
            Tag::Inside(kind) if open.as_ref().is_some_and(|c| c.label == kind) => {
                if let Some(c) = open.as_mut() {
                    c.end = i + 1;
                }
            }
            Tag::Begin(kind) | Tag::Inside(kind) => {
                chunks.extend(open.take());
                open = Some(Chunk {
                    label: kind.to_string(),
                    start: i,
                    end: i + 1,
                });
            }
        }
    }
    chunks.extend(open);
    Ok(chunks)
}

/// Writes chunks back as IOB tags over `len` tokens.
pub fn encode_chunks(chunks: &[Chunk], len: usize) -> Vec<String> {
    let mut tags = vec!["O".to_string(); len];
    for c in chunks {
        tags[c.start] = format!("B-{}", c.label);
        for t in &mut tags[c.start + 1..c.end] {
            *t = format!("I-{}", c.label);
        }
    }
    tags
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SlotMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Set when a zero denominator forced a value to 0.
    pub degenerate: bool,
}

impl SlotMetrics {
    pub fn from_counts(correct: usize, predicted: usize, gold: usize) -> Self {
        let ratio = |n: usize, d: usize| if d == 0 { 0.0 } else { n as f64 / d as f64 };
        let precision = ratio(correct, predicted);
        let recall = ratio(correct, gold);
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        SlotMetrics {
            precision,
            recall,
            f1,
            degenerate: predicted == 0 || gold == 0,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChunkCounts {
    pub correct: usize,
    pub predicted: usize,
    pub gold: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SlotReport {
    /// Exact-span chunk metrics pooled over the whole set.
    pub micro: SlotMetrics,
    pub counts: ChunkCounts,
    /// Mean chunk F1 over slot types present in the gold tags.
    pub macro_f1: f64,
    pub per_type: BTreeMap<String, (ChunkCounts, SlotMetrics)>,
    /// Token-level metrics on slot types, ignoring B/I boundaries.
    pub token: SlotMetrics,
}

pub fn slot_prf<S: AsRef<str>, T: AsRef<str>>(preds: &[Vec<S>], golds: &[Vec<T>]) -> Result<SlotReport> {
    if preds.len() != golds.len() {
        return Err(Error::invalid(format!(
            "{} predicted utterances vs {} gold",
            preds.len(),
            golds.len()
        )));
    }
    let mut counts = ChunkCounts::default();
    let mut per_type: BTreeMap<String, ChunkCounts> = BTreeMap::new();
    let mut gold_types = HashSet::new();
    let (mut tok_correct, mut tok_pred, mut tok_gold) = (0, 0, 0);

    for (i, (p, g)) in preds.iter().zip(golds).enumerate() {
        if p.len() != g.len() {
            return Err(Error::invalid(format!(
                "utterance {i}: {} predicted tags vs {} gold",
                p.len(),
                g.len()
            )));
        }
        let pc = decode_chunks(p)?;
        let gc = decode_chunks(g)?;
        let gold_set: HashSet<&Chunk> = gc.iter().collect();
        counts.predicted += pc.len();
        counts.gold += gc.len();
        for c in &gc {
            gold_types.insert(c.label.clone());
            per_type.entry(c.label.clone()).or_default().gold += 1;
        }
        for c in &pc {
            let entry = per_type.entry(c.label.clone()).or_default();
            entry.predicted += 1;
            if gold_set.contains(c) {
                entry.correct += 1;
                counts.correct += 1;
            }
        }

        let kind = |t: &str| -> Result<Option<String>> {
            Ok(match parse_tag(t)? {
                Tag::Outside => None,
                Tag::Begin(k) | Tag::Inside(k) => Some(k.to_string()),
            })
        };
        for (pt, gt) in p.iter().zip(g) {
            let (pk, gk) = (kind(pt.as_ref())?, kind(gt.as_ref())?);
            tok_pred += pk.is_some() as usize;
            tok_gold += gk.is_some() as usize;
            tok_correct += (pk.is_some() && pk == gk) as usize;
        }
    }

    let per_type: BTreeMap<String, (ChunkCounts, SlotMetrics)> = per_type
        .into_iter()
        .filter(|(k, _)| gold_types.contains(k))
        .map(|(k, c)| (k, (c, SlotMetrics::from_counts(c.correct, c.predicted, c.gold))))
        .collect();
    let macro_f1 = if per_type.is_empty() {
        0.0
    } else {
        per_type.values().map(|(_, m)| m.f1).sum::<f64>() / per_type.len() as f64
    };
    Ok(SlotReport {
        micro: SlotMetrics::from_counts(counts.correct, counts.predicted, counts.gold),
        counts,
        macro_f1,
        per_type,
        token: SlotMetrics::from_counts(tok_correct, tok_pred, tok_gold),
    })
}

/// Exact-match fraction.
pub fn intent_accuracy<T: PartialEq>(preds: &[T], golds: &[T]) -> Result<f64> {
    if preds.is_empty() || preds.len() != golds.len() {
        return Err(Error::invalid(format!(
            "intent accuracy needs equal non-empty inputs, got {} and {}",
            preds.len(),
            golds.len()
        )));
    }
    let hits = preds.iter().zip(golds).filter(|(p, g)| p == g).count();
    Ok(hits as f64 / preds.len() as f64)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SlotSummary {
    pub p: f64,
    pub r: f64,
    pub f1: f64,
    pub macro_f1: f64,
    pub degenerate: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TypeSummary {
    pub p: f64,
    pub r: f64,
    pub f1: f64,
    pub gold: usize,
    pub predicted: usize,
    pub correct: usize,
}

/// Evaluation report; precision/recall/F1 values are percentages.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub slot: SlotSummary,
    pub intent_acc: f64,
    pub per_slot_type: BTreeMap<String, TypeSummary>,
    pub n_utterances: usize,
    pub token_level: SlotSummary,
}

impl EvalReport {
    pub fn new(slots: &SlotReport, intent_acc: f64, n_utterances: usize) -> Self {
        let pct = |m: &SlotMetrics, macro_f1: f64| SlotSummary {
            p: 100.0 * m.precision,
            r: 100.0 * m.recall,
            f1: 100.0 * m.f1,
            macro_f1: 100.0 * macro_f1,
            degenerate: m.degenerate,
        };
        EvalReport {
            slot: pct(&slots.micro, slots.macro_f1),
            intent_acc,
            per_slot_type: slots
                .per_type
                .iter()
                .map(|(k, (c, m))| {
                    (
                        k.clone(),
                        TypeSummary {
                            p: 100.0 * m.precision,
                            r: 100.0 * m.recall,
                            f1: 100.0 * m.f1,
                            gold: c.gold,
                            predicted: c.predicted,
                            correct: c.correct,
                        },
                    )
                })
                .collect(),
            n_utterances,
            token_level: pct(&slots.token, slots.token.f1),
        }
    }
}
