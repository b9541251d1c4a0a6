//! Chunk decoding and exact-span slot metrics.
//!
//! cargo run --example chunk_f1

use ctx_slu::eval::{decode_chunks, intent_accuracy, slot_prf, EvalReport};

fn main() -> ctx_slu::Result<()> {
    let gold = vec![
        vec!["O", "O", "O", "B-event", "I-event", "O"],
        vec!["O", "B-date", "O", "B-location", "I-location"],
        vec!["O", "O", "B-poi_type", "I-poi_type"],
    ];
    // Second utterance truncates the location span; third misses it entirely.
    let pred = vec![
        vec!["O", "O", "O", "B-event", "I-event", "O"],
        vec!["O", "B-date", "O", "B-location", "O"],
        vec!["O", "O", "O", "O"],
    ];
    for (g, p) in gold.iter().zip(&pred) {
        println!("gold {:?}", decode_chunks(g)?);
        println!("pred {:?}", decode_chunks(p)?);
    }
    // A stray I- tag opens its own chunk.
    println!("stray {:?}", decode_chunks(&["O", "I-date", "I-date"])?);

    let slots = slot_prf(&pred, &gold)?;
    let acc = intent_accuracy(
        &["schedule", "weather", "schedule"],
        &["schedule", "weather", "navigate"],
    )?;
    let report = EvalReport::new(&slots, acc, gold.len());
    println!("{}", serde_json::to_string_pretty(&report).expect("report serializes"));
    Ok(())
}
