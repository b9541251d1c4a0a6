//! Randomized comparisons of library routines against the scalar oracles.
//! Each driver returns the number of cases and the worst deviation.

use ctx_slu::eval::{decode_chunks, slot_prf};
use ctx_slu::memory::{attend as lib_attend, sden_knowledge, FeedForward, MemoryBank};
use ctx_slu::rnn::{
    bi_encode, gru_step as lib_gru, lstm_step as lib_lstm, BiGru, BiLstm, GruParams, LstmParams, LstmState,
};
use ctx_slu::tensor::{ParameterStore, Tape};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;

pub struct Outcome {
    pub cases: usize,
    pub worst: f64,
}

fn dims(rng: &mut ChaCha8Rng) -> (usize, usize) {
    (rng.gen_range(1..=5), rng.gen_range(1..=5))
}

pub fn gru_steps(cases: usize, seed: u64) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..cases {
        let (din, hid) = dims(&mut rng);
        let mut store = ParameterStore::new(rng.gen());
        let p = GruParams::new(&mut store, "g", din, hid).unwrap();
        randomize(&mut store, &mut rng, 1.5);
        let (x, h) = (random_vec(&mut rng, din, 2.0), random_vec(&mut rng, hid, 1.0));
        let mut tape = Tape::new(&store);
        let (xv, hv) = (tape.input(tensor(&x)), tape.input(tensor(&h)));
        let out = lib_gru(&mut tape, xv, hv, &p).unwrap();
        worst = worst.max(max_abs_diff(tape.value(out).data(), &gru_step(&store, "g", &x, &h)));
    }
    Outcome { cases, worst }
}

pub fn lstm_steps(cases: usize, seed: u64) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..cases {
        let (din, hid) = dims(&mut rng);
        let mut store = ParameterStore::new(rng.gen());
        let p = LstmParams::new(&mut store, "l", din, hid).unwrap();
        randomize(&mut store, &mut rng, 1.5);
        let x = random_vec(&mut rng, din, 2.0);
        let (h, c) = (random_vec(&mut rng, hid, 1.0), random_vec(&mut rng, hid, 3.0));
        let mut tape = Tape::new(&store);
        let xv = tape.input(tensor(&x));
        let state = LstmState {
            h: tape.input(tensor(&h)),
            c: tape.input(tensor(&c)),
        };
        let out = lib_lstm(&mut tape, xv, &state, &p).unwrap();
        let (eh, ec) = lstm_step(&store, "l", &x, &h, &c);
        worst = worst
            .max(max_abs_diff(tape.value(out.h).data(), &eh))
            .max(max_abs_diff(tape.value(out.c).data(), &ec));
    }
    Outcome { cases, worst }
}

/// Alternates GRU and LSTM encoders over sequences of length 1..=6.
pub fn bi_encoders(cases: usize, seed: u64) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for case in 0..cases {
        let (din, hid) = dims(&mut rng);
        let len = rng.gen_range(1..=6);
        let seq: Vec<Vec<f64>> = (0..len).map(|_| random_vec(&mut rng, din, 2.0)).collect();
        let mut store = ParameterStore::new(rng.gen());
        let (outs, fin) = if case % 2 == 0 {
            let enc = BiGru::new(&mut store, "e", din, hid).unwrap();
            randomize(&mut store, &mut rng, 1.0);
            let mut tape = Tape::new(&store);
            let xs: Vec<_> = seq.iter().map(|x| tape.input(tensor(x))).collect();
            let o = bi_encode(&mut tape, &xs, &enc.fwd, &enc.bwd, None, false).unwrap();
            let got: Vec<Vec<f64>> = o.outputs.iter().map(|&v| tape.value(v).data().to_vec()).collect();
            let (eo, ef) = bigru(&store, "e", &seq, hid);
            (
                got.iter().zip(&eo).map(|(a, b)| max_abs_diff(a, b)).fold(0.0, f64::max),
                max_abs_diff(tape.value(o.final_state).data(), &ef),
            )
        } else {
            let enc = BiLstm::new(&mut store, "e", din, hid).unwrap();
            randomize(&mut store, &mut rng, 1.0);
            let mut tape = Tape::new(&store);
            let xs: Vec<_> = seq.iter().map(|x| tape.input(tensor(x))).collect();
            let o = bi_encode(&mut tape, &xs, &enc.fwd, &enc.bwd, None, false).unwrap();
            let got: Vec<Vec<f64>> = o.outputs.iter().map(|&v| tape.value(v).data().to_vec()).collect();
            let (eo, ef) = bilstm(&store, "e", &seq, hid);
            (
                got.iter().zip(&eo).map(|(a, b)| max_abs_diff(a, b)).fold(0.0, f64::max),
                max_abs_diff(tape.value(o.final_state).data(), &ef),
            )
        };
        worst = worst.max(outs).max(fin);
    }
    Outcome { cases, worst }
}

pub fn attention(cases: usize, seed: u64) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    let store = ParameterStore::new(0);
    for _ in 0..cases {
        let d = rng.gen_range(1..=6);
        let k = rng.gen_range(1..=6);
        let c = random_vec(&mut rng, d, 2.0);
        let memory: Vec<Vec<f64>> = (0..k).map(|_| random_vec(&mut rng, d, 2.0)).collect();
        let mut tape = Tape::new(&store);
        let cv = tape.input(tensor(&c));
        let bank = MemoryBank {
            slots: memory.iter().map(|m| tape.input(tensor(m))).collect(),
        };
        let (p, ws) = lib_attend(&mut tape, cv, &bank).unwrap();
        let (ep, ews) = attend(&c, &memory);
        worst = worst
            .max(max_abs_diff(tape.value(p).data(), &ep))
            .max(max_abs_diff(tape.value(ws).data(), &ews));
    }
    Outcome { cases, worst }
}

pub fn sequential_retrieval(cases: usize, seed: u64) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..cases {
        let d = rng.gen_range(1..=5);
        let hid = rng.gen_range(1..=4);
        let k = rng.gen_range(1..=5);
        let mut store = ParameterStore::new(rng.gen());
        let ff = FeedForward::new(&mut store, "ff", 2 * d, hid).unwrap();
        let gru = BiGru::new(&mut store, "gg", hid, hid).unwrap();
        randomize(&mut store, &mut rng, 1.0);
        let c = random_vec(&mut rng, d, 2.0);
        let memory: Vec<Vec<f64>> = (0..k).map(|_| random_vec(&mut rng, d, 2.0)).collect();
        let mut tape = Tape::new(&store);
        let cv = tape.input(tensor(&c));
        let bank = MemoryBank {
            slots: memory.iter().map(|m| tape.input(tensor(m))).collect(),
        };
        let h = sden_knowledge(&mut tape, cv, &bank, &ff, &gru).unwrap();
        worst = worst.max(max_abs_diff(
            tape.value(h).data(),
            &sden(&store, "ff", "gg", &c, &memory, hid),
        ));
    }
    Outcome { cases, worst }
}

/// Number of tag sequences whose decoded chunks differ from enumeration.
pub fn chunk_decoding(cases: usize, seed: u64) -> (usize, usize) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut mismatches = 0;
    for _ in 0..cases {
        let n = rng.gen_range(0..=10);
        let tags = random_tags(&mut rng, n, &["a", "b", "c"]);
        let got: BTreeSet<_> = decode_chunks(&tags)
            .unwrap()
            .into_iter()
            .map(|c| (c.label, c.start, c.end))
            .collect();
        mismatches += (got != brute_chunks(&tags)) as usize;
    }
    (cases, mismatches)
}

/// Returns `(cases, count mismatches, worst float deviation)`.
pub fn slot_scores(cases: usize, seed: u64) -> (usize, usize, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut mismatches, mut worst) = (0, 0.0f64);
    for _ in 0..cases {
        let utterances = rng.gen_range(1..=5);
        let (mut preds, mut golds) = (Vec::new(), Vec::new());
        for _ in 0..utterances {
            let n = rng.gen_range(1..=8);
            let gold = random_tags(&mut rng, n, &["x", "y"]);
            // Half the time start from the gold tags and perturb a few.
            let pred = if rng.gen_bool(0.5) {
                let mut p = gold.clone();
                for _ in 0..rng.gen_range(0..=2) {
                    let i = rng.gen_range(0..n);
                    p[i] = random_tags(&mut rng, 1, &["x", "y"]).remove(0);
                }
                p
            } else {
                random_tags(&mut rng, n, &["x", "y"])
            };
            preds.push(pred);
            golds.push(gold);
        }
        let r = slot_prf(&preds, &golds).unwrap();
        let (c, p, g) = brute_counts(&preds, &golds);
        if (r.counts.correct, r.counts.predicted, r.counts.gold) != (c, p, g) {
            mismatches += 1;
        }
        let prec = if p == 0 { 0.0 } else { c as f64 / p as f64 };
        let rec = if g == 0 { 0.0 } else { c as f64 / g as f64 };
        let f1 = if prec + rec == 0.0 {
            0.0
        } else {
            2.0 * prec * rec / (prec + rec)
        };
        worst = worst
            .max((r.micro.precision - prec).abs())
            .max((r.micro.recall - rec).abs())
            .max((r.micro.f1 - f1).abs());
    }
    (cases, mismatches, worst)
}
