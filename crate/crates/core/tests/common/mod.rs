//! Scalar reference implementations shared by the integration tests.
//!
//! Everything here is written with plain loops over `Vec<f64>` and reads
//! parameters by name, so it shares no code path with the tape.

#![allow(dead_code)]

pub mod cases;

use std::collections::BTreeSet;
use std::path::PathBuf;

use ctx_slu::tensor::{ParameterStore, Tensor};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn fixture_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/kvret_mini")
}

/// Overwrites every parameter (biases included) with values in `[-a, a]`.
pub fn randomize(store: &mut ParameterStore, rng: &mut ChaCha8Rng, a: f64) {
    let ids: Vec<_> = store.ids().collect();
    for id in ids {
        for v in store.get_mut(id).data_mut() {
            *v = rng.gen_range(-a..=a);
        }
    }
}

pub fn random_vec(rng: &mut ChaCha8Rng, n: usize, a: f64) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-a..=a)).collect()
}

pub fn tensor(v: &[f64]) -> Tensor {
    Tensor::vector(v.to_vec())
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len(), "length mismatch");
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Row-major `[rows, cols]` matrix read from the store.
pub struct Mat {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

pub fn mat(store: &ParameterStore, name: &str) -> Mat {
    let id = store.id(name).unwrap_or_else(|| panic!("no parameter {name}"));
    let t = store.get(id);
    let (rows, cols) = match t.shape() {
        [r, c] => (*r, *c),
        [n] => (*n, 1),
        s => panic!("unexpected shape {s:?}"),
    };
    Mat {
        rows,
        cols,
        data: t.data().to_vec(),
    }
}

pub fn matvec(m: &Mat, x: &[f64]) -> Vec<f64> {
    assert_eq!(m.cols, x.len());
    (0..m.rows)
        .map(|i| {
            m.data[i * m.cols..(i + 1) * m.cols]
                .iter()
                .zip(x)
                .map(|(a, b)| a * b)
                .sum()
        })
        .collect()
}

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

pub fn vadd(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

fn gate(store: &ParameterStore, p: &str, g: &str, x: &[f64], h: &[f64]) -> Vec<f64> {
    let wx = matvec(&mat(store, &format!("{p}.w_{g}")), x);
    let uh = matvec(&mat(store, &format!("{p}.u_{g}")), h);
    let b = mat(store, &format!("{p}.b_{g}")).data;
    (0..wx.len()).map(|i| wx[i] + uh[i] + b[i]).collect()
}

pub fn gru_step(store: &ParameterStore, p: &str, x: &[f64], h: &[f64]) -> Vec<f64> {
    let z: Vec<f64> = gate(store, p, "z", x, h).into_iter().map(sigmoid).collect();
    let r: Vec<f64> = gate(store, p, "r", x, h).into_iter().map(sigmoid).collect();
    let wx = matvec(&mat(store, &format!("{p}.w_n")), x);
    let uh = matvec(&mat(store, &format!("{p}.u_n")), h);
    let b = mat(store, &format!("{p}.b_n")).data;
    (0..h.len())
        .map(|i| {
            let n = (wx[i] + r[i] * uh[i] + b[i]).tanh();
            (1.0 - z[i]) * h[i] + z[i] * n
        })
        .collect()
}

pub fn lstm_step(store: &ParameterStore, p: &str, x: &[f64], h: &[f64], c: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let i: Vec<f64> = gate(store, p, "i", x, h).into_iter().map(sigmoid).collect();
    let f: Vec<f64> = gate(store, p, "f", x, h).into_iter().map(sigmoid).collect();
    let o: Vec<f64> = gate(store, p, "o", x, h).into_iter().map(sigmoid).collect();
    let g: Vec<f64> = gate(store, p, "g", x, h).into_iter().map(f64::tanh).collect();
    let c2: Vec<f64> = (0..c.len()).map(|k| f[k] * c[k] + i[k] * g[k]).collect();
    let h2 = (0..c.len()).map(|k| o[k] * c2[k].tanh()).collect();
    (h2, c2)
}

/// Per-position outputs and final state of a bidirectional GRU from zero
/// states.
pub fn bigru(store: &ParameterStore, p: &str, seq: &[Vec<f64>], hid: usize) -> (Vec<Vec<f64>>, Vec<f64>) {
    let n = seq.len();
    let mut fwd = Vec::with_capacity(n);
    let mut h = vec![0.0; hid];
    for x in seq {
        h = gru_step(store, &format!("{p}.fwd"), x, &h);
        fwd.push(h.clone());
    }
    let mut bwd = vec![Vec::new(); n];
    let mut hb = vec![0.0; hid];
    for t in (0..n).rev() {
        hb = gru_step(store, &format!("{p}.bwd"), &seq[t], &hb);
        bwd[t] = hb.clone();
    }
    let outs = (0..n).map(|t| [fwd[t].clone(), bwd[t].clone()].concat()).collect();
    (outs, [h, hb].concat())
}

pub fn bilstm(store: &ParameterStore, p: &str, seq: &[Vec<f64>], hid: usize) -> (Vec<Vec<f64>>, Vec<f64>) {
    let n = seq.len();
    let mut fwd = Vec::with_capacity(n);
    let (mut h, mut c) = (vec![0.0; hid], vec![0.0; hid]);
    for x in seq {
        (h, c) = lstm_step(store, &format!("{p}.fwd"), x, &h, &c);
        fwd.push(h.clone());
    }
    let mut bwd = vec![Vec::new(); n];
    let (mut hb, mut cb) = (vec![0.0; hid], vec![0.0; hid]);
    for t in (0..n).rev() {
        (hb, cb) = lstm_step(store, &format!("{p}.bwd"), &seq[t], &hb, &cb);
        bwd[t] = hb.clone();
    }
    let outs = (0..n).map(|t| [fwd[t].clone(), bwd[t].clone()].concat()).collect();
    (outs, [h, hb].concat())
}

pub fn softmax(xs: &[f64]) -> Vec<f64> {
    let m = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = xs.iter().map(|x| (x - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.iter().map(|x| x / s).collect()
}

/// Attention weights and weighted memory sum.
pub fn attend(c: &[f64], memory: &[Vec<f64>]) -> (Vec<f64>, Vec<f64>) {
    let scores: Vec<f64> = memory
        .iter()
        .map(|m| m.iter().zip(c).map(|(a, b)| a * b).sum())
        .collect();
    let p = softmax(&scores);
    let mut ws = vec![0.0; c.len()];
    for (pi, m) in p.iter().zip(memory) {
        for (w, v) in ws.iter_mut().zip(m) {
            *w += pi * v;
        }
    }
    (p, ws)
}

pub fn sden(store: &ParameterStore, ff: &str, gru: &str, c: &[f64], memory: &[Vec<f64>], hid: usize) -> Vec<f64> {
    let w = mat(store, &format!("{ff}.w"));
    let b = mat(store, &format!("{ff}.b")).data;
    let gs: Vec<Vec<f64>> = memory
        .iter()
        .map(|m| {
            let joined = [c.to_vec(), m.clone()].concat();
            vadd(&matvec(&w, &joined), &b).into_iter().map(sigmoid).collect()
        })
        .collect();
    bigru(store, gru, &gs, hid).1
}

/// Chunks by span enumeration: `(label, start, end)` is a chunk when its
/// first tag opens an `X` chunk, every later tag is `I-X`, and the next tag
/// does not continue it.
pub fn brute_chunks(tags: &[String]) -> BTreeSet<(String, usize, usize)> {
    let kind = |t: &str| -> Option<(char, String)> {
        if t == "O" {
            None
        } else {
            Some((t.chars().next().unwrap(), t[2..].to_string()))
        }
    };
    let n = tags.len();
    let mut out = BTreeSet::new();
    for i in 0..n {
        let Some((_, label)) = kind(&tags[i]) else { continue };
        let continues_prev = i > 0 && tags[i].starts_with("I-") && kind(&tags[i - 1]).is_some_and(|(_, l)| l == label);
        if continues_prev {
            continue;
        }
        for j in i + 1..=n {
            let inner_ok = (i + 1..j).all(|t| tags[t] == format!("I-{label}"));
            let closed = j == n || tags[j] != format!("I-{label}");
            if inner_ok && closed {
                out.insert((label.clone(), i, j));
            }
        }
    }
    out
}

/// `(correct, predicted, gold)` over a corpus by set intersection.
pub fn brute_counts(preds: &[Vec<String>], golds: &[Vec<String>]) -> (usize, usize, usize) {
    let all = |xs: &[Vec<String>]| -> BTreeSet<(usize, String, usize, usize)> {
        xs.iter()
            .enumerate()
            .flat_map(|(u, t)| brute_chunks(t).into_iter().map(move |(l, s, e)| (u, l, s, e)))
            .collect()
    };
    let (p, g) = (all(preds), all(golds));
    (p.intersection(&g).count(), p.len(), g.len())
}

pub fn random_tags(rng: &mut ChaCha8Rng, n: usize, labels: &[&str]) -> Vec<String> {
    (0..n)
        .map(|_| match rng.gen_range(0..3) {
            0 => "O".to_string(),
            1 => format!("B-{}", labels[rng.gen_range(0..labels.len())]),
            _ => format!("I-{}", labels[rng.gen_range(0..labels.len())]),
        })
        .collect()
}
