use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::thread;

use serde::{Deserialize, Serialize};

use super::{fit, TrainConfig};
use crate::data::{DialogueSession, Vocab};
use crate::error::{Error, Result};

/// Dev metrics of the selected checkpoint of one `(lambda, seed)` run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub lambda: f64,
    pub seed: u64,
    pub slot_f1: f64,
    pub intent_acc: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepMean {
    pub lambda: f64,
    pub runs: usize,
    pub slot_f1: f64,
    pub intent_acc: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SweepTable {
    /// In `(lambda, seed)` input order.
    pub rows: Vec<SweepRow>,
    pub means: Vec<SweepMean>,
}

impl SweepTable {
    pub fn mean_for(&self, lambda: f64) -> Option<&SweepMean> {
        self.means.iter().find(|m| m.lambda == lambda)
    }

    /// Columns `lambda,seed,slot_f1,intent_acc`; aggregate rows carry
    /// `mean` in the seed column.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("lambda,seed,slot_f1,intent_acc\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{:.6},{:.6}\n",
                r.lambda, r.seed, r.slot_f1, r.intent_acc
            ));
        }
        for m in &self.means {
            out.push_str(&format!("{},mean,{:.6},{:.6}\n", m.lambda, m.slot_f1, m.intent_acc));
        }
        out
    }
}

/// Runs `fit` for every `(lambda, seed)` pair with up to `jobs` runs in
/// parallel. Each run owns its parameters and random streams.
pub fn lambda_sweep(
    base: &TrainConfig,
    lambdas: &[f64],
    seeds: &[u64],
    vocab: &Vocab,
    train: &[DialogueSession],
    dev: &[DialogueSession],
    jobs: usize,
) -> Result<SweepTable> {
    if let Some(l) = lambdas.iter().find(|l| !(0.0..=1.0).contains(*l)) {
        return Err(Error::invalid(format!("lambda {l} not in [0, 1]")));
    }
    let tasks: Vec<(f64, u64)> = lambdas
        .iter()
        .flat_map(|&l| seeds.iter().map(move |&s| (l, s)))
        .collect();
    let slots: Vec<Mutex<Option<Result<SweepRow>>>> = tasks.iter().map(|_| Mutex::new(None)).collect();
    let next = AtomicUsize::new(0);
    let run = |(lambda, seed): (f64, u64)| -> Result<SweepRow> {
        let cfg = TrainConfig {
            lambda,
            seed,
            ..base.clone()
        };
        let out = fit(&cfg, vocab, train, dev, |_| {})?;
        let m = out.best_metrics();
        Ok(SweepRow {
            lambda,
            seed,
            slot_f1: m.slot_f1,
            intent_acc: m.intent_acc,
        })
    };

    thread::scope(|scope| {
        for _ in 0..jobs.max(1).min(tasks.len()) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(&task) = tasks.get(i) else { break };
                *slots[i].lock().expect("sweep slot") = Some(run(task));
            });
        }
    });

    let rows = slots
        .into_iter()
        .map(|s| s.into_inner().expect("sweep slot").expect("every task ran"))
        .collect::<Result<Vec<_>>>()?;
    let means = lambdas
        .iter()
        .map(|&lambda| {
            let of: Vec<&SweepRow> = rows.iter().filter(|r| r.lambda == lambda).collect();
            let n = of.len().max(1) as f64;
            SweepMean {
                lambda,
                runs: of.len(),
                slot_f1: of.iter().map(|r| r.slot_f1).sum::<f64>() / n,
                intent_acc: of.iter().map(|r| r.intent_acc).sum::<f64>() / n,
            }
        })
        .filter(|m| m.runs > 0)
        .collect();
    Ok(SweepTable { rows, means })
}
