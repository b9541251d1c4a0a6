use std::collections::BTreeMap;
use std::thread;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::dataset::{session_pass, EncodedDataset, EncodedExample};
use super::{
    adam_step, joint_loss, AdamState, CheckpointHeader, EarlyStopping, EpochMetrics, MetricsHistory, TrainConfig,
    TrainedModel, CHECKPOINT_FORMAT,
};
use crate::data::{DialogueSession, Vocab};
use crate::error::{Error, Result};
use crate::eval::{intent_accuracy, slot_prf, EvalReport, SlotReport};
use crate::model::{prediction, SluModel};
use crate::tensor::{ParameterStore, Tape};

fn splitmix(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

fn mix(parts: &[u64]) -> u64 {
    parts.iter().fold(0x5eed, |acc, &p| splitmix(acc ^ splitmix(p)))
}

#[derive(Clone, Debug)]
pub struct EvalOutcome {
    /// Joint objective with dropout off, averaged like a training batch
    /// spanning the whole set.
    pub loss: f64,
    pub slu_loss: f64,
    pub dli_loss: f64,
    pub slots: SlotReport,
    pub report: EvalReport,
    pub predicted_intents: Vec<usize>,
    pub predicted_tags: Vec<Vec<String>>,
    /// Fraction of tokens whose predicted tag equals the gold tag.
    pub token_accuracy: f64,
}

struct SessionResult {
    slu: Vec<f64>,
    dli: Vec<f64>,
    intents: Vec<usize>,
    tags: Vec<Vec<usize>>,
}

fn evaluate_session(
    model: &SluModel,
    store: &ParameterStore,
    turns: &[Vec<usize>],
    examples: &[&EncodedExample],
    with_dli: bool,
) -> Result<SessionResult> {
    let mut tape = Tape::inference(store);
    let pass = session_pass(&mut tape, model, turns, examples, with_dli)?;
    let mut out = SessionResult {
        slu: pass.slu.iter().map(|&v| tape.value(v).item()).collect(),
        dli: pass.dli.iter().map(|&v| tape.value(v).item()).collect(),
        intents: Vec::with_capacity(examples.len()),
        tags: Vec::with_capacity(examples.len()),
    };
    for o in &pass.outputs {
        let p = prediction(&tape, o)?;
        out.intents.push(p.intent_label());
        out.tags.push(p.slot_labels());
    }
    Ok(out)
}

/// Scores every example of `data` with dropout off. Sessions are spread
/// over the available cores; results are merged in example order.
pub fn evaluate(
    model: &SluModel,
    store: &ParameterStore,
    data: &EncodedDataset,
    vocab: &Vocab,
    lambda: f64,
) -> Result<EvalOutcome> {
    if data.is_empty() {
        return Err(Error::invalid("evaluation set has no labelled driver turns"));
    }
    let with_dli = lambda > 0.0;
    let mut by_session: BTreeMap<usize, Vec<&EncodedExample>> = BTreeMap::new();
    for ex in &data.examples {
        by_session.entry(ex.session).or_default().push(ex);
    }
    let jobs: Vec<(usize, Vec<&EncodedExample>)> = by_session.into_iter().collect();
    let workers = thread::available_parallelism()
        .map_or(1, |n| n.get())
        .min(jobs.len())
        .max(1);
    let chunk = jobs.len().div_ceil(workers);

    let results: Vec<Result<Vec<SessionResult>>> = thread::scope(|scope| {
        let handles: Vec<_> = jobs
            .chunks(chunk)
            .map(|part| {
                scope.spawn(move || {
                    part.iter()
                        .map(|(s, exs)| evaluate_session(model, store, &data.sessions[*s], exs, with_dli))
                        .collect::<Result<Vec<_>>>()
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("evaluation worker panicked"))
            .collect()
    });

    let (mut slu, mut dli) = (Vec::new(), Vec::new());
    let (mut intents, mut tag_ids) = (Vec::new(), Vec::new());
    for part in results {
        for r in part? {
            slu.extend(r.slu);
            dli.extend(r.dli);
            intents.extend(r.intents);
            tag_ids.extend(r.tags);
        }
    }
    // Sessions were visited in index order, which is also example order.
    let mean = |xs: &[f64]| {
        if xs.is_empty() {
            0.0
        } else {
            xs.iter().sum::<f64>() / xs.len() as f64
        }
    };
    let (slu_loss, dli_loss) = (mean(&slu), mean(&dli));
    let loss = joint_loss(slu_loss, dli_loss, if dli.is_empty() { 0.0 } else { lambda })?;

    let predicted_tags: Vec<Vec<String>> = tag_ids
        .iter()
        .map(|t| t.iter().map(|&i| vocab.slot_label(i).to_string()).collect())
        .collect();
    let golds: Vec<&[String]> = data.examples.iter().map(|e| e.gold_tags.as_slice()).collect();
    let gold_vecs: Vec<Vec<&String>> = golds.iter().map(|g| g.iter().collect()).collect();
    let slots = slot_prf(&predicted_tags, &gold_vecs)?;
    let gold_intents: Vec<usize> = data.examples.iter().map(|e| e.intent).collect();
    let intent_acc = intent_accuracy(&intents, &gold_intents)?;

    let (mut hit, mut total) = (0usize, 0usize);
    for (p, g) in predicted_tags.iter().zip(&golds) {
        hit += p.iter().zip(g.iter()).filter(|(a, b)| a == b).count();
        total += g.len();
    }
    let report = EvalReport::new(&slots, intent_acc, data.examples.len());
    Ok(EvalOutcome {
        loss,
        slu_loss,
        dli_loss,
        slots,
        report,
        predicted_intents: intents,
        predicted_tags,
        token_accuracy: hit as f64 / total.max(1) as f64,
    })
}

#[derive(Clone, Debug)]
pub struct FitOutcome {
    /// Parameters of the epoch with the lowest validation loss.
    pub best: TrainedModel,
    pub history: MetricsHistory,
    /// Largest |gradient| seen on the DLI head over the whole run.
    pub max_dli_grad: f64,
    pub optimizer_steps: u64,
}

impl FitOutcome {
    pub fn best_metrics(&self) -> &EpochMetrics {
        self.history
            .get(self.best.header.best_epoch)
            .expect("best epoch is recorded")
    }
}

/// Trains `config.variant` on `train`, selecting by loss on `dev`.
/// `on_epoch` sees each epoch's metrics as soon as they are computed.
pub fn fit(
    config: &TrainConfig,
    vocab: &Vocab,
    train: &[DialogueSession],
    dev: &[DialogueSession],
    mut on_epoch: impl FnMut(&EpochMetrics),
) -> Result<FitOutcome> {
    config.validate()?;
    let train_data = EncodedDataset::new(train, vocab)?;
    let dev_data = EncodedDataset::new(dev, vocab)?;
    if train_data.is_empty() || dev_data.is_empty() {
        return Err(Error::invalid(
            "training and validation sets need labelled driver turns",
        ));
    }

    let dims = config.dims(vocab);
    let mut store = ParameterStore::new(config.seed);
    let model = SluModel::new(config.variant, dims, &mut store)?;
    if config.round_f32 {
        store.round_to_f32();
    }
    let lambda = config.effective_lambda();
    let with_dli = lambda > 0.0;
    let keep = 1.0 - config.dropout;

    let mut adam = AdamState::new(&store);
    let mut stopper = EarlyStopping::new(config.patience, config.max_epochs);
    let mut history = MetricsHistory::default();
    let mut best_store = store.clone();
    let mut max_dli_grad = 0.0f64;
    let mut order: Vec<usize> = (0..train_data.examples.len()).collect();

    for epoch in 1..=config.max_epochs {
        let mut rng = ChaCha8Rng::seed_from_u64(mix(&[config.seed, epoch as u64]));
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut batches = 0usize;

        for (b, batch) in order.chunks(config.batch_size).enumerate() {
            let mut by_session: BTreeMap<usize, Vec<&EncodedExample>> = BTreeMap::new();
            for &i in batch {
                let ex = &train_data.examples[i];
                by_session.entry(ex.session).or_default().push(ex);
            }
            let groups: usize = if with_dli {
                batch.iter().map(|&i| train_data.examples[i].dli_contexts.len()).sum()
            } else {
                0
            };
            let slu_w = (1.0 - lambda) / batch.len() as f64;
            let dli_w = if groups > 0 { lambda / groups as f64 } else { 0.0 };

            store.zero_grad();
            let mut batch_loss = 0.0;
            for (session, exs) in &by_session {
                let seed = mix(&[config.seed, epoch as u64, b as u64, *session as u64]);
                let grads = {
                    let mut tape = Tape::with_dropout(&store, keep, seed);
                    let pass = session_pass(&mut tape, &model, &train_data.sessions[*session], exs, with_dli)?;
                    let slu = tape.sum(&pass.slu)?;
                    let mut terms = vec![tape.scale(slu, slu_w)];
                    if !pass.dli.is_empty() {
                        let dli = tape.sum(&pass.dli)?;
                        terms.push(tape.scale(dli, dli_w));
                    }
                    let loss = tape.sum(&terms)?;
                    batch_loss += tape.value(loss).item();
                    tape.backward(loss)?
                };
                store.accumulate(&grads, 1.0);
            }
            if let Some(w_d) = model.dli_head {
                let g = store.grad(w_d).data().iter().fold(0.0f64, |m, x| m.max(x.abs()));
                max_dli_grad = max_dli_grad.max(g);
            }
            if let Some(c) = config.clip_norm {
                store.clip_grad_norm(c);
            }
            adam_step(&mut store, &mut adam, &config.adam);
            if config.round_f32 {
                store.round_to_f32();
            }
            if !store.all_finite() {
                return Err(Error::invalid(format!(
                    "non-finite parameters after epoch {epoch} batch {}",
                    b + 1
                )));
            }
            loss_sum += batch_loss;
            batches += 1;
        }

        let val = evaluate(&model, &store, &dev_data, vocab, lambda)?;
        let metrics = EpochMetrics {
            epoch,
            train_loss: loss_sum / batches as f64,
            val_loss: val.loss,
            slot_p: val.report.slot.p,
            slot_r: val.report.slot.r,
            slot_f1: val.report.slot.f1,
            intent_acc: val.report.intent_acc,
        };
        on_epoch(&metrics);
        history.push(metrics)?;
        let decision = stopper.observe(val.loss);
        if decision.improved {
            best_store = store.clone();
        }
        if decision.stop {
            break;
        }
    }

    let (best_epoch, best_val_loss) = stopper
        .best()
        .ok_or_else(|| Error::invalid("validation loss was never finite"))?;
    let header = CheckpointHeader {
        format: CHECKPOINT_FORMAT.to_string(),
        variant: config.variant,
        dims,
        config: config.clone(),
        vocab_fingerprint: vocab.fingerprint(),
        best_epoch,
        best_val_loss,
        selection: "lowest validation loss".to_string(),
    };
    Ok(FitOutcome {
        best: TrainedModel {
            model,
            store: best_store,
            header,
        },
        history,
        max_dli_grad,
        optimizer_steps: adam.step_count(),
    })
}
