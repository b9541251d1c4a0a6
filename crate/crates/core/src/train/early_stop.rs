#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct EpochDecision {
    pub improved: bool,
    pub stop: bool,
}

/// Stops after `patience` consecutive epochs without a strictly lower
/// validation loss, or at `max_epochs`. Epochs are numbered from 1.
#[derive(Clone, Debug)]
pub struct EarlyStopping {
    patience: Option<usize>,
    max_epochs: usize,
    epoch: usize,
    best: Option<(usize, f64)>,
    since_best: usize,
}

impl EarlyStopping {
    /// `patience = None` disables the patience rule.
    pub fn new(patience: Option<usize>, max_epochs: usize) -> Self {
        EarlyStopping {
            patience,
            max_epochs,
            epoch: 0,
            best: None,
            since_best: 0,
        }
    }

    pub fn observe(&mut self, val_loss: f64) -> EpochDecision {
        self.epoch += 1;
        let improved = match self.best {
            _ if val_loss.is_nan() => false,
            None => true,
            Some((_, best)) => val_loss < best,
        };
        if improved {
            self.best = Some((self.epoch, val_loss));
            self.since_best = 0;
        } else {
            self.since_best += 1;
        }
        let out_of_patience = self.patience.is_some_and(|p| self.since_best >= p);
        EpochDecision {
            improved,
            stop: out_of_patience || self.epoch >= self.max_epochs,
        }
    }

    /// `(epoch, loss)` of the best epoch so far.
    pub fn best(&self) -> Option<(usize, f64)> {
        self.best
    }

    pub fn epochs_seen(&self) -> usize {
        self.epoch
    }
}

/// Feeds `losses` until the rule stops; returns `(epochs run, best epoch)`.
pub fn replay(losses: &[f64], patience: Option<usize>, max_epochs: usize) -> (usize, Option<usize>) {
    let mut es = EarlyStopping::new(patience, max_epochs);
    for &l in losses {
        if es.observe(l).stop {
            break;
        }
    }
    (es.epochs_seen(), es.best().map(|(e, _)| e))
}
