use serde::{Deserialize, Serialize};

use super::DialogueSession;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub train: usize,
    pub dev: usize,
    pub test: usize,
    /// Turns of both speakers per training session.
    pub avg_turns: f64,
    pub avg_turns_dev: f64,
    pub avg_turns_test: f64,
    pub driver_turns_train: usize,
}

fn avg_turns(sessions: &[DialogueSession]) -> f64 {
    if sessions.is_empty() {
        return 0.0;
    }
    sessions.iter().map(|s| s.turns.len()).sum::<usize>() as f64 / sessions.len() as f64
}

impl DatasetStats {
    pub fn compute(train: &[DialogueSession], dev: &[DialogueSession], test: &[DialogueSession]) -> Self {
        DatasetStats {
            train: train.len(),
            dev: dev.len(),
            test: test.len(),
            avg_turns: avg_turns(train),
            avg_turns_dev: avg_turns(dev),
            avg_turns_test: avg_turns(test),
            driver_turns_train: train.iter().map(|s| s.driver_turns().count()).sum(),
        }
    }
}
