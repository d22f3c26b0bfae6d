//! Pieces shared by the head and gate training loops.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::distill::head::Dense;
use crate::optim::Adam;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub l_total: f64,
    pub l_kd: f64,
    pub l_ce: f64,
    pub train_acc: f64,
    pub val_acc: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingHistory {
    pub epochs: Vec<EpochRecord>,
    /// Epoch (1-based) whose parameters were returned.
    pub best_epoch: usize,
}

impl TrainingHistory {
    pub fn last(&self) -> Option<&EpochRecord> {
        self.epochs.last()
    }

    pub fn best(&self) -> Option<&EpochRecord> {
        self.epochs.iter().find(|e| e.epoch == self.best_epoch)
    }

    /// Comma-separated table, one row per epoch.
    pub fn to_table(&self) -> String {
        let mut out = String::from("epoch,l_total,l_kd,l_ce,train_acc,val_acc\n");
        for e in &self.epochs {
            writeln!(
                out,
                "{},{:?},{:?},{:?},{:?},{:?}",
                e.epoch, e.l_total, e.l_kd, e.l_ce, e.train_acc, e.val_acc
            )
            .expect("string write");
        }
        out
    }
}

/// Tracks the best validation accuracy and the patience budget.
pub(crate) struct EarlyStopping {
    patience: usize,
    best: f64,
    since_best: usize,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        Self {
            patience,
            best: f64::NEG_INFINITY,
            since_best: 0,
        }
    }

    /// Returns true when `metric` is a new strict best.
    pub fn observe(&mut self, metric: f64) -> bool {
        if metric > self.best {
            self.best = metric;
            self.since_best = 0;
            true
        } else {
            self.since_best += 1;
            false
        }
    }

    pub fn should_stop(&self) -> bool {
        self.patience > 0 && self.since_best >= self.patience
    }
}

/// One Adam step over a stack of dense layers, in flat parameter order.
pub(crate) fn adam_step_dense(opt: &mut Adam, layers: &mut [Dense], grads: &[Dense]) {
    opt.begin_step();
    let mut offset = 0;
    for (layer, g) in layers.iter_mut().zip(grads) {
        let w = layer.weight.as_slice_mut().expect("standard layout");
        opt.update(offset, w, g.weight.as_slice().expect("standard layout"));
        offset += w.len();
        let b = layer.bias.as_slice_mut().expect("standard layout");
        opt.update(offset, b, g.bias.as_slice().expect("standard layout"));
        offset += b.len();
    }
}

/// Deterministic mini-batch order for one epoch.
pub(crate) fn epoch_batches(
    n: usize,
    batch_size: usize,
    rng: &mut impl rand::Rng,
) -> Vec<Vec<usize>> {
    use rand::seq::SliceRandom;
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    order
        .chunks(batch_size.max(1))
        .map(|c| c.to_vec())
        .collect()
}
