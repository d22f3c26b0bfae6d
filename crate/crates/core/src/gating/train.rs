use ndarray::Array1;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{GateParams, GateVariant, DEFAULT_MOE_EXPERTS};
use crate::distill::Dense;
use crate::error::{Error, Result};
use crate::labels::{argmax, log_softmax, softmax_in_place, LabelSpace, ProbVector};
use crate::optim::{Adam, AdamConfig};
use crate::predictors::VlmPrediction;
use crate::training::{
    adam_step_dense, epoch_batches, EarlyStopping, EpochRecord, TrainingHistory,
};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GateHyperparams {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub experts: usize,
    pub seed: u64,
}

impl Default for GateHyperparams {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            batch_size: 64,
            max_epochs: 30,
            patience: 5,
            experts: DEFAULT_MOE_EXPERTS,
            seed: 0,
        }
    }
}

impl GateHyperparams {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if self.batch_size == 0 || self.max_epochs == 0 || self.experts == 0 {
            return Err(Error::Config(
                "batch_size, max_epochs and experts must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

/// One fusion input: the VLM vector, the student distribution and the truth.
#[derive(Clone, Debug, PartialEq)]
pub struct GateExample {
    pub sample_id: String,
    pub v1: Vec<f64>,
    pub v2: Vec<f64>,
    pub label: usize,
}

impl GateExample {
    pub fn new(vlm: &VlmPrediction, student: &ProbVector, label: &str) -> Result<Self> {
        let space = student.space();
        let label = space
            .index_of(label)
            .ok_or_else(|| Error::OutOfVocabulary {
                label: label.into(),
                space: space.name().into(),
            })?;
        Ok(Self {
            sample_id: vlm.sample_id.clone(),
            v1: vlm.gate_input(space),
            v2: student.values().to_vec(),
            label,
        })
    }

    /// Cross-entropy of the fused output against the truth.
    pub fn loss(&self, params: &GateParams) -> f64 {
        -log_softmax(
            params
                .logits(&self.v1, &self.v2)
                .as_slice()
                .expect("contiguous"),
            1.0,
        )[self.label]
    }

    /// Analytic gradient of [`GateExample::loss`], one [`Dense`] per block.
    pub fn gradients(&self, params: &GateParams) -> Vec<Dense> {
        let mut grads = params.zero_grads();
        self.accumulate(params, 1.0, &mut grads);
        grads
    }

    fn accumulate(&self, params: &GateParams, scale: f64, grads: &mut [Dense]) -> f64 {
        let mut p = params.logits(&self.v1, &self.v2).to_vec();
        let loss = -log_softmax(&p, 1.0)[self.label];
        softmax_in_place(&mut p, 1.0);
        p[self.label] -= 1.0;
        let dy = Array1::from(p) * scale;
        params.backward(&self.v1, &self.v2, dy.view(), grads);
        loss
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GateEval {
    pub loss: f64,
    pub accuracy: f64,
}

pub fn evaluate_gate(params: &GateParams, data: &[GateExample]) -> Result<GateEval> {
    if data.is_empty() {
        return Err(Error::EmptyDataset("nothing to evaluate".into()));
    }
    let (mut loss, mut correct) = (0.0, 0usize);
    for ex in data {
        let z = params.logits(&ex.v1, &ex.v2);
        let z = z.as_slice().expect("contiguous");
        loss -= log_softmax(z, 1.0)[ex.label];
        correct += usize::from(argmax(z) == ex.label);
    }
    let n = data.len() as f64;
    Ok(GateEval {
        loss: loss / n,
        accuracy: correct as f64 / n,
    })
}

fn check_examples(data: &[GateExample], c: usize) -> Result<()> {
    for ex in data {
        if ex.v1.len() != c || ex.v2.len() != c || ex.label >= c {
            return Err(Error::Shape(format!(
                "gate example {} does not fit {c} classes",
                ex.sample_id
            )));
        }
    }
    Ok(())
}

/// Trains a gate with cross-entropy on the fused output; the VLM and
/// student stay frozen. History rows report the gate loss as `l_total`
/// and `l_ce` with `l_kd = 0`.
pub fn train_gate(
    train: &[GateExample],
    val: &[GateExample],
    variant: GateVariant,
    space: &LabelSpace,
    hp: &GateHyperparams,
) -> Result<(GateParams, TrainingHistory)> {
    hp.validate()?;
    if train.is_empty() {
        return Err(Error::EmptyDataset("gate training set is empty".into()));
    }
    check_examples(train, space.len())?;
    check_examples(val, space.len())?;

    let mut params = GateParams::init(variant, space.clone(), hp.experts, hp.seed)?;
    let mut opt = Adam::new(
        AdamConfig {
            learning_rate: hp.learning_rate,
            ..AdamConfig::default()
        },
        params.param_count(),
    );
    let mut rng = ChaCha8Rng::seed_from_u64(hp.seed);
    rng.set_stream(1);

    let mut history = TrainingHistory::default();
    let mut best = params.clone();
    let mut stopper = EarlyStopping::new(hp.patience);
    for epoch in 1..=hp.max_epochs {
        for batch in epoch_batches(train.len(), hp.batch_size, &mut rng) {
            let scale = 1.0 / batch.len() as f64;
            let mut grads = params.zero_grads();
            let mut total = 0.0;
            for &i in &batch {
                total += train[i].accumulate(&params, scale, &mut grads) * scale;
            }
            if !total.is_finite() {
                return Err(Error::TrainingDiverged {
                    epoch,
                    reason: "non-finite gate loss".into(),
                });
            }
            adam_step_dense(&mut opt, &mut params.blocks, &grads);
        }
        let tr = evaluate_gate(&params, train)?;
        if !tr.loss.is_finite() {
            return Err(Error::TrainingDiverged {
                epoch,
                reason: "non-finite epoch loss".into(),
            });
        }
        let val_acc = if val.is_empty() {
            tr.accuracy
        } else {
            evaluate_gate(&params, val)?.accuracy
        };
        history.epochs.push(EpochRecord {
            epoch,
            l_total: tr.loss,
            l_kd: 0.0,
            l_ce: tr.loss,
            train_acc: tr.accuracy,
            val_acc,
        });
        if stopper.observe(val_acc) {
            best = params.clone();
            history.best_epoch = epoch;
        }
        if stopper.should_stop() {
            break;
        }
    }
    Ok((best, history))
}
