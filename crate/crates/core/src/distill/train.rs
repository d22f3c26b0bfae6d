use ndarray::{Array2, ArrayView2, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::head::{Dense, DistillHead, DistillHeadConfig};
use super::loss::{check_alpha, loss_and_grad};
use crate::data::Sample;
use crate::error::{Error, Result};
use crate::labels::{argmax, check_tau, LabelSpace, LogitVector, OneHotVector, ProbVector};
use crate::optim::{Adam, AdamConfig};
use crate::predictors::{FeatureSet, TeacherSet};
use crate::training::{
    adam_step_dense, epoch_batches, EarlyStopping, EpochRecord, TrainingHistory,
};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DistillHyperparams {
    pub alpha: f64,
    pub tau: f64,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Epochs without a validation improvement before stopping; 0 disables.
    pub patience: usize,
    pub seed: u64,
}

impl Default for DistillHyperparams {
    fn default() -> Self {
        Self {
            alpha: 0.5,
            tau: 2.0,
            learning_rate: 1e-3,
            batch_size: 64,
            max_epochs: 30,
            patience: 5,
            seed: 0,
        }
    }
}

impl DistillHyperparams {
    pub fn validate(&self) -> Result<()> {
        check_alpha(self.alpha)?;
        check_tau(self.tau)?;
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if self.batch_size == 0 || self.max_epochs == 0 {
            return Err(Error::Config(
                "batch_size and max_epochs must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

/// Row-aligned stage-2 inputs: frozen features, teacher logits, true class.
#[derive(Clone, Debug, PartialEq)]
pub struct DistillData {
    pub sample_ids: Vec<String>,
    pub features: Array2<f64>,
    pub teacher: Array2<f64>,
    pub labels: Vec<usize>,
}

impl DistillData {
    pub fn assemble(
        samples: &[Sample],
        features: &FeatureSet,
        teacher: &TeacherSet,
        space: &LabelSpace,
    ) -> Result<Self> {
        if teacher.space() != space || features.space() != space {
            return Err(Error::Shape(
                "feature/teacher files and the dataset use different label spaces".into(),
            ));
        }
        let (d, c) = (features.dim(), space.len());
        let mut x = Array2::zeros((samples.len(), d));
        let mut t = Array2::zeros((samples.len(), c));
        let mut labels = Vec::with_capacity(samples.len());
        for (i, s) in samples.iter().enumerate() {
            let f = features.require(&s.sample_id, "feature")?;
            x.row_mut(i).assign(&ndarray::ArrayView1::from(&f.vector));
            let tr = teacher.require(&s.sample_id, "teacher")?;
            t.row_mut(i)
                .assign(&ndarray::ArrayView1::from(tr.logits.values()));
            labels.push(
                space
                    .index_of(&s.label)
                    .ok_or_else(|| Error::OutOfVocabulary {
                        label: s.label.clone(),
                        space: space.name().into(),
                    })?,
            );
        }
        Ok(Self {
            sample_ids: samples.iter().map(|s| s.sample_id.clone()).collect(),
            features: x,
            teacher: t,
            labels,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.ncols()
    }

    pub fn num_classes(&self) -> usize {
        self.teacher.ncols()
    }

    fn select(&self, rows: &[usize]) -> (Array2<f64>, Array2<f64>, Vec<usize>) {
        (
            self.features.select(Axis(0), rows),
            self.teacher.select(Axis(0), rows),
            rows.iter().map(|&r| self.labels[r]).collect(),
        )
    }
}

pub(crate) struct BatchLoss {
    pub total: f64,
    pub grads: Vec<Dense>,
}

/// Mean loss over the batch and its gradient w.r.t. every head parameter.
pub(crate) fn batch_loss_grad(
    head: &DistillHead,
    x: ArrayView2<'_, f64>,
    teacher: ArrayView2<'_, f64>,
    labels: &[usize],
    alpha: f64,
    tau: f64,
) -> Result<BatchLoss> {
    let cache = head.forward_cached(x)?;
    let n = labels.len();
    let scale = 1.0 / n as f64;
    let mut dlogits = Array2::zeros(cache.logits.raw_dim());
    let mut total = 0.0;
    for (i, &label) in labels.iter().enumerate() {
        let s = cache.logits.row(i);
        let t = teacher.row(i);
        let mut g = dlogits.row_mut(i);
        let l = loss_and_grad(
            s.as_slice().expect("row"),
            &t.to_vec(),
            label,
            alpha,
            tau,
            scale,
            g.as_slice_mut().expect("row"),
        );
        total += l.total * scale;
    }
    let grads = head.backward(&cache, dlogits);
    Ok(BatchLoss { total, grads })
}

/// Analytic gradient of the mixed loss on one sample, one [`Dense`] per layer.
pub fn loss_gradients(
    features: &[f64],
    head: &DistillHead,
    teacher_logits: &LogitVector,
    target: &OneHotVector,
    hp: &DistillHyperparams,
) -> Result<Vec<Dense>> {
    check_alpha(hp.alpha)?;
    check_tau(hp.tau)?;
    let c = head.config().num_classes;
    if teacher_logits.values().len() != c || target.space().len() != c {
        return Err(Error::Shape(format!(
            "teacher/target length does not match {c} classes"
        )));
    }
    let x = ArrayView2::from_shape((1, features.len()), features).expect("row view");
    let t = ArrayView2::from_shape((1, c), teacher_logits.values()).expect("row view");
    Ok(batch_loss_grad(head, x, t, &[target.hot_index()], hp.alpha, hp.tau)?.grads)
}

/// The same mixed loss as a scalar, for finite-difference checks.
pub fn sample_total_loss(
    features: &[f64],
    head: &DistillHead,
    teacher_logits: &LogitVector,
    target: &OneHotVector,
    hp: &DistillHyperparams,
) -> Result<f64> {
    let student = super::head::head_forward(features, head)?;
    let kd = super::loss::kd_loss(&student, teacher_logits, hp.tau)?;
    let ce = super::loss::ce_loss(&student, target)?;
    super::loss::total_loss(kd, ce, hp.alpha)
}

/// Losses and accuracy of `head` over a whole dataset.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DistillEval {
    pub l_total: f64,
    pub l_kd: f64,
    pub l_ce: f64,
    pub accuracy: f64,
    /// Fraction of samples whose student argmax equals the teacher argmax.
    pub teacher_agreement: f64,
}

const EVAL_CHUNK: usize = 1024;

pub fn evaluate_head(
    head: &DistillHead,
    data: &DistillData,
    alpha: f64,
    tau: f64,
) -> Result<DistillEval> {
    if data.is_empty() {
        return Err(Error::EmptyDataset("nothing to evaluate".into()));
    }
    let c = data.num_classes();
    let (mut total, mut kd, mut ce) = (0.0, 0.0, 0.0);
    let (mut correct, mut agree) = (0usize, 0usize);
    let mut scratch = vec![0.0; c];
    for start in (0..data.len()).step_by(EVAL_CHUNK) {
        let end = (start + EVAL_CHUNK).min(data.len());
        let logits = head.forward_batch(data.features.slice(ndarray::s![start..end, ..]))?;
        for (r, row) in logits.rows().into_iter().enumerate() {
            let i = start + r;
            let s = row.to_vec();
            let t = data.teacher.row(i).to_vec();
            let l = loss_and_grad(&s, &t, data.labels[i], alpha, tau, 0.0, &mut scratch);
            total += l.total;
            kd += l.kd;
            ce += l.ce;
            let pred = argmax(&s);
            correct += usize::from(pred == data.labels[i]);
            agree += usize::from(pred == argmax(&t));
        }
    }
    let n = data.len() as f64;
    Ok(DistillEval {
        l_total: total / n,
        l_kd: kd / n,
        l_ce: ce / n,
        accuracy: correct as f64 / n,
        teacher_agreement: agree as f64 / n,
    })
}

/// Mini-batch Adam on the mixed loss; only head parameters change.
///
/// Returns the parameters of the epoch with the best validation accuracy
/// (training accuracy when `val` is empty) and the full per-epoch history.
pub fn train_distill_head(
    train: &DistillData,
    val: &DistillData,
    config: &DistillHeadConfig,
    space: &LabelSpace,
    hp: &DistillHyperparams,
) -> Result<(DistillHead, TrainingHistory)> {
    hp.validate()?;
    if train.is_empty() {
        return Err(Error::EmptyDataset("stage-2 training set is empty".into()));
    }
    for (name, d) in [("train", train), ("val", val)] {
        if !d.is_empty() && (d.dim() != config.input_dim || d.num_classes() != config.num_classes) {
            return Err(Error::Shape(format!(
                "{name} data is {}-d with {} classes, head expects {}-d with {}",
                d.dim(),
                d.num_classes(),
                config.input_dim,
                config.num_classes
            )));
        }
    }

    let mut head = DistillHead::init(config.clone(), space.clone(), hp.seed)?;
    let mut opt = Adam::new(
        AdamConfig {
            learning_rate: hp.learning_rate,
            ..AdamConfig::default()
        },
        head.param_count(),
    );
    let mut rng = ChaCha8Rng::seed_from_u64(hp.seed);
    rng.set_stream(1);

    let mut history = TrainingHistory::default();
    let mut best = head.clone();
    let mut stopper = EarlyStopping::new(hp.patience);
    for epoch in 1..=hp.max_epochs {
        for batch in epoch_batches(train.len(), hp.batch_size, &mut rng) {
            let (x, t, y) = train.select(&batch);
            let step = batch_loss_grad(&head, x.view(), t.view(), &y, hp.alpha, hp.tau)?;
            if !step.total.is_finite() {
                return Err(Error::TrainingDiverged {
                    epoch,
                    reason: "non-finite batch loss".into(),
                });
            }
            adam_step_dense(&mut opt, &mut head.layers, &step.grads);
        }

        let tr = evaluate_head(&head, train, hp.alpha, hp.tau)?;
        if !(tr.l_total.is_finite() && tr.l_kd.is_finite() && tr.l_ce.is_finite()) {
            return Err(Error::TrainingDiverged {
                epoch,
                reason: "non-finite epoch loss".into(),
            });
        }
        let val_acc = if val.is_empty() {
            tr.accuracy
        } else {
            evaluate_head(&head, val, hp.alpha, hp.tau)?.accuracy
        };
        history.epochs.push(EpochRecord {
            epoch,
            l_total: tr.l_total,
            l_kd: tr.l_kd,
            l_ce: tr.l_ce,
            train_acc: tr.accuracy,
            val_acc,
        });
        if stopper.observe(val_acc) {
            best = head.clone();
            history.best_epoch = epoch;
        }
        if stopper.should_stop() {
            break;
        }
    }
    Ok((best, history))
}

/// Inference-time distribution: softmax of the head logits at temperature 1.
pub fn student_distribution(features: &[f64], head: &DistillHead) -> Result<ProbVector> {
    let logits = super::head::head_forward(features, head)?;
    crate::labels::softened_softmax(&logits, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::labels::one_hot;

    fn tiny_data(n: usize, d: usize, c: usize, seed: u64) -> DistillData {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let labels: Vec<usize> = (0..n).map(|i| i % c).collect();
        let features = Array2::from_shape_fn((n, d), |(i, j)| {
            let center = if j % c == labels[i] { 4.0 } else { 0.0 };
            center + rng.random_range(-1.0..1.0)
        });
        let teacher =
            Array2::from_shape_fn((n, c), |(i, k)| if k == labels[i] { 3.0 } else { 0.0 });
        DistillData {
            sample_ids: (0..n).map(|i| format!("s{i}")).collect(),
            features,
            teacher,
            labels,
        }
    }

    #[test]
    fn stationary_when_student_equals_teacher_under_pure_kd() {
        let space = LabelSpace::new("t", &["a", "b", "c"]).unwrap();
        let head =
            DistillHead::init(DistillHeadConfig::new(4, vec![5], 3), space.clone(), 3).unwrap();
        let x = [0.3, -0.2, 0.9, 0.1];
        let teacher = super::super::head::head_forward(&x, &head).unwrap();
        let hp = DistillHyperparams {
            alpha: 1.0,
            tau: 2.0,
            ..Default::default()
        };
        let grads =
            loss_gradients(&x, &head, &teacher, &one_hot("b", &space).unwrap(), &hp).unwrap();
        let norm: f64 = grads
            .iter()
            .flat_map(|g| g.weight.iter().chain(g.bias.iter()))
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt();
        assert!(norm < 1e-8, "gradient norm {norm}");
    }

    #[test]
    fn empty_training_set() {
        let space = LabelSpace::binary();
        let empty = DistillData {
            sample_ids: vec![],
            features: Array2::zeros((0, 3)),
            teacher: Array2::zeros((0, 2)),
            labels: vec![],
        };
        let r = train_distill_head(
            &empty,
            &empty,
            &DistillHeadConfig::new(3, vec![], 2),
            &space,
            &Default::default(),
        );
        assert!(matches!(r, Err(Error::EmptyDataset(_))));
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let data = tiny_data(20, 4, 2, 1);
        let r = train_distill_head(
            &data,
            &data,
            &DistillHeadConfig::new(5, vec![], 2),
            &LabelSpace::binary(),
            &Default::default(),
        );
        assert!(matches!(r, Err(Error::Shape(_))));
    }

    #[test]
    fn training_is_deterministic_and_learns() {
        let space = LabelSpace::new("t", &["a", "b", "c"]).unwrap();
        let data = tiny_data(120, 6, 3, 5);
        let cfg = DistillHeadConfig::new(6, vec![8], 3);
        let hp = DistillHyperparams {
            max_epochs: 15,
            batch_size: 16,
            learning_rate: 1e-2,
            seed: 9,
            ..Default::default()
        };
        let (h1, hist1) = train_distill_head(&data, &data, &cfg, &space, &hp).unwrap();
        let (h2, hist2) = train_distill_head(&data, &data, &cfg, &space, &hp).unwrap();
        assert_eq!(h1.params(), h2.params());
        assert_eq!(hist1, hist2);
        assert!(hist1.best().unwrap().train_acc > 0.95);
        assert!(hist1
            .epochs
            .iter()
            .all(|e| e.l_total >= 0.0 && e.l_kd >= 0.0 && e.l_ce >= 0.0));
    }

    #[test]
    fn early_stopping_bounds_history() {
        let space = LabelSpace::new("t", &["a", "b", "c"]).unwrap();
        let data = tiny_data(60, 6, 3, 2);
        let cfg = DistillHeadConfig::new(6, vec![], 3);
        let hp = DistillHyperparams {
            max_epochs: 200,
            patience: 3,
            learning_rate: 5e-2,
            ..Default::default()
        };
        let (_, hist) = train_distill_head(&data, &data, &cfg, &space, &hp).unwrap();
        assert!(hist.epochs.len() < 200);
        assert!(hist.epochs.len() >= hist.best_epoch + 3);
    }

    #[test]
    fn student_distribution_examples() {
        let space = LabelSpace::mikels8();
        let zero =
            DistillHead::zeros(DistillHeadConfig::new(3, vec![4], 8), space.clone()).unwrap();
        let p = student_distribution(&[1.0, 2.0, 3.0], &zero).unwrap();
        assert!(p.values().iter().all(|v| (v - 0.125).abs() < 1e-15));

        let head = DistillHead::init(DistillHeadConfig::new(3, vec![4], 8), space, 1).unwrap();
        let x = [10.0, -3.0, 4.0];
        let p = student_distribution(&x, &head).unwrap();
        assert!((p.values().iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let logits = super::super::head::head_forward(&x, &head).unwrap();
        assert_eq!(argmax(p.values()), argmax(logits.values()));
    }
}
