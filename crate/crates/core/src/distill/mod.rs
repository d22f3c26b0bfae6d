//! Stage 2: a shallow student head over frozen encoder features, trained to
//! mimic the teacher while supervised by the ground truth.

pub mod head;
pub mod loss;
pub mod train;

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::checkpoint;
use crate::error::{Error, Result};
use crate::labels::LabelSpace;

pub use head::{head_forward, param_count, Dense, DistillHead, DistillHeadConfig};
pub use loss::{ce_loss, kd_loss, total_loss};
pub use train::{
    evaluate_head, loss_gradients, sample_total_loss, student_distribution, train_distill_head,
    DistillData, DistillEval, DistillHyperparams,
};

pub const HEAD_CHECKPOINT: &str = "head";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HeadMeta {
    pub config: DistillHeadConfig,
    pub space: LabelSpace,
    pub seed: u64,
    pub epoch: usize,
    pub metrics: serde_json::Value,
}

/// Writes `head.json` + `head.f32` under `dir`; returns the payload digest.
pub fn save_head(
    dir: &Path,
    head: &DistillHead,
    seed: u64,
    epoch: usize,
    metrics: serde_json::Value,
) -> Result<String> {
    let meta = HeadMeta {
        config: head.config().clone(),
        space: head.space().clone(),
        seed,
        epoch,
        metrics,
    };
    checkpoint::write(dir, HEAD_CHECKPOINT, meta, &head.params())
}

pub fn load_head(dir: &Path) -> Result<(DistillHead, HeadMeta)> {
    let (manifest, params) =
        checkpoint::read::<HeadMeta>(dir, HEAD_CHECKPOINT, |m| Ok(param_count(&m.config)))?;
    let meta = manifest.meta;
    let mut head = DistillHead::zeros(meta.config.clone(), meta.space.clone()).map_err(|e| {
        Error::Checkpoint {
            path: dir.into(),
            reason: e.to_string(),
        }
    })?;
    head.set_params(&params)?;
    Ok((head, meta))
}
