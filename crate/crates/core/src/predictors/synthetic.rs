//! Seeded synthetic stand-ins for the frozen encoder, the teacher and the VLM.
//!
//! Every sample lands in exactly one correctness bucket (both right, only the
//! teacher right, only the VLM right, neither). Bucket sizes are exact counts,
//! so the complementarity statistic recovers them without sampling noise.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::files::{
    FeatureRecord, FeatureSet, RecordSet, TeacherRecord, TeacherSet, VlmPrediction, VlmSet,
};
use crate::data::instructions::categorical_response;
use crate::error::{Error, Result};
use crate::labels::{LabelSpace, LogitVector};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSpec {
    pub n: usize,
    pub num_classes: usize,
    pub dim: usize,
    pub teacher_accuracy: f64,
    pub vlm_accuracy: f64,
    /// Fraction of samples both predictors get right.
    pub overlap: f64,
    /// Teacher probability on its choice when that choice is correct.
    #[serde(default = "default_conf_correct")]
    pub confidence_correct: f64,
    /// Teacher probability on its choice when that choice is wrong.
    #[serde(default = "default_conf_wrong")]
    pub confidence_wrong: f64,
    /// Scale of the per-class feature centroids relative to unit noise.
    #[serde(default = "default_separation")]
    pub cluster_separation: f64,
    #[serde(default)]
    pub seed: u64,
}

fn default_conf_correct() -> f64 {
    0.9
}

fn default_conf_wrong() -> f64 {
    0.4
}

fn default_separation() -> f64 {
    3.0
}

impl SyntheticSpec {
    pub fn new(
        n: usize,
        num_classes: usize,
        dim: usize,
        teacher: f64,
        vlm: f64,
        overlap: f64,
        seed: u64,
    ) -> Self {
        Self {
            n,
            num_classes,
            dim,
            teacher_accuracy: teacher,
            vlm_accuracy: vlm,
            overlap,
            confidence_correct: default_conf_correct(),
            confidence_wrong: default_conf_wrong(),
            cluster_separation: default_separation(),
            seed,
        }
    }

    /// Exact bucket counts. Overlap and each accuracy are rounded down to whole
    /// samples, the single-model buckets are their differences, and `neither`
    /// takes the rest, so every realized fraction is within 1/n of the request.
    pub fn bucket_counts(&self) -> Result<BucketCounts> {
        let in_unit = |x: f64| (0.0..=1.0).contains(&x);
        if !(in_unit(self.teacher_accuracy) && in_unit(self.vlm_accuracy) && in_unit(self.overlap))
        {
            return Err(Error::InfeasibleSpec(
                "accuracies and overlap must lie in [0, 1]".into(),
            ));
        }
        if self.overlap > self.teacher_accuracy.min(self.vlm_accuracy) + 1e-12 {
            return Err(Error::InfeasibleSpec(format!(
                "overlap {} exceeds min(teacher {}, vlm {})",
                self.overlap, self.teacher_accuracy, self.vlm_accuracy
            )));
        }
        // guard so that e.g. 0.29 * 100 floors to 29, not 28
        let count = |frac: f64| ((frac * self.n as f64) + 1e-9).floor().max(0.0) as usize;
        let both = count(self.overlap);
        let teacher_only = count(self.teacher_accuracy).saturating_sub(both);
        let vlm_only = count(self.vlm_accuracy).saturating_sub(both);
        let neither = self
            .n
            .checked_sub(both + teacher_only + vlm_only)
            .ok_or_else(|| Error::InfeasibleSpec("teacher + vlm - overlap exceeds 1".into()))?;
        Ok(BucketCounts {
            both,
            teacher_only,
            vlm_only,
            neither,
        })
    }

    fn validate(&self) -> Result<BucketCounts> {
        if self.n == 0 || self.num_classes < 2 || self.dim == 0 {
            return Err(Error::InfeasibleSpec(
                "need n >= 1, num_classes >= 2, dim >= 1".into(),
            ));
        }
        let floor = 1.0 / self.num_classes as f64;
        for (name, c) in [
            ("confidence_correct", self.confidence_correct),
            ("confidence_wrong", self.confidence_wrong),
        ] {
            if !(c > floor && c < 1.0) {
                return Err(Error::InfeasibleSpec(format!(
                    "{name} must lie in (1/C, 1), got {c}"
                )));
            }
        }
        self.bucket_counts()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BucketCounts {
    pub both: usize,
    pub teacher_only: usize,
    pub vlm_only: usize,
    pub neither: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticDataset {
    pub space: LabelSpace,
    pub sample_ids: Vec<String>,
    pub labels: Vec<String>,
    pub features: FeatureSet,
    pub teacher: TeacherSet,
    pub vlm: VlmSet,
    pub buckets: BucketCounts,
}

/// Built-in space for the class count, or generic `class<i>` labels.
pub fn space_for_classes(c: usize) -> Result<LabelSpace> {
    match c {
        8 => Ok(LabelSpace::mikels8()),
        6 => Ok(LabelSpace::ekman6()),
        2 => Ok(LabelSpace::binary()),
        _ => {
            let names: Vec<String> = (0..c).map(|i| format!("class{i}")).collect();
            let refs: Vec<&str> = names.iter().map(String::as_str).collect();
            LabelSpace::new(&format!("synthetic{c}"), &refs)
        }
    }
}

fn wrong_class(rng: &mut ChaCha8Rng, truth: usize, c: usize) -> usize {
    let k = rng.random_range(0..c - 1);
    if k >= truth {
        k + 1
    } else {
        k
    }
}

pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<SyntheticDataset> {
    let buckets = spec.validate()?;
    let space = space_for_classes(spec.num_classes)?;
    let (n, c, d) = (spec.n, spec.num_classes, spec.dim);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);

    let centroids: Vec<Vec<f64>> = (0..c)
        .map(|_| {
            (0..d)
                .map(|_| spec.cluster_separation * rng.sample::<f64, _>(StandardNormal))
                .collect()
        })
        .collect();

    let mut labels_idx: Vec<usize> = (0..n).map(|i| i % c).collect();
    labels_idx.shuffle(&mut rng);

    // 0 both, 1 teacher only, 2 vlm only, 3 neither
    let mut tags = Vec::with_capacity(n);
    tags.extend(std::iter::repeat_n(0u8, buckets.both));
    tags.extend(std::iter::repeat_n(1u8, buckets.teacher_only));
    tags.extend(std::iter::repeat_n(2u8, buckets.vlm_only));
    tags.extend(std::iter::repeat_n(3u8, buckets.neither));
    tags.shuffle(&mut rng);

    let width = n.to_string().len().max(6);
    let sample_ids: Vec<String> = (0..n).map(|i| format!("syn{i:0width$}")).collect();
    let mut features = Vec::with_capacity(n);
    let mut teachers = Vec::with_capacity(n);
    let mut vlms = Vec::with_capacity(n);
    for i in 0..n {
        let truth = labels_idx[i];
        let vector: Vec<f64> = centroids[truth]
            .iter()
            .map(|m| {
                let noise: f64 = StandardNormal.sample(&mut rng);
                m + noise
            })
            .collect();
        features.push(FeatureRecord {
            sample_id: sample_ids[i].clone(),
            vector,
        });

        let teacher_right = matches!(tags[i], 0 | 1);
        let vlm_right = matches!(tags[i], 0 | 2);
        let teacher_choice = if teacher_right {
            truth
        } else {
            wrong_class(&mut rng, truth, c)
        };
        let vlm_choice = if vlm_right {
            truth
        } else {
            wrong_class(&mut rng, truth, c)
        };

        let conf = if teacher_right {
            spec.confidence_correct
        } else {
            spec.confidence_wrong
        };
        let rest = ((1.0 - conf) / (c - 1) as f64).ln();
        let logits: Vec<f64> = (0..c)
            .map(|k| if k == teacher_choice { conf.ln() } else { rest })
            .collect();
        teachers.push(TeacherRecord {
            sample_id: sample_ids[i].clone(),
            logits: LogitVector::new(space.clone(), logits)?,
        });
        vlms.push(VlmPrediction::new(
            sample_ids[i].clone(),
            categorical_response(space.label(vlm_choice)),
            &space,
        ));
    }

    Ok(SyntheticDataset {
        labels: labels_idx
            .iter()
            .map(|&k| space.label(k).to_string())
            .collect(),
        features: FeatureSet::new(space.clone(), d, features)?,
        teacher: RecordSet::new(space.clone(), teachers)?,
        vlm: RecordSet::new(space.clone(), vlms)?,
        sample_ids,
        space,
        buckets,
    })
}
