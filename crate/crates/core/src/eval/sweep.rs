use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::distill::{
    param_count, train_distill_head, DistillData, DistillHeadConfig, DistillHyperparams,
};
use crate::error::{Error, Result};
use crate::gating::{
    evaluate_gate, gate_param_count, train_gate, GateExample, GateHyperparams, GateVariant,
};
use crate::labels::{check_tau, LabelSpace};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepKind {
    Alpha,
    Depth,
    Gate,
}

impl SweepKind {
    /// Stem used for emitted files.
    pub fn file_stem(self) -> &'static str {
        match self {
            SweepKind::Alpha => "alpha_sweep",
            SweepKind::Depth => "depth_sweep",
            SweepKind::Gate => "gate_sweep",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub label: String,
    /// Numeric sort key: α, number of hidden layers, or variant ordinal.
    pub value: f64,
    /// Mean over seeds.
    pub accuracy: f64,
    pub accuracy_std: f64,
    pub per_seed_accuracy: Vec<f64>,
    /// Mean final-epoch KD loss, for head sweeps.
    pub l_kd: Option<f64>,
    pub param_count: Option<u64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub kind: SweepKind,
    pub seeds: Vec<u64>,
    pub points: Vec<SweepPoint>,
}

struct Run {
    accuracy: f64,
    l_kd: Option<f64>,
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

fn seeds_or_default(seeds: &[u64], fallback: u64) -> Vec<u64> {
    if seeds.is_empty() {
        vec![fallback]
    } else {
        seeds.to_vec()
    }
}

/// Runs `run(point, seed)` for every combination in parallel and folds the
/// seeds of each point. Output order follows `points`.
fn sweep<P: Sync>(
    points: &[P],
    seeds: &[u64],
    run: impl Fn(&P, u64) -> Result<Run> + Sync,
    describe: impl Fn(&P) -> (String, f64, Option<u64>),
) -> Result<Vec<SweepPoint>> {
    let jobs: Vec<(usize, u64)> = (0..points.len())
        .flat_map(|i| seeds.iter().map(move |&s| (i, s)))
        .collect();
    let runs: Vec<Run> = jobs
        .par_iter()
        .map(|&(i, s)| run(&points[i], s))
        .collect::<Result<_>>()?;
    Ok(points
        .iter()
        .zip(runs.chunks(seeds.len()))
        .map(|(p, rs)| {
            let accs: Vec<f64> = rs.iter().map(|r| r.accuracy).collect();
            let (accuracy, accuracy_std) = mean_std(&accs);
            let kds: Option<Vec<f64>> = rs.iter().map(|r| r.l_kd).collect();
            let (label, value, param_count) = describe(p);
            SweepPoint {
                label,
                value,
                accuracy,
                accuracy_std,
                per_seed_accuracy: accs,
                l_kd: kds.map(|k| mean_std(&k).0),
                param_count,
            }
        })
        .collect())
}

fn train_head_run(
    train: &DistillData,
    val: &DistillData,
    config: &DistillHeadConfig,
    space: &LabelSpace,
    hp: &DistillHyperparams,
) -> Result<Run> {
    let (_, history) = train_distill_head(train, val, config, space, hp)?;
    let best = history.best().ok_or_else(|| Error::TrainingDiverged {
        epoch: 0,
        reason: "no epoch improved".into(),
    })?;
    let last = history.last().expect("at least one epoch");
    Ok(Run {
        accuracy: best.val_acc,
        l_kd: Some(last.l_kd),
    })
}

/// Trains one head per α (and seed); records best validation accuracy and
/// the final-epoch KD loss.
pub fn run_alpha_sweep(
    grid: &[f64],
    train: &DistillData,
    val: &DistillData,
    config: &DistillHeadConfig,
    space: &LabelSpace,
    base: &DistillHyperparams,
    seeds: &[u64],
) -> Result<SweepResult> {
    if grid.is_empty() {
        return Err(Error::InvalidGrid("alpha grid is empty".into()));
    }
    check_tau(base.tau)?;
    let mut grid = grid.to_vec();
    for &a in &grid {
        if !(0.0..=1.0).contains(&a) {
            return Err(Error::InvalidAlpha(a));
        }
    }
    grid.sort_by(f64::total_cmp);
    if grid.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::InvalidGrid("alpha grid has duplicate values".into()));
    }
    let seeds = seeds_or_default(seeds, base.seed);
    let points = sweep(
        &grid,
        &seeds,
        |&alpha, seed| {
            let hp = DistillHyperparams {
                alpha,
                seed,
                ..base.clone()
            };
            train_head_run(train, val, config, space, &hp)
                .map_err(|e| e.annotate(format!("alpha={alpha}")))
        },
        |&a| (format!("{a}"), a, Some(param_count(config) as u64)),
    )?;
    Ok(SweepResult {
        kind: SweepKind::Alpha,
        seeds,
        points,
    })
}

/// Trains one head per layer configuration; records parameter count and
/// best validation accuracy.
pub fn run_depth_sweep(
    configs: &[DistillHeadConfig],
    train: &DistillData,
    val: &DistillData,
    space: &LabelSpace,
    hp: &DistillHyperparams,
    seeds: &[u64],
) -> Result<SweepResult> {
    if configs.is_empty() {
        return Err(Error::InvalidGrid("depth grid is empty".into()));
    }
    let mut configs = configs.to_vec();
    configs.sort_by_key(|c| (c.hidden_dims.len(), param_count(c)));
    let seeds = seeds_or_default(seeds, hp.seed);
    let points = sweep(
        &configs,
        &seeds,
        |config, seed| {
            let hp = DistillHyperparams { seed, ..hp.clone() };
            train_head_run(train, val, config, space, &hp)
                .map_err(|e| e.annotate(format!("layers={:?}", config.hidden_dims)))
        },
        |c| {
            (
                format!("{:?}", c.hidden_dims),
                c.hidden_dims.len() as f64,
                Some(param_count(c) as u64),
            )
        },
    )?;
    Ok(SweepResult {
        kind: SweepKind::Depth,
        seeds,
        points,
    })
}

/// Trains each gate variant on the same examples; records test accuracy and
/// parameter count.
pub fn run_gate_sweep(
    variants: &[GateVariant],
    train: &[GateExample],
    val: &[GateExample],
    test: &[GateExample],
    space: &LabelSpace,
    hp: &GateHyperparams,
    seeds: &[u64],
) -> Result<SweepResult> {
    if variants.is_empty() {
        return Err(Error::InvalidGrid("no gate variants requested".into()));
    }
    let mut variants = variants.to_vec();
    variants.sort();
    variants.dedup();
    let seeds = seeds_or_default(seeds, hp.seed);
    let c = space.len();
    let points = sweep(
        &variants,
        &seeds,
        |&variant, seed| {
            let hp = GateHyperparams { seed, ..hp.clone() };
            let run = || -> Result<Run> {
                let (params, _) = train_gate(train, val, variant, space, &hp)?;
                Ok(Run {
                    accuracy: evaluate_gate(&params, test)?.accuracy,
                    l_kd: None,
                })
            };
            run().map_err(|e| e.annotate(format!("gate={variant}")))
        },
        |&v| {
            let ordinal = GateVariant::ALL
                .iter()
                .position(|x| *x == v)
                .expect("known variant");
            (
                v.name().to_string(),
                ordinal as f64,
                Some(gate_param_count(v, c, hp.experts) as u64),
            )
        },
    )?;
    Ok(SweepResult {
        kind: SweepKind::Gate,
        seeds,
        points,
    })
}
