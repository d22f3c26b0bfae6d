//! Stage 3: fusion of the VLM answer `v1` (one-hot, or uniform when
//! unparseable) with the student distribution `v2`.
//!
//! Every variant stores its parameters as a list of [`Dense`] blocks so that
//! flattening, optimisation and checkpointing are shared:
//!
//! | variant            | blocks                                                    |
//! |--------------------|-----------------------------------------------------------|
//! | concat_linear      | `W: 2C -> C`                                              |
//! | moe                | `E` experts `2C -> C`, router `2C -> E`, output `C -> C`  |
//! | bilinear           | slices `C*C -> C` (no bias), output `C -> C`              |
//! | dynamic_weighting  | `2C -> 2`                                                 |
//! | cross_gating       | `g1: C -> C` on `v2`, `g2: C -> C` on `v1`                |
//!
//! The bilinear slices are held as one `C x C²` matrix acting on
//! `vec(v1 ⊗ v2)`, so row `k` reshaped to `C x C` is `W_k` and
//! `z_k = v1ᵀ W_k v2`.

mod train;

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use ndarray::{Array1, Array2, ArrayView1};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::checkpoint;
use crate::distill::Dense;
use crate::error::{Error, Result};
use crate::labels::{argmax, softmax_in_place, LabelSpace, LogitVector, ProbVector};

pub use train::{evaluate_gate, train_gate, GateEval, GateExample, GateHyperparams};

pub const DEFAULT_MOE_EXPERTS: usize = 2;
pub const GATE_CHECKPOINT: &str = "gate";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GateVariant {
    ConcatLinear,
    Moe,
    Bilinear,
    DynamicWeighting,
    CrossGating,
}

impl GateVariant {
    pub const ALL: [GateVariant; 5] = [
        GateVariant::ConcatLinear,
        GateVariant::Moe,
        GateVariant::Bilinear,
        GateVariant::DynamicWeighting,
        GateVariant::CrossGating,
    ];

    pub fn name(self) -> &'static str {
        match self {
            GateVariant::ConcatLinear => "concat_linear",
            GateVariant::Moe => "moe",
            GateVariant::Bilinear => "bilinear",
            GateVariant::DynamicWeighting => "dynamic_weighting",
            GateVariant::CrossGating => "cross_gating",
        }
    }

    /// `(input, output, has_bias)` for each block.
    fn block_shapes(self, c: usize, experts: usize) -> Vec<(usize, usize, bool)> {
        match self {
            GateVariant::ConcatLinear => vec![(2 * c, c, true)],
            GateVariant::Moe => {
                let mut v = vec![(2 * c, c, true); experts];
                v.push((2 * c, experts, true));
                v.push((c, c, true));
                v
            }
            GateVariant::Bilinear => vec![(c * c, c, false), (c, c, true)],
            GateVariant::DynamicWeighting => vec![(2 * c, 2, true)],
            GateVariant::CrossGating => vec![(c, c, true), (c, c, true)],
        }
    }
}

impl fmt::Display for GateVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for GateVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        GateVariant::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown gate variant `{s}`")))
    }
}

/// Closed-form trainable parameter count of a gate.
pub fn gate_param_count(variant: GateVariant, c: usize, experts: usize) -> usize {
    match variant {
        GateVariant::ConcatLinear => 2 * c * c + c,
        GateVariant::DynamicWeighting => 2 * c * 2 + 2,
        GateVariant::CrossGating => 2 * (c * c + c),
        GateVariant::Bilinear => c * c * c + (c * c + c),
        GateVariant::Moe => experts * (2 * c * c + c) + (2 * c * experts + experts) + (c * c + c),
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GateParams {
    variant: GateVariant,
    space: LabelSpace,
    experts: usize,
    pub blocks: Vec<Dense>,
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn concat(v1: &[f64], v2: &[f64]) -> Array1<f64> {
    v1.iter().chain(v2).copied().collect()
}

fn outer_flat(v1: &[f64], v2: &[f64]) -> Array1<f64> {
    v1.iter()
        .flat_map(|a| v2.iter().map(move |b| a * b))
        .collect()
}

fn softmax(z: Array1<f64>) -> Array1<f64> {
    let mut v = z.to_vec();
    softmax_in_place(&mut v, 1.0);
    Array1::from(v)
}

/// `acc.weight += d ⊗ x`, `acc.bias += d`.
fn accumulate(acc: &mut Dense, d: ArrayView1<'_, f64>, x: ArrayView1<'_, f64>) {
    for (i, di) in d.iter().enumerate() {
        if *di == 0.0 {
            continue;
        }
        let mut row = acc.weight.row_mut(i);
        row.scaled_add(*di, &x);
    }
    if !acc.bias.is_empty() {
        acc.bias += &d;
    }
}

impl GateParams {
    fn build(
        variant: GateVariant,
        space: LabelSpace,
        experts: usize,
        mut make: impl FnMut(usize, usize) -> Dense,
    ) -> Result<Self> {
        if variant == GateVariant::Moe && experts == 0 {
            return Err(Error::Config(
                "mixture of experts needs at least one expert".into(),
            ));
        }
        let c = space.len();
        let blocks = variant
            .block_shapes(c, experts)
            .into_iter()
            .map(|(i, o, bias)| {
                let mut d = make(i, o);
                if !bias {
                    d.bias = Array1::zeros(0);
                }
                d
            })
            .collect();
        Ok(Self {
            variant,
            space,
            experts,
            blocks,
        })
    }

    pub fn zeros(variant: GateVariant, space: LabelSpace, experts: usize) -> Result<Self> {
        Self::build(variant, space, experts, Dense::zeros)
    }

    pub fn init(
        variant: GateVariant,
        space: LabelSpace,
        experts: usize,
        seed: u64,
    ) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self::build(variant, space, experts, |i, o| {
            Dense::uniform(i, o, &mut rng)
        })
    }

    pub fn variant(&self) -> GateVariant {
        self.variant
    }

    pub fn space(&self) -> &LabelSpace {
        &self.space
    }

    pub fn experts(&self) -> usize {
        self.experts
    }

    pub fn param_count(&self) -> usize {
        self.blocks.iter().map(Dense::param_count).sum()
    }

    pub fn params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for b in &self.blocks {
            b.push_params(&mut out);
        }
        out
    }

    pub fn set_params(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.param_count() {
            return Err(Error::Shape(format!(
                "expected {} gate parameters, got {}",
                self.param_count(),
                flat.len()
            )));
        }
        let mut it = flat.iter().copied();
        for b in &mut self.blocks {
            b.pull_params(&mut it)?;
        }
        Ok(())
    }

    fn check(&self, v1: &[f64], v2: &[f64]) -> Result<()> {
        let c = self.space.len();
        if v1.len() != c || v2.len() != c {
            return Err(Error::Shape(format!(
                "gate inputs of length {}/{} for {c} classes",
                v1.len(),
                v2.len()
            )));
        }
        Ok(())
    }

    /// Raw output scores.
    pub(crate) fn logits(&self, v1: &[f64], v2: &[f64]) -> Array1<f64> {
        let b = &self.blocks;
        match self.variant {
            GateVariant::ConcatLinear => b[0].forward(concat(v1, v2).view()),
            GateVariant::Moe => {
                let h = concat(v1, v2);
                let e = self.experts;
                let w = softmax(b[e].forward(h.view()));
                let mut mixed = Array1::zeros(self.space.len());
                for (j, expert) in b[..e].iter().enumerate() {
                    mixed.scaled_add(w[j], &expert.forward(h.view()));
                }
                b[e + 1].forward(mixed.view())
            }
            GateVariant::Bilinear => {
                let z = b[0].weight.dot(&outer_flat(v1, v2));
                b[1].forward(z.view())
            }
            GateVariant::DynamicWeighting => {
                let s = softmax(b[0].forward(concat(v1, v2).view()));
                v1.iter()
                    .zip(v2)
                    .map(|(a, c)| s[0] * a + s[1] * c)
                    .collect()
            }
            GateVariant::CrossGating => {
                let g1 = b[0].forward(ArrayView1::from(v2)).mapv(sigmoid);
                let g2 = b[1].forward(ArrayView1::from(v1)).mapv(sigmoid);
                (0..v1.len())
                    .map(|i| g1[i] * v1[i] + g2[i] * v2[i])
                    .collect()
            }
        }
    }

    /// Adds the gradient of a loss with output gradient `dy` into `grads`.
    pub(crate) fn backward(
        &self,
        v1: &[f64],
        v2: &[f64],
        dy: ArrayView1<'_, f64>,
        grads: &mut [Dense],
    ) {
        let b = &self.blocks;
        match self.variant {
            GateVariant::ConcatLinear => accumulate(&mut grads[0], dy, concat(v1, v2).view()),
            GateVariant::Moe => {
                let h = concat(v1, v2);
                let e = self.experts;
                let w = softmax(b[e].forward(h.view()));
                let outs: Vec<Array1<f64>> = b[..e].iter().map(|x| x.forward(h.view())).collect();
                let mut mixed = Array1::zeros(self.space.len());
                for (j, o) in outs.iter().enumerate() {
                    mixed.scaled_add(w[j], o);
                }
                accumulate(&mut grads[e + 1], dy, mixed.view());
                let dm = b[e + 1].weight.t().dot(&dy);
                let mut dw = Array1::zeros(e);
                for j in 0..e {
                    accumulate(&mut grads[j], (&dm * w[j]).view(), h.view());
                    dw[j] = dm.dot(&outs[j]);
                }
                let mean = w.dot(&dw);
                let dr = &w * &(dw - mean);
                accumulate(&mut grads[e], dr.view(), h.view());
            }
            GateVariant::Bilinear => {
                let u = outer_flat(v1, v2);
                let z = b[0].weight.dot(&u);
                accumulate(&mut grads[1], dy, z.view());
                let dz = b[1].weight.t().dot(&dy);
                accumulate(&mut grads[0], dz.view(), u.view());
            }
            GateVariant::DynamicWeighting => {
                let h = concat(v1, v2);
                let s = softmax(b[0].forward(h.view()));
                let ds = [dy.dot(&ArrayView1::from(v1)), dy.dot(&ArrayView1::from(v2))];
                let mean = s[0] * ds[0] + s[1] * ds[1];
                let dr = Array1::from(vec![s[0] * (ds[0] - mean), s[1] * (ds[1] - mean)]);
                accumulate(&mut grads[0], dr.view(), h.view());
            }
            GateVariant::CrossGating => {
                let g1 = b[0].forward(ArrayView1::from(v2)).mapv(sigmoid);
                let g2 = b[1].forward(ArrayView1::from(v1)).mapv(sigmoid);
                let da1: Array1<f64> = (0..v1.len())
                    .map(|i| dy[i] * v1[i] * g1[i] * (1.0 - g1[i]))
                    .collect();
                let da2: Array1<f64> = (0..v1.len())
                    .map(|i| dy[i] * v2[i] * g2[i] * (1.0 - g2[i]))
                    .collect();
                accumulate(&mut grads[0], da1.view(), ArrayView1::from(v2));
                accumulate(&mut grads[1], da2.view(), ArrayView1::from(v1));
            }
        }
    }

    pub(crate) fn zero_grads(&self) -> Vec<Dense> {
        self.blocks
            .iter()
            .map(|b| Dense {
                weight: Array2::zeros(b.weight.raw_dim()),
                bias: Array1::zeros(b.bias.len()),
            })
            .collect()
    }
}

pub fn gate_forward(v1: &[f64], v2: &[f64], params: &GateParams) -> Result<LogitVector> {
    params.check(v1, v2)?;
    LogitVector::new(params.space.clone(), params.logits(v1, v2).to_vec())
}

/// Fused distribution (softmax of the gate output) and its argmax label.
pub fn fuse_predict(v1: &[f64], v2: &[f64], params: &GateParams) -> Result<(String, ProbVector)> {
    params.check(v1, v2)?;
    let mut p = params.logits(v1, v2).to_vec();
    softmax_in_place(&mut p, 1.0);
    let label = params.space.label(argmax(&p)).to_string();
    Ok((label, ProbVector::new(params.space.clone(), p)?))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GateMeta {
    pub variant: GateVariant,
    pub space: LabelSpace,
    pub experts: usize,
    pub seed: u64,
    pub metrics: serde_json::Value,
}

pub fn save_gate(
    dir: &Path,
    params: &GateParams,
    seed: u64,
    metrics: serde_json::Value,
) -> Result<String> {
    let meta = GateMeta {
        variant: params.variant,
        space: params.space.clone(),
        experts: params.experts,
        seed,
        metrics,
    };
    checkpoint::write(dir, GATE_CHECKPOINT, meta, &params.params())
}

pub fn load_gate(dir: &Path) -> Result<(GateParams, GateMeta)> {
    let (manifest, flat) = checkpoint::read::<GateMeta>(dir, GATE_CHECKPOINT, |m| {
        Ok(gate_param_count(m.variant, m.space.len(), m.experts))
    })?;
    let meta = manifest.meta;
    let mut params = GateParams::zeros(meta.variant, meta.space.clone(), meta.experts)?;
    params.set_params(&flat)?;
    Ok((params, meta))
}
