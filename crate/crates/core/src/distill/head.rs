use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::labels::{LabelSpace, LogitVector};

/// Layer widths of the student: `input_dim -> hidden_dims... -> num_classes`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DistillHeadConfig {
    pub input_dim: usize,
    #[serde(default)]
    pub hidden_dims: Vec<usize>,
    pub num_classes: usize,
}

impl DistillHeadConfig {
    pub fn new(input_dim: usize, hidden_dims: Vec<usize>, num_classes: usize) -> Self {
        Self {
            input_dim,
            hidden_dims,
            num_classes,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.num_classes < 2 || self.hidden_dims.contains(&0) {
            return Err(Error::Config(format!("invalid head config {self:?}")));
        }
        Ok(())
    }

    pub fn dims(&self) -> Vec<usize> {
        let mut dims = Vec::with_capacity(self.hidden_dims.len() + 2);
        dims.push(self.input_dim);
        dims.extend(&self.hidden_dims);
        dims.push(self.num_classes);
        dims
    }

    /// The five stacked-layer configurations of the depth ablation.
    pub fn depth_grid(input_dim: usize, num_classes: usize) -> Vec<Self> {
        const WIDTHS: [usize; 5] = [1024, 512, 256, 128, 64];
        (1..=WIDTHS.len())
            .map(|k| Self::new(input_dim, WIDTHS[..k].to_vec(), num_classes))
            .collect()
    }
}

/// Trainable parameter count: `sum(in * out + out)` over consecutive widths.
pub fn param_count(config: &DistillHeadConfig) -> usize {
    config.dims().windows(2).map(|w| w[0] * w[1] + w[1]).sum()
}

/// One affine map; `weight` is `out x in`.
#[derive(Clone, Debug, PartialEq)]
pub struct Dense {
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Dense {
    pub fn zeros(input: usize, output: usize) -> Self {
        Self {
            weight: Array2::zeros((output, input)),
            bias: Array1::zeros(output),
        }
    }

    /// Uniform in `±1/sqrt(fan_in)` for both weights and biases.
    pub fn uniform(input: usize, output: usize, rng: &mut impl Rng) -> Self {
        let bound = 1.0 / (input as f64).sqrt();
        let mut draw = |_| rng.random_range(-bound..=bound);
        Self {
            weight: Array2::from_shape_fn((output, input), |i| draw(i.0 * input + i.1)),
            bias: Array1::from_shape_fn(output, &mut draw),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.weight.ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.weight.nrows()
    }

    pub fn param_count(&self) -> usize {
        self.weight.len() + self.bias.len()
    }

    /// Row-wise `x W^T + b`.
    pub fn forward_batch(&self, x: ArrayView2<'_, f64>) -> Array2<f64> {
        x.dot(&self.weight.t()) + &self.bias
    }

    pub fn forward(&self, x: ArrayView1<'_, f64>) -> Array1<f64> {
        self.weight.dot(&x) + &self.bias
    }

    pub(crate) fn push_params(&self, out: &mut Vec<f64>) {
        out.extend(self.weight.iter());
        out.extend(self.bias.iter());
    }

    pub(crate) fn pull_params(&mut self, src: &mut impl Iterator<Item = f64>) -> Result<()> {
        for w in self.weight.iter_mut().chain(self.bias.iter_mut()) {
            *w = src
                .next()
                .ok_or_else(|| Error::Shape("parameter payload too short".into()))?;
        }
        Ok(())
    }
}

/// Shallow student over frozen features: affine layers with ReLU between
/// them and none after the last.
#[derive(Clone, Debug, PartialEq)]
pub struct DistillHead {
    config: DistillHeadConfig,
    space: LabelSpace,
    pub layers: Vec<Dense>,
}

/// Activations kept for backpropagation. `inputs[k]` feeds layer `k`.
pub(crate) struct ForwardCache {
    pub inputs: Vec<Array2<f64>>,
    pub logits: Array2<f64>,
}

impl DistillHead {
    pub fn zeros(config: DistillHeadConfig, space: LabelSpace) -> Result<Self> {
        Self::build(config, space, Dense::zeros)
    }

    pub fn init(config: DistillHeadConfig, space: LabelSpace, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self::build(config, space, |i, o| Dense::uniform(i, o, &mut rng))
    }

    fn build(
        config: DistillHeadConfig,
        space: LabelSpace,
        mut layer: impl FnMut(usize, usize) -> Dense,
    ) -> Result<Self> {
        config.validate()?;
        if config.num_classes != space.len() {
            return Err(Error::Shape(format!(
                "head emits {} classes but space `{}` has {}",
                config.num_classes,
                space.name(),
                space.len()
            )));
        }
        let layers = config
            .dims()
            .windows(2)
            .map(|w| layer(w[0], w[1]))
            .collect();
        Ok(Self {
            config,
            space,
            layers,
        })
    }

    pub fn config(&self) -> &DistillHeadConfig {
        &self.config
    }

    pub fn space(&self) -> &LabelSpace {
        &self.space
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(Dense::param_count).sum()
    }

    /// Flattened parameters: per layer, row-major weight then bias.
    pub fn params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for l in &self.layers {
            l.push_params(&mut out);
        }
        out
    }

    pub fn set_params(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.param_count() {
            return Err(Error::Shape(format!(
                "expected {} parameters, got {}",
                self.param_count(),
                flat.len()
            )));
        }
        let mut it = flat.iter().copied();
        for l in &mut self.layers {
            l.pull_params(&mut it)?;
        }
        Ok(())
    }

    fn check_input(&self, len: usize) -> Result<()> {
        if len != self.config.input_dim {
            return Err(Error::Shape(format!(
                "feature length {len} does not match head input {}",
                self.config.input_dim
            )));
        }
        Ok(())
    }

    pub(crate) fn forward_cached(&self, x: ArrayView2<'_, f64>) -> Result<ForwardCache> {
        self.check_input(x.ncols())?;
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut h = x.to_owned();
        let last = self.layers.len() - 1;
        for (k, layer) in self.layers.iter().enumerate() {
            let mut z = layer.forward_batch(h.view());
            if k < last {
                z.mapv_inplace(|v| v.max(0.0));
            }
            inputs.push(h);
            h = z;
        }
        Ok(ForwardCache { inputs, logits: h })
    }

    /// Logits for a batch of feature rows.
    pub fn forward_batch(&self, x: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        Ok(self.forward_cached(x)?.logits)
    }

    /// Gradients of a scalar loss given its gradient w.r.t. the batch logits.
    pub(crate) fn backward(&self, cache: &ForwardCache, dlogits: Array2<f64>) -> Vec<Dense> {
        let mut grads: Vec<Dense> = Vec::with_capacity(self.layers.len());
        let mut delta = dlogits;
        for k in (0..self.layers.len()).rev() {
            let input = &cache.inputs[k];
            grads.push(Dense {
                weight: delta.t().dot(input),
                bias: delta.sum_axis(Axis(0)),
            });
            if k > 0 {
                let mut d_in = delta.dot(&self.layers[k].weight);
                // input of layer k is relu output of layer k-1
                ndarray::Zip::from(&mut d_in).and(input).for_each(|d, &a| {
                    if a <= 0.0 {
                        *d = 0.0;
                    }
                });
                delta = d_in;
            }
        }
        grads.reverse();
        grads
    }
}

pub fn head_forward(features: &[f64], head: &DistillHead) -> Result<LogitVector> {
    head.check_input(features.len())?;
    let x = ArrayView2::from_shape((1, features.len()), features).expect("row view");
    let logits = head.forward_batch(x)?;
    LogitVector::new(head.space.clone(), logits.row(0).to_vec())
}
