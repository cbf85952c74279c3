use serde::{Deserialize, Serialize};

use super::{Matrix, ParamBlock, ParamSet, Rng};
use crate::error::{HandaError, Result};

const LEAKY_SLOPE: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Activation {
    /// `max(x, 0.01 x)`.
    LeakyRelu,
    Identity,
}

impl Activation {
    #[inline]
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::LeakyRelu if x <= 0.0 => LEAKY_SLOPE * x,
            _ => x,
        }
    }

    #[inline]
    fn derivative(self, x: f64) -> f64 {
        match self {
            Activation::LeakyRelu if x <= 0.0 => LEAKY_SLOPE,
            _ => 1.0,
        }
    }
}

/// One affine layer `act(W x + b)`; `weight` is `out × in`.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub weight: Matrix,
    pub bias: Vec<f64>,
    pub activation: Activation,
}

impl Layer {
    pub fn input_dim(&self) -> usize {
        self.weight.cols()
    }

    pub fn output_dim(&self) -> usize {
        self.weight.rows()
    }
}

/// Fully-connected network. Hidden layers use LeakyReLU, the last layer is
/// linear.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpParams {
    layers: Vec<Layer>,
}

/// Activations recorded by [`MlpParams::forward`].
#[derive(Debug, Clone)]
pub struct MlpCache {
    inputs: Vec<Matrix>,
    pre: Vec<Matrix>,
    fingerprint: Vec<(usize, usize)>,
}

impl MlpCache {
    pub fn batch_size(&self) -> usize {
        self.inputs.first().map_or(0, |m| m.cols())
    }
}

impl MlpParams {
    /// Glorot-initialized network with layer widths `dims[0] → dims[1] → … → dims[last]`.
    pub fn new(dims: &[usize], rng: &mut Rng) -> Result<Self> {
        if dims.len() < 2 || dims.iter().any(|&d| d == 0) {
            return Err(HandaError::contract(format!(
                "network needs at least two positive widths, got {dims:?}"
            )));
        }
        let n = dims.len() - 1;
        let layers = (0..n)
            .map(|i| Layer {
                weight: rng.glorot(dims[i + 1], dims[i]),
                bias: vec![0.0; dims[i + 1]],
                activation: if i + 1 == n {
                    Activation::Identity
                } else {
                    Activation::LeakyRelu
                },
            })
            .collect();
        Ok(MlpParams { layers })
    }

    pub fn from_layers(layers: Vec<Layer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(HandaError::contract("network has no layers"));
        }
        for (i, l) in layers.iter().enumerate() {
            if l.bias.len() != l.output_dim() {
                return Err(HandaError::shape(
                    "MlpParams::from_layers",
                    format!("layer {i}: bias length {} vs {} outputs", l.bias.len(), l.output_dim()),
                ));
            }
        }
        for (i, w) in layers.windows(2).enumerate() {
            if w[0].output_dim() != w[1].input_dim() {
                return Err(HandaError::shape(
                    "MlpParams::from_layers",
                    format!(
                        "layer {i} emits {} features but layer {} expects {}",
                        w[0].output_dim(),
                        i + 1,
                        w[1].input_dim()
                    ),
                ));
            }
        }
        if layers.last().map(|l| l.activation) != Some(Activation::Identity) {
            return Err(HandaError::contract("final layer must be linear"));
        }
        Ok(MlpParams { layers })
    }

    /// Same architecture, every parameter zero. Used as a gradient accumulator.
    pub fn zeros_like(&self) -> Self {
        MlpParams {
            layers: self
                .layers
                .iter()
                .map(|l| Layer {
                    weight: Matrix::zeros(l.weight.rows(), l.weight.cols()),
                    bias: vec![0.0; l.bias.len()],
                    activation: l.activation,
                })
                .collect(),
        }
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].input_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].output_dim()
    }

    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    fn fingerprint(&self) -> Vec<(usize, usize)> {
        self.layers.iter().map(|l| l.weight.shape()).collect()
    }

    /// Applies the network column-wise to `x` (`input_dim × n`).
    pub fn forward(&self, x: &Matrix) -> Result<(Matrix, MlpCache)> {
        if x.rows() != self.input_dim() {
            return Err(HandaError::shape(
                "mlp_forward",
                format!("input has {} rows, network expects {}", x.rows(), self.input_dim()),
            ));
        }
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut h = x.clone();
        for layer in &self.layers {
            let mut z = layer.weight.matmul(&h)?;
            z.add_row_bias(&layer.bias);
            let act = layer.activation;
            let out = z.map(|v| act.apply(v));
            inputs.push(h);
            pre.push(z);
            h = out;
        }
        Ok((
            h,
            MlpCache {
                inputs,
                pre,
                fingerprint: self.fingerprint(),
            },
        ))
    }

    /// Forward pass without keeping the cache.
    pub fn apply(&self, x: &Matrix) -> Result<Matrix> {
        Ok(self.forward(x)?.0)
    }

    /// Reverse-mode pass: returns parameter gradients (same layout as `self`)
    /// and the gradient with respect to the forward input.
    pub fn backward(&self, cache: &MlpCache, grad_out: &Matrix) -> Result<(MlpParams, Matrix)> {
        if cache.fingerprint != self.fingerprint() {
            return Err(HandaError::contract(
                "mlp_backward: cache was produced by a different architecture",
            ));
        }
        let last = cache.pre.last().expect("non-empty network");
        if grad_out.shape() != last.shape() {
            return Err(HandaError::shape(
                "mlp_backward",
                format!(
                    "grad_out {}x{} vs output {}x{}",
                    grad_out.rows(),
                    grad_out.cols(),
                    last.rows(),
                    last.cols()
                ),
            ));
        }
        let mut grads = self.zeros_like();
        let mut g = grad_out.clone();
        for (l, layer) in self.layers.iter().enumerate().rev() {
            let pre = &cache.pre[l];
            let act = layer.activation;
            if act != Activation::Identity {
                for (gv, &z) in g.as_mut_slice().iter_mut().zip(pre.as_slice()) {
                    *gv *= act.derivative(z);
                }
            }
            grads.layers[l].weight = g.matmul_nt(&cache.inputs[l])?;
            grads.layers[l].bias = g.row_sums();
            g = layer.weight.matmul_tn(&g)?;
        }
        Ok((grads, g))
    }
}

impl ParamSet for MlpParams {
    fn blocks(&self) -> Vec<ParamBlock<'_>> {
        let mut out = Vec::with_capacity(2 * self.layers.len());
        for (i, l) in self.layers.iter().enumerate() {
            out.push(ParamBlock::new(format!("layer{i}.weight"), l.weight.as_slice()));
            out.push(ParamBlock::new(format!("layer{i}.bias"), &l.bias));
        }
        out
    }

    fn blocks_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = Vec::with_capacity(2 * self.layers.len());
        for l in &mut self.layers {
            out.push(l.weight.as_mut_slice());
            out.push(l.bias.as_mut_slice());
        }
        out
    }
}
