//! Dense multilayer perceptrons with hand-written backpropagation.

mod adam;
mod penalty;

pub use adam::{AdamConfig, AdamState};
pub use penalty::{gradient_penalty, gradient_penalty_at};

use ndarray::{Array1, Array2, ArrayView2, Axis, Zip};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "type", content = "segments")]
pub enum Activation {
    Relu,
    Tanh,
    Linear,
    /// Softmax applied independently to each `(offset, width)` segment.
    /// Columns outside every segment pass through unchanged.
    SoftmaxBlock(Vec<(usize, usize)>),
}

impl Activation {
    fn apply<T: Scalar>(&self, a: &Array2<T>) -> Array2<T> {
        match self {
            Activation::Relu => a.mapv(|v| v.max(T::zero())),
            Activation::Tanh => a.mapv(T::tanh),
            Activation::Linear => a.clone(),
            Activation::SoftmaxBlock(segments) => {
                let mut h = a.clone();
                for mut row in h.rows_mut() {
                    for &(off, width) in segments {
                        softmax_in_place(row.slice_mut(ndarray::s![off..off + width]).as_slice_mut().unwrap());
                    }
                }
                h
            }
        }
    }

    /// Gradient with respect to the pre-activation given the gradient with
    /// respect to the output `h`.
    fn backprop<T: Scalar>(&self, a: &Array2<T>, h: &Array2<T>, grad_h: &Array2<T>) -> Array2<T> {
        match self {
            Activation::Relu => {
                Zip::from(grad_h).and(a).map_collect(|&g, &v| if v > T::zero() { g } else { T::zero() })
            }
            Activation::Tanh => Zip::from(grad_h).and(h).map_collect(|&g, &t| g * (T::one() - t * t)),
            Activation::Linear => grad_h.clone(),
            Activation::SoftmaxBlock(segments) => {
                let mut out = grad_h.clone();
                for (mut o, (hr, gr)) in out.rows_mut().into_iter().zip(h.rows().into_iter().zip(grad_h.rows())) {
                    for &(off, width) in segments {
                        let dot: T = (off..off + width).map(|j| gr[j] * hr[j]).sum();
                        for j in off..off + width {
                            o[j] = hr[j] * (gr[j] - dot);
                        }
                    }
                }
                out
            }
        }
    }

    fn check_width(&self, width: usize) -> Result<()> {
        if let Activation::SoftmaxBlock(segments) = self {
            for &(off, w) in segments {
                if w == 0 || off + w > width {
                    return Err(Error::invalid(format!("softmax segment ({off}, {w}) outside layer width {width}")));
                }
            }
        }
        Ok(())
    }
}

/// Numerically stable softmax over a slice.
pub fn softmax_in_place<T: Scalar>(xs: &mut [T]) {
    let max = xs.iter().copied().fold(T::neg_infinity(), T::max);
    let mut total = T::zero();
    for v in xs.iter_mut() {
        *v = (*v - max).exp();
        total += *v;
    }
    for v in xs.iter_mut() {
        *v /= total;
    }
}

/// Affine map followed by an activation. `weight` is `(inputs, outputs)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct Layer<T: Scalar> {
    pub weight: Array2<T>,
    pub bias: Array1<T>,
    pub activation: Activation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct Mlp<T: Scalar> {
    pub layers: Vec<Layer<T>>,
}

/// Per-layer inputs, pre-activations and outputs of one forward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache<T: Scalar> {
    pub inputs: Vec<Array2<T>>,
    pub pre: Vec<Array2<T>>,
    pub outputs: Vec<Array2<T>>,
}

impl<T: Scalar> ForwardCache<T> {
    pub fn output(&self) -> &Array2<T> {
        self.outputs.last().expect("cache has at least one layer")
    }
}

/// Gradients shaped like the parameters of an [`Mlp`].
#[derive(Debug, Clone, PartialEq)]
pub struct MlpGrads<T: Scalar> {
    pub weights: Vec<Array2<T>>,
    pub biases: Vec<Array1<T>>,
}

impl<T: Scalar> MlpGrads<T> {
    pub fn zeros_like(mlp: &Mlp<T>) -> Self {
        MlpGrads {
            weights: mlp.layers.iter().map(|l| Array2::zeros(l.weight.raw_dim())).collect(),
            biases: mlp.layers.iter().map(|l| Array1::zeros(l.bias.raw_dim())).collect(),
        }
    }

    /// `self += scale * other`.
    pub fn add_scaled(&mut self, other: &MlpGrads<T>, scale: T) {
        for (a, b) in self.weights.iter_mut().zip(&other.weights) {
            a.scaled_add(scale, b);
        }
        for (a, b) in self.biases.iter_mut().zip(&other.biases) {
            a.scaled_add(scale, b);
        }
    }

    pub fn flatten(&self) -> Vec<T> {
        let mut out = Vec::new();
        for (w, b) in self.weights.iter().zip(&self.biases) {
            out.extend(w.iter().copied());
            out.extend(b.iter().copied());
        }
        out
    }

    pub fn is_finite(&self) -> bool {
        self.weights.iter().all(|w| w.iter().all(|v| v.is_finite()))
            && self.biases.iter().all(|b| b.iter().all(|v| v.is_finite()))
    }
}

impl<T: Scalar> Mlp<T> {
    /// Glorot-uniform weights and zero biases. `dims` lists the input width
    /// followed by each layer's output width.
    pub fn init(dims: &[usize], activations: Vec<Activation>, seed: u64) -> Result<Self> {
        Self::init_with_rng(dims, activations, &mut ChaCha8Rng::seed_from_u64(seed))
    }

    pub fn init_with_rng<R: Rng + ?Sized>(dims: &[usize], activations: Vec<Activation>, rng: &mut R) -> Result<Self> {
        if dims.len() < 2 {
            return Err(Error::invalid("an MLP needs at least one layer"));
        }
        if activations.len() != dims.len() - 1 {
            return Err(Error::DimensionMismatch { expected: dims.len() - 1, found: activations.len() });
        }
        if dims.contains(&0) {
            return Err(Error::invalid("layer dimensions must be positive"));
        }
        let mut layers = Vec::with_capacity(activations.len());
        for (w, activation) in dims.windows(2).zip(activations) {
            activation.check_width(w[1])?;
            let bound = (6.0 / (w[0] + w[1]) as f64).sqrt();
            let weight = Array2::from_shape_fn((w[0], w[1]), |_| T::c(rng.random_range(-bound..=bound)));
            layers.push(Layer { weight, bias: Array1::zeros(w[1]), activation });
        }
        Ok(Mlp { layers })
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].weight.nrows()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map_or(0, |l| l.weight.ncols())
    }

    pub fn n_params(&self) -> usize {
        self.layers.iter().map(|l| l.weight.len() + l.bias.len()).sum()
    }

    /// Parameters in layer order, each layer's weights (row-major) then bias.
    pub fn flatten_params(&self) -> Vec<T> {
        let mut out = Vec::with_capacity(self.n_params());
        for l in &self.layers {
            out.extend(l.weight.iter().copied());
            out.extend(l.bias.iter().copied());
        }
        out
    }

    pub fn set_flat_params(&mut self, params: &[T]) -> Result<()> {
        if params.len() != self.n_params() {
            return Err(Error::DimensionMismatch { expected: self.n_params(), found: params.len() });
        }
        let mut it = params.iter().copied();
        for l in &mut self.layers {
            l.weight.iter_mut().chain(l.bias.iter_mut()).for_each(|v| *v = it.next().unwrap());
        }
        Ok(())
    }

    pub fn all_finite(&self) -> bool {
        self.layers.iter().all(|l| l.weight.iter().chain(l.bias.iter()).all(|v| v.is_finite()))
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers.is_empty() {
            return Err(Error::invalid("an MLP needs at least one layer"));
        }
        for (i, l) in self.layers.iter().enumerate() {
            if l.bias.len() != l.weight.ncols() {
                return Err(Error::DimensionMismatch { expected: l.weight.ncols(), found: l.bias.len() });
            }
            if i > 0 && self.layers[i - 1].weight.ncols() != l.weight.nrows() {
                return Err(Error::DimensionMismatch { expected: self.layers[i - 1].weight.ncols(), found: l.weight.nrows() });
            }
            l.activation.check_width(l.weight.ncols())?;
        }
        if !self.all_finite() {
            return Err(Error::invalid("MLP has non-finite parameters"));
        }
        Ok(())
    }

    pub fn forward(&self, batch: ArrayView2<'_, T>) -> Result<ForwardCache<T>> {
        if batch.ncols() != self.input_dim() {
            return Err(Error::DimensionMismatch { expected: self.input_dim(), found: batch.ncols() });
        }
        let n = self.layers.len();
        let mut cache = ForwardCache { inputs: Vec::with_capacity(n), pre: Vec::with_capacity(n), outputs: Vec::with_capacity(n) };
        let mut h = batch.to_owned();
        for l in &self.layers {
            let a = h.dot(&l.weight) + &l.bias;
            let out = l.activation.apply(&a);
            cache.inputs.push(h);
            cache.pre.push(a);
            h = out.clone();
            cache.outputs.push(out);
        }
        Ok(cache)
    }

    pub fn predict(&self, batch: ArrayView2<'_, T>) -> Result<Array2<T>> {
        let mut cache = self.forward(batch)?;
        Ok(cache.outputs.pop().unwrap())
    }

    /// Reverse-mode gradients of a scalar loss given `∂loss/∂output`.
    /// Returns parameter gradients and `∂loss/∂input`.
    pub fn backward(&self, cache: &ForwardCache<T>, output_grad: ArrayView2<'_, T>) -> Result<(MlpGrads<T>, Array2<T>)> {
        let out = cache.output();
        if output_grad.dim() != out.dim() || cache.pre.len() != self.layers.len() {
            return Err(Error::DimensionMismatch { expected: out.ncols(), found: output_grad.ncols() });
        }
        let mut grads = MlpGrads::zeros_like(self);
        let mut g = output_grad.to_owned();
        for (i, l) in self.layers.iter().enumerate().rev() {
            let delta = l.activation.backprop(&cache.pre[i], &cache.outputs[i], &g);
            grads.weights[i] = cache.inputs[i].t().dot(&delta);
            grads.biases[i] = delta.sum_axis(Axis(0));
            g = delta.dot(&l.weight.t());
        }
        Ok((grads, g))
    }
}
