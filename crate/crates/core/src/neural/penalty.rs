use ndarray::{Array1, Array2, ArrayView2, Axis, Zip};
use rand::Rng;

use super::{Activation, Mlp, MlpGrads};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// WGAN-GP penalty on random interpolates of `real` and `fake`.
///
/// Returns the mean over rows of `(‖∇ₓ critic(x̂)‖ − 1)²` and its gradient
/// with respect to the critic's parameters.
pub fn gradient_penalty<T: Scalar, R: Rng + ?Sized>(
    critic: &Mlp<T>,
    real: ArrayView2<'_, T>,
    fake: ArrayView2<'_, T>,
    rng: &mut R,
) -> Result<(T, MlpGrads<T>)> {
    if real.dim() != fake.dim() {
        return Err(Error::DimensionMismatch { expected: real.ncols(), found: fake.ncols() });
    }
    let mut x_hat = real.to_owned();
    for (mut row, f) in x_hat.rows_mut().into_iter().zip(fake.rows()) {
        let u = T::c(rng.random::<f64>());
        Zip::from(&mut row).and(&f).for_each(|r, &f| *r = u * *r + (T::one() - u) * f);
    }
    gradient_penalty_at(critic, x_hat.view())
}

/// Penalty and parameter gradient at fixed interpolates, by double
/// backpropagation through the input-gradient computation.
pub fn gradient_penalty_at<T: Scalar>(critic: &Mlp<T>, x_hat: ArrayView2<'_, T>) -> Result<(T, MlpGrads<T>)> {
    if critic.output_dim() != 1 {
        return Err(Error::invalid("gradient penalty needs a scalar critic"));
    }
    if critic.layers.iter().any(|l| matches!(l.activation, Activation::SoftmaxBlock(_))) {
        return Err(Error::invalid("gradient penalty supports relu, tanh and linear layers"));
    }
    let n_rows = x_hat.nrows();
    if n_rows == 0 {
        return Err(Error::Empty("interpolated batch"));
    }
    let cache = critic.forward(x_hat)?;
    let n = critic.layers.len();

    // First backward pass, keeping g_l = ∂c/∂h_l, s'_l and δ_l = g_l ⊙ s'_l.
    let mut g: Vec<Array2<T>> = vec![Array2::zeros((0, 0)); n + 1];
    let mut slope: Vec<Array2<T>> = Vec::with_capacity(n);
    let mut curvature: Vec<Array2<T>> = Vec::with_capacity(n);
    for (i, l) in critic.layers.iter().enumerate() {
        let (s1, s2) = derivatives(&l.activation, &cache.pre[i], &cache.outputs[i]);
        slope.push(s1);
        curvature.push(s2);
    }
    let mut delta: Vec<Array2<T>> = vec![Array2::zeros((0, 0)); n];
    g[n] = Array2::ones((n_rows, 1));
    for i in (0..n).rev() {
        delta[i] = &g[i + 1] * &slope[i];
        g[i] = delta[i].dot(&critic.layers[i].weight.t());
    }

    let norms: Array1<T> = g[0].map_axis(Axis(1), |r| r.dot(&r).sqrt());
    let nf = T::from_usize_lossy(n_rows);
    let penalty = norms.iter().map(|&r| (r - T::one()).powi(2)).sum::<T>() / nf;

    // Adjoint of the input gradient.
    let mut g_bar = g[0].clone();
    for (mut row, &r) in g_bar.rows_mut().into_iter().zip(norms.iter()) {
        let scale = if r > T::zero() { T::c(2.0) * (r - T::one()) / (r * nf) } else { T::zero() };
        row.mapv_inplace(|v| v * scale);
    }

    let mut grads = MlpGrads::zeros_like(critic);
    // Reverse through the backward pass, from the input layer upward.
    let mut a_bar: Vec<Array2<T>> = Vec::with_capacity(n);
    for i in 0..n {
        let w = &critic.layers[i].weight;
        grads.weights[i] += &g_bar.t().dot(&delta[i]);
        let delta_bar = g_bar.dot(w);
        a_bar.push(&delta_bar * &g[i + 1] * &curvature[i]);
        g_bar = &delta_bar * &slope[i];
    }
    // Reverse through the forward pass, from the output layer downward.
    let mut h_bar: Array2<T> = Array2::zeros((n_rows, 1));
    for i in (0..n).rev() {
        let a_total = &a_bar[i] + &(&h_bar * &slope[i]);
        grads.weights[i] += &cache.inputs[i].t().dot(&a_total);
        grads.biases[i] += &a_total.sum_axis(Axis(0));
        h_bar = a_total.dot(&critic.layers[i].weight.t());
    }
    Ok((penalty, grads))
}

/// First and second derivatives of an elementwise activation.
fn derivatives<T: Scalar>(act: &Activation, a: &Array2<T>, h: &Array2<T>) -> (Array2<T>, Array2<T>) {
    match act {
        Activation::Relu => (a.mapv(|v| if v > T::zero() { T::one() } else { T::zero() }), Array2::zeros(a.raw_dim())),
        Activation::Tanh => {
            let s1 = h.mapv(|t| T::one() - t * t);
            let s2 = Zip::from(h).and(&s1).map_collect(|&t, &d| T::c(-2.0) * t * d);
            (s1, s2)
        }
        Activation::Linear | Activation::SoftmaxBlock(_) => (Array2::ones(a.raw_dim()), Array2::zeros(a.raw_dim())),
    }
}
