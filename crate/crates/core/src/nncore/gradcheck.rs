//! Finite-difference verification of analytic gradients.
//!
//! The layer's output is scalarized through a fixed random projection
//! u: L = sum(u * forward(x)). The analytic gradient of L from
//! `backward` is compared coordinate by coordinate against central
//! finite differences of the forward pass. Dropout stays checkable
//! because every forward evaluation clones the same RNG, so the mask
//! is identical across perturbations.

use rand_chacha::ChaCha8Rng;

use super::layer::Layer;
use super::tensor::Tensor;
use crate::rng;

const FD_EPS: f64 = 1e-5;

fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / f64::max(1e-8, analytic.abs() + numeric.abs())
}

fn scalarize(out: &Tensor, u: &Tensor) -> f64 {
    out.data.iter().zip(&u.data).map(|(a, b)| a * b).sum()
}

fn loss_of(layer: &Layer, input: &Tensor, u: &Tensor, drop_rng: &ChaCha8Rng) -> f64 {
    let mut r = drop_rng.clone();
    let (out, _) = layer.forward_train(input, &mut r).expect("forward in gradcheck");
    scalarize(&out, u)
}

/// Max relative error between analytic and finite-difference
/// gradients, over every input and parameter coordinate.
pub fn finite_diff_check(layer: &Layer, input: &Tensor, seed: u64) -> f64 {
    finite_diff_check_biased(layer, input, seed, 0.0)
}

/// Same check with `bias` added to every analytic gradient value.
/// A nonzero bias simulates a buggy backward pass; the harness must
/// report a large error for it.
pub fn finite_diff_check_biased(layer: &Layer, input: &Tensor, seed: u64, bias: f64) -> f64 {
    let drop_rng = rng::substream(seed, rng::stream::DROPOUT);
    let mut proj_rng = rng::substream(seed, rng::stream::MODEL_INIT);

    let (out, cache) = layer
        .forward_train(input, &mut drop_rng.clone())
        .expect("forward in gradcheck");
    let u = Tensor::uniform(&out.shape, 1.0, &mut proj_rng);
    let (d_in, d_params) = layer.backward(&cache, &u).expect("backward in gradcheck");

    let mut max_err: f64 = 0.0;

    // Embedding input holds discrete indices; only parameters are
    // differentiable there.
    if !matches!(layer, Layer::Embedding { .. }) {
        let mut x = input.clone();
        for i in 0..x.data.len() {
            let orig = x.data[i];
            x.data[i] = orig + FD_EPS;
            let up = loss_of(layer, &x, &u, &drop_rng);
            x.data[i] = orig - FD_EPS;
            let down = loss_of(layer, &x, &u, &drop_rng);
            x.data[i] = orig;
            let numeric = (up - down) / (2.0 * FD_EPS);
            max_err = max_err.max(rel_err(d_in.data[i] + bias, numeric));
        }
    }

    let mut work = layer.clone();
    let n_params = work.params_mut().len();
    for pi in 0..n_params {
        let n_coords = work.params_mut()[pi].data.len();
        for ci in 0..n_coords {
            let orig = work.params_mut()[pi].data[ci];
            work.params_mut()[pi].data[ci] = orig + FD_EPS;
            let up = loss_of(&work, input, &u, &drop_rng);
            work.params_mut()[pi].data[ci] = orig - FD_EPS;
            let down = loss_of(&work, input, &u, &drop_rng);
            work.params_mut()[pi].data[ci] = orig;
            let numeric = (up - down) / (2.0 * FD_EPS);
            max_err = max_err.max(rel_err(d_params[pi].data[ci] + bias, numeric));
        }
    }
    max_err
}

/// Finite-difference check for a scalar loss function returning
/// (value, gradient), e.g. the fused cross-entropy.
pub fn finite_diff_check_fn<F>(f: F, x: &Tensor) -> f64
where
    F: Fn(&Tensor) -> (f64, Tensor),
{
    let (_, analytic) = f(x);
    let mut work = x.clone();
    let mut max_err: f64 = 0.0;
    for i in 0..work.data.len() {
        let orig = work.data[i];
        work.data[i] = orig + FD_EPS;
        let (up, _) = f(&work);
        work.data[i] = orig - FD_EPS;
        let (down, _) = f(&work);
        work.data[i] = orig;
        let numeric = (up - down) / (2.0 * FD_EPS);
        max_err = max_err.max(rel_err(analytic.data[i], numeric));
    }
    max_err
}
