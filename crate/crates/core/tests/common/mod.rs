#![allow(dead_code)]

use conceptprobe_core::rng::SplitMix64;
use conceptprobe_core::SaeModel;
use ndarray::{Array1, Array2};

pub fn gaussian_matrix(rng: &mut SplitMix64, rows: usize, cols: usize) -> Array2<f64> {
    Array2::from_shape_simple_fn((rows, cols), || rng.gaussian())
}

pub fn gaussian_vector(rng: &mut SplitMix64, n: usize) -> Array1<f64> {
    Array1::from_shape_simple_fn(n, || rng.gaussian())
}

/// Model with every parameter drawn from N(0, 1), biases included.
pub fn random_model(rng: &mut SplitMix64, m: usize, k: usize) -> SaeModel {
    SaeModel::from_parts(
        gaussian_matrix(rng, k, m),
        gaussian_vector(rng, k),
        gaussian_matrix(rng, m, k),
        gaussian_vector(rng, m),
    )
    .unwrap()
}

/// `W_e f + b_e` for every row, as plain loops.
pub fn pre_activations(model: &SaeModel, batch: &Array2<f64>) -> Vec<f64> {
    let mut out = Vec::new();
    for b in 0..batch.nrows() {
        for j in 0..model.k() {
            let mut acc = model.encoder_bias[j];
            for i in 0..model.m() {
                acc += model.encoder_weight[[j, i]] * batch[[b, i]];
            }
            out.push(acc);
        }
    }
    out
}
