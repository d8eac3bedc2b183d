//! Adam minimization of the SAE objective.
//!
//! Each epoch visits the rows in an order produced by Fisher–Yates over a
//! [`SplitMix64`] stream seeded with `seed ^ SHUFFLE_STREAM`; model
//! initialization uses `seed` itself. Mini-batches take consecutive rows of
//! that order and the last one may be short.

use ndarray::{Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::SplitMix64;
use crate::sae::{SaeGradients, SaeHyperparams, SaeModel, WidthPolicy};
use crate::store::EmbeddingMatrix;

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPSILON: f64 = 1e-8;

const SHUFFLE_STREAM: u64 = 0x5348_5546_464C_4531;

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub step: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    first: [Vec<f64>; 4],
    second: [Vec<f64>; 4],
}

impl AdamState {
    pub fn new(model: &SaeModel) -> Self {
        Self::with_constants(model, ADAM_BETA1, ADAM_BETA2, ADAM_EPSILON)
    }

    pub fn with_constants(model: &SaeModel, beta1: f64, beta2: f64, epsilon: f64) -> Self {
        let zeros = || model.tensors().map(|t| vec![0.0; t.len()]);
        Self {
            step: 0,
            beta1,
            beta2,
            epsilon,
            first: zeros(),
            second: zeros(),
        }
    }

    pub fn first_moments(&self) -> &[Vec<f64>; 4] {
        &self.first
    }

    pub fn second_moments(&self) -> &[Vec<f64>; 4] {
        &self.second
    }
}

/// One bias-corrected Adam update applied in place.
pub fn adam_step(model: &mut SaeModel, grads: &SaeGradients, state: &mut AdamState, lr: f64) -> Result<()> {
    if !(lr.is_finite() && lr > 0.0) {
        return Err(Error::Config(format!("learning rate must be > 0, got {lr}")));
    }
    let shapes_ok =
        grads.matches_shape(model) && state.first.iter().zip(model.tensors()).all(|(m, p)| m.len() == p.len());
    if !shapes_ok {
        return Err(Error::invalid(
            "gradient / optimizer state shape does not match the model",
        ));
    }
    let grad_tensors = grads.tensors();
    if !grad_tensors.iter().all(|g| g.iter().all(|v| v.is_finite())) {
        return Err(Error::Numeric("non-finite gradient".into()));
    }

    state.step += 1;
    let t = state.step as i32;
    let (b1, b2, eps) = (state.beta1, state.beta2, state.epsilon);
    let correction1 = 1.0 - b1.powi(t);
    let correction2 = 1.0 - b2.powi(t);

    for (((param, grad), m), v) in model
        .tensors_mut()
        .into_iter()
        .zip(grad_tensors)
        .zip(state.first.iter_mut())
        .zip(state.second.iter_mut())
    {
        for i in 0..param.len() {
            let g = grad[i];
            m[i] = b1 * m[i] + (1.0 - b1) * g;
            v[i] = b2 * v[i] + (1.0 - b2) * g * g;
            let m_hat = m[i] / correction1;
            let v_hat = v[i] / correction2;
            param[i] -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Per-sample mean of the full objective over the epoch's batches.
    pub loss: f64,
    pub reconstruction: f64,
    /// `λ1 · mean ‖z‖₁`
    pub sparsity: f64,
    pub active_fraction: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub epochs: Vec<EpochRecord>,
}

impl TrainLog {
    pub fn last(&self) -> Option<&EpochRecord> {
        self.epochs.last()
    }
}

/// Trains a `k`-unit SAE on the rows of `data`. Deterministic in
/// `(data, hp, k)`.
pub fn train(
    data: &EmbeddingMatrix,
    hp: &SaeHyperparams,
    k: usize,
    width: WidthPolicy,
) -> Result<(SaeModel, TrainLog)> {
    hp.validate()?;
    if data.is_empty() {
        return Err(Error::invalid("training data has no rows"));
    }
    let mut model = SaeModel::init_with_policy(data.dim(), k, hp.seed, width)?;
    let mut state = AdamState::new(&model);
    let values = data.to_array();
    let mut order: Vec<usize> = (0..data.rows()).collect();
    let mut shuffler = SplitMix64::new(hp.seed ^ SHUFFLE_STREAM);
    let mut log = TrainLog::default();

    for epoch in 0..hp.epochs {
        shuffler.shuffle(&mut order);
        let mut sums = [0.0f64; 4];
        for chunk in order.chunks(hp.batch_size) {
            let batch: Array2<f64> = values.select(Axis(0), chunk);
            let (terms, grads) = model.loss_terms_gradients(batch.view(), hp.lambda1)?;
            let total = terms.total();
            if !total.is_finite() {
                return Err(Error::Numeric(format!(
                    "non-finite loss in epoch {epoch} (reconstruction {}, l1 {})",
                    terms.reconstruction, terms.l1
                )));
            }
            let w = chunk.len() as f64;
            sums[0] += w * total;
            sums[1] += w * terms.reconstruction;
            sums[2] += w * hp.lambda1 * terms.l1;
            sums[3] += w * terms.active_fraction;
            adam_step(&mut model, &grads, &mut state, hp.learning_rate)?;
        }
        let n = data.rows() as f64;
        log.epochs.push(EpochRecord {
            epoch,
            loss: sums[0] / n,
            reconstruction: sums[1] / n,
            sparsity: sums[2] / n,
            active_fraction: sums[3] / n,
        });
    }
    Ok((model, log))
}
