//! Sparse autoencoder: `z = ReLU(W_e f + b_e)`, `f̂ = W_d z + b_d`, trained on
//! `‖f − f̂‖² + λ1 ‖z‖₁` averaged over the batch.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::SplitMix64;

pub const DEFAULT_LEARNING_RATE: f64 = 5e-5;
pub const DEFAULT_LAMBDA1: f64 = 2e-3;
pub const DEFAULT_BATCH_SIZE: usize = 32;
pub const DEFAULT_EPOCHS: usize = 200;

/// Whether a latent width below the input width is acceptable.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WidthPolicy {
    /// Require `k >= m`.
    #[default]
    Overcomplete,
    /// Accept any `k >= 1`, e.g. when `k` is pinned to a dictionary smaller
    /// than the embedding dimension.
    AllowUndercomplete,
}

impl WidthPolicy {
    pub fn check(self, m: usize, k: usize) -> Result<()> {
        if m == 0 || k == 0 {
            return Err(Error::Config(format!("dimensions must be positive (m={m}, k={k})")));
        }
        if self == WidthPolicy::Overcomplete && k < m {
            return Err(Error::Config(format!("k must be ≥ embedding dim (k={k}, dim={m})")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SaeHyperparams {
    pub lambda1: f64,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for SaeHyperparams {
    fn default() -> Self {
        Self {
            lambda1: DEFAULT_LAMBDA1,
            learning_rate: DEFAULT_LEARNING_RATE,
            batch_size: DEFAULT_BATCH_SIZE,
            epochs: DEFAULT_EPOCHS,
            seed: 0,
        }
    }
}

impl SaeHyperparams {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda1.is_finite() && self.lambda1 >= 0.0) {
            return Err(Error::Config(format!(
                "lambda1 must be finite and ≥ 0, got {}",
                self.lambda1
            )));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::Config(format!(
                "learning rate must be > 0, got {}",
                self.learning_rate
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be ≥ 1".into()));
        }
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be ≥ 1".into()));
        }
        Ok(())
    }
}

/// Untied encoder/decoder parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct SaeModel {
    /// `k × m`
    pub encoder_weight: Array2<f64>,
    /// `k`
    pub encoder_bias: Array1<f64>,
    /// `m × k`; column `j` is the dictionary direction of latent unit `j`.
    pub decoder_weight: Array2<f64>,
    /// `m`
    pub decoder_bias: Array1<f64>,
}

/// Gradients of the batch-mean objective, shaped like [`SaeModel`].
#[derive(Debug, Clone, PartialEq)]
pub struct SaeGradients {
    pub encoder_weight: Array2<f64>,
    pub encoder_bias: Array1<f64>,
    pub decoder_weight: Array2<f64>,
    pub decoder_bias: Array1<f64>,
}

/// Batch-mean loss split into its two terms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossTerms {
    pub reconstruction: f64,
    pub l1: f64,
    pub lambda1: f64,
    /// Fraction of `(sample, unit)` activations that are strictly positive.
    pub active_fraction: f64,
}

impl LossTerms {
    pub fn total(&self) -> f64 {
        self.reconstruction + self.lambda1 * self.l1
    }
}

impl SaeModel {
    /// Initializes with `W_e ~ U[−1/√m, 1/√m]`, unit-norm Gaussian decoder
    /// columns and zero biases. Requires `k >= m`.
    pub fn init(m: usize, k: usize, seed: u64) -> Result<Self> {
        Self::init_with_policy(m, k, seed, WidthPolicy::Overcomplete)
    }

    pub fn init_with_policy(m: usize, k: usize, seed: u64, policy: WidthPolicy) -> Result<Self> {
        policy.check(m, k)?;
        let mut rng = SplitMix64::new(seed);
        let bound = 1.0 / (m as f64).sqrt();
        let encoder_weight = Array2::from_shape_simple_fn((k, m), || rng.uniform(-bound, bound));
        let mut decoder_weight = Array2::from_shape_simple_fn((m, k), || rng.gaussian());
        for mut col in decoder_weight.columns_mut() {
            let norm = col.dot(&col).sqrt();
            col /= norm;
        }
        Ok(Self {
            encoder_weight,
            encoder_bias: Array1::zeros(k),
            decoder_weight,
            decoder_bias: Array1::zeros(m),
        })
    }

    /// Builds a model from explicit parameters, checking shapes and finiteness.
    pub fn from_parts(
        encoder_weight: Array2<f64>,
        encoder_bias: Array1<f64>,
        decoder_weight: Array2<f64>,
        decoder_bias: Array1<f64>,
    ) -> Result<Self> {
        let (k, m) = encoder_weight.dim();
        let check = |what, expected, actual| {
            if expected == actual {
                Ok(())
            } else {
                Err(Error::Dimension { what, expected, actual })
            }
        };
        check("encoder bias length", k, encoder_bias.len())?;
        check("decoder weight rows", m, decoder_weight.nrows())?;
        check("decoder weight columns", k, decoder_weight.ncols())?;
        check("decoder bias length", m, decoder_bias.len())?;
        let model = Self {
            encoder_weight,
            encoder_bias,
            decoder_weight,
            decoder_bias,
        };
        if !model.tensors().iter().all(|t| t.iter().all(|v| v.is_finite())) {
            return Err(Error::invalid("model parameters contain non-finite values"));
        }
        Ok(model)
    }

    /// Input (embedding) dimension.
    pub fn m(&self) -> usize {
        self.encoder_weight.ncols()
    }

    /// Latent dimension.
    pub fn k(&self) -> usize {
        self.encoder_weight.nrows()
    }

    /// Parameters as flat slices in the order `W_e, b_e, W_d, b_d`.
    pub fn tensors(&self) -> [&[f64]; 4] {
        [
            self.encoder_weight.as_slice().expect("standard layout"),
            self.encoder_bias.as_slice().expect("standard layout"),
            self.decoder_weight.as_slice().expect("standard layout"),
            self.decoder_bias.as_slice().expect("standard layout"),
        ]
    }

    pub fn tensors_mut(&mut self) -> [&mut [f64]; 4] {
        [
            self.encoder_weight.as_slice_mut().expect("standard layout"),
            self.encoder_bias.as_slice_mut().expect("standard layout"),
            self.decoder_weight.as_slice_mut().expect("standard layout"),
            self.decoder_bias.as_slice_mut().expect("standard layout"),
        ]
    }

    pub fn encode(&self, f: ArrayView1<'_, f64>) -> Result<Array1<f64>> {
        expect_len("embedding length", self.m(), f.len())?;
        ensure_finite(f.iter())?;
        let mut z = self.encoder_weight.dot(&f) + &self.encoder_bias;
        z.mapv_inplace(relu);
        Ok(z)
    }

    pub fn decode(&self, z: ArrayView1<'_, f64>) -> Result<Array1<f64>> {
        expect_len("latent length", self.k(), z.len())?;
        ensure_finite(z.iter())?;
        Ok(self.decoder_weight.dot(&z) + &self.decoder_bias)
    }

    /// Encodes every row of a `B × m` batch into a `B × k` activation matrix.
    pub fn encode_batch(&self, batch: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        expect_len("batch columns", self.m(), batch.ncols())?;
        ensure_finite(batch.iter())?;
        Ok(self.pre_activations(batch).mapv(relu))
    }

    fn pre_activations(&self, batch: ArrayView2<'_, f64>) -> Array2<f64> {
        batch.dot(&self.encoder_weight.t()) + &self.encoder_bias
    }

    pub fn loss(&self, batch: ArrayView2<'_, f64>, lambda1: f64) -> Result<f64> {
        Ok(self.loss_terms(batch, lambda1)?.total())
    }

    pub fn loss_terms(&self, batch: ArrayView2<'_, f64>, lambda1: f64) -> Result<LossTerms> {
        let fwd = self.forward(batch)?;
        Ok(fwd.terms(lambda1))
    }

    /// Loss and exact gradients of the batch-mean objective. The ReLU and
    /// `|·|` subgradients at exactly zero are taken as zero.
    pub fn loss_gradients(&self, batch: ArrayView2<'_, f64>, lambda1: f64) -> Result<(f64, SaeGradients)> {
        let (terms, grads) = self.loss_terms_gradients(batch, lambda1)?;
        Ok((terms.total(), grads))
    }

    pub fn loss_terms_gradients(&self, batch: ArrayView2<'_, f64>, lambda1: f64) -> Result<(LossTerms, SaeGradients)> {
        let fwd = self.forward(batch)?;
        let scale = 1.0 / batch.nrows() as f64;

        // d/d f̂ of the mean squared residual.
        let grad_out = &fwd.residual * (2.0 * scale);
        let decoder_weight = grad_out.t().dot(&fwd.z);
        let decoder_bias = grad_out.sum_axis(Axis(0));

        let mut grad_pre = grad_out.dot(&self.decoder_weight);
        let l1_step = lambda1 * scale;
        ndarray::Zip::from(&mut grad_pre).and(&fwd.z).for_each(|g, &z| {
            if z > 0.0 {
                *g += l1_step;
            } else {
                *g = 0.0;
            }
        });
        let encoder_weight = grad_pre.t().dot(&batch);
        let encoder_bias = grad_pre.sum_axis(Axis(0));

        Ok((
            fwd.terms(lambda1),
            SaeGradients {
                encoder_weight,
                encoder_bias,
                decoder_weight,
                decoder_bias,
            },
        ))
    }

    fn forward(&self, batch: ArrayView2<'_, f64>) -> Result<Forward> {
        if batch.nrows() == 0 {
            return Err(Error::invalid("batch is empty"));
        }
        expect_len("batch columns", self.m(), batch.ncols())?;
        ensure_finite(batch.iter())?;
        let z = self.pre_activations(batch).mapv(relu);
        let residual = z.dot(&self.decoder_weight.t()) + &self.decoder_bias - batch;
        Ok(Forward {
            batch_len: batch.nrows(),
            z,
            residual,
        })
    }
}

struct Forward {
    batch_len: usize,
    z: Array2<f64>,
    residual: Array2<f64>,
}

impl Forward {
    fn terms(&self, lambda1: f64) -> LossTerms {
        let n = self.batch_len as f64;
        let active = self.z.iter().filter(|&&v| v > 0.0).count();
        LossTerms {
            reconstruction: self.residual.iter().map(|r| r * r).sum::<f64>() / n,
            l1: self.z.sum() / n,
            lambda1,
            active_fraction: active as f64 / self.z.len() as f64,
        }
    }
}

impl SaeGradients {
    pub fn zeros_like(model: &SaeModel) -> Self {
        Self {
            encoder_weight: Array2::zeros(model.encoder_weight.raw_dim()),
            encoder_bias: Array1::zeros(model.k()),
            decoder_weight: Array2::zeros(model.decoder_weight.raw_dim()),
            decoder_bias: Array1::zeros(model.m()),
        }
    }

    pub fn tensors(&self) -> [&[f64]; 4] {
        [
            self.encoder_weight.as_slice().expect("standard layout"),
            self.encoder_bias.as_slice().expect("standard layout"),
            self.decoder_weight.as_slice().expect("standard layout"),
            self.decoder_bias.as_slice().expect("standard layout"),
        ]
    }

    pub fn matches_shape(&self, model: &SaeModel) -> bool {
        self.encoder_weight.dim() == model.encoder_weight.dim()
            && self.encoder_bias.len() == model.k()
            && self.decoder_weight.dim() == model.decoder_weight.dim()
            && self.decoder_bias.len() == model.m()
    }
}

fn relu(v: f64) -> f64 {
    if v > 0.0 {
        v
    } else {
        0.0
    }
}

fn expect_len(what: &'static str, expected: usize, actual: usize) -> Result<()> {
    if expected == actual {
        Ok(())
    } else {
        Err(Error::Dimension { what, expected, actual })
    }
}

fn ensure_finite<'a>(mut values: impl Iterator<Item = &'a f64>) -> Result<()> {
    if values.all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::invalid("input contains non-finite values"))
    }
}
