//! Multi-codebook distillation loss: one 256-way linear+softmax head per
//! codebook, trained against the teacher's codebook indexes, and the weighted
//! fusion with the transducer loss.

use rand::Rng;
use thiserror::Error;

use crate::mvq::{CodebookIndexes, CODEBOOK_SIZE};

#[derive(Debug, Error, PartialEq)]
pub enum KdError {
    #[error("expected dimension {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("{embeddings} embedding frames but {targets} target frames")]
    FrameMismatch { embeddings: usize, targets: usize },
    #[error("{heads} heads but targets carry {targets} codebooks")]
    CodebookMismatch { heads: usize, targets: usize },
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("fusion weight must be finite and non-negative, got {0}")]
    InvalidAlpha(f64),
}

/// `N` heads over a `dim`-dimensional student embedding. Head `n` has a
/// row-major `256 x dim` weight and a bias of 256.
#[derive(Debug, Clone, PartialEq)]
pub struct LossNetParams {
    n_heads: usize,
    dim: usize,
    weights: Vec<f64>,
    biases: Vec<f64>,
}

impl LossNetParams {
    pub fn new(n_heads: usize, dim: usize, weights: Vec<f64>, biases: Vec<f64>) -> Result<Self, KdError> {
        if weights.len() != n_heads * CODEBOOK_SIZE * dim {
            return Err(KdError::DimensionMismatch {
                expected: n_heads * CODEBOOK_SIZE * dim,
                got: weights.len(),
            });
        }
        if biases.len() != n_heads * CODEBOOK_SIZE {
            return Err(KdError::DimensionMismatch {
                expected: n_heads * CODEBOOK_SIZE,
                got: biases.len(),
            });
        }
        if weights.iter().chain(&biases).any(|x| !x.is_finite()) {
            return Err(KdError::NonFinite("LossNet parameters"));
        }
        Ok(Self {
            n_heads,
            dim,
            weights,
            biases,
        })
    }

    pub fn zeros(n_heads: usize, dim: usize) -> Self {
        Self {
            n_heads,
            dim,
            weights: vec![0.0; n_heads * CODEBOOK_SIZE * dim],
            biases: vec![0.0; n_heads * CODEBOOK_SIZE],
        }
    }

    /// Weights uniform in `[-scale, scale]`, zero biases.
    pub fn random<R: Rng + ?Sized>(n_heads: usize, dim: usize, scale: f64, rng: &mut R) -> Self {
        let mut p = Self::zeros(n_heads, dim);
        for w in &mut p.weights {
            *w = rng.random_range(-scale..=scale);
        }
        p
    }

    pub fn n_heads(&self) -> usize {
        self.n_heads
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn biases(&self) -> &[f64] {
        &self.biases
    }

    pub fn weights_mut(&mut self) -> &mut [f64] {
        &mut self.weights
    }

    pub fn biases_mut(&mut self) -> &mut [f64] {
        &mut self.biases
    }

    /// Weights and biases mutably at once.
    pub fn parts_mut(&mut self) -> (&mut [f64], &mut [f64]) {
        (&mut self.weights, &mut self.biases)
    }

    pub fn head_weight(&self, n: usize) -> &[f64] {
        let size = CODEBOOK_SIZE * self.dim;
        &self.weights[n * size..(n + 1) * size]
    }

    pub fn head_bias(&self, n: usize) -> &[f64] {
        &self.biases[n * CODEBOOK_SIZE..(n + 1) * CODEBOOK_SIZE]
    }

    fn logits_into(&self, n: usize, s: &[f64], out: &mut [f64]) {
        let w = self.head_weight(n);
        for ((o, row), b) in out.iter_mut().zip(w.chunks_exact(self.dim)).zip(self.head_bias(n)) {
            *o = b + row.iter().zip(s).map(|(a, x)| a * x).sum::<f64>();
        }
    }
}

/// Max-subtracted softmax; returns `log(sum(exp(z - max)))` alongside.
fn softmax_into(z: &mut [f64]) -> (f64, f64) {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for x in z.iter_mut() {
        *x = (*x - max).exp();
        sum += *x;
    }
    for x in z.iter_mut() {
        *x /= sum;
    }
    (max, sum.ln())
}

/// `N` rows of 256 probabilities, `softmax(W_n s + b_n)`.
pub fn lossnet_forward(params: &LossNetParams, s: &[f64]) -> Result<Vec<Vec<f64>>, KdError> {
    if s.len() != params.dim {
        return Err(KdError::DimensionMismatch {
            expected: params.dim,
            got: s.len(),
        });
    }
    Ok((0..params.n_heads)
        .map(|n| {
            let mut row = vec![0.0; CODEBOOK_SIZE];
            params.logits_into(n, s, &mut row);
            softmax_into(&mut row);
            row
        })
        .collect())
}

/// Student embeddings (`T x dim`, row-major) with their target indexes.
///
/// Targets are bytes, so every index is in `0..256` by construction.
#[derive(Debug, Clone, PartialEq)]
pub struct KdBatch {
    dim: usize,
    embeddings: Vec<f64>,
    targets: CodebookIndexes,
}

impl KdBatch {
    pub fn new(dim: usize, embeddings: Vec<f64>, targets: CodebookIndexes) -> Result<Self, KdError> {
        if dim == 0 || embeddings.len() % dim != 0 {
            return Err(KdError::DimensionMismatch {
                expected: dim,
                got: embeddings.len(),
            });
        }
        if embeddings.len() / dim != targets.frames() {
            return Err(KdError::FrameMismatch {
                embeddings: embeddings.len() / dim,
                targets: targets.frames(),
            });
        }
        Ok(Self {
            dim,
            embeddings,
            targets,
        })
    }

    pub fn frames(&self) -> usize {
        self.targets.frames()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn embeddings(&self) -> &[f64] {
        &self.embeddings
    }

    pub fn targets(&self) -> &CodebookIndexes {
        &self.targets
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct KdConfig {
    /// Divide the loss (and gradients) by the number of frames.
    pub normalize_per_frame: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct KdGradients {
    /// Same layout as [`LossNetParams::weights`].
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
    /// `T x dim`, same layout as the batch embeddings.
    pub embeddings: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct KdOutput {
    pub loss: f64,
    pub grad: KdGradients,
}

fn check_batch(params: &LossNetParams, batch: &KdBatch) -> Result<(), KdError> {
    if batch.dim != params.dim {
        return Err(KdError::DimensionMismatch {
            expected: params.dim,
            got: batch.dim,
        });
    }
    if batch.targets.n_codebooks() != params.n_heads {
        return Err(KdError::CodebookMismatch {
            heads: params.n_heads,
            targets: batch.targets.n_codebooks(),
        });
    }
    if batch.embeddings.iter().any(|x| !x.is_finite()) {
        return Err(KdError::NonFinite("student embeddings"));
    }
    Ok(())
}

/// `sum_t sum_n -log softmax(W_n s_t + b_n)[i_{t,n}]`, optionally divided by `T`.
pub fn kd_loss(params: &LossNetParams, batch: &KdBatch, config: &KdConfig) -> Result<f64, KdError> {
    check_batch(params, batch)?;
    let mut z = vec![0.0; CODEBOOK_SIZE];
    let mut loss = 0.0;
    for (s, target) in batch.embeddings.chunks_exact(batch.dim).zip(batch.targets.as_bytes().chunks_exact(params.n_heads)) {
        for (n, &i) in target.iter().enumerate() {
            params.logits_into(n, s, &mut z);
            let zi = z[i as usize];
            let (max, log_sum) = softmax_into(&mut z);
            loss += max + log_sum - zi;
        }
    }
    Ok(scale(loss, batch.frames(), config))
}

fn scale(x: f64, frames: usize, config: &KdConfig) -> f64 {
    if config.normalize_per_frame && frames > 0 {
        x / frames as f64
    } else {
        x
    }
}

/// Loss and its gradients; per head the logit gradient is `p - onehot(i)`.
pub fn kd_loss_and_grad(params: &LossNetParams, batch: &KdBatch, config: &KdConfig) -> Result<KdOutput, KdError> {
    check_batch(params, batch)?;
    let dim = params.dim;
    let mut grad = KdGradients {
        weights: vec![0.0; params.weights.len()],
        biases: vec![0.0; params.biases.len()],
        embeddings: vec![0.0; batch.embeddings.len()],
    };
    let mut z = vec![0.0; CODEBOOK_SIZE];
    let mut loss = 0.0;
    let c = scale(1.0, batch.frames(), config);
    let targets = batch.targets.as_bytes().chunks_exact(params.n_heads);
    for (t, (s, target)) in batch.embeddings.chunks_exact(dim).zip(targets).enumerate() {
        let ds = &mut grad.embeddings[t * dim..(t + 1) * dim];
        for (n, &i) in target.iter().enumerate() {
            let i = i as usize;
            params.logits_into(n, s, &mut z);
            let zi = z[i];
            let (max, log_sum) = softmax_into(&mut z);
            loss += max + log_sum - zi;
            z[i] -= 1.0;
            let w = params.head_weight(n);
            let gw = &mut grad.weights[n * CODEBOOK_SIZE * dim..(n + 1) * CODEBOOK_SIZE * dim];
            let gb = &mut grad.biases[n * CODEBOOK_SIZE..(n + 1) * CODEBOOK_SIZE];
            for (v, &dz) in z.iter().enumerate() {
                let dz = dz * c;
                gb[v] += dz;
                let row = v * dim..(v + 1) * dim;
                for ((g, &x), (d, &wv)) in gw[row.clone()].iter_mut().zip(s).zip(ds.iter_mut().zip(&w[row])) {
                    *g += dz * x;
                    *d += dz * wv;
                }
            }
        }
    }
    Ok(KdOutput {
        loss: loss * c,
        grad,
    })
}

/// `rnnt + alpha * kd`.
pub fn fused_loss(rnnt_loss: f64, kd_loss: f64, alpha: f64) -> Result<f64, KdError> {
    if !alpha.is_finite() || alpha < 0.0 {
        return Err(KdError::InvalidAlpha(alpha));
    }
    Ok(rnnt_loss + alpha * kd_loss)
}

/// Distillation weight used when none is given.
pub const DEFAULT_ALPHA: f64 = 0.1;
