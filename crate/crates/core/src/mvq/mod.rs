//! Multi-codebook vector quantization.
//!
//! A [`CodebookSet`] holds `N` codebooks of 256 entries each. An embedding is
//! compressed to one byte per codebook by greedy residual encoding: each
//! stage picks the entry nearest to what the previous stages left over.
//! Codebooks are trained stage by stage with k-means on those residuals.

pub(crate) mod io;
mod kmeans;

pub use io::{
    read_ci, read_codebooks, read_embeddings, write_ci, write_codebooks, write_embeddings,
    CiDataset, EmbeddingSet, FormatError,
};
pub use kmeans::{lloyd, KMeansResult};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::collections::HashSet;
use thiserror::Error;

/// Entries per codebook; every index fits in a byte.
pub const CODEBOOK_SIZE: usize = 256;

/// Default number of codebooks.
pub const DEFAULT_CODEBOOKS: usize = 16;

#[derive(Debug, Error)]
pub enum MvqError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("code tuple has {got} entries, codebook set has {expected}")]
    CodeLength { expected: usize, got: usize },
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("need at least {CODEBOOK_SIZE} training points, got {0}")]
    TooFewPoints(usize),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Format(#[from] FormatError),
}

/// `N` codebooks of 256 entries of dimension `D`, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct CodebookSet {
    n_codebooks: usize,
    dim: usize,
    entries: Vec<f64>,
}

impl CodebookSet {
    pub fn new(n_codebooks: usize, dim: usize, entries: Vec<f64>) -> Result<Self, MvqError> {
        if n_codebooks == 0 || n_codebooks > u8::MAX as usize || dim == 0 {
            return Err(MvqError::InvalidConfig(format!(
                "need 1..=255 codebooks and a positive dimension, got N={n_codebooks}, D={dim}"
            )));
        }
        let expected = n_codebooks * CODEBOOK_SIZE * dim;
        if entries.len() != expected {
            return Err(MvqError::DimensionMismatch {
                expected,
                got: entries.len(),
            });
        }
        if entries.iter().any(|x| !x.is_finite()) {
            return Err(MvqError::NonFinite("codebook entries"));
        }
        Ok(Self {
            n_codebooks,
            dim,
            entries,
        })
    }

    pub fn zeros(n_codebooks: usize, dim: usize) -> Result<Self, MvqError> {
        Self::new(n_codebooks, dim, vec![0.0; n_codebooks * CODEBOOK_SIZE * dim])
    }

    pub fn n_codebooks(&self) -> usize {
        self.n_codebooks
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    pub fn codebook(&self, n: usize) -> &[f64] {
        let len = CODEBOOK_SIZE * self.dim;
        &self.entries[n * len..(n + 1) * len]
    }

    pub fn entry(&self, n: usize, v: usize) -> &[f64] {
        let start = (n * CODEBOOK_SIZE + v) * self.dim;
        &self.entries[start..start + self.dim]
    }

    /// Greedy residual encoding; ties go to the lowest index.
    pub fn encode(&self, embedding: &[f64]) -> Result<Vec<u8>, MvqError> {
        if embedding.len() != self.dim {
            return Err(MvqError::DimensionMismatch {
                expected: self.dim,
                got: embedding.len(),
            });
        }
        if embedding.iter().any(|x| !x.is_finite()) {
            return Err(MvqError::NonFinite("embedding"));
        }
        let mut residual = embedding.to_vec();
        let mut code = Vec::with_capacity(self.n_codebooks);
        for n in 0..self.n_codebooks {
            let (best, _) = nearest(self.codebook(n), self.dim, &residual);
            for (r, c) in residual.iter_mut().zip(self.entry(n, best)) {
                *r -= c;
            }
            code.push(best as u8);
        }
        Ok(code)
    }

    /// Sum of the selected entries.
    pub fn reconstruct(&self, code: &[u8]) -> Result<Vec<f64>, MvqError> {
        if code.len() != self.n_codebooks {
            return Err(MvqError::CodeLength {
                expected: self.n_codebooks,
                got: code.len(),
            });
        }
        let mut out = vec![0.0; self.dim];
        for (n, &v) in code.iter().enumerate() {
            for (o, e) in out.iter_mut().zip(self.entry(n, v as usize)) {
                *o += e;
            }
        }
        Ok(out)
    }

    /// Encodes every row of a row-major `frames x dim` matrix.
    pub fn encode_frames(&self, frames: &[f64]) -> Result<CodebookIndexes, MvqError> {
        if frames.len() % self.dim != 0 {
            return Err(MvqError::DimensionMismatch {
                expected: self.dim,
                got: frames.len() % self.dim,
            });
        }
        let mut indexes = Vec::with_capacity(frames.len() / self.dim * self.n_codebooks);
        for row in frames.chunks_exact(self.dim) {
            indexes.extend(self.encode(row)?);
        }
        CodebookIndexes::new(self.n_codebooks, indexes)
    }
}

pub(crate) fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Index and squared distance of the row of `table` nearest to `point`,
/// lowest index on ties.
pub(crate) fn nearest(table: &[f64], dim: usize, point: &[f64]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (i, row) in table.chunks_exact(dim).enumerate() {
        let d = squared_distance(row, point);
        if d < best.1 {
            best = (i, d);
        }
    }
    best
}

/// Per-frame code tuples for one utterance, row-major by frame.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CodebookIndexes {
    n_codebooks: usize,
    indexes: Vec<u8>,
}

impl CodebookIndexes {
    pub fn new(n_codebooks: usize, indexes: Vec<u8>) -> Result<Self, MvqError> {
        if n_codebooks == 0 {
            return Err(MvqError::InvalidConfig("zero codebooks".into()));
        }
        if indexes.len() % n_codebooks != 0 {
            return Err(MvqError::CodeLength {
                expected: n_codebooks,
                got: indexes.len() % n_codebooks,
            });
        }
        Ok(Self {
            n_codebooks,
            indexes,
        })
    }

    pub fn n_codebooks(&self) -> usize {
        self.n_codebooks
    }

    pub fn frames(&self) -> usize {
        self.indexes.len() / self.n_codebooks
    }

    pub fn frame(&self, t: usize) -> &[u8] {
        &self.indexes[t * self.n_codebooks..(t + 1) * self.n_codebooks]
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.indexes
    }
}

/// Storage compression of codebook indexes relative to raw embeddings.
pub fn compression_rate(dim: usize, bytes_per_source_scalar: usize, n_codebooks: usize) -> f64 {
    (dim * bytes_per_source_scalar) as f64 / n_codebooks as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TrainConfig {
    pub n_codebooks: usize,
    pub iters: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            n_codebooks: DEFAULT_CODEBOOKS,
            iters: 20,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StageReport {
    /// Mean squared quantization error after initialization and after each
    /// Lloyd iteration.
    pub mse_trace: Vec<f64>,
    pub distinct_points: usize,
    /// The stage saw fewer than 256 distinct residuals; its codebook is those
    /// residuals padded with zero vectors.
    pub padded: bool,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainReport {
    pub stages: Vec<StageReport>,
}

impl TrainReport {
    pub fn warnings(&self) -> Vec<String> {
        self.stages
            .iter()
            .enumerate()
            .filter(|(_, s)| s.padded)
            .map(|(n, s)| {
                format!(
                    "stage {}: only {} distinct residuals, codebook padded with zero vectors",
                    n + 1,
                    s.distinct_points
                )
            })
            .collect()
    }

    /// Quantization MSE left after each stage.
    pub fn stage_mse(&self) -> Vec<f64> {
        self.stages
            .iter()
            .map(|s| *s.mse_trace.last().unwrap())
            .collect()
    }
}

fn distinct_rows(points: &[f64], dim: usize) -> Vec<usize> {
    let mut seen = HashSet::new();
    let mut first = Vec::new();
    for (i, row) in points.chunks_exact(dim).enumerate() {
        // +0.0 folds -0.0 into 0.0
        let key: Vec<u64> = row.iter().map(|x| (x + 0.0).to_bits()).collect();
        if seen.insert(key) {
            first.push(i);
        }
    }
    first
}

/// Trains codebooks by sequential residual k-means.
///
/// `data` is row-major `points x dim`. Each stage runs Lloyd's algorithm with
/// k = 256 and k-means++ seeding on the residuals left by earlier stages.
pub fn train_codebooks(
    data: &[f64],
    dim: usize,
    config: TrainConfig,
) -> Result<(CodebookSet, TrainReport), MvqError> {
    if dim == 0 || data.len() % dim != 0 {
        return Err(MvqError::InvalidConfig(format!(
            "data length {} is not a multiple of dimension {dim}",
            data.len()
        )));
    }
    if config.n_codebooks == 0 || config.n_codebooks > u8::MAX as usize || config.iters == 0 {
        return Err(MvqError::InvalidConfig(format!(
            "need 1..=255 codebooks and at least one iteration, got {config:?}"
        )));
    }
    if data.iter().any(|x| !x.is_finite()) {
        return Err(MvqError::NonFinite("training data"));
    }
    let n_points = data.len() / dim;
    if n_points < CODEBOOK_SIZE {
        return Err(MvqError::TooFewPoints(n_points));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut residuals = data.to_vec();
    let mut entries = Vec::with_capacity(config.n_codebooks * CODEBOOK_SIZE * dim);
    let mut report = TrainReport::default();

    for _ in 0..config.n_codebooks {
        let distinct = distinct_rows(&residuals, dim);
        let (centroids, assignment, stage) = if distinct.len() < CODEBOOK_SIZE {
            let mut centroids = vec![0.0; CODEBOOK_SIZE * dim];
            for (slot, &i) in distinct.iter().enumerate() {
                centroids[slot * dim..(slot + 1) * dim]
                    .copy_from_slice(&residuals[i * dim..(i + 1) * dim]);
            }
            let assignment: Vec<usize> = residuals
                .chunks_exact(dim)
                .map(|row| nearest(&centroids, dim, row).0)
                .collect();
            let stage = StageReport {
                mse_trace: vec![0.0],
                distinct_points: distinct.len(),
                padded: true,
            };
            (centroids, assignment, stage)
        } else {
            let km = lloyd(&residuals, dim, CODEBOOK_SIZE, config.iters, &mut rng);
            let stage = StageReport {
                mse_trace: km.mse_trace,
                distinct_points: distinct.len(),
                padded: false,
            };
            (km.centroids, km.assignment, stage)
        };
        for (row, &a) in residuals.chunks_exact_mut(dim).zip(&assignment) {
            for (r, c) in row.iter_mut().zip(&centroids[a * dim..(a + 1) * dim]) {
                *r -= c;
            }
        }
        entries.extend_from_slice(&centroids);
        report.stages.push(stage);
    }

    Ok((CodebookSet::new(config.n_codebooks, dim, entries)?, report))
}
