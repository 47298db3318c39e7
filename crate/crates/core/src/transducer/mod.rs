//! Neural transducer (RNN-T) over formatted label sequences.
//!
//! The loss works on a precomputed lattice of normalized log-probabilities,
//! one distribution over the blank-augmented vocabulary per
//! `(frame, labels emitted so far)` cell. Label ids live in the same index
//! space as the lattice: blank is 0 and the inventory's tokens are `1..V`.

mod decode;
mod lm;
mod loss;
mod oracle;

pub use decode::{beam_search, build_lattice, greedy_search, BeamConfig, DecodeHypothesis, LanguageModel, StepScorer};
pub use lm::NgramLm;
pub use loss::{forward_variables, rnnt_log_posterior, rnnt_loss_and_grad, RnntLoss};
pub use oracle::{alignments, brute_force_posterior, Step, MAX_ORACLE_FRAMES, MAX_ORACLE_LABELS};

use thiserror::Error;

/// Index of the blank symbol in every distribution.
pub const BLANK: usize = 0;

/// Printable name of the blank symbol.
pub const BLANK_SYMBOL: &str = "<b>";

#[derive(Debug, Error, PartialEq)]
pub enum TransducerError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("NaN in {0}")]
    NaN(&'static str),
    #[error("label {label} at position {position} is outside 1..{vocab}")]
    InvalidLabel { position: usize, label: usize, vocab: usize },
    #[error("label sequence has zero probability under the lattice")]
    ZeroProbability,
    #[error("enumeration guard: T = {frames} (max {MAX_ORACLE_FRAMES}), U = {labels} (max {MAX_ORACLE_LABELS})")]
    TooLarge { frames: usize, labels: usize },
    #[error("beam must be at least 1")]
    InvalidBeam,
    #[error("fusion weight must be finite and non-negative, got {0}")]
    InvalidWeight(f64),
    #[error("invalid inventory: {0}")]
    Inventory(String),
}

/// Output tokens `Y`; blank is implicit at index 0.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenInventory {
    tokens: Vec<String>,
}

impl TokenInventory {
    pub fn new<S: Into<String>>(tokens: impl IntoIterator<Item = S>) -> Result<Self, TransducerError> {
        let tokens: Vec<String> = tokens.into_iter().map(Into::into).collect();
        for (i, t) in tokens.iter().enumerate() {
            if t.is_empty() || t.contains(char::is_whitespace) {
                return Err(TransducerError::Inventory(format!("token {i} is empty or has whitespace")));
            }
            if t == BLANK_SYMBOL {
                return Err(TransducerError::Inventory("blank symbol listed as a token".into()));
            }
            if tokens[..i].contains(t) {
                return Err(TransducerError::Inventory(format!("duplicate token {t:?}")));
            }
        }
        Ok(Self { tokens })
    }

    /// `|Y| + 1`.
    pub fn size(&self) -> usize {
        self.tokens.len() + 1
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn id(&self, token: &str) -> Option<usize> {
        self.tokens.iter().position(|t| t == token).map(|i| i + 1)
    }

    /// Token for a label id; `None` for blank or out-of-range ids.
    pub fn token(&self, id: usize) -> Option<&str> {
        id.checked_sub(1).and_then(|i| self.tokens.get(i)).map(String::as_str)
    }

    /// Maps tokens to label ids, `None` if any token is unknown.
    pub fn encode<S: AsRef<str>>(&self, tokens: &[S]) -> Option<Vec<usize>> {
        tokens.iter().map(|t| self.id(t.as_ref())).collect()
    }

    pub fn decode(&self, labels: &[usize]) -> Vec<String> {
        labels
            .iter()
            .filter_map(|&l| self.token(l).map(str::to_owned))
            .collect()
    }
}

/// `T x (U + 1) x V` log-probabilities, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Lattice {
    frames: usize,
    labels: usize,
    vocab: usize,
    log_probs: Vec<f64>,
}

impl Lattice {
    pub fn new(frames: usize, labels: usize, vocab: usize, log_probs: Vec<f64>) -> Result<Self, TransducerError> {
        if frames == 0 || vocab < 2 {
            return Err(TransducerError::Shape(format!(
                "need T >= 1 and V >= 2, got T = {frames}, V = {vocab}"
            )));
        }
        let expected = frames * (labels + 1) * vocab;
        if log_probs.len() != expected {
            return Err(TransducerError::Shape(format!(
                "expected {expected} values for {frames}x{}x{vocab}, got {}",
                labels + 1,
                log_probs.len()
            )));
        }
        Ok(Self {
            frames,
            labels,
            vocab,
            log_probs,
        })
    }

    /// Builds a lattice by log-softmaxing each cell of raw scores.
    pub fn from_logits(frames: usize, labels: usize, vocab: usize, mut logits: Vec<f64>) -> Result<Self, TransducerError> {
        if vocab > 0 {
            for cell in logits.chunks_mut(vocab) {
                crate::numeric::log_softmax_in_place(cell);
            }
        }
        Self::new(frames, labels, vocab, logits)
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    /// `U`, the number of labels the lattice was built for.
    pub fn labels(&self) -> usize {
        self.labels
    }

    pub fn vocab(&self) -> usize {
        self.vocab
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.log_probs
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.log_probs
    }

    #[inline]
    pub fn index(&self, t: usize, u: usize, k: usize) -> usize {
        (t * (self.labels + 1) + u) * self.vocab + k
    }

    #[inline]
    pub fn get(&self, t: usize, u: usize, k: usize) -> f64 {
        self.log_probs[self.index(t, u, k)]
    }

    pub fn cell(&self, t: usize, u: usize) -> &[f64] {
        let start = self.index(t, u, 0);
        &self.log_probs[start..start + self.vocab]
    }

    /// Largest `|logsumexp(cell)|` over all cells; 0 for a normalized lattice.
    pub fn normalization_error(&self) -> f64 {
        self.log_probs
            .chunks(self.vocab)
            .map(|c| crate::numeric::log_sum_exp(c).abs())
            .fold(0.0, f64::max)
    }

    pub(crate) fn check(&self, labels: &[usize]) -> Result<(), TransducerError> {
        if labels.len() != self.labels {
            return Err(TransducerError::Shape(format!(
                "lattice built for U = {}, label sequence has {}",
                self.labels,
                labels.len()
            )));
        }
        check_labels(labels, self.vocab)?;
        if self.log_probs.iter().any(|x| x.is_nan()) {
            return Err(TransducerError::NaN("lattice"));
        }
        Ok(())
    }
}

pub(crate) fn check_labels(labels: &[usize], vocab: usize) -> Result<(), TransducerError> {
    match labels.iter().position(|&l| l == BLANK || l >= vocab) {
        Some(position) => Err(TransducerError::InvalidLabel {
            position,
            label: labels[position],
            vocab,
        }),
        None => Ok(()),
    }
}
