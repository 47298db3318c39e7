//! Algorithm kit for fully formatted (punctuated and cased) end-to-end speech
//! recognition.
//!
//! * [`textnorm`] transcript preprocessing and the plain / cased / punctuated views
//! * [`metrics`] WER, WER C, WER PC, PER and the zero-WER F1 protocol
//! * [`mvq`] multi-codebook vector quantization and the codebook-index file format
//! * [`transducer`] RNN-T posterior, loss and gradient, plus beam search with shallow fusion
//! * [`kd`] codebook-index distillation loss and the fused training objective
//! * [`harness`] a synthetic toy task and a small model trained with manual gradients

pub mod harness;
pub mod kd;
pub mod metrics;
pub mod mvq;
pub mod textnorm;
pub mod transducer;

pub(crate) mod numeric;
