//! Desk-scale end-to-end check: a synthetic formatted-speech task, a small
//! transducer trained by hand-written backpropagation on the fused
//! transducer + distillation objective, and a with/without distillation
//! comparison scored by the metric suite.

pub mod nn;

mod model;
mod task;
mod train;

pub use model::{KdTerm, ModelConfig, ModelScorer, ToyModel, UtteranceLoss, PREDICTOR_CONTEXT, SPLICE_RADIUS};
pub use task::{
    generate_dataset, prepare_kd_targets, splice, teacher_set, TaskConfig, ToyUtterance, FRAME_DIM, TEACHER_DIM,
};
pub use train::{
    evaluate, run_ablation, trace_csv, train, Ablation, AblationConfig, AblationRow, Evaluation, TraceRow, TrainConfig,
    TrainOutput,
};

use thiserror::Error;

use crate::kd::KdError;
use crate::metrics::MetricsError;
use crate::mvq::{FormatError, MvqError};
use crate::transducer::TransducerError;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("{0}")]
    Config(String),
    #[error("distillation is on but no codebook-index file was given")]
    MissingCi,
    #[error("codebook indexes do not fit the data: {0}")]
    CiMismatch(String),
    #[error("training diverged at step {step}")]
    Diverged { step: usize },
    #[error(transparent)]
    Transducer(#[from] TransducerError),
    #[error(transparent)]
    Kd(#[from] KdError),
    #[error(transparent)]
    Mvq(#[from] MvqError),
    #[error(transparent)]
    Format(#[from] FormatError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
