//! Full-batch gradient descent on the fused objective, evaluation through
//! beam search and the metric suite, and the with/without distillation
//! comparison.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;

use super::model::{KdTerm, ModelConfig, ToyModel};
use super::task::{generate_dataset, prepare_kd_targets, TaskConfig, ToyUtterance};
use super::HarnessError;
use crate::kd::{fused_loss, KdConfig, KdError, DEFAULT_ALPHA};
use crate::metrics::{self, MetricsReport};
use crate::mvq::{self, read_ci, write_ci, write_codebooks, CiDataset};
use crate::textnorm::{detokenize, Transcript};
use crate::transducer::{beam_search, BeamConfig, TokenInventory, TransducerError};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub use_kd: bool,
    pub alpha: f64,
    pub steps: usize,
    pub lr: f64,
    pub seed: u64,
    pub kd: KdConfig,
    pub model: ModelConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            use_kd: true,
            alpha: DEFAULT_ALPHA,
            steps: 300,
            lr: 0.05,
            seed: 0,
            kd: KdConfig::default(),
            model: ModelConfig::default(),
        }
    }
}

/// Losses at the start of a step (before its update), averaged over
/// utterances, and the step's wall-clock time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRow {
    pub step: usize,
    pub rnnt_loss: f64,
    pub kd_loss: f64,
    pub fused_loss: f64,
    pub seconds: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutput {
    pub model: ToyModel,
    pub trace: Vec<TraceRow>,
}

impl TrainOutput {
    /// Final over initial fused loss.
    pub fn loss_ratio(&self) -> f64 {
        match (self.trace.first(), self.trace.last()) {
            (Some(a), Some(b)) => b.fused_loss / a.fused_loss,
            _ => f64::NAN,
        }
    }

    pub fn median_step_seconds(&self) -> f64 {
        let mut s: Vec<f64> = self.trace.iter().map(|r| r.seconds).collect();
        s.sort_by(f64::total_cmp);
        match s.len() {
            0 => f64::NAN,
            n if n % 2 == 1 => s[n / 2],
            n => 0.5 * (s[n / 2 - 1] + s[n / 2]),
        }
    }
}

/// Trains a fresh model on `data`.
///
/// Codebook indexes are read from `ci_path` only when `use_kd` is set; with
/// distillation off the path is never touched.
pub fn train(
    config: &TrainConfig,
    inventory: &TokenInventory,
    data: &[ToyUtterance],
    ci_path: Option<&Path>,
) -> Result<TrainOutput, HarnessError> {
    if data.is_empty() {
        return Err(HarnessError::Config("empty training set".into()));
    }
    if !(config.lr > 0.0 && config.lr.is_finite()) {
        return Err(HarnessError::Config(format!("learning rate {}", config.lr)));
    }
    let alpha = if config.use_kd { config.alpha } else { 0.0 };
    fused_loss(0.0, 0.0, alpha)?;
    let ci = if config.use_kd {
        let path = ci_path.ok_or(HarnessError::MissingCi)?;
        let ci = read_ci(path)?;
        check_ci(&ci, data, config.model.n_codebooks)?;
        Some(ci)
    } else {
        None
    };
    let mut model = ToyModel::new(config.model.clone(), inventory.clone(), config.seed)?;
    let scale = config.lr / data.len() as f64;
    let mut trace = Vec::with_capacity(config.steps);
    let mut grad = model.zeros_like();
    for step in 0..config.steps {
        let start = Instant::now();
        for g in grad.tensors_mut() {
            g.fill(0.0);
        }
        let (mut rnnt, mut kd) = (0.0, 0.0);
        for (i, u) in data.iter().enumerate() {
            let term = ci.as_ref().map(|ci| KdTerm {
                targets: &ci.utterances[i],
                alpha,
                config: config.kd,
            });
            let l = model
                .loss_and_grad(&u.frames, &u.target, term, &mut grad)
                .map_err(|e| numeric_failure(e, step))?;
            rnnt += l.rnnt;
            kd += l.kd;
        }
        let n = data.len() as f64;
        let (rnnt, kd) = (rnnt / n, kd / n);
        let fused = fused_loss(rnnt, kd, alpha)?;
        if !fused.is_finite() {
            return Err(HarnessError::Diverged { step });
        }
        for (p, g) in model.tensors_mut().into_iter().zip(grad.tensors()) {
            for (x, d) in p.iter_mut().zip(g.2) {
                *x -= scale * d;
            }
        }
        if !model.is_finite() {
            return Err(HarnessError::Diverged { step });
        }
        trace.push(TraceRow {
            step,
            rnnt_loss: rnnt,
            kd_loss: kd,
            fused_loss: fused,
            seconds: start.elapsed().as_secs_f64(),
        });
    }
    Ok(TrainOutput { model, trace })
}

/// Non-finite values surfacing inside a step mean the run diverged there.
fn numeric_failure(e: HarnessError, step: usize) -> HarnessError {
    match e {
        HarnessError::Transducer(TransducerError::NaN(_) | TransducerError::ZeroProbability)
        | HarnessError::Kd(KdError::NonFinite(_)) => HarnessError::Diverged { step },
        e => e,
    }
}

fn check_ci(ci: &CiDataset, data: &[ToyUtterance], n_codebooks: usize) -> Result<(), HarnessError> {
    if ci.n_codebooks != n_codebooks {
        return Err(HarnessError::CiMismatch(format!(
            "file has {} codebooks, model expects {n_codebooks}",
            ci.n_codebooks
        )));
    }
    if ci.utterances.len() != data.len() {
        return Err(HarnessError::CiMismatch(format!(
            "file has {} utterances, dataset has {}",
            ci.utterances.len(),
            data.len()
        )));
    }
    for (i, (c, u)) in ci.utterances.iter().zip(data).enumerate() {
        if c.frames() != u.n_frames() {
            return Err(HarnessError::CiMismatch(format!(
                "utterance {i}: {} index frames for {} feature frames",
                c.frames(),
                u.n_frames()
            )));
        }
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct Evaluation {
    pub report: MetricsReport,
    pub references: Vec<String>,
    pub hypotheses: Vec<String>,
}

/// Beam-4 decoding of every utterance, scored with the metric suite.
pub fn evaluate(model: &ToyModel, data: &[ToyUtterance]) -> Result<Evaluation, HarnessError> {
    let beam = BeamConfig {
        beam: 4,
        max_len: None,
        lm_weight: 0.0,
    };
    let inventory = model.inventory();
    let hypotheses = data
        .par_iter()
        .map(|u| {
            let hyp = beam_search(&model.scorer(&u.frames)?, &beam, None)?;
            Ok(detokenize(&inventory.decode(&hyp.tokens)))
        })
        .collect::<Result<Vec<String>, HarnessError>>()?;
    let references: Vec<String> = data
        .iter()
        .map(|u| detokenize(&inventory.decode(&u.target)))
        .collect();
    let refs: Vec<Transcript> = references.iter().map(Transcript::new).collect();
    let hyps: Vec<Transcript> = hypotheses.iter().map(Transcript::new).collect();
    Ok(Evaluation {
        report: metrics::evaluate(&refs, &hyps)?,
        references,
        hypotheses,
    })
}

/// `step,rnnt_loss,kd_loss,fused_loss` with one row per step.
pub fn trace_csv(trace: &[TraceRow]) -> String {
    let mut out = String::from("step,rnnt_loss,kd_loss,fused_loss\n");
    for r in trace {
        let _ = writeln!(out, "{},{},{},{}", r.step, r.rnnt_loss, r.kd_loss, r.fused_loss);
    }
    out
}

#[derive(Debug, Clone)]
pub struct AblationConfig {
    pub task: TaskConfig,
    pub train_size: usize,
    pub test_size: usize,
    pub data_seed: u64,
    pub mvq_iters: usize,
    pub train: TrainConfig,
    /// Where the codebooks and codebook indexes are written.
    pub work_dir: PathBuf,
}

impl AblationConfig {
    pub fn new(work_dir: impl Into<PathBuf>) -> Self {
        Self {
            task: TaskConfig::default(),
            train_size: 96,
            test_size: 32,
            data_seed: 1,
            mvq_iters: 10,
            train: TrainConfig::default(),
            work_dir: work_dir.into(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct AblationRow {
    pub system: String,
    pub use_kd: bool,
    pub report: MetricsReport,
    pub initial_fused: f64,
    pub final_fused: f64,
    pub median_step_seconds: f64,
}

#[derive(Debug, Clone)]
pub struct Ablation {
    /// Distillation on, then off.
    pub rows: Vec<AblationRow>,
    pub warnings: Vec<String>,
}

impl Ablation {
    /// Relative per-step wall-clock cost of distillation.
    pub fn kd_overhead(&self) -> f64 {
        let on = self.rows.iter().find(|r| r.use_kd).map(|r| r.median_step_seconds);
        let off = self.rows.iter().find(|r| !r.use_kd).map(|r| r.median_step_seconds);
        match (on, off) {
            (Some(a), Some(b)) => a / b - 1.0,
            _ => f64::NAN,
        }
    }

    /// PER / WER / WER PC in percent, one row per system.
    pub fn to_table(&self) -> String {
        let pct = |x: f64| format!("{x:.2}");
        let mut out = format!("{:<10} {:>8} {:>8} {:>8}\n", "system", "PER", "WER", "WER PC");
        for r in &self.rows {
            let per = r.report.per.map_or("n/a".to_string(), pct);
            let _ = writeln!(
                out,
                "{:<10} {:>8} {:>8} {:>8}",
                r.system,
                per,
                pct(r.report.wer),
                pct(r.report.wer_pc)
            );
        }
        out
    }
}

/// Trains with and without distillation on the same data and seed and
/// evaluates both on a held-out set.
pub fn run_ablation(config: &AblationConfig) -> Result<Ablation, HarnessError> {
    let train_data = generate_dataset(config.train_size, config.data_seed, &config.task)?;
    let test_data = generate_dataset(config.test_size, config.data_seed.wrapping_add(0x5eed), &config.task)?;
    let (codebooks, ci, report) = prepare_kd_targets(
        &train_data,
        mvq::TrainConfig {
            n_codebooks: config.train.model.n_codebooks,
            iters: config.mvq_iters,
            seed: config.data_seed,
        },
    )?;
    std::fs::create_dir_all(&config.work_dir)?;
    let ci_path = config.work_dir.join("train.ci");
    write_ci(&ci_path, &ci)?;
    write_codebooks(&config.work_dir.join("teacher.cb"), &codebooks)?;

    let inventory = config.task.inventory()?;
    let mut rows = Vec::new();
    for use_kd in [true, false] {
        let cfg = TrainConfig {
            use_kd,
            ..config.train.clone()
        };
        let out = train(&cfg, &inventory, &train_data, Some(&ci_path))?;
        let eval = evaluate(&out.model, &test_data)?;
        rows.push(AblationRow {
            system: if use_kd { "w/ KD" } else { "w/o KD" }.to_string(),
            use_kd,
            report: eval.report,
            initial_fused: out.trace.first().map_or(f64::NAN, |r| r.fused_loss),
            final_fused: out.trace.last().map_or(f64::NAN, |r| r.fused_loss),
            median_step_seconds: out.median_step_seconds(),
        });
    }
    Ok(Ablation {
        rows,
        warnings: report.warnings(),
    })
}
