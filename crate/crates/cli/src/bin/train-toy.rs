//! Trains the toy transducer with or without codebook-index distillation.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};
use pcasr::harness::{generate_dataset, prepare_kd_targets, trace_csv, train, TaskConfig, TrainConfig};
use pcasr::kd::DEFAULT_ALPHA;
use pcasr::mvq::{self, write_ci, write_codebooks};
use pcasr_cli::{emit, run};

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Switch {
    On,
    Off,
}

#[derive(Parser)]
#[command(name = "train-toy")]
struct Args {
    #[arg(long, value_enum, default_value = "on")]
    kd: Switch,
    #[arg(long, default_value_t = DEFAULT_ALPHA)]
    alpha: f64,
    #[arg(long, default_value_t = 300)]
    steps: usize,
    /// Model initialization seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 0.05)]
    lr: f64,
    /// Training utterances.
    #[arg(long, default_value_t = 96)]
    n: usize,
    #[arg(long, default_value_t = 1)]
    data_seed: u64,
    /// Precomputed codebook indexes for the training set. Without it,
    /// codebooks are trained here and the indexes written next to `--out`.
    #[arg(long)]
    ci: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    trace: Option<PathBuf>,
}

fn main() -> ExitCode {
    let args = Args::parse();
    run(|| {
        let task = TaskConfig::default();
        let inventory = task.inventory()?;
        let data = generate_dataset(args.n, args.data_seed, &task)?;
        let config = TrainConfig {
            use_kd: args.kd == Switch::On,
            alpha: args.alpha,
            steps: args.steps,
            lr: args.lr,
            seed: args.seed,
            ..TrainConfig::default()
        };
        let ci_path = match (&args.ci, config.use_kd) {
            (Some(p), _) => Some(p.clone()),
            (None, true) => {
                let (codebooks, ci, report) = prepare_kd_targets(
                    &data,
                    mvq::TrainConfig {
                        n_codebooks: config.model.n_codebooks,
                        seed: args.data_seed,
                        ..mvq::TrainConfig::default()
                    },
                )?;
                for w in report.warnings() {
                    eprintln!("warning: {w}");
                }
                let path = args.out.with_extension("ci");
                write_ci(&path, &ci)?;
                write_codebooks(&args.out.with_extension("mvqc"), &codebooks)?;
                Some(path)
            }
            (None, false) => None,
        };
        let out = train(&config, &inventory, &data, ci_path.as_deref())?;
        out.model.save(&args.out)?;
        if let Some(path) = &args.trace {
            emit(Some(path), &trace_csv(&out.trace))?;
        }
        if let (Some(first), Some(last)) = (out.trace.first(), out.trace.last()) {
            eprintln!(
                "fused loss {:.4} -> {:.4} (ratio {:.4}), median step {:.1} ms",
                first.fused_loss,
                last.fused_loss,
                out.loss_ratio(),
                1e3 * out.median_step_seconds()
            );
        }
        Ok(())
    })
}
