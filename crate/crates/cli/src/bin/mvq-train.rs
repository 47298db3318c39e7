//! Trains multi-codebook quantizers on an embedding matrix file.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use pcasr::mvq::{read_embeddings, train_codebooks, write_codebooks, TrainConfig, DEFAULT_CODEBOOKS};
use pcasr_cli::run;

#[derive(Parser)]
#[command(name = "mvq-train")]
struct Args {
    /// Embeddings in F64M matrix format.
    #[arg(long)]
    input: PathBuf,
    /// Number of codebooks.
    #[arg(long, default_value_t = DEFAULT_CODEBOOKS)]
    n: usize,
    #[arg(long, default_value_t = 20)]
    iters: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

fn main() -> ExitCode {
    let args = Args::parse();
    run(|| {
        let set = read_embeddings(&args.input)?;
        let config = TrainConfig {
            n_codebooks: args.n,
            iters: args.iters,
            seed: args.seed,
        };
        let (codebooks, report) = train_codebooks(&set.flatten(), set.dim, config)?;
        for w in report.warnings() {
            eprintln!("warning: {w}");
        }
        for (i, mse) in report.stage_mse().iter().enumerate() {
            eprintln!("stage {}: mse {mse:.6}", i + 1);
        }
        write_codebooks(&args.out, &codebooks)?;
        Ok(())
    })
}
