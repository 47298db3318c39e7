//! Writes a synthetic toy dataset: features, teacher embeddings and
//! reference transcripts.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use pcasr::harness::{generate_dataset, teacher_set, TaskConfig, FRAME_DIM};
use pcasr::mvq::{write_embeddings, EmbeddingSet};
use pcasr_cli::{emit, run};

#[derive(Parser)]
#[command(name = "toy-data")]
struct Args {
    #[arg(long, default_value_t = 96)]
    n: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Noisy input features (F64M).
    #[arg(long)]
    features: PathBuf,
    /// Teacher embeddings (F64M).
    #[arg(long)]
    teacher: Option<PathBuf>,
    /// Reference transcripts, one per line.
    #[arg(long)]
    refs: Option<PathBuf>,
}

fn main() -> ExitCode {
    let args = Args::parse();
    run(|| {
        let task = TaskConfig::default();
        let inventory = task.inventory()?;
        let data = generate_dataset(args.n, args.seed, &task)?;
        let features = EmbeddingSet {
            dim: FRAME_DIM,
            utterances: data.iter().map(|u| u.frames.clone()).collect(),
        };
        write_embeddings(&args.features, &features)?;
        if let Some(path) = &args.teacher {
            write_embeddings(path, &teacher_set(&data))?;
        }
        if let Some(path) = &args.refs {
            let text: String = data
                .iter()
                .map(|u| format!("{}\n", u.transcript(&inventory).raw()))
                .collect();
            emit(Some(path), &text)?;
        }
        Ok(())
    })
}
