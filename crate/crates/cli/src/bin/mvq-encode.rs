//! Encodes an embedding matrix file into codebook indexes.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use pcasr::mvq::{read_codebooks, read_embeddings, write_ci, CiDataset, FormatError};
use pcasr_cli::run;

#[derive(Parser)]
#[command(name = "mvq-encode")]
struct Args {
    #[arg(long)]
    codebooks: PathBuf,
    /// Embeddings in F64M matrix format.
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

fn main() -> ExitCode {
    let args = Args::parse();
    run(|| {
        let codebooks = read_codebooks(&args.codebooks)?;
        let set = read_embeddings(&args.input)?;
        if set.dim != codebooks.dim() {
            return Err(FormatError::HeaderMismatch(format!(
                "embeddings have dimension {}, codebooks {}",
                set.dim,
                codebooks.dim()
            ))
            .into());
        }
        let mut ci = CiDataset::new(codebooks.n_codebooks());
        for u in &set.utterances {
            ci.utterances.push(codebooks.encode_frames(u)?);
        }
        write_ci(&args.out, &ci)?;
        Ok(())
    })
}
