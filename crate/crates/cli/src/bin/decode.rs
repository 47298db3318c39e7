//! Beam-search decoding of feature files with a trained toy model.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use pcasr::harness::ToyModel;
use pcasr::mvq::{read_embeddings, FormatError};
use pcasr::textnorm::{detokenize, read_corpus, CorpusFormat, Transcript, View};
use pcasr::transducer::{beam_search, BeamConfig, LanguageModel, NgramLm};
use pcasr_cli::{run, CliError};
use serde_json::json;

#[derive(Parser)]
#[command(name = "decode")]
struct Args {
    #[arg(long)]
    model: PathBuf,
    /// Features in F64M matrix format.
    #[arg(long)]
    input: PathBuf,
    #[arg(long, default_value_t = 4)]
    beam: usize,
    /// Text corpus, one transcript per line, for an n-gram fusion LM.
    #[arg(long)]
    lm: Option<PathBuf>,
    #[arg(long, default_value_t = 0.3)]
    lm_weight: f64,
    #[arg(long, default_value_t = 2)]
    lm_order: usize,
}

fn main() -> ExitCode {
    let args = Args::parse();
    run(|| {
        let model = ToyModel::load(&args.model)?;
        let features = read_embeddings(&args.input)?;
        if features.dim != model.config().frame_dim {
            return Err(FormatError::HeaderMismatch(format!(
                "features have dimension {}, model expects {}",
                features.dim,
                model.config().frame_dim
            ))
            .into());
        }
        let inventory = model.inventory();
        let lm = match &args.lm {
            Some(path) => {
                let mut sentences = Vec::new();
                let mut skipped = 0;
                for u in read_corpus(path, CorpusFormat::Text)? {
                    match inventory.encode(&Transcript::new(u.text).tokenize(View::CasedPunct).tokens) {
                        Some(ids) => sentences.push(ids),
                        None => skipped += 1,
                    }
                }
                if skipped > 0 {
                    eprintln!("warning: {skipped} LM sentences have tokens outside the model inventory; skipped");
                }
                Some(NgramLm::train(&sentences, model.vocab(), args.lm_order, 1.0)?)
            }
            None => None,
        };
        let config = BeamConfig {
            beam: args.beam,
            max_len: None,
            lm_weight: args.lm_weight,
        };
        for (i, frames) in features.utterances.iter().enumerate() {
            if frames.is_empty() {
                return Err(CliError::msg(format!("utterance {i} has no frames")));
            }
            let scorer = model.scorer(frames)?;
            let hyp = beam_search(&scorer, &config, lm.as_ref().map(|l| l as &dyn LanguageModel))?;
            let text = detokenize(&inventory.decode(&hyp.tokens));
            println!("{}", json!({"id": i.to_string(), "text": text, "score": hyp.score}));
        }
        Ok(())
    })
}
