//! Scores hypothesis transcripts against references.

use std::collections::HashMap;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};
use pcasr::metrics;
use pcasr::textnorm::{read_corpus, CorpusFormat, Transcript, Utterance};
use pcasr_cli::{run, CliError};

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Text,
    Jsonl,
}

#[derive(Clone, Copy, ValueEnum)]
enum Report {
    Table,
    Json,
    Csv,
}

/// WER, WER C, WER PC, PER and zero-WER punctuation/capitalization F1.
#[derive(Parser)]
#[command(name = "eval")]
struct Args {
    #[arg(long = "ref")]
    reference: PathBuf,
    #[arg(long)]
    hyp: PathBuf,
    #[arg(long, value_enum, default_value = "text")]
    format: Format,
    #[arg(long, value_enum, default_value = "table")]
    report: Report,
}

/// Pairs utterances by id; every reference needs exactly one hypothesis.
fn pair(refs: Vec<Utterance>, hyps: Vec<Utterance>) -> Result<(Vec<Transcript>, Vec<Transcript>), CliError> {
    let mut by_id: HashMap<String, String> = HashMap::new();
    for h in hyps {
        if by_id.insert(h.id.clone(), h.text).is_some() {
            return Err(CliError::msg(format!("duplicate hypothesis id {:?}", h.id)));
        }
    }
    let mut r = Vec::with_capacity(refs.len());
    let mut h = Vec::with_capacity(refs.len());
    for u in refs {
        let text = by_id
            .remove(&u.id)
            .ok_or_else(|| CliError::msg(format!("no hypothesis for reference id {:?}", u.id)))?;
        r.push(Transcript::new(u.text));
        h.push(Transcript::new(text));
    }
    if let Some(extra) = by_id.keys().next() {
        return Err(CliError::msg(format!("hypothesis id {extra:?} has no reference")));
    }
    Ok((r, h))
}

fn main() -> ExitCode {
    let args = Args::parse();
    run(|| {
        let format = match args.format {
            Format::Text => CorpusFormat::Text,
            Format::Jsonl => CorpusFormat::Jsonl,
        };
        let refs = read_corpus(&args.reference, format)?;
        let hyps = read_corpus(&args.hyp, format)?;
        if matches!(args.format, Format::Text) && refs.len() != hyps.len() {
            return Err(CliError::msg(format!(
                "{} reference lines but {} hypothesis lines",
                refs.len(),
                hyps.len()
            )));
        }
        let (r, h) = pair(refs, hyps)?;
        let report = metrics::evaluate(&r, &h)?;
        match args.report {
            Report::Table => print!("{}", report.to_table()),
            Report::Json => println!("{}", serde_json::to_string_pretty(&report.to_json())?),
            Report::Csv => print!("{}", report.to_csv()),
        }
        Ok(())
    })
}
