use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use vot_cli::{main_with, read_input, schema_error, write_output, CliResult};
use vot_core::datagen::{gen_examples, load_corpus, to_jsonl, Objective};

/// Generate instruction-tuning examples (JSONL) from video-STSG pairs.
#[derive(Parser)]
#[command(name = "datagen", version)]
struct Args {
    /// L1 pairing, L2 whole STSG, L3 caption to tracklet, L4 target to
    /// caption and tracklet, L5 box to label and tracklet.
    #[arg(long)]
    objective: Objective,
    /// Corpus JSON: an array of `{video_id, stsg, action_captions}`.
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Negatives per positive for L1.
    #[arg(long, default_value_t = 1.0)]
    negative_ratio: f64,
    /// Output JSONL (stdout when omitted).
    #[arg(long)]
    out: Option<PathBuf>,
}

fn run(args: Args) -> CliResult<()> {
    let text = read_input(Some(&args.corpus))?;
    let corpus = load_corpus(&text).map_err(|e| schema_error(args.corpus.display(), e))?;
    let examples = gen_examples(args.objective, &corpus, args.negative_ratio, args.seed).map_err(|e| {
        let failure = anyhow::anyhow!("{}: {e}", e.code());
        match e.code() {
            "INVALID_RATIO" | "TEMPLATE_ERROR" => vot_cli::config_error(failure),
            _ => vot_cli::io_error(failure),
        }
    })?;
    write_output(args.out.as_deref(), to_jsonl(&examples).trim_end())?;
    eprintln!("{} {} examples", examples.len(), args.objective);
    Ok(())
}

fn main() -> ExitCode {
    main_with(run)
}
