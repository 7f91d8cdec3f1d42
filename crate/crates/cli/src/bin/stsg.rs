use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use vot_cli::{main_with, read_input, schema_error, write_output, CliResult, OrExit};
use vot_core::query::extract_tracklet;
use vot_core::{parse, serialize, subsample, validate, Stsg};

/// Validate, convert and query spatial-temporal scene graphs.
///
/// JSON documents follow the STSG schema; text uses the
/// `Frame <k>: {Objects: [...], Triplets: [...]}` expression format.
#[derive(Parser)]
#[command(name = "stsg", version)]
struct Args {
    #[command(subcommand)]
    command: Command,
    /// Input file (stdin when omitted or `-`).
    #[arg(long, short, global = true)]
    input: Option<PathBuf>,
    /// Output file (stdout when omitted or `-`).
    #[arg(long, short, global = true)]
    output: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Check a JSON STSG and print the validation report.
    Validate,
    /// Text expression to JSON.
    Parse,
    /// JSON to text expression.
    Serialize,
    /// Print the tracklet of one instance as a text expression.
    Tracklet {
        #[arg(long)]
        target: String,
        /// Emit JSON instead of text.
        #[arg(long)]
        json: bool,
    },
    /// Drop frames to approximate a lower frame rate (JSON in, JSON out).
    Subsample {
        #[arg(long)]
        fps: f64,
        /// Source frame rate when the document does not record one.
        #[arg(long)]
        source_fps: Option<f64>,
    },
}

fn load_json(args: &Args) -> CliResult<Stsg> {
    let text = read_input(args.input.as_deref())?;
    Stsg::from_json(&text).map_err(|e| schema_error("invalid STSG JSON", e))
}

fn run(args: Args) -> CliResult<()> {
    let out = args.output.as_deref();
    match &args.command {
        Command::Validate => {
            let stsg = load_json(&args)?;
            let report = validate(&stsg);
            write_output(out, &serde_json::to_string_pretty(&report).or_io()?)?;
            if !report.ok {
                let first = report.first().expect("failed report names a violation");
                return Err(schema_error("STSG is invalid", format!("{}: {}", first.code, first.detail)));
            }
            Ok(())
        }
        Command::Parse => {
            let text = read_input(args.input.as_deref())?;
            let stsg = parse(&text).map_err(|e| schema_error(e.code(), e))?;
            write_output(out, &stsg.to_json())
        }
        Command::Serialize => {
            let stsg = load_json(&args)?;
            let text = serialize(&stsg).map_err(|e| schema_error(e.code(), e))?;
            write_output(out, &text)
        }
        Command::Tracklet { target, json } => {
            let stsg = load_json(&args)?;
            let tracklet = extract_tracklet(&stsg, target).map_err(|e| schema_error(e.code(), e))?;
            let partial = tracklet.to_stsg();
            if *json {
                write_output(out, &partial.to_json())
            } else {
                write_output(out, &serialize(&partial).map_err(|e| schema_error(e.code(), e))?)
            }
        }
        Command::Subsample { fps, source_fps } => {
            let mut stsg = load_json(&args)?;
            if source_fps.is_some() {
                stsg.source_fps = *source_fps;
            }
            let sampled = subsample(&stsg, *fps).map_err(|e| vot_cli::config_error(anyhow::anyhow!("{}: {e}", e.code())))?;
            write_output(out, &sampled.to_json())
        }
    }
}

fn main() -> ExitCode {
    main_with(run)
}
