use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::Parser;
use vot_cli::{main_with, read_input, schema_error, write_output, CliResult, OrExit};
use vot_core::metrics::{grounding_report, DEFAULT_IOU_THRESHOLD};
use vot_core::Stsg;

/// Score a predicted STSG against a gold one: box IoU and detection P/R/F1,
/// triplet P/R/F1, and temporal IoU of instance spans.
#[derive(Parser)]
#[command(name = "eval-grounding", version)]
struct Args {
    #[arg(long)]
    pred: PathBuf,
    #[arg(long)]
    gold: PathBuf,
    /// IoU needed for a detection to count as matched.
    #[arg(long, default_value_t = DEFAULT_IOU_THRESHOLD)]
    threshold: f64,
    /// Report JSON (stdout when omitted).
    #[arg(long)]
    out: Option<PathBuf>,
}

fn load(path: &Path) -> CliResult<Stsg> {
    let text = read_input(Some(path))?;
    let stsg = Stsg::from_json(&text).map_err(|e| schema_error(path.display(), e))?;
    let report = vot_core::validate(&stsg);
    if let Some(v) = report.first() {
        return Err(schema_error(path.display(), format!("{}: {}", v.code, v.detail)));
    }
    Ok(stsg)
}

fn run(args: Args) -> CliResult<()> {
    if !(0.0..=1.0).contains(&args.threshold) {
        return Err(vot_cli::config_error(anyhow::anyhow!("threshold must lie in [0, 1]")));
    }
    let pred = load(&args.pred)?;
    let gold = load(&args.gold)?;
    let report = grounding_report(&pred, &gold, args.threshold);
    write_output(args.out.as_deref(), &serde_json::to_string_pretty(&report).or_io()?)
}

fn main() -> ExitCode {
    main_with(run)
}
