use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args as ClapArgs, Parser, Subcommand};
use vot_cli::{main_with, read_input, schema_error, write_output, BackendArgs, CliResult, OrExit};
use vot_core::harness::{load_dataset, run_benchmark, BenchOptions, HarnessError};
use vot_core::orchestrator::{run_vot, GroundingMode, QaInstance, VotConfig};
use vot_core::Stsg;

/// Five-step video reasoning over a chat-completions backend.
#[derive(Parser)]
#[command(name = "vot", version)]
struct Args {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Answer one question and print its reasoning trace.
    Run(RunArgs),
    /// Run a JSONL dataset and report accuracy.
    Bench(BenchArgs),
}

#[derive(ClapArgs)]
struct PipelineArgs {
    /// Grounding mode: `model` asks the backend for tracklets, `oracle`
    /// extracts them from the supplied STSG when possible.
    #[arg(long, default_value = "model")]
    mode: GroundingMode,
    #[arg(long, default_value_t = 2)]
    hops: usize,
    #[arg(long, default_value_t = 2)]
    max_retries: u32,
    #[arg(long, default_value_t = 4)]
    candidates: usize,
    #[arg(long, default_value_t = 0.0)]
    temperature: f64,
    /// Also send the ranking prompt (its reply is recorded, not used).
    #[arg(long)]
    send_rank_prompt: bool,
    #[command(flatten)]
    backend: BackendArgs,
}

impl PipelineArgs {
    fn config(&self) -> CliResult<VotConfig> {
        let cfg = VotConfig {
            grounding_mode: self.mode,
            hops: self.hops,
            max_retries: self.max_retries,
            candidate_count_open_ended: self.candidates,
            temperature: self.temperature,
            send_rank_prompt: self.send_rank_prompt,
        };
        cfg.check().or_config()?;
        Ok(cfg)
    }
}

#[derive(ClapArgs)]
struct RunArgs {
    /// Question JSON (one dataset record).
    #[arg(long)]
    question: PathBuf,
    /// STSG JSON for the video; overrides any graph embedded in the question.
    #[arg(long)]
    stsg: Option<PathBuf>,
    /// Where to write the trace (stdout when omitted).
    #[arg(long)]
    trace: Option<PathBuf>,
    #[command(flatten)]
    pipeline: PipelineArgs,
}

#[derive(ClapArgs)]
struct BenchArgs {
    /// Dataset JSONL.
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    /// Report JSON (stdout when omitted).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Directory receiving one trace file per instance.
    #[arg(long)]
    traces: Option<PathBuf>,
    #[command(flatten)]
    pipeline: PipelineArgs,
}

fn run_one(args: RunArgs) -> CliResult<()> {
    let cfg = args.pipeline.config()?;
    let backend = args.pipeline.backend.build()?;
    let text = read_input(Some(&args.question))?;
    let mut q: QaInstance = serde_json::from_str(&text).map_err(|e| schema_error(args.question.display(), e))?;
    if let Some(path) = &args.stsg {
        let text = read_input(Some(path))?;
        q.stsg = Some(Stsg::from_json(&text).map_err(|e| schema_error(path.display(), e))?);
    }
    if let Err((field, message)) = q.check() {
        return Err(schema_error(args.question.display(), format!("{field}: {message}")));
    }
    match run_vot(&q, backend.as_ref(), &cfg) {
        Ok((answer, trace)) => {
            write_output(args.trace.as_deref(), &trace.to_json_pretty())?;
            eprintln!("final answer: {answer}{}", if trace.unverified { " (unverified)" } else { "" });
            Ok(())
        }
        Err(e) => {
            write_output(args.trace.as_deref(), &e.trace.to_json_pretty())?;
            let code = if e.error.code() == "CONFIG" { vot_cli::EXIT_CONFIG } else { vot_cli::EXIT_IO };
            Err(vot_cli::Failure {
                code,
                error: anyhow::anyhow!("{} failed with {}: {}", e.step, e.error.code(), e.error),
            })
        }
    }
}

fn bench(args: BenchArgs) -> CliResult<()> {
    let cfg = args.pipeline.config()?;
    let backend = args.pipeline.backend.build()?;
    let ds = load_dataset(&args.data).map_err(|e| match e {
        HarnessError::Config(_) => vot_cli::config_error(e),
        other => vot_cli::io_error(other),
    })?;
    let opts = BenchOptions {
        jobs: args.jobs,
        trace_dir: args.traces.clone(),
    };
    let report = run_benchmark(&ds, backend.as_ref(), &cfg, &opts).map_err(|e| match e {
        HarnessError::Config(_) => vot_cli::config_error(e),
        other => vot_cli::io_error(other),
    })?;
    write_output(args.out.as_deref(), &report.to_json_pretty())?;
    eprintln!(
        "accuracy {:.4} ({}/{} correct, {} errors, {} unscored)",
        report.accuracy_overall, report.n_correct, report.n_total, report.n_errors, report.n_unscored
    );
    Ok(())
}

fn main() -> ExitCode {
    main_with(|args: Args| match args.command {
        Command::Run(a) => run_one(a),
        Command::Bench(a) => bench(a),
    })
}
