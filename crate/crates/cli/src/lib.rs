//! Shared plumbing for the command-line tools: exit codes, input/output and
//! backend selection.

use std::fmt::Display;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::Parser;
use vot_core::backend::{ChatBackend, HttpBackend, HttpConfig, MockBackend, MockScript};

pub const EXIT_CONFIG: u8 = 1;
pub const EXIT_IO: u8 = 2;

/// An error paired with the process exit code it maps to.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub error: anyhow::Error,
}

pub type CliResult<T> = Result<T, Failure>;

pub fn config_error(error: impl Into<anyhow::Error>) -> Failure {
    Failure {
        code: EXIT_CONFIG,
        error: error.into(),
    }
}

pub fn io_error(error: impl Into<anyhow::Error>) -> Failure {
    Failure {
        code: EXIT_IO,
        error: error.into(),
    }
}

pub trait OrExit<T> {
    fn or_config(self) -> CliResult<T>;
    fn or_io(self) -> CliResult<T>;
}

impl<T, E: Into<anyhow::Error>> OrExit<T> for Result<T, E> {
    fn or_config(self) -> CliResult<T> {
        self.map_err(config_error)
    }

    fn or_io(self) -> CliResult<T> {
        self.map_err(io_error)
    }
}

/// Parses arguments (usage errors exit 1), runs `body`, prints any failure.
pub fn main_with<A: Parser>(body: impl FnOnce(A) -> CliResult<()>) -> ExitCode {
    let args = match A::try_parse() {
        Ok(args) => args,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match body(args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}

/// Reads a file, or stdin when `path` is `None` or `-`.
pub fn read_input(path: Option<&Path>) -> CliResult<String> {
    match path {
        Some(p) if p != Path::new("-") => {
            std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display())).or_io()
        }
        _ => {
            let mut buf = String::new();
            std::io::stdin().read_to_string(&mut buf).context("reading stdin").or_io()?;
            Ok(buf)
        }
    }
}

/// Writes to a file, or stdout when `path` is `None` or `-`.
pub fn write_output(path: Option<&Path>, text: &str) -> CliResult<()> {
    let mut text = text.to_string();
    if !text.is_empty() && !text.ends_with('\n') {
        text.push('\n');
    }
    match path {
        Some(p) if p != Path::new("-") => {
            std::fs::write(p, text).with_context(|| format!("writing {}", p.display())).or_io()
        }
        _ => std::io::stdout().write_all(text.as_bytes()).context("writing stdout").or_io(),
    }
}

pub fn schema_error(what: impl Display, error: impl Display) -> Failure {
    io_error(anyhow::anyhow!("{what}: {error}"))
}

/// Backend flags shared by `vot run` and `vot bench`.
#[derive(Debug, Clone, clap::Args)]
pub struct BackendArgs {
    /// Scripted mock responses (JSON); takes precedence over HTTP settings.
    #[arg(long)]
    pub mock_script: Option<PathBuf>,
    /// Chat-completions base URL.
    #[arg(long, env = "VOT_API_BASE")]
    pub api_base: Option<String>,
    #[arg(long, env = "VOT_API_KEY", hide_env_values = true)]
    pub api_key: Option<String>,
    #[arg(long, env = "VOT_MODEL")]
    pub model: Option<String>,
    /// Per-request timeout in seconds.
    #[arg(long, default_value_t = 60)]
    pub timeout_secs: u64,
    /// Retries on timeouts, transport errors, 429 and 5xx.
    #[arg(long, default_value_t = 3)]
    pub http_retries: u32,
    /// Maximum concurrent HTTP requests.
    #[arg(long, default_value_t = 8)]
    pub max_in_flight: usize,
}

impl BackendArgs {
    pub fn build(&self) -> CliResult<Box<dyn ChatBackend>> {
        if let Some(path) = &self.mock_script {
            let script = MockScript::load(path).or_config()?;
            return Ok(Box::new(MockBackend::new(script)));
        }
        let mut cfg = HttpConfig::from_env(self.api_base.clone(), self.api_key.clone(), self.model.clone()).or_config()?;
        cfg.timeout = std::time::Duration::from_secs(self.timeout_secs);
        cfg.max_retries = self.http_retries;
        cfg.max_in_flight = self.max_in_flight;
        Ok(Box::new(HttpBackend::new(cfg).or_config()?))
    }
}
