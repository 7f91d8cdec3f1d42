//! Dataset loading and batch accuracy runs.

use std::collections::{BTreeMap, HashSet};
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::ChatBackend;
use crate::orchestrator::{run_vot, QaInstance, ReasoningTrace, VotConfig};

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub name: String,
    pub instances: Vec<QaInstance>,
}

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {field}: {message}")]
    Schema { line: usize, field: String, message: String },
    #[error("configuration: {0}")]
    Config(String),
}

impl HarnessError {
    pub fn code(&self) -> &'static str {
        match self {
            Self::Io { .. } => "IO_ERROR",
            Self::Schema { .. } => "SCHEMA_ERROR",
            Self::Config(_) => "CONFIG_ERROR",
        }
    }

    fn io(path: &Path, source: std::io::Error) -> Self {
        Self::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

/// Parses JSONL text, one instance per non-blank line.
pub fn parse_dataset(name: &str, text: &str) -> Result<Dataset, HarnessError> {
    let mut instances = Vec::new();
    let mut ids = HashSet::new();
    for (n, raw) in text.lines().enumerate() {
        let line = n + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let mut de = serde_json::Deserializer::from_str(raw);
        let q: QaInstance = serde_path_to_error::deserialize(&mut de).map_err(|e| HarnessError::Schema {
            line,
            field: match e.path().to_string() {
                p if p == "." => "$".to_string(),
                p => p,
            },
            message: e.inner().to_string(),
        })?;
        q.check().map_err(|(field, message)| HarnessError::Schema { line, field, message })?;
        if !ids.insert(q.id.clone()) {
            return Err(HarnessError::Schema {
                line,
                field: "id".into(),
                message: format!("duplicate id {:?}", q.id),
            });
        }
        instances.push(q);
    }
    Ok(Dataset {
        name: name.to_string(),
        instances,
    })
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<Dataset, HarnessError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
    let name = path.file_stem().map_or_else(String::new, |s| s.to_string_lossy().into_owned());
    parse_dataset(&name, &text)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryStats {
    pub n_total: usize,
    pub n_correct: usize,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InstanceOutcome {
    pub id: String,
    pub category: Option<String>,
    pub gold: Option<String>,
    #[serde(rename = "final")]
    pub final_answer: Option<String>,
    pub correct: bool,
    pub error: Option<String>,
    pub retries: u32,
    pub unverified: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub dataset: String,
    pub accuracy_overall: f64,
    pub accuracy_by_category: BTreeMap<String, CategoryStats>,
    /// Instances carrying a gold letter.
    pub n_total: usize,
    pub n_correct: usize,
    pub n_errors: usize,
    /// Instances without a gold letter (run but not scored).
    pub n_unscored: usize,
    pub trace_dir: Option<PathBuf>,
    pub instances: Vec<InstanceOutcome>,
    pub started_at_unix: Option<u64>,
    pub elapsed_ms: Option<u64>,
}

impl BenchReport {
    /// The report with its wall-clock fields removed, for comparisons.
    pub fn canonical(&self) -> Self {
        Self {
            started_at_unix: None,
            elapsed_ms: None,
            ..self.clone()
        }
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialises")
    }

    /// Recomputes the report from traces alone.
    pub fn from_traces(dataset: &str, traces: &[ReasoningTrace], trace_dir: Option<PathBuf>) -> Self {
        let mut instances: Vec<InstanceOutcome> = traces
            .iter()
            .map(|t| InstanceOutcome {
                id: t.instance_id.clone(),
                category: t.category.clone(),
                gold: t.gold.clone(),
                final_answer: t.final_answer.clone().filter(|_| t.error.is_none()),
                correct: t.is_correct(),
                error: t.error.as_ref().map(|e| e.code.clone()),
                retries: t.retries,
                unverified: t.unverified,
            })
            .collect();
        instances.sort_by(|a, b| a.id.cmp(&b.id));

        let scored: Vec<&InstanceOutcome> = instances.iter().filter(|o| o.gold.is_some()).collect();
        let n_total = scored.len();
        let n_correct = scored.iter().filter(|o| o.correct).count();
        let n_errors = instances.iter().filter(|o| o.error.is_some()).count();
        let mut by_category: BTreeMap<String, CategoryStats> = BTreeMap::new();
        for o in &scored {
            if let Some(c) = &o.category {
                let stats = by_category.entry(c.clone()).or_insert(CategoryStats {
                    n_total: 0,
                    n_correct: 0,
                    accuracy: 0.0,
                });
                stats.n_total += 1;
                stats.n_correct += usize::from(o.correct);
            }
        }
        for stats in by_category.values_mut() {
            stats.accuracy = stats.n_correct as f64 / stats.n_total.max(1) as f64;
        }
        Self {
            dataset: dataset.to_string(),
            accuracy_overall: n_correct as f64 / n_total.max(1) as f64,
            accuracy_by_category: by_category,
            n_total,
            n_correct,
            n_errors,
            n_unscored: instances.len() - n_total,
            trace_dir,
            instances,
            started_at_unix: None,
            elapsed_ms: None,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct BenchOptions {
    /// Worker threads; 0 means one.
    pub jobs: usize,
    pub trace_dir: Option<PathBuf>,
}

/// File name used for an instance's trace.
pub fn trace_file_name(instance_id: &str) -> String {
    let safe: String = instance_id
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.') { c } else { '_' })
        .collect();
    format!("{safe}.json")
}

pub fn run_benchmark(
    ds: &Dataset,
    backend: &dyn ChatBackend,
    cfg: &VotConfig,
    opts: &BenchOptions,
) -> Result<BenchReport, HarnessError> {
    cfg.check().map_err(|e| HarnessError::Config(e.to_string()))?;
    if let Some(dir) = &opts.trace_dir {
        std::fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
    }
    let started_at = SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs());
    let clock = Instant::now();

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.jobs.max(1))
        .build()
        .map_err(|e| HarnessError::Config(e.to_string()))?;
    let traces: Vec<ReasoningTrace> = pool.install(|| {
        ds.instances
            .par_iter()
            .map(|q| match run_vot(q, backend, cfg) {
                Ok((_, trace)) => trace,
                Err(e) => *e.trace,
            })
            .collect()
    });

    if let Some(dir) = &opts.trace_dir {
        for t in &traces {
            let path = dir.join(trace_file_name(&t.instance_id));
            std::fs::write(&path, t.to_json_pretty() + "\n").map_err(|e| HarnessError::io(&path, e))?;
        }
    }

    let mut report = BenchReport::from_traces(&ds.name, &traces, opts.trace_dir.clone());
    report.started_at_unix = Some(started_at);
    report.elapsed_ms = Some(clock.elapsed().as_millis() as u64);
    Ok(report)
}
