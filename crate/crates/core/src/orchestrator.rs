//! The five-step reasoning chain.
//!
//! 1. identify the targets the question is about,
//! 2. ground each target as a tracklet (locally from a supplied STSG in
//!    oracle mode, otherwise by asking the model for a partial STSG),
//! 3. analyse the targets' behaviour against their neighbour scenes,
//! 4. score every candidate answer 1-10 and rank them (open-ended questions
//!    first get a set of generated candidates),
//! 5. verify the chosen answer from a grounding and a commonsense angle,
//!    excluding it and re-ranking when the check fails.
//!
//! Every prompt and raw completion is recorded in a [`ReasoningTrace`].

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::{BackendError, ChatBackend, ChatMessage, ChatRequest, ChatSession, StepTag};
use crate::prompts::{PromptError, PromptSet};
use crate::query::{neighbor_scene, partial_stsg, resolve_targets, DEFAULT_HOPS};
use crate::stsg::{link_coreferences, Stsg};
use crate::text::{parse, serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GroundingMode {
    #[default]
    Model,
    Oracle,
}

impl std::str::FromStr for GroundingMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "model" => Ok(Self::Model),
            "oracle" => Ok(Self::Oracle),
            other => Err(format!("unknown grounding mode {other:?} (expected model or oracle)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VotConfig {
    pub grounding_mode: GroundingMode,
    /// Radius of the neighbour scenes embedded in the analysis prompt.
    pub hops: usize,
    pub max_retries: u32,
    pub candidate_count_open_ended: usize,
    pub temperature: f64,
    /// Also send the ranking prompt and record the model's ranking. The
    /// chosen answer always comes from the local ranking.
    pub send_rank_prompt: bool,
}

impl Default for VotConfig {
    fn default() -> Self {
        Self {
            grounding_mode: GroundingMode::Model,
            hops: DEFAULT_HOPS,
            max_retries: 2,
            candidate_count_open_ended: 4,
            temperature: 0.0,
            send_rank_prompt: false,
        }
    }
}

impl VotConfig {
    pub fn check(&self) -> Result<(), VotError> {
        if self.hops == 0 {
            return Err(VotError::Config("hops must be positive".into()));
        }
        if self.candidate_count_open_ended < 2 {
            return Err(VotError::Config("candidate_count_open_ended must be at least 2".into()));
        }
        if !(self.temperature.is_finite() && self.temperature >= 0.0) {
            return Err(VotError::Config(format!("temperature {}", self.temperature)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QaOption {
    pub letter: String,
    pub text: String,
}

impl QaOption {
    pub fn new(letter: impl Into<String>, text: impl Into<String>) -> Self {
        Self {
            letter: letter.into(),
            text: text.into(),
        }
    }

    /// `"A. Transportation"`
    pub fn label(&self) -> String {
        format!("{}. {}", self.letter, self.text)
    }
}

/// One video question, multi-choice or open-ended (no options).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QaInstance {
    pub id: String,
    pub video_id: String,
    pub question: String,
    #[serde(default)]
    pub options: Vec<QaOption>,
    #[serde(default)]
    pub gold: Option<String>,
    #[serde(default)]
    pub category: Option<String>,
    #[serde(default)]
    pub stsg: Option<Stsg>,
}

pub fn option_letter(i: usize) -> Option<String> {
    (i < 26).then(|| char::from(b'A' + i as u8).to_string())
}

impl QaInstance {
    pub fn is_multi_choice(&self) -> bool {
        !self.options.is_empty()
    }

    pub fn option(&self, letter: &str) -> Option<&QaOption> {
        self.options.iter().find(|o| o.letter == letter)
    }

    /// Question followed by its options: `"Why? A. x  B. y"`.
    pub fn formatted_question(&self) -> String {
        if self.options.is_empty() {
            return self.question.clone();
        }
        let options: Vec<String> = self.options.iter().map(QaOption::label).collect();
        format!("{} {}", self.question, options.join("  "))
    }

    /// Returns the path of the first offending field.
    pub fn check(&self) -> Result<(), (String, String)> {
        if self.id.is_empty() {
            return Err(("id".into(), "must not be empty".into()));
        }
        for (i, option) in self.options.iter().enumerate() {
            let expected = option_letter(i).ok_or_else(|| ("options".to_string(), "more than 26 options".to_string()))?;
            if option.letter != expected {
                return Err((
                    format!("options[{i}].letter"),
                    format!("expected {expected:?}, found {:?}", option.letter),
                ));
            }
        }
        if let Some(gold) = &self.gold {
            if self.option(gold).is_none() {
                return Err(("gold".into(), format!("{gold:?} is not one of the option letters")));
            }
        }
        if let Some(stsg) = &self.stsg {
            let report = crate::stsg::validate(stsg);
            if let Some(v) = report.first() {
                return Err(("stsg".into(), format!("{}: {}", v.code, v.detail)));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScoredOption {
    pub letter: String,
    pub text: String,
    pub score: u8,
    pub rationale: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VerdictSource {
    Structured,
    Heuristic,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Verdict {
    pub letter: String,
    pub consistent: bool,
    pub grounding_ok: bool,
    pub commonsense_ok: bool,
    pub source: VerdictSource,
    pub rationale: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GroundingSource {
    Oracle,
    Model,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroundedTarget {
    pub source: GroundingSource,
    /// Graph instances the target resolved to (oracle mode only).
    pub instance_ids: Vec<String>,
    pub expression: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepRecord {
    pub tag: StepTag,
    pub prompt: String,
    pub completion: String,
    pub model_id: String,
    pub latency_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RankingRound {
    pub excluded: Vec<String>,
    pub rank: Vec<String>,
    #[serde(rename = "final")]
    pub final_letter: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceError {
    pub step: StepTag,
    pub code: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReasoningTrace {
    pub instance_id: String,
    pub video_id: String,
    pub gold: Option<String>,
    pub category: Option<String>,
    pub prompt_version: String,
    pub grounding_mode: GroundingMode,
    pub steps: Vec<StepRecord>,
    pub targets: Vec<String>,
    pub tracklets: BTreeMap<String, GroundedTarget>,
    pub observation: String,
    pub options: Vec<QaOption>,
    pub scored: Vec<ScoredOption>,
    pub rank: Vec<String>,
    pub rounds: Vec<RankingRound>,
    pub verdicts: Vec<Verdict>,
    pub retries: u32,
    pub unverified: bool,
    #[serde(rename = "final")]
    pub final_answer: Option<String>,
    pub error: Option<TraceError>,
}

impl ReasoningTrace {
    fn new(q: &QaInstance, cfg: &VotConfig, prompts: &PromptSet) -> Self {
        Self {
            instance_id: q.id.clone(),
            video_id: q.video_id.clone(),
            gold: q.gold.clone(),
            category: q.category.clone(),
            prompt_version: prompts.version.clone(),
            grounding_mode: cfg.grounding_mode,
            steps: Vec::new(),
            targets: Vec::new(),
            tracklets: BTreeMap::new(),
            observation: String::new(),
            options: q.options.clone(),
            scored: Vec::new(),
            rank: Vec::new(),
            rounds: Vec::new(),
            verdicts: Vec::new(),
            retries: 0,
            unverified: false,
            final_answer: None,
            error: None,
        }
    }

    /// Correct iff the run finished with the gold letter.
    pub fn is_correct(&self) -> bool {
        self.error.is_none() && self.gold.is_some() && self.final_answer == self.gold
    }

    pub fn steps_with(&self, tag: StepTag) -> impl Iterator<Item = &StepRecord> {
        self.steps.iter().filter(move |s| s.tag == tag)
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("trace serialises")
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum VotError {
    #[error("no bracketed targets in the completion")]
    NoTargetsParsed,
    #[error("could not ground target {target:?}: {reason}")]
    GroundingFailed { target: String, reason: String },
    #[error("only {parsed} candidate answer(s) parsed")]
    TooFewCandidates { parsed: usize },
    #[error("no score found for option {letter}")]
    ScoreNotFound { letter: String },
    #[error("score {value} for option {letter} is outside 1..=10")]
    ScoreOutOfRange { letter: String, value: u64 },
    #[error("every option is excluded")]
    AllExcluded,
    #[error("verification verdict could not be parsed")]
    VerdictUnparseable,
    #[error("model returned an empty completion")]
    EmptyCompletion,
    #[error(transparent)]
    Backend(BackendError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error("invalid instance: {field}: {message}")]
    InvalidInstance { field: String, message: String },
    #[error("configuration: {0}")]
    Config(String),
}

impl From<BackendError> for VotError {
    fn from(e: BackendError) -> Self {
        match e {
            BackendError::EmptyCompletion => Self::EmptyCompletion,
            other => Self::Backend(other),
        }
    }
}

impl VotError {
    pub fn code(&self) -> &'static str {
        match self {
            Self::NoTargetsParsed => "NO_TARGETS_PARSED",
            Self::GroundingFailed { .. } => "GROUNDING_FAILED",
            Self::TooFewCandidates { .. } => "TOO_FEW_CANDIDATES",
            Self::ScoreNotFound { .. } => "SCORE_NOT_FOUND",
            Self::ScoreOutOfRange { .. } => "SCORE_OUT_OF_RANGE",
            Self::AllExcluded => "ALL_EXCLUDED",
            Self::VerdictUnparseable => "VERDICT_UNPARSEABLE",
            Self::EmptyCompletion => "EMPTY_COMPLETION",
            Self::Backend(e) => e.code(),
            Self::Prompt(_) => "PROMPT_ERROR",
            Self::InvalidInstance { .. } => "INVALID_INSTANCE",
            Self::Config(_) => "CONFIG_ERROR",
        }
    }
}

/// A failed run: the step it failed in, why, and the trace up to that point.
#[derive(Debug, Clone, PartialEq)]
pub struct RunError {
    pub step: StepTag,
    pub error: VotError,
    pub trace: Box<ReasoningTrace>,
}

impl fmt::Display for RunError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.step, self.error)
    }
}

impl std::error::Error for RunError {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        Some(&self.error)
    }
}

/// Conversation state of one reasoning session.
pub struct Conversation<'a> {
    session: Box<dyn ChatSession + 'a>,
    prompts: &'a PromptSet,
    temperature: f64,
    history: Vec<ChatMessage>,
    records: Vec<StepRecord>,
}

impl<'a> Conversation<'a> {
    pub fn new(backend: &'a dyn ChatBackend, prompts: &'a PromptSet, temperature: f64) -> Self {
        Self {
            session: backend.open_session(),
            prompts,
            temperature,
            history: Vec::new(),
            records: Vec::new(),
        }
    }

    pub fn prompts(&self) -> &PromptSet {
        self.prompts
    }

    pub fn records(&self) -> &[StepRecord] {
        &self.records
    }

    /// Sends `prompt` after the running history. With `keep`, the exchange
    /// joins the history seen by later steps.
    pub fn ask(&mut self, tag: StepTag, prompt: String, keep: bool) -> Result<String, VotError> {
        let mut messages = self.history.clone();
        messages.push(ChatMessage::user(prompt.clone()));
        let request = ChatRequest::new(tag, messages).with_temperature(self.temperature);
        let response = self.session.complete(&request)?;
        if response.content.trim().is_empty() {
            return Err(VotError::EmptyCompletion);
        }
        self.records.push(StepRecord {
            tag,
            prompt: prompt.clone(),
            completion: response.content.clone(),
            model_id: response.model_id,
            latency_ms: response.latency_ms,
        });
        if keep {
            self.history.push(ChatMessage::user(prompt));
            self.history.push(ChatMessage::assistant(response.content.clone()));
        }
        Ok(response.content)
    }
}

fn regex(cell: &'static OnceLock<Regex>, pattern: &str) -> &'static Regex {
    cell.get_or_init(|| Regex::new(pattern).expect("static regex"))
}

/// Bracketed phrases after "targets are" (or anywhere, when the marker is
/// missing), trimmed and de-duplicated.
pub fn parse_targets(completion: &str) -> Result<Vec<String>, VotError> {
    static MARKER: OnceLock<Regex> = OnceLock::new();
    static BRACKET: OnceLock<Regex> = OnceLock::new();
    let start = regex(&MARKER, r"(?i)targets\s+are")
        .find(completion)
        .map_or(0, |m| m.end());
    let mut out: Vec<String> = Vec::new();
    for cap in regex(&BRACKET, r"\[([^\[\]]*)\]").captures_iter(&completion[start..]) {
        let target = cap[1].trim();
        if !target.is_empty() && !out.iter().any(|t| t == target) {
            out.push(target.to_string());
        }
    }
    if out.is_empty() {
        return Err(VotError::NoTargetsParsed);
    }
    Ok(out)
}

/// `Answer <L>: <text>` blocks, in order, at most `limit` distinct ones.
pub fn parse_candidates(completion: &str, limit: usize) -> Vec<String> {
    static BLOCK: OnceLock<Regex> = OnceLock::new();
    let re = regex(&BLOCK, r"\bAnswer\s+([A-Z])\s*:");
    let starts: Vec<(usize, usize)> = re.find_iter(completion).map(|m| (m.start(), m.end())).collect();
    let mut out: Vec<String> = Vec::new();
    for (i, &(_, body_start)) in starts.iter().enumerate() {
        let body_end = starts.get(i + 1).map_or(completion.len(), |s| s.0);
        let text = completion[body_start..body_end].trim();
        if text.is_empty() || out.iter().any(|t| t.eq_ignore_ascii_case(text)) {
            continue;
        }
        out.push(text.to_string());
        if out.len() == limit {
            break;
        }
    }
    out
}

/// First standalone integer after the first "is" or "score"; text inside
/// square brackets (the quoted answer) is skipped.
pub fn parse_score(completion: &str) -> Result<u64, Option<u64>> {
    static MARKER: OnceLock<Regex> = OnceLock::new();
    static BRACKETS: OnceLock<Regex> = OnceLock::new();
    static INTEGER: OnceLock<Regex> = OnceLock::new();
    let masked = regex(&BRACKETS, r"\[[^\[\]]*\]").replace_all(completion, |c: &regex::Captures| " ".repeat(c[0].len()));
    let start = regex(&MARKER, r"(?i)\b(is|score)\b").find(&masked).map_or(0, |m| m.end());
    let bytes = masked.as_bytes();
    for m in regex(&INTEGER, r"\d+").find_iter(&masked[start..]) {
        let (s, e) = (start + m.start(), start + m.end());
        let before_ok = s == 0 || {
            let b = bytes[s - 1];
            !(b.is_ascii_alphanumeric() || b == b'_' || (b == b'.' && s >= 2 && bytes[s - 2].is_ascii_digit()))
        };
        let after_ok = e == bytes.len() || {
            let a = bytes[e];
            !(a.is_ascii_alphanumeric() || a == b'_' || (a == b'.' && bytes.get(e + 1).is_some_and(u8::is_ascii_digit)))
        };
        if !(before_ok && after_ok) {
            continue;
        }
        let value = m.as_str().parse::<u64>().unwrap_or(u64::MAX);
        return if (1..=10).contains(&value) { Ok(value) } else { Err(Some(value)) };
    }
    Err(None)
}

/// Reads the `GROUNDING:` / `COMMONSENSE:` tail, falling back to keywords.
pub fn parse_verdict(letter: &str, completion: &str) -> Result<Verdict, VotError> {
    static GROUNDING: OnceLock<Regex> = OnceLock::new();
    static COMMONSENSE: OnceLock<Regex> = OnceLock::new();
    let last = |re: &Regex| {
        re.captures_iter(completion)
            .last()
            .map(|c| c[1].eq_ignore_ascii_case("PASS"))
    };
    let grounding = last(regex(&GROUNDING, r"(?im)^[\s*`]*GROUNDING[\s*`]*:[\s*`]*(PASS|FAIL)\b"));
    let commonsense = last(regex(&COMMONSENSE, r"(?im)^[\s*`]*COMMONSENSE[\s*`]*:[\s*`]*(PASS|FAIL)\b"));
    let verdict = |grounding_ok: bool, commonsense_ok: bool, source| Verdict {
        letter: letter.to_string(),
        consistent: grounding_ok && commonsense_ok,
        grounding_ok,
        commonsense_ok,
        source,
        rationale: completion.to_string(),
    };
    if let (Some(g), Some(c)) = (grounding, commonsense) {
        return Ok(verdict(g, c, VerdictSource::Structured));
    }
    let lower = completion.to_lowercase();
    if lower.contains("incorrect") {
        Ok(verdict(true, false, VerdictSource::Heuristic))
    } else if lower.contains("is correct") {
        Ok(verdict(true, true, VerdictSource::Heuristic))
    } else if lower.contains("contradict") {
        Ok(verdict(true, false, VerdictSource::Heuristic))
    } else {
        Err(VotError::VerdictUnparseable)
    }
}

fn bracket_join(targets: &[String]) -> String {
    targets
        .iter()
        .map(|t| format!("[{t}]"))
        .collect::<Vec<_>>()
        .join(" and ")
}

pub fn step1_identify_targets(q: &QaInstance, conv: &mut Conversation) -> Result<Vec<String>, VotError> {
    let question = q.formatted_question();
    let name = if q.is_multi_choice() { "step1_multi_choice" } else { "step1_open_ended" };
    let prompt = conv
        .prompts()
        .render(name, &[("Question", &question), ("Video", &q.video_id)])?;
    let completion = conv.ask(StepTag::Step1, prompt, true)?;
    parse_targets(&completion)
}

pub fn step2_ground(
    q: &QaInstance,
    targets: &[String],
    conv: &mut Conversation,
    cfg: &VotConfig,
) -> Result<BTreeMap<String, GroundedTarget>, VotError> {
    let mut grounded = BTreeMap::new();
    let mut ungrounded = Vec::new();
    for target in targets {
        let local = match (&q.stsg, cfg.grounding_mode) {
            (Some(stsg), GroundingMode::Oracle) => {
                let ids = resolve_targets(target, stsg);
                let refs: Vec<&str> = ids.iter().map(String::as_str).collect();
                (!ids.is_empty())
                    .then(|| partial_stsg(stsg, &refs).ok())
                    .flatten()
                    .and_then(|partial| serialize(&partial).ok())
                    .map(|expression| GroundedTarget {
                        source: GroundingSource::Oracle,
                        instance_ids: ids,
                        expression,
                    })
            }
            _ => None,
        };
        match local {
            Some(g) => {
                grounded.insert(target.clone(), g);
            }
            None => ungrounded.push(target.clone()),
        }
    }
    if ungrounded.is_empty() {
        return Ok(grounded);
    }

    let target_list = bracket_join(&ungrounded);
    let context = q.stsg.as_ref().and_then(|s| serialize(s).ok()).filter(|s| !s.is_empty());
    let prompt = match &context {
        Some(stsg) => conv.prompts().render("step2_with_stsg", &[("Target", &target_list), ("STSG", stsg)])?,
        None => conv.prompts().render("step2", &[("Target", &target_list)])?,
    };
    let completion = conv.ask(StepTag::Step2, prompt, true)?;
    let expression = parse(&completion)
        .map_err(|e| e.to_string())
        .and_then(|stsg| serialize(&stsg).map_err(|e| e.to_string()))
        .map_err(|reason| VotError::GroundingFailed {
            target: ungrounded[0].clone(),
            reason,
        })?;
    for target in ungrounded {
        grounded.insert(
            target,
            GroundedTarget {
                source: GroundingSource::Model,
                instance_ids: Vec::new(),
                expression: expression.clone(),
            },
        );
    }
    Ok(grounded)
}

/// Distinct tracklet expressions in target order.
fn tracklet_expressions(targets: &[String], tracklets: &BTreeMap<String, GroundedTarget>) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    for t in targets {
        if let Some(g) = tracklets.get(t) {
            if !out.contains(&g.expression) {
                out.push(g.expression.clone());
            }
        }
    }
    out
}

/// Serialised neighbour scenes of every oracle-resolved instance.
fn neighbor_expressions(q: &QaInstance, tracklets: &BTreeMap<String, GroundedTarget>, hops: usize) -> Vec<String> {
    let Some(stsg) = &q.stsg else {
        return Vec::new();
    };
    let ids: BTreeSet<&str> = tracklets
        .values()
        .filter(|g| g.source == GroundingSource::Oracle)
        .flat_map(|g| g.instance_ids.iter().map(String::as_str))
        .collect();
    let mut out = Vec::new();
    for id in ids {
        let frames: Vec<_> = stsg
            .occurrences(id)
            .into_iter()
            .filter_map(|k| neighbor_scene(stsg, id, k, hops).ok())
            .map(|scene| scene.subgraph)
            .collect();
        let Ok(scene) = link_coreferences(frames) else {
            continue;
        };
        if let Ok(text) = serialize(&scene) {
            out.push(format!("Neighbor scenes of {id} within {hops} hops:\n{text}"));
        }
    }
    out
}

pub fn step3_analyze(
    q: &QaInstance,
    targets: &[String],
    tracklets: &BTreeMap<String, GroundedTarget>,
    conv: &mut Conversation,
    cfg: &VotConfig,
) -> Result<String, VotError> {
    let mut blocks = tracklet_expressions(targets, tracklets);
    if cfg.grounding_mode == GroundingMode::Oracle {
        blocks.extend(neighbor_expressions(q, tracklets, cfg.hops));
    }
    let grounded: Vec<String> = targets.iter().filter(|t| tracklets.contains_key(*t)).cloned().collect();
    let prompt = conv
        .prompts()
        .render("step3", &[("Target", &bracket_join(&grounded)), ("STSG", &blocks.join("\n"))])?;
    conv.ask(StepTag::Step3, prompt, true)
}

pub fn step4_pre_openended(
    q: &QaInstance,
    observation: &str,
    conv: &mut Conversation,
    cfg: &VotConfig,
) -> Result<QaInstance, VotError> {
    let count = cfg.candidate_count_open_ended.to_string();
    let prompt = conv.prompts().render(
        "step4_pre",
        &[
            ("Question", &q.question),
            ("Observation and Implication", observation),
            ("Count", &count),
        ],
    )?;
    let completion = conv.ask(StepTag::Step4Pre, prompt, true)?;
    let candidates = parse_candidates(&completion, cfg.candidate_count_open_ended.min(26));
    if candidates.len() < 2 {
        return Err(VotError::TooFewCandidates {
            parsed: candidates.len(),
        });
    }
    let mut out = q.clone();
    out.options = candidates
        .into_iter()
        .enumerate()
        .map(|(i, text)| QaOption::new(option_letter(i).expect("at most 26"), text))
        .collect();
    Ok(out)
}

pub fn step4_score(
    q: &QaInstance,
    option: &QaOption,
    observation: &str,
    conv: &mut Conversation,
) -> Result<ScoredOption, VotError> {
    let question = q.formatted_question();
    let answer = option.label();
    let prompt = conv.prompts().render(
        "step4_score",
        &[
            ("Letter", &option.letter),
            ("Question", &question),
            ("Answer", &answer),
            ("Observation and Implication", observation),
        ],
    )?;
    let completion = conv.ask(StepTag::Step4Score, prompt, false)?;
    match parse_score(&completion) {
        Ok(score) => Ok(ScoredOption {
            letter: option.letter.clone(),
            text: option.text.clone(),
            score: score as u8,
            rationale: completion,
        }),
        Err(None) => Err(VotError::ScoreNotFound {
            letter: option.letter.clone(),
        }),
        Err(Some(value)) => Err(VotError::ScoreOutOfRange {
            letter: option.letter.clone(),
            value,
        }),
    }
}

/// Descending score, ties in letter order; excluded letters are dropped.
pub fn step4_rank(scored: &[ScoredOption], excluded: &BTreeSet<String>) -> Result<(Vec<String>, String), VotError> {
    let mut remaining: Vec<&ScoredOption> = scored.iter().filter(|s| !excluded.contains(&s.letter)).collect();
    remaining.sort_by(|a, b| b.score.cmp(&a.score).then_with(|| a.letter.cmp(&b.letter)));
    let rank: Vec<String> = remaining.iter().map(|s| s.letter.clone()).collect();
    let first = rank.first().cloned().ok_or(VotError::AllExcluded)?;
    Ok((rank, first))
}

fn send_rank_prompt(q: &QaInstance, scored: &[ScoredOption], conv: &mut Conversation) -> Result<(), VotError> {
    let scores: Vec<String> = scored
        .iter()
        .map(|s| {
            let label = q.option(&s.letter).map_or_else(|| s.letter.clone(), QaOption::label);
            format!("the rationale score of the answer [{label}] is {}", s.score)
        })
        .collect();
    let prompt = conv.prompts().render("step4_rank", &[("Scores", &scores.join(", "))])?;
    conv.ask(StepTag::Step4Rank, prompt, true)?;
    Ok(())
}

pub fn step5_verify(
    q: &QaInstance,
    final_letter: &str,
    observation: &str,
    grounding: &[String],
    conv: &mut Conversation,
) -> Result<Verdict, VotError> {
    let question = q.formatted_question();
    let answer = q
        .option(final_letter)
        .map_or_else(|| final_letter.to_string(), QaOption::label);
    let stsg = grounding.join("\n");
    let prompt = conv.prompts().render(
        "step5",
        &[
            ("Video", &q.video_id),
            ("STSG", &stsg),
            ("Question", &question),
            ("Answer", &answer),
            ("Observations", observation),
        ],
    )?;
    let completion = conv.ask(StepTag::Step5, prompt, true)?;
    parse_verdict(final_letter, &completion)
}

/// Runs all five steps with the bundled prompts.
pub fn run_vot(q: &QaInstance, backend: &dyn ChatBackend, cfg: &VotConfig) -> Result<(String, ReasoningTrace), RunError> {
    run_vot_with(q, backend, cfg, PromptSet::builtin())
}

pub fn run_vot_with(
    q: &QaInstance,
    backend: &dyn ChatBackend,
    cfg: &VotConfig,
    prompts: &PromptSet,
) -> Result<(String, ReasoningTrace), RunError> {
    let mut trace = ReasoningTrace::new(q, cfg, prompts);
    let mut conv = Conversation::new(backend, prompts, cfg.temperature);
    let outcome = drive(q, cfg, &mut conv, &mut trace);
    trace.steps = conv.records.clone();
    match outcome {
        Ok(answer) => Ok((answer, trace)),
        Err((step, error)) => {
            trace.error = Some(TraceError {
                step,
                code: error.code().to_string(),
                message: error.to_string(),
            });
            Err(RunError {
                step,
                error,
                trace: Box::new(trace),
            })
        }
    }
}

fn drive(
    q: &QaInstance,
    cfg: &VotConfig,
    conv: &mut Conversation,
    trace: &mut ReasoningTrace,
) -> Result<String, (StepTag, VotError)> {
    cfg.check().map_err(|e| (StepTag::Step1, e))?;
    q.check()
        .map_err(|(field, message)| (StepTag::Step1, VotError::InvalidInstance { field, message }))?;

    let at = |tag: StepTag| move |e: VotError| (tag, e);

    trace.targets = step1_identify_targets(q, conv).map_err(at(StepTag::Step1))?;
    trace.tracklets = step2_ground(q, &trace.targets, conv, cfg).map_err(at(StepTag::Step2))?;
    trace.observation = step3_analyze(q, &trace.targets, &trace.tracklets, conv, cfg).map_err(at(StepTag::Step3))?;

    let owned;
    let mc: &QaInstance = if q.is_multi_choice() {
        q
    } else {
        owned = step4_pre_openended(q, &trace.observation, conv, cfg).map_err(at(StepTag::Step4Pre))?;
        &owned
    };
    trace.options = mc.options.clone();

    for option in &mc.options {
        let scored = step4_score(mc, option, &trace.observation, conv).map_err(at(StepTag::Step4Score))?;
        trace.scored.push(scored);
    }

    let grounding = tracklet_expressions(&trace.targets, &trace.tracklets);
    let mut excluded = BTreeSet::new();
    loop {
        let (rank, top) = step4_rank(&trace.scored, &excluded).map_err(at(StepTag::Step4Rank))?;
        trace.rounds.push(RankingRound {
            excluded: excluded.iter().cloned().collect(),
            rank: rank.clone(),
            final_letter: top.clone(),
        });
        trace.rank = rank;
        if cfg.send_rank_prompt {
            send_rank_prompt(mc, &trace.scored, conv).map_err(at(StepTag::Step4Rank))?;
        }
        trace.final_answer = Some(top.clone());

        let verdict = step5_verify(mc, &top, &trace.observation, &grounding, conv).map_err(at(StepTag::Step5))?;
        let consistent = verdict.consistent;
        trace.verdicts.push(verdict);
        if consistent {
            return Ok(top);
        }
        let alternatives_left = trace.scored.len() > excluded.len() + 1;
        if trace.retries >= cfg.max_retries || !alternatives_left {
            trace.unverified = true;
            return Ok(top);
        }
        excluded.insert(top);
        trace.retries += 1;
    }
}
