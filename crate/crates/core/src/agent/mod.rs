//! The Thought/Act/Observe agent: step grammar, prompt assembly, few-shot
//! selection, tool dispatch and pluggable model backends.

mod backend;
mod fewshot;
mod prompt;
mod session;
mod step;

use std::collections::BTreeSet;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use backend::{
    backend_by_name, last_observation, live_observations, BackendError, BROKEN_PROGRAM, DEMO_QUESTION, ConstBackend, DemoBackend, GoldBackend, ModelBackend,
    ModelSession, RemoteBackend, ScriptedBackend, SessionKey, BACKEND_NAMES, LLM_KEY_ENV, LLM_MODEL_ENV, LLM_URL_ENV,
};
pub use fewshot::{
    default_pool, kmeans, read_pool, select_few_shots, select_indices, Embedder, FewShotExample, HashEmbedder,
    KMeans, DEFAULT_FEW_SHOTS_JSONL, EMBED_DIM,
};
pub use prompt::{build_prompt, render_steps, Prompt, DEFAULT_SCHEMA_CARD, INSTRUCTIONS, STOP_SEQUENCE};
pub use session::{dispatch, run_session, run_session_with, Agent, SessionOutcome, Toolbox};
pub use step::{escape_request, format_act, normalize_completion, parse_step, serialize_step, Action, ParsedStep, Tool};

#[derive(Debug, Error)]
pub enum AgentError {
    #[error("ProtocolError: {0}")]
    Protocol(String),
    #[error("InsufficientPool: {pool} examples for {k} clusters")]
    InsufficientPool { pool: usize, k: usize },
    #[error("invalid trace: {0}")]
    InvalidTrace(String),
    #[error("invalid config: {0}")]
    Config(String),
    #[error("line {line}: {source}")]
    Json {
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepKind {
    Thought,
    Act,
    Observe,
    Finish,
    ProtocolError,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceStep {
    pub seq: u32,
    pub kind: StepKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tool: Option<Tool>,
    pub content: String,
    pub ok: bool,
}

pub type Trace = Vec<TraceStep>;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct AgentConfig {
    /// Model turns before the session is cut off without an answer.
    pub max_steps: u32,
    pub few_shot_k: usize,
    pub tools_enabled: BTreeSet<Tool>,
    /// Corrective retries per turn after a malformed completion.
    pub retry_on_protocol_error: u32,
    /// Results injected per search act.
    pub search_k: usize,
    /// Seed for few-shot clustering.
    pub seed: u64,
}

impl Default for AgentConfig {
    fn default() -> Self {
        AgentConfig {
            max_steps: 8,
            few_shot_k: 20,
            tools_enabled: Tool::ALL.into_iter().collect(),
            retry_on_protocol_error: 1,
            search_k: crate::retrieval::DEFAULT_K,
            seed: 0,
        }
    }
}

impl AgentConfig {
    pub fn validate(&self) -> Result<(), AgentError> {
        if self.max_steps == 0 {
            return Err(AgentError::Config("max_steps must be at least 1".into()));
        }
        if self.search_k == 0 {
            return Err(AgentError::Config("search_k must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct TraceStats {
    pub used_code: bool,
    pub had_error: bool,
    pub recovered: bool,
    pub finished: bool,
}

fn is_analyze(s: &TraceStep, kind: StepKind) -> bool {
    s.kind == kind && s.tool == Some(Tool::Analyze)
}

pub fn trace_stats(trace: &[TraceStep]) -> TraceStats {
    let used_code = trace.iter().any(|s| is_analyze(s, StepKind::Act));
    let first_error = trace.iter().position(|s| is_analyze(s, StepKind::Observe) && !s.ok);
    let finished = trace.iter().any(|s| s.kind == StepKind::Finish);
    let recovered = first_error.is_some_and(|i| trace[i + 1..].iter().any(|s| is_analyze(s, StepKind::Observe) && s.ok));
    TraceStats {
        used_code,
        had_error: first_error.is_some(),
        recovered: recovered && finished,
        finished,
    }
}

/// Check ordering rules: dense `seq` from 0, every observe directly after an
/// act with the same tool, every act answered, and at most one terminal
/// finish or protocol error in last position.
pub fn validate_trace(trace: &[TraceStep]) -> Result<(), AgentError> {
    let bad = |i: usize, msg: &str| Err(AgentError::InvalidTrace(format!("step {i}: {msg}")));
    for (i, s) in trace.iter().enumerate() {
        if s.seq as usize != i {
            return bad(i, "seq is not dense from 0");
        }
        let prev = i.checked_sub(1).map(|p| &trace[p]);
        match s.kind {
            StepKind::Act if s.tool.is_none() => return bad(i, "act without a tool"),
            StepKind::Observe => match prev {
                Some(p) if p.kind == StepKind::Act && p.tool == s.tool && s.tool.is_some() => {}
                _ => return bad(i, "observe does not follow an act with the same tool"),
            },
            StepKind::Finish | StepKind::ProtocolError if i + 1 != trace.len() => {
                return bad(i, "terminal step is not last");
            }
            _ => {}
        }
        if s.kind != StepKind::Act && s.kind != StepKind::Observe && s.tool.is_some() {
            return bad(i, "only acts and observes name a tool");
        }
        if s.kind == StepKind::Act && trace.get(i + 1).is_some_and(|n| n.kind != StepKind::Observe) {
            return bad(i, "act is not followed by its observation");
        }
    }
    Ok(())
}

pub fn write_trace<W: Write>(trace: &[TraceStep], mut w: W) -> std::io::Result<()> {
    for step in trace {
        serde_json::to_writer(&mut w, step)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_trace<R: BufRead>(r: R) -> Result<Trace, AgentError> {
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|source| AgentError::Json { line: i + 1, source })?);
    }
    Ok(out)
}

/// The final answer of a trace, if it finished.
pub fn final_answer(trace: &[TraceStep]) -> Option<&str> {
    trace.last().filter(|s| s.kind == StepKind::Finish).map(|s| s.content.as_str())
}
