//! The agent loop: prompt, complete, parse, dispatch, observe.

use super::backend::{ModelBackend, SessionKey};
use super::fewshot::{default_pool, select_few_shots, FewShotExample, HashEmbedder};
use super::prompt::{build_prompt, DEFAULT_SCHEMA_CARD};
use super::step::{normalize_completion, parse_step, Action, Tool};
use super::{AgentConfig, AgentError, StepKind, Trace, TraceStep};
use crate::datamodel::UserDataset;
use crate::dsl::{run_to_observation, ERROR_PREFIX};
use crate::retrieval::{format_search_observation, SearchTool};

/// What the tools act on for one session.
#[derive(Clone, Copy)]
pub struct Toolbox<'a> {
    pub dataset: &'a UserDataset,
    pub search: Option<&'a dyn SearchTool>,
}

/// Agent configuration plus the prompt material shared by every session.
#[derive(Debug, Clone)]
pub struct Agent {
    pub config: AgentConfig,
    pub schema_card: String,
    pub few_shots: Vec<FewShotExample>,
}

impl Agent {
    /// Few-shots chosen from the shipped pool by clustering, seeded by
    /// `config.seed`.
    pub fn new(config: AgentConfig) -> Result<Agent, AgentError> {
        let few_shots = select_few_shots(&default_pool(), config.few_shot_k, &HashEmbedder, config.seed)?;
        Agent::with_few_shots(config, few_shots)
    }

    pub fn with_few_shots(config: AgentConfig, few_shots: Vec<FewShotExample>) -> Result<Agent, AgentError> {
        config.validate()?;
        Ok(Agent {
            config,
            schema_card: DEFAULT_SCHEMA_CARD.to_string(),
            few_shots,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SessionOutcome {
    pub trace: Trace,
    pub final_answer: Option<String>,
    /// Corrective re-prompts issued after malformed completions.
    pub protocol_retries: u32,
    pub model_calls: u32,
}

/// Run one tool call. Returns the observation text and whether it
/// succeeded.
pub fn dispatch(tool: Tool, payload: &str, tools: &Toolbox<'_>, config: &AgentConfig) -> (String, bool) {
    if !config.tools_enabled.contains(&tool) {
        return (format!("{ERROR_PREFIX}ToolDisabled: {} is not enabled for this session", tool.as_str()), false);
    }
    match tool {
        Tool::Analyze => run_to_observation(payload, tools.dataset),
        Tool::Search => match tools.search {
            None => (format!("{ERROR_PREFIX}ToolDisabled: no search index is configured"), false),
            Some(index) => match index.search(payload, config.search_k) {
                Ok(results) => (format_search_observation(&results), true),
                Err(e) => (format!("{ERROR_PREFIX}SearchError: {e}"), false),
            },
        },
    }
}

fn corrective(error: &AgentError) -> String {
    format!(
        "\n{error}. Reply with an optional `Thought:` line followed by exactly one \
         `Act: Analyze(```program```)`, `Act: Search(request='...')` or `Finish: answer` line.\nThought:"
    )
}

struct Recorder<'f> {
    trace: Trace,
    on_step: &'f mut dyn FnMut(&TraceStep),
}

impl Recorder<'_> {
    fn push(&mut self, kind: StepKind, tool: Option<Tool>, content: String, ok: bool) {
        let step = TraceStep {
            seq: self.trace.len() as u32,
            kind,
            tool,
            content,
            ok,
        };
        (self.on_step)(&step);
        self.trace.push(step);
    }
}

pub fn run_session(
    agent: &Agent,
    question: &str,
    tools: &Toolbox<'_>,
    backend: &dyn ModelBackend,
    key: &SessionKey,
) -> SessionOutcome {
    run_session_with(agent, question, tools, backend, key, &mut |_| {})
}

/// [`run_session`], reporting each step as soon as it is recorded.
pub fn run_session_with(
    agent: &Agent,
    question: &str,
    tools: &Toolbox<'_>,
    backend: &dyn ModelBackend,
    key: &SessionKey,
    on_step: &mut dyn FnMut(&TraceStep),
) -> SessionOutcome {
    let config = &agent.config;
    let mut rec = Recorder {
        trace: Vec::new(),
        on_step,
    };
    let mut retries = 0u32;
    let mut calls = 0u32;
    let done = |rec: Recorder<'_>, answer: Option<String>, retries, calls| SessionOutcome {
        trace: rec.trace,
        final_answer: answer,
        protocol_retries: retries,
        model_calls: calls,
    };

    let mut session = match backend.open(key) {
        Ok(s) => s,
        Err(e) => {
            rec.push(StepKind::ProtocolError, None, e.to_string(), false);
            return done(rec, None, retries, calls);
        }
    };

    for _turn in 0..config.max_steps {
        let prompt = build_prompt(&agent.schema_card, &agent.few_shots, &rec.trace, question);
        let mut text = prompt.text.clone();
        let mut turn_retries = 0;
        let parsed = loop {
            calls += 1;
            let raw = match session.complete(&text, &prompt.stop) {
                Ok(raw) => raw,
                Err(e) => {
                    rec.push(StepKind::ProtocolError, None, e.to_string(), false);
                    return done(rec, None, retries, calls);
                }
            };
            let normalized = normalize_completion(&raw);
            match parse_step(&normalized) {
                Ok(step) => break step,
                Err(e) if turn_retries < config.retry_on_protocol_error => {
                    turn_retries += 1;
                    retries += 1;
                    tracing::debug!(session = %key.id, error = %e, "malformed completion, re-prompting");
                    text = format!("{}{}{}", prompt.text, raw.trim_end(), corrective(&e));
                }
                Err(e) => {
                    rec.push(StepKind::ProtocolError, None, e.to_string(), false);
                    return done(rec, None, retries, calls);
                }
            }
        };
        if let Some(thought) = parsed.thought {
            rec.push(StepKind::Thought, None, thought, true);
        }
        match parsed.action {
            Action::Finish(answer) => {
                rec.push(StepKind::Finish, None, answer.clone(), true);
                return done(rec, Some(answer), retries, calls);
            }
            Action::Act { tool, payload } => {
                let (observation, ok) = dispatch(tool, &payload, tools, config);
                rec.push(StepKind::Act, Some(tool), payload, true);
                rec.push(StepKind::Observe, Some(tool), observation, ok);
            }
        }
    }
    done(rec, None, retries, calls)
}
