//! Model backends. A backend opens one session per question; a session
//! answers prompts in order.

use std::collections::HashMap;
use std::io::BufRead;
use std::sync::Arc;

use serde::Deserialize;
use thiserror::Error;

use crate::dsl::{ERROR_PREFIX, NO_DATA};

pub const LLM_URL_ENV: &str = "INSIGHT_LLM_URL";
pub const LLM_KEY_ENV: &str = "INSIGHT_LLM_KEY";
/// Optional model name forwarded to OpenAI-style completion endpoints.
pub const LLM_MODEL_ENV: &str = "INSIGHT_LLM_MODEL";

/// Names accepted by [`backend_by_name`].
pub const BACKEND_NAMES: [&str; 6] = ["gold", "gold-recover", "demo", "remote", "const:<text>", "scripted:<path>"];

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum BackendError {
    #[error("BackendError: {0}")]
    Transport(String),
    #[error("BackendError: script for session '{session}' has no output for call {step}")]
    Exhausted { session: String, step: usize },
    #[error("BackendError: {0}")]
    Config(String),
    #[error("unknown backend '{0}'")]
    Unknown(String),
}

/// What a backend may know about the session it serves. Oracle backends use
/// the gold program; real models ignore it.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SessionKey {
    pub id: String,
    pub gold_program: Option<String>,
}

impl SessionKey {
    pub fn new(id: impl Into<String>) -> Self {
        SessionKey {
            id: id.into(),
            gold_program: None,
        }
    }
}

pub trait ModelSession {
    fn complete(&mut self, prompt: &str, stop: &[String]) -> Result<String, BackendError>;
}

pub trait ModelBackend: Send + Sync {
    fn name(&self) -> &str;
    fn open(&self, key: &SessionKey) -> Result<Box<dyn ModelSession + '_>, BackendError>;
}

/// The part of a prompt after its final `Question:` line.
fn live_segment(prompt: &str) -> &str {
    match prompt.rfind("\nQuestion: ") {
        Some(i) => &prompt[i + 1..],
        None => prompt,
    }
}

const LABELS: [&str; 3] = ["\nThought:", "\nAct:", "\nFinish:"];

/// Every observation of the live session, oldest first.
pub fn live_observations(prompt: &str) -> Vec<&str> {
    let live = live_segment(prompt);
    let mut out = Vec::new();
    let mut rest = live;
    while let Some(i) = rest.find("\nObserve: ") {
        let after = &rest[i + "\nObserve: ".len()..];
        let end = LABELS.iter().filter_map(|l| after.find(l)).min().unwrap_or(after.len());
        out.push(after[..end].trim_end());
        rest = &after[end..];
    }
    out
}

/// The newest observation in the live part of the prompt.
pub fn last_observation(prompt: &str) -> Option<&str> {
    live_observations(prompt).pop()
}

/// Prompts that end in `Finish:` ask only for the answer text.
fn wants_answer_only(prompt: &str) -> bool {
    prompt.trim_end().ends_with("Finish:")
}

fn truncate_at_stop(mut text: String, stop: &[String]) -> String {
    if let Some(i) = stop.iter().filter_map(|s| text.find(s.as_str())).min() {
        text.truncate(i);
    }
    text
}

/// Replays canned outputs: the i-th call of a session gets the i-th output
/// scripted for that session id, falling back to the script without a
/// session name.
#[derive(Debug, Clone, Default)]
pub struct ScriptedBackend {
    name: String,
    scripts: HashMap<String, Vec<String>>,
    fallback: Option<Vec<String>>,
}

#[derive(Deserialize)]
struct ScriptLine {
    #[serde(default)]
    session: Option<String>,
    step: usize,
    output: String,
}

impl ScriptedBackend {
    /// The same outputs for every session.
    pub fn single(outputs: Vec<String>) -> Self {
        ScriptedBackend {
            name: "scripted".into(),
            scripts: HashMap::new(),
            fallback: Some(outputs),
        }
    }

    /// One output repeated forever.
    pub fn repeat(output: &str, times: usize) -> Self {
        Self::single(vec![output.to_string(); times])
    }

    pub fn with_session(mut self, session: &str, outputs: Vec<String>) -> Self {
        self.scripts.insert(session.to_string(), outputs);
        self
    }

    /// JSONL lines `{"session"?, "step", "output"}`; steps must be dense
    /// from 0 within each session.
    pub fn from_jsonl<R: BufRead>(r: R) -> Result<Self, BackendError> {
        let mut by_session: HashMap<Option<String>, Vec<(usize, String)>> = HashMap::new();
        for (i, line) in r.lines().enumerate() {
            let line = line.map_err(|e| BackendError::Config(e.to_string()))?;
            if line.trim().is_empty() {
                continue;
            }
            let l: ScriptLine =
                serde_json::from_str(&line).map_err(|e| BackendError::Config(format!("script line {}: {e}", i + 1)))?;
            by_session.entry(l.session).or_default().push((l.step, l.output));
        }
        let mut backend = ScriptedBackend {
            name: "scripted".into(),
            ..Default::default()
        };
        for (session, mut steps) in by_session {
            steps.sort_by_key(|s| s.0);
            if steps.iter().enumerate().any(|(i, s)| s.0 != i) {
                let who = session.as_deref().unwrap_or("<default>");
                return Err(BackendError::Config(format!("script for session '{who}' has gaps in its steps")));
            }
            let outputs = steps.into_iter().map(|s| s.1).collect();
            match session {
                Some(s) => {
                    backend.scripts.insert(s, outputs);
                }
                None => backend.fallback = Some(outputs),
            }
        }
        Ok(backend)
    }

    pub fn named(mut self, name: &str) -> Self {
        self.name = name.to_string();
        self
    }
}

struct ScriptedSession<'a> {
    id: String,
    outputs: &'a [String],
    next: usize,
}

impl ModelSession for ScriptedSession<'_> {
    fn complete(&mut self, _prompt: &str, _stop: &[String]) -> Result<String, BackendError> {
        let out = self.outputs.get(self.next).cloned().ok_or_else(|| BackendError::Exhausted {
            session: self.id.clone(),
            step: self.next,
        })?;
        self.next += 1;
        Ok(out)
    }
}

impl ModelBackend for ScriptedBackend {
    fn name(&self) -> &str {
        &self.name
    }

    fn open(&self, key: &SessionKey) -> Result<Box<dyn ModelSession + '_>, BackendError> {
        let outputs = self
            .scripts
            .get(&key.id)
            .or(self.fallback.as_ref())
            .ok_or_else(|| BackendError::Config(format!("no script for session '{}'", key.id)))?;
        Ok(Box::new(ScriptedSession {
            id: key.id.clone(),
            outputs,
            next: 0,
        }))
    }
}

/// Oracle backend: runs the session's gold program, then reports the
/// observation as the answer. With `recover`, it first runs a program that
/// fails (an unknown column) and only then the gold program.
#[derive(Debug, Clone, Copy, Default)]
pub struct GoldBackend {
    pub recover: bool,
}

/// The failing first attempt of the recovering oracle.
pub const BROKEN_PROGRAM: &str = r#"daily["breathing_rate"].mean()"#;

fn answer_from(obs: Option<&str>) -> String {
    match obs {
        Some(o) if o.starts_with(ERROR_PREFIX) => "I could not compute an answer.".to_string(),
        Some(o) if o == NO_DATA => format!("The answer is {NO_DATA}."),
        Some(o) => format!("The answer is {o}."),
        None => "I could not compute an answer.".to_string(),
    }
}

struct GoldSession {
    program: String,
    recover: bool,
}

impl ModelSession for GoldSession {
    fn complete(&mut self, prompt: &str, _stop: &[String]) -> Result<String, BackendError> {
        let obs = last_observation(prompt);
        if wants_answer_only(prompt) {
            return Ok(answer_from(obs));
        }
        let act = |p: &str| format!("Thought: I will compute this from the data.\nAct: Analyze(```{p}```)");
        Ok(match obs {
            None if self.recover => act(BROKEN_PROGRAM),
            None => act(&self.program),
            Some(o) if o.starts_with(ERROR_PREFIX) && self.recover => {
                format!("Thought: That column does not exist; I will use the right one.\nAct: Analyze(```{}```)", self.program)
            }
            Some(o) => format!("Thought: I have the result.\nFinish: {}", answer_from(Some(o))),
        })
    }
}

impl ModelBackend for GoldBackend {
    fn name(&self) -> &str {
        if self.recover {
            "gold-recover"
        } else {
            "gold"
        }
    }

    fn open(&self, key: &SessionKey) -> Result<Box<dyn ModelSession + '_>, BackendError> {
        let program = key
            .gold_program
            .clone()
            .ok_or_else(|| BackendError::Config(format!("{} backend needs a gold program", self.name())))?;
        Ok(Box::new(GoldSession {
            program,
            recover: self.recover,
        }))
    }
}

/// Always answers with the same text.
#[derive(Debug, Clone)]
pub struct ConstBackend {
    pub text: String,
}

struct ConstSession(String);

impl ModelSession for ConstSession {
    fn complete(&mut self, _prompt: &str, _stop: &[String]) -> Result<String, BackendError> {
        Ok(self.0.clone())
    }
}

impl ModelBackend for ConstBackend {
    fn name(&self) -> &str {
        "const"
    }

    fn open(&self, _key: &SessionKey) -> Result<Box<dyn ModelSession + '_>, BackendError> {
        Ok(Box::new(ConstSession(self.text.clone())))
    }
}

/// A fixed demonstration for "Should I incorporate more cardio with my
/// current physique?": BMI and active zone minutes, the bike sessions, a
/// search, then an answer quoting the computed BMI.
#[derive(Debug, Clone, Copy, Default)]
pub struct DemoBackend;

pub const DEMO_QUESTION: &str = "Should I incorporate more cardio with my current physique?";

const DEMO_BMI_PROGRAM: &str = r#"(context["weight_kg"] / (context["height_cm"] / 100) / (context["height_cm"] / 100), daily["active_zone_minutes"].mean())"#;
const DEMO_BIKE_PROGRAM: &str = r#"activities.where(activityName == "Outdoor Bike").count()"#;
const DEMO_SEARCH: &str = "Should I incorporate more cardio if I already bike?";

/// The numbers inside a tuple observation such as `(27.12031, 86.99066)`.
fn tuple_numbers(obs: &str) -> Vec<Option<f64>> {
    obs.trim()
        .trim_start_matches('(')
        .trim_end_matches(')')
        .split(',')
        .map(|p| p.trim().parse().ok())
        .collect()
}

struct DemoSession;

impl ModelSession for DemoSession {
    fn complete(&mut self, prompt: &str, _stop: &[String]) -> Result<String, BackendError> {
        let obs = live_observations(prompt);
        let first = obs.first().map(|o| tuple_numbers(o)).unwrap_or_default();
        let bmi = first.first().copied().flatten();
        let azm = first.get(1).copied().flatten();
        Ok(match obs.len() {
            0 => format!(
                "Thought: I need the user's current physique and cardio levels.\nAct: Analyze(```{DEMO_BMI_PROGRAM}```)"
            ),
            1 => {
                let bmi_text = bmi.map_or("unknown".to_string(), |b| format!("{b:.2}"));
                let azm_text = azm.map_or("unknown".to_string(), |a| format!("{a:.2}"));
                format!(
                    "Thought: The user's BMI is {bmi_text} and their average active zone minutes is {azm_text}. \
                     I need to know how much of their cardio is cycling.\nAct: Analyze(```{DEMO_BIKE_PROGRAM}```)"
                )
            }
            2 => format!(
                "Thought: Now I'll use the Search tool to find out whether they should add more cardio.\n\
                 Act: Search(request='{DEMO_SEARCH}')"
            ),
            _ => match bmi {
                Some(b) => format!(
                    "Thought: I can answer now.\nFinish: Based on your BMI of {b:.2} and your regular outdoor rides, \
                     you already get a good amount of cardio. To raise the intensity, add hill climbs or sprint \
                     intervals to your rides, or mix in another cardio activity such as running or swimming."
                ),
                None => "Thought: I can answer without the BMI.\nFinish: Your profile has no height, so I could not \
                         work out your BMI. Regular cycling already gives you a good cardio base; adding intervals or \
                         another activity would raise the intensity."
                    .to_string(),
            },
        })
    }
}

impl ModelBackend for DemoBackend {
    fn name(&self) -> &str {
        "demo"
    }

    fn open(&self, _key: &SessionKey) -> Result<Box<dyn ModelSession + '_>, BackendError> {
        Ok(Box::new(DemoSession))
    }
}

/// HTTP completion client: `POST {prompt, stop, model?, max_tokens}` with an
/// optional bearer token. The reply's text is read from `text`,
/// `choices[0].text` or `choices[0].message.content`.
#[derive(Debug, Clone)]
pub struct RemoteBackend {
    url: reqwest::Url,
    key: Option<String>,
    model: Option<String>,
    client: reqwest::blocking::Client,
}

pub const REMOTE_MAX_TOKENS: u32 = 512;

impl RemoteBackend {
    pub fn new(url: &str, key: Option<String>, model: Option<String>) -> Result<Self, BackendError> {
        let url = reqwest::Url::parse(url).map_err(|e| BackendError::Config(format!("{url}: {e}")))?;
        let client = reqwest::blocking::Client::builder()
            .timeout(std::time::Duration::from_secs(120))
            .build()
            .map_err(|e| BackendError::Config(e.to_string()))?;
        Ok(RemoteBackend { url, key, model, client })
    }

    /// Built from `$INSIGHT_LLM_URL`, `$INSIGHT_LLM_KEY` and
    /// `$INSIGHT_LLM_MODEL`; `None` when no URL is set.
    pub fn from_env() -> Option<Result<Self, BackendError>> {
        let url = std::env::var(LLM_URL_ENV).ok().filter(|u| !u.trim().is_empty())?;
        Some(RemoteBackend::new(
            &url,
            std::env::var(LLM_KEY_ENV).ok(),
            std::env::var(LLM_MODEL_ENV).ok(),
        ))
    }
}

fn reply_text(v: &serde_json::Value) -> Option<String> {
    if let Some(t) = v.get("text").and_then(|t| t.as_str()) {
        return Some(t.to_string());
    }
    let choice = v.get("choices")?.get(0)?;
    choice
        .get("text")
        .or_else(|| choice.get("message").and_then(|m| m.get("content")))
        .and_then(|t| t.as_str())
        .map(str::to_string)
}

struct RemoteSession<'a>(&'a RemoteBackend);

impl ModelSession for RemoteSession<'_> {
    fn complete(&mut self, prompt: &str, stop: &[String]) -> Result<String, BackendError> {
        let b = self.0;
        let mut body = serde_json::json!({ "prompt": prompt, "stop": stop, "max_tokens": REMOTE_MAX_TOKENS });
        if let Some(m) = &b.model {
            body["model"] = serde_json::Value::String(m.clone());
        }
        let mut req = b.client.post(b.url.clone()).json(&body);
        if let Some(k) = &b.key {
            req = req.bearer_auth(k);
        }
        let resp = req
            .send()
            .and_then(|r| r.error_for_status())
            .map_err(|e| BackendError::Transport(e.to_string()))?;
        let v: serde_json::Value = resp.json().map_err(|e| BackendError::Transport(e.to_string()))?;
        let text = reply_text(&v).ok_or_else(|| BackendError::Transport("reply has no text".into()))?;
        Ok(truncate_at_stop(text, stop))
    }
}

impl ModelBackend for RemoteBackend {
    fn name(&self) -> &str {
        "remote"
    }

    fn open(&self, _key: &SessionKey) -> Result<Box<dyn ModelSession + '_>, BackendError> {
        Ok(Box::new(RemoteSession(self)))
    }
}

/// Resolve a backend by name: `gold`, `gold-recover`, `demo`, `remote`
/// (from the environment), `const:<text>` or `scripted:<path>`.
pub fn backend_by_name(name: &str) -> Result<Arc<dyn ModelBackend>, BackendError> {
    if let Some(text) = name.strip_prefix("const:") {
        return Ok(Arc::new(ConstBackend { text: text.to_string() }));
    }
    if let Some(path) = name.strip_prefix("scripted:") {
        let file = std::fs::File::open(path).map_err(|e| BackendError::Config(format!("{path}: {e}")))?;
        return Ok(Arc::new(ScriptedBackend::from_jsonl(std::io::BufReader::new(file))?));
    }
    match name {
        "gold" => Ok(Arc::new(GoldBackend { recover: false })),
        "gold-recover" => Ok(Arc::new(GoldBackend { recover: true })),
        "demo" => Ok(Arc::new(DemoBackend)),
        "remote" => match RemoteBackend::from_env() {
            Some(r) => Ok(Arc::new(r?)),
            None => Err(BackendError::Config(format!("remote backend needs ${LLM_URL_ENV}"))),
        },
        other => Err(BackendError::Unknown(other.to_string())),
    }
}
