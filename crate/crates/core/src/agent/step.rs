//! The step grammar a model must follow on every turn.
//!
//! ```text
//! Thought: <one or more lines>            (optional)
//! Act: Analyze(```<program>```)
//! Act: Search(request='<text>')
//! Finish: <answer text>
//! ```
//!
//! Exactly one `Act:` or `Finish:` follows the optional thought. In a search
//! request, `\'`, `\\` and `\n` escape a quote, a backslash and a newline.

use serde::{Deserialize, Serialize};

use super::AgentError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Tool {
    Analyze,
    Search,
}

impl Tool {
    pub const ALL: [Tool; 2] = [Tool::Analyze, Tool::Search];

    pub fn as_str(self) -> &'static str {
        match self {
            Tool::Analyze => "analyze",
            Tool::Search => "search",
        }
    }

    pub fn from_name(s: &str) -> Option<Tool> {
        Tool::ALL.into_iter().find(|t| t.as_str() == s)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Action {
    Act { tool: Tool, payload: String },
    Finish(String),
}

/// One parsed model turn.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParsedStep {
    pub thought: Option<String>,
    pub action: Action,
}

const THOUGHT: &str = "Thought:";
const ACT: &str = "Act:";
const FINISH: &str = "Finish:";
const FENCE: &str = "```";

fn protocol(msg: impl Into<String>) -> AgentError {
    AgentError::Protocol(msg.into())
}

pub fn escape_request(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '\\' => out.push_str("\\\\"),
            '\'' => out.push_str("\\'"),
            '\n' => out.push_str("\\n"),
            c => out.push(c),
        }
    }
    out
}

/// `Analyze(...)` or `Search(...)` as written after `Act: `.
pub fn format_act(tool: Tool, payload: &str) -> String {
    match tool {
        Tool::Analyze => format!("{ACT} Analyze({FENCE}{payload}{FENCE})"),
        Tool::Search => format!("{ACT} Search(request='{}')", escape_request(payload)),
    }
}

pub fn serialize_step(step: &ParsedStep) -> String {
    let mut out = String::new();
    if let Some(t) = &step.thought {
        out.push_str(THOUGHT);
        out.push(' ');
        out.push_str(t);
        out.push('\n');
    }
    match &step.action {
        Action::Act { tool, payload } => out.push_str(&format_act(*tool, payload)),
        Action::Finish(text) => {
            out.push_str(FINISH);
            out.push(' ');
            out.push_str(text);
        }
    }
    out
}

fn parse_analyze(rest: &str) -> Result<String, AgentError> {
    let inner = rest
        .strip_prefix(FENCE)
        .and_then(|r| r.strip_suffix(')'))
        .map(str::trim_end)
        .and_then(|r| r.strip_suffix(FENCE))
        .ok_or_else(|| protocol("Analyze expects a fenced program: Analyze(```...```)"))?;
    if inner.contains(FENCE) {
        return Err(protocol("Analyze takes exactly one fenced program"));
    }
    let program = inner.trim();
    if program.is_empty() {
        return Err(protocol("Analyze program is empty"));
    }
    Ok(program.to_string())
}

fn parse_search(rest: &str) -> Result<String, AgentError> {
    let body = rest
        .strip_prefix("request='")
        .ok_or_else(|| protocol("Search expects request='...'"))?;
    let mut request = String::new();
    let mut chars = body.char_indices();
    while let Some((i, c)) = chars.next() {
        match c {
            '\\' => match chars.next() {
                Some((_, '\\')) => request.push('\\'),
                Some((_, '\'')) => request.push('\''),
                Some((_, 'n')) => request.push('\n'),
                _ => return Err(protocol("bad escape in search request")),
            },
            '\'' => {
                if body[i + 1..].trim_end() != ")" {
                    return Err(protocol("unexpected text after the search request"));
                }
                if request.trim().is_empty() {
                    return Err(protocol("search request is empty"));
                }
                return Ok(request);
            }
            c => request.push(c),
        }
    }
    Err(protocol("unterminated search request"))
}

fn is_action_line(line: &str) -> bool {
    let l = line.trim_start();
    l.starts_with(ACT) || l.starts_with(FINISH)
}

/// Parse one model turn. Anything outside the grammar is a protocol error.
pub fn parse_step(output: &str) -> Result<ParsedStep, AgentError> {
    let text = output.trim();
    let mut offset = 0;
    let mut action_at = None;
    for line in text.split_inclusive('\n') {
        if is_action_line(line) {
            action_at = Some(offset + (line.len() - line.trim_start().len()));
            break;
        }
        offset += line.len();
    }
    let Some(at) = action_at else {
        return Err(protocol("expected an Act: or Finish: line"));
    };
    let head = text[..at].trim();
    let thought = if head.is_empty() {
        None
    } else {
        let t = head
            .strip_prefix(THOUGHT)
            .ok_or_else(|| protocol("text before the action must start with Thought:"))?
            .trim();
        (!t.is_empty()).then(|| t.to_string())
    };

    let tail = &text[at..];
    let action = if let Some(rest) = tail.strip_prefix(FINISH) {
        let answer = rest.trim();
        if answer.is_empty() {
            return Err(protocol("Finish needs an answer"));
        }
        Action::Finish(answer.to_string())
    } else {
        let rest = tail[ACT.len()..].trim_start();
        if let Some(r) = rest.strip_prefix("Analyze(") {
            Action::Act {
                tool: Tool::Analyze,
                payload: parse_analyze(r)?,
            }
        } else if let Some(r) = rest.strip_prefix("Search(") {
            Action::Act {
                tool: Tool::Search,
                payload: parse_search(r)?,
            }
        } else {
            return Err(protocol("unknown tool; use Analyze or Search"));
        }
    };
    Ok(ParsedStep { thought, action })
}

/// Put raw completion text into step form: the prompt already ends with
/// `Thought:`, so unlabeled text is the thought's continuation. Anything the
/// model wrote from an `Observe:` marker onward is dropped.
pub fn normalize_completion(raw: &str) -> String {
    let mut text = raw.trim_start();
    if let Some(i) = text.find("\nObserve:") {
        text = &text[..i];
    }
    if text.starts_with("Observe:") {
        text = "";
    }
    let text = text.trim_end();
    if text.starts_with(THOUGHT) || text.starts_with(ACT) || text.starts_with(FINISH) {
        text.to_string()
    } else {
        format!("{THOUGHT} {text}")
    }
}
