//! The three answering methods: the full agent, single-step code
//! generation, and direct numerical reasoning over a Markdown rendering of
//! the data.

use crate::agent::{
    dispatch, format_act, normalize_completion, parse_step, render_steps, run_session, Action, Agent, AgentConfig,
    FewShotExample, ModelBackend, SessionKey, StepKind, Tool, Toolbox, TraceStep,
};
use crate::benchgen::ObjectiveQuery;
use crate::datamodel::{render_markdown, UserDataset};
use crate::retrieval::SearchTool;

/// Calendar days of data shown to the numerical-reasoning baseline.
pub const NUMERIC_DAYS: u32 = 31;

pub const CODEGEN_INSTRUCTIONS: &str = "\
You answer questions about a user's wearable data by writing one program in
the analysis language. Reply with a single line of the form
Act: Analyze(```<program>```)
The program runs once and its result is shown to you; you then state the
answer in one sentence after `Finish:`.
";

pub const NUMERIC_INSTRUCTIONS: &str = "\
You answer questions about a user's wearable data by reading the tables
below. Work out the answer yourself, then give it on a final line starting
with `Finish:`. Answer NO_DATA when the tables hold no relevant values.
";

/// Worked examples for the numerical-reasoning baseline.
pub const NUMERIC_FEW_SHOTS: &str = "\
Example tables:
|datetime|steps|sleep_minutes|
|---|---|---|
|2024-01-01|8000|420.00|
|2024-01-02|6500||
|2024-01-03|9100|390.50|

Question: What was my average sleep over these three days?
Thought: Sleep is recorded on two days: 420.00 and 390.50. Their mean is 810.50 / 2 = 405.25.
Finish: Your average sleep was 405.25 minutes.

Question: On how many days did I walk more than 7,000 steps?
Thought: 8000 and 9100 exceed 7000; 6500 does not.
Finish: 2 days.

Question: How many yoga sessions did I log?
Thought: The activities table has no Yoga rows in this window.
Finish: NO_DATA
";

/// Everything a runner needs besides the backend.
pub struct RunContext<'a> {
    pub agent: &'a Agent,
    /// Demonstrations for code generation: questions with one program each.
    pub codegen_shots: &'a [FewShotExample],
    pub search: Option<&'a dyn SearchTool>,
    pub schema_card: &'a str,
}

pub struct RunOutput {
    pub final_answer: Option<String>,
    pub trace: Vec<TraceStep>,
}

fn step(trace: &[TraceStep], kind: StepKind, tool: Option<Tool>, content: String, ok: bool) -> TraceStep {
    TraceStep {
        seq: trace.len() as u32,
        kind,
        tool,
        content,
        ok,
    }
}

/// Examples fit for code generation: exactly one analyze act and nothing
/// else but a finish.
pub fn codegen_pool(pool: &[FewShotExample]) -> Vec<FewShotExample> {
    pool.iter()
        .filter(|e| {
            let acts: Vec<_> = e.trajectory.iter().filter(|s| s.kind == StepKind::Act).collect();
            acts.len() == 1 && acts[0].tool == Some(Tool::Analyze) && e.trajectory.iter().all(|s| s.ok)
        })
        .cloned()
        .collect()
}

fn codegen_prompt(ctx: &RunContext<'_>, question: &str) -> String {
    let mut text = String::new();
    text.push_str(CODEGEN_INSTRUCTIONS);
    text.push('\n');
    text.push_str(ctx.schema_card.trim_end());
    text.push_str("\n\n");
    for ex in ctx.codegen_shots {
        let act: Vec<TraceStep> = ex.trajectory.iter().filter(|s| s.kind != StepKind::Thought).cloned().collect();
        text.push_str(&format!("Question: {}\n{}\n\n", ex.query, render_steps(&act)));
    }
    text.push_str(&format!("Question: {}\n", question.trim()));
    text
}

pub fn run_agent(q: &ObjectiveQuery, ds: &UserDataset, backend: &dyn ModelBackend, ctx: &RunContext<'_>) -> RunOutput {
    let tools = Toolbox {
        dataset: ds,
        search: ctx.search,
    };
    let key = SessionKey {
        id: q.id.clone(),
        gold_program: Some(q.gold_program.clone()),
    };
    let out = run_session(ctx.agent, &q.question, &tools, backend, &key);
    RunOutput {
        final_answer: out.final_answer,
        trace: out.trace,
    }
}

/// One program, one execution, one phrasing call. No thoughts, no search,
/// no second attempt.
pub fn run_codegen(
    q: &ObjectiveQuery,
    ds: &UserDataset,
    backend: &dyn ModelBackend,
    ctx: &RunContext<'_>,
) -> RunOutput {
    let mut trace = Vec::new();
    let fail = |mut trace: Vec<TraceStep>, msg: String| {
        let s = step(&trace, StepKind::ProtocolError, None, msg, false);
        trace.push(s);
        RunOutput {
            final_answer: None,
            trace,
        }
    };
    let key = SessionKey {
        id: q.id.clone(),
        gold_program: Some(q.gold_program.clone()),
    };
    let mut session = match backend.open(&key) {
        Ok(s) => s,
        Err(e) => return fail(trace, e.to_string()),
    };
    let base = codegen_prompt(ctx, &q.question);
    let stop = vec!["\nObserve:".to_string()];
    let raw = match session.complete(&format!("{base}Act:"), &stop) {
        Ok(r) => r,
        Err(e) => return fail(trace, e.to_string()),
    };
    let trimmed = raw.trim_start();
    let text = if trimmed.starts_with("Analyze(") {
        format!("Act: {trimmed}")
    } else {
        normalize_completion(&raw)
    };
    let program = match parse_step(&text) {
        Ok(p) => match p.action {
            Action::Act {
                tool: Tool::Analyze,
                payload,
            } => payload,
            _ => return fail(trace, "ProtocolError: code generation must produce one Analyze act".into()),
        },
        Err(e) => return fail(trace, e.to_string()),
    };
    let config = AgentConfig {
        tools_enabled: [Tool::Analyze].into_iter().collect(),
        ..ctx.agent.config.clone()
    };
    let tools = Toolbox { dataset: ds, search: None };
    let (observation, ok) = dispatch(Tool::Analyze, &program, &tools, &config);
    let act_line = format_act(Tool::Analyze, &program);
    trace.push(step(&trace, StepKind::Act, Some(Tool::Analyze), program, true));
    trace.push(step(&trace, StepKind::Observe, Some(Tool::Analyze), observation.clone(), ok));

    let prompt = format!("{base}{act_line}\nObserve: {observation}\nFinish:");
    let raw = match session.complete(&prompt, &[]) {
        Ok(r) => r,
        Err(e) => return fail(trace, e.to_string()),
    };
    let answer = raw.trim().strip_prefix("Finish:").unwrap_or(raw.trim()).trim().to_string();
    if answer.is_empty() {
        return fail(trace, "ProtocolError: empty answer".into());
    }
    trace.push(step(&trace, StepKind::Finish, None, answer.clone(), true));
    RunOutput {
        final_answer: Some(answer),
        trace,
    }
}

pub fn numeric_prompt(ds: &UserDataset, question: &str) -> String {
    format!(
        "{NUMERIC_INSTRUCTIONS}\n{NUMERIC_FEW_SHOTS}\nThe user's data (today is {}):\n\n{}\n\nQuestion: {}\nThought:",
        ds.today,
        render_markdown(ds, NUMERIC_DAYS).trim_end(),
        question.trim()
    )
}

/// One call over the rendered tables. The answer is whatever follows the
/// last `Finish:`; a reply without one is taken whole.
pub fn run_numeric(q: &ObjectiveQuery, ds: &UserDataset, backend: &dyn ModelBackend) -> RunOutput {
    let mut trace = Vec::new();
    let key = SessionKey::new(q.id.clone());
    let raw = backend.open(&key).and_then(|mut s| s.complete(&numeric_prompt(ds, &q.question), &[]));
    let raw = match raw {
        Ok(r) => r,
        Err(e) => {
            trace.push(step(&trace, StepKind::ProtocolError, None, e.to_string(), false));
            return RunOutput {
                final_answer: None,
                trace,
            };
        }
    };
    let (thought, answer) = match raw.rfind("Finish:") {
        Some(i) => {
            let head = raw[..i].trim();
            let head = head.strip_prefix("Thought:").unwrap_or(head).trim();
            (head.to_string(), raw[i + "Finish:".len()..].trim().to_string())
        }
        None => (String::new(), raw.trim().to_string()),
    };
    if !thought.is_empty() {
        trace.push(step(&trace, StepKind::Thought, None, thought, true));
    }
    if answer.is_empty() {
        trace.push(step(&trace, StepKind::ProtocolError, None, "ProtocolError: empty answer".into(), false));
        return RunOutput {
            final_answer: None,
            trace,
        };
    }
    trace.push(step(&trace, StepKind::Finish, None, answer.clone(), true));
    RunOutput {
        final_answer: Some(answer),
        trace,
    }
}
