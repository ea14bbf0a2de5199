//! Prompt assembly: instructions, schema card, few-shot trajectories, then
//! the live question and the session so far.

use super::fewshot::FewShotExample;
use super::step::format_act;
use super::{StepKind, TraceStep};

pub const DEFAULT_SCHEMA_CARD: &str = include_str!("../../data/schema_card.md");

/// The model stops before writing an observation; the tool supplies it.
pub const STOP_SEQUENCE: &str = "\nObserve:";

pub const INSTRUCTIONS: &str = "\
You are a personal health assistant with access to the user's wearable data.
Answer the question by working in steps. Each reply is one step:

Thought: <your reasoning about what to do next>
then exactly one of
Act: Analyze(```<program>```)
Act: Search(request='<search query>')
Finish: <final answer for the user>

After an Act, the tool's output is shown to you as `Observe: <result>`.
Never write an Observe line yourself.

Tools:
- Analyze runs a program in the analysis language over the user's data.
  Tables are `daily`, `activities` and `context`. Select a column with
  table[\"column\"], restrict rows with .during(\"last 7 days\"), .on(dates)
  or .where(activityName == \"Run\"), and aggregate with .mean(), .sum(),
  .min(), .max(), .median(), .std() or .count(). days_where(condition)
  gives a set of dates and most_recent_day_with(condition) a single date.
  `let name = expression;` binds intermediate results. Results of
  NO_DATA mean nothing matched; errors start with #ERROR#:.
- Search looks up general health knowledge and returns short passages with
  their sources.

State numbers in the final answer with their units and do not invent data.
";

/// A rendered prompt with the stop sequences the backend should honour.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Prompt {
    pub text: String,
    pub stop: Vec<String>,
}

/// Serialise steps the way they appear in prompts, one labelled block per
/// step.
pub fn render_steps(steps: &[TraceStep]) -> String {
    let mut lines = Vec::with_capacity(steps.len());
    for s in steps {
        match s.kind {
            StepKind::Thought => lines.push(format!("Thought: {}", s.content)),
            StepKind::Act => {
                if let Some(tool) = s.tool {
                    lines.push(format_act(tool, &s.content));
                }
            }
            StepKind::Observe => lines.push(format!("Observe: {}", s.content)),
            StepKind::Finish => lines.push(format!("Finish: {}", s.content)),
            StepKind::ProtocolError => {}
        }
    }
    lines.join("\n")
}

fn render_example(ex: &FewShotExample) -> String {
    format!("Question: {}\n{}", ex.query, render_steps(&ex.trajectory))
}

pub fn build_prompt(schema_card: &str, few_shots: &[FewShotExample], history: &[TraceStep], question: &str) -> Prompt {
    let mut text = String::new();
    text.push_str(INSTRUCTIONS);
    text.push('\n');
    text.push_str(schema_card.trim_end());
    text.push_str("\n\n");
    if !few_shots.is_empty() {
        text.push_str("Examples:\n\n");
        for ex in few_shots {
            text.push_str(&render_example(ex));
            text.push_str("\n\n");
        }
        text.push_str("Now the real question.\n\n");
    }
    text.push_str("Question: ");
    text.push_str(question.trim());
    text.push('\n');
    let past = render_steps(history);
    if !past.is_empty() {
        text.push_str(&past);
        text.push('\n');
    }
    text.push_str("Thought:");
    Prompt {
        text,
        stop: vec![STOP_SEQUENCE.to_string()],
    }
}
