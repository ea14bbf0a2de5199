//! Automatic evaluation: exact-match scoring, bootstrap intervals,
//! error/recovery rates, the three method runners and report rendering.

mod runners;
mod scoring;

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use rayon::prelude::*;
use rust_decimal::Decimal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use runners::{
    codegen_pool, numeric_prompt, run_agent, run_codegen, run_numeric, RunContext, RunOutput, CODEGEN_INSTRUCTIONS,
    NUMERIC_DAYS, NUMERIC_FEW_SHOTS, NUMERIC_INSTRUCTIONS,
};
pub use scoring::{
    bootstrap_ci, decimal_of, error_rate, exact_match, extract_last_number, match_with, recovery_rate, round2,
    MatchRule, CANNOT_ANSWER_PHRASES,
};

use crate::agent::{run_session, Agent, ModelBackend, SessionKey, Toolbox, Trace};
use crate::benchgen::{Category, GoldAnswer, ObjectiveQuery};
use crate::datamodel::UserDataset;

pub const DEFAULT_RESAMPLES: usize = 10_000;
pub const DEFAULT_LEVEL: f64 = 0.95;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("query {query} references unknown user '{user}'")]
    UnknownUser { query: String, user: String },
    #[error("no results to report")]
    Empty,
    #[error("unknown method '{0}' (expected agent, codegen or numeric)")]
    UnknownMethod(String),
    #[error("thread pool: {0}")]
    Pool(String),
    #[error("line {line}: {source}")]
    Json {
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Agent,
    Codegen,
    Numeric,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Agent, Method::Codegen, Method::Numeric];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Agent => "agent",
            Method::Codegen => "codegen",
            Method::Numeric => "numeric",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = EvalError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Method::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| EvalError::UnknownMethod(s.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodResult {
    pub query_id: String,
    pub user_id: String,
    pub category: Category,
    pub method: Method,
    pub gold_answer: GoldAnswer,
    pub final_answer: Option<String>,
    pub parsed_number: Option<Decimal>,
    pub correct: bool,
    pub trace: Trace,
}

/// Per-method knobs shared by every query of a run.
#[derive(Debug, Clone, Copy)]
pub struct RunOptions {
    /// Worker threads; 0 uses all cores.
    pub jobs: usize,
    pub rule: MatchRule,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            jobs: 0,
            rule: MatchRule::Round2,
        }
    }
}

fn score(q: &ObjectiveQuery, method: Method, out: RunOutput, rule: MatchRule) -> MethodResult {
    let correct = out.final_answer.as_deref().is_some_and(|a| match_with(a, &q.gold_answer, rule));
    MethodResult {
        query_id: q.id.clone(),
        user_id: q.user_id.clone(),
        category: q.category,
        method,
        gold_answer: q.gold_answer,
        parsed_number: out.final_answer.as_deref().and_then(extract_last_number),
        final_answer: out.final_answer,
        correct,
        trace: out.trace,
    }
}

fn thread_pool(jobs: usize) -> Result<rayon::ThreadPool, EvalError> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| EvalError::Pool(e.to_string()))
}

/// Answer every query with `method` and score it. Results come back in
/// benchmark order whatever the parallelism. A backend failure on one query
/// is recorded in its trace and scored incorrect.
pub fn run_method(
    method: Method,
    queries: &[ObjectiveQuery],
    datasets: &[UserDataset],
    backend: &dyn ModelBackend,
    ctx: &RunContext<'_>,
    options: RunOptions,
) -> Result<Vec<MethodResult>, EvalError> {
    let by_id: HashMap<&str, &UserDataset> = datasets.iter().map(|d| (d.user_id.as_str(), d)).collect();
    let resolved = queries
        .iter()
        .map(|q| {
            by_id.get(q.user_id.as_str()).map(|ds| (q, *ds)).ok_or_else(|| EvalError::UnknownUser {
                query: q.id.clone(),
                user: q.user_id.clone(),
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    let one = |(q, ds): &(&ObjectiveQuery, &UserDataset)| {
        let out = match method {
            Method::Agent => run_agent(q, ds, backend, ctx),
            Method::Codegen => run_codegen(q, ds, backend, ctx),
            Method::Numeric => run_numeric(q, ds, backend),
        };
        score(q, method, out, options.rule)
    };
    Ok(thread_pool(options.jobs)?.install(|| resolved.par_iter().map(one).collect()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryScore {
    pub n: usize,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub method: Method,
    pub n: usize,
    pub accuracy: f64,
    pub accuracy_ci: (f64, f64),
    /// `null` when no response used code.
    pub error_rate: Option<f64>,
    /// `null` when no response hit an error.
    pub recovery_rate: Option<f64>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub per_category: BTreeMap<String, CategoryScore>,
}

/// Summarise one method's results. The interval is a percentile bootstrap
/// with `resamples` draws under `seed`.
pub fn build_report(method: Method, results: &[MethodResult], resamples: usize, seed: u64) -> Result<EvalReport, EvalError> {
    let outcomes: Vec<bool> = results.iter().map(|r| r.correct).collect();
    let ci = bootstrap_ci(&outcomes, DEFAULT_LEVEL, resamples, seed).ok_or(EvalError::Empty)?;
    let mut groups: BTreeMap<String, (usize, usize)> = BTreeMap::new();
    for r in results {
        let g = groups.entry(r.category.as_str().to_string()).or_default();
        g.0 += 1;
        g.1 += usize::from(r.correct);
    }
    Ok(EvalReport {
        method,
        n: results.len(),
        accuracy: outcomes.iter().filter(|&&c| c).count() as f64 / results.len() as f64,
        accuracy_ci: ci,
        error_rate: error_rate(results),
        recovery_rate: recovery_rate(results),
        per_category: groups
            .into_iter()
            .map(|(k, (n, c))| {
                (
                    k,
                    CategoryScore {
                        n,
                        accuracy: c as f64 / n as f64,
                    },
                )
            })
            .collect(),
    })
}

fn rate(r: Option<f64>) -> String {
    r.map_or("n/a".to_string(), |x| format!("{x:.3}"))
}

/// Markdown tables and the JSON form of the same reports.
pub fn render_report(reports: &[EvalReport]) -> (String, String) {
    let mut md = String::from("| method | n | accuracy | 95% CI | error rate | recovery rate |\n|---|---|---|---|---|---|\n");
    for r in reports {
        md.push_str(&format!(
            "| {} | {} | {:.3} | [{:.3}, {:.3}] | {} | {} |\n",
            r.method,
            r.n,
            r.accuracy,
            r.accuracy_ci.0,
            r.accuracy_ci.1,
            rate(r.error_rate),
            rate(r.recovery_rate)
        ));
    }
    let categories: Vec<&String> = {
        let mut c: Vec<&String> = reports.iter().flat_map(|r| r.per_category.keys()).collect();
        c.sort();
        c.dedup();
        c
    };
    if !categories.is_empty() {
        md.push_str("\n### Accuracy by category\n\n| category |");
        for r in reports {
            md.push_str(&format!(" {} |", r.method));
        }
        md.push_str("\n|---|");
        md.push_str(&"---|".repeat(reports.len()));
        md.push('\n');
        for c in categories {
            md.push_str(&format!("| {c} |"));
            for r in reports {
                match r.per_category.get(c) {
                    Some(s) => md.push_str(&format!(" {:.3} (n={}) |", s.accuracy, s.n)),
                    None => md.push_str(" - |"),
                }
            }
            md.push('\n');
        }
    }
    let json = serde_json::to_string_pretty(reports).expect("reports serialise");
    (md, json)
}

pub fn write_results<W: Write>(results: &[MethodResult], mut w: W) -> std::io::Result<()> {
    for r in results {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_results<R: BufRead>(r: R) -> Result<Vec<MethodResult>, EvalError> {
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|source| EvalError::Json { line: i + 1, source })?);
    }
    Ok(out)
}

/// The nine open-ended query types.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OpenEndedCategory {
    Correlation,
    GeneralKnowledge,
    Problematic,
    PersonalMinMaxAvg,
    Trend,
    Summary,
    CompareTimePeriods,
    CompareToCohort,
    Anomaly,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OpenEndedQuery {
    pub id: String,
    pub category: OpenEndedCategory,
    pub question: String,
}

/// Trace of an open-ended query. These are collected, never scored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OpenEndedResult {
    pub id: String,
    pub category: OpenEndedCategory,
    pub user_id: String,
    pub question: String,
    pub final_answer: Option<String>,
    pub trace: Trace,
}

pub const DEFAULT_OPEN_ENDED_JSONL: &str = include_str!("../../data/open_ended.jsonl");

pub fn read_open_ended<R: BufRead>(r: R) -> Result<Vec<OpenEndedQuery>, EvalError> {
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|source| EvalError::Json { line: i + 1, source })?);
    }
    Ok(out)
}

/// Run open-ended queries through the agent, assigning users round-robin.
pub fn run_open_ended(
    queries: &[OpenEndedQuery],
    datasets: &[UserDataset],
    backend: &dyn ModelBackend,
    agent: &Agent,
    search: Option<&dyn crate::retrieval::SearchTool>,
    jobs: usize,
) -> Result<Vec<OpenEndedResult>, EvalError> {
    if datasets.is_empty() {
        return Err(EvalError::Empty);
    }
    let one = |(i, q): (usize, &OpenEndedQuery)| {
        let ds = &datasets[i % datasets.len()];
        let tools = Toolbox { dataset: ds, search };
        let out = run_session(agent, &q.question, &tools, backend, &SessionKey::new(q.id.clone()));
        OpenEndedResult {
            id: q.id.clone(),
            category: q.category,
            user_id: ds.user_id.clone(),
            question: q.question.clone(),
            final_answer: out.final_answer,
            trace: out.trace,
        }
    };
    Ok(thread_pool(jobs)?.install(|| queries.par_iter().enumerate().map(one).collect()))
}
