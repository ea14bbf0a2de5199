//! Objective query benchmark: templates with typed slots, instantiated per
//! user into a question, a gold analysis program and a gold answer.
//!
//! Gold answers come from [`oracle_answer`], which scans the records
//! directly instead of running the gold program; the tests hold the two
//! against each other.

mod instantiate;
mod oracle;
mod templates;

use std::collections::HashSet;
use std::fmt;
use std::io::{BufRead, Write};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

pub use instantiate::{instantiate, MAX_ATTEMPTS};
pub use oracle::{aggregate, oracle_answer, period_bounds, ColumnFilter, OracleAnswer, QuerySemantics};
pub use templates::{
    group_thousands, ActivityPhrase, DailyMetricPhrase, Phrasing, QueryTemplate, Slot, SlotKind, TemplateLibrary,
    DEFAULT_PHRASING_JSON, DEFAULT_TEMPLATES_JSON,
};

use crate::datamodel::UserDataset;

/// Whole rounds over every (template, user) pair without a new query before
/// generation gives up.
const MAX_STALE_ROUNDS: usize = 50;

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("DomainExhausted: {0}")]
    DomainExhausted(String),
    #[error("template error: {0}")]
    Template(String),
    #[error("invalid request: {0}")]
    Invalid(String),
    #[error("benchmark I/O: {0}")]
    Io(#[from] std::io::Error),
    #[error("benchmark line {line}: {source}")]
    Json {
        line: usize,
        #[source]
        source: serde_json::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Category {
    MetricAggregate,
    DayCountPredicate,
    ActivityAggregate,
    CrossTableCondition,
    MostRecentActivity,
    PercentageOfDays,
}

impl Category {
    pub const ALL: [Category; 6] = [
        Category::MetricAggregate,
        Category::DayCountPredicate,
        Category::ActivityAggregate,
        Category::CrossTableCondition,
        Category::MostRecentActivity,
        Category::PercentageOfDays,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Category::MetricAggregate => "metric-aggregate",
            Category::DayCountPredicate => "day-count-predicate",
            Category::ActivityAggregate => "activity-aggregate",
            Category::CrossTableCondition => "cross-table-condition",
            Category::MostRecentActivity => "most-recent-activity",
            Category::PercentageOfDays => "percentage-of-days",
        }
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A gold answer: a number, or the `"NO_DATA"` marker.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GoldAnswer {
    Number(f64),
    NoData,
}

impl GoldAnswer {
    pub fn as_number(self) -> Option<f64> {
        match self {
            GoldAnswer::Number(n) => Some(n),
            GoldAnswer::NoData => None,
        }
    }
}

impl Serialize for GoldAnswer {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            GoldAnswer::Number(n) => s.serialize_f64(*n),
            GoldAnswer::NoData => s.serialize_str(crate::dsl::NO_DATA),
        }
    }
}

impl<'de> Deserialize<'de> for GoldAnswer {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Number(f64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Number(n) => Ok(GoldAnswer::Number(n)),
            Raw::Text(t) if t == crate::dsl::NO_DATA => Ok(GoldAnswer::NoData),
            Raw::Text(t) => Err(serde::de::Error::custom(format!("gold_answer must be a number or \"NO_DATA\", got \"{t}\""))),
        }
    }
}

/// One benchmark item. `template_id` and `semantics` are kept in memory for
/// checking and reporting; the JSONL form carries only the public fields.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveQuery {
    pub id: String,
    pub user_id: String,
    pub category: Category,
    pub question: String,
    pub gold_program: String,
    pub gold_answer: GoldAnswer,
    pub expect_no_data: bool,
    #[serde(skip)]
    pub template_id: String,
    #[serde(skip)]
    pub semantics: Option<QuerySemantics>,
}

pub fn query_id(index: usize) -> String {
    format!("q{:05}", index + 1)
}

/// Round-robin over templates and users with one seeded generator until
/// `n_queries` distinct `(user_id, question)` pairs exist. Templates whose
/// slots cannot be filled for a user are skipped for that user.
pub fn generate_benchmark(
    lib: &TemplateLibrary,
    datasets: &[UserDataset],
    n_queries: usize,
    seed: u64,
) -> Result<Vec<ObjectiveQuery>, BenchError> {
    if n_queries == 0 {
        return Err(BenchError::Invalid("n_queries must be at least 1".into()));
    }
    if datasets.is_empty() {
        return Err(BenchError::Invalid("no datasets to generate queries for".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut seen: HashSet<(String, String)> = HashSet::new();
    let mut out: Vec<ObjectiveQuery> = Vec::with_capacity(n_queries);
    let mut stale = 0;
    while out.len() < n_queries {
        let before = out.len();
        'round: for template in &lib.templates {
            for ds in datasets {
                if out.len() == n_queries {
                    break 'round;
                }
                let mut q = match instantiate(lib, template, ds, &mut rng) {
                    Ok(q) => q,
                    Err(BenchError::DomainExhausted(_)) => continue,
                    Err(e) => return Err(e),
                };
                if seen.insert((q.user_id.clone(), q.question.clone())) {
                    q.id = query_id(out.len());
                    out.push(q);
                }
            }
        }
        if out.len() == before {
            stale += 1;
            if stale == MAX_STALE_ROUNDS {
                return Err(BenchError::DomainExhausted(format!(
                    "templates yielded only {} distinct queries of the {n_queries} requested",
                    out.len()
                )));
            }
        } else {
            stale = 0;
        }
    }
    Ok(out)
}

pub fn write_jsonl<W: Write>(queries: &[ObjectiveQuery], mut w: W) -> Result<(), BenchError> {
    for q in queries {
        let line = serde_json::to_string(q).map_err(|source| BenchError::Json { line: 0, source })?;
        writeln!(w, "{line}")?;
    }
    w.flush()?;
    Ok(())
}

/// Read a benchmark file; blank lines are ignored.
pub fn read_jsonl<R: BufRead>(r: R) -> Result<Vec<ObjectiveQuery>, BenchError> {
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|source| BenchError::Json { line: i + 1, source })?);
    }
    Ok(out)
}
