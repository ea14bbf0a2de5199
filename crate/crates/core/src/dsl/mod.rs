//! The sandboxed analysis language the agent uses instead of general code
//! execution.
//!
//! A program is zero or more `let name = expr;` bindings followed by one
//! expression, e.g.
//!
//! ```text
//! let d = days_where(daily["deep_sleep_minutes"] >= 120);
//! activities.on(d).where(activityName == "Elliptical")["duration"].sum()
//! ```
//!
//! Semantics worth knowing:
//! - aggregates skip missing cells; `std` and `corr` use the n-1 denominator;
//!   the median of an even count is the mean of the two middle values;
//! - value aggregates (including `count` on a series) over an empty
//!   selection yield `NO_DATA`; `count` of a table or a date set is its
//!   cardinality and may be zero;
//! - `NO_DATA` propagates through arithmetic;
//! - `"last N days"` covers the N calendar days ending at `today`.

mod ast;
mod error;
mod eval;
mod lexer;
mod observe;
mod parser;
mod period;
mod typecheck;
mod value;

pub use ast::{AggFn, ArithOp, CmpOp, Expr, Let, Literal, Predicate, Program, TableName};
pub use error::{DslError, ErrorKind};
pub use eval::evaluate;
pub use observe::{format_error, format_number, format_observation, format_value, ERROR_PREFIX, NO_DATA};
pub use parser::parse;
pub use period::{resolve_period, DateInterval};
pub use value::{Series, SeriesKey, SeriesPoint, TableView, Value};

use crate::datamodel::UserDataset;

/// Parse and evaluate in one step.
pub fn run(source: &str, ds: &UserDataset) -> Result<Value, DslError> {
    let program = parse(source)?;
    evaluate(&program, ds)
}

/// Parse, evaluate and format: the full analyze-tool round trip.
pub fn run_to_observation(source: &str, ds: &UserDataset) -> (String, bool) {
    let result = run(source, ds);
    let ok = result.is_ok();
    (format_observation(&result, ds), ok)
}
