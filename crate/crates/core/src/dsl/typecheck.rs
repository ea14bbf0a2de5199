//! Static type inference over the program tree. Only violations that are
//! decidable without data are reported; unknown types (unbound variables)
//! are deferred to evaluation.

use std::collections::HashMap;

use super::ast::{AggFn, Expr, Program, TableName};
use super::error::DslError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Ty {
    Number,
    Date,
    DateSet,
    Series(TableName),
    Table(TableName),
    Tuple,
    Unknown,
}

impl Ty {
    fn describe(self) -> &'static str {
        match self {
            Ty::Number => "a number",
            Ty::Date => "a date",
            Ty::DateSet => "a date set",
            Ty::Series(TableName::Daily) => "a daily series",
            Ty::Series(_) => "an activities series",
            Ty::Table(TableName::Context) => "the context record",
            Ty::Table(_) => "a table",
            Ty::Tuple => "a tuple",
            Ty::Unknown => "an unknown value",
        }
    }
}

pub(crate) fn check(program: &Program) -> Result<Ty, DslError> {
    let mut env = HashMap::new();
    for l in &program.lets {
        let ty = infer(&l.value, &env)?;
        env.insert(l.name.clone(), ty);
    }
    infer(&program.body, &env)
}

fn mismatch(op: &str, got: Ty) -> DslError {
    DslError::type_mismatch(format!("{op} cannot be applied to {}", got.describe()))
}

fn infer(e: &Expr, env: &HashMap<String, Ty>) -> Result<Ty, DslError> {
    use Ty::*;
    Ok(match e {
        Expr::Table(t) => Table(*t),
        Expr::Var(name) => env.get(name).copied().unwrap_or(Unknown),
        Expr::Number(_) => Number,
        Expr::Project { target, .. } => match infer(target, env)? {
            Table(TableName::Context) => Number,
            Table(t) => Series(t),
            Unknown => Unknown,
            other => return Err(mismatch("column selection", other)),
        },
        Expr::During { target, .. } => match infer(target, env)? {
            t @ (Table(TableName::Daily | TableName::Activities) | Series(_) | DateSet | Unknown) => t,
            other => return Err(mismatch(".during()", other)),
        },
        Expr::Where { target, .. } => match infer(target, env)? {
            t @ (Table(TableName::Daily | TableName::Activities) | Unknown) => t,
            other => return Err(mismatch(".where()", other)),
        },
        Expr::On { target, dates } => {
            match infer(dates, env)? {
                DateSet | Date | Unknown => {}
                other => return Err(mismatch("date selection argument", other)),
            }
            match infer(target, env)? {
                t @ (Table(TableName::Daily | TableName::Activities) | Series(_) | Unknown) => t,
                other => return Err(mismatch(".on()", other)),
            }
        }
        Expr::Aggregate { target, func } => match (infer(target, env)?, func) {
            (Series(_) | Unknown, _) => Number,
            (Table(TableName::Daily | TableName::Activities) | DateSet, AggFn::Count) => Number,
            (other, f) => return Err(mismatch(&format!(".{}()", f.as_str()), other)),
        },
        Expr::Corr { left, right } => {
            for side in [left, right] {
                match infer(side, env)? {
                    Series(TableName::Daily) | Unknown => {}
                    other => return Err(mismatch(".corr()", other)),
                }
            }
            Number
        }
        Expr::Dates { target } => match infer(target, env)? {
            Table(TableName::Daily | TableName::Activities) | Series(_) | Unknown => DateSet,
            other => return Err(mismatch(".dates()", other)),
        },
        Expr::DaysWhere { series, .. } => match infer(series, env)? {
            Series(_) | Unknown => DateSet,
            other => return Err(mismatch("days_where()", other)),
        },
        Expr::MostRecentDayWith { .. } => Date,
        Expr::Binary { op, left, right } => {
            for side in [left, right] {
                match infer(side, env)? {
                    Number | Unknown => {}
                    other => return Err(mismatch(&format!("'{}'", op.symbol()), other)),
                }
            }
            Number
        }
        Expr::Tuple(items) => {
            for item in items {
                infer(item, env)?;
            }
            Tuple
        }
    })
}
