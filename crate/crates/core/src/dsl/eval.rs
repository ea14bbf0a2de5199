use std::collections::{BTreeSet, HashMap};

use chrono::NaiveDate;

use super::ast::{AggFn, ArithOp, CmpOp, Expr, Literal, Predicate, Program, TableName};
use super::error::{DslError, ErrorKind};
use super::period::resolve_period;
use super::value::{Series, SeriesKey, SeriesPoint, TableView, Value};
use crate::datamodel::{
    UserDataset, ACTIVITY_COLUMNS, ACTIVITY_NUMERIC_COLUMNS, DAILY_COLUMNS, DAILY_NUMERIC_COLUMNS,
};

/// Evaluate a parsed program against one user's dataset.
pub fn evaluate(program: &Program, ds: &UserDataset) -> Result<Value, DslError> {
    let mut ev = Evaluator {
        ds,
        env: HashMap::new(),
    };
    for l in &program.lets {
        let v = ev.eval(&l.value)?;
        ev.env.insert(l.name.clone(), v);
    }
    ev.eval(&program.body)
}

struct Evaluator<'a> {
    ds: &'a UserDataset,
    env: HashMap<String, Value>,
}

fn mismatch(what: &str, v: &Value) -> DslError {
    DslError::type_mismatch(format!("{what} cannot be applied to {}", v.kind_name()))
}

impl Evaluator<'_> {
    fn eval(&self, e: &Expr) -> Result<Value, DslError> {
        match e {
            Expr::Table(t) => Ok(Value::Table(self.full_table(*t))),
            Expr::Var(name) => self
                .env
                .get(name)
                .cloned()
                .ok_or_else(|| DslError::new(ErrorKind::UnboundVariable, format!("'{name}'"))),
            Expr::Number(n) => Ok(Value::Number(*n)),
            Expr::Project { target, column } => {
                if let Expr::Var(name) = target.as_ref() {
                    if !self.env.contains_key(name) {
                        return Err(DslError::new(ErrorKind::UnknownTable, format!("'{name}'")));
                    }
                }
                let v = self.eval(target)?;
                self.project(&v, column)
            }
            Expr::During { target, period } => {
                let interval = resolve_period(period, self.ds.today)?;
                let v = self.eval(target)?;
                self.filter_dates(v, |d| interval.contains(d), ".during()")
            }
            Expr::Where { target, predicates } => {
                let v = self.eval(target)?;
                match v {
                    Value::Table(view) if view.table != TableName::Context => {
                        check_predicates(view.table, predicates)?;
                        let mut rows = Vec::with_capacity(view.rows.len());
                        for &r in &view.rows {
                            if self.row_matches(view.table, r, predicates)? {
                                rows.push(r);
                            }
                        }
                        Ok(Value::Table(TableView { table: view.table, rows }))
                    }
                    other => Err(mismatch(".where()", &other)),
                }
            }
            Expr::On { target, dates } => {
                let selector = self.eval(dates)?;
                let set: BTreeSet<NaiveDate> = match selector {
                    Value::DateSet(s) => s,
                    Value::Date(d) => BTreeSet::from([d]),
                    Value::NoData => BTreeSet::new(),
                    other => return Err(mismatch("date selection argument", &other)),
                };
                let v = self.eval(target)?;
                if matches!(v, Value::DateSet(_)) {
                    return Err(mismatch(".on()", &v));
                }
                self.filter_dates(v, |d| set.contains(&d), ".on()")
            }
            Expr::Aggregate { target, func } => {
                let v = self.eval(target)?;
                aggregate(&v, *func)
            }
            Expr::Corr { left, right } => {
                let l = self.eval(left)?;
                let r = self.eval(right)?;
                match (&l, &r) {
                    (Value::Series(a), Value::Series(b))
                        if a.source == TableName::Daily && b.source == TableName::Daily =>
                    {
                        Ok(correlation(a, b))
                    }
                    (Value::Series(_), other) | (other, _) => Err(mismatch(".corr()", other)),
                }
            }
            Expr::Dates { target } => {
                let v = self.eval(target)?;
                match v {
                    Value::Series(s) => Ok(Value::DateSet(s.points.iter().map(|p| p.date).collect())),
                    Value::Table(view) if view.table != TableName::Context => Ok(Value::DateSet(
                        view.rows.iter().map(|&r| self.row_date(view.table, r)).collect(),
                    )),
                    other => Err(mismatch(".dates()", &other)),
                }
            }
            Expr::DaysWhere { series, op, threshold } => {
                let v = self.eval(series)?;
                match v {
                    Value::Series(s) => Ok(Value::DateSet(
                        s.points
                            .iter()
                            .filter(|p| op.holds(p.value, *threshold))
                            .map(|p| p.date)
                            .collect(),
                    )),
                    other => Err(mismatch("days_where()", &other)),
                }
            }
            Expr::MostRecentDayWith { predicates } => {
                check_predicates(TableName::Activities, predicates)?;
                let mut latest: Option<NaiveDate> = None;
                for r in 0..self.ds.activities.len() {
                    if self.row_matches(TableName::Activities, r, predicates)? {
                        let d = self.ds.activities[r].date();
                        if d <= self.ds.today && latest.is_none_or(|l| d > l) {
                            latest = Some(d);
                        }
                    }
                }
                Ok(latest.map(Value::Date).unwrap_or(Value::NoData))
            }
            Expr::Binary { op, left, right } => {
                let l = self.eval(left)?;
                let r = self.eval(right)?;
                arithmetic(*op, &l, &r)
            }
            Expr::Tuple(items) => items
                .iter()
                .map(|i| self.eval(i))
                .collect::<Result<Vec<_>, _>>()
                .map(Value::Tuple),
        }
    }

    fn full_table(&self, t: TableName) -> TableView {
        let n = match t {
            TableName::Daily => self.ds.daily.len(),
            TableName::Activities => self.ds.activities.len(),
            TableName::Context => 0,
        };
        TableView {
            table: t,
            rows: (0..n).collect(),
        }
    }

    fn row_date(&self, table: TableName, row: usize) -> NaiveDate {
        match table {
            TableName::Daily => self.ds.daily[row].date,
            _ => self.ds.activities[row].date(),
        }
    }

    fn cell(&self, table: TableName, row: usize, column: &str) -> Result<Option<f64>, DslError> {
        let looked_up = match table {
            TableName::Daily => self.ds.daily[row].numeric(column),
            TableName::Activities => self.ds.activities[row].numeric(column),
            TableName::Context => self.ds.context.numeric_field(column),
        };
        match looked_up {
            Some(v) => Ok(v),
            None => Err(column_error(table, column)),
        }
    }

    fn project(&self, v: &Value, column: &str) -> Result<Value, DslError> {
        let view = match v {
            Value::Table(view) => view,
            other => return Err(mismatch("column selection", other)),
        };
        if view.table == TableName::Context {
            return match self.ds.context.numeric_field(column) {
                Some(Some(n)) => Ok(Value::Number(n)),
                Some(None) => Ok(Value::NoData),
                None => Err(column_error(TableName::Context, column)),
            };
        }
        // validate the column even when the view is empty
        let numeric = match view.table {
            TableName::Daily => DAILY_NUMERIC_COLUMNS.contains(&column),
            _ => ACTIVITY_NUMERIC_COLUMNS.contains(&column),
        };
        if !numeric {
            return Err(column_error(view.table, column));
        }
        let mut points = Vec::with_capacity(view.rows.len());
        for &r in &view.rows {
            if let Some(value) = self.cell(view.table, r, column)? {
                let date = self.row_date(view.table, r);
                let key = match view.table {
                    TableName::Daily => SeriesKey::Date(date),
                    _ => SeriesKey::Row(r),
                };
                points.push(SeriesPoint { key, date, value });
            }
        }
        Ok(Value::Series(Series {
            source: view.table,
            column: column.to_string(),
            points,
        }))
    }

    fn filter_dates(
        &self,
        v: Value,
        keep: impl Fn(NaiveDate) -> bool,
        what: &str,
    ) -> Result<Value, DslError> {
        match v {
            Value::Table(view) if view.table != TableName::Context => {
                let rows = view
                    .rows
                    .into_iter()
                    .filter(|&r| keep(self.row_date(view.table, r)))
                    .collect();
                Ok(Value::Table(TableView { table: view.table, rows }))
            }
            Value::Series(mut s) => {
                s.points.retain(|p| keep(p.date));
                Ok(Value::Series(s))
            }
            Value::DateSet(set) => Ok(Value::DateSet(set.into_iter().filter(|d| keep(*d)).collect())),
            other => Err(mismatch(what, &other)),
        }
    }

    fn row_matches(&self, table: TableName, row: usize, preds: &[Predicate]) -> Result<bool, DslError> {
        for p in preds {
            if !self.predicate_holds(table, row, p)? {
                return Ok(false);
            }
        }
        Ok(true)
    }

    fn predicate_holds(&self, table: TableName, row: usize, p: &Predicate) -> Result<bool, DslError> {
        if table == TableName::Activities && p.column == "activityName" {
            let name = &self.ds.activities[row].activity_name;
            return match (&p.value, p.op) {
                (Literal::Str(s), CmpOp::Eq) => Ok(name == s),
                (Literal::Str(s), CmpOp::Ne) => Ok(name != s),
                (Literal::Str(_), op) => Err(DslError::type_mismatch(format!(
                    "operator '{}' is not defined for activityName",
                    op.symbol()
                ))),
                (Literal::Number(_), _) => Err(DslError::type_mismatch(
                    "activityName must be compared with a string",
                )),
            };
        }
        let cell = self.cell(table, row, &p.column)?;
        match &p.value {
            Literal::Number(threshold) => Ok(cell.is_some_and(|v| p.op.holds(v, *threshold))),
            Literal::Str(_) => Err(DslError::type_mismatch(format!(
                "column '{}' is numeric and cannot be compared with a string",
                p.column
            ))),
        }
    }
}

fn check_predicates(table: TableName, preds: &[Predicate]) -> Result<(), DslError> {
    for p in preds {
        let numeric = match table {
            TableName::Daily => DAILY_NUMERIC_COLUMNS.contains(&p.column.as_str()),
            _ => {
                p.column == "activityName" || ACTIVITY_NUMERIC_COLUMNS.contains(&p.column.as_str())
            }
        };
        if !numeric {
            return Err(column_error(table, &p.column));
        }
    }
    Ok(())
}

fn column_error(table: TableName, column: &str) -> DslError {
    let known_non_numeric = match table {
        TableName::Daily => DAILY_COLUMNS.contains(&column),
        TableName::Activities => ACTIVITY_COLUMNS.contains(&column),
        TableName::Context => column == "gender" || column == "user_id",
    };
    if known_non_numeric {
        DslError::type_mismatch(format!("column '{column}' is not numeric"))
    } else {
        DslError::unknown_column(column)
    }
}

fn aggregate(v: &Value, func: AggFn) -> Result<Value, DslError> {
    match (v, func) {
        (Value::Table(view), AggFn::Count) if view.table != TableName::Context => {
            Ok(Value::Number(view.rows.len() as f64))
        }
        (Value::DateSet(s), AggFn::Count) => Ok(Value::Number(s.len() as f64)),
        (Value::NoData, _) => Ok(Value::NoData),
        (Value::Series(s), f) => {
            let values: Vec<f64> = s.values().collect();
            Ok(series_aggregate(&values, f).map(Value::Number).unwrap_or(Value::NoData))
        }
        (other, f) => Err(mismatch(&format!(".{}()", f.as_str()), other)),
    }
}

fn series_aggregate(values: &[f64], func: AggFn) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let n = values.len() as f64;
    let sum: f64 = values.iter().sum();
    match func {
        AggFn::Count => Some(n),
        AggFn::Sum => Some(sum),
        AggFn::Mean => Some(sum / n),
        AggFn::Min => values.iter().copied().reduce(f64::min),
        AggFn::Max => values.iter().copied().reduce(f64::max),
        AggFn::Std => {
            if values.len() < 2 {
                return None;
            }
            let mean = sum / n;
            let ss: f64 = values.iter().map(|v| (v - mean).powi(2)).sum();
            Some((ss / (n - 1.0)).sqrt())
        }
        AggFn::Median => {
            let mut sorted = values.to_vec();
            sorted.sort_by(f64::total_cmp);
            let mid = sorted.len() / 2;
            Some(if sorted.len().is_multiple_of(2) {
                (sorted[mid - 1] + sorted[mid]) / 2.0
            } else {
                sorted[mid]
            })
        }
    }
}

/// Sample Pearson correlation over dates present in both series.
fn correlation(a: &Series, b: &Series) -> Value {
    let right: HashMap<NaiveDate, f64> = b.points.iter().map(|p| (p.date, p.value)).collect();
    let pairs: Vec<(f64, f64)> = a
        .points
        .iter()
        .filter_map(|p| right.get(&p.date).map(|&y| (p.value, y)))
        .collect();
    if pairs.len() < 2 {
        return Value::NoData;
    }
    let n = pairs.len() as f64;
    let mx = pairs.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pairs.iter().map(|p| p.1).sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in &pairs {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx).powi(2);
        syy += (y - my).powi(2);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Value::NoData;
    }
    let cov = sxy / (n - 1.0);
    let sx = (sxx / (n - 1.0)).sqrt();
    let sy = (syy / (n - 1.0)).sqrt();
    Value::Number(cov / (sx * sy))
}

fn arithmetic(op: ArithOp, l: &Value, r: &Value) -> Result<Value, DslError> {
    let (a, b) = match (l, r) {
        (Value::NoData, Value::Number(_) | Value::NoData) | (Value::Number(_), Value::NoData) => {
            return Ok(Value::NoData)
        }
        (Value::Number(a), Value::Number(b)) => (*a, *b),
        (Value::Number(_), other) | (other, _) => {
            return Err(mismatch(&format!("'{}'", op.symbol()), other))
        }
    };
    Ok(Value::Number(match op {
        ArithOp::Add => a + b,
        ArithOp::Sub => a - b,
        ArithOp::Mul => a * b,
        ArithOp::Div => {
            if b == 0.0 {
                return Err(DslError::new(ErrorKind::DivisionByZero, "division by zero"));
            }
            a / b
        }
    }))
}
