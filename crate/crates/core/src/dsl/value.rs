use std::collections::BTreeSet;

use chrono::NaiveDate;

use super::ast::TableName;

/// Key of a series entry: the date for daily columns, the row index for
/// activity columns.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum SeriesKey {
    Date(NaiveDate),
    Row(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SeriesPoint {
    pub key: SeriesKey,
    pub date: NaiveDate,
    pub value: f64,
}

/// A projected numeric column. Missing cells are dropped at projection time,
/// so every point carries a value.
#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub source: TableName,
    pub column: String,
    pub points: Vec<SeriesPoint>,
}

impl Series {
    pub fn values(&self) -> impl Iterator<Item = f64> + '_ {
        self.points.iter().map(|p| p.value)
    }
}

/// A filtered view onto `daily` or `activities` (row indices in order), or
/// the context record.
#[derive(Debug, Clone, PartialEq)]
pub struct TableView {
    pub table: TableName,
    pub rows: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Value {
    Number(f64),
    Date(NaiveDate),
    DateSet(BTreeSet<NaiveDate>),
    Series(Series),
    Table(TableView),
    NoData,
    Tuple(Vec<Value>),
}

impl Value {
    pub fn as_number(&self) -> Option<f64> {
        match self {
            Value::Number(n) => Some(*n),
            _ => None,
        }
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            Value::Number(_) => "a number",
            Value::Date(_) => "a date",
            Value::DateSet(_) => "a date set",
            Value::Series(_) => "a series",
            Value::Table(TableView {
                table: TableName::Context,
                ..
            }) => "the context record",
            Value::Table(_) => "a table",
            Value::NoData => "no data",
            Value::Tuple(_) => "a tuple",
        }
    }
}
