use std::fmt;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ErrorKind {
    UnknownColumn,
    UnknownTable,
    TypeMismatch,
    ParseError,
    PeriodParseError,
    DivisionByZero,
    UnboundVariable,
}

impl ErrorKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ErrorKind::UnknownColumn => "UnknownColumn",
            ErrorKind::UnknownTable => "UnknownTable",
            ErrorKind::TypeMismatch => "TypeMismatch",
            ErrorKind::ParseError => "ParseError",
            ErrorKind::PeriodParseError => "PeriodParseError",
            ErrorKind::DivisionByZero => "DivisionByZero",
            ErrorKind::UnboundVariable => "UnboundVariable",
        }
    }
}

impl fmt::Display for ErrorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Any failure of parsing or evaluating an analysis program.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, thiserror::Error)]
#[error("{kind}: {message}")]
pub struct DslError {
    pub kind: ErrorKind,
    pub message: String,
}

impl DslError {
    pub fn new(kind: ErrorKind, message: impl Into<String>) -> Self {
        DslError {
            kind,
            message: message.into(),
        }
    }

    pub fn parse(line: usize, col: usize, message: impl fmt::Display) -> Self {
        DslError::new(
            ErrorKind::ParseError,
            format!("line {line}, column {col}: {message}"),
        )
    }

    pub fn unknown_column(name: &str) -> Self {
        DslError::new(ErrorKind::UnknownColumn, format!("'{name}'"))
    }

    pub fn type_mismatch(message: impl Into<String>) -> Self {
        DslError::new(ErrorKind::TypeMismatch, message)
    }
}
