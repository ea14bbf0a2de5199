//! Program tree and its canonical pretty-printer. Printing then re-parsing
//! yields a structurally equal tree.

use std::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TableName {
    Daily,
    Activities,
    Context,
}

impl TableName {
    pub fn from_ident(s: &str) -> Option<Self> {
        match s {
            "daily" => Some(TableName::Daily),
            "activities" => Some(TableName::Activities),
            "context" => Some(TableName::Context),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            TableName::Daily => "daily",
            TableName::Activities => "activities",
            TableName::Context => "context",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AggFn {
    Mean,
    Sum,
    Min,
    Max,
    Count,
    Std,
    Median,
}

impl AggFn {
    pub const ALL: [AggFn; 7] = [
        AggFn::Mean,
        AggFn::Sum,
        AggFn::Min,
        AggFn::Max,
        AggFn::Count,
        AggFn::Std,
        AggFn::Median,
    ];

    pub fn from_name(s: &str) -> Option<Self> {
        AggFn::ALL.into_iter().find(|a| a.as_str() == s)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            AggFn::Mean => "mean",
            AggFn::Sum => "sum",
            AggFn::Min => "min",
            AggFn::Max => "max",
            AggFn::Count => "count",
            AggFn::Std => "std",
            AggFn::Median => "median",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CmpOp {
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
}

impl CmpOp {
    pub fn from_symbol(s: &str) -> Option<Self> {
        Some(match s {
            "==" => CmpOp::Eq,
            "!=" => CmpOp::Ne,
            "<" => CmpOp::Lt,
            "<=" => CmpOp::Le,
            ">" => CmpOp::Gt,
            ">=" => CmpOp::Ge,
            _ => return None,
        })
    }

    pub fn symbol(self) -> &'static str {
        match self {
            CmpOp::Eq => "==",
            CmpOp::Ne => "!=",
            CmpOp::Lt => "<",
            CmpOp::Le => "<=",
            CmpOp::Gt => ">",
            CmpOp::Ge => ">=",
        }
    }

    pub fn holds(self, left: f64, right: f64) -> bool {
        match self {
            CmpOp::Eq => left == right,
            CmpOp::Ne => left != right,
            CmpOp::Lt => left < right,
            CmpOp::Le => left <= right,
            CmpOp::Gt => left > right,
            CmpOp::Ge => left >= right,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ArithOp {
    Add,
    Sub,
    Mul,
    Div,
}

impl ArithOp {
    pub fn symbol(self) -> &'static str {
        match self {
            ArithOp::Add => "+",
            ArithOp::Sub => "-",
            ArithOp::Mul => "*",
            ArithOp::Div => "/",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Literal {
    Number(f64),
    Str(String),
}

/// `column <op> literal`, as used by `.where(...)` and
/// `most_recent_day_with(...)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Predicate {
    pub column: String,
    pub op: CmpOp,
    pub value: Literal,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Table(TableName),
    Var(String),
    Number(f64),
    Project {
        target: Box<Expr>,
        column: String,
    },
    During {
        target: Box<Expr>,
        period: String,
    },
    Where {
        target: Box<Expr>,
        predicates: Vec<Predicate>,
    },
    On {
        target: Box<Expr>,
        dates: Box<Expr>,
    },
    Aggregate {
        target: Box<Expr>,
        func: AggFn,
    },
    Corr {
        left: Box<Expr>,
        right: Box<Expr>,
    },
    Dates {
        target: Box<Expr>,
    },
    DaysWhere {
        series: Box<Expr>,
        op: CmpOp,
        threshold: f64,
    },
    MostRecentDayWith {
        predicates: Vec<Predicate>,
    },
    Binary {
        op: ArithOp,
        left: Box<Expr>,
        right: Box<Expr>,
    },
    Tuple(Vec<Expr>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Let {
    pub name: String,
    pub value: Expr,
}

/// Zero or more `let` bindings followed by one result expression.
#[derive(Debug, Clone, PartialEq)]
pub struct Program {
    pub lets: Vec<Let>,
    pub body: Expr,
}

fn quote(s: &str) -> String {
    let mut out = String::with_capacity(s.len() + 2);
    out.push('"');
    for c in s.chars() {
        if c == '"' || c == '\\' {
            out.push('\\');
        }
        out.push(c);
    }
    out.push('"');
    out
}

fn write_number(f: &mut fmt::Formatter<'_>, n: f64) -> fmt::Result {
    if n < 0.0 || (n == 0.0 && n.is_sign_negative()) {
        write!(f, "(-{})", -n)
    } else {
        write!(f, "{n}")
    }
}

fn write_literal(f: &mut fmt::Formatter<'_>, lit: &Literal) -> fmt::Result {
    match lit {
        Literal::Number(n) if *n < 0.0 => write!(f, "-{}", -n),
        Literal::Number(n) => write!(f, "{n}"),
        Literal::Str(s) => f.write_str(&quote(s)),
    }
}

fn write_predicates(f: &mut fmt::Formatter<'_>, preds: &[Predicate]) -> fmt::Result {
    for (i, p) in preds.iter().enumerate() {
        if i > 0 {
            f.write_str(" and ")?;
        }
        write!(f, "{} {} ", p.column, p.op.symbol())?;
        write_literal(f, &p.value)?;
    }
    Ok(())
}

impl Expr {
    fn write_operand(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Binary { .. } => write!(f, "({self})"),
            other => write!(f, "{other}"),
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Table(t) => f.write_str(t.as_str()),
            Expr::Var(name) => f.write_str(name),
            Expr::Number(n) => write_number(f, *n),
            Expr::Project { target, column } => {
                target.write_operand(f)?;
                write!(f, "[{}]", quote(column))
            }
            Expr::During { target, period } => {
                target.write_operand(f)?;
                write!(f, ".during({})", quote(period))
            }
            Expr::Where { target, predicates } => {
                target.write_operand(f)?;
                f.write_str(".where(")?;
                write_predicates(f, predicates)?;
                f.write_str(")")
            }
            Expr::On { target, dates } => {
                target.write_operand(f)?;
                write!(f, ".on({dates})")
            }
            Expr::Aggregate { target, func } => {
                target.write_operand(f)?;
                write!(f, ".{}()", func.as_str())
            }
            Expr::Corr { left, right } => {
                left.write_operand(f)?;
                write!(f, ".corr({right})")
            }
            Expr::Dates { target } => {
                target.write_operand(f)?;
                f.write_str(".dates()")
            }
            Expr::DaysWhere { series, op, threshold } => {
                write!(f, "days_where({series} {} ", op.symbol())?;
                write_literal(f, &Literal::Number(*threshold))?;
                f.write_str(")")
            }
            Expr::MostRecentDayWith { predicates } => {
                f.write_str("most_recent_day_with(")?;
                write_predicates(f, predicates)?;
                f.write_str(")")
            }
            Expr::Binary { op, left, right } => {
                left.write_operand(f)?;
                write!(f, " {} ", op.symbol())?;
                right.write_operand(f)
            }
            Expr::Tuple(items) => {
                f.write_str("(")?;
                for (i, e) in items.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    write!(f, "{e}")?;
                }
                f.write_str(")")
            }
        }
    }
}

impl fmt::Display for Program {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for l in &self.lets {
            writeln!(f, "let {} = {};", l.name, l.value)?;
        }
        write!(f, "{}", self.body)
    }
}
