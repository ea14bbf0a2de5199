use super::ast::{AggFn, ArithOp, CmpOp, Expr, Let, Literal, Predicate, Program, TableName};
use super::error::DslError;
use super::lexer::{tokenize, Tok, Token};
use super::typecheck;

const RESERVED: [&str; 7] = [
    "let",
    "and",
    "daily",
    "activities",
    "context",
    "days_where",
    "most_recent_day_with",
];

/// Parse a program and run the static type check.
pub fn parse(source: &str) -> Result<Program, DslError> {
    let tokens = tokenize(source)?;
    let mut p = Parser { tokens, pos: 0 };
    let program = p.program()?;
    typecheck::check(&program)?;
    Ok(program)
}

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.tokens[self.pos].tok
    }

    fn peek_at(&self, offset: usize) -> &Tok {
        let i = (self.pos + offset).min(self.tokens.len() - 1);
        &self.tokens[i].tok
    }

    fn next(&mut self) -> Token {
        let t = self.tokens[self.pos].clone();
        if self.pos < self.tokens.len() - 1 {
            self.pos += 1;
        }
        t
    }

    fn error_here(&self, message: impl std::fmt::Display) -> DslError {
        let t = &self.tokens[self.pos];
        DslError::parse(t.line, t.col, message)
    }

    fn expect(&mut self, want: Tok) -> Result<(), DslError> {
        if *self.peek() == want {
            self.next();
            Ok(())
        } else {
            Err(self.error_here(format!(
                "expected {}, found {}",
                want.describe(),
                self.peek().describe()
            )))
        }
    }

    fn expect_ident(&mut self) -> Result<String, DslError> {
        match self.peek().clone() {
            Tok::Ident(s) => {
                self.next();
                Ok(s)
            }
            other => Err(self.error_here(format!("expected identifier, found {}", other.describe()))),
        }
    }

    fn expect_string(&mut self) -> Result<String, DslError> {
        match self.peek().clone() {
            Tok::Str(s) => {
                self.next();
                Ok(s)
            }
            other => Err(self.error_here(format!("expected string, found {}", other.describe()))),
        }
    }

    fn is_ident(&self, name: &str) -> bool {
        matches!(self.peek(), Tok::Ident(s) if s == name)
    }

    fn program(&mut self) -> Result<Program, DslError> {
        let mut lets = Vec::new();
        while self.is_ident("let") {
            self.next();
            let name = self.expect_ident()?;
            if RESERVED.contains(&name.as_str()) {
                return Err(self.error_here(format!("'{name}' is reserved and cannot be bound")));
            }
            self.expect(Tok::Assign)?;
            let value = self.expr()?;
            self.expect(Tok::Semi)?;
            lets.push(Let { name, value });
        }
        let body = self.expr()?;
        if *self.peek() != Tok::Eof {
            return Err(self.error_here(format!("unexpected {} after expression", self.peek().describe())));
        }
        Ok(Program { lets, body })
    }

    fn expr(&mut self) -> Result<Expr, DslError> {
        let mut left = self.term()?;
        loop {
            let op = match self.peek() {
                Tok::Plus => ArithOp::Add,
                Tok::Minus => ArithOp::Sub,
                _ => return Ok(left),
            };
            self.next();
            let right = self.term()?;
            left = Expr::Binary {
                op,
                left: Box::new(left),
                right: Box::new(right),
            };
        }
    }

    fn term(&mut self) -> Result<Expr, DslError> {
        let mut left = self.unary()?;
        loop {
            let op = match self.peek() {
                Tok::Star => ArithOp::Mul,
                Tok::Slash => ArithOp::Div,
                _ => return Ok(left),
            };
            self.next();
            let right = self.unary()?;
            left = Expr::Binary {
                op,
                left: Box::new(left),
                right: Box::new(right),
            };
        }
    }

    fn unary(&mut self) -> Result<Expr, DslError> {
        if *self.peek() == Tok::Minus {
            self.next();
            if let Tok::Number(n) = *self.peek() {
                self.next();
                return self.postfix(Expr::Number(-n));
            }
            let inner = self.unary()?;
            return Ok(Expr::Binary {
                op: ArithOp::Sub,
                left: Box::new(Expr::Number(0.0)),
                right: Box::new(inner),
            });
        }
        let base = self.primary()?;
        self.postfix(base)
    }

    fn primary(&mut self) -> Result<Expr, DslError> {
        match self.peek().clone() {
            Tok::Number(n) => {
                self.next();
                Ok(Expr::Number(n))
            }
            Tok::LParen => {
                self.next();
                let first = self.expr()?;
                if *self.peek() == Tok::Comma {
                    let mut items = vec![first];
                    while *self.peek() == Tok::Comma {
                        self.next();
                        items.push(self.expr()?);
                    }
                    self.expect(Tok::RParen)?;
                    Ok(Expr::Tuple(items))
                } else {
                    self.expect(Tok::RParen)?;
                    Ok(first)
                }
            }
            Tok::Ident(name) if name == "days_where" && *self.peek_at(1) == Tok::LParen => {
                self.next();
                self.next();
                let series = self.expr()?;
                let op = self.cmp_op()?;
                let threshold = self.signed_number()?;
                self.expect(Tok::RParen)?;
                Ok(Expr::DaysWhere {
                    series: Box::new(series),
                    op,
                    threshold,
                })
            }
            Tok::Ident(name) if name == "most_recent_day_with" && *self.peek_at(1) == Tok::LParen => {
                self.next();
                self.next();
                let predicates = self.predicates()?;
                self.expect(Tok::RParen)?;
                Ok(Expr::MostRecentDayWith { predicates })
            }
            Tok::Ident(name) => {
                if name == "let" || name == "and" || name == "days_where" || name == "most_recent_day_with" {
                    return Err(self.error_here(format!("unexpected keyword '{name}'")));
                }
                self.next();
                Ok(match TableName::from_ident(&name) {
                    Some(t) => Expr::Table(t),
                    None => Expr::Var(name),
                })
            }
            other => Err(self.error_here(format!("expected expression, found {}", other.describe()))),
        }
    }

    fn postfix(&mut self, mut expr: Expr) -> Result<Expr, DslError> {
        loop {
            match self.peek() {
                Tok::LBracket => {
                    self.next();
                    let column = self.expect_string()?;
                    self.expect(Tok::RBracket)?;
                    expr = Expr::Project {
                        target: Box::new(expr),
                        column,
                    };
                }
                Tok::Dot => {
                    self.next();
                    let method = self.expect_ident()?;
                    self.expect(Tok::LParen)?;
                    let target = Box::new(expr);
                    expr = match method.as_str() {
                        "during" => {
                            let period = self.expect_string()?;
                            Expr::During { target, period }
                        }
                        "where" => Expr::Where {
                            target,
                            predicates: self.predicates()?,
                        },
                        "on" => Expr::On {
                            target,
                            dates: Box::new(self.expr()?),
                        },
                        "corr" => Expr::Corr {
                            left: target,
                            right: Box::new(self.expr()?),
                        },
                        "dates" => Expr::Dates { target },
                        m => match AggFn::from_name(m) {
                            Some(func) => Expr::Aggregate { target, func },
                            None => return Err(self.error_here(format!("unknown method '.{m}()'"))),
                        },
                    };
                    self.expect(Tok::RParen)?;
                }
                _ => return Ok(expr),
            }
        }
    }

    fn cmp_op(&mut self) -> Result<CmpOp, DslError> {
        match self.peek().clone() {
            Tok::Cmp(sym) => {
                self.next();
                Ok(CmpOp::from_symbol(sym).expect("lexer emits known comparison symbols"))
            }
            Tok::Assign => Err(self.error_here("expected comparison operator, found '=' (use '==')")),
            other => Err(self.error_here(format!("expected comparison operator, found {}", other.describe()))),
        }
    }

    fn signed_number(&mut self) -> Result<f64, DslError> {
        let negative = if *self.peek() == Tok::Minus {
            self.next();
            true
        } else {
            false
        };
        match *self.peek() {
            Tok::Number(n) => {
                self.next();
                Ok(if negative { -n } else { n })
            }
            _ => Err(self.error_here(format!("expected number, found {}", self.peek().describe()))),
        }
    }

    fn predicates(&mut self) -> Result<Vec<Predicate>, DslError> {
        let mut out = vec![self.predicate()?];
        while self.is_ident("and") {
            self.next();
            out.push(self.predicate()?);
        }
        Ok(out)
    }

    fn predicate(&mut self) -> Result<Predicate, DslError> {
        let column = self.expect_ident()?;
        let op = self.cmp_op()?;
        let value = match self.peek().clone() {
            Tok::Str(s) => {
                self.next();
                Literal::Str(s)
            }
            _ => Literal::Number(self.signed_number()?),
        };
        Ok(Predicate { column, op, value })
    }
}
