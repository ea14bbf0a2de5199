use super::error::DslError;

#[derive(Debug, Clone, PartialEq)]
pub enum Tok {
    Ident(String),
    Number(f64),
    Str(String),
    LParen,
    RParen,
    LBracket,
    RBracket,
    Dot,
    Comma,
    Semi,
    Assign,
    Cmp(&'static str),
    Plus,
    Minus,
    Star,
    Slash,
    Eof,
}

impl Tok {
    pub fn describe(&self) -> String {
        match self {
            Tok::Ident(s) => format!("identifier '{s}'"),
            Tok::Number(n) => format!("number {n}"),
            Tok::Str(s) => format!("string {s:?}"),
            Tok::LParen => "'('".into(),
            Tok::RParen => "')'".into(),
            Tok::LBracket => "'['".into(),
            Tok::RBracket => "']'".into(),
            Tok::Dot => "'.'".into(),
            Tok::Comma => "','".into(),
            Tok::Semi => "';'".into(),
            Tok::Assign => "'='".into(),
            Tok::Cmp(op) => format!("'{op}'"),
            Tok::Plus => "'+'".into(),
            Tok::Minus => "'-'".into(),
            Tok::Star => "'*'".into(),
            Tok::Slash => "'/'".into(),
            Tok::Eof => "end of input".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Token {
    pub tok: Tok,
    pub line: usize,
    pub col: usize,
}

pub fn tokenize(src: &str) -> Result<Vec<Token>, DslError> {
    let chars: Vec<char> = src.chars().collect();
    let mut out = Vec::new();
    let (mut i, mut line, mut col) = (0usize, 1usize, 1usize);

    macro_rules! push {
        ($tok:expr, $len:expr, $l:expr, $c:expr) => {{
            out.push(Token {
                tok: $tok,
                line: $l,
                col: $c,
            });
            i += $len;
            col += $len;
        }};
    }

    while i < chars.len() {
        let c = chars[i];
        let (l, cl) = (line, col);
        match c {
            '\n' => {
                i += 1;
                line += 1;
                col = 1;
            }
            c if c.is_whitespace() => {
                i += 1;
                col += 1;
            }
            '#' => {
                // comment to end of line
                while i < chars.len() && chars[i] != '\n' {
                    i += 1;
                }
            }
            '(' => push!(Tok::LParen, 1, l, cl),
            ')' => push!(Tok::RParen, 1, l, cl),
            '[' => push!(Tok::LBracket, 1, l, cl),
            ']' => push!(Tok::RBracket, 1, l, cl),
            '.' if !chars.get(i + 1).is_some_and(|d| d.is_ascii_digit()) => push!(Tok::Dot, 1, l, cl),
            ',' => push!(Tok::Comma, 1, l, cl),
            ';' => push!(Tok::Semi, 1, l, cl),
            '+' => push!(Tok::Plus, 1, l, cl),
            '-' => push!(Tok::Minus, 1, l, cl),
            '*' => push!(Tok::Star, 1, l, cl),
            '/' => push!(Tok::Slash, 1, l, cl),
            '=' | '!' | '<' | '>' => {
                let next = chars.get(i + 1).copied();
                match (c, next) {
                    ('=', Some('=')) => push!(Tok::Cmp("=="), 2, l, cl),
                    ('!', Some('=')) => push!(Tok::Cmp("!="), 2, l, cl),
                    ('<', Some('=')) => push!(Tok::Cmp("<="), 2, l, cl),
                    ('>', Some('=')) => push!(Tok::Cmp(">="), 2, l, cl),
                    ('<', _) => push!(Tok::Cmp("<"), 1, l, cl),
                    ('>', _) => push!(Tok::Cmp(">"), 1, l, cl),
                    ('=', _) => push!(Tok::Assign, 1, l, cl),
                    _ => return Err(DslError::parse(l, cl, "unexpected character '!'")),
                }
            }
            '"' | '\'' => {
                let quote = c;
                let mut s = String::new();
                let mut j = i + 1;
                let mut closed = false;
                while j < chars.len() {
                    match chars[j] {
                        '\\' if j + 1 < chars.len() => {
                            s.push(chars[j + 1]);
                            j += 2;
                        }
                        '\n' => break,
                        ch if ch == quote => {
                            closed = true;
                            j += 1;
                            break;
                        }
                        ch => {
                            s.push(ch);
                            j += 1;
                        }
                    }
                }
                if !closed {
                    return Err(DslError::parse(l, cl, "unterminated string literal"));
                }
                let len = j - i;
                push!(Tok::Str(s), len, l, cl);
            }
            c if c.is_ascii_digit() || c == '.' => {
                let mut j = i;
                while j < chars.len() && chars[j].is_ascii_digit() {
                    j += 1;
                }
                if j < chars.len() && chars[j] == '.' && chars.get(j + 1).is_some_and(|d| d.is_ascii_digit()) {
                    j += 1;
                    while j < chars.len() && chars[j].is_ascii_digit() {
                        j += 1;
                    }
                }
                let text: String = chars[i..j].iter().collect();
                let value: f64 = text
                    .parse()
                    .map_err(|_| DslError::parse(l, cl, format!("invalid number '{text}'")))?;
                let len = j - i;
                push!(Tok::Number(value), len, l, cl);
            }
            c if c.is_ascii_alphabetic() || c == '_' => {
                let mut j = i;
                while j < chars.len() && (chars[j].is_ascii_alphanumeric() || chars[j] == '_') {
                    j += 1;
                }
                let text: String = chars[i..j].iter().collect();
                let len = j - i;
                push!(Tok::Ident(text), len, l, cl);
            }
            other => {
                return Err(DslError::parse(l, cl, format!("unexpected character '{other}'")));
            }
        }
    }
    out.push(Token {
        tok: Tok::Eof,
        line,
        col,
    });
    Ok(out)
}
