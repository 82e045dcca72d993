//! Hand-written lexer and recursive-descent parser for grounding programs.
//!
//! Grammar (newlines end statements except inside brackets or right after `=`):
//!
//! ```text
//! program   := (stmt? NEWLINE)*
//! stmt      := IDENT '=' call | call
//! call      := IDENT '(' [arg (',' arg)* ','?] ')'
//! arg       := IDENT '=' value | value        -- a positional value must be the only argument
//! value     := STRING | IDENT | '[' STRING,* ']' | '[' IDENT,* ']' | '{' IDENT,* '}'
//! ```

use thiserror::Error;

use super::ast::{Call, ProgramStmt, StmtKind, Value};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{line}:{col}: {message}")]
pub struct ParseError {
    pub line: usize,
    pub col: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Str(String),
    Number(String),
    LParen,
    RParen,
    LBracket,
    RBracket,
    LBrace,
    RBrace,
    Comma,
    Equals,
    Newline,
    Eof,
}

impl Tok {
    fn describe(&self) -> String {
        match self {
            Tok::Ident(s) => format!("identifier `{s}`"),
            Tok::Str(_) => "string".into(),
            Tok::Number(n) => format!("number `{n}`"),
            Tok::LParen => "`(`".into(),
            Tok::RParen => "`)`".into(),
            Tok::LBracket => "`[`".into(),
            Tok::RBracket => "`]`".into(),
            Tok::LBrace => "`{`".into(),
            Tok::RBrace => "`}`".into(),
            Tok::Comma => "`,`".into(),
            Tok::Equals => "`=`".into(),
            Tok::Newline => "end of line".into(),
            Tok::Eof => "end of input".into(),
        }
    }
}

#[derive(Debug, Clone)]
struct Spanned {
    tok: Tok,
    line: usize,
    col: usize,
}

fn err(line: usize, col: usize, message: impl Into<String>) -> ParseError {
    ParseError { line, col, message: message.into() }
}

fn lex(text: &str) -> Result<Vec<Spanned>, ParseError> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let (mut i, mut line, mut col) = (0usize, 1usize, 1usize);
    let mut depth: Vec<(char, usize, usize)> = Vec::new();

    while i < chars.len() {
        let c = chars[i];
        let (tl, tc) = (line, col);
        let mut push = |tok: Tok| out.push(Spanned { tok, line: tl, col: tc });
        match c {
            '\n' => {
                if depth.is_empty() {
                    push(Tok::Newline);
                }
                i += 1;
                line += 1;
                col = 1;
                continue;
            }
            ' ' | '\t' | '\r' => {}
            '#' => {
                while i < chars.len() && chars[i] != '\n' {
                    i += 1;
                }
                continue;
            }
            '(' | '[' | '{' => {
                depth.push((c, tl, tc));
                push(match c {
                    '(' => Tok::LParen,
                    '[' => Tok::LBracket,
                    _ => Tok::LBrace,
                });
            }
            ')' | ']' | '}' => {
                let open = match c {
                    ')' => '(',
                    ']' => '[',
                    _ => '{',
                };
                match depth.pop() {
                    Some((o, _, _)) if o == open => {}
                    Some((o, ol, oc)) => return Err(err(tl, tc, format!("`{c}` does not match `{o}` opened at {ol}:{oc}"))),
                    None => return Err(err(tl, tc, format!("unmatched `{c}`"))),
                }
                push(match c {
                    ')' => Tok::RParen,
                    ']' => Tok::RBracket,
                    _ => Tok::RBrace,
                });
            }
            ',' => push(Tok::Comma),
            '=' => push(Tok::Equals),
            '"' | '\'' => {
                let quote = c;
                let mut s = String::new();
                i += 1;
                col += 1;
                loop {
                    match chars.get(i) {
                        None | Some('\n') => return Err(err(tl, tc, "unterminated string")),
                        Some(&q) if q == quote => break,
                        Some('\\') => {
                            let esc = chars.get(i + 1).ok_or_else(|| err(tl, tc, "unterminated string"))?;
                            s.push(match esc {
                                'n' => '\n',
                                't' => '\t',
                                other => *other,
                            });
                            i += 2;
                            col += 2;
                        }
                        Some(&ch) => {
                            s.push(ch);
                            i += 1;
                            col += 1;
                        }
                    }
                }
                push(Tok::Str(s));
            }
            c if c.is_alphabetic() || c == '_' => {
                let start = i;
                while i < chars.len() && (chars[i].is_alphanumeric() || chars[i] == '_') {
                    i += 1;
                }
                let word: String = chars[start..i].iter().collect();
                col += i - start;
                push(Tok::Ident(word));
                continue;
            }
            c if c.is_ascii_digit() || c == '-' || c == '.' => {
                let start = i;
                i += 1;
                while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '.') {
                    i += 1;
                }
                let n: String = chars[start..i].iter().collect();
                col += i - start;
                push(Tok::Number(n));
                continue;
            }
            other => return Err(err(tl, tc, format!("unexpected character `{other}`"))),
        }
        i += 1;
        col += 1;
    }
    if let Some((o, ol, oc)) = depth.pop() {
        let what = if o == '(' { "parenthesis" } else { "bracket" };
        return Err(err(ol, oc, format!("unterminated {what} `{o}`")));
    }
    out.push(Spanned { tok: Tok::Eof, line, col });
    Ok(out)
}

struct Parser {
    toks: Vec<Spanned>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> &Spanned {
        &self.toks[self.pos]
    }

    fn peek_at(&self, offset: usize) -> &Tok {
        &self.toks[(self.pos + offset).min(self.toks.len() - 1)].tok
    }

    fn next(&mut self) -> Spanned {
        let t = self.toks[self.pos].clone();
        if self.pos < self.toks.len() - 1 {
            self.pos += 1;
        }
        t
    }

    fn expect(&mut self, want: Tok, what: &str) -> Result<Spanned, ParseError> {
        let t = self.next();
        if t.tok == want {
            Ok(t)
        } else {
            Err(err(t.line, t.col, format!("expected {what}, found {}", t.tok.describe())))
        }
    }

    fn ident(&mut self, what: &str) -> Result<(String, Spanned), ParseError> {
        let t = self.next();
        match &t.tok {
            Tok::Ident(s) => Ok((s.clone(), t.clone())),
            other => Err(err(t.line, t.col, format!("expected {what}, found {}", other.describe()))),
        }
    }

    fn program(&mut self) -> Result<Vec<ProgramStmt>, ParseError> {
        let mut stmts = Vec::new();
        loop {
            match self.peek().tok {
                Tok::Eof => return Ok(stmts),
                Tok::Newline => {
                    self.next();
                }
                _ => {
                    stmts.push(self.statement()?);
                    let t = self.next();
                    if !matches!(t.tok, Tok::Newline | Tok::Eof) {
                        return Err(err(t.line, t.col, format!("expected end of statement, found {}", t.tok.describe())));
                    }
                    if t.tok == Tok::Eof {
                        return Ok(stmts);
                    }
                }
            }
        }
    }

    fn statement(&mut self) -> Result<ProgramStmt, ParseError> {
        let (name, start) = self.ident("a statement")?;
        match self.peek().tok {
            Tok::Equals => {
                self.next();
                while self.peek().tok == Tok::Newline {
                    self.next();
                }
                let (func, _) = self.ident("a function call after `=`")?;
                let call = self.call(func)?;
                Ok(ProgramStmt { kind: StmtKind::Assign { var: name, call }, line: start.line, col: start.col })
            }
            Tok::LParen => {
                let call = self.call(name)?;
                Ok(ProgramStmt { kind: StmtKind::BareCall(call), line: start.line, col: start.col })
            }
            _ => {
                let t = self.peek();
                Err(err(t.line, t.col, format!("expected `=` or `(`, found {}", t.tok.describe())))
            }
        }
    }

    fn call(&mut self, func: String) -> Result<Call, ParseError> {
        self.expect(Tok::LParen, "`(`")?;
        let mut kwargs: Vec<(String, Value)> = Vec::new();
        let mut positional: Vec<(Value, usize, usize)> = Vec::new();
        loop {
            if self.peek().tok == Tok::RParen {
                self.next();
                break;
            }
            let at = self.peek().clone();
            if matches!(at.tok, Tok::Ident(_)) && *self.peek_at(1) == Tok::Equals {
                let (key, _) = self.ident("an argument name")?;
                self.next();
                let value = self.value()?;
                if kwargs.iter().any(|(k, _)| *k == key) {
                    return Err(err(at.line, at.col, format!("duplicate keyword argument `{key}`")));
                }
                kwargs.push((key, value));
            } else {
                let value = self.value()?;
                positional.push((value, at.line, at.col));
            }
            let t = self.next();
            match t.tok {
                Tok::Comma => continue,
                Tok::RParen => break,
                other => return Err(err(t.line, t.col, format!("expected `,` or `)`, found {}", other.describe()))),
            }
        }
        if let Some((_, line, col)) = positional.first() {
            if positional.len() > 1 || !kwargs.is_empty() {
                return Err(err(*line, *col, "positional arguments are not supported; use keyword arguments"));
            }
        }
        Ok(Call { func, kwargs, positional: positional.pop().map(|(v, _, _)| v) })
    }

    fn value(&mut self) -> Result<Value, ParseError> {
        let t = self.next();
        match t.tok {
            Tok::Str(s) => Ok(Value::StringLit(s)),
            Tok::Ident(s) => Ok(Value::VarRef(s)),
            Tok::LBracket => self.list(t),
            Tok::LBrace => {
                let names = self.idents_until(Tok::RBrace)?;
                Ok(Value::VarSet(names))
            }
            Tok::Number(n) => Err(err(t.line, t.col, format!("numeric value `{n}` is not supported"))),
            other => Err(err(t.line, t.col, format!("expected a value, found {}", other.describe()))),
        }
    }

    fn list(&mut self, open: Spanned) -> Result<Value, ParseError> {
        match &self.peek().tok {
            Tok::RBracket => Err(err(open.line, open.col, "empty list")),
            Tok::Ident(_) => Ok(Value::VarList(self.idents_until(Tok::RBracket)?)),
            _ => {
                let mut items = Vec::new();
                loop {
                    let t = self.next();
                    match t.tok {
                        Tok::Str(s) => items.push(s),
                        Tok::RBracket if !items.is_empty() => break,
                        other => return Err(err(t.line, t.col, format!("expected a string, found {}", other.describe()))),
                    }
                    let sep = self.next();
                    match sep.tok {
                        Tok::Comma => {}
                        Tok::RBracket => break,
                        other => return Err(err(sep.line, sep.col, format!("expected `,` or `]`, found {}", other.describe()))),
                    }
                }
                Ok(Value::StringList(items))
            }
        }
    }

    fn idents_until(&mut self, close: Tok) -> Result<Vec<String>, ParseError> {
        let mut names = Vec::new();
        loop {
            let t = self.next();
            match t.tok {
                Tok::Ident(s) => names.push(s),
                ref c if *c == close && !names.is_empty() => break,
                other => return Err(err(t.line, t.col, format!("expected a variable name, found {}", other.describe()))),
            }
            let sep = self.next();
            match sep.tok {
                Tok::Comma => {}
                ref c if *c == close => break,
                other => {
                    return Err(err(sep.line, sep.col, format!("expected `,` or closing bracket, found {}", other.describe())))
                }
            }
        }
        Ok(names)
    }
}

/// Parses program text into statements in source order.
pub fn parse(text: &str) -> Result<Vec<ProgramStmt>, ParseError> {
    let toks = lex(text)?;
    Parser { toks, pos: 0 }.program()
}
