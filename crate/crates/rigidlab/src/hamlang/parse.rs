use super::ast::{Func, Node, Var};
use super::{Dims, HamlangError};

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    LParen,
    RParen,
    Comma,
}

#[derive(Debug, Clone)]
struct Spanned {
    tok: Tok,
    line: usize,
    col: usize,
}

fn lex(src: &str) -> Result<Vec<Spanned>, HamlangError> {
    let mut out = Vec::new();
    let mut line = 1usize;
    let mut col = 1usize;
    let chars: Vec<char> = src.chars().collect();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        let (tline, tcol) = (line, col);
        let mut push = |t: Tok| {
            out.push(Spanned {
                tok: t,
                line: tline,
                col: tcol,
            })
        };
        match c {
            '\n' => {
                line += 1;
                col = 1;
                i += 1;
                continue;
            }
            c if c.is_whitespace() => {}
            '+' => push(Tok::Plus),
            '-' => push(Tok::Minus),
            '*' => push(Tok::Star),
            '/' => push(Tok::Slash),
            '^' => push(Tok::Caret),
            '(' => push(Tok::LParen),
            ')' => push(Tok::RParen),
            ',' => push(Tok::Comma),
            c if c.is_ascii_digit() || c == '.' => {
                let start = i;
                while i < chars.len() && (chars[i].is_ascii_digit() || chars[i] == '.') {
                    i += 1;
                }
                // optional exponent
                if i < chars.len() && (chars[i] == 'e' || chars[i] == 'E') {
                    let mut j = i + 1;
                    if j < chars.len() && (chars[j] == '+' || chars[j] == '-') {
                        j += 1;
                    }
                    if j < chars.len() && chars[j].is_ascii_digit() {
                        i = j;
                        while i < chars.len() && chars[i].is_ascii_digit() {
                            i += 1;
                        }
                    }
                }
                let text: String = chars[start..i].iter().collect();
                let value = text.parse::<f64>().map_err(|_| HamlangError::Syntax {
                    line: tline,
                    col: tcol,
                    message: format!("invalid number literal `{}`", text),
                })?;
                out.push(Spanned {
                    tok: Tok::Num(value),
                    line: tline,
                    col: tcol,
                });
                col += i - start;
                continue;
            }
            c if c.is_ascii_alphabetic() => {
                let start = i;
                while i < chars.len() && (chars[i].is_ascii_alphanumeric()) {
                    i += 1;
                }
                let text: String = chars[start..i].iter().collect();
                out.push(Spanned {
                    tok: Tok::Ident(text),
                    line: tline,
                    col: tcol,
                });
                col += i - start;
                continue;
            }
            other => {
                return Err(HamlangError::Syntax {
                    line,
                    col,
                    message: format!("unexpected character `{}`", other),
                })
            }
        }
        i += 1;
        col += 1;
    }
    Ok(out)
}

struct Parser<'a> {
    toks: &'a [Spanned],
    pos: usize,
    dims: Dims,
}

impl<'a> Parser<'a> {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|s| &s.tok)
    }

    fn here(&self) -> (usize, usize) {
        self.toks
            .get(self.pos)
            .or_else(|| self.toks.last())
            .map(|s| (s.line, s.col))
            .unwrap_or((1, 1))
    }

    fn err(&self, message: impl Into<String>) -> HamlangError {
        let (line, col) = self.here();
        HamlangError::Syntax {
            line,
            col,
            message: message.into(),
        }
    }

    fn expect(&mut self, t: Tok, what: &str) -> Result<(), HamlangError> {
        match self.peek() {
            Some(x) if *x == t => {
                self.pos += 1;
                Ok(())
            }
            _ => Err(self.err(format!("expected {}", what))),
        }
    }

    fn expr(&mut self) -> Result<Node, HamlangError> {
        let mut lhs = self.term()?;
        loop {
            match self.peek() {
                Some(Tok::Plus) => {
                    self.pos += 1;
                    lhs = Node::Add(Box::new(lhs), Box::new(self.term()?));
                }
                Some(Tok::Minus) => {
                    self.pos += 1;
                    lhs = Node::Sub(Box::new(lhs), Box::new(self.term()?));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn term(&mut self) -> Result<Node, HamlangError> {
        let mut lhs = self.factor()?;
        loop {
            match self.peek() {
                Some(Tok::Star) => {
                    self.pos += 1;
                    lhs = Node::Mul(Box::new(lhs), Box::new(self.factor()?));
                }
                Some(Tok::Slash) => {
                    self.pos += 1;
                    lhs = Node::Div(Box::new(lhs), Box::new(self.factor()?));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn factor(&mut self) -> Result<Node, HamlangError> {
        let base = self.base()?;
        if let Some(Tok::Caret) = self.peek() {
            self.pos += 1;
            let negative = if let Some(Tok::Minus) = self.peek() {
                self.pos += 1;
                true
            } else {
                false
            };
            match self.peek().cloned() {
                Some(Tok::Num(x)) if x.fract() == 0.0 && x.abs() <= i32::MAX as f64 => {
                    self.pos += 1;
                    let n = x as i32;
                    Ok(Node::Pow(Box::new(base), if negative { -n } else { n }))
                }
                _ => Err(self.err("expected integer exponent after `^`")),
            }
        } else {
            Ok(base)
        }
    }

    fn base(&mut self) -> Result<Node, HamlangError> {
        match self.peek().cloned() {
            Some(Tok::Minus) => {
                self.pos += 1;
                Ok(Node::Neg(Box::new(self.base()?)))
            }
            Some(Tok::Num(x)) => {
                self.pos += 1;
                Ok(Node::Num(x))
            }
            Some(Tok::LParen) => {
                self.pos += 1;
                let inner = self.expr()?;
                self.expect(Tok::RParen, "`)`")?;
                Ok(inner)
            }
            Some(Tok::Ident(name)) => {
                let (line, col) = self.here();
                self.pos += 1;
                if let Some(func) = Func::from_name(&name) {
                    self.expect(Tok::LParen, "`(` after function name")?;
                    let mut args = vec![self.expr()?];
                    while let Some(Tok::Comma) = self.peek() {
                        self.pos += 1;
                        args.push(self.expr()?);
                    }
                    self.expect(Tok::RParen, "`)`")?;
                    if args.len() != func.arity() {
                        return Err(HamlangError::Arity {
                            line,
                            col,
                            func: func.name(),
                            expected: func.arity(),
                            got: args.len(),
                        });
                    }
                    return Ok(Node::Call(func, args));
                }
                let var = self.variable(&name, line, col)?;
                Ok(Node::Var(var))
            }
            _ => Err(self.err("expected a number, variable, function call or `(`")),
        }
    }

    fn variable(&self, name: &str, line: usize, col: usize) -> Result<Var, HamlangError> {
        if name == "t" {
            return Ok(Var::T);
        }
        let (prefix, idx_str) = if let Some(rest) = name.strip_prefix("xi") {
            ("xi", rest)
        } else if let Some(rest) = name.strip_prefix('q') {
            ("q", rest)
        } else if let Some(rest) = name.strip_prefix('p') {
            ("p", rest)
        } else {
            return Err(HamlangError::UnknownIdentifier {
                line,
                col,
                name: name.to_string(),
            });
        };
        let idx: usize = idx_str.parse().map_err(|_| HamlangError::UnknownIdentifier {
            line,
            col,
            name: name.to_string(),
        })?;
        if idx == 0 {
            return Err(HamlangError::UnknownIdentifier {
                line,
                col,
                name: name.to_string(),
            });
        }
        let bound = match prefix {
            "xi" => self.dims.k,
            _ => self.dims.d,
        };
        if idx > bound {
            return Err(HamlangError::IndexOutOfRange {
                line,
                col,
                name: name.to_string(),
                bound,
            });
        }
        Ok(match prefix {
            "q" => Var::Q(idx - 1),
            "p" => Var::P(idx - 1),
            _ => Var::Xi(idx - 1),
        })
    }
}

pub fn parse(src: &str, dims: Dims) -> Result<Node, HamlangError> {
    if src.trim().is_empty() {
        return Err(HamlangError::Syntax {
            line: 1,
            col: 1,
            message: "empty expression".to_string(),
        });
    }
    let toks = lex(src)?;
    let mut p = Parser {
        toks: &toks,
        pos: 0,
        dims,
    };
    let node = p.expr()?;
    if p.pos != toks.len() {
        return Err(p.err("unexpected trailing input"));
    }
    Ok(node)
}
