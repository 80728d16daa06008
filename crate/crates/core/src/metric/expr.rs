//! Scalar expression trees over chart variables, with a small recursive-descent
//! parser and a canonical printer.
//!
//! Grammar (precedence low to high):
//!
//! ```text
//! expr  := term (('+' | '-') term)*
//! term  := unary (('*' | '/') unary)*
//! unary := ('-' | '+') unary | power
//! power := atom ('^' unary)?
//! atom  := number | 'pi' | x<i> | func '(' expr ')' | '(' expr ')'
//! func  := sin | cos | sinh | cosh | exp | log
//! ```
//!
//! `^` is right associative and binds tighter than unary minus, so `-x1^2`
//! is `-(x1^2)`.

use std::fmt;

use crate::error::{ParseError, ParseErrorKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Sin,
    Cos,
    Sinh,
    Cosh,
    Exp,
    Log,
}

impl Func {
    fn from_name(name: &str) -> Option<Self> {
        Some(match name {
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "sinh" => Func::Sinh,
            "cosh" => Func::Cosh,
            "exp" => Func::Exp,
            "log" => Func::Log,
            _ => return None,
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Sinh => "sinh",
            Func::Cosh => "cosh",
            Func::Exp => "exp",
            Func::Log => "log",
        }
    }
}

/// Expression tree. Variables are 0-based (`x1` is `Var(0)`).
#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Num(f64),
    Pi,
    Var(usize),
    Neg(Box<Expr>),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    Pow(Box<Expr>, Box<Expr>),
    Call(Func, Box<Expr>),
}

impl Expr {
    pub fn num(v: f64) -> Self {
        Expr::Num(v)
    }

    /// Largest variable index used, plus one.
    pub fn arity(&self) -> usize {
        match self {
            Expr::Num(_) | Expr::Pi => 0,
            Expr::Var(i) => i + 1,
            Expr::Neg(a) | Expr::Call(_, a) => a.arity(),
            Expr::Add(a, b)
            | Expr::Sub(a, b)
            | Expr::Mul(a, b)
            | Expr::Div(a, b)
            | Expr::Pow(a, b) => a.arity().max(b.arity()),
        }
    }

    /// Value of a variable-free expression.
    pub fn constant_value(&self) -> Option<f64> {
        Some(match self {
            Expr::Num(v) => *v,
            Expr::Pi => std::f64::consts::PI,
            Expr::Var(_) => return None,
            Expr::Neg(a) => -a.constant_value()?,
            Expr::Add(a, b) => a.constant_value()? + b.constant_value()?,
            Expr::Sub(a, b) => a.constant_value()? - b.constant_value()?,
            Expr::Mul(a, b) => a.constant_value()? * b.constant_value()?,
            Expr::Div(a, b) => a.constant_value()? / b.constant_value()?,
            Expr::Pow(a, b) => a.constant_value()?.powf(b.constant_value()?),
            Expr::Call(f, a) => {
                let x = a.constant_value()?;
                match f {
                    Func::Sin => x.sin(),
                    Func::Cos => x.cos(),
                    Func::Sinh => x.sinh(),
                    Func::Cosh => x.cosh(),
                    Func::Exp => x.exp(),
                    Func::Log => x.ln(),
                }
            }
        })
    }

    fn precedence(&self) -> u8 {
        match self {
            Expr::Add(..) | Expr::Sub(..) => 1,
            Expr::Mul(..) | Expr::Div(..) => 2,
            Expr::Neg(_) => 3,
            Expr::Pow(..) => 4,
            Expr::Num(v) if *v < 0.0 || (*v == 0.0 && v.is_sign_negative()) => 3,
            Expr::Num(_) | Expr::Pi | Expr::Var(_) | Expr::Call(..) => 5,
        }
    }

    fn fmt_child(&self, f: &mut fmt::Formatter<'_>, parens: bool) -> fmt::Result {
        if parens {
            write!(f, "({self})")
        } else {
            write!(f, "{self}")
        }
    }
}

pub(crate) fn format_number(v: f64) -> String {
    if v.is_finite() && v.fract() == 0.0 && v.abs() < 1e15 {
        format!("{}", v)
    } else {
        format!("{:?}", v)
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Num(v) => f.write_str(&format_number(*v)),
            Expr::Pi => f.write_str("pi"),
            Expr::Var(i) => write!(f, "x{}", i + 1),
            Expr::Neg(a) => {
                f.write_str("-")?;
                a.fmt_child(f, a.precedence() < 3)
            }
            Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) | Expr::Div(a, b) => {
                let p = self.precedence();
                let op = match self {
                    Expr::Add(..) => "+",
                    Expr::Sub(..) => "-",
                    Expr::Mul(..) => "*",
                    _ => "/",
                };
                a.fmt_child(f, a.precedence() < p)?;
                f.write_str(op)?;
                b.fmt_child(f, b.precedence() <= p)
            }
            Expr::Pow(a, b) => {
                a.fmt_child(f, a.precedence() <= 4)?;
                f.write_str("^")?;
                b.fmt_child(f, b.precedence() < 5)
            }
            Expr::Call(func, a) => write!(f, "{}({})", func.name(), a),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Op(char),
}

#[derive(Debug, Clone)]
struct Token {
    tok: Tok,
    /// 0-based character offset within the parsed text.
    offset: usize,
}

/// Position of a text fragment inside the full metric source.
#[derive(Debug, Clone, Copy)]
pub(crate) struct SourcePos {
    pub line: usize,
    pub column: usize,
}

fn syntax(pos: SourcePos, offset: usize, msg: impl Into<String>) -> ParseError {
    ParseError {
        line: pos.line,
        column: pos.column + offset,
        kind: ParseErrorKind::Syntax(msg.into()),
    }
}

fn tokenize(text: &str, pos: SourcePos) -> Result<Vec<Token>, ParseError> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if c.is_whitespace() {
            i += 1;
        } else if c.is_ascii_digit()
            || (c == '.' && chars.get(i + 1).is_some_and(|d| d.is_ascii_digit()))
        {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_digit() || chars[i] == '.') {
                i += 1;
            }
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
            let s: String = chars[start..i].iter().collect();
            let v: f64 = s
                .parse()
                .map_err(|_| syntax(pos, start, format!("malformed number '{s}'")))?;
            out.push(Token {
                tok: Tok::Num(v),
                offset: start,
            });
        } else if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            out.push(Token {
                tok: Tok::Ident(chars[start..i].iter().collect()),
                offset: start,
            });
        } else if "+-*/^(),".contains(c) {
            out.push(Token {
                tok: Tok::Op(c),
                offset: i,
            });
            i += 1;
        } else {
            return Err(syntax(pos, i, format!("unexpected character '{c}'")));
        }
    }
    Ok(out)
}

/// Parses `x<i>` into a 0-based index.
pub(crate) fn variable_index(name: &str) -> Option<usize> {
    let digits = name.strip_prefix('x')?;
    if digits.is_empty() || !digits.chars().all(|c| c.is_ascii_digit()) || digits.starts_with('0') {
        return None;
    }
    digits.parse::<usize>().ok().map(|i| i - 1)
}

struct Parser<'a> {
    toks: &'a [Token],
    i: usize,
    pos: SourcePos,
    end: usize,
    dim: Option<usize>,
}

impl Parser<'_> {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.i).map(|t| &t.tok)
    }

    fn offset(&self) -> usize {
        self.toks.get(self.i).map(|t| t.offset).unwrap_or(self.end)
    }

    fn expect_op(&mut self, c: char) -> Result<(), ParseError> {
        match self.peek() {
            Some(Tok::Op(d)) if *d == c => {
                self.i += 1;
                Ok(())
            }
            _ => Err(syntax(self.pos, self.offset(), format!("expected '{c}'"))),
        }
    }

    fn expr(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.term()?;
        while let Some(Tok::Op(c @ ('+' | '-'))) = self.peek() {
            let c = *c;
            self.i += 1;
            let rhs = self.term()?;
            lhs = if c == '+' {
                Expr::Add(Box::new(lhs), Box::new(rhs))
            } else {
                Expr::Sub(Box::new(lhs), Box::new(rhs))
            };
        }
        Ok(lhs)
    }

    fn term(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.unary()?;
        while let Some(Tok::Op(c @ ('*' | '/'))) = self.peek() {
            let c = *c;
            self.i += 1;
            let rhs = self.unary()?;
            lhs = if c == '*' {
                Expr::Mul(Box::new(lhs), Box::new(rhs))
            } else {
                Expr::Div(Box::new(lhs), Box::new(rhs))
            };
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Expr, ParseError> {
        match self.peek() {
            Some(Tok::Op('-')) => {
                self.i += 1;
                Ok(Expr::Neg(Box::new(self.unary()?)))
            }
            Some(Tok::Op('+')) => {
                self.i += 1;
                self.unary()
            }
            _ => self.power(),
        }
    }

    fn power(&mut self) -> Result<Expr, ParseError> {
        let base = self.atom()?;
        if let Some(Tok::Op('^')) = self.peek() {
            self.i += 1;
            let exponent = self.unary()?;
            return Ok(Expr::Pow(Box::new(base), Box::new(exponent)));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Expr, ParseError> {
        let offset = self.offset();
        match self.peek().cloned() {
            Some(Tok::Num(v)) => {
                self.i += 1;
                Ok(Expr::Num(v))
            }
            Some(Tok::Op('(')) => {
                self.i += 1;
                let e = self.expr()?;
                self.expect_op(')')?;
                Ok(e)
            }
            Some(Tok::Ident(name)) => {
                self.i += 1;
                if name == "pi" {
                    return Ok(Expr::Pi);
                }
                if let Some(func) = Func::from_name(&name) {
                    self.expect_op('(')?;
                    let arg = self.expr()?;
                    self.expect_op(')')?;
                    return Ok(Expr::Call(func, Box::new(arg)));
                }
                if let Some(idx) = variable_index(&name) {
                    return match self.dim {
                        Some(n) if idx >= n => Err(ParseError {
                            line: self.pos.line,
                            column: self.pos.column + offset,
                            kind: ParseErrorKind::DimensionMismatch(format!(
                                "variable {name} exceeds declared dimension {n}"
                            )),
                        }),
                        _ => Ok(Expr::Var(idx)),
                    };
                }
                Err(syntax(
                    self.pos,
                    offset,
                    format!("unknown identifier '{name}'"),
                ))
            }
            Some(Tok::Op(c)) => Err(syntax(self.pos, offset, format!("unexpected '{c}'"))),
            None => Err(syntax(self.pos, offset, "unexpected end of expression")),
        }
    }
}

/// Parses a complete expression. `pos` locates `text` within the enclosing
/// source for diagnostics; `dim` bounds the admissible variable indices.
pub(crate) fn parse_expr_at(
    text: &str,
    pos: SourcePos,
    dim: Option<usize>,
) -> Result<Expr, ParseError> {
    let toks = tokenize(text, pos)?;
    let mut p = Parser {
        toks: &toks,
        i: 0,
        pos,
        end: text.chars().count(),
        dim,
    };
    let e = p.expr()?;
    if p.i != toks.len() {
        return Err(syntax(pos, p.offset(), "trailing input after expression"));
    }
    Ok(e)
}

/// Parses a standalone expression (diagnostics are reported on line 1).
pub fn parse_expr(text: &str) -> Result<Expr, ParseError> {
    parse_expr_at(text, SourcePos { line: 1, column: 1 }, None)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn precedence_and_associativity() {
        let e = parse_expr("-x1^2").unwrap();
        assert_eq!(
            e,
            Expr::Neg(Box::new(Expr::Pow(
                Box::new(Expr::Var(0)),
                Box::new(Expr::Num(2.0))
            )))
        );
        let e = parse_expr("2^3^2").unwrap();
        assert_eq!(e.constant_value(), Some(512.0));
        let e = parse_expr("8-3-2").unwrap();
        assert_eq!(e.constant_value(), Some(3.0));
        let e = parse_expr("x1^-2").unwrap();
        assert!(matches!(e, Expr::Pow(_, ref b) if matches!(**b, Expr::Neg(_))));
    }

    #[test]
    fn printer_round_trips_shapes() {
        for src in [
            "a",
            "8-(3-2)",
            "x1/(x2*x1)",
            "(-x1)^2",
            "-(x1*x2)",
            "x1*-x2",
            "sin(x1)^2",
            "2^3^2",
            "(2^3)^2",
            "1e-7*x1+0.1",
            "cosh(x1-pi/2)/exp(log(x2))",
        ] {
            if src == "a" {
                assert!(parse_expr(src).is_err());
                continue;
            }
            let e = parse_expr(src).unwrap();
            let printed = e.to_string();
            assert_eq!(parse_expr(&printed).unwrap(), e, "{src} -> {printed}");
        }
    }

    #[test]
    fn errors_carry_columns() {
        let err = parse_expr("sin(x1 + )").unwrap_err();
        assert_eq!(err.line, 1);
        assert_eq!(err.column, 10);
        let err = parse_expr("x1 $ 2").unwrap_err();
        assert_eq!(err.column, 4);
        assert!(parse_expr("foo(x1)").is_err());
        assert!(parse_expr("x0").is_err());
    }
}
