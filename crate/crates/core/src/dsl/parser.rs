//! Recursive-descent parser for the function DSL.
//!
//! ```text
//! expr   := term (("+"|"-") term)*
//! term   := factor (("*"|"/") factor)*
//! factor := unary ("^" factor)?
//! unary  := "-" unary | atom
//! atom   := number | var | func "(" expr ("," expr)* ")" | "(" expr ")"
//! ```

use super::ast::{BinOp, Expr, Func, Var};
use std::fmt;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("parse error at offset {position}: {message}")]
pub struct ParseError {
    /// Byte offset of the first offending token (the input length at end of input).
    pub position: usize,
    pub message: String,
}

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
    Eof,
}

impl fmt::Display for Tok {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tok::Num(c) => write!(f, "number {c}"),
            Tok::Ident(s) => write!(f, "identifier '{s}'"),
            Tok::Plus => f.write_str("'+'"),
            Tok::Minus => f.write_str("'-'"),
            Tok::Star => f.write_str("'*'"),
            Tok::Slash => f.write_str("'/'"),
            Tok::Caret => f.write_str("'^'"),
            Tok::LParen => f.write_str("'('"),
            Tok::RParen => f.write_str("')'"),
            Tok::Comma => f.write_str("','"),
            Tok::Eof => f.write_str("end of input"),
        }
    }
}

fn lex(text: &str) -> Result<Vec<(Tok, usize)>, ParseError> {
    let bytes = text.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        let start = i;
        let tok = match c {
            b' ' | b'\t' | b'\n' | b'\r' => {
                i += 1;
                continue;
            }
            b'+' => Tok::Plus,
            b'-' => Tok::Minus,
            b'*' => Tok::Star,
            b'/' => Tok::Slash,
            b'^' => Tok::Caret,
            b'(' => Tok::LParen,
            b')' => Tok::RParen,
            b',' => Tok::Comma,
            b'0'..=b'9' | b'.' => {
                let end = scan_number(bytes, i).ok_or_else(|| ParseError {
                    position: start,
                    message: "malformed number".into(),
                })?;
                let lit = &text[start..end];
                let value: f64 = lit.parse().map_err(|_| ParseError {
                    position: start,
                    message: format!("malformed number '{lit}'"),
                })?;
                if !value.is_finite() {
                    return Err(ParseError {
                        position: start,
                        message: format!("number '{lit}' is not finite"),
                    });
                }
                out.push((Tok::Num(value), start));
                i = end;
                continue;
            }
            c if c.is_ascii_alphabetic() || c == b'_' => {
                let mut end = i;
                while end < bytes.len() && (bytes[end].is_ascii_alphanumeric() || bytes[end] == b'_') {
                    end += 1;
                }
                out.push((Tok::Ident(text[start..end].to_string()), start));
                i = end;
                continue;
            }
            _ => {
                let ch = text[start..].chars().next().unwrap_or('?');
                return Err(ParseError {
                    position: start,
                    message: format!("unexpected character '{ch}'"),
                });
            }
        };
        out.push((tok, start));
        i += 1;
    }
    out.push((Tok::Eof, text.len()));
    Ok(out)
}

/// Returns the end offset of a number literal starting at `i`, if well formed.
fn scan_number(b: &[u8], mut i: usize) -> Option<usize> {
    let digits = |b: &[u8], mut i: usize| {
        let s = i;
        while i < b.len() && b[i].is_ascii_digit() {
            i += 1;
        }
        (i, i - s)
    };
    let (after_int, n_int) = digits(b, i);
    i = after_int;
    let mut n_frac = 0;
    if i < b.len() && b[i] == b'.' {
        let (after_frac, n) = digits(b, i + 1);
        i = after_frac;
        n_frac = n;
    }
    if n_int + n_frac == 0 {
        return None;
    }
    if i < b.len() && (b[i] == b'e' || b[i] == b'E') {
        let mut j = i + 1;
        if j < b.len() && (b[j] == b'+' || b[j] == b'-') {
            j += 1;
        }
        let (after_exp, n_exp) = digits(b, j);
        if n_exp == 0 {
            return None;
        }
        i = after_exp;
    }
    Some(i)
}

struct Parser {
    toks: Vec<(Tok, usize)>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].0
    }

    fn offset(&self) -> usize {
        self.toks[self.pos].1
    }

    fn bump(&mut self) -> Tok {
        let t = self.toks[self.pos].0.clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn error<T>(&self, message: impl Into<String>) -> Result<T, ParseError> {
        Err(ParseError {
            position: self.offset(),
            message: message.into(),
        })
    }

    fn expect(&mut self, want: Tok) -> Result<(), ParseError> {
        if *self.peek() == want {
            self.bump();
            Ok(())
        } else {
            self.error(format!("expected {want}, found {}", self.peek()))
        }
    }

    fn expr(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.term()?;
        loop {
            let op = match self.peek() {
                Tok::Plus => BinOp::Add,
                Tok::Minus => BinOp::Sub,
                _ => return Ok(lhs),
            };
            self.bump();
            let rhs = self.term()?;
            lhs = Expr::binary(op, lhs, rhs);
        }
    }

    fn term(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.factor()?;
        loop {
            let op = match self.peek() {
                Tok::Star => BinOp::Mul,
                Tok::Slash => BinOp::Div,
                _ => return Ok(lhs),
            };
            self.bump();
            let rhs = self.factor()?;
            lhs = Expr::binary(op, lhs, rhs);
        }
    }

    fn factor(&mut self) -> Result<Expr, ParseError> {
        let base = self.unary()?;
        if *self.peek() == Tok::Caret {
            self.bump();
            let exponent = self.factor()?;
            return Ok(Expr::binary(BinOp::Pow, base, exponent));
        }
        Ok(base)
    }

    fn unary(&mut self) -> Result<Expr, ParseError> {
        if *self.peek() == Tok::Minus {
            self.bump();
            return Ok(Expr::neg(self.unary()?));
        }
        self.atom()
    }

    fn atom(&mut self) -> Result<Expr, ParseError> {
        let at = self.offset();
        match self.bump() {
            Tok::Num(c) => Ok(Expr::Num(c)),
            Tok::LParen => {
                let inner = self.expr()?;
                self.expect(Tok::RParen)?;
                Ok(inner)
            }
            Tok::Ident(name) => {
                if let Some(v) = Var::from_name(&name) {
                    return Ok(Expr::Var(v));
                }
                let Some(func) = Func::from_name(&name) else {
                    return Err(ParseError {
                        position: at,
                        message: format!("unknown identifier '{name}'"),
                    });
                };
                self.expect(Tok::LParen)?;
                let mut args = vec![self.expr()?];
                while *self.peek() == Tok::Comma {
                    self.bump();
                    args.push(self.expr()?);
                }
                self.expect(Tok::RParen)?;
                if !func.accepts(args.len()) {
                    return Err(ParseError {
                        position: at,
                        message: format!("{} takes {}, got {}", func.name(), func.arity_hint(), args.len()),
                    });
                }
                Ok(Expr::Call(func, args))
            }
            other => Err(ParseError {
                position: at,
                message: format!("expected an operand, found {other}"),
            }),
        }
    }
}

/// Parse DSL text into an expression tree.
pub fn parse(text: &str) -> Result<Expr, ParseError> {
    let mut p = Parser {
        toks: lex(text)?,
        pos: 0,
    };
    let e = p.expr()?;
    if *p.peek() != Tok::Eof {
        return p.error(format!("unexpected {} after expression", p.peek()));
    }
    Ok(e)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unbalanced_paren_reports_end_of_input() {
        let err = parse("1/(1+x").unwrap_err();
        assert_eq!(err.position, 6);
        assert!(err.message.contains("')'"), "{}", err.message);
    }

    #[test]
    fn precedence_and_associativity() {
        use BinOp::*;
        let x = || Expr::Var(Var::X);
        let n = Expr::Num;
        assert_eq!(
            parse("1+2*x").unwrap(),
            Expr::binary(Add, n(1.0), Expr::binary(Mul, n(2.0), x()))
        );
        assert_eq!(
            parse("x-1-2").unwrap(),
            Expr::binary(Sub, Expr::binary(Sub, x(), n(1.0)), n(2.0))
        );
        assert_eq!(
            parse("x^2^3").unwrap(),
            Expr::binary(Pow, x(), Expr::binary(Pow, n(2.0), n(3.0)))
        );
        // The base of `^` is a unary, so a leading minus binds to the base.
        assert_eq!(
            parse("-x^2").unwrap(),
            Expr::binary(Pow, Expr::neg(x()), n(2.0))
        );
        assert_eq!(parse("x^-2").unwrap(), Expr::binary(Pow, x(), Expr::neg(n(2.0))));
        assert_eq!(parse("2*-x").unwrap(), Expr::binary(Mul, n(2.0), Expr::neg(x())));
    }

    #[test]
    fn numbers() {
        assert_eq!(parse("1.5").unwrap(), Expr::Num(1.5));
        assert_eq!(parse(".5").unwrap(), Expr::Num(0.5));
        assert_eq!(parse("2e-3").unwrap(), Expr::Num(2e-3));
        assert_eq!(parse("1E+2").unwrap(), Expr::Num(100.0));
        assert!(parse("1e").is_err());
        assert!(parse(".").is_err());
        assert!(parse("1e999").is_err());
    }

    #[test]
    fn errors_point_at_offender() {
        assert_eq!(parse("foo(x)").unwrap_err().position, 0);
        assert_eq!(parse("x + $").unwrap_err().position, 4);
        assert_eq!(parse("exp(x, y)").unwrap_err().position, 0);
        assert_eq!(parse("x y").unwrap_err().position, 2);
        assert_eq!(parse("").unwrap_err().position, 0);
        assert_eq!(parse("exp x").unwrap_err().position, 4);
        assert_eq!(parse("piecewise(x, 1)").unwrap_err().position, 0);
        assert_eq!(parse("min(x)").unwrap_err().position, 0);
    }

    #[test]
    fn calls() {
        let e = parse("ind(x,0,1)*ind(mod(floor(y),2),0,0)").unwrap();
        assert_eq!(e.free_vars(), vec![Var::X, Var::Y]);
        let e = parse("piecewise(ind(x,0,1), 2, ind(x,1,2), 3, 0)").unwrap();
        assert!(matches!(e, Expr::Call(Func::Piecewise, ref a) if a.len() == 5));
        assert!(parse("max(x, y, z)").is_ok());
    }
}
