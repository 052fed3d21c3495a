//! Recursive-descent parser for the expression language.
//!
//! ```text
//! expr    := term (('+' | '-') term)*
//! term    := unary (('*' | '/') unary)*
//! unary   := '-' unary | power
//! power   := atom ('^' exponent)?
//! exponent:= ['-'] INTEGER | '(' ['-'] INTEGER ')'
//! atom    := NUMBER | 'x' | FUNC '(' expr ')' | '(' expr ')'
//! FUNC    := 'sin' | 'cos' | 'exp' | 'bump'
//! ```

use super::expr::Expr;
use super::ParseError;

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
}

fn tokenize(text: &str) -> Result<Vec<(usize, Tok)>, ParseError> {
    let bytes = text.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i] as char;
        let start = i;
        match c {
            ' ' | '\t' | '\n' | '\r' => {
                i += 1;
                continue;
            }
            '+' => out.push((start, Tok::Plus)),
            '-' => out.push((start, Tok::Minus)),
            '*' => out.push((start, Tok::Star)),
            '/' => out.push((start, Tok::Slash)),
            '^' => out.push((start, Tok::Caret)),
            '(' => out.push((start, Tok::LParen)),
            ')' => out.push((start, Tok::RParen)),
            '0'..='9' | '.' => {
                while i < bytes.len() && (bytes[i].is_ascii_digit() || bytes[i] == b'.') {
                    i += 1;
                }
                if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
                    let mut j = i + 1;
                    if j < bytes.len() && (bytes[j] == b'+' || bytes[j] == b'-') {
                        j += 1;
                    }
                    if j < bytes.len() && bytes[j].is_ascii_digit() {
                        while j < bytes.len() && bytes[j].is_ascii_digit() {
                            j += 1;
                        }
                        i = j;
                    }
                }
                let lit = &text[start..i];
                let v: f64 = lit.parse().map_err(|_| ParseError::Syntax {
                    pos: start,
                    msg: format!("malformed number `{}`", lit),
                })?;
                out.push((start, Tok::Num(v)));
                continue;
            }
            c if c.is_ascii_alphabetic() || c == '_' => {
                while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                    i += 1;
                }
                out.push((start, Tok::Ident(text[start..i].to_string())));
                continue;
            }
            other => {
                return Err(ParseError::Syntax {
                    pos: start,
                    msg: format!("unexpected character `{}`", other),
                })
            }
        }
        i += 1;
    }
    Ok(out)
}

struct Parser {
    toks: Vec<(usize, Tok)>,
    pos: usize,
    end: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|(_, t)| t)
    }

    fn offset(&self) -> usize {
        self.toks.get(self.pos).map(|(p, _)| *p).unwrap_or(self.end)
    }

    fn bump(&mut self) -> Option<Tok> {
        let t = self.toks.get(self.pos).map(|(_, t)| t.clone());
        self.pos += 1;
        t
    }

    fn expect(&mut self, want: Tok, what: &str) -> Result<(), ParseError> {
        let pos = self.offset();
        match self.bump() {
            Some(t) if t == want => Ok(()),
            _ => Err(ParseError::Syntax {
                pos,
                msg: format!("expected {}", what),
            }),
        }
    }

    fn expr(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.term()?;
        loop {
            match self.peek() {
                Some(Tok::Plus) => {
                    self.bump();
                    lhs = Expr::Add(Box::new(lhs), Box::new(self.term()?));
                }
                Some(Tok::Minus) => {
                    self.bump();
                    lhs = Expr::Sub(Box::new(lhs), Box::new(self.term()?));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn term(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.unary()?;
        loop {
            match self.peek() {
                Some(Tok::Star) => {
                    self.bump();
                    lhs = Expr::Mul(Box::new(lhs), Box::new(self.unary()?));
                }
                Some(Tok::Slash) => {
                    self.bump();
                    lhs = Expr::Div(Box::new(lhs), Box::new(self.unary()?));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn unary(&mut self) -> Result<Expr, ParseError> {
        if let Some(Tok::Minus) = self.peek() {
            self.bump();
            return Ok(Expr::Neg(Box::new(self.unary()?)));
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr, ParseError> {
        let base = self.atom()?;
        if let Some(Tok::Caret) = self.peek() {
            self.bump();
            let k = self.exponent()?;
            return Ok(Expr::Pow(Box::new(base), k));
        }
        Ok(base)
    }

    fn exponent(&mut self) -> Result<i32, ParseError> {
        let parenthesised = matches!(self.peek(), Some(Tok::LParen));
        if parenthesised {
            self.bump();
        }
        let negative = matches!(self.peek(), Some(Tok::Minus));
        if negative {
            self.bump();
        }
        let pos = self.offset();
        let k = match self.bump() {
            Some(Tok::Num(v)) if v.fract() == 0.0 && v <= i32::MAX as f64 => v as i32,
            _ => {
                return Err(ParseError::Syntax {
                    pos,
                    msg: "exponent must be an integer literal".into(),
                })
            }
        };
        if parenthesised {
            self.expect(Tok::RParen, "`)` after exponent")?;
        }
        Ok(if negative { -k } else { k })
    }

    fn atom(&mut self) -> Result<Expr, ParseError> {
        let pos = self.offset();
        match self.bump() {
            Some(Tok::Num(v)) => Ok(Expr::Num(v)),
            Some(Tok::LParen) => {
                let e = self.expr()?;
                self.expect(Tok::RParen, "`)`")?;
                Ok(e)
            }
            Some(Tok::Ident(name)) => {
                if name == "x" {
                    return Ok(Expr::X);
                }
                let ctor: fn(Box<Expr>) -> Expr = match name.as_str() {
                    "sin" => Expr::Sin,
                    "cos" => Expr::Cos,
                    "exp" => Expr::Exp,
                    "bump" => Expr::Bump,
                    _ => return Err(ParseError::UnknownIdentifier { pos, name }),
                };
                self.expect(Tok::LParen, &format!("`(` after `{}`", name))?;
                let arg = self.expr()?;
                self.expect(Tok::RParen, "`)`")?;
                Ok(ctor(Box::new(arg)))
            }
            Some(_) => Err(ParseError::Syntax {
                pos,
                msg: "expected a number, `x`, a function call or `(`".into(),
            }),
            None => Err(ParseError::Syntax {
                pos,
                msg: "unexpected end of input".into(),
            }),
        }
    }
}

pub fn parse_expression(text: &str) -> Result<Expr, ParseError> {
    let toks = tokenize(text)?;
    let mut p = Parser {
        toks,
        pos: 0,
        end: text.len(),
    };
    let e = p.expr()?;
    if p.pos < p.toks.len() {
        return Err(ParseError::Syntax {
            pos: p.offset(),
            msg: "trailing input".into(),
        });
    }
    Ok(e)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn b(e: Expr) -> Box<Expr> {
        Box::new(e)
    }

    #[test]
    fn sin_times_scaled_bump() {
        let e = parse_expression("sin(x)*bump(x/2)").unwrap();
        assert_eq!(
            e,
            Expr::Mul(
                b(Expr::Sin(b(Expr::X))),
                b(Expr::Bump(b(Expr::Div(b(Expr::X), b(Expr::Num(2.0))))))
            )
        );
    }

    #[test]
    fn precedence() {
        // power binds tighter than unary minus
        assert_eq!(
            parse_expression("-x^2").unwrap(),
            Expr::Neg(b(Expr::Pow(b(Expr::X), 2)))
        );
        assert_eq!(parse_expression("x^2 + 1").unwrap().eval(2.0).unwrap(), 5.0);
        assert_eq!(parse_expression("1 - 2 - 3").unwrap().eval(0.0).unwrap(), -4.0);
        assert_eq!(parse_expression("8 / 2 / 2").unwrap().eval(0.0).unwrap(), 2.0);
        assert_eq!(parse_expression("2 * -x").unwrap().eval(3.0).unwrap(), -6.0);
        assert_eq!(parse_expression("x^(-2)").unwrap().eval(2.0).unwrap(), 0.25);
        assert_eq!(parse_expression("x^-1").unwrap().eval(4.0).unwrap(), 0.25);
    }

    #[test]
    fn scientific_literals() {
        assert_eq!(parse_expression("1.5e-3").unwrap(), Expr::Num(1.5e-3));
        assert_eq!(parse_expression("2E2*x").unwrap().eval(1.0).unwrap(), 200.0);
    }

    #[test]
    fn errors_carry_position() {
        match parse_expression("sin(x) + foo(x)") {
            Err(ParseError::UnknownIdentifier { pos, name }) => {
                assert_eq!(pos, 9);
                assert_eq!(name, "foo");
            }
            other => panic!("unexpected {:?}", other),
        }
        match parse_expression("(x + 1") {
            Err(ParseError::Syntax { pos, .. }) => assert_eq!(pos, 6),
            other => panic!("unexpected {:?}", other),
        }
        assert!(matches!(parse_expression("x^1.5"), Err(ParseError::Syntax { pos: 2, .. })));
        assert!(matches!(parse_expression("x $"), Err(ParseError::Syntax { pos: 2, .. })));
        assert!(parse_expression("x x").is_err());
        assert!(parse_expression("").is_err());
    }

    #[test]
    fn division_by_zero_is_an_evaluation_error() {
        let e = parse_expression("1/(x-1)").unwrap();
        assert!(e.eval(1.0).is_err());
        assert_eq!(e.eval(2.0).unwrap(), 1.0);
    }
}
