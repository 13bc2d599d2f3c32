//! Text syntax for rational expressions and 1-forms.
//!
//! ```text
//! form   := term (('+' | '-') term)*
//! term   := ['-'] factor+            one factor may be `dx` or `dy`
//! factor := atom ['^' ['-'] integer]
//! atom   := number | 'x' | 'y' | 'i' | '(' expr ')'
//! expr   := ['-'] product (('+' | '-') product)*
//! ```
//! Factors may be joined by `*`, `/`, or juxtaposition (`2x`, `5i`).

use std::fmt;

use num_bigint::BigInt;
use num_rational::BigRational;

use crate::algebra::{BivariatePolynomial, GaussianRational, RationalFunction};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SyntaxError {
    /// Byte offset into the parsed text.
    pub offset: usize,
    pub expected: Vec<String>,
    pub found: String,
}

impl fmt::Display for SyntaxError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "at offset {}: expected one of [{}], found {}",
            self.offset,
            self.expected.join(", "),
            self.found
        )
    }
}

impl std::error::Error for SyntaxError {}

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Num(BigRational),
    X,
    Y,
    I,
    Dx,
    Dy,
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    LParen,
    RParen,
    End,
}

impl Tok {
    fn describe(&self) -> String {
        match self {
            Tok::Num(n) => format!("number {n}"),
            Tok::X => "'x'".into(),
            Tok::Y => "'y'".into(),
            Tok::I => "'i'".into(),
            Tok::Dx => "'dx'".into(),
            Tok::Dy => "'dy'".into(),
            Tok::Plus => "'+'".into(),
            Tok::Minus => "'-'".into(),
            Tok::Star => "'*'".into(),
            Tok::Slash => "'/'".into(),
            Tok::Caret => "'^'".into(),
            Tok::LParen => "'('".into(),
            Tok::RParen => "')'".into(),
            Tok::End => "end of input".into(),
        }
    }

    fn starts_atom(&self) -> bool {
        matches!(self, Tok::Num(_) | Tok::X | Tok::Y | Tok::I | Tok::LParen | Tok::Dx | Tok::Dy)
    }
}

fn lex(text: &str) -> Result<Vec<(Tok, usize)>, SyntaxError> {
    let b = text.as_bytes();
    let mut out = Vec::new();
    let mut k = 0;
    while k < b.len() {
        let c = b[k] as char;
        let start = k;
        if c.is_whitespace() {
            k += 1;
            continue;
        }
        let tok = match c {
            '0'..='9' | '.' => {
                while k < b.len() && (b[k].is_ascii_digit() || b[k] == b'.') {
                    k += 1;
                }
                let s = &text[start..k];
                let v = parse_decimal(s).ok_or_else(|| SyntaxError {
                    offset: start,
                    expected: vec!["number".into()],
                    found: format!("'{s}'"),
                })?;
                out.push((Tok::Num(v), start));
                continue;
            }
            'd' if k + 1 < b.len() && (b[k + 1] == b'x' || b[k + 1] == b'y') => {
                k += 2;
                out.push((if b[k - 1] == b'x' { Tok::Dx } else { Tok::Dy }, start));
                continue;
            }
            'x' => Tok::X,
            'y' => Tok::Y,
            'i' => Tok::I,
            '+' => Tok::Plus,
            '-' => Tok::Minus,
            '*' => Tok::Star,
            '/' => Tok::Slash,
            '^' => Tok::Caret,
            '(' => Tok::LParen,
            ')' => Tok::RParen,
            _ => {
                return Err(SyntaxError {
                    offset: start,
                    expected: vec!["number".into(), "'x'".into(), "'y'".into(), "'i'".into(), "operator".into()],
                    found: format!("'{c}'"),
                })
            }
        };
        k += 1;
        out.push((tok, start));
    }
    out.push((Tok::End, text.len()));
    Ok(out)
}

fn parse_decimal(s: &str) -> Option<BigRational> {
    let mut parts = s.splitn(2, '.');
    let int = parts.next()?;
    let frac = parts.next().unwrap_or("");
    if (int.is_empty() && frac.is_empty()) || frac.contains('.') {
        return None;
    }
    let digits = format!("{int}{frac}");
    let n: BigInt = digits.parse().ok()?;
    let d = BigInt::from(10u32).pow(frac.len() as u32);
    Some(BigRational::new(n, d))
}

/// Value carried through the parser: a rational function, or a 1-form during form parsing.
#[derive(Clone)]
enum Val {
    F(RationalFunction),
    Form(RationalFunction, RationalFunction),
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

    fn err(&self, expected: &[&str]) -> SyntaxError {
        SyntaxError {
            offset: self.offset(),
            expected: expected.iter().map(|s| s.to_string()).collect(),
            found: self.peek().describe(),
        }
    }

    fn sum(&mut self, allow_forms: bool) -> Result<Val, SyntaxError> {
        let neg = if *self.peek() == Tok::Minus {
            self.bump();
            true
        } else {
            if *self.peek() == Tok::Plus {
                self.bump();
            }
            false
        };
        let mut acc = self.product(allow_forms)?;
        if neg {
            acc = negate(acc);
        }
        loop {
            let sign = match self.peek() {
                Tok::Plus => 1,
                Tok::Minus => -1,
                _ => break,
            };
            let at = self.offset();
            self.bump();
            let mut rhs = self.product(allow_forms)?;
            if sign < 0 {
                rhs = negate(rhs);
            }
            acc = add(acc, rhs).ok_or_else(|| SyntaxError {
                offset: at,
                expected: vec!["terms of matching kind".into()],
                found: "a sum of a function and a 1-form".into(),
            })?;
        }
        Ok(acc)
    }

    fn product(&mut self, allow_forms: bool) -> Result<Val, SyntaxError> {
        let mut acc = self.power(allow_forms)?;
        loop {
            let at = self.offset();
            match self.peek() {
                Tok::Star => {
                    self.bump();
                    let rhs = self.power(allow_forms)?;
                    acc = mul(acc, rhs).ok_or_else(|| form_product_error(at))?;
                }
                Tok::Slash => {
                    self.bump();
                    let rhs_at = self.offset();
                    let rhs = self.power(allow_forms)?;
                    acc = div(acc, rhs).map_err(|msg| SyntaxError {
                        offset: rhs_at,
                        expected: vec!["nonzero function divisor".into()],
                        found: msg,
                    })?;
                }
                t if t.starts_atom() => {
                    let rhs = self.power(allow_forms)?;
                    acc = mul(acc, rhs).ok_or_else(|| form_product_error(at))?;
                }
                _ => break,
            }
        }
        Ok(acc)
    }

    fn power(&mut self, allow_forms: bool) -> Result<Val, SyntaxError> {
        let base = self.atom(allow_forms)?;
        if *self.peek() != Tok::Caret {
            return Ok(base);
        }
        let at = self.offset();
        self.bump();
        let neg = if *self.peek() == Tok::Minus {
            self.bump();
            true
        } else {
            false
        };
        let e = match self.bump() {
            Tok::Num(n) if n.is_integer() => n.to_integer(),
            _ => {
                self.pos -= 1;
                return Err(self.err(&["integer exponent"]));
            }
        };
        let e: u32 = u32::try_from(&e).map_err(|_| SyntaxError {
            offset: at,
            expected: vec!["small exponent".into()],
            found: e.to_string(),
        })?;
        let f = match base {
            Val::F(f) => f,
            Val::Form(..) => return Err(form_product_error(at)),
        };
        let mut r = RationalFunction::one();
        for _ in 0..e {
            r = r.mul(&f);
        }
        if neg {
            r = r.inv().map_err(|_| SyntaxError {
                offset: at,
                expected: vec!["nonzero base".into()],
                found: "zero raised to a negative power".into(),
            })?;
        }
        Ok(Val::F(r))
    }

    fn atom(&mut self, allow_forms: bool) -> Result<Val, SyntaxError> {
        let expected: &[&str] = if allow_forms {
            &["number", "'x'", "'y'", "'i'", "'('", "'dx'", "'dy'"]
        } else {
            &["number", "'x'", "'y'", "'i'", "'('"]
        };
        let v = match self.peek().clone() {
            Tok::Num(n) => Val::F(RationalFunction::constant(GaussianRational::real(n))),
            Tok::X => Val::F(BivariatePolynomial::x().into()),
            Tok::Y => Val::F(BivariatePolynomial::y().into()),
            Tok::I => Val::F(RationalFunction::constant(GaussianRational::i())),
            Tok::Dx if allow_forms => Val::Form(RationalFunction::one(), RationalFunction::zero()),
            Tok::Dy if allow_forms => Val::Form(RationalFunction::zero(), RationalFunction::one()),
            Tok::LParen => {
                self.bump();
                let inner = self.sum(allow_forms)?;
                if *self.peek() != Tok::RParen {
                    return Err(self.err(&["')'", "operator"]));
                }
                self.bump();
                return Ok(inner);
            }
            _ => return Err(self.err(expected)),
        };
        self.bump();
        Ok(v)
    }
}

fn form_product_error(at: usize) -> SyntaxError {
    SyntaxError {
        offset: at,
        expected: vec!["at most one differential per term".into()],
        found: "a product of differentials".into(),
    }
}

fn negate(v: Val) -> Val {
    match v {
        Val::F(f) => Val::F(f.neg()),
        Val::Form(p, q) => Val::Form(p.neg(), q.neg()),
    }
}

fn add(a: Val, b: Val) -> Option<Val> {
    match (a, b) {
        (Val::F(a), Val::F(b)) => Some(Val::F(a.add(&b))),
        (Val::Form(p, q), Val::Form(r, s)) => Some(Val::Form(p.add(&r), q.add(&s))),
        _ => None,
    }
}

fn mul(a: Val, b: Val) -> Option<Val> {
    match (a, b) {
        (Val::F(a), Val::F(b)) => Some(Val::F(a.mul(&b))),
        (Val::F(f), Val::Form(p, q)) | (Val::Form(p, q), Val::F(f)) => Some(Val::Form(f.mul(&p), f.mul(&q))),
        _ => None,
    }
}

fn div(a: Val, b: Val) -> Result<Val, String> {
    let d = match b {
        Val::F(d) if !d.is_zero() => d,
        Val::F(_) => return Err("division by zero".into()),
        Val::Form(..) => return Err("division by a differential".into()),
    };
    match a {
        Val::F(f) => Ok(Val::F(f.div(&d).map_err(|e| e.to_string())?)),
        Val::Form(p, q) => Ok(Val::Form(
            p.div(&d).map_err(|e| e.to_string())?,
            q.div(&d).map_err(|e| e.to_string())?,
        )),
    }
}

/// Parses a rational expression in `x`, `y` with Gaussian-rational coefficients.
pub fn parse_expression(text: &str) -> Result<RationalFunction, SyntaxError> {
    let mut p = Parser { toks: lex(text)?, pos: 0 };
    let v = p.sum(false)?;
    if *p.peek() != Tok::End {
        return Err(p.err(&["operator", "end of input"]));
    }
    match v {
        Val::F(f) => Ok(f),
        Val::Form(..) => unreachable!("forms disabled"),
    }
}

/// Parses `P dx + Q dy` and returns `(P, Q)`.
pub fn parse_form_coefficients(text: &str) -> Result<(RationalFunction, RationalFunction), SyntaxError> {
    let mut p = Parser { toks: lex(text)?, pos: 0 };
    let v = p.sum(true)?;
    if *p.peek() != Tok::End {
        return Err(p.err(&["operator", "end of input"]));
    }
    match v {
        Val::Form(a, b) => Ok((a, b)),
        Val::F(_) => Err(SyntaxError {
            offset: 0,
            expected: vec!["'dx'".into(), "'dy'".into()],
            found: "an expression without differentials".into(),
        }),
    }
}

/// Parses a Gaussian-rational literal such as `3/2`, `-1/3*i`, `2+5i`.
pub fn parse_coefficient(text: &str) -> Result<GaussianRational, SyntaxError> {
    let f = parse_expression(text)?;
    f.as_polynomial()
        .filter(|p| p.is_constant())
        .map(|p| p.constant_term())
        .ok_or(SyntaxError {
            offset: 0,
            expected: vec!["constant".into()],
            found: format!("'{text}'"),
        })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn poly(t: &[(i64, u32, u32)]) -> RationalFunction {
        BivariatePolynomial::from_int_terms(t).into()
    }

    #[test]
    fn coefficients_parse() {
        assert_eq!(parse_coefficient("3/2").unwrap(), GaussianRational::from_ratio(3, 2));
        assert_eq!(parse_coefficient("-1/3*i").unwrap(), GaussianRational::from_parts((0, 1), (-1, 3)));
        assert_eq!(parse_coefficient("2+5i").unwrap(), GaussianRational::from_parts((2, 1), (5, 1)));
        assert_eq!(parse_coefficient("0.25").unwrap(), GaussianRational::from_ratio(1, 4));
    }

    #[test]
    fn forms_parse() {
        let (p, q) = parse_form_coefficients("(x) dx + (-y) dy").unwrap();
        assert_eq!(p, poly(&[(1, 1, 0)]));
        assert_eq!(q, poly(&[(-1, 0, 1)]));
        let (p, q) = parse_form_coefficients("x dy - y dx").unwrap();
        assert_eq!(p, poly(&[(-1, 0, 1)]));
        assert_eq!(q, poly(&[(1, 1, 0)]));
        let (p, q) = parse_form_coefficients("dy").unwrap();
        assert!(p.is_zero());
        assert_eq!(q, RationalFunction::one());
        let (_, q) = parse_form_coefficients("x^-2 dy").unwrap();
        assert_eq!(q.denominator(), &BivariatePolynomial::from_int_terms(&[(1, 2, 0)]));
    }

    #[test]
    fn unclosed_paren_is_positioned() {
        let e = parse_form_coefficients("(2*x dy").unwrap_err();
        assert_eq!(e.offset, 7);
        assert!(e.expected.iter().any(|s| s == "')'"));
    }

    #[test]
    fn implicit_products() {
        assert_eq!(parse_expression("2x y").unwrap(), poly(&[(2, 1, 1)]));
        assert_eq!(parse_expression("(x+1)(x-1)").unwrap(), poly(&[(1, 2, 0), (-1, 0, 0)]));
    }

    #[test]
    fn display_reparses() {
        let f = parse_expression("(1/2+i)*x^2*y - 3/7*y + (2-5i)").unwrap();
        let g = parse_expression(&f.to_string()).unwrap();
        assert_eq!(f, g);
        let r = parse_expression("(x^2 + y) / (x*y - 2)").unwrap();
        assert_eq!(parse_expression(&r.to_string()).unwrap(), r);
    }
}
