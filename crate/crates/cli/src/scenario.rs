//! Scenario files.
//!
//! ```text
//! scenario  := { statement }
//! statement := KEY ':' rhs NEWLINE
//! rhs       := FORM-TEXT            (for `omega`)
//!            | value
//! value     := '{' [ field { ',' field } [','] ] '}'
//!            | '[' [ value { ',' value } [','] ] ']'
//!            | STRING | ATOM
//! field     := KEY ':' value
//! ```
//!
//! Newlines are insignificant inside braces and brackets. `#` starts a comment.
//! Atoms are identifiers or Gaussian-rational scalars such as `3/2`,
//! `-1/3*i`, `2+5*i`, or `1e-6`; scalars are kept exact.

use std::fmt::{self, Write as _};

use foliation_core::algebra::rat_to_f64;
use foliation_core::forms::syntax::parse_coefficient;
use foliation_core::{GaussianRational, MeromorphicOneForm, C64};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ScenarioError {
    pub line: usize,
    pub column: usize,
    pub expected: Vec<String>,
    pub found: String,
}

impl fmt::Display for ScenarioError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}:{}: expected one of [{}], found {}",
            self.line,
            self.column,
            self.expected.join(", "),
            self.found
        )
    }
}

impl std::error::Error for ScenarioError {}

#[derive(Clone, Debug, PartialEq)]
pub enum Value {
    Scalar(GaussianRational),
    Ident(String),
    Str(String),
    List(Vec<Value>),
    Block(Block),
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Block {
    pub fields: Vec<(String, Value)>,
}

impl Block {
    pub fn get(&self, key: &str) -> Option<&Value> {
        self.fields.iter().find(|(k, _)| k == key).map(|(_, v)| v)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Rhs {
    /// Normalized text of a parsed form.
    Form(String),
    Value(Value),
}

#[derive(Clone, Debug, PartialEq)]
pub struct Statement {
    pub key: String,
    pub rhs: Rhs,
}

/// A parsed and schema-checked scenario.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ScenarioFile {
    pub statements: Vec<Statement>,
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Kind {
    Scalar,
    Int,
    Ident,
    Str,
    Name,
    List,
    Block,
}

impl Kind {
    fn label(self) -> &'static str {
        match self {
            Kind::Scalar => "scalar",
            Kind::Int => "integer",
            Kind::Ident => "identifier",
            Kind::Str => "string",
            Kind::Name => "identifier or string",
            Kind::List => "list",
            Kind::Block => "block",
        }
    }

    fn accepts(self, v: &Value) -> bool {
        match (self, v) {
            (Kind::Scalar, Value::Scalar(_)) => true,
            (Kind::Int, Value::Scalar(s)) => as_integer(s).is_some(),
            (Kind::Ident, Value::Ident(_)) => true,
            (Kind::Str, Value::Str(_)) => true,
            (Kind::Name, Value::Ident(_) | Value::Str(_)) => true,
            (Kind::List, Value::List(_)) => true,
            (Kind::Block, Value::Block(_)) => true,
            _ => false,
        }
    }
}

struct KeySpec {
    key: &'static str,
    repeat: bool,
    kind: Option<Kind>,
    fields: &'static [(&'static str, Kind)],
}

const SCHEMA: &[KeySpec] = &[
    KeySpec { key: "name", repeat: false, kind: Some(Kind::Name), fields: &[] },
    KeySpec { key: "seed", repeat: false, kind: Some(Kind::Int), fields: &[] },
    KeySpec { key: "omega", repeat: false, kind: None, fields: &[] },
    KeySpec {
        key: "family",
        repeat: false,
        kind: Some(Kind::Block),
        fields: &[("v", Kind::Str), ("degree", Kind::Int)],
    },
    KeySpec {
        key: "divisor",
        repeat: true,
        kind: Some(Kind::Block),
        fields: &[("poly", Kind::Str), ("mult", Kind::Int)],
    },
    KeySpec { key: "region", repeat: false, kind: Some(Kind::Block), fields: &[("radius", Kind::Scalar)] },
    KeySpec {
        key: "controls",
        repeat: false,
        kind: Some(Kind::Block),
        fields: &[
            ("tol", Kind::Scalar),
            ("max_depth", Kind::Int),
            ("theta", Kind::Scalar),
            ("budget", Kind::Scalar),
            ("step_max", Kind::Scalar),
            ("branch_limit", Kind::Int),
            ("singular_radius", Kind::Scalar),
            ("divisor_radius", Kind::Scalar),
        ],
    },
    KeySpec {
        key: "trajectory",
        repeat: true,
        kind: Some(Kind::Block),
        fields: &[
            ("start", Kind::List),
            ("theta", Kind::Scalar),
            ("direction", Kind::Ident),
            ("budget", Kind::Scalar),
            ("sinks", Kind::List),
            ("saddles", Kind::List),
            ("plane", Kind::Ident),
        ],
    },
    KeySpec {
        key: "holonomy",
        repeat: true,
        kind: Some(Kind::Block),
        fields: &[
            ("coordinate", Kind::Ident),
            ("base", Kind::List),
            ("radius", Kind::Scalar),
            ("pieces", Kind::List),
            ("probes", Kind::List),
            ("random_probes", Kind::Int),
        ],
    },
    KeySpec {
        key: "chain",
        repeat: true,
        kind: Some(Kind::Block),
        fields: &[
            ("entry", Kind::List),
            ("corners", Kind::List),
            ("exit", Kind::List),
            ("orders", Kind::List),
            ("turns", Kind::Int),
        ],
    },
    KeySpec {
        key: "dulac",
        repeat: true,
        kind: Some(Kind::Block),
        fields: &[
            ("lambda1", Kind::Scalar),
            ("lambda2", Kind::Scalar),
            ("a", Kind::Int),
            ("b", Kind::Int),
            ("radii", Kind::List),
            ("angle", Kind::Scalar),
            ("mode", Kind::Ident),
        ],
    },
    KeySpec {
        key: "renorm",
        repeat: true,
        kind: Some(Kind::Block),
        fields: &[
            ("germ", Kind::Ident),
            ("coefficients", Kind::List),
            ("alpha", Kind::Scalar),
            ("lambda", Kind::Scalar),
            ("beta", Kind::Scalar),
            ("levels", Kind::List),
            ("radius", Kind::Scalar),
        ],
    },
    KeySpec {
        key: "density",
        repeat: true,
        kind: Some(Kind::Block),
        fields: &[("kind", Kind::Ident), ("exponent", Kind::Scalar), ("lambdas", Kind::List), ("grid", Kind::Int)],
    },
    KeySpec {
        key: "commutator",
        repeat: true,
        kind: Some(Kind::Block),
        fields: &[("c", Kind::List), ("p", Kind::Scalar), ("eps", Kind::List)],
    },
    KeySpec { key: "corpus", repeat: true, kind: Some(Kind::Ident), fields: &[] },
];

fn spec(key: &str) -> Option<&'static KeySpec> {
    SCHEMA.iter().find(|s| s.key == key)
}

/// Integer value of an exact scalar.
pub fn as_integer(s: &GaussianRational) -> Option<i64> {
    if !s.is_real() || !s.re.is_integer() {
        return None;
    }
    i64::try_from(s.re.to_integer()).ok()
}

struct Parser<'a> {
    src: &'a str,
    pos: usize,
    line: usize,
    col: usize,
}

impl<'a> Parser<'a> {
    fn peek(&self) -> Option<char> {
        self.src[self.pos..].chars().next()
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.peek()?;
        self.pos += c.len_utf8();
        if c == '\n' {
            self.line += 1;
            self.col = 1;
        } else {
            self.col += 1;
        }
        Some(c)
    }

    fn err(&self, expected: &[&str], found: String) -> ScenarioError {
        ScenarioError {
            line: self.line,
            column: self.col,
            expected: expected.iter().map(|s| s.to_string()).collect(),
            found,
        }
    }

    fn found(&self) -> String {
        match self.peek() {
            None => "end of input".into(),
            Some('\n') => "end of line".into(),
            Some(c) => format!("'{c}'"),
        }
    }

    fn skip_comment(&mut self) {
        if self.peek() == Some('#') {
            while !matches!(self.peek(), None | Some('\n')) {
                self.bump();
            }
        }
    }

    /// Skips blanks; newlines too when `lines` is set.
    fn skip_ws(&mut self, lines: bool) {
        loop {
            match self.peek() {
                Some(' ' | '\t' | '\r') => {
                    self.bump();
                }
                Some('\n') if lines => {
                    self.bump();
                }
                Some('#') => self.skip_comment(),
                _ => return,
            }
        }
    }

    fn key(&mut self, what: &str) -> Result<String, ScenarioError> {
        let start = self.pos;
        while let Some(c) = self.peek() {
            if c.is_ascii_alphanumeric() || c == '_' {
                self.bump();
            } else {
                break;
            }
        }
        if self.pos == start || !self.src[start..].starts_with(|c: char| c.is_ascii_alphabetic()) {
            return Err(self.err(&[what], self.found()));
        }
        Ok(self.src[start..self.pos].to_string())
    }

    fn expect(&mut self, c: char) -> Result<(), ScenarioError> {
        if self.peek() == Some(c) {
            self.bump();
            Ok(())
        } else {
            Err(self.err(&[&format!("'{c}'")], self.found()))
        }
    }

    fn value(&mut self) -> Result<Value, ScenarioError> {
        match self.peek() {
            Some('{') => {
                self.bump();
                let mut fields: Vec<(String, Value)> = Vec::new();
                loop {
                    self.skip_ws(true);
                    if self.peek() == Some('}') {
                        self.bump();
                        return Ok(Value::Block(Block { fields }));
                    }
                    let (line, col) = (self.line, self.col);
                    let k = self.key("field name")?;
                    if fields.iter().any(|(f, _)| *f == k) {
                        return Err(ScenarioError {
                            line,
                            column: col,
                            expected: vec!["a field not given before".into()],
                            found: format!("duplicate field '{k}'"),
                        });
                    }
                    self.skip_ws(false);
                    self.expect(':')?;
                    self.skip_ws(true);
                    let v = self.value()?;
                    fields.push((k, v));
                    self.skip_ws(true);
                    match self.peek() {
                        Some(',') => {
                            self.bump();
                        }
                        Some('}') => {}
                        _ => return Err(self.err(&["','", "'}'"], self.found())),
                    }
                }
            }
            Some('[') => {
                self.bump();
                let mut items = Vec::new();
                loop {
                    self.skip_ws(true);
                    if self.peek() == Some(']') {
                        self.bump();
                        return Ok(Value::List(items));
                    }
                    items.push(self.value()?);
                    self.skip_ws(true);
                    match self.peek() {
                        Some(',') => {
                            self.bump();
                        }
                        Some(']') => {}
                        _ => return Err(self.err(&["','", "']'"], self.found())),
                    }
                }
            }
            Some('"') => {
                self.bump();
                let mut s = String::new();
                loop {
                    match self.bump() {
                        None | Some('\n') => return Err(self.err(&["'\"'"], "end of line".into())),
                        Some('"') => return Ok(Value::Str(s)),
                        Some('\\') => match self.bump() {
                            Some(c @ ('"' | '\\')) => s.push(c),
                            Some('n') => s.push('\n'),
                            _ => return Err(self.err(&["'\\\"'", "'\\\\'", "'\\n'"], self.found())),
                        },
                        Some(c) => s.push(c),
                    }
                }
            }
            _ => {
                let (line, col) = (self.line, self.col);
                let start = self.pos;
                while !matches!(self.peek(), None | Some(',' | '}' | ']' | '\n' | '#' | '{' | '[')) {
                    self.bump();
                }
                let text = self.src[start..self.pos].trim();
                if text.is_empty() {
                    return Err(self.err(&["'{'", "'['", "string", "scalar", "identifier"], self.found()));
                }
                atom(text).map_err(|e| ScenarioError { line, column: col + e.0, expected: e.1, found: e.2 })
            }
        }
    }

    fn form(&mut self) -> Result<String, ScenarioError> {
        let (line, col) = (self.line, self.col);
        let start = self.pos;
        while !matches!(self.peek(), None | Some('\n' | '#')) {
            self.bump();
        }
        let text = &self.src[start..self.pos];
        let at = |off: usize, expected: Vec<String>, found: String| ScenarioError {
            line,
            column: col + text[..off.min(text.len())].chars().count(),
            expected,
            found,
        };
        // An unclosed parenthesis is reported where it opens.
        let mut open = Vec::new();
        for (k, c) in text.char_indices() {
            match c {
                '(' => open.push(k),
                ')' if open.pop().is_none() => return Err(at(k, vec!["operand".into()], "')'".into())),
                _ => {}
            }
        }
        if let Some(&k) = open.first() {
            return Err(at(k, vec!["')'".into()], "an unclosed '('".into()));
        }
        let w = MeromorphicOneForm::parse(text.trim()).map_err(|e| match e {
            foliation_core::forms::FormError::Syntax(s) => {
                let lead = text.len() - text.trim_start().len();
                at(lead + s.offset, s.expected, s.found)
            }
            other => at(0, vec!["a nonzero form".into()], other.to_string()),
        })?;
        Ok(w.to_text())
    }
}

fn atom(text: &str) -> Result<Value, (usize, Vec<String>, String)> {
    let ident = text.starts_with(|c: char| c.is_ascii_alphabetic() || c == '_')
        && text.chars().all(|c| c.is_ascii_alphanumeric() || c == '_');
    if ident && text != "i" {
        return Ok(Value::Ident(text.to_string()));
    }
    parse_scalar(text)
        .map(Value::Scalar)
        .ok_or((0, vec!["scalar".into(), "identifier".into()], format!("'{text}'")))
}

/// Exact value of a scalar literal; accepts a decimal exponent `1.5e-3`.
pub fn parse_scalar(text: &str) -> Option<GaussianRational> {
    let t = text.trim();
    if let Some((m, e)) = t.split_once(['e', 'E']) {
        if m.is_empty() || !m.chars().all(|c| c.is_ascii_digit() || c == '.' || c == '-' || c == '+') {
            return None;
        }
        let exp: i32 = e.parse().ok()?;
        let (neg, m) = match m.strip_prefix('-') {
            Some(r) => (true, r),
            None => (false, m.strip_prefix('+').unwrap_or(m)),
        };
        let base = parse_coefficient(m).ok()?;
        let ten = if exp < 0 { GaussianRational::from_ratio(1, 10) } else { GaussianRational::from_int(10) };
        let v = &base * &ten.pow(exp.unsigned_abs());
        return Some(if neg { -v } else { v });
    }
    parse_coefficient(t).ok()
}

/// Parses scenario text into a validated [`ScenarioFile`].
pub fn parse_scenario(text: &str) -> Result<ScenarioFile, ScenarioError> {
    let mut p = Parser { src: text, pos: 0, line: 1, col: 1 };
    let mut out = ScenarioFile::default();
    loop {
        p.skip_ws(true);
        if p.peek().is_none() {
            return Ok(out);
        }
        let (line, col) = (p.line, p.col);
        let key = p.key("key")?;
        let Some(s) = spec(&key) else {
            return Err(ScenarioError {
                line,
                column: col,
                expected: SCHEMA.iter().map(|s| s.key.to_string()).collect(),
                found: format!("'{key}'"),
            });
        };
        if !s.repeat && out.statements.iter().any(|st| st.key == key) {
            return Err(ScenarioError {
                line,
                column: col,
                expected: vec!["a key not given before".into()],
                found: format!("repeated '{key}'"),
            });
        }
        p.skip_ws(false);
        p.expect(':')?;
        p.skip_ws(false);
        let (vline, vcol) = (p.line, p.col);
        let rhs = match s.kind {
            None => Rhs::Form(p.form()?),
            Some(kind) => {
                let v = p.value()?;
                let bad = |expected: String, found: String| ScenarioError {
                    line: vline,
                    column: vcol,
                    expected: vec![expected],
                    found,
                };
                if !kind.accepts(&v) {
                    return Err(bad(kind.label().into(), describe(&v)));
                }
                if let Value::Block(b) = &v {
                    for (f, fv) in &b.fields {
                        match s.fields.iter().find(|(n, _)| n == f) {
                            None => {
                                return Err(ScenarioError {
                                    line: vline,
                                    column: vcol,
                                    expected: s.fields.iter().map(|(n, _)| n.to_string()).collect(),
                                    found: format!("field '{f}'"),
                                })
                            }
                            Some((_, k)) if !k.accepts(fv) => {
                                return Err(bad(format!("{} for '{f}'", k.label()), describe(fv)))
                            }
                            _ => {}
                        }
                    }
                }
                Rhs::Value(v)
            }
        };
        p.skip_ws(false);
        if !matches!(p.peek(), None | Some('\n')) {
            return Err(p.err(&["end of line"], p.found()));
        }
        out.statements.push(Statement { key, rhs });
    }
}

fn describe(v: &Value) -> String {
    match v {
        Value::Scalar(s) => format!("scalar {s}"),
        Value::Ident(s) => format!("identifier '{s}'"),
        Value::Str(s) => format!("string \"{s}\""),
        Value::List(_) => "a list".into(),
        Value::Block(_) => "a block".into(),
    }
}

fn write_value(out: &mut String, v: &Value) {
    match v {
        Value::Scalar(s) => {
            let _ = write!(out, "{s}");
        }
        Value::Ident(s) => out.push_str(s),
        Value::Str(s) => {
            out.push('"');
            for c in s.chars() {
                match c {
                    '"' => out.push_str("\\\""),
                    '\\' => out.push_str("\\\\"),
                    '\n' => out.push_str("\\n"),
                    c => out.push(c),
                }
            }
            out.push('"');
        }
        Value::List(items) => {
            out.push('[');
            for (k, item) in items.iter().enumerate() {
                if k > 0 {
                    out.push_str(", ");
                }
                write_value(out, item);
            }
            out.push(']');
        }
        Value::Block(b) => {
            if b.fields.is_empty() {
                out.push_str("{}");
                return;
            }
            out.push_str("{ ");
            for (k, (name, item)) in b.fields.iter().enumerate() {
                if k > 0 {
                    out.push_str(", ");
                }
                let _ = write!(out, "{name}: ");
                write_value(out, item);
            }
            out.push_str(" }");
        }
    }
}

/// Canonical text: one statement per line, blocks inline, scalars exact.
pub fn serialize_scenario(s: &ScenarioFile) -> String {
    let mut out = String::new();
    for st in &s.statements {
        let _ = write!(out, "{}: ", st.key);
        match &st.rhs {
            Rhs::Form(t) => out.push_str(t),
            Rhs::Value(v) => write_value(&mut out, v),
        }
        out.push('\n');
    }
    out
}

impl ScenarioFile {
    pub fn get(&self, key: &str) -> Option<&Rhs> {
        self.statements.iter().find(|s| s.key == key).map(|s| &s.rhs)
    }

    pub fn all(&self, key: &str) -> impl Iterator<Item = &Value> + '_ {
        let key = key.to_string();
        self.statements.iter().filter_map(move |s| match &s.rhs {
            Rhs::Value(v) if s.key == key => Some(v),
            _ => None,
        })
    }

    pub fn name(&self) -> String {
        match self.get("name") {
            Some(Rhs::Value(Value::Ident(s) | Value::Str(s))) => s.clone(),
            _ => "scenario".into(),
        }
    }

    pub fn seed(&self) -> Option<u64> {
        match self.get("seed") {
            Some(Rhs::Value(Value::Scalar(s))) => as_integer(s).and_then(|v| u64::try_from(v).ok()),
            _ => None,
        }
    }

    pub fn omega_text(&self) -> Option<&str> {
        match self.get("omega") {
            Some(Rhs::Form(t)) => Some(t),
            _ => None,
        }
    }

    pub fn block(&self, key: &str) -> Option<&Block> {
        match self.get(key) {
            Some(Rhs::Value(Value::Block(b))) => Some(b),
            _ => None,
        }
    }
}

/// Float value of a scalar, rejecting non-real values.
pub fn real(v: &Value) -> Option<f64> {
    match v {
        Value::Scalar(s) if s.is_real() => Some(rat_to_f64(&s.re)),
        _ => None,
    }
}

pub fn complex(v: &Value) -> Option<C64> {
    match v {
        Value::Scalar(s) => Some(s.to_c64()),
        _ => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_form() {
        let s = parse_scenario("omega: (x) dx + (-y) dy\n").unwrap();
        assert!(s.omega_text().is_some());
    }

    #[test]
    fn unclosed_parenthesis_is_positioned() {
        let e = parse_scenario("name: t\nomega: (2*x dy\n").unwrap_err();
        assert_eq!((e.line, e.column), (2, 8));
        assert_eq!(e.expected, vec!["')'".to_string()]);
    }

    #[test]
    fn pole_component() {
        let s = parse_scenario("omega: x dy\ndivisor: { poly: \"x\", mult: -1 }\n").unwrap();
        let d = s.all("divisor").next().unwrap();
        let Value::Block(b) = d else { panic!() };
        assert_eq!(b.get("mult"), Some(&Value::Scalar(GaussianRational::from_int(-1))));
    }

    #[test]
    fn round_trip() {
        let text = "# comment\nname: demo\nseed: 7\nomega: 3*x dy - y dx\nregion: { radius: 2 }\n\
                    holonomy: {\n  coordinate: x, base: [1, 1/2],\n  radius: 1e-1,\n  pieces: [{ arc: 0, turns: 1 }],\n}\n\
                    dulac: { lambda1: 2, lambda2: 1, radii: [1/100, 0.5+1/3*i], mode: numeric }\n";
        let a = parse_scenario(text).unwrap();
        let t = serialize_scenario(&a);
        let b = parse_scenario(&t).unwrap();
        assert_eq!(a, b);
        assert_eq!(serialize_scenario(&b), t);
        assert!(t.contains("radius: 1/10"));
    }

    #[test]
    fn schema_errors() {
        let e = parse_scenario("colour: red\n").unwrap_err();
        assert_eq!((e.line, e.column), (1, 1));
        let e = parse_scenario("seed: 1/2\n").unwrap_err();
        assert_eq!(e.expected, vec!["integer".to_string()]);
        let e = parse_scenario("region: { radius: 2, depth: 3 }\n").unwrap_err();
        assert!(e.found.contains("depth"));
        let e = parse_scenario("dulac: { lambda1: 2\n").unwrap_err();
        assert_eq!(e.found, "end of input");
        assert!(parse_scenario("name: a\nname: b\n").is_err());
    }

    #[test]
    fn exponent_scalars_are_exact() {
        assert_eq!(parse_scalar("1e-3"), Some(GaussianRational::from_ratio(1, 1000)));
        assert_eq!(parse_scalar("-2.5e2"), Some(GaussianRational::from_int(-250)));
        assert_eq!(parse_scalar("2+5*i"), Some(GaussianRational::from_parts((2, 1), (5, 1))));
    }
}
