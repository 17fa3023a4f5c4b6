//! Data literals: the common language between predicted answers and
//! reference outputs.
//!
//! Covers numbers, strings, booleans, `None`, lists, tuples, and dicts in
//! Python-repr syntax. Comparison is canonicalized structural equality:
//! quote style never matters, dict entry order never matters, but `1` and
//! `1.0` stay distinct and tuples never equal lists, matching assert
//! semantics.

use rand::Rng;
use std::fmt;

use crate::forge::TypeTerm;

#[derive(Debug, Clone)]
pub enum Value {
    Int(i64),
    Float(f64),
    Bool(bool),
    Str(String),
    None,
    List(Vec<Value>),
    Tuple(Vec<Value>),
    Dict(Vec<(Value, Value)>),
}

impl PartialEq for Value {
    fn eq(&self, other: &Self) -> bool {
        match (self, other) {
            (Value::Int(a), Value::Int(b)) => a == b,
            (Value::Float(a), Value::Float(b)) => a == b,
            (Value::Bool(a), Value::Bool(b)) => a == b,
            (Value::Str(a), Value::Str(b)) => a == b,
            (Value::None, Value::None) => true,
            (Value::List(a), Value::List(b)) | (Value::Tuple(a), Value::Tuple(b)) => a == b,
            (Value::Dict(a), Value::Dict(b)) => {
                a.len() == b.len()
                    && a.iter().all(|(k, v)| {
                        b.iter().any(|(k2, v2)| k == k2 && v == v2)
                    })
            }
            _ => false,
        }
    }
}

#[derive(Debug, thiserror::Error)]
#[error("not a data literal at byte {at}: {detail}")]
pub struct LiteralError {
    pub at: usize,
    pub detail: String,
}

/// Parse a single literal; trailing non-whitespace is an error.
pub fn parse_literal(text: &str) -> Result<Value, LiteralError> {
    let mut p = Parser {
        chars: text.chars().collect(),
        pos: 0,
    };
    p.skip_ws();
    let value = p.value()?;
    p.skip_ws();
    if p.pos < p.chars.len() {
        return Err(LiteralError {
            at: p.pos,
            detail: "trailing characters after literal".into(),
        });
    }
    Ok(value)
}

/// Canonicalized equality of two literal texts.
pub fn literals_equal(a: &str, b: &str) -> Result<bool, LiteralError> {
    Ok(parse_literal(a)? == parse_literal(b)?)
}

struct Parser {
    chars: Vec<char>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> Option<char> {
        self.chars.get(self.pos).copied()
    }

    fn skip_ws(&mut self) {
        while matches!(self.peek(), Some(c) if c.is_whitespace()) {
            self.pos += 1;
        }
    }

    fn err(&self, detail: &str) -> LiteralError {
        LiteralError {
            at: self.pos,
            detail: detail.into(),
        }
    }

    fn value(&mut self) -> Result<Value, LiteralError> {
        self.skip_ws();
        match self.peek() {
            Some('\'') | Some('"') => self.string(),
            Some('[') => self.sequence(']', Value::List),
            Some('(') => self.tuple(),
            Some('{') => self.dict(),
            Some(c) if c.is_ascii_digit() || c == '-' || c == '+' => self.number(),
            Some(c) if c.is_alphabetic() => self.word(),
            _ => Err(self.err("expected a literal")),
        }
    }

    fn word(&mut self) -> Result<Value, LiteralError> {
        let start = self.pos;
        while matches!(self.peek(), Some(c) if c.is_alphanumeric() || c == '_') {
            self.pos += 1;
        }
        let word: String = self.chars[start..self.pos].iter().collect();
        match word.as_str() {
            "True" => Ok(Value::Bool(true)),
            "False" => Ok(Value::Bool(false)),
            "None" => Ok(Value::None),
            other => Err(LiteralError {
                at: start,
                detail: format!("unknown word '{other}'"),
            }),
        }
    }

    fn number(&mut self) -> Result<Value, LiteralError> {
        let start = self.pos;
        if matches!(self.peek(), Some('-') | Some('+')) {
            self.pos += 1;
        }
        let mut is_float = false;
        while let Some(c) = self.peek() {
            match c {
                '0'..='9' => self.pos += 1,
                '.' | 'e' | 'E' => {
                    is_float = true;
                    self.pos += 1;
                    if matches!(self.peek(), Some('-') | Some('+')) {
                        self.pos += 1;
                    }
                }
                _ => break,
            }
        }
        let text: String = self.chars[start..self.pos].iter().collect();
        if is_float {
            text.parse::<f64>()
                .map(Value::Float)
                .map_err(|e| self.err(&format!("bad float '{text}': {e}")))
        } else {
            text.parse::<i64>()
                .map(Value::Int)
                .map_err(|e| self.err(&format!("bad int '{text}': {e}")))
        }
    }

    fn string(&mut self) -> Result<Value, LiteralError> {
        let quote = self.peek().unwrap();
        self.pos += 1;
        let mut out = String::new();
        loop {
            let Some(c) = self.peek() else {
                return Err(self.err("unterminated string"));
            };
            self.pos += 1;
            if c == quote {
                return Ok(Value::Str(out));
            }
            if c == '\\' {
                let Some(esc) = self.peek() else {
                    return Err(self.err("dangling escape"));
                };
                self.pos += 1;
                match esc {
                    'n' => out.push('\n'),
                    't' => out.push('\t'),
                    'r' => out.push('\r'),
                    '0' => out.push('\0'),
                    '\\' => out.push('\\'),
                    '\'' => out.push('\''),
                    '"' => out.push('"'),
                    'x' => {
                        let hi = self.peek().ok_or_else(|| self.err("truncated \\x escape"))?;
                        self.pos += 1;
                        let lo = self.peek().ok_or_else(|| self.err("truncated \\x escape"))?;
                        self.pos += 1;
                        let code = u32::from_str_radix(&format!("{hi}{lo}"), 16)
                            .map_err(|_| self.err("bad \\x escape"))?;
                        out.push(char::from_u32(code).unwrap_or('\u{fffd}'));
                    }
                    other => {
                        out.push('\\');
                        out.push(other);
                    }
                }
            } else {
                out.push(c);
            }
        }
    }

    fn sequence(
        &mut self,
        close: char,
        wrap: fn(Vec<Value>) -> Value,
    ) -> Result<Value, LiteralError> {
        self.pos += 1; // opening bracket
        let mut items = Vec::new();
        loop {
            self.skip_ws();
            if self.peek() == Some(close) {
                self.pos += 1;
                return Ok(wrap(items));
            }
            items.push(self.value()?);
            self.skip_ws();
            match self.peek() {
                Some(',') => {
                    self.pos += 1;
                }
                Some(c) if c == close => {}
                _ => return Err(self.err("expected ',' or closing bracket")),
            }
        }
    }

    fn tuple(&mut self) -> Result<Value, LiteralError> {
        self.pos += 1; // '('
        let mut items = Vec::new();
        let mut saw_comma = false;
        loop {
            self.skip_ws();
            if self.peek() == Some(')') {
                self.pos += 1;
                break;
            }
            items.push(self.value()?);
            self.skip_ws();
            match self.peek() {
                Some(',') => {
                    saw_comma = true;
                    self.pos += 1;
                }
                Some(')') => {}
                _ => return Err(self.err("expected ',' or ')' in tuple")),
            }
        }
        // Parenthesized single value without a comma is just grouping.
        if items.len() == 1 && !saw_comma {
            Ok(items.into_iter().next().unwrap())
        } else {
            Ok(Value::Tuple(items))
        }
    }

    fn dict(&mut self) -> Result<Value, LiteralError> {
        self.pos += 1; // '{'
        let mut items = Vec::new();
        loop {
            self.skip_ws();
            if self.peek() == Some('}') {
                self.pos += 1;
                return Ok(Value::Dict(items));
            }
            let key = self.value()?;
            self.skip_ws();
            if self.peek() != Some(':') {
                return Err(self.err("expected ':' in dict (set literals are not supported)"));
            }
            self.pos += 1;
            let value = self.value()?;
            items.push((key, value));
            self.skip_ws();
            match self.peek() {
                Some(',') => {
                    self.pos += 1;
                }
                Some('}') => {}
                _ => return Err(self.err("expected ',' or '}' in dict")),
            }
        }
    }
}

impl fmt::Display for Value {
    /// Python-repr canonical form; valid as a single-line Python literal.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Int(v) => write!(f, "{v}"),
            Value::Float(v) => {
                if v.fract() == 0.0 && v.is_finite() && v.abs() < 1e15 {
                    write!(f, "{v:.1}")
                } else {
                    write!(f, "{v}")
                }
            }
            Value::Bool(true) => write!(f, "True"),
            Value::Bool(false) => write!(f, "False"),
            Value::Str(s) => {
                write!(f, "'")?;
                for c in s.chars() {
                    match c {
                        '\\' => write!(f, "\\\\")?,
                        '\'' => write!(f, "\\'")?,
                        '\n' => write!(f, "\\n")?,
                        '\t' => write!(f, "\\t")?,
                        '\r' => write!(f, "\\r")?,
                        c if (c as u32) < 0x20 => write!(f, "\\x{:02x}", c as u32)?,
                        c => write!(f, "{c}")?,
                    }
                }
                write!(f, "'")
            }
            Value::None => write!(f, "None"),
            Value::List(items) => {
                write!(f, "[")?;
                for (i, item) in items.iter().enumerate() {
                    if i > 0 {
                        write!(f, ", ")?;
                    }
                    write!(f, "{item}")?;
                }
                write!(f, "]")
            }
            Value::Tuple(items) => {
                write!(f, "(")?;
                for (i, item) in items.iter().enumerate() {
                    if i > 0 {
                        write!(f, ", ")?;
                    }
                    write!(f, "{item}")?;
                }
                if items.len() == 1 {
                    write!(f, ",")?;
                }
                write!(f, ")")
            }
            Value::Dict(items) => {
                write!(f, "{{")?;
                for (i, (k, v)) in items.iter().enumerate() {
                    if i > 0 {
                        write!(f, ", ")?;
                    }
                    write!(f, "{k}: {v}")?;
                }
                write!(f, "}}")
            }
        }
    }
}

/// Random value of a given type, for seeded oracle-equivalence inputs.
/// Alphabet and ranges are kept small so generated programs stay fast.
pub fn random_value(term: &TypeTerm, rng: &mut impl Rng) -> Value {
    const ALPHABET: &[char] = &[
        'a', 'b', 'c', 'd', 'e', 's', 'p', 'M', 'Z', '0', '3', '7', ' ', ' ', '.', ',', '!', '?',
        '\'', '"',
    ];
    match term {
        TypeTerm::Int => Value::Int(rng.gen_range(-99..=99)),
        TypeTerm::Float => Value::Float(rng.gen_range(-400..=400) as f64 / 4.0),
        TypeTerm::Bool => Value::Bool(rng.gen_bool(0.5)),
        TypeTerm::Str => {
            let len = rng.gen_range(0..=12);
            Value::Str((0..len).map(|_| ALPHABET[rng.gen_range(0..ALPHABET.len())]).collect())
        }
        TypeTerm::List(inner) => {
            let len = rng.gen_range(0..=6);
            Value::List((0..len).map(|_| random_value(inner, rng)).collect())
        }
        TypeTerm::Tuple(terms) => {
            Value::Tuple(terms.iter().map(|t| random_value(t, rng)).collect())
        }
        TypeTerm::Dict(key, value) => {
            let len = rng.gen_range(0..=4);
            let mut items: Vec<(Value, Value)> = Vec::new();
            for _ in 0..len {
                let k = random_value(key, rng);
                if !items.iter().any(|(existing, _)| *existing == k) {
                    items.push((k, random_value(value, rng)));
                }
            }
            Value::Dict(items)
        }
        TypeTerm::Stdio => {
            let len = rng.gen_range(0..=10);
            let tokens: Vec<String> = (0..len)
                .map(|_| rng.gen_range(-50..=50i64).to_string())
                .collect();
            Value::Str(tokens.join(" "))
        }
    }
}

/// Random stdin payload for stdio programs: whitespace-separated integers.
pub fn random_stdin(rng: &mut impl Rng) -> String {
    let len = rng.gen_range(0..=10);
    let tokens: Vec<String> = (0..len).map(|_| rng.gen_range(-50..=50i64).to_string()).collect();
    tokens.join(" ")
}
