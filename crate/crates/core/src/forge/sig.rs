//! Typed signatures for base problems and the grammar they are parsed from.
//!
//! Type terms: `int | float | bool | str | list[T] | dict[K,V] |
//! tuple[T,...] | stdio`. Spellings are case-folded before comparison
//! (`List[int]` equals `list[int]`), and there is no subtyping: `int` and
//! `float` never match.

use serde::{Deserialize, Serialize};
use std::fmt;

use super::{Family, ForgeError};

/// One term of the type grammar.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum TypeTerm {
    Int,
    Float,
    Bool,
    Str,
    List(Box<TypeTerm>),
    Dict(Box<TypeTerm>, Box<TypeTerm>),
    Tuple(Vec<TypeTerm>),
    /// A whole stdin → stdout program rather than a value.
    Stdio,
}

impl TypeTerm {
    /// Parse a term from an annotation string, case-folding spellings.
    pub fn parse(text: &str) -> Result<Self, ForgeError> {
        let mut parser = TermParser::new(text);
        let term = parser.term()?;
        parser.skip_ws();
        if !parser.at_end() {
            return Err(ForgeError::MalformedTerm {
                term: text.trim().to_string(),
                detail: "trailing characters after type term".into(),
            });
        }
        Ok(term)
    }

    /// True when no `stdio` appears nested inside a container.
    fn stdio_only_at_top(&self) -> bool {
        fn nested_ok(term: &TypeTerm) -> bool {
            match term {
                TypeTerm::Stdio => false,
                TypeTerm::List(t) => nested_ok(t),
                TypeTerm::Dict(k, v) => nested_ok(k) && nested_ok(v),
                TypeTerm::Tuple(ts) => ts.iter().all(nested_ok),
                _ => true,
            }
        }
        match self {
            TypeTerm::Stdio => true,
            other => nested_ok(other),
        }
    }
}

impl fmt::Display for TypeTerm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TypeTerm::Int => write!(f, "int"),
            TypeTerm::Float => write!(f, "float"),
            TypeTerm::Bool => write!(f, "bool"),
            TypeTerm::Str => write!(f, "str"),
            TypeTerm::List(t) => write!(f, "list[{t}]"),
            TypeTerm::Dict(k, v) => write!(f, "dict[{k},{v}]"),
            TypeTerm::Tuple(ts) => {
                write!(f, "tuple[")?;
                for (i, t) in ts.iter().enumerate() {
                    if i > 0 {
                        write!(f, ",")?;
                    }
                    write!(f, "{t}")?;
                }
                write!(f, "]")
            }
            TypeTerm::Stdio => write!(f, "stdio"),
        }
    }
}

impl From<TypeTerm> for String {
    fn from(t: TypeTerm) -> String {
        t.to_string()
    }
}

impl TryFrom<String> for TypeTerm {
    type Error = String;
    fn try_from(s: String) -> Result<Self, String> {
        TypeTerm::parse(&s).map_err(|e| e.to_string())
    }
}

struct TermParser<'a> {
    chars: Vec<char>,
    pos: usize,
    source: &'a str,
}

impl<'a> TermParser<'a> {
    fn new(source: &'a str) -> Self {
        Self {
            chars: source.chars().collect(),
            pos: 0,
            source,
        }
    }

    fn at_end(&self) -> bool {
        self.pos >= self.chars.len()
    }

    fn peek(&self) -> Option<char> {
        self.chars.get(self.pos).copied()
    }

    fn skip_ws(&mut self) {
        while matches!(self.peek(), Some(c) if c.is_whitespace()) {
            self.pos += 1;
        }
    }

    fn malformed(&self, detail: &str) -> ForgeError {
        ForgeError::MalformedTerm {
            term: self.source.trim().to_string(),
            detail: detail.into(),
        }
    }

    fn ident(&mut self) -> Result<String, ForgeError> {
        self.skip_ws();
        let start = self.pos;
        while matches!(self.peek(), Some(c) if c.is_alphanumeric() || c == '_') {
            self.pos += 1;
        }
        if self.pos == start {
            return Err(self.malformed("expected a type name"));
        }
        Ok(self.chars[start..self.pos].iter().collect())
    }

    fn expect(&mut self, ch: char) -> Result<(), ForgeError> {
        self.skip_ws();
        if self.peek() == Some(ch) {
            self.pos += 1;
            Ok(())
        } else {
            Err(self.malformed(&format!("expected '{ch}'")))
        }
    }

    fn term(&mut self) -> Result<TypeTerm, ForgeError> {
        let name = self.ident()?.to_ascii_lowercase();
        match name.as_str() {
            "int" => Ok(TypeTerm::Int),
            "float" => Ok(TypeTerm::Float),
            "bool" => Ok(TypeTerm::Bool),
            "str" | "string" => Ok(TypeTerm::Str),
            "stdio" => Ok(TypeTerm::Stdio),
            "list" => {
                self.expect('[')?;
                let inner = self.term()?;
                self.expect(']')?;
                Ok(TypeTerm::List(Box::new(inner)))
            }
            "dict" => {
                self.expect('[')?;
                let key = self.term()?;
                self.expect(',')?;
                let value = self.term()?;
                self.expect(']')?;
                Ok(TypeTerm::Dict(Box::new(key), Box::new(value)))
            }
            "tuple" => {
                self.expect('[')?;
                let mut items = vec![self.term()?];
                loop {
                    self.skip_ws();
                    match self.peek() {
                        Some(',') => {
                            self.pos += 1;
                            items.push(self.term()?);
                        }
                        Some(']') => {
                            self.pos += 1;
                            break;
                        }
                        _ => return Err(self.malformed("expected ',' or ']' in tuple")),
                    }
                }
                Ok(TypeTerm::Tuple(items))
            }
            other => Err(self.malformed(&format!("unknown type name '{other}'"))),
        }
    }
}

/// Typed signature of a base problem: ordered inputs and one output.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TypeSig {
    pub inputs: Vec<TypeTerm>,
    pub output: TypeTerm,
}

impl TypeSig {
    pub fn new(inputs: Vec<TypeTerm>, output: TypeTerm) -> Result<Self, ForgeError> {
        let sig = Self { inputs, output };
        sig.validate()?;
        Ok(sig)
    }

    /// The signature of every stdin → stdout program.
    pub fn stdio() -> Self {
        Self {
            inputs: vec![TypeTerm::Stdio],
            output: TypeTerm::Stdio,
        }
    }

    /// Well-formedness: inputs nonempty; `stdio` may only appear as the
    /// sole input and/or as the output, never nested or mixed with values.
    pub fn validate(&self) -> Result<(), ForgeError> {
        if self.inputs.is_empty() {
            return Err(ForgeError::MalformedTerm {
                term: self.to_string(),
                detail: "signature has no inputs".into(),
            });
        }
        let stdio_input = self.inputs.iter().any(|t| *t == TypeTerm::Stdio);
        if stdio_input && self.inputs.len() != 1 {
            return Err(ForgeError::MalformedTerm {
                term: self.to_string(),
                detail: "stdio must be the sole input".into(),
            });
        }
        for term in self.inputs.iter().chain(std::iter::once(&self.output)) {
            if !term.stdio_only_at_top() {
                return Err(ForgeError::MalformedTerm {
                    term: self.to_string(),
                    detail: "stdio may not be nested inside a container".into(),
                });
            }
        }
        Ok(())
    }

    /// True for the `(stdio) -> stdio` shape used by program-level tasks.
    pub fn is_stdio(&self) -> bool {
        self.inputs == [TypeTerm::Stdio] && self.output == TypeTerm::Stdio
    }
}

impl fmt::Display for TypeSig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, t) in self.inputs.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{t}")?;
        }
        write!(f, ") -> {}", self.output)
    }
}

/// True iff `consumer` takes exactly one input and it structurally equals
/// `producer`'s output. Case folding already happened at parse time, and
/// there is no subtyping.
pub fn compatible(producer: &TypeSig, consumer: &TypeSig) -> bool {
    consumer.inputs.len() == 1 && consumer.inputs[0] == producer.output
}

/// Read the declared signature out of a problem source.
///
/// Execution-family sources must contain exactly one top-level `def` with
/// annotations on every parameter and on the return. Program-level families
/// (fill-in-the-middle, translation) are stdin → stdout by construction.
pub fn parse_signature(source_text: &str, family: Family) -> Result<TypeSig, ForgeError> {
    match family {
        Family::Execution => parse_def_signature(source_text),
        Family::FillInMiddle | Family::Translation => Ok(TypeSig::stdio()),
    }
}

/// Locate the single top-level function header and return
/// `(name, params_text, return_annotation)`.
pub(crate) fn top_level_def(source_text: &str) -> Result<(String, String, Option<String>), ForgeError> {
    let mut headers = Vec::new();
    let bytes_offsets: Vec<usize> = {
        let mut offs = vec![0usize];
        for (i, b) in source_text.bytes().enumerate() {
            if b == b'\n' {
                offs.push(i + 1);
            }
        }
        offs
    };
    for &start in &bytes_offsets {
        let line = &source_text[start..];
        if line.starts_with("def ") {
            headers.push(start);
        }
    }
    if headers.is_empty() {
        return Err(ForgeError::BadSource {
            detail: "no top-level function definition found".into(),
        });
    }
    if headers.len() > 1 {
        return Err(ForgeError::BadSource {
            detail: format!("expected exactly one top-level function, found {}", headers.len()),
        });
    }
    let header_start = headers[0];
    let rest = &source_text[header_start + 4..];
    let name_end = rest
        .find(|c: char| !(c.is_alphanumeric() || c == '_'))
        .unwrap_or(rest.len());
    let name = rest[..name_end].to_string();
    if name.is_empty() {
        return Err(ForgeError::BadSource {
            detail: "function name missing after 'def'".into(),
        });
    }
    let after_name = &rest[name_end..];
    let open = after_name.find('(').ok_or_else(|| ForgeError::BadSource {
        detail: "function header has no parameter list".into(),
    })?;
    // Bracket-match to the closing paren; headers may span lines.
    let mut depth = 0usize;
    let mut close = None;
    for (i, c) in after_name[open..].char_indices() {
        match c {
            '(' | '[' | '{' => depth += 1,
            ')' | ']' | '}' => {
                depth -= 1;
                if depth == 0 {
                    close = Some(open + i);
                    break;
                }
            }
            _ => {}
        }
    }
    let close = close.ok_or_else(|| ForgeError::BadSource {
        detail: "unbalanced parameter list".into(),
    })?;
    let params = after_name[open + 1..close].to_string();
    let tail = &after_name[close + 1..];
    let header_end = tail.find(':').ok_or_else(|| ForgeError::BadSource {
        detail: "function header has no terminating ':'".into(),
    })?;
    let between = tail[..header_end].trim();
    let ret = between
        .strip_prefix("->")
        .map(|r| r.trim().to_string())
        .filter(|r| !r.is_empty());
    Ok((name, params, ret))
}

fn parse_def_signature(source_text: &str) -> Result<TypeSig, ForgeError> {
    let (name, params, ret) = top_level_def(source_text)?;
    let ret = ret.ok_or_else(|| ForgeError::MissingAnnotation {
        function: name.clone(),
        what: "return type".into(),
    })?;
    let mut inputs = Vec::new();
    for raw in split_top_level(&params) {
        let raw = raw.trim();
        if raw.is_empty() {
            continue;
        }
        // Strip a default value if present (split on the first top-level '=').
        let no_default = split_once_top_level(raw, '=').0;
        let (param_name, annot) = match split_once_top_level(no_default, ':') {
            (n, Some(a)) => (n.trim(), a.trim()),
            (n, None) => {
                return Err(ForgeError::MissingAnnotation {
                    function: name.clone(),
                    what: format!("parameter '{}'", n.trim()),
                })
            }
        };
        if annot.is_empty() {
            return Err(ForgeError::MissingAnnotation {
                function: name.clone(),
                what: format!("parameter '{param_name}'"),
            });
        }
        inputs.push(TypeTerm::parse(annot)?);
    }
    if inputs.is_empty() {
        return Err(ForgeError::MissingAnnotation {
            function: name,
            what: "parameters (function takes none)".into(),
        });
    }
    TypeSig::new(inputs, TypeTerm::parse(&ret)?)
}

/// Split on top-level commas (ignoring commas inside brackets).
fn split_top_level(text: &str) -> Vec<&str> {
    let mut parts = Vec::new();
    let mut depth = 0usize;
    let mut start = 0usize;
    for (i, c) in text.char_indices() {
        match c {
            '(' | '[' | '{' => depth += 1,
            ')' | ']' | '}' => depth = depth.saturating_sub(1),
            ',' if depth == 0 => {
                parts.push(&text[start..i]);
                start = i + c.len_utf8();
            }
            _ => {}
        }
    }
    parts.push(&text[start..]);
    parts
}

fn split_once_top_level(text: &str, sep: char) -> (&str, Option<&str>) {
    let mut depth = 0usize;
    for (i, c) in text.char_indices() {
        match c {
            '(' | '[' | '{' => depth += 1,
            ')' | ']' | '}' => depth = depth.saturating_sub(1),
            c if c == sep && depth == 0 => {
                return (&text[..i], Some(&text[i + c.len_utf8()..]));
            }
            _ => {}
        }
    }
    (text, None)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::corpus;

    #[test]
    fn parses_primitives_case_insensitively() {
        assert_eq!(TypeTerm::parse("int").unwrap(), TypeTerm::Int);
        assert_eq!(TypeTerm::parse("List[int]").unwrap(), TypeTerm::parse("list[int]").unwrap());
        assert_eq!(
            TypeTerm::parse("Dict[str, INT]").unwrap(),
            TypeTerm::Dict(Box::new(TypeTerm::Str), Box::new(TypeTerm::Int))
        );
        assert_eq!(
            TypeTerm::parse("tuple[int, str]").unwrap(),
            TypeTerm::Tuple(vec![TypeTerm::Int, TypeTerm::Str])
        );
    }

    #[test]
    fn rejects_malformed_terms() {
        assert!(matches!(TypeTerm::parse("list[").unwrap_err(), ForgeError::MalformedTerm { .. }));
        assert!(matches!(TypeTerm::parse("set[int]").unwrap_err(), ForgeError::MalformedTerm { .. }));
        assert!(matches!(TypeTerm::parse("tuple[int, ...]").unwrap_err(), ForgeError::MalformedTerm { .. }));
        assert!(matches!(TypeTerm::parse("int int").unwrap_err(), ForgeError::MalformedTerm { .. }));
    }

    #[test]
    fn stdio_must_stay_top_level() {
        assert!(TypeSig::new(vec![TypeTerm::Stdio], TypeTerm::Stdio).is_ok());
        assert!(TypeSig::new(
            vec![TypeTerm::List(Box::new(TypeTerm::Stdio))],
            TypeTerm::Int
        )
        .is_err());
        assert!(TypeSig::new(vec![TypeTerm::Stdio, TypeTerm::Int], TypeTerm::Int).is_err());
        assert!(TypeSig::new(vec![], TypeTerm::Int).is_err());
    }

    #[test]
    fn reads_signature_of_first_bundled_function() {
        let sig = parse_signature(corpus::FIG_SKIP_SPACES_SRC, Family::Execution).unwrap();
        assert_eq!(sig.inputs, vec![TypeTerm::Str]);
        assert_eq!(sig.output, TypeTerm::Str);
    }

    #[test]
    fn reads_signature_of_second_bundled_function() {
        let sig = parse_signature(corpus::FIG_CHAR_SHIFT_FREQ_SRC, Family::Execution).unwrap();
        assert_eq!(sig.inputs, vec![TypeTerm::Str]);
        assert_eq!(sig.output, TypeTerm::List(Box::new(TypeTerm::Int)));
    }

    #[test]
    fn unannotated_function_is_missing_annotation() {
        let err = parse_signature("def g(x): return x", Family::Execution).unwrap_err();
        assert!(matches!(err, ForgeError::MissingAnnotation { .. }));
        let err = parse_signature("def g(x: int): return x", Family::Execution).unwrap_err();
        assert!(matches!(err, ForgeError::MissingAnnotation { .. }));
    }

    #[test]
    fn multiple_or_missing_defs_are_bad_sources() {
        assert!(matches!(
            parse_signature("x = 1\n", Family::Execution).unwrap_err(),
            ForgeError::BadSource { .. }
        ));
        let two = "def a(x: int) -> int:\n    return x\ndef b(x: int) -> int:\n    return x\n";
        assert!(matches!(
            parse_signature(two, Family::Execution).unwrap_err(),
            ForgeError::BadSource { .. }
        ));
    }

    #[test]
    fn fill_in_middle_is_always_stdio() {
        let sig = parse_signature("print(input())", Family::FillInMiddle).unwrap();
        assert!(sig.is_stdio());
    }

    #[test]
    fn compatibility_is_unary_and_structural() {
        let str_to_str = TypeSig::new(vec![TypeTerm::Str], TypeTerm::Str).unwrap();
        let str_to_list = TypeSig::new(vec![TypeTerm::Str], TypeTerm::List(Box::new(TypeTerm::Int))).unwrap();
        assert!(compatible(&str_to_str, &str_to_list));
        assert!(!compatible(&str_to_list, &str_to_str));
        let binary = TypeSig::new(vec![TypeTerm::Str, TypeTerm::Str], TypeTerm::Str).unwrap();
        assert!(!compatible(&str_to_str, &binary));
        // No subtyping: int != float.
        let int_out = TypeSig::new(vec![TypeTerm::Str], TypeTerm::Int).unwrap();
        let float_in = TypeSig::new(vec![TypeTerm::Float], TypeTerm::Int).unwrap();
        assert!(!compatible(&int_out, &float_in));
    }
}
