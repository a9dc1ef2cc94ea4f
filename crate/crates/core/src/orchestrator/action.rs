//! Action grammar:
//!
//! ```text
//! action  := ident "(" [arg ("," arg)*] ")"
//! arg     := [ident "="] literal
//! literal := string | integer | "[" [literal ("," literal)*] "]"
//! string  := '"' ... '"' | "'" ... "'"      (backslash escapes)
//! ```
//!
//! One call per action. A surrounding markdown code fence is ignored.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Value {
    Int(i64),
    Str(String),
    List(Vec<Value>),
}

impl Value {
    pub fn as_str(&self) -> Option<&str> {
        match self {
            Value::Str(s) => Some(s),
            _ => None,
        }
    }

    pub fn as_int(&self) -> Option<i64> {
        match self {
            Value::Int(i) => Some(*i),
            _ => None,
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Int(i) => write!(f, "{i}"),
            Value::Str(s) => write!(f, "{s:?}"),
            Value::List(items) => {
                f.write_str("[")?;
                for (i, v) in items.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    write!(f, "{v}")?;
                }
                f.write_str("]")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Call {
    pub name: String,
    pub args: Vec<Value>,
    pub kwargs: Vec<(String, Value)>,
}

impl Call {
    pub fn kwarg(&self, key: &str) -> Option<&Value> {
        self.kwargs.iter().find(|(k, _)| k == key).map(|(_, v)| v)
    }

    /// Positional argument `i`, or the keyword `key` if given by name.
    pub fn arg(&self, i: usize, key: &str) -> Option<&Value> {
        self.args.get(i).or_else(|| self.kwarg(key))
    }
}

impl fmt::Display for Call {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}(", self.name)?;
        let mut first = true;
        for a in &self.args {
            if !first {
                f.write_str(", ")?;
            }
            first = false;
            write!(f, "{a}")?;
        }
        for (k, v) in &self.kwargs {
            if !first {
                f.write_str(", ")?;
            }
            first = false;
            write!(f, "{k}={v}")?;
        }
        f.write_str(")")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("could not parse action at column {col}: {reason}")]
pub struct ParseError {
    pub col: usize,
    pub reason: String,
}

/// Drop a markdown code fence around the action, if any.
fn strip_fence(raw: &str) -> &str {
    let t = raw.trim();
    let Some(rest) = t.strip_prefix("```") else { return t };
    let body = rest.split_once('\n').map_or("", |(_, b)| b);
    body.trim_end().strip_suffix("```").unwrap_or(body).trim()
}

struct Parser<'a> {
    src: &'a str,
    pos: usize,
}

impl Parser<'_> {
    fn err<T>(&self, reason: impl Into<String>) -> Result<T, ParseError> {
        Err(ParseError { col: self.pos + 1, reason: reason.into() })
    }

    fn peek(&self) -> Option<char> {
        self.src[self.pos..].chars().next()
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.peek()?;
        self.pos += c.len_utf8();
        Some(c)
    }

    fn ws(&mut self) {
        while self.peek().is_some_and(char::is_whitespace) {
            self.bump();
        }
    }

    fn eat(&mut self, c: char) -> bool {
        self.ws();
        if self.peek() == Some(c) {
            self.bump();
            true
        } else {
            false
        }
    }

    fn ident(&mut self) -> Option<String> {
        self.ws();
        let start = self.pos;
        match self.peek() {
            Some(c) if c.is_ascii_alphabetic() || c == '_' => {}
            _ => return None,
        }
        while self.peek().is_some_and(|c| c.is_ascii_alphanumeric() || c == '_') {
            self.bump();
        }
        Some(self.src[start..self.pos].to_string())
    }

    fn string(&mut self, quote: char) -> Result<Value, ParseError> {
        let mut out = String::new();
        loop {
            match self.bump() {
                None => return self.err("unterminated string"),
                Some(c) if c == quote => return Ok(Value::Str(out)),
                Some('\\') => match self.bump() {
                    Some('n') => out.push('\n'),
                    Some('t') => out.push('\t'),
                    Some(c @ ('\\' | '"' | '\'')) => out.push(c),
                    Some(c) => {
                        out.push('\\');
                        out.push(c);
                    }
                    None => return self.err("unterminated string"),
                },
                Some(c) => out.push(c),
            }
        }
    }

    fn literal(&mut self) -> Result<Value, ParseError> {
        self.ws();
        match self.peek() {
            Some(q @ ('"' | '\'')) => {
                self.bump();
                self.string(q)
            }
            Some('[') => {
                self.bump();
                let mut items = Vec::new();
                if self.eat(']') {
                    return Ok(Value::List(items));
                }
                loop {
                    items.push(self.literal()?);
                    if self.eat(',') {
                        if self.eat(']') {
                            return Ok(Value::List(items));
                        }
                        continue;
                    }
                    if self.eat(']') {
                        return Ok(Value::List(items));
                    }
                    return self.err("expected ',' or ']' in list");
                }
            }
            Some(c) if c == '-' || c.is_ascii_digit() => {
                let start = self.pos;
                self.bump();
                while self.peek().is_some_and(|c| c.is_ascii_digit()) {
                    self.bump();
                }
                match self.src[start..self.pos].parse() {
                    Ok(n) => Ok(Value::Int(n)),
                    Err(_) => self.err("invalid integer"),
                }
            }
            Some(_) => self.err("expected a string, integer or list literal"),
            None => self.err("unexpected end of input"),
        }
    }

    fn arg(&mut self, call: &mut Call) -> Result<(), ParseError> {
        self.ws();
        let save = self.pos;
        if let Some(name) = self.ident() {
            if self.eat('=') {
                let v = self.literal()?;
                if call.kwargs.iter().any(|(k, _)| *k == name) {
                    return self.err(format!("duplicate keyword argument '{name}'"));
                }
                call.kwargs.push((name, v));
                return Ok(());
            }
            self.pos = save;
        }
        if !call.kwargs.is_empty() {
            return self.err("positional argument after keyword argument");
        }
        call.args.push(self.literal()?);
        Ok(())
    }
}

pub fn parse_action(raw: &str) -> Result<Call, ParseError> {
    let src = strip_fence(raw);
    let mut p = Parser { src, pos: 0 };
    let Some(name) = p.ident() else { return p.err("expected an API name") };
    if !p.eat('(') {
        return p.err("expected '(' after API name");
    }
    let mut call = Call { name, args: Vec::new(), kwargs: Vec::new() };
    if !p.eat(')') {
        loop {
            p.arg(&mut call)?;
            if p.eat(',') {
                continue;
            }
            if p.eat(')') {
                break;
            }
            return p.err("expected ',' or ')'");
        }
    }
    p.ws();
    if p.pos != src.len() {
        return p.err("trailing input; send exactly one call per action");
    }
    Ok(call)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_calls() {
        let c = parse_action(r#"get_logs("test-social-network", "user-service")"#).unwrap();
        assert_eq!(c.name, "get_logs");
        assert_eq!(c.args, vec![Value::Str("test-social-network".into()), Value::Str("user-service".into())]);
        let c = parse_action("get_traces('ns', 5)").unwrap();
        assert_eq!(c.args[1], Value::Int(5));
        let c = parse_action(r#"submit(["a", "b",])"#).unwrap();
        assert_eq!(c.args, vec![Value::List(vec![Value::Str("a".into()), Value::Str("b".into())])]);
        let c = parse_action(r#"submit(system_level="application", fault_type="auth_revoked")"#).unwrap();
        assert_eq!(c.kwarg("fault_type"), Some(&Value::Str("auth_revoked".into())));
        assert_eq!(parse_action("submit()").unwrap().args, vec![]);
    }

    #[test]
    fn strips_code_fence() {
        let c = parse_action("```python\nsubmit(\"yes\")\n```").unwrap();
        assert_eq!(c.args, vec![Value::Str("yes".into())]);
        assert_eq!(parse_action("```\nsubmit()\n```").unwrap().name, "submit");
    }

    #[test]
    fn rejects_bad_input() {
        for bad in ["get_logs(", "get_logs", "", "submit(yes)", "a() b()", "f(x=1, 2)", "f('a)", "f(1,,2)"] {
            assert!(parse_action(bad).is_err(), "{bad:?}");
        }
    }

    #[test]
    fn display_round_trips() {
        for src in [r#"submit(["a", "b"])"#, r#"exec_shell("kubectl get pods -n x")"#, r#"f(1, k="v\"q")"#] {
            let c = parse_action(src).unwrap();
            assert_eq!(parse_action(&c.to_string()).unwrap(), c);
        }
    }
}
