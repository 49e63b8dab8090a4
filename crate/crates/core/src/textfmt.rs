//! Line-oriented token format shared by the tree, forest and bundle
//! serializers.
//!
//! Each record is one line of whitespace-separated tokens. Tokens that would
//! not survive splitting (empty, containing whitespace, quotes, backslashes or
//! a leading `#`) are written double-quoted with backslash escapes. Reals are
//! written in scientific notation with 17 significant digits, which parses
//! back to the identical `f64`.

use crate::error::{Error, Result};

pub(crate) fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn needs_quotes(tok: &str) -> bool {
    tok.is_empty()
        || tok.starts_with('#')
        || tok
            .chars()
            .any(|c| c.is_whitespace() || c == '"' || c == '\\')
}

pub(crate) fn quote(tok: &str) -> String {
    if !needs_quotes(tok) {
        return tok.to_string();
    }
    let mut out = String::with_capacity(tok.len() + 2);
    out.push('"');
    for c in tok.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\t' => out.push_str("\\t"),
            '\r' => out.push_str("\\r"),
            c => out.push(c),
        }
    }
    out.push('"');
    out
}

#[derive(Default)]
pub(crate) struct TextWriter {
    buf: String,
}

impl TextWriter {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn line<I, S>(&mut self, tokens: I)
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut first = true;
        for t in tokens {
            if !first {
                self.buf.push(' ');
            }
            first = false;
            self.buf.push_str(&quote(t.as_ref()));
        }
        self.buf.push('\n');
    }

    pub fn finish(self) -> String {
        self.buf
    }
}

pub(crate) fn tokenize(line: &str, lineno: usize) -> Result<Vec<String>> {
    let mut out = Vec::new();
    let mut chars = line.chars().peekable();
    loop {
        while chars.peek().is_some_and(|c| c.is_whitespace()) {
            chars.next();
        }
        let Some(&c) = chars.peek() else { break };
        if c == '"' {
            chars.next();
            let mut tok = String::new();
            loop {
                match chars.next() {
                    None => return Err(Error::parse(lineno, "unterminated quoted token")),
                    Some('"') => break,
                    Some('\\') => match chars.next() {
                        Some('n') => tok.push('\n'),
                        Some('t') => tok.push('\t'),
                        Some('r') => tok.push('\r'),
                        Some(e) => tok.push(e),
                        None => return Err(Error::parse(lineno, "dangling escape")),
                    },
                    Some(c) => tok.push(c),
                }
            }
            out.push(tok);
        } else {
            let mut tok = String::new();
            while let Some(&c) = chars.peek() {
                if c.is_whitespace() {
                    break;
                }
                tok.push(c);
                chars.next();
            }
            out.push(tok);
        }
    }
    Ok(out)
}

/// Cursor over the non-blank lines of a document.
pub(crate) struct TextReader<'a> {
    lines: Vec<(usize, &'a str)>,
    pos: usize,
}

impl<'a> TextReader<'a> {
    pub fn new(text: &'a str) -> Self {
        let lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l))
            .filter(|(_, l)| !l.trim().is_empty())
            .collect();
        Self { lines, pos: 0 }
    }

    pub fn lineno(&self) -> usize {
        self.lines
            .get(self.pos)
            .map(|(n, _)| *n)
            .unwrap_or_else(|| self.lines.last().map(|(n, _)| n + 1).unwrap_or(1))
    }

    pub fn is_done(&self) -> bool {
        self.pos >= self.lines.len()
    }

    pub fn peek(&self) -> Result<Line> {
        let (n, l) = *self
            .lines
            .get(self.pos)
            .ok_or_else(|| Error::parse(self.lineno(), "unexpected end of input"))?;
        Ok(Line {
            lineno: n,
            tokens: tokenize(l, n)?,
            pos: 0,
        })
    }

    pub fn next_line(&mut self) -> Result<Line> {
        let line = self.peek()?;
        self.pos += 1;
        Ok(line)
    }

    /// Reads a line and checks that it starts with `keyword`.
    pub fn expect(&mut self, keyword: &str) -> Result<Line> {
        let mut line = self.next_line()?;
        line.keyword(keyword)?;
        Ok(line)
    }
}

pub(crate) struct Line {
    pub lineno: usize,
    tokens: Vec<String>,
    pos: usize,
}

impl Line {
    pub fn err(&self, msg: impl Into<String>) -> Error {
        Error::parse(self.lineno, msg)
    }

    pub fn keyword(&mut self, kw: &str) -> Result<()> {
        let t = self.string()?;
        if t != kw {
            return Err(self.err(format!("expected `{kw}`, found `{t}`")));
        }
        Ok(())
    }

    pub fn string(&mut self) -> Result<String> {
        let t = self
            .tokens
            .get(self.pos)
            .cloned()
            .ok_or_else(|| self.err("missing token"))?;
        self.pos += 1;
        Ok(t)
    }

    pub fn f64(&mut self) -> Result<f64> {
        let t = self.string()?;
        t.parse::<f64>()
            .map_err(|_| self.err(format!("bad number `{t}`")))
    }

    pub fn u64(&mut self) -> Result<u64> {
        let t = self.string()?;
        t.parse::<u64>()
            .map_err(|_| self.err(format!("bad integer `{t}`")))
    }

    pub fn usize(&mut self) -> Result<usize> {
        let t = self.string()?;
        t.parse::<usize>()
            .map_err(|_| self.err(format!("bad integer `{t}`")))
    }

    pub fn strings(&mut self, n: usize) -> Result<Vec<String>> {
        (0..n).map(|_| self.string()).collect()
    }

    pub fn finish(&self) -> Result<()> {
        if self.pos != self.tokens.len() {
            return Err(self.err(format!(
                "unexpected trailing token `{}`",
                self.tokens[self.pos]
            )));
        }
        Ok(())
    }
}
