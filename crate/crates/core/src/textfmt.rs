//! Line-oriented `key = value` documents with labelled sections.
//!
//! ```text
//! # comment
//! schema = kladapt-model-v1
//! f[1] = (* th1 x1)
//! run baseline {
//!   x0 = 0.4, -1
//! }
//! ```
//!
//! A value runs to the end of the line. If its parentheses are unbalanced the
//! following lines are appended until they balance, so long S-expressions may
//! span several lines. Sections nest. Keys must be unique within a block.

use std::fmt::Write as _;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
#[error("line {line}: {message}")]
pub struct TextError {
    pub line: usize,
    pub message: String,
}

impl TextError {
    pub fn new(line: usize, message: impl Into<String>) -> TextError {
        TextError { line, message: message.into() }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    pub key: String,
    pub value: String,
    pub line: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Section {
    pub kind: String,
    pub label: Option<String>,
    pub line: usize,
    pub body: Block,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Block {
    pub fields: Vec<Field>,
    pub sections: Vec<Section>,
}

fn paren_balance(s: &str) -> i64 {
    s.chars().fold(0, |acc, c| match c {
        '(' => acc + 1,
        ')' => acc - 1,
        _ => acc,
    })
}

fn strip_comment(s: &str) -> &str {
    match s.find('#') {
        Some(i) => &s[..i],
        None => s,
    }
}

impl Block {
    pub fn parse(text: &str) -> Result<Block, TextError> {
        let lines: Vec<&str> = text.lines().collect();
        let mut pos = 0;
        let block = parse_block(&lines, &mut pos, None)?;
        Ok(block)
    }

    pub fn get(&self, key: &str) -> Option<&Field> {
        self.fields.iter().find(|f| f.key == key)
    }

    pub fn value(&self, key: &str) -> Option<&str> {
        self.get(key).map(|f| f.value.as_str())
    }

    /// Field value, or an error naming the block.
    pub fn require(&self, key: &str, line: usize) -> Result<&Field, TextError> {
        self.get(key)
            .ok_or_else(|| TextError::new(line, format!("missing required field `{key}`")))
    }

    pub fn sections<'a>(&'a self, kind: &'a str) -> impl Iterator<Item = &'a Section> + 'a {
        self.sections.iter().filter(move |s| s.kind == kind)
    }

    pub fn section(&self, kind: &str) -> Option<&Section> {
        self.sections.iter().find(|s| s.kind == kind)
    }

    pub fn push(&mut self, key: impl Into<String>, value: impl Into<String>) {
        self.fields.push(Field { key: key.into(), value: value.into(), line: 0 });
    }

    /// Rejects any field or section kind not in the allowed lists.
    pub fn check_known(&self, fields: &[&str], sections: &[&str]) -> Result<(), TextError> {
        for f in &self.fields {
            let base = f.key.split('[').next().unwrap_or("");
            if !fields.contains(&f.key.as_str()) && !fields.contains(&base) {
                return Err(TextError::new(f.line, format!("unknown field `{}`", f.key)));
            }
        }
        for s in &self.sections {
            if !sections.contains(&s.kind.as_str()) {
                return Err(TextError::new(s.line, format!("unknown section `{}`", s.kind)));
            }
        }
        Ok(())
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        render_block(self, 0, &mut out);
        out
    }
}

fn render_block(b: &Block, indent: usize, out: &mut String) {
    let pad = "  ".repeat(indent);
    for f in &b.fields {
        let _ = writeln!(out, "{pad}{} = {}", f.key, f.value);
    }
    for s in &b.sections {
        match &s.label {
            Some(l) => {
                let _ = writeln!(out, "{pad}{} {} {{", s.kind, l);
            }
            None => {
                let _ = writeln!(out, "{pad}{} {{", s.kind);
            }
        }
        render_block(&s.body, indent + 1, out);
        let _ = writeln!(out, "{pad}}}");
    }
}

fn parse_block(lines: &[&str], pos: &mut usize, opened_at: Option<usize>) -> Result<Block, TextError> {
    let mut block = Block::default();
    while *pos < lines.len() {
        let lineno = *pos + 1;
        let line = strip_comment(lines[*pos]).trim();
        *pos += 1;
        if line.is_empty() {
            continue;
        }
        if line == "}" {
            return match opened_at {
                Some(_) => Ok(block),
                None => Err(TextError::new(lineno, "unmatched `}`")),
            };
        }
        if let Some(head) = line.strip_suffix('{') {
            let mut words = head.split_whitespace();
            let kind = words
                .next()
                .ok_or_else(|| TextError::new(lineno, "section without a name"))?
                .to_string();
            let label = words.next().map(str::to_string);
            if words.next().is_some() {
                return Err(TextError::new(lineno, "section header takes a kind and at most one label"));
            }
            let body = parse_block(lines, pos, Some(lineno))?;
            block.sections.push(Section { kind, label, line: lineno, body });
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| TextError::new(lineno, format!("expected `key = value`, found `{line}`")))?;
        let key = key.trim().to_string();
        if key.is_empty() || key.contains(char::is_whitespace) {
            return Err(TextError::new(lineno, format!("invalid key `{key}`")));
        }
        let mut value = value.trim().to_string();
        let mut balance = paren_balance(&value);
        while balance > 0 {
            if *pos >= lines.len() {
                return Err(TextError::new(lineno, "unbalanced parentheses in value"));
            }
            let more = strip_comment(lines[*pos]).trim();
            *pos += 1;
            value.push(' ');
            value.push_str(more);
            balance += paren_balance(more);
        }
        if balance < 0 {
            return Err(TextError::new(lineno, "unbalanced parentheses in value"));
        }
        if block.get(&key).is_some() {
            return Err(TextError::new(lineno, format!("duplicate field `{key}`")));
        }
        block.fields.push(Field { key, value, line: lineno });
    }
    match opened_at {
        Some(l) => Err(TextError::new(l, "section is never closed")),
        None => Ok(block),
    }
}

/// Parses a comma- or whitespace-separated list of reals.
pub fn parse_reals(s: &str, line: usize) -> Result<Vec<f64>, TextError> {
    s.split(|c: char| c == ',' || c.is_whitespace())
        .filter(|t| !t.is_empty())
        .map(|t| {
            t.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| TextError::new(line, format!("invalid number `{t}`")))
        })
        .collect()
}

pub fn parse_real(s: &str, line: usize) -> Result<f64, TextError> {
    match parse_reals(s, line)?.as_slice() {
        [v] => Ok(*v),
        _ => Err(TextError::new(line, format!("expected one number, found `{s}`"))),
    }
}

pub fn parse_usize(s: &str, line: usize) -> Result<usize, TextError> {
    s.trim()
        .parse()
        .map_err(|_| TextError::new(line, format!("expected a non-negative integer, found `{s}`")))
}

/// Formats reals so that they parse back to the same bits.
pub fn format_reals(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x:?}")).collect::<Vec<_>>().join(", ")
}

#[cfg(test)]
mod tests {
    use super::*;

    const DOC: &str = "\
# header
schema = test-v1
u = (+ x1
       (* 2 x2))   # spans lines
run a {
  x0 = 0.4, -1
  inner {
    k = 3
  }
}
run b {
}
";

    #[test]
    fn parses_fields_sections_and_continuations() {
        let b = Block::parse(DOC).unwrap();
        assert_eq!(b.value("schema"), Some("test-v1"));
        assert_eq!(b.value("u"), Some("(+ x1 (* 2 x2))"));
        let runs: Vec<_> = b.sections("run").collect();
        assert_eq!(runs.len(), 2);
        assert_eq!(runs[0].label.as_deref(), Some("a"));
        assert_eq!(parse_reals(runs[0].body.value("x0").unwrap(), 0).unwrap(), vec![0.4, -1.0]);
        assert_eq!(runs[0].body.section("inner").unwrap().body.value("k"), Some("3"));
    }

    #[test]
    fn render_round_trips() {
        let b = Block::parse(DOC).unwrap();
        let again = Block::parse(&b.render()).unwrap();
        assert_eq!(b.render(), again.render());
    }

    #[test]
    fn errors_carry_line_numbers() {
        assert_eq!(Block::parse("a = 1\na = 2").unwrap_err().line, 2);
        assert_eq!(Block::parse("s {\n a = 1\n").unwrap_err().line, 1);
        assert_eq!(Block::parse("}\n").unwrap_err().line, 1);
        assert_eq!(Block::parse("x\n").unwrap_err().line, 1);
        assert!(Block::parse("u = (+ x1").is_err());
    }
}
