//! Minimal block-style YAML reader for profile documents.
//!
//! Supports the subset the profile language actually uses: block mappings
//! and sequences, plain/quoted scalars, comments, anchors/aliases
//! (`&name` / `*name`), flow sequences of scalars, and the custom
//! `!include <target>` directive. Duplicate mapping keys are an error,
//! as is a tab anywhere in indentation.

use std::collections::HashMap;
use std::fmt;

use thiserror::Error;

/// 1-based source position.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Pos {
    pub line: usize,
    pub col: usize,
}

impl fmt::Display for Pos {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.line, self.col)
    }
}

#[derive(Debug, Error)]
#[error("syntax error at {pos}: {message}")]
pub struct SyntaxError {
    pub pos: Pos,
    pub message: String,
}

impl SyntaxError {
    fn new(pos: Pos, message: impl Into<String>) -> Self {
        SyntaxError {
            pos,
            message: message.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scalar {
    /// `None` is an empty value (a placeholder to be filled by an override).
    pub value: Option<String>,
    /// Quoted scalars are never reinterpreted as numbers or booleans.
    pub quoted: bool,
    pub pos: Pos,
}

impl Scalar {
    pub fn null(pos: Pos) -> Self {
        Scalar {
            value: None,
            quoted: false,
            pos,
        }
    }
}

/// Reference to a mapping in this or another document, e.g.
/// `patterns.dns-p` or `patterns.yaml:patterns.dns-p`.
#[derive(Debug, Clone, PartialEq)]
pub struct IncludeRef {
    /// File name, when the target is file-qualified.
    pub file: Option<String>,
    /// Dotted path inside the target document.
    pub path: Vec<String>,
    pub pos: Pos,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Mapping {
    pub entries: Vec<(String, Node)>,
    /// At most one `!include` directive per mapping; sibling entries act
    /// as overrides applied to the included fragment.
    pub include: Option<IncludeRef>,
}

impl Mapping {
    pub fn get(&self, key: &str) -> Option<&Node> {
        self.entries.iter().find(|(k, _)| k == key).map(|(_, n)| n)
    }

    pub fn contains(&self, key: &str) -> bool {
        self.get(key).is_some()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Node {
    Scalar(Scalar),
    Sequence(Vec<Node>),
    Mapping(Mapping),
}

impl Node {
    pub fn pos(&self) -> Pos {
        match self {
            Node::Scalar(s) => s.pos,
            Node::Sequence(items) => items.first().map(|n| n.pos()).unwrap_or(Pos { line: 0, col: 0 }),
            Node::Mapping(m) => m
                .entries
                .first()
                .map(|(_, n)| n.pos())
                .or_else(|| m.include.as_ref().map(|i| i.pos))
                .unwrap_or(Pos { line: 0, col: 0 }),
        }
    }

    pub fn as_mapping(&self) -> Option<&Mapping> {
        match self {
            Node::Mapping(m) => Some(m),
            _ => None,
        }
    }

    pub fn as_scalar(&self) -> Option<&Scalar> {
        match self {
            Node::Scalar(s) => Some(s),
            _ => None,
        }
    }

    pub fn as_str(&self) -> Option<&str> {
        match self {
            Node::Scalar(s) => s.value.as_deref(),
            _ => None,
        }
    }

    /// True when no `!include` directive remains anywhere below this node.
    pub fn is_fully_inlined(&self) -> bool {
        match self {
            Node::Scalar(_) => true,
            Node::Sequence(items) => items.iter().all(Node::is_fully_inlined),
            Node::Mapping(m) => {
                m.include.is_none() && m.entries.iter().all(|(_, n)| n.is_fully_inlined())
            }
        }
    }
}

struct Line<'a> {
    number: usize,
    indent: usize,
    content: &'a str,
}

/// Parse a document into its root node. An empty document is an empty mapping.
pub fn parse(source: &str) -> Result<Node, SyntaxError> {
    let lines = scan_lines(source)?;
    let mut parser = Parser {
        lines,
        idx: 0,
        anchors: HashMap::new(),
    };
    if parser.lines.is_empty() {
        return Ok(Node::Mapping(Mapping::default()));
    }
    let root = parser.parse_block(0)?;
    if let Some(line) = parser.lines.get(parser.idx) {
        return Err(SyntaxError::new(
            Pos { line: line.number, col: line.indent + 1 },
            "unexpected de-indented content after document root",
        ));
    }
    Ok(root)
}

/// Strip comments and blank lines, recording indentation.
fn scan_lines(source: &str) -> Result<Vec<Line<'_>>, SyntaxError> {
    let mut out = Vec::new();
    for (i, raw) in source.lines().enumerate() {
        let number = i + 1;
        let without_comment = strip_comment(raw);
        if without_comment.trim().is_empty() {
            continue;
        }
        let mut indent = 0;
        for ch in without_comment.chars() {
            match ch {
                ' ' => indent += 1,
                '\t' => {
                    return Err(SyntaxError::new(
                        Pos { line: number, col: indent + 1 },
                        "tab character in indentation",
                    ))
                }
                _ => break,
            }
        }
        out.push(Line {
            number,
            indent,
            content: without_comment[indent..].trim_end(),
        });
    }
    Ok(out)
}

/// Remove a trailing `#` comment, honoring quotes. A `#` starts a comment
/// only at line start or after whitespace.
fn strip_comment(raw: &str) -> &str {
    let bytes = raw.as_bytes();
    let mut in_single = false;
    let mut in_double = false;
    let mut escaped = false;
    for (i, &b) in bytes.iter().enumerate() {
        if in_double {
            if escaped {
                escaped = false;
            } else if b == b'\\' {
                escaped = true;
            } else if b == b'"' {
                in_double = false;
            }
            continue;
        }
        if in_single {
            if b == b'\'' {
                in_single = false;
            }
            continue;
        }
        match b {
            b'"' => in_double = true,
            b'\'' => in_single = true,
            b'#' if i == 0 || bytes[i - 1].is_ascii_whitespace() => return &raw[..i],
            _ => {}
        }
    }
    raw
}

struct Parser<'a> {
    lines: Vec<Line<'a>>,
    idx: usize,
    anchors: HashMap<String, Node>,
}

impl<'a> Parser<'a> {
    fn peek(&self) -> Option<&Line<'a>> {
        self.lines.get(self.idx)
    }

    /// Parse the block starting at the current line; all lines of the block
    /// share the current line's indent, children are deeper.
    fn parse_block(&mut self, min_indent: usize) -> Result<Node, SyntaxError> {
        let first = match self.peek() {
            Some(l) if l.indent >= min_indent => l,
            _ => {
                let pos = self.end_pos();
                return Err(SyntaxError::new(pos, "expected an indented block"));
            }
        };
        let indent = first.indent;
        if first.content == "-" || first.content.starts_with("- ") {
            self.parse_sequence(indent)
        } else {
            self.parse_mapping(indent)
        }
    }

    fn end_pos(&self) -> Pos {
        self.lines
            .last()
            .map(|l| Pos { line: l.number + 1, col: 1 })
            .unwrap_or(Pos { line: 1, col: 1 })
    }

    fn parse_sequence(&mut self, indent: usize) -> Result<Node, SyntaxError> {
        let mut items = Vec::new();
        while let Some(line) = self.peek() {
            if line.indent < indent {
                break;
            }
            if line.indent > indent {
                return Err(SyntaxError::new(
                    Pos { line: line.number, col: line.indent + 1 },
                    "unexpected indentation inside sequence",
                ));
            }
            let number = line.number;
            let content = line.content;
            if !(content == "-" || content.starts_with("- ")) {
                return Err(SyntaxError::new(
                    Pos { line: number, col: indent + 1 },
                    "expected '-' sequence item",
                ));
            }
            let rest = content[1..].trim_start();
            let rest_col = indent + (content.len() - rest.len()) + 1;
            self.idx += 1;
            if rest.is_empty() {
                // Nested block on the following deeper lines.
                match self.peek() {
                    Some(next) if next.indent > indent => {
                        let child = self.parse_block(indent + 1)?;
                        items.push(child);
                    }
                    _ => items.push(Node::Scalar(Scalar::null(Pos { line: number, col: rest_col }))),
                }
            } else {
                let value =
                    self.parse_inline_value(rest, Pos { line: number, col: rest_col }, indent)?;
                items.push(value);
            }
        }
        Ok(Node::Sequence(items))
    }

    fn parse_mapping(&mut self, indent: usize) -> Result<Node, SyntaxError> {
        let mut mapping = Mapping::default();
        while let Some(line) = self.peek() {
            if line.indent < indent {
                break;
            }
            if line.indent > indent {
                return Err(SyntaxError::new(
                    Pos { line: line.number, col: line.indent + 1 },
                    "unexpected indentation inside mapping",
                ));
            }
            let number = line.number;
            let content = line.content;
            let pos = Pos { line: number, col: indent + 1 };

            if let Some(target) = content.strip_prefix("!include") {
                let target = target.trim();
                if target.is_empty() {
                    return Err(SyntaxError::new(pos, "!include requires a target"));
                }
                if mapping.include.is_some() {
                    return Err(SyntaxError::new(pos, "multiple !include directives in one mapping"));
                }
                mapping.include = Some(parse_include_target(target, pos)?);
                self.idx += 1;
                continue;
            }

            let (key, rest) = split_key(content, pos)?;
            if mapping.contains(&key) {
                return Err(SyntaxError::new(pos, format!("duplicate mapping key `{key}`")));
            }
            self.idx += 1;
            let value = if rest.is_empty() {
                match self.peek() {
                    Some(next) if next.indent > indent => self.parse_block(indent + 1)?,
                    _ => Node::Scalar(Scalar::null(pos)),
                }
            } else {
                let rest_col = indent + (content.len() - rest.len()) + 1;
                self.parse_inline_value(rest, Pos { line: number, col: rest_col }, indent)?
            };
            mapping.entries.push((key, value));
        }
        Ok(Node::Mapping(mapping))
    }

    /// Parse the value part of `key: value` or `- value`.
    fn parse_inline_value(
        &mut self,
        text: &str,
        pos: Pos,
        parent_indent: usize,
    ) -> Result<Node, SyntaxError> {
        if let Some(anchor_rest) = text.strip_prefix('&') {
            let (name, rest) = split_word(anchor_rest);
            if name.is_empty() {
                return Err(SyntaxError::new(pos, "anchor requires a name"));
            }
            let node = if rest.is_empty() {
                match self.peek() {
                    Some(next) if next.indent > parent_indent => self.parse_block(parent_indent + 1)?,
                    _ => Node::Scalar(Scalar::null(pos)),
                }
            } else {
                self.parse_inline_value(rest, pos, parent_indent)?
            };
            self.anchors.insert(name.to_string(), node.clone());
            return Ok(node);
        }
        if let Some(alias) = text.strip_prefix('*') {
            let (name, rest) = split_word(alias);
            if !rest.is_empty() {
                return Err(SyntaxError::new(pos, "unexpected content after alias"));
            }
            return match self.anchors.get(name) {
                Some(node) => Ok(node.clone()),
                None => Err(SyntaxError::new(pos, format!("unknown anchor `{name}`"))),
            };
        }
        if let Some(target) = text.strip_prefix("!include") {
            let target = target.trim();
            if target.is_empty() {
                return Err(SyntaxError::new(pos, "!include requires a target"));
            }
            return Ok(Node::Mapping(Mapping {
                entries: Vec::new(),
                include: Some(parse_include_target(target, pos)?),
            }));
        }
        if text.starts_with('[') {
            return parse_flow_sequence(text, pos);
        }
        Ok(Node::Scalar(parse_scalar(text, pos)?))
    }
}

fn parse_include_target(target: &str, pos: Pos) -> Result<IncludeRef, SyntaxError> {
    let (file, path_str) = match target.split_once(':') {
        Some((f, p)) => (Some(f.trim().to_string()), p.trim()),
        None => (None, target),
    };
    if path_str.is_empty() {
        return Err(SyntaxError::new(pos, "!include target path is empty"));
    }
    let path: Vec<String> = path_str.split('.').map(|s| s.trim().to_string()).collect();
    if path.iter().any(String::is_empty) {
        return Err(SyntaxError::new(pos, format!("malformed !include target `{target}`")));
    }
    Ok(IncludeRef { file, path, pos })
}

/// Split `key: rest` or `key:`; the colon must sit outside quotes.
fn split_key(content: &str, pos: Pos) -> Result<(String, &str), SyntaxError> {
    let bytes = content.as_bytes();
    let mut in_single = false;
    let mut in_double = false;
    let mut escaped = false;
    for i in 0..bytes.len() {
        let b = bytes[i];
        if in_double {
            if escaped {
                escaped = false;
            } else if b == b'\\' {
                escaped = true;
            } else if b == b'"' {
                in_double = false;
            }
            continue;
        }
        if in_single {
            if b == b'\'' {
                in_single = false;
            }
            continue;
        }
        match b {
            b'"' => in_double = true,
            b'\'' => in_single = true,
            b':' if i + 1 == bytes.len() || bytes[i + 1] == b' ' => {
                let raw_key = content[..i].trim();
                if raw_key.is_empty() {
                    return Err(SyntaxError::new(pos, "empty mapping key"));
                }
                let key = unquote(raw_key);
                return Ok((key, content[i + 1..].trim_start()));
            }
            _ => {}
        }
    }
    Err(SyntaxError::new(pos, "expected `key:` mapping entry"))
}

fn unquote(s: &str) -> String {
    if s.len() >= 2
        && ((s.starts_with('"') && s.ends_with('"')) || (s.starts_with('\'') && s.ends_with('\''))) {
            return s[1..s.len() - 1].to_string();
        }
    s.to_string()
}

fn split_word(s: &str) -> (&str, &str) {
    match s.find(char::is_whitespace) {
        Some(i) => (&s[..i], s[i..].trim_start()),
        None => (s, ""),
    }
}

fn parse_scalar(text: &str, pos: Pos) -> Result<Scalar, SyntaxError> {
    let text = text.trim();
    if text.starts_with('"') {
        let inner = parse_double_quoted(text, pos)?;
        return Ok(Scalar { value: Some(inner), quoted: true, pos });
    }
    if text.starts_with('\'') {
        if text.len() < 2 || !text.ends_with('\'') {
            return Err(SyntaxError::new(pos, "unterminated single-quoted scalar"));
        }
        let inner = text[1..text.len() - 1].replace("''", "'");
        return Ok(Scalar { value: Some(inner), quoted: true, pos });
    }
    if text == "~" || text == "null" {
        return Ok(Scalar::null(pos));
    }
    Ok(Scalar { value: Some(text.to_string()), quoted: false, pos })
}

fn parse_double_quoted(text: &str, pos: Pos) -> Result<String, SyntaxError> {
    let mut out = String::new();
    let mut chars = text[1..].chars();
    loop {
        match chars.next() {
            None => return Err(SyntaxError::new(pos, "unterminated double-quoted scalar")),
            Some('"') => {
                if !chars.as_str().trim().is_empty() {
                    return Err(SyntaxError::new(pos, "unexpected content after closing quote"));
                }
                return Ok(out);
            }
            Some('\\') => match chars.next() {
                Some('n') => out.push('\n'),
                Some('t') => out.push('\t'),
                Some('r') => out.push('\r'),
                Some('\\') => out.push('\\'),
                Some('"') => out.push('"'),
                Some(other) => {
                    return Err(SyntaxError::new(pos, format!("unknown escape `\\{other}`")))
                }
                None => return Err(SyntaxError::new(pos, "dangling escape at end of scalar")),
            },
            Some(c) => out.push(c),
        }
    }
}

fn parse_flow_sequence(text: &str, pos: Pos) -> Result<Node, SyntaxError> {
    let text = text.trim();
    if !text.ends_with(']') {
        return Err(SyntaxError::new(pos, "unterminated flow sequence"));
    }
    let inner = &text[1..text.len() - 1];
    let mut items = Vec::new();
    if !inner.trim().is_empty() {
        for part in inner.split(',') {
            let part = part.trim();
            if part.is_empty() {
                return Err(SyntaxError::new(pos, "empty flow sequence item"));
            }
            items.push(Node::Scalar(parse_scalar(part, pos)?));
        }
    }
    Ok(Node::Sequence(items))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_nested_mappings_in_order() {
        let doc = parse("a:\n  b: 1\n  c: two\nd: 3\n").unwrap();
        let root = doc.as_mapping().unwrap();
        assert_eq!(root.entries.len(), 2);
        assert_eq!(root.entries[0].0, "a");
        let a = root.entries[0].1.as_mapping().unwrap();
        assert_eq!(a.entries[0].0, "b");
        assert_eq!(a.get("c").unwrap().as_str(), Some("two"));
        assert_eq!(root.get("d").unwrap().as_str(), Some("3"));
    }

    #[test]
    fn duplicate_keys_are_rejected() {
        let err = parse("a: 1\na: 2\n").unwrap_err();
        assert!(err.message.contains("duplicate"));
        assert_eq!(err.pos.line, 2);
    }

    #[test]
    fn comments_and_blank_lines_are_ignored() {
        let doc = parse("# header\na: 1 # trailing\n\nb: \"x # not a comment\"\n").unwrap();
        let root = doc.as_mapping().unwrap();
        assert_eq!(root.get("a").unwrap().as_str(), Some("1"));
        assert_eq!(root.get("b").unwrap().as_str(), Some("x # not a comment"));
    }

    #[test]
    fn anchors_and_aliases_deep_copy() {
        let doc = parse("base: &b\n  x: 1\nother: *b\n").unwrap();
        let root = doc.as_mapping().unwrap();
        let other = root.get("other").unwrap().as_mapping().unwrap();
        assert_eq!(other.get("x").unwrap().as_str(), Some("1"));
    }

    #[test]
    fn unknown_alias_errors() {
        assert!(parse("a: *nope\n").is_err());
    }

    #[test]
    fn include_inline_and_block_forms() {
        let doc = parse("p: !include patterns.dns-p\nq:\n  !include other.yaml:patterns.x\n  domain-name: a.b\n").unwrap();
        let root = doc.as_mapping().unwrap();
        let p = root.get("p").unwrap().as_mapping().unwrap();
        let inc = p.include.as_ref().unwrap();
        assert_eq!(inc.file, None);
        assert_eq!(inc.path, vec!["patterns", "dns-p"]);
        let q = root.get("q").unwrap().as_mapping().unwrap();
        assert_eq!(q.include.as_ref().unwrap().file.as_deref(), Some("other.yaml"));
        assert_eq!(q.get("domain-name").unwrap().as_str(), Some("a.b"));
    }

    #[test]
    fn sequences_block_and_flow() {
        let doc = parse("xs:\n  - 1\n  - two\nys: [a, b]\n").unwrap();
        let root = doc.as_mapping().unwrap();
        match root.get("xs").unwrap() {
            Node::Sequence(items) => assert_eq!(items.len(), 2),
            _ => panic!("expected sequence"),
        }
        match root.get("ys").unwrap() {
            Node::Sequence(items) => {
                assert_eq!(items[1].as_str(), Some("b"));
            }
            _ => panic!("expected sequence"),
        }
    }

    #[test]
    fn null_scalar_is_placeholder() {
        let doc = parse("a:\nb: 1\n").unwrap();
        let root = doc.as_mapping().unwrap();
        match root.get("a").unwrap() {
            Node::Scalar(s) => assert!(s.value.is_none()),
            _ => panic!("expected null scalar"),
        }
    }

    #[test]
    fn tabs_in_indentation_error() {
        let err = parse("a:\n\tb: 1\n").unwrap_err();
        assert!(err.message.contains("tab"));
    }

    #[test]
    fn error_positions_are_one_based() {
        let err = parse("a: 1\n  b: 2\n").unwrap_err();
        assert_eq!(err.pos.line, 2);
    }
}
