//! The M-Schema text grammar.
//!
//! ```text
//! 【DB_ID】 <db_id>
//! 【Schema】
//! # Table: <table>
//! <optional table description>
//! [
//! (<column>:<TYPE>, <description>, Primary Key, Examples: [<v1>, <v2>]),
//! (<column>:<TYPE>)
//! ]
//! 【Foreign keys】
//! <table>.<column>=<table>.<column>
//! ```
//!
//! Absent parts of a column line are omitted, column lines other than the
//! last end in a comma, and the foreign-key section is omitted when there
//! are none. Lines end in LF and the document ends with a newline.
//!
//! Backslash escapes any character; `\n` and `\r` stand for line breaks.
//! Names escape `\ : . = , ( ) [ ]`. Types escape `\` and top-level commas,
//! and all parentheses when they are unbalanced. Descriptions escape `\` and
//! only the commas or leading characters that would otherwise read as a
//! later clause. Example values escape `\ , [ ]`.

use std::fmt;

use super::{MColumn, MSchemaDoc, MTable, Slot};
use crate::introspect::ForeignKey;

const DB_ID_HEADER: &str = "【DB_ID】 ";
const SCHEMA_HEADER: &str = "【Schema】";
const FK_HEADER: &str = "【Foreign keys】";
const TABLE_PREFIX: &str = "# Table: ";
const PK_CLAUSE: &str = "Primary Key";
const EXAMPLES_CLAUSE: &str = "Examples: [";

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub struct ParseError {
    /// 1-based.
    pub line: usize,
    /// 1-based, in characters.
    pub column: usize,
    pub message: String,
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}, column {}: {}", self.line, self.column, self.message)
    }
}

fn push_escaped(out: &mut String, c: char) {
    match c {
        '\n' => out.push_str("\\n"),
        '\r' => out.push_str("\\r"),
        c => {
            out.push('\\');
            out.push(c);
        }
    }
}

fn escape_with(s: &str, special: &[char]) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        if c == '\\' || c == '\n' || c == '\r' || special.contains(&c) {
            push_escaped(&mut out, c);
        } else {
            out.push(c);
        }
    }
    out
}

fn escape_name(s: &str) -> String {
    escape_with(s, &[':', '.', '=', ',', '(', ')', '[', ']'])
}

fn escape_line(s: &str) -> String {
    escape_with(s, &[])
}

fn balanced(s: &str) -> bool {
    let mut depth = 0i32;
    for c in s.chars() {
        match c {
            '(' => depth += 1,
            ')' => {
                depth -= 1;
                if depth < 0 {
                    return false;
                }
            }
            _ => {}
        }
    }
    depth == 0
}

fn escape_type(s: &str) -> String {
    let keep_parens = balanced(s);
    let mut out = String::with_capacity(s.len());
    let mut depth = 0;
    for c in s.chars() {
        match c {
            '(' if keep_parens => {
                depth += 1;
                out.push(c);
            }
            ')' if keep_parens => {
                depth -= 1;
                out.push(c);
            }
            '(' | ')' | '\\' | '\n' | '\r' => push_escaped(&mut out, c),
            ',' if depth == 0 => push_escaped(&mut out, c),
            c => out.push(c),
        }
    }
    out
}

fn pk_follows(rest: &str) -> bool {
    rest.strip_prefix(PK_CLAUSE)
        .is_some_and(|after| after.is_empty() || after.starts_with(", ") && after[2..].starts_with(EXAMPLES_CLAUSE))
}

fn escape_description(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for (i, c) in s.char_indices() {
        let escape = match c {
            '\\' | '\n' | '\r' => true,
            ',' => {
                let rest = &s[i..];
                rest.starts_with(", ") && (pk_follows(&rest[2..]) || rest[2..].starts_with(EXAMPLES_CLAUSE))
            }
            _ => i == 0 && (pk_follows(s) || s.starts_with(EXAMPLES_CLAUSE)),
        };
        if escape {
            push_escaped(&mut out, c);
        } else {
            out.push(c);
        }
    }
    out
}

fn escape_table_description(s: &str) -> String {
    let body = escape_line(s);
    if body.starts_with('[') {
        format!("\\{body}")
    } else {
        body
    }
}

fn escape_example(s: &str) -> String {
    escape_with(s, &[',', '[', ']'])
}

fn column_line(c: &MColumn) -> String {
    let mut line = format!("({}:{}", escape_name(&c.name), escape_type(&c.ty));
    if let Some(d) = c.description.text() {
        line.push_str(", ");
        line.push_str(&escape_description(d));
    }
    if c.primary_key {
        line.push_str(", ");
        line.push_str(PK_CLAUSE);
    }
    if !c.examples.is_empty() {
        let values: Vec<String> = c.examples.iter().map(|v| escape_example(v)).collect();
        line.push_str(", ");
        line.push_str(EXAMPLES_CLAUSE);
        line.push_str(&values.join(", "));
        line.push(']');
    }
    line.push(')');
    line
}

pub fn serialize_mschema(doc: &MSchemaDoc) -> String {
    let mut out = String::new();
    out.push_str(DB_ID_HEADER);
    out.push_str(&escape_line(&doc.db_id));
    out.push('\n');
    out.push_str(SCHEMA_HEADER);
    out.push('\n');
    for t in &doc.tables {
        out.push_str(TABLE_PREFIX);
        out.push_str(&escape_line(&t.name));
        out.push('\n');
        if let Some(d) = t.description.text() {
            out.push_str(&escape_table_description(d));
            out.push('\n');
        }
        out.push_str("[\n");
        for (i, c) in t.columns.iter().enumerate() {
            out.push_str(&column_line(c));
            if i + 1 < t.columns.len() {
                out.push(',');
            }
            out.push('\n');
        }
        out.push_str("]\n");
    }
    if !doc.foreign_keys.is_empty() {
        out.push_str(FK_HEADER);
        out.push('\n');
        for fk in &doc.foreign_keys {
            out.push_str(&format!(
                "{}.{}={}.{}\n",
                escape_name(&fk.from_table),
                escape_name(&fk.from_column),
                escape_name(&fk.to_table),
                escape_name(&fk.to_column)
            ));
        }
    }
    out
}

/// Character cursor over one line.
struct Cursor {
    line_no: usize,
    chars: Vec<char>,
    pos: usize,
}

impl Cursor {
    fn new(line_no: usize, src: &str) -> Self {
        Cursor {
            line_no,
            chars: src.chars().collect(),
            pos: 0,
        }
    }

    fn err(&self, message: impl Into<String>) -> ParseError {
        ParseError {
            line: self.line_no,
            column: self.pos + 1,
            message: message.into(),
        }
    }

    fn at_end(&self) -> bool {
        self.pos >= self.chars.len()
    }

    fn peek(&self) -> Option<char> {
        self.chars.get(self.pos).copied()
    }

    fn rest_starts_with(&self, s: &str) -> bool {
        (self.pos..).zip(s.chars()).all(|(i, c)| self.chars.get(i) == Some(&c))
    }

    fn rest(&self) -> String {
        self.chars[self.pos..].iter().collect()
    }

    fn expect(&mut self, s: &str) -> Result<(), ParseError> {
        if self.rest_starts_with(s) {
            self.pos += s.chars().count();
            Ok(())
        } else {
            Err(self.err(format!("expected `{s}`")))
        }
    }

    /// Consumes an escape sequence starting at a backslash.
    fn escaped(&mut self) -> Result<char, ParseError> {
        self.pos += 1;
        let c = self.peek().ok_or_else(|| self.err("dangling backslash"))?;
        self.pos += 1;
        Ok(match c {
            'n' => '\n',
            'r' => '\r',
            c => c,
        })
    }

    /// Reads until an unescaped character in `stops`, which is not consumed.
    fn until(&mut self, stops: &[char]) -> Result<String, ParseError> {
        let mut out = String::new();
        while let Some(c) = self.peek() {
            if c == '\\' {
                out.push(self.escaped()?);
            } else if stops.contains(&c) {
                break;
            } else {
                out.push(c);
                self.pos += 1;
            }
        }
        Ok(out)
    }
}

/// Unescapes an entire line.
fn unescape_all(line_no: usize, s: &str) -> Result<String, ParseError> {
    let mut cur = Cursor::new(line_no, s);
    cur.until(&[])
}

fn parse_type(cur: &mut Cursor) -> Result<String, ParseError> {
    let mut out = String::new();
    let mut depth = 0;
    while let Some(c) = cur.peek() {
        match c {
            '\\' => out.push(cur.escaped()?),
            '(' => {
                depth += 1;
                out.push(c);
                cur.pos += 1;
            }
            ')' if depth > 0 => {
                depth -= 1;
                out.push(c);
                cur.pos += 1;
            }
            ')' => break,
            ',' if depth == 0 => break,
            c => {
                out.push(c);
                cur.pos += 1;
            }
        }
    }
    Ok(out)
}

fn at_pk(cur: &Cursor) -> bool {
    pk_follows(&cur.rest())
}

/// Parses the text between `(` and the closing `)` of a column line.
fn parse_column(cur: &mut Cursor) -> Result<MColumn, ParseError> {
    let name = cur.until(&[':'])?;
    cur.expect(":")?;
    let ty = parse_type(cur)?;
    let mut description = Slot::empty();
    let mut primary_key = false;
    let mut examples = Vec::new();
    let mut stage = 0;
    while !cur.at_end() {
        cur.expect(", ")?;
        if stage < 2 && at_pk(cur) {
            cur.expect(PK_CLAUSE)?;
            primary_key = true;
            stage = 2;
        } else if stage < 3 && cur.rest_starts_with(EXAMPLES_CLAUSE) {
            cur.expect(EXAMPLES_CLAUSE)?;
            loop {
                examples.push(cur.until(&[',', ']'])?);
                match cur.peek() {
                    Some(',') => cur.expect(", ")?,
                    Some(']') => {
                        cur.pos += 1;
                        break;
                    }
                    _ => return Err(cur.err("unterminated examples list")),
                }
            }
            if !cur.at_end() {
                return Err(cur.err("unexpected text after examples"));
            }
            stage = 3;
        } else if stage == 0 {
            let mut text = String::new();
            while let Some(c) = cur.peek() {
                if c == '\\' {
                    text.push(cur.escaped()?);
                    continue;
                }
                if c == ',' {
                    let rest = cur.rest();
                    if rest.starts_with(", ") && (pk_follows(&rest[2..]) || rest[2..].starts_with(EXAMPLES_CLAUSE)) {
                        break;
                    }
                }
                text.push(c);
                cur.pos += 1;
            }
            if text.is_empty() {
                return Err(cur.err("empty description"));
            }
            description = Slot::generated(&text);
            stage = 1;
        } else {
            return Err(cur.err("unexpected column clause"));
        }
    }
    Ok(MColumn {
        name,
        ty,
        description,
        primary_key,
        examples,
    })
}

fn parse_fk(line_no: usize, line: &str) -> Result<ForeignKey, ParseError> {
    let mut cur = Cursor::new(line_no, line);
    let from_table = cur.until(&['.', '='])?;
    cur.expect(".")?;
    let from_column = cur.until(&['.', '='])?;
    cur.expect("=")?;
    let to_table = cur.until(&['.', '='])?;
    cur.expect(".")?;
    let to_column = cur.until(&['.', '='])?;
    if !cur.at_end() {
        return Err(cur.err("unexpected text after foreign key"));
    }
    Ok(ForeignKey {
        from_table,
        from_column,
        to_table,
        to_column,
    })
}

pub fn parse_mschema(text: &str) -> Result<MSchemaDoc, ParseError> {
    let body = text.strip_suffix('\n').unwrap_or(text);
    let lines: Vec<&str> = body.split('\n').collect();
    let mut i = 0;
    let err = |line: usize, message: &str| ParseError {
        line,
        column: 1,
        message: message.to_string(),
    };
    let eof = |lines: &Vec<&str>| ParseError {
        line: lines.len() + 1,
        column: 1,
        message: "unexpected end of input".into(),
    };

    let first = lines[0];
    let db_id = match first.strip_prefix(DB_ID_HEADER) {
        Some(rest) => unescape_all(1, rest)?,
        None => return Err(err(1, "expected `【DB_ID】 <db_id>` header")),
    };
    i += 1;
    match lines.get(i) {
        Some(&l) if l == SCHEMA_HEADER => i += 1,
        Some(&l) if l.starts_with('【') => return Err(err(i + 1, &format!("unknown section `{l}`"))),
        Some(_) => return Err(err(i + 1, "expected `【Schema】`")),
        None => return Err(eof(&lines)),
    }

    let mut tables = Vec::new();
    let mut foreign_keys = Vec::new();
    while i < lines.len() {
        let line = lines[i];
        if let Some(name) = line.strip_prefix(TABLE_PREFIX) {
            let name = unescape_all(i + 1, name)?;
            i += 1;
            let mut description = Slot::empty();
            match lines.get(i) {
                Some(&"[") => {}
                Some(&l) => {
                    let raw = unescape_all(i + 1, l)?;
                    if raw.is_empty() {
                        return Err(err(i + 1, "empty table description"));
                    }
                    description = Slot::generated(&raw);
                    i += 1;
                }
                None => return Err(eof(&lines)),
            }
            match lines.get(i) {
                Some(&"[") => i += 1,
                Some(_) => return Err(err(i + 1, "expected `[`")),
                None => return Err(eof(&lines)),
            }
            let mut columns = Vec::new();
            loop {
                let Some(&l) = lines.get(i) else {
                    return Err(eof(&lines));
                };
                if l == "]" {
                    i += 1;
                    break;
                }
                let (inner, last) = if let Some(s) = l.strip_suffix("),") {
                    (s, false)
                } else if let Some(s) = l.strip_suffix(')') {
                    (s, true)
                } else {
                    return Err(ParseError {
                        line: i + 1,
                        column: l.chars().count() + 1,
                        message: "column line must end with `)`".into(),
                    });
                };
                let Some(inner) = inner.strip_prefix('(') else {
                    return Err(err(i + 1, "column line must start with `(`"));
                };
                let mut cur = Cursor::new(i + 1, inner);
                let column = parse_column(&mut cur).map_err(|mut e| {
                    e.column += 1;
                    e
                })?;
                columns.push(column);
                i += 1;
                if last {
                    match lines.get(i) {
                        Some(&"]") => {}
                        Some(_) => return Err(err(i + 1, "expected `]` after the last column")),
                        None => return Err(eof(&lines)),
                    }
                }
            }
            tables.push(MTable {
                name,
                description,
                columns,
            });
        } else if line == FK_HEADER {
            i += 1;
            if i >= lines.len() {
                return Err(err(i, "empty foreign key section"));
            }
            while i < lines.len() {
                foreign_keys.push(parse_fk(i + 1, lines[i])?);
                i += 1;
            }
        } else if line.starts_with('【') {
            return Err(err(i + 1, &format!("unknown section `{line}`")));
        } else {
            return Err(err(i + 1, "expected `# Table: <name>` or a section header"));
        }
    }
    Ok(MSchemaDoc {
        db_id,
        tables,
        foreign_keys,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn col(name: &str, ty: &str, desc: Option<&str>, pk: bool, examples: &[&str]) -> MColumn {
        MColumn {
            name: name.into(),
            ty: ty.into(),
            description: desc.map_or_else(Slot::empty, Slot::generated),
            primary_key: pk,
            examples: examples.iter().map(|s| s.to_string()).collect(),
        }
    }

    fn doc() -> MSchemaDoc {
        MSchemaDoc {
            db_id: "shop".into(),
            tables: vec![MTable {
                name: "orders".into(),
                description: Slot::generated("Orders placed."),
                columns: vec![
                    col("order_id", "INTEGER", Some("Order identifier."), true, &["1", "2"]),
                    col("amount", "DECIMAL(10,2)", None, false, &[]),
                ],
            }],
            foreign_keys: vec![ForeignKey {
                from_table: "orders".into(),
                from_column: "user_id".into(),
                to_table: "users".into(),
                to_column: "user_id".into(),
            }],
        }
    }

    #[test]
    fn layout() {
        let text = serialize_mschema(&doc());
        assert_eq!(
            text,
            "【DB_ID】 shop\n【Schema】\n# Table: orders\nOrders placed.\n[\n\
             (order_id:INTEGER, Order identifier., Primary Key, Examples: [1, 2]),\n\
             (amount:DECIMAL(10,2))\n]\n【Foreign keys】\norders.user_id=users.user_id\n"
        );
        assert_eq!(parse_mschema(&text).unwrap(), doc());
    }

    #[test]
    fn tricky_descriptions_round_trip() {
        for d in [
            "Primary Key",
            "Primary Key of orders",
            "ends with, Primary Key",
            "has, Examples: [x]",
            "Examples: [1]",
            "[bracketed",
            "multi\nline\r\nand \\ slash",
            "paren) and (",
            "trailing comma,",
            "x)",
            "x),",
        ] {
            let mut doc = doc();
            doc.tables[0].columns[1].description = Slot::generated(d);
            doc.tables[0].description = Slot::generated(d);
            let text = serialize_mschema(&doc);
            assert_eq!(parse_mschema(&text).unwrap(), doc, "{d:?}\n{text}");
        }
    }

    #[test]
    fn tricky_names_types_and_examples_round_trip() {
        let mut doc = doc();
        doc.tables[0].name = "a.b=c".into();
        doc.tables[0].columns[0].name = "we:ird,(name)".into();
        doc.tables[0].columns[0].ty = "ENUM('a,b')".into();
        doc.tables[0].columns[1].ty = "BAD)(TYPE,".into();
        doc.tables[0].columns[1].examples = vec!["".into(), "a, b".into(), "[x]".into(), " lead".into()];
        doc.foreign_keys[0].from_table = "a.b=c".into();
        let text = serialize_mschema(&doc);
        assert_eq!(parse_mschema(&text).unwrap(), doc, "{text}");
    }

    #[test]
    fn empty_doc() {
        let doc = MSchemaDoc {
            db_id: String::new(),
            tables: vec![],
            foreign_keys: vec![],
        };
        let text = serialize_mschema(&doc);
        assert_eq!(text, "【DB_ID】 \n【Schema】\n");
        assert_eq!(parse_mschema(&text).unwrap(), doc);
    }

    #[test]
    fn truncated_input_names_the_line() {
        let text = serialize_mschema(&doc());
        let cut: String = text.lines().take(5).collect::<Vec<_>>().join("\n");
        let e = parse_mschema(&cut).unwrap_err();
        assert_eq!(e.line, 6, "{e}");
        let e = parse_mschema("【DB_ID】 x\n【Schema】\n# Table: t\n[\n(a:INT").unwrap_err();
        assert_eq!(e.line, 5);
    }

    #[test]
    fn unknown_section_is_rejected() {
        let e = parse_mschema("【DB_ID】 x\n【Schema】\n【Views】\n").unwrap_err();
        assert_eq!(e.line, 3);
        assert!(e.message.contains("unknown section"));
        assert!(parse_mschema("【DB_ID】 x\n【Tables】\n").is_err());
    }

    #[test]
    fn malformed_column_reports_position() {
        let e = parse_mschema("【DB_ID】 x\n【Schema】\n# Table: t\n[\n(a:INT, Examples: [1)\n]\n").unwrap_err();
        assert_eq!(e.line, 5);
        assert!(e.column > 1);
    }
}
