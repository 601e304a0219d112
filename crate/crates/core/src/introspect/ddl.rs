//! Comment extraction from SQLite `CREATE TABLE` text.
//!
//! SQLite keeps no catalog comments, but it stores the original statement in
//! `sqlite_master.sql`, comments included. A comment belongs to the column
//! definition it trails:
//!
//! ```sql
//! CREATE TABLE users ( -- registered customers
//!   id INTEGER PRIMARY KEY, -- customer id
//!   name TEXT /* full name */
//! )
//! ```
//!
//! gives the table comment `registered customers` and column comments for
//! `id` and `name`. Comments that appear before the first definition belong
//! to the table. Comments on table constraints are dropped. This is
//! best-effort; anything the scanner cannot place is ignored.

#[derive(Debug, Default, Clone, PartialEq, Eq)]
pub struct DdlComments {
    pub table: Option<String>,
    /// `(column name, comment)` in definition order.
    pub columns: Vec<(String, String)>,
}

impl DdlComments {
    pub fn column(&self, name: &str) -> Option<&str> {
        self.columns
            .iter()
            .find(|(c, _)| c.eq_ignore_ascii_case(name))
            .map(|(_, comment)| comment.as_str())
    }
}

#[derive(Default)]
struct Definition {
    text: String,
    comments: Vec<String>,
}

pub fn parse_create_table_comments(sql: &str) -> DdlComments {
    let chars: Vec<char> = sql.chars().collect();
    let mut table_comments: Vec<String> = Vec::new();
    let mut defs: Vec<Definition> = Vec::new();
    let mut cur = Definition::default();
    let mut depth = 0usize;
    let mut done = false;
    let mut i = 0;

    while i < chars.len() && !done {
        let c = chars[i];
        let next = chars.get(i + 1).copied();
        let comment = match (c, next) {
            ('-', Some('-')) => {
                let start = i + 2;
                let mut end = start;
                while end < chars.len() && chars[end] != '\n' {
                    end += 1;
                }
                i = end;
                Some(chars[start..end].iter().collect::<String>())
            }
            ('/', Some('*')) => {
                let start = i + 2;
                let mut end = start;
                while end + 1 < chars.len() && !(chars[end] == '*' && chars[end + 1] == '/') {
                    end += 1;
                }
                let text: String = chars[start..end.min(chars.len())].iter().collect();
                i = (end + 2).min(chars.len());
                Some(text)
            }
            _ => None,
        };
        if let Some(text) = comment {
            let text = text.trim().to_string();
            if !text.is_empty() {
                if depth == 0 {
                    table_comments.push(text);
                } else if !cur.text.trim().is_empty() {
                    cur.comments.push(text);
                } else if let Some(last) = defs.last_mut() {
                    last.comments.push(text);
                } else {
                    table_comments.push(text);
                }
            }
            continue;
        }

        match c {
            '\'' | '"' | '`' | '[' => {
                let close = if c == '[' { ']' } else { c };
                let mut end = i + 1;
                loop {
                    if end >= chars.len() {
                        break;
                    }
                    if chars[end] == close {
                        // Doubled quote is an escaped quote.
                        if close != ']' && chars.get(end + 1) == Some(&close) {
                            end += 2;
                            continue;
                        }
                        break;
                    }
                    end += 1;
                }
                let end = end.min(chars.len() - 1);
                if depth >= 1 {
                    cur.text.extend(&chars[i..=end]);
                }
                i = end + 1;
                continue;
            }
            '(' => {
                depth += 1;
                if depth > 1 {
                    cur.text.push(c);
                }
            }
            ')' => {
                if depth == 1 {
                    defs.push(std::mem::take(&mut cur));
                    done = true;
                } else if depth > 1 {
                    cur.text.push(c);
                }
                depth = depth.saturating_sub(1);
            }
            ',' if depth == 1 => defs.push(std::mem::take(&mut cur)),
            _ if depth >= 1 => cur.text.push(c),
            _ => {}
        }
        i += 1;
    }
    // Unterminated statement: keep what was scanned.
    if !done && !cur.text.trim().is_empty() {
        defs.push(cur);
    }

    // Trailing comments after the closing parenthesis are not stored by
    // SQLite, so anything scanned is complete.
    let mut out = DdlComments {
        table: join(&table_comments),
        columns: Vec::new(),
    };
    for def in defs {
        if def.comments.is_empty() {
            continue;
        }
        let Some((name, quoted)) = leading_identifier(&def.text) else {
            continue;
        };
        if !quoted && is_constraint_keyword(&name) {
            continue;
        }
        if let Some(comment) = join(&def.comments) {
            out.columns.push((name, comment));
        }
    }
    out
}

fn join(parts: &[String]) -> Option<String> {
    if parts.is_empty() {
        None
    } else {
        Some(parts.join(" "))
    }
}

fn is_constraint_keyword(word: &str) -> bool {
    matches!(
        word.to_ascii_uppercase().as_str(),
        "CONSTRAINT" | "PRIMARY" | "FOREIGN" | "UNIQUE" | "CHECK"
    )
}

/// First identifier of a definition, unquoted, and whether it was quoted.
fn leading_identifier(text: &str) -> Option<(String, bool)> {
    let text = text.trim_start();
    let mut chars = text.chars();
    let first = chars.next()?;
    let close = match first {
        '"' => '"',
        '`' => '`',
        '[' => ']',
        '\'' => '\'',
        _ => {
            let word: String = text
                .chars()
                .take_while(|c| !c.is_whitespace() && *c != '(' && *c != ',')
                .collect();
            return (!word.is_empty()).then_some((word, false));
        }
    };
    let mut name = String::new();
    let rest: Vec<char> = chars.collect();
    let mut i = 0;
    while i < rest.len() {
        if rest[i] == close {
            if close != ']' && rest.get(i + 1) == Some(&close) {
                name.push(close);
                i += 2;
                continue;
            }
            break;
        }
        name.push(rest[i]);
        i += 1;
    }
    Some((name, true))
}
