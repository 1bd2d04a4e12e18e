//! Conformance fixtures: one `text<TAB>id,id,...` row per line.
//!
//! Tabs, newlines, carriage returns and backslashes inside the text are
//! written as `\t`, `\n`, `\r` and `\\`.

use std::fs;
use std::path::Path;

use super::BpeError;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FixtureRow {
    pub text: String,
    pub ids: Vec<u32>,
}

pub fn write_fixture(path: impl AsRef<Path>, rows: &[FixtureRow]) -> Result<(), BpeError> {
    let path = path.as_ref();
    let mut out = String::new();
    for row in rows {
        out.push_str(&escape(&row.text));
        out.push('\t');
        let ids: Vec<String> = row.ids.iter().map(u32::to_string).collect();
        out.push_str(&ids.join(","));
        out.push('\n');
    }
    fs::write(path, out).map_err(|source| BpeError::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn read_fixture(path: impl AsRef<Path>) -> Result<Vec<FixtureRow>, BpeError> {
    let path = path.as_ref();
    let bad = |reason: String| BpeError::Fixture {
        path: path.display().to_string(),
        reason,
    };
    let text = fs::read_to_string(path).map_err(|source| BpeError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let mut rows = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let Some((raw, ids)) = line.rsplit_once('\t') else {
            return Err(bad(format!("line {}: missing tab", n + 1)));
        };
        let ids = if ids.is_empty() {
            Vec::new()
        } else {
            ids.split(',')
                .map(|s| s.parse::<u32>())
                .collect::<Result<Vec<_>, _>>()
                .map_err(|e| bad(format!("line {}: {e}", n + 1)))?
        };
        rows.push(FixtureRow {
            text: unescape(raw).ok_or_else(|| bad(format!("line {}: bad escape", n + 1)))?,
            ids,
        });
    }
    Ok(rows)
}

fn escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '\\' => out.push_str("\\\\"),
            '\t' => out.push_str("\\t"),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            c => out.push(c),
        }
    }
    out
}

fn unescape(s: &str) -> Option<String> {
    let mut out = String::with_capacity(s.len());
    let mut chars = s.chars();
    while let Some(c) = chars.next() {
        if c != '\\' {
            out.push(c);
            continue;
        }
        match chars.next()? {
            '\\' => out.push('\\'),
            't' => out.push('\t'),
            'n' => out.push('\n'),
            'r' => out.push('\r'),
            _ => return None,
        }
    }
    Some(out)
}
