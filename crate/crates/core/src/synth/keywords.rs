//! Lexical keyword rewriting: two replacement plans and a removal plan.

use std::collections::HashSet;
use std::fmt;
use std::ops::Range;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::trace::Trace;

const BUILTIN_TABLE: &str = include_str!("keywords.tsv");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PlanId {
    Plan1,
    Plan2,
    Removal,
}

impl FromStr for PlanId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "plan1" | "1" => Ok(PlanId::Plan1),
            "plan2" | "2" => Ok(PlanId::Plan2),
            "removal" | "remove" => Ok(PlanId::Removal),
            _ => Err(Error::bad_config(format!("unknown keyword plan {s:?}"))),
        }
    }
}

impl fmt::Display for PlanId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PlanId::Plan1 => "plan1",
            PlanId::Plan2 => "plan2",
            PlanId::Removal => "removal",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct KeywordRow {
    pub category: String,
    pub keyword: String,
    pub plan1: String,
    pub plan2: String,
}

/// Keyword rows, longest keyword first.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KeywordTable {
    rows: Vec<KeywordRow>,
}

impl KeywordTable {
    pub fn builtin() -> Self {
        Self::parse_tsv(BUILTIN_TABLE).expect("built-in keyword table is valid")
    }

    /// Tab-separated `category, keyword, plan1, plan2` with a header line.
    pub fn parse_tsv(text: &str) -> Result<Self> {
        let mut rows = Vec::new();
        let mut seen = HashSet::new();
        for (n, line) in text.lines().enumerate().skip(1) {
            if line.trim().is_empty() {
                continue;
            }
            let cols: Vec<&str> = line.split('\t').map(str::trim).collect();
            let [category, keyword, plan1, plan2] = cols[..] else {
                return Err(Error::bad_config(format!(
                    "keyword table line {}: expected 4 columns, got {}",
                    n + 1,
                    cols.len()
                )));
            };
            if keyword.is_empty() || plan1.is_empty() || plan2.is_empty() {
                return Err(Error::bad_config(format!("keyword table line {}: empty cell", n + 1)));
            }
            if !seen.insert(fold(keyword)) {
                return Err(Error::bad_config(format!("keyword table line {}: duplicate {keyword:?}", n + 1)));
            }
            rows.push(KeywordRow {
                category: category.to_string(),
                keyword: keyword.to_string(),
                plan1: plan1.to_string(),
                plan2: plan2.to_string(),
            });
        }
        rows.sort_by_key(|r| std::cmp::Reverse(r.keyword.chars().count()));
        Ok(KeywordTable { rows })
    }

    pub fn rows(&self) -> &[KeywordRow] {
        &self.rows
    }

    pub fn replacement(&self, row: &KeywordRow, plan: PlanId) -> Option<String> {
        match plan {
            PlanId::Plan1 => Some(row.plan1.clone()),
            PlanId::Plan2 => Some(row.plan2.clone()),
            PlanId::Removal => None,
        }
    }
}

fn fold(s: &str) -> String {
    s.chars().map(norm_char).collect::<String>().to_lowercase()
}

fn norm_char(c: char) -> char {
    if c == '\u{2019}' {
        '\''
    } else {
        c
    }
}

fn is_word(c: char) -> bool {
    c.is_alphanumeric() || c == '_' || c == '-' || c == '\'' || c == '\u{2019}'
}

/// A keyword occurrence: byte range in the text and the matching row.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KeywordMatch {
    pub range: Range<usize>,
    pub row: usize,
}

/// Matches `kw` at byte offset `at`. The first letter is compared without
/// case, the rest exactly; both apostrophe forms are interchangeable.
fn match_at(text: &str, at: usize, kw: &str) -> Option<usize> {
    let mut t = text[at..].char_indices();
    for (k, kc) in kw.chars().enumerate() {
        let (_, tc) = t.next()?;
        let (a, b) = (norm_char(tc), norm_char(kc));
        let same = if k == 0 {
            a.to_lowercase().eq(b.to_lowercase())
        } else {
            a == b
        };
        if !same {
            return None;
        }
    }
    let end = t.next().map_or(text.len(), |(i, _)| at + i);
    let last = kw.chars().last()?;
    if is_word(last) && text[end..].chars().next().is_some_and(is_word) {
        return None;
    }
    Some(end)
}

/// Non-overlapping keyword occurrences, scanning left to right and
/// preferring the longest keyword at each position.
pub fn find_keywords(text: &str, table: &KeywordTable) -> Vec<KeywordMatch> {
    let mut out = Vec::new();
    let mut prev: Option<char> = None;
    let mut i = 0;
    while i < text.len() {
        let c = text[i..].chars().next().expect("char boundary");
        if !prev.is_some_and(is_word) {
            if let Some((row, end)) = table
                .rows
                .iter()
                .enumerate()
                .find_map(|(r, row)| match_at(text, i, &row.keyword).map(|e| (r, e)))
            {
                out.push(KeywordMatch { range: i..end, row });
                prev = text[..end].chars().next_back();
                i = end;
                continue;
            }
        }
        prev = Some(c);
        i += c.len_utf8();
    }
    out
}

/// Gives `replacement` the case of the matched text's first letter. A
/// leading pronoun "I" keeps its capital.
fn carry_case(matched: &str, replacement: &str) -> String {
    let mut rc = replacement.chars();
    let Some(first) = rc.next() else {
        return String::new();
    };
    let pronoun = first == 'I' && rc.clone().next().is_none_or(|c| !c.is_alphabetic());
    let upper = matched.chars().next().is_some_and(char::is_uppercase);
    let head: String = if pronoun {
        first.to_string()
    } else if upper {
        first.to_uppercase().collect()
    } else {
        first.to_lowercase().collect()
    };
    head + rc.as_str()
}

/// Rewritten text and the byte ranges of inserted replacements.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Rewrite {
    pub text: String,
    pub inserted: Vec<Range<usize>>,
}

pub fn rewrite_text(text: &str, table: &KeywordTable, plan: PlanId) -> Rewrite {
    if plan == PlanId::Removal {
        return Rewrite {
            text: remove_keywords(text, table),
            inserted: Vec::new(),
        };
    }
    let mut out = String::with_capacity(text.len());
    let mut inserted = Vec::new();
    let mut last = 0;
    for m in find_keywords(text, table) {
        out.push_str(&text[last..m.range.start]);
        let row = &table.rows[m.row];
        let rep = table.replacement(row, plan).expect("replacement plan");
        let start = out.len();
        out.push_str(&carry_case(&text[m.range.clone()], &rep));
        inserted.push(start..out.len());
        last = m.range.end;
    }
    out.push_str(&text[last..]);
    Rewrite { text: out, inserted }
}

/// Deletes keywords and collapses whitespace until nothing changes.
pub fn remove_keywords(text: &str, table: &KeywordTable) -> String {
    let mut cur = collapse_ws(text);
    loop {
        let matches = find_keywords(&cur, table);
        if matches.is_empty() {
            return cur;
        }
        let mut out = String::with_capacity(cur.len());
        let mut last = 0;
        for m in matches {
            out.push_str(&cur[last..m.range.start]);
            last = m.range.end;
        }
        out.push_str(&cur[last..]);
        let next = collapse_ws(&out);
        if next == cur {
            return cur;
        }
        cur = next;
    }
}

/// Runs of spaces and tabs become one space; lines are trimmed at the ends.
fn collapse_ws(text: &str) -> String {
    text.split('\n')
        .map(|line| line.split([' ', '\t']).filter(|w| !w.is_empty()).collect::<Vec<_>>().join(" "))
        .collect::<Vec<_>>()
        .join("\n")
        .trim()
        .to_string()
}

/// Keyword occurrences that do not overlap any inserted replacement.
pub fn residual_originals(rw: &Rewrite, table: &KeywordTable) -> Vec<KeywordMatch> {
    find_keywords(&rw.text, table)
        .into_iter()
        .filter(|m| !rw.inserted.iter().any(|s| m.range.start < s.end && s.start < m.range.end))
        .collect()
}

/// Applies a plan to every step; the step count never changes. Steps that
/// would become empty under removal keep their original text.
pub fn apply_keyword_plan(trace: &Trace, table: &KeywordTable, plan: PlanId) -> Result<Trace> {
    trace.map_steps(|s| {
        let out = rewrite_text(s, table, plan).text;
        if out.trim().is_empty() {
            s.to_string()
        } else {
            out
        }
    })
}
