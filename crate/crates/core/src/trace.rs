//! Trace data model, step segmentation, boxed-answer extraction and JSONL
//! corpus I/O.

use std::collections::HashSet;
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Step delimiters in priority order: most structural first.
pub const DEFAULT_DELIMITERS: [&str; 3] = ["\n\n", "\n", ". "];

/// The four bond types. Declaration order is the canonical matrix index
/// order `N, D, R, E`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum BehaviorLabel {
    Normal,
    Deep,
    Reflect,
    Explore,
}

impl BehaviorLabel {
    pub const ALL: [BehaviorLabel; 4] = [
        BehaviorLabel::Normal,
        BehaviorLabel::Deep,
        BehaviorLabel::Reflect,
        BehaviorLabel::Explore,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    /// Serialization string, also the verdict string in annotation output.
    pub fn canonical(self) -> &'static str {
        match self {
            BehaviorLabel::Normal => "normal operation",
            BehaviorLabel::Deep => "deep reasoning",
            BehaviorLabel::Reflect => "self-reflection",
            BehaviorLabel::Explore => "exploration",
        }
    }

    pub fn code(self) -> &'static str {
        match self {
            BehaviorLabel::Normal => "N",
            BehaviorLabel::Deep => "D",
            BehaviorLabel::Reflect => "R",
            BehaviorLabel::Explore => "E",
        }
    }

    /// One-line definition shared by the annotation and synthesis prompts.
    pub fn definition(self) -> &'static str {
        match self {
            BehaviorLabel::Normal => "Straightforward, direct operations (e.g., arithmetic, factual recall, simple step-by-step logic) without introducing new logical nodes.",
            BehaviorLabel::Deep => "Multi-step causal, deductive, or analogical thinking that extends the reasoning chain by introducing new logical nodes or hidden assumptions.",
            BehaviorLabel::Reflect => "commenting on its own thought process (e.g., confidence, strategy, uncertainty, mistakes, or reconsideration of earlier reasoning) and tracing back to previous logical nodes.",
            BehaviorLabel::Explore => "generating new possibilities, hypotheses, or questions, branching into alternative paths rather than following a single conclusion.",
        }
    }
}

impl fmt::Display for BehaviorLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.canonical())
    }
}

impl FromStr for BehaviorLabel {
    type Err = Error;

    /// Accepts canonical strings, one-letter codes and short names, ignoring case.
    fn from_str(s: &str) -> Result<Self> {
        let t = s.trim().to_ascii_lowercase();
        let label = match t.as_str() {
            "normal operation" | "n" | "normal" => BehaviorLabel::Normal,
            "deep reasoning" | "d" | "deep" => BehaviorLabel::Deep,
            "self-reflection" | "r" | "reflect" | "reflection" => BehaviorLabel::Reflect,
            "exploration" | "e" | "explore" => BehaviorLabel::Explore,
            _ => return Err(Error::BadConfig(format!("unknown behavior label {s:?}"))),
        };
        Ok(label)
    }
}

impl Serialize for BehaviorLabel {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(self.canonical())
    }
}

impl<'de> Deserialize<'de> for BehaviorLabel {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Step {
    pub index: usize,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Trace {
    id: String,
    query: String,
    steps: Vec<Step>,
    final_answer: Option<String>,
}

impl Trace {
    /// Builds a trace from step texts. Texts are trimmed; empty steps are rejected.
    pub fn new<I, S>(
        id: impl Into<String>,
        query: impl Into<String>,
        steps: I,
        final_answer: Option<String>,
    ) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let id = id.into();
        let steps: Vec<Step> = steps
            .into_iter()
            .enumerate()
            .map(|(index, s)| Step {
                index,
                text: s.as_ref().trim().to_string(),
            })
            .collect();
        if steps.is_empty() {
            return Err(Error::InvalidTrace(format!("trace {id:?} has no steps")));
        }
        if let Some(s) = steps.iter().find(|s| s.text.is_empty()) {
            return Err(Error::InvalidTrace(format!(
                "trace {id:?} step {} is empty",
                s.index
            )));
        }
        Ok(Trace {
            id,
            query: query.into(),
            steps,
            final_answer,
        })
    }

    /// Segments `text` and builds a trace from the resulting steps.
    pub fn from_text(
        id: impl Into<String>,
        query: impl Into<String>,
        text: &str,
        delimiters: &[&str],
        final_answer: Option<String>,
    ) -> Result<Self> {
        let steps = segment(text, delimiters)?;
        Trace::new(id, query, steps.into_iter().map(|s| s.text), final_answer)
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn query(&self) -> &str {
        &self.query
    }

    pub fn steps(&self) -> &[Step] {
        &self.steps
    }

    pub fn final_answer(&self) -> Option<&str> {
        self.final_answer.as_deref()
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn step_texts(&self) -> impl Iterator<Item = &str> {
        self.steps.iter().map(|s| s.text.as_str())
    }

    /// Same trace with every step text passed through `f`. Step count is kept.
    pub fn map_steps(&self, mut f: impl FnMut(&str) -> String) -> Result<Trace> {
        Trace::new(
            self.id.clone(),
            self.query.clone(),
            self.steps.iter().map(|s| f(&s.text)),
            self.final_answer.clone(),
        )
    }
}

/// A trace whose edge `t` (step `t` to step `t + 1`) carries `labels[t]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabeledTrace {
    trace: Trace,
    labels: Vec<BehaviorLabel>,
}

impl LabeledTrace {
    pub fn new(trace: Trace, labels: Vec<BehaviorLabel>) -> Result<Self> {
        if labels.len() + 1 != trace.len() {
            return Err(Error::shape(format!(
                "trace {:?} has {} steps but {} edge labels (expected {})",
                trace.id(),
                trace.len(),
                labels.len(),
                trace.len() - 1
            )));
        }
        Ok(LabeledTrace { trace, labels })
    }

    /// Minimal trace for label-only workflows: placeholder step texts.
    pub fn from_labels(id: impl Into<String>, labels: &[BehaviorLabel]) -> Result<Self> {
        let steps = (0..=labels.len()).map(|i| format!("step {i}"));
        LabeledTrace::new(Trace::new(id, "", steps, None)?, labels.to_vec())
    }

    pub fn trace(&self) -> &Trace {
        &self.trace
    }

    pub fn labels(&self) -> &[BehaviorLabel] {
        &self.labels
    }

    pub fn into_parts(self) -> (Trace, Vec<BehaviorLabel>) {
        (self.trace, self.labels)
    }
}

fn has_content(s: &str) -> bool {
    s.chars().any(char::is_alphanumeric)
}

/// Splits `text` into steps.
///
/// Delimiters are tried in order; the first that yields at least two
/// non-empty pieces wins, otherwise the whole text is one step. Pieces are
/// trimmed and delimiters are dropped. Pieces without any alphanumeric
/// character are merged into the preceding step (or the following one when
/// they lead).
pub fn segment(text: &str, delimiters: &[&str]) -> Result<Vec<Step>> {
    if text.trim().is_empty() {
        return Err(Error::InvalidTrace("empty or all-whitespace text".into()));
    }
    if delimiters.is_empty() || delimiters.iter().any(|d| d.is_empty()) {
        return Err(Error::bad_config("delimiters must be non-empty strings"));
    }

    let mut pieces: Vec<String> = vec![text.trim().to_string()];
    for delim in delimiters {
        let split: Vec<String> = text
            .split(delim)
            .map(str::trim)
            .filter(|p| !p.is_empty())
            .map(str::to_string)
            .collect();
        if split.len() >= 2 {
            pieces = split;
            break;
        }
    }

    let mut merged: Vec<String> = Vec::with_capacity(pieces.len());
    let mut pending: Option<String> = None;
    for piece in pieces {
        if !has_content(&piece) {
            match merged.last_mut() {
                Some(prev) => {
                    prev.push(' ');
                    prev.push_str(&piece);
                }
                None => match pending.as_mut() {
                    Some(p) => {
                        p.push(' ');
                        p.push_str(&piece);
                    }
                    None => pending = Some(piece),
                },
            }
            continue;
        }
        match pending.take() {
            Some(mut lead) => {
                lead.push(' ');
                lead.push_str(&piece);
                merged.push(lead);
            }
            None => merged.push(piece),
        }
    }
    if let Some(lead) = pending {
        // only content-free fragments: keep them as a single step
        merged.push(lead);
    }

    Ok(merged
        .into_iter()
        .enumerate()
        .map(|(index, text)| Step { index, text })
        .collect())
}

const BOXED: &str = "\\boxed{";

/// Content of the last top-level `\boxed{...}`, with balanced braces.
///
/// `\{` and `\}` inside the box are literal and do not count toward
/// balance. Boxes nested inside a box are part of its content.
pub fn extract_boxed(text: &str) -> Result<Option<String>> {
    let bytes = text.as_bytes();
    let mut last = None;
    let mut pos = 0;
    while let Some(found) = text[pos..].find(BOXED) {
        let open = pos + found;
        let start = open + BOXED.len();
        let mut depth = 1usize;
        let mut i = start;
        let mut close = None;
        while i < bytes.len() {
            match bytes[i] {
                b'\\' if i + 1 < bytes.len() && matches!(bytes[i + 1], b'{' | b'}') => {
                    i += 2;
                    continue;
                }
                b'{' => depth += 1,
                b'}' => {
                    depth -= 1;
                    if depth == 0 {
                        close = Some(i);
                        break;
                    }
                }
                _ => {}
            }
            i += 1;
        }
        let close = close.ok_or(Error::MalformedAnswer { offset: open })?;
        last = Some(text[start..close].to_string());
        pos = close + 1;
    }
    Ok(last)
}

/// One corpus line: a trace plus optional edge labels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CorpusEntry {
    pub trace: Trace,
    pub labels: Option<Vec<BehaviorLabel>>,
}

impl CorpusEntry {
    pub fn labeled(self) -> Result<LabeledTrace> {
        match self.labels {
            Some(labels) => LabeledTrace::new(self.trace, labels),
            None => Err(Error::InvalidTrace(format!(
                "trace {:?} has no labels",
                self.trace.id()
            ))),
        }
    }
}

impl From<Trace> for CorpusEntry {
    fn from(trace: Trace) -> Self {
        CorpusEntry {
            trace,
            labels: None,
        }
    }
}

impl From<LabeledTrace> for CorpusEntry {
    fn from(lt: LabeledTrace) -> Self {
        let (trace, labels) = lt.into_parts();
        CorpusEntry {
            trace,
            labels: Some(labels),
        }
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRecord {
    id: String,
    query: String,
    #[serde(default)]
    steps: Option<Vec<String>>,
    #[serde(default)]
    text: Option<String>,
    #[serde(default)]
    final_answer: Option<String>,
    #[serde(default)]
    labels: Option<Vec<BehaviorLabel>>,
}

#[derive(Serialize)]
struct OutRecord<'a> {
    id: &'a str,
    query: &'a str,
    steps: Vec<&'a str>,
    #[serde(skip_serializing_if = "Option::is_none")]
    final_answer: Option<&'a str>,
    #[serde(skip_serializing_if = "Option::is_none")]
    labels: Option<&'a [BehaviorLabel]>,
}

/// Reads a JSONL corpus. Records with `"text"` are segmented with `delimiters`.
pub fn read_corpus(path: impl AsRef<Path>, delimiters: &[&str]) -> Result<Vec<CorpusEntry>> {
    let path = path.as_ref();
    read_corpus_from(File::open(path)?, path, delimiters)
}

pub fn read_corpus_from(
    reader: impl Read,
    source: impl AsRef<Path>,
    delimiters: &[&str],
) -> Result<Vec<CorpusEntry>> {
    let source: PathBuf = source.as_ref().to_path_buf();
    let parse_err = |line: usize, message: String| Error::Parse {
        path: source.clone(),
        line,
        message,
    };
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for (n, line) in BufReader::new(reader).lines().enumerate() {
        let line_no = n + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let raw: RawRecord =
            serde_json::from_str(&line).map_err(|e| parse_err(line_no, e.to_string()))?;
        let trace = match (raw.steps, raw.text) {
            (Some(steps), None) => Trace::new(&raw.id, raw.query, steps, raw.final_answer),
            (None, Some(text)) => {
                Trace::from_text(&raw.id, raw.query, &text, delimiters, raw.final_answer)
            }
            (Some(_), Some(_)) => {
                return Err(parse_err(line_no, "both \"steps\" and \"text\" given".into()))
            }
            (None, None) => return Err(parse_err(line_no, "missing \"steps\" or \"text\"".into())),
        }
        .map_err(|e| parse_err(line_no, e.to_string()))?;
        if !seen.insert(raw.id.clone()) {
            return Err(Error::DuplicateId {
                id: raw.id,
                line: line_no,
            });
        }
        if let Some(labels) = &raw.labels {
            if labels.len() + 1 != trace.len() {
                return Err(parse_err(
                    line_no,
                    format!(
                        "{} labels for {} steps (expected {})",
                        labels.len(),
                        trace.len(),
                        trace.len() - 1
                    ),
                ));
            }
        }
        out.push(CorpusEntry {
            trace,
            labels: raw.labels,
        });
    }
    Ok(out)
}

/// Reads a corpus in which every record carries labels.
pub fn read_labeled_corpus(path: impl AsRef<Path>) -> Result<Vec<LabeledTrace>> {
    read_corpus(path, &DEFAULT_DELIMITERS)?
        .into_iter()
        .map(CorpusEntry::labeled)
        .collect()
}

pub fn write_corpus(entries: &[CorpusEntry], path: impl AsRef<Path>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_corpus_to(entries, &mut w)?;
    w.flush()?;
    Ok(())
}

pub fn write_corpus_to(entries: &[CorpusEntry], mut w: impl Write) -> Result<()> {
    for e in entries {
        let rec = OutRecord {
            id: e.trace.id(),
            query: e.trace.query(),
            steps: e.trace.step_texts().collect(),
            final_answer: e.trace.final_answer(),
            labels: e.labels.as_deref(),
        };
        serde_json::to_writer(&mut w, &rec)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}
