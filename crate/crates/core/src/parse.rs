//! Parsing raw completions into evidence triples, explanation and answer.
//!
//! The grammar is line oriented:
//!
//! ```text
//! A: Evidence triples:
//! 1. (subject, relation, object)
//! 2. (subject, relation, object, with commas)
//! Explanation hints: free text ...
//! So the answer is (B).
//! ```
//!
//! The two sections may appear in either order. Malformed regions produce
//! [`ParseWarning`]s and are skipped; parsing itself never fails.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use crate::text::fold;
use crate::triple::Triple;

const TRIPLES_HEADER: &str = "evidence triples:";
const HINTS_HEADER: &str = "explanation hints:";
const ANSWER_MARKERS: [&str; 2] = ["so the answer is", "so, the answer is"];

/// Answer format of a task.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum TaskType {
    MultiChoice,
    YesNo,
    Numeric,
    StringConcat,
}

impl TaskType {
    pub fn as_str(self) -> &'static str {
        match self {
            TaskType::MultiChoice => "multi_choice",
            TaskType::YesNo => "yes_no",
            TaskType::Numeric => "numeric",
            TaskType::StringConcat => "string_concat",
        }
    }
}

impl fmt::Display for TaskType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown task type `{0}`")]
pub struct UnknownTaskType(pub String);

impl FromStr for TaskType {
    type Err = UnknownTaskType;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match fold(s).replace(['-', ' '], "_").as_str() {
            "multi_choice" | "multichoice" => Ok(TaskType::MultiChoice),
            "yes_no" | "yesno" => Ok(TaskType::YesNo),
            "numeric" | "number" => Ok(TaskType::Numeric),
            "string_concat" | "string" => Ok(TaskType::StringConcat),
            _ => Err(UnknownTaskType(s.to_string())),
        }
    }
}

/// A task-typed final answer.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(tag = "kind", content = "value", rename_all = "snake_case"))]
pub enum Answer {
    /// Upper-case letter `A`–`E`.
    Choice(char),
    YesNo(bool),
    Number(f64),
    Text(String),
}

pub const NUMERIC_TOLERANCE: f64 = 1e-6;

impl Answer {
    pub fn task_type(&self) -> TaskType {
        match self {
            Answer::Choice(_) => TaskType::MultiChoice,
            Answer::YesNo(_) => TaskType::YesNo,
            Answer::Number(_) => TaskType::Numeric,
            Answer::Text(_) => TaskType::StringConcat,
        }
    }

    /// Surface form used after "So the answer is".
    pub fn render(&self) -> String {
        match self {
            Answer::Choice(c) => format!("({c})"),
            Answer::YesNo(true) => "yes".into(),
            Answer::YesNo(false) => "no".into(),
            Answer::Number(x) => format!("{x}"),
            Answer::Text(s) => s.clone(),
        }
    }

    /// Accuracy comparison: numbers within [`NUMERIC_TOLERANCE`], text
    /// case-insensitively after trimming, everything else exactly.
    pub fn matches(&self, other: &Answer) -> bool {
        match (self, other) {
            (Answer::Choice(a), Answer::Choice(b)) => a == b,
            (Answer::YesNo(a), Answer::YesNo(b)) => a == b,
            (Answer::Number(a), Answer::Number(b)) => (a - b).abs() <= NUMERIC_TOLERANCE,
            (Answer::Text(a), Answer::Text(b)) => fold(a) == fold(b),
            _ => false,
        }
    }
}

impl fmt::Display for Answer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.render())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum WarningKind {
    NoAnswer,
    MalformedTriple,
    MissingHeader,
}

#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ParseWarning {
    pub kind: WarningKind,
    /// 1-based line in the completion, when the warning is tied to one.
    pub line: Option<usize>,
    pub detail: String,
}

/// Parsed completion.
#[derive(Debug, Clone, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ReasoningChain {
    pub evidence_triples: Vec<Triple>,
    pub explanation: String,
    pub answer: Option<Answer>,
    pub warnings: Vec<ParseWarning>,
}

impl ReasoningChain {
    pub fn has_warning(&self, kind: WarningKind) -> bool {
        self.warnings.iter().any(|w| w.kind == kind)
    }

    /// Equality ignoring warnings.
    pub fn same_content(&self, other: &ReasoningChain) -> bool {
        self.evidence_triples == other.evidence_triples
            && self.explanation == other.explanation
            && self.answer == other.answer
    }
}

/// Normalizes the text following "So the answer is" for `task`.
pub fn normalize_answer(raw: &str, task: TaskType) -> Option<Answer> {
    let raw = raw.trim();
    match task {
        TaskType::MultiChoice => choice_letter(raw).map(Answer::Choice),
        TaskType::YesNo => {
            let word: String = raw
                .trim_start_matches(|c: char| !c.is_alphanumeric())
                .chars()
                .take_while(|c| c.is_alphanumeric())
                .collect();
            match word.to_lowercase().as_str() {
                "yes" | "true" => Some(Answer::YesNo(true)),
                "no" | "false" => Some(Answer::YesNo(false)),
                _ => None,
            }
        }
        TaskType::Numeric => {
            let cleaned: String = raw.chars().filter(|c| *c != '$' && *c != ',').collect();
            cleaned.split_whitespace().find_map(|tok| {
                let tok = tok.trim_matches(|c: char| !(c.is_ascii_digit() || c == '-' || c == '.'));
                let tok = tok.trim_end_matches('.');
                tok.parse::<f64>().ok().filter(|x| x.is_finite()).map(Answer::Number)
            })
        }
        TaskType::StringConcat => {
            let t = raw
                .trim_end_matches(|c: char| matches!(c, '.' | ',' | '!' | '?' | ';' | ':') || c.is_whitespace())
                .trim_matches(|c: char| matches!(c, '"' | '\'' | '“' | '”'))
                .trim();
            (!t.is_empty()).then(|| Answer::Text(t.to_string()))
        }
    }
}

fn is_choice(c: char) -> bool {
    matches!(c.to_ascii_uppercase(), 'A'..='E')
}

fn choice_letter(raw: &str) -> Option<char> {
    let chars: Vec<char> = raw.chars().collect();
    for w in chars.windows(3) {
        if w[0] == '(' && w[2] == ')' && is_choice(w[1]) {
            return Some(w[1].to_ascii_uppercase());
        }
    }
    raw.split(|c: char| !c.is_alphanumeric())
        .find(|tok| tok.chars().count() == 1 && tok.chars().all(is_choice))
        .and_then(|tok| tok.chars().next())
        .map(|c| c.to_ascii_uppercase())
}

/// Parses `"<index>. (<s>, <r>, <o>)"`. The first `(` after the index and
/// the last `)` delimit the triple; only the object may contain commas.
pub fn parse_triple_line(line: &str) -> Result<Triple, String> {
    let line = line.trim();
    let digits = line.bytes().take_while(u8::is_ascii_digit).count();
    if digits == 0 {
        return Err("missing index".into());
    }
    let rest = line[digits..]
        .strip_prefix('.')
        .ok_or_else(|| String::from("index not followed by '.'"))?
        .trim_start();
    let body = rest
        .strip_prefix('(')
        .ok_or_else(|| String::from("missing '('"))?;
    let close = body.rfind(')').ok_or_else(|| String::from("missing ')'"))?;
    let trailing = body[close + 1..].trim();
    if !trailing.chars().all(|c| matches!(c, '.' | ',' | ';')) {
        return Err(format!("unexpected text after triple: `{trailing}`"));
    }
    let mut parts = body[..close].splitn(3, ',');
    let (Some(s), Some(r), Some(o)) = (parts.next(), parts.next(), parts.next()) else {
        return Err("expected three comma-separated fields".into());
    };
    Triple::new(s, r, o).map_err(|e| e.to_string())
}

fn find_ci(haystack_lower: &str, needle: &str) -> Option<usize> {
    haystack_lower.find(needle)
}

/// Last answer marker: (line index, byte offset of marker, byte offset of text).
fn last_answer_marker(lower: &[String]) -> Option<(usize, usize, usize)> {
    for (i, l) in lower.iter().enumerate().rev() {
        let best = ANSWER_MARKERS
            .iter()
            .filter_map(|m| l.rfind(m).map(|p| (p, p + m.len())))
            .max_by_key(|(p, _)| *p);
        if let Some((p, end)) = best {
            return Some((i, p, end));
        }
    }
    None
}

pub fn parse_response(text: &str, task: TaskType) -> ReasoningChain {
    let lines: Vec<&str> = text.split('\n').map(|l| l.strip_suffix('\r').unwrap_or(l)).collect();
    // ASCII lowercasing keeps byte offsets aligned with `lines`.
    let lower: Vec<String> = lines.iter().map(|l| l.to_ascii_lowercase()).collect();
    let mut chain = ReasoningChain::default();

    let answer_at = last_answer_marker(&lower);
    let triples_at = lower
        .iter()
        .enumerate()
        .find_map(|(i, l)| find_ci(l, TRIPLES_HEADER).map(|p| (i, p + TRIPLES_HEADER.len())));
    let hints_at = lower
        .iter()
        .enumerate()
        .find_map(|(i, l)| find_ci(l, HINTS_HEADER).map(|p| (i, p + HINTS_HEADER.len())));

    match triples_at {
        Some((start, _)) => {
            let mut end = lines.len();
            if let Some((h, _)) = hints_at {
                if h > start {
                    end = end.min(h);
                }
            }
            if let Some((a, _, _)) = answer_at {
                if a > start {
                    end = end.min(a);
                }
            }
            for (i, line) in lines.iter().enumerate().take(end).skip(start + 1) {
                if line.trim().is_empty() {
                    continue;
                }
                match parse_triple_line(line) {
                    Ok(t) => chain.evidence_triples.push(t),
                    Err(detail) => chain.warnings.push(ParseWarning {
                        kind: WarningKind::MalformedTriple,
                        line: Some(i + 1),
                        detail,
                    }),
                }
            }
        }
        None => chain.warnings.push(ParseWarning {
            kind: WarningKind::MissingHeader,
            line: None,
            detail: "no `Evidence triples:` header".into(),
        }),
    }

    if let Some((h, col)) = hints_at {
        let mut parts: Vec<&str> = Vec::new();
        for (i, line) in lines.iter().enumerate().skip(h) {
            let from = if i == h { col } else { 0 };
            if i > h {
                if let Some((t, _)) = triples_at {
                    if t == i {
                        break;
                    }
                }
            }
            match answer_at {
                Some((a, p, _)) if a == i => {
                    if p >= from {
                        parts.push(&line[from..p]);
                    }
                    break;
                }
                _ => parts.push(&line[from..]),
            }
        }
        chain.explanation = parts.join("\n").trim().to_string();
    }

    match answer_at {
        Some((a, _, text_start)) => {
            let raw = &lines[a][text_start..];
            match normalize_answer(raw, task) {
                Some(ans) => chain.answer = Some(ans),
                None => chain.warnings.push(ParseWarning {
                    kind: WarningKind::NoAnswer,
                    line: Some(a + 1),
                    detail: format!("cannot read a {task} answer from `{}`", raw.trim()),
                }),
            }
        }
        None => chain.warnings.push(ParseWarning {
            kind: WarningKind::NoAnswer,
            line: None,
            detail: "no `So the answer is` sentence".into(),
        }),
    }
    chain
}

/// Lossy UTF-8 decoding followed by [`parse_response`].
pub fn parse_response_bytes(bytes: &[u8], task: TaskType) -> ReasoningChain {
    parse_response(&String::from_utf8_lossy(bytes), task)
}

/// Numbered `(s, r, o)` lines, one per triple.
pub fn render_triples(triples: &[Triple]) -> String {
    let mut out = String::new();
    for (i, t) in triples.iter().enumerate() {
        out.push_str(&format!("{}. {}\n", i + 1, t));
    }
    out
}

pub fn answer_sentence(answer: &Answer) -> String {
    format!("So the answer is {}.", answer.render())
}

/// Canonical answer block: triples, then hints (if any), then the answer
/// sentence (if any).
pub fn render_chain(chain: &ReasoningChain) -> String {
    render_block(&chain.evidence_triples, &chain.explanation, chain.answer.as_ref(), true, true)
}

pub(crate) fn render_block(
    triples: &[Triple],
    explanation: &str,
    answer: Option<&Answer>,
    with_triples: bool,
    with_hints: bool,
) -> String {
    let mut out = String::new();
    if with_triples {
        out.push_str("Evidence triples:\n");
        out.push_str(&render_triples(triples));
    }
    if with_hints && !explanation.is_empty() {
        out.push_str("Explanation hints: ");
        out.push_str(explanation);
        out.push('\n');
    }
    if let Some(a) = answer {
        out.push_str(&answer_sentence(a));
        out.push('\n');
    }
    out
}
