//! Test sets: one JSON record per line with `id`, `question`, optional
//! `choices`, `answer` (alias `gold_answer`) and `task_type`.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use cok_core::parse::normalize_answer;
use cok_core::prompt::{Choices, Query};
use cok_core::{Answer, TaskType};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::kb_io::read_to_string;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DatasetRecord {
    pub id: String,
    pub question: String,
    pub choices: Option<Choices>,
    pub gold_answer: Answer,
    pub task_type: TaskType,
}

impl DatasetRecord {
    pub fn query(&self) -> Query {
        Query {
            id: self.id.clone(),
            question: self.question.clone(),
            choices: self.choices.clone(),
            task_type: self.task_type,
        }
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRecord {
    id: String,
    question: String,
    #[serde(default)]
    choices: Option<BTreeMap<String, String>>,
    #[serde(alias = "gold_answer")]
    answer: Value,
    task_type: String,
}

/// Non-blank lines of a JSONL file, each deserialized, with 1-based line
/// numbers.
pub(crate) fn jsonl_records<T: DeserializeOwned>(text: &str, path: &Path) -> Result<Vec<(usize, T)>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l)
                .map(|r| (i + 1, r))
                .map_err(|e| Error::data(path, i + 1, e.to_string()))
        })
        .collect()
}

/// Letter keys `A`–`E`, upper-cased.
pub(crate) fn parse_choices(raw: BTreeMap<String, String>) -> std::result::Result<Choices, String> {
    raw.into_iter()
        .map(|(k, v)| {
            let mut cs = k.trim().chars();
            match (cs.next(), cs.next()) {
                (Some(c), None) if matches!(c.to_ascii_uppercase(), 'A'..='E') => Ok((c.to_ascii_uppercase(), v)),
                _ => Err(format!("choice key `{k}` is not a letter A-E")),
            }
        })
        .collect()
}

pub(crate) fn parse_task_type(s: &str) -> std::result::Result<TaskType, String> {
    s.parse().map_err(|e: cok_core::parse::UnknownTaskType| e.to_string())
}

/// Interprets a gold answer given as a string, number or boolean.
pub(crate) fn gold_answer(value: &Value, task: TaskType, choices: Option<&Choices>) -> std::result::Result<Answer, String> {
    let mismatch = || format!("answer {value} does not fit task type {task}");
    let answer = match (task, value) {
        (TaskType::YesNo, Value::Bool(b)) => Answer::YesNo(*b),
        (TaskType::Numeric, Value::Number(n)) => Answer::Number(n.as_f64().ok_or_else(mismatch)?),
        (TaskType::MultiChoice, Value::String(s)) => {
            let t = s.trim().trim_start_matches('(').trim_end_matches(')');
            let mut cs = t.chars();
            match (cs.next(), cs.next()) {
                (Some(c), None) if matches!(c.to_ascii_uppercase(), 'A'..='E') => Answer::Choice(c.to_ascii_uppercase()),
                _ => return Err(mismatch()),
            }
        }
        (TaskType::YesNo | TaskType::Numeric, Value::String(s)) => {
            normalize_answer(s, task).filter(|_| s.split_whitespace().count() == 1).ok_or_else(mismatch)?
        }
        (TaskType::StringConcat, Value::String(s)) if !s.trim().is_empty() => Answer::Text(s.trim().to_string()),
        _ => return Err(mismatch()),
    };
    if let (Answer::Choice(c), Some(choices)) = (&answer, choices) {
        if !choices.contains_key(c) {
            return Err(format!("answer ({c}) is not among the choices"));
        }
    }
    Ok(answer)
}

/// The JSON form of an answer as written in dataset and exemplar files.
pub(crate) fn answer_value(a: &Answer) -> Value {
    match a {
        Answer::Choice(c) => Value::String(c.to_string()),
        Answer::YesNo(b) => Value::String(if *b { "yes" } else { "no" }.into()),
        Answer::Number(x) => serde_json::Number::from_f64(*x).map_or(Value::Null, Value::Number),
        Answer::Text(s) => Value::String(s.clone()),
    }
}

pub fn parse_dataset(text: &str, path: &Path) -> Result<Vec<DatasetRecord>> {
    let mut ids = BTreeSet::new();
    let mut out = Vec::new();
    for (line, raw) in jsonl_records::<RawRecord>(text, path)? {
        let err = |m: String| Error::data(path, line, m);
        if !ids.insert(raw.id.clone()) {
            return Err(err(format!("duplicate id `{}`", raw.id)));
        }
        let task_type = parse_task_type(&raw.task_type).map_err(err)?;
        let choices = raw.choices.map(parse_choices).transpose().map_err(err)?;
        if choices.is_some() != (task_type == TaskType::MultiChoice) {
            return Err(err("choices are required for, and only for, multi_choice records".into()));
        }
        let gold_answer = gold_answer(&raw.answer, task_type, choices.as_ref()).map_err(err)?;
        out.push(DatasetRecord {
            id: raw.id,
            question: raw.question,
            choices,
            gold_answer,
            task_type,
        });
    }
    Ok(out)
}

pub fn load_dataset(path: &Path) -> Result<Vec<DatasetRecord>> {
    parse_dataset(&read_to_string(path)?, path)
}
