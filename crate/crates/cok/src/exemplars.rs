//! Exemplar files: one JSON record per line with `question`, optional
//! `choices`, `triples` (`[[s, r, o], ...]`), `explanation`, `answer` and
//! `task_type`. Built-in sets ship for twelve benchmark tasks.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use cok_core::prompt::Exemplar;
use cok_core::{TaskType, Triple};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::dataset::{answer_value, gold_answer, jsonl_records, parse_choices, parse_task_type};
use crate::error::{Error, Result};
use crate::kb_io::{read_to_string, write_file};

#[derive(Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
struct RawExemplar {
    question: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    choices: Option<BTreeMap<String, String>>,
    #[serde(default)]
    triples: Vec<[String; 3]>,
    explanation: String,
    answer: Value,
    task_type: String,
}

pub fn parse_exemplars(text: &str, path: &Path) -> Result<Vec<Exemplar>> {
    jsonl_records::<RawExemplar>(text, path)?
        .into_iter()
        .map(|(line, raw)| {
            let err = |m: String| Error::data(path, line, m);
            let task_type = parse_task_type(&raw.task_type).map_err(err)?;
            let choices = raw.choices.map(parse_choices).transpose().map_err(err)?;
            let answer = gold_answer(&raw.answer, task_type, choices.as_ref()).map_err(err)?;
            let evidence_triples = raw
                .triples
                .iter()
                .map(|[s, r, o]| Triple::new(s, r, o).map_err(|e| err(e.to_string())))
                .collect::<Result<_>>()?;
            Ok(Exemplar {
                question: raw.question,
                choices,
                evidence_triples,
                explanation: raw.explanation,
                answer,
                task_type,
            })
        })
        .collect()
}

pub fn load_exemplars(path: &Path) -> Result<Vec<Exemplar>> {
    let ex = parse_exemplars(&read_to_string(path)?, path)?;
    if ex.is_empty() {
        return Err(Error::data(path, 0, "no exemplars"));
    }
    Ok(ex)
}

pub fn render_exemplars(exemplars: &[Exemplar]) -> String {
    let mut out = String::new();
    for e in exemplars {
        let raw = RawExemplar {
            question: e.question.clone(),
            choices: e
                .choices
                .as_ref()
                .map(|c| c.iter().map(|(k, v)| (k.to_string(), v.clone())).collect()),
            triples: e
                .evidence_triples
                .iter()
                .map(|t| [t.subject.clone(), t.relation.clone(), t.object.clone()])
                .collect(),
            explanation: e.explanation.clone(),
            answer: answer_value(&e.answer),
            task_type: e.task_type.to_string(),
        };
        out.push_str(&serde_json::to_string(&raw).expect("exemplar serializes"));
        out.push('\n');
    }
    out
}

pub fn save_exemplars(path: &Path, exemplars: &[Exemplar]) -> Result<()> {
    write_file(path, render_exemplars(exemplars).as_bytes())
}

/// Exemplars grouped by task type. A set holding a single task type serves
/// every query, so one task's exemplars can be used on another.
#[derive(Debug, Clone, Default)]
pub struct ExemplarSet {
    groups: BTreeMap<TaskType, Vec<Exemplar>>,
}

impl ExemplarSet {
    pub fn new(exemplars: Vec<Exemplar>) -> Self {
        let mut groups: BTreeMap<TaskType, Vec<Exemplar>> = BTreeMap::new();
        for e in exemplars {
            groups.entry(e.task_type).or_default().push(e);
        }
        Self { groups }
    }

    pub fn for_task(&self, task: TaskType) -> Option<&[Exemplar]> {
        if self.groups.len() == 1 {
            return self.groups.values().next().map(Vec::as_slice);
        }
        self.groups.get(&task).map(Vec::as_slice)
    }

    pub fn len(&self) -> usize {
        self.groups.values().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.groups.is_empty()
    }
}

/// Benchmark tasks with a shipped exemplar set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Task {
    LastLetters,
    CoinFlip,
    Sports,
    ArcC,
    Aqua,
    BoolQ,
    Csqa,
    Svamp,
    OpenBookQa,
    StrategyQa,
    Gsm8k,
    MultiArith,
}

impl Task {
    pub const ALL: [Task; 12] = [
        Task::LastLetters,
        Task::CoinFlip,
        Task::Sports,
        Task::ArcC,
        Task::Aqua,
        Task::BoolQ,
        Task::Csqa,
        Task::Svamp,
        Task::OpenBookQa,
        Task::StrategyQa,
        Task::Gsm8k,
        Task::MultiArith,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Task::LastLetters => "letters",
            Task::CoinFlip => "coin",
            Task::Sports => "sports",
            Task::ArcC => "arc_c",
            Task::Aqua => "aqua",
            Task::BoolQ => "boolq",
            Task::Csqa => "csqa",
            Task::Svamp => "svamp",
            Task::OpenBookQa => "openbookqa",
            Task::StrategyQa => "strategyqa",
            Task::Gsm8k => "gsm8k",
            Task::MultiArith => "multiarith",
        }
    }

    pub fn task_type(self) -> TaskType {
        match self {
            Task::LastLetters => TaskType::StringConcat,
            Task::CoinFlip | Task::Sports | Task::BoolQ | Task::StrategyQa => TaskType::YesNo,
            Task::ArcC | Task::Aqua | Task::Csqa | Task::OpenBookQa => TaskType::MultiChoice,
            Task::Svamp | Task::Gsm8k | Task::MultiArith => TaskType::Numeric,
        }
    }

    /// Number of exemplars in the shipped set.
    pub fn exemplar_count(self) -> usize {
        match self {
            Task::LastLetters => 4,
            Task::Sports | Task::BoolQ | Task::StrategyQa => 6,
            _ => 8,
        }
    }

    fn source(self) -> &'static str {
        match self {
            Task::LastLetters => include_str!("../fixtures/exemplars/letters.jsonl"),
            Task::CoinFlip => include_str!("../fixtures/exemplars/coin.jsonl"),
            Task::Sports => include_str!("../fixtures/exemplars/sports.jsonl"),
            Task::ArcC => include_str!("../fixtures/exemplars/arc_c.jsonl"),
            Task::Aqua => include_str!("../fixtures/exemplars/aqua.jsonl"),
            Task::BoolQ => include_str!("../fixtures/exemplars/boolq.jsonl"),
            Task::Csqa => include_str!("../fixtures/exemplars/csqa.jsonl"),
            Task::Svamp => include_str!("../fixtures/exemplars/svamp.jsonl"),
            Task::OpenBookQa => include_str!("../fixtures/exemplars/openbookqa.jsonl"),
            Task::StrategyQa => include_str!("../fixtures/exemplars/strategyqa.jsonl"),
            Task::Gsm8k => include_str!("../fixtures/exemplars/gsm8k.jsonl"),
            Task::MultiArith => include_str!("../fixtures/exemplars/multiarith.jsonl"),
        }
    }

    pub fn builtin_exemplars(self) -> Vec<Exemplar> {
        let path = format!("<builtin>/{}.jsonl", self.name());
        parse_exemplars(self.source(), Path::new(&path)).expect("shipped exemplars are valid")
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Task {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        Task::ALL
            .into_iter()
            .find(|t| t.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown task `{s}`"))
    }
}
