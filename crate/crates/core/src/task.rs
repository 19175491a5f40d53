//! HumanEval-format task suites.
//!
//! The canonical on-disk form is one JSON object per line with the keys
//! `task_id`, `prompt`, `canonical_solution`, `test`, `entry_point` and
//! `difficulty_scale`. A top-level JSON array of the same records is also
//! accepted.

use std::collections::HashSet;
use std::fmt;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

#[derive(Debug, thiserror::Error)]
pub enum TaskError {
    #[error("cannot read task file {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("no tasks in {0}")]
    Empty(String),
    #[error("record {index}: {message}")]
    Malformed { index: usize, message: String },
    #[error("record {index}: missing field `{field}`")]
    MissingField { index: usize, field: &'static str },
    #[error("record {index}: {message}")]
    Invalid { index: usize, message: String },
    #[error("duplicate task_id `{0}`")]
    Duplicate(String),
}

/// Difficulty tier attached to every task.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Difficulty {
    Basic,
    Intermediate,
    Advanced,
}

impl Difficulty {
    pub const ALL: [Difficulty; 3] = [Difficulty::Basic, Difficulty::Intermediate, Difficulty::Advanced];

    pub fn as_str(self) -> &'static str {
        match self {
            Difficulty::Basic => "basic",
            Difficulty::Intermediate => "intermediate",
            Difficulty::Advanced => "advanced",
        }
    }
}

impl fmt::Display for Difficulty {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Difficulty {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "basic" => Ok(Difficulty::Basic),
            "intermediate" => Ok(Difficulty::Intermediate),
            "advanced" => Ok(Difficulty::Advanced),
            other => Err(format!("unknown difficulty `{other}` (expected basic, intermediate or advanced)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BenchmarkTask {
    pub task_id: String,
    pub prompt: String,
    pub canonical_solution: String,
    pub test: String,
    pub entry_point: String,
    #[serde(rename = "difficulty_scale")]
    pub difficulty: Difficulty,
}

impl BenchmarkTask {
    fn validate(&self, index: usize) -> Result<(), TaskError> {
        if self.task_id.trim().is_empty() {
            return Err(TaskError::Invalid { index, message: "task_id is empty".into() });
        }
        if !is_identifier(&self.entry_point) {
            return Err(TaskError::Invalid {
                index,
                message: format!("entry_point `{}` is not a valid identifier", self.entry_point),
            });
        }
        if !contains_word(&self.prompt, &self.entry_point) {
            return Err(TaskError::Invalid {
                index,
                message: format!("entry_point `{}` does not appear in prompt", self.entry_point),
            });
        }
        Ok(())
    }
}

pub(crate) fn is_identifier(s: &str) -> bool {
    let mut chars = s.chars();
    match chars.next() {
        Some(c) if c == '_' || c.is_alphabetic() => {}
        _ => return false,
    }
    chars.all(|c| c == '_' || c.is_alphanumeric())
}

fn contains_word(haystack: &str, word: &str) -> bool {
    let is_ident = |c: char| c == '_' || c.is_alphanumeric();
    haystack.match_indices(word).any(|(at, _)| {
        let before = haystack[..at].chars().next_back();
        let after = haystack[at + word.len()..].chars().next();
        !before.is_some_and(is_ident) && !after.is_some_and(is_ident)
    })
}

/// An ordered, validated collection of tasks.
#[derive(Debug, Clone, Default)]
pub struct TaskSuite {
    tasks: Vec<BenchmarkTask>,
}

impl TaskSuite {
    pub fn new(tasks: Vec<BenchmarkTask>) -> Result<Self, TaskError> {
        let mut seen = HashSet::new();
        for (index, task) in tasks.iter().enumerate() {
            task.validate(index)?;
            if !seen.insert(task.task_id.as_str()) {
                return Err(TaskError::Duplicate(task.task_id.clone()));
            }
        }
        Ok(Self { tasks })
    }

    pub fn tasks(&self) -> &[BenchmarkTask] {
        &self.tasks
    }

    pub fn len(&self) -> usize {
        self.tasks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tasks.is_empty()
    }

    pub fn get(&self, task_id: &str) -> Option<&BenchmarkTask> {
        self.tasks.iter().find(|t| t.task_id == task_id)
    }

    pub fn iter(&self) -> std::slice::Iter<'_, BenchmarkTask> {
        self.tasks.iter()
    }

    /// SHA-256 over the line-delimited serialization; identifies a suite in results files.
    pub fn content_hash(&self) -> String {
        let mut hasher = Sha256::new();
        for task in &self.tasks {
            hasher.update(serde_json::to_vec(task).expect("task serializes"));
            hasher.update(b"\n");
        }
        hex::encode(hasher.finalize())
    }

    pub fn canonical_solutions(&self) -> Vec<String> {
        self.tasks.iter().map(|t| t.canonical_solution.clone()).collect()
    }
}

impl<'a> IntoIterator for &'a TaskSuite {
    type Item = &'a BenchmarkTask;
    type IntoIter = std::slice::Iter<'a, BenchmarkTask>;

    fn into_iter(self) -> Self::IntoIter {
        self.tasks.iter()
    }
}

const FIELDS: [&str; 6] = ["task_id", "prompt", "canonical_solution", "test", "entry_point", "difficulty_scale"];

fn parse_record(index: usize, value: Value) -> Result<BenchmarkTask, TaskError> {
    let obj = value.as_object().ok_or_else(|| TaskError::Malformed {
        index,
        message: "record is not a JSON object".into(),
    })?;
    let mut fields: [String; 6] = Default::default();
    for (slot, name) in fields.iter_mut().zip(FIELDS) {
        let raw = obj.get(name).or_else(|| {
            // Some exports use `difficulty` instead of the published key.
            (name == "difficulty_scale").then(|| obj.get("difficulty")).flatten()
        });
        match raw {
            Some(Value::String(s)) => *slot = s.clone(),
            Some(_) => {
                return Err(TaskError::Malformed { index, message: format!("field `{name}` is not a string") })
            }
            None => return Err(TaskError::MissingField { index, field: name }),
        }
    }
    let [task_id, prompt, canonical_solution, test, entry_point, difficulty] = fields;
    let difficulty = difficulty
        .parse()
        .map_err(|message| TaskError::Invalid { index, message })?;
    Ok(BenchmarkTask { task_id, prompt, canonical_solution, test, entry_point, difficulty })
}

/// Parses a task suite from text in either line-delimited or array form.
pub fn parse_tasks(text: &str, origin: &str) -> Result<TaskSuite, TaskError> {
    let trimmed = text.trim_start();
    let values: Vec<Value> = if trimmed.starts_with('[') {
        serde_json::from_str(trimmed).map_err(|e| TaskError::Malformed { index: 0, message: e.to_string() })?
    } else {
        text.lines()
            .filter(|l| !l.trim().is_empty())
            .enumerate()
            .map(|(index, line)| {
                serde_json::from_str(line).map_err(|e| TaskError::Malformed { index, message: e.to_string() })
            })
            .collect::<Result<_, _>>()?
    };
    if values.is_empty() {
        return Err(TaskError::Empty(origin.to_string()));
    }
    let tasks = values
        .into_iter()
        .enumerate()
        .map(|(index, v)| parse_record(index, v))
        .collect::<Result<Vec<_>, _>>()?;
    TaskSuite::new(tasks)
}

pub fn load_tasks(path: impl AsRef<Path>) -> Result<TaskSuite, TaskError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)
        .map_err(|source| TaskError::Io { path: path.display().to_string(), source })?;
    parse_tasks(&text, &path.display().to_string())
}

/// Writes tasks in the canonical line-delimited form.
pub fn write_tasks<W: Write>(mut out: W, tasks: &[BenchmarkTask]) -> std::io::Result<()> {
    for task in tasks {
        serde_json::to_writer(&mut out, task)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}
