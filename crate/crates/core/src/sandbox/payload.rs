use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::task::BenchmarkTask;

/// The record handed to the runner shim.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Payload {
    pub prompt: String,
    pub candidate: String,
    pub test: String,
    pub entry_point: String,
}

/// Extracts the contents of fenced code blocks; returns the input unchanged
/// when it has no fences. An unterminated final fence runs to the end.
fn strip_fences(text: &str) -> String {
    if !text.lines().any(|l| l.trim_start().starts_with("```")) {
        return text.to_string();
    }
    let mut blocks: Vec<String> = Vec::new();
    let mut current: Option<String> = None;
    for line in text.lines() {
        if line.trim_start().starts_with("```") {
            match current.take() {
                Some(block) => blocks.push(block),
                None => current = Some(String::new()),
            }
            continue;
        }
        if let Some(block) = current.as_mut() {
            block.push_str(line);
            block.push('\n');
        }
    }
    if let Some(block) = current {
        blocks.push(block);
    }
    blocks.join("\n")
}

fn definition_pattern(entry_point: &str) -> Regex {
    Regex::new(&format!(r"(?m)^(?:async\s+)?def\s+{}\s*\(", regex::escape(entry_point)))
        .expect("escaped identifier forms a valid pattern")
}

/// Indents a completion-style body that was emitted flush-left.
fn indent_body(body: &str) -> String {
    let first = body.lines().find(|l| !l.trim().is_empty());
    match first {
        Some(line) if !line.starts_with([' ', '\t']) => body
            .lines()
            .map(|l| if l.trim().is_empty() { String::new() } else { format!("    {l}") })
            .collect::<Vec<_>>()
            .join("\n"),
        _ => body.to_string(),
    }
}

/// Normalizes a raw completion. Returns the text and whether it carries a
/// full top-level definition of `entry_point`.
pub fn normalize_candidate(candidate: &str, entry_point: &str) -> (String, bool) {
    let stripped = strip_fences(candidate);
    if definition_pattern(entry_point).is_match(&stripped) {
        (stripped, true)
    } else {
        (indent_body(&stripped), false)
    }
}

/// Builds the shim payload for a candidate.
///
/// A candidate that defines `entry_point` replaces the prompt's stub (the
/// prompt keeps everything before the stub, e.g. imports and helpers);
/// anything else is treated as the body continuing the prompt.
pub fn assemble_payload(task: &BenchmarkTask, candidate: &str) -> Payload {
    let (normalized, full_definition) = normalize_candidate(candidate, &task.entry_point);
    let prompt = if full_definition {
        match definition_pattern(&task.entry_point).find(&task.prompt) {
            Some(m) => task.prompt[..m.start()].to_string(),
            None => task.prompt.clone(),
        }
    } else {
        task.prompt.clone()
    };
    Payload {
        prompt,
        candidate: normalized,
        test: task.test.clone(),
        entry_point: task.entry_point.clone(),
    }
}
