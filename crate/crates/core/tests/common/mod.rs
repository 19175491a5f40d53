#![allow(dead_code)]

use std::collections::HashSet;
use std::path::PathBuf;
use std::sync::{Arc, Mutex};

use coderag_core::gateway::{
    Gateway, GatewayError, GenerationRequest, MockProvider, MockRule, MockScript, Provider, ProviderOutput, RetryPolicy,
};
use coderag_core::results::evaluate_suite;
use coderag_core::sandbox::SandboxPool;
use coderag_core::strategy::{AgentConfig, Strategy, StrategyRunner};
use coderag_core::{BenchmarkTask, Difficulty, RunRecord, SandboxConfig, TaskSuite};

pub const TASKS: usize = 12;
pub const PASS_ZERO_SHOT: std::ops::Range<usize> = 0..5;
pub const PASS_AFTER_REPAIR: std::ops::Range<usize> = 5..8;
pub const NEVER_PASS: std::ops::Range<usize> = 8..12;

pub fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

pub fn task_id(i: usize) -> String {
    format!("arith/{i}")
}

fn entry(i: usize) -> String {
    format!("combine_{i}")
}

fn expected(i: usize, a: i64, b: i64) -> i64 {
    let i = i as i64;
    a * (i + 2) + b * (i + 3) - i
}

pub fn arithmetic_task(i: usize) -> BenchmarkTask {
    let name = entry(i);
    let difficulty = match i % 3 {
        0 => Difficulty::Basic,
        1 => Difficulty::Intermediate,
        _ => Difficulty::Advanced,
    };
    let asserts: String = [(1, 2), (5, -3), (0, 0), (-4, 7)]
        .iter()
        .map(|&(a, b)| format!("    assert candidate({a}, {b}) == {}\n", expected(i, a, b)))
        .collect();
    BenchmarkTask {
        task_id: task_id(i),
        prompt: format!("def {name}(a, b):\n    \"\"\"Weighted sum of a and b, variant {i}.\"\"\"\n"),
        canonical_solution: format!("    scaled_total = a * {} + b * {}\n    return scaled_total - {i}\n", i + 2, i + 3),
        test: format!("def check(candidate):\n{asserts}"),
        entry_point: name,
        difficulty,
    }
}

pub fn arithmetic_suite() -> TaskSuite {
    TaskSuite::new((0..TASKS).map(arithmetic_task).collect()).unwrap()
}

/// A correct completion written differently from the canonical solution.
pub fn correct_completion(i: usize) -> String {
    format!("```python\ndef {}(a, b):\n    return {} * a + {} * b - {i}\n```", entry(i), i + 2, i + 3)
}

pub fn wrong_completion(i: usize) -> String {
    format!("def {}(a, b):\n    return a - b\n", entry(i))
}

/// Planted error class and a completion raising it.
pub fn planted(i: usize) -> (&'static str, String) {
    let name = entry(i);
    match i % 3 {
        0 => ("NameError", format!("def {name}(a, b):\n    return undefined_helper(a, b)\n")),
        1 => ("ZeroDivisionError", format!("def {name}(a, b):\n    return (a + b) // 0\n")),
        _ => ("TypeError", format!("def {name}(a, b):\n    return a + None\n")),
    }
}

/// Script for the 12-task suite: 5 pass at once, 3 pass only once the
/// feedback names their planted error, 4 never pass.
pub fn scripted_mock() -> MockScript {
    let mut script = MockScript::default();
    for i in PASS_ZERO_SHOT {
        script = script.with_rule(rule(i, None, correct_completion(i)));
    }
    for i in PASS_AFTER_REPAIR {
        let (class, buggy) = planted(i);
        script = script.with_rule(rule(i, Some(class), correct_completion(i)));
        script = script.with_rule(rule(i, None, buggy));
    }
    for i in NEVER_PASS {
        script = script.with_rule(rule(i, None, wrong_completion(i)));
    }
    script
}

fn rule(i: usize, feedback: Option<&str>, completion: String) -> MockRule {
    MockRule {
        task_id: Some(task_id(i)),
        feedback_contains: feedback.map(String::from),
        completion,
        ..MockRule::default()
    }
}

/// Wraps the mock provider and keeps every request it sees.
pub struct RecordingProvider {
    inner: MockProvider,
    pub requests: Mutex<Vec<GenerationRequest>>,
}

impl RecordingProvider {
    pub fn new(script: MockScript) -> Arc<Self> {
        Arc::new(Self { inner: MockProvider::new(script), requests: Mutex::new(Vec::new()) })
    }

    pub fn requests(&self) -> Vec<GenerationRequest> {
        self.requests.lock().unwrap().clone()
    }
}

impl Provider for RecordingProvider {
    fn name(&self) -> &str {
        "mock"
    }

    fn generate(&self, model: &str, request: &GenerationRequest) -> Result<ProviderOutput, GatewayError> {
        self.requests.lock().unwrap().push(request.clone());
        self.inner.generate(model, request)
    }
}

pub fn gateway_with(provider: Arc<dyn Provider>) -> Gateway {
    Gateway::new(RetryPolicy::none()).register(provider)
}

pub fn sandbox() -> SandboxConfig {
    SandboxConfig::default().with_timeout(20.0)
}

pub fn agent_config(max_repairs: u32) -> AgentConfig {
    let mut cfg = AgentConfig::new("mock:gen");
    cfg.max_repairs = max_repairs;
    cfg.sandbox = sandbox();
    cfg
}

/// Evaluates the whole suite and returns the records in suite order.
pub fn run_suite(gateway: &Gateway, suite: &TaskSuite, strategy: Strategy, cfg: &AgentConfig) -> Vec<RunRecord> {
    let pool = SandboxPool::new(cfg.sandbox.clone(), Some(2));
    let runner = StrategyRunner::new(gateway, &pool);
    let mut out = Vec::new();
    evaluate_suite(&runner, suite, strategy, cfg, 2, &HashSet::new(), |r| {
        out.push(r);
        Ok(())
    })
    .expect("preflight")
    .expect("sink");
    out
}

/// Every substring of length `window` of `text`, by characters.
fn windows(text: &str, window: usize) -> Vec<String> {
    let chars: Vec<char> = text.chars().collect();
    if chars.len() < window {
        return Vec::new();
    }
    chars.windows(window).map(|w| w.iter().collect()).collect()
}

/// First length-20 substring of a task's canonical solution or test that
/// appears in any message of `request`.
pub fn leaked_window(task: &BenchmarkTask, request: &GenerationRequest) -> Option<String> {
    let refs = [&task.canonical_solution, &task.test];
    refs.iter().flat_map(|r| windows(r, 20)).find(|w| request.messages.iter().any(|m| m.content.contains(w.as_str())))
}

/// `true` when any python process in our session carries `marker` on its
/// command line.
pub fn process_with_marker(marker: &str) -> bool {
    let Ok(entries) = std::fs::read_dir("/proc") else { return false };
    for entry in entries.flatten() {
        let name = entry.file_name();
        if !name.to_string_lossy().chars().all(|c| c.is_ascii_digit()) {
            continue;
        }
        let Ok(cmdline) = std::fs::read(entry.path().join("cmdline")) else { continue };
        if String::from_utf8_lossy(&cmdline).contains(marker) {
            return true;
        }
    }
    false
}

pub const DOC_MARKER: &str = "WEIGHTED-SUM-RECIPE";

/// A self-contained run directory: suite, mock script, small corpora and a
/// `run.toml` using the hash embedder.
pub struct Workspace {
    pub dir: tempfile::TempDir,
    pub config: PathBuf,
}

impl Workspace {
    pub fn path(&self, rel: &str) -> PathBuf {
        self.dir.path().join(rel)
    }
}

pub fn write_corpora(root: &std::path::Path) {
    let docs = root.join("docs");
    let code = root.join("code");
    std::fs::create_dir_all(&docs).unwrap();
    std::fs::create_dir_all(&code).unwrap();
    std::fs::write(
        docs.join("weighted.md"),
        format!(
            "# Weighted sums\n\n{DOC_MARKER}: multiply each input by its weight and subtract the offset.\n\
             A weighted sum of a and b combines both inputs.\n\n## Offsets\n\nThe offset equals the variant number.\n"
        ),
    )
    .unwrap();
    std::fs::write(
        docs.join("unrelated.md"),
        "# Circuits\n\nA register holds qubits. Measurement maps qubits to classical bits.\n\n## Gates\n\nHadamard and CNOT gates.\n",
    )
    .unwrap();
    std::fs::write(
        code.join("helpers.py"),
        "def scale(x, w):\n    return x * w\n\n\ndef offset(total, i):\n    return total - i\n",
    )
    .unwrap();
    // Planted near-copy of task 0's reference body; the leakage filter must drop it.
    std::fs::write(code.join("fragment.py"), arithmetic_task(0).canonical_solution).unwrap();
}

pub fn workspace(strategy: &str, max_repairs: u32, retrieval: bool, script: &MockScript, top_extra: &str) -> Workspace {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    let suite = arithmetic_suite();
    let mut buf = Vec::new();
    coderag_core::task::write_tasks(&mut buf, suite.tasks()).unwrap();
    std::fs::write(root.join("suite.jsonl"), buf).unwrap();
    std::fs::write(root.join("mock.json"), serde_json::to_string_pretty(script).unwrap()).unwrap();
    write_corpora(root);
    let retrieval_section = if retrieval {
        "[retrieval]\ncorpora = [\"docs\", \"code\"]\ndepth_k = 4\ncascade = [\"dense\", \"bm25\"]\nfusion = { w_dense = 2.0, w_sparse = 1.0 }\n"
    } else {
        ""
    };
    let text = format!(
        "suite_path = \"suite.jsonl\"\nstrategy = \"{strategy}\"\noutput_path = \"out/run.jsonl\"\nindex_dir = \"index\"\n\
         embedder = \"hash-64\"\nconcurrency = 2\n{top_extra}\n\n[agent]\nmax_repairs = {max_repairs}\ngenerator_model = \"mock:gen\"\n\n\
         [sandbox]\ntimeout = 20\n\n[gateway]\nmock_script = \"mock.json\"\n\n[corpora]\ndocs = [\"docs\"]\ncode = [\"code\"]\n\n{retrieval_section}"
    );
    let config = root.join("run.toml");
    std::fs::write(&config, text).unwrap();
    Workspace { dir, config }
}

/// Results file text with every timing field zeroed.
pub fn strip_timing(text: &str) -> String {
    let re = regex::Regex::new(r#""(wall_time_total|wall_time|latency)":-?[0-9.eE+-]+"#).unwrap();
    re.replace_all(text, "\"$1\":0").into_owned()
}
