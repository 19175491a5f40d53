//! Line-delimited results files and concurrent suite evaluation.
//!
//! The first line is a header object `{"results_header": {...}}`; every
//! following line is one `RunRecord`. Files are append-only so an
//! interrupted run can be resumed.

use std::collections::{BTreeMap, HashSet};
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::mpsc;

use serde::{Deserialize, Serialize};

use crate::record::RunRecord;
use crate::strategy::{AgentConfig, Strategy, StrategyError, StrategyRunner};
use crate::task::TaskSuite;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResultsHeader {
    pub config_hash: String,
    pub suite_hash: String,
    pub harness_version: String,
    pub strategy: String,
    pub model: String,
}

#[derive(Serialize, Deserialize)]
struct HeaderLine {
    results_header: ResultsHeader,
}

#[derive(Debug, thiserror::Error)]
pub enum ResultsError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: missing or malformed header line")]
    MissingHeader { path: PathBuf },
    #[error("{path}:{line}: malformed record: {message}")]
    Malformed { path: PathBuf, line: usize, message: String },
    #[error("{path}: cannot resume, {field} differs (file {found}, run {expected})")]
    HeaderMismatch { path: PathBuf, field: &'static str, found: String, expected: String },
    #[error("{path}: duplicate record for task {task_id}")]
    Duplicate { path: PathBuf, task_id: String },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ResultsError + '_ {
    move |source| ResultsError::Io { path: path.to_path_buf(), source }
}

/// Contents of a results file. `truncated_tail` marks a partially written
/// final line, left behind by an interrupted run and ignored here.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultsFile {
    pub header: ResultsHeader,
    pub records: Vec<RunRecord>,
    pub truncated_tail: bool,
    valid_len: u64,
}

impl ResultsFile {
    pub fn read(path: &Path) -> Result<Self, ResultsError> {
        let file = File::open(path).map_err(io_err(path))?;
        let mut reader = BufReader::new(file);
        let mut header: Option<ResultsHeader> = None;
        let mut records = Vec::new();
        let mut seen = HashSet::new();
        let mut valid_len = 0u64;
        let mut truncated_tail = false;
        let mut line_no = 0;
        let mut buf = String::new();
        loop {
            buf.clear();
            let n = reader.read_line(&mut buf).map_err(io_err(path))?;
            if n == 0 {
                break;
            }
            line_no += 1;
            let text = buf.trim_end();
            if !buf.ends_with('\n') {
                if header.is_none() {
                    return Err(ResultsError::MissingHeader { path: path.to_path_buf() });
                }
                truncated_tail = true;
                break;
            }
            if header.is_none() {
                let h: HeaderLine = serde_json::from_str(text)
                    .map_err(|_| ResultsError::MissingHeader { path: path.to_path_buf() })?;
                header = Some(h.results_header);
            } else if !text.is_empty() {
                let r: RunRecord = serde_json::from_str(text).map_err(|e| ResultsError::Malformed {
                    path: path.to_path_buf(),
                    line: line_no,
                    message: e.to_string(),
                })?;
                if !seen.insert(r.task_id.clone()) {
                    return Err(ResultsError::Duplicate { path: path.to_path_buf(), task_id: r.task_id });
                }
                records.push(r);
            }
            valid_len += n as u64;
        }
        let header = header.ok_or_else(|| ResultsError::MissingHeader { path: path.to_path_buf() })?;
        Ok(Self { header, records, truncated_tail, valid_len })
    }

    pub fn task_ids(&self) -> HashSet<&str> {
        self.records.iter().map(|r| r.task_id.as_str()).collect()
    }
}

/// Append-only writer for one results file.
pub struct ResultsWriter {
    path: PathBuf,
    out: BufWriter<File>,
}

impl ResultsWriter {
    /// Creates (or replaces) the file and writes the header.
    pub fn create(path: &Path, header: &ResultsHeader) -> Result<Self, ResultsError> {
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            std::fs::create_dir_all(parent).map_err(io_err(path))?;
        }
        let file = File::create(path).map_err(io_err(path))?;
        let mut w = Self { path: path.to_path_buf(), out: BufWriter::new(file) };
        let line = serde_json::to_string(&HeaderLine { results_header: header.clone() }).expect("header serializes");
        w.write_line(&line)?;
        Ok(w)
    }

    /// Reopens an existing file for appending after checking that it was
    /// produced by the same configuration and suite. Returns the task ids
    /// already recorded. A partial trailing line is cut off first.
    pub fn resume(path: &Path, header: &ResultsHeader) -> Result<(Self, HashSet<String>), ResultsError> {
        if !path.exists() {
            return Ok((Self::create(path, header)?, HashSet::new()));
        }
        let existing = ResultsFile::read(path)?;
        let mismatch = |field: &'static str, found: &str, expected: &str| ResultsError::HeaderMismatch {
            path: path.to_path_buf(),
            field,
            found: found.to_string(),
            expected: expected.to_string(),
        };
        if existing.header.config_hash != header.config_hash {
            return Err(mismatch("config_hash", &existing.header.config_hash, &header.config_hash));
        }
        if existing.header.suite_hash != header.suite_hash {
            return Err(mismatch("suite_hash", &existing.header.suite_hash, &header.suite_hash));
        }
        let mut file = OpenOptions::new().read(true).write(true).open(path).map_err(io_err(path))?;
        file.set_len(existing.valid_len).map_err(io_err(path))?;
        file.seek(SeekFrom::End(0)).map_err(io_err(path))?;
        let done = existing.records.into_iter().map(|r| r.task_id).collect();
        Ok((Self { path: path.to_path_buf(), out: BufWriter::new(file) }, done))
    }

    fn write_line(&mut self, line: &str) -> Result<(), ResultsError> {
        let path = self.path.clone();
        writeln!(self.out, "{line}").and_then(|_| self.out.flush()).map_err(io_err(&path))
    }

    pub fn append(&mut self, record: &RunRecord) -> Result<(), ResultsError> {
        let line = serde_json::to_string(record).expect("record serializes");
        self.write_line(&line)
    }

    pub fn path(&self) -> &Path {
        &self.path
    }
}

/// Path of repeat `i` (1-based) for a base output path: `run.jsonl` →
/// `run.rep2.jsonl`. A single repeat keeps the base path.
pub fn repeat_path(base: &Path, repeat: u32, repeats: u32) -> PathBuf {
    if repeats <= 1 {
        return base.to_path_buf();
    }
    let stem = base.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "results".into());
    let name = match base.extension() {
        Some(ext) => format!("{stem}.rep{repeat}.{}", ext.to_string_lossy()),
        None => format!("{stem}.rep{repeat}"),
    };
    base.with_file_name(name)
}

/// Releases items in index order regardless of completion order.
#[derive(Debug)]
pub struct ReorderBuffer<T> {
    next: usize,
    pending: BTreeMap<usize, T>,
}

impl<T> Default for ReorderBuffer<T> {
    fn default() -> Self {
        Self { next: 0, pending: BTreeMap::new() }
    }
}

impl<T> ReorderBuffer<T> {
    pub fn push(&mut self, index: usize, item: T) -> Vec<T> {
        self.pending.insert(index, item);
        let mut ready = Vec::new();
        while let Some(item) = self.pending.remove(&self.next) {
            ready.push(item);
            self.next += 1;
        }
        ready
    }

    pub fn is_drained(&self) -> bool {
        self.pending.is_empty()
    }
}

/// Runs every task of `suite` not in `skip`, `concurrency` tasks at a time.
/// Records reach `sink` in suite order as soon as their predecessors are done.
pub fn evaluate_suite(
    runner: &StrategyRunner<'_>,
    suite: &TaskSuite,
    strategy: Strategy,
    cfg: &AgentConfig,
    concurrency: usize,
    skip: &HashSet<String>,
    mut sink: impl FnMut(RunRecord) -> Result<(), ResultsError>,
) -> Result<Result<usize, ResultsError>, StrategyError> {
    runner.preflight(strategy, cfg)?;
    let todo: Vec<_> = suite.iter().filter(|t| !skip.contains(&t.task_id)).collect();
    let next_job = AtomicUsize::new(0);
    let workers = concurrency.clamp(1, todo.len().max(1));
    let outcome = std::thread::scope(|scope| {
        let (tx, rx) = mpsc::channel::<(usize, RunRecord)>();
        for _ in 0..workers {
            let tx = tx.clone();
            let (todo, next_job) = (&todo, &next_job);
            scope.spawn(move || loop {
                let i = next_job.fetch_add(1, Ordering::SeqCst);
                let Some(task) = todo.get(i) else { break };
                let record = runner.run_unchecked(strategy, task, cfg);
                tracing::info!(task = %record.task_id, status = record.final_status.as_str(), executions = record.executions_count, "task finished");
                if tx.send((i, record)).is_err() {
                    break;
                }
            });
        }
        drop(tx);
        let mut buffer = ReorderBuffer::default();
        let mut written = 0;
        for (i, record) in rx {
            for ready in buffer.push(i, record) {
                if let Err(e) = sink(ready) {
                    // Stop handing out work; running tasks finish and are dropped.
                    next_job.store(usize::MAX / 2, Ordering::SeqCst);
                    return Err(e);
                }
                written += 1;
            }
        }
        debug_assert!(buffer.is_drained());
        Ok(written)
    });
    Ok(outcome)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sandbox::ExecStatus;

    fn header() -> ResultsHeader {
        ResultsHeader {
            config_hash: "c1".into(),
            suite_hash: "s1".into(),
            harness_version: "0.1.0".into(),
            strategy: "zero_shot".into(),
            model: "mock:m".into(),
        }
    }

    fn record(id: &str) -> RunRecord {
        RunRecord {
            task_id: id.into(),
            strategy: "zero_shot".into(),
            difficulty: None,
            attempts: vec![],
            final_status: ExecStatus::HarnessError,
            executions_count: 0,
            wall_time_total: 0.0,
            tokens_total: 0,
            retrieval_chunk_ids: None,
            retrieval_empty: false,
            error: Some("x".into()),
        }
    }

    #[test]
    fn write_read_resume() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("out/run.jsonl");
        let mut w = ResultsWriter::create(&path, &header()).unwrap();
        w.append(&record("a")).unwrap();
        w.append(&record("b")).unwrap();
        drop(w);
        // simulate a crash mid-line
        let mut f = OpenOptions::new().append(true).open(&path).unwrap();
        write!(f, "{{\"task_id\":\"c\",\"stra").unwrap();
        drop(f);

        let read = ResultsFile::read(&path).unwrap();
        assert!(read.truncated_tail);
        assert_eq!(read.records.len(), 2);

        let (mut w, done) = ResultsWriter::resume(&path, &header()).unwrap();
        assert_eq!(done, HashSet::from(["a".to_string(), "b".to_string()]));
        w.append(&record("c")).unwrap();
        drop(w);
        let read = ResultsFile::read(&path).unwrap();
        assert!(!read.truncated_tail);
        let ids: Vec<&str> = read.records.iter().map(|r| r.task_id.as_str()).collect();
        assert_eq!(ids, ["a", "b", "c"]);
    }

    #[test]
    fn resume_rejects_other_config() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.jsonl");
        ResultsWriter::create(&path, &header()).unwrap();
        let other = ResultsHeader { config_hash: "c2".into(), ..header() };
        assert!(matches!(ResultsWriter::resume(&path, &other), Err(ResultsError::HeaderMismatch { field: "config_hash", .. })));
    }

    #[test]
    fn duplicates_and_headerless_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.jsonl");
        let mut w = ResultsWriter::create(&path, &header()).unwrap();
        w.append(&record("a")).unwrap();
        w.append(&record("a")).unwrap();
        drop(w);
        assert!(matches!(ResultsFile::read(&path), Err(ResultsError::Duplicate { .. })));
        std::fs::write(&path, serde_json::to_string(&record("a")).unwrap() + "\n").unwrap();
        assert!(matches!(ResultsFile::read(&path), Err(ResultsError::MissingHeader { .. })));
    }

    #[test]
    fn repeat_paths() {
        let base = Path::new("/r/run.jsonl");
        assert_eq!(repeat_path(base, 1, 1), base);
        assert_eq!(repeat_path(base, 3, 5), Path::new("/r/run.rep3.jsonl"));
        assert_eq!(repeat_path(Path::new("out"), 2, 2), Path::new("out.rep2"));
    }

    #[test]
    fn reorder_buffer_releases_in_order() {
        let mut b = ReorderBuffer::default();
        assert!(b.push(2, 'c').is_empty());
        assert!(b.push(1, 'b').is_empty());
        assert_eq!(b.push(0, 'a'), vec!['a', 'b', 'c']);
        assert_eq!(b.push(3, 'd'), vec!['d']);
        assert!(b.is_drained());
    }
}
