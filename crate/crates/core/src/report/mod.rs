//! Tables and charts over results files.

mod round;
mod svg;

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::record::RunRecord;
use crate::results::{ResultsError, ResultsFile};
use crate::sandbox::ExecStatus;
use crate::task::Difficulty;

pub use round::{format_pct, format_seconds, round_half_even};
pub use svg::{Chart, Panel};

pub const SUMMARY_CSV_HEADER: [&str; 9] = [
    "model",
    "strategy",
    "pass_at_1_pct",
    "total_time_s",
    "tier_basic_pct",
    "tier_intermediate_pct",
    "tier_advanced_pct",
    "tasks",
    "harness_errors",
];

#[derive(Debug, thiserror::Error)]
pub enum ReportError {
    #[error("no input results files")]
    NoInputs,
    #[error("no output formats requested")]
    NoFormats,
    #[error("baseline pass rate must lie in [0, 1], got {0}")]
    BaselineRange(f64),
    #[error(transparent)]
    Results(#[from] ResultsError),
    #[error("inputs cover different task sets; mismatched task ids: {}", .0.join(", "))]
    MismatchedTasks(Vec<String>),
    #[error("{path}: no records")]
    EmptyInput { path: PathBuf },
    #[error("two inputs share model `{model}` and strategy `{strategy}`; use the consistency report for repeats")]
    DuplicateRow { model: String, strategy: String },
    #[error("records for task(s) {} carry no difficulty tier", .0.join(", "))]
    MissingTier(Vec<String>),
    #[error("need >= 2 runs for a consistency check, got {0}")]
    NeedTwoRuns(usize),
    #[error("config hash mismatch: {first} has {first_hash}, {other} has {other_hash}")]
    ConfigMismatch { first: PathBuf, first_hash: String, other: PathBuf, other_hash: String },
    #[error("unknown output format `{0}` (expected csv, markdown or svg)")]
    UnknownFormat(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    Csv,
    Markdown,
    Svg,
}

impl FromStr for OutputFormat {
    type Err = ReportError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "csv" => Ok(OutputFormat::Csv),
            "markdown" | "md" => Ok(OutputFormat::Markdown),
            "svg" => Ok(OutputFormat::Svg),
            other => Err(ReportError::UnknownFormat(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GroupBy {
    #[default]
    Model,
    Strategy,
    Tier,
}

impl FromStr for GroupBy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "model" => Ok(GroupBy::Model),
            "strategy" => Ok(GroupBy::Strategy),
            "tier" => Ok(GroupBy::Tier),
            other => Err(format!("unknown grouping `{other}` (expected model, strategy or tier)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Baseline {
    pub label: String,
    pub pass_rate: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportSpec {
    pub inputs: Vec<PathBuf>,
    pub group_by: GroupBy,
    pub baseline: Option<Baseline>,
    pub formats: BTreeSet<OutputFormat>,
    pub out_dir: PathBuf,
}

impl ReportSpec {
    pub fn validate(&self) -> Result<(), ReportError> {
        if self.inputs.is_empty() {
            return Err(ReportError::NoInputs);
        }
        if self.formats.is_empty() {
            return Err(ReportError::NoFormats);
        }
        if let Some(b) = &self.baseline {
            if !(0.0..=1.0).contains(&b.pass_rate) {
                return Err(ReportError::BaselineRange(b.pass_rate));
            }
        }
        Ok(())
    }
}

/// One results file loaded for reporting.
#[derive(Debug, Clone)]
pub struct LoadedRun {
    pub path: PathBuf,
    pub file: ResultsFile,
}

pub fn load_runs(inputs: &[PathBuf]) -> Result<Vec<LoadedRun>, ReportError> {
    let mut runs = Vec::with_capacity(inputs.len());
    for path in inputs {
        let file = ResultsFile::read(path)?;
        if file.records.is_empty() {
            return Err(ReportError::EmptyInput { path: path.clone() });
        }
        runs.push(LoadedRun { path: path.clone(), file });
    }
    Ok(runs)
}

/// Errors unless every run covers the same task ids.
pub fn check_same_tasks(runs: &[LoadedRun]) -> Result<(), ReportError> {
    let sets: Vec<BTreeSet<&str>> = runs.iter().map(|r| r.file.records.iter().map(|x| x.task_id.as_str()).collect()).collect();
    let union: BTreeSet<&str> = sets.iter().flatten().copied().collect();
    let mismatched: BTreeSet<&str> = sets.iter().flat_map(|s| union.difference(s).copied()).collect();
    if mismatched.is_empty() {
        Ok(())
    } else {
        Err(ReportError::MismatchedTasks(mismatched.into_iter().map(String::from).collect()))
    }
}

fn pass_rate(records: &[RunRecord]) -> f64 {
    let passes = records.iter().filter(|r| r.final_status == ExecStatus::Pass).count();
    passes as f64 / records.len() as f64
}

/// Pass rate and task count per tier present in the records.
fn tier_rates(records: &[RunRecord]) -> Result<BTreeMap<Difficulty, (f64, usize)>, ReportError> {
    let missing: Vec<String> = records.iter().filter(|r| r.difficulty.is_none()).map(|r| r.task_id.clone()).collect();
    if !missing.is_empty() {
        return Err(ReportError::MissingTier(missing));
    }
    let mut counts: BTreeMap<Difficulty, (usize, usize)> = BTreeMap::new();
    for r in records {
        let slot = counts.entry(r.difficulty.expect("checked")).or_default();
        slot.1 += 1;
        if r.final_status == ExecStatus::Pass {
            slot.0 += 1;
        }
    }
    Ok(counts.into_iter().map(|(d, (p, n))| (d, (p as f64 / n as f64, n))).collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub model: String,
    pub strategy: String,
    pub pass_at_1: f64,
    /// Sum of per-task wall times ("serialized wall time").
    pub total_time_s: f64,
    pub tiers: BTreeMap<Difficulty, f64>,
    pub tasks: usize,
    pub harness_errors: usize,
}

impl SummaryRow {
    pub fn from_run(run: &LoadedRun) -> Self {
        let records = &run.file.records;
        let tiers = tier_rates(records).map(|t| t.into_iter().map(|(d, (r, _))| (d, r)).collect()).unwrap_or_default();
        Self {
            model: run.file.header.model.clone(),
            strategy: run.file.header.strategy.clone(),
            pass_at_1: pass_rate(records),
            total_time_s: records.iter().map(|r| r.wall_time_total).sum(),
            tiers,
            tasks: records.len(),
            harness_errors: records.iter().filter(|r| r.final_status == ExecStatus::HarnessError).count(),
        }
    }

    /// Rendered cells in CSV column order.
    fn cells(&self) -> Vec<String> {
        let tier = |d| self.tiers.get(&d).map(|&r| format_pct(r)).unwrap_or_default();
        vec![
            self.model.clone(),
            self.strategy.clone(),
            format_pct(self.pass_at_1),
            format_seconds(self.total_time_s),
            tier(Difficulty::Basic),
            tier(Difficulty::Intermediate),
            tier(Difficulty::Advanced),
            self.tasks.to_string(),
            self.harness_errors.to_string(),
        ]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryTable {
    pub rows: Vec<SummaryRow>,
    pub baseline: Option<Baseline>,
}

fn baseline_cells(b: &Baseline) -> Vec<String> {
    let mut cells = vec![String::new(); SUMMARY_CSV_HEADER.len()];
    cells[0] = b.label.clone();
    cells[1] = "baseline".into();
    cells[2] = format_pct(b.pass_rate);
    cells
}

fn csv_string(header: &[&str], rows: &[Vec<String>]) -> String {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
    w.write_record(header).expect("in-memory csv");
    for row in rows {
        w.write_record(row).expect("in-memory csv");
    }
    String::from_utf8(w.into_inner().expect("in-memory csv")).expect("utf-8 csv")
}

fn md_cell(s: &str) -> String {
    s.replace('|', "\\|")
}

fn markdown_table(header: &[&str], rows: &[Vec<String>]) -> String {
    let mut out = format!("| {} |\n", header.join(" | "));
    out.push_str(&format!("|{}\n", "---|".repeat(header.len())));
    for row in rows {
        let cells: Vec<String> = row.iter().map(|c| md_cell(c)).collect();
        out.push_str(&format!("| {} |\n", cells.join(" | ")));
    }
    out
}

impl SummaryTable {
    pub fn build(runs: &[LoadedRun], group_by: GroupBy, baseline: Option<Baseline>) -> Result<Self, ReportError> {
        check_same_tasks(runs)?;
        let mut seen = BTreeSet::new();
        let mut rows = Vec::with_capacity(runs.len());
        for run in runs {
            let row = SummaryRow::from_run(run);
            if !seen.insert((row.model.clone(), row.strategy.clone())) {
                return Err(ReportError::DuplicateRow { model: row.model, strategy: row.strategy });
            }
            rows.push(row);
        }
        match group_by {
            GroupBy::Strategy => rows.sort_by(|a, b| (&a.strategy, &a.model).cmp(&(&b.strategy, &b.model))),
            GroupBy::Model | GroupBy::Tier => rows.sort_by(|a, b| (&a.model, &a.strategy).cmp(&(&b.model, &b.strategy))),
        }
        Ok(Self { rows, baseline })
    }

    fn all_cells(&self) -> Vec<Vec<String>> {
        let mut out: Vec<Vec<String>> = self.rows.iter().map(SummaryRow::cells).collect();
        if let Some(b) = &self.baseline {
            out.push(baseline_cells(b));
        }
        out
    }

    pub fn to_csv(&self) -> String {
        csv_string(&SUMMARY_CSV_HEADER, &self.all_cells())
    }

    pub fn to_markdown(&self) -> String {
        let mut out = markdown_table(&SUMMARY_CSV_HEADER, &self.all_cells());
        out.push_str("\nTotal time is the sum of per-task wall times (serialized wall time).\n");
        out
    }

    /// Accuracy panel on top, runtime panel below; one group per model and
    /// one bar series per strategy.
    pub fn to_svg(&self) -> String {
        let groups: Vec<String> = unique(self.rows.iter().map(|r| r.model.clone()));
        let series: Vec<String> = unique(self.rows.iter().map(|r| r.strategy.clone()));
        let lookup = |g: &str, s: &str| self.rows.iter().find(|r| r.model == g && r.strategy == s);
        let grid = |f: &dyn Fn(&SummaryRow) -> f64| -> Vec<Vec<Option<f64>>> {
            groups.iter().map(|g| series.iter().map(|s| lookup(g, s).map(f)).collect()).collect()
        };
        let acc = grid(&|r| round_half_even(r.pass_at_1 * 100.0, 1));
        let time = grid(&|r| round_half_even(r.total_time_s, 0));
        let acc_labels: Vec<Vec<String>> = groups
            .iter()
            .map(|g| series.iter().map(|s| lookup(g, s).map(|r| format_pct(r.pass_at_1)).unwrap_or_default()).collect())
            .collect();
        let time_labels: Vec<Vec<String>> = groups
            .iter()
            .map(|g| series.iter().map(|s| lookup(g, s).map(|r| format_seconds(r.total_time_s)).unwrap_or_default()).collect())
            .collect();
        Chart {
            title: "Pass@1 accuracy and execution time",
            groups,
            series,
            panels: vec![
                Panel {
                    title: "Pass@1 (%)",
                    unit: "",
                    values: acc,
                    y_max: Some(100.0),
                    reference: self.baseline.as_ref().map(|b| (round_half_even(b.pass_rate * 100.0, 1), format!("{} {}", b.label, format_pct(b.pass_rate)))),
                    labels: acc_labels,
                },
                Panel { title: "Total time (s, serialized)", unit: "", values: time, y_max: None, reference: None, labels: time_labels },
            ],
            footnotes: Vec::new(),
        }
        .render()
    }
}

fn unique(items: impl Iterator<Item = String>) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    for i in items {
        if !out.contains(&i) {
            out.push(i);
        }
    }
    out
}

fn write_file(path: &Path, contents: &str) -> Result<PathBuf, ReportError> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|source| ReportError::Io { path: parent.to_path_buf(), source })?;
    }
    std::fs::write(path, contents).map_err(|source| ReportError::Io { path: path.to_path_buf(), source })?;
    Ok(path.to_path_buf())
}

/// Writes `summary.{csv,md,svg}` for the requested formats.
pub fn render_summary(spec: &ReportSpec) -> Result<Vec<PathBuf>, ReportError> {
    spec.validate()?;
    let runs = load_runs(&spec.inputs)?;
    let table = SummaryTable::build(&runs, spec.group_by, spec.baseline.clone())?;
    let mut written = Vec::new();
    for format in &spec.formats {
        let (name, body) = match format {
            OutputFormat::Csv => ("summary.csv", table.to_csv()),
            OutputFormat::Markdown => ("summary.md", table.to_markdown()),
            OutputFormat::Svg => ("summary.svg", table.to_svg()),
        };
        written.push(write_file(&spec.out_dir.join(name), &body)?);
    }
    Ok(written)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TierRow {
    pub model: String,
    pub strategy: String,
    pub tiers: BTreeMap<Difficulty, (f64, usize)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TierTable {
    pub rows: Vec<TierRow>,
    /// Tiers present in at least one input, in basic/intermediate/advanced order.
    pub present: Vec<Difficulty>,
}

impl TierTable {
    pub fn build(runs: &[LoadedRun]) -> Result<Self, ReportError> {
        check_same_tasks(runs)?;
        let mut rows = Vec::with_capacity(runs.len());
        for run in runs {
            rows.push(TierRow {
                model: run.file.header.model.clone(),
                strategy: run.file.header.strategy.clone(),
                tiers: tier_rates(&run.file.records)?,
            });
        }
        rows.sort_by(|a, b| (&a.model, &a.strategy).cmp(&(&b.model, &b.strategy)));
        let present = Difficulty::ALL.into_iter().filter(|d| rows.iter().any(|r| r.tiers.contains_key(d))).collect();
        Ok(Self { rows, present })
    }

    pub fn absent(&self) -> Vec<Difficulty> {
        Difficulty::ALL.into_iter().filter(|d| !self.present.contains(d)).collect()
    }

    fn footnotes(&self) -> Vec<String> {
        self.absent().iter().map(|d| format!("Tier `{}` has no tasks in the suite and is omitted.", d.as_str())).collect()
    }

    pub fn to_csv(&self) -> String {
        let mut rows = Vec::new();
        for r in &self.rows {
            for d in &self.present {
                if let Some((rate, n)) = r.tiers.get(d) {
                    rows.push(vec![r.model.clone(), r.strategy.clone(), d.as_str().to_string(), format_pct(*rate), n.to_string()]);
                }
            }
        }
        csv_string(&["model", "strategy", "tier", "pass_at_1_pct", "tasks"], &rows)
    }

    pub fn to_markdown(&self) -> String {
        let mut header = vec!["model", "strategy"];
        header.extend(self.present.iter().map(|d| d.as_str()));
        let rows: Vec<Vec<String>> = self
            .rows
            .iter()
            .map(|r| {
                let mut cells = vec![r.model.clone(), r.strategy.clone()];
                cells.extend(self.present.iter().map(|d| r.tiers.get(d).map(|(rate, _)| format_pct(*rate)).unwrap_or_default()));
                cells
            })
            .collect();
        let mut out = markdown_table(&header, &rows);
        for note in self.footnotes() {
            out.push_str(&format!("\n{note}\n"));
        }
        out
    }

    /// One group per tier, one bar series per (model, strategy).
    pub fn to_svg(&self) -> String {
        let series: Vec<String> = self.rows.iter().map(|r| format!("{} / {}", r.model, r.strategy)).collect();
        let values = self
            .present
            .iter()
            .map(|d| self.rows.iter().map(|r| r.tiers.get(d).map(|(rate, _)| round_half_even(rate * 100.0, 1))).collect())
            .collect();
        let labels = self
            .present
            .iter()
            .map(|d| self.rows.iter().map(|r| r.tiers.get(d).map(|(rate, _)| format_pct(*rate)).unwrap_or_default()).collect())
            .collect();
        Chart {
            title: "Pass@1 accuracy by difficulty tier",
            groups: self.present.iter().map(|d| d.as_str().to_string()).collect(),
            series,
            panels: vec![Panel { title: "Pass@1 (%)", unit: "", values, y_max: Some(100.0), reference: None, labels }],
            footnotes: self.footnotes(),
        }
        .render()
    }
}

/// Writes `tiers.{csv,md,svg}` for the requested formats.
pub fn render_tier_breakdown(spec: &ReportSpec) -> Result<Vec<PathBuf>, ReportError> {
    spec.validate()?;
    let runs = load_runs(&spec.inputs)?;
    let table = TierTable::build(&runs)?;
    let mut written = Vec::new();
    for format in &spec.formats {
        let (name, body) = match format {
            OutputFormat::Csv => ("tiers.csv", table.to_csv()),
            OutputFormat::Markdown => ("tiers.md", table.to_markdown()),
            OutputFormat::Svg => ("tiers.svg", table.to_svg()),
        };
        written.push(write_file(&spec.out_dir.join(name), &body)?);
    }
    Ok(written)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConsistencyReport {
    pub runs: Vec<(PathBuf, f64)>,
    pub min: f64,
    pub max: f64,
    pub mean: f64,
    pub spread: f64,
    /// Tasks whose pass/fail outcome differs between runs.
    pub disagreements: Vec<String>,
    /// Whether all runs match record for record once timing fields are zeroed.
    pub identical_modulo_timing: bool,
}

impl ConsistencyReport {
    pub fn to_markdown(&self) -> String {
        let rows: Vec<Vec<String>> = self
            .runs
            .iter()
            .map(|(p, rate)| vec![p.display().to_string(), format_pct(*rate)])
            .collect();
        let mut out = markdown_table(&["run", "pass_at_1_pct"], &rows);
        out.push_str(&format!(
            "\nmin {} / max {} / mean {} / spread {:.4}\n",
            format_pct(self.min),
            format_pct(self.max),
            format_pct(self.mean),
            self.spread
        ));
        if self.disagreements.is_empty() {
            out.push_str("\nNo per-task disagreements.\n");
        } else {
            out.push_str(&format!("\nDisagreeing tasks ({}): {}\n", self.disagreements.len(), self.disagreements.join(", ")));
        }
        out.push_str(&format!("\nIdentical modulo timing: {}\n", if self.identical_modulo_timing { "yes" } else { "no" }));
        out
    }
}

/// Spread of pass@1 across repeats of one configuration.
pub fn consistency_check(run_files: &[PathBuf]) -> Result<ConsistencyReport, ReportError> {
    if run_files.len() < 2 {
        return Err(ReportError::NeedTwoRuns(run_files.len()));
    }
    let runs = load_runs(run_files)?;
    let first = &runs[0];
    for other in &runs[1..] {
        if other.file.header.config_hash != first.file.header.config_hash {
            return Err(ReportError::ConfigMismatch {
                first: first.path.clone(),
                first_hash: first.file.header.config_hash.clone(),
                other: other.path.clone(),
                other_hash: other.file.header.config_hash.clone(),
            });
        }
    }
    check_same_tasks(&runs)?;
    let rates: Vec<f64> = runs.iter().map(|r| pass_rate(&r.file.records)).collect();
    let min = rates.iter().copied().fold(f64::INFINITY, f64::min);
    let max = rates.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mean = rates.iter().sum::<f64>() / rates.len() as f64;

    let mut outcomes: BTreeMap<&str, BTreeSet<bool>> = BTreeMap::new();
    for run in &runs {
        for r in &run.file.records {
            outcomes.entry(r.task_id.as_str()).or_default().insert(r.passed());
        }
    }
    let disagreements = outcomes.into_iter().filter(|(_, s)| s.len() > 1).map(|(t, _)| t.to_string()).collect();

    let normalized = |run: &LoadedRun| -> Vec<RunRecord> {
        let mut v: Vec<RunRecord> = run.file.records.iter().map(RunRecord::without_timing).collect();
        v.sort_by(|a, b| a.task_id.cmp(&b.task_id));
        v
    };
    let reference = normalized(first);
    let identical_modulo_timing = runs[1..].iter().all(|r| r.file.header == first.file.header && normalized(r) == reference);

    Ok(ConsistencyReport {
        runs: runs.iter().map(|r| r.path.clone()).zip(rates).collect(),
        min,
        max,
        mean,
        spread: max - min,
        disagreements,
        identical_modulo_timing,
    })
}

/// One cell of a retrieval ablation sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub corpora: String,
    pub cascade: String,
    pub depth_k: usize,
    pub pass_at_1: f64,
    pub total_time_s: f64,
    pub tasks: usize,
    pub harness_errors: usize,
}

pub fn ablation_csv(rows: &[AblationRow]) -> String {
    let cells: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                r.corpora.clone(),
                r.cascade.clone(),
                r.depth_k.to_string(),
                format_pct(r.pass_at_1),
                format_seconds(r.total_time_s),
                r.tasks.to_string(),
                r.harness_errors.to_string(),
            ]
        })
        .collect();
    csv_string(&["corpora", "cascade", "depth_k", "pass_at_1_pct", "total_time_s", "tasks", "harness_errors"], &cells)
}

impl AblationRow {
    pub fn from_records(corpora: String, cascade: String, depth_k: usize, records: &[RunRecord]) -> Self {
        Self {
            corpora,
            cascade,
            depth_k,
            pass_at_1: if records.is_empty() { 0.0 } else { pass_rate(records) },
            total_time_s: records.iter().map(|r| r.wall_time_total).sum(),
            tasks: records.len(),
            harness_errors: records.iter().filter(|r| r.final_status == ExecStatus::HarnessError).count(),
        }
    }
}
