use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use walkdir::WalkDir;

use super::{Chunk, Corpus, RetrievalError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChunkingParams {
    pub max_lines: usize,
    pub overlap_lines: usize,
}

impl Default for ChunkingParams {
    fn default() -> Self {
        Self { max_lines: 60, overlap_lines: 10 }
    }
}

impl ChunkingParams {
    pub fn validate(&self) -> Result<(), RetrievalError> {
        if self.max_lines == 0 || self.overlap_lines >= self.max_lines {
            return Err(RetrievalError::Chunking { max_lines: self.max_lines, overlap_lines: self.overlap_lines });
        }
        Ok(())
    }
}

/// Fixed line windows of `max_lines` advancing by `max_lines - overlap_lines`.
/// The final window is clipped to the end of the file.
pub fn chunk_code(source_path: &str, text: &str, params: ChunkingParams) -> Vec<Chunk> {
    let lines: Vec<&str> = text.lines().collect();
    let step = params.max_lines - params.overlap_lines;
    let mut chunks = Vec::new();
    let mut start = 0;
    while start < lines.len() {
        let end = (start + params.max_lines).min(lines.len());
        if let Some(c) = Chunk::from_lines(Corpus::Code, source_path, start + 1, &lines[start..end]) {
            chunks.push(c);
        }
        if end == lines.len() {
            break;
        }
        start += step;
    }
    chunks
}

fn is_markdown_heading(line: &str) -> bool {
    let hashes = line.chars().take_while(|&c| c == '#').count();
    (1..=6).contains(&hashes) && line[hashes..].starts_with([' ', '\t'])
}

fn is_rst_underline(line: &str) -> bool {
    let t = line.trim_end();
    let mut chars = t.chars();
    match chars.next() {
        Some(c) if "=-~^\"'`*+#".contains(c) => t.len() >= 3 && chars.all(|x| x == c),
        _ => false,
    }
}

/// Indices (0-based) of lines that begin a new section.
fn section_starts(lines: &[&str]) -> Vec<usize> {
    let mut starts = vec![0];
    for (i, line) in lines.iter().enumerate() {
        let heading_at = if is_markdown_heading(line) {
            Some(i)
        } else if i > 0 && is_rst_underline(line) && !lines[i - 1].trim().is_empty() && !is_rst_underline(lines[i - 1]) {
            Some(i - 1)
        } else {
            None
        };
        if let Some(h) = heading_at {
            if h > *starts.last().expect("non-empty") {
                starts.push(h);
            }
        }
    }
    starts
}

fn push_trimmed(out: &mut Vec<Chunk>, source_path: &str, lines: &[&str], from: usize, to: usize) {
    let mut a = from;
    let mut b = to;
    while a < b && lines[a].trim().is_empty() {
        a += 1;
    }
    while b > a && lines[b - 1].trim().is_empty() {
        b -= 1;
    }
    if let Some(c) = Chunk::from_lines(Corpus::Docs, source_path, a + 1, &lines[a..b]) {
        out.push(c);
    }
}

/// Splits documentation at heading boundaries; sections longer than
/// `max_lines` are packed paragraph by paragraph, and single paragraphs
/// longer than that are cut into `max_lines` windows.
pub fn chunk_document(source_path: &str, text: &str, params: ChunkingParams) -> Vec<Chunk> {
    let lines: Vec<&str> = text.lines().collect();
    let mut starts = section_starts(&lines);
    starts.push(lines.len());
    let mut chunks = Vec::new();
    for window in starts.windows(2) {
        let (from, to) = (window[0], window[1]);
        if to - from <= params.max_lines {
            push_trimmed(&mut chunks, source_path, &lines, from, to);
            continue;
        }
        // Paragraph spans: each runs through its trailing blank lines.
        let mut paragraphs = Vec::new();
        let mut p = from;
        let mut i = from;
        while i < to {
            if lines[i].trim().is_empty() && i + 1 < to && !lines[i + 1].trim().is_empty() {
                paragraphs.push((p, i + 1));
                p = i + 1;
            }
            i += 1;
        }
        paragraphs.push((p, to));

        let mut cur_start = from;
        let mut cur_end = from;
        for (a, b) in paragraphs {
            if b - a > params.max_lines {
                if cur_end > cur_start {
                    push_trimmed(&mut chunks, source_path, &lines, cur_start, cur_end);
                }
                let mut s = a;
                while s < b {
                    let e = (s + params.max_lines).min(b);
                    push_trimmed(&mut chunks, source_path, &lines, s, e);
                    s = e;
                }
                cur_start = b;
                cur_end = b;
            } else if b - cur_start > params.max_lines {
                push_trimmed(&mut chunks, source_path, &lines, cur_start, cur_end);
                cur_start = a;
                cur_end = b;
            } else {
                cur_end = b;
            }
        }
        if cur_end > cur_start {
            push_trimmed(&mut chunks, source_path, &lines, cur_start, cur_end);
        }
    }
    chunks
}

fn default_extensions(kind: Corpus) -> &'static [&'static str] {
    match kind {
        Corpus::Code => &["py"],
        Corpus::Docs => &["md", "rst", "txt"],
    }
}

fn collect_files(root: &Path, extensions: &[&str]) -> Result<Vec<(PathBuf, String)>, RetrievalError> {
    let meta = std::fs::metadata(root).map_err(|source| RetrievalError::Io { path: root.display().to_string(), source })?;
    let base = root.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    if meta.is_file() {
        return Ok(vec![(root.to_path_buf(), base)]);
    }
    let mut files = Vec::new();
    for entry in WalkDir::new(root).sort_by_file_name() {
        let entry = entry.map_err(|e| RetrievalError::Io {
            path: root.display().to_string(),
            source: e.into(),
        })?;
        if !entry.file_type().is_file() {
            continue;
        }
        let ext = entry.path().extension().and_then(|e| e.to_str()).unwrap_or("");
        if !extensions.contains(&ext) {
            continue;
        }
        let rel = entry.path().strip_prefix(root).unwrap_or(entry.path());
        let display = Path::new(&base).join(rel).to_string_lossy().replace('\\', "/");
        files.push((entry.path().to_path_buf(), display));
    }
    Ok(files)
}

/// Reads every matching file under `roots` and chunks it according to `kind`.
pub fn ingest_corpus(
    roots: &[PathBuf],
    kind: Corpus,
    params: ChunkingParams,
    extensions: Option<&[String]>,
) -> Result<Vec<Chunk>, RetrievalError> {
    params.validate()?;
    let owned: Vec<&str> = match extensions {
        Some(list) => list.iter().map(String::as_str).collect(),
        None => default_extensions(kind).to_vec(),
    };
    let mut files = Vec::new();
    for root in roots {
        files.extend(collect_files(root, &owned)?);
    }
    if files.is_empty() {
        let names: Vec<String> = roots.iter().map(|r| r.display().to_string()).collect();
        return Err(RetrievalError::NoFiles(names.join(", ")));
    }
    let mut chunks = Vec::new();
    for (path, display) in files {
        let bytes = std::fs::read(&path).map_err(|source| RetrievalError::Io { path: path.display().to_string(), source })?;
        let text = String::from_utf8_lossy(&bytes);
        match kind {
            Corpus::Code => chunks.extend(chunk_code(&display, &text, params)),
            Corpus::Docs => chunks.extend(chunk_document(&display, &text, params)),
        }
    }
    Ok(chunks)
}
