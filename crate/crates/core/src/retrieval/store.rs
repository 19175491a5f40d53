//! On-disk layout of an index directory.
//!
//! ```text
//! <corpus>.chunks.jsonl                       chunk store, one Chunk per line
//! <corpus>.dense.<embedder>.manifest.json     embedder id, dim, chunking, corpus hash
//! <corpus>.dense.<embedder>.vectors.f32       little-endian f32, row-major
//! <corpus>.bm25.jsonl                         header line, then one postings record per term
//! ```

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{Bm25Index, Bm25Params, Chunk, ChunkingParams, Corpus, CorpusIndex, DenseIndex, Metric, RetrievalError};

const FORMAT_VERSION: u32 = 1;

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> RetrievalError + '_ {
    move |source| RetrievalError::Io { path: path.display().to_string(), source }
}

fn corrupt(path: &Path, message: impl Into<String>) -> RetrievalError {
    RetrievalError::Corrupt { path: path.display().to_string(), message: message.into() }
}

pub fn write_chunks(path: &Path, chunks: &[Chunk]) -> Result<(), RetrievalError> {
    let file = std::fs::File::create(path).map_err(io_err(path))?;
    let mut out = BufWriter::new(file);
    for chunk in chunks {
        serde_json::to_writer(&mut out, chunk).map_err(|e| corrupt(path, e.to_string()))?;
        out.write_all(b"\n").map_err(io_err(path))?;
    }
    out.flush().map_err(io_err(path))
}

pub fn read_chunks(path: &Path) -> Result<Vec<Chunk>, RetrievalError> {
    let file = std::fs::File::open(path).map_err(io_err(path))?;
    let mut chunks = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        chunks.push(serde_json::from_str(&line).map_err(|e| corrupt(path, format!("line {}: {e}", i + 1)))?);
    }
    Ok(chunks)
}

/// SHA-256 over the chunk store serialization.
pub fn corpus_hash(chunks: &[Chunk]) -> String {
    let mut h = Sha256::new();
    for c in chunks {
        h.update(serde_json::to_vec(c).expect("chunk serializes"));
        h.update(b"\n");
    }
    hex::encode(h.finalize())
}

fn slug(id: &str) -> String {
    id.chars().map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '.' { c } else { '_' }).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct DenseManifest {
    format_version: u32,
    embedder_id: String,
    metric: Metric,
    dim: usize,
    count: usize,
    chunking: Option<ChunkingParams>,
    corpus: Corpus,
    corpus_hash: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Bm25Header {
    format_version: u32,
    k1: f64,
    b: f64,
    corpus_hash: String,
    chunk_ids: Vec<String>,
    doc_lengths: Vec<u32>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct PostingsRecord {
    term: String,
    postings: Vec<(u32, u32)>,
}

/// A directory holding chunk stores and indexes for any number of corpora.
#[derive(Debug, Clone)]
pub struct IndexDir {
    root: PathBuf,
}

impl IndexDir {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn create(&self) -> Result<(), RetrievalError> {
        std::fs::create_dir_all(&self.root).map_err(io_err(&self.root))
    }

    pub fn chunks_path(&self, corpus: Corpus) -> PathBuf {
        self.root.join(format!("{corpus}.chunks.jsonl"))
    }

    pub fn dense_manifest_path(&self, corpus: Corpus, embedder_id: &str) -> PathBuf {
        self.root.join(format!("{corpus}.dense.{}.manifest.json", slug(embedder_id)))
    }

    pub fn dense_vectors_path(&self, corpus: Corpus, embedder_id: &str) -> PathBuf {
        self.root.join(format!("{corpus}.dense.{}.vectors.f32", slug(embedder_id)))
    }

    pub fn bm25_path(&self, corpus: Corpus) -> PathBuf {
        self.root.join(format!("{corpus}.bm25.jsonl"))
    }

    pub fn save_chunks(&self, corpus: Corpus, chunks: &[Chunk]) -> Result<(), RetrievalError> {
        self.create()?;
        write_chunks(&self.chunks_path(corpus), chunks)
    }

    pub fn load_chunks(&self, corpus: Corpus) -> Result<Vec<Chunk>, RetrievalError> {
        let path = self.chunks_path(corpus);
        if !path.exists() {
            return Err(RetrievalError::MissingIndex { corpus, kind: "chunk store" });
        }
        read_chunks(&path)
    }

    pub fn save_dense(
        &self,
        corpus: Corpus,
        index: &DenseIndex<f32>,
        metric: Metric,
        chunking: Option<ChunkingParams>,
    ) -> Result<(), RetrievalError> {
        self.create()?;
        let chunks: Vec<Chunk> = index.chunks().iter().map(|c| (**c).clone()).collect();
        let manifest = DenseManifest {
            format_version: FORMAT_VERSION,
            embedder_id: index.embedder_id().to_string(),
            metric,
            dim: index.dim(),
            count: index.len(),
            chunking,
            corpus,
            corpus_hash: corpus_hash(&chunks),
        };
        let mpath = self.dense_manifest_path(corpus, index.embedder_id());
        let json = serde_json::to_string_pretty(&manifest).map_err(|e| corrupt(&mpath, e.to_string()))?;
        std::fs::write(&mpath, json).map_err(io_err(&mpath))?;
        let vpath = self.dense_vectors_path(corpus, index.embedder_id());
        let mut blob = Vec::with_capacity(index.raw_vectors().len() * 4);
        for x in index.raw_vectors() {
            blob.extend_from_slice(&x.to_le_bytes());
        }
        std::fs::write(&vpath, blob).map_err(io_err(&vpath))
    }

    /// Loads the dense index built with `embedder_id`; indexes built with other
    /// embedders live in different files and are never returned.
    pub fn load_dense(&self, corpus: Corpus, embedder_id: &str) -> Result<DenseIndex<f32>, RetrievalError> {
        let mpath = self.dense_manifest_path(corpus, embedder_id);
        if !mpath.exists() {
            return Err(RetrievalError::MissingIndex { corpus, kind: "dense" });
        }
        let text = std::fs::read_to_string(&mpath).map_err(io_err(&mpath))?;
        let manifest: DenseManifest = serde_json::from_str(&text).map_err(|e| corrupt(&mpath, e.to_string()))?;
        if manifest.embedder_id != embedder_id {
            return Err(RetrievalError::EmbedderMismatch { index: manifest.embedder_id, query: embedder_id.into() });
        }
        let chunks = self.load_chunks(corpus)?;
        if corpus_hash(&chunks) != manifest.corpus_hash || chunks.len() != manifest.count {
            return Err(corrupt(&mpath, "chunk store changed since the index was built; rerun `coderag index`"));
        }
        let vpath = self.dense_vectors_path(corpus, embedder_id);
        let blob = std::fs::read(&vpath).map_err(io_err(&vpath))?;
        if blob.len() != manifest.dim * manifest.count * 4 {
            return Err(corrupt(&vpath, format!("expected {} bytes, found {}", manifest.dim * manifest.count * 4, blob.len())));
        }
        let floats: Vec<f32> = blob.chunks_exact(4).map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]])).collect();
        let vectors = if manifest.dim == 0 {
            vec![Vec::new(); manifest.count]
        } else {
            floats.chunks(manifest.dim).map(<[f32]>::to_vec).collect()
        };
        DenseIndex::from_vectors(manifest.embedder_id, chunks.into_iter().map(Arc::new).collect(), vectors)
    }

    pub fn save_sparse(&self, corpus: Corpus, index: &Bm25Index<f64>) -> Result<(), RetrievalError> {
        self.create()?;
        let path = self.bm25_path(corpus);
        let chunks: Vec<Chunk> = index.chunks().iter().map(|c| (**c).clone()).collect();
        let header = Bm25Header {
            format_version: FORMAT_VERSION,
            k1: index.params().k1,
            b: index.params().b,
            corpus_hash: corpus_hash(&chunks),
            chunk_ids: chunks.iter().map(|c| c.chunk_id.clone()).collect(),
            doc_lengths: index.doc_lengths().to_vec(),
        };
        let file = std::fs::File::create(&path).map_err(io_err(&path))?;
        let mut out = BufWriter::new(file);
        let mut line = |json: String| -> Result<(), RetrievalError> {
            out.write_all(json.as_bytes()).map_err(io_err(&path))?;
            out.write_all(b"\n").map_err(io_err(&path))
        };
        line(serde_json::to_string(&header).expect("header serializes"))?;
        for (term, postings) in index.postings() {
            let record = PostingsRecord { term: term.clone(), postings: postings.clone() };
            line(serde_json::to_string(&record).expect("postings serialize"))?;
        }
        out.flush().map_err(io_err(&path))
    }

    pub fn load_sparse(&self, corpus: Corpus) -> Result<Bm25Index<f64>, RetrievalError> {
        let path = self.bm25_path(corpus);
        if !path.exists() {
            return Err(RetrievalError::MissingIndex { corpus, kind: "bm25" });
        }
        let file = std::fs::File::open(&path).map_err(io_err(&path))?;
        let mut lines = BufReader::new(file).lines();
        let header_line = lines.next().ok_or_else(|| corrupt(&path, "empty file"))?.map_err(io_err(&path))?;
        let header: Bm25Header = serde_json::from_str(&header_line).map_err(|e| corrupt(&path, e.to_string()))?;
        let chunks = self.load_chunks(corpus)?;
        if corpus_hash(&chunks) != header.corpus_hash {
            return Err(corrupt(&path, "chunk store changed since the index was built; rerun `coderag index`"));
        }
        let mut postings = BTreeMap::new();
        for line in lines {
            let line = line.map_err(io_err(&path))?;
            if line.trim().is_empty() {
                continue;
            }
            let rec: PostingsRecord = serde_json::from_str(&line).map_err(|e| corrupt(&path, e.to_string()))?;
            postings.insert(rec.term, rec.postings);
        }
        Bm25Index::from_parts(
            Bm25Params { k1: header.k1, b: header.b },
            chunks.into_iter().map(Arc::new).collect(),
            header.doc_lengths,
            postings,
        )
    }

    /// Loads whichever indexes exist for `corpus`.
    pub fn load_corpus(&self, corpus: Corpus, embedder_id: &str) -> Result<CorpusIndex, RetrievalError> {
        let dense = match self.load_dense(corpus, embedder_id) {
            Ok(d) => Some(d),
            Err(RetrievalError::MissingIndex { .. }) => None,
            Err(e) => return Err(e),
        };
        let sparse = match self.load_sparse(corpus) {
            Ok(s) => Some(s),
            Err(RetrievalError::MissingIndex { .. }) => None,
            Err(e) => return Err(e),
        };
        Ok(CorpusIndex { dense, sparse })
    }
}
