use super::tokenize::tokenize;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EmbedError {
    #[error("embedding transport failure: {0}")]
    Transport(String),
    #[error("embedding integrity failure: {0}")]
    Integrity(String),
    #[error("unknown embedder `{0}`")]
    Unknown(String),
}

/// Maps texts to fixed-dimension vectors.
pub trait Embedder: Send + Sync {
    fn id(&self) -> &str;

    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f32>>, EmbedError>;

    fn embed_one(&self, text: &str) -> Result<Vec<f32>, EmbedError> {
        let mut v = self.embed(&[text.to_string()])?;
        v.pop().ok_or_else(|| EmbedError::Integrity("embedder returned no vector".into()))
    }
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

/// Deterministic bag-of-tokens embedder: token counts hashed into `dim`
/// buckets, then scaled to unit length. Word order is ignored, so
/// "quantum circuit" and "circuit quantum" embed identically.
#[derive(Debug, Clone)]
pub struct HashEmbedder {
    dim: usize,
    id: String,
}

impl HashEmbedder {
    pub const DEFAULT_DIM: usize = 256;

    pub fn new(dim: usize) -> Self {
        assert!(dim > 0, "hash embedder dimension must be positive");
        Self { dim, id: format!("hash-{dim}") }
    }

    /// Parses ids of the form `hash-<dim>` (or bare `hash`).
    pub fn from_id(id: &str) -> Option<Self> {
        match id {
            "hash" => Some(Self::default()),
            _ => id.strip_prefix("hash-")?.parse().ok().filter(|d| *d > 0).map(Self::new),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn vector(&self, text: &str) -> Vec<f32> {
        let mut v = vec![0f32; self.dim];
        for token in tokenize(text) {
            v[(fnv1a(token.as_bytes()) % self.dim as u64) as usize] += 1.0;
        }
        let norm = v.iter().map(|x| x * x).sum::<f32>().sqrt();
        if norm > 0.0 {
            v.iter_mut().for_each(|x| *x /= norm);
        }
        v
    }
}

impl Default for HashEmbedder {
    fn default() -> Self {
        Self::new(Self::DEFAULT_DIM)
    }
}

impl Embedder for HashEmbedder {
    fn id(&self) -> &str {
        &self.id
    }

    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f32>>, EmbedError> {
        Ok(texts.iter().map(|t| self.vector(t)).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_input() {
        assert!(HashEmbedder::default().embed(&[]).unwrap().is_empty());
    }

    #[test]
    fn identical_and_permuted_text() {
        let e = HashEmbedder::default();
        assert_eq!(e.vector("quantum circuit"), e.vector("quantum circuit"));
        assert_eq!(e.vector("quantum circuit"), e.vector("circuit quantum"));
        assert_ne!(e.vector("quantum circuit"), e.vector("classical register"));
        assert_eq!(e.vector("x").len(), 256);
    }

    #[test]
    fn id_roundtrip() {
        assert_eq!(HashEmbedder::from_id("hash-64").unwrap().dim(), 64);
        assert_eq!(HashEmbedder::from_id("hash").unwrap().id(), "hash-256");
        assert!(HashEmbedder::from_id("hash-0").is_none());
        assert!(HashEmbedder::from_id("openai:x").is_none());
    }
}
