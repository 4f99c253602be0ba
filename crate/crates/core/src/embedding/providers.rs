use std::collections::HashMap;
use std::hash::Hasher;
use std::io::{BufRead, BufReader};
use std::path::Path;

use fnv::FnvHasher;
use serde::Deserialize;

use super::{text_sha256, EmbeddingError, EmbeddingFingerprint};
use crate::lexical::tokenize;

/// Produces raw (not necessarily normalized) vectors for a batch of texts.
pub trait EmbeddingProvider: Send + Sync {
    fn fingerprint(&self) -> EmbeddingFingerprint;

    fn embed_batch(&self, texts: &[&str]) -> Result<Vec<Vec<f64>>, EmbeddingError>;
}

impl<P: EmbeddingProvider + ?Sized> EmbeddingProvider for Box<P> {
    fn fingerprint(&self) -> EmbeddingFingerprint {
        (**self).fingerprint()
    }

    fn embed_batch(&self, texts: &[&str]) -> Result<Vec<Vec<f64>>, EmbeddingError> {
        (**self).embed_batch(texts)
    }
}

/// Feature-hashed unigram counts. A token's bucket is the 64-bit FNV-1a hash
/// of the seed's eight little-endian bytes followed by the token's UTF-8
/// bytes, modulo `dim`. Counts are unsigned; normalization happens in
/// [`super::Embedder`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HashedEmbedding {
    dim: usize,
    seed: u64,
}

impl HashedEmbedding {
    pub const MIN_DIM: usize = 64;

    pub fn new(dim: usize, seed: u64) -> Result<Self, EmbeddingError> {
        if dim < Self::MIN_DIM {
            return Err(EmbeddingError::InvalidConfig(format!(
                "hashed embedding dimension must be >= {}, got {dim}",
                Self::MIN_DIM
            )));
        }
        Ok(Self { dim, seed })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn bucket(&self, token: &str) -> usize {
        let mut h = FnvHasher::default();
        h.write(&self.seed.to_le_bytes());
        h.write(token.as_bytes());
        (h.finish() % self.dim as u64) as usize
    }

    pub fn counts(&self, text: &str) -> Vec<f64> {
        let mut counts = vec![0.0; self.dim];
        for tok in tokenize(text).tokens() {
            counts[self.bucket(tok)] += 1.0;
        }
        counts
    }
}

impl EmbeddingProvider for HashedEmbedding {
    fn fingerprint(&self) -> EmbeddingFingerprint {
        EmbeddingFingerprint {
            provider: "hashed".into(),
            model: format!("fnv1a-unigram-d{}-s{}", self.dim, self.seed),
        }
    }

    fn embed_batch(&self, texts: &[&str]) -> Result<Vec<Vec<f64>>, EmbeddingError> {
        Ok(texts.iter().map(|t| self.counts(t)).collect())
    }
}

#[derive(Deserialize)]
struct PrecomputedLine {
    text_sha256: String,
    vector: Vec<f64>,
}

/// Vectors looked up by the SHA-256 of the text, read from a JSON-lines file
/// of `{"text_sha256": ..., "vector": [...]}` records.
#[derive(Debug, Clone)]
pub struct PrecomputedFile {
    vectors: HashMap<String, Vec<f64>>,
    model: String,
}

impl PrecomputedFile {
    pub fn load(path: &Path) -> Result<Self, EmbeddingError> {
        let io_err = |source| EmbeddingError::Io {
            path: path.display().to_string(),
            source,
        };
        let bytes = std::fs::read(path).map_err(io_err)?;
        let mut vectors = HashMap::new();
        for (lineno, line) in BufReader::new(bytes.as_slice()).lines().enumerate() {
            let line = line.map_err(io_err)?;
            if line.trim().is_empty() {
                continue;
            }
            let rec: PrecomputedLine = serde_json::from_str(&line).map_err(|e| {
                EmbeddingError::InvalidConfig(format!("{}:{}: {e}", path.display(), lineno + 1))
            })?;
            vectors.insert(rec.text_sha256.to_lowercase(), rec.vector);
        }
        // the file content identifies the "model", so an edited file never
        // reuses stale cache entries
        let digest = hex::encode(<sha2::Sha256 as sha2::Digest>::digest(&bytes));
        Ok(Self {
            vectors,
            model: format!("file-{}", &digest[..16]),
        })
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }
}

impl EmbeddingProvider for PrecomputedFile {
    fn fingerprint(&self) -> EmbeddingFingerprint {
        EmbeddingFingerprint {
            provider: "precomputed".into(),
            model: self.model.clone(),
        }
    }

    fn embed_batch(&self, texts: &[&str]) -> Result<Vec<Vec<f64>>, EmbeddingError> {
        texts
            .iter()
            .map(|t| {
                let key = text_sha256(t);
                self.vectors
                    .get(&key)
                    .cloned()
                    .ok_or(EmbeddingError::MissingPrecomputed(key))
            })
            .collect()
    }
}
