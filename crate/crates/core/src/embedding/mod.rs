//! Label-set embeddings and the label-embedding similarity score.

mod cache;
mod http;
mod providers;

pub use cache::{EmbeddingCache, EmbeddingRecord};
pub use http::{HttpEmbeddingProvider, MAX_BATCH};
pub use providers::{EmbeddingProvider, HashedEmbedding, PrecomputedFile};

use std::collections::HashMap;
use std::str::FromStr;
use std::sync::atomic::{AtomicUsize, Ordering};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::gt::cosine;
use crate::labeling::GeneratedLabelSet;

#[derive(Debug, Error)]
pub enum EmbeddingError {
    #[error("label set for report `{0}` has no labels")]
    EmptyLabelSet(String),
    #[error("cannot embed an empty text")]
    EmptyText,
    #[error("embedding provider: {0}")]
    Provider(String),
    #[error("embedding dimension changed within a run: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("cannot normalize embedding: {0}")]
    NormalizationFailure(String),
    #[error("no precomputed vector for text with sha256 {0}")]
    MissingPrecomputed(String),
    #[error("invalid embedding configuration: {0}")]
    InvalidConfig(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Identifies the provider and model that produced a vector.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct EmbeddingFingerprint {
    pub provider: String,
    pub model: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingVector {
    pub values: Vec<f64>,
    pub fingerprint: EmbeddingFingerprint,
}

impl EmbeddingVector {
    pub fn dim(&self) -> usize {
        self.values.len()
    }
}

/// How a label set becomes one vector.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CombineMode {
    /// Embed the labels joined with `"; "`.
    #[default]
    Join,
    /// Embed each label and average, then renormalize.
    MeanPool,
}

impl FromStr for CombineMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "join" => Ok(CombineMode::Join),
            "mean-pool" | "mean_pool" => Ok(CombineMode::MeanPool),
            other => Err(format!(
                "unknown combine mode `{other}` (expected join or mean-pool)"
            )),
        }
    }
}

pub fn text_sha256(text: &str) -> String {
    hex::encode(Sha256::digest(text.as_bytes()))
}

/// Scales to unit L2 norm.
pub fn normalize(values: &[f64]) -> Result<Vec<f64>, EmbeddingError> {
    let mut sq = 0.0f64;
    for v in values {
        sq += v * v;
    }
    let norm = sq.sqrt();
    if norm == 0.0 || !norm.is_finite() {
        return Err(EmbeddingError::NormalizationFailure(format!(
            "vector norm is {norm}"
        )));
    }
    Ok(values.iter().map(|v| v / norm).collect())
}

fn trimmed_labels(set: &GeneratedLabelSet) -> Result<Vec<&str>, EmbeddingError> {
    let labels: Vec<&str> = set
        .labels
        .iter()
        .map(|l| l.trim())
        .filter(|l| !l.is_empty())
        .collect();
    if labels.is_empty() {
        return Err(EmbeddingError::EmptyLabelSet(set.report_id.clone()));
    }
    Ok(labels)
}

/// Joins the trimmed labels in order with `"; "`.
pub fn labelset_to_text(set: &GeneratedLabelSet) -> Result<String, EmbeddingError> {
    Ok(trimmed_labels(set)?.join("; "))
}

/// Wraps a provider with local renormalization, a dimension check, an
/// optional on-disk cache and bounded concurrent batching.
pub struct Embedder<P> {
    provider: P,
    cache: Option<EmbeddingCache>,
    memo: std::sync::RwLock<HashMap<String, Vec<f64>>>,
    dim: std::sync::OnceLock<usize>,
    batch_size: usize,
    concurrency: usize,
    texts_requested: AtomicUsize,
}

type BatchResult = Result<Vec<Vec<f64>>, EmbeddingError>;

impl<P: EmbeddingProvider> Embedder<P> {
    pub fn new(provider: P) -> Self {
        Self {
            provider,
            cache: None,
            memo: Default::default(),
            dim: Default::default(),
            batch_size: MAX_BATCH,
            concurrency: 4,
            texts_requested: AtomicUsize::new(0),
        }
    }

    pub fn with_cache(mut self, cache: EmbeddingCache) -> Self {
        self.cache = Some(cache);
        self
    }

    pub fn with_batching(mut self, batch_size: usize, concurrency: usize) -> Self {
        self.batch_size = batch_size.clamp(1, MAX_BATCH);
        self.concurrency = concurrency.max(1);
        self
    }

    pub fn provider(&self) -> &P {
        &self.provider
    }

    pub fn fingerprint(&self) -> EmbeddingFingerprint {
        self.provider.fingerprint()
    }

    /// Number of texts sent to the provider so far (cache misses).
    pub fn texts_requested(&self) -> usize {
        self.texts_requested.load(Ordering::SeqCst)
    }

    fn check_dim(&self, got: usize) -> Result<(), EmbeddingError> {
        let expected = *self.dim.get_or_init(|| got);
        if expected != got {
            return Err(EmbeddingError::DimensionMismatch { expected, got });
        }
        Ok(())
    }

    fn lookup(&self, fp: &EmbeddingFingerprint, text: &str) -> Option<Vec<f64>> {
        if let Some(v) = self.memo.read().expect("memo poisoned").get(text) {
            return Some(v.clone());
        }
        self.cache
            .as_ref()
            .and_then(|c| c.get(fp, &text_sha256(text)))
    }

    /// Embeds `texts` in order. Each distinct uncached text is sent to the
    /// provider once.
    pub fn embed(&self, texts: &[&str]) -> Result<Vec<EmbeddingVector>, EmbeddingError> {
        if texts.iter().any(|t| t.trim().is_empty()) {
            return Err(EmbeddingError::EmptyText);
        }
        let fp = self.provider.fingerprint();
        let mut missing: Vec<&str> = Vec::new();
        {
            let mut seen = std::collections::HashSet::new();
            for &t in texts {
                if seen.insert(t) && self.lookup(&fp, t).is_none() {
                    missing.push(t);
                }
            }
        }

        if !missing.is_empty() {
            let batches: Vec<&[&str]> = missing.chunks(self.batch_size).collect();
            let results = self.run_batches(&batches)?;
            let mut memo = self.memo.write().expect("memo poisoned");
            for (batch, vectors) in batches.iter().zip(results) {
                for (&text, raw) in batch.iter().zip(vectors) {
                    self.check_dim(raw.len())?;
                    let values = normalize(&raw)?;
                    if let Some(cache) = &self.cache {
                        cache.append(&EmbeddingRecord {
                            text_sha256: text_sha256(text),
                            provider: fp.provider.clone(),
                            model: fp.model.clone(),
                            vector: values.clone(),
                        })?;
                    }
                    memo.insert(text.to_string(), values);
                }
            }
        }

        texts
            .iter()
            .map(|t| {
                let values = self.lookup(&fp, t).expect("every text embedded above");
                self.check_dim(values.len())?;
                Ok(EmbeddingVector {
                    values,
                    fingerprint: fp.clone(),
                })
            })
            .collect()
    }

    fn run_batches(&self, batches: &[&[&str]]) -> Result<Vec<Vec<Vec<f64>>>, EmbeddingError> {
        let next = AtomicUsize::new(0);
        let slots: Vec<std::sync::Mutex<Option<BatchResult>>> = batches
            .iter()
            .map(|_| std::sync::Mutex::new(None))
            .collect();
        let workers = self.concurrency.min(batches.len());
        std::thread::scope(|scope| {
            for _ in 0..workers {
                scope.spawn(|| loop {
                    let i = next.fetch_add(1, Ordering::SeqCst);
                    let Some(batch) = batches.get(i) else { break };
                    self.texts_requested
                        .fetch_add(batch.len(), Ordering::SeqCst);
                    let result = self.provider.embed_batch(batch).and_then(|vectors| {
                        if vectors.len() != batch.len() {
                            return Err(EmbeddingError::Provider(format!(
                                "sent {} texts, received {} vectors",
                                batch.len(),
                                vectors.len()
                            )));
                        }
                        Ok(vectors)
                    });
                    *slots[i].lock().expect("slot poisoned") = Some(result);
                });
            }
        });
        slots
            .into_iter()
            .map(|s| {
                s.into_inner()
                    .expect("slot poisoned")
                    .expect("every batch ran")
            })
            .collect()
    }

    pub fn embed_one(&self, text: &str) -> Result<EmbeddingVector, EmbeddingError> {
        Ok(self.embed(&[text])?.remove(0))
    }

    /// The vector representing a label set under `mode`.
    pub fn labelset_vector(
        &self,
        set: &GeneratedLabelSet,
        mode: CombineMode,
    ) -> Result<Vec<f64>, EmbeddingError> {
        match mode {
            CombineMode::Join => Ok(self.embed_one(&labelset_to_text(set)?)?.values),
            CombineMode::MeanPool => {
                let labels = trimmed_labels(set)?;
                let vectors = self.embed(&labels)?;
                mean_pool(&vectors)
            }
        }
    }

    /// Cosine similarity of two label sets' vectors.
    pub fn gpt_sim(
        &self,
        a: &GeneratedLabelSet,
        b: &GeneratedLabelSet,
        mode: CombineMode,
    ) -> Result<f64, EmbeddingError> {
        let va = self.labelset_vector(a, mode)?;
        let vb = self.labelset_vector(b, mode)?;
        similarity(&va, &vb)
    }
}

/// Renormalized mean of unit vectors. Summation runs over the labels sorted
/// by vector so the result does not depend on label order.
fn mean_pool(vectors: &[EmbeddingVector]) -> Result<Vec<f64>, EmbeddingError> {
    let mut sorted: Vec<&[f64]> = vectors.iter().map(|v| v.values.as_slice()).collect();
    sorted.sort_by(|a, b| {
        a.iter()
            .zip(*b)
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let dim = sorted[0].len();
    let mut mean = vec![0.0f64; dim];
    for v in &sorted {
        for (m, x) in mean.iter_mut().zip(v.iter()) {
            *m += x;
        }
    }
    let n = sorted.len() as f64;
    for m in &mut mean {
        *m /= n;
    }
    normalize(&mean)
}

/// Cosine of two embedding vectors.
pub fn similarity(a: &[f64], b: &[f64]) -> Result<f64, EmbeddingError> {
    cosine(a, b).map_err(|e| match e {
        crate::gt::SimilarityError::LengthMismatch(expected, got) => {
            EmbeddingError::DimensionMismatch { expected, got }
        }
        other => EmbeddingError::NormalizationFailure(other.to_string()),
    })
}
