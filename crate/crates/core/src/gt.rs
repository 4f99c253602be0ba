//! Ground-truth similarity: numeric encoding of finding vectors and cosine
//! similarity between report pairs.

use std::collections::HashMap;

use thiserror::Error;

use crate::corpus::{FindingSchema, FindingVector, LabelSource, LabelState};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimilarityError {
    #[error("vector lengths differ: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("cosine is undefined for a zero vector")]
    ZeroVector,
    #[error("finding vector for `{report_id}` has {got} assignments, schema has {expected}")]
    SchemaMismatch {
        report_id: String,
        expected: usize,
        got: usize,
    },
    #[error("no {label_source} encoding for report `{report_id}`")]
    MissingEncoding {
        report_id: String,
        label_source: LabelSource,
    },
}

impl LabelState {
    /// Positive 1, Negative 0, Uncertain -1, Missing -2.
    pub fn encode(self) -> f64 {
        match self {
            LabelState::Positive => 1.0,
            LabelState::Negative => 0.0,
            LabelState::Uncertain => -1.0,
            LabelState::Missing => -2.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncodedFindingVector {
    pub report_id: String,
    pub source: LabelSource,
    pub values: Vec<f64>,
}

pub fn encode_vector(
    fv: &FindingVector,
    schema: &FindingSchema,
) -> Result<EncodedFindingVector, SimilarityError> {
    if fv.assignments().len() != schema.len() {
        return Err(SimilarityError::SchemaMismatch {
            report_id: fv.report_id.clone(),
            expected: schema.len(),
            got: fv.assignments().len(),
        });
    }
    Ok(EncodedFindingVector {
        report_id: fv.report_id.clone(),
        source: fv.source,
        values: fv.assignments().iter().map(|s| s.encode()).collect(),
    })
}

/// `dot(u, v) / sqrt(|u|^2 |v|^2)`, clamped to [-1, 1]. One square root keeps
/// self-similarity at exactly 1.
pub fn cosine(u: &[f64], v: &[f64]) -> Result<f64, SimilarityError> {
    if u.len() != v.len() {
        return Err(SimilarityError::LengthMismatch(u.len(), v.len()));
    }
    let (mut dot, mut uu, mut vv) = (0.0f64, 0.0f64, 0.0f64);
    for (a, b) in u.iter().zip(v) {
        dot += a * b;
        uu += a * a;
        vv += b * b;
    }
    if uu == 0.0 || vv == 0.0 {
        return Err(SimilarityError::ZeroVector);
    }
    Ok((dot / (uu * vv).sqrt()).clamp(-1.0, 1.0))
}

/// Encoded vectors keyed by (source, report id).
#[derive(Debug, Clone, Default)]
pub struct EncodingStore {
    vectors: HashMap<(LabelSource, String), EncodedFindingVector>,
}

impl EncodingStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_vectors<'a>(
        vectors: impl IntoIterator<Item = &'a FindingVector>,
        schema: &FindingSchema,
    ) -> Result<Self, SimilarityError> {
        let mut store = Self::new();
        for fv in vectors {
            store.insert(encode_vector(fv, schema)?);
        }
        Ok(store)
    }

    pub fn insert(&mut self, encoded: EncodedFindingVector) {
        self.vectors
            .insert((encoded.source, encoded.report_id.clone()), encoded);
    }

    pub fn get(&self, source: LabelSource, report_id: &str) -> Option<&EncodedFindingVector> {
        self.vectors.get(&(source, report_id.to_string()))
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    /// Sorted by source, then report id.
    pub fn iter_sorted(&self) -> Vec<&EncodedFindingVector> {
        let mut all: Vec<_> = self.vectors.values().collect();
        all.sort_by(|a, b| (a.source, &a.report_id).cmp(&(b.source, &b.report_id)));
        all
    }
}

pub fn gt_similarity(
    a_id: &str,
    b_id: &str,
    source: LabelSource,
    store: &EncodingStore,
) -> Result<f64, SimilarityError> {
    let lookup = |id: &str| {
        store
            .get(source, id)
            .ok_or_else(|| SimilarityError::MissingEncoding {
                report_id: id.to_string(),
                label_source: source,
            })
    };
    cosine(&lookup(a_id)?.values, &lookup(b_id)?.values)
}

/// Writes the debug export `report_id,source,<schema names...>`.
pub fn write_encoded_csv(
    path: &std::path::Path,
    store: &EncodingStore,
    schema: &FindingSchema,
) -> std::io::Result<()> {
    let mut out = String::from("report_id,source");
    for name in schema.names() {
        out.push(',');
        out.push_str(name);
    }
    out.push('\n');
    for v in store.iter_sorted() {
        out.push_str(&v.report_id);
        out.push(',');
        out.push_str(v.source.key());
        for x in &v.values {
            out.push_str(&format!(",{x:.1}"));
        }
        out.push('\n');
    }
    std::fs::write(path, out)
}
