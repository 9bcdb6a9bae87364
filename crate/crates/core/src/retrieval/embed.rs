//! Fixed-length window embeddings and Euclidean scoring.

use std::sync::Arc;

use ndarray::{ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::series::zscore_window;

pub const DEFAULT_EMBEDDING_DIM: usize = 512;

#[derive(Debug, Clone, PartialEq)]
pub struct Embedding(Vec<f64>);

impl Embedding {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(format!("embedding entry {i} is not finite")));
        }
        Ok(Self(values))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Maps a lookback window to a fixed-length vector.
pub trait Embedder: Send + Sync {
    fn dim(&self) -> usize;
    fn embed(&self, window: ArrayView2<'_, f64>) -> Result<Embedding>;
}

/// Z-normalize, average-pool each column into `floor(dim / m)` segments,
/// concatenate column by column, zero-pad to `dim`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PooledEmbedder {
    dim: usize,
}

impl PooledEmbedder {
    pub fn new(dim: usize) -> Self {
        Self { dim }
    }
}

impl Default for PooledEmbedder {
    fn default() -> Self {
        Self::new(DEFAULT_EMBEDDING_DIM)
    }
}

impl Embedder for PooledEmbedder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, window: ArrayView2<'_, f64>) -> Result<Embedding> {
        embed_builtin(window, self.dim)
    }
}

pub fn embed_builtin(window: ArrayView2<'_, f64>, dim: usize) -> Result<Embedding> {
    let (l, m) = window.dim();
    if l == 0 {
        return Err(Error::InvalidArgument("cannot embed an empty window".into()));
    }
    if m == 0 || dim < m {
        return Err(Error::Config(format!(
            "embedding length {dim} must be at least the number of variables {m}"
        )));
    }
    let segments = dim / m;
    // Segments starting past the last row (l < segments) stay zero.
    let seg_len = (l / segments).max(1);
    let z = zscore_window(window);
    let mut out = Vec::with_capacity(dim);
    for col in z.axis_iter(Axis(1)) {
        for seg in 0..segments {
            let start = seg * seg_len;
            let end = if seg + 1 == segments {
                l
            } else {
                (start + seg_len).min(l)
            };
            if start >= end {
                out.push(0.0);
                continue;
            }
            let slice = col.slice(ndarray::s![start..end]);
            out.push(slice.sum() / (end - start) as f64);
        }
    }
    out.resize(dim, 0.0);
    Embedding::new(out)
}

/// Euclidean distance; lower is better.
pub fn score_similarity(query: &Embedding, candidate: &Embedding) -> Result<f64> {
    if query.len() != candidate.len() {
        return Err(Error::Shape(format!(
            "embedding lengths differ: {} vs {}",
            query.len(),
            candidate.len()
        )));
    }
    Ok(query
        .0
        .iter()
        .zip(&candidate.0)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt())
}

/// How embeddings are produced for the similarity retriever.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum EmbedderSpec {
    BuiltinPooled {
        #[serde(default = "default_dim")]
        k_emb: usize,
    },
    External {
        #[serde(default = "default_dim")]
        k_emb: usize,
        endpoint: String,
    },
}

fn default_dim() -> usize {
    DEFAULT_EMBEDDING_DIM
}

impl Default for EmbedderSpec {
    fn default() -> Self {
        EmbedderSpec::BuiltinPooled {
            k_emb: DEFAULT_EMBEDDING_DIM,
        }
    }
}

impl EmbedderSpec {
    pub fn k_emb(&self) -> usize {
        match self {
            EmbedderSpec::BuiltinPooled { k_emb } | EmbedderSpec::External { k_emb, .. } => *k_emb,
        }
    }

    pub fn build(&self) -> Result<Arc<dyn Embedder>> {
        Ok(match self {
            EmbedderSpec::BuiltinPooled { k_emb } => {
                if *k_emb == 0 {
                    return Err(Error::Config("k_emb must be positive".into()));
                }
                Arc::new(PooledEmbedder::new(*k_emb))
            }
            EmbedderSpec::External { k_emb, endpoint } => {
                Arc::new(crate::forecast::ExternalEmbedder::new(endpoint.parse()?, *k_emb))
            }
        })
    }
}
