//! Scoring knowledge-base lookbacks against a query and ranking the top k.
//!
//! Two retrievers are available:
//!
//! * [`RetrieverKind::Similarity`] embeds every lookback to a fixed-length
//!   vector and ranks by Euclidean distance (lower first).
//! * [`RetrieverKind::MutualInformation`] pairs aligned timesteps of the
//!   raw windows per variable and ranks by the mean histogram MI (higher
//!   first).
//!
//! Ties are broken by ascending origin so rankings are reproducible.

mod embed;
mod information;

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};

pub use embed::{
    embed_builtin, score_similarity, Embedder, EmbedderSpec, Embedding, PooledEmbedder, DEFAULT_EMBEDDING_DIM,
};
pub use information::{entropy_histogram, score_mutual_information, sturges_bins, BinnedWindow};

use crate::error::{Error, Result};
use crate::knowledge_base::KnowledgeBase;
use crate::parallel::par_map;
use crate::series::WindowPair;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum RetrieverKind {
    #[serde(rename = "sim", alias = "similarity")]
    Similarity,
    #[serde(rename = "mi", alias = "mutual-information")]
    MutualInformation,
}

impl RetrieverKind {
    pub fn polarity(self) -> Polarity {
        match self {
            RetrieverKind::Similarity => Polarity::LowerIsBetter,
            RetrieverKind::MutualInformation => Polarity::HigherIsBetter,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            RetrieverKind::Similarity => "sim",
            RetrieverKind::MutualInformation => "mi",
        }
    }
}

impl fmt::Display for RetrieverKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for RetrieverKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "sim" | "similarity" => Ok(RetrieverKind::Similarity),
            "mi" | "mutual-information" => Ok(RetrieverKind::MutualInformation),
            other => Err(Error::Config(format!(
                "unknown retriever '{other}' (expected sim or mi)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Polarity {
    HigherIsBetter,
    LowerIsBetter,
}

impl Polarity {
    /// Orders `a` before `b` when `a` is the better score.
    fn compare(self, a: f64, b: f64) -> Ordering {
        match self {
            Polarity::LowerIsBetter => a.total_cmp(&b),
            Polarity::HigherIsBetter => b.total_cmp(&a),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoredCandidate {
    pub base_index: usize,
    pub score: f64,
    pub polarity: Polarity,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContextEntry {
    pub base_index: usize,
    pub pair: WindowPair,
    pub score: f64,
}

/// Ranked retrieval result, best first.
#[derive(Debug, Clone, PartialEq)]
pub struct ContextSet {
    pub entries: Vec<ContextEntry>,
    pub retriever: RetrieverKind,
    /// Requested context count.
    pub k: usize,
    /// Set when fewer than `k` candidates survived exclusion.
    pub truncated: bool,
}

impl ContextSet {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn pairs(&self) -> impl Iterator<Item = &WindowPair> {
        self.entries.iter().map(|e| &e.pair)
    }
}

/// Rows a candidate must not touch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Exclusion {
    #[default]
    None,
    /// Inclusive absolute row extent of the query sample.
    Overlapping { start: usize, end: usize },
}

impl Exclusion {
    pub fn for_query(query: &WindowPair) -> Self {
        Exclusion::Overlapping {
            start: query.start(),
            end: query.end(),
        }
    }

    fn excludes(&self, candidate: &WindowPair) -> bool {
        match *self {
            Exclusion::None => false,
            Exclusion::Overlapping { start, end } => candidate.overlaps(start, end),
        }
    }
}

/// Retriever configuration.
#[derive(Clone)]
pub enum Retriever {
    Similarity(Arc<dyn Embedder>),
    /// `bins: None` selects Sturges' rule on the lookback length.
    MutualInformation {
        bins: Option<usize>,
    },
}

impl fmt::Debug for Retriever {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Retriever::Similarity(e) => f.debug_tuple("Similarity").field(&e.dim()).finish(),
            Retriever::MutualInformation { bins } => f.debug_struct("MutualInformation").field("bins", bins).finish(),
        }
    }
}

impl Retriever {
    pub fn similarity() -> Self {
        Retriever::Similarity(Arc::new(PooledEmbedder::default()))
    }

    pub fn mutual_information() -> Self {
        Retriever::MutualInformation { bins: None }
    }

    pub fn kind(&self) -> RetrieverKind {
        match self {
            Retriever::Similarity(_) => RetrieverKind::Similarity,
            Retriever::MutualInformation { .. } => RetrieverKind::MutualInformation,
        }
    }
}

enum Prepared {
    Embeddings(Arc<dyn Embedder>, Vec<Embedding>),
    Binned(usize, Vec<BinnedWindow>),
}

/// A knowledge base with per-sample retrieval features precomputed, so a
/// scan over many queries embeds or bins each base lookback once.
pub struct RetrievalIndex<'a> {
    kb: &'a KnowledgeBase,
    kind: RetrieverKind,
    prepared: Prepared,
}

impl<'a> RetrievalIndex<'a> {
    pub fn new(kb: &'a KnowledgeBase, retriever: &Retriever) -> Result<Self> {
        let prepared = match retriever {
            Retriever::Similarity(embedder) => {
                let embs = par_map(kb.samples(), |s| embedder.embed(s.lookback.view()))?;
                Prepared::Embeddings(Arc::clone(embedder), embs)
            }
            Retriever::MutualInformation { bins } => {
                if kb.lookback() < 2 {
                    return Err(Error::InvalidArgument(
                        "mutual information needs a lookback of at least 2".into(),
                    ));
                }
                let bins = bins.unwrap_or_else(|| sturges_bins(kb.lookback()));
                let binned = par_map(kb.samples(), |s| BinnedWindow::new(s.lookback.view(), bins))?;
                Prepared::Binned(bins, binned)
            }
        };
        Ok(Self {
            kb,
            kind: retriever.kind(),
            prepared,
        })
    }

    pub fn knowledge_base(&self) -> &KnowledgeBase {
        self.kb
    }

    pub fn kind(&self) -> RetrieverKind {
        self.kind
    }

    /// Scores every non-excluded candidate, in base order.
    pub fn score_all(&self, query: ArrayView2<'_, f64>, exclusion: Exclusion) -> Result<Vec<ScoredCandidate>> {
        let expected = (self.kb.lookback(), self.kb.n_vars());
        if query.dim() != expected {
            return Err(Error::Shape(format!(
                "query {:?} does not match base lookback {expected:?}",
                query.dim()
            )));
        }
        let polarity = self.kind.polarity();
        let keep: Vec<usize> = (0..self.kb.len())
            .filter(|&i| !exclusion.excludes(&self.kb.samples()[i]))
            .collect();
        let scores = match &self.prepared {
            Prepared::Embeddings(embedder, embs) => {
                let q = embedder.embed(query)?;
                par_map(&keep, |&i| score_similarity(&q, &embs[i]))?
            }
            Prepared::Binned(bins, binned) => {
                let q = BinnedWindow::new(query, *bins)?;
                par_map(&keep, |&i| binned[i].mutual_information(&q))?
            }
        };
        Ok(keep
            .into_iter()
            .zip(scores)
            .map(|(base_index, score)| ScoredCandidate {
                base_index,
                score,
                polarity,
            })
            .collect())
    }

    /// Best `k` candidates with their full window pairs.
    pub fn top_k(&self, query: ArrayView2<'_, f64>, k: usize, exclusion: Exclusion) -> Result<ContextSet> {
        if k == 0 {
            return Err(Error::InvalidArgument("context count k must be at least 1".into()));
        }
        let mut scored = self.score_all(query, exclusion)?;
        if scored.is_empty() {
            return Err(Error::EmptyPool);
        }
        let samples = self.kb.samples();
        scored.sort_by(|a, b| {
            a.polarity
                .compare(a.score, b.score)
                .then_with(|| samples[a.base_index].origin.cmp(&samples[b.base_index].origin))
        });
        let truncated = scored.len() < k;
        scored.truncate(k);
        Ok(ContextSet {
            entries: scored
                .into_iter()
                .map(|c| ContextEntry {
                    base_index: c.base_index,
                    pair: samples[c.base_index].clone(),
                    score: c.score,
                })
                .collect(),
            retriever: self.kind,
            k,
            truncated,
        })
    }
}

/// One-shot retrieval without a reusable index.
pub fn retrieve_top_k(
    kb: &KnowledgeBase,
    query: ArrayView2<'_, f64>,
    retriever: &Retriever,
    k: usize,
    exclusion: Exclusion,
) -> Result<ContextSet> {
    if kb.is_empty() {
        return Err(Error::EmptyPool);
    }
    RetrievalIndex::new(kb, retriever)?.top_k(query, k, exclusion)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;

    fn base(windows: Vec<Array2<f64>>) -> KnowledgeBase {
        let l = windows[0].nrows();
        let m = windows[0].ncols();
        let samples = windows
            .into_iter()
            .enumerate()
            .map(|(i, lookback)| WindowPair {
                future: Array2::from_elem((1, m), i as f64),
                lookback,
                origin: l - 1 + i * 10,
            })
            .collect();
        KnowledgeBase::from_samples(samples, l, 1, m).unwrap()
    }

    fn ramp(l: usize, phase: usize) -> Array2<f64> {
        Array2::from_shape_fn((l, 2), |(r, c)| (((r + phase) * (c + 3)) % 13) as f64)
    }

    #[test]
    fn self_retrieval_under_similarity() {
        let kb = base((0..6).map(|p| ramp(20, p)).collect());
        let q = kb.samples()[3].lookback.clone();
        let ctx = retrieve_top_k(&kb, q.view(), &Retriever::similarity(), 2, Exclusion::None).unwrap();
        assert_eq!(ctx.entries[0].base_index, 3);
        assert_eq!(ctx.entries[0].score, 0.0);
        assert_eq!(ctx.entries[0].pair.future[[0, 0]], 3.0);
        assert!(!ctx.truncated);
    }

    #[test]
    fn saturation_returns_sorted_base() {
        let kb = base((0..4).map(|p| ramp(20, p)).collect());
        let q = ramp(20, 7);
        let ctx = retrieve_top_k(&kb, q.view(), &Retriever::mutual_information(), 10, Exclusion::None).unwrap();
        assert_eq!(ctx.len(), 4);
        assert!(ctx.truncated);
        assert!(ctx.entries.windows(2).all(|w| w[0].score >= w[1].score));
    }

    #[test]
    fn ties_break_by_origin() {
        let kb = base(vec![ramp(10, 1), ramp(10, 1), ramp(10, 1)]);
        let ctx = retrieve_top_k(&kb, ramp(10, 1).view(), &Retriever::similarity(), 3, Exclusion::None).unwrap();
        let order: Vec<usize> = ctx.entries.iter().map(|e| e.base_index).collect();
        assert_eq!(order, vec![0, 1, 2]);
    }

    #[test]
    fn exclusion_and_empty_pool() {
        let kb = base((0..3).map(|p| ramp(20, p)).collect());
        let all = Exclusion::Overlapping { start: 0, end: 1000 };
        assert!(matches!(
            retrieve_top_k(&kb, ramp(20, 0).view(), &Retriever::similarity(), 1, all),
            Err(Error::EmptyPool)
        ));
        // sample 0 spans rows 0..=20, sample 1 rows 10..=30
        let ex = Exclusion::Overlapping { start: 0, end: 15 };
        let ctx = retrieve_top_k(&kb, ramp(20, 0).view(), &Retriever::similarity(), 3, ex).unwrap();
        assert!(ctx.entries.iter().all(|e| e.base_index == 2));
    }

    #[test]
    fn retriever_names_parse() {
        assert_eq!("sim".parse::<RetrieverKind>().unwrap(), RetrieverKind::Similarity);
        assert_eq!("MI".parse::<RetrieverKind>().unwrap(), RetrieverKind::MutualInformation);
        assert!("knn".parse::<RetrieverKind>().is_err());
    }
}
