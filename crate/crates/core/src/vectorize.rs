//! Sparse TF and TF-IDF vectors and cosine similarity.
//!
//! Documents are weighted `TF(t, d) * ln(N / DF(t))` with raw counts for TF;
//! queries use plain TF. Tokens outside the corpus vocabulary are dropped.

use std::collections::BTreeMap;

use crate::corpus::{build_vocabulary, Corpus, TokenId, TokenSequence, Vocabulary};

/// Non-negative weights keyed by strictly increasing token id, with a cached L2
/// norm. Zero weights are never stored.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SparseVector {
    ids: Vec<TokenId>,
    weights: Vec<f64>,
    norm: f64,
}

impl SparseVector {
    /// Builds a vector from `(token, weight)` pairs in any order. Weights for a
    /// repeated token are summed; zero weights are dropped.
    pub fn from_pairs(pairs: impl IntoIterator<Item = (TokenId, f64)>) -> Self {
        let mut merged: BTreeMap<TokenId, f64> = BTreeMap::new();
        for (t, w) in pairs {
            debug_assert!(w.is_finite() && w >= 0.0, "weight {w} for token {t}");
            *merged.entry(t).or_insert(0.0) += w;
        }
        Self::from_sorted(merged.into_iter().filter(|&(_, w)| w != 0.0))
    }

    pub(crate) fn from_sorted(pairs: impl Iterator<Item = (TokenId, f64)>) -> Self {
        let (ids, weights): (Vec<_>, Vec<_>) = pairs.unzip();
        let norm = weights.iter().map(|w| w * w).sum::<f64>().sqrt();
        Self { ids, weights, norm }
    }

    pub fn ids(&self) -> &[TokenId] {
        &self.ids
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn iter(&self) -> impl Iterator<Item = (TokenId, f64)> + '_ {
        self.ids.iter().copied().zip(self.weights.iter().copied())
    }

    pub fn get(&self, token: TokenId) -> Option<f64> {
        self.ids.binary_search(&token).ok().map(|i| self.weights[i])
    }

    pub fn norm(&self) -> f64 {
        self.norm
    }

    /// Number of stored (non-zero) entries.
    pub fn nnz(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// Multiplies every weight by `factor > 0`.
    pub fn scaled(&self, factor: f64) -> Self {
        assert!(factor > 0.0, "scale factor must be positive");
        Self::from_sorted(
            self.iter()
                .map(|(t, w)| (t, w * factor))
                .filter(|&(_, w)| w != 0.0),
        )
    }

    pub fn dot(&self, other: &SparseVector) -> f64 {
        merge_dot(&self.ids, &self.weights, &other.ids, &other.weights)
    }
}

fn merge_dot(a: &[TokenId], aw: &[f64], b: &[TokenId], bw: &[f64]) -> f64 {
    let (mut i, mut j) = (0, 0);
    let mut sum = 0.0;
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                sum += aw[i] * bw[j];
                i += 1;
                j += 1;
            }
        }
    }
    sum
}

/// Cosine of the angle between `a` and `b`, in `[0, 1]`. Zero if either
/// vector has zero norm.
pub fn cosine_similarity(a: &SparseVector, b: &SparseVector) -> f64 {
    if a.norm == 0.0 || b.norm == 0.0 {
        return 0.0;
    }
    (a.dot(b) / (a.norm * b.norm)).clamp(0.0, 1.0)
}

/// A vector prepared for repeated cosine evaluation against many others.
///
/// Small token ids are scattered into a dense array so each comparison is a
/// single pass over the other vector. Products are accumulated in the same
/// ascending-token order as [`SparseVector::dot`], so results are
/// bit-identical to [`cosine_similarity`].
#[derive(Debug, Clone)]
pub struct CosineProbe<'a> {
    ids: &'a [TokenId],
    weights: &'a [f64],
    norm: f64,
    dense: Option<Vec<f64>>,
}

impl<'a> CosineProbe<'a> {
    const MAX_DENSE: TokenId = 1 << 16;

    pub fn new(vector: &'a SparseVector) -> Self {
        Self::from_parts(&vector.ids, &vector.weights, vector.norm)
    }

    pub(crate) fn from_parts(ids: &'a [TokenId], weights: &'a [f64], norm: f64) -> Self {
        let dense = match ids.last() {
            Some(&max) if max < Self::MAX_DENSE => {
                let mut d = vec![0.0; max as usize + 1];
                for (&t, &w) in ids.iter().zip(weights) {
                    d[t as usize] = w;
                }
                Some(d)
            }
            _ => None,
        };
        Self {
            ids,
            weights,
            norm,
            dense,
        }
    }

    pub fn cosine(&self, other: &SparseVector) -> f64 {
        self.cosine_parts(&other.ids, &other.weights, other.norm)
    }

    pub(crate) fn cosine_parts(&self, ids: &[TokenId], weights: &[f64], norm: f64) -> f64 {
        if self.norm == 0.0 || norm == 0.0 {
            return 0.0;
        }
        let dot = match &self.dense {
            Some(d) => {
                let mut sum = 0.0;
                for (&t, &w) in ids.iter().zip(weights) {
                    match d.get(t as usize) {
                        Some(&q) => sum += q * w,
                        None => break,
                    }
                }
                sum
            }
            None => merge_dot(self.ids, self.weights, ids, weights),
        };
        (dot / (self.norm * norm)).clamp(0.0, 1.0)
    }
}

/// Raw occurrence counts.
pub fn term_frequency(seq: &TokenSequence) -> BTreeMap<TokenId, u32> {
    let mut tf = BTreeMap::new();
    for &t in &seq.tokens {
        *tf.entry(t).or_insert(0) += 1;
    }
    tf
}

/// Document frequencies over a corpus.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DfTable {
    df: BTreeMap<TokenId, u32>,
    n_docs: usize,
}

impl DfTable {
    pub fn get(&self, token: TokenId) -> Option<u32> {
        self.df.get(&token).copied()
    }

    /// Total document count, N.
    pub fn n_docs(&self) -> usize {
        self.n_docs
    }

    pub fn len(&self) -> usize {
        self.df.len()
    }

    pub fn is_empty(&self) -> bool {
        self.df.is_empty()
    }

    /// `ln(N / DF(token))`, or `None` for tokens outside the corpus.
    pub fn idf(&self, token: TokenId) -> Option<f64> {
        self.get(token)
            .map(|df| (self.n_docs as f64 / df as f64).ln())
    }
}

pub fn document_frequency(corpus: &Corpus) -> DfTable {
    let mut df = BTreeMap::new();
    for doc in corpus {
        for &t in term_frequency(doc).keys() {
            *df.entry(t).or_insert(0) += 1;
        }
    }
    DfTable {
        df,
        n_docs: corpus.len(),
    }
}

pub fn tfidf_vector(seq: &TokenSequence, df: &DfTable) -> SparseVector {
    SparseVector::from_sorted(term_frequency(seq).into_iter().filter_map(|(t, count)| {
        let w = count as f64 * df.idf(t)?;
        (w != 0.0).then_some((t, w))
    }))
}

pub fn tf_vector(seq: &TokenSequence, vocab: &Vocabulary) -> SparseVector {
    SparseVector::from_sorted(
        term_frequency(seq)
            .into_iter()
            .filter(|&(t, _)| vocab.contains(t))
            .map(|(t, count)| (t, count as f64)),
    )
}

/// TF-IDF vectors for every document of a corpus, in corpus order, together
/// with the vocabulary and DF table they were derived from.
#[derive(Debug, Clone)]
pub struct CorpusVectors {
    pub vocabulary: Vocabulary,
    pub df: DfTable,
    doc_ids: Vec<String>,
    vectors: Vec<SparseVector>,
}

impl CorpusVectors {
    pub fn build(corpus: &Corpus) -> Self {
        let df = document_frequency(corpus);
        let vectors = corpus.iter().map(|d| tfidf_vector(d, &df)).collect();
        Self {
            vocabulary: build_vocabulary(corpus),
            df,
            doc_ids: corpus.iter().map(|d| d.doc_id.clone()).collect(),
            vectors,
        }
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn doc_ids(&self) -> &[String] {
        &self.doc_ids
    }

    pub fn vectors(&self) -> &[SparseVector] {
        &self.vectors
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &SparseVector)> {
        self.doc_ids.iter().map(String::as_str).zip(&self.vectors)
    }

    /// Query-side vector: plain TF restricted to the corpus vocabulary.
    pub fn query_vector(&self, query: &TokenSequence) -> SparseVector {
        tf_vector(query, &self.vocabulary)
    }

    /// Ids of documents whose every token occurs in all N documents.
    pub fn zero_norm_docs(&self) -> Vec<&str> {
        self.iter()
            .filter(|(_, v)| v.norm() == 0.0)
            .map(|(id, _)| id)
            .collect()
    }
}
