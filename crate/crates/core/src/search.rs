//! Retrieval pipelines: HNSW candidates re-ranked by Smith-Waterman, plus the
//! brute-force cosine, inverted-index and DTW baselines.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::align::{dtw_distance, smith_waterman_batch, SwScoring};
use crate::corpus::{Corpus, TokenId, TokenSequence, Vocabulary};
use crate::error::{Error, Result};
use crate::hnsw::{HnswIndex, HnswParams};
use crate::vectorize::{tf_vector, CorpusVectors, CosineProbe, SparseVector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Hquest,
    Brute,
    Inverted,
    Dtw,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Hquest, Method::Brute, Method::Inverted, Method::Dtw];

    pub fn name(self) -> &'static str {
        match self {
            Method::Hquest => "hquest",
            Method::Brute => "brute",
            Method::Inverted => "inverted",
            Method::Dtw => "dtw",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::UnknownMethod(s.to_string()))
    }
}

/// One ranked result.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchHit {
    pub doc_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cosine: Option<f64>,
    #[serde(rename = "sw", default, skip_serializing_if = "Option::is_none")]
    pub sw_score: Option<u32>,
    #[serde(rename = "dtw", default, skip_serializing_if = "Option::is_none")]
    pub dtw_distance: Option<f64>,
    /// 1-based.
    #[serde(rename = "rank")]
    pub final_rank: usize,
}

impl SearchHit {
    fn cosine(doc_id: String, cosine: f64) -> Self {
        Self {
            doc_id,
            cosine: Some(cosine),
            sw_score: None,
            dtw_distance: None,
            final_rank: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QueryStatus {
    Ok,
    /// No query token occurs in the corpus vocabulary.
    NoVocabularyOverlap,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchOutcome {
    pub hits: Vec<SearchHit>,
    pub status: QueryStatus,
}

impl SearchOutcome {
    fn ranked(mut hits: Vec<SearchHit>) -> Self {
        for (i, h) in hits.iter_mut().enumerate() {
            h.final_rank = i + 1;
        }
        Self {
            hits,
            status: QueryStatus::Ok,
        }
    }

    fn no_overlap() -> Self {
        Self {
            hits: Vec::new(),
            status: QueryStatus::NoVocabularyOverlap,
        }
    }

    pub fn doc_ids(&self) -> Vec<&str> {
        self.hits.iter().map(|h| h.doc_id.as_str()).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineConfig {
    /// Candidates taken from the HNSW graph (and results returned by baselines).
    pub k: usize,
    pub ef_search: usize,
    pub rerank: bool,
    /// Rank by SW score divided by its maximum for the pair's lengths.
    pub normalize_sw: bool,
    pub sw_scoring: SwScoring,
    /// Align candidates on the rayon pool; output order is unaffected.
    pub parallel_rerank: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            k: 50,
            ef_search: 150,
            rerank: true,
            normalize_sw: false,
            sw_scoring: SwScoring::default(),
            parallel_rerank: false,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::InvalidParameter("k must be >= 1".into()));
        }
        if self.ef_search == 0 {
            return Err(Error::InvalidParameter("ef_search must be >= 1".into()));
        }
        self.sw_scoring.validate()
    }
}

/// HNSW top-K by cosine (query TF vector against document TF-IDF vectors),
/// then re-ranked by descending Smith-Waterman score, descending cosine,
/// ascending doc id.
pub fn hquest_search(
    index: &HnswIndex,
    corpus: &Corpus,
    vocab: &Vocabulary,
    query: &TokenSequence,
    cfg: &PipelineConfig,
) -> Result<SearchOutcome> {
    if query.is_empty() {
        return Err(Error::EmptySequence);
    }
    let q = tf_vector(query, vocab);
    if q.norm() == 0.0 {
        return Ok(SearchOutcome::no_overlap());
    }
    let mut hits: Vec<SearchHit> = index
        .search(&q, cfg.k, cfg.ef_search)
        .into_iter()
        .map(|n| SearchHit::cosine(n.doc_id, n.cosine))
        .collect();
    if !cfg.rerank {
        return Ok(SearchOutcome::ranked(hits));
    }

    let docs: Vec<&[TokenId]> = hits
        .iter()
        .map(|hit| {
            corpus
                .get(&hit.doc_id)
                .map(|d| d.tokens.as_slice())
                .ok_or_else(|| Error::UnknownDocId {
                    id: hit.doc_id.clone(),
                    context: "index".into(),
                })
        })
        .collect::<Result<_>>()?;
    let align = |docs: &[&[TokenId]]| smith_waterman_batch(&query.tokens, docs, &cfg.sw_scoring);
    let scores: Vec<u32> = if cfg.parallel_rerank {
        let parts: Vec<Vec<u32>> = docs.par_chunks(16).map(align).collect::<Result<_>>()?;
        parts.concat()
    } else {
        align(&docs)?
    };
    for (h, s) in hits.iter_mut().zip(scores) {
        h.sw_score = Some(s);
    }

    let key = |h: &SearchHit| -> f64 {
        let sw = h.sw_score.unwrap_or(0) as f64;
        if cfg.normalize_sw {
            let doc_len = corpus.get(&h.doc_id).map_or(1, |d| d.len());
            sw / cfg.sw_scoring.max_score(query.len(), doc_len).max(1) as f64
        } else {
            sw
        }
    };
    hits.sort_by(|a, b| {
        key(b)
            .total_cmp(&key(a))
            .then_with(|| b.cosine.unwrap_or(0.0).total_cmp(&a.cosine.unwrap_or(0.0)))
            .then_with(|| a.doc_id.cmp(&b.doc_id))
    });
    Ok(SearchOutcome::ranked(hits))
}

fn by_score_desc(a: &(f64, usize), b: &(f64, usize), ids: &[String]) -> Ordering {
    b.0.total_cmp(&a.0).then_with(|| ids[a.1].cmp(&ids[b.1]))
}

/// Keeps the best `k` of `scored` (per `cmp`) in order.
fn top_k(
    mut scored: Vec<(f64, usize)>,
    k: usize,
    cmp: impl Fn(&(f64, usize), &(f64, usize)) -> Ordering,
) -> Vec<(f64, usize)> {
    if k < scored.len() {
        scored.select_nth_unstable_by(k, &cmp);
        scored.truncate(k);
    }
    scored.sort_by(&cmp);
    scored
}

fn cosine_hits(vectors: &CorpusVectors, q: &SparseVector, candidates: Vec<usize>, k: usize) -> SearchOutcome {
    let ids = vectors.doc_ids();
    let docs = vectors.vectors();
    let probe = CosineProbe::new(q);
    let scored = candidates
        .into_iter()
        .map(|i| (probe.cosine(&docs[i]), i))
        .collect();
    let hits = top_k(scored, k, |a, b| by_score_desc(a, b, ids))
        .into_iter()
        .map(|(s, i)| SearchHit::cosine(ids[i].clone(), s))
        .collect();
    SearchOutcome::ranked(hits)
}

/// Exact cosine against every document; top `k`, ties by ascending doc id.
pub fn brute_force_search(
    vectors: &CorpusVectors,
    query: &TokenSequence,
    k: usize,
) -> Result<SearchOutcome> {
    if query.is_empty() {
        return Err(Error::EmptySequence);
    }
    let q = vectors.query_vector(query);
    if q.norm() == 0.0 {
        return Ok(SearchOutcome::no_overlap());
    }
    Ok(cosine_hits(vectors, &q, (0..vectors.len()).collect(), k))
}

/// Token → documents containing it. Postings hold corpus positions sorted by
/// ascending doc id.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InvertedIndex {
    doc_ids: Vec<String>,
    postings: BTreeMap<TokenId, Vec<usize>>,
}

impl InvertedIndex {
    /// Ids of the documents containing `token`, ascending.
    pub fn get(&self, token: TokenId) -> Vec<&str> {
        self.postings
            .get(&token)
            .map(|p| p.iter().map(|&i| self.doc_ids[i].as_str()).collect())
            .unwrap_or_default()
    }

    pub fn tokens(&self) -> impl Iterator<Item = TokenId> + '_ {
        self.postings.keys().copied()
    }

    /// Union of the postings of the query's distinct tokens, as corpus positions.
    pub fn candidates(&self, query: &[TokenId]) -> Vec<usize> {
        let mut seen = vec![false; self.doc_ids.len()];
        let mut out = Vec::new();
        let mut tokens = query.to_vec();
        tokens.sort_unstable();
        tokens.dedup();
        for t in tokens {
            for &d in self.postings.get(&t).map_or(&[][..], Vec::as_slice) {
                if !seen[d] {
                    seen[d] = true;
                    out.push(d);
                }
            }
        }
        out
    }
}

pub fn build_inverted_index(corpus: &Corpus) -> InvertedIndex {
    let mut postings: BTreeMap<TokenId, Vec<usize>> = BTreeMap::new();
    for (i, doc) in corpus.iter().enumerate() {
        let mut tokens = doc.tokens.clone();
        tokens.sort_unstable();
        tokens.dedup();
        for t in tokens {
            postings.entry(t).or_default().push(i);
        }
    }
    let doc_ids: Vec<String> = corpus.iter().map(|d| d.doc_id.clone()).collect();
    for list in postings.values_mut() {
        list.sort_by(|&a, &b| doc_ids[a].cmp(&doc_ids[b]));
    }
    InvertedIndex { doc_ids, postings }
}

/// Scores only documents sharing at least one token with the query.
pub fn inverted_search(
    inv: &InvertedIndex,
    vectors: &CorpusVectors,
    query: &TokenSequence,
    k: usize,
) -> Result<SearchOutcome> {
    if query.is_empty() {
        return Err(Error::EmptySequence);
    }
    let candidates = inv.candidates(&query.tokens);
    if candidates.is_empty() {
        return Ok(SearchOutcome::no_overlap());
    }
    let q = vectors.query_vector(query);
    Ok(cosine_hits(vectors, &q, candidates, k))
}

/// DTW distance against every document; top `k` ascending, ties by doc id.
pub fn dtw_search(corpus: &Corpus, query: &TokenSequence, k: usize) -> Result<SearchOutcome> {
    if query.is_empty() {
        return Err(Error::EmptySequence);
    }
    let ids: Vec<&String> = corpus.iter().map(|d| &d.doc_id).collect();
    let scored = corpus
        .iter()
        .enumerate()
        .map(|(i, d)| Ok((dtw_distance(&query.tokens, &d.tokens)?, i)))
        .collect::<Result<Vec<_>>>()?;
    let hits = top_k(scored, k, |a, b| {
        a.0.total_cmp(&b.0).then_with(|| ids[a.1].cmp(ids[b.1]))
    })
    .into_iter()
    .map(|(dist, i)| SearchHit {
        doc_id: ids[i].clone(),
        cosine: None,
        sw_score: None,
        dtw_distance: Some(dist),
        final_rank: 0,
    })
    .collect();
    Ok(SearchOutcome::ranked(hits))
}

/// A corpus with everything needed to run any of the four methods.
#[derive(Debug, Clone)]
pub struct SearchEngine {
    corpus: Corpus,
    vectors: CorpusVectors,
    inverted: InvertedIndex,
    index: Option<HnswIndex>,
}

impl SearchEngine {
    pub fn new(corpus: Corpus) -> Self {
        let vectors = CorpusVectors::build(&corpus);
        let inverted = build_inverted_index(&corpus);
        Self {
            corpus,
            vectors,
            inverted,
            index: None,
        }
    }

    /// Builds the HNSW graph over the corpus TF-IDF vectors.
    pub fn build_index(&mut self, params: HnswParams) -> Result<&HnswIndex> {
        let index = HnswIndex::from_corpus(&self.vectors, params)?;
        Ok(self.index.insert(index))
    }

    /// Attaches a prebuilt graph; its documents must match the corpus.
    pub fn with_index(mut self, index: HnswIndex) -> Result<Self> {
        if index.doc_ids() != self.vectors.doc_ids() {
            return Err(Error::Snapshot(
                "index documents do not match the corpus".into(),
            ));
        }
        self.index = Some(index);
        Ok(self)
    }

    pub fn corpus(&self) -> &Corpus {
        &self.corpus
    }

    pub fn vectors(&self) -> &CorpusVectors {
        &self.vectors
    }

    pub fn inverted(&self) -> &InvertedIndex {
        &self.inverted
    }

    pub fn index(&self) -> Option<&HnswIndex> {
        self.index.as_ref()
    }

    pub fn search(
        &self,
        method: Method,
        query: &TokenSequence,
        cfg: &PipelineConfig,
    ) -> Result<SearchOutcome> {
        match method {
            Method::Hquest => {
                let index = self
                    .index
                    .as_ref()
                    .ok_or(Error::MissingInput("HNSW index"))?;
                hquest_search(index, &self.corpus, &self.vectors.vocabulary, query, cfg)
            }
            Method::Brute => brute_force_search(&self.vectors, query, cfg.k),
            Method::Inverted => inverted_search(&self.inverted, &self.vectors, query, cfg.k),
            Method::Dtw => dtw_search(&self.corpus, query, cfg.k),
        }
    }
}

/// One line of search output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryResult {
    pub query_id: String,
    pub method: Method,
    pub status: QueryStatus,
    pub hits: Vec<SearchHit>,
    pub elapsed_us: u64,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> Corpus {
        Corpus::new(vec![
            TokenSequence::new("d1", vec![1, 1, 2]),
            TokenSequence::new("d2", vec![1, 3]),
            TokenSequence::new("d3", vec![2, 2, 3]),
        ])
        .unwrap()
    }

    fn q(tokens: &[TokenId]) -> TokenSequence {
        TokenSequence::new("q", tokens.to_vec())
    }

    #[test]
    fn inverted_index_postings() {
        let inv = build_inverted_index(&toy());
        assert_eq!(inv.get(1), vec!["d1", "d2"]);
        assert_eq!(inv.get(2), vec!["d1", "d3"]);
        assert_eq!(inv.get(3), vec!["d2", "d3"]);
        assert!(inv.get(9).is_empty());
    }

    #[test]
    fn inverted_search_scores_only_candidates() {
        let corpus = toy();
        let inv = build_inverted_index(&corpus);
        let vectors = CorpusVectors::build(&corpus);
        let out = inverted_search(&inv, &vectors, &q(&[3]), 10).unwrap();
        assert_eq!(out.doc_ids(), vec!["d2", "d3"]);
        let none = inverted_search(&inv, &vectors, &q(&[9]), 10).unwrap();
        assert!(none.hits.is_empty());
        assert_eq!(none.status, QueryStatus::NoVocabularyOverlap);
    }

    #[test]
    fn brute_force_full_ranking_when_k_exceeds_n() {
        let vectors = CorpusVectors::build(&toy());
        let out = brute_force_search(&vectors, &q(&[1, 2]), 10).unwrap();
        assert_eq!(out.hits.len(), 3);
        let ranks: Vec<usize> = out.hits.iter().map(|h| h.final_rank).collect();
        assert_eq!(ranks, vec![1, 2, 3]);
        assert!(out
            .hits
            .windows(2)
            .all(|w| w[0].cosine >= w[1].cosine));
    }

    #[test]
    fn dtw_search_examples() {
        let corpus = toy();
        let out = dtw_search(&corpus, &q(&[1, 3]), 3).unwrap();
        assert_eq!(out.hits[0].doc_id, "d2");
        assert_eq!(out.hits[0].dtw_distance, Some(0.0));

        let same = Corpus::new(
            ["c", "a", "b"]
                .iter()
                .map(|id| TokenSequence::new(*id, vec![4, 4]))
                .collect(),
        )
        .unwrap();
        assert_eq!(dtw_search(&same, &q(&[4]), 3).unwrap().doc_ids(), vec!["a", "b", "c"]);
    }

    #[test]
    fn method_names_round_trip() {
        for m in Method::ALL {
            assert_eq!(m.name().parse::<Method>().unwrap(), m);
        }
        assert!(matches!("bm25".parse::<Method>(), Err(Error::UnknownMethod(_))));
    }

    #[test]
    fn hquest_needs_an_index() {
        let engine = SearchEngine::new(toy());
        let err = engine
            .search(Method::Hquest, &q(&[1]), &PipelineConfig::default())
            .unwrap_err();
        assert!(matches!(err, Error::MissingInput(_)));
    }

    #[test]
    fn hquest_oov_query_has_status() {
        let mut engine = SearchEngine::new(toy());
        engine.build_index(HnswParams::default()).unwrap();
        let out = engine
            .search(Method::Hquest, &q(&[42, 43]), &PipelineConfig::default())
            .unwrap();
        assert!(out.hits.is_empty());
        assert_eq!(out.status, QueryStatus::NoVocabularyOverlap);
    }

    #[test]
    fn result_json_shape() {
        let r = QueryResult {
            query_id: "q1".into(),
            method: Method::Hquest,
            status: QueryStatus::Ok,
            hits: vec![SearchHit {
                doc_id: "d1".into(),
                cosine: Some(0.5),
                sw_score: Some(6),
                dtw_distance: None,
                final_rank: 1,
            }],
            elapsed_us: 12,
        };
        let json = serde_json::to_string(&r).unwrap();
        assert_eq!(
            json,
            r#"{"query_id":"q1","method":"hquest","status":"ok","hits":[{"doc_id":"d1","cosine":0.5,"sw":6,"rank":1}],"elapsed_us":12}"#
        );
    }
}
