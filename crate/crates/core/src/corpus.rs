//! Token sequences, corpora, vocabularies and relevance judgments.
//!
//! Corpora and query sets are stored as JSON lines, one
//! `{"id": <string>, "tokens": [<int>, ...]}` object per line. Judgments map a
//! query id to the ids of its relevant documents; labels map an utterance id to
//! whether it contains the keyword.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Discrete token id produced by an upstream tokenizer.
pub type TokenId = u32;

/// A document or query: an identifier plus its ordered tokens.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenSequence {
    #[serde(rename = "id")]
    pub doc_id: String,
    pub tokens: Vec<TokenId>,
}

impl TokenSequence {
    pub fn new(doc_id: impl Into<String>, tokens: Vec<TokenId>) -> Self {
        Self {
            doc_id: doc_id.into(),
            tokens,
        }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

/// An ordered, non-empty set of documents with unique ids.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Corpus {
    documents: Vec<TokenSequence>,
    positions: HashMap<String, usize>,
}

impl Corpus {
    pub fn new(documents: Vec<TokenSequence>) -> Result<Self> {
        if documents.is_empty() {
            return Err(Error::EmptyCorpus);
        }
        let mut positions = HashMap::with_capacity(documents.len());
        for (i, doc) in documents.iter().enumerate() {
            if doc.is_empty() {
                return Err(Error::EmptyTokens { line: i + 1 });
            }
            if positions.insert(doc.doc_id.clone(), i).is_some() {
                return Err(Error::DuplicateId {
                    id: doc.doc_id.clone(),
                    line: i + 1,
                });
            }
        }
        Ok(Self {
            documents,
            positions,
        })
    }

    pub fn documents(&self) -> &[TokenSequence] {
        &self.documents
    }

    /// Number of documents, N.
    pub fn len(&self) -> usize {
        self.documents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.documents.is_empty()
    }

    pub fn get(&self, doc_id: &str) -> Option<&TokenSequence> {
        self.positions.get(doc_id).map(|&i| &self.documents[i])
    }

    pub fn position(&self, doc_id: &str) -> Option<usize> {
        self.positions.get(doc_id).copied()
    }

    pub fn contains(&self, doc_id: &str) -> bool {
        self.positions.contains_key(doc_id)
    }

    pub fn iter(&self) -> std::slice::Iter<'_, TokenSequence> {
        self.documents.iter()
    }
}

impl<'a> IntoIterator for &'a Corpus {
    type Item = &'a TokenSequence;
    type IntoIter = std::slice::Iter<'a, TokenSequence>;

    fn into_iter(self) -> Self::IntoIter {
        self.documents.iter()
    }
}

/// Sorted set of the distinct token ids observed in a corpus.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    token_ids: Vec<TokenId>,
}

impl Vocabulary {
    pub fn token_ids(&self) -> &[TokenId] {
        &self.token_ids
    }

    /// Vocabulary size, M.
    pub fn len(&self) -> usize {
        self.token_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.token_ids.is_empty()
    }

    pub fn contains(&self, token: TokenId) -> bool {
        self.token_ids.binary_search(&token).is_ok()
    }
}

pub fn build_vocabulary(corpus: &Corpus) -> Vocabulary {
    let set: BTreeSet<TokenId> = corpus
        .iter()
        .flat_map(|d| d.tokens.iter().copied())
        .collect();
    Vocabulary {
        token_ids: set.into_iter().collect(),
    }
}

/// Ground truth for evaluation.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RelevanceJudgments {
    pub relevant: BTreeMap<String, BTreeSet<String>>,
    /// Utterance-level keyword labels, used for false rejection rate.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<BTreeMap<String, bool>>,
}

impl RelevanceJudgments {
    pub fn relevant_for(&self, query_id: &str) -> Option<&BTreeSet<String>> {
        self.relevant.get(query_id)
    }

    /// Checks that every referenced doc id exists in `corpus`.
    pub fn validate(&self, corpus: &Corpus) -> Result<()> {
        for (query_id, docs) in &self.relevant {
            if let Some(missing) = docs.iter().find(|d| !corpus.contains(d)) {
                return Err(Error::UnknownDocId {
                    id: missing.clone(),
                    context: format!("judgments for query {query_id:?}"),
                });
            }
        }
        if let Some(labels) = &self.labels {
            if let Some(missing) = labels.keys().find(|d| !corpus.contains(d)) {
                return Err(Error::UnknownDocId {
                    id: missing.clone(),
                    context: "labels".to_string(),
                });
            }
        }
        Ok(())
    }
}

/// Reads a JSON-lines sequence file. Blank lines are skipped; line numbers in
/// errors are 1-based.
pub fn load_sequences(path: impl AsRef<Path>) -> Result<Vec<TokenSequence>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let seq: TokenSequence = serde_json::from_str(&line).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: line_no,
            message: e.to_string(),
        })?;
        if seq.is_empty() {
            return Err(Error::EmptyTokens { line: line_no });
        }
        if !seen.insert(seq.doc_id.clone()) {
            return Err(Error::DuplicateId {
                id: seq.doc_id,
                line: line_no,
            });
        }
        out.push(seq);
    }
    Ok(out)
}

pub fn load_corpus(path: impl AsRef<Path>) -> Result<Corpus> {
    Corpus::new(load_sequences(path)?)
}

pub fn save_sequences<'a>(
    path: impl AsRef<Path>,
    sequences: impl IntoIterator<Item = &'a TokenSequence>,
) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for seq in sequences {
        serde_json::to_writer(&mut w, seq)?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn save_corpus(path: impl AsRef<Path>, corpus: &Corpus) -> Result<()> {
    save_sequences(path, corpus.iter())
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_reader(BufReader::new(file)).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        line: e.line(),
        message: e.to_string(),
    })
}

pub(crate) fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

/// Loads a judgments file: `{"<query id>": ["<doc id>", ...], ...}`.
pub fn load_judgments(path: impl AsRef<Path>) -> Result<RelevanceJudgments> {
    Ok(RelevanceJudgments {
        relevant: read_json(path.as_ref())?,
        labels: None,
    })
}

pub fn save_judgments(path: impl AsRef<Path>, judgments: &RelevanceJudgments) -> Result<()> {
    write_json(path.as_ref(), &judgments.relevant)
}

/// Loads a labels file: `{"<utterance id>": true | false, ...}`.
pub fn load_labels(path: impl AsRef<Path>) -> Result<BTreeMap<String, bool>> {
    read_json(path.as_ref())
}

pub fn save_labels(path: impl AsRef<Path>, labels: &BTreeMap<String, bool>) -> Result<()> {
    write_json(path.as_ref(), labels)
}

/// Parameters for [`generate_synthetic`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthParams {
    pub n_docs: usize,
    pub vocab_size: usize,
    pub doc_len: usize,
    pub n_queries: usize,
    pub query_len: usize,
    pub relevant_per_query: usize,
    /// Probability that each planted token is replaced by a different random token.
    pub mutate: f64,
    pub seed: u64,
}

impl Default for SynthParams {
    fn default() -> Self {
        Self {
            n_docs: 10_000,
            vocab_size: 51,
            doc_len: 200,
            n_queries: 30,
            query_len: 12,
            relevant_per_query: 5,
            mutate: 0.0,
            seed: 7,
        }
    }
}

impl SynthParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParameter(msg));
        if self.n_docs == 0 {
            return bad("n_docs must be at least 1".into());
        }
        if self.vocab_size < 2 {
            return bad(format!("vocab_size must be at least 2, got {}", self.vocab_size));
        }
        if self.vocab_size > TokenId::MAX as usize {
            return bad(format!("vocab_size {} exceeds the token id range", self.vocab_size));
        }
        if self.query_len == 0 || self.doc_len == 0 {
            return bad("query_len and doc_len must be at least 1".into());
        }
        if self.query_len > self.doc_len {
            return bad(format!(
                "query_len {} exceeds doc_len {}",
                self.query_len, self.doc_len
            ));
        }
        if self.relevant_per_query > self.n_docs {
            return bad(format!(
                "relevant_per_query {} exceeds n_docs {}",
                self.relevant_per_query, self.n_docs
            ));
        }
        if !(0.0..=1.0).contains(&self.mutate) {
            return bad(format!("mutate must lie in [0, 1], got {}", self.mutate));
        }
        Ok(())
    }
}

/// Output of [`generate_synthetic`].
#[derive(Debug, Clone)]
pub struct SyntheticSet {
    pub corpus: Corpus,
    pub queries: Vec<TokenSequence>,
    pub judgments: RelevanceJudgments,
}

pub fn doc_id(i: usize) -> String {
    format!("d{i:06}")
}

pub fn query_id(i: usize) -> String {
    format!("q{i:04}")
}

/// Generates uniform-random documents and plants each random query verbatim
/// (up to `mutate`) into `relevant_per_query` distinct documents. Plants never
/// overlap, so every planted occurrence survives later plants.
pub fn generate_synthetic(params: &SynthParams) -> Result<SyntheticSet> {
    params.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    // Substitutions draw from their own stream so the mutation rate leaves
    // queries and plant positions untouched.
    let mut mut_rng = ChaCha8Rng::seed_from_u64(params.seed);
    mut_rng.set_stream(1);
    let vocab = params.vocab_size as TokenId;

    let mut docs: Vec<Vec<TokenId>> = (0..params.n_docs)
        .map(|_| (0..params.doc_len).map(|_| rng.random_range(0..vocab)).collect())
        .collect();
    let mut occupied: Vec<Vec<(usize, usize)>> = vec![Vec::new(); params.n_docs];
    let mut order: Vec<usize> = Vec::with_capacity(params.n_docs);

    let mut queries = Vec::with_capacity(params.n_queries);
    let mut relevant = BTreeMap::new();
    let n_offsets = params.doc_len - params.query_len + 1;

    for q in 0..params.n_queries {
        let tokens: Vec<TokenId> = (0..params.query_len)
            .map(|_| rng.random_range(0..vocab))
            .collect();

        // Lazy Fisher-Yates over document indices; take the first documents
        // that still have room for a non-overlapping plant.
        order.clear();
        order.extend(0..params.n_docs);
        let mut chosen = BTreeSet::new();
        let mut next = 0;
        while chosen.len() < params.relevant_per_query && next < params.n_docs {
            let j = rng.random_range(next..params.n_docs);
            order.swap(next, j);
            let d = order[next];
            next += 1;

            let free: Vec<usize> = (0..n_offsets)
                .filter(|&o| {
                    occupied[d]
                        .iter()
                        .all(|&(s, e)| o + params.query_len <= s || o >= e)
                })
                .collect();
            if free.is_empty() {
                continue;
            }
            let offset = free[rng.random_range(0..free.len())];
            for (k, &t) in tokens.iter().enumerate() {
                let mut planted = t;
                if params.mutate > 0.0 && mut_rng.random_bool(params.mutate) {
                    planted = (t + 1 + mut_rng.random_range(0..vocab - 1)) % vocab;
                }
                docs[d][offset + k] = planted;
            }
            occupied[d].push((offset, offset + params.query_len));
            chosen.insert(doc_id(d));
        }
        if chosen.len() < params.relevant_per_query {
            return Err(Error::InvalidParameter(format!(
                "only {} documents have room to plant query {q}; need {}",
                chosen.len(),
                params.relevant_per_query
            )));
        }
        let id = query_id(q);
        relevant.insert(id.clone(), chosen);
        queries.push(TokenSequence::new(id, tokens));
    }

    let documents = docs
        .into_iter()
        .enumerate()
        .map(|(i, tokens)| TokenSequence::new(doc_id(i), tokens))
        .collect();
    Ok(SyntheticSet {
        corpus: Corpus::new(documents)?,
        queries,
        judgments: RelevanceJudgments {
            relevant,
            labels: None,
        },
    })
}
