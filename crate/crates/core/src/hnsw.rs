//! Hierarchical navigable small world graph over sparse vectors, scored by
//! cosine similarity.
//!
//! Nodes draw a level from a geometric law (`floor(-ln(u) * mL)`). Insertion
//! descends greedily through the layers above the node's level, then runs an
//! `ef_construction`-wide best-first search on each remaining layer and links
//! the node to neighbors chosen by the diversity heuristic. Edges are kept
//! undirected: when a neighbor list overflows and is re-pruned, the dropped
//! node loses the reverse edge too.
//!
//! Degree caps are `max_neighbors` on upper layers and `2 * max_neighbors` on
//! layer 0. Zero-norm vectors are stored but never linked, since they have no
//! direction to compare against.
//!
//! [`HnswBuilder`] owns the mutable construction state; [`HnswBuilder::freeze`]
//! yields an immutable [`HnswIndex`] that can be searched from any number of
//! threads and persisted with [`HnswIndex::save`].

use std::cmp::{Ordering, Reverse};
use std::collections::{BinaryHeap, HashMap};
use std::fs;
use std::path::Path;

use log::warn;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::TokenId;
use crate::error::{Error, Result};
use crate::vectorize::{CorpusVectors, CosineProbe, SparseVector};

/// Magic header of persisted index snapshots.
pub const SNAPSHOT_MAGIC: &[u8] = b"HQUEST-IDX-1\n";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HnswParams {
    /// Neighbors per node on upper layers; layer 0 allows twice as many.
    pub max_neighbors: usize,
    pub ef_construction: usize,
    pub ef_search: usize,
    /// Level normalization mL; `None` means `1 / ln(max_neighbors)`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub level_norm: Option<f64>,
    pub rng_seed: u64,
}

impl Default for HnswParams {
    fn default() -> Self {
        Self {
            max_neighbors: 16,
            ef_construction: 150,
            ef_search: 150,
            level_norm: None,
            rng_seed: 42,
        }
    }
}

impl HnswParams {
    pub fn level_norm(&self) -> f64 {
        self.level_norm
            .unwrap_or_else(|| 1.0 / (self.max_neighbors as f64).ln())
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        if self.max_neighbors < 2 {
            return bad(format!("max_neighbors must be >= 2, got {}", self.max_neighbors));
        }
        if self.ef_construction < self.max_neighbors {
            return bad(format!(
                "ef_construction {} is below max_neighbors {}",
                self.ef_construction, self.max_neighbors
            ));
        }
        if self.ef_search == 0 {
            return bad("ef_search must be >= 1".into());
        }
        let ml = self.level_norm();
        if !(ml.is_finite() && ml > 0.0) {
            return bad(format!("level_norm must be positive, got {ml}"));
        }
        Ok(())
    }

    /// Degree cap on `level`.
    pub fn degree_cap(&self, level: usize) -> usize {
        if level == 0 {
            2 * self.max_neighbors
        } else {
            self.max_neighbors
        }
    }
}

/// Maps a uniform draw `u` in `(0, 1]` to a level: `floor(-ln(u) * level_norm)`.
pub fn assign_level(u: f64, level_norm: f64) -> usize {
    debug_assert!(u > 0.0 && u <= 1.0);
    (-u.ln() * level_norm).floor().max(0.0) as usize
}

/// One search result.
#[derive(Debug, Clone, PartialEq)]
pub struct Neighbor {
    pub doc_id: String,
    pub cosine: f64,
}

#[derive(Debug, Clone, Copy)]
struct Scored {
    sim: f64,
    node: u32,
}

impl PartialEq for Scored {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Scored {}

impl PartialOrd for Scored {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Scored {
    // Greater means closer; among equal similarities the lower node id wins.
    fn cmp(&self, other: &Self) -> Ordering {
        self.sim
            .total_cmp(&other.sim)
            .then_with(|| other.node.cmp(&self.node))
    }
}

struct Visited(Vec<u64>);

impl Visited {
    fn new(n: usize) -> Self {
        Self(vec![0; n.div_ceil(64)])
    }

    /// Marks `node`; returns true if it was not yet marked.
    fn insert(&mut self, node: u32) -> bool {
        let (word, bit) = ((node / 64) as usize, node % 64);
        let fresh = self.0[word] & (1 << bit) == 0;
        self.0[word] |= 1 << bit;
        fresh
    }
}

/// Every vector in three flat arrays, so a graph walk touches contiguous
/// memory that can be prefetched ahead of scoring.
#[derive(Debug, Clone, PartialEq)]
struct Arena {
    offsets: Vec<usize>,
    ids: Vec<TokenId>,
    weights: Vec<f64>,
    norms: Vec<f64>,
}

impl Arena {
    fn new() -> Self {
        Self {
            offsets: vec![0],
            ids: Vec::new(),
            weights: Vec::new(),
            norms: Vec::new(),
        }
    }

    fn push(&mut self, v: &SparseVector) {
        self.ids.extend_from_slice(v.ids());
        self.weights.extend_from_slice(v.weights());
        self.norms.push(v.norm());
        self.offsets.push(self.ids.len());
    }

    fn range(&self, node: u32) -> std::ops::Range<usize> {
        self.offsets[node as usize]..self.offsets[node as usize + 1]
    }

    fn norm(&self, node: u32) -> f64 {
        self.norms[node as usize]
    }

    fn vector(&self, node: u32) -> SparseVector {
        let r = self.range(node);
        SparseVector::from_sorted(
            self.ids[r.clone()].iter().copied().zip(self.weights[r].iter().copied()),
        )
    }

    fn probe(&self, node: u32) -> CosineProbe<'_> {
        let r = self.range(node);
        CosineProbe::from_parts(&self.ids[r.clone()], &self.weights[r], self.norm(node))
    }

    fn cosine(&self, q: &CosineProbe, node: u32) -> f64 {
        let r = self.range(node);
        q.cosine_parts(&self.ids[r.clone()], &self.weights[r], self.norm(node))
    }

    #[inline]
    fn prefetch(&self, node: u32) {
        #[cfg(target_arch = "x86_64")]
        #[allow(unused_unsafe)]
        unsafe {
            use std::arch::x86_64::{_mm_prefetch, _MM_HINT_T0};
            let r = self.range(node);
            for i in r.clone().step_by(16) {
                _mm_prefetch::<_MM_HINT_T0>(self.ids.as_ptr().wrapping_add(i).cast());
            }
            for i in r.step_by(8) {
                _mm_prefetch::<_MM_HINT_T0>(self.weights.as_ptr().wrapping_add(i).cast());
            }
        }
        #[cfg(not(target_arch = "x86_64"))]
        let _ = node;
    }
}

/// Frozen HNSW graph.
#[derive(Debug, Clone, PartialEq)]
pub struct HnswIndex {
    params: HnswParams,
    doc_ids: Vec<String>,
    positions: HashMap<String, u32>,
    vectors: Arena,
    /// `links[node][level]`; a node of level L has L + 1 lists.
    links: Vec<Vec<Vec<u32>>>,
    entry_point: Option<u32>,
}

impl HnswIndex {
    fn empty(params: HnswParams) -> Self {
        Self {
            params,
            doc_ids: Vec::new(),
            positions: HashMap::new(),
            vectors: Arena::new(),
            links: Vec::new(),
            entry_point: None,
        }
    }

    /// Inserts every vector in order with a seeded level stream, then freezes.
    pub fn build<S: Into<String>>(
        vectors: impl IntoIterator<Item = (S, SparseVector)>,
        params: HnswParams,
    ) -> Result<Self> {
        let mut builder = HnswBuilder::new(params)?;
        for (id, v) in vectors {
            builder.insert(id, v)?;
        }
        let zero = builder.index.zero_norm_nodes().count();
        if zero > 0 {
            warn!("{zero} zero-norm document vector(s) stored unlinked; only baselines can return them");
        }
        Ok(builder.freeze())
    }

    pub fn from_corpus(vectors: &CorpusVectors, params: HnswParams) -> Result<Self> {
        Self::build(
            vectors.iter().map(|(id, v)| (id.to_string(), v.clone())),
            params,
        )
    }

    pub fn params(&self) -> &HnswParams {
        &self.params
    }

    pub fn len(&self) -> usize {
        self.doc_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.doc_ids.is_empty()
    }

    pub fn doc_ids(&self) -> &[String] {
        &self.doc_ids
    }

    pub fn entry_point(&self) -> Option<&str> {
        self.entry_point.map(|e| self.doc_ids[e as usize].as_str())
    }

    /// Highest level present in the graph, or `None` when empty.
    pub fn top_level(&self) -> Option<usize> {
        self.entry_point.map(|e| self.level_of(e))
    }

    pub fn level(&self, doc_id: &str) -> Option<usize> {
        self.positions.get(doc_id).map(|&n| self.level_of(n))
    }

    pub fn vector(&self, doc_id: &str) -> Option<SparseVector> {
        self.positions.get(doc_id).map(|&n| self.vectors.vector(n))
    }

    /// Neighbor ids of `doc_id` on `level`.
    pub fn neighbors(&self, doc_id: &str, level: usize) -> Option<Vec<&str>> {
        let node = *self.positions.get(doc_id)?;
        let list = self.links[node as usize].get(level)?;
        Some(list.iter().map(|&n| self.doc_ids[n as usize].as_str()).collect())
    }

    /// Node counts per level (index = level).
    pub fn level_histogram(&self) -> Vec<usize> {
        let mut hist = vec![0; self.top_level().map_or(1, |t| t + 1)];
        for lists in &self.links {
            hist[lists.len() - 1] += 1;
        }
        hist
    }

    /// Mean out-degree over the nodes present on `level`.
    pub fn mean_degree(&self, level: usize) -> f64 {
        let (sum, count) = self
            .links
            .iter()
            .filter_map(|l| l.get(level))
            .fold((0, 0), |(s, c), l| (s + l.len(), c + 1));
        if count == 0 {
            0.0
        } else {
            sum as f64 / count as f64
        }
    }

    pub fn zero_norm_docs(&self) -> Vec<&str> {
        self.zero_norm_nodes()
            .map(|n| self.doc_ids[n as usize].as_str())
            .collect()
    }

    fn zero_norm_nodes(&self) -> impl Iterator<Item = u32> + '_ {
        self.vectors
            .norms
            .iter()
            .enumerate()
            .filter(|(_, &norm)| norm == 0.0)
            .map(|(i, _)| i as u32)
    }

    /// Number of nodes reachable on layer 0 from the entry point.
    pub fn reachable_from_entry(&self) -> usize {
        let Some(entry) = self.entry_point else {
            return 0;
        };
        let mut visited = Visited::new(self.len());
        visited.insert(entry);
        let mut stack = vec![entry];
        let mut count = 1;
        while let Some(n) = stack.pop() {
            for &e in &self.links[n as usize][0] {
                if visited.insert(e) {
                    count += 1;
                    stack.push(e);
                }
            }
        }
        count
    }

    /// Number of nodes that take part in the graph (non-zero norm).
    pub fn linkable_len(&self) -> usize {
        self.len() - self.zero_norm_nodes().count()
    }

    fn level_of(&self, node: u32) -> usize {
        self.links[node as usize].len() - 1
    }

    fn score(&self, q: &CosineProbe, node: u32) -> Scored {
        Scored {
            sim: self.vectors.cosine(q, node),
            node,
        }
    }

    /// Beam-1 descent on one layer.
    fn greedy(&self, q: &CosineProbe, mut current: Scored, level: usize) -> Scored {
        loop {
            let mut improved = false;
            let list = &self.links[current.node as usize][level];
            for &e in list {
                self.vectors.prefetch(e);
            }
            for &e in list {
                let s = self.score(q, e);
                if s > current {
                    current = s;
                    improved = true;
                }
            }
            if !improved {
                return current;
            }
        }
    }

    /// Best-first search on one layer with a dynamic list of `ef` results.
    /// Returns results closest first.
    fn search_layer(
        &self,
        q: &CosineProbe,
        entry: &[Scored],
        ef: usize,
        level: usize,
    ) -> Vec<Scored> {
        let mut visited = Visited::new(self.len());
        let mut candidates: BinaryHeap<Scored> = BinaryHeap::new();
        let mut results: BinaryHeap<Reverse<Scored>> = BinaryHeap::new();
        for &ep in entry {
            if visited.insert(ep.node) {
                candidates.push(ep);
                results.push(Reverse(ep));
                if results.len() > ef {
                    results.pop();
                }
            }
        }
        let mut fresh = Vec::new();
        while let Some(c) = candidates.pop() {
            let worst = results.peek().expect("results never empty").0;
            if results.len() >= ef && c < worst {
                break;
            }
            fresh.clear();
            for &e in &self.links[c.node as usize][level] {
                if visited.insert(e) {
                    self.vectors.prefetch(e);
                    fresh.push(e);
                }
            }
            for &e in &fresh {
                let s = self.score(q, e);
                if results.len() < ef || s > results.peek().expect("non-empty").0 {
                    candidates.push(s);
                    results.push(Reverse(s));
                    if results.len() > ef {
                        results.pop();
                    }
                }
            }
        }
        // Ascending order of Reverse is closest first.
        results.into_sorted_vec().into_iter().map(|r| r.0).collect()
    }

    /// Top-`k` documents by cosine similarity to `q`, descending, ties by
    /// ascending doc id. Empty for an empty index or a zero-norm query.
    pub fn search(&self, q: &SparseVector, k: usize, ef_search: usize) -> Vec<Neighbor> {
        let Some(entry) = self.entry_point else {
            return Vec::new();
        };
        if q.norm() == 0.0 || k == 0 {
            return Vec::new();
        }
        let q = &CosineProbe::new(q);
        let mut ep = self.score(q, entry);
        for level in (1..=self.level_of(entry)).rev() {
            ep = self.greedy(q, ep, level);
        }
        let found = self.search_layer(q, &[ep], ef_search.max(k), 0);
        let mut hits: Vec<Neighbor> = found
            .into_iter()
            .map(|s| Neighbor {
                doc_id: self.doc_ids[s.node as usize].clone(),
                cosine: s.sim,
            })
            .collect();
        sort_neighbors(&mut hits);
        hits.truncate(k);
        hits
    }

    /// Checks layer nesting, degree caps, edge symmetry, absence of self-loops
    /// and duplicates, and that the entry point sits on the top level.
    pub fn audit(&self) -> std::result::Result<(), String> {
        let n = self.len();
        let mut max_level = None;
        let mut per_level = Vec::new();
        for (node, lists) in self.links.iter().enumerate() {
            if self.vectors.norm(node as u32) > 0.0 {
                per_level.resize(per_level.len().max(lists.len()), 0usize);
                per_level[..lists.len()].iter_mut().for_each(|c| *c += 1);
            }
        }
        for (node, lists) in self.links.iter().enumerate() {
            let id = &self.doc_ids[node];
            if lists.is_empty() {
                return Err(format!("{id}: no level-0 list"));
            }
            let zero = self.vectors.norm(node as u32) == 0.0;
            if zero && (lists.len() != 1 || !lists[0].is_empty()) {
                return Err(format!("{id}: zero-norm node is linked"));
            }
            if !zero {
                max_level = max_level.max(Some(lists.len() - 1));
            }
            for (level, list) in lists.iter().enumerate() {
                let cap = self.params.degree_cap(level);
                if list.len() > cap {
                    return Err(format!("{id}: degree {} > {cap} on level {level}", list.len()));
                }
                if !zero && list.is_empty() && per_level[level] > 1 {
                    return Err(format!("{id}: stranded on level {level}"));
                }
                let mut sorted = list.clone();
                sorted.sort_unstable();
                sorted.dedup();
                if sorted.len() != list.len() {
                    return Err(format!("{id}: duplicate edge on level {level}"));
                }
                for &e in list {
                    if e as usize >= n {
                        return Err(format!("{id}: dangling edge {e}"));
                    }
                    if e as usize == node {
                        return Err(format!("{id}: self-loop on level {level}"));
                    }
                    // The neighbor must exist on this level (nesting) and link back.
                    let back = self.links[e as usize].get(level).ok_or_else(|| {
                        format!("{id}: neighbor {} absent from level {level}", self.doc_ids[e as usize])
                    })?;
                    if !back.contains(&(node as u32)) {
                        return Err(format!(
                            "{id}: edge to {} on level {level} is not symmetric",
                            self.doc_ids[e as usize]
                        ));
                    }
                }
            }
        }
        match (self.entry_point, max_level) {
            (None, None) => Ok(()),
            (Some(e), Some(top)) if self.level_of(e) == top && self.vectors.norm(e) > 0.0 => Ok(()),
            (e, top) => Err(format!(
                "entry point {:?} is not on the top level {top:?}",
                e.map(|e| self.level_of(e))
            )),
        }
    }

    /// Serializes the index to the versioned binary snapshot format.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Vec::new();
        w.extend_from_slice(SNAPSHOT_MAGIC);
        let p = &self.params;
        put_u32(&mut w, p.max_neighbors as u32);
        put_u32(&mut w, p.ef_construction as u32);
        put_u32(&mut w, p.ef_search as u32);
        match p.level_norm {
            Some(ml) => {
                w.push(1);
                w.extend_from_slice(&ml.to_le_bytes());
            }
            None => w.push(0),
        }
        w.extend_from_slice(&p.rng_seed.to_le_bytes());

        put_u32(&mut w, self.len() as u32);
        for (node, id) in self.doc_ids.iter().enumerate() {
            put_u32(&mut w, id.len() as u32);
            w.extend_from_slice(id.as_bytes());
            put_u32(&mut w, self.level_of(node as u32) as u32);
            let r = self.vectors.range(node as u32);
            put_u32(&mut w, r.len() as u32);
            for (&t, weight) in self.vectors.ids[r.clone()].iter().zip(&self.vectors.weights[r]) {
                put_u32(&mut w, t);
                w.extend_from_slice(&weight.to_le_bytes());
            }
        }
        put_u32(&mut w, self.entry_point.unwrap_or(u32::MAX));
        for lists in &self.links {
            for list in lists {
                put_u32(&mut w, list.len() as u32);
                for &e in list {
                    put_u32(&mut w, e);
                }
            }
        }
        w
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(SNAPSHOT_MAGIC.len())? != SNAPSHOT_MAGIC {
            return Err(Error::Snapshot("missing HQUEST-IDX-1 header".into()));
        }
        let max_neighbors = r.u32()? as usize;
        let ef_construction = r.u32()? as usize;
        let ef_search = r.u32()? as usize;
        let level_norm = match r.take(1)?[0] {
            0 => None,
            1 => Some(r.f64()?),
            b => return Err(Error::Snapshot(format!("bad level_norm tag {b}"))),
        };
        let params = HnswParams {
            max_neighbors,
            ef_construction,
            ef_search,
            level_norm,
            rng_seed: r.u64()?,
        };
        params
            .validate()
            .map_err(|e| Error::Snapshot(e.to_string()))?;

        let n = r.u32()? as usize;
        let mut index = HnswIndex::empty(params);
        let mut levels = Vec::with_capacity(n);
        for node in 0..n {
            let len = r.u32()? as usize;
            let id = String::from_utf8(r.take(len)?.to_vec())
                .map_err(|_| Error::Snapshot(format!("node {node}: doc id is not UTF-8")))?;
            levels.push(r.u32()? as usize);
            let nnz = r.u32()? as usize;
            let mut pairs: Vec<(TokenId, f64)> = Vec::with_capacity(nnz.min(1 << 16));
            for _ in 0..nnz {
                pairs.push((r.u32()?, r.f64()?));
            }
            if pairs.windows(2).any(|p| p[0].0 >= p[1].0)
                || pairs.iter().any(|&(_, w)| !(w.is_finite() && w > 0.0))
            {
                return Err(Error::Snapshot(format!("node {node}: malformed vector")));
            }
            if index.positions.insert(id.clone(), node as u32).is_some() {
                return Err(Error::Snapshot(format!("duplicate doc id {id:?}")));
            }
            index.doc_ids.push(id);
            index.vectors.push(&SparseVector::from_pairs(pairs));
        }
        let entry = r.u32()?;
        index.entry_point = match entry {
            u32::MAX => None,
            e if (e as usize) < n => Some(e),
            e => return Err(Error::Snapshot(format!("entry point {e} out of range"))),
        };
        for &level in &levels {
            let mut lists = Vec::with_capacity(level + 1);
            for _ in 0..=level {
                let count = r.u32()? as usize;
                let mut list = Vec::with_capacity(count.min(1 << 16));
                for _ in 0..count {
                    let e = r.u32()?;
                    if e as usize >= n {
                        return Err(Error::Snapshot(format!("edge to node {e} out of range")));
                    }
                    list.push(e);
                }
                lists.push(list);
            }
            index.links.push(lists);
        }
        if r.pos != bytes.len() {
            return Err(Error::Snapshot("trailing bytes".into()));
        }
        Ok(index)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::from_bytes(&fs::read(path).map_err(|e| Error::io(path, e))?)
    }
}

/// Sorts by descending cosine, ties by ascending doc id.
pub(crate) fn sort_neighbors(hits: &mut [Neighbor]) {
    hits.sort_by(|a, b| {
        b.cosine
            .total_cmp(&a.cosine)
            .then_with(|| a.doc_id.cmp(&b.doc_id))
    });
}

fn put_u32(w: &mut Vec<u8>, v: u32) {
    w.extend_from_slice(&v.to_le_bytes());
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, len: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(len)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::Snapshot("truncated".into()))?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

/// Mutable construction state for an [`HnswIndex`].
pub struct HnswBuilder {
    index: HnswIndex,
    rng: ChaCha8Rng,
}

impl HnswBuilder {
    pub fn new(params: HnswParams) -> Result<Self> {
        params.validate()?;
        let rng = ChaCha8Rng::seed_from_u64(params.rng_seed);
        Ok(Self {
            index: HnswIndex::empty(params),
            rng,
        })
    }

    /// Read-only view of the graph built so far.
    pub fn index(&self) -> &HnswIndex {
        &self.index
    }

    pub fn freeze(self) -> HnswIndex {
        self.index
    }

    pub fn insert(&mut self, doc_id: impl Into<String>, v: SparseVector) -> Result<()> {
        let doc_id = doc_id.into();
        let idx = &mut self.index;
        if idx.positions.contains_key(&doc_id) {
            return Err(Error::DuplicateNode(doc_id));
        }
        let node = u32::try_from(idx.len())
            .ok()
            .filter(|&n| n < u32::MAX)
            .ok_or_else(|| Error::InvalidParameter("index is full".into()))?;
        idx.positions.insert(doc_id.clone(), node);
        idx.doc_ids.push(doc_id);
        let zero = v.norm() == 0.0;
        idx.vectors.push(&v);
        if zero {
            idx.links.push(vec![Vec::new()]);
            return Ok(());
        }

        let u = 1.0 - self.rng.random::<f64>();
        let level = assign_level(u, idx.params.level_norm());
        idx.links.push(vec![Vec::new(); level + 1]);

        let Some(entry) = idx.entry_point else {
            idx.entry_point = Some(node);
            return Ok(());
        };
        let top = idx.level_of(entry);
        let q = &CosineProbe::new(&v);

        let idx = &self.index;
        let mut ep = idx.score(q, entry);
        for lc in (level + 1..=top).rev() {
            ep = idx.greedy(q, ep, lc);
        }
        let mut entries = vec![ep];
        let m = idx.params.max_neighbors;
        let ef = idx.params.ef_construction;
        for lc in (0..=level.min(top)).rev() {
            let found = self.index.search_layer(q, &entries, ef, lc);
            let chosen = self.select_neighbors(&found, m);
            let cap = self.index.params.degree_cap(lc);
            // One edge at a time: a prune may already have linked the pair.
            for nb in chosen {
                let links = &mut self.index.links;
                if links[node as usize][lc].contains(&nb) {
                    continue;
                }
                links[node as usize][lc].push(nb);
                links[nb as usize][lc].push(node);
                for end in [nb, node] {
                    if self.index.links[end as usize][lc].len() > cap {
                        self.prune(end, lc);
                    }
                }
            }
            entries = found;
        }
        if level > top {
            self.index.entry_point = Some(node);
        }
        Ok(())
    }

    /// Diversity heuristic: walk candidates closest first and keep one only if
    /// it is at least as close to the base as to every kept neighbor. Slots
    /// left over are filled with the closest rejected candidates.
    fn select_neighbors(&self, candidates: &[Scored], m: usize) -> Vec<u32> {
        let vectors = &self.index.vectors;
        let mut kept: Vec<Scored> = Vec::with_capacity(m);
        let mut rejected = Vec::new();
        for &c in candidates {
            if kept.len() >= m {
                break;
            }
            let cv = vectors.probe(c.node);
            let diverse = kept.iter().all(|k| vectors.cosine(&cv, k.node) <= c.sim);
            if diverse {
                kept.push(c);
            } else {
                rejected.push(c);
            }
        }
        let room = m.saturating_sub(kept.len());
        kept.extend(rejected.into_iter().take(room));
        kept.sort_unstable_by(|a, b| b.cmp(a));
        kept.into_iter().map(|s| s.node).collect()
    }

    /// Re-selects an over-full neighbor list and drops reverse edges of the
    /// removed neighbors. A neighbor left with no edge on this level is
    /// reattached so pruning never strands a node.
    fn prune(&mut self, node: u32, level: usize) {
        let idx = &self.index;
        let base = &idx.vectors.probe(node);
        let mut candidates: Vec<Scored> = idx.links[node as usize][level]
            .iter()
            .map(|&e| idx.score(base, e))
            .collect();
        candidates.sort_unstable_by(|a, b| b.cmp(a));
        let kept = self.select_neighbors(&candidates, idx.params.degree_cap(level));
        let old = std::mem::replace(&mut self.index.links[node as usize][level], kept);
        let kept = &self.index.links[node as usize][level];
        let dropped: Vec<u32> = old.into_iter().filter(|e| !kept.contains(e)).collect();
        for d in dropped {
            self.index.links[d as usize][level].retain(|&x| x != node);
            self.reattach(node, d, level);
        }
    }

    /// Keeps a dropped neighbor two hops from `node`: links it to the closest
    /// kept neighbor of `node` when both have a free slot. A neighbor left
    /// with no edge at all is instead swapped in for `node`'s farthest
    /// neighbor that keeps another edge; with degree caps >= 2 one of the two
    /// always applies, so pruning never strands a node.
    fn reattach(&mut self, node: u32, orphan: u32, level: usize) {
        let idx = &self.index;
        let cap = idx.params.degree_cap(level);
        let links = &idx.links;
        let own = &links[orphan as usize][level];
        if own.len() >= cap {
            return;
        }
        let probe = &idx.vectors.probe(orphan);
        let best = links[node as usize][level]
            .iter()
            .filter(|&&k| links[k as usize][level].len() < cap && !own.contains(&k))
            .map(|&k| idx.score(probe, k))
            .max();
        let stranded = own.is_empty();
        let links = &mut self.index.links;
        if let Some(k) = best {
            links[k.node as usize][level].push(orphan);
            links[orphan as usize][level].push(k.node);
            return;
        }
        if !stranded {
            return;
        }
        let list = &links[node as usize][level];
        if let Some(pos) = list.iter().rposition(|&k| links[k as usize][level].len() > 1) {
            let k = list[pos];
            links[node as usize][level][pos] = orphan;
            links[k as usize][level].retain(|&x| x != node);
            links[orphan as usize][level].push(node);
        }
    }
}
