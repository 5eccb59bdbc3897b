//! Reference implementations shared by the integration tests. Each one is the
//! most direct reading of its definition: full matrices, hash maps, full
//! sorts. None of them call into the library's kernels.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet, HashMap};

use hquest::corpus::TokenId;
use hquest::hnsw::HnswIndex;
use hquest::vectorize::{cosine_similarity, SparseVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_tokens(rng: &mut ChaCha8Rng, len: std::ops::RangeInclusive<usize>, vocab: u32) -> Vec<TokenId> {
    let n = rng.random_range(len);
    (0..n).map(|_| rng.random_range(0..vocab)).collect()
}

/// Full (|a|+1) x (|b|+1) Smith-Waterman table.
pub fn naive_sw(a: &[TokenId], b: &[TokenId], m: i64, mm: i64, gap: i64) -> u32 {
    let mut h = vec![vec![0i64; b.len() + 1]; a.len() + 1];
    let mut best = 0;
    for i in 1..=a.len() {
        for j in 1..=b.len() {
            let s = if a[i - 1] == b[j - 1] { m } else { mm };
            h[i][j] = *[0, h[i - 1][j - 1] + s, h[i - 1][j] + gap, h[i][j - 1] + gap]
                .iter()
                .max()
                .unwrap();
            best = best.max(h[i][j]);
        }
    }
    best as u32
}

/// Full DTW table with infinite borders, divided by |a| + |b|.
pub fn naive_dtw(a: &[TokenId], b: &[TokenId]) -> f64 {
    let inf = f64::INFINITY;
    let mut d = vec![vec![inf; b.len() + 1]; a.len() + 1];
    d[0][0] = 0.0;
    for i in 1..=a.len() {
        for j in 1..=b.len() {
            let cost = if a[i - 1] == b[j - 1] { 0.0 } else { 1.0 };
            d[i][j] = cost + d[i - 1][j - 1].min(d[i - 1][j]).min(d[i][j - 1]);
        }
    }
    d[a.len()][b.len()] / (a.len() + b.len()) as f64
}

pub fn naive_tfidf(docs: &[Vec<TokenId>]) -> Vec<HashMap<TokenId, f64>> {
    let n = docs.len() as f64;
    let mut df: HashMap<TokenId, f64> = HashMap::new();
    for d in docs {
        let set: BTreeSet<_> = d.iter().collect();
        for &t in set {
            *df.entry(t).or_default() += 1.0;
        }
    }
    docs.iter()
        .map(|d| {
            let mut tf: HashMap<TokenId, f64> = HashMap::new();
            for &t in d {
                *tf.entry(t).or_default() += 1.0;
            }
            tf.into_iter()
                .map(|(t, c)| (t, c * (n / df[&t]).ln()))
                .filter(|&(_, w)| w != 0.0)
                .collect()
        })
        .collect()
}

pub fn naive_cosine(a: &HashMap<TokenId, f64>, b: &HashMap<TokenId, f64>) -> f64 {
    let dot: f64 = a.iter().filter_map(|(t, x)| b.get(t).map(|y| x * y)).sum();
    let na = a.values().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.values().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

/// Exact top-k by a full sort: cosine descending, doc id ascending.
pub fn exact_top_k<'a>(
    docs: impl IntoIterator<Item = (&'a str, &'a SparseVector)>,
    q: &SparseVector,
    k: usize,
) -> Vec<(String, f64)> {
    let mut all: Vec<(String, f64)> = docs
        .into_iter()
        .map(|(id, v)| (id.to_string(), cosine_similarity(q, v)))
        .collect();
    all.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    all.truncate(k);
    all
}

pub fn naive_precision(ranked: &[&str], relevant: &BTreeSet<String>, k: usize) -> f64 {
    let mut hits = 0;
    for i in 0..k {
        if let Some(id) = ranked.get(i) {
            if relevant.contains(*id) {
                hits += 1;
            }
        }
    }
    hits as f64 / k as f64
}

pub fn naive_ap(ranked: &[&str], relevant: &BTreeSet<String>) -> f64 {
    let mut sum = 0.0;
    for (i, id) in ranked.iter().enumerate() {
        if relevant.contains(*id) {
            sum += naive_precision(ranked, relevant, i + 1);
        }
    }
    sum / relevant.len() as f64
}

pub fn naive_frr(scores: &BTreeMap<String, f64>, labels: &BTreeMap<String, bool>, threshold: f64) -> f64 {
    let mut pos = 0;
    let mut rejected = 0;
    for (id, &label) in labels {
        if label {
            pos += 1;
            match scores.get(id) {
                Some(&s) if s >= threshold => {}
                _ => rejected += 1,
            }
        }
    }
    rejected as f64 / pos as f64
}

/// Panics with the audit message if the graph breaks a structural invariant.
pub fn audited(index: HnswIndex) -> HnswIndex {
    if let Err(e) = index.audit() {
        panic!("graph audit failed: {e}");
    }
    index
}
