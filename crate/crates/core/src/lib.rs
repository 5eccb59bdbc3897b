//! Query-by-example retrieval over discrete token sequences.
//!
//! Documents are TF-IDF weighted sparse vectors indexed in an HNSW graph.
//! A query's term-frequency vector pulls the top-K nearest documents by
//! cosine similarity, and Smith-Waterman local alignment re-ranks them.
//! Brute-force cosine, inverted-index and DTW baselines share the same
//! corpus types, and [`evalbench`] scores any of them with P@K, MAP and FRR.
//!
//! ```
//! use hquest::prelude::*;
//!
//! let set = generate_synthetic(&SynthParams {
//!     n_docs: 200,
//!     doc_len: 40,
//!     n_queries: 2,
//!     ..Default::default()
//! })
//! .unwrap();
//! let mut engine = SearchEngine::new(set.corpus);
//! engine.build_index(HnswParams::default()).unwrap();
//! let out = engine
//!     .search(Method::Hquest, &set.queries[0], &PipelineConfig::default())
//!     .unwrap();
//! assert_eq!(out.hits[0].sw_score, Some(24));
//! ```

pub mod align;
pub mod cli;
pub mod corpus;
pub mod error;
pub mod evalbench;
pub mod hnsw;
pub mod search;
pub mod vectorize;

pub use error::{Error, Result};

pub mod prelude {
    pub use crate::align::{dtw_distance, smith_waterman, SwScoring};
    pub use crate::corpus::{
        build_vocabulary, generate_synthetic, load_corpus, Corpus, RelevanceJudgments, SynthParams,
        TokenId, TokenSequence, Vocabulary,
    };
    pub use crate::evalbench::{
        average_precision, false_rejection_rate, mean_average_precision, precision_at_k,
        run_benchmark, BenchOptions, EvalReport,
    };
    pub use crate::hnsw::{HnswIndex, HnswParams};
    pub use crate::search::{Method, PipelineConfig, SearchEngine, SearchHit, SearchOutcome};
    pub use crate::vectorize::{cosine_similarity, CorpusVectors, SparseVector};
    pub use crate::{Error, Result};
}
