//! Save the corpus and graph, reload both, and check nothing moved.
//!
//!     cargo run --release --example persistence

use hquest::corpus::save_corpus;
use hquest::prelude::*;

fn main() -> Result<()> {
    let set = generate_synthetic(&SynthParams {
        n_docs: 3_000,
        n_queries: 5,
        ..Default::default()
    })?;
    let dir = std::env::temp_dir().join(format!("hquest-persist-{}", std::process::id()));
    std::fs::create_dir_all(&dir).map_err(|e| Error::Io { path: dir.clone(), source: e })?;
    let (corpus_path, index_path) = (dir.join("corpus.jsonl"), dir.join("index.hqx"));

    let mut engine = SearchEngine::new(set.corpus.clone());
    engine.build_index(HnswParams { rng_seed: 99, ..Default::default() })?;
    save_corpus(&corpus_path, engine.corpus())?;
    engine.index().unwrap().save(&index_path)?;
    let size = std::fs::metadata(&index_path).map(|m| m.len()).unwrap_or(0);
    println!("wrote {} ({size} bytes)", index_path.display());

    let reloaded = SearchEngine::new(load_corpus(&corpus_path)?).with_index(HnswIndex::load(&index_path)?)?;
    println!("reloaded graph, seed {}", reloaded.index().unwrap().params().rng_seed);

    let cfg = PipelineConfig::default();
    for q in &set.queries {
        let a = engine.search(Method::Hquest, q, &cfg)?;
        let b = reloaded.search(Method::Hquest, q, &cfg)?;
        assert_eq!(a, b);
    }
    println!("{} queries ranked identically", set.queries.len());

    // A snapshot never pairs with a different corpus.
    let other = generate_synthetic(&SynthParams { n_docs: 10, doc_len: 20, n_queries: 1, ..Default::default() })?;
    let err = SearchEngine::new(other.corpus).with_index(HnswIndex::load(&index_path)?).unwrap_err();
    println!("mismatched corpus: {err}");

    std::fs::remove_dir_all(&dir).ok();
    Ok(())
}
