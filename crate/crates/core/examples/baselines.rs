//! The same query through every retrieval method.
//!
//!     cargo run --release --example baselines

use std::time::Instant;

use hquest::prelude::*;

fn main() -> Result<()> {
    // Mutated plants: exact cosine can't tell a damaged occurrence from noise,
    // alignment can.
    let set = generate_synthetic(&SynthParams {
        n_docs: 3_000,
        doc_len: 32,
        n_queries: 1,
        mutate: 0.15,
        seed: 7,
        ..Default::default()
    })?;
    let mut engine = SearchEngine::new(set.corpus);
    engine.build_index(HnswParams::default())?;

    let q = &set.queries[0];
    let relevant = set.judgments.relevant_for(&q.doc_id).unwrap();
    let cfg = PipelineConfig::default();
    println!("query {:?}, relevant {relevant:?}\n", q.tokens);

    for method in Method::ALL {
        let t = Instant::now();
        let out = engine.search(method, q, &cfg)?;
        let us = t.elapsed().as_secs_f64() * 1e6;
        let ranked = out.doc_ids();
        let ap = average_precision(&ranked, relevant)?;
        println!(
            "{:<9} {us:>9.0} us  AP {ap:.3}  P@5 {:.2}  top3 {:?}",
            method.name(),
            precision_at_k(&ranked, relevant, 5),
            &ranked[..3]
        );
    }

    // Out-of-vocabulary queries are a status, not an error.
    let oov = TokenSequence::new("oov", vec![1000, 1001]);
    let out = engine.search(Method::Brute, &oov, &cfg)?;
    println!("\noov query: {:?}, {} hits", out.status, out.hits.len());
    Ok(())
}
