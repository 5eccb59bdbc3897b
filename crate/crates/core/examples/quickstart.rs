//! Plant a few queries in a synthetic corpus, index it, and look them up.
//!
//!     cargo run --release --example quickstart

use hquest::prelude::*;

fn main() -> Result<()> {
    let set = generate_synthetic(&SynthParams {
        n_docs: 2_000,
        doc_len: 60,
        n_queries: 3,
        ..Default::default()
    })?;

    let mut engine = SearchEngine::new(set.corpus);
    let index = engine.build_index(HnswParams::default())?;
    println!(
        "indexed {} docs, top level {:?}, entry {:?}",
        index.len(),
        index.top_level(),
        index.entry_point()
    );

    let cfg = PipelineConfig { k: 10, ..Default::default() };
    for q in &set.queries {
        let out = engine.search(Method::Hquest, q, &cfg)?;
        let relevant = set.judgments.relevant_for(&q.doc_id).unwrap();
        println!("\n{} {:?}", q.doc_id, q.tokens);
        for h in out.hits.iter().take(7) {
            let mark = if relevant.contains(&h.doc_id) { "*" } else { " " };
            println!(
                "  {mark} #{:<2} {}  sw {:>2}  cos {:.3}",
                h.final_rank,
                h.doc_id,
                h.sw_score.unwrap(),
                h.cosine.unwrap()
            );
        }
    }
    Ok(())
}
