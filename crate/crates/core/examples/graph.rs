//! Grow an HNSW graph one vector at a time and watch its structure.
//!
//!     cargo run --release --example graph

use hquest::hnsw::HnswBuilder;
use hquest::prelude::*;

fn main() -> Result<()> {
    let set = generate_synthetic(&SynthParams {
        n_docs: 4_000,
        n_queries: 20,
        ..Default::default()
    })?;
    let vectors = CorpusVectors::build(&set.corpus);

    let mut builder = HnswBuilder::new(HnswParams::default())?;
    for (i, (id, v)) in vectors.iter().enumerate() {
        builder.insert(id, v.clone())?;
        if (i + 1).is_power_of_two() && i >= 255 {
            let g = builder.index();
            println!(
                "{:>5} nodes  levels {:?}  mean degree L0 {:.1}",
                g.len(),
                g.level_histogram(),
                g.mean_degree(0)
            );
        }
    }
    let index = builder.freeze();
    index.audit().map_err(Error::InvalidParameter)?;
    println!("audit ok, {} of {} reachable from the entry", index.reachable_from_entry(), index.linkable_len());

    // Recall against exhaustive cosine as the beam widens.
    for ef in [10, 50, 150, 400] {
        let mut found = 0;
        for q in &set.queries {
            let qv = vectors.query_vector(q);
            let mut exact: Vec<(f64, &str)> =
                vectors.iter().map(|(id, v)| (cosine_similarity(&qv, v), id)).collect();
            exact.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(b.1)));
            let approx = index.search(&qv, 10, ef);
            found += exact[..10].iter().filter(|(_, id)| approx.iter().any(|h| h.doc_id == *id)).count();
        }
        println!("ef {ef:>3}: recall@10 {:.3}", found as f64 / (10 * set.queries.len()) as f64);
    }
    Ok(())
}
