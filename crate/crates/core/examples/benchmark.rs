//! Accuracy and latency of all four methods on a planted corpus.
//!
//!     cargo run --release --example benchmark [n_docs]

use std::collections::BTreeMap;
use std::time::Instant;

use hquest::prelude::*;

fn main() -> Result<()> {
    let n_docs = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(5_000);
    let mut set = generate_synthetic(&SynthParams {
        n_docs,
        doc_len: 32,
        n_queries: 20,
        mutate: 0.1,
        ..Default::default()
    })?;

    // Utterance labels turn on the false-rejection figure.
    let mut labels: BTreeMap<String, bool> = set.corpus.iter().map(|d| (d.doc_id.clone(), false)).collect();
    for d in set.judgments.relevant.values().flatten() {
        labels.insert(d.clone(), true);
    }
    set.judgments.labels = Some(labels);

    let mut engine = SearchEngine::new(set.corpus.clone());
    let t = Instant::now();
    engine.build_index(HnswParams::default())?;
    let build_ms = t.elapsed().as_secs_f64() * 1e3;

    let opts = BenchOptions {
        repetitions: 3,
        index_build_ms: Some(build_ms),
        ..Default::default()
    };
    let report = run_benchmark(
        &engine,
        &set.queries,
        &set.judgments,
        &Method::ALL,
        &PipelineConfig::default(),
        &opts,
    )?;

    println!("{n_docs} docs, index built in {build_ms:.0} ms\n");
    println!("{:<9} {:>6} {:>6} {:>6} {:>11}", "method", "MAP", "P@5", "FRR", "median us");
    for m in &report.methods {
        println!(
            "{:<9} {:>6.3} {:>6.3} {:>6.3} {:>11.0}",
            m.method.name(),
            m.map.unwrap_or(f64::NAN),
            m.p_at_5.unwrap_or(f64::NAN),
            m.frr.unwrap_or(f64::NAN),
            m.median_latency_us
        );
    }
    Ok(())
}
