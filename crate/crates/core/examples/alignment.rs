//! Local alignment and warping distance on hand-made sequences.
//!
//!     cargo run --example alignment

use hquest::align::smith_waterman_batch;
use hquest::prelude::*;

fn main() -> Result<()> {
    let scoring = SwScoring::default();
    let query = [5, 6, 7, 8, 9, 10];
    let docs: [(&str, Vec<TokenId>); 4] = [
        ("verbatim", vec![1, 2, 5, 6, 7, 8, 9, 10, 3]),
        ("one substitution", vec![1, 5, 6, 7, 0, 9, 10, 3, 3]),
        ("one insertion", vec![5, 6, 7, 4, 8, 9, 10]),
        ("unrelated", vec![1, 2, 3, 4, 1, 2, 3, 4]),
    ];

    println!("match {} mismatch {} gap {}", scoring.match_score, scoring.mismatch, scoring.gap);
    for (name, d) in &docs {
        let sw = smith_waterman(&query, d, &scoring)?;
        let max = scoring.max_score(query.len(), d.len());
        println!(
            "{name:<17} sw {sw:>2}/{max:<2}  dtw {:.3}",
            dtw_distance(&query, d)?
        );
    }

    // Scoring many documents against one query at once.
    let slices: Vec<&[TokenId]> = docs.iter().map(|(_, d)| d.as_slice()).collect();
    println!("batch {:?}", smith_waterman_batch(&query, &slices, &scoring)?);

    // Heavier gaps make the insertion cost more than it gains.
    let strict = SwScoring { gap: -6, ..scoring };
    println!(
        "insertion with gap -6: {}",
        smith_waterman(&query, &docs[2].1, &strict)?
    );
    Ok(())
}
