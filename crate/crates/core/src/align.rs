//! Sequence scoring kernels: Smith-Waterman local alignment for re-ranking
//! and token-level DTW for the exhaustive baseline.

use serde::{Deserialize, Serialize};

use crate::corpus::TokenId;
use crate::error::{Error, Result};

/// Linear-gap Smith-Waterman scores. `gap` is added once per inserted or
/// deleted token, so it is non-positive.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SwScoring {
    #[serde(rename = "match")]
    pub match_score: i32,
    pub mismatch: i32,
    pub gap: i32,
}

impl Default for SwScoring {
    fn default() -> Self {
        Self {
            match_score: 2,
            mismatch: -1,
            gap: -2,
        }
    }
}

impl SwScoring {
    pub fn validate(&self) -> Result<()> {
        if self.match_score <= 0 || self.mismatch > 0 || self.gap > 0 {
            return Err(Error::InvalidParameter(format!(
                "scoring needs match > 0, mismatch <= 0, gap <= 0; got {self:?}"
            )));
        }
        Ok(())
    }

    /// Highest score any alignment of sequences with these lengths can reach.
    pub fn max_score(&self, a_len: usize, b_len: usize) -> u32 {
        self.match_score as u32 * a_len.min(b_len) as u32
    }
}

/// Best local alignment score between `a` and `b` (maximum cell of the DP
/// table, floored at zero). Uses one row sized by the shorter sequence.
pub fn smith_waterman(a: &[TokenId], b: &[TokenId], scoring: &SwScoring) -> Result<u32> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptySequence);
    }
    let (long, short) = if a.len() >= b.len() { (a, b) } else { (b, a) };
    let SwScoring {
        match_score,
        mismatch,
        gap,
    } = *scoring;

    // Single row: row[j] holds H(i-1, j) until overwritten with H(i, j); the
    // diagonal and left cells ride along in registers.
    let mut row = vec![0i32; short.len()];
    let mut best = 0i32;
    for &x in long {
        let (mut diag, mut left) = (0i32, 0i32);
        for (cell, &y) in row.iter_mut().zip(short) {
            let up = *cell;
            let s = if x == y { match_score } else { mismatch };
            // Only `left` carries a dependency from the previous cell.
            let h = (diag + s).max(up + gap).max(0).max(left + gap);
            *cell = h;
            diag = up;
            left = h;
            best = best.max(h);
        }
    }
    Ok(best as u32)
}

/// [`smith_waterman`] of `query` against each of `docs`, computed several
/// documents at a time in independent 16-bit lanes. Scores equal the one-pair
/// kernel; pairs whose score could overflow 16 bits use it directly.
pub fn smith_waterman_batch(
    query: &[TokenId],
    docs: &[&[TokenId]],
    scoring: &SwScoring,
) -> Result<Vec<u32>> {
    const LANES: usize = 16;
    if query.is_empty() || docs.iter().any(|d| d.is_empty()) {
        return Err(Error::EmptySequence);
    }
    let fits = |v: i64| v.abs() < i16::MAX as i64 / 2;
    let narrow = fits(scoring.match_score as i64 * query.len() as i64)
        && fits(scoring.mismatch as i64)
        && fits(scoring.gap as i64);
    if !narrow {
        return docs
            .iter()
            .map(|d| smith_waterman(query, d, scoring))
            .collect();
    }
    let (m, mm, gap) = (
        scoring.match_score as i16,
        scoring.mismatch as i16,
        scoring.gap as i16,
    );

    let mut out = Vec::with_capacity(docs.len());
    let mut row = vec![[0i16; LANES]; query.len()];
    for chunk in docs.chunks(LANES) {
        let rows = chunk.iter().map(|d| d.len()).max().unwrap_or(0);
        row.iter_mut().for_each(|r| *r = [0; LANES]);
        let mut best = [0i16; LANES];
        for i in 0..rows {
            // Lanes past the end of their document only see mismatches, which
            // can never lift a cell above the maximum already reached.
            let mut x = [0 as TokenId; LANES];
            let mut live = [0i16; LANES];
            for (lane, d) in chunk.iter().enumerate() {
                if let Some(&t) = d.get(i) {
                    x[lane] = t;
                    live[lane] = -1;
                }
            }
            let mut diag = [0i16; LANES];
            let mut left = [0i16; LANES];
            for (cell, &y) in row.iter_mut().zip(query) {
                let up = *cell;
                let mut h = [0i16; LANES];
                for l in 0..LANES {
                    let hit = -((x[l] == y) as i16) & live[l];
                    let s = (m & hit) | (mm & !hit);
                    // Bounded by the `narrow` check, so wrapping never wraps;
                    // it just keeps overflow checks out of the lane loop.
                    h[l] = diag[l]
                        .wrapping_add(s)
                        .max(up[l].wrapping_add(gap))
                        .max(0)
                        .max(left[l].wrapping_add(gap));
                    best[l] = best[l].max(h[l]);
                }
                *cell = h;
                diag = up;
                left = h;
            }
        }
        out.extend(best[..chunk.len()].iter().map(|&b| b as u32));
    }
    Ok(out)
}

/// DTW over binary token mismatch cost with diagonal, vertical and horizontal
/// steps, divided by `|a| + |b|`. Always in `[0, 1]`.
pub fn dtw_distance(a: &[TokenId], b: &[TokenId]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptySequence);
    }
    let (long, short) = if a.len() >= b.len() { (a, b) } else { (b, a) };

    // prev[j] = D(i-1, j); column 0 is unreachable except D(0, 0).
    let mut prev = vec![u32::MAX; short.len() + 1];
    let mut curr = vec![u32::MAX; short.len() + 1];
    prev[0] = 0;
    for &x in long {
        curr[0] = u32::MAX;
        for (j, &y) in short.iter().enumerate() {
            let cost = u32::from(x != y);
            let step = prev[j].min(prev[j + 1]).min(curr[j]);
            curr[j + 1] = step.saturating_add(cost);
        }
        std::mem::swap(&mut prev, &mut curr);
    }
    Ok(prev[short.len()] as f64 / (a.len() + b.len()) as f64)
}
