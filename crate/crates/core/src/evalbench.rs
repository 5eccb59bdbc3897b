//! Retrieval metrics (P@K, AP, MAP, FRR) and the timed method comparison.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{write_json, RelevanceJudgments, TokenSequence};
use crate::error::{Error, Result};
use crate::hnsw::HnswParams;
use crate::search::{Method, PipelineConfig, QueryStatus, SearchEngine, SearchOutcome};

/// `|top-k ∩ relevant| / k`; missing slots count as misses.
pub fn precision_at_k<S: AsRef<str>>(ranked: &[S], relevant: &BTreeSet<String>, k: usize) -> f64 {
    assert!(k >= 1, "k must be >= 1");
    let hits = ranked
        .iter()
        .take(k)
        .filter(|d| relevant.contains(d.as_ref()))
        .count();
    hits as f64 / k as f64
}

/// Mean of the precision at each relevant document's rank, over all relevant
/// documents; unretrieved ones contribute zero.
pub fn average_precision<S: AsRef<str>>(ranked: &[S], relevant: &BTreeSet<String>) -> Result<f64> {
    if relevant.is_empty() {
        return Err(Error::NoRelevant(String::new()));
    }
    let mut found = 0usize;
    let mut sum = 0.0;
    for (i, d) in ranked.iter().enumerate() {
        if relevant.contains(d.as_ref()) {
            found += 1;
            sum += found as f64 / (i + 1) as f64;
        }
    }
    Ok(sum / relevant.len() as f64)
}

pub fn mean_average_precision(per_query_aps: &[f64]) -> Result<f64> {
    if per_query_aps.is_empty() {
        return Err(Error::InvalidParameter("MAP over zero queries".into()));
    }
    Ok(per_query_aps.iter().sum::<f64>() / per_query_aps.len() as f64)
}

/// Fraction of positive utterances scoring below `threshold`. Positives with
/// no score count as rejected.
pub fn false_rejection_rate(
    scores: &BTreeMap<String, f64>,
    labels: &BTreeMap<String, bool>,
    threshold: f64,
) -> Result<f64> {
    if let Some(id) = scores.keys().find(|id| !labels.contains_key(*id)) {
        return Err(Error::MissingLabel(id.clone()));
    }
    let positives: Vec<&String> = labels.iter().filter(|(_, &l)| l).map(|(id, _)| id).collect();
    if positives.is_empty() {
        return Err(Error::NoPositives);
    }
    let rejected = positives
        .iter()
        .filter(|id| scores.get(id.as_str()).is_none_or(|&s| s < threshold))
        .count();
    Ok(rejected as f64 / positives.len() as f64)
}

/// Method-specific utterance score in `[0, 1]`: SW score over `2 * |query|`
/// for re-ranked H-QuEST hits, cosine for cosine hits, `1 - distance` for DTW.
fn hit_score(outcome_hit: &crate::search::SearchHit, query_len: usize, cfg: &PipelineConfig) -> f64 {
    if let Some(sw) = outcome_hit.sw_score {
        return sw as f64 / cfg.sw_scoring.max_score(query_len, query_len).max(1) as f64;
    }
    if let Some(d) = outcome_hit.dtw_distance {
        return 1.0 - d;
    }
    outcome_hit.cosine.unwrap_or(0.0)
}

fn median(values: &mut [f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    values.sort_by(f64::total_cmp);
    let mid = values.len() / 2;
    if values.len() % 2 == 1 {
        values[mid]
    } else {
        (values[mid - 1] + values[mid]) / 2.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryMetrics {
    pub query_id: String,
    pub status: QueryStatus,
    /// Median wall-clock time over the repetitions.
    pub latency_us: f64,
    pub n_hits: usize,
    /// `None` when the query has no judged relevant documents.
    pub ap: Option<f64>,
    pub p1: Option<f64>,
    pub p3: Option<f64>,
    pub p5: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodReport {
    pub method: Method,
    pub map: Option<f64>,
    pub p_at_1: Option<f64>,
    pub p_at_3: Option<f64>,
    pub p_at_5: Option<f64>,
    pub frr: Option<f64>,
    pub median_latency_us: f64,
    pub mean_latency_us: f64,
    /// Queries per second with all queries run on the rayon pool; only set in
    /// parallel mode and never mixed into the latency figures.
    pub throughput_qps: Option<f64>,
    /// Queries left out of the accuracy averages (no relevant documents).
    pub excluded: Vec<String>,
    pub queries: Vec<QueryMetrics>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportMetadata {
    pub n_docs: usize,
    pub vocab_size: usize,
    pub n_queries: usize,
    pub repetitions: usize,
    pub pipeline: PipelineConfig,
    pub hnsw: Option<HnswParams>,
    pub frr_threshold: Option<f64>,
    /// Index construction time, reported apart from query latency.
    pub index_build_ms: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub metadata: ReportMetadata,
    pub methods: Vec<MethodReport>,
}

impl EvalReport {
    pub fn method(&self, method: Method) -> Option<&MethodReport> {
        self.methods.iter().find(|m| m.method == method)
    }

    /// Flat `query_id,method,latency_us,ap,p1,p3,p5` table, one row per query
    /// and method.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("query_id,method,latency_us,ap,p1,p3,p5\n");
        let opt = |v: Option<f64>| v.map(|x| format!("{x:.6}")).unwrap_or_default();
        for m in &self.methods {
            for q in &m.queries {
                let _ = writeln!(
                    out,
                    "{},{},{:.3},{},{},{},{}",
                    csv_field(&q.query_id),
                    m.method,
                    q.latency_us,
                    opt(q.ap),
                    opt(q.p1),
                    opt(q.p3),
                    opt(q.p5)
                );
            }
        }
        out
    }

    pub fn write(&self, json_path: impl AsRef<Path>, csv_path: impl AsRef<Path>) -> Result<()> {
        write_json(json_path.as_ref(), self)?;
        let csv_path = csv_path.as_ref();
        std::fs::write(csv_path, self.to_csv()).map_err(|e| Error::io(csv_path, e))
    }

    /// Fails if any configured threshold is violated.
    pub fn check(&self, thresholds: &Thresholds) -> Result<()> {
        let Some(m) = self.method(thresholds.method) else {
            return Err(Error::ThresholdViolated(format!(
                "method {} not in report",
                thresholds.method
            )));
        };
        let mut violations = Vec::new();
        let mut min = |name: &str, want: Option<f64>, got: Option<f64>| {
            if let Some(want) = want {
                match got {
                    Some(g) if g >= want => {}
                    g => violations.push(format!("{name} {g:?} < {want}")),
                }
            }
        };
        min("MAP", thresholds.min_map, m.map);
        min("P@5", thresholds.min_p_at_5, m.p_at_5);
        if let Some(max) = thresholds.max_frr {
            match m.frr {
                Some(f) if f <= max => {}
                f => violations.push(format!("FRR {f:?} > {max}")),
            }
        }
        if violations.is_empty() {
            Ok(())
        } else {
            Err(Error::ThresholdViolated(format!(
                "{}: {}",
                thresholds.method,
                violations.join("; ")
            )))
        }
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Quality gates checked after an evaluation run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Thresholds {
    pub method: Method,
    pub min_map: Option<f64>,
    pub min_p_at_5: Option<f64>,
    pub max_frr: Option<f64>,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self {
            method: Method::Hquest,
            min_map: None,
            min_p_at_5: None,
            max_frr: None,
        }
    }
}

impl Thresholds {
    pub fn is_empty(&self) -> bool {
        self.min_map.is_none() && self.min_p_at_5.is_none() && self.max_frr.is_none()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchOptions {
    pub repetitions: usize,
    /// Computes FRR when the judgments carry utterance labels.
    pub frr_threshold: Option<f64>,
    pub parallel: bool,
    pub index_build_ms: Option<f64>,
}

impl Default for BenchOptions {
    fn default() -> Self {
        Self {
            repetitions: 1,
            frr_threshold: Some(0.5),
            parallel: false,
            index_build_ms: None,
        }
    }
}

/// Runs every query through every method, timing each query sequentially on
/// the calling thread (median over `repetitions`) and scoring the rankings
/// against `judgments`.
pub fn run_benchmark(
    engine: &SearchEngine,
    queries: &[TokenSequence],
    judgments: &RelevanceJudgments,
    methods: &[Method],
    cfg: &PipelineConfig,
    opts: &BenchOptions,
) -> Result<EvalReport> {
    cfg.validate()?;
    if opts.repetitions == 0 {
        return Err(Error::InvalidParameter("repetitions must be >= 1".into()));
    }
    if methods.contains(&Method::Hquest) && engine.index().is_none() {
        return Err(Error::MissingInput("HNSW index"));
    }
    judgments.validate(engine.corpus())?;

    let mut reports = Vec::with_capacity(methods.len());
    for &method in methods {
        let mut per_query = Vec::with_capacity(queries.len());
        let mut outcomes: Vec<SearchOutcome> = Vec::with_capacity(queries.len());
        for query in queries {
            let mut times = Vec::with_capacity(opts.repetitions);
            let mut outcome = None;
            for _ in 0..opts.repetitions {
                let start = Instant::now();
                let out = engine.search(method, query, cfg)?;
                times.push(start.elapsed().as_secs_f64() * 1e6);
                outcome.get_or_insert(out);
            }
            let outcome = outcome.expect("repetitions >= 1");
            let ranked = outcome.doc_ids();
            let relevant = judgments.relevant_for(&query.doc_id).filter(|r| !r.is_empty());
            let metric = |f: &dyn Fn(&BTreeSet<String>) -> f64| relevant.map(f);
            per_query.push(QueryMetrics {
                query_id: query.doc_id.clone(),
                status: outcome.status,
                latency_us: median(&mut times),
                n_hits: ranked.len(),
                ap: metric(&|r| average_precision(&ranked, r).expect("non-empty")),
                p1: metric(&|r| precision_at_k(&ranked, r, 1)),
                p3: metric(&|r| precision_at_k(&ranked, r, 3)),
                p5: metric(&|r| precision_at_k(&ranked, r, 5)),
            });
            outcomes.push(outcome);
        }

        let scored: Vec<&QueryMetrics> = per_query.iter().filter(|q| q.ap.is_some()).collect();
        let mean = |f: fn(&QueryMetrics) -> Option<f64>| -> Option<f64> {
            let v: Vec<f64> = scored.iter().filter_map(|q| f(q)).collect();
            mean_average_precision(&v).ok()
        };
        let frr = match (&judgments.labels, opts.frr_threshold) {
            (Some(labels), Some(threshold)) => {
                let mut scores: BTreeMap<String, f64> = BTreeMap::new();
                for (query, outcome) in queries.iter().zip(&outcomes) {
                    for hit in &outcome.hits {
                        let s = hit_score(hit, query.len(), cfg);
                        let e = scores.entry(hit.doc_id.clone()).or_insert(s);
                        *e = e.max(s);
                    }
                }
                scores.retain(|id, _| labels.contains_key(id));
                Some(false_rejection_rate(&scores, labels, threshold)?)
            }
            _ => None,
        };
        let throughput_qps = if opts.parallel {
            let start = Instant::now();
            queries
                .par_iter()
                .map(|q| engine.search(method, q, cfg).map(|_| ()))
                .collect::<Result<Vec<()>>>()?;
            Some(queries.len() as f64 / start.elapsed().as_secs_f64())
        } else {
            None
        };

        let mut latencies: Vec<f64> = per_query.iter().map(|q| q.latency_us).collect();
        let mean_latency_us = latencies.iter().sum::<f64>() / latencies.len().max(1) as f64;
        reports.push(MethodReport {
            method,
            map: mean(|q| q.ap),
            p_at_1: mean(|q| q.p1),
            p_at_3: mean(|q| q.p3),
            p_at_5: mean(|q| q.p5),
            frr,
            median_latency_us: median(&mut latencies),
            mean_latency_us,
            throughput_qps,
            excluded: per_query
                .iter()
                .filter(|q| q.ap.is_none())
                .map(|q| q.query_id.clone())
                .collect(),
            queries: per_query,
        });
    }

    Ok(EvalReport {
        metadata: ReportMetadata {
            n_docs: engine.corpus().len(),
            vocab_size: engine.vectors().vocabulary.len(),
            n_queries: queries.len(),
            repetitions: opts.repetitions,
            pipeline: cfg.clone(),
            hnsw: engine.index().map(|i| i.params().clone()),
            frr_threshold: judgments.labels.as_ref().and(opts.frr_threshold),
            index_build_ms: opts.index_build_ms,
        },
        methods: reports,
    })
}
