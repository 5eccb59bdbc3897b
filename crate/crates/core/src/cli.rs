//! Command implementations behind the `hquest` binary. Each command takes a
//! fully resolved [`RunConfig`] so runs can be reproduced from the echoed
//! `config.json`.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use log::{info, warn};
use serde::{Deserialize, Serialize};

use crate::corpus::{
    generate_synthetic, load_corpus, load_judgments, load_labels, load_sequences, save_corpus,
    save_judgments, save_labels, save_sequences, write_json, SynthParams,
};
use crate::error::{Error, Result};
use crate::evalbench::{run_benchmark, BenchOptions, EvalReport, Thresholds};
use crate::hnsw::{HnswIndex, HnswParams};
use crate::search::{Method, PipelineConfig, QueryResult, SearchEngine};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub corpus: Option<PathBuf>,
    pub queries: Option<PathBuf>,
    pub judgments: Option<PathBuf>,
    pub labels: Option<PathBuf>,
    pub index: Option<PathBuf>,
    pub output_dir: Option<PathBuf>,
    pub pipeline: PipelineConfig,
    pub hnsw: HnswParams,
    pub methods: Vec<Method>,
    /// Overrides both `hnsw.rng_seed` and `synth.seed` when set.
    pub seed: Option<u64>,
    pub repetitions: usize,
    pub frr_threshold: f64,
    pub parallel: bool,
    pub thresholds: Thresholds,
    pub synth: SynthParams,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            corpus: None,
            queries: None,
            judgments: None,
            labels: None,
            index: None,
            output_dir: None,
            pipeline: PipelineConfig::default(),
            hnsw: HnswParams::default(),
            methods: vec![Method::Hquest],
            seed: None,
            repetitions: 1,
            frr_threshold: 0.5,
            parallel: false,
            thresholds: Thresholds::default(),
            synth: SynthParams::default(),
        }
    }
}

impl RunConfig {
    /// Reads a JSON config; unknown keys are rejected.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: e.line(),
            message: e.to_string(),
        })
    }

    /// Applies `seed` and validates the nested parameter blocks.
    pub fn resolved(mut self) -> Result<Self> {
        if let Some(seed) = self.seed {
            self.hnsw.rng_seed = seed;
            self.synth.seed = seed;
        }
        self.hnsw.validate()?;
        self.pipeline.validate()?;
        if self.methods.is_empty() {
            return Err(Error::InvalidParameter("no methods selected".into()));
        }
        if self.repetitions == 0 {
            return Err(Error::InvalidParameter("repetitions must be >= 1".into()));
        }
        Ok(self)
    }

    fn require<'a>(&self, path: &'a Option<PathBuf>, what: &'static str) -> Result<&'a Path> {
        path.as_deref().ok_or(Error::MissingInput(what))
    }

    fn output_dir(&self) -> Result<Option<&Path>> {
        match &self.output_dir {
            Some(dir) => {
                fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
                Ok(Some(dir))
            }
            None => Ok(None),
        }
    }

    /// Writes the effective configuration to `<output_dir>/config.json`.
    pub fn echo(&self) -> Result<()> {
        if let Some(dir) = self.output_dir()? {
            write_json(&dir.join("config.json"), self)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthManifest {
    pub params: SynthParams,
    pub corpus: PathBuf,
    pub queries: PathBuf,
    pub judgments: PathBuf,
    pub labels: PathBuf,
}

/// Generates a planted corpus and writes `corpus.jsonl`, `queries.jsonl`,
/// `judgments.json`, `labels.json` and `manifest.json` to the output directory.
/// Labels mark every document holding a planted query as positive.
pub fn cmd_gen_synth(cfg: &RunConfig) -> Result<SynthManifest> {
    let dir = cfg.output_dir()?.ok_or(Error::MissingInput("output directory"))?;
    let set = generate_synthetic(&cfg.synth)?;
    let manifest = SynthManifest {
        params: cfg.synth.clone(),
        corpus: dir.join("corpus.jsonl"),
        queries: dir.join("queries.jsonl"),
        judgments: dir.join("judgments.json"),
        labels: dir.join("labels.json"),
    };
    save_corpus(&manifest.corpus, &set.corpus)?;
    save_sequences(&manifest.queries, &set.queries)?;
    save_judgments(&manifest.judgments, &set.judgments)?;
    let mut labels: BTreeMap<String, bool> =
        set.corpus.iter().map(|d| (d.doc_id.clone(), false)).collect();
    for doc in set.judgments.relevant.values().flatten() {
        labels.insert(doc.clone(), true);
    }
    save_labels(&manifest.labels, &labels)?;
    write_json(&dir.join("manifest.json"), &manifest)?;
    cfg.echo()?;
    Ok(manifest)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BuildReport {
    pub n_docs: usize,
    pub vocab_size: usize,
    pub level_histogram: Vec<usize>,
    pub build_ms: f64,
    pub zero_norm_docs: Vec<String>,
    pub snapshot: Option<PathBuf>,
}

impl BuildReport {
    pub fn summary(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "N = {}", self.n_docs);
        let _ = writeln!(s, "M = {}", self.vocab_size);
        for (level, count) in self.level_histogram.iter().enumerate() {
            let _ = writeln!(s, "level {level}: {count} nodes");
        }
        let _ = writeln!(s, "build time: {:.1} ms", self.build_ms);
        if !self.zero_norm_docs.is_empty() {
            let _ = writeln!(
                s,
                "warning: {} zero-norm document vector(s) left unlinked",
                self.zero_norm_docs.len()
            );
        }
        if let Some(p) = &self.snapshot {
            let _ = writeln!(s, "snapshot: {}", p.display());
        }
        s
    }
}

fn build_engine(cfg: &RunConfig) -> Result<(SearchEngine, BuildReport)> {
    let corpus = load_corpus(cfg.require(&cfg.corpus, "corpus file")?)?;
    let mut engine = SearchEngine::new(corpus);
    let start = Instant::now();
    engine.build_index(cfg.hnsw.clone())?;
    let build_ms = start.elapsed().as_secs_f64() * 1e3;
    let index = engine.index().expect("just built");
    let zero_norm_docs: Vec<String> = index.zero_norm_docs().into_iter().map(String::from).collect();
    for id in &zero_norm_docs {
        warn!("document {id} has a zero-norm TF-IDF vector (every token occurs in all documents)");
    }
    let report = BuildReport {
        n_docs: index.len(),
        vocab_size: engine.vectors().vocabulary.len(),
        level_histogram: index.level_histogram(),
        build_ms,
        zero_norm_docs,
        snapshot: None,
    };
    Ok((engine, report))
}

/// Builds the graph from `corpus` and writes the snapshot to `index` (or
/// `<output_dir>/index.hqx`).
pub fn cmd_build_index(cfg: &RunConfig) -> Result<BuildReport> {
    let (engine, mut report) = build_engine(cfg)?;
    let path = match (&cfg.index, cfg.output_dir()?) {
        (Some(p), _) => p.clone(),
        (None, Some(dir)) => dir.join("index.hqx"),
        (None, None) => return Err(Error::MissingInput("index path or output directory")),
    };
    engine.index().expect("just built").save(&path)?;
    report.snapshot = Some(path);
    if let Some(dir) = cfg.output_dir()? {
        write_json(&dir.join("build_report.json"), &report)?;
    }
    cfg.echo()?;
    Ok(report)
}

/// Loads the corpus and, when H-QuEST is among the methods, the snapshot at
/// `index` if it exists or a freshly built graph otherwise.
fn open_engine(cfg: &RunConfig) -> Result<(SearchEngine, Option<f64>)> {
    if !cfg.methods.contains(&Method::Hquest) {
        let corpus = load_corpus(cfg.require(&cfg.corpus, "corpus file")?)?;
        return Ok((SearchEngine::new(corpus), None));
    }
    match &cfg.index {
        Some(path) if path.exists() => {
            let corpus = load_corpus(cfg.require(&cfg.corpus, "corpus file")?)?;
            let index = HnswIndex::load(path)?;
            info!("loaded index snapshot {}", path.display());
            Ok((SearchEngine::new(corpus).with_index(index)?, None))
        }
        _ => {
            let (engine, report) = build_engine(cfg)?;
            Ok((engine, Some(report.build_ms)))
        }
    }
}

/// Runs every query through every configured method and writes one JSON
/// object per line to `out`.
pub fn cmd_search(cfg: &RunConfig, query_file: &Path, out: &mut dyn Write) -> Result<Vec<QueryResult>> {
    let queries = load_sequences(query_file)?;
    let (engine, _) = open_engine(cfg)?;
    let mut results = Vec::with_capacity(queries.len() * cfg.methods.len());
    for query in &queries {
        for &method in &cfg.methods {
            let start = Instant::now();
            let outcome = engine.search(method, query, &cfg.pipeline)?;
            let elapsed_us = start.elapsed().as_micros() as u64;
            let result = QueryResult {
                query_id: query.doc_id.clone(),
                method,
                status: outcome.status,
                hits: outcome.hits,
                elapsed_us,
            };
            serde_json::to_writer(&mut *out, &result)?;
            out.write_all(b"\n").map_err(|e| Error::io("<output>", e))?;
            results.push(result);
        }
    }
    out.flush().map_err(|e| Error::io("<output>", e))?;
    cfg.echo()?;
    Ok(results)
}

fn evaluate(cfg: &RunConfig, methods: &[Method]) -> Result<EvalReport> {
    let queries = load_sequences(cfg.require(&cfg.queries, "query file")?)?;
    let mut judgments = load_judgments(cfg.require(&cfg.judgments, "judgments file")?)?;
    if let Some(labels) = &cfg.labels {
        judgments.labels = Some(load_labels(labels)?);
    }
    let cfg = RunConfig {
        methods: methods.to_vec(),
        ..cfg.clone()
    };
    let (engine, index_build_ms) = open_engine(&cfg)?;
    let report = run_benchmark(
        &engine,
        &queries,
        &judgments,
        methods,
        &cfg.pipeline,
        &BenchOptions {
            repetitions: cfg.repetitions,
            frr_threshold: Some(cfg.frr_threshold),
            parallel: cfg.parallel,
            index_build_ms,
        },
    )?;
    if let Some(dir) = cfg.output_dir()? {
        report.write(dir.join("report.json"), dir.join("report.csv"))?;
    }
    cfg.echo()?;
    Ok(report)
}

/// Scores the configured methods against the judgments, writes
/// `report.json` / `report.csv`, then enforces `thresholds`.
pub fn cmd_eval(cfg: &RunConfig) -> Result<EvalReport> {
    let report = evaluate(cfg, &cfg.methods)?;
    if !cfg.thresholds.is_empty() {
        report.check(&cfg.thresholds)?;
    }
    Ok(report)
}

/// Like [`cmd_eval`] over all four methods unless the config narrows them,
/// and additionally writes `latency_table.csv` (one row per query, one column
/// per method, microseconds).
pub fn cmd_bench(cfg: &RunConfig) -> Result<EvalReport> {
    let methods = if cfg.methods == [Method::Hquest] {
        Method::ALL.to_vec()
    } else {
        cfg.methods.clone()
    };
    let report = evaluate(cfg, &methods)?;
    if let Some(dir) = cfg.output_dir()? {
        let path = dir.join("latency_table.csv");
        fs::write(&path, latency_table(&report)).map_err(|e| Error::io(&path, e))?;
    }
    if !cfg.thresholds.is_empty() {
        report.check(&cfg.thresholds)?;
    }
    Ok(report)
}

/// Wide per-query latency table for log-scale plotting.
pub fn latency_table(report: &EvalReport) -> String {
    let mut out = String::from("query_id");
    for m in &report.methods {
        let _ = write!(out, ",{}", m.method);
    }
    out.push('\n');
    let n = report.methods.first().map_or(0, |m| m.queries.len());
    for i in 0..n {
        out.push_str(&report.methods[0].queries[i].query_id);
        for m in &report.methods {
            let _ = write!(out, ",{:.3}", m.queries[i].latency_us);
        }
        out.push('\n');
    }
    out
}
