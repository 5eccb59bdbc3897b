use std::io::{self, BufWriter};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use hquest::cli::{cmd_bench, cmd_build_index, cmd_eval, cmd_gen_synth, cmd_search, RunConfig};
use hquest::evalbench::EvalReport;
use hquest::search::Method;
use hquest::Error;

#[derive(Parser)]
#[command(name = "hquest", version, about = "Query-by-example search over token sequences")]
struct Cli {
    /// JSON run configuration; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic corpus with planted queries.
    GenSynth(SynthArgs),
    /// Build an HNSW index over a corpus and write a snapshot.
    BuildIndex(IoArgs),
    /// Run queries and print one JSON result per query and method.
    Search {
        #[command(flatten)]
        io: IoArgs,
        /// Write results here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Score methods against relevance judgments.
    Eval(IoArgs),
    /// Time and score methods (all four by default).
    Bench(IoArgs),
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    out_dir: Option<PathBuf>,
    #[arg(long)]
    n_docs: Option<usize>,
    #[arg(long)]
    vocab_size: Option<usize>,
    #[arg(long)]
    doc_len: Option<usize>,
    #[arg(long)]
    n_queries: Option<usize>,
    #[arg(long)]
    query_len: Option<usize>,
    #[arg(long)]
    relevant: Option<usize>,
    /// Fraction of planted tokens replaced by random ones.
    #[arg(long)]
    mutate: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct IoArgs {
    #[arg(long)]
    corpus: Option<PathBuf>,
    #[arg(long)]
    queries: Option<PathBuf>,
    #[arg(long)]
    judgments: Option<PathBuf>,
    #[arg(long)]
    labels: Option<PathBuf>,
    /// Index snapshot path.
    #[arg(long)]
    index: Option<PathBuf>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Candidates from the graph / results per query.
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    ef_search: Option<usize>,
    #[arg(long)]
    ef_construction: Option<usize>,
    #[arg(long)]
    max_neighbors: Option<usize>,
    #[arg(long)]
    no_rerank: bool,
    #[arg(long)]
    normalize_sw: bool,
    /// hquest, brute, inverted or dtw; repeatable.
    #[arg(long = "method")]
    methods: Vec<String>,
    #[arg(long)]
    repetitions: Option<usize>,
    #[arg(long)]
    frr_threshold: Option<f64>,
    #[arg(long)]
    parallel: bool,
    #[arg(long)]
    seed: Option<u64>,
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

impl IoArgs {
    fn apply(self, cfg: &mut RunConfig) -> Result<(), Error> {
        for (slot, v) in [
            (&mut cfg.corpus, self.corpus),
            (&mut cfg.queries, self.queries),
            (&mut cfg.judgments, self.judgments),
            (&mut cfg.labels, self.labels),
            (&mut cfg.index, self.index),
            (&mut cfg.output_dir, self.out_dir),
        ] {
            if v.is_some() {
                *slot = v;
            }
        }
        set(&mut cfg.pipeline.k, self.k);
        set(&mut cfg.pipeline.ef_search, self.ef_search);
        set(&mut cfg.hnsw.ef_construction, self.ef_construction);
        set(&mut cfg.hnsw.max_neighbors, self.max_neighbors);
        set(&mut cfg.repetitions, self.repetitions);
        set(&mut cfg.frr_threshold, self.frr_threshold);
        if self.seed.is_some() {
            cfg.seed = self.seed;
        }
        cfg.pipeline.rerank &= !self.no_rerank;
        cfg.pipeline.normalize_sw |= self.normalize_sw;
        cfg.parallel |= self.parallel;
        if !self.methods.is_empty() {
            cfg.methods = self
                .methods
                .iter()
                .map(|m| m.parse::<Method>())
                .collect::<Result<_, _>>()?;
        }
        Ok(())
    }
}

fn print_report(report: &EvalReport) {
    for m in &report.methods {
        let fmt = |v: Option<f64>| v.map_or("-".to_string(), |x| format!("{x:.4}"));
        println!(
            "{:<9} MAP {}  P@1 {}  P@3 {}  P@5 {}  FRR {}  median {:.1} us",
            m.method.to_string(),
            fmt(m.map),
            fmt(m.p_at_1),
            fmt(m.p_at_3),
            fmt(m.p_at_5),
            m.frr.map_or("-".to_string(), |f| format!("{:.2}%", f * 100.0)),
            m.median_latency_us
        );
    }
}

fn run(cli: Cli) -> Result<(), Error> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    match cli.command {
        Command::GenSynth(a) => {
            if a.out_dir.is_some() {
                cfg.output_dir = a.out_dir;
            }
            let s = &mut cfg.synth;
            set(&mut s.n_docs, a.n_docs);
            set(&mut s.vocab_size, a.vocab_size);
            set(&mut s.doc_len, a.doc_len);
            set(&mut s.n_queries, a.n_queries);
            set(&mut s.query_len, a.query_len);
            set(&mut s.relevant_per_query, a.relevant);
            set(&mut s.mutate, a.mutate);
            if a.seed.is_some() {
                cfg.seed = a.seed;
            }
            let manifest = cmd_gen_synth(&cfg.resolved()?)?;
            println!("{}", serde_json::to_string_pretty(&manifest)?);
        }
        Command::BuildIndex(a) => {
            a.apply(&mut cfg)?;
            print!("{}", cmd_build_index(&cfg.resolved()?)?.summary());
        }
        Command::Search { io, out } => {
            let queries = io.queries.clone();
            io.apply(&mut cfg)?;
            let cfg = cfg.resolved()?;
            let query_file = queries
                .or_else(|| cfg.queries.clone())
                .ok_or(Error::MissingInput("query file"))?;
            match out {
                Some(path) => {
                    let file = std::fs::File::create(&path).map_err(|e| Error::Io { path, source: e })?;
                    cmd_search(&cfg, &query_file, &mut BufWriter::new(file))?;
                }
                None => {
                    cmd_search(&cfg, &query_file, &mut io::stdout().lock())?;
                }
            }
        }
        Command::Eval(a) => {
            a.apply(&mut cfg)?;
            print_report(&cmd_eval(&cfg.resolved()?)?);
        }
        Command::Bench(a) => {
            a.apply(&mut cfg)?;
            print_report(&cmd_bench(&cfg.resolved()?)?);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
