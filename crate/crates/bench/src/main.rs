use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rtlsh::fvecs::{load_fvecs, write_fvecs};
use rtlsh::{Algo, Dataset, MergePolicy, QalshMode};
use rtlsh_bench::{
    export_csv, generate, make_ground_truth, run_batch, run_stream, runner::dataset_name, BenchConfig, BenchRecord,
    BuiltIndex, GroundTruthSource, StreamOptions, StreamSchedule, SynthKind,
};

#[derive(Parser)]
#[command(name = "rtlsh", version, about = "LSH index benchmarks: C2LSH and QALSH, batch and streaming")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct IndexArgs {
    #[arg(long, default_value = "c2lsh")]
    algo: Algo,
    /// Approximation ratio.
    #[arg(long, default_value_t = 2.0)]
    c: f64,
    /// Bucket width.
    #[arg(long, default_value_t = 2.7191)]
    w: f64,
    /// Error probability.
    #[arg(long, default_value_t = 0.1)]
    delta: f64,
    /// False-positive fraction; defaults to max(100/n, k/n).
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long, default_value_t = 4096)]
    page_size: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Range-search mode (qalsh only).
    #[arg(long, default_value = "corrected")]
    mode: QalshMode,
}

#[derive(Args)]
struct QueryArgs {
    /// Comma-separated k values.
    #[arg(long, value_delimiter = ',', default_value = "1,10,50")]
    k: Vec<usize>,
    /// Number of queries, taken as the first points of the dataset.
    #[arg(long, default_value_t = 50)]
    queries: usize,
    /// Write records as CSV.
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Kind {
    Uniform,
    Clustered,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic fvecs dataset.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        n: usize,
        #[arg(long)]
        d: usize,
        #[arg(long, value_enum, default_value = "clustered")]
        kind: Kind,
        #[arg(long, default_value_t = 20)]
        clusters: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
    /// Exact neighbours of the first points: gt.ivecs and gt.fvecs.
    Gt {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value_t = 50)]
        queries: usize,
        #[arg(long, default_value_t = 50)]
        k: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Build and persist an index.
    Build {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        index: IndexArgs,
        /// Size parameters for this k.
        #[arg(long, default_value_t = 50)]
        k: usize,
    },
    /// Batch benchmark: build, then time every query.
    Query {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        index: IndexArgs,
        #[command(flatten)]
        query: QueryArgs,
        /// Ground-truth ids (ivecs).
        #[arg(long)]
        gt: Option<PathBuf>,
        /// Never compute ground truth; require --gt.
        #[arg(long)]
        no_gt: bool,
    },
    /// Streaming benchmark over a checkpoint schedule.
    Stream {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        index: IndexArgs,
        #[command(flatten)]
        query: QueryArgs,
        /// Comma-separated cardinalities; the first is the preload.
        #[arg(long)]
        schedule: StreamSchedule,
        /// Merge triggers, e.g. `points=4096,frac=0.1`.
        #[arg(long, default_value = "points=4096,frac=0.1", value_parser = parse_policy)]
        policy: MergePolicy,
        /// Time this many naive full-rebuild inserts per checkpoint.
        #[arg(long, num_args = 0..=1, default_missing_value = "3")]
        baseline: Option<usize>,
        /// Also batch-build every checkpoint with the same parameters.
        #[arg(long)]
        paired: bool,
    },
}

fn parse_policy(s: &str) -> Result<MergePolicy> {
    let mut policy = MergePolicy {
        max_delta_points: None,
        max_delta_fraction: None,
    };
    for part in s.split(',').filter(|p| !p.is_empty()) {
        match part.split_once('=') {
            Some(("points", v)) => policy.max_delta_points = Some(v.parse().context("points")?),
            Some(("frac", v)) => policy.max_delta_fraction = Some(v.parse().context("frac")?),
            _ => bail!("expected points=<N> or frac=<F>, got {part:?}"),
        }
    }
    policy.validate()?;
    Ok(policy)
}

fn config(index: &IndexArgs, out: PathBuf, query: Option<&QueryArgs>) -> BenchConfig {
    let mut cfg = BenchConfig::new(index.algo, out);
    cfg.c = index.c;
    cfg.w = index.w;
    cfg.delta = index.delta;
    cfg.beta = index.beta;
    cfg.page_size = index.page_size;
    cfg.seed = index.seed;
    cfg.mode = index.mode;
    if let Some(q) = query {
        cfg.ks = q.k.clone();
        cfg.queries = q.queries;
    }
    cfg
}

fn print_records(records: &[BenchRecord]) {
    println!(
        "{:<6} {:<9} {:<6} {:>9} {:>4} {:>10} {:>4} {:>11} {:>10} {:>10} {:>12} {:>8}",
        "algo", "mode", "phase", "n", "k", "ratio", "flag", "index_ms", "insert_ms", "query_ms", "bytes", "seeks"
    );
    for r in records {
        println!(
            "{:<6} {:<9} {:<6} {:>9} {:>4} {:>10} {:>4} {:>11.2} {:>10} {:>10.4} {:>12} {:>8}",
            r.algo,
            r.mode,
            r.phase,
            r.cardinality,
            r.k,
            r.mean_ratio.map_or("-".into(), |v| format!("{v:.4}")),
            r.flagged_queries,
            r.index_ms,
            r.insert_ms.map_or("-".into(), |v| format!("{v:.4}")),
            r.mean_query_ms,
            r.bytes_read,
            r.seeks
        );
    }
}

fn finish(records: Vec<BenchRecord>, csv: Option<PathBuf>) -> Result<()> {
    print_records(&records);
    if let Some(path) = csv {
        export_csv(&records, &path)?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synth { out, n, d, kind, clusters, seed } => {
            let kind = match kind {
                Kind::Uniform => SynthKind::Uniform,
                Kind::Clustered => SynthKind::Clustered { clusters },
            };
            write_fvecs(&generate(kind, n, d, seed), &out)?;
            println!("wrote {n} x {d} points to {}", out.display());
        }
        Command::Gt { data, queries, k, out } => {
            let (ids, dists) = make_ground_truth(&data, queries, k, &out)?;
            println!("wrote {} and {}", ids.display(), dists.display());
        }
        Command::Build { data, out, index, k } => {
            let mut cfg = config(&index, out.clone(), None);
            cfg.ks = vec![k];
            let points: Dataset<f32> = load_fvecs(&data)?;
            let params = cfg.params(points.len())?;
            let start = Instant::now();
            BuiltIndex::build(&cfg, &points, params, &out)?;
            println!(
                "{} index over {} ({} points, m = {}, l = {}) built in {:.2} ms at {}",
                index.algo,
                dataset_name(&data),
                points.len(),
                params.m,
                params.l,
                start.elapsed().as_secs_f64() * 1e3,
                out.display()
            );
        }
        Command::Query { data, out, index, query, gt, no_gt } => {
            let source = match (gt, no_gt) {
                (Some(path), _) => GroundTruthSource::File(path),
                (None, true) => bail!("--no-gt set but no ground truth file given (--gt)"),
                (None, false) => GroundTruthSource::Compute,
            };
            let cfg = config(&index, out, Some(&query));
            finish(run_batch(&cfg, &data, &source)?, query.csv)?;
        }
        Command::Stream { data, out, index, query, schedule, policy, baseline, paired } => {
            let cfg = config(&index, out, Some(&query));
            let opts = StreamOptions {
                policy,
                paired_batch: paired,
                baseline,
            };
            finish(run_stream(&cfg, &data, &schedule, &opts)?, query.csv)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
