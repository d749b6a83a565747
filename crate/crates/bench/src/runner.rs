//! Batch and streaming benchmark runs.

use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, ensure, Context, Result};
use rtlsh::fvecs::{load_fvecs, load_ivecs, write_ground_truth};
use rtlsh::{
    euclidean, Algo, C2lshIndex, Dataset, GroundTruth, LshParams, MergePolicy, Neighbor, ProjectionSet, QalshIndex,
    QalshMode, QueryReport, StopRule, StreamConfig, StreamingIndex,
};

use crate::metric::{ratio, summarize};
use crate::report::BenchRecord;

#[derive(Clone, Debug, PartialEq)]
pub struct BenchConfig {
    pub algo: Algo,
    pub mode: QalshMode,
    pub c: f64,
    pub w: f64,
    pub delta: f64,
    pub beta: Option<f64>,
    pub ks: Vec<usize>,
    pub queries: usize,
    pub page_size: usize,
    pub seed: u64,
    /// Index files are written below this directory.
    pub out: PathBuf,
}

impl BenchConfig {
    pub fn new(algo: Algo, out: impl Into<PathBuf>) -> Self {
        BenchConfig {
            algo,
            mode: QalshMode::Corrected,
            c: 2.0,
            w: 2.7191,
            delta: 0.1,
            beta: None,
            ks: vec![1, 10, 50],
            queries: 50,
            page_size: 4096,
            seed: 1,
            out: out.into(),
        }
    }

    fn max_k(&self) -> Result<usize> {
        let k = self.ks.iter().copied().max().context("empty k list")?;
        ensure!(self.ks.iter().all(|&k| k >= 1), "k values must be at least 1");
        Ok(k)
    }

    /// Parameters for an index that will hold `n` points, sized for the largest `k`.
    pub fn params(&self, n: usize) -> Result<LshParams> {
        let p = LshParams::derive(n, self.c, self.w, self.delta, self.max_k()?)?;
        Ok(p.with_overrides(None, None, self.beta)?)
    }

    pub fn projections(&self, dim: usize, params: &LshParams) -> Result<ProjectionSet> {
        Ok(ProjectionSet::generate(dim, params.m, self.w, self.seed)?)
    }

    fn mode_label(&self) -> String {
        match self.algo {
            Algo::C2lsh => "-".into(),
            Algo::Qalsh => self.mode.to_string(),
        }
    }
}

pub enum BuiltIndex {
    C2lsh(C2lshIndex),
    Qalsh(QalshIndex),
}

impl BuiltIndex {
    pub fn build(cfg: &BenchConfig, data: &Dataset<f32>, params: LshParams, dir: &Path) -> Result<Self> {
        let projections = cfg.projections(data.dim(), &params)?;
        Ok(match cfg.algo {
            Algo::C2lsh => BuiltIndex::C2lsh(C2lshIndex::build(data, params, projections, dir, cfg.page_size)?),
            Algo::Qalsh => {
                BuiltIndex::Qalsh(QalshIndex::build(data, params, projections, dir, cfg.page_size, cfg.mode)?)
            }
        })
    }

    pub fn query(&self, data: &Dataset<f32>, q: &[f32], k: usize) -> Result<QueryReport> {
        Ok(match self {
            BuiltIndex::C2lsh(i) => i.query_with(data, q, k, StopRule::Standard)?,
            BuiltIndex::Qalsh(i) => i.query_with(data, q, k, StopRule::Standard)?,
        })
    }
}

/// Where a batch run gets its exact neighbours from.
#[derive(Clone, Debug, PartialEq)]
pub enum GroundTruthSource {
    /// Brute force at run time, outside every timer.
    Compute,
    /// An ivecs id file; distances are recomputed from the dataset.
    File(PathBuf),
}

fn truth_from_ids(data: &Dataset<f32>, ids: &[Vec<i32>], queries: usize, k: usize) -> Result<GroundTruth> {
    ensure!(ids.len() >= queries, "ground truth holds {} queries, {queries} needed", ids.len());
    let rows = ids[..queries]
        .iter()
        .enumerate()
        .map(|(qi, row)| {
            ensure!(row.len() >= k, "ground truth row {qi} holds {} ids, k = {k}", row.len());
            let q = data.point(qi as u32);
            row[..k]
                .iter()
                .map(|&id| {
                    let p = data
                        .get(id as u32)
                        .with_context(|| format!("ground truth id {id} outside the dataset"))?;
                    Ok(Neighbor {
                        id: id as u32,
                        distance: euclidean(p, q)?,
                    })
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(GroundTruth { rows })
}

fn ground_truth(data: &Dataset<f32>, source: &GroundTruthSource, queries: usize, k: usize) -> Result<GroundTruth> {
    match source {
        GroundTruthSource::Compute => Ok(GroundTruth::compute(data, queries, k)?),
        GroundTruthSource::File(path) => {
            ensure!(path.exists(), "ground truth file {} is missing", path.display());
            truth_from_ids(data, &load_ivecs(path)?, queries, k)
        }
    }
}

fn ms(start: Instant) -> f64 {
    start.elapsed().as_secs_f64() * 1e3
}

struct QueryOutcome {
    mean_ratio: Option<f64>,
    flagged: usize,
    mean_ms: f64,
    bytes_read: u64,
    seeks: u64,
    queries: usize,
}

fn run_queries(
    data: &Dataset<f32>,
    truth: &GroundTruth,
    k: usize,
    mut query: impl FnMut(&[f32], usize) -> Result<QueryReport>,
) -> Result<QueryOutcome> {
    let mut ratios = Vec::with_capacity(truth.rows.len());
    let (mut total_ms, mut bytes_read, mut seeks) = (0.0, 0, 0);
    for (qi, row) in truth.rows.iter().enumerate() {
        let q = data.point(qi as u32);
        let start = Instant::now();
        let report = query(q, k)?;
        total_ms += ms(start);
        bytes_read += report.io.bytes_read;
        seeks += report.io.seeks;
        ratios.push(ratio(&report.neighbors, row, k).with_context(|| format!("query {qi}"))?);
    }
    let (mean_ratio, flagged) = summarize(&ratios);
    let n = truth.rows.len();
    Ok(QueryOutcome {
        mean_ratio,
        flagged,
        mean_ms: if n == 0 { 0.0 } else { total_ms / n as f64 },
        bytes_read,
        seeks,
        queries: n,
    })
}

fn record(cfg: &BenchConfig, phase: &str, dataset: &str, n: usize, k: usize, index_ms: f64, insert_ms: Option<f64>, q: &QueryOutcome) -> BenchRecord {
    BenchRecord {
        algo: cfg.algo.to_string(),
        mode: cfg.mode_label(),
        phase: phase.into(),
        dataset: dataset.into(),
        cardinality: n,
        k,
        mean_ratio: q.mean_ratio,
        flagged_queries: q.flagged,
        index_ms,
        insert_ms,
        mean_query_ms: q.mean_ms,
        bytes_read: q.bytes_read,
        seeks: q.seeks,
        queries: q.queries,
        seed: cfg.seed,
    }
}

pub fn dataset_name(path: &Path) -> String {
    path.file_stem().map_or_else(|| "dataset".into(), |s| s.to_string_lossy().into_owned())
}

pub fn run_batch(cfg: &BenchConfig, data_path: &Path, gt: &GroundTruthSource) -> Result<Vec<BenchRecord>> {
    let data: Dataset<f32> = load_fvecs(data_path)?;
    run_batch_on(cfg, &dataset_name(data_path), &data, gt)
}

/// Builds one index over `data` (sized for `data.len()` points) and queries
/// it with the first `cfg.queries` points for every `k`.
pub fn run_batch_on(cfg: &BenchConfig, name: &str, data: &Dataset<f32>, gt: &GroundTruthSource) -> Result<Vec<BenchRecord>> {
    let params = cfg.params(data.len())?;
    batch_with_params(cfg, name, data, gt, params, &cfg.out.join(format!("{}_batch", cfg.algo)))
}

fn batch_with_params(
    cfg: &BenchConfig,
    name: &str,
    data: &Dataset<f32>,
    gt: &GroundTruthSource,
    params: LshParams,
    dir: &Path,
) -> Result<Vec<BenchRecord>> {
    let max_k = cfg.max_k()?;
    ensure!(max_k <= data.len(), "k = {max_k} exceeds the {} points", data.len());
    let queries = cfg.queries.min(data.len());
    let truth = ground_truth(data, gt, queries, max_k)?;

    let start = Instant::now();
    let index = BuiltIndex::build(cfg, data, params, dir)?;
    let index_ms = ms(start);

    cfg.ks
        .iter()
        .map(|&k| {
            let t = GroundTruth {
                rows: truth.rows.iter().map(|r| r[..k].to_vec()).collect(),
            };
            let q = run_queries(data, &t, k, |q, k| index.query(data, q, k))?;
            Ok(record(cfg, "batch", name, data.len(), k, index_ms, None, &q))
        })
        .collect()
}

/// Preload size followed by strictly ascending cardinalities; the first
/// checkpoint is the preload itself.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StreamSchedule {
    checkpoints: Vec<usize>,
}

impl StreamSchedule {
    pub fn new(checkpoints: Vec<usize>) -> Result<Self> {
        ensure!(!checkpoints.is_empty(), "schedule needs at least one checkpoint");
        ensure!(checkpoints[0] > 0, "preload must hold at least one point");
        ensure!(
            checkpoints.windows(2).all(|w| w[0] < w[1]),
            "checkpoints must be strictly ascending"
        );
        Ok(StreamSchedule { checkpoints })
    }

    pub fn preload(&self) -> usize {
        self.checkpoints[0]
    }

    pub fn checkpoints(&self) -> &[usize] {
        &self.checkpoints
    }

    pub fn final_cardinality(&self) -> usize {
        *self.checkpoints.last().unwrap()
    }
}

impl std::str::FromStr for StreamSchedule {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> Result<Self> {
        let cps = s
            .split(',')
            .map(|p| p.trim().parse::<usize>().with_context(|| format!("bad checkpoint {p:?}")))
            .collect::<Result<Vec<_>>>()?;
        StreamSchedule::new(cps)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StreamOptions {
    pub policy: MergePolicy,
    /// Also batch-build each checkpoint prefix with the same parameters.
    pub paired_batch: bool,
    /// Number of naive full-rebuild inserts timed per checkpoint.
    pub baseline: Option<usize>,
}

impl Default for StreamOptions {
    fn default() -> Self {
        StreamOptions {
            policy: MergePolicy::default(),
            paired_batch: false,
            baseline: None,
        }
    }
}

pub fn run_stream(cfg: &BenchConfig, data_path: &Path, schedule: &StreamSchedule, opts: &StreamOptions) -> Result<Vec<BenchRecord>> {
    let data: Dataset<f32> = load_fvecs(data_path)?;
    run_stream_on(cfg, &dataset_name(data_path), &data, schedule, opts)
}

/// Loads the preload, inserts point by point up to each checkpoint and runs
/// the query set there. Parameters are sized for the final checkpoint.
pub fn run_stream_on(
    cfg: &BenchConfig,
    name: &str,
    data: &Dataset<f32>,
    schedule: &StreamSchedule,
    opts: &StreamOptions,
) -> Result<Vec<BenchRecord>> {
    let final_n = schedule.final_cardinality();
    if final_n > data.len() {
        bail!("schedule reaches {final_n} points but the dataset has {}", data.len());
    }
    let max_k = cfg.max_k()?;
    ensure!(max_k <= schedule.preload(), "k = {max_k} exceeds the preload");
    let params = cfg.params(final_n)?;
    let projections = cfg.projections(data.dim(), &params)?;
    let mut config = StreamConfig::new(cfg.algo);
    config.page_size = cfg.page_size;
    config.mode = cfg.mode;
    config.policy = opts.policy;

    let mut records = Vec::new();
    let start = Instant::now();
    let mut index = StreamingIndex::with_preload(
        &cfg.out.join(format!("{}_stream", cfg.algo)),
        data.prefix(schedule.preload()),
        params,
        projections.clone(),
        config,
    )?;
    let mut segment_ms = ms(start);

    for &cp in schedule.checkpoints() {
        let start = Instant::now();
        for id in index.len()..cp {
            index.insert(data.point(id as u32))?;
        }
        let insert_ms = (cp > schedule.preload()).then(|| {
            segment_ms = ms(start);
            segment_ms / segment_len(schedule, cp) as f64
        });

        let prefix = data.prefix(cp);
        let truth = GroundTruth::compute(&prefix, cfg.queries.min(cp), max_k)?;
        for &k in &cfg.ks {
            let t = GroundTruth {
                rows: truth.rows.iter().map(|r| r[..k].to_vec()).collect(),
            };
            let q = run_queries(&prefix, &t, k, |q, k| Ok(index.query_combined_with(q, k, StopRule::Standard)?))?;
            records.push(record(cfg, "stream", name, cp, k, segment_ms, insert_ms, &q));
        }

        if opts.paired_batch {
            let dir = cfg.out.join(format!("{}_paired", cfg.algo));
            records.extend(batch_with_params(cfg, name, &prefix, &GroundTruthSource::Compute, params, &dir)?);
        }
        if let Some(samples) = opts.baseline {
            records.push(naive_baseline(cfg, name, data, cp, samples, params, &projections, config)?);
        }
    }
    Ok(records)
}

fn segment_len(schedule: &StreamSchedule, cp: usize) -> usize {
    let cps = schedule.checkpoints();
    let i = cps.iter().position(|&c| c == cp).unwrap();
    if i == 0 {
        cp
    } else {
        cp - cps[i - 1]
    }
}

/// Times `samples` naive inserts that end at cardinality `cp`.
#[allow(clippy::too_many_arguments)]
fn naive_baseline(
    cfg: &BenchConfig,
    name: &str,
    data: &Dataset<f32>,
    cp: usize,
    samples: usize,
    params: LshParams,
    projections: &ProjectionSet,
    config: StreamConfig,
) -> Result<BenchRecord> {
    let samples = samples.clamp(1, cp - 1);
    let mut naive = StreamingIndex::with_preload(
        &cfg.out.join(format!("{}_naive", cfg.algo)),
        data.prefix(cp - samples),
        params,
        projections.clone(),
        config,
    )?;
    let start = Instant::now();
    for id in cp - samples..cp {
        naive.naive_rebuild_insert(data.point(id as u32))?;
    }
    let per_insert = ms(start) / samples as f64;
    Ok(BenchRecord {
        algo: cfg.algo.to_string(),
        mode: cfg.mode_label(),
        phase: "naive".into(),
        dataset: name.into(),
        cardinality: cp,
        k: 0,
        mean_ratio: None,
        flagged_queries: 0,
        index_ms: per_insert * samples as f64,
        insert_ms: Some(per_insert),
        mean_query_ms: 0.0,
        bytes_read: 0,
        seeks: 0,
        queries: 0,
        seed: cfg.seed,
    })
}

/// Writes `gt.ivecs` (ids) and `gt.fvecs` (distances) for the first
/// `queries` points into `out_dir`.
pub fn make_ground_truth(data_path: &Path, queries: usize, max_k: usize, out_dir: &Path) -> Result<(PathBuf, PathBuf)> {
    let data: Dataset<f32> = load_fvecs(data_path)?;
    ensure!(max_k <= data.len(), "k = {max_k} exceeds the {} points", data.len());
    std::fs::create_dir_all(out_dir).with_context(|| format!("creating {}", out_dir.display()))?;
    let gt = GroundTruth::compute(&data, queries.min(data.len()), max_k)?;
    let ids = out_dir.join("gt.ivecs");
    let dists = out_dir.join("gt.fvecs");
    write_ground_truth(&gt, &ids, &dists)?;
    Ok((ids, dists))
}
