//! Benchmark rows and their CSV form.

use std::path::Path;

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};

/// CSV column order, fixed for downstream plotting.
pub const COLUMNS: [&str; 15] = [
    "algo",
    "mode",
    "phase",
    "dataset",
    "cardinality",
    "k",
    "mean_ratio",
    "flagged_queries",
    "index_ms",
    "insert_ms",
    "mean_query_ms",
    "bytes_read",
    "seeks",
    "queries",
    "seed",
];

/// One measurement at one cardinality and one `k`.
///
/// `phase` is `batch`, `stream` or `naive`. For stream rows `index_ms` is
/// the time spent reaching this cardinality since the previous checkpoint
/// and `insert_ms` the mean per inserted point. `bytes_read`/`seeks` are
/// totals over the query set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchRecord {
    pub algo: String,
    pub mode: String,
    pub phase: String,
    pub dataset: String,
    pub cardinality: usize,
    pub k: usize,
    pub mean_ratio: Option<f64>,
    pub flagged_queries: usize,
    pub index_ms: f64,
    pub insert_ms: Option<f64>,
    pub mean_query_ms: f64,
    pub bytes_read: u64,
    pub seeks: u64,
    pub queries: usize,
    pub seed: u64,
}

pub fn export_csv(records: &[BenchRecord], path: &Path) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_path(path)
        .with_context(|| format!("creating {}", path.display()))?;
    w.write_record(COLUMNS)?;
    for r in records {
        w.serialize(r)?;
    }
    w.flush().with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

pub fn read_csv(path: &Path) -> Result<Vec<BenchRecord>> {
    let mut r = csv::Reader::from_path(path).with_context(|| format!("opening {}", path.display()))?;
    let header: Vec<String> = r.headers()?.iter().map(str::to_owned).collect();
    anyhow::ensure!(header == COLUMNS, "unexpected columns in {}", path.display());
    r.deserialize().map(|row| row.map_err(Into::into)).collect()
}
