//! Query-aware LSH: raw projections sorted under one paged B+-tree each,
//! searched with ranges of half-width `w * R / 2` centred on the query.
//!
//! Two range-collection modes are provided. [`QalshMode::Corrected`] returns
//! exactly the ids whose hash lies in the closed range, widening two cursors
//! monotonically so no page is read twice. [`QalshMode::Legacy`] reproduces
//! the original node-granular search: it re-descends every radius, reads
//! whole nodes chosen by their keys, and starts from the next node when the
//! query falls on the last entry of a leaf.
//!
//! Page I/O is logical: trees are resident in memory and the counters record
//! the page reads and seeks a disk-backed search would issue.

mod tree;

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;

pub use tree::{capacities, sort_pairs, values_path, IndexNode, Leaf, QalshTree, INDEX_HEADER_BYTES, LEAF_HEADER_BYTES};

use crate::error::{Error, Result};
use crate::hash::ProjectionSet;
use crate::io_stats::{IoCounter, IoStats};
use crate::manifest::{Algo, Manifest, PROJECTIONS_FILE};
use crate::params::LshParams;
use crate::scalar::Scalar;
use crate::search::{collision_search, radius_schedule, ProbeSource, QueryReport, StopRule};
use crate::vector::{Dataset, Neighbor, PointId};

pub const DEFAULT_PAGE_SIZE: usize = 4096;

pub fn tree_file_name(i: usize) -> String {
    format!("proj_{i}.qt")
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub enum QalshMode {
    Legacy,
    #[default]
    Corrected,
}

impl fmt::Display for QalshMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            QalshMode::Legacy => "legacy",
            QalshMode::Corrected => "corrected",
        })
    }
}

impl FromStr for QalshMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "legacy" => Ok(QalshMode::Legacy),
            "corrected" => Ok(QalshMode::Corrected),
            other => Err(Error::invalid(format!("unknown mode `{other}`"))),
        }
    }
}

/// Half-width of the search range at `radius`.
pub fn half_width(w: f64, radius: f64) -> f64 {
    w * radius / 2.0
}

#[derive(Clone, Debug)]
enum CursorState {
    Fresh,
    /// Emitted global positions `[lo, hi)` and the loaded leaf run.
    Corrected { lo: usize, hi: usize, pages: (usize, usize) },
    /// Start leaf and the emitted leaf run.
    Legacy { start: usize, nodes: (usize, usize) },
}

/// Incremental range search on one tree for one query value. Each call to
/// [`advance`](RangeCursor::advance) reports only ids not reported before.
#[derive(Clone, Debug)]
pub struct RangeCursor {
    q: f64,
    mode: QalshMode,
    state: CursorState,
}

impl RangeCursor {
    pub fn new(q_hval: f64, mode: QalshMode) -> Self {
        RangeCursor {
            q: q_hval,
            mode,
            state: CursorState::Fresh,
        }
    }

    pub fn exhausted(&self, tree: &QalshTree) -> bool {
        match self.state {
            _ if tree.is_empty() => true,
            CursorState::Fresh => false,
            CursorState::Corrected { lo, hi, .. } => lo == 0 && hi == tree.len(),
            CursorState::Legacy { nodes, .. } => nodes == (0, tree.leaf_count() - 1),
        }
    }

    /// Widens the search to half-width `t`, appending newly covered ids.
    pub fn advance(&mut self, tree: &QalshTree, t: f64, out: &mut Vec<PointId>, io: &mut IoStats) {
        if tree.is_empty() {
            return;
        }
        match self.mode {
            QalshMode::Corrected => self.advance_corrected(tree, t, out, io),
            QalshMode::Legacy => self.advance_legacy(tree, t, out, io),
        }
    }

    fn advance_corrected(&mut self, tree: &QalshTree, t: f64, out: &mut Vec<PointId>, io: &mut IoStats) {
        let ps = tree.page_size();
        let (lo, hi) = (tree.partition_point(|v| v < self.q - t), tree.partition_point(|v| v <= self.q + t));
        // Pages holding the emitted entries plus the first entry past each end.
        let first = tree.leaf_of(lo.saturating_sub(1));
        let last = tree.leaf_of(hi);
        match self.state {
            CursorState::Fresh => {
                let (home, _) = tree.locate_with(self.q, |_| io.record(ps as u64));
                let pages = (first.min(home), last.max(home));
                io.record(((pages.1 - pages.0 + 1) * ps) as u64);
                emit(tree, lo, hi, out);
                self.state = CursorState::Corrected { lo, hi, pages };
            }
            CursorState::Corrected {
                lo: old_lo,
                hi: old_hi,
                pages: (pl, pr),
            } => {
                if first < pl {
                    io.record(((pl - first) * ps) as u64);
                }
                if last > pr {
                    io.record(((last - pr) * ps) as u64);
                }
                let (lo, hi) = (lo.min(old_lo), hi.max(old_hi));
                emit(tree, lo, old_lo, out);
                emit(tree, old_hi, hi, out);
                self.state = CursorState::Corrected {
                    lo,
                    hi,
                    pages: (first.min(pl), last.max(pr)),
                };
            }
            CursorState::Legacy { .. } => unreachable!("cursor mode is fixed at construction"),
        }
    }

    fn advance_legacy(&mut self, tree: &QalshTree, t: f64, out: &mut Vec<PointId>, io: &mut IoStats) {
        let ps = tree.page_size() as u64;
        let (home, pos) = tree.locate_with(self.q, |_| io.record(ps));
        let start = match self.state {
            CursorState::Legacy { start, .. } => start,
            _ if pos + 1 == tree.leaves()[home].len() && home + 1 < tree.leaf_count() => home + 1,
            _ => home,
        };
        let key = |j: usize| tree.leaves()[j].min();
        let (mut a, mut b) = (start, start);
        while a > 0 && key(a - 1) >= self.q - t {
            a -= 1;
        }
        while b + 1 < tree.leaf_count() && key(b + 1) <= self.q + t {
            b += 1;
        }
        for _ in a..=b {
            io.record(ps);
        }
        let cap = tree.leaf_capacity();
        let span = |x: usize, y: usize| (x * cap, (y * cap + tree.leaves()[y].len()));
        match self.state {
            CursorState::Legacy { nodes: (pa, pb), .. } => {
                let (a, b) = (a.min(pa), b.max(pb));
                if a < pa {
                    let (g0, g1) = span(a, pa - 1);
                    emit(tree, g0, g1, out);
                }
                if b > pb {
                    let (g0, g1) = span(pb + 1, b);
                    emit(tree, g0, g1, out);
                }
                self.state = CursorState::Legacy { start, nodes: (a, b) };
            }
            _ => {
                let (g0, g1) = span(a, b);
                emit(tree, g0, g1, out);
                self.state = CursorState::Legacy { start, nodes: (a, b) };
            }
        }
    }
}

fn emit(tree: &QalshTree, from: usize, to: usize, out: &mut Vec<PointId>) {
    let cap = tree.leaf_capacity();
    let mut g = from;
    while g < to {
        let leaf = &tree.leaves()[g / cap];
        let start = g % cap;
        let end = (start + (to - g)).min(leaf.len());
        out.extend_from_slice(&leaf.ids[start..end]);
        g += end - start;
    }
}

/// Ids collected at a single radius by a fresh cursor.
pub fn range_collect(tree: &QalshTree, q_hval: f64, radius: f64, w: f64, mode: QalshMode) -> Vec<PointId> {
    let mut out = Vec::new();
    RangeCursor::new(q_hval, mode).advance(tree, half_width(w, radius), &mut out, &mut IoStats::default());
    out
}

/// Probes a set of trees with one cursor each.
pub(crate) struct TreeProbe<'a> {
    trees: Vec<&'a QalshTree>,
    cursors: Vec<RangeCursor>,
    w: f64,
}

impl<'a> TreeProbe<'a> {
    pub(crate) fn new(trees: Vec<&'a QalshTree>, q_hvals: &[f64], w: f64, mode: QalshMode) -> Self {
        let cursors = q_hvals.iter().map(|&q| RangeCursor::new(q, mode)).collect();
        TreeProbe { trees, cursors, w }
    }
}

impl ProbeSource for TreeProbe<'_> {
    fn num_projections(&self) -> usize {
        self.trees.len()
    }

    fn extend(&mut self, proj: usize, radius: f64, out: &mut Vec<PointId>, io: &mut IoStats) -> Result<()> {
        self.cursors[proj].advance(self.trees[proj], half_width(self.w, radius), out, io);
        Ok(())
    }

    fn exhausted(&self) -> bool {
        self.cursors.iter().zip(&self.trees).all(|(c, t)| c.exhausted(t))
    }
}

/// Raw projection of every point onto projection `proj`, in tree order.
pub(crate) fn sorted_pairs<T: Scalar>(data: &Dataset<T>, projections: &ProjectionSet, proj: usize) -> Vec<(f64, PointId)> {
    let mut pairs: Vec<(f64, PointId)> = data
        .iter()
        .map(|(id, p)| (projections.project_unchecked(proj, p), id))
        .collect();
    sort_pairs(&mut pairs);
    pairs
}

pub(crate) fn query_hvals<T: Scalar>(projections: &ProjectionSet, q: &[T]) -> Vec<f64> {
    (0..projections.len()).map(|i| projections.project_unchecked(i, q)).collect()
}

pub(crate) fn check_setup(dim: usize, n: usize, params: &LshParams, projections: &ProjectionSet) -> Result<()> {
    params.validate()?;
    if params.n < n {
        return Err(Error::invalid(format!("parameters sized for {} points, dataset has {n}", params.n)));
    }
    if projections.len() != params.m {
        return Err(Error::invalid(format!(
            "{} projections supplied, parameters call for m = {}",
            projections.len(),
            params.m
        )));
    }
    if projections.dim() != dim {
        return Err(Error::DimensionMismatch {
            expected: projections.dim(),
            found: dim,
        });
    }
    Ok(())
}

#[derive(Debug)]
pub struct QalshIndex {
    params: LshParams,
    projections: ProjectionSet,
    trees: Vec<QalshTree>,
    mode: QalshMode,
    page_size: usize,
    len: usize,
    io: IoCounter,
}

impl QalshIndex {
    pub fn build<T: Scalar>(
        data: &Dataset<T>,
        params: LshParams,
        projections: ProjectionSet,
        out_dir: &Path,
        page_size: usize,
        mode: QalshMode,
    ) -> Result<Self> {
        let index = Self::build_in_memory(data, params, projections, page_size, mode)?;
        index.persist(out_dir)?;
        Ok(index)
    }

    pub fn build_in_memory<T: Scalar>(
        data: &Dataset<T>,
        params: LshParams,
        projections: ProjectionSet,
        page_size: usize,
        mode: QalshMode,
    ) -> Result<Self> {
        if data.is_empty() {
            return Err(Error::invalid("cannot build an index over an empty dataset"));
        }
        check_setup(data.dim(), data.len(), &params, &projections)?;
        let trees = (0..projections.len())
            .into_par_iter()
            .map(|i| QalshTree::build(&sorted_pairs(data, &projections, i), page_size))
            .collect::<Result<Vec<_>>>()?;
        Self::from_parts(params, projections, trees, page_size, mode)
    }

    pub(crate) fn from_parts(
        params: LshParams,
        projections: ProjectionSet,
        trees: Vec<QalshTree>,
        page_size: usize,
        mode: QalshMode,
    ) -> Result<Self> {
        capacities(page_size)?;
        let len = trees.first().map_or(0, QalshTree::len);
        if trees.len() != params.m || trees.iter().any(|t| t.len() != len || t.page_size() != page_size) {
            return Err(Error::invalid("trees disagree on size, page size or count"));
        }
        Ok(QalshIndex {
            params,
            projections,
            trees,
            mode,
            page_size,
            len,
            io: IoCounter::default(),
        })
    }

    pub fn persist(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        self.manifest().write(dir)?;
        self.projections.persist(dir.join(PROJECTIONS_FILE))?;
        self.trees.par_iter().enumerate().try_for_each(|(i, t)| {
            t.persist(&dir.join(tree_file_name(i))).map_err(|e| Error::Projection {
                projection: i,
                source: Box::new(e),
            })
        })
    }

    pub fn open(dir: &Path, mode: QalshMode) -> Result<Self> {
        let manifest = Manifest::read(dir)?;
        if manifest.algo != Algo::Qalsh {
            return Err(Error::invalid(format!("{} holds a {} index", dir.display(), manifest.algo)));
        }
        let projections = ProjectionSet::load(dir.join(PROJECTIONS_FILE))?;
        let trees = (0..manifest.params.m)
            .into_par_iter()
            .map(|i| {
                QalshTree::load(&dir.join(tree_file_name(i))).map_err(|e| Error::Projection {
                    projection: i,
                    source: Box::new(e),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        for (i, t) in trees.iter().enumerate() {
            let mut seen = vec![false; manifest.n];
            for (_, id) in t.pairs() {
                match seen.get_mut(id as usize) {
                    Some(s) if !*s => *s = true,
                    _ => {
                        return Err(Error::format(
                            dir.join(tree_file_name(i)),
                            0,
                            format!("id {id} duplicated or beyond n = {}", manifest.n),
                        ))
                    }
                }
            }
        }
        let index = Self::from_parts(manifest.params, projections, trees, manifest.page_size, mode)?;
        if index.len != manifest.n {
            return Err(Error::format(dir.join(tree_file_name(0)), 0, "tree size disagrees with the manifest"));
        }
        Ok(index)
    }

    pub fn manifest(&self) -> Manifest {
        Manifest {
            algo: Algo::Qalsh,
            n: self.len,
            dim: self.projections.dim(),
            params: self.params,
            page_size: self.page_size,
            seed: self.projections.seed(),
        }
    }

    pub fn params(&self) -> &LshParams {
        &self.params
    }

    pub fn projections(&self) -> &ProjectionSet {
        &self.projections
    }

    pub fn trees(&self) -> &[QalshTree] {
        &self.trees
    }

    pub fn mode(&self) -> QalshMode {
        self.mode
    }

    pub fn set_mode(&mut self, mode: QalshMode) {
        self.mode = mode;
    }

    pub fn page_size(&self) -> usize {
        self.page_size
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn io_stats(&self) -> IoStats {
        self.io.snapshot()
    }

    pub fn reset_io_stats(&self) {
        self.io.reset()
    }

    pub fn query<T: Scalar>(&self, data: &Dataset<T>, q: &[T], k: usize) -> Result<Vec<Neighbor>> {
        Ok(self.query_with(data, q, k, StopRule::Standard)?.neighbors)
    }

    /// `data` must be the dataset the index was built over.
    pub fn query_with<T: Scalar>(&self, data: &Dataset<T>, q: &[T], k: usize, stop: StopRule) -> Result<QueryReport> {
        if data.len() != self.len {
            return Err(Error::invalid(format!(
                "index holds {} points but the dataset has {}",
                self.len,
                data.len()
            )));
        }
        data.check_query(q)?;
        let hvals = query_hvals(&self.projections, q);
        let mut probe = TreeProbe::new(self.trees.iter().collect(), &hvals, self.params.w, self.mode);
        let report = collision_search(
            &mut probe,
            data,
            q,
            &self.params,
            k,
            stop,
            radius_schedule(1.0, self.params.c),
        )?;
        self.io.add(report.io);
        Ok(report)
    }
}
