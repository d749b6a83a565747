//! Collision counting over bucketed projections with virtual rehashing.
//!
//! Every projection keeps its points sorted by radius-1 bucket number. A
//! query at radius `R` covers the aligned block of `R` consecutive base
//! buckets around its own bucket, so the block at radius `c*R` is the union
//! of `c` blocks at radius `R` and only the newly added flanks are read.
//!
//! Blocks are aligned in a coordinate shifted by a power of `c` that exceeds
//! every `i32` bucket number. For radii up to that power the partition is
//! exactly `floor(bucket / R)`; past it a block can straddle zero, which is
//! what lets coverage eventually reach every bucket.

mod file;

use std::path::Path;

use rayon::prelude::*;

pub use file::C2lshProjectionFile;

use crate::error::{Error, Result};
use crate::hash::ProjectionSet;
use crate::io_stats::{IoCounter, IoStats};
use crate::manifest::{Algo, Manifest, PROJECTIONS_FILE};
use crate::params::LshParams;
use crate::scalar::Scalar;
use crate::search::{collision_search, ProbeSource, QueryReport, StopRule, MAX_ROUNDS};
use crate::vector::{Dataset, Neighbor, PointId};

pub const DEFAULT_PAGE_SIZE: usize = 4096;

pub fn projection_file_name(i: usize) -> String {
    format!("proj_{i}.c2i")
}

/// Checks that `c` is an integer ratio usable for bucket nesting.
pub fn integral_ratio(c: f64) -> Result<u64> {
    if c >= 2.0 && c.fract() == 0.0 && c < 1e6 {
        Ok(c as u64)
    } else {
        Err(Error::invalid(format!(
            "bucket nesting needs an integral approximation ratio >= 2, got {c}"
        )))
    }
}

/// Smallest power of `ratio` that is at least 2^31.
fn alignment_shift(ratio: u64) -> i128 {
    let mut s: i128 = 1;
    while s < (1i128 << 31) {
        s *= ratio as i128;
    }
    s
}

/// Base-bucket interval `[lo, hi]` covered at `radius` by a query in `base`.
pub(crate) fn block(base: i64, radius: u64, shift: i128) -> (i64, i64) {
    let r = radius as i128;
    let lo = (base as i128 + shift).div_euclid(r) * r - shift;
    let hi = lo + r - 1;
    (
        lo.clamp(i64::MIN as i128, i64::MAX as i128) as i64,
        hi.clamp(i64::MIN as i128, i64::MAX as i128) as i64,
    )
}

/// Per-projection bucket directories a query can probe.
pub(crate) trait BucketCatalog {
    fn num_projections(&self) -> usize;

    /// Number of ids stored in buckets `[lo, hi]` of projection `proj`.
    fn count_in(&self, proj: usize, lo: i64, hi: i64) -> usize;

    fn bounds(&self, proj: usize) -> Option<(i64, i64)>;

    fn read(&self, proj: usize, lo: i64, hi: i64, out: &mut Vec<PointId>, io: &mut IoStats) -> Result<()>;
}

/// Largest radius on `1, c, c^2, ...` whose block fits in `page_size` bytes
/// for every projection. Growth stops once every block spans all buckets.
pub(crate) fn initial_radius_for<C: BucketCatalog>(catalog: &C, base: &[i64], page_size: usize, ratio: u64) -> u64 {
    let shift = alignment_shift(ratio);
    let fits = |r: u64| {
        (0..catalog.num_projections()).all(|p| {
            let (lo, hi) = block(base[p], r, shift);
            4 * catalog.count_in(p, lo, hi) <= page_size
        })
    };
    let complete = |r: u64| {
        (0..catalog.num_projections()).all(|p| match catalog.bounds(p) {
            None => true,
            Some((bl, bh)) => {
                let (lo, hi) = block(base[p], r, shift);
                lo <= bl && hi >= bh
            }
        })
    };
    let mut r = 1u64;
    if !fits(r) {
        return 1;
    }
    loop {
        if complete(r) {
            return r;
        }
        match r.checked_mul(ratio) {
            Some(next) if fits(next) => r = next,
            _ => return r,
        }
    }
}

pub(crate) fn radii(start: u64, ratio: u64) -> impl Iterator<Item = f64> {
    std::iter::successors(Some(start), move |r| r.checked_mul(ratio))
        .take(MAX_ROUNDS)
        .map(|r| r as f64)
}

pub(crate) struct BucketProbe<'a, C> {
    catalog: &'a C,
    base: Vec<i64>,
    covered: Vec<Option<(i64, i64)>>,
    shift: i128,
}

impl<'a, C: BucketCatalog> BucketProbe<'a, C> {
    pub(crate) fn new(catalog: &'a C, base: Vec<i64>, ratio: u64) -> Self {
        let m = catalog.num_projections();
        BucketProbe {
            catalog,
            base,
            covered: vec![None; m],
            shift: alignment_shift(ratio),
        }
    }
}

impl<C: BucketCatalog> ProbeSource for BucketProbe<'_, C> {
    fn num_projections(&self) -> usize {
        self.catalog.num_projections()
    }

    fn extend(&mut self, proj: usize, radius: f64, out: &mut Vec<PointId>, io: &mut IoStats) -> Result<()> {
        let (lo, hi) = block(self.base[proj], radius as u64, self.shift);
        match self.covered[proj] {
            None => self.catalog.read(proj, lo, hi, out, io)?,
            Some((plo, phi)) => {
                if lo < plo {
                    self.catalog.read(proj, lo, plo - 1, out, io)?;
                }
                if hi > phi {
                    self.catalog.read(proj, phi + 1, hi, out, io)?;
                }
            }
        }
        self.covered[proj] = Some((lo, hi));
        Ok(())
    }

    fn exhausted(&self) -> bool {
        (0..self.catalog.num_projections()).all(|p| match (self.catalog.bounds(p), self.covered[p]) {
            (None, _) => true,
            (Some((bl, bh)), Some((lo, hi))) => lo <= bl && hi >= bh,
            (Some(_), None) => false,
        })
    }
}

/// Radius-1 bucket of every projection for `point`.
pub(crate) fn base_buckets<T: Scalar>(projections: &ProjectionSet, point: &[T]) -> Vec<i64> {
    (0..projections.len())
        .map(|i| projections.base_bucket(projections.project_unchecked(i, point), i))
        .collect()
}

pub(crate) fn bucket_i32(bucket: i64, projection: usize) -> Result<i32> {
    i32::try_from(bucket).map_err(|_| Error::Projection {
        projection,
        source: Box::new(Error::invalid(format!("bucket {bucket} does not fit in 32 bits"))),
    })
}

/// Sorted `(bucket, id)` pairs of every point for projection `proj`.
pub(crate) fn bucket_pairs<T: Scalar>(
    data: &Dataset<T>,
    projections: &ProjectionSet,
    proj: usize,
) -> Result<Vec<(i32, PointId)>> {
    let mut pairs = data
        .iter()
        .map(|(id, p)| {
            let h = projections.project_unchecked(proj, p);
            Ok((bucket_i32(projections.base_bucket(h, proj), proj)?, id))
        })
        .collect::<Result<Vec<_>>>()?;
    pairs.sort_unstable();
    Ok(pairs)
}

/// A built C2LSH index. Projection files are held in memory once built or
/// opened; `io_stats` counts the payload bytes and seeks queries would issue.
#[derive(Debug)]
pub struct C2lshIndex {
    params: LshParams,
    projections: ProjectionSet,
    files: Vec<C2lshProjectionFile>,
    page_size: usize,
    ratio: u64,
    len: usize,
    io: IoCounter,
}

impl C2lshIndex {
    /// Builds the index over `data` and writes it to `out_dir`.
    pub fn build<T: Scalar>(
        data: &Dataset<T>,
        params: LshParams,
        projections: ProjectionSet,
        out_dir: &Path,
        page_size: usize,
    ) -> Result<Self> {
        let index = Self::build_in_memory(data, params, projections, page_size)?;
        index.persist(out_dir)?;
        Ok(index)
    }

    pub fn build_in_memory<T: Scalar>(
        data: &Dataset<T>,
        params: LshParams,
        projections: ProjectionSet,
        page_size: usize,
    ) -> Result<Self> {
        if data.is_empty() {
            return Err(Error::invalid("cannot build an index over an empty dataset"));
        }
        check_setup(data.dim(), data.len(), &params, &projections)?;
        let files = (0..projections.len())
            .into_par_iter()
            .map(|i| C2lshProjectionFile::from_sorted_pairs(&bucket_pairs(data, &projections, i)?))
            .collect::<Result<Vec<_>>>()?;
        Self::from_parts(params, projections, files, page_size)
    }

    pub(crate) fn from_parts(
        params: LshParams,
        projections: ProjectionSet,
        files: Vec<C2lshProjectionFile>,
        page_size: usize,
    ) -> Result<Self> {
        let ratio = integral_ratio(params.c)?;
        if page_size < 4 {
            return Err(Error::invalid(format!("page size {page_size} is too small")));
        }
        let len = files.first().map_or(0, C2lshProjectionFile::len);
        if files.len() != params.m || files.iter().any(|f| f.len() != len) {
            return Err(Error::invalid("projection files disagree on size or count"));
        }
        Ok(C2lshIndex {
            params,
            projections,
            files,
            page_size,
            ratio,
            len,
            io: IoCounter::default(),
        })
    }

    /// Writes manifest, projection sidecar and one `proj_<i>.c2i` per projection.
    pub fn persist(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        self.manifest().write(dir)?;
        self.projections.persist(dir.join(PROJECTIONS_FILE))?;
        self.files.par_iter().enumerate().try_for_each(|(i, f)| {
            f.persist(&dir.join(projection_file_name(i)))
                .map_err(|e| Error::Projection {
                    projection: i,
                    source: Box::new(e),
                })
        })
    }

    pub fn open(dir: &Path) -> Result<Self> {
        let manifest = Manifest::read(dir)?;
        if manifest.algo != Algo::C2lsh {
            return Err(Error::invalid(format!("{} holds a {} index", dir.display(), manifest.algo)));
        }
        let projections = ProjectionSet::load(dir.join(PROJECTIONS_FILE))?;
        let files = (0..manifest.params.m)
            .into_par_iter()
            .map(|i| C2lshProjectionFile::load(&dir.join(projection_file_name(i))))
            .collect::<Result<Vec<_>>>()?;
        for (i, f) in files.iter().enumerate() {
            let mut seen = vec![false; manifest.n];
            for &id in f.payload() {
                match seen.get_mut(id as usize) {
                    Some(s) if !*s => *s = true,
                    _ => {
                        return Err(Error::format(
                            dir.join(projection_file_name(i)),
                            0,
                            format!("id {id} duplicated or beyond n = {}", manifest.n),
                        ))
                    }
                }
            }
            if f.len() != manifest.n {
                return Err(Error::format(dir.join(projection_file_name(i)), 0, "missing ids"));
            }
        }
        Self::from_parts(manifest.params, projections, files, manifest.page_size)
    }

    pub fn manifest(&self) -> Manifest {
        Manifest {
            algo: Algo::C2lsh,
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

    pub fn files(&self) -> &[C2lshProjectionFile] {
        &self.files
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

    pub fn initial_radius(&self, query_buckets: &[i64]) -> u64 {
        initial_radius_for(self, query_buckets, self.page_size, self.ratio)
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
        let base = base_buckets(&self.projections, q);
        let start = self.initial_radius(&base);
        let mut probe = BucketProbe::new(self, base, self.ratio);
        let report = collision_search(&mut probe, data, q, &self.params, k, stop, radii(start, self.ratio))?;
        self.io.add(report.io);
        Ok(report)
    }
}

impl BucketCatalog for C2lshIndex {
    fn num_projections(&self) -> usize {
        self.files.len()
    }

    fn count_in(&self, proj: usize, lo: i64, hi: i64) -> usize {
        self.files[proj].span(lo, hi).len()
    }

    fn bounds(&self, proj: usize) -> Option<(i64, i64)> {
        self.files[proj].bounds()
    }

    fn read(&self, proj: usize, lo: i64, hi: i64, out: &mut Vec<PointId>, io: &mut IoStats) -> Result<()> {
        out.extend_from_slice(self.files[proj].read_bucket_range(lo, hi, io)?);
        Ok(())
    }
}

pub(crate) fn check_setup(dim: usize, n: usize, params: &LshParams, projections: &ProjectionSet) -> Result<()> {
    params.validate()?;
    if params.n < n {
        return Err(Error::invalid(format!(
            "parameters sized for {} points, dataset has {n}",
            params.n
        )));
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
