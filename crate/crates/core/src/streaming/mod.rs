//! Two-component indexes for data that keeps arriving.
//!
//! New points go to an in-memory delta component (per projection, a bucket
//! map for C2LSH or an ordered set of hash values for QALSH). Queries count
//! collisions over the on-disk main component and the delta together. When
//! the [`MergePolicy`] fires, main and delta are merged into a new main
//! written to a fresh generation directory and swapped in.
//!
//! Parameters are sized for the final cardinality up front, so inserting
//! beyond it is refused. Ids are assigned in arrival order, which keeps a
//! merged main identical to a batch build over the same points.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::ops::Bound;
use std::path::{Path, PathBuf};
use std::sync::{Arc, RwLock, RwLockReadGuard, RwLockWriteGuard};

use crate::c2lsh::{
    base_buckets, bucket_i32, initial_radius_for, integral_ratio, radii, BucketCatalog, BucketProbe, C2lshIndex,
    C2lshProjectionFile,
};
use crate::error::{Error, Result};
use crate::hash::ProjectionSet;
use crate::io_stats::{IoCounter, IoStats};
use crate::manifest::Algo;
use crate::params::LshParams;
use crate::qalsh::{half_width, query_hvals, QalshIndex, QalshMode, QalshTree, TreeProbe};
use crate::scalar::Scalar;
use crate::search::{collision_search, radius_schedule, ProbeSource, QueryReport, StopRule};
use crate::vector::{Dataset, Neighbor, PointId, VectorRecord};

/// When to fold the delta into the main component. Whichever configured
/// trigger is hit first causes a merge; the fraction is relative to the
/// main component and ignored while main is empty.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MergePolicy {
    pub max_delta_points: Option<usize>,
    pub max_delta_fraction: Option<f64>,
}

impl Default for MergePolicy {
    fn default() -> Self {
        MergePolicy {
            max_delta_points: Some(4096),
            max_delta_fraction: Some(0.1),
        }
    }
}

impl MergePolicy {
    pub fn points(n: usize) -> Self {
        MergePolicy {
            max_delta_points: Some(n),
            max_delta_fraction: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match (self.max_delta_points, self.max_delta_fraction) {
            (None, None) => Err(Error::invalid("merge policy needs at least one trigger")),
            (Some(0), _) => Err(Error::invalid("max_delta_points must be at least 1")),
            (_, Some(f)) if !(f > 0.0 && f.is_finite()) => {
                Err(Error::invalid(format!("max_delta_fraction must be positive, got {f}")))
            }
            _ => Ok(()),
        }
    }

    pub fn should_merge(&self, delta: usize, main: usize) -> bool {
        let by_points = self.max_delta_points.is_some_and(|p| delta >= p);
        let by_fraction = self
            .max_delta_fraction
            .is_some_and(|f| main > 0 && delta as f64 >= f * main as f64);
        by_points || by_fraction
    }
}

/// Hash value ordered by `f64::total_cmp` so it can key ordered collections.
#[derive(Clone, Copy, Debug)]
pub struct HashKey(pub f64);

impl PartialEq for HashKey {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for HashKey {}

impl PartialOrd for HashKey {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for HashKey {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.total_cmp(&other.0)
    }
}

/// In-memory component absorbing arrivals, one ordered structure per projection.
#[derive(Clone, Debug, PartialEq)]
pub enum DeltaComponent {
    C2lsh(Vec<BTreeMap<i32, Vec<PointId>>>),
    Qalsh(Vec<BTreeSet<(HashKey, PointId)>>),
}

impl DeltaComponent {
    fn new(algo: Algo, m: usize) -> Self {
        match algo {
            Algo::C2lsh => DeltaComponent::C2lsh(vec![BTreeMap::new(); m]),
            Algo::Qalsh => DeltaComponent::Qalsh(vec![BTreeSet::new(); m]),
        }
    }

    pub fn len(&self) -> usize {
        match self {
            DeltaComponent::C2lsh(maps) => maps.first().map_or(0, |m| m.values().map(Vec::len).sum()),
            DeltaComponent::Qalsh(sets) => sets.first().map_or(0, BTreeSet::len),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Ids of projection `proj` in enumeration order.
    pub fn ids(&self, proj: usize) -> Vec<PointId> {
        match self {
            DeltaComponent::C2lsh(maps) => maps[proj].values().flatten().copied().collect(),
            DeltaComponent::Qalsh(sets) => sets[proj].iter().map(|e| e.1).collect(),
        }
    }

    fn clear(&mut self) {
        match self {
            DeltaComponent::C2lsh(maps) => maps.iter_mut().for_each(BTreeMap::clear),
            DeltaComponent::Qalsh(sets) => sets.iter_mut().for_each(BTreeSet::clear),
        }
    }
}

#[derive(Debug)]
pub enum MainComponent {
    C2lsh(C2lshIndex),
    Qalsh(QalshIndex),
}

impl MainComponent {
    pub fn len(&self) -> usize {
        match self {
            MainComponent::C2lsh(i) => i.len(),
            MainComponent::Qalsh(i) => i.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn persist(&self, dir: &Path) -> Result<()> {
        match self {
            MainComponent::C2lsh(i) => i.persist(dir),
            MainComponent::Qalsh(i) => i.persist(dir),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StreamConfig {
    pub algo: Algo,
    pub page_size: usize,
    pub mode: QalshMode,
    pub policy: MergePolicy,
}

impl StreamConfig {
    pub fn new(algo: Algo) -> Self {
        StreamConfig {
            algo,
            page_size: 4096,
            mode: QalshMode::Corrected,
            policy: MergePolicy::default(),
        }
    }
}

#[derive(Debug)]
pub struct StreamingIndex<T> {
    config: StreamConfig,
    params: LshParams,
    projections: ProjectionSet,
    data: Dataset<T>,
    main: Option<MainComponent>,
    delta: DeltaComponent,
    dir: PathBuf,
    generation: usize,
    merges: usize,
    io: IoCounter,
}

impl<T: Scalar> StreamingIndex<T> {
    /// An index with nothing in it; generations are written under `dir`.
    pub fn create(dir: &Path, dim: usize, params: LshParams, projections: ProjectionSet, config: StreamConfig) -> Result<Self> {
        params.validate()?;
        config.policy.validate()?;
        if config.algo == Algo::C2lsh {
            integral_ratio(params.c)?;
        }
        crate::qalsh::capacities(config.page_size)?;
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
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        Ok(StreamingIndex {
            delta: DeltaComponent::new(config.algo, params.m),
            config,
            params,
            projections,
            data: Dataset::new(dim),
            main: None,
            dir: dir.to_path_buf(),
            generation: 0,
            merges: 0,
            io: IoCounter::default(),
        })
    }

    /// Batch-builds `preload` as the first main component.
    pub fn with_preload(
        dir: &Path,
        preload: Dataset<T>,
        params: LshParams,
        projections: ProjectionSet,
        config: StreamConfig,
    ) -> Result<Self> {
        if preload.len() > params.n {
            return Err(Error::Capacity { capacity: params.n });
        }
        let mut index = Self::create(dir, preload.dim(), params, projections, config)?;
        index.data = preload;
        if !index.data.is_empty() {
            index.rebuild_main()?;
        }
        Ok(index)
    }

    pub fn algo(&self) -> Algo {
        self.config.algo
    }

    pub fn config(&self) -> &StreamConfig {
        &self.config
    }

    pub fn params(&self) -> &LshParams {
        &self.params
    }

    pub fn projections(&self) -> &ProjectionSet {
        &self.projections
    }

    /// Every stored point, indexed by id.
    pub fn data(&self) -> &Dataset<T> {
        &self.data
    }

    pub fn main(&self) -> Option<&MainComponent> {
        self.main.as_ref()
    }

    pub fn delta(&self) -> &DeltaComponent {
        &self.delta
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn main_len(&self) -> usize {
        self.main.as_ref().map_or(0, MainComponent::len)
    }

    pub fn delta_len(&self) -> usize {
        self.delta.len()
    }

    pub fn merges(&self) -> usize {
        self.merges
    }

    /// Directory holding the current main component, if any.
    pub fn main_dir(&self) -> Option<PathBuf> {
        self.main.as_ref().map(|_| self.generation_dir(self.generation))
    }

    pub fn set_policy(&mut self, policy: MergePolicy) -> Result<()> {
        policy.validate()?;
        self.config.policy = policy;
        Ok(())
    }

    pub fn set_mode(&mut self, mode: QalshMode) {
        self.config.mode = mode;
        if let Some(MainComponent::Qalsh(q)) = &mut self.main {
            q.set_mode(mode);
        }
    }

    pub fn io_stats(&self) -> IoStats {
        self.io.snapshot()
    }

    pub fn reset_io_stats(&self) {
        self.io.reset()
    }

    fn generation_dir(&self, g: usize) -> PathBuf {
        self.dir.join(format!("gen_{g}"))
    }

    fn check_room(&self) -> Result<()> {
        if self.data.len() >= self.params.n {
            return Err(Error::Capacity { capacity: self.params.n });
        }
        Ok(())
    }

    /// Adds a point under the next id, merging afterwards if the policy fires.
    pub fn insert(&mut self, point: &[T]) -> Result<PointId> {
        self.check_room()?;
        let id = self.data.push(point)?;
        if let Err(e) = self.hash_into_delta(id) {
            self.data.truncate(id as usize);
            return Err(e);
        }
        if self.config.policy.should_merge(self.delta.len(), self.main_len()) {
            self.merge()?;
        }
        Ok(id)
    }

    /// Inserts a record whose id must be the next unused one.
    pub fn insert_record(&mut self, record: &VectorRecord<T>) -> Result<PointId> {
        let next = self.data.len() as PointId;
        match record.id.cmp(&next) {
            Ordering::Less => Err(Error::DuplicateId(record.id)),
            Ordering::Greater => Err(Error::invalid(format!(
                "ids are assigned in arrival order; expected {next}, got {}",
                record.id
            ))),
            Ordering::Equal => self.insert(&record.coords),
        }
    }

    fn hash_into_delta(&mut self, id: PointId) -> Result<()> {
        let point = self.data.point(id);
        match &mut self.delta {
            DeltaComponent::C2lsh(maps) => {
                let buckets = base_buckets(&self.projections, point)
                    .into_iter()
                    .enumerate()
                    .map(|(i, b)| bucket_i32(b, i))
                    .collect::<Result<Vec<_>>>()?;
                for (map, b) in maps.iter_mut().zip(buckets) {
                    map.entry(b).or_default().push(id);
                }
            }
            DeltaComponent::Qalsh(sets) => {
                let hvals = query_hvals(&self.projections, point);
                if hvals.iter().any(|h| !h.is_finite()) {
                    return Err(Error::invalid(format!("point {id} has a non-finite projection")));
                }
                for (set, h) in sets.iter_mut().zip(hvals) {
                    set.insert((HashKey(h), id));
                }
            }
        }
        Ok(())
    }

    /// Folds the delta into a new main component. The new main is written
    /// in full before it replaces the old one; on error nothing changes.
    pub fn merge(&mut self) -> Result<()> {
        if self.delta.is_empty() {
            return Ok(());
        }
        let merged = self.merged_main()?;
        self.install(merged)?;
        self.delta.clear();
        self.merges += 1;
        Ok(())
    }

    fn merged_main(&self) -> Result<MainComponent> {
        let ps = self.config.page_size;
        Ok(match &self.delta {
            DeltaComponent::C2lsh(maps) => {
                let main = match &self.main {
                    Some(MainComponent::C2lsh(i)) => Some(i),
                    _ => None,
                };
                let files = maps
                    .iter()
                    .enumerate()
                    .map(|(p, map)| {
                        let delta = map.iter().flat_map(|(&b, ids)| ids.iter().map(move |&id| (b, id)));
                        let merged = match main {
                            Some(i) => merge_sorted(i.files()[p].pairs(), delta, |a, b| a.cmp(b)),
                            None => delta.collect(),
                        };
                        C2lshProjectionFile::from_sorted_pairs(&merged)
                    })
                    .collect::<Result<Vec<_>>>()?;
                MainComponent::C2lsh(C2lshIndex::from_parts(self.params, self.projections.clone(), files, ps)?)
            }
            DeltaComponent::Qalsh(sets) => {
                let main = match &self.main {
                    Some(MainComponent::Qalsh(i)) => Some(i),
                    _ => None,
                };
                let trees = sets
                    .iter()
                    .enumerate()
                    .map(|(p, set)| {
                        let delta = set.iter().map(|&(HashKey(h), id)| (h, id));
                        let merged = match main {
                            Some(i) => merge_sorted(i.trees()[p].pairs(), delta, |a, b| {
                                a.0.total_cmp(&b.0).then(a.1.cmp(&b.1))
                            }),
                            None => delta.collect(),
                        };
                        QalshTree::build(&merged, ps)
                    })
                    .collect::<Result<Vec<_>>>()?;
                MainComponent::Qalsh(QalshIndex::from_parts(
                    self.params,
                    self.projections.clone(),
                    trees,
                    ps,
                    self.config.mode,
                )?)
            }
        })
    }

    fn install(&mut self, main: MainComponent) -> Result<()> {
        let next = self.generation + 1;
        let dir = self.generation_dir(next);
        if dir.exists() {
            fs::remove_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        }
        if let Err(e) = main.persist(&dir) {
            let _ = fs::remove_dir_all(&dir);
            return Err(e);
        }
        let old = self.main.is_some().then(|| self.generation_dir(self.generation));
        self.main = Some(main);
        self.generation = next;
        if let Some(old) = old {
            let _ = fs::remove_dir_all(old);
        }
        Ok(())
    }

    fn rebuild_main(&mut self) -> Result<()> {
        let ps = self.config.page_size;
        let main = match self.config.algo {
            Algo::C2lsh => MainComponent::C2lsh(C2lshIndex::build_in_memory(
                &self.data,
                self.params,
                self.projections.clone(),
                ps,
            )?),
            Algo::Qalsh => MainComponent::Qalsh(QalshIndex::build_in_memory(
                &self.data,
                self.params,
                self.projections.clone(),
                ps,
                self.config.mode,
            )?),
        };
        self.install(main)?;
        self.delta.clear();
        Ok(())
    }

    /// Reference path: appends the point and rebuilds the whole main
    /// component from every stored point.
    pub fn naive_rebuild_insert(&mut self, point: &[T]) -> Result<PointId> {
        self.check_room()?;
        let id = self.data.push(point)?;
        if let Err(e) = self.rebuild_main() {
            self.data.truncate(id as usize);
            return Err(e);
        }
        Ok(id)
    }

    /// Merges any pending delta so the on-disk state is a complete batch index.
    pub fn close(mut self) -> Result<Option<PathBuf>> {
        self.merge()?;
        Ok(self.main_dir())
    }

    pub fn query_combined(&self, q: &[T], k: usize) -> Result<Vec<Neighbor>> {
        Ok(self.query_combined_with(q, k, StopRule::Standard)?.neighbors)
    }

    pub fn query_combined_with(&self, q: &[T], k: usize, stop: StopRule) -> Result<QueryReport> {
        self.data.check_query(q)?;
        crate::search::check_k(k, self.data.len())?;
        let report = match &self.delta {
            DeltaComponent::C2lsh(maps) => {
                let main = match &self.main {
                    Some(MainComponent::C2lsh(i)) => Some(i),
                    _ => None,
                };
                let ratio = integral_ratio(self.params.c)?;
                let catalog = CombinedBuckets { main, delta: maps };
                let base = base_buckets(&self.projections, q);
                let start = initial_radius_for(&catalog, &base, self.config.page_size, ratio);
                let mut probe = BucketProbe::new(&catalog, base, ratio);
                collision_search(&mut probe, &self.data, q, &self.params, k, stop, radii(start, ratio))?
            }
            DeltaComponent::Qalsh(sets) => {
                let hvals = query_hvals(&self.projections, q);
                let main = match &self.main {
                    Some(MainComponent::Qalsh(i)) => Some(TreeProbe::new(i.trees().iter().collect(), &hvals, self.params.w, self.config.mode)),
                    _ => None,
                };
                let mut probe = CombinedTrees {
                    main,
                    delta: sets,
                    q: hvals,
                    covered: vec![None; sets.len()],
                    w: self.params.w,
                };
                collision_search(
                    &mut probe,
                    &self.data,
                    q,
                    &self.params,
                    k,
                    stop,
                    radius_schedule(1.0, self.params.c),
                )?
            }
        };
        self.io.add(report.io);
        Ok(report)
    }
}

fn merge_sorted<P: Copy>(
    a: impl Iterator<Item = P>,
    b: impl Iterator<Item = P>,
    cmp: impl Fn(&P, &P) -> Ordering,
) -> Vec<P> {
    let mut out = Vec::with_capacity(a.size_hint().0 + b.size_hint().0);
    let (mut a, mut b) = (a.peekable(), b.peekable());
    loop {
        let take_a = match (a.peek(), b.peek()) {
            (Some(x), Some(y)) => cmp(x, y) != Ordering::Greater,
            (Some(_), None) => true,
            (None, Some(_)) => false,
            (None, None) => return out,
        };
        out.push(if take_a { a.next() } else { b.next() }.unwrap());
    }
}

fn clamp_i32(v: i64) -> i32 {
    v.clamp(i32::MIN as i64, i32::MAX as i64) as i32
}

struct CombinedBuckets<'a> {
    main: Option<&'a C2lshIndex>,
    delta: &'a [BTreeMap<i32, Vec<PointId>>],
}

impl CombinedBuckets<'_> {
    fn delta_range(&self, proj: usize, lo: i64, hi: i64) -> impl Iterator<Item = &Vec<PointId>> + '_ {
        let empty = lo > hi || hi < i32::MIN as i64 || lo > i32::MAX as i64;
        let range = (!empty).then(|| self.delta[proj].range(clamp_i32(lo)..=clamp_i32(hi)));
        range.into_iter().flatten().map(|(_, ids)| ids)
    }
}

impl BucketCatalog for CombinedBuckets<'_> {
    fn num_projections(&self) -> usize {
        self.delta.len()
    }

    fn count_in(&self, proj: usize, lo: i64, hi: i64) -> usize {
        let main = self.main.map_or(0, |m| m.count_in(proj, lo, hi));
        main + self.delta_range(proj, lo, hi).map(Vec::len).sum::<usize>()
    }

    fn bounds(&self, proj: usize) -> Option<(i64, i64)> {
        let delta = self.delta[proj]
            .first_key_value()
            .zip(self.delta[proj].last_key_value())
            .map(|((&a, _), (&b, _))| (a as i64, b as i64));
        match (self.main.and_then(|m| m.bounds(proj)), delta) {
            (Some((a, b)), Some((c, d))) => Some((a.min(c), b.max(d))),
            (x, None) => x,
            (None, y) => y,
        }
    }

    fn read(&self, proj: usize, lo: i64, hi: i64, out: &mut Vec<PointId>, io: &mut IoStats) -> Result<()> {
        if let Some(m) = self.main {
            m.read(proj, lo, hi, out, io)?;
        }
        for ids in self.delta_range(proj, lo, hi) {
            out.extend_from_slice(ids);
        }
        Ok(())
    }
}

struct CombinedTrees<'a> {
    main: Option<TreeProbe<'a>>,
    delta: &'a [BTreeSet<(HashKey, PointId)>],
    q: Vec<f64>,
    covered: Vec<Option<(f64, f64)>>,
    w: f64,
}

impl ProbeSource for CombinedTrees<'_> {
    fn num_projections(&self) -> usize {
        self.delta.len()
    }

    fn extend(&mut self, proj: usize, radius: f64, out: &mut Vec<PointId>, io: &mut IoStats) -> Result<()> {
        if let Some(main) = &mut self.main {
            main.extend(proj, radius, out, io)?;
        }
        let t = half_width(self.w, radius);
        let (lo, hi) = (self.q[proj] - t, self.q[proj] + t);
        let set = &self.delta[proj];
        let start = (HashKey(lo), PointId::MIN);
        let end = (HashKey(hi), PointId::MAX);
        match self.covered[proj] {
            None => out.extend(set.range(start..=end).map(|e| e.1)),
            Some((plo, phi)) => {
                let (plo, phi) = (plo.max(lo), phi.min(hi));
                out.extend(
                    set.range((Bound::Included(start), Bound::Excluded((HashKey(plo), PointId::MIN))))
                        .map(|e| e.1),
                );
                out.extend(
                    set.range((Bound::Excluded((HashKey(phi), PointId::MAX)), Bound::Included(end)))
                        .map(|e| e.1),
                );
            }
        }
        self.covered[proj] = Some((lo, hi));
        Ok(())
    }

    fn exhausted(&self) -> bool {
        let main = self.main.as_ref().is_none_or(|m| m.exhausted());
        main && self.delta.iter().zip(&self.covered).all(|(set, cov)| match (set.first(), set.last(), cov) {
            (None, _, _) => true,
            (Some(a), Some(b), Some((lo, hi))) => *lo <= a.0 .0 && *hi >= b.0 .0,
            _ => false,
        })
    }
}

/// A streaming index behind a reader-writer lock. Readers see either the
/// state before a merge or the state after it, never a mix.
#[derive(Clone, Debug)]
pub struct SharedStreamingIndex<T>(Arc<RwLock<StreamingIndex<T>>>);

impl<T: Scalar> SharedStreamingIndex<T> {
    pub fn new(index: StreamingIndex<T>) -> Self {
        SharedStreamingIndex(Arc::new(RwLock::new(index)))
    }

    pub fn read(&self) -> RwLockReadGuard<'_, StreamingIndex<T>> {
        self.0.read().unwrap_or_else(|e| e.into_inner())
    }

    pub fn write(&self) -> RwLockWriteGuard<'_, StreamingIndex<T>> {
        self.0.write().unwrap_or_else(|e| e.into_inner())
    }

    pub fn insert(&self, point: &[T]) -> Result<PointId> {
        self.write().insert(point)
    }

    pub fn merge(&self) -> Result<()> {
        self.write().merge()
    }

    pub fn query_combined(&self, q: &[T], k: usize) -> Result<Vec<Neighbor>> {
        self.read().query_combined(q, k)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn policy_triggers() {
        let p = MergePolicy::default();
        assert!(!p.should_merge(10, 0));
        assert!(p.should_merge(4096, 0));
        assert!(p.should_merge(100, 1000));
        assert!(!p.should_merge(99, 1000));
        assert!(MergePolicy {
            max_delta_points: None,
            max_delta_fraction: None
        }
        .validate()
        .is_err());
        assert!(MergePolicy::points(0).validate().is_err());
    }

    #[test]
    fn merge_sorted_interleaves() {
        let got = merge_sorted([1, 4, 6].into_iter(), [2, 3, 7].into_iter(), |a: &i32, b| a.cmp(b));
        assert_eq!(got, vec![1, 2, 3, 4, 6, 7]);
    }

    #[test]
    fn hash_key_total_order() {
        let mut v = vec![HashKey(1.0), HashKey(-2.5), HashKey(0.0)];
        v.sort();
        assert_eq!(v.iter().map(|k| k.0).collect::<Vec<_>>(), vec![-2.5, 0.0, 1.0]);
    }
}
