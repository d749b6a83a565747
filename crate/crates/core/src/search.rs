//! The collision-counting loop shared by every index variant.
//!
//! A [`ProbeSource`] widens its per-projection coverage radius by radius and
//! reports each id exactly once per projection. Ids whose count reaches the
//! threshold `l` become candidates and get their true distance computed.

use crate::error::{Error, Result};
use crate::io_stats::IoStats;
use crate::params::LshParams;
use crate::scalar::Scalar;
use crate::vector::{euclidean_unchecked, Dataset, Neighbor, PointId};

/// Hard cap on radius levels; coverage is complete long before this on real data.
pub(crate) const MAX_ROUNDS: usize = 64;

/// Termination conditions for a query.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum StopRule {
    /// Stop once `k` candidates lie within `c * R` (T1) or the candidate
    /// budget `beta * n + k - 1` is reached (T2).
    #[default]
    Standard,
    /// Only the candidate budget (and full coverage) ends the search.
    BudgetOnly,
}

/// Outcome of one query with its bookkeeping.
#[derive(Clone, Debug, PartialEq)]
pub struct QueryReport {
    pub neighbors: Vec<Neighbor>,
    pub io: IoStats,
    pub final_radius: f64,
    pub rounds: usize,
    pub candidates: usize,
}

pub(crate) trait ProbeSource {
    fn num_projections(&self) -> usize;

    /// Widens projection `proj` to `radius`, appending ids not reported before.
    fn extend(&mut self, proj: usize, radius: f64, out: &mut Vec<PointId>, io: &mut IoStats) -> Result<()>;

    /// True once every projection covers all of its entries.
    fn exhausted(&self) -> bool;
}

pub(crate) fn check_k(k: usize, n: usize) -> Result<()> {
    if k == 0 {
        return Err(Error::invalid("k must be at least 1"));
    }
    if k > n {
        return Err(Error::KTooLarge { k, n });
    }
    Ok(())
}

/// Geometric radius schedule `start, start*c, start*c^2, ...`.
pub(crate) fn radius_schedule(start: f64, c: f64) -> impl Iterator<Item = f64> {
    std::iter::successors(Some(start), move |r| Some(r * c)).take(MAX_ROUNDS)
}

pub(crate) fn collision_search<T, S>(
    source: &mut S,
    data: &Dataset<T>,
    query: &[T],
    params: &LshParams,
    k: usize,
    stop: StopRule,
    radii: impl Iterator<Item = f64>,
) -> Result<QueryReport>
where
    T: Scalar,
    S: ProbeSource,
{
    let n = data.len();
    check_k(k, n)?;
    data.check_query(query)?;
    let threshold = params.l as u32;
    let budget = params.candidate_budget(n, k);

    let mut counts = vec![0u32; n];
    let mut candidates: Vec<Neighbor> = Vec::new();
    let mut fresh = Vec::new();
    let mut io = IoStats::default();
    let mut final_radius = 0.0;
    let mut rounds = 0;

    for radius in radii {
        rounds += 1;
        final_radius = radius;
        for proj in 0..source.num_projections() {
            fresh.clear();
            source.extend(proj, radius, &mut fresh, &mut io)?;
            for &id in &fresh {
                let slot = &mut counts[id as usize];
                *slot += 1;
                if *slot == threshold {
                    candidates.push(Neighbor {
                        id,
                        distance: euclidean_unchecked(data.point(id), query),
                    });
                }
            }
        }
        if stop == StopRule::Standard {
            let bound = params.c * radius;
            if candidates.iter().filter(|c| c.distance <= bound).count() >= k {
                break;
            }
        }
        if candidates.len() >= budget || source.exhausted() {
            break;
        }
    }

    let total = candidates.len();
    candidates.sort_unstable_by(Neighbor::cmp_by_distance);
    candidates.truncate(k);
    Ok(QueryReport {
        neighbors: candidates,
        io,
        final_radius,
        rounds,
        candidates: total,
    })
}
