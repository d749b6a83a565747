//! Dataset model, Euclidean distance and the exact k-NN oracle.

use std::cmp::Ordering;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Point identifier, assigned by arrival order starting at 0.
pub type PointId = u32;

/// An owned point: its id plus coordinates.
#[derive(Clone, Debug, PartialEq)]
pub struct VectorRecord<T> {
    pub id: PointId,
    pub coords: Vec<T>,
}

/// A result entry: point id and its true Euclidean distance to the query.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Neighbor {
    pub id: PointId,
    pub distance: f64,
}

impl Neighbor {
    /// Ascending distance, ties broken by ascending id.
    pub fn cmp_by_distance(&self, other: &Self) -> Ordering {
        self.distance
            .total_cmp(&other.distance)
            .then(self.id.cmp(&other.id))
    }
}

/// Points of a fixed dimensionality in load (stream) order.
///
/// Coordinates are kept in one flat buffer; point `i` occupies
/// `coords[i * dim..(i + 1) * dim]`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Dataset<T> {
    dim: usize,
    coords: Vec<T>,
}

impl<T: Scalar> Dataset<T> {
    /// An empty dataset. `dim == 0` means "not yet known"; the first push fixes it.
    pub fn new(dim: usize) -> Self {
        Dataset {
            dim,
            coords: Vec::new(),
        }
    }

    pub fn from_rows<I, R>(dim: usize, rows: I) -> Result<Self>
    where
        I: IntoIterator<Item = R>,
        R: AsRef<[T]>,
    {
        let mut ds = Dataset::new(dim);
        for row in rows {
            ds.push(row.as_ref())?;
        }
        Ok(ds)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        if self.dim == 0 {
            0
        } else {
            self.coords.len() / self.dim
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Appends a point and returns its id.
    pub fn push(&mut self, coords: &[T]) -> Result<PointId> {
        if self.dim == 0 && self.coords.is_empty() {
            if coords.is_empty() {
                return Err(Error::invalid("points must have at least one coordinate"));
            }
            self.dim = coords.len();
        }
        if coords.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: coords.len(),
            });
        }
        let id = self.len();
        if id > PointId::MAX as usize {
            return Err(Error::Capacity {
                capacity: PointId::MAX as usize,
            });
        }
        self.coords.extend_from_slice(coords);
        Ok(id as PointId)
    }

    #[inline]
    pub fn point(&self, id: PointId) -> &[T] {
        let start = id as usize * self.dim;
        &self.coords[start..start + self.dim]
    }

    pub fn get(&self, id: PointId) -> Option<&[T]> {
        ((id as usize) < self.len()).then(|| self.point(id))
    }

    pub fn record(&self, id: PointId) -> Option<VectorRecord<T>> {
        self.get(id).map(|c| VectorRecord {
            id,
            coords: c.to_vec(),
        })
    }

    pub fn iter(&self) -> impl ExactSizeIterator<Item = (PointId, &[T])> + '_ {
        let dim = self.dim.max(1);
        self.coords
            .chunks_exact(dim)
            .enumerate()
            .map(|(i, c)| (i as PointId, c))
    }

    /// The first `n` points as a new dataset.
    pub fn prefix(&self, n: usize) -> Dataset<T> {
        let n = n.min(self.len());
        Dataset {
            dim: self.dim,
            coords: self.coords[..n * self.dim].to_vec(),
        }
    }

    pub(crate) fn truncate(&mut self, n: usize) {
        self.coords.truncate(n * self.dim);
    }

    pub(crate) fn check_query(&self, q: &[T]) -> Result<()> {
        if q.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: q.len(),
            });
        }
        Ok(())
    }
}

/// Euclidean distance, accumulated in `f64`.
pub fn euclidean<T: Scalar>(a: &[T], b: &[T]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: a.len(),
            found: b.len(),
        });
    }
    Ok(euclidean_unchecked(a, b))
}

#[inline]
pub(crate) fn euclidean_unchecked<T: Scalar>(a: &[T], b: &[T]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| {
            let d = x.widen() - y.widen();
            d * d
        })
        .sum::<f64>()
        .sqrt()
}

/// Exact k nearest neighbours of `query`, ascending by distance, ties by id.
pub fn brute_force_knn<T: Scalar>(data: &Dataset<T>, query: &[T], k: usize) -> Result<Vec<Neighbor>> {
    if k == 0 {
        return Err(Error::invalid("k must be at least 1"));
    }
    if k > data.len() {
        return Err(Error::KTooLarge { k, n: data.len() });
    }
    data.check_query(query)?;
    let mut all: Vec<Neighbor> = data
        .iter()
        .map(|(id, p)| Neighbor {
            id,
            distance: euclidean_unchecked(p, query),
        })
        .collect();
    if k < all.len() {
        all.select_nth_unstable_by(k - 1, Neighbor::cmp_by_distance);
        all.truncate(k);
    }
    all.sort_unstable_by(Neighbor::cmp_by_distance);
    Ok(all)
}

/// Exact k-NN rows for a query set.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct GroundTruth {
    pub rows: Vec<Vec<Neighbor>>,
}

impl GroundTruth {
    /// Uses the first `queries` points of `data` as the query set.
    pub fn compute<T: Scalar>(data: &Dataset<T>, queries: usize, k: usize) -> Result<Self> {
        if queries > data.len() {
            return Err(Error::invalid(format!(
                "{queries} queries requested from a dataset of {} points",
                data.len()
            )));
        }
        let rows = (0..queries as PointId)
            .map(|q| brute_force_knn(data, data.point(q), k))
            .collect::<Result<Vec<_>>>()?;
        Ok(GroundTruth { rows })
    }

    pub fn k(&self) -> usize {
        self.rows.first().map_or(0, Vec::len)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn three_four_five() {
        assert_eq!(euclidean(&[0.0f32, 0.0], &[3.0, 4.0]).unwrap(), 5.0);
        assert_eq!(euclidean(&[1.5f64, -2.0], &[1.5, -2.0]).unwrap(), 0.0);
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        assert!(matches!(
            euclidean(&[0.0f32], &[1.0, 2.0]),
            Err(Error::DimensionMismatch { expected: 1, found: 2 })
        ));
        let mut ds = Dataset::<f32>::new(2);
        assert!(ds.push(&[1.0, 2.0, 3.0]).is_err());
    }

    #[test]
    fn knn_forced_ordering() {
        let ds = Dataset::from_rows(1, [[3.0f32], [1.0], [2.0]]).unwrap();
        let got = brute_force_knn(&ds, &[0.0], 2).unwrap();
        assert_eq!(got.iter().map(|n| n.id).collect::<Vec<_>>(), vec![1, 2]);
        assert_eq!(got[0].distance, 1.0);
        assert_eq!(got[1].distance, 2.0);
    }

    #[test]
    fn knn_self_first_and_ties_by_id() {
        let ds = Dataset::from_rows(1, [[1.0f32], [0.0], [-1.0], [0.0]]).unwrap();
        let got = brute_force_knn(&ds, &[0.0], 4).unwrap();
        let ids: Vec<_> = got.iter().map(|n| n.id).collect();
        assert_eq!(ids, vec![1, 3, 0, 2]);
        assert_eq!(got[0].distance, 0.0);
    }

    #[test]
    fn knn_rejects_large_k() {
        let ds = Dataset::from_rows(1, [[1.0f32]]).unwrap();
        assert!(matches!(
            brute_force_knn(&ds, &[0.0], 2),
            Err(Error::KTooLarge { k: 2, n: 1 })
        ));
    }

    #[test]
    fn empty_dataset_has_unknown_dim() {
        let ds = Dataset::<f32>::new(0);
        assert_eq!(ds.len(), 0);
        assert_eq!(ds.iter().count(), 0);
    }
}
