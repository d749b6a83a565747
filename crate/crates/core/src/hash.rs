//! Gaussian (2-stable) random projections shared by both index designs.

use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// `m` projection vectors with i.i.d. N(0,1) entries, offsets `b` in `[0, w)`
/// and the bucket width `w`.
#[derive(Clone, Debug, PartialEq)]
pub struct ProjectionSet {
    dim: usize,
    w: f64,
    seed: u64,
    a: Vec<f64>,
    b: Vec<f64>,
}

impl ProjectionSet {
    /// Deterministic in `(dim, m, w, seed)`.
    pub fn generate(dim: usize, m: usize, w: f64, seed: u64) -> Result<Self> {
        if dim == 0 || m == 0 {
            return Err(Error::invalid("projections need dim >= 1 and m >= 1"));
        }
        if !(w > 0.0 && w.is_finite()) {
            return Err(Error::invalid(format!("bucket width must be positive, got {w}")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut a = Vec::with_capacity(m * dim);
        let mut b = Vec::with_capacity(m);
        for _ in 0..m {
            a.extend((0..dim).map(|_| rng.sample::<f64, _>(StandardNormal)));
            b.push(rng.random_range(0.0..w));
        }
        Ok(ProjectionSet { dim, w, seed, a, b })
    }

    /// Builds a set from explicit vectors; `a` holds `m` rows of `dim` entries.
    pub fn from_parts(dim: usize, w: f64, seed: u64, a: Vec<f64>, b: Vec<f64>) -> Result<Self> {
        if dim == 0 || b.is_empty() || a.len() != dim * b.len() {
            return Err(Error::invalid(format!(
                "projection vectors ({}) do not match dim {dim} x m {}",
                a.len(),
                b.len()
            )));
        }
        if !(w > 0.0 && w.is_finite()) {
            return Err(Error::invalid(format!("bucket width must be positive, got {w}")));
        }
        if let Some(bad) = b.iter().find(|&&v| !(0.0..w).contains(&v)) {
            return Err(Error::invalid(format!("offset {bad} outside [0, {w})")));
        }
        Ok(ProjectionSet { dim, w, seed, a, b })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.b.len()
    }

    pub fn is_empty(&self) -> bool {
        self.b.is_empty()
    }

    pub fn width(&self) -> f64 {
        self.w
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn vector(&self, i: usize) -> &[f64] {
        &self.a[i * self.dim..(i + 1) * self.dim]
    }

    pub fn offset(&self, i: usize) -> f64 {
        self.b[i]
    }

    /// Raw projection `a_i . x` without offset or flooring.
    pub fn project<T: Scalar>(&self, i: usize, point: &[T]) -> Result<f64> {
        if i >= self.len() {
            return Err(Error::invalid(format!("projection {i} out of range (m = {})", self.len())));
        }
        if point.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: point.len(),
            });
        }
        Ok(self.project_unchecked(i, point))
    }

    #[inline]
    pub(crate) fn project_unchecked<T: Scalar>(&self, i: usize, point: &[T]) -> f64 {
        self.vector(i)
            .iter()
            .zip(point)
            .map(|(a, x)| a * x.widen())
            .sum()
    }

    /// `floor((hval + b_i) / w)`, the bucket at radius 1.
    #[inline]
    pub fn base_bucket(&self, hval: f64, i: usize) -> i64 {
        ((hval + self.b[i]) / self.w).floor() as i64
    }

    /// `floor((hval + b_i) / (w * radius))`. `radius` must be a power of `ratio`.
    pub fn bucket_id(&self, hval: f64, i: usize, radius: u64, ratio: u64) -> Result<i64> {
        if !is_power_of(radius, ratio) {
            return Err(Error::invalid(format!(
                "radius {radius} is not on the schedule 1, {ratio}, {ratio}^2, ..."
            )));
        }
        Ok(((hval + self.b[i]) / (self.w * radius as f64)).floor() as i64)
    }

    /// Binary sidecar: `[i32 m][i32 d][f64 w][i64 seed]` then per projection
    /// `d` f64 entries followed by its f64 offset, all little-endian.
    pub fn persist(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut buf = Vec::with_capacity(24 + self.len() * (self.dim + 1) * 8);
        buf.extend((self.len() as i32).to_le_bytes());
        buf.extend((self.dim as i32).to_le_bytes());
        buf.extend(self.w.to_le_bytes());
        buf.extend((self.seed as i64).to_le_bytes());
        for i in 0..self.len() {
            for v in self.vector(i) {
                buf.extend(v.to_le_bytes());
            }
            buf.extend(self.b[i].to_le_bytes());
        }
        fs::write(path, buf).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        if bytes.len() < 24 {
            return Err(Error::format(path, 0, "projection header shorter than 24 bytes"));
        }
        let m = i32::from_le_bytes(bytes[0..4].try_into().unwrap());
        let d = i32::from_le_bytes(bytes[4..8].try_into().unwrap());
        if m <= 0 || d <= 0 {
            return Err(Error::format(path, 0, format!("bad header m={m} d={d}")));
        }
        let (m, d) = (m as usize, d as usize);
        let w = f64::from_le_bytes(bytes[8..16].try_into().unwrap());
        let seed = i64::from_le_bytes(bytes[16..24].try_into().unwrap()) as u64;
        let expected = 24 + m * (d + 1) * 8;
        if bytes.len() != expected {
            return Err(Error::format(
                path,
                bytes.len().min(expected) as u64,
                format!("expected {expected} bytes, found {}", bytes.len()),
            ));
        }
        let vals: Vec<f64> = bytes[24..]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let mut a = Vec::with_capacity(m * d);
        let mut b = Vec::with_capacity(m);
        for row in vals.chunks_exact(d + 1) {
            a.extend_from_slice(&row[..d]);
            b.push(row[d]);
        }
        ProjectionSet::from_parts(d, w, seed, a, b)
    }
}

pub(crate) fn is_power_of(radius: u64, ratio: u64) -> bool {
    if radius == 0 || ratio < 2 {
        return radius == 1;
    }
    let mut r = radius;
    while r % ratio == 0 {
        r /= ratio;
    }
    r == 1
}
