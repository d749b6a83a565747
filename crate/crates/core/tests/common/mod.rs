#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rtlsh::{Dataset, LshParams, Neighbor, ProjectionSet};

pub const W: f64 = 2.7191;

pub fn uniform(n: usize, d: usize, seed: u64) -> Dataset<f32> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rows: Vec<Vec<f32>> = (0..n)
        .map(|_| (0..d).map(|_| rng.random_range(0.0f32..10.0)).collect())
        .collect();
    Dataset::from_rows(d, rows).unwrap()
}

pub fn gaussian(n: usize, d: usize, seed: u64) -> Dataset<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|_| (0..d).map(|_| rng.sample::<f64, _>(StandardNormal) * 3.0).collect())
        .collect();
    Dataset::from_rows(d, rows).unwrap()
}

/// Exhaustive configuration: one projection, threshold one, budget n.
pub fn exhaustive(n: usize, d: usize, k: usize, seed: u64) -> (LshParams, ProjectionSet) {
    let params = LshParams::derive(n, 2.0, W, 0.1, k)
        .unwrap()
        .with_overrides(Some(1), Some(1), Some(1.0))
        .unwrap();
    (params, ProjectionSet::generate(d, 1, W, seed).unwrap())
}

pub fn standard(n: usize, d: usize, k: usize, seed: u64) -> (LshParams, ProjectionSet) {
    let params = LshParams::derive(n, 2.0, W, 0.1, k).unwrap();
    let projections = ProjectionSet::generate(d, params.m, W, seed).unwrap();
    (params, projections)
}

/// Independent k-NN: every distance, full sort by (distance, id).
pub fn full_sort_knn<T: Copy + Into<f64>>(rows: &[Vec<T>], q: &[T], k: usize) -> Vec<(u32, f64)> {
    let mut all: Vec<(u32, f64)> = rows
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let s: f64 = r.iter().zip(q).map(|(&a, &b)| (a.into() - b.into()).powi(2)).sum();
            (i as u32, s.sqrt())
        })
        .collect();
    all.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap().then(a.0.cmp(&b.0)));
    all.truncate(k);
    all
}

pub fn rows<T: rtlsh::Scalar>(data: &Dataset<T>) -> Vec<Vec<T>> {
    data.iter().map(|(_, p)| p.to_vec()).collect()
}

pub fn distances(ns: &[Neighbor]) -> Vec<f64> {
    ns.iter().map(|n| n.distance).collect()
}

/// True when every returned distance is within `c` times the true k-th distance.
pub fn within_c(got: &[Neighbor], truth: &[(u32, f64)], c: f64) -> bool {
    let kth = truth.last().unwrap().1;
    got.len() == truth.len() && got.iter().all(|n| n.distance <= c * kth + 1e-12)
}
