//! Synthetic datasets so benchmarks run without downloads.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rtlsh::Dataset;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SynthKind {
    /// Coordinates uniform in `[0, 100)`.
    Uniform,
    /// Isotropic unit-variance clusters around centres drawn from N(0, 10^2).
    Clustered { clusters: usize },
}

pub fn generate(kind: SynthKind, n: usize, d: usize, seed: u64) -> Dataset<f32> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut data = Dataset::new(d);
    match kind {
        SynthKind::Uniform => {
            for _ in 0..n {
                let p: Vec<f32> = (0..d).map(|_| rng.random_range(0.0f32..100.0)).collect();
                data.push(&p).expect("fixed dimension");
            }
        }
        SynthKind::Clustered { clusters } => {
            let clusters = clusters.max(1);
            let centres: Vec<Vec<f64>> = (0..clusters)
                .map(|_| (0..d).map(|_| rng.sample::<f64, _>(StandardNormal) * 10.0).collect())
                .collect();
            for _ in 0..n {
                let c = &centres[rng.random_range(0..clusters)];
                let p: Vec<f32> = c
                    .iter()
                    .map(|&x| (x + rng.sample::<f64, _>(StandardNormal)) as f32)
                    .collect();
                data.push(&p).expect("fixed dimension");
            }
        }
    }
    data
}
