//! Collision probabilities and derivation of (m, l, beta).

use std::f64::consts::{PI, SQRT_2};

use crate::error::{Error, Result};

/// Standard normal CDF.
fn phi(x: f64) -> f64 {
    0.5 * (1.0 + libm::erf(x / SQRT_2))
}

/// Probability that two points at distance `s` share a bucket of width `w`
/// under `floor((a.x + b) / w)` with Gaussian `a` and uniform `b`.
pub fn collision_probability(s: f64, w: f64) -> Result<f64> {
    if !(s > 0.0) || !(w > 0.0) {
        return Err(Error::invalid(format!(
            "collision probability needs s > 0 and w > 0 (s = {s}, w = {w})"
        )));
    }
    let r = w / s;
    let tail = 2.0 / ((2.0 * PI).sqrt() * r) * (1.0 - (-r * r / 2.0).exp());
    Ok(2.0 * phi(r) - 1.0 - tail)
}

/// Index parameters shared by C2LSH and QALSH.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LshParams {
    /// Cardinality the parameters are sized for.
    pub n: usize,
    /// Approximation ratio.
    pub c: f64,
    /// Bucket width.
    pub w: f64,
    /// Failure probability.
    pub delta: f64,
    /// Candidate budget as a fraction of `n`.
    pub beta: f64,
    /// Number of projections.
    pub m: usize,
    /// Collision threshold.
    pub l: usize,
    pub p1: f64,
    pub p2: f64,
}

impl LshParams {
    /// Smallest `m` meeting both Chernoff-style bounds
    /// `exp(-2(p1-a)^2 m) <= delta` and `exp(-2(a-p2)^2 m) <= beta/2`,
    /// with `a` placed so the two bounds coincide; `l = ceil(a m)`.
    pub fn derive(n: usize, c: f64, w: f64, delta: f64, k: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::invalid("cardinality must be at least 1"));
        }
        if !(c > 1.0) {
            return Err(Error::invalid(format!("approximation ratio must exceed 1, got {c}")));
        }
        if !(delta > 0.0 && delta < 1.0) {
            return Err(Error::invalid(format!("delta must lie in (0, 1), got {delta}")));
        }
        let p1 = collision_probability(1.0, w)?;
        let p2 = collision_probability(c, w)?;
        if p1 <= p2 {
            return Err(Error::Infeasible(format!("p1 = {p1} <= p2 = {p2}")));
        }
        let beta = default_beta(n, k);
        let a = (1.0 / delta).ln().sqrt();
        let b = (2.0 / beta).ln().sqrt();
        let alpha = (p1 * b + p2 * a) / (a + b);
        let gap = p1 - p2;
        let mut m = ((a + b).powi(2) / (2.0 * gap * gap)).ceil().max(1.0) as usize;
        let mut l = threshold(alpha, m);
        while l as f64 / m as f64 >= p1 {
            m += 1;
            l = threshold(alpha, m);
        }
        Ok(LshParams {
            n,
            c,
            w,
            delta,
            beta,
            m,
            l,
            p1,
            p2,
        })
    }

    /// Replaces any of `m`, `l`, `beta`. Overridden sets only have to satisfy
    /// `1 <= l <= m` and `0 < beta <= 1`.
    pub fn with_overrides(mut self, m: Option<usize>, l: Option<usize>, beta: Option<f64>) -> Result<Self> {
        if let Some(m) = m {
            self.m = m;
        }
        if let Some(l) = l {
            self.l = l;
        }
        if let Some(beta) = beta {
            self.beta = beta;
        }
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if self.m == 0 || self.l == 0 || self.l > self.m {
            return Err(Error::invalid(format!(
                "need 1 <= l <= m, got l = {}, m = {}",
                self.l, self.m
            )));
        }
        if !(self.beta > 0.0 && self.beta <= 1.0) {
            return Err(Error::invalid(format!("beta must lie in (0, 1], got {}", self.beta)));
        }
        if !(self.c > 1.0) || !(self.w > 0.0) {
            return Err(Error::invalid("need c > 1 and w > 0"));
        }
        Ok(())
    }

    /// Candidate count that ends the search for a `k`-NN query over `n` points.
    pub fn candidate_budget(&self, n: usize, k: usize) -> usize {
        let raw = (self.beta * n as f64 + k as f64 - 1.0).ceil();
        (raw.max(1.0) as usize).min(n)
    }
}

/// `max(100/n, k/n)`, capped at 1.
pub fn default_beta(n: usize, k: usize) -> f64 {
    let n = n as f64;
    (100.0 / n).max(k as f64 / n).min(1.0)
}

fn threshold(alpha: f64, m: usize) -> usize {
    ((alpha * m as f64).ceil() as usize).clamp(1, m)
}

#[cfg(test)]
mod tests {
    use super::*;

    const W: f64 = 2.7191;

    #[test]
    fn near_zero_distance_limit() {
        assert!(collision_probability(1e-6, W).unwrap() > 0.999);
    }

    #[test]
    fn rejects_non_positive_distance() {
        assert!(collision_probability(0.0, W).is_err());
        assert!(collision_probability(-1.0, W).is_err());
    }

    #[test]
    fn strictly_decreasing() {
        let ps: Vec<f64> = (1..200)
            .map(|i| collision_probability(i as f64 * 0.05, W).unwrap())
            .collect();
        assert!(ps.windows(2).all(|p| p[1] < p[0]));
    }

    #[test]
    fn m_grows_with_n() {
        let ms: Vec<usize> = [1_000, 10_000, 100_000, 1_000_000]
            .iter()
            .map(|&n| LshParams::derive(n, 2.0, W, 0.1, 10).unwrap().m)
            .collect();
        assert!(ms.windows(2).all(|w| w[0] <= w[1]), "{ms:?}");
    }

    #[test]
    fn threshold_between_probabilities() {
        for n in [1, 50, 100, 1_000, 60_000, 1_000_000] {
            for k in [1, 10, 50] {
                for c in [1.5, 2.0, 3.0] {
                    let p = LshParams::derive(n, c, W, 0.1, k).unwrap();
                    let ratio = p.l as f64 / p.m as f64;
                    assert!(p.p2 < ratio && ratio < p.p1, "{p:?}");
                    assert!(p.beta > 0.0 && p.beta <= 1.0);
                }
            }
        }
    }

    #[test]
    fn budget_is_capped_at_n() {
        let p = LshParams::derive(100, 2.0, W, 0.1, 5)
            .unwrap()
            .with_overrides(Some(1), Some(1), Some(1.0))
            .unwrap();
        assert_eq!(p.candidate_budget(100, 5), 100);
        assert_eq!(p.candidate_budget(100, 1), 100);
    }

    #[test]
    fn overrides_are_validated() {
        let p = LshParams::derive(1000, 2.0, W, 0.1, 1).unwrap();
        assert!(p.with_overrides(Some(3), Some(4), None).is_err());
        assert!(p.with_overrides(None, None, Some(0.0)).is_err());
    }
}
