mod common;

use common::W;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rtlsh::params::default_beta;
use rtlsh::{collision_probability, LshParams};

/// Two points at distance `s` collide under `floor((a.x + b)/w)` iff their
/// projections land in the same bucket; `a.(x - y)` is N(0, s^2).
fn monte_carlo(s: f64, trials: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut hits = 0usize;
    for _ in 0..trials {
        let px: f64 = rng.random_range(0.0..W);
        let gap: f64 = rng.sample::<f64, _>(StandardNormal) * s;
        if ((px + gap) / W).floor() == 0.0 {
            hits += 1;
        }
    }
    hits as f64 / trials as f64
}

#[test]
fn closed_form_matches_monte_carlo() {
    for (i, s) in [0.5, 1.0, 2.0, 4.0].into_iter().enumerate() {
        let mc = monte_carlo(s, 400_000, 11 + i as u64);
        let cf = collision_probability(s, W).unwrap();
        assert!((mc - cf).abs() < 0.005, "s = {s}: closed form {cf}, simulated {mc}");
    }
}

#[test]
fn reference_probabilities() {
    assert!((collision_probability(1.0, W).unwrap() - 0.707).abs() < 0.005);
    assert!((collision_probability(2.0, W).unwrap() - 0.472).abs() < 0.005);
}

#[test]
fn sixty_thousand_point_parameters() {
    let p = LshParams::derive(60_000, 2.0, W, 0.1, 10).unwrap();
    assert_eq!((p.m, p.l), (FROZEN_M, FROZEN_L));
    assert!((p.beta - 100.0 / 60_000.0).abs() < 1e-15);
    // hand estimate from the bound: m near 158, l near 99
    assert!((150..=165).contains(&p.m), "m = {}", p.m);
    assert!((93..=105).contains(&p.l), "l = {}", p.l);
}

const FROZEN_M: usize = 158;
const FROZEN_L: usize = 99;

#[test]
fn beta_defaults() {
    assert_eq!(default_beta(1000, 10), 0.1);
    assert_eq!(default_beta(1000, 500), 0.5);
    assert_eq!(default_beta(50, 1), 1.0);
}

#[test]
fn derived_bounds_hold() {
    for n in [1_000usize, 60_000, 1_000_000] {
        let p = LshParams::derive(n, 2.0, W, 0.1, 1).unwrap();
        // the threshold fraction where both tail bounds meet
        let (a, b) = ((1.0f64 / 0.1).ln().sqrt(), (2.0 / p.beta).ln().sqrt());
        let alpha = (p.p1 * b + p.p2 * a) / (a + b);
        let m = p.m as f64;
        assert!((-2.0 * (p.p1 - alpha).powi(2) * m).exp() <= 0.1 + 1e-12, "n = {n}");
        assert!((-2.0 * (alpha - p.p2).powi(2) * m).exp() <= p.beta / 2.0 + 1e-12, "n = {n}");
        let m_prev = m - 1.0;
        assert!((-2.0 * (p.p1 - alpha).powi(2) * m_prev).exp() > 0.1, "m not minimal for n = {n}");
        assert_eq!(p.l, (alpha * m).ceil() as usize);
        assert!(p.p2 < p.l as f64 / m && (p.l as f64 / m) < p.p1);
    }
}
