//! Random instance generators shared by the integration tests.
#![allow(dead_code)]

use mjn_core::{classify_stability, ForkParams, NetworkParams, StabilityKind};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// A stable modified Jackson network with `mu1_star = mu1 * boost`, where
/// `boost` is drawn from `boost_range` (use `1.0..=1.0` for plain Jackson).
pub fn stable_network(rng: &mut ChaCha8Rng, boost: (f64, f64)) -> NetworkParams {
    loop {
        let mu1 = rng.random_range(0.5..3.0);
        let boost = if boost.0 == boost.1 { boost.0 } else { rng.random_range(boost.0..boost.1) };
        let Ok(p) = NetworkParams::new(
            rng.random_range(0.1..1.0),
            rng.random_range(0.1..1.0),
            mu1,
            rng.random_range(0.5..3.0),
            mu1 * boost,
            rng.random_range(0.0..0.9),
            rng.random_range(0.0..0.9),
        ) else {
            continue;
        };
        if matches!(classify_stability(&p), Ok(s) if s.kind == StabilityKind::Stable) {
            return p;
        }
    }
}

pub fn stable_networks(seed: u64, n: usize, boost: (f64, f64)) -> Vec<NetworkParams> {
    let mut r = rng(seed);
    (0..n).map(|_| stable_network(&mut r, boost)).collect()
}

/// A stable fork network, optionally conditioned on the jitter condition.
pub fn stable_fork(rng: &mut ChaCha8Rng, jitter: Option<bool>) -> ForkParams {
    loop {
        let Ok(p) = ForkParams::new(
            rng.random_range(0.0..0.6),
            rng.random_range(0.05..1.0),
            rng.random_range(0.05..1.0),
            rng.random_range(0.5..3.0),
            rng.random_range(0.5..3.0),
        ) else {
            continue;
        };
        // Keep away from the jitter-condition boundary, where the regime tie
        // tolerance decides.
        let margin = p.beta_rate - p.eta - p.alpha * p.nu / (p.lambda + p.nu);
        if p.stability() == StabilityKind::Stable
            && margin.abs() > 1e-3
            && jitter.is_none_or(|j| j == p.jitter_condition())
        {
            return p;
        }
    }
}
