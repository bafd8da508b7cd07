//! Seeded sampling helpers shared by the verification suites.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn rng_from_seed(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Draw from [lo, hi] uniformly in log scale. Requires 0 < lo <= hi.
pub fn log_uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    debug_assert!(lo > 0.0 && hi >= lo);
    let u: f64 = rng.gen();
    (lo.ln() + u * (hi.ln() - lo.ln())).exp()
}

/// Uniform direction on the unit sphere of R^dim (Gaussian normalization).
pub fn unit_vector(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| normal(rng)).collect();
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 1e-12 {
            return v.into_iter().map(|x| x / n).collect();
        }
    }
}

/// Vector with log-uniform magnitude in [lo, hi] and uniform direction.
pub fn log_uniform_vector(rng: &mut ChaCha8Rng, dim: usize, lo: f64, hi: f64) -> Vec<f64> {
    let mag = log_uniform(rng, lo, hi);
    unit_vector(rng, dim).into_iter().map(|x| x * mag).collect()
}

/// Standard normal via Box-Muller.
pub fn normal(rng: &mut ChaCha8Rng) -> f64 {
    let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

/// Log-spaced grid with `count` points covering [lo, hi] inclusively.
pub fn log_grid(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    assert!(lo > 0.0 && hi > lo && count >= 2);
    let (a, b) = (lo.ln(), hi.ln());
    (0..count)
        .map(|i| (a + (b - a) * i as f64 / (count - 1) as f64).exp())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn log_uniform_stays_in_range() {
        let mut rng = rng_from_seed(3);
        for _ in 0..1000 {
            let x = log_uniform(&mut rng, 1e-4, 1e4);
            assert!((1e-4..=1e4).contains(&x));
        }
    }

    #[test]
    fn unit_vectors_have_unit_norm() {
        let mut rng = rng_from_seed(5);
        for dim in 1..=5 {
            let v = unit_vector(&mut rng, dim);
            let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            assert!((n - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn log_grid_endpoints_match() {
        let g = log_grid(1e-2, 1e2, 401);
        assert_eq!(g.len(), 401);
        assert!((g[0] - 1e-2).abs() < 1e-15);
        assert!((g[400] - 1e2).abs() < 1e-12);
    }
}
