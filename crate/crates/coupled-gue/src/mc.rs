//! Monte Carlo sampling of the coupled pair (M₁, M₂).
//!
//! M₁ has density ∝ e^{−Tr M²}: diagonal entries N(0, 1/2), real and imaginary
//! parts of off-diagonal entries N(0, 1/4). M₂ = cM₁ + √(1−c²)M′ with M′ an
//! independent copy, so the pair has density ∝ e^{−Tr M₁²}·e^{−Tr(M₂−cM₁)²/(1−c²)}.

use crate::error::{input, Result};
use nalgebra::{Complex, DMatrix};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub const MIN_SAMPLES: usize = 1000;
pub const MAX_N: usize = 64;
const CHUNK: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub p_hat: f64,
    pub stderr: f64,
    pub n_samples: usize,
    pub seed: u64,
}

fn gue<R: Rng + ?Sized>(n: usize, rng: &mut R) -> DMatrix<Complex<f64>> {
    let mut m = DMatrix::from_element(n, n, Complex::new(0.0, 0.0));
    let half = 0.5f64.sqrt();
    for i in 0..n {
        let d: f64 = rng.sample(StandardNormal);
        m[(i, i)] = Complex::new(d * half, 0.0);
        for j in 0..i {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            let z = Complex::new(0.5 * re, 0.5 * im);
            m[(i, j)] = z;
            m[(j, i)] = z.conj();
        }
    }
    m
}

fn largest_eigenvalue(m: DMatrix<Complex<f64>>) -> f64 {
    if m.nrows() == 1 {
        return m[(0, 0)].re;
    }
    m.symmetric_eigenvalues().iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

/// Largest eigenvalues of one draw of the pair.
pub fn sample_pair<R: Rng + ?Sized>(n: usize, c: f64, rng: &mut R) -> (f64, f64) {
    let m1 = gue(n, rng);
    let m2 = m1.map(|z| z * c) + gue(n, rng).map(|z| z * (1.0 - c * c).sqrt());
    (largest_eigenvalue(m1), largest_eigenvalue(m2))
}

fn validate(n: usize, c: f64) -> Result<()> {
    if n == 0 || n > MAX_N {
        return input(format!("n must be in 1..={MAX_N}, got {n}"));
    }
    if !(c > 0.0 && c < 1.0) {
        return input(format!("c must lie in (0, 1), got {c}"));
    }
    Ok(())
}

/// Fraction of draws with λmax₁ ≤ ξ₁ and λmax₂ ≤ ξ₂. Chunk k uses stream k of
/// a ChaCha8 generator seeded by `seed`, so the result does not depend on the
/// number of threads.
pub fn estimate_joint(n: usize, c: f64, xi: [f64; 2], n_samples: usize, seed: u64) -> Result<McEstimate> {
    validate(n, c)?;
    if n_samples < MIN_SAMPLES {
        return input(format!("need at least {MIN_SAMPLES} samples, got {n_samples}"));
    }
    let chunks = n_samples.div_ceil(CHUNK);
    let hits: usize = (0..chunks)
        .into_par_iter()
        .map(|k| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(k as u64);
            let len = CHUNK.min(n_samples - k * CHUNK);
            (0..len)
                .filter(|_| {
                    let (a, b) = sample_pair(n, c, &mut rng);
                    a <= xi[0] && b <= xi[1]
                })
                .count()
        })
        .sum();
    let p = hits as f64 / n_samples as f64;
    Ok(McEstimate {
        p_hat: p,
        stderr: (p * (1.0 - p) / n_samples as f64).sqrt(),
        n_samples,
        seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use statrs::distribution::{ContinuousCDF, Normal};

    #[test]
    fn n1_marginal_is_half_variance_normal() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let xs: Vec<f64> = (0..20000).map(|_| sample_pair(1, 0.5, &mut rng).0).collect();
        let mean = xs.iter().sum::<f64>() / xs.len() as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / xs.len() as f64;
        assert!(mean.abs() < 0.02);
        assert!((var - 0.5).abs() < 0.02);
        // P(λ ≤ ξ) = (1 + erf ξ)/2
        let law = Normal::new(0.0, 0.5f64.sqrt()).unwrap();
        let below = xs.iter().filter(|x| **x <= 0.4).count() as f64 / xs.len() as f64;
        assert!((below - law.cdf(0.4)).abs() < 0.015);
    }

    #[test]
    fn n1_correlation_is_c() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let pairs: Vec<(f64, f64)> = (0..40000).map(|_| sample_pair(1, 0.5, &mut rng)).collect();
        let sxy: f64 = pairs.iter().map(|(a, b)| a * b).sum::<f64>() / pairs.len() as f64;
        assert!((sxy / 0.5 - 0.5).abs() < 0.02);
    }

    #[test]
    fn orthant_probability() {
        let e = estimate_joint(1, 0.5, [0.0, 0.0], 200_000, 7).unwrap();
        assert!((e.p_hat - 1.0 / 3.0).abs() < 4.0 * e.stderr, "{e:?}");
    }

    #[test]
    fn reproducible_and_trivial_region() {
        let a = estimate_joint(3, 0.6, [0.5, 1.0], 5000, 42).unwrap();
        let b = estimate_joint(3, 0.6, [0.5, 1.0], 5000, 42).unwrap();
        assert_eq!(a, b);
        let e = estimate_joint(3, 0.6, [12.0, 12.0], 2000, 1).unwrap();
        assert_eq!(e.p_hat, 1.0);
        assert_eq!(e.stderr, 0.0);
    }

    #[test]
    fn nearly_equal_matrices_at_c_near_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..200 {
            let (a, b) = sample_pair(4, 1.0 - 1e-8, &mut rng);
            assert!((a - b).abs() < 1e-3);
        }
    }

    #[test]
    fn input_checks() {
        assert!(estimate_joint(0, 0.5, [0.0, 0.0], 5000, 0).is_err());
        assert!(estimate_joint(2, 1.0, [0.0, 0.0], 5000, 0).is_err());
        assert!(estimate_joint(2, 0.5, [0.0, 0.0], 10, 0).is_err());
    }
}
