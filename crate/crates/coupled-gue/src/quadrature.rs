//! Gauss–Legendre rules and their affine maps onto truncated rays (ξ, X_max).

use crate::error::{input, Result};
use gauss_quad::GaussLegendre;
use std::num::NonZeroUsize;

pub const MAX_ORDER: usize = 512;

/// Tail margin past the turning point of φ_2n. Every integrand carries a factor φ_k
/// with k ≤ n, and those are below 1e-16 in L² beyond the cutoff.
pub const CUTOFF_MARGIN: f64 = 4.0;

#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureGrid {
    pub xi: f64,
    pub x_max: f64,
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

/// Nodes (increasing) and weights on [−1, 1].
pub fn gauss_legendre(m: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    if m == 0 || m > MAX_ORDER {
        return input(format!("quadrature order must be in 1..={MAX_ORDER}, got {m}"));
    }
    let rule = GaussLegendre::new(NonZeroUsize::new(m).expect("m > 0"));
    let mut pairs: Vec<(f64, f64)> = rule.iter().map(|(x, w)| (*x, *w)).collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    Ok(pairs.into_iter().unzip())
}

pub fn cutoff(xi: f64, n: usize) -> f64 {
    (4.0 * n as f64 + 2.0).sqrt().max(xi) + CUTOFF_MARGIN
}

pub fn ray_grid(xi: f64, n: usize, m: usize) -> Result<QuadratureGrid> {
    if m < 8 {
        return input(format!("ray grids need at least 8 nodes, got {m}"));
    }
    if !xi.is_finite() {
        return input(format!("endpoint must be finite, got {xi}"));
    }
    let x_max = cutoff(xi, n);
    let half = 0.5 * (x_max - xi);
    let (t, w) = gauss_legendre(m)?;
    Ok(QuadratureGrid {
        xi,
        x_max,
        nodes: t.iter().map(|s| xi + (s + 1.0) * half).collect(),
        weights: w.iter().map(|v| v * half).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hermite::eval_phi_all;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn small_rules() {
        let (x, w) = gauss_legendre(1).unwrap();
        assert_abs_diff_eq!(x[0], 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(w[0], 2.0, epsilon = 1e-15);
        let (x, w) = gauss_legendre(2).unwrap();
        assert_abs_diff_eq!(x[0], -1.0 / 3f64.sqrt(), epsilon = 1e-15);
        assert_abs_diff_eq!(x[1], 1.0 / 3f64.sqrt(), epsilon = 1e-15);
        assert_abs_diff_eq!(w[0], 1.0, epsilon = 1e-15);
        for p in 0..4 {
            let s: f64 = x.iter().zip(&w).map(|(a, b)| b * a.powi(p)).sum();
            let exact = if p % 2 == 0 { 2.0 / (p as f64 + 1.0) } else { 0.0 };
            assert_abs_diff_eq!(s, exact, epsilon = 1e-15);
        }
    }

    #[test]
    fn monomial_oracle() {
        let (x, w) = gauss_legendre(40).unwrap();
        let s: f64 = x.iter().zip(&w).map(|(a, b)| b * a.powi(4)).sum();
        assert_abs_diff_eq!(s, 0.4, epsilon = 1e-14);
    }

    #[test]
    fn order_bounds() {
        assert!(gauss_legendre(0).is_err());
        assert!(gauss_legendre(513).is_err());
        assert!(ray_grid(0.0, 2, 7).is_err());
    }

    #[test]
    fn ray_cutoffs() {
        let g = ray_grid(0.0, 2, 8).unwrap();
        assert_abs_diff_eq!(g.x_max, 10f64.sqrt() + 4.0, epsilon = 1e-15);
        assert_eq!(g.nodes.len(), 8);
        let g = ray_grid(20.0, 2, 8).unwrap();
        assert_abs_diff_eq!(g.x_max, 24.0);
    }

    #[test]
    fn truncated_tail_is_negligible() {
        // ∫_{X}^{∞} φ_k² ≤ φ_k(X)²/(X − √(2k+1)) past the turning point
        for n in 1..=10 {
            let x = cutoff(f64::NEG_INFINITY, n);
            let e = eval_phi_all(n, x).unwrap();
            let bound = e.get(n).powi(2) / (x - (2.0 * n as f64 + 1.0).sqrt());
            assert!(bound < 1e-16, "n={n} bound={bound}");
        }
    }

    proptest! {
        #[test]
        fn grid_invariants(xi in -10.0f64..20.0, n in 1usize..12, m in 8usize..200) {
            let g = ray_grid(xi, n, m).unwrap();
            prop_assert!(g.weights.iter().all(|w| *w > 0.0));
            prop_assert!(g.nodes.windows(2).all(|p| p[0] < p[1]));
            prop_assert!(xi < g.nodes[0] && *g.nodes.last().unwrap() < g.x_max);
            let s: f64 = g.weights.iter().sum();
            prop_assert!((s - (g.x_max - xi)).abs() < 1e-12 * (1.0 + g.x_max - xi));
        }
    }
}
