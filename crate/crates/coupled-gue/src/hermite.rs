//! Harmonic oscillator eigenfunctions
//! φ_k(x) = (2^k k! √π)^{-1/2} H_k(x) e^{-x²/2}.
//!
//! The recurrence runs on the damped functions with a separate running
//! log-scale, so φ_0 may underflow while high-index values stay representable.

use crate::error::{input, Result};

const RESCALE: f64 = 1e150;

#[derive(Debug, Clone, PartialEq)]
pub struct HermiteEval {
    pub x: f64,
    pub values: Vec<f64>,
}

impl HermiteEval {
    pub fn k_max(&self) -> usize {
        self.values.len() - 1
    }

    pub fn get(&self, k: usize) -> f64 {
        self.values[k]
    }
}

/// φ_0(x)..φ_{k_max}(x).
pub fn eval_phi_all(k_max: usize, x: f64) -> Result<HermiteEval> {
    if !x.is_finite() {
        return input(format!("abscissa must be finite, got {x}"));
    }
    let mut values = vec![0.0; k_max + 1];
    // mantissas with log-scale `ls`: φ_k = v_k * exp(ls)
    let mut ls = -0.5 * x * x - 0.25 * std::f64::consts::PI.ln();
    let mut prev = 0.0;
    let mut cur = 1.0;
    values[0] = ls.exp();
    for k in 0..k_max {
        let kf = k as f64;
        let next = (2.0 / (kf + 1.0)).sqrt() * x * cur - (kf / (kf + 1.0)).sqrt() * prev;
        prev = cur;
        cur = next;
        if cur.abs() > RESCALE {
            prev /= RESCALE;
            cur /= RESCALE;
            ls += RESCALE.ln();
        }
        values[k + 1] = cur * ls.exp();
    }
    Ok(HermiteEval { x, values })
}

/// dφ_k/dx = −xφ_k + √(2k)φ_{k−1}.
pub fn eval_dphi(k: usize, phi: &HermiteEval) -> Result<f64> {
    if k > phi.k_max() {
        return input(format!("index {k} exceeds k_max {}", phi.k_max()));
    }
    let lower = if k == 0 { 0.0 } else { (2.0 * k as f64).sqrt() * phi.values[k - 1] };
    Ok(-phi.x * phi.values[k] + lower)
}

/// Both φ_k and φ_k' for k ≤ k_max.
pub fn eval_with_derivatives(k_max: usize, x: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    let phi = eval_phi_all(k_max, x)?;
    let d = (0..=k_max).map(|k| eval_dphi(k, &phi)).collect::<Result<Vec<_>>>()?;
    Ok((phi.values, d))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::gauss_legendre;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    #[test]
    fn values_at_origin() {
        let e = eval_phi_all(2, 0.0).unwrap();
        assert_abs_diff_eq!(e.get(0), PI.powf(-0.25), epsilon = 1e-15);
        assert_abs_diff_eq!(e.get(1), 0.0, epsilon = 1e-15);
        // H_2 = 4x²−2, norm (2²·2!·√π)^{1/2}
        let expected = -2.0 / (8.0 * PI.sqrt()).sqrt();
        assert_abs_diff_eq!(e.get(2), expected, epsilon = 1e-15);
    }

    #[test]
    fn explicit_polynomials() {
        for &x in &[-2.3, -0.4, 0.7, 3.1] {
            let e = eval_phi_all(3, x).unwrap();
            let g = (-x * x / 2.0).exp() * PI.powf(-0.25);
            let h3 = 8.0 * x * x * x - 12.0 * x;
            assert_abs_diff_eq!(e.get(3), g * h3 / (48.0f64).sqrt(), epsilon = 1e-14);
        }
    }

    #[test]
    fn derivative_values() {
        let e = eval_phi_all(1, 0.0).unwrap();
        assert_abs_diff_eq!(eval_dphi(0, &e).unwrap(), 0.0);
        assert_abs_diff_eq!(eval_dphi(1, &e).unwrap(), 2f64.sqrt() * PI.powf(-0.25), epsilon = 1e-15);
        assert!(eval_dphi(2, &e).is_err());
        assert!(eval_phi_all(3, f64::NAN).is_err());
    }

    #[test]
    fn derivative_matches_central_difference() {
        let h = 1e-5;
        for &x in &[-3.0, 0.0, 2.0, 5.0] {
            let e = eval_phi_all(30, x).unwrap();
            let ep = eval_phi_all(30, x + h).unwrap();
            let em = eval_phi_all(30, x - h).unwrap();
            for k in 0..=30 {
                let fd = (ep.get(k) - em.get(k)) / (2.0 * h);
                assert_abs_diff_eq!(eval_dphi(k, &e).unwrap(), fd, epsilon = 1e-8);
            }
        }
    }

    #[test]
    fn orthonormal_on_window() {
        let (t, w) = gauss_legendre(200).unwrap();
        let (a, b) = (-14.0, 14.0);
        let evals: Vec<_> = t
            .iter()
            .map(|&s| eval_phi_all(30, a + (s + 1.0) * (b - a) / 2.0).unwrap())
            .collect();
        for j in 0..=30 {
            for k in 0..=30 {
                let s: f64 = evals
                    .iter()
                    .zip(&w)
                    .map(|(e, wi)| wi * (b - a) / 2.0 * e.get(j) * e.get(k))
                    .sum();
                let target = if j == k { 1.0 } else { 0.0 };
                assert_abs_diff_eq!(s, target, epsilon = 1e-10);
            }
        }
    }

    #[test]
    fn no_overflow_far_out() {
        for &x in &[-40.0, 40.0, 35.5] {
            let e = eval_phi_all(1000, x).unwrap();
            assert!(e.values.iter().all(|v| v.is_finite() && v.abs() <= 1.0));
            assert!(e.get(1000).abs() > 1e-3);
        }
    }

    proptest! {
        #[test]
        fn cramer_bound_and_recurrence(x in -40.0f64..40.0, k_max in 2usize..400) {
            let e = eval_phi_all(k_max, x).unwrap();
            for k in 0..=k_max {
                prop_assert!(e.get(k).abs() <= 1.0 + 1e-12);
            }
            for k in 1..k_max {
                let kf = k as f64;
                let rhs = (2.0 / (kf + 1.0)).sqrt() * x * e.get(k) - (kf / (kf + 1.0)).sqrt() * e.get(k - 1);
                prop_assert!((e.get(k + 1) - rhs).abs() <= 1e-13 * (1.0 + x.abs()));
            }
        }
    }
}
