//! Extended Hermite kernel in the conjugated form whose off-diagonal factors
//! are powers of the coupling c = e^{t₁−t₂} ∈ (0, 1).
//!
//! Blocks (1-based, first index = row):
//! - (1,1), (2,2): Σ_{k<n} φ_k(x)φ_k(y)
//! - (2,1): Σ_{k<n} c^{n−k} φ_k(x)φ_k(y)
//! - (1,2): −c^{−n} Σ_{k≥n} c^k φ_k(x)φ_k(y), the tail taken from Mehler's formula
//!   (or summed directly when c^n is small enough that the subtraction would cancel)

use crate::error::{input, Result};
use crate::hermite::eval_with_derivatives;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Below this separation the diagonal blocks are summed directly instead of
/// through the Christoffel–Darboux quotient.
const CD_NEAR: f64 = 1e-2;

/// Mehler minus the head sum loses about −log10(c^n) digits; past this
/// threshold the geometric tail is summed directly instead.
const MEHLER_MIN_CN: f64 = 1e-3;

/// Number of extra tail terms summed directly for block (1,2); zero means
/// the Mehler closed form is used.
pub fn tail_terms(n: usize, c: f64) -> usize {
    if c.powi(n as i32) >= MEHLER_MIN_CN {
        0
    } else {
        (f64::EPSILON.ln() / c.ln()).ceil() as usize + 1
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelParams {
    pub n: usize,
    pub c: f64,
    pub xi: [f64; 2],
}

impl KernelParams {
    pub fn new(n: usize, c: f64, xi1: f64, xi2: f64) -> Result<Self> {
        let p = KernelParams { n, c, xi: [xi1, xi2] };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return input("matrix size n must be at least 1");
        }
        if !(self.c > 0.0 && self.c < 1.0) {
            return input(format!("coupling c must lie in (0,1), got {}", self.c));
        }
        if !self.xi.iter().all(|x| x.is_finite()) {
            return input("endpoints must be finite");
        }
        Ok(())
    }
}

/// φ_0..φ_n and their derivatives at one abscissa; enough for every block.
#[derive(Debug, Clone)]
pub struct Basis {
    pub x: f64,
    pub phi: Vec<f64>,
    pub dphi: Vec<f64>,
}

impl Basis {
    /// Functions up to index k_max.
    pub fn new(k_max: usize, x: f64) -> Result<Self> {
        let (phi, dphi) = eval_with_derivatives(k_max, x)?;
        Ok(Basis { x, phi, dphi })
    }

    /// Enough terms for every block at size n and coupling c.
    pub fn for_kernel(n: usize, c: f64, x: f64) -> Result<Self> {
        Basis::new(n + tail_terms(n, c), x)
    }
}

fn check_c(c: f64) -> Result<()> {
    if c > 0.0 && c < 1.0 {
        Ok(())
    } else {
        input(format!("coupling c must lie in (0,1), got {c}"))
    }
}

/// Σ_{k≥0} c^k φ_k(x)φ_k(y).
pub fn mehler_sum(c: f64, x: f64, y: f64) -> Result<f64> {
    check_c(c)?;
    Ok(mehler_unchecked(c, x, y))
}

fn mehler_unchecked(c: f64, x: f64, y: f64) -> f64 {
    let d = 1.0 - c * c;
    let e = (4.0 * x * y * c - (x * x + y * y) * (1.0 + c * c)) / (2.0 * d);
    e.exp() / (PI * d).sqrt()
}

/// ∂/∂x of the Mehler sum.
fn mehler_dx(c: f64, x: f64, y: f64) -> f64 {
    let d = 1.0 - c * c;
    mehler_unchecked(c, x, y) * (2.0 * y * c - x * (1.0 + c * c)) / d
}

/// Truncated direct sum Σ_{k≤k_max} c^k φ_k(x)φ_k(y); test oracle for the Mehler form.
pub fn mehler_direct(c: f64, x: f64, y: f64, k_max: usize) -> Result<f64> {
    check_c(c)?;
    let px = crate::hermite::eval_phi_all(k_max, x)?;
    let py = crate::hermite::eval_phi_all(k_max, y)?;
    let mut ck = 1.0;
    let mut s = 0.0;
    for k in 0..=k_max {
        s += ck * px.get(k) * py.get(k);
        ck *= c;
    }
    Ok(s)
}

fn check_block(i: usize) -> Result<usize> {
    match i {
        1 | 2 => Ok(i - 1),
        _ => input(format!("block index must be 1 or 2, got {i}")),
    }
}

/// K_ij(x, y) with 1-based block indices.
pub fn kernel_entry(i: usize, j: usize, x: f64, y: f64, p: &KernelParams) -> Result<f64> {
    p.validate()?;
    let (bi, bj) = (check_block(i)?, check_block(j)?);
    let bx = Basis::for_kernel(p.n, p.c, x)?;
    let by = Basis::for_kernel(p.n, p.c, y)?;
    Ok(entry(bi, bj, &bx, &by, p.n, p.c))
}

/// ∂/∂x K_ij(x, y) with 1-based block indices.
pub fn kernel_entry_dx(i: usize, j: usize, x: f64, y: f64, p: &KernelParams) -> Result<f64> {
    p.validate()?;
    let (bi, bj) = (check_block(i)?, check_block(j)?);
    let bx = Basis::for_kernel(p.n, p.c, x)?;
    let by = Basis::for_kernel(p.n, p.c, y)?;
    Ok(entry_dx(bi, bj, &bx, &by, p.n, p.c))
}

/// Kernel entry from precomputed bases; blocks are 0-based here.
pub(crate) fn entry(bi: usize, bj: usize, bx: &Basis, by: &Basis, n: usize, c: f64) -> f64 {
    match (bi, bj) {
        (0, 0) | (1, 1) => christoffel_darboux(bx, by, n),
        (1, 0) => {
            let mut w = c;
            let mut s = 0.0;
            for k in (0..n).rev() {
                s += w * bx.phi[k] * by.phi[k];
                w *= c;
            }
            s
        }
        _ => {
            let extra = tail_terms(n, c);
            if extra > 0 {
                return -direct_tail(c, n, extra, &bx.phi, &by.phi);
            }
            let mut ck = 1.0;
            let mut head = 0.0;
            for k in 0..n {
                head += ck * bx.phi[k] * by.phi[k];
                ck *= c;
            }
            -(mehler_unchecked(c, bx.x, by.x) - head) / ck
        }
    }
}

/// ∂/∂x of `entry`, x being the first argument.
pub(crate) fn entry_dx(bi: usize, bj: usize, bx: &Basis, by: &Basis, n: usize, c: f64) -> f64 {
    match (bi, bj) {
        (0, 0) | (1, 1) => (0..n).map(|k| bx.dphi[k] * by.phi[k]).sum(),
        (1, 0) => {
            let mut w = c;
            let mut s = 0.0;
            for k in (0..n).rev() {
                s += w * bx.dphi[k] * by.phi[k];
                w *= c;
            }
            s
        }
        _ => {
            let extra = tail_terms(n, c);
            if extra > 0 {
                return -direct_tail(c, n, extra, &bx.dphi, &by.phi);
            }
            let mut ck = 1.0;
            let mut head = 0.0;
            for k in 0..n {
                head += ck * bx.dphi[k] * by.phi[k];
                ck *= c;
            }
            -(mehler_dx(c, bx.x, by.x) - head) / ck
        }
    }
}

/// Σ_{k=n}^{n+extra} c^{k−n} f_k g_k.
fn direct_tail(c: f64, n: usize, extra: usize, f: &[f64], g: &[f64]) -> f64 {
    let mut w = 1.0;
    let mut s = 0.0;
    for k in n..=n + extra {
        s += w * f[k] * g[k];
        w *= c;
    }
    s
}

fn christoffel_darboux(bx: &Basis, by: &Basis, n: usize) -> f64 {
    let d = bx.x - by.x;
    if d == 0.0 {
        let a = (n as f64 / 2.0).sqrt();
        return a * (bx.dphi[n] * bx.phi[n - 1] - bx.dphi[n - 1] * bx.phi[n]);
    }
    if d.abs() < CD_NEAR {
        return (0..n).map(|k| bx.phi[k] * by.phi[k]).sum();
    }
    let a = (n as f64 / 2.0).sqrt();
    a * (bx.phi[n] * by.phi[n - 1] - bx.phi[n - 1] * by.phi[n]) / d
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn params(n: usize, c: f64) -> KernelParams {
        KernelParams::new(n, c, 0.0, 0.0).unwrap()
    }

    #[test]
    fn mehler_against_direct_sum() {
        let m = mehler_sum(0.5, 0.3, -0.2).unwrap();
        let d = mehler_direct(0.5, 0.3, -0.2, 300).unwrap();
        assert_abs_diff_eq!(m, d, epsilon = 1e-13);
        assert!(mehler_sum(0.5, 1.0, 1.0).unwrap() > 0.0);
        assert!(mehler_sum(1.0, 0.0, 0.0).is_err());
    }

    #[test]
    fn mehler_small_coupling() {
        let (x, y): (f64, f64) = (0.4, -1.1);
        let lead = (-(x * x + y * y) / 2.0).exp() / PI.sqrt();
        assert_abs_diff_eq!(mehler_sum(1e-9, x, y).unwrap(), lead, epsilon = 1e-9);
    }

    #[test]
    fn small_coupling_tail_is_direct() {
        assert_eq!(tail_terms(2, 0.5), 0);
        let p = params(3, 0.05);
        assert!(tail_terms(3, 0.05) > 0);
        for &(x, y) in &[(0.2, -0.3), (1.5, 2.5)] {
            let k = kernel_entry(1, 2, x, y, &p).unwrap();
            let bx = crate::hermite::eval_phi_all(40, x).unwrap();
            let by = crate::hermite::eval_phi_all(40, y).unwrap();
            let direct: f64 = (3..=40).map(|k| 0.05f64.powi(k as i32 - 3) * bx.get(k) * by.get(k)).sum();
            assert_abs_diff_eq!(k, -direct, epsilon = 1e-15);
        }
    }

    #[test]
    fn single_term_diagonal() {
        let v = kernel_entry(1, 1, 0.0, 0.0, &params(1, 0.5)).unwrap();
        assert_abs_diff_eq!(v, 1.0 / PI.sqrt(), epsilon = 1e-15);
    }

    #[test]
    fn tail_block_against_direct_sum() {
        for &c in &[0.2, 0.5, 0.9] {
            for n in 1..=3 {
                let p = params(n, c);
                for &x in &[-4.0, -1.3, 0.0, 2.2, 5.0, 8.0] {
                    for &y in &[-4.0, 0.5, 3.7, 8.0] {
                        let k = kernel_entry(1, 2, x, y, &p).unwrap();
                        // tail from k=n, scaled by c^{-n}
                        let full = mehler_direct(c, x, y, 600).unwrap();
                        let head = mehler_direct(c, x, y, n - 1).unwrap();
                        let direct = -(full - head) / c.powi(n as i32);
                        assert!((k - direct).abs() <= 1e-12, "c={c} n={n} x={x} y={y}: {k} vs {direct}");
                    }
                }
            }
        }
        let v = kernel_entry(1, 2, 0.0, 0.0, &params(1, 0.5)).unwrap();
        let expected = -2.0 * (mehler_sum(0.5, 0.0, 0.0).unwrap() - 1.0 / PI.sqrt());
        assert_abs_diff_eq!(v, expected, epsilon = 1e-12);
    }

    #[test]
    fn christoffel_darboux_matches_direct() {
        for n in 1..=6 {
            let p = params(n, 0.5);
            for &(x, y) in &[(0.1, 0.1), (0.3, 0.305), (-1.0, 2.0), (2.5, 2.4999), (4.0, -3.0)] {
                let k = kernel_entry(1, 1, x, y, &p).unwrap();
                let bx = Basis::for_kernel(n, 0.5, x).unwrap();
                let by = Basis::for_kernel(n, 0.5, y).unwrap();
                let direct: f64 = (0..n).map(|k| bx.phi[k] * by.phi[k]).sum();
                assert_abs_diff_eq!(k, direct, epsilon = 1e-14);
            }
        }
    }

    #[test]
    fn blocks_merge_as_coupling_tends_to_one() {
        let p = params(3, 1.0 - 1e-9);
        let a = kernel_entry(2, 1, 0.3, -0.7, &p).unwrap();
        let b = kernel_entry(1, 1, 0.3, -0.7, &p).unwrap();
        assert_abs_diff_eq!(a, b, epsilon = 1e-7);
    }

    #[test]
    fn derivative_matches_difference() {
        let h = 1e-5;
        for n in 1..=4 {
            let p = params(n, 0.4);
            for i in 1..=2 {
                for j in 1..=2 {
                    for &(x, y) in &[(0.2, -0.5), (1.0, 1.0), (-2.0, 3.0)] {
                        let d = kernel_entry_dx(i, j, x, y, &p).unwrap();
                        let fd = (kernel_entry(i, j, x + h, y, &p).unwrap()
                            - kernel_entry(i, j, x - h, y, &p).unwrap())
                            / (2.0 * h);
                        assert_abs_diff_eq!(d, fd, epsilon = 1e-8);
                    }
                }
            }
        }
    }

    #[test]
    fn invalid_inputs() {
        assert!(kernel_entry(0, 1, 0.0, 0.0, &params(1, 0.5)).is_err());
        assert!(kernel_entry(1, 3, 0.0, 0.0, &params(1, 0.5)).is_err());
        assert!(KernelParams::new(0, 0.5, 0.0, 0.0).is_err());
        assert!(KernelParams::new(2, 0.0, 0.0, 0.0).is_err());
        assert!(KernelParams::new(2, 1.0, 0.0, 0.0).is_err());
    }

    proptest! {
        #[test]
        fn symmetric_in_arguments(
            n in 1usize..6, c in 0.05f64..0.95, x in -4.0f64..8.0, y in -4.0f64..8.0,
            i in 1usize..3, j in 1usize..3,
        ) {
            let p = params(n, c);
            let a = kernel_entry(i, j, x, y, &p).unwrap();
            let b = kernel_entry(i, j, y, x, &p).unwrap();
            prop_assert!((a - b).abs() <= 1e-12 * (1.0 + a.abs()) / c.powi(n as i32));
        }
    }
}
