//! Nyström discretization of the extended kernel on J₁ ⊕ J₂ with J_k = (ξ_k, ∞).
//!
//! The discretized operator is weight-symmetrized, Ks[a,b] = √w_a K(z_a, z_b) √w_b,
//! and M = I − Ks is factored once. Off-grid values of the resolvent and of the
//! endpoint functions come from Nyström interpolation through that factorization:
//! for a row vector a(x)[b] = √w_b K(x, z_b) and column vector b(y)[a] = √w_a K(z_a, y),
//! R(x, y) = K(x, y) + a(x)·M⁻¹·b(y).

use crate::error::{Error, Result};
use crate::kernel::{entry, entry_dx, Basis, KernelParams};
use crate::quadrature::{ray_grid, QuadratureGrid};
use nalgebra::{DMatrix, DVector, Dyn, Matrix2, LU};

pub const DEFAULT_M: usize = 64;

#[derive(Debug, Clone)]
pub struct FredholmSolution {
    pub params: KernelParams,
    pub m: usize,
    pub grids: [QuadratureGrid; 2],
    /// Weight-symmetrized discretized kernel.
    pub kmat: DMatrix<f64>,
    pub log_prob: f64,
    /// Solution of (I − kmat)·X = kmat.
    pub resolvent_mat: DMatrix<f64>,
    nodes: Vec<f64>,
    sqrt_w: Vec<f64>,
    blocks: Vec<usize>,
    bases: Vec<Basis>,
    lu: LU<f64, Dyn, Dyn>,
}

/// 2×2 endpoint matrices; index (i, j) refers to blocks/endpoints i and j.
#[derive(Debug, Clone, PartialEq)]
pub struct EndpointData {
    pub params: KernelParams,
    pub r: Matrix2<f64>,
    pub r_x: Matrix2<f64>,
    pub r_y: Matrix2<f64>,
    pub q: Matrix2<f64>,
    pub p: Matrix2<f64>,
    pub q_tilde: Matrix2<f64>,
    pub p_tilde: Matrix2<f64>,
    pub u: Matrix2<f64>,
    pub w: Matrix2<f64>,
    pub u_hat: Matrix2<f64>,
    pub w_hat: Matrix2<f64>,
}

pub fn theta() -> Matrix2<f64> {
    Matrix2::repeat(1.0)
}

pub fn sigma3() -> Matrix2<f64> {
    Matrix2::new(1.0, 0.0, 0.0, -1.0)
}

/// (1 − c)/(1 + c).
pub fn sigma_scalar(c: f64) -> f64 {
    (1.0 - c) / (1.0 + c)
}

/// The scalar times σ₃.
pub fn sigma_matrix(c: f64) -> Matrix2<f64> {
    sigma3() * sigma_scalar(c)
}

/// (I − σ)·m·(I + σ)/(1 − σ²).
pub fn sigma_conjugate(m: &Matrix2<f64>, c: f64) -> Matrix2<f64> {
    let s = sigma_matrix(c);
    let i = Matrix2::identity();
    let sg = sigma_scalar(c);
    (i - s) * m * (i + s) / (1.0 - sg * sg)
}

fn log_det(lu: &LU<f64, Dyn, Dyn>) -> Result<f64> {
    let u = lu.u();
    let diag = u.diagonal();
    let mut sign: f64 = lu.p().determinant();
    let mut acc = 0.0;
    let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
    for &d in diag.iter() {
        if d == 0.0 || !d.is_finite() {
            return Err(Error::Degenerate("I − K is singular".into()));
        }
        sign *= d.signum();
        acc += d.abs().ln();
        lo = lo.min(d.abs());
        hi = hi.max(d.abs());
    }
    if sign < 0.0 {
        return Err(Error::Numerical(format!(
            "negative determinant (pivot ratio {:.3e})",
            hi / lo
        )));
    }
    Ok(acc)
}

impl FredholmSolution {
    pub fn solve(params: KernelParams, m: usize) -> Result<Self> {
        params.validate()?;
        let (n, c) = (params.n, params.c);
        let grids = [ray_grid(params.xi[0], n, m)?, ray_grid(params.xi[1], n, m)?];
        let mut nodes = Vec::with_capacity(2 * m);
        let mut sqrt_w = Vec::with_capacity(2 * m);
        let mut blocks = Vec::with_capacity(2 * m);
        for (b, g) in grids.iter().enumerate() {
            nodes.extend_from_slice(&g.nodes);
            sqrt_w.extend(g.weights.iter().map(|w| w.sqrt()));
            blocks.extend(std::iter::repeat(b).take(m));
        }
        let bases = nodes.iter().map(|&z| Basis::for_kernel(n, c, z)).collect::<Result<Vec<_>>>()?;
        let size = 2 * m;
        let kmat = DMatrix::from_fn(size, size, |a, b| {
            sqrt_w[a] * entry(blocks[a], blocks[b], &bases[a], &bases[b], n, c) * sqrt_w[b]
        });
        let lu = LU::new(DMatrix::identity(size, size) - &kmat);
        let log_prob = log_det(&lu)?;
        let resolvent_mat = lu
            .solve(&kmat)
            .ok_or_else(|| Error::Degenerate("I − K is singular".into()))?;
        Ok(FredholmSolution { params, m, grids, kmat, log_prob, resolvent_mat, nodes, sqrt_w, blocks, bases, lu })
    }

    pub fn prob(&self) -> f64 {
        self.log_prob.exp()
    }

    fn solve_vec(&self, v: &DVector<f64>) -> DVector<f64> {
        self.lu.solve(v).expect("factorization checked nonsingular at construction")
    }

    /// a(x)[b] = √w_b K_{i, blk b}(x, z_b); `deriv` takes ∂/∂x.
    fn row(&self, i: usize, bx: &Basis, deriv: bool) -> DVector<f64> {
        let (n, c) = (self.params.n, self.params.c);
        DVector::from_fn(self.nodes.len(), |a, _| {
            let k = if deriv {
                entry_dx(i, self.blocks[a], bx, &self.bases[a], n, c)
            } else {
                entry(i, self.blocks[a], bx, &self.bases[a], n, c)
            };
            self.sqrt_w[a] * k
        })
    }

    /// b(y)[a] = √w_a K_{blk a, j}(z_a, y); `deriv` takes ∂/∂y.
    fn col(&self, j: usize, by: &Basis, deriv: bool) -> DVector<f64> {
        let (n, c) = (self.params.n, self.params.c);
        DVector::from_fn(self.nodes.len(), |a, _| {
            // each block is symmetric in its two arguments
            let k = if deriv {
                entry_dx(self.blocks[a], j, by, &self.bases[a], n, c)
            } else {
                entry(self.blocks[a], j, &self.bases[a], by, n, c)
            };
            self.sqrt_w[a] * k
        })
    }

    /// √w_a f(z_a) on block j, zero elsewhere.
    fn block_fn(&self, j: usize, f: impl Fn(&Basis) -> f64) -> DVector<f64> {
        DVector::from_fn(self.nodes.len(), |a, _| {
            if self.blocks[a] == j {
                self.sqrt_w[a] * f(&self.bases[a])
            } else {
                0.0
            }
        })
    }

    /// Resolvent kernel R_ij(x, y), 1-based blocks.
    pub fn resolvent_at(&self, i: usize, j: usize, x: f64, y: f64) -> Result<f64> {
        let (bi, bj) = (block0(i)?, block0(j)?);
        let n = self.params.n;
        let bx = Basis::for_kernel(n, self.params.c, x)?;
        let by = Basis::for_kernel(n, self.params.c, y)?;
        let k = entry(bi, bj, &bx, &by, n, self.params.c);
        Ok(k + self.row(bi, &bx, false).dot(&self.solve_vec(&self.col(bj, &by, false))))
    }

    /// Grid node a and its 0-based block.
    pub fn node(&self, a: usize) -> (f64, usize) {
        (self.nodes[a], self.blocks[a])
    }

    pub fn sqrt_weight(&self, a: usize) -> f64 {
        self.sqrt_w[a]
    }

    pub fn endpoint_data(&self) -> Result<EndpointData> {
        let p = self.params;
        let (n, c) = (p.n, p.c);
        let scale = (n as f64 / 2.0).powf(0.25);
        let phi = |b: &Basis| scale * b.phi[n];
        let psi = |b: &Basis| scale * b.phi[n - 1];
        let ends = [Basis::for_kernel(n, c, p.xi[0])?, Basis::for_kernel(n, c, p.xi[1])?];

        let rows: Vec<DVector<f64>> = (0..2).map(|i| self.row(i, &ends[i], false)).collect();
        let drows: Vec<DVector<f64>> = (0..2).map(|i| self.row(i, &ends[i], true)).collect();
        let fphi: Vec<DVector<f64>> = (0..2).map(|j| self.block_fn(j, phi)).collect();
        let fpsi: Vec<DVector<f64>> = (0..2).map(|j| self.block_fn(j, psi)).collect();

        let mut rhs = DMatrix::zeros(self.nodes.len(), 8);
        for j in 0..2 {
            rhs.set_column(j, &self.col(j, &ends[j], false));
            rhs.set_column(2 + j, &self.col(j, &ends[j], true));
            rhs.set_column(4 + j, &fphi[j]);
            rhs.set_column(6 + j, &fpsi[j]);
        }
        let sol = self.lu.solve(&rhs).expect("factorization checked nonsingular at construction");
        let s = |k: usize| sol.column(k);

        let mut e = EndpointData {
            params: p,
            r: Matrix2::zeros(),
            r_x: Matrix2::zeros(),
            r_y: Matrix2::zeros(),
            q: Matrix2::zeros(),
            p: Matrix2::zeros(),
            q_tilde: Matrix2::zeros(),
            p_tilde: Matrix2::zeros(),
            u: Matrix2::zeros(),
            w: Matrix2::zeros(),
            u_hat: Matrix2::zeros(),
            w_hat: Matrix2::zeros(),
        };
        for i in 0..2 {
            for j in 0..2 {
                let (bi, bj) = (&ends[i], &ends[j]);
                let diag = if i == j { 1.0 } else { 0.0 };
                e.r[(i, j)] = entry(i, j, bi, bj, n, c) + rows[i].dot(&s(j));
                e.r_x[(i, j)] = entry_dx(i, j, bi, bj, n, c) + drows[i].dot(&s(j));
                e.r_y[(i, j)] = entry_dx(i, j, bj, bi, n, c) + rows[i].dot(&s(2 + j));
                e.q[(i, j)] = diag * phi(bi) + rows[i].dot(&s(4 + j));
                e.p[(i, j)] = diag * psi(bi) + rows[i].dot(&s(6 + j));
                e.q_tilde[(i, j)] = diag * phi(bj) + fphi[i].dot(&s(j));
                e.p_tilde[(i, j)] = diag * psi(bj) + fpsi[i].dot(&s(j));
                e.u[(i, j)] = fphi[i].dot(&s(4 + j));
                e.w[(i, j)] = fpsi[i].dot(&s(6 + j));
            }
        }
        let th = theta();
        let a = (n as f64 / 2.0).sqrt();
        e.u_hat = th * a - th * e.u * th;
        e.w_hat = th * a + th * sigma_conjugate(&e.w, c) * th;
        Ok(e)
    }
}

fn block0(i: usize) -> Result<usize> {
    match i {
        1 | 2 => Ok(i - 1),
        _ => crate::error::input(format!("block index must be 1 or 2, got {i}")),
    }
}

/// Single-matrix GUE largest-eigenvalue law: det(I − K_n) on (ξ, ∞).
#[derive(Debug, Clone)]
pub struct OneMatrixSolution {
    pub n: usize,
    pub xi: f64,
    pub log_prob: f64,
    /// R(ξ, ξ) = d ln P/dξ.
    pub r: f64,
}

impl OneMatrixSolution {
    pub fn solve(n: usize, xi: f64, m: usize) -> Result<Self> {
        if n == 0 {
            return crate::error::input("matrix size n must be at least 1");
        }
        let g = ray_grid(xi, n, m)?;
        let bases = g.nodes.iter().map(|&z| Basis::new(n, z)).collect::<Result<Vec<_>>>()?;
        let sw: Vec<f64> = g.weights.iter().map(|w| w.sqrt()).collect();
        let k = DMatrix::from_fn(m, m, |a, b| sw[a] * entry(0, 0, &bases[a], &bases[b], n, 0.5) * sw[b]);
        let lu = LU::new(DMatrix::identity(m, m) - k);
        let log_prob = log_det(&lu)?;
        let be = Basis::new(n, xi)?;
        let v = DVector::from_fn(m, |a, _| sw[a] * entry(0, 0, &be, &bases[a], n, 0.5));
        let sv = lu.solve(&v).ok_or_else(|| Error::Degenerate("I − K is singular".into()))?;
        let r = entry(0, 0, &be, &be, n, 0.5) + v.dot(&sv);
        Ok(OneMatrixSolution { n, xi, log_prob, r })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::PI;

    fn solve(n: usize, c: f64, a: f64, b: f64) -> FredholmSolution {
        FredholmSolution::solve(KernelParams::new(n, c, a, b).unwrap(), DEFAULT_M).unwrap()
    }

    #[test]
    fn orthant_probability() {
        let s = solve(1, 0.5, 0.0, 0.0);
        let exact = 0.25 + 0.5f64.asin() / (2.0 * PI);
        assert_abs_diff_eq!(s.prob(), exact, epsilon = 1e-12);
    }

    #[test]
    fn empty_constraint() {
        let s = solve(3, 0.7, 12.0, 12.0);
        assert_abs_diff_eq!(s.prob(), 1.0, epsilon = 1e-12);
        let e = s.endpoint_data().unwrap();
        // the (1,2) block involves high-index φ_k and need not vanish pointwise
        assert!(e.r[(0, 0)].abs() < 1e-12 && e.r[(1, 1)].abs() < 1e-12);
        assert!((e.r[(0, 1)] * e.r[(1, 0)]).abs() < 1e-20);
        assert!(e.u.abs().max() < 1e-12 && e.w.abs().max() < 1e-12);
        assert_abs_diff_eq!(e.u_hat.trace(), 6f64.sqrt(), epsilon = 1e-12);
        assert_abs_diff_eq!(e.w_hat.trace(), 6f64.sqrt(), epsilon = 1e-12);
    }

    #[test]
    fn one_matrix_limit() {
        let s = solve(2, 0.6, 0.5, 12.0);
        let one = OneMatrixSolution::solve(2, 0.5, DEFAULT_M).unwrap();
        assert_abs_diff_eq!(s.log_prob, one.log_prob, epsilon = 1e-10);
    }

    #[test]
    fn erf_resolvent_oracle() {
        let s = solve(1, 1e-6, 0.0, 12.0);
        let e = s.endpoint_data().unwrap();
        assert_abs_diff_eq!(e.r[(0, 0)], 2.0 / PI.sqrt(), epsilon = 1e-8);
    }

    #[test]
    fn diagonal_resolvent_is_log_derivative() {
        let h = 1e-4;
        let s = solve(2, 0.5, 0.0, 0.3);
        let e = s.endpoint_data().unwrap();
        let d1 = (solve(2, 0.5, h, 0.3).log_prob - solve(2, 0.5, -h, 0.3).log_prob) / (2.0 * h);
        let d2 = (solve(2, 0.5, 0.0, 0.3 + h).log_prob - solve(2, 0.5, 0.0, 0.3 - h).log_prob) / (2.0 * h);
        assert_abs_diff_eq!(e.r[(0, 0)], d1, epsilon = 1e-7);
        assert_abs_diff_eq!(e.r[(1, 1)], d2, epsilon = 1e-7);
        assert_abs_diff_eq!(e.r.trace(), d1 + d2, epsilon = 1e-7);
    }

    #[test]
    fn interpolation_reproduces_grid_values() {
        let s = solve(2, 0.4, -0.3, 0.6);
        for &(a, b) in &[(0usize, 5usize), (10, 70), (90, 3), (127, 127)] {
            let (za, ba) = s.node(a);
            let (zb, bb) = s.node(b);
            let r = s.resolvent_at(ba + 1, bb + 1, za, zb).unwrap();
            let disc = s.resolvent_mat[(a, b)] / (s.sqrt_weight(a) * s.sqrt_weight(b));
            assert_abs_diff_eq!(r, disc, epsilon = 1e-12 * (1.0 + r.abs()));
        }
    }

    #[test]
    fn resolvent_vanishes_far_out() {
        let s = solve(2, 0.5, 12.0, 12.0);
        assert!(s.resolvent_at(1, 2, 12.0, 12.0).unwrap().abs() < 1e-12);
    }

    #[test]
    fn moving_endpoint_derivatives() {
        // d r_ij/dξ_k = δ_ik r_x + δ_jk r_y − r_ik r_kj
        let (a, b, h) = (0.1, -0.4, 1e-4);
        let e = solve(3, 0.45, a, b).endpoint_data().unwrap();
        let ep = solve(3, 0.45, a + h, b).endpoint_data().unwrap();
        let em = solve(3, 0.45, a - h, b).endpoint_data().unwrap();
        let fd = (ep.r - em.r) / (2.0 * h);
        for i in 0..2 {
            for j in 0..2 {
                let mut v = -e.r[(i, 0)] * e.r[(0, j)];
                if i == 0 {
                    v += e.r_x[(i, j)];
                }
                if j == 0 {
                    v += e.r_y[(i, j)];
                }
                assert_abs_diff_eq!(v, fd[(i, j)], epsilon = 1e-7);
            }
        }
    }

    #[test]
    fn first_integrals() {
        let e = solve(2, 0.5, 0.0, 0.3).endpoint_data().unwrap();
        let th = theta();
        let c = 0.5;
        let qh = e.q * th;
        let qth = th * e.q_tilde;
        let ph = sigma_conjugate(&e.p, c) * th;
        let pth = th * sigma_conjugate(&e.p_tilde, c);
        let lhs1 = pth * qh;
        let rhs1 = th * 2.0 - e.w_hat * e.u_hat;
        let lhs2 = qth * ph;
        let rhs2 = th * 2.0 - e.u_hat * e.w_hat;
        let scale = rhs1.abs().max().max(lhs1.abs().max());
        assert!((lhs1 - rhs1).abs().max() <= 1e-9 * scale);
        assert!((lhs2 - rhs2).abs().max() <= 1e-9 * scale);
    }

    #[test]
    fn exchange_symmetry_and_independence() {
        let a = solve(3, 0.35, -0.2, 0.9);
        let b = solve(3, 0.35, 0.9, -0.2);
        assert_abs_diff_eq!(a.log_prob, b.log_prob, epsilon = 1e-10);
        let s = solve(2, 1e-9, 0.1, -0.3);
        let p1 = OneMatrixSolution::solve(2, 0.1, DEFAULT_M).unwrap().log_prob.exp();
        let p2 = OneMatrixSolution::solve(2, -0.3, DEFAULT_M).unwrap().log_prob.exp();
        assert_abs_diff_eq!(s.prob(), p1 * p2, epsilon = 1e-8);
    }

    #[test]
    fn monotone_in_endpoints() {
        let mut last = 0.0;
        for k in 0..8 {
            let p = solve(2, 0.6, -1.0 + 0.4 * k as f64, 0.2).prob();
            assert!(p > last && p <= 1.0);
            last = p;
        }
    }
}
