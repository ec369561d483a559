//! Scalar and 2×2 observables assembled from endpoint data: hatted variables,
//! the X/Φ/G quartet, the anti-diagonal A tower, τ-ratios, the Toda-side
//! variables U, W, T and the composites entering the final fourth-order system.
//!
//! Conventions: Θ is the all-ones matrix, σ the scalar (1−c)/(1+c), S = σσ₃,
//! D± = ∂ξ₁ ± ∂ξ₂ and ξ± = ξ₁ ± ξ₂. "tr" of a 2×2 matrix is the full trace;
//! squares of anti-diagonal matrices are reported by their scalar coefficient.

use crate::fredholm::{sigma3, sigma_conjugate, sigma_matrix, sigma_scalar, theta, EndpointData};
use crate::kernel::KernelParams;
use nalgebra::Matrix2;
use std::f64::consts::PI;

type M2 = Matrix2<f64>;

fn comm(a: &M2, b: &M2) -> M2 {
    a * b - b * a
}

fn anti_comm(a: &M2, b: &M2) -> M2 {
    a * b + b * a
}

/// Anti-diagonal part.
pub fn anti_diag(m: &M2) -> M2 {
    M2::new(0.0, m[(0, 1)], m[(1, 0)], 0.0)
}

/// Coefficient s of a matrix assumed to be s·I.
fn scalar_part(m: &M2) -> f64 {
    0.5 * m.trace()
}

fn tr3(m: &M2) -> f64 {
    (sigma3() * m).trace()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Hatted {
    pub q: M2,
    pub q_tilde: M2,
    pub p: M2,
    pub p_tilde: M2,
}

pub fn hats(e: &EndpointData) -> Hatted {
    let th = theta();
    let c = e.params.c;
    Hatted {
        q: e.q * th,
        q_tilde: th * e.q_tilde,
        p: sigma_conjugate(&e.p, c) * th,
        p_tilde: th * sigma_conjugate(&e.p_tilde, c),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MatrixQuartet {
    pub x_plus: M2,
    pub x_minus: M2,
    pub phi: M2,
    pub g: M2,
}

pub fn build_quartet(e: &EndpointData) -> MatrixQuartet {
    let h = hats(e);
    let qp = h.q * h.p_tilde;
    let pq = h.p * h.q_tilde;
    let puw = h.p * e.u_hat * h.p_tilde;
    let qwq = h.q * e.w_hat * h.q_tilde;
    MatrixQuartet { x_plus: qp + pq, x_minus: qp - pq, phi: (puw - qwq) * 2.0, g: (puw + qwq) * 2.0 }
}

/// D₊r and D₋r from the closed first-order system for r.
pub fn r_derivatives(e: &EndpointData) -> (M2, M2) {
    let h = hats(e);
    let c = e.params.c;
    let sg = sigma_scalar(c);
    let s = sigma_matrix(c);
    let i = M2::identity();
    let xi = M2::new(e.params.xi[0], 0.0, 0.0, e.params.xi[1]);
    let a = h.q * h.p_tilde * (i - s) * 0.5;
    let b = (i + s) * h.p * h.q_tilde * 0.5;
    let plus = -a - b - comm(&(s * xi), &e.r);
    let minus = (a - b - comm(&xi, &e.r)) / sg;
    (plus, minus)
}

#[derive(Debug, Clone, PartialEq)]
pub struct DerivedQuantities {
    pub n: usize,
    pub c: f64,
    pub xi_plus: f64,
    pub xi_minus: f64,
    pub sigma: f64,
    pub sigma2: f64,
    pub dr_plus: M2,
    pub dr_minus: M2,
    pub r_t: f64,
    pub r_3: f64,
    pub dp_r_t: f64,
    pub dm_r_t: f64,
    pub dp_r_3: f64,
    pub dm_r_3: f64,
    pub a: M2,
    pub a_tilde: M2,
    pub a2: f64,
    /// D₊A² and D₋A² from the analytic r-derivatives.
    pub dp_a2: f64,
    pub dm_a2: f64,
    pub x_t: f64,
    pub x_3: f64,
    /// X_t = −2D₊r_t − 2σ²A² and X_t = −2D₋r_3 − 2A².
    pub x_t_from_plus: f64,
    pub x_t_from_minus: f64,
    /// Tr σ₃X₊ and −2D₋r_t.
    pub x_3_trace: f64,
    pub x_3_alt: f64,
    pub phi_t: f64,
    pub phi_3: f64,
    pub g_t: f64,
    pub g_3: f64,
    pub h_t: f64,
    pub h_3: f64,
    pub a_plus: f64,
    pub a_minus: f64,
    pub f_hat: f64,
    pub j: f64,
    pub r_tt: f64,
    pub r_33: f64,
    /// Scalar coefficients of (X₊)_a², (X₋)_a² and σ₃[(X₊)_a, (X₋)_a].
    pub xpa2: f64,
    pub xa2: f64,
    pub c_a: f64,
}

pub fn build_derived(e: &EndpointData, q: &MatrixQuartet, p: &KernelParams) -> DerivedQuantities {
    let (n, c) = (p.n, p.c);
    let sg = sigma_scalar(c);
    let s2 = sg * sg;
    let den = 1.0 - s2;
    let s = sigma_matrix(c);
    let s3 = sigma3();
    let r = &e.r;
    let (dp, dm) = r_derivatives(e);

    let a = comm(&s3, &(r - comm(&s, r) * 0.5)) / den;
    let a_tilde = a * sg;
    let a2 = scalar_part(&(a * a));
    let k = -4.0 / den;
    let dp_a2 = k * (dp[(0, 1)] * r[(1, 0)] + r[(0, 1)] * dp[(1, 0)]);
    let dm_a2 = k * (dm[(0, 1)] * r[(1, 0)] + r[(0, 1)] * dm[(1, 0)]);

    let r_t = r.trace();
    let r_3 = tr3(r);
    let (dp_r_t, dm_r_t, dp_r_3, dm_r_3) = (dp.trace(), dm.trace(), tr3(&dp), tr3(&dm));

    let x_t = q.x_plus.trace();
    let x_3 = -2.0 * dp_r_3;
    let (xp, xm) = (p.xi[0] + p.xi[1], p.xi[0] - p.xi[1]);

    let xpa = anti_diag(&q.x_plus);
    let xa = anti_diag(&q.x_minus);
    let a_plus = anti_comm(&a_tilde, &xpa).trace();
    let a_minus = -anti_comm(&a, &xa).trace();

    let h_t = 4.0 * r_t - 2.0 * xp * dp_r_t + xm * x_3;
    let h_3 = 4.0 * r_3 - 2.0 * xm * dm_r_3 + xp * x_3;

    DerivedQuantities {
        n,
        c,
        xi_plus: xp,
        xi_minus: xm,
        sigma: sg,
        sigma2: s2,
        dr_plus: dp,
        dr_minus: dm,
        r_t,
        r_3,
        dp_r_t,
        dm_r_t,
        dp_r_3,
        dm_r_3,
        a,
        a_tilde,
        a2,
        dp_a2,
        dm_a2,
        x_t,
        x_3,
        x_t_from_plus: -2.0 * dp_r_t - 2.0 * s2 * a2,
        x_t_from_minus: -2.0 * dm_r_3 - 2.0 * a2,
        x_3_trace: tr3(&q.x_plus),
        x_3_alt: -2.0 * dm_r_t,
        phi_t: q.phi.trace(),
        phi_3: tr3(&q.phi),
        g_t: q.g.trace(),
        g_3: tr3(&q.g),
        h_t,
        h_3,
        a_plus,
        a_minus,
        f_hat: x_t - 4.0 * n as f64,
        j: x_t * x_t - x_3 * x_3 - 4.0 * s2 * a2 * a2,
        r_tt: 4.0 * r_t - 2.0 * xp * dp_r_t,
        r_33: 4.0 * r_3 - 2.0 * xm * dm_r_3,
        xpa2: scalar_part(&(xpa * xpa)),
        xa2: scalar_part(&(xa * xa)),
        c_a: scalar_part(&(s3 * comm(&xpa, &xa))),
    }
}

/// ln of the whole-space two-matrix integral,
/// τ_n = π^{n/2} 2^{−n(n−1)/2} ∏_{j<n} j! (1−c²)^{−n²/2}; τ_0 = 1.
pub fn ln_tau_whole(n: usize, c: f64) -> f64 {
    let nf = n as f64;
    let ln_superfact: f64 = (1..n).map(|j| (1..=j).map(|k| (k as f64).ln()).sum::<f64>()).sum();
    0.5 * nf * PI.ln() - 0.5 * nf * (nf - 1.0) * 2f64.ln() + ln_superfact - 0.5 * nf * nf * (1.0 - c * c).ln()
}

/// (τ^J_{n+1}/τ^J_n, τ^J_{n−1}/τ^J_n) reconstructed from Tr Û and Tr Ŵ.
pub fn tau_ratios(e: &EndpointData, p: &KernelParams) -> (f64, f64) {
    let (n, c) = (p.n, p.c);
    let s = (2.0 * n as f64).sqrt();
    let up = e.u_hat.trace() / s * (ln_tau_whole(n + 1, c) - ln_tau_whole(n, c)).exp();
    let down = e.w_hat.trace() / s * (ln_tau_whole(n - 1, c) - ln_tau_whole(n, c)).exp();
    (up, down)
}

/// Toda-side variables at one point: U = U_n(1−c²)^{n+1/2}, W = W_n(1−c²)^{1/2−n},
/// T = ln τ^J_n, with exact first and second ξ-derivatives.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TodaVariables {
    pub u: f64,
    pub w: f64,
    pub u1: f64,
    pub u2: f64,
    pub w1: f64,
    pub w2: f64,
    pub t: f64,
    pub t1: f64,
    pub t2: f64,
    pub t11: f64,
    pub t12: f64,
    pub t22: f64,
}

pub fn toda_variables(e: &EndpointData, d: &DerivedQuantities, log_prob: f64) -> TodaVariables {
    let n = e.params.n;
    let c = e.params.c;
    let nf = n as f64;
    let s = (2.0 * nf).sqrt();
    let ln_fact = |k: usize| (1..=k).map(|j| (j as f64).ln()).sum::<f64>();
    let cu = (0.5 * PI.ln() - nf * 2f64.ln() + ln_fact(n)).exp() / s;
    let cw = (-0.5 * PI.ln() + (nf - 1.0) * 2f64.ln() - ln_fact(n - 1)).exp() / s;
    let h = hats(e);
    let s3 = sigma3();
    let dpu = (h.q_tilde * h.q).trace() * cu;
    let dmu = (h.q_tilde * s3 * h.q).trace() * cu;
    let dpw = -(h.p_tilde * h.p).trace() * cw;
    let dmw = -(h.p_tilde * s3 * h.p).trace() * cw;
    let d1 = (d.dr_plus + d.dr_minus) * 0.5;
    let d2 = (d.dr_plus - d.dr_minus) * 0.5;
    TodaVariables {
        u: e.u_hat.trace() * cu,
        w: e.w_hat.trace() * cw,
        u1: 0.5 * (dpu + dmu),
        u2: 0.5 * (dpu - dmu),
        w1: 0.5 * (dpw + dmw),
        w2: 0.5 * (dpw - dmw),
        t: log_prob + ln_tau_whole(n, c),
        t1: e.r[(0, 0)],
        t2: e.r[(1, 1)],
        t11: d1[(0, 0)],
        t12: d2[(0, 0)],
        t22: d2[(1, 1)],
    }
}

/// Composites of the final fourth-order system. The highest derivatives
/// Φ_t, Φ_3, D₊ = D₊A², D₋ = D₋A² are passed in so callers can choose between
/// the algebraic values and finite differences of exact fields.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Composites {
    pub f_t: f64,
    pub f_3: f64,
    pub delta: f64,
    pub j_plus: f64,
    pub j_minus: f64,
    pub j_big_a: f64,
    pub p_x: f64,
    pub p_t: f64,
    pub p_3: f64,
    pub p_plus: f64,
    pub p_a: f64,
    pub s_t: f64,
    pub s_3: f64,
    pub j_a: f64,
    pub i_a: f64,
    pub p_hat_a: f64,
}

pub fn composites(d: &DerivedQuantities, phi_t: f64, phi_3: f64, dp: f64, dm: f64) -> Composites {
    let (s2, a2, x3, xt, fh, j) = (d.sigma2, d.a2, d.x_3, d.x_t, d.f_hat, d.j);
    let (ht, h3) = (d.h_t, d.h_3);
    let f_t = fh + 2.0 * a2;
    let f_3 = fh + 2.0 * s2 * a2;
    let delta = f_t * ht * ht - f_3 * h3 * h3;
    let j_plus = 2.0 * s2 * (2.0 * dp * dp + a2 * j);
    let j_minus = 2.0 * (2.0 * s2 * dm * dm + a2 * j);
    let j_big_a = 4.0 * s2 * (dp * dm - 2.0 * x3 * a2 * a2);
    let common = (2.0 * x3 * x3 + j) * fh;
    let p_x = phi_t * phi_3 - ht * h3 - 2.0 * x3 * xt * fh - j_big_a;
    let p_t = phi_t * phi_t - ht * ht - common - j_plus;
    let p_3 = phi_3 * phi_3 - h3 * h3 - common - j_minus;
    let p_plus = f_t * p_t + f_3 * p_3;
    let p_a = h3 * h3 * p_t + ht * ht * p_3 - 2.0 * ht * h3 * p_x;
    let p_hat_a = h3 * h3 * j_plus + ht * ht * j_minus + 8.0 * s2 * ht * h3 * (dp * dm - 2.0 * x3 * a2 * a2);
    let i_a = j * (2.0 * (dp * dp + s2 * dm * dm) + a2 * j) + 16.0 * s2 * a2 * x3 * (dp * dm - x3 * a2 * a2);
    Composites {
        f_t,
        f_3,
        delta,
        j_plus,
        j_minus,
        j_big_a,
        p_x,
        p_t,
        p_3,
        p_plus,
        p_a,
        s_t: a2 * phi_t - fh * dp,
        s_3: a2 * phi_3 - fh * dm,
        j_a: h3 * phi_t - ht * phi_3,
        i_a,
        p_hat_a,
    }
}

/// Everything computed at one (n, c, ξ₁, ξ₂) point.
#[derive(Debug, Clone)]
pub struct PointData {
    pub params: KernelParams,
    pub log_prob: f64,
    pub endpoint: EndpointData,
    pub quartet: MatrixQuartet,
    pub derived: DerivedQuantities,
    pub toda: TodaVariables,
}

impl PointData {
    pub fn compute(params: KernelParams, m: usize) -> crate::Result<Self> {
        let sol = crate::fredholm::FredholmSolution::solve(params, m)?;
        let endpoint = sol.endpoint_data()?;
        let quartet = build_quartet(&endpoint);
        let derived = build_derived(&endpoint, &quartet, &params);
        let toda = toda_variables(&endpoint, &derived, sol.log_prob);
        Ok(PointData { params, log_prob: sol.log_prob, endpoint, quartet, derived, toda })
    }
}
