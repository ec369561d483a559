//! Numerical residuals of the identities and PDEs satisfied by T = ln τ^J_n.
//!
//! Quantities up to second order in T come exactly from the endpoint data
//! (r and its closed first-order system). Anything of higher order, and every
//! c-derivative, is taken by central finite differences of those exact fields.
//! c-derivatives are always at fixed physical endpoints.
//!
//! A residual is reported relative to the largest constituent term. When every
//! term is below `SCALE_FLOOR` the absolute residual is judged instead.

use crate::fredholm::{FredholmSolution, OneMatrixSolution};
use crate::kernel::KernelParams;
use crate::observables::{anti_diag, composites, Composites, PointData};
use crate::{Error, Result};
use nalgebra::Matrix2;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::sync::{Arc, Mutex};

pub const DEFAULT_H_XI: f64 = 5e-3;
pub const DEFAULT_H_C: f64 = 1e-3;
pub const DEFAULT_ORDER: usize = 4;
pub const SCALE_FLOOR: f64 = 1e-8;

pub const TOL_IDENTITY: f64 = 1e-8;
pub const TOL_ALGEBRAIC_PDE: f64 = 1e-6;
pub const TOL_FD: f64 = 1e-4;
pub const TOL_CCOM: f64 = 1e-5;
pub const TOL_MATCH: f64 = 1e-6;

const GUARD_A2: f64 = 1e-10;
const GUARD_F_HAT: f64 = 1e-10;
const GUARD_DELTA: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Center {
    pub n: usize,
    pub c: f64,
    pub xi: [f64; 2],
}

impl Center {
    pub fn new(n: usize, c: f64, xi1: f64, xi2: f64) -> Self {
        Center { n, c, xi: [xi1, xi2] }
    }

    fn params(&self) -> Result<KernelParams> {
        KernelParams::new(self.n, self.c, self.xi[0], self.xi[1])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stencil {
    pub center: Center,
    pub h_xi: f64,
    pub h_c: f64,
    pub order: usize,
}

impl Stencil {
    pub fn new(center: Center) -> Self {
        Stencil { center, h_xi: DEFAULT_H_XI, h_c: DEFAULT_H_C, order: DEFAULT_ORDER }
    }

    pub fn with_steps(mut self, h_xi: f64, h_c: f64) -> Self {
        self.h_xi = h_xi;
        self.h_c = h_c;
        self
    }

    pub fn scaled(mut self, factor: f64) -> Self {
        self.h_xi *= factor;
        self.h_c *= factor;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.h_xi > 0.0 && self.h_c > 0.0) {
            return Err(Error::Input("finite-difference steps must be positive".into()));
        }
        if self.order != 2 && self.order != 4 {
            return Err(Error::Input(format!("stencil order must be 2 or 4, got {}", self.order)));
        }
        let c = self.center.c;
        if c - 2.0 * self.h_c <= 0.0 || c + 2.0 * self.h_c >= 1.0 {
            return Err(Error::Input(format!("c = {c} too close to 0 or 1 for h_c = {}", self.h_c)));
        }
        self.center.params().map(|_| ())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Status {
    Pass,
    Fail,
    SkippedDegenerate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualReport {
    pub equation: String,
    pub center: Center,
    pub residual: f64,
    pub scale: f64,
    pub relative: f64,
    pub tolerance: f64,
    pub pass: bool,
    pub status: Status,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Guard {
    A2,
    FHat,
    Delta,
}

/// Shared, memoized point evaluations.
#[derive(Debug)]
pub struct Evaluator {
    pub m: usize,
    cache: Mutex<HashMap<(usize, u64, u64, u64), Arc<PointData>>>,
}

impl Evaluator {
    pub fn new(m: usize) -> Self {
        Evaluator { m, cache: Mutex::new(HashMap::new()) }
    }

    pub fn point(&self, n: usize, c: f64, xi1: f64, xi2: f64) -> Result<Arc<PointData>> {
        let key = (n, c.to_bits(), xi1.to_bits(), xi2.to_bits());
        if let Some(p) = self.cache.lock().expect("cache poisoned").get(&key) {
            return Ok(p.clone());
        }
        let p = Arc::new(PointData::compute(KernelParams::new(n, c, xi1, xi2)?, self.m)?);
        self.cache.lock().expect("cache poisoned").insert(key, p.clone());
        Ok(p)
    }

    pub fn clear(&self) {
        self.cache.lock().expect("cache poisoned").clear();
    }
}

type Field = fn(&PointData) -> f64;

fn d1_coeffs(order: usize) -> &'static [(f64, f64)] {
    if order == 2 {
        &[(1.0, 0.5), (-1.0, -0.5)]
    } else {
        &[(2.0, -1.0 / 12.0), (1.0, 8.0 / 12.0), (-1.0, -8.0 / 12.0), (-2.0, 1.0 / 12.0)]
    }
}

fn d2_coeffs(order: usize) -> &'static [(f64, f64)] {
    if order == 2 {
        &[(1.0, 1.0), (0.0, -2.0), (-1.0, 1.0)]
    } else {
        &[
            (2.0, -1.0 / 12.0),
            (1.0, 16.0 / 12.0),
            (0.0, -30.0 / 12.0),
            (-1.0, 16.0 / 12.0),
            (-2.0, -1.0 / 12.0),
        ]
    }
}

/// Finite-difference access to exact fields around a stencil center.
struct Ctx<'a> {
    ev: &'a Evaluator,
    st: Stencil,
}

impl<'a> Ctx<'a> {
    fn at(&self, a: f64, b: f64, dc: f64) -> Result<Arc<PointData>> {
        let c = &self.st.center;
        self.ev.point(c.n, c.c + dc, c.xi[0] + a, c.xi[1] + b)
    }

    fn here(&self) -> Result<Arc<PointData>> {
        self.at(0.0, 0.0, 0.0)
    }

    fn d1(&self, g: &dyn Fn(f64) -> Result<f64>, h: f64) -> Result<f64> {
        let mut s = 0.0;
        for &(k, w) in d1_coeffs(self.st.order) {
            s += w * g(k * h)?;
        }
        Ok(s / h)
    }

    fn d2(&self, g: &dyn Fn(f64) -> Result<f64>, h: f64) -> Result<f64> {
        let mut s = 0.0;
        for &(k, w) in d2_coeffs(self.st.order) {
            s += w * g(k * h)?;
        }
        Ok(s / (h * h))
    }

    /// Directional derivative of a field along (u1, u2), evaluated at offset (a, b).
    fn dir(&self, f: Field, u: (f64, f64), a: f64, b: f64) -> Result<f64> {
        self.d1(&|t| Ok(f(&*self.at(a + t * u.0, b + t * u.1, 0.0)?)), self.st.h_xi)
    }

    fn dp(&self, f: Field) -> Result<f64> {
        self.dir(f, (1.0, 1.0), 0.0, 0.0)
    }

    fn dm(&self, f: Field) -> Result<f64> {
        self.dir(f, (1.0, -1.0), 0.0, 0.0)
    }

    fn dpp(&self, f: Field) -> Result<f64> {
        self.d2(&|t| Ok(f(&*self.at(t, t, 0.0)?)), self.st.h_xi)
    }

    fn dmm(&self, f: Field) -> Result<f64> {
        self.d2(&|t| Ok(f(&*self.at(t, -t, 0.0)?)), self.st.h_xi)
    }

    fn dpm(&self, f: Field) -> Result<f64> {
        let h = self.st.h_xi;
        self.d1(&|t| self.d1(&|s| Ok(f(&*self.at(t + s, -t + s, 0.0)?)), h), h)
    }

    /// ∂/∂ξ₁ and ∂/∂ξ₂ of a field at offset (a, b).
    fn d_xi1(&self, f: Field, a: f64, b: f64) -> Result<f64> {
        self.dir(f, (1.0, 0.0), a, b)
    }

    fn d_xi2(&self, f: Field, a: f64, b: f64) -> Result<f64> {
        self.dir(f, (0.0, 1.0), a, b)
    }

    /// ∂/∂c of a field at fixed ξ.
    fn d_c(&self, f: Field) -> Result<f64> {
        self.d1(&|e| Ok(f(&*self.at(0.0, 0.0, e)?)), self.st.h_c)
    }
}

mod fields {
    use super::PointData;
    pub fn x_t(p: &PointData) -> f64 {
        p.derived.x_t
    }
    pub fn x_3(p: &PointData) -> f64 {
        p.derived.x_3
    }
    pub fn a2(p: &PointData) -> f64 {
        p.derived.a2
    }
    pub fn g_t(p: &PointData) -> f64 {
        p.derived.g_t
    }
    pub fn g_3(p: &PointData) -> f64 {
        p.derived.g_3
    }
    pub fn r_t(p: &PointData) -> f64 {
        p.derived.r_t
    }
    pub fn r_3(p: &PointData) -> f64 {
        p.derived.r_3
    }
    pub fn big_r_t(p: &PointData) -> f64 {
        p.derived.r_tt
    }
    pub fn big_r_3(p: &PointData) -> f64 {
        p.derived.r_33
    }
    pub fn a_plus(p: &PointData) -> f64 {
        p.derived.a_plus
    }
    pub fn a_minus(p: &PointData) -> f64 {
        p.derived.a_minus
    }
    pub fn u(p: &PointData) -> f64 {
        p.toda.u
    }
    pub fn w(p: &PointData) -> f64 {
        p.toda.w
    }
    pub fn u1(p: &PointData) -> f64 {
        p.toda.u1
    }
    pub fn u2(p: &PointData) -> f64 {
        p.toda.u2
    }
    pub fn w1(p: &PointData) -> f64 {
        p.toda.w1
    }
    pub fn w2(p: &PointData) -> f64 {
        p.toda.w2
    }
    pub fn t1(p: &PointData) -> f64 {
        p.toda.t1
    }
    pub fn t2(p: &PointData) -> f64 {
        p.toda.t2
    }
    /// F = UW from the exact second derivatives of T.
    pub fn f_from_t(p: &PointData) -> f64 {
        let z = &p.toda;
        let s2 = p.derived.sigma2;
        let dpp = z.t11 + 2.0 * z.t12 + z.t22;
        let dmm = z.t11 - 2.0 * z.t12 + z.t22;
        (dpp - s2 * dmm) / (4.0 * (1.0 - s2)) + p.params.n as f64 / 2.0
    }
}

/// Builder for one report.
struct Eq<'a> {
    id: &'a str,
    center: Center,
    tol: f64,
    guards: &'a [Guard],
}

fn sum(v: &[f64]) -> f64 {
    v.iter().sum()
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

impl<'a> Eq<'a> {
    /// Residual Σlhs − Σrhs judged against the largest single term.
    fn report(&self, lhs: &[f64], rhs: &[f64], deg: &Degeneracy) -> ResidualReport {
        let residual = sum(lhs) - sum(rhs);
        let scale = max_abs(lhs).max(max_abs(rhs));
        let relative = if scale > SCALE_FLOOR { residual.abs() / scale } else { residual.abs() };
        let skipped = self.guards.iter().any(|g| deg.hit(*g));
        let pass = !skipped && relative.is_finite() && relative <= self.tol;
        let status = if skipped {
            Status::SkippedDegenerate
        } else if pass {
            Status::Pass
        } else {
            Status::Fail
        };
        ResidualReport {
            equation: self.id.to_string(),
            center: self.center,
            residual,
            scale,
            relative,
            tolerance: self.tol,
            pass,
            status,
            note: None,
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Degeneracy {
    a2: f64,
    f_hat: f64,
    delta: f64,
}

impl Degeneracy {
    fn hit(&self, g: Guard) -> bool {
        match g {
            Guard::A2 => self.a2.abs() < GUARD_A2,
            Guard::FHat => self.f_hat.abs() < GUARD_F_HAT,
            Guard::Delta => self.delta.abs() < GUARD_DELTA,
        }
    }
}

/// Equation families; `Suite::run` evaluates any subset.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Family {
    Identities,
    BoundaryToda,
    UwSystem,
    Conservation,
    FourthOrder,
    CoupledPiv,
    FinalFour,
    KernelSide,
    Ccom,
    Correspondence,
}

impl Family {
    pub const ALL: [Family; 10] = [
        Family::Identities,
        Family::BoundaryToda,
        Family::UwSystem,
        Family::Conservation,
        Family::FourthOrder,
        Family::CoupledPiv,
        Family::FinalFour,
        Family::KernelSide,
        Family::Ccom,
        Family::Correspondence,
    ];

    /// Whether the family uses finite differences.
    pub fn uses_fd(&self) -> bool {
        !matches!(self, Family::Identities | Family::BoundaryToda)
    }
}

/// Scaling applied to FD-based tolerances.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    pub identity: f64,
    pub algebraic_pde: f64,
    pub fd: f64,
    pub ccom: f64,
    pub matching: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            identity: TOL_IDENTITY,
            algebraic_pde: TOL_ALGEBRAIC_PDE,
            fd: TOL_FD,
            ccom: TOL_CCOM,
            matching: TOL_MATCH,
        }
    }
}

pub struct Suite<'a> {
    pub ev: &'a Evaluator,
    pub tol: Tolerances,
}

impl<'a> Suite<'a> {
    pub fn new(ev: &'a Evaluator) -> Self {
        Suite { ev, tol: Tolerances::default() }
    }

    fn ctx(&self, st: Stencil) -> Result<Ctx<'a>> {
        st.validate()?;
        Ok(Ctx { ev: self.ev, st })
    }

    fn eq<'b>(&self, id: &'b str, st: &Stencil, tol: f64, guards: &'b [Guard]) -> Eq<'b> {
        Eq { id, center: st.center, tol, guards }
    }

    fn degeneracy(&self, p: &PointData, comp: Option<&Composites>) -> Degeneracy {
        Degeneracy {
            a2: p.derived.a2,
            f_hat: p.derived.f_hat,
            delta: comp.map_or(f64::INFINITY, |c| c.delta),
        }
    }

    pub fn run(&self, st: Stencil, families: &[Family]) -> Result<Vec<ResidualReport>> {
        let mut out = Vec::new();
        for f in families {
            out.extend(match f {
                Family::Identities => self.identities(st)?,
                Family::BoundaryToda => vec![self.boundary_toda(st)?],
                Family::UwSystem => self.uw_system(st)?,
                Family::Conservation => vec![self.conservation(st)?],
                Family::FourthOrder => self.fourth_order(st)?,
                Family::CoupledPiv => self.coupled_piv(st)?,
                Family::FinalFour => self.final_four(st)?,
                Family::KernelSide => self.kernel_side(st)?,
                Family::Ccom => self.ccom(st)?,
                Family::Correspondence => self.correspondence(st)?,
            });
        }
        Ok(out)
    }

    /// Matrix first integrals, determinant degeneracies, the trace identity and
    /// the purely algebraic scalar relations.
    pub fn identities(&self, st: Stencil) -> Result<Vec<ResidualReport>> {
        let ctx = self.ctx(st)?;
        let p = ctx.here()?;
        let deg = self.degeneracy(&p, None);
        let tol = self.tol.identity;
        let e = &p.endpoint;
        let q = &p.quartet;
        let d = &p.derived;
        let h = crate::observables::hats(e);
        let n = st.center.n as f64;
        let th = crate::fredholm::theta();
        let mut out = Vec::new();

        let mat = |id: &str, lhs: Matrix2<f64>, rhs: Matrix2<f64>, out: &mut Vec<ResidualReport>| {
            // entrywise, worst entry reported
            let mut worst: Option<ResidualReport> = None;
            for k in 0..4 {
                let r = self.eq(id, &st, tol, &[]).report(&[lhs[k]], &[rhs[k]], &deg);
                let r = ResidualReport { scale: lhs.abs().max().max(rhs.abs().max()), ..r };
                let rel = if r.scale > SCALE_FLOOR { r.residual.abs() / r.scale } else { r.residual.abs() };
                let r = ResidualReport { relative: rel, pass: rel <= tol, status: status_of(rel <= tol), ..r };
                if worst.as_ref().map_or(true, |w| r.relative > w.relative) {
                    worst = Some(r);
                }
            }
            out.push(worst.expect("four entries"));
        };
        mat("WU", h.p_tilde * h.q, th * n - e.w_hat * e.u_hat, &mut out);
        mat("UW", h.q_tilde * h.p, th * n - e.u_hat * e.w_hat, &mut out);

        let det = |id: &str, m: Matrix2<f64>, out: &mut Vec<ResidualReport>| {
            let terms = [m[(0, 0)] * m[(1, 1)], -m[(0, 1)] * m[(1, 0)]];
            out.push(self.eq(id, &st, tol, &[]).report(&terms, &[], &deg));
        };
        det("det(X+ + X-)", q.x_plus + q.x_minus, &mut out);
        det("det(X+ - X-)", q.x_plus - q.x_minus, &mut out);
        det("det(Phi + G)", q.phi + q.g, &mut out);
        det("det(Phi - G)", q.phi - q.g, &mut out);

        out.push(self.eq("tr", &st, tol, &[]).report(
            &[(e.u_hat * e.w_hat).trace()],
            &[e.u_hat.trace() * e.w_hat.trace()],
            &deg,
        ));
        out.push(self.eq("trX-", &st, tol, &[]).report(
            &[q.x_minus[(0, 0)], q.x_minus[(1, 1)]],
            &[],
            &deg,
        ));
        out.push(self.eq("Xt+", &st, tol, &[]).report(&[d.x_t], &[d.x_t_from_plus], &deg));
        out.push(self.eq("Xt-", &st, tol, &[]).report(&[d.x_t], &[d.x_t_from_minus], &deg));
        out.push(self.eq("X3+", &st, tol, &[]).report(&[d.x_3], &[d.x_3_trace], &deg));
        out.push(self.eq("X3-", &st, tol, &[]).report(&[d.x_3], &[d.x_3_alt], &deg));
        out.push(self.eq("Gt=Ht+A+", &st, tol, &[]).report(&[d.g_t], &[d.h_t, d.a_plus], &deg));
        out.push(self.eq("G3=H3+A-", &st, tol, &[]).report(&[d.g_3], &[d.h_3, d.a_minus], &deg));
        out.push(self.eq("B+", &st, tol, &[]).report(
            &[4.0 * d.xpa2, 4.0 * d.xa2],
            &[d.x_t * d.x_t, -d.x_3 * d.x_3, -4.0 * d.sigma2 * d.a2 * d.a2],
            &deg,
        ));

        let pa = anti_diag(&q.phi);
        let ga = anti_diag(&q.g);
        let sc = |m: Matrix2<f64>| 0.5 * m.trace();
        let (pa2, ga2, pga) = (sc(pa * pa), sc(ga * ga), sc(pa * ga + ga * pa));
        let (pt, p3, gt, g3, xt, x3) = (d.phi_t, d.phi_3, d.g_t, d.g_3, d.x_t, d.x_3);
        out.push(self.eq("TG2+", &st, tol, &[]).report(
            &[4.0 * pa2, 4.0 * ga2],
            &[pt * pt, -p3 * p3, gt * gt, -g3 * g3],
            &deg,
        ));
        out.push(self.eq("TGaa", &st, tol, &[]).report(&[2.0 * pga], &[gt * pt, -g3 * p3], &deg));
        out.push(self.eq("TG2-", &st, tol, &[]).report(
            &[4.0 * ga2, -4.0 * pa2],
            &[pt * pt, p3 * p3, -gt * gt, -g3 * g3, -4.0 * xt * xt * (xt - 4.0 * n)],
            &deg,
        ));
        out.push(self.eq("Ga2", &st, tol, &[]).report(
            &[x3 * x3 * ga2],
            &[g3 * g3 * d.xpa2, -pt * pt * d.xa2, -pt * g3 * d.c_a],
            &deg,
        ));
        out.push(self.eq("Ta2", &st, tol, &[]).report(
            &[x3 * x3 * pa2],
            &[p3 * p3 * d.xpa2, -gt * gt * d.xa2, -p3 * gt * d.c_a],
            &deg,
        ));
        out.push(self.eq("TG", &st, tol, &[]).report(
            &[x3 * x3 * pga],
            &[2.0 * p3 * g3 * d.xpa2, -2.0 * pt * gt * d.xa2, -(pt * p3 + gt * g3) * d.c_a],
            &deg,
        ));
        out.push(self.eq("x", &st, self.tol.algebraic_pde, &[]).report(
            &[pt * p3, -gt * g3, -2.0 * xt * x3 * d.f_hat],
            &[],
            &deg,
        ));
        Ok(out)
    }

    /// A𝒜̃T = 4c(UW − n/2), with no finite differences.
    pub fn boundary_toda(&self, st: Stencil) -> Result<ResidualReport> {
        let ctx = self.ctx(st)?;
        let p = ctx.here()?;
        let z = &p.toda;
        let (c, n) = (st.center.c, st.center.n as f64);
        let deg = self.degeneracy(&p, None);
        Ok(self.eq("00", &st, self.tol.algebraic_pde, &[]).report(
            &[c * z.t11, (1.0 + c * c) * z.t12, c * z.t22],
            &[4.0 * c * z.u * z.w, -2.0 * c * n],
            &deg,
        ))
    }

    /// Boundary Toda plus the four second-order equations for U and W.
    pub fn uw_system(&self, st: Stencil) -> Result<Vec<ResidualReport>> {
        let ctx = self.ctx(st)?;
        let p = ctx.here()?;
        let deg = self.degeneracy(&p, None);
        let z = &p.toda;
        let c = st.center.c;
        let [x1, x2] = st.center.xi;
        let mut out = vec![self.boundary_toda(st)?];
        let a2t = z.t11 + 2.0 * c * z.t12 + c * c * z.t22;
        let at2t = c * c * z.t11 + 2.0 * c * z.t12 + z.t22;
        let cases: [(&str, &str, f64, Field, Field, Field); 2] = [
            ("+t", "+s", -1.0, fields::u, fields::u1, fields::u2),
            ("-t", "-s", 1.0, fields::w, fields::w1, fields::w2),
        ];
        for (id_t, id_s, sgn, f, f1, f2) in cases {
            let v = f(&p);
            let v11 = ctx.d_xi1(f1, 0.0, 0.0)?;
            let v12 = ctx.d_xi2(f1, 0.0, 0.0)?;
            let v22 = ctx.d_xi2(f2, 0.0, 0.0)?;
            let dc = (1.0 - c * c) * c * ctx.d_c(f)?;
            let (v1, v2) = (f1(&p), f2(&p));
            out.push(self.eq(id_t, &st, self.tol.fd, &[]).report(
                &[v11, 2.0 * c * v12, c * c * v22],
                &[2.0 * sgn * x1 * v1, 2.0 * sgn * c * c * x2 * v2, -2.0 * sgn * dc, -2.0 * a2t * v],
                &deg,
            ));
            out.push(self.eq(id_s, &st, self.tol.fd, &[]).report(
                &[c * c * v11, 2.0 * c * v12, v22],
                &[2.0 * sgn * c * c * x1 * v1, 2.0 * sgn * x2 * v2, -2.0 * sgn * dc, -2.0 * at2t * v],
                &deg,
            ));
        }
        Ok(out)
    }

    /// A[(𝒜̃₀ − 1)(AT/c) / (A𝒜̃T + 2cn)] = 𝒜̃[(A₀ − 1)(𝒜̃T/c) / (A𝒜̃T + 2cn)].
    pub fn conservation(&self, st: Stencil) -> Result<ResidualReport> {
        let ctx = self.ctx(st)?;
        let p = ctx.here()?;
        let deg = self.degeneracy(&p, None);
        let c = st.center.c;
        let n = st.center.n as f64;
        let [x1, x2] = st.center.xi;
        // ∂c of T₁, T₂ at a shifted point; the 1/c factors are differentiated exactly
        let dc_at = |f: Field, a: f64, b: f64| ctx.d1(&|e| Ok(f(&*ctx.at(a, b, e)?)), st.h_c);
        let psi = |a: f64, b: f64, tilde_op: bool| -> Result<f64> {
            let q = ctx.at(a, b, 0.0)?;
            let z = &q.toda;
            let (t1c, t2c) = (dc_at(fields::t1, a, b)?, dc_at(fields::t2, a, b)?);
            let (y1, y2) = (x1 + a, x2 + b);
            let den = c * z.t11 + (1.0 + c * c) * z.t12 + c * z.t22 + 2.0 * c * n;
            let op = if tilde_op {
                let f = (z.t1 + c * z.t2) / c;
                let fc = (t1c + z.t2 + c * t2c) / c - f / c;
                let f1 = (z.t11 + c * z.t12) / c;
                let f2 = (z.t12 + c * z.t22) / c;
                c * c * y1 * f1 + y2 * f2 - (1.0 - c * c) * c * fc - f
            } else {
                let f = (c * z.t1 + z.t2) / c;
                let fc = (z.t1 + c * t1c + t2c) / c - f / c;
                let f1 = (c * z.t11 + z.t12) / c;
                let f2 = (c * z.t12 + z.t22) / c;
                y1 * f1 + c * c * y2 * f2 - (1.0 - c * c) * c * fc - f
            };
            Ok(op / den)
        };
        let h = st.h_xi;
        let l1 = ctx.d1(&|t| psi(t, 0.0, true), h)?;
        let l2 = ctx.d1(&|t| psi(0.0, t, true), h)?;
        let r1 = ctx.d1(&|t| psi(t, 0.0, false), h)?;
        let r2 = ctx.d1(&|t| psi(0.0, t, false), h)?;
        Ok(self.eq("cons", &st, self.tol.fd, &[]).report(&[l1, c * l2], &[c * r1, r2], &deg))
    }

    /// G₊, G₋ from their T-expressions, with c-derivatives by finite differences.
    fn g_pm_from_t(&self, ctx: &Ctx, p: &PointData) -> Result<(f64, f64)> {
        let z = &p.toda;
        let c = ctx.st.center.c;
        let s2 = p.derived.sigma2;
        let (xp, xm) = (p.derived.xi_plus, p.derived.xi_minus);
        let dpt = z.t1 + z.t2;
        let dmt = z.t1 - z.t2;
        let dpp = z.t11 + 2.0 * z.t12 + z.t22;
        let dmm = z.t11 - 2.0 * z.t12 + z.t22;
        let dpm = z.t11 - z.t22;
        let dc_dp = (1.0 - c * c) * c * ctx.d_c(fields::r_t)?;
        let dc_dm = (1.0 - c * c) * c * ctx.d_c(fields::r_3)?;
        let gp = 0.5 * dpt - 0.25 * xp * dpp - 0.25 * xm * dpm + dc_dp / (2.0 * c)
            - 0.5 * xp * s2 * (dpp - dmm) / (1.0 - s2);
        let gm = 0.5 * dmt - 0.25 * xm * dmm - 0.25 * xp * dpm - dc_dm / (2.0 * c) - 0.5 * xm * (dpp - dmm) / (1.0 - s2);
        Ok((gp, gm))
    }

    /// The fourth-order equation in F, G₊, G₋, and its match with the combination
    /// 2F̂·(Tt3) − (x) of the kernel-side equations (64× the former).
    pub fn fourth_order(&self, st: Stencil) -> Result<Vec<ResidualReport>> {
        let ctx = self.ctx(st)?;
        let p = ctx.here()?;
        let deg = self.degeneracy(&p, None);
        let d = &p.derived;
        let (xp, xm) = (d.xi_plus, d.xi_minus);
        let (gp, gm) = self.g_pm_from_t(&ctx, &p)?;
        let f = fields::f_from_t(&p);
        let dpf = ctx.dp(fields::f_from_t)?;
        let dmf = ctx.dm(fields::f_from_t)?;
        let dpmf = ctx.dpm(fields::f_from_t)?;
        let dpm_t = p.toda.t11 - p.toda.t22;
        let terms = [
            2.0 * f * dpmf,
            -dpf * dmf,
            gp * gm,
            2.0 * f * (xm * gp + xp * gm),
            8.0 * dpm_t * f * f,
        ];
        let r_f4 = self.eq("F4T", &st, self.tol.fd, &[]).report(&terms, &[], &deg);

        let dpxt = ctx.dp(fields::x_t)?;
        let dmxt = ctx.dm(fields::x_t)?;
        let dpmxt = ctx.dpm(fields::x_t)?;
        let fh = d.f_hat;
        let comb = [
            2.0 * fh * dpmxt,
            -dpxt * dmxt,
            d.g_t * d.g_3,
            -2.0 * fh * (xp * d.g_3 + xm * d.g_t),
            -4.0 * d.x_3 * fh * fh,
        ];
        let r_comb = sum(&comb);
        let scaled: Vec<f64> = terms.iter().map(|t| 64.0 * t).collect();
        let scale = max_abs(&comb).max(max_abs(&scaled));
        let diff = 64.0 * r_f4.residual - r_comb;
        let rel = if scale > SCALE_FLOOR { diff.abs() / scale } else { diff.abs() };
        let tol = self.tol.matching;
        let r_match = ResidualReport {
            equation: "F4T~2Fh(Tt3)-(x)".into(),
            center: st.center,
            residual: diff,
            scale,
            relative: rel,
            tolerance: tol,
            pass: rel <= tol,
            status: status_of(rel <= tol),
            note: None,
        };
        Ok(vec![r_f4, r_match])
    }

    /// Highest derivatives taken by finite differences of exact fields:
    /// (Φ_t, Φ_3, D₊A², D₋A²) = (D₊X_t, D₋X_t, D₊A², D₋A²).
    fn fd_top(&self, ctx: &Ctx) -> Result<(f64, f64, f64, f64)> {
        Ok((ctx.dp(fields::x_t)?, ctx.dm(fields::x_t)?, ctx.dp(fields::a2)?, ctx.dm(fields::a2)?))
    }

    pub fn coupled_piv(&self, st: Stencil) -> Result<Vec<ResidualReport>> {
        let ctx = self.ctx(st)?;
        let p = ctx.here()?;
        let deg = self.degeneracy(&p, None);
        let d = &p.derived;
        let (pt, p3, dp, dm) = self.fd_top(&ctx)?;
        let (s2, a2, x3, fh, j) = (d.sigma2, d.a2, d.x_3, d.f_hat, d.j);
        let (gt, g3, ap, am) = (d.g_t, d.g_3, d.a_plus, d.a_minus);
        let tol = self.tol.fd;
        let ga = [Guard::A2, Guard::FHat];
        let mut out = Vec::new();
        out.push(self.eq("Ax", &st, tol, &[Guard::A2]).report(
            &[ap * am],
            &[4.0 * s2 * dp * dm, -8.0 * s2 * x3 * a2 * a2],
            &deg,
        ));
        let common = fh * (2.0 * x3 * x3 + j);
        let pp_t = [pt * pt, -common, -gt * gt];
        let pp_3 = [p3 * p3, -common, -g3 * g3];
        let dd_t = [4.0 * s2 * dp * dp, 2.0 * s2 * a2 * j, -ap * ap];
        let dd_3 = [4.0 * s2 * dm * dm, 2.0 * a2 * j, -am * am];
        let k = 2.0 * s2 * a2;
        let lhs: Vec<f64> = pp_t.iter().map(|v| k * v).collect();
        let m1: Vec<f64> = pp_3.iter().map(|v| -k * v).collect();
        let m2: Vec<f64> = dd_t.iter().map(|v| -fh * v).collect();
        let m3: Vec<f64> = dd_3.iter().map(|v| s2 * fh * v).collect();
        out.push(self.eq("+-:t=3", &st, tol, &ga).report(&lhs, &m1, &deg));
        out.push(self.eq("+-:t=Dt", &st, tol, &ga).report(&lhs, &m2, &deg));
        out.push(self.eq("+-:t=D3", &st, tol, &ga).report(&lhs, &m3, &deg));
        out.push(self.eq("a", &st, tol, &ga).report(
            &[fh * dp * am, -fh * dm * ap],
            &[a2 * g3 * pt, -a2 * gt * p3],
            &deg,
        ));
        out.push(self.eq("PPt+PP3", &st, tol, &[]).report(
            &[pt * pt, p3 * p3, -gt * gt, -g3 * g3, -2.0 * common],
            &[],
            &deg,
        ));
        out.push(self.eq("A2+", &st, tol, &[Guard::A2]).report(
            &[ap * ap, s2 * am * am],
            &[4.0 * s2 * dp * dp, 4.0 * s2 * s2 * dm * dm, 4.0 * s2 * a2 * j],
            &deg,
        ));
        Ok(out)
    }

    pub fn final_four(&self, st: Stencil) -> Result<Vec<ResidualReport>> {
        let ctx = self.ctx(st)?;
        let p = ctx.here()?;
        let d = &p.derived;
        let (pt, p3, dp, dm) = self.fd_top(&ctx)?;
        let k = composites(d, pt, p3, dp, dm);
        let deg = self.degeneracy(&p, Some(&k));
        let (s2, a2) = (d.sigma2, d.a2);
        let (ht, h3) = (d.h_t, d.h_3);
        let l1 = ht * k.p_plus - 2.0 * k.f_3 * h3 * k.p_x;
        let l2 = 2.0 * k.f_t * ht * k.p_x - h3 * k.p_plus;
        let dl = k.delta;
        let tol = self.tol.fd;
        let g = [Guard::A2, Guard::Delta];
        let mut out = Vec::new();
        out.push(self.eq("Axx", &st, tol, &g).report(&[l1 * l2], &[4.0 * dl * dl * k.j_big_a], &deg));
        out.push(self.eq("A+2", &st, tol, &g).report(
            &[l1 * l1],
            &[4.0 * dl * dl * k.j_plus, -8.0 * dl * s2 * a2 * k.p_a],
            &deg,
        ));
        out.push(self.eq("A-2", &st, tol, &g).report(
            &[l2 * l2],
            &[4.0 * dl * dl * k.j_minus, 8.0 * dl * a2 * k.p_a],
            &deg,
        ));
        out.push(self.eq("aa", &st, tol, &g).report(
            &[k.s_3 * l1, -k.s_t * l2],
            &[2.0 * a2 * dl * k.j_a],
            &deg,
        ));
        let ratio = a2 * k.p_a / dl;
        out.push(self.eq("Px", &st, tol, &g).report(
            &[k.p_x * k.p_x],
            &[k.p_hat_a, 2.0 * (ht * ht - s2 * h3 * h3) * ratio],
            &deg,
        ));
        out.push(self.eq("P+", &st, tol, &g).report(
            &[k.p_plus * k.p_plus],
            &[
                4.0 * k.f_t * k.f_3 * k.p_hat_a,
                4.0 * dl * (k.f_t * k.j_plus - k.f_3 * k.j_minus),
                8.0 * (k.f_3 * k.f_3 * h3 * h3 - s2 * k.f_t * k.f_t * ht * ht) * ratio,
            ],
            &deg,
        ));
        out.push(self.eq("P_a", &st, tol, &g).report(
            &[a2 * k.p_a * k.p_a],
            &[2.0 * dl * k.p_a * (dp * dp - s2 * dm * dm), dl * dl * k.i_a],
            &deg,
        ));
        Ok(out)
    }

    pub fn kernel_side(&self, st: Stencil) -> Result<Vec<ResidualReport>> {
        let ctx = self.ctx(st)?;
        let p = ctx.here()?;
        let deg = self.degeneracy(&p, None);
        let d = &p.derived;
        let n = st.center.n as f64;
        let tol = self.tol.fd;
        let (s2, a2, x3, xt, fh) = (d.sigma2, d.a2, d.x_3, d.x_t, d.f_hat);
        let (gt, g3, ap, am) = (d.g_t, d.g_3, d.a_plus, d.a_minus);
        let (rt, r3) = (d.r_tt, d.r_33);
        let (xp, xm) = (d.xi_plus, d.xi_minus);
        let (pt, p3, dp, dm) = self.fd_top(&ctx)?;
        let dpx3 = ctx.dp(fields::x_3)?;
        let dmx3 = ctx.dm(fields::x_3)?;
        let mut out = Vec::new();

        out.push(self.eq("TtX", &st, tol, &[]).report(&[pt], &[dmx3, -2.0 * dp], &deg));
        out.push(self.eq("T3X", &st, tol, &[]).report(&[p3], &[dpx3, -2.0 * s2 * dm], &deg));

        let dpmx3 = ctx.dpm(fields::x_3)?;
        out.push(self.eq("S", &st, tol, &[]).report(
            &[x3 * dpmx3, -dpx3 * dmx3, rt * r3, -(x3 + xp * xm) * x3 * x3],
            &[],
            &deg,
        ));
        let dpmxt = ctx.dpm(fields::x_t)?;
        out.push(self.eq("Tt3", &st, tol, &[]).report(
            &[dpmxt],
            &[xm * gt, xp * g3, x3 * (3.0 * xt - 8.0 * n)],
            &deg,
        ));
        let dppxt = ctx.dpp(fields::x_t)?;
        let dmmxt = ctx.dmm(fields::x_t)?;
        out.push(self.eq("+Tt", &st, tol, &[Guard::FHat]).report(
            &[2.0 * fh * x3 * dppxt],
            &[2.0 * fh * dpx3 * pt, -2.0 * fh * rt * g3, 2.0 * fh * xp * x3 * gt, x3 * pt * pt, -x3 * gt * gt],
            &deg,
        ));
        out.push(self.eq("-T3", &st, tol, &[Guard::FHat]).report(
            &[2.0 * fh * x3 * dmmxt],
            &[2.0 * fh * dmx3 * p3, -2.0 * fh * r3 * gt, 2.0 * fh * xm * x3 * g3, x3 * p3 * p3, -x3 * g3 * g3],
            &deg,
        ));
        let lhs_dda = s2 * (ctx.dpp(fields::x_3)? - ctx.dmm(fields::x_3)?) / (1.0 - s2);
        let mid_dda = -2.0 * s2 * ctx.dpm(fields::a2)?;
        let rhs_dda = [-6.0 * s2 * x3 * a2, xm * ap, s2 * xp * am];
        out.push(self.eq("DDA:l=m", &st, tol, &[]).report(&[lhs_dda], &[mid_dda], &deg));
        out.push(self.eq("DDA:m=r", &st, tol, &[]).report(&[mid_dda], &rhs_dda, &deg));
        out.push(self.eq("+B", &st, tol, &[Guard::FHat]).report(
            &[8.0 * fh * d.xpa2, 2.0 * fh * x3 * x3],
            &[pt * pt, -gt * gt],
            &deg,
        ));
        out.push(self.eq("-B", &st, tol, &[Guard::FHat]).report(
            &[8.0 * fh * d.xa2, 2.0 * fh * x3 * x3],
            &[p3 * p3, -g3 * g3],
            &deg,
        ));
        out.push(self.eq("A+", &st, tol, &[Guard::A2]).report(
            &[16.0 * s2 * a2 * d.xpa2],
            &[ap * ap, -4.0 * s2 * dp * dp],
            &deg,
        ));
        out.push(self.eq("A-", &st, tol, &[Guard::A2]).report(
            &[16.0 * a2 * d.xa2],
            &[am * am, -4.0 * s2 * dm * dm],
            &deg,
        ));
        out.push(self.eq("Ca", &st, tol, &[Guard::A2]).report(&[4.0 * a2 * d.c_a], &[-ap * dm, am * dp], &deg));
        let dpgt = ctx.dp(fields::g_t)?;
        let dmg3 = ctx.dm(fields::g_3)?;
        let dmgt = ctx.dm(fields::g_t)?;
        let dpg3 = ctx.dp(fields::g_3)?;
        out.push(self.eq("+Gt", &st, tol, &[]).report(
            &[x3 * dpgt],
            &[dpx3 * gt, -rt * p3, xp * x3 * pt],
            &deg,
        ));
        out.push(self.eq("-G3", &st, tol, &[]).report(
            &[x3 * dmg3],
            &[dmx3 * g3, -r3 * pt, xm * x3 * p3],
            &deg,
        ));
        out.push(self.eq("-Gt", &st, tol, &[Guard::FHat]).report(
            &[2.0 * fh * dmgt],
            &[-(g3 - 2.0 * xm * fh) * pt, (gt + 2.0 * xp * fh) * p3],
            &deg,
        ));
        out.push(self.eq("+G3", &st, tol, &[Guard::FHat]).report(
            &[2.0 * fh * dpg3],
            &[(g3 + 2.0 * xm * fh) * pt, -(gt - 2.0 * xp * fh) * p3],
            &deg,
        ));
        out.push(self.eq("DR:-Rt", &st, tol, &[]).report(
            &[ctx.dm(fields::big_r_t)?],
            &[xp * dpx3, -2.0 * x3],
            &deg,
        ));
        out.push(self.eq("DR:+R3", &st, tol, &[]).report(
            &[ctx.dp(fields::big_r_3)?],
            &[xm * dmx3, -2.0 * x3],
            &deg,
        ));
        out.push(self.eq("+At", &st, tol, &[Guard::A2]).report(
            &[x3 * ctx.dp(fields::a_plus)?],
            &[dpx3 * ap, 2.0 * s2 * rt * dm, -2.0 * s2 * xp * x3 * dp],
            &deg,
        ));
        out.push(self.eq("-A3", &st, tol, &[Guard::A2]).report(
            &[x3 * ctx.dm(fields::a_minus)?],
            &[dmx3 * am, 2.0 * r3 * dp, -2.0 * xm * x3 * dm],
            &deg,
        ));
        Ok(out)
    }

    /// σ₃[r_a, D±r_a] against ∓2c∂_c of r_t, r_3.
    pub fn ccom(&self, st: Stencil) -> Result<Vec<ResidualReport>> {
        let ctx = self.ctx(st)?;
        let p = ctx.here()?;
        let deg = self.degeneracy(&p, None);
        let d = &p.derived;
        let r = &p.endpoint.r;
        let c = st.center.c;
        let com = |m: &Matrix2<f64>| r[(0, 1)] * m[(1, 0)] - m[(0, 1)] * r[(1, 0)];
        let crt = c * ctx.d_c(fields::r_t)?;
        let cr3 = c * ctx.d_c(fields::r_3)?;
        let tol = self.tol.ccom;
        Ok(vec![
            self.eq("ccom+", &st, tol, &[]).report(&[com(&d.dr_plus)], &[-2.0 * crt], &deg),
            self.eq("ccom-", &st, tol, &[]).report(&[com(&d.dr_minus)], &[2.0 * cr3], &deg),
        ])
    }

    /// Variable correspondences between the Toda-side and kernel-side pictures.
    pub fn correspondence(&self, st: Stencil) -> Result<Vec<ResidualReport>> {
        let ctx = self.ctx(st)?;
        let p = ctx.here()?;
        let deg = self.degeneracy(&p, None);
        let d = &p.derived;
        let z = &p.toda;
        let c = st.center.c;
        let (s2, a2, xp, xm) = (d.sigma2, d.a2, d.xi_plus, d.xi_minus);
        let tol_id = self.tol.identity;
        let tol = self.tol.fd;
        let uw = z.u * z.w;
        let (gp, gm) = self.g_pm_from_t(&ctx, &p)?;
        let gp_uw = z.w * (z.u1 + z.u2) - z.u * (z.w1 + z.w2);
        let gm_uw = z.w * (z.u1 - z.u2) - z.u * (z.w1 - z.w2);
        let crt = (1.0 - c * c) * ctx.d_c(fields::r_t)?;
        let cr3 = (1.0 - c * c) * ctx.d_c(fields::r_3)?;
        Ok(vec![
            self.eq("0+", &st, tol_id, &[]).report(&[uw], &[fields::f_from_t(&p)], &deg),
            self.eq("F=-Fh/8", &st, tol_id, &[]).report(&[uw], &[-d.f_hat / 8.0], &deg),
            self.eq("G+=Gt/8", &st, tol_id, &[]).report(&[gp_uw], &[d.g_t / 8.0], &deg),
            self.eq("G-=G3/8", &st, tol_id, &[]).report(&[gm_uw], &[d.g_3 / 8.0], &deg),
            self.eq("G+", &st, tol, &[]).report(&[gp_uw], &[gp], &deg),
            self.eq("G-", &st, tol, &[]).report(&[gm_uw], &[gm], &deg),
            self.eq("A+c", &st, tol, &[]).report(&[d.a_plus], &[4.0 * crt, -4.0 * xp * s2 * a2], &deg),
            self.eq("A-c", &st, tol, &[]).report(&[d.a_minus], &[-4.0 * cr3, -4.0 * xm * a2], &deg),
        ])
    }
}

fn status_of(pass: bool) -> Status {
    if pass {
        Status::Pass
    } else {
        Status::Fail
    }
}

/// Step multipliers of the Richardson ladder, coarsest first.
pub const RICHARDSON_LADDER: [f64; 6] = [32.0, 16.0, 8.0, 4.0, 2.0, 1.0];
pub const NOMINAL_ORDER: f64 = 4.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RichardsonFit {
    pub equation: String,
    /// log₂ of successive residual ratios along the ladder.
    pub slopes: Vec<f64>,
    /// Mean of the two consecutive slopes that agree best: the asymptotic range,
    /// before truncation error sinks into the quadrature floor. `None` for
    /// residuals that do not depend on the step.
    pub order: Option<f64>,
}

/// Observed convergence order of every residual of the given families.
pub fn richardson_all(suite: &Suite, st: Stencil, families: &[Family]) -> Result<Vec<RichardsonFit>> {
    let mut levels = Vec::new();
    for k in RICHARDSON_LADDER {
        let s = st.scaled(k);
        if s.validate().is_ok() {
            levels.push(suite.run(s, families)?);
        }
    }
    if levels.len() < 3 {
        return Err(Error::Input("stencil too close to the parameter boundary for a Richardson ladder".into()));
    }
    let n_eq = levels[0].len();
    Ok((0..n_eq)
        .map(|i| {
            let res: Vec<f64> = levels.iter().map(|l| l[i].residual).collect();
            let slopes: Vec<f64> = res.windows(2).map(|w| (w[0].abs() / w[1].abs()).log2()).collect();
            let fd_free = res.windows(2).all(|w| (w[0] - w[1]).abs() <= 1e-3 * w[0].abs().max(1e-300));
            let order = if fd_free {
                None
            } else {
                slopes
                    .windows(2)
                    .filter(|w| w[0].is_finite() && w[1].is_finite())
                    .min_by(|a, b| (a[0] - a[1]).abs().total_cmp(&(b[0] - b[1]).abs()))
                    .map(|w| 0.5 * (w[0] + w[1]))
            };
            RichardsonFit { equation: levels[0][i].equation.clone(), slopes, order }
        })
        .collect())
}

/// 27 points: n ∈ {2, 3, 5}, c ∈ {0.3, 0.5, 0.7}, and three endpoint pairs
/// placed relative to the soft edge √(2n) so P stays moderate for every n.
pub fn standard_grid() -> Vec<Center> {
    let mut out = Vec::new();
    for n in [2usize, 3, 5] {
        let shift = (2.0 * n as f64).sqrt() - 2.0;
        for c in [0.3, 0.5, 0.7] {
            for (a, b) in [(0.0, 0.3), (-0.5, 0.7), (0.8, -0.4)] {
                out.push(Center::new(n, c, a + shift, b + shift));
            }
        }
    }
    out
}

/// One-matrix quantities at ξ from a scalar solve: R = d ln P₁/dξ and its first
/// two derivatives by finite differences of the exact R field.
#[derive(Debug, Clone, Copy)]
pub struct OneMatrixPiv {
    pub r: f64,
    pub r1: f64,
    pub r2: f64,
    /// R''² + 4R'²(R' + 2n) − 4(ξR' − R)²; zero on the GUE solution.
    pub piv: f64,
    pub piv_scale: f64,
}

pub fn one_matrix_piv(n: usize, xi: f64, h: f64, m: usize) -> Result<OneMatrixPiv> {
    let r = |x: f64| OneMatrixSolution::solve(n, x, m).map(|s| s.r);
    let r0 = r(xi)?;
    let (rp, rm, rpp, rmm) = (r(xi + h)?, r(xi - h)?, r(xi + 2.0 * h)?, r(xi - 2.0 * h)?);
    let r1 = (-rpp + 8.0 * rp - 8.0 * rm + rmm) / (12.0 * h);
    let r2 = (-rpp + 16.0 * rp - 30.0 * r0 + 16.0 * rm - rmm) / (12.0 * h * h);
    let nf = n as f64;
    let terms = [r2 * r2, 4.0 * r1 * r1 * (r1 + 2.0 * nf), -4.0 * (xi * r1 - r0).powi(2)];
    Ok(OneMatrixPiv { r: r0, r1, r2, piv: sum(&terms), piv_scale: max_abs(&terms) })
}

/// Coupled-system quantities at ξ₂ far out compared with their one-matrix limits:
/// Φ_t, Φ_3 → −2R'', X_t, X_3 → −2R', H_t, H_3 → 4(R − ξ₁R'), and the
/// Painlevé-type composites → 4·(one-matrix expression) (P₊ → 8F̂·(…)).
pub fn piv_limit(suite: &Suite, st: Stencil) -> Result<Vec<ResidualReport>> {
    let ctx = suite.ctx(st)?;
    let p = ctx.here()?;
    let deg = suite.degeneracy(&p, None);
    let d = &p.derived;
    let n = st.center.n;
    let one = one_matrix_piv(n, st.center.xi[0], st.h_xi, ctx.ev.m)?;
    let (pt, p3, dp, dm) = suite.fd_top(&ctx)?;
    let k = composites(d, pt, p3, dp, dm);
    let tol = TOL_CCOM;
    let eq = |id: &'static str| Eq { id, center: st.center, tol, guards: &[] };
    let xi1 = st.center.xi[0];
    let h_lim = 4.0 * (one.r - xi1 * one.r1);
    let fh = d.f_hat;
    let piv4 = 4.0 * one.piv;
    let common = fh * (2.0 * d.x_3 * d.x_3 + d.j);
    let pp_t = pt * pt - common - d.g_t * d.g_t;
    let pp_3 = p3 * p3 - common - d.g_3 * d.g_3;
    let pp_x = pt * p3 - 2.0 * d.x_t * d.x_3 * fh - d.g_t * d.g_3;
    let sc = 4.0 * one.piv_scale;
    let with_scale = |r: ResidualReport, s: f64| {
        let s = r.scale.max(s);
        let rel = if s > SCALE_FLOOR { r.residual.abs() / s } else { r.residual.abs() };
        ResidualReport { scale: s, relative: rel, pass: rel <= tol, status: status_of(rel <= tol), ..r }
    };
    Ok(vec![
        eq("lim:Phi_t").report(&[pt], &[-2.0 * one.r2], &deg),
        eq("lim:Phi_3").report(&[p3], &[-2.0 * one.r2], &deg),
        eq("lim:X_t").report(&[d.x_t], &[-2.0 * one.r1], &deg),
        eq("lim:X_3").report(&[d.x_3], &[-2.0 * one.r1], &deg),
        eq("lim:H_t").report(&[d.h_t], &[h_lim], &deg),
        eq("lim:H_3").report(&[d.h_3], &[h_lim], &deg),
        with_scale(eq("lim:P_t").report(&[pp_t], &[piv4], &deg), sc),
        with_scale(eq("lim:P_3").report(&[pp_3], &[piv4], &deg), sc),
        with_scale(eq("lim:P_x").report(&[pp_x], &[piv4], &deg), sc),
        with_scale(eq("lim:Px").report(&[k.p_x], &[piv4], &deg), sc),
        with_scale(eq("lim:P+").report(&[k.p_plus], &[2.0 * fh * piv4], &deg), 2.0 * fh.abs() * sc),
    ])
}

/// ln P change when the quadrature order is doubled from m/2 to m.
pub fn quadrature_change(center: Center, m: usize) -> Result<f64> {
    let p = center.params()?;
    let a = FredholmSolution::solve(p, m / 2)?.log_prob;
    let b = FredholmSolution::solve(p, m)?.log_prob;
    Ok((a - b).abs())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fredholm::DEFAULT_M;

    fn run(center: Center, fam: Family) -> Vec<ResidualReport> {
        let ev = Evaluator::new(DEFAULT_M);
        Suite::new(&ev).run(Stencil::new(center), &[fam]).unwrap()
    }

    fn assert_all_pass(v: &[ResidualReport]) {
        for r in v {
            assert!(r.status != Status::Fail, "{} failed: {:?}", r.equation, r);
        }
    }

    #[test]
    fn fd_free_families_pass() {
        let c = Center::new(2, 0.5, 0.0, 0.3);
        assert_all_pass(&run(c, Family::Identities));
        assert_all_pass(&run(c, Family::BoundaryToda));
    }

    #[test]
    fn fd_families_pass() {
        for c in [Center::new(2, 0.5, 0.0, 0.3), Center::new(3, 0.3, -0.5, 0.7)] {
            for fam in Family::ALL {
                assert_all_pass(&run(c, fam));
            }
        }
    }

    #[test]
    fn empty_constraint_is_trivial() {
        let c = Center::new(2, 0.5, 12.0, 12.0);
        let r = run(c, Family::FourthOrder);
        assert!(r[0].residual.abs() <= 1e-10);
        let r = run(c, Family::KernelSide);
        let dda = r.iter().find(|r| r.equation == "DDA:m=r").unwrap();
        assert!(dda.residual.abs() <= 1e-9);
        let toda = run(c, Family::BoundaryToda);
        assert!(toda[0].residual.abs() <= 1e-9);
        for r in run(c, Family::Ccom) {
            assert!(r.residual.abs() <= 1e-9);
        }
    }

    #[test]
    fn guards_skip_degenerate_points() {
        let c = Center::new(2, 0.5, 0.2, 12.0);
        let r = run(c, Family::FinalFour);
        assert!(r.iter().all(|r| r.status == Status::SkippedDegenerate));
    }

    #[test]
    fn richardson_orders() {
        let ev = Evaluator::new(DEFAULT_M);
        let s = Suite::new(&ev);
        let st = Stencil::new(Center::new(2, 0.5, 0.0, 0.3));
        let fits = richardson_all(&s, st, &[Family::UwSystem, Family::KernelSide]).unwrap();
        let toda = fits.iter().find(|f| f.equation == "00").unwrap();
        assert_eq!(toda.order, None);
        let s_eq = fits.iter().find(|f| f.equation == "S").unwrap();
        assert!((s_eq.order.unwrap() - NOMINAL_ORDER).abs() < 0.3, "{s_eq:?}");
    }

    #[test]
    fn second_order_stencils_converge_at_second_order() {
        let ev = Evaluator::new(DEFAULT_M);
        let s = Suite::new(&ev);
        let mut st = Stencil::new(Center::new(2, 0.5, 0.0, 0.3));
        st.order = 2;
        let fits = richardson_all(&s, st, &[Family::KernelSide]).unwrap();
        let f = fits.iter().find(|f| f.equation == "Tt3").unwrap();
        assert!((f.order.unwrap() - 2.0).abs() < 0.3, "{f:?}");
    }

    #[test]
    fn grid_has_27_points() {
        let g = standard_grid();
        assert_eq!(g.len(), 27);
        assert!(g.iter().all(|c| c.params().is_ok()));
    }

    proptest::proptest! {
        #[test]
        fn stencils_are_exact_on_low_degree_polynomials(
            a in -3.0f64..3.0, b in -3.0f64..3.0, k in -3.0f64..3.0, q in -3.0f64..3.0, e in -1.0f64..1.0, h in 0.01f64..0.5
        ) {
            let ev = Evaluator::new(DEFAULT_M);
            for order in [2usize, 4] {
                let mut st = Stencil::new(Center::new(2, 0.5, 0.0, 0.0));
                st.order = order;
                let ctx = Ctx { ev: &ev, st };
                // order 2 is exact on quadratics, order 4 on quartics (cubics for the second derivative stencil's error term)
                let deg_e = if order == 4 { e } else { 0.0 };
                let f = |t: f64| Ok(a + b * t + k * t * t + q * deg_e * t.powi(3) + deg_e * t.powi(4));
                let d1 = ctx.d1(&f, h).unwrap();
                let d2 = ctx.d2(&f, h).unwrap();
                proptest::prop_assert!((d1 - b).abs() < 1e-9 * (1.0 + 1.0 / h));
                proptest::prop_assert!((d2 - 2.0 * k).abs() < 1e-9 * (1.0 + 1.0 / (h * h)));
            }
        }
    }

    #[test]
    fn stencil_validation() {
        let ev = Evaluator::new(DEFAULT_M);
        let s = Suite::new(&ev);
        let st = Stencil::new(Center::new(2, 0.001, 0.0, 0.0));
        assert!(s.conservation(st).is_err());
        let mut st = Stencil::new(Center::new(2, 0.5, 0.0, 0.0));
        st.order = 3;
        assert!(s.conservation(st).is_err());
    }
}
