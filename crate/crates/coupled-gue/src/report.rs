//! Run configuration, the three commands, and JSON/CSV emission.

use crate::error::{input, Error, Result};
use crate::fredholm::{FredholmSolution, DEFAULT_M};
use crate::kernel::KernelParams;
use crate::mc::estimate_joint;
use crate::observables::PointData;
use crate::residuals::{
    Center, Evaluator, Family, ResidualReport, Stencil, Status, Suite, Tolerances, DEFAULT_H_C, DEFAULT_H_XI,
};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::path::PathBuf;
use std::str::FromStr;

pub const DEFAULT_XI: [f64; 2] = [0.0, 0.3];
pub const DEFAULT_SAMPLES: usize = 200_000;
pub const MC_SIGMAS: f64 = 4.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Command {
    Prob,
    Scan,
    Verify,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Json,
    Csv,
}

impl FromStr for Format {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "json" => Ok(Format::Json),
            "csv" => Ok(Format::Csv),
            _ => input(format!("unknown format {s:?}, expected json or csv")),
        }
    }
}

/// Inclusive uniform grid "start:stop:steps".
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub start: f64,
    pub stop: f64,
    pub steps: usize,
}

impl GridSpec {
    pub fn points(&self) -> Vec<f64> {
        if self.steps == 1 {
            return vec![self.start];
        }
        let h = (self.stop - self.start) / (self.steps - 1) as f64;
        (0..self.steps).map(|k| self.start + k as f64 * h).collect()
    }
}

impl FromStr for GridSpec {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(':').collect();
        let bad = || Error::Input(format!("grid must look like start:stop:steps, got {s:?}"));
        if parts.len() != 3 {
            return Err(bad());
        }
        let start: f64 = parts[0].trim().parse().map_err(|_| bad())?;
        let stop: f64 = parts[1].trim().parse().map_err(|_| bad())?;
        let steps: usize = parts[2].trim().parse().map_err(|_| bad())?;
        if steps == 0 || !start.is_finite() || !stop.is_finite() {
            return Err(bad());
        }
        Ok(GridSpec { start, stop, steps })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub command: Command,
    pub n: usize,
    pub c: Vec<f64>,
    pub xi: Option<[f64; 2]>,
    pub grid: Option<GridSpec>,
    pub quad_m: usize,
    pub fd_h: f64,
    pub fd_hc: f64,
    /// Overrides the tolerance of finite-difference residuals.
    pub tol: Option<f64>,
    pub equations: Option<Vec<String>>,
    pub mc: bool,
    pub samples: usize,
    pub seed: u64,
    pub out: Option<PathBuf>,
    pub format: Format,
}

impl RunConfig {
    pub fn new(command: Command, n: usize, c: f64) -> Self {
        RunConfig {
            command,
            n,
            c: vec![c],
            xi: None,
            grid: None,
            quad_m: DEFAULT_M,
            fd_h: DEFAULT_H_XI,
            fd_hc: DEFAULT_H_C,
            tol: None,
            equations: None,
            mc: false,
            samples: DEFAULT_SAMPLES,
            seed: 0,
            out: None,
            format: Format::Json,
        }
    }

    /// Endpoint pairs: the grid squared if given, else the single pair.
    pub fn endpoints(&self) -> Vec<[f64; 2]> {
        match &self.grid {
            Some(g) => {
                let pts = g.points();
                pts.iter().flat_map(|a| pts.iter().map(move |b| [*a, *b])).collect()
            }
            None => vec![self.xi.unwrap_or(DEFAULT_XI)],
        }
    }

    pub fn centers(&self) -> Vec<Center> {
        let mut v: Vec<Center> = self
            .c
            .iter()
            .flat_map(|c| self.endpoints().into_iter().map(move |xi| Center::new(self.n, *c, xi[0], xi[1])))
            .collect();
        v.sort_by(|a, b| sort_key(a).partial_cmp(&sort_key(b)).expect("finite parameters"));
        v
    }

    pub fn tolerances(&self) -> Tolerances {
        let mut t = Tolerances::default();
        if let Some(v) = self.tol {
            t.fd = v;
        }
        t
    }

    pub fn validate(&self) -> Result<()> {
        if self.c.is_empty() {
            return input("at least one c is required");
        }
        for c in &self.c {
            KernelParams::new(self.n, *c, 0.0, 0.0)?;
        }
        if let Some(xi) = self.xi {
            KernelParams::new(self.n, self.c[0], xi[0], xi[1])?;
        }
        if let Some(t) = self.tol {
            if !(t > 0.0) {
                return input(format!("tolerance must be positive, got {t}"));
            }
        }
        Ok(())
    }
}

fn sort_key(c: &Center) -> (usize, f64, f64, f64) {
    (c.n, c.c, c.xi[0], c.xi[1])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbRow {
    pub n: usize,
    pub c: f64,
    pub xi1: f64,
    pub xi2: f64,
    pub p: f64,
    pub ln_p: f64,
    pub r11: f64,
    pub r22: f64,
}

pub fn cmd_prob(cfg: &RunConfig) -> Result<Vec<ProbRow>> {
    cfg.validate()?;
    cfg.centers()
        .par_iter()
        .map(|c| {
            let s = FredholmSolution::solve(KernelParams::new(c.n, c.c, c.xi[0], c.xi[1])?, cfg.quad_m)?;
            let e = s.endpoint_data()?;
            Ok(ProbRow {
                n: c.n,
                c: c.c,
                xi1: c.xi[0],
                xi2: c.xi[1],
                p: s.prob(),
                ln_p: s.log_prob,
                r11: e.r[(0, 0)],
                r22: e.r[(1, 1)],
            })
        })
        .collect()
}

/// One scan row: P and the scalar derived quantities at a point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanRow {
    pub n: usize,
    pub c: f64,
    pub xi1: f64,
    pub xi2: f64,
    pub p: f64,
    pub ln_p: f64,
    pub r_t: f64,
    pub r_3: f64,
    pub x_t: f64,
    pub x_3: f64,
    pub phi_t: f64,
    pub phi_3: f64,
    pub g_t: f64,
    pub g_3: f64,
    pub h_t: f64,
    pub h_3: f64,
    pub a2: f64,
    pub a_plus: f64,
    pub a_minus: f64,
    pub f_hat: f64,
    pub j: f64,
    pub u: f64,
    pub w: f64,
    pub t: f64,
}

impl ScanRow {
    fn from_point(p: &PointData) -> Self {
        let d = &p.derived;
        let k = &p.params;
        ScanRow {
            n: k.n,
            c: k.c,
            xi1: k.xi[0],
            xi2: k.xi[1],
            p: p.log_prob.exp(),
            ln_p: p.log_prob,
            r_t: d.r_t,
            r_3: d.r_3,
            x_t: d.x_t,
            x_3: d.x_3,
            phi_t: d.phi_t,
            phi_3: d.phi_3,
            g_t: d.g_t,
            g_3: d.g_3,
            h_t: d.h_t,
            h_3: d.h_3,
            a2: d.a2,
            a_plus: d.a_plus,
            a_minus: d.a_minus,
            f_hat: d.f_hat,
            j: d.j,
            u: p.toda.u,
            w: p.toda.w,
            t: p.toda.t,
        }
    }
}

pub fn cmd_scan(cfg: &RunConfig) -> Result<Vec<ScanRow>> {
    cfg.validate()?;
    cfg.centers()
        .par_iter()
        .map(|c| {
            let p = PointData::compute(KernelParams::new(c.n, c.c, c.xi[0], c.xi[1])?, cfg.quad_m)?;
            Ok(ScanRow::from_point(&p))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McRow {
    pub n: usize,
    pub c: f64,
    pub xi1: f64,
    pub xi2: f64,
    pub p_fredholm: f64,
    pub p_hat: f64,
    pub stderr: f64,
    pub n_samples: usize,
    pub seed: u64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyOutput {
    pub config: RunConfig,
    pub reports: Vec<ResidualReport>,
    pub mc: Vec<McRow>,
    pub all_pass: bool,
}

fn family_name(f: Family) -> String {
    serde_json::to_value(f).ok().and_then(|v| v.as_str().map(str::to_string)).unwrap_or_default()
}

/// Selection by family name (e.g. "ccom", "final-four") or equation id (e.g. "x", "Ax").
fn selected(cfg: &RunConfig, fam: Family, eq: &str) -> bool {
    match &cfg.equations {
        None => true,
        Some(list) => list.iter().any(|s| s == eq || *s == family_name(fam)),
    }
}

pub fn cmd_verify(cfg: &RunConfig) -> Result<VerifyOutput> {
    cfg.validate()?;
    let ev = Evaluator::new(cfg.quad_m);
    let mut suite = Suite::new(&ev);
    suite.tol = cfg.tolerances();
    let per_center: Vec<Result<Vec<ResidualReport>>> = cfg
        .centers()
        .par_iter()
        .map(|c| {
            let st = Stencil::new(*c).with_steps(cfg.fd_h, cfg.fd_hc);
            let mut out = Vec::new();
            for fam in Family::ALL {
                let reports = suite.run(st, &[fam])?;
                out.extend(reports.into_iter().filter(|r| selected(cfg, fam, &r.equation)));
            }
            Ok(out)
        })
        .collect();
    let mut reports = Vec::new();
    for r in per_center {
        reports.extend(r?);
    }
    let mut mc = Vec::new();
    if cfg.mc {
        for c in cfg.centers() {
            let s = FredholmSolution::solve(KernelParams::new(c.n, c.c, c.xi[0], c.xi[1])?, cfg.quad_m)?;
            let e = estimate_joint(c.n, c.c, c.xi, cfg.samples, cfg.seed)?;
            let p = s.prob();
            mc.push(McRow {
                n: c.n,
                c: c.c,
                xi1: c.xi[0],
                xi2: c.xi[1],
                p_fredholm: p,
                p_hat: e.p_hat,
                stderr: e.stderr,
                n_samples: e.n_samples,
                seed: e.seed,
                pass: (e.p_hat - p).abs() <= MC_SIGMAS * e.stderr.max(1.0 / e.n_samples as f64),
            });
        }
    }
    let all_pass = reports.iter().all(|r| r.status != Status::Fail) && mc.iter().all(|m| m.pass);
    Ok(VerifyOutput { config: cfg.clone(), reports, mc, all_pass })
}

pub fn to_json<T: Serialize>(v: &T) -> Result<String> {
    serde_json::to_string_pretty(v).map_err(|e| Error::Numerical(format!("serialization failed: {e}")))
}

pub fn to_csv<T: Serialize>(rows: &[T]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).map_err(|e| Error::Numerical(format!("csv: {e}")))?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Numerical(format!("csv: {e}")))?;
    String::from_utf8(bytes).map_err(|e| Error::Numerical(format!("csv: {e}")))
}

/// Flat residual row for CSV.
#[derive(Debug, Clone, Serialize)]
struct ReportRow<'a> {
    equation: &'a str,
    n: usize,
    c: f64,
    xi1: f64,
    xi2: f64,
    residual: f64,
    scale: f64,
    relative: f64,
    tolerance: f64,
    pass: bool,
    status: Status,
}

pub fn verify_csv(out: &VerifyOutput) -> Result<String> {
    let rows: Vec<ReportRow> = out
        .reports
        .iter()
        .map(|r| ReportRow {
            equation: &r.equation,
            n: r.center.n,
            c: r.center.c,
            xi1: r.center.xi[0],
            xi2: r.center.xi[1],
            residual: r.residual,
            scale: r.scale,
            relative: r.relative,
            tolerance: r.tolerance,
            pass: r.pass,
            status: r.status,
        })
        .collect();
    let mut s = to_csv(&rows)?;
    if !out.mc.is_empty() {
        s.push('\n');
        s.push_str(&to_csv(&out.mc)?);
    }
    Ok(s)
}
