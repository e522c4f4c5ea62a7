//! Discrete minimization of the regularized energy on a disk.
//!
//! The objective is
//!
//! ```text
//! J(u) = ½ Σ_{edges e touching an unknown} (Δ_e u)² + h² Σ_{unknown i} F_reg(u_i),
//! ```
//!
//! the full-weight edge-trapezoid form of `∫ ½|∇u|² + F_reg(u)`, so that
//! `∂J/∂u_i = h² (-Δ_h u_i + f_reg(u_i))` with the five-point Laplacian.
//! `F_reg` is split into the kink `κ₊ t₊ + κ₋ t₋` and a `C¹` remainder; the
//! kink is handled by an exact proximal step and the remainder by gradient
//! steps with Barzilai-Borwein lengths and monotone Armijo backtracking.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::{DiskMask, Grid, NodeClass, Point, ScalarField};
use crate::harmonic::harmonic_series;
use crate::moduli::{Potential, ScaleParams};

/// Dirichlet data presets.
#[derive(Clone, Debug)]
pub enum BoundaryData {
    /// `A Re(zᵏ)`, whose trace on the unit circle is `A cos kθ`.
    Cosine { k: u32, amplitude: f64 },
    /// `½ λ₊ (x₁ - c)₊² - ½ λ₋ (x₁ - c)₋²`.
    Classical1d { c: f64 },
    /// Node values taken from a field on the same grid.
    Explicit(ScalarField),
}

impl BoundaryData {
    /// Value of the data at a node.
    pub fn value_at(&self, p: &ScaleParams, grid: &Grid, i: usize, j: usize) -> Result<f64> {
        let x = grid.node(i, j);
        Ok(match self {
            BoundaryData::Cosine { k, amplitude } => amplitude * re_pow(x, *k),
            BoundaryData::Classical1d { c } => {
                let t = x[0] - c;
                if t > 0.0 {
                    0.5 * p.lambda_plus * t * t
                } else {
                    -0.5 * p.lambda_minus * t * t
                }
            }
            BoundaryData::Explicit(f) => {
                if f.grid() != grid {
                    return Err(Error::GridMismatch(format!(
                        "explicit boundary data has N={}, solve grid has N={}",
                        f.grid().n(),
                        grid.n()
                    )));
                }
                f.at(i, j)
            }
        })
    }

    /// Trace on the circle of radius `rho` at `M` equally spaced angles.
    fn trace(&self, p: &ScaleParams, rho: f64, m: usize) -> Result<Vec<f64>> {
        (0..m)
            .map(|k| {
                let (s, c) = (2.0 * PI * k as f64 / m as f64).sin_cos();
                let x = [rho * c, rho * s];
                Ok(match self {
                    BoundaryData::Cosine { k, amplitude } => amplitude * re_pow(x, *k),
                    BoundaryData::Classical1d { c } => {
                        let t = x[0] - c;
                        if t > 0.0 {
                            0.5 * p.lambda_plus * t * t
                        } else {
                            -0.5 * p.lambda_minus * t * t
                        }
                    }
                    BoundaryData::Explicit(f) => f.sample(x)?.0,
                })
            })
            .collect()
    }
}

fn re_pow(x: Point, k: u32) -> f64 {
    let (mut re, mut im) = (1.0, 0.0);
    for _ in 0..k {
        let t = re * x[0] - im * x[1];
        im = re * x[1] + im * x[0];
        re = t;
    }
    re
}

#[derive(Clone, Debug)]
pub struct SolveConfig {
    /// Functional parameters; `params.eps` is overridden by the schedule.
    pub params: ScaleParams,
    pub eps_schedule: Vec<f64>,
    pub max_iters: usize,
    pub grad_tol: f64,
    pub boundary: BoundaryData,
    /// Radius of the solve disk; nodes strictly inside are unknowns.
    pub domain_radius: f64,
    /// Starting iterate; the harmonic extension of the data when absent.
    pub initial: Option<ScalarField>,
}

impl SolveConfig {
    pub const DEFAULT_SCHEDULE: [f64; 5] = [1e-2, 1e-3, 1e-4, 1e-5, 1e-6];

    pub fn new(params: ScaleParams, boundary: BoundaryData) -> Self {
        SolveConfig {
            params,
            eps_schedule: Self::DEFAULT_SCHEDULE.to_vec(),
            max_iters: 20_000,
            grad_tol: 1e-3,
            boundary,
            domain_radius: 1.0,
            initial: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        if self.eps_schedule.is_empty() {
            return Err(Error::param("eps_schedule", "must not be empty"));
        }
        if self.eps_schedule.windows(2).any(|w| w[1] >= w[0]) {
            return Err(Error::param("eps_schedule", "must be strictly decreasing"));
        }
        if self.eps_schedule.iter().any(|&e| !(e > 0.0 && e < 1.0)) {
            return Err(Error::param("eps_schedule", "entries must lie in (0, 1)"));
        }
        if !(self.grad_tol > 0.0) {
            return Err(Error::param("grad_tol", "must be positive"));
        }
        if self.max_iters == 0 {
            return Err(Error::param("max_iters", "must be positive"));
        }
        if !(self.domain_radius > 0.0 && self.domain_radius <= 1.0) {
            return Err(Error::param("domain_radius", "must lie in (0, 1]"));
        }
        Ok(())
    }

    /// Schedule with entries below `h²/10` replaced by that floor (duplicates dropped).
    pub fn effective_schedule(&self, grid: &Grid) -> Vec<f64> {
        let floor = grid.h() * grid.h() / 10.0;
        let mut out: Vec<f64> = Vec::new();
        for &e in &self.eps_schedule {
            let e = e.max(floor);
            if out.last().is_none_or(|&l| e < l) {
                out.push(e);
            }
        }
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct TraceRecord {
    pub stage: usize,
    pub iter: usize,
    pub energy: f64,
    pub grad_norm: f64,
    pub step: f64,
}

#[derive(Clone, Debug, Default)]
pub struct SolveTrace {
    pub records: Vec<TraceRecord>,
    /// Regularization width used at each stage.
    pub stage_eps: Vec<f64>,
    /// Final objective value of each stage.
    pub stage_energy: Vec<f64>,
    /// Objective of each stage's final iterate with the exact density.
    pub stage_exact_energy: Vec<f64>,
    pub stage_converged: Vec<bool>,
    pub converged: bool,
}

impl SolveTrace {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("stage,iter,energy,grad_norm,step\n");
        for r in &self.records {
            s.push_str(&format!(
                "{},{},{:e},{:e},{:e}\n",
                r.stage, r.iter, r.energy, r.grad_norm, r.step
            ));
        }
        s
    }

    /// Accepted energies never increase within a stage.
    pub fn is_monotone(&self) -> bool {
        self.records
            .windows(2)
            .all(|w| w[0].stage != w[1].stage || w[1].energy <= w[0].energy)
    }
}

/// Problem state shared by every stage.
struct Problem {
    n: usize,
    h2: f64,
    unknown: Vec<bool>,
    /// Rows `j` with at least one unknown (all other rows are fixed).
    rows: Vec<usize>,
}

impl Problem {
    fn new(grid: &Grid, radius: f64) -> Self {
        let n = grid.n();
        let mut unknown = vec![false; grid.len()];
        for j in 0..n {
            for i in 0..n {
                let x = grid.node(i, j);
                unknown[grid.index(i, j)] = x[0].hypot(x[1]) < radius * (1.0 - 1e-12);
            }
        }
        let rows = (0..n)
            .filter(|&j| (0..n).any(|i| unknown[j * n + i]))
            .collect();
        Problem {
            n,
            h2: grid.h() * grid.h(),
            unknown,
            rows,
        }
    }

    /// Smooth part `S(u)` and kink part `R(u)` of the objective.
    fn energy(&self, u: &[f64], pot: &Potential) -> (f64, f64) {
        let n = self.n;
        let (kp, km) = pot.kink_slopes();
        // Rows adjacent to unknown rows carry edges too; iterate over all rows
        // that touch an unknown edge and sum row partials in a fixed order.
        let parts: Vec<(f64, f64)> = (0..n)
            .into_par_iter()
            .map(|j| {
                let mut dir = 0.0;
                let mut smooth = 0.0;
                let mut kink = 0.0;
                let base = j * n;
                for i in 0..n {
                    let k = base + i;
                    let uk = u[k];
                    let unk = self.unknown[k];
                    if i + 1 < n && (unk || self.unknown[k + 1]) {
                        let d = u[k + 1] - uk;
                        dir += d * d;
                    }
                    if j + 1 < n && (unk || self.unknown[k + n]) {
                        let d = u[k + n] - uk;
                        dir += d * d;
                    }
                    if unk {
                        smooth += pot.value_reg(uk) - kink_value(uk, kp, km);
                        kink += kink_value(uk, kp, km);
                    }
                }
                (0.5 * dir + self.h2 * smooth, self.h2 * kink)
            })
            .collect();
        let mut s = 0.0;
        let mut r = 0.0;
        for (a, b) in parts {
            s += a;
            r += b;
        }
        (s, r)
    }

    /// Objective with the exact density in place of the regularized one.
    fn exact_energy(&self, u: &[f64], pot: &Potential) -> f64 {
        let n = self.n;
        let rows: Vec<f64> = (0..n)
            .into_par_iter()
            .map(|j| {
                let mut dir = 0.0;
                let mut f = 0.0;
                for i in 0..n {
                    let k = j * n + i;
                    let unk = self.unknown[k];
                    if i + 1 < n && (unk || self.unknown[k + 1]) {
                        dir += (u[k + 1] - u[k]).powi(2);
                    }
                    if j + 1 < n && (unk || self.unknown[k + n]) {
                        dir += (u[k + n] - u[k]).powi(2);
                    }
                    if unk {
                        f += pot.value(u[k]);
                    }
                }
                0.5 * dir + self.h2 * f
            })
            .collect();
        rows.into_iter().sum()
    }

    /// Gradient of the smooth part at unknowns (zero elsewhere).
    fn smooth_gradient(&self, u: &[f64], pot: &Potential, out: &mut [f64]) {
        let n = self.n;
        out.par_chunks_mut(n).enumerate().for_each(|(j, row)| {
            for (i, g) in row.iter_mut().enumerate() {
                let k = j * n + i;
                *g = if self.unknown[k] {
                    4.0 * u[k] - u[k - 1] - u[k + 1] - u[k - n] - u[k + n]
                        + self.h2 * pot.smooth_slope_reg(u[k])
                } else {
                    0.0
                };
            }
        });
    }

    /// Max-norm of the minimal-norm element of the subdifferential.
    fn subgradient_norm(&self, u: &[f64], g: &[f64], kp: f64, km: f64) -> f64 {
        let tp = self.h2 * kp;
        let tm = self.h2 * km;
        let n = self.n;
        let rows: Vec<f64> = (0..n)
            .into_par_iter()
            .map(|j| {
                let mut m: f64 = 0.0;
                for k in j * n..(j + 1) * n {
                    if !self.unknown[k] {
                        continue;
                    }
                    let gk = g[k];
                    let v = if u[k] > 0.0 {
                        gk + tp
                    } else if u[k] < 0.0 {
                        gk - tm
                    } else if gk < -tp {
                        gk + tp
                    } else if gk > tm {
                        gk - tm
                    } else {
                        0.0
                    };
                    m = m.max(v.abs());
                }
                m
            })
            .collect();
        rows.into_iter().fold(0.0, f64::max)
    }

    /// `prox_{sR}(u - s g)`, written into `out`.
    fn prox_step(&self, u: &[f64], g: &[f64], s: f64, kp: f64, km: f64, out: &mut [f64]) {
        let tp = s * self.h2 * kp;
        let tm = s * self.h2 * km;
        out.par_iter_mut().enumerate().for_each(|(k, o)| {
            *o = if self.unknown[k] {
                let v = u[k] - s * g[k];
                if v > tp {
                    v - tp
                } else if v < -tm {
                    v + tm
                } else {
                    0.0
                }
            } else {
                u[k]
            };
        });
    }

    /// `Σ_unknown term(k)`, reduced row by row in a fixed order.
    fn reduce(&self, term: impl Fn(usize) -> f64 + Sync) -> f64 {
        let n = self.n;
        let rows: Vec<f64> = self
            .rows
            .par_iter()
            .map(|&j| {
                let mut s = 0.0;
                for k in j * n..(j + 1) * n {
                    if self.unknown[k] {
                        s += term(k);
                    }
                }
                s
            })
            .collect();
        rows.into_iter().sum()
    }
}

#[inline]
fn kink_value(t: f64, kp: f64, km: f64) -> f64 {
    if t > 0.0 {
        kp * t
    } else {
        -km * t
    }
}

/// Dirichlet values everywhere plus the initial guess at unknowns.
fn initial_state(cfg: &SolveConfig, grid: &Grid, prob: &Problem) -> Result<Vec<f64>> {
    let n = grid.n();
    let mut u = vec![0.0; grid.len()];
    for j in 0..n {
        for i in 0..n {
            let k = grid.index(i, j);
            if !prob.unknown[k] {
                u[k] = cfg.boundary.value_at(&cfg.params, grid, i, j)?;
            }
        }
    }
    match &cfg.initial {
        Some(f) => {
            if f.grid() != grid {
                return Err(Error::GridMismatch("initial guess grid".into()));
            }
            for k in 0..grid.len() {
                if prob.unknown[k] {
                    u[k] = f.values()[k];
                }
            }
        }
        None => {
            let rad = match cfg.boundary {
                BoundaryData::Explicit(_) => cfg.domain_radius.min(grid.safe_band()),
                _ => cfg.domain_radius,
            };
            let m = ring_points(grid, rad);
            let series = harmonic_series(&cfg.boundary.trace(&cfg.params, rad, m)?)?;
            for j in 0..n {
                for i in 0..n {
                    let k = grid.index(i, j);
                    if prob.unknown[k] {
                        let x = grid.node(i, j);
                        u[k] = series.eval_point([x[0] / rad, x[1] / rad]).0;
                    }
                }
            }
        }
    }
    Ok(u)
}

fn ring_points(grid: &Grid, radius: f64) -> usize {
    let want = (8.0 * PI * radius / grid.h()).ceil() as usize;
    want.next_power_of_two().clamp(512, 8192)
}

/// Result of [`solve`].
#[derive(Clone, Debug)]
pub struct Solution {
    pub field: ScalarField,
    pub trace: SolveTrace,
}

/// Minimizes the regularized energy through the continuation schedule.
pub fn solve(cfg: &SolveConfig, grid: &Grid) -> Result<Solution> {
    cfg.validate()?;
    let prob = Problem::new(grid, cfg.domain_radius);
    let mut u = initial_state(cfg, grid, &prob)?;
    let schedule = cfg.effective_schedule(grid);
    let mut trace = SolveTrace {
        stage_eps: schedule.clone(),
        ..Default::default()
    };
    let mut step = 0.1;
    for (stage, &eps) in schedule.iter().enumerate() {
        let p = cfg.params.with_eps(eps)?;
        let pot = Potential::new(&p);
        let (ok, e, s) = run_stage(&prob, &pot, cfg, stage, step, &mut u, &mut trace);
        step = s;
        trace.stage_energy.push(e);
        trace.stage_exact_energy.push(prob.exact_energy(&u, &pot));
        trace.stage_converged.push(ok);
    }
    trace.converged = *trace.stage_converged.last().unwrap_or(&false);
    let field = ScalarField::new(*grid, u, cfg.domain_radius)?;
    Ok(Solution { field, trace })
}

/// One continuation stage; returns (converged, final energy, last step).
fn run_stage(
    prob: &Problem,
    pot: &Potential,
    cfg: &SolveConfig,
    stage: usize,
    step0: f64,
    u: &mut Vec<f64>,
    trace: &mut SolveTrace,
) -> (bool, f64, f64) {
    let len = u.len();
    let (kp, km) = pot.kink_slopes();
    let tol = cfg.grad_tol * prob.h2;
    let mut g = vec![0.0; len];
    let mut g_new = vec![0.0; len];
    let mut u_new = u.clone();
    prob.smooth_gradient(u, pot, &mut g);
    let (mut s_val, mut r_val) = prob.energy(u, pot);
    let mut step = step0;
    for iter in 0..cfg.max_iters {
        let gnorm = prob.subgradient_norm(u, &g, kp, km);
        trace.records.push(TraceRecord {
            stage,
            iter,
            energy: s_val + r_val,
            grad_norm: gnorm / prob.h2,
            step,
        });
        if gnorm <= tol {
            return (true, s_val + r_val, step);
        }
        let mut accepted = false;
        let mut trial = step;
        for _ in 0..=40 {
            prob.prox_step(u, &g, trial, kp, km, &mut u_new);
            let (s1, r1) = prob.energy(&u_new, pot);
            if s1.is_finite() && r1.is_finite() {
                let (un, uo, gk) = (&u_new, &*u, &g);
                let lin = prob.reduce(|k| gk[k] * (un[k] - uo[k]));
                let d2 = prob.reduce(|k| (un[k] - uo[k]).powi(2));
                if s1 <= s_val + lin + d2 / (2.0 * trial) && s1 + r1 <= s_val + r_val {
                    s_val = s1;
                    r_val = r1;
                    accepted = true;
                    break;
                }
            }
            trial *= 0.5;
        }
        if !accepted {
            return (false, s_val + r_val, step);
        }
        prob.smooth_gradient(&u_new, pot, &mut g_new);
        let (un, uo, g1, g0) = (&u_new, &*u, &g_new, &g);
        let sy = prob.reduce(|k| (un[k] - uo[k]) * (g1[k] - g0[k]));
        let ss = prob.reduce(|k| (un[k] - uo[k]).powi(2));
        step = if sy > 0.0 && ss > 0.0 {
            (ss / sy).clamp(1e-8, 1e8)
        } else {
            (trial * 2.0).min(1e8)
        };
        std::mem::swap(u, &mut u_new);
        std::mem::swap(&mut g, &mut g_new);
    }
    let gnorm = prob.subgradient_norm(u, &g, kp, km);
    (gnorm <= tol, s_val + r_val, step)
}

/// Coarse-to-fine solve: the full schedule runs on the coarsest grid with at
/// least `coarsest` nodes per side reachable by halving, each finer level
/// starts from the bilinear prolongation of the previous one and runs the
/// final stage only. The returned trace is the finest level's.
pub fn solve_cascadic(cfg: &SolveConfig, grid: &Grid, coarsest: usize) -> Result<Solution> {
    cfg.validate()?;
    let coarse_n = (grid.n() - 1) / 2 + 1;
    if coarse_n < coarsest || coarse_n.is_multiple_of(2) || coarse_n < Grid::MIN_NODES {
        return solve(cfg, grid);
    }
    let coarse_grid = crate::grid::build_grid(coarse_n)?;
    let coarse_cfg = SolveConfig {
        boundary: match &cfg.boundary {
            BoundaryData::Explicit(f) => BoundaryData::Explicit(restrict(f, &coarse_grid)?),
            other => other.clone(),
        },
        initial: None,
        ..cfg.clone()
    };
    let coarse = solve_cascadic(&coarse_cfg, &coarse_grid, coarsest)?;
    let fine_schedule = cfg.effective_schedule(grid);
    let fine_cfg = SolveConfig {
        eps_schedule: vec![*fine_schedule.last().expect("validated schedule")],
        initial: Some(prolong(&coarse.field, grid)?),
        ..cfg.clone()
    };
    solve(&fine_cfg, grid)
}

/// Injection onto the grid with half the cells.
fn restrict(f: &ScalarField, coarse: &Grid) -> Result<ScalarField> {
    let n = coarse.n();
    let mut v = Vec::with_capacity(coarse.len());
    for j in 0..n {
        for i in 0..n {
            v.push(f.at(2 * i, 2 * j));
        }
    }
    ScalarField::new(*coarse, v, f.mask_radius())
}

/// Bilinear prolongation onto the grid with twice the cells.
fn prolong(f: &ScalarField, fine: &Grid) -> Result<ScalarField> {
    let n = fine.n();
    if (f.grid().n() - 1) * 2 != n - 1 {
        return Err(Error::GridMismatch("prolongation needs a twice finer grid".into()));
    }
    let mut v = Vec::with_capacity(fine.len());
    for j in 0..n {
        for i in 0..n {
            let (ci, cj) = (i / 2, j / 2);
            let val = match (i % 2, j % 2) {
                (0, 0) => f.at(ci, cj),
                (1, 0) => 0.5 * (f.at(ci, cj) + f.at(ci + 1, cj)),
                (0, 1) => 0.5 * (f.at(ci, cj) + f.at(ci, cj + 1)),
                _ => {
                    0.25 * (f.at(ci, cj) + f.at(ci + 1, cj) + f.at(ci, cj + 1) + f.at(ci + 1, cj + 1))
                }
            };
            v.push(val);
        }
    }
    ScalarField::new(*fine, v, f.mask_radius())
}

/// `Σ_cells w h² (½|∇u_c|² + F̄_c)` with the bilinear cell-center gradient and
/// the corner average of the density (regularized when `p.eps > 0`).
/// Returns the Dirichlet and potential parts separately.
pub fn discrete_energy_parts(u: &ScalarField, p: &ScaleParams, m: &DiskMask) -> Result<(f64, f64)> {
    if u.grid() != m.grid() {
        return Err(Error::GridMismatch("field and mask grids differ".into()));
    }
    let g = *u.grid();
    let n = g.n();
    let h = g.h();
    let pot = Potential::new(p);
    let reg = p.eps > 0.0;
    let dens = |t: f64| if reg { pot.value_reg(t) } else { pot.value(t) };
    let v = u.values();
    let rows: Vec<(f64, f64)> = (0..n - 1)
        .into_par_iter()
        .map(|j| {
            let mut d = 0.0;
            let mut f = 0.0;
            for i in 0..n - 1 {
                let w = m.cell_weight(i, j);
                if w == 0.0 {
                    continue;
                }
                let k = j * n + i;
                let (u00, u10, u01, u11) = (v[k], v[k + 1], v[k + n], v[k + n + 1]);
                let gx = (u10 - u00 + u11 - u01) / (2.0 * h);
                let gy = (u01 - u00 + u11 - u10) / (2.0 * h);
                d += w * 0.5 * (gx * gx + gy * gy);
                f += w * 0.25 * (dens(u00) + dens(u10) + dens(u01) + dens(u11));
            }
            (d, f)
        })
        .collect();
    let (mut d, mut f) = (0.0, 0.0);
    for (a, b) in rows {
        d += a;
        f += b;
    }
    Ok((d * h * h, f * h * h))
}

pub fn discrete_energy(u: &ScalarField, p: &ScaleParams, m: &DiskMask) -> Result<f64> {
    let (d, f) = discrete_energy_parts(u, p, m)?;
    Ok(d + f)
}

/// `max |Δ_h u - f(u)|` over interior mask nodes with `|u| > band`
/// (`0` when no node qualifies).
pub fn el_residual(u: &ScalarField, p: &ScaleParams, m: &DiskMask, band: f64) -> Result<f64> {
    if u.grid() != m.grid() {
        return Err(Error::GridMismatch("field and mask grids differ".into()));
    }
    if !(band >= 10.0 * p.eps) {
        return Err(Error::param("band", format!("must be >= 10 eps = {}", 10.0 * p.eps)));
    }
    let g = u.grid();
    let n = g.n();
    let h2 = g.h() * g.h();
    let pot = Potential::new(p);
    let v = u.values();
    let rows: Vec<f64> = (1..n - 1)
        .into_par_iter()
        .map(|j| {
            let mut worst: f64 = 0.0;
            for i in 1..n - 1 {
                if m.class(i, j) != NodeClass::Interior {
                    continue;
                }
                let k = j * n + i;
                if v[k].abs() <= band {
                    continue;
                }
                let lap = (v[k - 1] + v[k + 1] + v[k - n] + v[k + n] - 4.0 * v[k]) / h2;
                worst = worst.max((lap - pot.slope(v[k])).abs());
            }
            worst
        })
        .collect();
    Ok(rows.into_iter().fold(0.0, f64::max))
}
