//! Rescalings `u_r`, the Weiss energies `W` and `W₀`, quasi-monotonicity
//! traces with drift budgets, and the scaling identity for the energy.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::{disk_mask, BallView, DiskRule, Field, Grid, Point, ScalarField};
use crate::moduli::{drift_budget, mu, GrowthModuli, Potential, ScaleParams};
use crate::solver::discrete_energy;

/// Quadrature and admissibility settings shared by the scale-indexed quantities.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScaleOptions {
    /// Ring samples for boundary integrals.
    pub m: usize,
    /// Smallest admissible radius in grid cells of the source field.
    pub min_cells: f64,
}

impl Default for ScaleOptions {
    fn default() -> Self {
        ScaleOptions {
            m: 2048,
            min_cells: 8.0,
        }
    }
}

impl ScaleOptions {
    fn check<F: Field + ?Sized>(&self, u: &F, r: f64) -> Result<()> {
        if self.m < 512 {
            return Err(Error::param("M", format!("needs M >= 512, got {}", self.m)));
        }
        if !(r > 0.0 && r <= 1.0) {
            return Err(Error::param("r", format!("must lie in (0, 1], got {r}")));
        }
        if let Some(h) = u.resolution() {
            if r < self.min_cells * h * (1.0 - 1e-12) {
                return Err(Error::param(
                    "r",
                    format!("r = {r} is below {} grid cells (h = {h})", self.min_cells),
                ));
            }
        }
        Ok(())
    }
}

/// Samples `u(c + r x) / norm` onto `target`; the square `c + r[-1, 1]²` must
/// lie in the sampling band of `u`.
pub fn rescale_field_with(
    u: &ScalarField,
    r: f64,
    center: Point,
    target: &Grid,
    norm: f64,
    min_cells: f64,
) -> Result<ScalarField> {
    let opts = ScaleOptions {
        m: 512,
        min_cells,
    };
    opts.check(u, r)?;
    let band = u.grid().safe_band();
    if center[0].abs() + r > band + 1e-12 || center[1].abs() + r > band + 1e-12 {
        return Err(Error::OutOfDomain(format!(
            "square of half-width {r} at ({}, {}) leaves the sampling band",
            center[0], center[1]
        )));
    }
    let n = target.n();
    let mut values = Vec::with_capacity(target.len());
    for j in 0..n {
        for i in 0..n {
            let x = target.node(i, j);
            let (v, _) = u.sample([center[0] + r * x[0], center[1] + r * x[1]])?;
            values.push(v / norm);
        }
    }
    ScalarField::new(*target, values, 1.0)
}

/// `u_r(x) = u(c + r x) / μ(r)` on `target`, with `r ≥ 8h`.
pub fn rescale_field(u: &ScalarField, r: f64, center: Point, target: &Grid) -> Result<ScalarField> {
    rescale_field_with(u, r, center, target, mu(r), ScaleOptions::default().min_cells)
}

/// Pieces of the Weiss energy at one scale.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct WeissValue {
    /// `α ∫_{B₁} (|∇u_r|² + 2 F(u_r)) - 2 ∮ u_r²`.
    pub w: f64,
    /// `∫_{B₁} (|∇u_r|² + 2 F(u_r))`.
    pub bulk: f64,
    /// `∮_{∂B₁} u_r²`.
    pub boundary: f64,
    pub alpha: f64,
}

impl WeissValue {
    /// Unweighted variant `A - 2B`.
    pub fn w0(&self) -> f64 {
        self.bulk - 2.0 * self.boundary
    }
}

/// Blow-up of `u` at scale `r` as seen by a minimizer of the functional `p`.
fn blowup_view<'a, F: Field + ?Sized>(
    u: &'a F,
    r: f64,
    center: Point,
    p: &ScaleParams,
) -> BallView<'a, F> {
    BallView::new(u, center, r, p.blowup_normalization(r))
}

/// Bulk and boundary integrals of `v` over the unit disk for the density of `q`.
fn weiss_pieces<F: Field + ?Sized>(v: &F, q: &ScaleParams, m: usize) -> Result<(f64, f64)> {
    let rule = DiskRule::for_field(v, m)?;
    let pot = Potential::new(&ScaleParams { eps: 0.0, ..*q });
    let bulk = rule.integrate(|x| {
        let (val, g) = v.eval(x)?;
        Ok(g[0] * g[0] + g[1] * g[1] + 2.0 * pot.value(val))
    })?;
    let boundary = crate::grid::ring_integral(m, |x| Ok(v.value(x)?.powi(2)))?;
    Ok((bulk, boundary))
}

/// `W(r) = α(r) ∫_{B₁} |∇u_r|² + 2 F_r(u_r) - 2 ∮_{∂B₁} u_r²` around `center`.
///
/// `p` is the functional minimized by `u`; for `p.r = 1` the blow-up is
/// `u(c + r x)/μ(r)` with `F_r` and `α(r)`, for the classical limit it is
/// `u(c + r x)/r²` with `F₀` and `α = 1`.
pub fn weiss_energy<F: Field + ?Sized>(
    u: &F,
    r: f64,
    center: Point,
    p: &ScaleParams,
    opts: &ScaleOptions,
) -> Result<WeissValue> {
    opts.check(u, r)?;
    let v = blowup_view(u, r, center, p);
    let (bulk, boundary) = weiss_pieces(&v, &p.at_scale(r), opts.m)?;
    let alpha = p.weiss_alpha(r);
    Ok(WeissValue {
        w: alpha * bulk - 2.0 * boundary,
        bulk,
        boundary,
        alpha,
    })
}

/// `W₀(u; r) = ∫ |∇u_r|² + 2 F_r(u_r) - 2 ∮ u_r²` (no `α` weight).
pub fn weiss_zero<F: Field + ?Sized>(
    u: &F,
    r: f64,
    center: Point,
    p: &ScaleParams,
    opts: &ScaleOptions,
) -> Result<WeissValue> {
    let mut v = weiss_energy(u, r, center, p, opts)?;
    v.alpha = 1.0;
    v.w = v.w0();
    Ok(v)
}

/// `W₀` of a field that already lives on the unit disk, with the density of `q`.
pub fn weiss_zero_unit<F: Field + ?Sized>(v: &F, q: &ScaleParams, m: usize) -> Result<WeissValue> {
    if m < 512 {
        return Err(Error::param("M", format!("needs M >= 512, got {m}")));
    }
    let (bulk, boundary) = weiss_pieces(v, q, m)?;
    Ok(WeissValue {
        w: bulk - 2.0 * boundary,
        bulk,
        boundary,
        alpha: 1.0,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct WeissEntry {
    pub r: f64,
    pub w: f64,
    pub w0: f64,
    /// `∫_r^{r₀} ν₊`, with `r₀` the first radius of the trace.
    pub drift_budget: f64,
    pub m: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct WeissTrace {
    pub center: Point,
    pub entries: Vec<WeissEntry>,
}

impl WeissTrace {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("r,W,W0,drift_budget,M\n");
        for e in &self.entries {
            s.push_str(&format!(
                "{:e},{:e},{:e},{:e},{}\n",
                e.r, e.w, e.w0, e.drift_budget, e.m
            ));
        }
        s
    }

    pub fn max_abs_w(&self) -> f64 {
        self.entries.iter().map(|e| e.w.abs()).fold(0.0, f64::max)
    }

    /// `min_k [W(r_{k+1}) - W(r_k) + Δbudget_k]` over consecutive entries.
    pub fn min_forward_increment(&self) -> f64 {
        self.entries
            .windows(2)
            .map(|w| w[1].w - w[0].w + (w[1].drift_budget - w[0].drift_budget))
            .fold(f64::INFINITY, f64::min)
    }

    /// `min_k [W(r_k) - W(r_{k+1}) + Δbudget_k]`: nonnegative when `W` is
    /// nondecreasing in `r` up to the drift.
    pub fn min_monotone_increment(&self) -> f64 {
        self.entries
            .windows(2)
            .map(|w| w[0].w - w[1].w + (w[1].drift_budget - w[0].drift_budget))
            .fold(f64::INFINITY, f64::min)
    }
}

/// Weiss energies along a strictly decreasing list of radii, with cumulative
/// drift budgets from the moduli `m`.
pub fn weiss_trace<F: Field + ?Sized>(
    u: &F,
    center: Point,
    p: &ScaleParams,
    r_list: &[f64],
    m: &GrowthModuli,
    opts: &ScaleOptions,
) -> Result<WeissTrace> {
    if r_list.is_empty() {
        return Err(Error::param("r_list", "must not be empty"));
    }
    if r_list.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::param("r_list", "must be strictly decreasing"));
    }
    let values: Vec<WeissValue> = r_list
        .par_iter()
        .map(|&r| weiss_energy(u, r, center, p, opts))
        .collect::<Result<_>>()?;
    let mut entries = Vec::with_capacity(r_list.len());
    let mut budget = 0.0;
    for (k, (&r, v)) in r_list.iter().zip(&values).enumerate() {
        if k > 0 {
            let hi = r_list[k - 1].min(1.0 - 1e-12);
            budget += drift_budget(r.min(hi), hi, m)?;
        }
        entries.push(WeissEntry {
            r,
            w: v.w,
            w0: v.w0(),
            drift_budget: budget,
            m: opts.m,
        });
    }
    Ok(WeissTrace { center, entries })
}

/// Both sides of `E_{r}(v_r; B₁) = m(r)⁻² E(v; B_r)` around the origin.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ScalingDefect {
    pub defect: f64,
    /// Rescaled energy by polar quadrature of the blow-up.
    pub lhs: f64,
    /// Source energy by the cell-weighted disk mask on the source grid.
    pub rhs: f64,
}

pub fn scaling_identity_defect(
    v: &ScalarField,
    r: f64,
    p: &ScaleParams,
    opts: &ScaleOptions,
) -> Result<ScalingDefect> {
    opts.check(v, r)?;
    let view = blowup_view(v, r, [0.0, 0.0], p);
    let rule = DiskRule::for_field(&view, opts.m)?;
    let q = ScaleParams {
        eps: 0.0,
        ..p.at_scale(r)
    };
    let pot = Potential::new(&q);
    let lhs = rule.integrate(|x| {
        let (val, g) = view.eval(x)?;
        Ok(0.5 * (g[0] * g[0] + g[1] * g[1]) + pot.value(val))
    })?;
    let mask = disk_mask(v.grid(), r, [0.0, 0.0])?;
    let norm = p.blowup_normalization(r);
    let rhs = discrete_energy(v, &ScaleParams { eps: 0.0, ..*p }, &mask)? / (norm * norm);
    Ok(ScalingDefect {
        defect: (lhs - rhs).abs(),
        lhs,
        rhs,
    })
}
