//! Radial and one-dimensional profiles of the log-obstacle equation,
//! integrated with an adaptive Dormand-Prince 5(4) scheme.
//!
//! One phase: `u'' + (n-1) u'/ρ = -λ ln u` outward from a free boundary at
//! `ρ = 0`, started from `u = q ρ² (1 - 2 ln ρ)` at `ρ = δ` with `q` fixed by
//! the local balance of the equation. Two phases (`n = 1`):
//! `u'' = -λ₊ ln u⁺ 1{u>0} + λ₋ ln u⁻ 1{u<0}` with `u(0) = 0`, `u'(0) = b`.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::{Grid, ScalarField};
use crate::moduli::{Potential, ScaleParams};
use crate::numeric::least_squares;

const RTOL: f64 = 1e-10;
const ATOL: f64 = 1e-30;
/// Step floor relative to the current radius.
const REL_STEP_FLOOR: f64 = 1e-12;
/// Radius at which start-layer convergence is measured.
const PROBE_RHO: f64 = 1e-3;
const MAX_HALVINGS: usize = 20;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ProfileNode {
    pub rho: f64,
    pub u: f64,
    pub du: f64,
}

/// Sampled solution with nodes sorted by `ρ`.
#[derive(Clone, Debug, Serialize)]
pub struct RadialProfile {
    pub dimension: usize,
    pub lambda_plus: f64,
    pub lambda_minus: f64,
    pub nodes: Vec<ProfileNode>,
    pub start_offset: f64,
    /// Free-boundary location.
    pub rho0: f64,
    /// Start coefficient `q` of the one-phase ansatz (`NaN` when unused).
    pub start_coefficient: f64,
}

impl RadialProfile {
    pub fn rho_min(&self) -> f64 {
        self.nodes.first().map_or(0.0, |n| n.rho)
    }

    pub fn rho_max(&self) -> f64 {
        self.nodes.last().map_or(0.0, |n| n.rho)
    }

    /// `(u, u')` by cubic Hermite interpolation with exact nodal slopes,
    /// continued linearly beyond the last node on either side.
    pub fn eval(&self, rho: f64) -> (f64, f64) {
        let nodes = &self.nodes;
        let (first, last) = (nodes[0], nodes[nodes.len() - 1]);
        if rho <= first.rho {
            return (first.u + first.du * (rho - first.rho), first.du);
        }
        if rho >= last.rho {
            return (last.u + last.du * (rho - last.rho), last.du);
        }
        let k = nodes.partition_point(|n| n.rho <= rho).max(1) - 1;
        let (a, b) = (nodes[k], nodes[k + 1]);
        let h = b.rho - a.rho;
        let t = (rho - a.rho) / h;
        let (t2, t3) = (t * t, t * t * t);
        let u = (2.0 * t3 - 3.0 * t2 + 1.0) * a.u
            + (t3 - 2.0 * t2 + t) * h * a.du
            + (-2.0 * t3 + 3.0 * t2) * b.u
            + (t3 - t2) * h * b.du;
        let du = ((6.0 * t2 - 6.0 * t) * a.u + (-6.0 * t2 + 6.0 * t) * b.u) / h
            + (3.0 * t2 - 4.0 * t + 1.0) * a.du
            + (3.0 * t2 - 2.0 * t) * b.du;
        (u, du)
    }

    /// `½ u'² - F(u)` at every node, with `F` the unscaled two-phase density.
    pub fn first_integral(&self) -> Vec<f64> {
        let pot = Potential::new(&ScaleParams {
            lambda_plus: self.lambda_plus,
            lambda_minus: self.lambda_minus,
            r: 1.0,
            eps: 0.0,
        });
        self.nodes
            .iter()
            .map(|n| 0.5 * n.du * n.du - pot.value(n.u))
            .collect()
    }

    /// `u / (ρ² (1 - 2 ln ρ))` at `ρ`.
    pub fn growth_ratio(&self, rho: f64) -> f64 {
        self.eval(rho).0 / (rho * rho * (1.0 - 2.0 * rho.ln()))
    }

    /// Blow-up coefficient from a least-squares fit of
    /// `u/(ρ² L) = a + β ln L / L + γ / L`, `L = 1 - 2 ln ρ`, over
    /// log-spaced `ρ ∈ [lo, hi]`; returns `a`.
    pub fn blowup_coefficient(&self, lo: f64, hi: f64) -> Result<f64> {
        if !(lo > 0.0 && lo < hi) {
            return Err(Error::param("rho", "fit window needs 0 < lo < hi"));
        }
        let k = 41;
        let mut rows = Vec::with_capacity(k);
        let mut rhs = Vec::with_capacity(k);
        for i in 0..k {
            let rho = (lo.ln() + (hi / lo).ln() * i as f64 / (k - 1) as f64).exp();
            let l = 1.0 - 2.0 * rho.ln();
            rows.push(vec![1.0, l.ln() / l, 1.0 / l]);
            rhs.push(self.growth_ratio(rho));
        }
        least_squares(&rows, &rhs)
            .map(|c| c[0])
            .ok_or_else(|| Error::DegenerateFit("blow-up coefficient design matrix".into()))
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("rho,u,du\n");
        for n in &self.nodes {
            s.push_str(&format!("{:e},{:e},{:e}\n", n.rho, n.u, n.du));
        }
        s
    }
}

/// One adaptive integration from `(x0, y0)` to `x1 > x0`, recording every
/// accepted step.
fn integrate<F>(rhs: F, x0: f64, y0: [f64; 2], x1: f64, max_step: f64) -> Result<Vec<ProfileNode>>
where
    F: Fn(f64, [f64; 2]) -> Result<[f64; 2]>,
{
    const C: [f64; 7] = [0.0, 0.2, 0.3, 0.8, 8.0 / 9.0, 1.0, 1.0];
    const A: [[f64; 6]; 7] = [
        [0.0; 6],
        [0.2, 0.0, 0.0, 0.0, 0.0, 0.0],
        [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
        [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
        [
            19372.0 / 6561.0,
            -25360.0 / 2187.0,
            64448.0 / 6561.0,
            -212.0 / 729.0,
            0.0,
            0.0,
        ],
        [
            9017.0 / 3168.0,
            -355.0 / 33.0,
            46732.0 / 5247.0,
            49.0 / 176.0,
            -5103.0 / 18656.0,
            0.0,
        ],
        [
            35.0 / 384.0,
            0.0,
            500.0 / 1113.0,
            125.0 / 192.0,
            -2187.0 / 6784.0,
            11.0 / 84.0,
        ],
    ];
    const E: [f64; 7] = [
        35.0 / 384.0 - 5179.0 / 57600.0,
        0.0,
        500.0 / 1113.0 - 7571.0 / 16695.0,
        125.0 / 192.0 - 393.0 / 640.0,
        -2187.0 / 6784.0 + 92097.0 / 339200.0,
        11.0 / 84.0 - 187.0 / 2100.0,
        -1.0 / 40.0,
    ];
    let mut out = vec![ProfileNode {
        rho: x0,
        u: y0[0],
        du: y0[1],
    }];
    let mut x = x0;
    let mut y = y0;
    let mut h = (x0 * 0.01).max(1e-14).min(max_step);
    let mut k = [[0.0; 2]; 7];
    k[0] = rhs(x, y)?;
    let mut steps = 0usize;
    while x < x1 {
        steps += 1;
        if steps > 2_000_000 {
            return Err(Error::Integration(format!("step budget exhausted at ρ = {x}")));
        }
        h = h.min(x1 - x).min(max_step);
        for s in 1..7 {
            let mut ys = y;
            for (j, kj) in k.iter().enumerate().take(s) {
                ys[0] += h * A[s][j] * kj[0];
                ys[1] += h * A[s][j] * kj[1];
            }
            k[s] = rhs(x + C[s] * h, ys).unwrap_or([f64::NAN, f64::NAN]);
        }
        let mut y_new = y;
        for (j, kj) in k.iter().enumerate().take(6) {
            y_new[0] += h * A[6][j] * kj[0];
            y_new[1] += h * A[6][j] * kj[1];
        }
        let mut err: f64 = 0.0;
        for c in 0..2 {
            let e: f64 = (0..7).map(|j| E[j] * k[j][c]).sum::<f64>() * h;
            let sc = ATOL + RTOL * y[c].abs().max(y_new[c].abs());
            err = err.max((e / sc).abs());
        }
        let floor = REL_STEP_FLOOR * x.abs().max(1e-300);
        if err.is_finite() && err <= 1.0 {
            x += h;
            y = y_new;
            k[0] = k[6];
            out.push(ProfileNode {
                rho: x,
                u: y[0],
                du: y[1],
            });
            let fac = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
            h *= fac;
        } else {
            if h <= floor {
                return Err(Error::Integration(format!(
                    "step size fell below {floor:e} at ρ = {x:e}"
                )));
            }
            let fac = if err.is_finite() { (0.9 * err.powf(-0.2)).clamp(0.1, 0.9) } else { 0.1 };
            h = (h * fac).max(floor);
        }
    }
    Ok(out)
}

/// `q` solving `2q(nL - n - 2) = λ(L - 1 - ln q - ln L)` at `ρ`.
fn start_coefficient(n: usize, lambda: f64, rho: f64) -> Result<f64> {
    let l = 1.0 - 2.0 * rho.ln();
    let nf = n as f64;
    let g = |q: f64| 2.0 * q * (nf * l - nf - 2.0) - lambda * (l - 1.0 - q.ln() - l.ln());
    let (mut lo, mut hi) = (1e-12, 1e6);
    if !(g(lo) < 0.0 && g(hi) > 0.0) {
        return Err(Error::Integration(format!(
            "no start coefficient bracket at δ = {rho:e}"
        )));
    }
    for _ in 0..200 {
        let mid = (lo * hi).sqrt();
        if g(mid) > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
        if hi / lo - 1.0 < 1e-15 {
            break;
        }
    }
    Ok((lo * hi).sqrt())
}

fn one_phase_run(n: usize, lambda: f64, rho_max: f64, delta: f64) -> Result<(f64, Vec<ProfileNode>)> {
    let q = start_coefficient(n, lambda, delta)?;
    let l = 1.0 - 2.0 * delta.ln();
    let y0 = [q * delta * delta * l, 2.0 * q * delta * (l - 1.0)];
    let nm1 = (n - 1) as f64;
    let rhs = |rho: f64, y: [f64; 2]| {
        if !(y[0] > 0.0) {
            return Err(Error::Integration(format!("profile left the positive phase at ρ = {rho:e}")));
        }
        Ok([y[1], -nm1 * y[1] / rho - lambda * y[0].ln()])
    };
    let mut nodes = vec![ProfileNode {
        rho: 0.0,
        u: 0.0,
        du: 0.0,
    }];
    nodes.extend(integrate(rhs, delta, y0, rho_max, rho_max / 256.0)?);
    Ok((q, nodes))
}

fn value_at(nodes: &[ProfileNode], rho: f64) -> f64 {
    let p = RadialProfile {
        dimension: 1,
        lambda_plus: 1.0,
        lambda_minus: 1.0,
        nodes: nodes.to_vec(),
        start_offset: 0.0,
        rho0: 0.0,
        start_coefficient: f64::NAN,
    };
    p.eval(rho).0
}

/// One-phase profile in dimension `n`; `δ` is halved until `u(10⁻³)` moves
/// by less than `10⁻⁸`.
pub fn integrate_one_phase(n: usize, lambda: f64, rho_max: f64, delta: f64) -> Result<RadialProfile> {
    if n == 0 {
        return Err(Error::param("n", "dimension must be at least 1"));
    }
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::param("lambda", "must be positive"));
    }
    if !(rho_max > PROBE_RHO && rho_max <= 1.0) {
        return Err(Error::param("rho_max", format!("must lie in ({PROBE_RHO}, 1]")));
    }
    if !(delta > 0.0 && delta <= 1e-6) {
        return Err(Error::param("delta", "must lie in (0, 1e-6]"));
    }
    let mut d = delta;
    let (_, mut nodes) = one_phase_run(n, lambda, rho_max, d)?;
    let mut probe = value_at(&nodes, PROBE_RHO);
    let mut q;
    for _ in 0..MAX_HALVINGS {
        let (q2, nodes2) = one_phase_run(n, lambda, rho_max, 0.5 * d)?;
        let probe2 = value_at(&nodes2, PROBE_RHO);
        let change = (probe2 - probe).abs();
        d *= 0.5;
        q = q2;
        nodes = nodes2;
        probe = probe2;
        if change < 1e-8 {
            return Ok(RadialProfile {
                dimension: n,
                lambda_plus: lambda,
                lambda_minus: lambda,
                nodes,
                start_offset: d,
                rho0: 0.0,
                start_coefficient: q,
            });
        }
    }
    Err(Error::Integration(format!(
        "start layer did not settle after {MAX_HALVINGS} halvings (δ = {d:e}, u({PROBE_RHO}) = {probe:e})"
    )))
}

/// `ρ ↦ u(ρ)` on `[0, ρ_max]` for the half-line problem with `u(0) = 0`,
/// `u'(0) = b`; the left branch of the two-phase solution is this with `-b`.
fn half_line(lp: f64, lm: f64, b: f64, rho_max: f64, delta: f64) -> Result<Vec<ProfileNode>> {
    let pot = Potential::new(&ScaleParams {
        lambda_plus: lp,
        lambda_minus: lm,
        r: 1.0,
        eps: 0.0,
    });
    let sigma = b.signum();
    let ls = if b > 0.0 { lp } else { lm };
    let ab = b.abs();
    let y0 = [
        b * delta - sigma * ls * (0.5 * delta * delta * (ab * delta).ln() - 0.75 * delta * delta),
        b - sigma * ls * (delta * (ab * delta).ln() - delta),
    ];
    let rhs = |_rho: f64, y: [f64; 2]| Ok([y[1], pot.slope(y[0])]);
    let mut nodes = vec![ProfileNode {
        rho: 0.0,
        u: 0.0,
        du: b,
    }];
    nodes.extend(integrate(rhs, delta, y0, rho_max, rho_max / 256.0)?);
    Ok(nodes)
}

/// Two-phase profile on `[-ρ_max, ρ_max]` through `u(0) = 0` with slope `b`.
pub fn integrate_two_phase_1d(
    lambda_plus: f64,
    lambda_minus: f64,
    slope_b: f64,
    rho_max: f64,
) -> Result<RadialProfile> {
    if !(lambda_plus > 0.0 && lambda_minus > 0.0) {
        return Err(Error::param("lambda", "both weights must be positive"));
    }
    if !slope_b.is_finite() {
        return Err(Error::param("slope_b", "must be finite"));
    }
    if !(rho_max > PROBE_RHO && rho_max <= 1.0) {
        return Err(Error::param("rho_max", format!("must lie in ({PROBE_RHO}, 1]")));
    }
    let (right, left, delta, q) = if slope_b == 0.0 {
        let p = integrate_one_phase(1, lambda_plus, rho_max, 1e-6)?;
        let m = integrate_one_phase(1, lambda_minus, rho_max, 1e-6)?;
        let left: Vec<ProfileNode> = m
            .nodes
            .iter()
            .map(|n| ProfileNode {
                rho: n.rho,
                u: -n.u,
                du: -n.du,
            })
            .collect();
        (p.nodes, left, p.start_offset, p.start_coefficient)
    } else {
        // the start expansion is accurate to O(δ³ ln δ)
        let delta = (1e-6 * slope_b.abs().min(1.0)).max(1e-12);
        (
            half_line(lambda_plus, lambda_minus, slope_b, rho_max, delta)?,
            half_line(lambda_plus, lambda_minus, -slope_b, rho_max, delta)?,
            delta,
            f64::NAN,
        )
    };
    // u(-s) = w(s), u'(-s) = -w'(s)
    let mut nodes: Vec<ProfileNode> = left
        .iter()
        .skip(1)
        .rev()
        .map(|n| ProfileNode {
            rho: -n.rho,
            u: n.u,
            du: -n.du,
        })
        .collect();
    nodes.extend(right);
    Ok(RadialProfile {
        dimension: 1,
        lambda_plus,
        lambda_minus,
        nodes,
        start_offset: delta,
        rho0: 0.0,
        start_coefficient: q,
    })
}

/// How a profile is laid onto the plane.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Embedding {
    /// `u(x) = profile(x₁)`; one-sided profiles vanish for `x₁ < 0`.
    Axis,
    /// `u(x) = profile(|x|)`.
    Radial,
}

/// Samples the profile onto `grid`. The profile must reach `ρ = 1`; beyond
/// its range it is continued linearly.
pub fn embed_radial_2d(p: &RadialProfile, grid: &Grid, mode: Embedding) -> Result<ScalarField> {
    if p.nodes.is_empty() {
        return Err(Error::param("profile", "has no nodes"));
    }
    let one_sided = p.rho_min() >= 0.0;
    if p.rho_max() < 1.0 - 1e-12 || (!one_sided && p.rho_min() > -1.0 + 1e-12) {
        return Err(Error::OutOfDomain(format!(
            "profile covers [{}, {}], the unit disk needs [-1, 1]",
            p.rho_min(),
            p.rho_max()
        )));
    }
    ScalarField::from_fn(*grid, 1.0, |x| match mode {
        Embedding::Axis => {
            if one_sided && x[0] < 0.0 {
                0.0
            } else {
                p.eval(x[0]).0
            }
        }
        Embedding::Radial => p.eval(x[0].hypot(x[1])).0,
    })
}
