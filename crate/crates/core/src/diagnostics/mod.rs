//! Free-boundary extraction and scale-indexed curves around a center.
//!
//! Every curve is returned sorted by increasing `r`.

mod contour;

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::{Point, ScalarField};
use crate::moduli::ScaleParams;
use crate::numeric::least_squares;

pub use contour::{default_tau, extract_free_boundary, find_branch_points, Polyline};

/// Circle samples added to the node maxima of ball suprema.
const RING_SAMPLES: usize = 256;
const MODULUS_RADII: usize = 4;
const MODULUS_ANGLES: usize = 32;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct CurvePoint {
    pub r: f64,
    pub value: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct NondegPoint {
    pub r: f64,
    pub sup: f64,
    pub phase_present: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Phase {
    Plus,
    Minus,
}

impl Phase {
    fn sign(self) -> f64 {
        match self {
            Phase::Plus => 1.0,
            Phase::Minus => -1.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct NondegCurve {
    pub points: Vec<NondegPoint>,
    /// Set when `|u(center)|` exceeds `h²`.
    pub warning: Option<String>,
}

/// `2^{-k}` for `k = k_hi, …, k_lo` (increasing radii).
pub fn dyadic_radii(k_lo: u32, k_hi: u32) -> Vec<f64> {
    (k_lo..=k_hi).rev().map(|k| 0.5f64.powi(k as i32)).collect()
}

/// Dyadic radii in `[8h, 1/4]`.
pub fn default_radii(h: f64) -> Vec<f64> {
    let mut out: Vec<f64> = (2..40)
        .map(|k| 0.5f64.powi(k))
        .take_while(|&r| r >= 8.0 * h * (1.0 - 1e-12))
        .collect();
    out.reverse();
    out
}

fn sorted(radii: &[f64]) -> Vec<f64> {
    let mut r = radii.to_vec();
    r.sort_by(f64::total_cmp);
    r
}

fn check_ball(u: &ScalarField, center: Point, r: f64) -> Result<()> {
    let g = u.grid();
    if !(r >= g.h() && r.is_finite()) {
        return Err(Error::param("r", format!("radius {r} below the grid spacing {}", g.h())));
    }
    let band = g.safe_band() + 1e-12;
    if center[0].abs() + r > band || center[1].abs() + r > band {
        return Err(Error::OutOfDomain(format!(
            "ball of radius {r} at ({}, {}) leaves the sampling band",
            center[0], center[1]
        )));
    }
    Ok(())
}

fn ball_nodes(u: &ScalarField, center: Point, r: f64) -> Vec<f64> {
    let g = u.grid();
    let h = g.h();
    let n = g.n() as isize;
    let lo = |c: f64| (((c - r + 1.0) / h).ceil() as isize).max(0) as usize;
    let hi = |c: f64| (((c + r + 1.0) / h).floor() as isize).min(n - 1) as usize;
    let lim = r * (1.0 + 1e-12);
    let mut out = Vec::new();
    for j in lo(center[1])..=hi(center[1]) {
        for i in lo(center[0])..=hi(center[0]) {
            let x = g.node(i, j);
            if (x[0] - center[0]).hypot(x[1] - center[1]) <= lim {
                out.push(u.at(i, j));
            }
        }
    }
    out
}

/// Node values of the closed ball, then `RING_SAMPLES` interpolated boundary values.
fn ball_values(u: &ScalarField, center: Point, r: f64) -> Result<Vec<f64>> {
    let mut out = ball_nodes(u, center, r);
    for k in 0..RING_SAMPLES {
        let (s, c) = (2.0 * PI * k as f64 / RING_SAMPLES as f64).sin_cos();
        out.push(u.sample([center[0] + r * c, center[1] + r * s])?.0);
    }
    Ok(out)
}

/// Running maximum over increasing radii (suprema over nested balls).
fn cumulative_max(values: &mut [f64]) {
    for k in 1..values.len() {
        values[k] = values[k].max(values[k - 1]);
    }
}

/// `sup_{B_r(center)} |u|`.
pub fn growth_curve(u: &ScalarField, center: Point, radii: &[f64]) -> Result<Vec<CurvePoint>> {
    let radii = sorted(radii);
    let mut sups = radii
        .par_iter()
        .map(|&r| {
            check_ball(u, center, r)?;
            Ok(ball_values(u, center, r)?.into_iter().fold(0.0, |m: f64, v| m.max(v.abs())))
        })
        .collect::<Result<Vec<f64>>>()?;
    cumulative_max(&mut sups);
    Ok(radii.iter().zip(sups).map(|(&r, value)| CurvePoint { r, value }).collect())
}

/// `sup_{B_r} u±` and whether the phase takes a node of `B_{r/2}`.
pub fn nondegeneracy_curve(u: &ScalarField, center: Point, radii: &[f64], phase: Phase) -> Result<NondegCurve> {
    let radii = sorted(radii);
    let s = phase.sign();
    let rows = radii
        .par_iter()
        .map(|&r| {
            check_ball(u, center, r)?;
            let sup = ball_values(u, center, r)?.into_iter().fold(0.0, |m: f64, v| m.max(s * v));
            let present = ball_nodes(u, center, 0.5 * r).into_iter().any(|v| s * v > 0.0);
            Ok((sup, present))
        })
        .collect::<Result<Vec<(f64, bool)>>>()?;
    let mut sups: Vec<f64> = rows.iter().map(|r| r.0).collect();
    cumulative_max(&mut sups);
    let h = u.grid().h();
    let u0 = u.sample(center)?.0;
    let warning = (u0.abs() > h * h).then(|| {
        format!("|u(center)| = {:e} exceeds h² = {:e}; center is off the free boundary", u0.abs(), h * h)
    });
    Ok(NondegCurve {
        points: radii
            .iter()
            .zip(sups)
            .zip(rows)
            .map(|((&r, sup), (_, phase_present))| NondegPoint { r, sup, phase_present })
            .collect(),
        warning,
    })
}

/// Max over `x` with `|x - c| ∈ [r/2, r]` of
/// `|∇u(x) - ∇u(c)| / (|x - c| (1 + |ln |x - c||))`.
pub fn gradient_modulus_curve(u: &ScalarField, center: Point, radii: &[f64]) -> Result<Vec<CurvePoint>> {
    let radii = sorted(radii);
    let (_, g0) = u.sample(center)?;
    let values = radii
        .par_iter()
        .map(|&r| {
            check_ball(u, center, r)?;
            let mut worst: f64 = 0.0;
            for a in 0..MODULUS_RADII {
                let d = r * (0.5 + 0.5 * a as f64 / (MODULUS_RADII - 1) as f64);
                let scale = d * (1.0 + d.ln().abs());
                for b in 0..MODULUS_ANGLES {
                    let th = 2.0 * PI * (b as f64 + 0.5 * (a % 2) as f64) / MODULUS_ANGLES as f64;
                    let (s, c) = th.sin_cos();
                    let (_, g) = u.sample([center[0] + d * c, center[1] + d * s])?;
                    worst = worst.max((g[0] - g0[0]).hypot(g[1] - g0[1]) / scale);
                }
            }
            Ok(worst)
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(radii.iter().zip(values).map(|(&r, value)| CurvePoint { r, value }).collect())
}

fn sign_class(v: f64) -> i8 {
    if v > 0.0 {
        1
    } else if v < 0.0 {
        -1
    } else {
        0
    }
}

/// `∫_{B_{1/2}} |Δ u_r - (λ₊ 1{u_r>0} - λ₋ 1{u_r<0})|` for
/// `u_r(x) = u(c + r x) / m(r)`, `m` the blow-up normalization of `p`.
///
/// Evaluated on the grid nodes themselves: in rescaled coordinates they form a
/// lattice of spacing `h/r`, on which the five-point Laplacian of `u_r` is
/// `r² Δ_h u / m(r)`. Nodes within `2h` of a node of another sign class are
/// excluded.
pub fn blowup_residual(u: &ScalarField, center: Point, r: f64, p: &ScaleParams) -> Result<f64> {
    p.validate()?;
    let g = u.grid();
    let h = g.h();
    let half = 0.5 * r;
    if !(half >= 2.0 * h) {
        return Err(Error::param("r", format!("r = {r} leaves fewer than 2 cells in B_(r/2)")));
    }
    let reach = 3.0 * h;
    if center[0].abs() + half + reach > 1.0 || center[1].abs() + half + reach > 1.0 {
        return Err(Error::OutOfDomain(format!(
            "B_{half}(({}, {})) and its stencil leave the grid",
            center[0], center[1]
        )));
    }
    let n = g.n();
    let v = u.values();
    let m = p.blowup_normalization(r);
    let lap_scale = r * r / (m * h * h);
    let weight = h * h / (r * r);
    let lo = |c: f64| ((c - half + 1.0) / h).ceil() as usize;
    let hi = |c: f64| ((c + half + 1.0) / h).floor() as usize;
    let mut rows = Vec::new();
    for j in lo(center[1])..=hi(center[1]) {
        let mut acc = 0.0;
        for i in lo(center[0])..=hi(center[0]) {
            let x = g.node(i, j);
            if (x[0] - center[0]).hypot(x[1] - center[1]) > half * (1.0 + 1e-12) {
                continue;
            }
            let k = j * n + i;
            let cls = sign_class(v[k]);
            let near_interface = (-2isize..=2).any(|dj| {
                (-2isize..=2).any(|di| {
                    di * di + dj * dj <= 4
                        && sign_class(v[(k as isize + dj * n as isize + di) as usize]) != cls
                })
            });
            if near_interface {
                continue;
            }
            let lap = (v[k - 1] + v[k + 1] + v[k - n] + v[k + n] - 4.0 * v[k]) * lap_scale;
            let target = match cls {
                1 => p.lambda_plus,
                -1 => -p.lambda_minus,
                _ => 0.0,
            };
            acc += (lap - target).abs();
        }
        rows.push(acc);
    }
    Ok(rows.into_iter().sum::<f64>() * weight)
}

/// Least squares of `ln s - 2 ln r = ln C + p ln(1 + |ln r|)`; returns `(C, p)`.
pub fn fit_growth_law(curve: &[CurvePoint]) -> Result<(f64, f64)> {
    if curve.len() < 5 {
        return Err(Error::DegenerateFit(format!("need at least 5 points, got {}", curve.len())));
    }
    if curve.iter().any(|c| !(c.value > 0.0 && c.r > 0.0 && c.value.is_finite())) {
        return Err(Error::DegenerateFit("growth fit needs positive r and s".into()));
    }
    let rows: Vec<Vec<f64>> = curve.iter().map(|c| vec![1.0, (1.0 + c.r.ln().abs()).ln()]).collect();
    let rhs: Vec<f64> = curve.iter().map(|c| c.value.ln() - 2.0 * c.r.ln()).collect();
    let sol = least_squares(&rows, &rhs)
        .ok_or_else(|| Error::DegenerateFit("growth fit design matrix is singular".into()))?;
    Ok((sol[0].exp(), sol[1]))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Fits {
    pub c_growth: Option<f64>,
    pub p_growth: Option<f64>,
    /// `min sup u± / (r²(1+|ln r|))` over radii with the phase present.
    pub c_nondeg_plus: Option<f64>,
    pub c_nondeg_minus: Option<f64>,
    /// `max` of the gradient-modulus curve.
    pub k_gradmod: f64,
    /// `max sup|u| / (r²(1+|ln r|)²)`.
    pub c_hat: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DiagnosticsReport {
    pub center: Point,
    pub growth: Vec<CurvePoint>,
    pub nondeg_plus: Vec<NondegPoint>,
    pub nondeg_minus: Vec<NondegPoint>,
    pub grad_modulus: Vec<CurvePoint>,
    pub blowup_residual: Vec<CurvePoint>,
    pub fits: Fits,
    pub warnings: Vec<String>,
}

fn nondeg_constant(points: &[NondegPoint]) -> Option<f64> {
    points
        .iter()
        .filter(|p| p.phase_present)
        .map(|p| p.sup / (p.r * p.r * (1.0 + p.r.ln().abs())))
        .reduce(f64::min)
}

/// All curves at `center` over `radii`.
pub fn diagnostics_report(u: &ScalarField, center: Point, radii: &[f64], p: &ScaleParams) -> Result<DiagnosticsReport> {
    let growth = growth_curve(u, center, radii)?;
    let plus = nondegeneracy_curve(u, center, radii, Phase::Plus)?;
    let minus = nondegeneracy_curve(u, center, radii, Phase::Minus)?;
    let grad_modulus = gradient_modulus_curve(u, center, radii)?;
    let blowup = sorted(radii)
        .into_iter()
        .map(|r| Ok(CurvePoint { r, value: blowup_residual(u, center, r, p)? }))
        .collect::<Result<Vec<_>>>()?;
    let (c_growth, p_growth) = match fit_growth_law(&growth) {
        Ok((c, q)) => (Some(c), Some(q)),
        Err(_) => (None, None),
    };
    let c_hat = growth
        .iter()
        .map(|c| {
            let l = 1.0 + c.r.ln().abs();
            c.value / (c.r * c.r * l * l)
        })
        .fold(0.0, f64::max);
    let fits = Fits {
        c_growth,
        p_growth,
        c_nondeg_plus: nondeg_constant(&plus.points),
        c_nondeg_minus: nondeg_constant(&minus.points),
        k_gradmod: grad_modulus.iter().map(|c| c.value).fold(0.0, f64::max),
        c_hat,
    };
    let warnings = plus.warning.clone().into_iter().collect();
    Ok(DiagnosticsReport {
        center,
        growth,
        nondeg_plus: plus.points,
        nondeg_minus: minus.points,
        grad_modulus,
        blowup_residual: blowup,
        fits,
        warnings,
    })
}

/// `r,value` CSV.
pub fn curve_csv(curve: &[CurvePoint]) -> String {
    let mut s = String::from("r,value\n");
    for c in curve {
        s.push_str(&format!("{:e},{:e}\n", c.r, c.value));
    }
    s
}

/// `r,value,flag` CSV with the phase flag as `0`/`1`.
pub fn nondeg_csv(curve: &[NondegPoint]) -> String {
    let mut s = String::from("r,value,flag\n");
    for c in curve {
        s.push_str(&format!("{:e},{:e},{}\n", c.r, c.sup, u8::from(c.phase_present)));
    }
    s
}
