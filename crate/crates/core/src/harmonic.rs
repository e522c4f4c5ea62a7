//! Quadratic harmonic projection on the unit circle, the Fourier-Poisson
//! harmonic extension, and the harmonic approximation and decay checks.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{boundary_ring, BallView, DiskRule, Field, Grid, Point, ScalarField};
use crate::moduli::GrowthModuli;
use crate::numeric::CompensatedSum;

const MIN_M: usize = 512;

fn check_m(m: usize) -> Result<()> {
    if m < MIN_M {
        return Err(Error::param("M", format!("needs M >= {MIN_M}, got {m}")));
    }
    Ok(())
}

/// `Q₁ = (x₁² - x₂²)/√π` and `Q₂ = 2 x₁ x₂/√π`, orthonormal in `L²(∂B₁)`.
#[inline]
pub fn basis_eval(x: Point) -> [f64; 2] {
    let s = 1.0 / PI.sqrt();
    [s * (x[0] * x[0] - x[1] * x[1]), s * 2.0 * x[0] * x[1]]
}

#[inline]
fn basis_grad(x: Point) -> [Point; 2] {
    let s = 2.0 / PI.sqrt();
    [[s * x[0], -s * x[1]], [s * x[1], s * x[0]]]
}

/// `Σ cᵢ Qᵢ`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct QuadraticHarmonic {
    pub c: [f64; 2],
}

impl QuadraticHarmonic {
    pub fn dimension(&self) -> usize {
        2
    }

    pub fn eval(&self, x: Point) -> f64 {
        let q = basis_eval(x);
        self.c[0] * q[0] + self.c[1] * q[1]
    }

    pub fn gradient(&self, x: Point) -> Point {
        let g = basis_grad(x);
        [
            self.c[0] * g[0][0] + self.c[1] * g[1][0],
            self.c[0] * g[0][1] + self.c[1] * g[1][1],
        ]
    }

    /// Laplacian of the represented polynomial, from the basis second derivatives.
    pub fn laplacian(&self) -> f64 {
        let s = 2.0 / PI.sqrt();
        let (q1_xx, q1_yy) = (s, -s);
        let (q2_xx, q2_yy) = (0.0, 0.0);
        self.c[0] * (q1_xx + q1_yy) + self.c[1] * (q2_xx + q2_yy)
    }
}

impl Field for QuadraticHarmonic {
    fn eval(&self, x: Point) -> Result<(f64, Point)> {
        Ok((QuadraticHarmonic::eval(self, x), self.gradient(x)))
    }
}

/// Ring samples of the basis and their Gram matrix.
#[derive(Clone, Debug)]
pub struct BoundaryBasis {
    pub points: Vec<(Point, f64)>,
    pub samples: Vec<[f64; 2]>,
    pub gram: [[f64; 2]; 2],
}

pub fn boundary_basis(n: usize, m: usize) -> Result<BoundaryBasis> {
    if n != 2 {
        return Err(Error::param("n", format!("only n = 2 is supported, got {n}")));
    }
    check_m(m)?;
    let points = boundary_ring([0.0, 0.0], 1.0, m)?;
    let samples: Vec<[f64; 2]> = points.iter().map(|(x, _)| basis_eval(*x)).collect();
    let mut gram = [[0.0; 2]; 2];
    for a in 0..2 {
        for b in 0..2 {
            gram[a][b] = points
                .iter()
                .zip(&samples)
                .map(|((_, w), q)| w * q[a] * q[b])
                .collect::<CompensatedSum>()
                .value();
        }
    }
    Ok(BoundaryBasis {
        points,
        samples,
        gram,
    })
}

/// Projection of unit-circle samples `g(2πk/M)` onto the quadratic harmonics.
pub fn project_quadratic(ring: &[f64]) -> Result<QuadraticHarmonic> {
    let m = ring.len();
    check_m(m)?;
    let w = 2.0 * PI / m as f64;
    let mut c = [CompensatedSum::new(); 2];
    for (k, &g) in ring.iter().enumerate() {
        let (s, co) = (2.0 * PI * k as f64 / m as f64).sin_cos();
        let q = basis_eval([co, s]);
        c[0].add(w * g * q[0]);
        c[1].add(w * g * q[1]);
    }
    Ok(QuadraticHarmonic {
        c: [c[0].value(), c[1].value()],
    })
}

/// Trace of `u` on `∂B₁` at the `M` ring angles.
pub fn ring_samples<F: Field + ?Sized>(u: &F, m: usize) -> Result<Vec<f64>> {
    (0..m)
        .map(|k| {
            let (s, c) = (2.0 * PI * k as f64 / m as f64).sin_cos();
            u.value([c, s])
        })
        .collect()
}

/// `(lhs, rhs)` of `∫|∇(u-Pu)|² - 2∮(u-Pu)² = ∫|∇u|² - 2∮u²` on the unit disk.
pub fn subpoly_defect<F: Field + ?Sized>(u: &F, rule: &DiskRule, m: usize) -> Result<(f64, f64)> {
    let trace = ring_samples(u, m)?;
    let pu = project_quadratic(&trace)?;
    let [d_full, d_res] = rule.integrate_many(|x| {
        let (_, g) = u.eval(x)?;
        let gp = pu.gradient(x);
        let (a, b) = (g[0] - gp[0], g[1] - gp[1]);
        Ok([g[0] * g[0] + g[1] * g[1], a * a + b * b])
    })?;
    let w = 2.0 * PI / m as f64;
    let mut b_full = CompensatedSum::new();
    let mut b_res = CompensatedSum::new();
    for (k, &v) in trace.iter().enumerate() {
        let (s, c) = (2.0 * PI * k as f64 / m as f64).sin_cos();
        let r = v - pu.eval([c, s]);
        b_full.add(w * v * v);
        b_res.add(w * r * r);
    }
    Ok((
        d_res - 2.0 * b_res.value(),
        d_full - 2.0 * b_full.value(),
    ))
}

/// Truncated Fourier series `a₀ + Σ_{k≥1} ρᵏ (a_k cos kθ + b_k sin kθ)`,
/// the Poisson extension of its boundary values.
#[derive(Clone, Debug, PartialEq)]
pub struct HarmonicSeries {
    a0: f64,
    /// `c_k = a_k - i b_k`, so that the series is `Re Σ c_k zᵏ`.
    coeffs: Vec<(f64, f64)>,
}

impl HarmonicSeries {
    pub fn mean(&self) -> f64 {
        self.a0
    }

    /// `(a_k, b_k)` for `k = 1, 2, …`.
    pub fn cos_sin_coefficients(&self) -> Vec<(f64, f64)> {
        self.coeffs.iter().map(|&(re, im)| (re, -im)).collect()
    }

    /// Value and gradient; points outside the unit disk are evaluated at
    /// their radial projection onto the circle.
    pub fn eval_point(&self, x: Point) -> (f64, Point) {
        let mut z = (x[0], x[1]);
        let rho = x[0].hypot(x[1]);
        if rho > 1.0 {
            z = (x[0] / rho, x[1] / rho);
        }
        // Horner for p(z) = Σ_{k≥1} c_k zᵏ and p'(z)
        let mut p = (0.0, 0.0);
        let mut dp = (0.0, 0.0);
        for (k, &c) in self.coeffs.iter().enumerate().rev() {
            let kk = (k + 1) as f64;
            dp = cadd(cmul(dp, z), (kk * c.0, kk * c.1));
            p = cadd(cmul(p, z), c);
        }
        let p = cmul(p, z);
        // ∂x Re p = Re p', ∂y Re p = -Im p'
        (self.a0 + p.0, [dp.0, -dp.1])
    }

    pub fn to_field(&self, grid: &Grid, mask_radius: f64) -> Result<ScalarField> {
        ScalarField::from_fn(*grid, mask_radius, |x| self.eval_point(x).0)
    }
}

#[inline]
fn cmul(a: (f64, f64), b: (f64, f64)) -> (f64, f64) {
    (a.0 * b.0 - a.1 * b.1, a.0 * b.1 + a.1 * b.0)
}

#[inline]
fn cadd(a: (f64, f64), b: (f64, f64)) -> (f64, f64) {
    (a.0 + b.0, a.1 + b.1)
}

impl Field for HarmonicSeries {
    fn eval(&self, x: Point) -> Result<(f64, Point)> {
        Ok(self.eval_point(x))
    }
}

/// Fourier-Poisson extension of unit-circle samples `g(2πk/M)`, modes `k ≤ M/4`.
pub fn harmonic_series(ring: &[f64]) -> Result<HarmonicSeries> {
    let m = ring.len();
    check_m(m)?;
    let kmax = m / 4;
    let a0 = ring.iter().copied().collect::<CompensatedSum>().value() / m as f64;
    let table: Vec<(f64, f64)> = (0..m)
        .map(|j| (2.0 * PI * j as f64 / m as f64).sin_cos())
        .collect();
    let mut coeffs = Vec::with_capacity(kmax);
    for k in 1..=kmax {
        let mut a = CompensatedSum::new();
        let mut b = CompensatedSum::new();
        for (j, &g) in ring.iter().enumerate() {
            // exact angle reduction keeps the DFT accurate for large k
            let (s, c) = table[(k * j) % m];
            a.add(g * c);
            b.add(g * s);
        }
        let scale = 2.0 / m as f64;
        coeffs.push((scale * a.value(), -scale * b.value()));
    }
    Ok(HarmonicSeries { a0, coeffs })
}

/// Harmonic extension of unit-circle samples, sampled onto `grid`.
pub fn harmonic_extension(ring: &[f64], grid: &Grid) -> Result<ScalarField> {
    harmonic_series(ring)?.to_field(grid, 1.0)
}

/// `(∫_{B_r}|∇(u - h)|², η²(r²)/r²)` with `h` the harmonic function sharing
/// the trace of `u` on `∂B_r(center)`.
pub fn harmonic_approx_defect<F: Field + ?Sized>(
    u: &F,
    r: f64,
    center: Point,
    moduli: &GrowthModuli,
    rule: &DiskRule,
    m: usize,
) -> Result<(f64, f64)> {
    if !(r > 0.0 && r <= 1.0) {
        return Err(Error::param("r", "must lie in (0, 1]"));
    }
    let v = BallView::unnormalized(u, center, r);
    let h = harmonic_series(&ring_samples(&v, m)?)?;
    // Dirichlet energy is dilation invariant in two dimensions.
    let defect = rule.integrate(|x| {
        let (_, gu) = v.eval(x)?;
        let (_, gh) = h.eval_point(x);
        let (a, b) = (gu[0] - gh[0], gu[1] - gh[1]);
        Ok(a * a + b * b)
    })?;
    let e = moduli.eta(r * r);
    Ok((defect, e * e / (r * r)))
}

/// `(∫_{B_s}|h - h(c)|², (s/r)⁴ ∫_{B_r}|h - h(c)|²)` around `center`.
pub fn harmonic_decay_check<F: Field + ?Sized>(
    h: &F,
    s: f64,
    r: f64,
    center: Point,
    rule: &DiskRule,
) -> Result<(f64, f64)> {
    if !(s > 0.0 && s < r) {
        return Err(Error::param("s", "needs 0 < s < r"));
    }
    let h0 = h.value(center)?;
    let mass = |t: f64| -> Result<f64> {
        let v = BallView::unnormalized(h, center, t);
        Ok(t * t * rule.integrate(|x| Ok((v.value(x)? - h0).powi(2)))?)
    };
    Ok((mass(s)?, (s / r).powi(4) * mass(r)?))
}
