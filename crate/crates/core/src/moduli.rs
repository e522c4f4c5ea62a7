//! Closed-form scalar functions: the energy density family `F_r`, its
//! derivative, the ε-regularized variant used by the solver, the scale weights
//! `μ`, `α`, the drift density `ν` and the growth moduli `η`, `η₁`, `ω`.
//!
//! Throughout, `L(r) = 1 - 2 ln r` and the scaled density is
//!
//! ```text
//! F_r(t) = (λ₊ t₊ + λ₋ t₋) (1 - ln|t| / L - ln L / L),   F_r(0) = 0,
//! ```
//!
//! with `r = 1` giving `F(t) = (λ₊ t₊ + λ₋ t₋)(1 - ln|t|)` and `r = 0` the
//! classical limit `F₀(t) = λ₊ t₊ + λ₋ t₋`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::CompensatedSum;

/// Parameters of one member of the `F_r` family.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScaleParams {
    pub lambda_plus: f64,
    pub lambda_minus: f64,
    /// Rescaling scale in `[0, 1]`; `1` is the unscaled problem, `0` the classical limit.
    pub r: f64,
    /// Log regularization width in `[0, 1)`; `0` means exact.
    pub eps: f64,
}

impl ScaleParams {
    /// Unscaled (`r = 1`), unregularized parameters.
    pub fn new(lambda_plus: f64, lambda_minus: f64) -> Result<Self> {
        let p = ScaleParams {
            lambda_plus,
            lambda_minus,
            r: 1.0,
            eps: 0.0,
        };
        p.validate()?;
        Ok(p)
    }

    /// Classical-limit parameters (`r = 0`).
    pub fn classical(lambda_plus: f64, lambda_minus: f64) -> Result<Self> {
        Self::new(lambda_plus, lambda_minus)?.with_scale(0.0)
    }

    pub fn with_scale(mut self, r: f64) -> Result<Self> {
        self.r = r;
        self.validate()?;
        Ok(self)
    }

    pub fn with_eps(mut self, eps: f64) -> Result<Self> {
        self.eps = eps;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda_plus > 0.0 && self.lambda_plus.is_finite()) {
            return Err(Error::param("lambda_plus", "must be positive and finite"));
        }
        if !(self.lambda_minus > 0.0 && self.lambda_minus.is_finite()) {
            return Err(Error::param("lambda_minus", "must be positive and finite"));
        }
        if !(0.0..=1.0).contains(&self.r) {
            return Err(Error::param("r", format!("must lie in [0, 1], got {}", self.r)));
        }
        if !(0.0..1.0).contains(&self.eps) {
            return Err(Error::param("eps", format!("must lie in [0, 1), got {}", self.eps)));
        }
        Ok(())
    }

    /// The same functional with the roles of the two phases exchanged.
    pub fn swapped(&self) -> Self {
        ScaleParams {
            lambda_plus: self.lambda_minus,
            lambda_minus: self.lambda_plus,
            ..*self
        }
    }

    /// `L = 1 - 2 ln r`, or `None` in the classical limit.
    pub fn log_factor(&self) -> Option<f64> {
        (self.r > 0.0).then(|| 1.0 - 2.0 * self.r.ln())
    }

    /// Parameters of the functional minimized by a blow-up at relative scale `s`.
    ///
    /// Rescaling an `F_{r}` minimizer by `s` yields an `F_{r s}` minimizer, so
    /// the classical limit is a fixed point.
    pub fn at_scale(&self, s: f64) -> Self {
        ScaleParams {
            r: self.r * s,
            ..*self
        }
    }

    /// Normalization `m(s)` with `u_s(x) = u(s x) / m(s)` for blow-ups of a
    /// minimizer of this functional. Equals `μ(s)` when `r = 1` and `s²` in the
    /// classical limit.
    pub fn blowup_normalization(&self, s: f64) -> f64 {
        match self.log_factor() {
            Some(l) => s * s * (l - 2.0 * s.ln()) / l,
            None => s * s,
        }
    }

    /// Weight multiplying the bulk term of the Weiss energy at relative scale `s`.
    pub fn weiss_alpha(&self, s: f64) -> f64 {
        match self.at_scale(s).log_factor() {
            Some(l) => 1.0 / (1.0 - 1.0 / l),
            None => 1.0,
        }
    }
}

/// Precomputed coefficients of `F_r` for fast repeated evaluation.
///
/// `F(t) = λ |t| (1 - a - c ln|t|)` with `c = 1/L`, `a = ln L / L`
/// (`a = c = 0` in the classical limit).
#[derive(Clone, Copy, Debug)]
pub struct Potential {
    lambda_plus: f64,
    lambda_minus: f64,
    a: f64,
    c: f64,
    eps: f64,
    ln_eps: f64,
}

impl Potential {
    pub fn new(p: &ScaleParams) -> Self {
        let (a, c) = match p.log_factor() {
            Some(l) => (l.ln() / l, 1.0 / l),
            None => (0.0, 0.0),
        };
        let ln_eps = if p.eps > 0.0 { p.eps.ln() } else { f64::NEG_INFINITY };
        Potential {
            lambda_plus: p.lambda_plus,
            lambda_minus: p.lambda_minus,
            a,
            c,
            eps: p.eps,
            ln_eps,
        }
    }

    #[inline]
    fn weight(&self, t: f64) -> f64 {
        if t > 0.0 {
            self.lambda_plus
        } else {
            self.lambda_minus
        }
    }

    /// Exact `F_r(t)`.
    #[inline]
    pub fn value(&self, t: f64) -> f64 {
        if t == 0.0 {
            return 0.0;
        }
        let m = t.abs();
        let core = if self.c == 0.0 { 1.0 } else { 1.0 - self.a - self.c * m.ln() };
        self.weight(t) * m * core
    }

    /// Exact `f_r(t) = F_r'(t)`, with `f_r(0) = 0`.
    #[inline]
    pub fn slope(&self, t: f64) -> f64 {
        if t == 0.0 {
            return 0.0;
        }
        let m = t.abs();
        let core = if self.c == 0.0 {
            1.0
        } else {
            1.0 - self.a - self.c - self.c * m.ln()
        };
        t.signum() * self.weight(t) * core
    }

    /// Slopes `(κ₊, κ₋)` of the regularized density at `0⁺` and `0⁻`
    /// (the latter as a magnitude).
    pub fn kink_slopes(&self) -> (f64, f64) {
        let core = if self.c == 0.0 {
            1.0
        } else {
            1.0 - self.a - self.c - self.c * self.ln_eps
        };
        (self.lambda_plus * core, self.lambda_minus * core)
    }

    /// Regularized density: `ln|t|` replaced by `ln max(|t|, ε)` in the slope.
    #[inline]
    pub fn value_reg(&self, t: f64) -> f64 {
        if t == 0.0 {
            return 0.0;
        }
        let m = t.abs();
        if self.c == 0.0 {
            return self.weight(t) * m;
        }
        if m <= self.eps {
            let (kp, km) = self.kink_slopes();
            if t > 0.0 {
                kp * m
            } else {
                km * m
            }
        } else {
            self.value(t) - self.weight(t) * self.c * self.eps
        }
    }

    /// Regularized slope, with value `0` at `t = 0`.
    #[inline]
    pub fn slope_reg(&self, t: f64) -> f64 {
        if t == 0.0 {
            return 0.0;
        }
        if self.c == 0.0 {
            return self.slope(t);
        }
        let m = t.abs().max(self.eps);
        t.signum() * self.weight(t) * (1.0 - self.a - self.c - self.c * m.ln())
    }

    /// `slope_reg(t) - κ± sign(t)`: the continuous part of the regularized slope.
    #[inline]
    pub fn smooth_slope_reg(&self, t: f64) -> f64 {
        if t == 0.0 || self.c == 0.0 {
            return 0.0;
        }
        let m = t.abs();
        if m <= self.eps {
            return 0.0;
        }
        -t.signum() * self.weight(t) * self.c * (m.ln() - self.ln_eps)
    }
}

/// `F_r(t)`; `p.eps` is ignored.
pub fn density(t: f64, p: &ScaleParams) -> f64 {
    Potential::new(p).value(t)
}

/// `f_r(t) = ∂_t F_r(t)`, with `f_r(0) = 0`; `p.eps` is ignored.
pub fn density_slope(t: f64, p: &ScaleParams) -> f64 {
    Potential::new(p).slope(t)
}

/// ε-regularized density, `F_reg(t) = ∫₀ᵗ f_reg`.
pub fn density_reg(t: f64, p: &ScaleParams) -> Result<f64> {
    require_eps(p)?;
    Ok(Potential::new(p).value_reg(t))
}

/// ε-regularized slope, `f_r` with `ln|t|` replaced by `ln max(|t|, ε)`.
pub fn density_slope_reg(t: f64, p: &ScaleParams) -> Result<f64> {
    require_eps(p)?;
    Ok(Potential::new(p).slope_reg(t))
}

fn require_eps(p: &ScaleParams) -> Result<()> {
    if p.eps > 0.0 {
        Ok(())
    } else {
        Err(Error::param("eps", "regularized density needs eps > 0"))
    }
}

/// `μ(r) = r² (1 - 2 ln r)` for `r ∈ (0, 1]`.
pub fn mu(r: f64) -> f64 {
    r * r * (1.0 - 2.0 * r.ln())
}

/// `(μ(r), α(r))` with `α(r) = 1 - 1 / (2 ln r)`, for `r ∈ (0, 1)`.
pub fn scale_weights(r: f64) -> Result<(f64, f64)> {
    if !(r > 0.0 && r < 1.0) {
        return Err(Error::param("r", format!("scale weights need 0 < r < 1, got {r}")));
    }
    Ok((mu(r), 1.0 - 1.0 / (2.0 * r.ln())))
}

/// Constants of the suboptimal moduli.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GrowthModuli {
    /// Constant `Ĉ` in `ω(t) = Ĉ t² (1 + |ln t|)²`.
    pub c_hat: f64,
    /// Log power `J` in `η(t) = t (1 + |ln t|^J)`.
    pub j: u32,
}

impl GrowthModuli {
    pub fn new(c_hat: f64, j: u32) -> Result<Self> {
        if !(c_hat > 0.0 && c_hat.is_finite()) {
            return Err(Error::param("c_hat", "must be positive and finite"));
        }
        Ok(GrowthModuli { c_hat, j })
    }

    /// `η(t) = t (1 + |ln t|^J)`.
    pub fn eta(&self, t: f64) -> f64 {
        t * (1.0 + t.ln().abs().powi(self.j as i32))
    }

    /// `ω(t) = Ĉ t² (1 + |ln t|)²`.
    pub fn omega(&self, t: f64) -> f64 {
        let g = 1.0 + t.ln().abs();
        self.c_hat * t * t * g * g
    }

    /// `η₁(t)` from the dyadic sum
    /// `η₁²(t) = Σ_{k≥0} η²(s_k²) / s_k² · (1 + log₂²(1/s_k))`, `s_k = t 2⁻ᵏ`,
    /// which for `t = 2⁻ᴷ` is `Σ_{k≥K} η²(4⁻ᵏ)/4⁻ᵏ (1 + k²)`.
    pub fn eta1(&self, t: f64) -> f64 {
        let mut sum = CompensatedSum::new();
        let mut s = t;
        for _ in 0..2000 {
            let s2 = s * s;
            if s2 == 0.0 {
                break;
            }
            let e = self.eta(s2);
            let k = (1.0 / s).log2();
            let term = e * e / s2 * (1.0 + k * k);
            sum.add(term);
            if term < 1e-14 * sum.value() {
                break;
            }
            s *= 0.5;
        }
        sum.value().sqrt()
    }
}

/// `(η(t), η₁(t), ω(t))` for `t ∈ (0, 1]`.
pub fn growth_moduli(t: f64, m: &GrowthModuli) -> Result<(f64, f64, f64)> {
    if !(t > 0.0 && t <= 1.0) {
        return Err(Error::param("t", format!("moduli need 0 < t <= 1, got {t}")));
    }
    Ok((m.eta(t), m.eta1(t), m.omega(t)))
}

/// `ν(r) = [1 - ln(1 - 2 ln r) - ln(ω(r)/μ(r))] / [r (1 - 2 ln r)²]` for `r ∈ (0, 1)`.
pub fn drift_density(r: f64, m: &GrowthModuli) -> Result<f64> {
    if !(r > 0.0 && r < 1.0) {
        return Err(Error::param("r", format!("drift density needs 0 < r < 1, got {r}")));
    }
    let l = 1.0 - 2.0 * r.ln();
    let num = 1.0 - l.ln() - (m.omega(r) / mu(r)).ln();
    Ok(num / (r * l * l))
}

/// `∫_{r_lo}^{r_hi} max(ν, 0) dr` by composite Gauss-Legendre in `ln r`.
pub fn drift_budget(r_lo: f64, r_hi: f64, m: &GrowthModuli) -> Result<f64> {
    if !(r_lo > 0.0 && r_lo <= r_hi && r_hi < 1.0) {
        return Err(Error::param(
            "r",
            format!("drift budget needs 0 < r_lo <= r_hi < 1, got [{r_lo}, {r_hi}]"),
        ));
    }
    if r_lo == r_hi {
        return Ok(0.0);
    }
    let (x, w) = crate::numeric::gauss_legendre(8);
    let (a, b) = (r_lo.ln(), r_hi.ln());
    let panels = (((b - a) / 0.05).ceil() as usize).max(1);
    let width = (b - a) / panels as f64;
    let mut sum = CompensatedSum::new();
    for k in 0..panels {
        let mid = a + (k as f64 + 0.5) * width;
        for (xi, wi) in x.iter().zip(&w) {
            let s = mid + 0.5 * width * xi;
            let r = s.exp();
            let nu = drift_density(r, m)?.max(0.0);
            sum.add(0.5 * width * wi * nu * r);
        }
    }
    Ok(sum.value())
}
