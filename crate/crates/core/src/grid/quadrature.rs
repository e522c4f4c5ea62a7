use std::f64::consts::PI;

use rayon::prelude::*;

use super::Point;
use crate::error::{Error, Result};
use crate::numeric::{gauss_legendre, CompensatedSum};

/// `M` equally spaced points on the circle with trapezoid weights `2π R / M`.
pub fn boundary_ring(center: Point, radius: f64, m: usize) -> Result<Vec<(Point, f64)>> {
    if m < 64 {
        return Err(Error::param("M", format!("ring quadrature needs M >= 64, got {m}")));
    }
    if !(radius > 0.0 && radius.is_finite()) {
        return Err(Error::param("radius", "must be positive"));
    }
    let w = 2.0 * PI * radius / m as f64;
    Ok((0..m)
        .map(|k| {
            let th = 2.0 * PI * k as f64 / m as f64;
            let (s, c) = th.sin_cos();
            ([center[0] + radius * c, center[1] + radius * s], w)
        })
        .collect())
}

/// Polar product rule on the unit disk: composite Gauss-Legendre in `ρ`
/// times the trapezoid rule in `θ`.
///
/// Integrates `ρᵃ cos(kθ)` exactly for `a ≤ 6` and `|k| < M`, hence every
/// polynomial of degree below `min(7, M)`.
#[derive(Clone, Debug)]
pub struct DiskRule {
    radii: Vec<f64>,
    radial_weights: Vec<f64>,
    cos_sin: Vec<(f64, f64)>,
}

impl DiskRule {
    const ORDER: usize = 4;

    pub fn new(panels: usize, m: usize) -> Result<Self> {
        if m < 64 {
            return Err(Error::param("M", format!("disk quadrature needs M >= 64, got {m}")));
        }
        if panels == 0 {
            return Err(Error::param("panels", "must be positive"));
        }
        let (x, w) = gauss_legendre(Self::ORDER);
        let width = 1.0 / panels as f64;
        let mut radii = Vec::with_capacity(panels * Self::ORDER);
        let mut radial_weights = Vec::with_capacity(panels * Self::ORDER);
        let dtheta = 2.0 * PI / m as f64;
        for p in 0..panels {
            let mid = (p as f64 + 0.5) * width;
            for (xi, wi) in x.iter().zip(&w) {
                let rho = mid + 0.5 * width * xi;
                radii.push(rho);
                radial_weights.push(0.5 * width * wi * rho * dtheta);
            }
        }
        let cos_sin = (0..m)
            .map(|k| {
                let (s, c) = (2.0 * PI * k as f64 / m as f64).sin_cos();
                (c, s)
            })
            .collect();
        Ok(DiskRule {
            radii,
            radial_weights,
            cos_sin,
        })
    }

    /// Rule resolving a field with `cells` grid cells per unit radius.
    pub fn for_resolution(cells: f64, m: usize) -> Result<Self> {
        let panels = (cells.ceil() as usize).clamp(16, 1024);
        Self::new(panels, m)
    }

    /// Rule matched to a field's resolution on the unit disk.
    pub fn for_field<F: super::Field + ?Sized>(f: &F, m: usize) -> Result<Self> {
        match f.resolution() {
            Some(h) => Self::for_resolution(1.0 / h, m),
            None => Self::new(32, m),
        }
    }

    pub fn len(&self) -> usize {
        self.radii.len() * self.cos_sin.len()
    }

    pub fn is_empty(&self) -> bool {
        self.radii.is_empty()
    }

    /// `∫_{B₁} g`, evaluated ring by ring in parallel and summed in ring order.
    pub fn integrate<G>(&self, g: G) -> Result<f64>
    where
        G: Fn(Point) -> Result<f64> + Sync,
    {
        Ok(self.integrate_many::<1, _>(|x| Ok([g(x)?]))?[0])
    }

    /// Simultaneous integration of `K` integrands.
    pub fn integrate_many<const K: usize, G>(&self, g: G) -> Result<[f64; K]>
    where
        G: Fn(Point) -> Result<[f64; K]> + Sync,
    {
        let rings: Vec<[f64; K]> = self
            .radii
            .par_iter()
            .zip(&self.radial_weights)
            .map(|(&rho, &w)| {
                let mut acc = [0.0; K];
                for &(c, s) in &self.cos_sin {
                    let v = g([rho * c, rho * s])?;
                    for k in 0..K {
                        acc[k] += v[k];
                    }
                }
                Ok(acc.map(|a| a * w))
            })
            .collect::<Result<_>>()?;
        let mut out = [CompensatedSum::new(); K];
        for ring in &rings {
            for k in 0..K {
                out[k].add(ring[k]);
            }
        }
        Ok(out.map(|s| s.value()))
    }
}

/// `∮_{∂B₁} g` by the `M`-point trapezoid rule.
pub fn ring_integral<G>(m: usize, g: G) -> Result<f64>
where
    G: Fn(Point) -> Result<f64>,
{
    let mut s = CompensatedSum::new();
    for (x, w) in boundary_ring([0.0, 0.0], 1.0, m)? {
        s.add(w * g(x)?);
    }
    Ok(s.value())
}
