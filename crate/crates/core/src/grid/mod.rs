//! Uniform grid on `[-1, 1]²`, node-valued fields, disk masks and sampling.

mod field;
pub mod io;
mod quadrature;

pub use field::{BallView, Field, FnField};
pub use quadrature::{boundary_ring, ring_integral, DiskRule};

use crate::error::{Error, Result};

pub type Point = [f64; 2];

/// Square grid with `N` nodes per side, `N` odd so that the origin is a node.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Grid {
    n: usize,
    h: f64,
}

impl Grid {
    pub const MIN_NODES: usize = 33;
    pub const MAX_NODES: usize = 4097;

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    /// Index of the origin node along either axis.
    pub fn center_index(&self) -> usize {
        (self.n - 1) / 2
    }

    /// Coordinate of node index `i` along either axis.
    #[inline]
    pub fn coord(&self, i: usize) -> f64 {
        let m = (self.n - 1) as f64;
        (2.0 * i as f64 - m) / m
    }

    /// Position of node `(i, j)`; `i` runs along `x₁`, `j` along `x₂`.
    #[inline]
    pub fn node(&self, i: usize, j: usize) -> Point {
        [self.coord(i), self.coord(j)]
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize) -> usize {
        j * self.n + i
    }

    pub fn len(&self) -> usize {
        self.n * self.n
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Nearest node to `x`, clamped to the grid.
    pub fn nearest_node(&self, x: Point) -> (usize, usize) {
        let f = |t: f64| {
            let k = ((t + 1.0) / self.h).round();
            k.clamp(0.0, (self.n - 1) as f64) as usize
        };
        (f(x[0]), f(x[1]))
    }

    /// Sampling band `[-1 + 2h, 1 - 2h]²` in which [`ScalarField::sample`] is defined.
    pub fn safe_band(&self) -> f64 {
        1.0 - 2.0 * self.h
    }

    pub fn in_safe_band(&self, x: Point) -> bool {
        let b = self.safe_band() + 1e-12;
        x[0].abs() <= b && x[1].abs() <= b
    }
}

/// Builds the grid with `n` nodes per side.
pub fn build_grid(n: usize) -> Result<Grid> {
    if n.is_multiple_of(2) {
        return Err(Error::param("N", format!("N must be odd, got {n}")));
    }
    if !(Grid::MIN_NODES..=Grid::MAX_NODES).contains(&n) {
        return Err(Error::param(
            "N",
            format!(
                "N must lie in [{}, {}], got {n}",
                Grid::MIN_NODES,
                Grid::MAX_NODES
            ),
        ));
    }
    Ok(Grid {
        n,
        h: 2.0 / (n - 1) as f64,
    })
}

/// Node values on a [`Grid`]; nodes outside the disk of `mask_radius` carry
/// Dirichlet data.
#[derive(Clone, Debug, PartialEq)]
pub struct ScalarField {
    grid: Grid,
    values: Vec<f64>,
    mask_radius: f64,
}

impl ScalarField {
    pub fn new(grid: Grid, values: Vec<f64>, mask_radius: f64) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::GridMismatch(format!(
                "expected {} values, got {}",
                grid.len(),
                values.len()
            )));
        }
        if !(mask_radius > 0.0 && mask_radius <= 1.0) {
            return Err(Error::param("mask_radius", "must lie in (0, 1]"));
        }
        if let Some(k) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::param(
                "values",
                format!("non-finite value at node {k}"),
            ));
        }
        Ok(ScalarField {
            grid,
            values,
            mask_radius,
        })
    }

    /// Samples `f` at every node.
    pub fn from_fn(grid: Grid, mask_radius: f64, f: impl Fn(Point) -> f64) -> Result<Self> {
        let n = grid.n();
        let mut values = Vec::with_capacity(grid.len());
        for j in 0..n {
            for i in 0..n {
                values.push(f(grid.node(i, j)));
            }
        }
        Self::new(grid, values, mask_radius)
    }

    pub fn zeros(grid: Grid, mask_radius: f64) -> Self {
        ScalarField {
            grid,
            values: vec![0.0; grid.len()],
            mask_radius,
        }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn mask_radius(&self) -> f64 {
        self.mask_radius
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.values[self.grid.index(i, j)]
    }

    /// Field scaled by `c`, same grid and mask.
    pub fn scaled(&self, c: f64) -> ScalarField {
        ScalarField {
            values: self.values.iter().map(|v| c * v).collect(),
            ..self.clone()
        }
    }

    /// Maximum absolute nodal difference to `other`.
    pub fn max_abs_diff(&self, other: &ScalarField) -> Result<f64> {
        if self.grid != other.grid {
            return Err(Error::GridMismatch("fields live on different grids".into()));
        }
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max))
    }

    /// Bicubic Hermite interpolation with fourth-order nodal derivatives;
    /// returns the value and the analytic gradient of the patch.
    pub fn sample(&self, x: Point) -> Result<(f64, Point)> {
        let g = &self.grid;
        if !g.in_safe_band(x) || !x[0].is_finite() || !x[1].is_finite() {
            return Err(Error::OutOfDomain(format!(
                "point ({}, {}) outside the sampling band |x_i| <= {}",
                x[0],
                x[1],
                g.safe_band()
            )));
        }
        let (i, tx) = locate(g, x[0]);
        let (j, ty) = locate(g, x[1]);
        let (wx, dx) = hermite_weights(tx);
        let (wy, dy) = hermite_weights(ty);
        let n = g.n();
        let mut v = 0.0;
        let mut gx = 0.0;
        let mut gy = 0.0;
        for (b, (&wyb, &dyb)) in wy.iter().zip(&dy).enumerate() {
            let row = (j + b - 2) * n + i - 2;
            let vals = &self.values[row..row + 6];
            let mut sv = 0.0;
            let mut sd = 0.0;
            for a in 0..6 {
                sv += wx[a] * vals[a];
                sd += dx[a] * vals[a];
            }
            v += wyb * sv;
            gx += wyb * sd;
            gy += dyb * sv;
        }
        Ok((v, [gx / g.h, gy / g.h]))
    }
}

/// Cell index `i ∈ [2, N-4]` and local coordinate `t ∈ [0, 1]`.
#[inline]
fn locate(g: &Grid, x: f64) -> (usize, f64) {
    let s = (x + 1.0) / g.h;
    let i = (s.floor() as isize).clamp(2, g.n as isize - 4) as usize;
    (i, (s - i as f64).clamp(0.0, 1.0))
}

/// Weights over nodes `i-2..=i+3` for the value and the `t`-derivative of the
/// cubic Hermite patch on `[i, i+1]` with slopes
/// `h f'_k = (f_{k-2} - 8 f_{k-1} + 8 f_{k+1} - f_{k+2}) / 12`.
#[inline]
fn hermite_weights(t: f64) -> ([f64; 6], [f64; 6]) {
    let t2 = t * t;
    let t3 = t2 * t;
    let h00 = 2.0 * t3 - 3.0 * t2 + 1.0;
    let h10 = t3 - 2.0 * t2 + t;
    let h01 = -2.0 * t3 + 3.0 * t2;
    let h11 = t3 - t2;
    let d00 = 6.0 * t2 - 6.0 * t;
    let d10 = 3.0 * t2 - 4.0 * t + 1.0;
    let d01 = -6.0 * t2 + 6.0 * t;
    let d11 = 3.0 * t2 - 2.0 * t;
    let mix = |p00: f64, p10: f64, p01: f64, p11: f64| {
        [
            p10 / 12.0,
            (-8.0 * p10 + p11) / 12.0,
            p00 - 8.0 * p11 / 12.0,
            p01 + 8.0 * p10 / 12.0,
            (-p10 + 8.0 * p11) / 12.0,
            -p11 / 12.0,
        ]
    };
    (mix(h00, h10, h01, h11), mix(d00, d10, d01, d11))
}

/// Classification of a node relative to a disk.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NodeClass {
    /// Inside the closed disk with all four neighbours inside.
    Interior,
    /// Inside the closed disk with a neighbour outside.
    Band,
    Exterior,
}

/// Disk `B_radius(center)` realized on a grid.
#[derive(Clone, Debug)]
pub struct DiskMask {
    grid: Grid,
    radius: f64,
    center: Point,
    classes: Vec<NodeClass>,
    /// Cell `(i, j)` spans nodes `i..=i+1`, `j..=j+1`; stored at `j (N-1) + i`.
    weights: Vec<f64>,
}

/// Builds the mask of `B_radius(center)`, which must lie in `[-1, 1]²`.
pub fn disk_mask(grid: &Grid, radius: f64, center: Point) -> Result<DiskMask> {
    if !(radius > 0.0 && radius.is_finite()) {
        return Err(Error::param("radius", "must be positive"));
    }
    let tol = 1e-12;
    if center[0].abs() + radius > 1.0 + tol || center[1].abs() + radius > 1.0 + tol {
        return Err(Error::OutOfDomain(format!(
            "ball of radius {radius} at ({}, {}) leaves the square",
            center[0], center[1]
        )));
    }
    let n = grid.n();
    let inside: Vec<bool> = (0..grid.len())
        .map(|k| {
            let p = grid.node(k % n, k / n);
            (p[0] - center[0]).hypot(p[1] - center[1]) <= radius
        })
        .collect();
    let mut classes = vec![NodeClass::Exterior; grid.len()];
    for j in 0..n {
        for i in 0..n {
            let k = grid.index(i, j);
            if !inside[k] {
                continue;
            }
            let interior = i > 0
                && j > 0
                && i + 1 < n
                && j + 1 < n
                && inside[k - 1]
                && inside[k + 1]
                && inside[k - n]
                && inside[k + n];
            classes[k] = if interior {
                NodeClass::Interior
            } else {
                NodeClass::Band
            };
        }
    }
    let mut weights = vec![0.0; (n - 1) * (n - 1)];
    for j in 0..n - 1 {
        for i in 0..n - 1 {
            let k = grid.index(i, j);
            let c = [inside[k], inside[k + 1], inside[k + n], inside[k + n + 1]]
                .iter()
                .filter(|&&b| b)
                .count();
            weights[j * (n - 1) + i] = c as f64 / 4.0;
        }
    }
    Ok(DiskMask {
        grid: *grid,
        radius,
        center,
        classes,
        weights,
    })
}

impl DiskMask {
    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn center(&self) -> Point {
        self.center
    }

    #[inline]
    pub fn class(&self, i: usize, j: usize) -> NodeClass {
        self.classes[self.grid.index(i, j)]
    }

    #[inline]
    pub fn contains(&self, i: usize, j: usize) -> bool {
        self.class(i, j) != NodeClass::Exterior
    }

    /// Inside-fraction of cell `(i, j)`, `i, j < N - 1`.
    #[inline]
    pub fn cell_weight(&self, i: usize, j: usize) -> f64 {
        self.weights[j * (self.grid.n() - 1) + i]
    }

    /// `Σ w_cell h²`.
    pub fn area(&self) -> f64 {
        let h = self.grid.h();
        crate::numeric::compensated_sum(&self.weights) * h * h
    }

    /// Cell-weighted quadrature of the corner average of `node_values`.
    pub fn integrate_nodes(&self, node_values: &[f64]) -> Result<f64> {
        if node_values.len() != self.grid.len() {
            return Err(Error::GridMismatch("node array length".into()));
        }
        let n = self.grid.n();
        let h = self.grid.h();
        let mut total = 0.0;
        for j in 0..n - 1 {
            let mut row = 0.0;
            for i in 0..n - 1 {
                let w = self.cell_weight(i, j);
                if w == 0.0 {
                    continue;
                }
                let k = self.grid.index(i, j);
                let avg = 0.25
                    * (node_values[k] + node_values[k + 1] + node_values[k + n] + node_values[k + n + 1]);
                row += w * avg;
            }
            total += row;
        }
        Ok(total * h * h)
    }
}
