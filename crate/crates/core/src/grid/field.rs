use super::{Point, ScalarField};
use crate::error::Result;

/// Anything that yields a value and gradient at a point.
pub trait Field: Sync {
    fn eval(&self, x: Point) -> Result<(f64, Point)>;

    fn value(&self, x: Point) -> Result<f64> {
        Ok(self.eval(x)?.0)
    }

    /// Grid spacing in the field's own coordinates, `None` for analytic fields.
    fn resolution(&self) -> Option<f64> {
        None
    }
}

impl Field for ScalarField {
    fn eval(&self, x: Point) -> Result<(f64, Point)> {
        self.sample(x)
    }

    fn resolution(&self) -> Option<f64> {
        Some(self.grid().h())
    }
}

impl<F: Field + ?Sized> Field for &F {
    fn eval(&self, x: Point) -> Result<(f64, Point)> {
        (**self).eval(x)
    }

    fn resolution(&self) -> Option<f64> {
        (**self).resolution()
    }
}

/// Closure-backed analytic field returning `(value, gradient)`.
pub struct FnField<F>(pub F);

impl<F> Field for FnField<F>
where
    F: Fn(Point) -> (f64, Point) + Sync,
{
    fn eval(&self, x: Point) -> Result<(f64, Point)> {
        Ok((self.0)(x))
    }
}

/// `x ↦ u(c + R x) / m` on the unit disk, with gradient `R ∇u / m`.
pub struct BallView<'a, F: ?Sized> {
    inner: &'a F,
    center: Point,
    radius: f64,
    norm: f64,
}

impl<'a, F: Field + ?Sized> BallView<'a, F> {
    pub fn new(inner: &'a F, center: Point, radius: f64, norm: f64) -> Self {
        BallView {
            inner,
            center,
            radius,
            norm,
        }
    }

    /// Plain translation and dilation, no normalization.
    pub fn unnormalized(inner: &'a F, center: Point, radius: f64) -> Self {
        Self::new(inner, center, radius, 1.0)
    }

    pub fn center(&self) -> Point {
        self.center
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }
}

impl<F: Field + ?Sized> Field for BallView<'_, F> {
    fn eval(&self, x: Point) -> Result<(f64, Point)> {
        let y = [
            self.center[0] + self.radius * x[0],
            self.center[1] + self.radius * x[1],
        ];
        let (v, g) = self.inner.eval(y)?;
        let s = self.radius / self.norm;
        Ok((v / self.norm, [g[0] * s, g[1] * s]))
    }

    fn resolution(&self) -> Option<f64> {
        self.inner.resolution().map(|h| h / self.radius)
    }
}
