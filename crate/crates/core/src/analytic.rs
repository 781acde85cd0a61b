//! Closed-form potentials: `v`, its odd reflection `w`, the normalized cross
//! potential `z`, the synthetic singular family `z + M x1 x2`, and indicator
//! fields of simple regions.
//!
//! `z` solves `Δz = -χ{x1 x2 > 0}` in the plane with `z(0) = |∇z(0)| = 0`,
//! and its projection onto the harmonic quadratics vanishes. Under dyadic
//! rescaling it picks up a multiple of `x1 x2`:
//!
//! ```text
//! z(r x) / r^2 = z(x) - x1 x2 log(r^2) / (2π)
//! ```

use std::f64::consts::{FRAC_PI_2, PI};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{Grid2D, Point, ScalarField};

/// `v` on the closed first quadrant, extended by continuity to both axes
/// and the origin (where it vanishes).
fn v_quadrant(a: f64, b: f64) -> f64 {
    let rho = a * a + b * b;
    if rho == 0.0 {
        return 0.0;
    }
    let ang = b.atan2(a);
    -4.0 * a * b * rho.ln() + 2.0 * (a * a - b * b) * (FRAC_PI_2 - 2.0 * ang) - PI * rho
}

/// Gradient of `v` on the closed first quadrant (continuous up to the axes).
fn v_grad_quadrant(a: f64, b: f64) -> (f64, f64) {
    let rho = a * a + b * b;
    if rho == 0.0 {
        return (0.0, 0.0);
    }
    let l = rho.ln() + 1.0;
    let ang = b.atan2(a);
    (-4.0 * b * l - 8.0 * a * ang, -4.0 * a * l - 8.0 * b * (FRAC_PI_2 - ang))
}

/// Hessian `(v11, v12, v22)` in the open first quadrant.
fn v_hess_quadrant(a: f64, b: f64) -> (f64, f64, f64) {
    let ang = b.atan2(a);
    (-8.0 * ang, -4.0 * (a * a + b * b).ln() - 12.0, -4.0 * PI + 8.0 * ang)
}

fn sign(t: f64) -> f64 {
    if t > 0.0 {
        1.0
    } else if t < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// `v(x1, x2)` for `x1 > 0`, `x2 >= 0`.
pub fn eval_v(x1: f64, x2: f64) -> Result<f64> {
    if !(x1 > 0.0) || !(x2 >= 0.0) || !x1.is_finite() || !x2.is_finite() {
        return Err(Error::Argument(format!("v is defined for x1 > 0, x2 >= 0; got ({x1}, {x2})")));
    }
    Ok(v_quadrant(x1, x2))
}

/// `w(x) = sgn(x1) sgn(x2) v(|x1|, |x2|)`: odd under either axis reflection,
/// even under `x -> -x`, and zero on both axes.
pub fn eval_w(p: Point) -> f64 {
    sign(p.x) * sign(p.y) * v_quadrant(p.x.abs(), p.y.abs())
}

pub fn eval_z(p: Point) -> f64 {
    (eval_w(p) - PI * (p.x * p.x + p.y * p.y) + 8.0 * p.x * p.y) / (8.0 * PI)
}

/// Gradient of `z`; continuous everywhere, axis values are the common limits.
pub fn eval_z_grad(p: Point) -> (f64, f64) {
    let (v1, v2) = v_grad_quadrant(p.x.abs(), p.y.abs());
    // On an axis the reflected factor is irrelevant: v1 vanishes on {x2 = 0}
    // and v2 vanishes on {x1 = 0}.
    let sy = if p.y < 0.0 { -1.0 } else { 1.0 };
    let sx = if p.x < 0.0 { -1.0 } else { 1.0 };
    let w1 = sy * v1;
    let w2 = sx * v2;
    (
        (w1 - 2.0 * PI * p.x + 8.0 * p.y) / (8.0 * PI),
        (w2 - 2.0 * PI * p.y + 8.0 * p.x) / (8.0 * PI),
    )
}

/// Hessian `(z11, z12, z22)`. Refused on the axes, where the second
/// derivatives jump and `z12` has a logarithmic singularity at the origin.
pub fn eval_z_hess(p: Point) -> Result<(f64, f64, f64)> {
    if p.x == 0.0 || p.y == 0.0 {
        return Err(Error::AxisSingularity { x: p.x, y: p.y });
    }
    let s = sign(p.x) * sign(p.y);
    let (v11, v12, v22) = v_hess_quadrant(p.x.abs(), p.y.abs());
    let c = 1.0 / (8.0 * PI);
    Ok(((s * v11 - 2.0 * PI) * c, (v12 + 8.0) * c, (s * v22 - 2.0 * PI) * c))
}

/// The cross potential `z` as a value type.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CrossPotential;

impl CrossPotential {
    pub fn value(&self, p: Point) -> f64 {
        eval_z(p)
    }

    pub fn gradient(&self, p: Point) -> (f64, f64) {
        eval_z_grad(p)
    }

    pub fn hessian(&self, p: Point) -> Result<(f64, f64, f64)> {
        eval_z_hess(p)
    }

    pub fn sample(&self, grid: Grid2D) -> Result<ScalarField> {
        ScalarField::from_fn(grid, eval_z)
    }
}

/// `u(x) = z(q) + M q1 q2` with `q = R(-θ)(x - x0)`: the cross `{x1 x2 > 0}`
/// turned by `θ` and moved to `x0`, plus `M` times the matching quadratic.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSingularField {
    pub m: f64,
    pub theta: f64,
    pub center: Point,
}

impl SyntheticSingularField {
    pub fn new(m: f64, theta: f64, center: Point) -> Result<Self> {
        if !(m >= 0.0) || !m.is_finite() {
            return Err(Error::Argument(format!("synthetic strength M must be finite and >= 0, got {m}")));
        }
        if !theta.is_finite() || !center.x.is_finite() || !center.y.is_finite() {
            return Err(Error::Argument("synthetic angle and center must be finite".into()));
        }
        Ok(SyntheticSingularField { m, theta, center })
    }

    /// Centered, unrotated member of the family.
    pub fn axis_aligned(m: f64) -> Result<Self> {
        SyntheticSingularField::new(m, 0.0, Point::ORIGIN)
    }

    /// Local frame coordinates of `x`.
    pub fn frame(&self, x: Point) -> Point {
        let d = x.sub(self.center);
        if self.theta == 0.0 {
            return d;
        }
        let (s, c) = self.theta.sin_cos();
        Point::new(c * d.x + s * d.y, -s * d.x + c * d.y)
    }

    pub fn value(&self, x: Point) -> f64 {
        let q = self.frame(x);
        eval_z(q) + self.m * q.x * q.y
    }

    /// The family member seen at scale `s` about the center:
    /// `u(x0 + s x) / s^2` is again synthetic with `M' = M + log(1/s)/π`.
    pub fn rescaled(&self, s: f64) -> Result<Self> {
        if !(s > 0.0) {
            return Err(Error::Argument(format!("scale must be positive, got {s}")));
        }
        SyntheticSingularField::new(self.m + (1.0 / s).ln() / PI, self.theta, Point::ORIGIN)
    }

    pub fn sample(&self, grid: Grid2D) -> Result<ScalarField> {
        ScalarField::from_fn(grid, |p| self.value(p))
    }
}

pub fn eval_synthetic(field: &SyntheticSingularField, x: Point) -> f64 {
    field.value(x)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Region {
    /// `{q1 q2 > 0}` in the frame turned by `theta` about the origin.
    Cross { theta: f64 },
    /// `{x : n . (x - point) > 0}` with `n = (cos normal_angle, sin normal_angle)`.
    HalfPlane { point: Point, normal_angle: f64 },
    Disk { center: Point, radius: f64 },
}

impl Region {
    /// Signed membership: positive inside, zero on the boundary.
    fn level(&self, x: Point) -> f64 {
        match *self {
            Region::Cross { theta } => {
                let q = if theta == 0.0 {
                    x
                } else {
                    let (s, c) = theta.sin_cos();
                    Point::new(c * x.x + s * x.y, -s * x.x + c * x.y)
                };
                q.x * q.y
            }
            Region::HalfPlane { point, normal_angle } => {
                let (s, c) = normal_angle.sin_cos();
                c * (x.x - point.x) + s * (x.y - point.y)
            }
            Region::Disk { center, radius } => {
                let d = x.sub(center);
                radius * radius - (d.x * d.x + d.y * d.y)
            }
        }
    }

    /// 1 inside, 0 outside, 1/2 exactly on the boundary.
    pub fn indicator(&self, x: Point) -> f64 {
        let l = self.level(x);
        if l > 0.0 {
            1.0
        } else if l < 0.0 {
            0.0
        } else {
            0.5
        }
    }
}

pub fn sample_indicator(region: Region, grid: Grid2D) -> Result<ScalarField> {
    ScalarField::from_fn(grid, |p| region.indicator(p))
}
