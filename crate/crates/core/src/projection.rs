//! Projection onto the 2-homogeneous harmonic polynomials
//! `p = a (x1^2 - x2^2) + b x1 x2`.
//!
//! `Π(v)` minimizes `∫_{B1} |D²v - D²p|²` over such `p`. Since `D²p` is
//! constant and trace-free, the minimizer is the trace-free part of the
//! averaged Hessian: `a = avg(v11 - v22)/4`, `b = avg(v12)`.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_4};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{ball_weights, bilinear_at, hessian, integrate_with, rescale_masked, Grid2D, Point, ScalarField};

/// Share of the unit ball allowed to have an invalid Hessian before the
/// projection carries an accuracy warning.
pub const EXCLUDED_WARN_FRACTION: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct HarmonicPoly2 {
    pub a: f64,
    pub b: f64,
}

impl HarmonicPoly2 {
    pub const XY: HarmonicPoly2 = HarmonicPoly2 { a: 0.0, b: 1.0 };

    pub fn new(a: f64, b: f64) -> Self {
        HarmonicPoly2 { a, b }
    }

    /// `t · x1 x2` turned by `theta`, i.e. `t q1 q2` with `q = R(-θ) x`.
    pub fn rotated_xy(t: f64, theta: f64) -> Self {
        let (s, c) = (2.0 * theta).sin_cos();
        HarmonicPoly2::new(-0.5 * t * s, t * c)
    }

    pub fn eval(&self, p: Point) -> f64 {
        self.a * (p.x * p.x - p.y * p.y) + self.b * p.x * p.y
    }

    pub fn gradient(&self, p: Point) -> (f64, f64) {
        (2.0 * self.a * p.x + self.b * p.y, -2.0 * self.a * p.y + self.b * p.x)
    }

    /// `(p11, p12, p22)`.
    pub fn hessian(&self) -> (f64, f64, f64) {
        (2.0 * self.a, self.b, -2.0 * self.a)
    }

    /// `sup_{B1} |p|`; on the unit circle `p = τ cos(2(α - φ))`.
    pub fn sup_norm(&self) -> f64 {
        self.a.hypot(0.5 * self.b)
    }

    /// Direction `φ` of the maximum of `p` on the unit circle, in `(-π/2, π/2]`.
    pub fn direction(&self) -> f64 {
        0.5 * (0.5 * self.b).atan2(self.a)
    }

    /// Angle of the zero lines, `φ - π/4` reduced modulo `π/2` into
    /// `(-π/4, π/4]`. For `t q1 q2` with `q` turned by `θ` this is `θ`.
    pub fn cross_angle(&self) -> f64 {
        canonical_cross_angle(self.direction() - FRAC_PI_4)
    }

    pub fn add(&self, o: &HarmonicPoly2) -> HarmonicPoly2 {
        HarmonicPoly2::new(self.a + o.a, self.b + o.b)
    }

    pub fn scale(&self, s: f64) -> HarmonicPoly2 {
        HarmonicPoly2::new(s * self.a, s * self.b)
    }
}

/// Reduces an angle modulo `π/2` into `(-π/4, π/4]`.
pub fn canonical_cross_angle(t: f64) -> f64 {
    let r = (t + FRAC_PI_4).rem_euclid(FRAC_PI_2) - FRAC_PI_4;
    if r <= -FRAC_PI_4 {
        r + FRAC_PI_2
    } else {
        r
    }
}

/// Distance between two cross directions, modulo quarter turns; in `[0, π/4]`.
pub fn cross_angle_distance(s: f64, t: f64) -> f64 {
    let d = (s - t).rem_euclid(FRAC_PI_2);
    d.min(FRAC_PI_2 - d)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectionResult {
    pub p: HarmonicPoly2,
    pub tau: f64,
    /// Direction of the maximum of `p`, in `(-π/2, π/2]`.
    pub phi: f64,
    /// Canonical zero-line angle in `(-π/4, π/4]`.
    pub cross_angle: f64,
    /// `sup_{B1} |v - p|` over valid nodes.
    pub remainder_sup: f64,
    /// `sup_{B1} |∇(v - p)|` with central differences.
    pub remainder_grad: f64,
    /// Area share of the unit ball whose Hessian could not be evaluated.
    pub excluded_fraction: f64,
    pub warning: Option<String>,
}

/// Trace-free averaged Hessian over `B_radius(center)`; also returns the
/// excluded area fraction.
fn averaged_coefficients(v: &ScalarField, center: Point, radius: f64) -> Result<(HarmonicPoly2, f64)> {
    v.grid().check_region(center, radius, 1.0)?;
    let hs = hessian(v)?;
    let w = ball_weights(v.grid(), center, radius);
    let d11 = integrate_with(&hs.f11, &w);
    let d12 = integrate_with(&hs.f12, &w);
    let d22 = integrate_with(&hs.f22, &w);
    if d11.area <= 0.0 {
        return Err(Error::Geometry("no valid Hessian values inside the ball".into()));
    }
    let a = (d11.integral - d22.integral) / (4.0 * d11.area);
    let b = d12.integral / d12.area;
    Ok((HarmonicPoly2::new(a, b), d11.excluded_fraction()))
}

/// `Π(v)` over the unit ball about the origin of `v`'s coordinates.
pub fn project(v: &ScalarField) -> Result<ProjectionResult> {
    let (p, excluded) = averaged_coefficients(v, Point::ORIGIN, 1.0)?;
    let (remainder_sup, remainder_grad) = remainders(v, &p)?;
    let warning = (excluded > EXCLUDED_WARN_FRACTION).then(|| {
        format!(
            "Hessian unavailable on {:.2}% of the unit ball; projection accuracy is reduced",
            100.0 * excluded
        )
    });
    Ok(ProjectionResult {
        p,
        tau: p.sup_norm(),
        phi: p.direction(),
        cross_angle: p.cross_angle(),
        remainder_sup,
        remainder_grad,
        excluded_fraction: excluded,
        warning,
    })
}

fn remainders(v: &ScalarField, p: &HarmonicPoly2) -> Result<(f64, f64)> {
    let g = v.grid();
    let h = g.h();
    let mut sup = 0.0f64;
    let mut grad = 0.0f64;
    for j in 1..g.ny() - 1 {
        for i in 1..g.nx() - 1 {
            let x = g.node(i, j);
            if x.norm() > 1.0 + 1e-12 || !v.is_valid(i, j) {
                continue;
            }
            sup = sup.max((v.get(i, j) - p.eval(x)).abs());
            let ok = v.is_valid(i + 1, j) && v.is_valid(i - 1, j) && v.is_valid(i, j + 1) && v.is_valid(i, j - 1);
            if ok {
                // p is quadratic, so its central differences are exact.
                let (p1, p2) = p.gradient(x);
                let d1 = (v.get(i + 1, j) - v.get(i - 1, j)) / (2.0 * h) - p1;
                let d2 = (v.get(i, j + 1) - v.get(i, j - 1)) / (2.0 * h) - p2;
                grad = grad.max(d1.hypot(d2));
            }
        }
    }
    Ok((sup, grad))
}

/// `∫_{B1} |D²v - D²p|²` (Frobenius) with the quadrature used by [`project`].
pub fn hessian_misfit(v: &ScalarField, p: &HarmonicPoly2) -> Result<f64> {
    v.grid().check_region(Point::ORIGIN, 1.0, 1.0)?;
    let hs = hessian(v)?;
    let (p11, p12, p22) = p.hessian();
    let frob = hs.f11.zip_with(&hs.f22, |a, c| (a - p11).powi(2) + (c - p22).powi(2))?;
    let frob = frob.zip_with(&hs.f12, |s, b| s + 2.0 * (b - p12).powi(2))?;
    let w = ball_weights(v.grid(), Point::ORIGIN, 1.0);
    Ok(integrate_with(&frob, &w).integral)
}

/// Target grid for `u(x0 + r x)/r^2` whose nodes map onto nodes of `grid`,
/// covering the unit ball with two spare cells.
pub fn rescaled_grid(grid: &Grid2D, x0: Point, r: f64) -> Result<Grid2D> {
    if !(r > 0.0) {
        return Err(Error::Argument(format!("radius must be positive, got {r}")));
    }
    let ht = grid.h() / r;
    let k = (1.0 / ht).ceil() as usize + 2;
    let (fx, fy) = grid.locate(x0);
    let (ic, jc) = (fx.round(), fy.round());
    let node = Point::new(grid.origin().x + ic * grid.h(), grid.origin().y + jc * grid.h());
    let off = node.sub(x0).scale(1.0 / r);
    let kk = k as f64 * ht;
    Grid2D::new(2 * k + 1, 2 * k + 1, ht, Point::new(off.x - kk, off.y - kk))
}

/// `u(x0 + r x)/r^2` on [`rescaled_grid`].
pub fn rescaled_field(u: &ScalarField, x0: Point, r: f64) -> Result<ScalarField> {
    let target = rescaled_grid(u.grid(), x0, r)?;
    u.grid().check_region(x0, r, 4.0)?;
    rescale_masked(u, x0, r, 2.0, &target)
}

/// `Π(u(x0 + r ·)/r^2)`.
pub fn project_rescaled(u: &ScalarField, x0: Point, r: f64) -> Result<ProjectionResult> {
    project(&rescaled_field(u, x0, r)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RemainderNorms {
    pub remainder_sup: f64,
    pub remainder_grad: f64,
    /// Set when `x0` is not a critical zero of `u` to grid tolerance.
    pub warning: Option<String>,
}

pub fn remainder_norms(u: &ScalarField, x0: Point, r: f64) -> Result<RemainderNorms> {
    let res = project_rescaled(u, x0, r)?;
    let warning = match check_critical_zero(u, x0) {
        Ok(_) => None,
        Err(e @ Error::NotCriticalZero { .. }) => Some(e.to_string()),
        Err(e) => return Err(e),
    };
    Ok(RemainderNorms {
        remainder_sup: res.remainder_sup,
        remainder_grad: res.remainder_grad,
        warning,
    })
}

/// Value and gradient at a point, with the tolerances they were held to.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CriticalZero {
    pub value: f64,
    pub grad: f64,
    pub value_tol: f64,
    pub grad_tol: f64,
}

/// Constant in the critical-zero tolerance `C h^2 (1 + H)`.
pub const CRITICAL_ZERO_C: f64 = 4.0;

/// Checks `|u(x0)| <= C h^2 (1 + H)` and `|∇u(x0)| <= C h (1 + H)` where `H`
/// bounds the discrete second derivatives next to `x0`. Values and central
/// differences are interpolated bilinearly from the surrounding nodes.
pub fn check_critical_zero(u: &ScalarField, x0: Point) -> Result<CriticalZero> {
    let g = u.grid();
    let h = g.h();
    g.check_region(x0, 0.0, 3.0)?;
    let (fx, fy) = g.locate(x0);
    let (i0, j0) = (fx.floor() as usize, fy.floor() as usize);
    let (tx, ty) = (fx - i0 as f64, fy - j0 as f64);
    let node_ok = |i: usize, j: usize| u.is_valid(i, j);
    let mut big_h = 0.0f64;
    let mut g1 = [[0.0; 2]; 2];
    let mut g2 = [[0.0; 2]; 2];
    for dj in 0..2 {
        for di in 0..2 {
            let (i, j) = (i0 + di, j0 + dj);
            for (a, b) in [(i - 1, j), (i + 1, j), (i, j - 1), (i, j + 1), (i - 1, j - 1), (i + 1, j + 1), (i - 1, j + 1), (i + 1, j - 1)] {
                if !node_ok(a, b) {
                    return Err(Error::Geometry(format!(
                        "stencil around ({}, {}) touches a masked node",
                        x0.x, x0.y
                    )));
                }
            }
            g1[dj][di] = (u.get(i + 1, j) - u.get(i - 1, j)) / (2.0 * h);
            g2[dj][di] = (u.get(i, j + 1) - u.get(i, j - 1)) / (2.0 * h);
            let c = u.get(i, j);
            let d11 = (u.get(i + 1, j) - 2.0 * c + u.get(i - 1, j)) / (h * h);
            let d22 = (u.get(i, j + 1) - 2.0 * c + u.get(i, j - 1)) / (h * h);
            let d12 =
                (u.get(i + 1, j + 1) - u.get(i + 1, j - 1) - u.get(i - 1, j + 1) + u.get(i - 1, j - 1)) / (4.0 * h * h);
            big_h = big_h.max(d11.abs()).max(d22.abs()).max(d12.abs());
        }
    }
    let bil = |m: [[f64; 2]; 2]| (1.0 - ty) * ((1.0 - tx) * m[0][0] + tx * m[0][1]) + ty * ((1.0 - tx) * m[1][0] + tx * m[1][1]);
    let value = bilinear_at(u, x0)?;
    let grad = bil(g1).hypot(bil(g2));
    let value_tol = CRITICAL_ZERO_C * h * h * (1.0 + big_h);
    let grad_tol = CRITICAL_ZERO_C * h * (1.0 + big_h);
    if value.abs() > value_tol || grad > grad_tol {
        return Err(Error::NotCriticalZero {
            x: x0.x,
            y: x0.y,
            value: value.abs(),
            grad,
            tol: value_tol,
        });
    }
    Ok(CriticalZero {
        value,
        grad,
        value_tol,
        grad_tol,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analytic::{eval_z, SyntheticSingularField};
    use std::f64::consts::PI;

    fn grid(h: f64) -> Grid2D {
        let n = (1.25 / h).round() as usize;
        Grid2D::centered(h, n).unwrap()
    }

    #[test]
    fn polynomial_closed_forms() {
        let p = HarmonicPoly2::XY;
        assert_eq!(p.sup_norm(), 0.5);
        assert!((p.direction() - FRAC_PI_4).abs() < 1e-15);
        assert!(p.cross_angle().abs() < 1e-15);
        let q = HarmonicPoly2::new(1.0, 0.0);
        assert_eq!(q.direction(), 0.0);
        let r = HarmonicPoly2::rotated_xy(3.0, 0.3);
        assert!((r.cross_angle() - 0.3).abs() < 1e-14);
        assert!((r.sup_norm() - 1.5).abs() < 1e-14);
        let x = Point::new(0.4, -0.7);
        let (s, c) = 0.3f64.sin_cos();
        let qx = Point::new(c * x.x + s * x.y, -s * x.x + c * x.y);
        assert!((r.eval(x) - 3.0 * qx.x * qx.y).abs() < 1e-14);
    }

    #[test]
    fn canonical_angles() {
        assert!((canonical_cross_angle(FRAC_PI_4) - FRAC_PI_4).abs() < 1e-15);
        assert!((canonical_cross_angle(-FRAC_PI_4) - FRAC_PI_4).abs() < 1e-15);
        assert!((canonical_cross_angle(1.0 + FRAC_PI_2) - (1.0 - FRAC_PI_2)).abs() < 1e-12);
        assert!((canonical_cross_angle(0.2 + 3.0 * FRAC_PI_2) - 0.2).abs() < 1e-12);
        assert!((cross_angle_distance(0.1, FRAC_PI_2 - 0.1) - 0.2).abs() < 1e-12);
        assert!((cross_angle_distance(0.0, PI) - 0.0).abs() < 1e-12);
    }

    #[test]
    fn project_examples() {
        let g = grid(1.0 / 64.0);
        let xy = ScalarField::from_fn(g, |p| p.x * p.y).unwrap();
        let res = project(&xy).unwrap();
        assert!((res.p.a).abs() < 1e-12 && (res.p.b - 1.0).abs() < 1e-12);
        assert!((res.tau - 0.5).abs() < 1e-12);
        assert!((res.phi - FRAC_PI_4).abs() < 1e-12);
        assert!(res.remainder_sup < 1e-12 && res.remainder_grad < 1e-10);
        assert!(res.warning.is_none());

        let r2 = ScalarField::from_fn(g, |p| p.x * p.x + p.y * p.y).unwrap();
        let res = project(&r2).unwrap();
        assert!(res.p.a.abs() < 1e-12 && res.p.b.abs() < 1e-12);

        let cubic = ScalarField::from_fn(g, |p| p.x.powi(3)).unwrap();
        let res = project(&cubic).unwrap();
        assert!(res.p.a.abs() < 1e-12 && res.p.b.abs() < 1e-12);
    }

    #[test]
    fn projection_of_z_vanishes() {
        let h = 1.0 / 128.0;
        let z = ScalarField::from_fn(grid(h), eval_z).unwrap();
        let res = project(&z).unwrap();
        let bound = h * h + h * h.ln().abs();
        assert!(res.p.a.abs() <= bound && res.p.b.abs() <= bound, "{:?}", res.p);
    }

    #[test]
    fn tau_of_half_scale_z() {
        let h = 1.0 / 256.0;
        let z = ScalarField::from_fn(grid(h), eval_z).unwrap();
        let res = project_rescaled(&z, Point::ORIGIN, 0.5).unwrap();
        let expect = 2f64.ln() / (2.0 * PI);
        assert!((res.tau - expect).abs() < 2e-3, "tau {}", res.tau);
        assert!((res.p.b - 2f64.ln() / PI).abs() < 4e-3);
    }

    #[test]
    fn rescaled_harmonic_is_scale_invariant() {
        let g = grid(1.0 / 64.0);
        let q = ScalarField::from_fn(g, |p| p.x * p.x - p.y * p.y).unwrap();
        let base = project(&q).unwrap();
        for &r in &[1.0, 0.5, 0.3, 0.125] {
            let res = project_rescaled(&q, Point::ORIGIN, r).unwrap();
            assert!((res.p.a - base.p.a).abs() < 1e-10 && (res.p.b - base.p.b).abs() < 1e-10);
        }
        let xy = ScalarField::from_fn(g, |p| p.x * p.y).unwrap();
        let res = project_rescaled(&xy, Point::new(0.1, -0.05), 0.4).unwrap();
        assert!((res.tau - 0.5).abs() < 1e-10 && (res.phi - FRAC_PI_4).abs() < 1e-10);
        assert!(project_rescaled(&xy, Point::ORIGIN, 1.3).is_err());
    }

    #[test]
    fn remainder_of_z_and_synthetic_family() {
        let h = 1.0 / 64.0;
        let g = grid(h);
        let z = ScalarField::from_fn(g, eval_z).unwrap();
        let rz = remainder_norms(&z, Point::ORIGIN, 1.0).unwrap();
        assert!(rz.warning.is_none());
        let diag = eval_z(Point::new(0.5f64.sqrt(), 0.5f64.sqrt())).abs();
        assert!(rz.remainder_sup >= diag);
        let dense = z.sup_abs_in_ball(Point::ORIGIN, 1.0);
        assert!((rz.remainder_sup - dense).abs() < 0.01 * dense);
        for m in [5.0, 50.0] {
            let u = SyntheticSingularField::axis_aligned(m).unwrap().sample(g).unwrap();
            let ru = remainder_norms(&u, Point::ORIGIN, 1.0).unwrap();
            assert!((ru.remainder_sup - rz.remainder_sup).abs() < 1e-9 * m);
            assert!((ru.remainder_grad - rz.remainder_grad).abs() < 1e-9 * m);
        }
    }

    #[test]
    fn critical_zero_guard() {
        let g = grid(1.0 / 64.0);
        let bump = ScalarField::from_fn(g, |p| 0.25 * (1.0 - p.x * p.x - p.y * p.y)).unwrap();
        assert!(matches!(
            check_critical_zero(&bump, Point::ORIGIN),
            Err(Error::NotCriticalZero { .. })
        ));
        let xy = ScalarField::from_fn(g, |p| p.x * p.y).unwrap();
        assert!(check_critical_zero(&xy, Point::ORIGIN).is_ok());
        let w = remainder_norms(&bump, Point::ORIGIN, 0.5).unwrap();
        assert!(w.warning.is_some());
    }
}
