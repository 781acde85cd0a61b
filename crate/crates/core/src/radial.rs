//! Radius-indexed diagnostics at a center: the circle norm `S^u(x0, r)`,
//! the Weiss functional `Φ`, dyadic profiles and blow-up classification.

use std::f64::consts::PI;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{ball_weights, circle_trace, gradient, integrate_with, laplacian, Point, ScalarField};
use crate::projection::{check_critical_zero, project_rescaled, CriticalZero};

/// Circle samples used for `S` and `Φ` at radius `r`: at least 256 and at
/// least four per grid cell of circumference.
pub fn circle_samples(r: f64, h: f64) -> usize {
    let by_h = (4.0 * 2.0 * PI * r / h).ceil() as usize;
    by_h.max(256)
}

/// `S^u(x0, r) = (r^{-1} ∫_{∂B_r} u² dH¹)^{1/2}`, which in the plane is
/// `(∫_0^{2π} u(x0 + r e(θ))² dθ)^{1/2}`.
pub fn s_norm(u: &ScalarField, x0: Point, r: f64) -> Result<f64> {
    let m = circle_samples(r, u.grid().h());
    let t = circle_trace(u, x0, r, m)?;
    Ok(t.integrate_dtheta(|v| v * v).sqrt())
}

/// Fields that `Φ` needs at every radius about a fixed center.
pub struct PhiContext<'a> {
    u: &'a ScalarField,
    center: Point,
    /// `u Δ_h u + 2 u⁺`.
    bulk: ScalarField,
    /// `(x - x0)·∇u - 2u`, zero for 2-homogeneous functions about `x0`.
    euler: ScalarField,
}

impl<'a> PhiContext<'a> {
    pub fn new(u: &'a ScalarField, center: Point) -> Result<Self> {
        let lap = laplacian(u)?;
        let bulk = u.zip_with(&lap, |v, l| v * l + 2.0 * v.max(0.0))?;
        let (g1, g2) = gradient(u)?;
        let g = *u.grid();
        let nx = g.nx();
        let vals: Vec<f64> = (0..g.len())
            .into_par_iter()
            .map(|k| {
                let x = g.node(k % nx, k / nx).sub(center);
                x.x * g1.values()[k] + x.y * g2.values()[k] - 2.0 * u.values()[k]
            })
            .collect();
        let euler = ScalarField::from_values(g, vals)?.with_mask(
            (0..g.len())
                .map(|k| g1.is_valid(k % nx, k / nx) && u.is_valid(k % nx, k / nx))
                .collect(),
        )?;
        Ok(PhiContext { u, center, bulk, euler })
    }

    /// `Φ(r) = r^{-4} ∫_{B_r}(|∇u|² - 2u⁺) - 2 r^{-5} ∫_{∂B_r} u²`, evaluated
    /// through Green's identity as
    /// `r^{-4} [∫_0^{2π} u ((x-x0)·∇u - 2u) dθ - ∫_{B_r}(u Δu + 2u⁺)]`.
    /// The quadratic-in-amplitude parts of the two terms cancel node by node,
    /// so large multiples of a homogeneous quadratic do not amplify
    /// quadrature error.
    pub fn phi(&self, r: f64) -> Result<f64> {
        let g = self.u.grid();
        g.check_region(self.center, r, 2.0)?;
        let m = circle_samples(r, g.h());
        let tu = circle_trace(self.u, self.center, r, m)?;
        let te = circle_trace(&self.euler, self.center, r, m)?;
        let boundary: f64 = tu.values.iter().zip(&te.values).map(|(a, b)| a * b).sum::<f64>() * (2.0 * PI / m as f64);
        let w = ball_weights(g, self.center, r);
        let bulk = integrate_with(&self.bulk, &w);
        if bulk.excluded > 0.0 {
            return Err(Error::Geometry(format!(
                "Laplacian unavailable inside the ball of radius {r}; move the ball away from the boundary"
            )));
        }
        Ok((boundary - bulk.integral) / r.powi(4))
    }
}

/// Weiss functional `Φ^u_{x0}(r)` in two dimensions.
pub fn weiss_phi(u: &ScalarField, x0: Point, r: f64) -> Result<f64> {
    PhiContext::new(u, x0)?.phi(r)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileRow {
    pub r: f64,
    #[serde(rename = "S")]
    pub s: f64,
    #[serde(rename = "S_over_r2")]
    pub s_over_r2: f64,
    pub tau: f64,
    /// Canonical cross angle of `Π(u_r)` in `(-π/4, π/4]`.
    pub phi_angle: f64,
    #[serde(rename = "Phi")]
    pub big_phi: f64,
    pub sup_over_r2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadialProfile {
    pub center: Point,
    pub rows: Vec<ProfileRow>,
}

impl RadialProfile {
    pub fn radii(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.r).collect()
    }

    /// CSV with header `r,S,S_over_r2,tau,phi_angle,Phi,sup_over_r2`.
    pub fn write_csv(&self, w: impl Write) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        for row in &self.rows {
            wr.serialize(row)?;
        }
        wr.flush()?;
        Ok(())
    }
}

/// `r_j = r0 2^{-j}` for `j = 0..=levels`.
pub fn dyadic_radii(r0: f64, levels: usize) -> Vec<f64> {
    (0..=levels).map(|j| r0 * 0.5f64.powi(j as i32)).collect()
}

fn check_radii(radii: &[f64]) -> Result<()> {
    if radii.is_empty() {
        return Err(Error::InsufficientData("empty radius list".into()));
    }
    for w in radii.windows(2) {
        if !(w[1] < w[0]) {
            return Err(Error::Argument(format!("radii must be strictly decreasing, got {} then {}", w[0], w[1])));
        }
    }
    if !(radii[radii.len() - 1] > 0.0) {
        return Err(Error::Argument("radii must be positive".into()));
    }
    Ok(())
}

/// Computes one row per radius (in parallel, assembled in input order).
pub fn radial_profile(u: &ScalarField, x0: Point, radii: &[f64]) -> Result<RadialProfile> {
    check_radii(radii)?;
    let ctx = PhiContext::new(u, x0)?;
    let rows = radii
        .par_iter()
        .map(|&r| {
            let s = s_norm(u, x0, r)?;
            let proj = project_rescaled(u, x0, r)?;
            let big_phi = ctx.phi(r)?;
            let sup = u.sup_abs_in_ball(x0, r);
            Ok(ProfileRow {
                r,
                s,
                s_over_r2: s / (r * r),
                tau: proj.tau,
                phi_angle: proj.cross_angle,
                big_phi,
                sup_over_r2: sup / (r * r),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(RadialProfile { center: x0, rows })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonotonicityViolation {
    /// Larger radius.
    pub r_outer: f64,
    pub r_inner: f64,
    /// `Φ(r_inner) - Φ(r_outer)`, positive when `Φ` decreased with `r`.
    pub excess: f64,
    pub slack: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonotonicityReport {
    pub monotone: bool,
    pub slack_constant: f64,
    pub checked_pairs: usize,
    pub violations: Vec<MonotonicityViolation>,
}

/// Default `C` in the slack `C (h/r)^2 (1 + sup_{B_r}|u|/r^2)`.
pub const PHI_SLACK_C: f64 = 1.0;

/// Checks `Φ(r_k) <= Φ(r_{k-1}) + slack` for consecutive radii of a profile.
pub fn phi_monotonicity_check(profile: &RadialProfile, h: f64, slack_c: f64) -> MonotonicityReport {
    let mut violations = Vec::new();
    for w in profile.rows.windows(2) {
        let (outer, inner) = (&w[0], &w[1]);
        let slack = slack_c * (h / inner.r).powi(2) * (1.0 + inner.sup_over_r2);
        let excess = inner.big_phi - outer.big_phi;
        if excess > slack {
            violations.push(MonotonicityViolation {
                r_outer: outer.r,
                r_inner: inner.r,
                excess,
                slack,
            });
        }
    }
    MonotonicityReport {
        monotone: violations.is_empty(),
        slack_constant: slack_c,
        checked_pairs: profile.rows.len().saturating_sub(1),
        violations,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BlowupClass {
    Supercharacteristic,
    HomogeneousDegree2,
    Degenerate,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassifyOptions {
    /// Supercharacteristic once `S/r^2 > 1/delta` and increasing.
    pub delta: f64,
    /// Degenerate once `S/r^2` falls below this and is decreasing.
    pub degenerate_below: f64,
    /// Consecutive monotone steps required.
    pub trend_steps: usize,
}

impl Default for ClassifyOptions {
    fn default() -> Self {
        ClassifyOptions {
            delta: 0.05,
            degenerate_below: 0.1,
            trend_steps: 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Classification {
    pub class: BlowupClass,
    pub radii: Vec<f64>,
    pub s_over_r2: Vec<f64>,
    /// `‖u_r/S(u_r) - p_r/S(p_r)‖_{L²(∂B1)}` with `p_r = Π(u_r)`, per radius.
    pub misfit: Vec<f64>,
    pub critical_zero: CriticalZero,
    pub options: ClassifyOptions,
}

/// Blow-up class at a critical zero from the behaviour of `S/r^2` along
/// decreasing radii (at least 4).
pub fn classify_blowup(u: &ScalarField, x0: Point, radii: &[f64], opts: &ClassifyOptions) -> Result<Classification> {
    check_radii(radii)?;
    if radii.len() < 4 {
        return Err(Error::InsufficientData(format!(
            "classification needs at least 4 radii, got {}",
            radii.len()
        )));
    }
    let critical_zero = check_critical_zero(u, x0)?;
    let rows = radii
        .par_iter()
        .map(|&r| {
            let m = circle_samples(r, u.grid().h());
            let trace = circle_trace(u, x0, r, m)?;
            let s = trace.integrate_dtheta(|v| v * v).sqrt();
            let proj = project_rescaled(u, x0, r)?;
            let sp = proj.tau * PI.sqrt();
            let r2 = r * r;
            let misfit = if s > 0.0 && sp > 0.0 {
                let sum: f64 = trace
                    .angles
                    .iter()
                    .zip(&trace.values)
                    .map(|(&a, &v)| {
                        let e = Point::new(a.cos(), a.sin());
                        (v / s - proj.p.eval(e) / sp).powi(2)
                    })
                    .sum();
                (sum * 2.0 * PI / m as f64).sqrt()
            } else {
                f64::NAN
            };
            Ok((s / r2, misfit))
        })
        .collect::<Result<Vec<_>>>()?;
    let t: Vec<f64> = rows.iter().map(|r| r.0).collect();
    let misfit: Vec<f64> = rows.iter().map(|r| r.1).collect();
    let n = t.len();
    let steps = opts.trend_steps.min(n - 1);
    let tail = &t[n - 1 - steps..];
    let increasing = tail.windows(2).all(|w| w[1] > w[0]);
    let decreasing = tail.windows(2).all(|w| w[1] < w[0]);
    let last = t[n - 1];
    let class = if last > 1.0 / opts.delta && increasing {
        BlowupClass::Supercharacteristic
    } else if last < opts.degenerate_below && decreasing {
        BlowupClass::Degenerate
    } else {
        BlowupClass::HomogeneousDegree2
    };
    Ok(Classification {
        class,
        radii: radii.to_vec(),
        s_over_r2: t,
        misfit,
        critical_zero,
        options: *opts,
    })
}

/// The three magnitudes that are mutually comparable at a singular point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Comparability {
    pub r: f64,
    pub s_over_r2: f64,
    pub sup_over_r2: f64,
    pub tau: f64,
    pub s_over_tau: f64,
    pub sup_over_tau: f64,
}

pub fn comparability(u: &ScalarField, x0: Point, r: f64) -> Result<Comparability> {
    let s = s_norm(u, x0, r)? / (r * r);
    let sup = u.sup_abs_in_ball(x0, r) / (r * r);
    let tau = project_rescaled(u, x0, r)?.tau;
    Ok(Comparability {
        r,
        s_over_r2: s,
        sup_over_r2: sup,
        tau,
        s_over_tau: s / tau,
        sup_over_tau: sup / tau,
    })
}
