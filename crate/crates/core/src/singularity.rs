//! Quantitative analysis at a candidate cross singularity: detection,
//! positivity discrepancy, dyadic growth of `τ`, the auxiliary `g` solve,
//! rotation of the projection and the geometry of the zero set.

use std::f64::consts::{LN_2, PI};
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::contour::{crossing_angle, extract_zero_set, BoundaryCurve, ContourRegion, CrossingAngle};
use crate::error::{Error, Result};
use crate::field::{ball_integral, ball_weights, hessian, Grid2D, Point, ScalarField};
use crate::poisson::{solve_dirichlet_with, BoundaryData, DirichletProblem, PoissonOptions};
use crate::projection::{
    check_critical_zero, cross_angle_distance, project, project_rescaled, rescaled_field, CriticalZero, HarmonicPoly2,
};
use crate::radial::s_norm;

/// Largest admissible per-halving growth of `τ`, `log 2/(2π)`.
pub const GAMMA_HAT: f64 = LN_2 / (2.0 * PI);

/// `‖x1 x2‖_{L²(∂B1)} = √π/2`.
pub const XY_CIRCLE_NORM: f64 = 0.886_226_925_452_758;

/// Cells required across the smallest ball of a dyadic ladder.
pub const MIN_CELLS_ACROSS: f64 = 32.0;

/// Values with `|u| <= DISCREPANCY_ZERO_REL * sup|u|` count as zero in the
/// positivity discrepancy.
pub const DISCREPANCY_ZERO_REL: f64 = 1e-12;

/// The verdict admits `τ` increments up to this multiple of `γ̂`.
pub const VERDICT_TAU_FACTOR: f64 = 1.5;

/// The verdict accepts crossing angles within this many degrees of 90.
pub const VERDICT_ANGLE_TOL_DEG: f64 = 4.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub r: f64,
    pub delta: f64,
    pub s: f64,
    /// `r²/δ`.
    pub threshold: f64,
    pub triggered: bool,
    pub critical_zero: CriticalZero,
}

/// Whether `S^u(x0, r) >= r²/δ`, after checking that `x0` is a zero of `u`
/// and of its gradient to grid tolerance.
pub fn detect(u: &ScalarField, x0: Point, r: f64, delta: f64) -> Result<Detection> {
    if !(delta > 0.0) {
        return Err(Error::Argument(format!("delta must be positive, got {delta}")));
    }
    let critical_zero = check_critical_zero(u, x0)?;
    let s = s_norm(u, x0, r)?;
    let threshold = r * r / delta;
    Ok(Detection {
        r,
        delta,
        s,
        threshold,
        triggered: s >= threshold,
        critical_zero,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Discrepancy {
    pub r: f64,
    /// Area of `({u_r > 0} Δ {Π(u_r) > 0}) ∩ B1`.
    pub area: f64,
    /// `T = S^u(x0, r)/r²`.
    pub t: f64,
    /// `log(T)/T`, the decay shape of the bound.
    pub bound_shape: f64,
}

/// Positivity weight of each node: 1 inside, 1/2 on zero nodes that touch
/// a positive neighbour, 0 otherwise. Values within `zero_tol` of 0 count
/// as zero.
fn positivity_weights(vals: &[f64], nx: usize, ny: usize, zero_tol: f64) -> Vec<f64> {
    (0..vals.len())
        .map(|k| {
            let v = vals[k];
            if v > zero_tol {
                return 1.0;
            }
            if v < -zero_tol {
                return 0.0;
            }
            let (i, j) = (k % nx, k / nx);
            let touches = (i + 1 < nx && vals[k + 1] > zero_tol)
                || (i > 0 && vals[k - 1] > zero_tol)
                || (j + 1 < ny && vals[k + nx] > zero_tol)
                || (j > 0 && vals[k - nx] > zero_tol);
            if touches {
                0.5
            } else {
                0.0
            }
        })
        .collect()
}

pub fn positivity_discrepancy(u: &ScalarField, x0: Point, r: f64) -> Result<Discrepancy> {
    let ur = rescaled_field(u, x0, r)?;
    let proj = project(&ur)?;
    let g = *ur.grid();
    let w = ball_weights(&g, Point::ORIGIN, 1.0);
    let scale = ur.sup_abs_in_ball(Point::ORIGIN, 1.0).max(proj.p.sup_norm());
    let zero_tol = DISCREPANCY_ZERO_REL * scale;
    let uv = positivity_weights(ur.values(), g.nx(), g.ny(), zero_tol);
    let pvals: Vec<f64> = (0..g.len()).map(|k| proj.p.eval(g.node(k % g.nx(), k / g.nx()))).collect();
    let pv = positivity_weights(&pvals, g.nx(), g.ny(), zero_tol);
    let mut area = 0.0;
    for &(i, j, wt) in &w.entries {
        let k = g.index(i, j);
        if ur.is_valid(i, j) {
            area += wt * (uv[k] - pv[k]).abs();
        }
    }
    let t = s_norm(u, x0, r)? / (r * r);
    Ok(Discrepancy {
        r,
        area,
        t,
        bound_shape: if t > 1.0 { t.ln() / t } else { f64::NAN },
    })
}

/// Deepest dyadic level `J` with `r0 2^{-J}` spanning at least
/// [`MIN_CELLS_ACROSS`] cells.
pub fn max_feasible_depth(h: f64, r0: f64) -> usize {
    let cells = 2.0 * r0 / h;
    if cells < MIN_CELLS_ACROSS {
        return 0;
    }
    (cells / MIN_CELLS_ACROSS).log2().floor() as usize
}

fn check_depth(u: &ScalarField, x0: Point, r0: f64, levels: usize) -> Result<Vec<f64>> {
    if !(r0 > 0.0) {
        return Err(Error::Argument(format!("r0 must be positive, got {r0}")));
    }
    let h = u.grid().h();
    let max = max_feasible_depth(h, r0);
    if levels > max || 2.0 * r0 / h < MIN_CELLS_ACROSS {
        return Err(Error::Depth {
            requested: levels,
            max_feasible: max,
        });
    }
    u.grid().check_region(x0, r0, 4.0)?;
    Ok((0..=levels).map(|j| r0 * 0.5f64.powi(j as i32)).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TauTrack {
    pub radii: Vec<f64>,
    pub tau: Vec<f64>,
    pub increments: Vec<f64>,
    /// Least-squares slope of `τ_j` against `j`.
    pub fitted_increment: f64,
    pub gamma_hat: f64,
}

fn ls_slope(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let icpt = my - slope * mx;
    let rms = (x.iter().zip(y).map(|(a, b)| (b - icpt - slope * a).powi(2)).sum::<f64>() / n).sqrt();
    (slope, icpt, rms)
}

/// `τ_j = τ(u(x0 + r_j ·)/r_j²)` for `r_j = r0 2^{-j}`, `j = 0..=levels`.
pub fn dyadic_tau_track(u: &ScalarField, x0: Point, r0: f64, levels: usize) -> Result<TauTrack> {
    let radii = check_depth(u, x0, r0, levels)?;
    let tau = radii
        .par_iter()
        .map(|&r| project_rescaled(u, x0, r).map(|p| p.tau))
        .collect::<Result<Vec<_>>>()?;
    let increments: Vec<f64> = tau.windows(2).map(|w| w[1] - w[0]).collect();
    let js: Vec<f64> = (0..tau.len()).map(|j| j as f64).collect();
    let (fitted_increment, _, _) = ls_slope(&js, &tau);
    Ok(TauTrack {
        radii,
        tau,
        increments,
        fitted_increment,
        gamma_hat: GAMMA_HAT,
    })
}

#[derive(Debug, Clone)]
pub struct GEstimate {
    /// Solution of `Δg = χ_{Π(u_r)>0} - χ_{u_r>0}` in `B1`, `g = 0` on `∂B1`.
    pub g: ScalarField,
    /// `(∫_{B1} |D²g|²)^{1/2}`.
    pub hess_l2: f64,
    pub tau_g: f64,
    pub t: f64,
    /// `(log T/T)^{1/2}`.
    pub bound_shape: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GSummary {
    pub r: f64,
    pub hess_l2: f64,
    pub tau_g: f64,
    pub t: f64,
    pub bound_shape: f64,
}

impl GEstimate {
    pub fn summary(&self, r: f64) -> GSummary {
        GSummary {
            r,
            hess_l2: self.hess_l2,
            tau_g: self.tau_g,
            t: self.t,
            bound_shape: self.bound_shape,
        }
    }
}

/// Solves `Δg = rhs` in the unit disk of `grid` with `g = 0` on the circle
/// and reports `‖D²g‖_{L²(B1)}` and `τ(g)`.
pub fn solve_g(rhs: &ScalarField, tol: f64) -> Result<(ScalarField, f64, f64)> {
    let plain = rhs.grid().without_mask();
    let grid = plain.with_disk(Point::ORIGIN, 1.0)?;
    let p = DirichletProblem::new(
        ScalarField::from_values(grid, rhs.values().to_vec())?,
        BoundaryData::Constant(0.0),
    )?;
    let opts = PoissonOptions {
        accept_roundoff_floor: true,
        ..PoissonOptions::default()
    };
    let solved = solve_dirichlet_with(&p, tol, &opts, None)?.u;
    // Back on the plain grid, with the exterior masked, so that the ball
    // quadratures see the whole unit disk.
    let nx = plain.nx();
    let mask: Vec<bool> = (0..plain.len()).map(|k| grid.is_active(k % nx, k / nx)).collect();
    let g = ScalarField::from_values(plain, solved.into_values())?.with_mask(mask)?;
    let hs = hessian(&g)?;
    let dens = hs
        .f11
        .zip_with(&hs.f22, |a, b| a * a + b * b)?
        .zip_with(&hs.f12, |s, c| s + 2.0 * c * c)?;
    let sum = ball_integral(&dens, Point::ORIGIN, 1.0)?;
    // The Hessian is unavailable in a band of width h next to the circle;
    // extend the average over it.
    let hess_l2 = if sum.area > 0.0 {
        (sum.average() * (sum.area + sum.excluded)).sqrt()
    } else {
        0.0
    };
    let tau_g = project(&g)?.tau;
    Ok((g, hess_l2, tau_g))
}

pub fn g_estimate(u: &ScalarField, x0: Point, r: f64) -> Result<GEstimate> {
    let ur = rescaled_field(u, x0, r)?;
    let proj = project(&ur)?;
    let g = *ur.grid();
    let nx = g.nx();
    let vals: Vec<f64> = (0..g.len())
        .map(|k| {
            let x = g.node(k % nx, k / nx);
            let cp = if proj.p.eval(x) > 0.0 { 1.0 } else { 0.0 };
            let cu = if ur.values()[k] > 0.0 { 1.0 } else { 0.0 };
            cp - cu
        })
        .collect();
    let rhs = ScalarField::from_values(g, vals)?;
    let (gf, hess_l2, tau_g) = solve_g(&rhs, 1e-9).map_err(|e| e.in_stage("g solve"))?;
    let t = s_norm(u, x0, r)? / (r * r);
    Ok(GEstimate {
        g: gf,
        hess_l2,
        tau_g,
        t,
        bound_shape: if t > 1.0 { (t.ln() / t).sqrt() } else { f64::NAN },
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RotationTrack {
    pub radii: Vec<f64>,
    /// Canonical cross angle per level.
    pub phi: Vec<f64>,
    pub tau: Vec<f64>,
    /// `T_j = S^u(x0, r_j)/r_j²`.
    pub t: Vec<f64>,
    /// Noise floor on `τ` per level.
    pub tau_floor: Vec<f64>,
    /// `|φ_{j+1} - φ_j|` modulo quarter turns.
    pub increments: Vec<f64>,
    pub cumulative: f64,
    /// `√(log T_j)/T_j^{3/2}` per increment (level `j`).
    pub increment_shape: Vec<f64>,
    /// `δ_eff = r0²/S(r0)`, the smallest `δ` for which detection fires at `r0`.
    pub delta_eff: f64,
    pub alpha: f64,
    /// `(δ_eff/(1 + δ_eff log(r0/r_j)))^α` per level.
    pub envelope: Vec<f64>,
    /// `∫_0^{r0} √|log|log s|| / (s |log s|^{3/2}) ds`, absent when `r0 >= 1`.
    pub tail_integral: Option<f64>,
}

/// Constant `c` of the noise floor `c (h/r)² (1 + sup_{B_r}|u|/r²)`.
pub const TAU_NOISE_C: f64 = 10.0;

/// Below this `τ` is grid noise and its direction is meaningless.
pub fn tau_noise_floor(u: &ScalarField, x0: Point, r: f64) -> f64 {
    let h = u.grid().h();
    TAU_NOISE_C * (h / r).powi(2) * (1.0 + u.sup_abs_in_ball(x0, r) / (r * r))
}

pub fn rotation_track(u: &ScalarField, x0: Point, r0: f64, levels: usize, alpha: f64) -> Result<RotationTrack> {
    if !(alpha > 0.0 && alpha < 0.5) {
        return Err(Error::Argument(format!("alpha must lie in (0, 1/2), got {alpha}")));
    }
    let radii = check_depth(u, x0, r0, levels)?;
    let rows = radii
        .par_iter()
        .map(|&r| {
            let p = project_rescaled(u, x0, r)?;
            let s = s_norm(u, x0, r)?;
            Ok((p.cross_angle, p.tau, s / (r * r), tau_noise_floor(u, x0, r)))
        })
        .collect::<Result<Vec<_>>>()?;
    for (j, &(_, tau, _, floor)) in rows.iter().enumerate() {
        if tau < floor {
            return Err(Error::UnreliableAngle { level: j, tau, floor });
        }
    }
    let phi: Vec<f64> = rows.iter().map(|r| r.0).collect();
    let tau: Vec<f64> = rows.iter().map(|r| r.1).collect();
    let t: Vec<f64> = rows.iter().map(|r| r.2).collect();
    let tau_floor: Vec<f64> = rows.iter().map(|r| r.3).collect();
    let increments: Vec<f64> = phi.windows(2).map(|w| cross_angle_distance(w[0], w[1])).collect();
    let cumulative = increments.iter().sum();
    let increment_shape = t[..t.len() - 1]
        .iter()
        .map(|&tj| if tj > 1.0 { tj.ln().sqrt() / tj.powf(1.5) } else { f64::NAN })
        .collect();
    let delta_eff = 1.0 / t[0];
    let envelope = radii
        .iter()
        .map(|&r| (delta_eff / (1.0 + delta_eff * (r0 / r).ln())).powf(alpha))
        .collect();
    Ok(RotationTrack {
        radii,
        phi,
        tau,
        t,
        tau_floor,
        increments,
        cumulative,
        increment_shape,
        delta_eff,
        alpha,
        envelope,
        tail_integral: tail_integral(r0),
    })
}

/// `∫_0^r √|log|log s|| / (s |log s|^{3/2}) ds` for `r < 1`. With
/// `y = log(-log s)` it becomes `∫_{y0}^∞ √|y| e^{-y/2} dy`,
/// `y0 = log(log(1/r))`.
pub fn tail_integral(r: f64) -> Option<f64> {
    if !(r > 0.0 && r < 1.0) {
        return None;
    }
    let y0 = (-r.ln()).ln();
    let f = |y: f64| y.abs().sqrt() * (-0.5 * y).exp();
    // The integrand has a square-root kink at 0; integrate on each side.
    let upper = y0.max(0.0) + 120.0;
    let mut total = 0.0;
    if y0 < 0.0 {
        total += simpson(f, y0, 0.0, 4000);
    }
    total += simpson(f, y0.max(0.0), upper, 40_000);
    Some(total)
}

fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let n = n + n % 2;
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for k in 1..n {
        let w = if k % 2 == 1 { 4.0 } else { 2.0 };
        s += w * f(a + k as f64 * h);
    }
    s * h / 3.0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnalysisOptions {
    pub center: Point,
    pub r0: f64,
    pub levels: usize,
    pub delta: f64,
    pub alpha: f64,
    /// Annulus radii (as fractions of `r0`) used to extract the branches
    /// near the center.
    pub crossing_inner: f64,
    pub crossing_outer: f64,
    /// Solve the `g` problem at `r0` as well.
    pub with_g: bool,
}

impl Default for AnalysisOptions {
    fn default() -> Self {
        AnalysisOptions {
            center: Point::ORIGIN,
            r0: 0.5,
            levels: 3,
            delta: 0.05,
            alpha: 0.25,
            crossing_inner: 0.125,
            crossing_outer: 1.0,
            with_g: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Growth {
    /// Slope of `S/s²` against `log(r0/s)`.
    pub slope_per_log: f64,
    /// Slope per halving, i.e. against `log2(r0/s)`.
    pub slope_per_halving: f64,
    pub intercept: f64,
    pub residual_rms: f64,
    /// `0.5 ‖x1x2‖ γ̂`, the per-halving lower bound asserted for solutions.
    pub lower_reference: f64,
    /// `‖x1x2‖/π`, the per-log slope of the synthetic family.
    pub synthetic_reference: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelRow {
    pub level: usize,
    pub r: f64,
    #[serde(rename = "S_over_r2")]
    pub s_over_r2: f64,
    pub tau: f64,
    pub phi: f64,
    pub dphi: Option<f64>,
    pub discrepancy: f64,
    pub discrepancy_shape: f64,
    pub envelope: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossingReport {
    pub inner: f64,
    pub outer: f64,
    pub branches: usize,
    pub truncated: usize,
    pub angle: Option<CrossingAngle>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    /// Detection fired and `S/s²` grows at least at the lower reference rate.
    pub supercharacteristic_growth: bool,
    /// Every `τ` increment lies in `(0, 1.5 γ̂]`.
    pub tau_increments_admissible: bool,
    /// Rotation increments shrink from the first to the last level.
    pub projection_stabilizes: bool,
    /// Four branches meeting within 4 degrees of a right angle.
    pub right_angle: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SingularityReport {
    pub center: Point,
    pub options: AnalysisOptions,
    pub gamma_hat: f64,
    pub trigger: Detection,
    pub growth: Growth,
    pub tau: TauTrack,
    pub rotation: RotationTrack,
    pub levels: Vec<LevelRow>,
    pub g: Option<GSummary>,
    pub crossing: CrossingReport,
    pub verdict: Verdict,
}

impl SingularityReport {
    /// Per-level CSV: `level,r,S_over_r2,tau,phi,dphi,discrepancy,discrepancy_shape,envelope`.
    pub fn write_levels_csv(&self, w: impl Write) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        for row in &self.levels {
            wr.serialize(row)?;
        }
        wr.flush()?;
        Ok(())
    }
}

/// Zero-set branches in the annulus `inner < |x - x0| < outer` about `x0`,
/// labelled in the frame of `Π(u_outer)`.
pub fn branches_near(u: &ScalarField, x0: Point, inner: f64, outer: f64) -> Result<Vec<BoundaryCurve>> {
    let frame = project_rescaled(u, x0, outer)?.cross_angle;
    extract_zero_set(
        u,
        &ContourRegion::Annulus {
            center: x0,
            inner,
            outer,
        },
        frame,
    )
}

pub fn analyze(u: &ScalarField, opts: &AnalysisOptions) -> Result<SingularityReport> {
    let x0 = opts.center;
    let trigger = detect(u, x0, opts.r0, opts.delta).map_err(|e| e.in_stage("detect"))?;
    let tau = dyadic_tau_track(u, x0, opts.r0, opts.levels).map_err(|e| e.in_stage("tau track"))?;
    let rotation = rotation_track(u, x0, opts.r0, opts.levels, opts.alpha).map_err(|e| e.in_stage("rotation"))?;
    let discrepancy = tau
        .radii
        .par_iter()
        .map(|&r| positivity_discrepancy(u, x0, r))
        .collect::<Result<Vec<_>>>()
        .map_err(|e| e.in_stage("discrepancy"))?;

    let logs: Vec<f64> = tau.radii.iter().map(|&r| (opts.r0 / r).ln()).collect();
    let (slope, intercept, rms) = ls_slope(&logs, &rotation.t);
    let growth = Growth {
        slope_per_log: slope,
        slope_per_halving: slope * LN_2,
        intercept,
        residual_rms: rms,
        lower_reference: 0.5 * XY_CIRCLE_NORM * GAMMA_HAT,
        synthetic_reference: XY_CIRCLE_NORM / PI,
    };

    let levels = (0..tau.radii.len())
        .map(|j| LevelRow {
            level: j,
            r: tau.radii[j],
            s_over_r2: rotation.t[j],
            tau: tau.tau[j],
            phi: rotation.phi[j],
            dphi: if j == 0 { None } else { Some(rotation.increments[j - 1]) },
            discrepancy: discrepancy[j].area,
            discrepancy_shape: discrepancy[j].bound_shape,
            envelope: rotation.envelope[j],
        })
        .collect();

    let g = if opts.with_g {
        Some(g_estimate(u, x0, opts.r0).map_err(|e| e.in_stage("g estimate"))?.summary(opts.r0))
    } else {
        None
    };

    let (inner, outer) = (opts.crossing_inner * opts.r0, opts.crossing_outer * opts.r0);
    let crossing = match branches_near(u, x0, inner, outer) {
        Ok(curves) => {
            let truncated = curves.iter().filter(|c| c.truncated).count();
            match crossing_angle(&curves, x0, u.grid().h(), outer) {
                Ok(a) => CrossingReport {
                    inner,
                    outer,
                    branches: curves.len(),
                    truncated,
                    angle: Some(a),
                    error: None,
                },
                Err(e) => CrossingReport {
                    inner,
                    outer,
                    branches: curves.len(),
                    truncated,
                    angle: None,
                    error: Some(e.to_string()),
                },
            }
        }
        Err(e) => return Err(e.in_stage("zero set")),
    };

    let verdict = Verdict {
        supercharacteristic_growth: trigger.triggered && growth.slope_per_halving >= growth.lower_reference,
        tau_increments_admissible: tau.increments.iter().all(|&d| d > 0.0 && d <= VERDICT_TAU_FACTOR * GAMMA_HAT),
        projection_stabilizes: rotation.increments.len() < 2
            || rotation.increments[rotation.increments.len() - 1] <= rotation.increments[0] + 1e-12,
        right_angle: crossing.angle.as_ref().is_some_and(|a| (a.angle_deg - 90.0).abs() <= VERDICT_ANGLE_TOL_DEG),
    };

    Ok(SingularityReport {
        center: x0,
        options: *opts,
        gamma_hat: GAMMA_HAT,
        trigger,
        growth,
        tau,
        rotation,
        levels,
        g,
        crossing,
        verdict,
    })
}

/// Projection of a sampled harmonic quadratic, exposed for report tooling.
pub fn polynomial_of(u: &ScalarField, x0: Point, r: f64) -> Result<HarmonicPoly2> {
    Ok(project_rescaled(u, x0, r)?.p)
}

/// Grid used for sampling analytic fields in analyses: centered, spacing
/// `h`, half-width at least `half_width`.
pub fn analysis_grid(h: f64, half_width: f64) -> Result<Grid2D> {
    Grid2D::centered(h, (half_width / h).ceil() as usize)
}
