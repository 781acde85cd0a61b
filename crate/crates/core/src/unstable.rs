//! Damped Picard iteration for `Δu = -χ_{u>0}` with optional dihedral
//! symmetry constraints, and the energy integrand of the problem.

use std::collections::hash_map::DefaultHasher;
use std::f64::consts::PI;
use std::hash::{Hash, Hasher};

use serde::{Deserialize, Serialize};

use crate::analytic::SyntheticSingularField;
use crate::error::{Error, Result};
use crate::field::{ball_weights, gradient, integrate_with, Domain, Grid2D, Point, ScalarField};
use crate::poisson::{self, BoundaryData, DirichletProblem, PoissonOptions};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Symmetry {
    /// `u(x2, x1) = u(x1, x2)`.
    Swap,
    /// `u(-x) = u(x)`.
    NegateBoth,
    /// `u(x1, -x2) = -u(x1, x2)`.
    #[serde(rename = "odd-in-x2")]
    OddInX2,
}

/// `x ↦ A x` with `A` a signed permutation matrix, acting on functions by
/// `(g u)(x) = ±u(A x)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
struct GroupElement {
    a: [[i64; 2]; 2],
    odd: bool,
}

impl GroupElement {
    const IDENTITY: GroupElement = GroupElement {
        a: [[1, 0], [0, 1]],
        odd: false,
    };

    fn generator(s: Symmetry) -> Self {
        match s {
            Symmetry::Swap => GroupElement {
                a: [[0, 1], [1, 0]],
                odd: false,
            },
            Symmetry::NegateBoth => GroupElement {
                a: [[-1, 0], [0, -1]],
                odd: false,
            },
            Symmetry::OddInX2 => GroupElement {
                a: [[1, 0], [0, -1]],
                odd: true,
            },
        }
    }

    fn apply(&self, (x, y): (i64, i64)) -> (i64, i64) {
        let a = &self.a;
        (a[0][0] * x + a[0][1] * y, a[1][0] * x + a[1][1] * y)
    }

    fn apply_point(&self, p: Point) -> Point {
        let a = &self.a;
        Point::new(
            a[0][0] as f64 * p.x + a[0][1] as f64 * p.y,
            a[1][0] as f64 * p.x + a[1][1] as f64 * p.y,
        )
    }

    fn compose(&self, other: &GroupElement) -> GroupElement {
        let (a, b) = (&self.a, &other.a);
        let mut m = [[0; 2]; 2];
        for i in 0..2 {
            for j in 0..2 {
                m[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j];
            }
        }
        GroupElement {
            a: m,
            odd: self.odd ^ other.odd,
        }
    }

    fn swaps(&self) -> bool {
        self.a[0][0] == 0
    }
}

/// Finite group generated by a set of symmetries, with the averaging
/// projection `P u = |G|^{-1} Σ_g g u`.
#[derive(Debug, Clone, PartialEq)]
pub struct SymmetryGroup {
    elements: Vec<GroupElement>,
}

impl SymmetryGroup {
    pub fn generate(generators: &[Symmetry]) -> Result<Self> {
        let gens: Vec<GroupElement> = generators.iter().map(|&s| GroupElement::generator(s)).collect();
        let mut elements = vec![GroupElement::IDENTITY];
        let mut k = 0;
        while k < elements.len() {
            let e = elements[k];
            for g in &gens {
                let n = g.compose(&e);
                if !elements.contains(&n) {
                    elements.push(n);
                }
            }
            k += 1;
        }
        let minus_identity = GroupElement {
            odd: true,
            a: GroupElement::IDENTITY.a,
        };
        if elements.contains(&minus_identity) {
            return Err(Error::Symmetry(
                "the generated group contains u ↦ -u, so only the zero function is invariant".into(),
            ));
        }
        elements.sort();
        Ok(SymmetryGroup { elements })
    }

    pub fn order(&self) -> usize {
        self.elements.len()
    }

    pub fn has_odd_elements(&self) -> bool {
        self.elements.iter().any(|e| e.odd)
    }

    fn check_grid(&self, grid: &Grid2D) -> Result<(usize, usize)> {
        let (nx, ny) = (grid.nx(), grid.ny());
        if nx % 2 == 0 || ny % 2 == 0 {
            return Err(Error::Symmetry("symmetric grids need an odd node count per side".into()));
        }
        if self.elements.iter().any(|e| e.swaps()) && nx != ny {
            return Err(Error::Symmetry("the swap symmetry needs a square grid".into()));
        }
        let (ci, cj) = (nx / 2, ny / 2);
        let c = grid.node(ci, cj);
        if c.norm() > 1e-9 * grid.h() {
            return Err(Error::Symmetry(format!(
                "symmetries act about the origin but the grid is centered at ({}, {})",
                c.x, c.y
            )));
        }
        if let Domain::Disk { center, .. } = grid.domain() {
            if center.norm() > 1e-9 * grid.h() {
                return Err(Error::Symmetry("the disk domain is not centered at the origin".into()));
            }
        }
        Ok((ci, cj))
    }

    /// Orbit average of `u`. Idempotent, and exact on invariant fields.
    pub fn project(&self, u: &ScalarField) -> Result<ScalarField> {
        let grid = *u.grid();
        let (ci, cj) = self.check_grid(&grid)?;
        let nx = grid.nx();
        let inv = 1.0 / self.elements.len() as f64;
        let vals = u.values();
        let out: Vec<f64> = (0..grid.len())
            .map(|k| {
                let a = (k % nx) as i64 - ci as i64;
                let b = (k / nx) as i64 - cj as i64;
                let mut s = 0.0;
                for e in &self.elements {
                    let (p, q) = e.apply((a, b));
                    let v = vals[grid.index((p + ci as i64) as usize, (q + cj as i64) as usize)];
                    s += if e.odd { -v } else { v };
                }
                s * inv
            })
            .collect();
        let f = ScalarField::from_values(grid, out)?;
        match u.mask() {
            Some(m) => f.with_mask(m.to_vec()),
            None => Ok(f),
        }
    }

    /// Largest `|sign·g(Ax) - g(x)|` over sample points of the domain boundary.
    pub fn boundary_defect(&self, boundary: &BoundaryData, grid: &Grid2D) -> Result<f64> {
        let pts: Vec<Point> = match grid.domain() {
            Domain::Disk { center, radius } => (0..720)
                .map(|k| {
                    let t = 2.0 * PI * k as f64 / 720.0;
                    Point::new(center.x + radius * t.cos(), center.y + radius * t.sin())
                })
                .collect(),
            Domain::Square => {
                let (nx, ny) = (grid.nx(), grid.ny());
                let mut v = Vec::new();
                for i in 0..nx {
                    v.push(grid.node(i, 0));
                    v.push(grid.node(i, ny - 1));
                }
                for j in 0..ny {
                    v.push(grid.node(0, j));
                    v.push(grid.node(nx - 1, j));
                }
                v
            }
        };
        let mut defect = 0.0f64;
        for p in pts {
            let g0 = boundary.eval(p)?;
            for e in &self.elements {
                let g = boundary.eval(e.apply_point(p))?;
                let g = if e.odd { -g } else { g };
                defect = defect.max((g - g0).abs());
            }
        }
        Ok(defect)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum Init {
    /// Start from `χ ≡ 1`.
    Positive,
    /// Start from `χ ≡ 0`.
    Negative,
    Synthetic { m: f64, theta: f64 },
    #[serde(skip)]
    Field(ScalarField),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    pub damping: f64,
    pub max_outer: usize,
    pub fp_tol: f64,
    #[serde(default)]
    pub symmetry: Vec<Symmetry>,
    pub init: Init,
    /// Relative residual tolerance of each linear solve. Solves that stall
    /// at the double-precision floor above this are accepted.
    #[serde(default = "default_poisson_tol")]
    pub poisson_tol: f64,
    /// Shift every linear solve by a constant so that `u(0) = 0`. The fixed
    /// point then solves the problem with boundary data `g + boundary_shift`.
    #[serde(default)]
    pub pin_origin: bool,
}

fn default_poisson_tol() -> f64 {
    1e-9
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            damping: 1.0,
            max_outer: 200,
            fp_tol: 1e-8,
            symmetry: Vec::new(),
            init: Init::Positive,
            poisson_tol: default_poisson_tol(),
            pin_origin: false,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.damping > 0.0 && self.damping <= 1.0) {
            return Err(Error::Argument(format!("damping must lie in (0, 1], got {}", self.damping)));
        }
        if !(self.fp_tol > 0.0) {
            return Err(Error::Argument(format!("fp_tol must be positive, got {}", self.fp_tol)));
        }
        if !(self.poisson_tol > 0.0) {
            return Err(Error::Argument(format!("poisson_tol must be positive, got {}", self.poisson_tol)));
        }
        if self.max_outer == 0 {
            return Err(Error::Argument("max_outer must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StopReason {
    /// Max-norm change of the last outer step fell below `fp_tol`.
    FixedPoint,
    /// The positivity set stopped changing and one more exact solve
    /// reproduced it.
    SignSetStable,
}

#[derive(Debug, Clone)]
pub struct SolveOutcome {
    pub u: ScalarField,
    pub iterations: usize,
    /// Max-norm change of the last outer step.
    pub fp_residual: f64,
    /// Nodes whose sign flipped in the last step.
    pub sign_changes: usize,
    pub stop: StopReason,
    /// `max |Δ_h u + χ_{u>0}|` over the unknowns of the returned field, for
    /// the boundary data actually solved (including `boundary_shift`).
    pub equation_residual: f64,
    /// Constant added to the boundary data by origin pinning, else 0.
    pub boundary_shift: f64,
    pub history: Vec<f64>,
}

/// Diagnostics of an outcome, without the field.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveDiagnostics {
    pub iterations: usize,
    pub fp_residual: f64,
    pub sign_changes: usize,
    pub stop: StopReason,
    pub equation_residual: f64,
    pub boundary_shift: f64,
    pub positive_nodes: usize,
    pub history: Vec<f64>,
}

impl SolveOutcome {
    pub fn diagnostics(&self) -> SolveDiagnostics {
        SolveDiagnostics {
            iterations: self.iterations,
            fp_residual: self.fp_residual,
            sign_changes: self.sign_changes,
            stop: self.stop,
            equation_residual: self.equation_residual,
            boundary_shift: self.boundary_shift,
            positive_nodes: positive_set(&self.u).iter().filter(|&&b| b).count(),
            history: self.history.clone(),
        }
    }
}

/// `χ_{u>0}` on valid nodes. Ties `u = 0` count as not positive.
fn positive_set(u: &ScalarField) -> Vec<bool> {
    let g = u.grid();
    let nx = g.nx();
    u.values()
        .iter()
        .enumerate()
        .map(|(k, &v)| v > 0.0 && u.is_valid(k % nx, k / nx))
        .collect()
}

fn rhs_of(grid: Grid2D, chi: &[bool]) -> Result<ScalarField> {
    ScalarField::from_values(grid, chi.iter().map(|&b| if b { -1.0 } else { 0.0 }).collect())
}

fn hash_set(chi: &[bool]) -> u64 {
    let mut h = DefaultHasher::new();
    chi.hash(&mut h);
    h.finish()
}

/// `max |Δ_h u + χ_{u>0}|` with the same boundary closure as the linear
/// solver, for boundary data `boundary + shift`.
pub fn equation_residual(u: &ScalarField, boundary: &BoundaryData, shift: f64) -> Result<f64> {
    let grid = *u.grid();
    let p = DirichletProblem::new(rhs_of(grid, &positive_set(u))?, boundary.clone())?;
    // The stencil and its boundary closure annihilate constants.
    let unshifted = if shift == 0.0 { u.clone() } else { u.map(|v| v - shift)? };
    poisson::residual(&unshifted, &p)
}

/// Iterates `u ← (1-λ) u + λ P S(χ_{u>0})`, where `S` solves the Dirichlet
/// problem with right-hand side `-χ` and `P` is the symmetry projection.
///
/// Odd symmetries are refused: reflecting the argument turns `χ_{u>0}` into
/// `χ_{u<0}`, so the equation has no odd solutions and the projected
/// iteration would solve `Δu = -sgn(u)/2` instead.
pub fn solve_unstable(grid: Grid2D, boundary: &BoundaryData, cfg: &SolverConfig) -> Result<SolveOutcome> {
    cfg.validate()?;
    let group = if cfg.symmetry.is_empty() {
        None
    } else {
        let g = SymmetryGroup::generate(&cfg.symmetry)?;
        if g.has_odd_elements() {
            return Err(Error::Symmetry(
                "odd symmetries are not compatible with Δu = -χ_{u>0}: the right-hand side is never odd".into(),
            ));
        }
        g.check_grid(&grid)?;
        let defect = g.boundary_defect(boundary, &grid)?;
        if defect > 1e-9 {
            return Err(Error::Symmetry(format!(
                "boundary data is not invariant under the requested symmetries (defect {defect:.3e})"
            )));
        }
        Some(g)
    };
    let project = |f: ScalarField| -> Result<ScalarField> {
        match &group {
            Some(g) => g.project(&f),
            None => Ok(f),
        }
    };

    let mut u = match &cfg.init {
        Init::Positive => ScalarField::constant(grid, 1.0)?,
        Init::Negative => ScalarField::constant(grid, -1.0)?,
        Init::Synthetic { m, theta } => SyntheticSingularField::new(*m, *theta, Point::ORIGIN)?.sample(grid)?,
        Init::Field(f) => {
            if !f.grid().same_nodes(&grid) {
                return Err(Error::GridMismatch("initial field does not live on the solve grid".into()));
            }
            f.clone()
        }
    };
    let opts = PoissonOptions {
        accept_roundoff_floor: true,
        ..PoissonOptions::default()
    };
    let origin = if cfg.pin_origin {
        let (i, j) = grid
            .nearest_node(Point::ORIGIN)
            .filter(|&(i, j)| grid.node(i, j).norm() < 1e-9 * grid.h())
            .ok_or_else(|| Error::Argument("origin pinning needs a grid node at the origin".into()))?;
        Some(grid.index(i, j))
    } else {
        None
    };
    let mut shift = 0.0;
    let lam = cfg.damping;
    let mut chi = positive_set(&u);
    let mut warm: Option<ScalarField> = None;
    let mut hashes = vec![hash_set(&chi)];
    let mut history = Vec::new();

    // Returns the projected solution for the original data together with the
    // pinning shift; the iterate itself is `solution + shift`.
    let linear_solve = |chi: &[bool], warm: Option<&ScalarField>| -> Result<(ScalarField, f64)> {
        let p = DirichletProblem::new(rhs_of(grid, chi)?, boundary.clone())?;
        let s = poisson::solve_dirichlet_with(&p, cfg.poisson_tol, &opts, warm)
            .map_err(|e| e.in_stage("linear solve"))?;
        let s = project(s.u)?;
        let c = origin.map_or(0.0, |k| -s.values()[k]);
        Ok((s, c))
    };
    let shifted = |s: &ScalarField, c: f64| -> Result<ScalarField> {
        if c == 0.0 {
            Ok(s.clone())
        } else {
            s.map(|v| v + c)
        }
    };

    for k in 1..=cfg.max_outer {
        let (raw, c) = linear_solve(&chi, warm.as_ref())?;
        let s = shifted(&raw, c)?;
        let next = if lam == 1.0 {
            shift = c;
            s
        } else {
            shift = (1.0 - lam) * shift + lam * c;
            u.zip_with(&s, |a, b| (1.0 - lam) * a + lam * b)?
        };
        warm = Some(raw);
        let fp = next.max_abs_diff(&u)?;
        let new_chi = positive_set(&next);
        let changes = new_chi.iter().zip(&chi).filter(|(a, b)| a != b).count();
        u = next;
        history.push(fp);
        if fp <= cfg.fp_tol {
            return finish(u, k, fp, changes, StopReason::FixedPoint, boundary, shift, history);
        }
        if changes == 0 {
            // The positivity set reproduced itself, so the problem is linear
            // from here on. One exact solve settles it.
            let (raw, c) = linear_solve(&new_chi, warm.as_ref())?;
            let exact = shifted(&raw, c)?;
            warm = Some(raw);
            shift = c;
            let fp = exact.max_abs_diff(&u)?;
            let exact_chi = positive_set(&exact);
            let changes = exact_chi.iter().zip(&new_chi).filter(|(a, b)| a != b).count();
            history.push(fp);
            if changes == 0 {
                return finish(exact, k + 1, fp, 0, StopReason::SignSetStable, boundary, shift, history);
            }
            u = exact;
            chi = exact_chi;
        } else {
            chi = new_chi;
        }
        hashes.push(hash_set(&chi));
        if let Some(period) = detect_cycle(&hashes, &history) {
            return Err(Error::Cycling { period, iterations: k });
        }
    }
    Err(Error::Convergence {
        iterations: cfg.max_outer,
        residual: history.last().copied().unwrap_or(f64::NAN),
    })
}

/// A sign set repeating with period `p` for four periods while the step size
/// has not halved over the last three.
fn detect_cycle(hashes: &[u64], history: &[f64]) -> Option<usize> {
    let n = hashes.len();
    for p in 2..=16 {
        if n < 4 * p + 1 || history.len() < 3 * p + 1 {
            continue;
        }
        let periodic = (0..3 * p).all(|i| hashes[n - 1 - i] == hashes[n - 1 - i - p]);
        if !periodic {
            continue;
        }
        let last = history[history.len() - 1];
        let earlier = history[history.len() - 1 - 3 * p];
        if last > 0.5 * earlier {
            return Some(p);
        }
    }
    None
}

fn finish(
    u: ScalarField,
    iterations: usize,
    fp_residual: f64,
    sign_changes: usize,
    stop: StopReason,
    boundary: &BoundaryData,
    boundary_shift: f64,
    history: Vec<f64>,
) -> Result<SolveOutcome> {
    let equation_residual = equation_residual(&u, boundary, boundary_shift)?;
    Ok(SolveOutcome {
        u,
        iterations,
        fp_residual,
        sign_changes,
        stop,
        equation_residual,
        boundary_shift,
        history,
    })
}

/// `∫_{B_r(x0)} (|∇u|² - 2u⁺)` by area-weighted node quadrature with central
/// difference gradients.
pub fn energy(u: &ScalarField, r: f64, x0: Point) -> Result<f64> {
    if !(r > 0.0) {
        return Err(Error::Argument(format!("radius must be positive, got {r}")));
    }
    u.grid().check_region(x0, r, 1.0)?;
    let (g1, g2) = gradient(u)?;
    let dens = g1
        .zip_with(&g2, |a, b| a * a + b * b)?
        .zip_with(u, |g, v| g - 2.0 * v.max(0.0))?;
    let w = ball_weights(u.grid(), x0, r);
    let s = integrate_with(&dens, &w);
    if s.excluded > 0.0 {
        return Err(Error::Geometry(format!(
            "gradient unavailable inside the ball of radius {r} about ({}, {})",
            x0.x, x0.y
        )));
    }
    Ok(s.integral)
}
