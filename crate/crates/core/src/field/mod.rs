//! Uniform-grid scalar fields and the discrete calculus built on them.
//!
//! A [`Grid2D`] is a rectangle of nodes with spacing `h`, optionally masked
//! to a disk. A [`ScalarField`] samples one real value per node and carries
//! a validity mask: stencil outputs mark their boundary ring invalid, and
//! disk-masked fields mark the exterior invalid. Every operation returns a
//! new field.

mod calculus;
mod interp;
pub mod io;
mod quadrature;

pub use calculus::{gradient, hessian, laplacian, Hessian};
pub use interp::{bicubic_at, bilinear_at, rescale, rescale_masked};
pub use quadrature::{ball_average, ball_integral, ball_weights, circle_trace, disk_rect_area, BallSum, BallWeights};
pub(crate) use quadrature::integrate_with;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const ORIGIN: Point = Point { x: 0.0, y: 0.0 };

    pub fn new(x: f64, y: f64) -> Self {
        Point { x, y }
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn dist(self, other: Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    pub fn add(self, other: Point) -> Point {
        Point::new(self.x + other.x, self.y + other.y)
    }

    pub fn sub(self, other: Point) -> Point {
        Point::new(self.x - other.x, self.y - other.y)
    }

    pub fn scale(self, s: f64) -> Point {
        Point::new(self.x * s, self.y * s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Domain {
    Square,
    Disk { center: Point, radius: f64 },
}

/// Node `(i, j)` sits at `origin + (i h, j h)`; `nx`, `ny` count nodes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid2D {
    nx: usize,
    ny: usize,
    h: f64,
    origin: Point,
    domain: Domain,
}

const DISK_SLACK: f64 = 1e-12;

impl Grid2D {
    pub fn new(nx: usize, ny: usize, h: f64, origin: Point) -> Result<Self> {
        if nx < 3 || ny < 3 {
            return Err(Error::Dimension(format!("grid must be at least 3x3, got {nx}x{ny}")));
        }
        if !(h > 0.0) || !h.is_finite() {
            return Err(Error::Dimension(format!("grid spacing must be positive, got {h}")));
        }
        if !origin.x.is_finite() || !origin.y.is_finite() {
            return Err(Error::Dimension("grid origin must be finite".into()));
        }
        Ok(Grid2D {
            nx,
            ny,
            h,
            origin,
            domain: Domain::Square,
        })
    }

    /// Square grid `[-k h, k h]^2` with a node at the origin.
    pub fn centered(h: f64, half_cells: usize) -> Result<Self> {
        let k = half_cells as f64;
        Grid2D::new(2 * half_cells + 1, 2 * half_cells + 1, h, Point::new(-k * h, -k * h))
    }

    /// Square grid `[-half_width, half_width]^2` with `nodes` nodes per side.
    pub fn square(half_width: f64, nodes: usize) -> Result<Self> {
        if nodes < 3 {
            return Err(Error::Dimension(format!("need at least 3 nodes per side, got {nodes}")));
        }
        let h = 2.0 * half_width / (nodes - 1) as f64;
        Grid2D::new(nodes, nodes, h, Point::new(-half_width, -half_width))
    }

    /// Same nodes, masked to the closed disk.
    pub fn with_disk(mut self, center: Point, radius: f64) -> Result<Self> {
        if !(radius > 0.0) {
            return Err(Error::Argument(format!("disk radius must be positive, got {radius}")));
        }
        self.domain = Domain::Disk { center, radius };
        Ok(self)
    }

    pub fn without_mask(mut self) -> Self {
        self.domain = Domain::Square;
        self
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn ny(&self) -> usize {
        self.ny
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn origin(&self) -> Point {
        self.origin
    }

    pub fn domain(&self) -> Domain {
        self.domain
    }

    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }

    #[inline]
    pub fn node(&self, i: usize, j: usize) -> Point {
        Point::new(self.origin.x + i as f64 * self.h, self.origin.y + j as f64 * self.h)
    }

    pub fn x_max(&self) -> f64 {
        self.origin.x + (self.nx - 1) as f64 * self.h
    }

    pub fn y_max(&self) -> f64 {
        self.origin.y + (self.ny - 1) as f64 * self.h
    }

    /// Domain membership; for a disk mask, exactly the nodes inside the closed disk.
    #[inline]
    pub fn is_active(&self, i: usize, j: usize) -> bool {
        match self.domain {
            Domain::Square => true,
            Domain::Disk { center, radius } => self.node(i, j).dist(center) <= radius * (1.0 + DISK_SLACK),
        }
    }

    /// Fractional node coordinates of a point.
    #[inline]
    pub fn locate(&self, p: Point) -> (f64, f64) {
        ((p.x - self.origin.x) / self.h, (p.y - self.origin.y) / self.h)
    }

    /// Nearest node to a point, if it lies on the grid.
    pub fn nearest_node(&self, p: Point) -> Option<(usize, usize)> {
        let (fx, fy) = self.locate(p);
        let (i, j) = (fx.round(), fy.round());
        if i < 0.0 || j < 0.0 || i > (self.nx - 1) as f64 || j > (self.ny - 1) as f64 {
            return None;
        }
        Some((i as usize, j as usize))
    }

    /// Checks that the closed disk of radius `radius` about `center`, padded
    /// by `margin` grid cells, lies inside the grid box and the domain mask.
    pub fn check_region(&self, center: Point, radius: f64, margin: f64) -> Result<()> {
        let pad = radius + margin * self.h;
        let tol = 1e-9 * self.h;
        let inside_box = center.x - pad >= self.origin.x - tol
            && center.x + pad <= self.x_max() + tol
            && center.y - pad >= self.origin.y - tol
            && center.y + pad <= self.y_max() + tol;
        if !inside_box {
            return Err(Error::Geometry(format!(
                "disk of radius {radius} (+{margin} cells) about ({}, {}) leaves the grid box",
                center.x, center.y
            )));
        }
        if let Domain::Disk { center: c, radius: r } = self.domain {
            if center.dist(c) + pad > r + tol {
                return Err(Error::Geometry(format!(
                    "disk of radius {radius} (+{margin} cells) about ({}, {}) leaves the masked disk of radius {r}",
                    center.x, center.y
                )));
            }
        }
        Ok(())
    }

    /// Same shape and spacing (origin and mask may differ only by rounding).
    pub fn same_nodes(&self, other: &Grid2D) -> bool {
        self.nx == other.nx
            && self.ny == other.ny
            && (self.h - other.h).abs() <= 1e-12 * self.h
            && (self.origin.x - other.origin.x).abs() <= 1e-9 * self.h
            && (self.origin.y - other.origin.y).abs() <= 1e-9 * self.h
    }
}

/// Samples of a real function on the nodes of a [`Grid2D`].
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    grid: Grid2D,
    values: Vec<f64>,
    mask: Option<Vec<bool>>,
}

impl ScalarField {
    pub fn from_values(grid: Grid2D, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::Dimension(format!(
                "expected {} values for a {}x{} grid, got {}",
                grid.len(),
                grid.nx(),
                grid.ny(),
                values.len()
            )));
        }
        if let Some(k) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                i: k % grid.nx(),
                j: k / grid.nx(),
            });
        }
        Ok(ScalarField {
            grid,
            values,
            mask: None,
        })
    }

    pub fn from_fn(grid: Grid2D, f: impl Fn(Point) -> f64 + Sync) -> Result<Self> {
        use rayon::prelude::*;
        let nx = grid.nx();
        let values: Vec<f64> = (0..grid.len())
            .into_par_iter()
            .map(|k| f(grid.node(k % nx, k / nx)))
            .collect();
        ScalarField::from_values(grid, values)
    }

    pub fn constant(grid: Grid2D, c: f64) -> Result<Self> {
        ScalarField::from_values(grid, vec![c; grid.len()])
    }

    /// Replaces the validity mask (`true` marks a usable node).
    pub fn with_mask(mut self, mask: Vec<bool>) -> Result<Self> {
        if mask.len() != self.grid.len() {
            return Err(Error::Dimension("mask length differs from grid".into()));
        }
        self.mask = Some(mask);
        Ok(self)
    }

    pub fn grid(&self) -> &Grid2D {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn mask(&self) -> Option<&[bool]> {
        self.mask.as_deref()
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[self.grid.index(i, j)]
    }

    #[inline]
    pub fn is_valid(&self, i: usize, j: usize) -> bool {
        match &self.mask {
            Some(m) => m[self.grid.index(i, j)],
            None => self.grid.is_active(i, j),
        }
    }

    pub fn valid_count(&self) -> usize {
        let g = &self.grid;
        (0..g.ny())
            .flat_map(|j| (0..g.nx()).map(move |i| (i, j)))
            .filter(|&(i, j)| self.is_valid(i, j))
            .count()
    }

    /// Pointwise map; the mask is kept.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Result<ScalarField> {
        let values = self.values.iter().map(|&v| f(v)).collect();
        let mut out = ScalarField::from_values(self.grid, values)?;
        out.mask = self.mask.clone();
        Ok(out)
    }

    /// Pointwise combination with a field on the same nodes; masks intersect.
    pub fn zip_with(&self, other: &ScalarField, f: impl Fn(f64, f64) -> f64) -> Result<ScalarField> {
        if !self.grid.same_nodes(&other.grid) {
            return Err(Error::GridMismatch("fields live on different grids".into()));
        }
        let values = self.values.iter().zip(&other.values).map(|(&a, &b)| f(a, b)).collect();
        let mut out = ScalarField::from_values(self.grid, values)?;
        if self.mask.is_some() || other.mask.is_some() {
            let g = self.grid;
            let mask = (0..g.len())
                .map(|k| self.is_valid(k % g.nx(), k / g.nx()) && other.is_valid(k % g.nx(), k / g.nx()))
                .collect();
            out.mask = Some(mask);
        }
        Ok(out)
    }

    pub fn add(&self, other: &ScalarField) -> Result<ScalarField> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &ScalarField) -> Result<ScalarField> {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn scale(&self, s: f64) -> Result<ScalarField> {
        self.map(|v| s * v)
    }

    /// Max of |f| over valid nodes.
    pub fn max_abs(&self) -> f64 {
        let g = &self.grid;
        let mut m = 0.0f64;
        for j in 0..g.ny() {
            for i in 0..g.nx() {
                if self.is_valid(i, j) {
                    m = m.max(self.get(i, j).abs());
                }
            }
        }
        m
    }

    /// Max of |f - other| over nodes valid in both.
    pub fn max_abs_diff(&self, other: &ScalarField) -> Result<f64> {
        Ok(self.sub(other)?.max_abs())
    }

    /// Sup of |f| over valid nodes in the closed disk about `center`.
    pub fn sup_abs_in_ball(&self, center: Point, radius: f64) -> f64 {
        let g = &self.grid;
        let mut m = 0.0f64;
        for j in 0..g.ny() {
            for i in 0..g.nx() {
                if self.is_valid(i, j) && g.node(i, j).dist(center) <= radius * (1.0 + 1e-12) {
                    m = m.max(self.get(i, j).abs());
                }
            }
        }
        m
    }
}

/// Values of a field at `m` equispaced points of a circle.
#[derive(Debug, Clone, PartialEq)]
pub struct CircleTrace {
    pub center: Point,
    pub radius: f64,
    pub angles: Vec<f64>,
    pub values: Vec<f64>,
}

impl CircleTrace {
    pub const MIN_SAMPLES: usize = 16;

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Periodic trapezoid rule for the integral over the angle.
    pub fn integrate_dtheta(&self, f: impl Fn(f64) -> f64) -> f64 {
        let m = self.values.len() as f64;
        self.values.iter().map(|&v| f(v)).sum::<f64>() * (2.0 * std::f64::consts::PI / m)
    }
}
