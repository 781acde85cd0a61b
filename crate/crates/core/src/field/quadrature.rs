use std::f64::consts::PI;

use super::{bilinear_at, CircleTrace, Grid2D, Point, ScalarField};
use crate::error::{Error, Result};

/// Area of `{0 <= s <= x, 0 <= t <= y, s^2 + t^2 <= r^2}` for `x, y >= 0`.
fn quarter_area(x: f64, y: f64, r: f64) -> f64 {
    let x = x.min(r);
    let y = y.min(r);
    if x * x + y * y <= r * r {
        return x * y;
    }
    // Primitive of sqrt(r^2 - u^2).
    let g = |u: f64| 0.5 * (u * (r * r - u * u).max(0.0).sqrt() + r * r * (u / r).clamp(-1.0, 1.0).asin());
    let s = (r * r - y * y).max(0.0).sqrt();
    y * s + g(x) - g(s)
}

fn corner_area(x: f64, y: f64, r: f64) -> f64 {
    let sx = if x < 0.0 { -1.0 } else { 1.0 };
    let sy = if y < 0.0 { -1.0 } else { 1.0 };
    sx * sy * quarter_area(x.abs(), y.abs(), r)
}

/// Exact area of the rectangle `[x0, x1] x [y0, y1]` intersected with the
/// disk of radius `r` about the origin.
pub fn disk_rect_area(x0: f64, x1: f64, y0: f64, y1: f64, r: f64) -> f64 {
    let inside = |x: f64, y: f64| x * x + y * y <= r * r;
    if inside(x0, y0) && inside(x1, y0) && inside(x0, y1) && inside(x1, y1) {
        return (x1 - x0) * (y1 - y0);
    }
    let dx = if x0 > 0.0 { x0 } else if x1 < 0.0 { -x1 } else { 0.0 };
    let dy = if y0 > 0.0 { y0 } else if y1 < 0.0 { -y1 } else { 0.0 };
    if dx * dx + dy * dy >= r * r {
        return 0.0;
    }
    let a = corner_area(x1, y1, r) - corner_area(x0, y1, r) - corner_area(x1, y0, r) + corner_area(x0, y0, r);
    a.max(0.0)
}

/// Node weights for integrals over a disk: each node carries the area of its
/// cell `[x - h/2, x + h/2] x [y - h/2, y + h/2]` clipped to the disk.
#[derive(Debug, Clone)]
pub struct BallWeights {
    pub center: Point,
    pub radius: f64,
    /// `(i, j, weight)` in row-major order.
    pub entries: Vec<(usize, usize, f64)>,
}

impl BallWeights {
    pub fn total(&self) -> f64 {
        self.entries.iter().map(|e| e.2).sum()
    }
}

pub fn ball_weights(grid: &Grid2D, center: Point, radius: f64) -> BallWeights {
    let h = grid.h();
    let (cx, cy) = grid.locate(center);
    let reach = radius / h + 1.0;
    let j0 = (cy - reach).floor().max(0.0) as usize;
    let j1 = ((cy + reach).ceil().max(0.0) as usize).min(grid.ny() - 1);
    let i0 = (cx - reach).floor().max(0.0) as usize;
    let i1 = ((cx + reach).ceil().max(0.0) as usize).min(grid.nx() - 1);
    let mut entries = Vec::new();
    for j in j0..=j1 {
        for i in i0..=i1 {
            let p = grid.node(i, j).sub(center);
            let w = disk_rect_area(p.x - 0.5 * h, p.x + 0.5 * h, p.y - 0.5 * h, p.y + 0.5 * h, radius);
            if w > 0.0 {
                entries.push((i, j, w));
            }
        }
    }
    BallWeights {
        center,
        radius,
        entries,
    }
}

/// Weighted sum over a disk; nodes invalid in `f` are skipped.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BallSum {
    pub integral: f64,
    /// Total weight of the nodes that were used.
    pub area: f64,
    /// Weight of skipped (invalid) nodes.
    pub excluded: f64,
}

impl BallSum {
    pub fn average(&self) -> f64 {
        self.integral / self.area
    }

    pub fn excluded_fraction(&self) -> f64 {
        self.excluded / (self.area + self.excluded)
    }
}

pub fn ball_integral(f: &ScalarField, center: Point, radius: f64) -> Result<BallSum> {
    if !(radius > 0.0) {
        return Err(Error::Argument(format!("ball radius must be positive, got {radius}")));
    }
    f.grid().check_region(center, radius, 1.0)?;
    let weights = ball_weights(f.grid(), center, radius);
    Ok(integrate_with(f, &weights))
}

pub(crate) fn integrate_with(f: &ScalarField, weights: &BallWeights) -> BallSum {
    let mut sum = BallSum {
        integral: 0.0,
        area: 0.0,
        excluded: 0.0,
    };
    for &(i, j, w) in &weights.entries {
        if f.is_valid(i, j) {
            sum.integral += w * f.get(i, j);
            sum.area += w;
        } else {
            sum.excluded += w;
        }
    }
    sum
}

/// Area-weighted mean over the disk, renormalised over valid nodes.
pub fn ball_average(f: &ScalarField, center: Point, radius: f64) -> Result<f64> {
    let s = ball_integral(f, center, radius)?;
    if s.area <= 0.0 {
        return Err(Error::Geometry("no valid nodes inside the ball".into()));
    }
    Ok(s.average())
}

/// Bilinear samples at `theta_k = 2 pi k / m`.
pub fn circle_trace(f: &ScalarField, center: Point, radius: f64, m: usize) -> Result<CircleTrace> {
    if m < CircleTrace::MIN_SAMPLES {
        return Err(Error::Argument(format!(
            "circle traces need at least {} samples, got {m}",
            CircleTrace::MIN_SAMPLES
        )));
    }
    if !(radius > 0.0) {
        return Err(Error::Argument(format!("circle radius must be positive, got {radius}")));
    }
    f.grid().check_region(center, radius, 1.0)?;
    let angles: Vec<f64> = (0..m).map(|k| 2.0 * PI * k as f64 / m as f64).collect();
    let values = angles
        .iter()
        .map(|&t| bilinear_at(f, Point::new(center.x + radius * t.cos(), center.y + radius * t.sin())))
        .collect::<Result<Vec<_>>>()?;
    Ok(CircleTrace {
        center,
        radius,
        angles,
        values,
    })
}
