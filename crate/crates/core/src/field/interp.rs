use super::{Grid2D, Point, ScalarField};
use crate::error::{Error, Result};

/// Fractional offsets this close to a node snap onto it, so that sample
/// points which coincide with nodes up to rounding reproduce node values.
const SNAP: f64 = 1e-9;

fn cell(f: &ScalarField, p: Point, lo: usize, hi: usize) -> Result<(usize, usize, f64, f64)> {
    let g = f.grid();
    let (fx, fy) = g.locate(p);
    let split = |c: f64, n: usize| -> Option<(usize, f64)> {
        let mut i = c.floor();
        let mut t = c - i;
        if t > 1.0 - SNAP {
            i += 1.0;
            t = 0.0;
        } else if t < SNAP {
            t = 0.0;
        }
        // Keep the stencil [i - lo, i + hi] on the grid; a point on the last
        // node uses the cell to its left with t = 1.
        if i - lo as f64 >= 0.0 && i + hi as f64 <= (n - 1) as f64 {
            Some((i as usize, t))
        } else if t == 0.0 && i >= 1.0 + lo as f64 && i - 1.0 + hi as f64 <= (n - 1) as f64 {
            Some((i as usize - 1, 1.0))
        } else {
            None
        }
    };
    let out_of_grid = || Error::Geometry(format!("point ({}, {}) is outside the interpolation range", p.x, p.y));
    let (i, tx) = split(fx, g.nx()).ok_or_else(out_of_grid)?;
    let (j, ty) = split(fy, g.ny()).ok_or_else(out_of_grid)?;
    for jj in (j - lo)..=(j + hi) {
        for ii in (i - lo)..=(i + hi) {
            if !f.is_valid(ii, jj) {
                return Err(Error::Geometry(format!(
                    "interpolation at ({}, {}) touches masked node ({ii}, {jj})",
                    p.x, p.y
                )));
            }
        }
    }
    Ok((i, j, tx, ty))
}

pub fn bilinear_at(f: &ScalarField, p: Point) -> Result<f64> {
    let (i, j, tx, ty) = cell(f, p, 0, 1)?;
    let v00 = f.get(i, j);
    let v10 = f.get(i + 1, j);
    let v01 = f.get(i, j + 1);
    let v11 = f.get(i + 1, j + 1);
    Ok((1.0 - ty) * ((1.0 - tx) * v00 + tx * v10) + ty * ((1.0 - tx) * v01 + tx * v11))
}

/// Keys cubic-convolution weights (a = -1/2) for offsets -1, 0, 1, 2.
/// Interpolating, C1, and exact on quadratics.
fn keys_weights(t: f64) -> [f64; 4] {
    let t2 = t * t;
    let t3 = t2 * t;
    [
        0.5 * (-t3 + 2.0 * t2 - t),
        0.5 * (3.0 * t3 - 5.0 * t2 + 2.0),
        0.5 * (-3.0 * t3 + 4.0 * t2 + t),
        0.5 * (t3 - t2),
    ]
}

pub fn bicubic_at(f: &ScalarField, p: Point) -> Result<f64> {
    let (i, j, tx, ty) = cell(f, p, 1, 2)?;
    if tx == 0.0 && ty == 0.0 {
        return Ok(f.get(i, j));
    }
    let wx = keys_weights(tx);
    let wy = keys_weights(ty);
    let mut acc = 0.0;
    for (b, wyb) in wy.iter().enumerate() {
        let jj = j + b - 1;
        let row: f64 = wx.iter().enumerate().map(|(a, wxa)| wxa * f.get(i + a - 1, jj)).sum();
        acc += wyb * row;
    }
    Ok(acc)
}

/// Samples `x -> f(center + r x) / r^power` on the nodes of `target`.
pub fn rescale(f: &ScalarField, center: Point, r: f64, power: f64, target: &Grid2D) -> Result<ScalarField> {
    use rayon::prelude::*;
    if !(r > 0.0) {
        return Err(Error::Argument(format!("rescaling radius must be positive, got {r}")));
    }
    let scale = r.powf(-power);
    let nx = target.nx();
    let values: Vec<f64> = (0..target.len())
        .into_par_iter()
        .map(|k| {
            let x = target.node(k % nx, k / nx);
            bicubic_at(f, center.add(x.scale(r))).map(|v| v * scale)
        })
        .collect::<Result<_>>()?;
    ScalarField::from_values(*target, values)
}

/// As [`rescale`], but target nodes whose source stencil leaves the grid or
/// touches masked nodes are masked instead of failing the whole rescale.
pub fn rescale_masked(f: &ScalarField, center: Point, r: f64, power: f64, target: &Grid2D) -> Result<ScalarField> {
    use rayon::prelude::*;
    if !(r > 0.0) {
        return Err(Error::Argument(format!("rescaling radius must be positive, got {r}")));
    }
    let scale = r.powf(-power);
    let nx = target.nx();
    let sampled: Vec<Option<f64>> = (0..target.len())
        .into_par_iter()
        .map(|k| {
            let x = target.node(k % nx, k / nx);
            match bicubic_at(f, center.add(x.scale(r))) {
                Ok(v) => Ok(Some(v * scale)),
                Err(Error::Geometry(_)) => Ok(None),
                Err(e) => Err(e),
            }
        })
        .collect::<Result<_>>()?;
    if sampled.iter().all(Option::is_some) {
        return ScalarField::from_values(*target, sampled.into_iter().flatten().collect());
    }
    let mask = sampled.iter().map(Option::is_some).collect();
    let values = sampled.into_iter().map(|v| v.unwrap_or(0.0)).collect();
    ScalarField::from_values(*target, values)?.with_mask(mask)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bilinear_reproduces_affine() {
        let g = Grid2D::centered(0.1, 10).unwrap();
        let f = ScalarField::from_fn(g, |p| 2.0 * p.x - 3.0 * p.y + 0.5).unwrap();
        for &(x, y) in &[(0.123, -0.456), (0.999, 0.0), (-1.0, -1.0), (1.0, 1.0)] {
            let v = bilinear_at(&f, Point::new(x, y)).unwrap();
            assert!((v - (2.0 * x - 3.0 * y + 0.5)).abs() < 1e-12);
        }
        assert!(bilinear_at(&f, Point::new(1.01, 0.0)).is_err());
    }

    #[test]
    fn bicubic_reproduces_quadratics() {
        let g = Grid2D::centered(0.1, 10).unwrap();
        let q = |p: Point| p.x * p.x - 2.0 * p.x * p.y + 0.3 * p.y * p.y + p.x - 1.0;
        let f = ScalarField::from_fn(g, q).unwrap();
        for &(x, y) in &[(0.123, -0.456), (0.55, 0.8), (-0.87, 0.21)] {
            let p = Point::new(x, y);
            assert!((bicubic_at(&f, p).unwrap() - q(p)).abs() < 1e-12);
        }
        // Needs two nodes of margin.
        assert!(bicubic_at(&f, Point::new(0.95, 0.0)).is_err());
        assert!(bicubic_at(&f, Point::new(0.9, 0.0)).is_ok());
    }

    #[test]
    fn rescale_identity_and_homogeneity() {
        let g = Grid2D::centered(0.05, 30).unwrap();
        let f = ScalarField::from_fn(g, |p| (p.x * 3.0).sin() + p.y * p.y).unwrap();
        let inner = Grid2D::centered(0.05, 20).unwrap();
        let same = rescale(&f, Point::ORIGIN, 1.0, 0.0, &inner).unwrap();
        for j in 0..inner.ny() {
            for i in 0..inner.nx() {
                assert!((same.get(i, j) - f.get(i + 10, j + 10)).abs() < 1e-12);
            }
        }
        let xy = ScalarField::from_fn(g, |p| p.x * p.y).unwrap();
        let small = Grid2D::centered(0.05, 20).unwrap();
        let r = rescale(&xy, Point::ORIGIN, 0.37, 2.0, &small).unwrap();
        for j in 0..small.ny() {
            for i in 0..small.nx() {
                let p = small.node(i, j);
                assert!((r.get(i, j) - p.x * p.y).abs() < 1e-10);
            }
        }
    }
}
