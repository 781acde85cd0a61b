use super::ScalarField;
use crate::error::{Error, Result};

/// Second derivatives `(f11, f12, f22)` on a common grid.
#[derive(Debug, Clone)]
pub struct Hessian {
    pub f11: ScalarField,
    pub f12: ScalarField,
    pub f22: ScalarField,
}

fn check_size(f: &ScalarField) -> Result<()> {
    let g = f.grid();
    if g.nx() < 3 || g.ny() < 3 {
        return Err(Error::Dimension(format!("stencils need a 3x3 grid, got {}x{}", g.nx(), g.ny())));
    }
    Ok(())
}

/// Applies a stencil at every interior node whose stencil neighbourhood is
/// valid in `f`; all other nodes are zero and invalid in the output.
fn apply<const K: usize>(
    f: &ScalarField,
    corners: bool,
    stencil: impl Fn(usize, usize) -> [f64; K] + Sync,
) -> Result<[ScalarField; K]> {
    use rayon::prelude::*;
    check_size(f)?;
    let g = *f.grid();
    let (nx, ny) = (g.nx(), g.ny());
    let usable = |i: usize, j: usize| -> bool {
        if i == 0 || j == 0 || i + 1 >= nx || j + 1 >= ny {
            return false;
        }
        let edges = f.is_valid(i, j)
            && f.is_valid(i - 1, j)
            && f.is_valid(i + 1, j)
            && f.is_valid(i, j - 1)
            && f.is_valid(i, j + 1);
        edges
            && (!corners
                || (f.is_valid(i - 1, j - 1)
                    && f.is_valid(i + 1, j - 1)
                    && f.is_valid(i - 1, j + 1)
                    && f.is_valid(i + 1, j + 1)))
    };
    let rows: Vec<(Vec<[f64; K]>, Vec<bool>)> = (0..ny)
        .into_par_iter()
        .map(|j| {
            let mut vals = vec![[0.0; K]; nx];
            let mut ok = vec![false; nx];
            for i in 0..nx {
                if usable(i, j) {
                    vals[i] = stencil(i, j);
                    ok[i] = true;
                }
            }
            (vals, ok)
        })
        .collect();
    let mut outs: Vec<Vec<f64>> = (0..K).map(|_| Vec::with_capacity(g.len())).collect();
    let mut mask = Vec::with_capacity(g.len());
    for (vals, ok) in rows {
        for (v, o) in vals.into_iter().zip(ok) {
            for (k, out) in outs.iter_mut().enumerate() {
                out.push(v[k]);
            }
            mask.push(o);
        }
    }
    let fields: Vec<ScalarField> = outs
        .into_iter()
        .map(|vals| ScalarField::from_values(g, vals).and_then(|s| s.with_mask(mask.clone())))
        .collect::<Result<_>>()?;
    Ok(fields.try_into().unwrap_or_else(|_| unreachable!()))
}

/// Five-point Laplacian.
pub fn laplacian(f: &ScalarField) -> Result<ScalarField> {
    let inv_h2 = 1.0 / (f.grid().h() * f.grid().h());
    let [lap] = apply::<1>(f, false, |i, j| {
        let c = f.get(i, j);
        [(f.get(i + 1, j) + f.get(i - 1, j) + f.get(i, j + 1) + f.get(i, j - 1) - 4.0 * c) * inv_h2]
    })?;
    Ok(lap)
}

/// Central second differences; the mixed derivative uses the four-corner stencil.
pub fn hessian(f: &ScalarField) -> Result<Hessian> {
    let h = f.grid().h();
    let inv_h2 = 1.0 / (h * h);
    let [f11, f12, f22] = apply::<3>(f, true, |i, j| {
        let c = f.get(i, j);
        let d11 = (f.get(i + 1, j) - 2.0 * c + f.get(i - 1, j)) * inv_h2;
        let d22 = (f.get(i, j + 1) - 2.0 * c + f.get(i, j - 1)) * inv_h2;
        let d12 = (f.get(i + 1, j + 1) - f.get(i + 1, j - 1) - f.get(i - 1, j + 1) + f.get(i - 1, j - 1))
            * (0.25 * inv_h2);
        [d11, d12, d22]
    })?;
    Ok(Hessian { f11, f12, f22 })
}

/// Central first differences `(f1, f2)`.
pub fn gradient(f: &ScalarField) -> Result<(ScalarField, ScalarField)> {
    let inv_2h = 0.5 / f.grid().h();
    let [g1, g2] = apply::<2>(f, false, |i, j| {
        [
            (f.get(i + 1, j) - f.get(i - 1, j)) * inv_2h,
            (f.get(i, j + 1) - f.get(i, j - 1)) * inv_2h,
        ]
    })?;
    Ok((g1, g2))
}
