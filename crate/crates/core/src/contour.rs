//! Zero level set by marching squares, chained into polylines.

use std::collections::BTreeMap;
use std::f64::consts::FRAC_PI_2;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{Point, ScalarField};

/// Part of the grid that is contoured. A cell is used when its four
/// corners are valid and its center lies in the region.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum ContourRegion {
    Whole,
    Ball { center: Point, radius: f64 },
    Annulus { center: Point, inner: f64, outer: f64 },
}

impl ContourRegion {
    fn contains(&self, p: Point) -> bool {
        match *self {
            ContourRegion::Whole => true,
            ContourRegion::Ball { center, radius } => p.dist(center) <= radius,
            ContourRegion::Annulus { center, inner, outer } => {
                let d = p.dist(center);
                d >= inner && d <= outer
            }
        }
    }

    fn center(&self) -> Option<Point> {
        match *self {
            ContourRegion::Whole => None,
            ContourRegion::Ball { center, .. } | ContourRegion::Annulus { center, .. } => Some(center),
        }
    }

    /// Distance from `p` to the nearest circle bounding the region.
    fn boundary_distance(&self, p: Point) -> f64 {
        match *self {
            ContourRegion::Whole => f64::INFINITY,
            ContourRegion::Ball { center, radius } => (p.dist(center) - radius).abs(),
            ContourRegion::Annulus { center, inner, outer } => {
                let d = p.dist(center);
                (d - inner).abs().min((d - outer).abs())
            }
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = match *self {
            ContourRegion::Whole => true,
            ContourRegion::Ball { radius, .. } => radius > 0.0,
            ContourRegion::Annulus { inner, outer, .. } => inner >= 0.0 && outer > inner,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Argument(format!("invalid contour region {self:?}")))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundaryCurve {
    /// Local branch `k` lies along the direction `frame + k π/2`. Closed
    /// curves carry no label.
    pub branch: Option<u8>,
    /// Open curves start at the endpoint closest to the region center.
    pub points: Vec<Point>,
    pub closed: bool,
    /// The curve stopped at the grid edge or at invalid nodes rather than
    /// at the region boundary.
    pub truncated: bool,
    /// Direction of the curve leaving its inner endpoint.
    pub inner_tangent: Option<f64>,
}

type EdgeKey = (usize, usize);

/// Marching squares on the 0-level of `u`. Nodes count as inside when
/// `u > 0`. Saddle cells are split by the sign of the cell average.
/// Branches are labelled relative to the cross direction `frame`.
pub fn extract_zero_set(u: &ScalarField, region: &ContourRegion, frame: f64) -> Result<Vec<BoundaryCurve>> {
    region.validate()?;
    let g = *u.grid();
    let (nx, ny, h) = (g.nx(), g.ny(), g.h());
    let vals = u.values();
    let mut points: BTreeMap<EdgeKey, Point> = BTreeMap::new();
    let mut adj: BTreeMap<EdgeKey, Vec<EdgeKey>> = BTreeMap::new();

    let mut crossing = |a: usize, b: usize| -> EdgeKey {
        let key = (a.min(b), a.max(b));
        points.entry(key).or_insert_with(|| {
            let (va, vb) = (vals[a], vals[b]);
            let t = va / (va - vb);
            let pa = g.node(a % nx, a / nx);
            let pb = g.node(b % nx, b / nx);
            pa.add(pb.sub(pa).scale(t))
        });
        key
    };

    for j in 0..ny - 1 {
        for i in 0..nx - 1 {
            let c = [g.index(i, j), g.index(i + 1, j), g.index(i + 1, j + 1), g.index(i, j + 1)];
            if !c.iter().all(|&k| u.is_valid(k % nx, k / nx)) {
                continue;
            }
            let center = g.node(i, j).add(Point::new(0.5 * h, 0.5 * h));
            if !region.contains(center) {
                continue;
            }
            let pos: Vec<bool> = c.iter().map(|&k| vals[k] > 0.0).collect();
            // Edge e joins corners e and e+1.
            let cut: Vec<usize> = (0..4).filter(|&e| pos[e] != pos[(e + 1) % 4]).collect();
            let mut segs: Vec<(usize, usize)> = Vec::new();
            match cut.len() {
                0 => {}
                2 => segs.push((cut[0], cut[1])),
                4 => {
                    let mean = c.iter().map(|&k| vals[k]).sum::<f64>() / 4.0;
                    // Corner k sits between edges k-1 and k.
                    let isolate_positive = mean <= 0.0;
                    for k in 0..4 {
                        if pos[k] == isolate_positive {
                            segs.push(((k + 3) % 4, k));
                        }
                    }
                }
                _ => unreachable!("an even number of sign changes around a cell"),
            }
            for (e1, e2) in segs {
                let k1 = crossing(c[e1], c[(e1 + 1) % 4]);
                let k2 = crossing(c[e2], c[(e2 + 1) % 4]);
                if k1 == k2 {
                    continue;
                }
                adj.entry(k1).or_default().push(k2);
                adj.entry(k2).or_default().push(k1);
            }
        }
    }

    let mut used: BTreeMap<EdgeKey, bool> = adj.keys().map(|&k| (k, false)).collect();
    let mut curves = Vec::new();
    let walk = |start: EdgeKey, used: &mut BTreeMap<EdgeKey, bool>| -> (Vec<EdgeKey>, bool) {
        let mut path = vec![start];
        used.insert(start, true);
        let mut prev: Option<EdgeKey> = None;
        let mut cur = start;
        loop {
            let next = adj[&cur].iter().copied().find(|n| Some(*n) != prev && !used[n]);
            match next {
                Some(n) => {
                    used.insert(n, true);
                    path.push(n);
                    prev = Some(cur);
                    cur = n;
                }
                None => {
                    let closed = path.len() > 2 && adj[&cur].contains(&start);
                    return (path, closed);
                }
            }
        }
    };
    // Open curves first, from their endpoints.
    let ends: Vec<EdgeKey> = adj.iter().filter(|(_, n)| n.len() == 1).map(|(k, _)| *k).collect();
    for e in ends {
        if !used[&e] {
            let (path, _) = walk(e, &mut used);
            curves.push((path, false));
        }
    }
    let rest: Vec<EdgeKey> = used.iter().filter(|(_, &u)| !u).map(|(k, _)| *k).collect();
    for s in rest {
        if !used[&s] {
            curves.push(walk(s, &mut used));
        }
    }

    let center = region.center();
    Ok(curves
        .into_iter()
        .map(|(path, closed)| {
            let mut pts: Vec<Point> = path.iter().map(|k| points[k]).collect();
            if closed {
                return BoundaryCurve {
                    branch: None,
                    points: pts,
                    closed: true,
                    truncated: false,
                    inner_tangent: None,
                };
            }
            let c = center.unwrap_or(Point::ORIGIN);
            if pts[0].dist(c) > pts[pts.len() - 1].dist(c) {
                pts.reverse();
            }
            let truncated = match region {
                ContourRegion::Whole => true,
                _ => [pts[0], pts[pts.len() - 1]].iter().any(|&p| region.boundary_distance(p) > 2.0 * h),
            };
            let branch = center.map(|c| {
                let mean = pts.iter().fold(Point::ORIGIN, |s, &p| s.add(p)).scale(1.0 / pts.len() as f64);
                let d = mean.sub(c);
                branch_label(d.y.atan2(d.x), frame)
            });
            let inner_tangent = pts.iter().skip(1).find(|p| p.dist(pts[0]) >= 4.0 * h).map(|p| {
                let d = p.sub(pts[0]);
                d.y.atan2(d.x)
            });
            BoundaryCurve {
                branch,
                points: pts,
                closed: false,
                truncated,
                inner_tangent,
            }
        })
        .collect())
}

fn branch_label(angle: f64, frame: f64) -> u8 {
    let k = ((angle - frame) / FRAC_PI_2).round() as i64;
    k.rem_euclid(4) as u8
}

/// CSV with header `branch_id,x,y`. Curves are numbered in output order.
pub fn write_curves_csv(curves: &[BoundaryCurve], w: impl Write) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(["branch_id", "x", "y"])?;
    for (id, c) in curves.iter().enumerate() {
        for p in &c.points {
            wr.write_record([id.to_string(), p.x.to_string(), p.y.to_string()])?;
        }
    }
    wr.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossingAngle {
    /// Angle between the two fitted lines, in degrees within `[0, 90]`.
    pub angle_deg: f64,
    /// Direction of each line through the center (modulo π), radians.
    pub line_angles: [f64; 2],
    /// Outward direction of each branch fit, indexed by branch label.
    pub branch_directions: [f64; 4],
}

/// Angle between the two lines formed by opposite branches. Each branch is
/// fitted by principal axes over its points between `2h` beyond its inner
/// endpoint and `fit_radius` from the center.
pub fn crossing_angle(curves: &[BoundaryCurve], center: Point, h: f64, fit_radius: f64) -> Result<CrossingAngle> {
    let open: Vec<&BoundaryCurve> = curves.iter().filter(|c| !c.closed).collect();
    if open.len() != 4 || curves.len() != 4 {
        return Err(Error::Topology { found: curves.len() });
    }
    let mut dirs: [Option<Point>; 4] = [None; 4];
    for c in open {
        let label = c.branch.ok_or(Error::Topology { found: curves.len() })? as usize;
        if dirs[label].is_some() {
            return Err(Error::Topology { found: curves.len() });
        }
        let inner = c.points[0].dist(center);
        let sel: Vec<Point> = c
            .points
            .iter()
            .copied()
            .filter(|p| {
                let d = p.dist(center);
                d >= inner + 2.0 * h && d <= fit_radius
            })
            .collect();
        if sel.len() < 3 {
            return Err(Error::InsufficientData(format!(
                "branch {label} has {} points inside the fit window",
                sel.len()
            )));
        }
        dirs[label] = Some(principal_direction(&sel, center));
    }
    let d: Vec<Point> = dirs.iter().map(|d| d.expect("four distinct labels")).collect();
    let line = |a: Point, b: Point| {
        let v = a.sub(b);
        v.scale(1.0 / v.norm())
    };
    let l0 = line(d[0], d[2]);
    let l1 = line(d[1], d[3]);
    let cos = (l0.x * l1.x + l0.y * l1.y).abs().min(1.0);
    let angle_deg = cos.acos().to_degrees();
    let mod_pi = |v: Point| {
        let a = v.y.atan2(v.x);
        if a < 0.0 {
            a + std::f64::consts::PI
        } else {
            a
        }
    };
    Ok(CrossingAngle {
        angle_deg,
        line_angles: [mod_pi(l0), mod_pi(l1)],
        branch_directions: [0, 1, 2, 3].map(|k| d[k].y.atan2(d[k].x)),
    })
}

/// Unit principal axis of a point cloud, oriented away from `center`.
fn principal_direction(pts: &[Point], center: Point) -> Point {
    let n = pts.len() as f64;
    let m = pts.iter().fold(Point::ORIGIN, |s, &p| s.add(p)).scale(1.0 / n);
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for p in pts {
        let d = p.sub(m);
        sxx += d.x * d.x;
        sxy += d.x * d.y;
        syy += d.y * d.y;
    }
    let t = 0.5 * (2.0 * sxy).atan2(sxx - syy);
    let v = Point::new(t.cos(), t.sin());
    let out = m.sub(center);
    if v.x * out.x + v.y * out.y < 0.0 {
        v.scale(-1.0)
    } else {
        v
    }
}
