//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any criterion fails.

use std::f64::consts::{LN_2, PI};
use std::fs;
use std::path::Path;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use obstacle_lab::analytic::{eval_z, CrossPotential, SyntheticSingularField};
use obstacle_lab::experiment::{
    convergence_study, quartic_harmonic, run, ConvergenceQuantity, ExperimentSpec,
};
use obstacle_lab::field::{Grid2D, Point, ScalarField};
use obstacle_lab::poisson::BoundaryData;
use obstacle_lab::projection::{hessian_misfit, project, project_rescaled, rescaled_field, HarmonicPoly2};
use obstacle_lab::radial::{phi_monotonicity_check, radial_profile, weiss_phi, PHI_SLACK_C};
use obstacle_lab::singularity::{
    analysis_grid, branches_near, dyadic_tau_track, positivity_discrepancy, rotation_track, GAMMA_HAT,
};
use obstacle_lab::contour::crossing_angle;
use obstacle_lab::unstable::{solve_unstable, Init, SolverConfig, Symmetry};

type Outcome = Result<String, String>;

fn check(cond: bool, detail: String) -> Outcome {
    if cond {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn fmt_err<E: std::fmt::Display>(e: E) -> String {
    format!("error: {e}")
}

/// Grid on `[-1, 1]²` masked to the unit disk.
fn disk_grid(cells_per_unit: usize) -> Grid2D {
    Grid2D::centered(1.0 / cells_per_unit as f64, cells_per_unit)
        .unwrap()
        .with_disk(Point::ORIGIN, 1.0)
        .unwrap()
}

/// Symmetry-pinned cross solve with boundary data `u_syn(M) + quartic ·
/// Im((x1 + i x2)⁴)`.
fn solve_cross(m: f64, quartic: f64, symmetry: Vec<Symmetry>, cells_per_unit: usize) -> Result<ScalarField, String> {
    let syn = SyntheticSingularField::axis_aligned(m).map_err(fmt_err)?;
    let boundary = BoundaryData::function(move |p| syn.value(p) + quartic * quartic_harmonic(p));
    let cfg = SolverConfig {
        damping: 1.0,
        max_outer: 200,
        fp_tol: 1e-9,
        symmetry,
        init: Init::Synthetic { m, theta: 0.0 },
        poisson_tol: 1e-9,
        pin_origin: true,
    };
    solve_unstable(disk_grid(cells_per_unit), &boundary, &cfg)
        .map(|o| o.u)
        .map_err(fmt_err)
}

fn potential() -> Outcome {
    let h = 1.0 / 512.0;
    let z = CrossPotential.sample(Grid2D::centered(h, 512).unwrap()).map_err(fmt_err)?;
    let g = z.grid();
    let mut worst = 0.0f64;
    for j in 1..g.ny() - 1 {
        for i in 1..g.nx() - 1 {
            let p = g.node(i, j);
            if p.x.abs() < 4.0 * h - 1e-12 || p.y.abs() < 4.0 * h - 1e-12 {
                continue;
            }
            let lap = (z.get(i + 1, j) + z.get(i - 1, j) + z.get(i, j + 1) + z.get(i, j - 1) - 4.0 * z.get(i, j))
                / (h * h);
            let chi = if p.x * p.y > 0.0 { 1.0 } else { 0.0 };
            worst = worst.max((lap + chi).abs());
        }
    }
    let z10 = eval_z(Point::new(1.0, 0.0));
    let z11 = eval_z(Point::new(1.0, 1.0));
    let z11_direct = (8.0 - 4.0 * LN_2 - 4.0 * PI) / (8.0 * PI);
    check(
        worst <= 1e-2 && (z10 + 0.125).abs() <= 1e-9 && (z11 - z11_direct).abs() <= 1e-9 && (z11 + 0.29201).abs() < 5e-6,
        format!("residual {worst:.3e} (<= 1e-2), z(1,0) = {z10:.12}, z(1,1) = {z11:.12} (direct {z11_direct:.12})"),
    )
}

fn projection_constant() -> Outcome {
    let mut errs = Vec::new();
    for n in [256usize, 512, 1024] {
        let h = 1.0 / n as f64;
        let z = CrossPotential.sample(analysis_grid(h, 0.625).unwrap()).map_err(fmt_err)?;
        let tau = project_rescaled(&z, Point::ORIGIN, 0.5).map_err(fmt_err)?.tau;
        errs.push((tau - GAMMA_HAT).abs());
    }
    check(
        errs[0] <= 2e-3 && errs[2] <= 5e-4 && errs[0] > errs[1] && errs[1] > errs[2],
        format!(
            "|tau - log2/(2pi)| = {:.3e} (h=1/256, <= 2e-3), {:.3e} (1/512), {:.3e} (1/1024, <= 5e-4)",
            errs[0], errs[1], errs[2]
        ),
    )
}

fn projection_algebra() -> Outcome {
    let h = 1.0 / 512.0;
    let g = analysis_grid(h, 1.0 + 4.0 * h).unwrap();
    let z = CrossPotential.sample(g).map_err(fmt_err)?;
    let pz = project(&z).map_err(fmt_err)?;
    let coeff_ok = pz.p.a.abs() <= 5e-3 && pz.p.b.abs() <= 5e-3;

    // Linearity on z and a rotated synthetic field.
    let u = SyntheticSingularField::new(7.0, 0.4, Point::ORIGIN).unwrap().sample(g).map_err(fmt_err)?;
    let pu = project(&u).map_err(fmt_err)?.p;
    let (al, be) = (1.7, -0.6);
    let combo = z.zip_with(&u, |x, y| al * x + be * y).map_err(fmt_err)?;
    let pc = project(&combo).map_err(fmt_err)?.p;
    let lin = (pc.a - (al * pz.p.a + be * pu.a)).abs().max((pc.b - (al * pz.p.b + be * pu.b)).abs());

    // Minimizer certificate: no harmonic-quadratic perturbation lowers the
    // Hessian misfit of z_{1/2}.
    let zr = rescaled_field(&z, Point::ORIGIN, 0.5).map_err(fmt_err)?;
    let p = project(&zr).map_err(fmt_err)?.p;
    let base = hessian_misfit(&zr, &p).map_err(fmt_err)?;
    let mut rng = ChaCha8Rng::seed_from_u64(20);
    let mut worst_gain = f64::INFINITY;
    for _ in 0..20 {
        let q = HarmonicPoly2::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        let eps = 10f64.powf(rng.gen_range(-4.0..0.0));
        let m = hessian_misfit(&zr, &p.add(&q.scale(eps))).map_err(fmt_err)?;
        worst_gain = worst_gain.min(m - base);
    }

    // Scale invariance: q(r x)/r² = q for harmonic quadratics.
    let q = HarmonicPoly2::new(0.3, -1.1);
    let qf = ScalarField::from_fn(g, |x| q.eval(x)).map_err(fmt_err)?;
    let mut scale_err = 0.0f64;
    for r in [0.9, 0.5, 0.25, 0.1] {
        let pr = project_rescaled(&qf, Point::ORIGIN, r).map_err(fmt_err)?.p;
        scale_err = scale_err.max((pr.a - q.a).abs()).max((pr.b - q.b).abs());
    }
    check(
        coeff_ok && lin <= 1e-12 && worst_gain >= 0.0 && scale_err <= 1e-8,
        format!(
            "Pi(z) a = {:.2e}, b = {:.2e} (<= 5e-3); linearity defect {lin:.1e}; min misfit gain over 20 perturbations {worst_gain:.2e} (>= 0); scale defect {scale_err:.1e} (<= 1e-8)",
            pz.p.a, pz.p.b
        ),
    )
}

fn radial_spec(nodes: usize, out: &Path) -> ExperimentSpec {
    let json = format!(
        r#"{{"version": 1, "name": "radial", "grid": {{"half_width": 1, "nodes": {nodes}}},
            "scenario": {{"type": "radial-oracle"}},
            "analysis": {{"r0": 0.8, "levels": 3, "singular": false}}, "output": "{}"}}"#,
        out.display()
    );
    ExperimentSpec::from_json(&json, "/").unwrap()
}

fn solver_oracle(tmp: &Path) -> Outcome {
    let spec = radial_spec(65, &tmp.join("unused"));
    let t = convergence_study(&spec, 3, ConvergenceQuantity::RadialError).map_err(fmt_err)?;
    let bounded = t.rows.iter().all(|r| r.error <= 4.0 * r.h * r.h);
    let errs: Vec<String> = t.rows.iter().map(|r| format!("{:.2e}@h={}", r.error, r.h)).collect();
    check(
        bounded && (t.fitted_order - 2.0).abs() <= 0.3,
        format!("errors {} (<= 4h^2), fitted order {:.3} (2.0 +- 0.3)", errs.join(", "), t.fitted_order),
    )
}

fn monotonicity(cross: &ScalarField) -> Outcome {
    let radii: Vec<f64> = (0..=9).map(|k| 0.8 * 0.5f64.powf(k as f64 / 3.0)).filter(|&r| r >= 0.1 - 1e-12).collect();

    let h = 1.0 / 256.0;
    let radial = solve_unstable(disk_grid(256), &BoundaryData::Constant(0.0), &SolverConfig::default())
        .map_err(fmt_err)?
        .u;
    let pr = radial_profile(&radial, Point::ORIGIN, &radii).map_err(fmt_err)?;
    let mr = phi_monotonicity_check(&pr, h, PHI_SLACK_C);

    let pc = radial_profile(cross, Point::ORIGIN, &radii).map_err(fmt_err)?;
    let mc = phi_monotonicity_check(&pc, cross.grid().h(), PHI_SLACK_C);

    let xy = ScalarField::from_fn(analysis_grid(h, 1.0 + 4.0 * h).unwrap(), |p| p.x * p.y).map_err(fmt_err)?;
    let mut xy_dev = 0.0f64;
    for &r in &radii {
        xy_dev = xy_dev.max((weiss_phi(&xy, Point::ORIGIN, r).map_err(fmt_err)? + 0.5).abs());
    }
    let span = |p: &obstacle_lab::radial::RadialProfile| {
        let v: Vec<f64> = p.rows.iter().map(|r| r.big_phi).collect();
        format!("{:.4}..{:.4}", v[v.len() - 1], v[0])
    };
    check(
        mr.monotone && mc.monotone && xy_dev <= 1e-3,
        format!(
            "radial Phi {} ({} violations), cross Phi {} ({} violations) over {} radii in [0.1, 0.8]; x1x2 |Phi + 1/2| <= {xy_dev:.1e} (<= 1e-3)",
            span(&pr),
            mr.violations.len(),
            span(&pc),
            mc.violations.len(),
            radii.len()
        ),
    )
}

fn dyadic_growth(cross: &ScalarField) -> Outcome {
    let g = Grid2D::centered(1.0 / 512.0, 640).unwrap();
    let u = SyntheticSingularField::axis_aligned(30.0).unwrap().sample(g).map_err(fmt_err)?;
    let t = dyadic_tau_track(&u, Point::ORIGIN, 1.0, 4).map_err(fmt_err)?;
    let syn_dev = t.increments.iter().map(|d| (d / GAMMA_HAT - 1.0).abs()).fold(0.0, f64::max);
    let c = dyadic_tau_track(cross, Point::ORIGIN, 0.5, 3).map_err(fmt_err)?;
    let ratios: Vec<f64> = c.increments.iter().map(|d| d / GAMMA_HAT).collect();
    let cross_ok = ratios.iter().all(|&q| (0.5..=1.5).contains(&q));
    check(
        syn_dev <= 0.05 && t.increments.len() == 4 && cross_ok && ratios.len() == 3,
        format!(
            "u_syn(30) max |increment/gamma - 1| = {syn_dev:.2e} (<= 0.05) over 4 levels; solved cross increment/gamma = {:?} (in [0.5, 1.5])",
            ratios.iter().map(|q| format!("{q:.4}")).collect::<Vec<_>>()
        ),
    )
}

fn discrepancy() -> Outcome {
    let g = Grid2D::centered(1.0 / 1024.0, 1100).unwrap();
    let mut rows = Vec::new();
    for m in [10.0, 30.0, 100.0] {
        let u = SyntheticSingularField::axis_aligned(m).unwrap().sample(g).map_err(fmt_err)?;
        rows.push(positivity_discrepancy(&u, Point::ORIGIN, 1.0).map_err(fmt_err)?);
    }
    // C_fit comes from M = 10 alone and must bound the other two.
    let c_fit = rows[0].area / rows[0].bound_shape;
    let bounded = rows.iter().all(|d| d.area <= c_fit * d.bound_shape * (1.0 + 1e-12));
    let decreasing = rows.windows(2).all(|w| w[1].area < w[0].area);
    check(
        bounded && decreasing,
        format!(
            "areas {:.3e}, {:.3e}, {:.3e} for M = 10, 30, 100; C_fit = {c_fit:.4} (from M = 10); ratios {:.4}, {:.4}, {:.4}",
            rows[0].area,
            rows[1].area,
            rows[2].area,
            rows[0].area / rows[0].bound_shape,
            rows[1].area / rows[1].bound_shape,
            rows[2].area / rows[2].bound_shape
        ),
    )
}

fn rotation() -> Outcome {
    let g = Grid2D::centered(1.0 / 512.0, 640).unwrap();
    let mut syn_max = 0.0f64;
    for theta in [0.0, 0.3] {
        let u = SyntheticSingularField::new(30.0, theta, Point::ORIGIN).unwrap().sample(g).map_err(fmt_err)?;
        let t = rotation_track(&u, Point::ORIGIN, 1.0, 4, 0.25).map_err(fmt_err)?;
        syn_max = t.increments.iter().fold(syn_max, |a, &b| a.max(b));
    }
    let mut tracks = Vec::new();
    for m in [10.0, 30.0] {
        let u = solve_cross(m, 2.0, vec![Symmetry::NegateBoth], 512)?;
        let t = rotation_track(&u, Point::ORIGIN, 0.5, 3, 0.25).map_err(fmt_err)?;
        tracks.push((t.cumulative, t.t[0]));
    }
    let c_fit = tracks[0].0 * tracks[0].1.powf(0.25);
    let bound30 = c_fit * tracks[1].1.powf(-0.25);
    check(
        syn_max <= 1e-3 && tracks[1].0 <= bound30,
        format!(
            "u_syn max dphi {syn_max:.1e} (<= 1e-3); solved cross cumulative {:.3e} (M=10, T0 {:.2}), {:.3e} (M=30, T0 {:.2}); C_fit = {c_fit:.3e} from M=10, bound at M=30 {bound30:.3e}",
            tracks[0].0, tracks[0].1, tracks[1].0, tracks[1].1
        ),
    )
}

fn right_angles(cross: &ScalarField) -> Outcome {
    let h = 1.0 / 512.0;
    let u = SyntheticSingularField::axis_aligned(30.0)
        .unwrap()
        .sample(Grid2D::centered(h, 640).unwrap())
        .map_err(fmt_err)?;
    let angle = |f: &ScalarField| -> Result<f64, String> {
        let curves = branches_near(f, Point::ORIGIN, 1.0 / 16.0, 0.5).map_err(fmt_err)?;
        Ok(crossing_angle(&curves, Point::ORIGIN, f.grid().h(), 0.5).map_err(fmt_err)?.angle_deg)
    };
    let a_syn = angle(&u)?;
    let a_cross = angle(cross)?;
    check(
        (a_syn - 90.0).abs() <= 2.0 && (a_cross - 90.0).abs() <= 4.0,
        format!("u_syn(30) {a_syn:.3} deg (90 +- 2), solved cross {a_cross:.3} deg (90 +- 4)"),
    )
}

fn read_dir_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<(String, Vec<u8>)> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), fs::read(e.path()).unwrap())
        })
        .collect();
    v.sort();
    v
}

fn determinism(tmp: &Path) -> Outcome {
    let specs = [
        r#"{"version": 1, "name": "syn", "grid": {"half_width": 1.25, "nodes": 1025},
            "scenario": {"type": "synthetic", "m": 50, "theta": 0.2}, "output": "OUT"}"#,
        r#"{"version": 1, "name": "cross", "grid": {"half_width": 1, "nodes": 513},
            "scenario": {"type": "solved-cross", "m": 20}, "output": "OUT"}"#,
        r#"{"version": 1, "name": "radial", "grid": {"half_width": 1, "nodes": 257},
            "scenario": {"type": "radial-oracle"}, "analysis": {"r0": 0.8, "levels": 2, "singular": false},
            "output": "OUT"}"#,
    ];
    let mut compared = 0;
    for (k, text) in specs.iter().enumerate() {
        let mut snapshots = Vec::new();
        for (run_id, out) in ["a", "b", "a"].iter().enumerate() {
            let dir = tmp.join(format!("det{k}{out}"));
            let spec = ExperimentSpec::from_json(&text.replace("OUT", &dir.display().to_string()), "/").unwrap();
            run(&spec).map_err(|e| format!("spec {k} run {run_id}: {e}"))?;
            snapshots.push(read_dir_bytes(&dir));
        }
        if snapshots[0] != snapshots[1] || snapshots[0] != snapshots[2] {
            return Err(format!("spec {k} produced different bytes across runs"));
        }
        compared += snapshots[0].len();
    }
    Ok(format!("3 specs, each run 3 times (twice into the same directory): {compared} files byte-identical"))
}

fn main() {
    let tmp = tempfile::tempdir().unwrap();
    let start = Instant::now();
    let cross = solve_cross(20.0, 0.0, vec![Symmetry::Swap, Symmetry::NegateBoth], 512);
    let with_cross = |f: fn(&ScalarField) -> Outcome| -> Outcome {
        match &cross {
            Ok(u) => f(u),
            Err(e) => Err(format!("cross solve failed: {e}")),
        }
    };
    let criteria: Vec<(&str, Box<dyn Fn() -> Outcome>)> = vec![
        ("potential", Box::new(potential)),
        ("projection-constant", Box::new(projection_constant)),
        ("projection-algebra", Box::new(projection_algebra)),
        ("solver-oracle", Box::new(|| solver_oracle(tmp.path()))),
        ("monotonicity", Box::new(|| with_cross(monotonicity))),
        ("dyadic-growth", Box::new(|| with_cross(dyadic_growth))),
        ("discrepancy-decay", Box::new(discrepancy)),
        ("rotation-decay", Box::new(rotation)),
        ("right-angles", Box::new(|| with_cross(right_angles))),
        ("determinism", Box::new(|| determinism(tmp.path()))),
    ];
    let mut failed = 0;
    for (name, f) in &criteria {
        let t = Instant::now();
        let outcome = f();
        let secs = t.elapsed().as_secs_f64();
        match outcome {
            Ok(d) => println!("PASS {name}: {d} [{secs:.1}s]"),
            Err(d) => {
                failed += 1;
                println!("FAIL {name}: {d} [{secs:.1}s]");
            }
        }
    }
    println!(
        "acceptance: {} passed, {failed} failed in {:.1}s",
        criteria.len() - failed,
        start.elapsed().as_secs_f64()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
