//! Experiment specifications and the scenario runner: build a field (sample
//! or solve), profile it, analyse the singular point and write the artifact
//! set together with a manifest.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::analytic::{CrossPotential, SyntheticSingularField};
use crate::contour::{extract_zero_set, write_curves_csv, ContourRegion};
use crate::error::{Error, Result};
use crate::field::{self, Grid2D, Point, ScalarField};
use crate::poisson::BoundaryData;
use crate::projection::{project_rescaled, CRITICAL_ZERO_C, EXCLUDED_WARN_FRACTION};
use crate::radial::{
    classify_blowup, phi_monotonicity_check, radial_profile, BlowupClass, Classification, ClassifyOptions,
    MonotonicityReport,
};
use crate::singularity::{
    self, analyze, branches_near, max_feasible_depth, AnalysisOptions, SingularityReport, GAMMA_HAT,
};
use crate::unstable::{solve_unstable, Init, SolveDiagnostics, SolverConfig, Symmetry};

pub const SPEC_VERSION: u32 = 1;

/// Every default an experiment can fall back on. [`defaults_table`] lists
/// them by name for the manifest.
pub mod defaults {
    pub const DAMPING: f64 = 1.0;
    pub const MAX_OUTER: usize = 200;
    pub const FP_TOL: f64 = 1e-9;
    pub const POISSON_TOL: f64 = 1e-9;
    pub const R0: f64 = 0.5;
    pub const LEVELS: usize = 3;
    pub const DELTA: f64 = 0.05;
    pub const ALPHA: f64 = 0.25;
    /// Annulus for branch extraction, as fractions of `r0`.
    pub const CROSSING_INNER: f64 = 0.125;
    pub const CROSSING_OUTER: f64 = 1.0;
    /// Radii per octave in the radial profile.
    pub const PROFILE_STEPS_PER_OCTAVE: usize = 2;
    pub const DEGENERATE_BELOW: f64 = 0.1;
    pub const TREND_STEPS: usize = 3;
    /// Solver error bound of the radial oracle, in units of `h²`.
    pub const RADIAL_ERROR_C: f64 = 4.0;
    /// Nodes closer than this to either axis are left out of the sampled-`z`
    /// residual.
    pub const Z_RESIDUAL_BAND: f64 = 0.125;
    /// Radius of the `τ(z_r)` convergence quantity.
    pub const TAU_RADIUS: f64 = 0.5;
}

/// Named defaults and fixed constants, as recorded in every manifest.
pub fn defaults_table() -> BTreeMap<&'static str, f64> {
    use defaults::*;
    BTreeMap::from([
        ("alpha", ALPHA),
        ("critical_zero_c", CRITICAL_ZERO_C),
        ("crossing_inner", CROSSING_INNER),
        ("crossing_outer", CROSSING_OUTER),
        ("damping", DAMPING),
        ("degenerate_below", DEGENERATE_BELOW),
        ("delta", DELTA),
        ("discrepancy_zero_rel", singularity::DISCREPANCY_ZERO_REL),
        ("excluded_warn_fraction", EXCLUDED_WARN_FRACTION),
        ("fp_tol", FP_TOL),
        ("gamma_hat", GAMMA_HAT),
        ("levels", LEVELS as f64),
        ("max_outer", MAX_OUTER as f64),
        ("min_cells_across", singularity::MIN_CELLS_ACROSS),
        ("phi_slack_c", crate::radial::PHI_SLACK_C),
        ("poisson_tol", POISSON_TOL),
        ("profile_steps_per_octave", PROFILE_STEPS_PER_OCTAVE as f64),
        ("r0", R0),
        ("radial_error_c", RADIAL_ERROR_C),
        ("tau_noise_c", singularity::TAU_NOISE_C),
        ("tau_radius", TAU_RADIUS),
        ("trend_steps", TREND_STEPS as f64),
        ("verdict_angle_tol_deg", singularity::VERDICT_ANGLE_TOL_DEG),
        ("verdict_tau_factor", singularity::VERDICT_TAU_FACTOR),
        ("xy_circle_norm", singularity::XY_CIRCLE_NORM),
        ("z_residual_band", Z_RESIDUAL_BAND),
    ])
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    /// The grid covers `[-half_width, half_width]²`.
    pub half_width: f64,
    /// Nodes per side, `2^k + 1`.
    pub nodes: usize,
}

impl GridSpec {
    pub fn h(&self) -> f64 {
        2.0 * self.half_width / (self.nodes - 1) as f64
    }

    /// The same square with `2^level` times as many cells per side.
    pub fn refined(&self, level: u32) -> GridSpec {
        GridSpec {
            half_width: self.half_width,
            nodes: ((self.nodes - 1) << level) + 1,
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.half_width.is_finite() && self.half_width > 0.0) {
            return Err(Error::Argument(format!("grid half_width must be positive, got {}", self.half_width)));
        }
        if self.nodes < 5 || !(self.nodes - 1).is_power_of_two() {
            return Err(Error::Argument(format!(
                "grid nodes must be a power of two plus one (at least 5), got {}",
                self.nodes
            )));
        }
        Ok(())
    }

    fn square(&self) -> Result<Grid2D> {
        Grid2D::square(self.half_width, self.nodes)
    }
}

/// Outer-iteration settings; unset fields take the named defaults.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub damping: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_outer: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fp_tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub poisson_tol: Option<f64>,
}

impl SolverSpec {
    fn config(&self, symmetry: Vec<Symmetry>, init: Init, pin_origin: bool) -> SolverConfig {
        SolverConfig {
            damping: self.damping.unwrap_or(defaults::DAMPING),
            max_outer: self.max_outer.unwrap_or(defaults::MAX_OUTER),
            fp_tol: self.fp_tol.unwrap_or(defaults::FP_TOL),
            symmetry,
            init,
            poisson_tol: self.poisson_tol.unwrap_or(defaults::POISSON_TOL),
            pin_origin,
        }
    }
}

fn cross_symmetry() -> Vec<Symmetry> {
    vec![Symmetry::Swap, Symmetry::NegateBoth]
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Scenario {
    /// Zero boundary data on the unit disk; the solution is `(1-|x|²)/4`.
    RadialOracle {
        #[serde(default)]
        solver: SolverSpec,
    },
    /// `u_syn(M, θ)` sampled on the grid.
    Synthetic {
        m: f64,
        #[serde(default)]
        theta: f64,
    },
    /// Solve on the unit disk with boundary data
    /// `u_syn(M) + quartic · Im((x1 + i x2)⁴)`, pinned at the origin.
    SolvedCross {
        m: f64,
        #[serde(default)]
        quartic: f64,
        #[serde(default = "cross_symmetry")]
        symmetry: Vec<Symmetry>,
        #[serde(default)]
        solver: SolverSpec,
    },
    /// Solve on the unit disk with boundary data read from a field file.
    CustomBoundary {
        file: PathBuf,
        #[serde(default)]
        symmetry: Vec<Symmetry>,
        #[serde(default)]
        pin_origin: bool,
        #[serde(default)]
        solver: SolverSpec,
    },
}

impl Scenario {
    fn solves(&self) -> bool {
        !matches!(self, Scenario::Synthetic { .. })
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Scenario::RadialOracle { .. } => "radial-oracle",
            Scenario::Synthetic { .. } => "synthetic",
            Scenario::SolvedCross { .. } => "solved-cross",
            Scenario::CustomBoundary { .. } => "custom-boundary",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisSpec {
    #[serde(default)]
    pub center: [f64; 2],
    #[serde(default = "d_r0")]
    pub r0: f64,
    #[serde(default = "d_levels")]
    pub levels: usize,
    #[serde(default = "d_delta")]
    pub delta: f64,
    #[serde(default = "d_alpha")]
    pub alpha: f64,
    #[serde(default = "d_inner")]
    pub crossing_inner: f64,
    #[serde(default = "d_outer")]
    pub crossing_outer: f64,
    #[serde(default)]
    pub with_g: bool,
    /// Run the singular-point analysis. Off for the radial oracle, whose
    /// center is not a zero.
    #[serde(default = "yes")]
    pub singular: bool,
}

fn d_r0() -> f64 {
    defaults::R0
}
fn d_levels() -> usize {
    defaults::LEVELS
}
fn d_delta() -> f64 {
    defaults::DELTA
}
fn d_alpha() -> f64 {
    defaults::ALPHA
}
fn d_inner() -> f64 {
    defaults::CROSSING_INNER
}
fn d_outer() -> f64 {
    defaults::CROSSING_OUTER
}

impl Default for AnalysisSpec {
    fn default() -> Self {
        AnalysisSpec {
            center: [0.0, 0.0],
            r0: defaults::R0,
            levels: defaults::LEVELS,
            delta: defaults::DELTA,
            alpha: defaults::ALPHA,
            crossing_inner: defaults::CROSSING_INNER,
            crossing_outer: defaults::CROSSING_OUTER,
            with_g: false,
            singular: true,
        }
    }
}

impl AnalysisSpec {
    pub fn options(&self) -> AnalysisOptions {
        AnalysisOptions {
            center: Point::new(self.center[0], self.center[1]),
            r0: self.r0,
            levels: self.levels,
            delta: self.delta,
            alpha: self.alpha,
            crossing_inner: self.crossing_inner,
            crossing_outer: self.crossing_outer,
            with_g: self.with_g,
        }
    }

    fn validate(&self, grid: &GridSpec, solves: bool) -> Result<()> {
        let c = Point::new(self.center[0], self.center[1]);
        if !(c.x.is_finite() && c.y.is_finite()) {
            return Err(Error::Argument("analysis center must be finite".into()));
        }
        if !(self.r0.is_finite() && self.r0 > 0.0) {
            return Err(Error::Argument(format!("r0 must be positive, got {}", self.r0)));
        }
        if self.levels == 0 {
            return Err(Error::Argument("levels must be at least 1".into()));
        }
        if !(self.delta > 0.0) {
            return Err(Error::Argument(format!("delta must be positive, got {}", self.delta)));
        }
        if !(self.alpha > 0.0 && self.alpha < 0.5) {
            return Err(Error::Argument(format!("alpha must lie in (0, 1/2), got {}", self.alpha)));
        }
        if !(self.crossing_inner > 0.0 && self.crossing_inner < self.crossing_outer && self.crossing_outer <= 1.0) {
            return Err(Error::Argument(format!(
                "crossing annulus must satisfy 0 < inner < outer <= 1, got [{}, {}]",
                self.crossing_inner, self.crossing_outer
            )));
        }
        let reach = if solves { 1.0 } else { grid.half_width };
        let extent = if solves { c.norm() + self.r0 } else { c.x.abs().max(c.y.abs()) + self.r0 };
        if extent > reach {
            return Err(Error::Geometry(format!(
                "analysis ball of radius {} about ({}, {}) leaves the domain",
                self.r0, c.x, c.y
            )));
        }
        let max_feasible = max_feasible_depth(grid.h(), self.r0);
        if self.levels > max_feasible {
            return Err(Error::Depth {
                requested: self.levels,
                max_feasible,
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub version: u32,
    pub name: String,
    pub grid: GridSpec,
    pub scenario: Scenario,
    #[serde(default)]
    pub analysis: AnalysisSpec,
    /// Output directory, relative to the spec file's directory.
    pub output: PathBuf,
    /// Directory that relative paths are resolved against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl ExperimentSpec {
    /// Parses a spec and checks its grid and scenario; relative paths
    /// resolve against `base_dir`. The analysis settings are checked by
    /// [`ExperimentSpec::validate`], which [`run`] calls.
    pub fn from_json(text: &str, base_dir: impl Into<PathBuf>) -> Result<Self> {
        let mut spec: ExperimentSpec =
            serde_json::from_str(text).map_err(|e| Error::Format(format!("experiment spec: {e}")))?;
        spec.base_dir = base_dir.into();
        spec.validate_setup()?;
        Ok(spec)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::from_json(&text, base)
    }

    pub fn validate(&self) -> Result<()> {
        self.validate_setup()?;
        self.analysis.validate(&self.grid, self.scenario.solves())
    }

    /// Everything but the analysis settings.
    pub fn validate_setup(&self) -> Result<()> {
        if self.version != SPEC_VERSION {
            return Err(Error::Format(format!(
                "unsupported spec version {} (expected {SPEC_VERSION})",
                self.version
            )));
        }
        if self.name.trim().is_empty() {
            return Err(Error::Argument("spec name is empty".into()));
        }
        self.grid.validate()?;
        let solves = self.scenario.solves();
        if solves && self.grid.half_width < 1.0 {
            return Err(Error::Geometry(format!(
                "solve scenarios need the unit disk inside the grid, half_width is {}",
                self.grid.half_width
            )));
        }
        match &self.scenario {
            Scenario::Synthetic { m, theta } | Scenario::SolvedCross { m, quartic: theta, .. } => {
                if !(m.is_finite() && theta.is_finite()) {
                    return Err(Error::Argument("scenario parameters must be finite".into()));
                }
            }
            Scenario::CustomBoundary { file, .. } => {
                let p = self.resolve(file);
                if !p.is_file() {
                    return Err(Error::Io(format!("boundary file {} does not exist", p.display())));
                }
            }
            Scenario::RadialOracle { .. } => {}
        }
        Ok(())
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn output_dir(&self) -> PathBuf {
        self.resolve(&self.output)
    }

    /// SHA-256 of the canonical JSON form. It identifies the experiment, so
    /// neither the spec file's location nor the output directory enters.
    pub fn sha256(&self) -> String {
        let mut canonical = serde_json::to_value(self).expect("specs always serialize");
        if let Some(obj) = canonical.as_object_mut() {
            obj.remove("output");
        }
        hex_digest(&serde_json::to_vec(&canonical).expect("values always serialize"))
    }

    /// The same experiment on a grid refined `level` times.
    pub fn refined(&self, level: u32) -> ExperimentSpec {
        ExperimentSpec {
            grid: self.grid.refined(level),
            ..self.clone()
        }
    }

    /// Solver configuration of a solve scenario, with defaults filled in.
    pub fn solver_config(&self) -> Option<SolverConfig> {
        match &self.scenario {
            Scenario::RadialOracle { solver } => Some(solver.config(Vec::new(), Init::Positive, false)),
            Scenario::Synthetic { .. } => None,
            Scenario::SolvedCross {
                m, symmetry, solver, ..
            } => Some(solver.config(symmetry.clone(), Init::Synthetic { m: *m, theta: 0.0 }, true)),
            Scenario::CustomBoundary {
                symmetry,
                pin_origin,
                solver,
                ..
            } => Some(solver.config(symmetry.clone(), Init::Positive, *pin_origin)),
        }
    }
}

fn hex_digest(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// `Im((x1 + i x2)⁴)`.
pub fn quartic_harmonic(p: Point) -> f64 {
    4.0 * (p.x.powi(3) * p.y - p.x * p.y.powi(3))
}

/// Boundary data of the solved-cross scenario.
pub fn solved_cross_boundary(m: f64, quartic: f64) -> Result<BoundaryData> {
    let syn = SyntheticSingularField::axis_aligned(m)?;
    Ok(BoundaryData::function(move |p| syn.value(p) + quartic * quartic_harmonic(p)))
}

/// `(1 - |x|²)/4`.
pub fn radial_exact(p: Point) -> f64 {
    (1.0 - p.x * p.x - p.y * p.y) / 4.0
}

/// The field a spec describes, plus the solver diagnostics when it was
/// solved for.
#[derive(Debug, Clone)]
pub struct BuiltField {
    pub u: ScalarField,
    pub solve: Option<SolveDiagnostics>,
}

pub fn build_field(spec: &ExperimentSpec) -> Result<BuiltField> {
    let grid = spec.grid.square()?;
    if let Scenario::Synthetic { m, theta } = spec.scenario {
        let u = SyntheticSingularField::new(m, theta, Point::ORIGIN)?.sample(grid)?;
        return Ok(BuiltField { u, solve: None });
    }
    let boundary = match &spec.scenario {
        Scenario::RadialOracle { .. } => BoundaryData::Constant(0.0),
        Scenario::SolvedCross { m, quartic, .. } => solved_cross_boundary(*m, *quartic)?,
        Scenario::CustomBoundary { file, .. } => BoundaryData::Field(field::io::load(spec.resolve(file))?),
        Scenario::Synthetic { .. } => unreachable!(),
    };
    let cfg = spec.solver_config().expect("solve scenarios have a solver config");
    let outcome = solve_unstable(grid.with_disk(Point::ORIGIN, 1.0)?, &boundary, &cfg)?;
    let solve = Some(outcome.diagnostics());
    Ok(BuiltField { u: outcome.u, solve })
}

/// Max-norm distance of a radial-oracle solve to `(1 - |x|²)/4`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OracleError {
    pub max_error: f64,
    pub bound: f64,
    pub within_bound: bool,
}

pub fn radial_oracle_error(u: &ScalarField) -> OracleError {
    let g = u.grid();
    let mut max_error = 0.0f64;
    for j in 0..g.ny() {
        for i in 0..g.nx() {
            if u.is_valid(i, j) {
                max_error = max_error.max((u.get(i, j) - radial_exact(g.node(i, j))).abs());
            }
        }
    }
    let bound = defaults::RADIAL_ERROR_C * g.h() * g.h();
    OracleError {
        max_error,
        bound,
        within_bound: max_error <= bound,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridInfo {
    pub half_width: f64,
    pub nodes: usize,
    pub h: f64,
}

impl From<GridSpec> for GridInfo {
    fn from(g: GridSpec) -> Self {
        GridInfo {
            half_width: g.half_width,
            nodes: g.nodes,
            h: g.h(),
        }
    }
}

/// Headline outcome of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunVerdict {
    pub class: Option<BlowupClass>,
    /// Fitted per-halving growth of `τ`, to be compared with `gamma_hat`.
    pub tau_slope: Option<f64>,
    pub gamma_hat: f64,
    pub monotone_phi: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub name: String,
    pub scenario: Scenario,
    pub grid: GridInfo,
    pub solve: Option<SolveDiagnostics>,
    pub oracle: Option<OracleError>,
    pub profile_radii: Vec<f64>,
    pub monotonicity: MonotonicityReport,
    pub classification: Option<Classification>,
    pub singularity: Option<SingularityReport>,
    pub verdict: RunVerdict,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub spec_version: u32,
    pub spec_sha256: String,
    pub name: String,
    pub grid: GridInfo,
    pub solver: Option<SolverConfig>,
    pub analysis: AnalysisSpec,
    pub defaults: BTreeMap<String, f64>,
    /// Constants fitted from this run's data.
    pub empirical: BTreeMap<String, f64>,
    /// SHA-256 of every other artifact, by file name.
    pub files: BTreeMap<String, String>,
}

pub const FIELD_FILE: &str = "field.olf";
pub const PROFILE_FILE: &str = "profile.csv";
pub const LEVELS_FILE: &str = "levels.csv";
pub const BOUNDARY_FILE: &str = "boundary.csv";
pub const REPORT_FILE: &str = "report.json";
pub const MANIFEST_FILE: &str = "manifest.json";

/// Profile radii `r0 2^{-j/k}` for `j = 0..=k·levels`, `k` steps per octave.
pub fn profile_radii(r0: f64, levels: usize) -> Vec<f64> {
    let k = defaults::PROFILE_STEPS_PER_OCTAVE;
    (0..=k * levels).map(|j| r0 * 0.5f64.powf(j as f64 / k as f64)).collect()
}

/// Result of a successful run.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub output_dir: PathBuf,
    pub report: RunReport,
    pub manifest: Manifest,
}

/// Runs a spec and writes its artifacts into the output directory. Files are
/// staged next to it and moved in only once every stage has succeeded, so a
/// failed run leaves no partial outputs behind.
pub fn run(spec: &ExperimentSpec) -> Result<RunOutcome> {
    spec.validate().map_err(|e| e.in_stage("validate"))?;
    let out = spec.output_dir();
    let leaf = out
        .file_name()
        .ok_or_else(|| Error::Argument(format!("output {} has no directory name", out.display())))?
        .to_string_lossy()
        .into_owned();
    let staging = out.with_file_name(format!(".{leaf}.partial"));
    let io = |e: std::io::Error, p: &Path| Error::Io(format!("{}: {e}", p.display()));
    if staging.exists() {
        fs::remove_dir_all(&staging).map_err(|e| io(e, &staging))?;
    }
    fs::create_dir_all(&staging).map_err(|e| io(e, &staging).in_stage("write"))?;

    let produced = produce(spec, &staging);
    let (report, manifest) = match produced {
        Ok(v) => v,
        Err(e) => {
            let _ = fs::remove_dir_all(&staging);
            return Err(e);
        }
    };
    let commit = || -> Result<()> {
        fs::create_dir_all(&out).map_err(|e| io(e, &out))?;
        let mut names: Vec<&str> = manifest.files.keys().map(String::as_str).collect();
        names.push(MANIFEST_FILE);
        for name in names {
            fs::rename(staging.join(name), out.join(name)).map_err(|e| io(e, &out.join(name)))?;
        }
        fs::remove_dir_all(&staging).map_err(|e| io(e, &staging))
    };
    if let Err(e) = commit() {
        let _ = fs::remove_dir_all(&staging);
        return Err(e.in_stage("write"));
    }
    Ok(RunOutcome {
        output_dir: out,
        report,
        manifest,
    })
}

fn create(path: &Path) -> Result<BufWriter<fs::File>> {
    fs::File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

fn finish(w: BufWriter<fs::File>, path: &Path) -> Result<()> {
    w.into_inner()
        .map_err(|e| Error::Io(format!("{}: {e}", path.display())))?
        .sync_all()
        .map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| Error::Format(e.to_string()))?;
    w.write_all(b"\n").map_err(|e| Error::Io(e.to_string()))?;
    finish(w, path)
}

fn produce(spec: &ExperimentSpec, dir: &Path) -> Result<(RunReport, Manifest)> {
    let built = build_field(spec).map_err(|e| e.in_stage("field"))?;
    let u = &built.u;
    let h = u.grid().h();
    let a = &spec.analysis;
    let opts = a.options();

    let oracle = matches!(spec.scenario, Scenario::RadialOracle { .. }).then(|| radial_oracle_error(u));

    let radii = profile_radii(a.r0, a.levels);
    let profile = radial_profile(u, opts.center, &radii).map_err(|e| e.in_stage("profile"))?;
    let monotonicity = phi_monotonicity_check(&profile, h, crate::radial::PHI_SLACK_C);

    let (classification, singular) = if a.singular {
        let copts = ClassifyOptions {
            delta: a.delta,
            degenerate_below: defaults::DEGENERATE_BELOW,
            trend_steps: defaults::TREND_STEPS,
        };
        let c = classify_blowup(u, opts.center, &radii, &copts).map_err(|e| e.in_stage("classify"))?;
        let s = analyze(u, &opts).map_err(|e| e.in_stage("analyze"))?;
        (Some(c), Some(s))
    } else {
        (None, None)
    };

    let curves = if a.singular {
        branches_near(u, opts.center, a.crossing_inner * a.r0, a.crossing_outer * a.r0)
    } else {
        extract_zero_set(u, &ContourRegion::Whole, 0.0)
    }
    .map_err(|e| e.in_stage("zero set"))?;

    let verdict = RunVerdict {
        class: classification.as_ref().map(|c| c.class),
        tau_slope: singular.as_ref().map(|s| s.tau.fitted_increment),
        gamma_hat: GAMMA_HAT,
        monotone_phi: monotonicity.monotone,
    };
    let report = RunReport {
        name: spec.name.clone(),
        scenario: spec.scenario.clone(),
        grid: spec.grid.into(),
        solve: built.solve.clone(),
        oracle,
        profile_radii: radii,
        monotonicity,
        classification,
        singularity: singular,
        verdict,
    };

    let write = |name: &str, f: &dyn Fn(&Path) -> Result<()>| f(&dir.join(name)).map_err(|e| e.in_stage("write"));
    let mut names = vec![FIELD_FILE, PROFILE_FILE, BOUNDARY_FILE, REPORT_FILE];
    write(FIELD_FILE, &|p| field::io::save(p, u))?;
    write(PROFILE_FILE, &|p| {
        let mut w = create(p)?;
        profile.write_csv(&mut w)?;
        finish(w, p)
    })?;
    write(BOUNDARY_FILE, &|p| {
        let mut w = create(p)?;
        write_curves_csv(&curves, &mut w)?;
        finish(w, p)
    })?;
    if let Some(s) = &report.singularity {
        names.push(LEVELS_FILE);
        write(LEVELS_FILE, &|p| {
            let mut w = create(p)?;
            s.write_levels_csv(&mut w)?;
            finish(w, p)
        })?;
    }
    write(REPORT_FILE, &|p| write_json(p, &report))?;

    let mut files = BTreeMap::new();
    for name in names {
        let path = dir.join(name);
        let bytes = fs::read(&path).map_err(|e| Error::Io(format!("{}: {e}", path.display())).in_stage("write"))?;
        files.insert(name.to_string(), hex_digest(&bytes));
    }
    let manifest = Manifest {
        tool: "obstacle-lab".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        spec_version: SPEC_VERSION,
        spec_sha256: spec.sha256(),
        name: spec.name.clone(),
        grid: spec.grid.into(),
        solver: spec.solver_config(),
        analysis: *a,
        defaults: defaults_table().into_iter().map(|(k, v)| (k.to_string(), v)).collect(),
        empirical: empirical_constants(&report),
        files,
    };
    write(MANIFEST_FILE, &|p| write_json(p, &manifest))?;
    Ok((report, manifest))
}

/// Constants a run fits from its own data: growth slope, the discrepancy
/// ratio against `log T / T`, the rotation constant against `T0^{-α}` and
/// the `g` ratio.
pub fn empirical_constants(report: &RunReport) -> BTreeMap<String, f64> {
    let mut m = BTreeMap::new();
    if let Some(o) = &report.oracle {
        m.insert("radial_max_error".into(), o.max_error);
    }
    if let Some(s) = &report.singularity {
        m.insert("growth_slope_per_halving".into(), s.growth.slope_per_halving);
        m.insert("tau_fitted_increment".into(), s.tau.fitted_increment);
        let disc = s
            .levels
            .iter()
            .filter(|l| l.discrepancy_shape > 0.0)
            .map(|l| l.discrepancy / l.discrepancy_shape)
            .fold(0.0f64, f64::max);
        m.insert("discrepancy_c".into(), disc);
        let t0 = s.rotation.t[0];
        if t0 > 0.0 {
            m.insert("rotation_c".into(), s.rotation.cumulative * t0.powf(s.rotation.alpha));
        }
        m.insert("delta_eff".into(), s.rotation.delta_eff);
        if let Some(g) = &s.g {
            if g.bound_shape > 0.0 {
                m.insert("g_c".into(), g.hess_l2 / g.bound_shape);
            }
        }
        if let Some(a) = &s.crossing.angle {
            m.insert("crossing_angle_deg".into(), a.angle_deg);
        }
    }
    m
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ConvergenceQuantity {
    /// Radial-oracle solve error against `(1 - |x|²)/4`.
    RadialError,
    /// `max |Δ_h z + χ_{x1 x2 > 0}|` over nodes of the unit ball at
    /// distance at least `Z_RESIDUAL_BAND` from the axes.
    ZResidual,
    /// `|τ(z_{1/2}) - log 2/(2π)|`.
    TauHalf,
}

impl ConvergenceQuantity {
    pub fn default_for(scenario: &Scenario) -> Self {
        match scenario {
            Scenario::RadialOracle { .. } => ConvergenceQuantity::RadialError,
            _ => ConvergenceQuantity::TauHalf,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRow {
    pub h: f64,
    pub nodes: usize,
    pub error: f64,
    /// `log2(e_{i-1}/e_i)` against the previous, coarser row.
    pub order: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceTable {
    pub quantity: ConvergenceQuantity,
    pub rows: Vec<ConvergenceRow>,
    /// Least-squares slope of `log e` against `log h`.
    pub fitted_order: f64,
}

impl ConvergenceTable {
    pub fn write_csv(&self, w: impl Write) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let csv_err = |e: csv::Error| Error::Io(e.to_string());
        out.write_record(["h", "nodes", "error", "order"]).map_err(csv_err)?;
        for r in &self.rows {
            let order = r.order.map(|o| o.to_string()).unwrap_or_default();
            out.write_record([r.h.to_string(), r.nodes.to_string(), r.error.to_string(), order])
                .map_err(csv_err)?;
        }
        out.flush().map_err(|e| Error::Io(e.to_string()))
    }
}

fn convergence_error(spec: &ExperimentSpec, q: ConvergenceQuantity) -> Result<f64> {
    match q {
        ConvergenceQuantity::RadialError => {
            if !matches!(spec.scenario, Scenario::RadialOracle { .. }) {
                return Err(Error::Argument("radial-error needs the radial-oracle scenario".into()));
            }
            Ok(radial_oracle_error(&build_field(spec)?.u).max_error)
        }
        ConvergenceQuantity::ZResidual => {
            let z = CrossPotential.sample(spec.grid.square()?)?;
            Ok(z_residual(&z, defaults::Z_RESIDUAL_BAND))
        }
        ConvergenceQuantity::TauHalf => {
            let z = CrossPotential.sample(spec.grid.square()?)?;
            Ok((project_rescaled(&z, Point::ORIGIN, defaults::TAU_RADIUS)?.tau - GAMMA_HAT).abs())
        }
    }
}

/// `max |Δ_h z + χ_{x1 x2 > 0}|` over interior nodes of the closed unit
/// ball whose distance to both axes is at least `band`.
pub fn z_residual(z: &ScalarField, band: f64) -> f64 {
    let g = z.grid();
    let h2 = g.h() * g.h();
    let mut worst = 0.0f64;
    for j in 1..g.ny() - 1 {
        for i in 1..g.nx() - 1 {
            let p = g.node(i, j);
            if p.norm() > 1.0 || p.x.abs() < band || p.y.abs() < band {
                continue;
            }
            let lap = (z.get(i + 1, j) + z.get(i - 1, j) + z.get(i, j + 1) + z.get(i, j - 1) - 4.0 * z.get(i, j)) / h2;
            let chi = if p.x * p.y > 0.0 { 1.0 } else { 0.0 };
            worst = worst.max((lap + chi).abs());
        }
    }
    worst
}

/// Runs the spec on `refinements` successively halved grids and fits the
/// observed order of `quantity`. Refinements run in parallel.
pub fn convergence_study(
    spec: &ExperimentSpec,
    refinements: usize,
    quantity: ConvergenceQuantity,
) -> Result<ConvergenceTable> {
    if refinements < 3 {
        return Err(Error::Argument(format!("a convergence study needs at least 3 refinements, got {refinements}")));
    }
    spec.validate_setup().map_err(|e| e.in_stage("validate"))?;
    let errors = (0..refinements as u32)
        .into_par_iter()
        .map(|k| {
            let s = spec.refined(k);
            convergence_error(&s, quantity)
                .map(|e| (s.grid, e))
                .map_err(|e| e.in_stage(&format!("refinement {k}")))
        })
        .collect::<Result<Vec<_>>>()?;
    let rows: Vec<ConvergenceRow> = errors
        .iter()
        .enumerate()
        .map(|(k, (g, e))| ConvergenceRow {
            h: g.h(),
            nodes: g.nodes,
            error: *e,
            order: (k > 0).then(|| (errors[k - 1].1 / e).log2()),
        })
        .collect();
    let xs: Vec<f64> = rows.iter().map(|r| r.h.ln()).collect();
    let ys: Vec<f64> = rows.iter().map(|r| r.error.ln()).collect();
    Ok(ConvergenceTable {
        quantity,
        fitted_order: ls_slope(&xs, &ys),
        rows,
    })
}

fn ls_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    sxy / sxx
}

/// One row of the per-radius projection table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProjectionRow {
    pub r: f64,
    pub a: f64,
    pub b: f64,
    pub tau: f64,
    pub phi: f64,
    pub remainder_sup: f64,
    pub remainder_grad: f64,
}

/// `Π(u_r)` and its remainders at each radius.
pub fn projection_rows(u: &ScalarField, x0: Point, radii: &[f64]) -> Result<Vec<ProjectionRow>> {
    radii
        .par_iter()
        .map(|&r| {
            let p = project_rescaled(u, x0, r)?;
            Ok(ProjectionRow {
                r,
                a: p.p.a,
                b: p.p.b,
                tau: p.tau,
                phi: p.phi,
                remainder_sup: p.remainder_sup,
                remainder_grad: p.remainder_grad,
            })
        })
        .collect()
}

pub fn write_projection_csv(rows: &[ProjectionRow], w: impl Write) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    let csv_err = |e: csv::Error| Error::Io(e.to_string());
    out.write_record(["r", "a", "b", "tau", "phi", "remainder_sup", "remainder_grad"])
        .map_err(csv_err)?;
    for r in rows {
        out.serialize((r.r, r.a, r.b, r.tau, r.phi, r.remainder_sup, r.remainder_grad))
            .map_err(csv_err)?;
    }
    out.flush().map_err(|e| Error::Io(e.to_string()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case", deny_unknown_fields)]
pub enum BoundarySpec {
    Constant {
        value: f64,
    },
    /// `u_syn(M, θ) + quartic · Im((x1 + i x2)⁴)`.
    Synthetic {
        m: f64,
        #[serde(default)]
        theta: f64,
        #[serde(default)]
        quartic: f64,
    },
    /// Bilinear interpolation of a field file.
    Field {
        file: PathBuf,
    },
}

/// Configuration of a standalone solve on the unit disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolveConfig {
    pub grid: GridSpec,
    pub boundary: BoundarySpec,
    #[serde(default)]
    pub symmetry: Vec<Symmetry>,
    /// Defaults to `positive`.
    #[serde(default)]
    pub init: Option<Init>,
    #[serde(default)]
    pub pin_origin: bool,
    #[serde(default)]
    pub solver: SolverSpec,
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl SolveConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        let mut c: SolveConfig =
            serde_json::from_str(&text).map_err(|e| Error::Format(format!("solve config: {e}")))?;
        c.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        c.grid.validate()?;
        if c.grid.half_width < 1.0 {
            return Err(Error::Geometry(format!(
                "the unit disk must fit inside the grid, half_width is {}",
                c.grid.half_width
            )));
        }
        Ok(c)
    }

    pub fn solver_config(&self) -> SolverConfig {
        let init = self.init.clone().unwrap_or(Init::Positive);
        self.solver.config(self.symmetry.clone(), init, self.pin_origin)
    }

    pub fn boundary(&self) -> Result<BoundaryData> {
        Ok(match &self.boundary {
            BoundarySpec::Constant { value } => BoundaryData::Constant(*value),
            BoundarySpec::Synthetic { m, theta, quartic } => {
                let syn = SyntheticSingularField::new(*m, *theta, Point::ORIGIN)?;
                let q = *quartic;
                BoundaryData::function(move |p| syn.value(p) + q * quartic_harmonic(p))
            }
            BoundarySpec::Field { file } => {
                let p = if file.is_absolute() { file.clone() } else { self.base_dir.join(file) };
                BoundaryData::Field(field::io::load(p)?)
            }
        })
    }

    pub fn solve(&self) -> Result<(ScalarField, SolveDiagnostics)> {
        let grid = self.grid.square()?.with_disk(Point::ORIGIN, 1.0)?;
        let outcome = solve_unstable(grid, &self.boundary()?, &self.solver_config())?;
        let d = outcome.diagnostics();
        Ok((outcome.u, d))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(json: &str) -> Result<ExperimentSpec> {
        ExperimentSpec::from_json(json, "/nonexistent")
    }

    #[test]
    fn parses_with_defaults() {
        let s = spec(
            r#"{"version": 1, "name": "s", "grid": {"half_width": 1.25, "nodes": 1025},
                "scenario": {"type": "synthetic", "m": 30}, "output": "out"}"#,
        )
        .unwrap();
        assert_eq!(s.analysis, AnalysisSpec::default());
        assert_eq!(s.scenario, Scenario::Synthetic { m: 30.0, theta: 0.0 });
        assert_eq!(s.output_dir(), PathBuf::from("/nonexistent/out"));
        assert!(s.solver_config().is_none());
        let c = spec(
            r#"{"version": 1, "name": "c", "grid": {"half_width": 1, "nodes": 513},
                "scenario": {"type": "solved-cross", "m": 20}, "output": "/tmp/x"}"#,
        )
        .unwrap();
        let cfg = c.solver_config().unwrap();
        assert!(cfg.pin_origin);
        assert_eq!(cfg.symmetry, vec![Symmetry::Swap, Symmetry::NegateBoth]);
        assert_eq!(cfg.fp_tol, defaults::FP_TOL);
    }

    #[test]
    fn rejects_malformed_specs() {
        let base = r#"{"version": 1, "name": "s", "grid": {"half_width": 1.25, "nodes": NODES},
            "scenario": {"type": "synthetic", "m": 30}, "analysis": {"levels": LEVELS}, "output": "o"}"#;
        let mk = |n: &str, l: &str| spec(&base.replace("NODES", n).replace("LEVELS", l)).and_then(|s| s.validate());
        assert!(matches!(mk("200", "2"), Err(Error::Argument(_))));
        assert!(matches!(mk("1025", "9"), Err(Error::Depth { requested: 9, .. })));
        assert!(mk("1025", "2").is_ok());
        assert!(matches!(
            spec(&base.replace("NODES", "1025").replace("LEVELS", "2").replace("\"version\": 1", "\"version\": 7")),
            Err(Error::Format(_))
        ));
        assert!(matches!(
            spec(&base.replace("NODES", "1025").replace("LEVELS", "2").replace("\"m\": 30", "\"m\": 30, \"q\": 1")),
            Err(Error::Format(_))
        ));
        let missing = r#"{"version": 1, "name": "s", "grid": {"half_width": 1, "nodes": 513},
            "scenario": {"type": "custom-boundary", "file": "nope.olf"}, "output": "o"}"#;
        assert!(matches!(spec(missing), Err(Error::Io(_))));
        let small = r#"{"version": 1, "name": "s", "grid": {"half_width": 0.75, "nodes": 513},
            "scenario": {"type": "radial-oracle"}, "output": "o"}"#;
        assert!(matches!(spec(small), Err(Error::Geometry(_))));
    }

    #[test]
    fn hash_ignores_location() {
        let text = r#"{"version": 1, "name": "s", "grid": {"half_width": 1.25, "nodes": 1025},
            "scenario": {"type": "synthetic", "m": 30}, "output": "out"}"#;
        let a = ExperimentSpec::from_json(text, "/a").unwrap();
        let b = ExperimentSpec::from_json(text, "/b").unwrap();
        assert_eq!(a.sha256(), b.sha256());
        assert_eq!(a.sha256().len(), 64);
        assert_ne!(a.sha256(), a.refined(1).sha256());
        let elsewhere = ExperimentSpec::from_json(&text.replace("\"out\"", "\"other\""), "/a").unwrap();
        assert_eq!(a.sha256(), elsewhere.sha256());
    }

    #[test]
    fn refinement_keeps_nodes_dyadic() {
        let g = GridSpec {
            half_width: 1.0,
            nodes: 65,
        };
        assert_eq!(g.refined(2).nodes, 257);
        assert_eq!(g.refined(2).h(), g.h() / 4.0);
    }

    #[test]
    fn profile_radii_halve_every_octave() {
        let r = profile_radii(0.8, 3);
        assert_eq!(r.len(), 7);
        assert!((r[2] - 0.4).abs() < 1e-15 && (r[6] - 0.1).abs() < 1e-15);
    }

    #[test]
    fn quartic_is_harmonic() {
        let h = 1e-3;
        let p = Point::new(0.3, -0.7);
        let f = quartic_harmonic;
        let lap = (f(Point::new(p.x + h, p.y)) + f(Point::new(p.x - h, p.y)) + f(Point::new(p.x, p.y + h))
            + f(Point::new(p.x, p.y - h))
            - 4.0 * f(p))
            / (h * h);
        assert!(lap.abs() < 1e-9, "{lap}");
    }
}
