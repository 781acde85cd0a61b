use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;

use obstacle_lab::analytic::{CrossPotential, SyntheticSingularField};
use obstacle_lab::contour::{extract_zero_set, write_curves_csv, ContourRegion};
use obstacle_lab::experiment::{
    self, convergence_study, projection_rows, write_projection_csv, ConvergenceQuantity, ExperimentSpec, GridSpec,
    SolveConfig,
};
use obstacle_lab::field::{self, io as field_io, Point};
use obstacle_lab::radial::dyadic_radii;
use obstacle_lab::singularity::{analyze, AnalysisOptions};

/// Numerical laboratory for Δu = -χ_{u>0} in two dimensions.
#[derive(Parser)]
#[command(name = "obstacle-lab", version)]
struct Cli {
    /// Worker threads for parallel radii, levels and refinements
    /// (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment spec and write its artifacts and manifest.
    Run {
        /// Experiment spec (JSON).
        spec: PathBuf,
    },
    /// Solve the unstable problem on the unit disk from a JSON config.
    Solve {
        #[arg(long)]
        config: PathBuf,
        /// Directory for field.olf and diagnostics.json.
        #[arg(long)]
        out: PathBuf,
    },
    /// Analyse a candidate singular point of a field file.
    Analyze {
        #[arg(long)]
        field: PathBuf,
        /// Center as `x,y`.
        #[arg(long, value_parser = parse_point, default_value = "0,0")]
        center: Point,
        #[arg(long, default_value_t = experiment::defaults::R0)]
        r0: f64,
        #[arg(long, default_value_t = experiment::defaults::LEVELS)]
        levels: usize,
        #[arg(long, default_value_t = experiment::defaults::DELTA)]
        delta: f64,
        #[arg(long, default_value_t = experiment::defaults::ALPHA)]
        alpha: f64,
        /// Inner radius of the branch annulus, as a fraction of r0.
        #[arg(long, default_value_t = experiment::defaults::CROSSING_INNER)]
        crossing_inner: f64,
        /// Outer radius of the branch annulus, as a fraction of r0.
        #[arg(long, default_value_t = experiment::defaults::CROSSING_OUTER)]
        crossing_outer: f64,
        /// Also solve the auxiliary g problem at r0.
        #[arg(long)]
        with_g: bool,
        /// Directory for report.json, levels.csv and projection.csv.
        #[arg(long)]
        out: PathBuf,
    },
    /// Extract zero-set polylines as CSV (branch_id, x, y).
    Extract {
        #[arg(long)]
        field: PathBuf,
        /// Restrict to an annulus about this center (`x,y`); needs
        /// --inner and --outer.
        #[arg(long, value_parser = parse_point, requires_all = ["inner", "outer"])]
        center: Option<Point>,
        #[arg(long, requires = "center")]
        inner: Option<f64>,
        #[arg(long, requires = "center")]
        outer: Option<f64>,
        /// Reference angle of branch 0, in radians.
        #[arg(long, default_value_t = 0.0)]
        frame: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Sample u_syn(M, θ) or the cross potential z onto a field file.
    Synthetic {
        #[arg(long, required_unless_present = "potential")]
        m: Option<f64>,
        #[arg(long, default_value_t = 0.0)]
        theta: f64,
        /// Sample z instead of u_syn.
        #[arg(long, conflicts_with_all = ["m", "theta"])]
        potential: bool,
        #[arg(long, default_value_t = 1.0)]
        half_width: f64,
        /// Nodes per side, a power of two plus one.
        #[arg(long)]
        nodes: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Refine a spec's grid repeatedly and fit the observed order.
    Convergence {
        spec: PathBuf,
        /// Number of grids, each with half the spacing of the previous.
        #[arg(long, default_value_t = 3)]
        refinements: usize,
        /// Quantity to track (default: by scenario).
        #[arg(long, value_enum)]
        quantity: Option<Quantity>,
        /// CSV file for the table; the JSON summary goes to stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Quantity {
    RadialError,
    ZResidual,
    TauHalf,
}

impl From<Quantity> for ConvergenceQuantity {
    fn from(q: Quantity) -> Self {
        match q {
            Quantity::RadialError => ConvergenceQuantity::RadialError,
            Quantity::ZResidual => ConvergenceQuantity::ZResidual,
            Quantity::TauHalf => ConvergenceQuantity::TauHalf,
        }
    }
}

fn parse_point(s: &str) -> std::result::Result<Point, String> {
    let (x, y) = s.split_once(',').ok_or_else(|| format!("expected `x,y`, got `{s}`"))?;
    let x: f64 = x.trim().parse().map_err(|e| format!("bad x in `{s}`: {e}"))?;
    let y: f64 = y.trim().parse().map_err(|e| format!("bad y in `{s}`: {e}"))?;
    Ok(Point::new(x, y))
}

fn create(path: &Path) -> Result<BufWriter<fs::File>> {
    Ok(BufWriter::new(
        fs::File::create(path).with_context(|| format!("cannot create {}", path.display()))?,
    ))
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

fn print_json(value: &impl Serialize) -> Result<()> {
    let mut out = std::io::stdout().lock();
    serde_json::to_writer_pretty(&mut out, value)?;
    out.write_all(b"\n")?;
    Ok(())
}

#[derive(Serialize)]
struct RunSummary<'a> {
    output_dir: String,
    verdict: &'a experiment::RunVerdict,
    files: &'a std::collections::BTreeMap<String, String>,
}

fn execute(cmd: Command) -> Result<()> {
    match cmd {
        Command::Run { spec } => {
            let spec = ExperimentSpec::load(&spec)?;
            let outcome = experiment::run(&spec)?;
            print_json(&RunSummary {
                output_dir: outcome.output_dir.display().to_string(),
                verdict: &outcome.report.verdict,
                files: &outcome.manifest.files,
            })
        }
        Command::Solve { config, out } => {
            let cfg = SolveConfig::load(&config)?;
            let (u, diagnostics) = cfg.solve()?;
            fs::create_dir_all(&out).with_context(|| format!("cannot create {}", out.display()))?;
            field_io::save(out.join("field.olf"), &u)?;
            write_json(&out.join("diagnostics.json"), &diagnostics)?;
            print_json(&diagnostics)
        }
        Command::Analyze {
            field,
            center,
            r0,
            levels,
            delta,
            alpha,
            crossing_inner,
            crossing_outer,
            with_g,
            out,
        } => {
            let u = field_io::load(&field)?;
            let opts = AnalysisOptions {
                center,
                r0,
                levels,
                delta,
                alpha,
                crossing_inner,
                crossing_outer,
                with_g,
            };
            let report = analyze(&u, &opts)?;
            let rows = projection_rows(&u, center, &dyadic_radii(r0, levels))?;
            fs::create_dir_all(&out).with_context(|| format!("cannot create {}", out.display()))?;
            write_json(&out.join("report.json"), &report)?;
            let mut w = create(&out.join("levels.csv"))?;
            report.write_levels_csv(&mut w)?;
            w.flush()?;
            let mut w = create(&out.join("projection.csv"))?;
            write_projection_csv(&rows, &mut w)?;
            w.flush()?;
            print_json(&report)
        }
        Command::Extract {
            field,
            center,
            inner,
            outer,
            frame,
            out,
        } => {
            let u = field_io::load(&field)?;
            let region = match (center, inner, outer) {
                (Some(center), Some(inner), Some(outer)) => ContourRegion::Annulus { center, inner, outer },
                _ => ContourRegion::Whole,
            };
            let curves = extract_zero_set(&u, &region, frame)?;
            let mut w = create(&out)?;
            write_curves_csv(&curves, &mut w)?;
            w.flush()?;
            eprintln!("{} curves written to {}", curves.len(), out.display());
            Ok(())
        }
        Command::Synthetic {
            m,
            theta,
            potential,
            half_width,
            nodes,
            out,
        } => {
            let grid = GridSpec { half_width, nodes };
            if nodes < 5 || !(nodes - 1).is_power_of_two() {
                bail!("--nodes must be a power of two plus one (at least 5), got {nodes}");
            }
            let g = field::Grid2D::square(grid.half_width, grid.nodes)?;
            let u = match m {
                Some(m) if !potential => SyntheticSingularField::new(m, theta, Point::ORIGIN)?.sample(g)?,
                _ => CrossPotential.sample(g)?,
            };
            field_io::save(&out, &u)?;
            Ok(())
        }
        Command::Convergence {
            spec,
            refinements,
            quantity,
            out,
        } => {
            let spec = ExperimentSpec::load(&spec)?;
            let q = quantity
                .map(ConvergenceQuantity::from)
                .unwrap_or_else(|| ConvergenceQuantity::default_for(&spec.scenario));
            let table = convergence_study(&spec, refinements, q)?;
            if let Some(out) = out {
                let mut w = create(&out)?;
                table.write_csv(&mut w)?;
                w.flush()?;
            }
            print_json(&table)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(jobs) = cli.jobs {
        if jobs == 0 {
            eprintln!("error: --jobs must be at least 1");
            return ExitCode::from(2);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global() {
            eprintln!("error: cannot start thread pool: {e}");
            return ExitCode::FAILURE;
        }
    }
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
