//! Command-line front end: `solve`, `analyze`, `verify` and `report`.
//!
//! Every run writes its outputs plus a `manifest.json` into `--out`. Failures
//! print a JSON error object on stderr (and into `error.json` when the output
//! directory exists) and exit with 1 (invalid input), 2 (solver failure) or
//! 3 (a verification check failed).

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::bodies::{make_body, BodySpec, ConvexBody};
use crate::error::{Error, Result};
use crate::geometry::{point_geometry, PointGeometry};
use crate::identities::{
    check_algebraic, check_bounds, check_laplacian, check_q_and_frame, check_theorem,
    check_third_max, grid_lambda_error, BoundsContext, CheckValue, Checks, Entry, PointData,
    ResidualReport,
};
use crate::io::fmt17;
use crate::potentials::{
    ball_profile, BallProfileConfig, CubePotential, GridPotential, Potential, RadialProfile,
    SimplexPotential, Source,
};
use crate::riemannian::{
    ball_diagnostics, cap_comparison, curvature_from_areas, BallDiagnostics, GridMetric, JetMetric,
    MetricField, RadialMetric,
};
use crate::sampling::{annulus_points, disk_points, halton2};
use crate::solver::{gradient_dilation, ke_residual, mass, solve, InitialGuess, SolverConfig};

pub const EXIT_VALIDATION: i32 = 1;
pub const EXIT_SOLVER: i32 = 2;
pub const EXIT_VERIFY: i32 = 3;

/// Radii of the area-defect extrapolation.
pub const AREA_RADII: [f64; 4] = [0.25, 0.5, 0.75, 1.0];
/// Radii of the cap comparison.
pub const CAP_RADII: [f64; 2] = [0.5, 1.0];
/// Tolerance of the area-defect curvature against `λ/4`.
pub const AREA_CURVATURE_TOL: f64 = 5e-3;
/// Points per case that get the (expensive) geodesic-ball checks.
pub const AREA_POINTS: usize = 4;

#[derive(Debug, Parser)]
#[command(
    name = "kelab",
    version,
    about = "Toric Kähler-Einstein potentials: solve, analyze, verify, report"
)]
pub struct Cli {
    /// Seed of the Cranley-Patterson rotation of the sample points; 0 keeps
    /// the plain Halton sequence.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve the Monge-Ampère problem for a planar body.
    Solve(SolveArgs),
    /// Curvature and frames of a potential at sample points.
    Analyze(AnalyzeArgs),
    /// Run identity and bound suites on a potential.
    Verify(VerifyArgs),
    /// Summarize the outputs of a previous run.
    Report(ReportArgs),
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SolveArgs {
    /// JSON body description, e.g. {"kind": "box", "halfwidths": [1, 1]}.
    #[arg(long)]
    pub body: PathBuf,
    /// Half-width of the computational box.
    #[arg(long = "L", default_value_t = 8.0)]
    pub half_width: f64,
    /// Nodes per side, odd.
    #[arg(long, default_value_t = 129)]
    pub n: usize,
    #[arg(long, default_value_t = 1e-8)]
    pub tol: f64,
    #[arg(long, default_value_t = 60)]
    pub max_iter: usize,
    #[arg(long, default_value_t = 1.0)]
    pub damping: f64,
    #[arg(long, value_enum, default_value_t = InitialArg::Softmax)]
    pub initial: InitialArg,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialArg {
    Softmax,
    Mollified,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct AnalyzeArgs {
    /// closed:simplex, closed:cube, radial:ball or grid:PATH.
    #[arg(long)]
    pub potential: Case,
    /// CSV file with x,y columns.
    #[arg(long, conflicts_with = "sample")]
    pub points: Option<PathBuf>,
    /// Number of quasi-random sample points.
    #[arg(long)]
    pub sample: Option<usize>,
    #[arg(long, default_value_t = 4)]
    pub order: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Suite {
    Algebraic,
    Laplacian,
    Qframe,
    Theorem,
    Bounds,
    Prop54,
    Riemannian,
    All,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct VerifyArgs {
    /// simplex, cube, ball or grid:PATH.
    #[arg(long)]
    pub case: Case,
    #[arg(long, value_enum, value_delimiter = ',', default_value = "all")]
    pub suite: Vec<Suite>,
    /// Exponent of the gradient and third-order growth bounds.
    #[arg(long, default_value_t = 2.0)]
    pub alpha: f64,
    /// CSV file with x,y columns.
    #[arg(long, conflicts_with = "sample")]
    pub points: Option<PathBuf>,
    #[arg(long)]
    pub sample: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ReportArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
}

/// A potential named on the command line.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(into = "String")]
pub enum Case {
    Simplex,
    Cube,
    Ball,
    /// A `solve` output directory or its `potential.csv`.
    Grid(PathBuf),
}

impl FromStr for Case {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Case, String> {
        match s {
            "simplex" | "closed:simplex" => Ok(Case::Simplex),
            "cube" | "closed:cube" => Ok(Case::Cube),
            "ball" | "radial:ball" => Ok(Case::Ball),
            _ => match s.strip_prefix("grid:") {
                Some(p) if !p.is_empty() => Ok(Case::Grid(PathBuf::from(p))),
                _ => Err(format!(
                    "unknown potential {s:?}; expected simplex, cube, ball or grid:PATH"
                )),
            },
        }
    }
}

impl From<Case> for String {
    fn from(c: Case) -> String {
        match c {
            Case::Simplex => "simplex".into(),
            Case::Cube => "cube".into(),
            Case::Ball => "ball".into(),
            Case::Grid(p) => format!("grid:{}", p.display()),
        }
    }
}

/// A loaded potential with the data the checks need.
pub enum Loaded {
    Closed {
        pot: Box<dyn Potential>,
        body: ConvexBody,
        min_phi: f64,
    },
    Radial {
        profile: RadialProfile,
    },
    Grid {
        grid: GridPotential,
        inputs: Vec<PathBuf>,
    },
}

impl Loaded {
    pub fn load(case: &Case) -> Result<Loaded> {
        Ok(match case {
            Case::Simplex => {
                let p = SimplexPotential::new(2);
                let min_phi = p.min_value();
                let body = make_body(&BodySpec::Simplex { n: 2 })?.recenter();
                Loaded::Closed {
                    pot: Box::new(p),
                    body,
                    min_phi,
                }
            }
            Case::Cube => {
                let p = CubePotential::new(2);
                let min_phi = p.min_value();
                let body = make_body(&BodySpec::Box {
                    halfwidths: vec![1.0, 1.0],
                    center: None,
                })?;
                Loaded::Closed {
                    pot: Box::new(p),
                    body,
                    min_phi,
                }
            }
            Case::Ball => Loaded::Radial {
                profile: ball_profile(BallProfileConfig::default())?,
            },
            Case::Grid(path) => {
                let (csv_path, body_path) = grid_paths(path);
                let body = match fs::read(&body_path) {
                    Ok(bytes) => Some(make_body(&serde_json::from_slice::<BodySpec>(&bytes)?)?),
                    Err(_) => None,
                };
                let file = fs::File::open(&csv_path).map_err(|e| {
                    Error::validation(format!("cannot read {}: {e}", csv_path.display()))
                })?;
                let grid = GridPotential::read_csv(std::io::BufReader::new(file), body.clone())?;
                let mut inputs = vec![csv_path];
                if body.is_some() {
                    inputs.push(body_path);
                }
                Loaded::Grid { grid, inputs }
            }
        })
    }

    pub fn potential(&self) -> &dyn Potential {
        match self {
            Loaded::Closed { pot, .. } => pot.as_ref(),
            Loaded::Radial { profile } => profile,
            Loaded::Grid { grid, .. } => grid,
        }
    }

    pub fn source(&self) -> Source {
        self.potential().source()
    }

    /// Highest jet order used by the suites.
    pub fn order(&self) -> usize {
        match self {
            Loaded::Grid { .. } => 4,
            _ => 5,
        }
    }

    fn input_files(&self) -> Vec<PathBuf> {
        match self {
            Loaded::Grid { inputs, .. } => inputs.clone(),
            _ => Vec::new(),
        }
    }

    /// Default sample points: a disk for closed forms, an annulus for the
    /// ball, and nodes of the inner half of the box for grids.
    pub fn sample(&self, count: usize, seed: u64) -> Vec<[f64; 2]> {
        match self {
            Loaded::Closed { .. } => disk_points(count, 4.0, seed),
            Loaded::Radial { .. } => annulus_points(count, 0.5, 5.0, seed),
            Loaded::Grid { grid, .. } => {
                let w = 0.5 * grid.half_width;
                let mut out: Vec<[f64; 2]> = Vec::new();
                for [s, t] in halton2(count, seed) {
                    let snap = |u: f64| {
                        let i = ((2.0 * u - 1.0) * w + grid.half_width) / grid.h();
                        grid.coord(i.round() as usize)
                    };
                    let p = [snap(s), snap(t)];
                    if !out.contains(&p) {
                        out.push(p);
                    }
                }
                out
            }
        }
    }

    fn bounds_context(&self, x: &[f64], alpha: f64) -> Result<BoundsContext> {
        Ok(match self {
            Loaded::Closed { body, min_phi, .. } => BoundsContext {
                outer_radius: body.outer_radius(),
                min_phi: *min_phi,
                alpha,
                lambda_slack: 0.0,
            },
            Loaded::Radial { profile } => BoundsContext {
                outer_radius: 1.0,
                min_phi: profile.phi0,
                alpha,
                lambda_slack: 0.0,
            },
            Loaded::Grid { grid, .. } => {
                let body = grid.body.as_ref().ok_or_else(|| {
                    Error::validation("bounds on a grid need the body.json written by solve next to the potential")
                })?;
                let (i, j) = grid
                    .node_of(x)
                    .ok_or(Error::validation("point outside the grid"))?;
                BoundsContext {
                    outer_radius: body.outer_radius(),
                    min_phi: grid.min_value(),
                    alpha,
                    lambda_slack: grid_lambda_error(grid, i, j)?,
                }
            }
        })
    }
}

fn grid_paths(path: &Path) -> (PathBuf, PathBuf) {
    if path.is_dir() {
        (path.join("potential.csv"), path.join("body.json"))
    } else {
        let dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        (path.to_path_buf(), dir.join("body.json"))
    }
}

pub fn expand_suites(suites: &[Suite]) -> Vec<Suite> {
    let mut out: Vec<Suite> = if suites.contains(&Suite::All) {
        vec![
            Suite::Algebraic,
            Suite::Laplacian,
            Suite::Qframe,
            Suite::Theorem,
            Suite::Bounds,
            Suite::Prop54,
            Suite::Riemannian,
        ]
    } else {
        suites.to_vec()
    };
    out.sort();
    out.dedup();
    out
}

/// One cap comparison or area-curvature row of the riemannian suite.
#[derive(Debug, Clone, Serialize)]
pub struct AreaRecord {
    pub x: f64,
    pub y: f64,
    pub radius: f64,
    pub area: f64,
    pub cap_area: f64,
    pub margin: f64,
    pub tolerance: f64,
    pub embedded: bool,
}

/// Everything `verify` computes.
pub struct Verification {
    pub report: ResidualReport,
    pub areas: Vec<AreaRecord>,
    pub ball: Option<BallDiagnostics>,
}

fn point_checks(loaded: &Loaded, x: [f64; 2], suites: &[Suite], alpha: f64) -> (f64, Checks) {
    let pot = loaded.potential();
    let pd = match PointData::at(pot, &x, loaded.order()) {
        Ok(pd) => pd,
        Err(e) => {
            let mut c = Checks::new();
            c.insert(
                "jet".into(),
                Entry::Skipped {
                    reason: e.to_string(),
                },
            );
            return (f64::NAN, c);
        }
    };
    let mut checks = Checks::new();
    for s in suites {
        match s {
            Suite::Algebraic => checks.extend(check_algebraic(&pd)),
            Suite::Laplacian => checks.extend(check_laplacian(&pd)),
            Suite::Qframe => checks.extend(check_q_and_frame(&pd)),
            Suite::Theorem => checks.extend(check_theorem(&pd)),
            Suite::Bounds => match loaded.bounds_context(&x, alpha) {
                Ok(ctx) => checks.extend(check_bounds(&pd, &ctx)),
                Err(e) => {
                    checks.insert(
                        "bounds".into(),
                        Entry::Skipped {
                            reason: e.to_string(),
                        },
                    );
                }
            },
            Suite::Prop54 => {
                let eta = match loaded {
                    Loaded::Grid { grid, .. } => grid.h(),
                    _ => 1e-3,
                };
                match check_third_max(pot, &x, eta) {
                    Ok(c) => checks.extend(c),
                    Err(e) => {
                        checks.insert(
                            "third_max_lap".into(),
                            Entry::Skipped {
                                reason: e.to_string(),
                            },
                        );
                    }
                }
            }
            Suite::Riemannian | Suite::All => {}
        }
    }
    (pd.geom.phi, checks)
}

fn area_checks(loaded: &Loaded, x: [f64; 2], areas: &mut Vec<AreaRecord>) -> Checks {
    let mut checks = Checks::new();
    let pot = loaded.potential();
    let lambda = match pot
        .jet(&x, 3)
        .map_err(Error::from)
        .and_then(|j| point_geometry(&j))
    {
        Ok(g) => g.lambda,
        Err(e) => {
            checks.insert(
                "area_curvature".into(),
                Entry::Skipped {
                    reason: e.to_string(),
                },
            );
            return checks;
        }
    };
    let (jet_metric, radial_metric);
    let (fine, coarse);
    let (field, reference): (&dyn MetricField, Option<&dyn MetricField>) = match loaded {
        Loaded::Grid { grid, .. } => {
            fine = GridMetric::new(grid, 1);
            coarse = GridMetric::new(grid, 2);
            (&fine, Some(&coarse))
        }
        Loaded::Radial { profile } => {
            radial_metric = RadialMetric(profile);
            (&radial_metric, None)
        }
        Loaded::Closed { .. } => {
            jet_metric = JetMetric(pot);
            (&jet_metric, None)
        }
    };
    match curvature_from_areas(field, x, &AREA_RADII) {
        Ok(est) => {
            let v = CheckValue::identity(est.estimate, lambda / 4.0, 0.0, AREA_CURVATURE_TOL);
            checks.insert("area_curvature".into(), Entry::Checked(v));
        }
        Err(e) => {
            checks.insert(
                "area_curvature".into(),
                Entry::Skipped {
                    reason: e.to_string(),
                },
            );
        }
    }
    for r in CAP_RADII {
        let name = format!("cap_margin_r{r}");
        match cap_comparison(field, reference, x, r) {
            Ok(c) => {
                areas.push(AreaRecord {
                    x: x[0],
                    y: x[1],
                    radius: r,
                    area: c.area,
                    cap_area: c.cap_area,
                    margin: c.margin,
                    tolerance: c.tolerance(),
                    embedded: c.embedded,
                });
                checks.insert(
                    name,
                    Entry::Checked(CheckValue::bound(c.area, c.cap_area, 0.0, c.tolerance())),
                );
            }
            Err(e) => {
                checks.insert(
                    name,
                    Entry::Skipped {
                        reason: e.to_string(),
                    },
                );
            }
        }
    }
    checks
}

/// Run `suites` at `points`.
pub fn verify(
    loaded: &Loaded,
    points: &[[f64; 2]],
    suites: &[Suite],
    alpha: f64,
) -> Result<Verification> {
    if !(alpha > 1.0) {
        return Err(Error::validation("alpha must exceed 1"));
    }
    let suites = expand_suites(suites);
    let source = loaded.source();
    let rows: Vec<(f64, Checks)> = points
        .par_iter()
        .map(|&x| point_checks(loaded, x, &suites, alpha))
        .collect();
    let mut report = ResidualReport::default();
    for (x, (phi, checks)) in points.iter().zip(rows) {
        report.push(x.to_vec(), source, phi, checks);
    }
    let mut areas = Vec::new();
    let mut ball = None;
    if suites.contains(&Suite::Riemannian) {
        for &x in points.iter().take(AREA_POINTS) {
            let phi = loaded
                .potential()
                .jet(&x, 0)
                .map(|j| j.value())
                .unwrap_or(f64::NAN);
            let c = area_checks(loaded, x, &mut areas);
            report.merge(&x, source, phi, c);
        }
        if let Loaded::Radial { profile } = loaded {
            let d = ball_diagnostics(profile)?;
            for row in d.curvature.iter().filter(|c| c.r <= 5.0 + 1e-12) {
                let mut c = Checks::new();
                let direct = CheckValue::identity(row.h_direct, row.lambda_quarter, 0.0, 1e-6);
                c.insert("ball_curvature_formula".into(), Entry::Checked(direct));
                let expanded = CheckValue::identity(row.h_expanded, row.h_direct, 0.0, 1e-8);
                c.insert("ball_curvature_expansion".into(), Entry::Checked(expanded));
                let phi = profile.eval(row.r)[0];
                report.merge(&[row.r, 0.0], source, phi, c);
            }
            ball = Some(d);
        }
    }
    Ok(Verification {
        report,
        areas,
        ball,
    })
}

/// Provenance of one run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub argv: Vec<String>,
    pub version: String,
    pub seed: u64,
    pub config: serde_json::Value,
    /// SHA-256 of each input file.
    pub inputs: BTreeMap<String, String>,
    pub outputs: Vec<OutputFile>,
    pub started_unix_ms: u128,
    pub finished_unix_ms: u128,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OutputFile {
    pub path: String,
    pub sha256: String,
    pub bytes: usize,
}

fn now_ms() -> u128 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis())
        .unwrap_or(0)
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

/// Output directory that records what it writes.
struct OutDir {
    dir: PathBuf,
    files: Vec<OutputFile>,
}

impl OutDir {
    fn create(dir: &Path) -> Result<OutDir> {
        fs::create_dir_all(dir)?;
        Ok(OutDir {
            dir: dir.to_path_buf(),
            files: Vec::new(),
        })
    }

    fn write(&mut self, name: &str, fill: impl FnOnce(&mut Vec<u8>) -> Result<()>) -> Result<()> {
        let mut buf = Vec::new();
        fill(&mut buf)?;
        fs::write(self.dir.join(name), &buf)?;
        self.files.push(OutputFile {
            path: name.into(),
            sha256: sha256_hex(&buf),
            bytes: buf.len(),
        });
        Ok(())
    }

    fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        self.write(name, |b| {
            serde_json::to_writer_pretty(&mut *b, value)?;
            b.push(b'\n');
            Ok(())
        })
    }

    fn finish(self, ctx: &RunContext, config: serde_json::Value, inputs: &[PathBuf]) -> Result<()> {
        let mut hashes = BTreeMap::new();
        for p in inputs {
            hashes.insert(p.display().to_string(), sha256_hex(&fs::read(p)?));
        }
        let manifest = RunManifest {
            command: ctx.command.clone(),
            argv: ctx.argv.clone(),
            version: env!("CARGO_PKG_VERSION").into(),
            seed: ctx.seed,
            config,
            inputs: hashes,
            outputs: self.files,
            started_unix_ms: ctx.started,
            finished_unix_ms: now_ms(),
        };
        let mut bytes = serde_json::to_vec_pretty(&manifest)?;
        bytes.push(b'\n');
        fs::write(self.dir.join("manifest.json"), bytes)?;
        Ok(())
    }
}

struct RunContext {
    command: String,
    argv: Vec<String>,
    seed: u64,
    started: u128,
}

fn read_points(path: &Path) -> Result<Vec<[f64; 2]>> {
    let mut rd = csv::Reader::from_path(path)?;
    let headers = rd.headers()?.clone();
    let col = |name: &str| headers.iter().position(|h| h.trim() == name);
    let (ix, iy) = match (col("x"), col("y")) {
        (Some(a), Some(b)) => (a, b),
        _ => return Err(Error::validation("points CSV needs x and y columns")),
    };
    let mut out = Vec::new();
    for rec in rd.records() {
        let rec = rec?;
        let p = |k: usize| {
            rec.get(k)
                .and_then(|s| s.trim().parse::<f64>().ok())
                .ok_or_else(|| Error::validation(format!("bad point row {:?}", rec)))
        };
        out.push([p(ix)?, p(iy)?]);
    }
    Ok(out)
}

fn choose_points(
    loaded: &Loaded,
    points: &Option<PathBuf>,
    sample: Option<usize>,
    seed: u64,
) -> Result<Vec<[f64; 2]>> {
    match points {
        Some(p) => read_points(p),
        None => {
            let k = sample.unwrap_or(50);
            if k == 0 {
                return Err(Error::validation("--sample must be positive"));
            }
            Ok(loaded.sample(k, seed))
        }
    }
}

#[derive(Serialize)]
struct SolveSummary {
    body: BodySpec,
    config: SolverConfig,
    iterations: usize,
    history: Vec<f64>,
    steps: Vec<f64>,
    ke_max: f64,
    boundary_max: f64,
    rounding_limited: usize,
    minimizer: [f64; 2],
    mass: f64,
    body_area: f64,
    gradient_dilation: f64,
    indefinite_nodes: usize,
}

fn run_solve(a: &SolveArgs, ctx: &RunContext) -> Result<()> {
    let bytes = fs::read(&a.body)
        .map_err(|e| Error::validation(format!("cannot read {}: {e}", a.body.display())))?;
    let spec: BodySpec =
        serde_json::from_slice(&bytes).map_err(|e| Error::validation(format!("body JSON: {e}")))?;
    let body = make_body(&spec)?.recenter();
    let cfg = SolverConfig {
        half_width: a.half_width,
        n: a.n,
        damping: a.damping,
        tol: a.tol,
        max_iter: a.max_iter,
        initial: match a.initial {
            InitialArg::Softmax => InitialGuess::Softmax,
            InitialArg::Mollified => InitialGuess::Mollified,
        },
    };
    cfg.validate()?;
    let mut out = OutDir::create(&a.out)?;
    let sol = solve(&body, &cfg)?;
    let res = ke_residual(&sol.potential);
    out.json("body.json", &body.spec())?;
    out.write("potential.csv", |b| sol.potential.write_csv(b))?;
    out.write("residual.csv", |b| res.write_csv(&sol.potential, b))?;
    let summary = SolveSummary {
        body: body.spec(),
        config: cfg.clone(),
        iterations: sol.steps.len(),
        history: sol.history.clone(),
        steps: sol.steps.clone(),
        ke_max: sol.ke_max,
        boundary_max: sol.boundary_max,
        rounding_limited: sol.rounding_limited,
        minimizer: sol.minimizer,
        mass: mass(&sol.potential),
        body_area: body.area(),
        gradient_dilation: gradient_dilation(&sol.potential, &body),
        indefinite_nodes: res.indefinite.len(),
    };
    out.json("solve.json", &summary)?;
    out.finish(ctx, serde_json::to_value(a)?, std::slice::from_ref(&a.body))
}

#[derive(Serialize)]
struct Skipped {
    point: [f64; 2],
    reason: String,
}

#[derive(Serialize)]
struct AnalyzeOutput<'a> {
    potential: String,
    order: usize,
    points: &'a [PointGeometry],
    skipped: Vec<Skipped>,
}

fn run_analyze(a: &AnalyzeArgs, ctx: &RunContext) -> Result<()> {
    let loaded = Loaded::load(&a.potential)?;
    let pot = loaded.potential();
    if a.order < 2 || a.order > pot.max_order() {
        return Err(Error::validation(format!(
            "--order must lie in 2..={}",
            pot.max_order()
        )));
    }
    let points = choose_points(&loaded, &a.points, a.sample, ctx.seed)?;
    let results: Vec<std::result::Result<PointGeometry, String>> = points
        .par_iter()
        .map(|x| {
            pot.jet(x, a.order)
                .map_err(Error::from)
                .and_then(|j| point_geometry(&j))
                .map_err(|e| e.to_string())
        })
        .collect();
    let mut geoms = Vec::new();
    let mut skipped = Vec::new();
    for (x, r) in points.iter().zip(results) {
        match r {
            Ok(g) => geoms.push(g),
            Err(reason) => skipped.push(Skipped { point: *x, reason }),
        }
    }
    let mut out = OutDir::create(&a.out)?;
    out.write("geometry.csv", |b| write_geometry_csv(&geoms, b))?;
    let doc = AnalyzeOutput {
        potential: pot.name(),
        order: a.order,
        points: &geoms,
        skipped,
    };
    out.json("geometry.json", &doc)?;
    out.finish(ctx, serde_json::to_value(a)?, &loaded.input_files())
}

fn write_geometry_csv<W: Write>(geoms: &[PointGeometry], w: W) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record([
        "x",
        "y",
        "source",
        "phi",
        "grad_x",
        "grad_y",
        "h11",
        "h12",
        "h22",
        "lambda",
        "grad_sq",
        "anisotropy",
        "hess_eig_max",
        "hess_eig_min",
    ])?;
    for g in geoms {
        let (e0, e1) = g.eigenvalues.map_or((f64::NAN, f64::NAN), |e| (e[0], e[1]));
        let mut row = vec![
            fmt17(g.point[0]),
            fmt17(g.point[1]),
            g.source.as_str().to_string(),
        ];
        row.extend(
            [
                g.phi,
                g.grad[0],
                g.grad[1],
                g.metric.get(&[0, 0]),
                g.metric.get(&[0, 1]),
                g.metric.get(&[1, 1]),
                g.lambda,
                g.grad_sq,
                g.anisotropy,
                e0,
                e1,
            ]
            .map(fmt17),
        );
        wr.write_record(&row)?;
    }
    wr.flush()?;
    Ok(())
}

fn write_areas_csv<W: Write>(rows: &[AreaRecord], w: W) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record([
        "x",
        "y",
        "radius",
        "area",
        "cap_area",
        "margin",
        "tolerance",
        "embedded",
    ])?;
    for r in rows {
        let mut rec: Vec<String> = [
            r.x,
            r.y,
            r.radius,
            r.area,
            r.cap_area,
            r.margin,
            r.tolerance,
        ]
        .map(fmt17)
        .to_vec();
        rec.push(r.embedded.to_string());
        wr.write_record(rec)?;
    }
    wr.flush()?;
    Ok(())
}

/// Returns whether every check passed.
fn run_verify(a: &VerifyArgs, ctx: &RunContext) -> Result<bool> {
    let loaded = Loaded::load(&a.case)?;
    let points = choose_points(&loaded, &a.points, a.sample, ctx.seed)?;
    let v = verify(&loaded, &points, &a.suite, a.alpha)?;
    let mut out = OutDir::create(&a.out)?;
    out.write("report.json", |b| {
        v.report.write_json(&mut *b)?;
        b.push(b'\n');
        Ok(())
    })?;
    out.write("points.csv", |b| v.report.write_points_csv(b))?;
    if !v.areas.is_empty() {
        out.write("areas.csv", |b| write_areas_csv(&v.areas, b))?;
    }
    if let Some(d) = &v.ball {
        out.json("ball_diagnostics.json", d)?;
    }
    out.finish(ctx, serde_json::to_value(a)?, &loaded.input_files())?;
    Ok(v.report.all_pass())
}

fn fmt_num(v: Option<&serde_json::Value>) -> String {
    match v.and_then(|v| v.as_f64()) {
        Some(x) => format!("{x:.3e}"),
        None => "-".into(),
    }
}

/// Human-readable summary of a run directory.
pub fn report_text(dir: &Path) -> Result<String> {
    let mut s = String::new();
    let mut found = false;
    if let Ok(bytes) = fs::read(dir.join("manifest.json")) {
        let m: RunManifest = serde_json::from_slice(&bytes)?;
        s.push_str(&format!(
            "command: {} (kelab {}, seed {})\n",
            m.command, m.version, m.seed
        ));
        s.push_str(&format!(
            "outputs: {}\n",
            m.outputs
                .iter()
                .map(|o| o.path.as_str())
                .collect::<Vec<_>>()
                .join(", ")
        ));
    }
    if let Ok(bytes) = fs::read(dir.join("solve.json")) {
        found = true;
        let v: serde_json::Value = serde_json::from_slice(&bytes)?;
        s.push_str("\nsolve\n");
        for key in [
            "iterations",
            "ke_max",
            "boundary_max",
            "rounding_limited",
            "mass",
            "body_area",
            "gradient_dilation",
        ] {
            let val = &v[key];
            let text = if val.is_u64() {
                val.to_string()
            } else {
                fmt_num(Some(val))
            };
            s.push_str(&format!("  {key:<20} {text}\n"));
        }
        s.push_str(&format!("  {:<20} {}\n", "minimizer", v["minimizer"]));
    }
    if let Ok(bytes) = fs::read(dir.join("report.json")) {
        found = true;
        let v: BTreeMap<String, serde_json::Value> = serde_json::from_slice(&bytes)?;
        let (mut pass, mut fail) = (0, 0);
        s.push_str(&format!(
            "\n{:<28} {:<6} {:>7} {:>7} {:>11} {:>11}  worst point\n",
            "check", "status", "checked", "skipped", "max_abs", "min_margin"
        ));
        for (name, c) in &v {
            let checked = c["n_checked"].as_u64().unwrap_or(0);
            let status = if checked == 0 {
                "skip"
            } else if c["pass"].as_bool().unwrap_or(false) {
                pass += 1;
                "PASS"
            } else {
                fail += 1;
                "FAIL"
            };
            s.push_str(&format!(
                "{:<28} {:<6} {:>7} {:>7} {:>11} {:>11}  {}\n",
                name,
                status,
                checked,
                c["n_skipped"].as_u64().unwrap_or(0),
                fmt_num(c.get("max_abs")),
                fmt_num(c.get("min_margin")),
                c["worst_point"]
            ));
        }
        s.push_str(&format!("\n{pass} checks pass, {fail} fail\n"));
    }
    if !found {
        return Err(Error::validation(format!(
            "{} holds neither solve.json nor report.json",
            dir.display()
        )));
    }
    Ok(s)
}

fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Solver { .. }
        | Error::LinearSolve(_)
        | Error::Convexity(_)
        | Error::Shooting { .. } => EXIT_SOLVER,
        _ => EXIT_VALIDATION,
    }
}

fn error_json(kind: &str, message: &str, code: i32) -> String {
    serde_json::json!({ "error": { "kind": kind, "message": message, "exit_code": code } })
        .to_string()
}

fn report_error(kind: &str, message: &str, code: i32, out: Option<&Path>) {
    let text = error_json(kind, message, code);
    eprintln!("{text}");
    if let Some(dir) = out.filter(|d| d.is_dir()) {
        let _ = fs::write(dir.join("error.json"), format!("{text}\n"));
    }
}

/// Run the tool on `argv` (including the program name) and return the exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let argv: Vec<std::ffi::OsString> = argv.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&argv) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return 0;
            }
            report_error("validation", &e.to_string(), EXIT_VALIDATION, None);
            return EXIT_VALIDATION;
        }
    };
    let (command, out) = match &cli.command {
        Command::Solve(a) => ("solve", Some(a.out.clone())),
        Command::Analyze(a) => ("analyze", Some(a.out.clone())),
        Command::Verify(a) => ("verify", Some(a.out.clone())),
        Command::Report(_) => ("report", None),
    };
    let ctx = RunContext {
        command: command.into(),
        argv: argv
            .iter()
            .skip(1)
            .map(|s| s.to_string_lossy().into_owned())
            .collect(),
        seed: cli.seed,
        started: now_ms(),
    };
    let result = match &cli.command {
        Command::Solve(a) => run_solve(a, &ctx).map(|_| 0),
        Command::Analyze(a) => run_analyze(a, &ctx).map(|_| 0),
        Command::Verify(a) => run_verify(a, &ctx).map(|ok| if ok { 0 } else { EXIT_VERIFY }),
        Command::Report(a) => report_text(&a.input).map(|t| {
            print!("{t}");
            0
        }),
    };
    match result {
        Ok(EXIT_VERIFY) => {
            report_error(
                "verify",
                "at least one check failed; see report.json",
                EXIT_VERIFY,
                out.as_deref(),
            );
            EXIT_VERIFY
        }
        Ok(code) => code,
        Err(e) => {
            let code = exit_code(&e);
            report_error(e.kind(), &e.to_string(), code, out.as_deref());
            code
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn case_parsing() {
        assert_eq!("closed:simplex".parse::<Case>().unwrap(), Case::Simplex);
        assert_eq!("ball".parse::<Case>().unwrap(), Case::Ball);
        assert_eq!(
            "grid:out".parse::<Case>().unwrap(),
            Case::Grid("out".into())
        );
        assert!("grid:".parse::<Case>().is_err());
        assert!("torus".parse::<Case>().is_err());
    }

    #[test]
    fn suites_expand_and_dedup() {
        let s = expand_suites(&[Suite::Theorem, Suite::All]);
        assert_eq!(s.len(), 7);
        assert_eq!(
            expand_suites(&[Suite::Bounds, Suite::Bounds]),
            vec![Suite::Bounds]
        );
    }

    #[test]
    fn bad_flags_exit_with_validation_code() {
        assert_eq!(
            run(["kelab", "verify", "--case", "torus", "--out", "x"]),
            EXIT_VALIDATION
        );
        assert_eq!(run(["kelab", "frobnicate"]), EXIT_VALIDATION);
    }

    #[test]
    fn cube_theorem_suite_cancels() {
        let loaded = Loaded::load(&Case::Cube).unwrap();
        let pts = loaded.sample(10, 0);
        let v = verify(&loaded, &pts, &[Suite::Theorem], 2.0).unwrap();
        assert!(v.report.all_pass());
        for rec in &v.report.records {
            for e in rec.checks.values() {
                if let Some(c) = e.value() {
                    assert!(c.abs < 1e-12, "{c:?}");
                }
            }
        }
    }

    #[test]
    fn sha256_known_value() {
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }
}
