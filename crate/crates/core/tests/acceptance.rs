//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any criterion fails.

use std::collections::BTreeMap;
use std::f64::consts::TAU;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use kelab::bodies::{make_body, random_polygon, regular_polygon, BodySpec, ConvexBody};
use kelab::cli::{verify, Loaded, Suite};
use kelab::geometry::{point_geometry, Tensor};
use kelab::identities::{cubic_max, lambda_error_bar, CheckSummary};
use kelab::potentials::{
    ball_profile, BallProfileConfig, CubePotential, GridPotential, Potential, SimplexPotential,
};
use kelab::riemannian::{
    ball_diagnostics, cap_comparison, curvature_from_areas, GridMetric, JetMetric,
};
use kelab::sampling::{annulus_points, disk_points};
use kelab::solver::{convergence_study, solve, SolverConfig};

const SAMPLE: usize = 100;
const LAMBDA_SIMPLEX_TOL: f64 = 1e-9;
const FLAT_TOL: f64 = 1e-10;
const FAR_SLOPE_TOL: f64 = 1e-6;
const BALL_FORMULA_TOL: f64 = 1e-6;
const BALL_FORMULA_RANGE: (f64, f64) = (0.5, 5.0);
const THEOREM_RADIAL_TOL: f64 = 1e-5;
const THEOREM_CLOSED_TOL: f64 = 1e-12;
const THEOREM_RADIAL_POINTS: usize = 20;
// rounding in Lλ grows like e^{1.6|x|} on the simplex; 1e-12 holds out to |x| ≈ 2.3
const THEOREM_CLOSED_RADIUS: f64 = 2.0;
const CD_NORM_TOL: f64 = 1e-7;
const Q_RADIAL_TOL: f64 = 1e-6;
const Q_GRID_REL_TOL: f64 = 1e-2;
const RATE_RANGE: (f64, f64) = (3.5, 4.5);
const STUDY_WINDOW: f64 = 4.0;
const SIMPLEX_ATTAINS_TOL: f64 = 5e-2;
const HESS_LOWER: f64 = 5.0 / 6.0;
const HESS_SLACK: f64 = 1e-9;
const LAMBDA_LOWER_SLACK: f64 = 1e-9;
const CUBIC_TENSORS: usize = 100;
const CUBIC_VALUE_TOL: f64 = 1e-8;
const CUBIC_FIRST_ORDER_TOL: f64 = 1e-8;
const CUBIC_MARGIN_SLACK: f64 = 1e-10;
const AREA_CURVATURE_TOL: f64 = 5e-3;
const AREA_RADII: [f64; 4] = [0.25, 0.5, 0.75, 1.0];
const CAP_RADII: [f64; 2] = [0.5, 1.0];

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn within(elapsed: Duration, limit_s: f64) -> bool {
    elapsed.as_secs_f64() < limit_s
}

struct Solved {
    name: &'static str,
    grid: GridPotential,
    /// Same box at half the resolution, for the λ error bar.
    coarse: GridPotential,
    seconds: f64,
}

impl Solved {
    fn loaded(&self) -> Loaded {
        Loaded::Grid {
            grid: self.grid.clone(),
            inputs: Vec::new(),
        }
    }
}

fn solve_body(name: &'static str, spec: BodySpec, half_width: f64, n: usize) -> Solved {
    let body = make_body(&spec).expect("valid body").recenter();
    let t = Instant::now();
    let run = |n| {
        solve(&body, &SolverConfig::with(half_width, n))
            .expect("solve converges")
            .potential
    };
    Solved {
        name,
        grid: run(n),
        coarse: run(n.div_ceil(2)),
        seconds: t.elapsed().as_secs_f64(),
    }
}

fn solved_bodies() -> Vec<Solved> {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let hexagon = random_polygon(&mut rng, 6, 0.7, 1.3);
    vec![
        solve_body("simplex", BodySpec::Simplex { n: 2 }, 6.0, 513),
        solve_body("pentagon", regular_polygon(5, 1.0, 0.3), 8.0, 513),
        solve_body("hexagon", hexagon, 8.0, 257),
    ]
}

fn simplex_curvature_is_constant() -> Outcome {
    let t = Instant::now();
    let pot = SimplexPotential::new(2);
    let mut worst: f64 = 0.0;
    for x in disk_points(SAMPLE, 4.0, 0) {
        let g = point_geometry(&pot.jet(&x, 3).unwrap()).unwrap();
        worst = worst.max((g.lambda - 1.0 / 3.0).abs());
    }
    let dt = t.elapsed();
    outcome(
        worst < LAMBDA_SIMPLEX_TOL && within(dt, 1.0),
        format!("max |λ − 1/3| = {worst:.2e} over {SAMPLE} points, {dt:.2?}"),
    )
}

fn cube_is_flat() -> Outcome {
    let t = Instant::now();
    let pot = CubePotential::new(2);
    let (mut riem, mut lam): (f64, f64) = (0.0, 0.0);
    for x in disk_points(SAMPLE, 4.0, 0) {
        let g = point_geometry(&pot.jet(&x, 3).unwrap()).unwrap();
        riem = riem.max(g.riemann.max_abs());
        lam = lam.max(g.lambda.abs());
    }
    let dt = t.elapsed();
    outcome(
        riem < FLAT_TOL && lam < FLAT_TOL && within(dt, 1.0),
        format!("max |Riem| = {riem:.2e}, max |λ| = {lam:.2e}, {dt:.2?}"),
    )
}

fn ball_curvature_formula() -> Outcome {
    let t = Instant::now();
    let p = ball_profile(BallProfileConfig::default()).unwrap();
    let slope = *p.dphi.last().unwrap();
    let d = ball_diagnostics(&p).unwrap();
    let (lo, hi) = BALL_FORMULA_RANGE;
    let rows: Vec<_> = d
        .curvature
        .iter()
        .filter(|c| c.r >= lo - 1e-12 && c.r <= hi + 1e-12)
        .collect();
    let mismatch = rows
        .iter()
        .map(|c| (c.h_direct - c.lambda_quarter).abs())
        .fold(0.0, f64::max);
    let last = d.curvature.last().unwrap();
    let dt = t.elapsed();
    let pass = slope > 1.0 - FAR_SLOPE_TOL
        && !rows.is_empty()
        && mismatch < BALL_FORMULA_TOL
        && d.large_r_decreasing
        && d.large_r_below_minus_one
        && within(dt, 10.0);
    outcome(
        pass,
        format!(
            "φ'({}) = {slope:.9}, max |H − λ/4| on [{lo}, {hi}] = {mismatch:.2e}, H({}) = {:.3}, {dt:.2?}",
            p.r_max(),
            last.r,
            last.h_direct
        ),
    )
}

fn summaries(
    loaded: &Loaded,
    points: &[[f64; 2]],
    suites: &[Suite],
) -> BTreeMap<String, CheckSummary> {
    verify(loaded, points, suites, 2.0)
        .unwrap()
        .report
        .summary()
}

fn max_abs_of(s: &BTreeMap<String, CheckSummary>, names: &[&str]) -> f64 {
    names
        .iter()
        .map(|n| {
            s.get(*n)
                .filter(|c| c.n_checked > 0)
                .map_or(f64::INFINITY, |c| c.max_abs)
        })
        .fold(0.0, f64::max)
}

fn theorem_residual() -> Outcome {
    let t = Instant::now();
    let names = ["lap_lambda", "lap_lambda_q"];
    let ball = Loaded::Radial {
        profile: ball_profile(BallProfileConfig::default()).unwrap(),
    };
    let pts = annulus_points(THEOREM_RADIAL_POINTS, 0.5, 5.0, 0);
    let radial = max_abs_of(&summaries(&ball, &pts, &[Suite::Theorem]), &names);
    let mut closed: f64 = 0.0;
    for case in [kelab::cli::Case::Simplex, kelab::cli::Case::Cube] {
        let l = Loaded::load(&case).unwrap();
        let pts = disk_points(SAMPLE, THEOREM_CLOSED_RADIUS, 0);
        closed = closed.max(max_abs_of(&summaries(&l, &pts, &[Suite::Theorem]), &names));
    }
    let dt = t.elapsed();
    outcome(
        radial < THEOREM_RADIAL_TOL && closed < THEOREM_CLOSED_TOL && within(dt, 10.0),
        format!(
            "ball max residual {radial:.2e}, closed forms {closed:.2e} on |x| ≤ {THEOREM_CLOSED_RADIUS}, {dt:.2?}"
        ),
    )
}

fn identity_suite() -> Outcome {
    let t = Instant::now();
    let mut failures = Vec::new();
    let mut checked = 0;
    for case in [
        kelab::cli::Case::Simplex,
        kelab::cli::Case::Cube,
        kelab::cli::Case::Ball,
    ] {
        let l = Loaded::load(&case).unwrap();
        let pts = l.sample(SAMPLE, 0);
        for (name, s) in summaries(&l, &pts, &[Suite::Algebraic, Suite::Laplacian]) {
            checked += s.n_checked;
            if !s.pass {
                failures.push(format!("{}:{name}", String::from(case.clone())));
            }
        }
    }
    let dt = t.elapsed();
    outcome(
        failures.is_empty() && checked > 0 && within(dt, 30.0),
        format!("{checked} evaluations, failures {failures:?}, {dt:.2?}"),
    )
}

fn q_system(simplex: &Solved) -> Outcome {
    let t = Instant::now();
    let ball = Loaded::Radial {
        profile: ball_profile(BallProfileConfig::default()).unwrap(),
    };
    let pts = ball.sample(SAMPLE, 0);
    let s = summaries(&ball, &pts, &[Suite::Qframe]);
    let cd = max_abs_of(&s, &["cd_norm"]);
    let q_names = ["q_eeuu_closed", "q_eeeu_closed"];
    let q_radial = max_abs_of(&s, &q_names);
    let grid = simplex.loaded();
    let gpts = grid.sample(50, 0);
    let gs = summaries(&grid, &gpts, &[Suite::Qframe]);
    let q_grid = q_names
        .iter()
        .map(|n| {
            gs.get(*n)
                .filter(|c| c.n_checked > 0)
                .map_or(f64::INFINITY, |c| c.max_rel)
        })
        .fold(0.0, f64::max);
    let dt = t.elapsed();
    outcome(
        cd < CD_NORM_TOL && q_radial < Q_RADIAL_TOL && q_grid < Q_GRID_REL_TOL && within(dt, 60.0),
        format!(
            "ball C²+D² residual {cd:.2e}, ball Q {q_radial:.2e}, solved simplex Q relative {q_grid:.2e}, {dt:.2?}"
        ),
    )
}

fn solver_rates() -> Outcome {
    let t = Instant::now();
    let configs: Vec<_> = [65, 129, 257]
        .iter()
        .map(|&n| SolverConfig::with(8.0, n))
        .collect();
    let cube = CubePotential::new(2);
    let profile = ball_profile(BallProfileConfig::default()).unwrap();
    let square = make_body(&BodySpec::Box {
        halfwidths: vec![1.0, 1.0],
        center: None,
    })
    .unwrap();
    let disk = make_body(&BodySpec::Disk {
        radius: 1.0,
        center: None,
    })
    .unwrap();
    let mut ratios = Vec::new();
    let cube_oracle = |x: f64, y: f64| cube.value(&[x, y]);
    let disk_oracle = |x: f64, y: f64| profile.eval(x.hypot(y))[0];
    let cases: [(&ConvexBody, &dyn Fn(f64, f64) -> f64); 2] =
        [(&square, &cube_oracle), (&disk, &disk_oracle)];
    for (body, oracle) in cases {
        let rows = convergence_study(body, &configs, STUDY_WINDOW, Some(oracle)).unwrap();
        let errs: Vec<f64> = rows.iter().map(|(row, _)| row.error.unwrap()).collect();
        ratios.extend(errs.windows(2).map(|w| w[0] / w[1]));
    }
    let dt = t.elapsed();
    let (lo, hi) = RATE_RANGE;
    outcome(
        ratios.iter().all(|r| (lo..=hi).contains(r)) && within(dt, 600.0),
        format!(
            "error ratios square {:.3}, {:.3}; disk {:.3}, {:.3}; {dt:.2?}",
            ratios[0], ratios[1], ratios[2], ratios[3]
        ),
    )
}

fn curvature_bound(solved: &[Solved]) -> Outcome {
    let t = Instant::now();
    let mut pass = true;
    let mut parts = Vec::new();
    for s in solved {
        let stride = 2 * ((s.grid.n - 1) / 64).max(1);
        let e = lambda_error_bar(&s.grid, &s.coarse, 0.5, stride).unwrap();
        let max_lambda = e
            .nodes
            .iter()
            .map(|n| n.lambda)
            .fold(f64::NEG_INFINITY, f64::max);
        let margin = 1.0 / 3.0 + e.bar - max_lambda;
        let pointwise = e
            .nodes
            .iter()
            .filter(|n| n.lambda > 1.0 / 3.0 + n.stencil + n.refinement)
            .count();
        pass &= !e.nodes.is_empty() && margin >= 0.0;
        if s.name == "simplex" {
            let dev = e
                .nodes
                .iter()
                .map(|n| (n.lambda - 1.0 / 3.0).abs())
                .fold(0.0, f64::max);
            pass &= dev < SIMPLEX_ATTAINS_TOL;
            parts.push(format!("simplex max |λ − 1/3| {dev:.2e}"));
        }
        parts.push(format!(
            "{} max λ {max_lambda:.5} ε_grid {:.2e} margin {margin:.2e} ({} nodes, {pointwise} above their own bar)",
            s.name,
            e.bar,
            e.nodes.len()
        ));
    }
    let solve_s: f64 = solved.iter().map(|s| s.seconds).sum();
    let total = t.elapsed().as_secs_f64() + solve_s;
    pass &= total < 900.0;
    outcome(
        pass,
        format!("{}, {total:.1}s incl. solves", parts.join(", ")),
    )
}

fn geodesic_convexity() -> Outcome {
    let profile = ball_profile(BallProfileConfig::default()).unwrap();
    let simplex = SimplexPotential::new(2);
    let cube = CubePotential::new(2);
    let cases: [(&dyn Potential, Vec<[f64; 2]>); 3] = [
        (&simplex, disk_points(SAMPLE, 4.0, 0)),
        (&cube, disk_points(SAMPLE, 4.0, 0)),
        (&profile, annulus_points(SAMPLE, 0.5, 5.0, 0)),
    ];
    let mut worst = f64::INFINITY;
    for (pot, pts) in &cases {
        for x in pts {
            let g = point_geometry(&pot.jet(x, 3).unwrap()).unwrap();
            worst = worst.min(g.min_hess_eigenvalue());
        }
    }
    outcome(
        worst >= HESS_LOWER - HESS_SLACK,
        format!("smallest eigenvalue {worst:.12} (bound 5/6)"),
    )
}

fn appendix_bounds(solved: &[Solved]) -> Outcome {
    let names = ["grad_rough", "grad_alpha", "grad_alpha_directional"];
    let mut loads: Vec<(String, Loaded)> = vec![
        (
            "simplex".into(),
            Loaded::load(&kelab::cli::Case::Simplex).unwrap(),
        ),
        (
            "cube".into(),
            Loaded::load(&kelab::cli::Case::Cube).unwrap(),
        ),
    ];
    for s in solved {
        loads.push((s.name.to_string(), s.loaded()));
    }
    let mut min_margin = f64::INFINITY;
    let mut min_lower = f64::INFINITY;
    let mut failures = Vec::new();
    for (name, l) in &loads {
        let pts = l.sample(SAMPLE, 0);
        let s = summaries(l, &pts, &[Suite::Bounds]);
        for n in names {
            match s
                .get(n)
                .filter(|c| c.n_checked > 0)
                .and_then(|c| c.min_margin)
            {
                Some(m) => min_margin = min_margin.min(m),
                None => failures.push(format!("{name}:{n} unchecked")),
            }
        }
        let pot = l.potential();
        for x in &pts {
            let g = point_geometry(&pot.jet(x, 3).unwrap()).unwrap();
            min_lower = min_lower.min(g.lambda + g.grad_sq / 8.0);
        }
    }
    outcome(
        failures.is_empty() && min_margin >= 0.0 && min_lower >= -LAMBDA_LOWER_SLACK,
        format!(
            "min gradient-bound margin {min_margin:.3e}, min λ + |∇Φ|²/8 = {min_lower:.3e} {failures:?}"
        ),
    )
}

fn brute_cubic_max(c: [f64; 4]) -> f64 {
    let p = |th: f64| {
        let (x, y) = (th.cos(), th.sin());
        c[0] * x * x * x + 3.0 * c[1] * x * x * y + 3.0 * c[2] * x * y * y + c[3] * y * y * y
    };
    let m = 20_000;
    let step = TAU / m as f64;
    let best = (0..m)
        .map(|k| k as f64 * step)
        .max_by(|a, b| p(*a).total_cmp(&p(*b)))
        .unwrap();
    // golden-section refinement inside the bracketing cell
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (best - step, best + step);
    for _ in 0..80 {
        let c1 = b - g * (b - a);
        let c2 = a + g * (b - a);
        if p(c1) < p(c2) {
            a = c1;
        } else {
            b = c2;
        }
    }
    p(0.5 * (a + b))
}

fn cubic_maximizer() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let (mut value_err, mut first, mut margin): (f64, f64, f64) = (0.0, 0.0, f64::INFINITY);
    for _ in 0..CUBIC_TENSORS {
        let c: [f64; 4] = std::array::from_fn(|_| rng.gen_range(-1.0..1.0));
        let t = Tensor::from_fn(2, 3, |idx| c[idx.iter().filter(|&&i| i == 1).count()]);
        let m = cubic_max(&t);
        value_err = value_err.max((m.value - brute_cubic_max(c)).abs());
        first = first.max(m.first_order.abs());
        margin = margin.min(m.margin);
    }
    outcome(
        value_err < CUBIC_VALUE_TOL && first < CUBIC_FIRST_ORDER_TOL && margin >= -CUBIC_MARGIN_SLACK,
        format!(
            "{CUBIC_TENSORS} tensors: max value error {value_err:.2e}, max |T(a,v,v)| {first:.2e}, min margin {margin:.3e}"
        ),
    )
}

fn area_comparison(solved: &[Solved]) -> Outcome {
    let simplex = SimplexPotential::new(2);
    let cube = CubePotential::new(2);
    let x = [0.3, -0.2];
    let k_simplex = curvature_from_areas(&JetMetric(&simplex), x, &AREA_RADII)
        .unwrap()
        .estimate;
    let k_cube = curvature_from_areas(&JetMetric(&cube), x, &AREA_RADII)
        .unwrap()
        .estimate;
    let mut pass =
        (k_simplex - 1.0 / 12.0).abs() < AREA_CURVATURE_TOL && k_cube.abs() < AREA_CURVATURE_TOL;
    let mut parts = vec![format!("K simplex {k_simplex:.5}, cube {k_cube:.1e}")];
    for s in solved {
        let fine = GridMetric::new(&s.grid, 1);
        let coarse = GridMetric::new(&s.grid, 2);
        for r in CAP_RADII {
            match cap_comparison(&fine, Some(&coarse), [0.0, 0.0], r) {
                Ok(c) => {
                    pass &= c.pass() && c.embedded;
                    parts.push(format!(
                        "{} r={r} margin {:.2e} tol {:.1e}",
                        s.name,
                        c.margin,
                        c.tolerance()
                    ));
                }
                Err(e) => {
                    pass = false;
                    parts.push(format!("{} r={r} error {e}", s.name));
                }
            }
        }
    }
    outcome(pass, parts.join(", "))
}

fn record(failed: &mut usize, id: usize, name: &str, o: Outcome) {
    println!(
        "{} criterion {id:>2} {name}: {}",
        if o.pass { "PASS" } else { "FAIL" },
        o.detail
    );
    *failed += usize::from(!o.pass);
}

fn main() {
    let mut failed = 0;
    let f = &mut failed;
    record(
        f,
        1,
        "simplex constant curvature",
        simplex_curvature_is_constant(),
    );
    record(f, 2, "cube flatness", cube_is_flat());
    record(
        f,
        3,
        "ball profile and curvature formula",
        ball_curvature_formula(),
    );
    record(
        f,
        4,
        "curvature Laplacian theorem residual",
        theorem_residual(),
    );
    record(f, 5, "identity suite", identity_suite());
    let solved = solved_bodies();
    record(f, 6, "Q-system", q_system(&solved[0]));
    record(f, 7, "solver second-order convergence", solver_rates());
    record(
        f,
        8,
        "curvature bound on solved bodies",
        curvature_bound(&solved),
    );
    record(f, 9, "geodesic convexity", geodesic_convexity());
    record(
        f,
        10,
        "gradient and curvature lower bounds",
        appendix_bounds(&solved),
    );
    record(f, 11, "cubic form maximizer", cubic_maximizer());
    record(f, 12, "geodesic ball areas", area_comparison(&solved));
    println!("{} of 12 criteria pass", 12 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
