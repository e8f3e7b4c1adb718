//! Finite-difference Newton solver for `e^{−Φ} = det D²Φ` on `[−L, L]²`.
//!
//! Interior nodes carry `F = log det D²_hΦ + Φ` with the 9-point second-order
//! Hessian stencil. Edge nodes carry a one-sided second-order normal
//! derivative matched to the far field of the body ([`FarField`]); box
//! corners are extrapolated. The additive constant and the translate are
//! fixed by the equation and the boundary rows together.

use faer::linalg::solvers::Solve;
use faer::sparse::{SparseColMat, Triplet};
use serde::Serialize;

use crate::bodies::{BodySpec, ConvexBody};
use crate::error::{Error, Result};
use crate::geometry::point_geometry;
use crate::potentials::GridPotential;

const ARMIJO: f64 = 1e-4;
const MIN_STEP: f64 = 1e-4;
/// Nodes whose residual is within this multiple of the rounding estimate count as converged.
pub const ROUNDING_FACTOR: f64 = 1.0;

/// How the Newton iteration is started.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialGuess {
    /// Far-field function of the body plus the constant that zeroes the mean residual.
    Softmax,
    /// Support function mollified at scale 0.5 plus `log area(K)`.
    Mollified,
}

#[derive(Debug, Clone, Serialize, serde::Deserialize)]
pub struct SolverConfig {
    /// Half-width `L` of the box.
    pub half_width: f64,
    /// Nodes per axis, odd.
    pub n: usize,
    /// First trial step of every line search, in `(0, 1]`.
    pub damping: f64,
    /// Bound on `max |det D²_hΦ·e^Φ − 1|` and on the boundary-row residuals.
    pub tol: f64,
    pub max_iter: usize,
    pub initial: InitialGuess,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            half_width: 8.0,
            n: 129,
            damping: 1.0,
            tol: 1e-8,
            max_iter: 60,
            initial: InitialGuess::Softmax,
        }
    }
}

impl SolverConfig {
    pub fn with(half_width: f64, n: usize) -> SolverConfig {
        SolverConfig {
            half_width,
            n,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n.is_multiple_of(2) || self.n < 9 {
            return Err(Error::validation(format!(
                "grid size must be odd and at least 9, got {}",
                self.n
            )));
        }
        if !(self.half_width >= 4.0) {
            return Err(Error::validation(format!(
                "half-width must be at least 4, got {}",
                self.half_width
            )));
        }
        if !(self.tol > 0.0) {
            return Err(Error::validation("tolerance must be positive"));
        }
        if !(self.damping > 0.0 && self.damping <= 1.0) {
            return Err(Error::validation("damping must lie in (0, 1]"));
        }
        Ok(())
    }

    pub fn h(&self) -> f64 {
        2.0 * self.half_width / (self.n - 1) as f64
    }
}

/// Smooth convex function whose gradient field has the asymptotics of `∇Φ`.
#[derive(Debug, Clone)]
pub enum FarField {
    /// Legendre transform of `u(p) = Σ_e ℓ_e log ℓ_e`, `ℓ_e(p) = 1 − ⟨p, a_e⟩`,
    /// where `a_e = ν_e/d_e` for the facet `⟨ν_e, p⟩ = d_e`, translated so
    /// that its minimum is at the origin.
    Facets {
        a: Vec<[f64; 2]>,
        shift: [f64; 2],
    },
    /// `ε log Σ_v e^{⟨v,x⟩/ε}`.
    Softmax {
        vertices: Vec<[f64; 2]>,
        eps: f64,
    },
    Disk {
        radius: f64,
        center: [f64; 2],
    },
}

impl FarField {
    /// The facet potential for polygons; it is exact up to a constant for
    /// triangles and parallelograms. The disk uses `R·√(1 + |x − c|²) + ⟨c, x⟩`.
    pub fn of(body: &ConvexBody) -> Result<FarField> {
        if body.dim() != 2 {
            return Err(Error::validation("the solver handles planar bodies only"));
        }
        if let BodySpec::Disk { radius, center } = body.spec() {
            return Ok(FarField::Disk {
                radius,
                center: center.unwrap_or([0.0, 0.0]),
            });
        }
        let facets = body
            .facets2()
            .ok_or_else(|| Error::validation("body has no facets"))?;
        if facets.iter().any(|(_, d)| !(*d > 0.0)) {
            return Err(Error::validation(
                "the origin must lie inside the body; recenter it first",
            ));
        }
        let a: Vec<[f64; 2]> = facets
            .iter()
            .map(|(nu, d)| [nu[0] / d, nu[1] / d])
            .collect();
        // ∇u(0) = −Σ a_e is where the transform has its minimum
        let shift = a.iter().fold([0.0, 0.0], |s, e| [s[0] - e[0], s[1] - e[1]]);
        Ok(FarField::Facets { a, shift })
    }

    fn mollified(body: &ConvexBody) -> Result<FarField> {
        Ok(match body.vertices2() {
            Some(vertices) => FarField::Softmax { vertices, eps: 0.5 },
            None => FarField::of(body)?,
        })
    }

    /// Value and gradient.
    pub fn eval(&self, x: [f64; 2]) -> (f64, [f64; 2]) {
        match self {
            FarField::Facets { a, shift } => legendre_facets(a, [x[0] + shift[0], x[1] + shift[1]]),
            FarField::Softmax { vertices, eps } => {
                let a: Vec<f64> = vertices
                    .iter()
                    .map(|v| (v[0] * x[0] + v[1] * x[1]) / eps)
                    .collect();
                let m = a.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let w: Vec<f64> = a.iter().map(|t| (t - m).exp()).collect();
                let z: f64 = w.iter().sum();
                let mut g = [0.0; 2];
                for (wk, v) in w.iter().zip(vertices) {
                    g[0] += wk / z * v[0];
                    g[1] += wk / z * v[1];
                }
                (eps * (m + z.ln()), g)
            }
            FarField::Disk { radius, center } => {
                let y = [x[0] - center[0], x[1] - center[1]];
                let s = (y[0] * y[0] + y[1] * y[1] + 1.0).sqrt();
                let value = radius * s + center[0] * x[0] + center[1] * x[1];
                (
                    value,
                    [center[0] + radius * y[0] / s, center[1] + radius * y[1] / s],
                )
            }
        }
    }

    /// Normal derivative imposed at a boundary point with outward normal
    /// `nu`, as `g0 + g1·e^{−Φ}`. For the disk this is the far-field
    /// expansion `∂_rΦ = R − (R|x| + 1)R^{−3}e^{−Φ}` of the radial equation.
    pub fn boundary_data(&self, x: [f64; 2], nu: [f64; 2]) -> (f64, f64) {
        match self {
            FarField::Disk { radius, center } => {
                let y = [x[0] - center[0], x[1] - center[1]];
                let r = y[0].hypot(y[1]);
                let c = (y[0] * nu[0] + y[1] * nu[1]) / r;
                let shift = center[0] * nu[0] + center[1] * nu[1];
                (shift + radius * c, -c * (radius * r + 1.0) / radius.powi(3))
            }
            _ => {
                let g = self.eval(x).1;
                (g[0] * nu[0] + g[1] * nu[1], 0.0)
            }
        }
    }
}

/// `sup_p ⟨x, p⟩ − Σ ℓ_e log ℓ_e` and its maximizer, by damped Newton from `p = 0`.
fn legendre_facets(a: &[[f64; 2]], x: [f64; 2]) -> (f64, [f64; 2]) {
    let ells =
        |p: [f64; 2]| -> Vec<f64> { a.iter().map(|e| 1.0 - e[0] * p[0] - e[1] * p[1]).collect() };
    let objective = |p: [f64; 2], l: &[f64]| {
        x[0] * p[0] + x[1] * p[1] - l.iter().map(|t| t * t.ln()).sum::<f64>()
    };
    let mut p = [0.0, 0.0];
    let mut l = ells(p);
    let mut val = objective(p, &l);
    for _ in 0..200 {
        // gradient and Hessian of the objective
        let mut g = x;
        let mut hm = [0.0; 3];
        for (e, t) in a.iter().zip(&l) {
            let c = t.ln() + 1.0;
            g[0] += e[0] * c;
            g[1] += e[1] * c;
            hm[0] += e[0] * e[0] / t;
            hm[1] += e[0] * e[1] / t;
            hm[2] += e[1] * e[1] / t;
        }
        let det = hm[0] * hm[2] - hm[1] * hm[1];
        let d = [
            (hm[2] * g[0] - hm[1] * g[1]) / det,
            (hm[0] * g[1] - hm[1] * g[0]) / det,
        ];
        let decrement = g[0] * d[0] + g[1] * d[1];
        if decrement < 1e-24 * (1.0 + val.abs()) {
            break;
        }
        let mut t = 1.0;
        loop {
            let q = [p[0] + t * d[0], p[1] + t * d[1]];
            let lq = ells(q);
            if lq.iter().all(|&s| s > 0.0) {
                let vq = objective(q, &lq);
                if vq >= val + 0.25 * t * decrement || t < 1e-12 {
                    p = q;
                    l = lq;
                    val = vq;
                    break;
                }
            }
            t *= 0.5;
        }
    }
    (val, p)
}

/// A converged solve.
#[derive(Debug, Clone)]
pub struct Solution {
    pub potential: GridPotential,
    pub config: SolverConfig,
    /// `max |det D²_hΦ·e^Φ − 1|` at the start of each iteration and at exit.
    pub history: Vec<f64>,
    /// Accepted step lengths.
    pub steps: Vec<f64>,
    pub ke_max: f64,
    pub boundary_max: f64,
    /// Interior nodes accepted with a residual above `tol` but within
    /// [`ROUNDING_FACTOR`] times their rounding estimate.
    pub rounding_limited: usize,
    /// Location of the minimum of `Φ`, where `∇Φ = 0`.
    pub minimizer: [f64; 2],
}

struct Problem {
    n: usize,
    h: f64,
    coords: Vec<f64>,
    // normal derivative data (g0, g1) per boundary node, indexed like values
    bdata: Vec<(f64, f64)>,
}

#[derive(Clone, Copy)]
enum Row {
    Interior,
    // unit step towards the interior and the step length in units of h
    Boundary { di: isize, dj: isize, len: f64 },
    // box corners are extrapolated along the diagonal
    Corner { di: isize, dj: isize },
}

const CORNER: [(isize, f64); 4] = [(0, 1.0), (1, -3.0), (2, 3.0), (3, -1.0)];

impl Problem {
    fn new(cfg: &SolverConfig, far: &FarField) -> Problem {
        let n = cfg.n;
        let grid = GridPotential::new(cfg.half_width, n, vec![0.0; n * n], None);
        let coords: Vec<f64> = (0..n).map(|i| grid.coord(i)).collect();
        let mut p = Problem {
            n,
            h: cfg.h(),
            coords,
            bdata: vec![(0.0, 0.0); n * n],
        };
        for j in 0..n {
            for i in 0..n {
                if let Row::Boundary { di, dj, len } = p.row(i, j) {
                    let nu = [-di as f64 / len, -dj as f64 / len];
                    p.bdata[j * n + i] = far.boundary_data([p.coords[i], p.coords[j]], nu);
                }
            }
        }
        p
    }

    fn row(&self, i: usize, j: usize) -> Row {
        let last = self.n - 1;
        let side = |k: usize| {
            if k == 0 {
                1
            } else if k == last {
                -1
            } else {
                0
            }
        };
        let (di, dj) = (side(i), side(j));
        match (di, dj) {
            (0, 0) => Row::Interior,
            (0, _) | (_, 0) => Row::Boundary { di, dj, len: 1.0 },
            _ => Row::Corner { di, dj },
        }
    }

    fn hessian(&self, v: &[f64], i: usize, j: usize) -> [f64; 3] {
        let n = self.n;
        let at = |a: usize, b: usize| v[b * n + a];
        let h2 = self.h * self.h;
        let c = at(i, j);
        [
            (at(i + 1, j) - 2.0 * c + at(i - 1, j)) / h2,
            // grouped so that mirrored grids give bitwise mirrored values
            ((at(i + 1, j + 1) + at(i - 1, j - 1)) - (at(i + 1, j - 1) + at(i - 1, j + 1)))
                / (4.0 * h2),
            (at(i, j + 1) - 2.0 * c + at(i, j - 1)) / h2,
        ]
    }

    fn boundary_residual(
        &self,
        v: &[f64],
        i: usize,
        j: usize,
        di: isize,
        dj: isize,
        len: f64,
    ) -> f64 {
        let n = self.n;
        let step =
            |k: isize| v[(j as isize + k * dj) as usize * n + (i as isize + k * di) as usize];
        let (g0, g1) = self.bdata[j * n + i];
        (3.0 * step(0) - 4.0 * step(1) + step(2)) / (2.0 * self.h * len)
            - g0
            - g1 * (-step(0)).exp()
    }

    /// Residual vector, or the first node where `D²_hΦ` is not positive definite.
    fn residual(&self, v: &[f64]) -> std::result::Result<Vec<f64>, (usize, usize)> {
        let n = self.n;
        let mut r = vec![0.0; n * n];
        for j in 0..n {
            for i in 0..n {
                r[j * n + i] = match self.row(i, j) {
                    Row::Interior => {
                        let [xx, xy, yy] = self.hessian(v, i, j);
                        let det = xx * yy - xy * xy;
                        if !(xx > 0.0 && det > 0.0) {
                            return Err((i, j));
                        }
                        det.ln() + v[j * n + i]
                    }
                    Row::Boundary { di, dj, len } => self.boundary_residual(v, i, j, di, dj, len),
                    Row::Corner { di, dj } => {
                        let at = |k: isize| {
                            v[(j as isize + k * dj) as usize * n + (i as isize + k * di) as usize]
                        };
                        CORNER.iter().map(|&(k, w)| w * at(k)).sum::<f64>() / (self.h * self.h)
                    }
                };
            }
        }
        Ok(r)
    }

    fn jacobian(&self, v: &[f64]) -> Vec<Triplet<usize, usize, f64>> {
        let n = self.n;
        let h2 = self.h * self.h;
        let mut t = Vec::with_capacity(9 * n * n);
        for j in 0..n {
            for i in 0..n {
                let k = j * n + i;
                match self.row(i, j) {
                    Row::Interior => {
                        let [xx, xy, yy] = self.hessian(v, i, j);
                        let det = xx * yy - xy * xy;
                        let (axx, axy, ayy) = (yy / det, -xy / det, xx / det);
                        let mut push =
                            |a: usize, b: usize, w: f64| t.push(Triplet::new(k, b * n + a, w));
                        push(i, j, 1.0 - 2.0 * (axx + ayy) / h2);
                        push(i + 1, j, axx / h2);
                        push(i - 1, j, axx / h2);
                        push(i, j + 1, ayy / h2);
                        push(i, j - 1, ayy / h2);
                        let c = 2.0 * axy / (4.0 * h2);
                        push(i + 1, j + 1, c);
                        push(i - 1, j - 1, c);
                        push(i + 1, j - 1, -c);
                        push(i - 1, j + 1, -c);
                    }
                    Row::Boundary { di, dj, len } => {
                        let s = 1.0 / (2.0 * self.h * len);
                        for (step, w) in [(0isize, 3.0), (1, -4.0), (2, 1.0)] {
                            let a = (i as isize + step * di) as usize;
                            let b = (j as isize + step * dj) as usize;
                            t.push(Triplet::new(k, b * n + a, w * s));
                        }
                        let g1 = self.bdata[k].1;
                        if g1 != 0.0 {
                            t.push(Triplet::new(k, k, g1 * (-v[k]).exp()));
                        }
                    }
                    Row::Corner { di, dj } => {
                        for (step, w) in CORNER {
                            let a = (i as isize + step * di) as usize;
                            let b = (j as isize + step * dj) as usize;
                            t.push(Triplet::new(k, b * n + a, w / h2));
                        }
                    }
                }
            }
        }
        t
    }

    /// Rounding error of `F` at an interior node from storing `Φ` in
    /// double precision.
    fn rounding(&self, v: &[f64], i: usize, j: usize) -> f64 {
        let n = self.n;
        let mut m: f64 = 0.0;
        for b in j - 1..=j + 1 {
            for a in i - 1..=i + 1 {
                m = m.max(v[b * n + a].abs());
            }
        }
        let d = f64::EPSILON * m;
        let [xx, xy, yy] = self.hessian(v, i, j);
        let det = xx * yy - xy * xy;
        let h2 = self.h * self.h;
        (4.0 * d / h2) * (xx.abs() + yy.abs() + 0.5 * xy.abs()) / det + d
    }

    fn norms(&self, v: &[f64], r: &[f64], tol: f64) -> Norms {
        let mut out = Norms {
            ke: 0.0,
            boundary: 0.0,
            excess: 0.0,
            rounding_limited: 0,
        };
        for j in 0..self.n {
            for i in 0..self.n {
                let x = r[j * self.n + i];
                match self.row(i, j) {
                    Row::Interior => {
                        let e = x.exp_m1().abs();
                        out.ke = out.ke.max(e);
                        if e >= tol {
                            let floor = ROUNDING_FACTOR * self.rounding(v, i, j);
                            out.excess = out.excess.max(e / floor.max(tol));
                            out.rounding_limited += 1;
                        }
                    }
                    _ => out.boundary = out.boundary.max(x.abs()),
                }
            }
        }
        out
    }
}

struct Norms {
    ke: f64,
    boundary: f64,
    // max of |residual| / max(tol, rounding floor) over nodes above tol
    excess: f64,
    rounding_limited: usize,
}

fn sum_sq(r: &[f64]) -> f64 {
    r.iter().map(|x| x * x).sum()
}

fn newton_direction(p: &Problem, v: &[f64], r: &[f64]) -> Result<Vec<f64>> {
    let m = v.len();
    let a = SparseColMat::<usize, f64>::try_new_from_triplets(m, m, &p.jacobian(v))
        .map_err(|e| Error::LinearSolve(format!("{e:?}")))?;
    let lu = a
        .sp_lu()
        .map_err(|e| Error::LinearSolve(format!("{e:?}")))?;
    let mut rhs = faer::Mat::<f64>::from_fn(m, 1, |i, _| -r[i]);
    lu.solve_in_place(rhs.as_mut());
    let d: Vec<f64> = (0..m).map(|i| rhs[(i, 0)]).collect();
    if d.iter().any(|x| !x.is_finite()) {
        return Err(Error::LinearSolve("non-finite Newton direction".into()));
    }
    Ok(d)
}

/// Starting values for `body` on the grid of `cfg`.
pub fn initial_guess(body: &ConvexBody, cfg: &SolverConfig) -> Result<GridPotential> {
    let (far, shift) = match cfg.initial {
        InitialGuess::Softmax => (FarField::of(body)?, None),
        InitialGuess::Mollified => (FarField::mollified(body)?, Some(body.area().ln())),
    };
    let mut grid = GridPotential::from_fn(cfg.half_width, cfg.n, Some(body.clone()), |x, y| {
        far.eval([x, y]).0
    });
    let c = match shift {
        Some(c) => c,
        None => {
            let p = Problem::new(cfg, &far);
            let r = p.residual(&grid.values).map_err(|(i, j)| {
                Error::Convexity(format!("initial guess is not convex at node ({i}, {j})"))
            })?;
            let (mut sum, mut count) = (0.0, 0usize);
            for j in 1..cfg.n - 1 {
                for i in 1..cfg.n - 1 {
                    sum += r[j * cfg.n + i];
                    count += 1;
                }
            }
            -sum / count as f64
        }
    };
    grid.values.iter_mut().for_each(|v| *v += c);
    Ok(grid)
}

/// Solve on the box of `cfg` for a recentered planar body.
pub fn solve(body: &ConvexBody, cfg: &SolverConfig) -> Result<Solution> {
    cfg.validate()?;
    let far = FarField::of(body)?;
    let p = Problem::new(cfg, &far);
    let mut v = initial_guess(body, cfg)?.values;
    let mut r = p.residual(&v).map_err(|(i, j)| {
        Error::Convexity(format!("initial guess is not convex at node ({i}, {j})"))
    })?;
    let mut history = Vec::new();
    let mut steps = Vec::new();
    loop {
        let norms = p.norms(&v, &r, cfg.tol);
        history.push(norms.ke.max(norms.boundary));
        let at_floor = norms.excess < 1.0 && norms.boundary < cfg.tol;
        // keep iterating at the rounding floor while the residual still halves
        let improving = matches!(history.as_slice(), [.., a, b] if *b < 0.5 * a);
        if at_floor && (norms.rounding_limited == 0 || !improving) {
            return Ok(finish(body, cfg, v, history, steps, &norms));
        }
        if steps.len() >= cfg.max_iter {
            return Err(Error::Solver { history });
        }
        let d = newton_direction(&p, &v, &r)?;
        let f0 = sum_sq(&r);
        let mut t = cfg.damping;
        let mut feasible = false;
        loop {
            let trial: Vec<f64> = v.iter().zip(&d).map(|(a, b)| a + t * b).collect();
            if let Ok(rt) = p.residual(&trial) {
                feasible = true;
                if sum_sq(&rt) <= (1.0 - 2.0 * ARMIJO * t) * f0 {
                    v = trial;
                    r = rt;
                    steps.push(t);
                    break;
                }
            }
            t *= 0.5;
            if t < MIN_STEP {
                if at_floor {
                    return Ok(finish(body, cfg, v, history, steps, &norms));
                }
                return Err(if feasible {
                    Error::Solver { history }
                } else {
                    Error::Convexity(format!(
                        "no step down to {MIN_STEP} keeps the discrete Hessian positive definite"
                    ))
                });
            }
        }
    }
}

fn finish(
    body: &ConvexBody,
    cfg: &SolverConfig,
    v: Vec<f64>,
    history: Vec<f64>,
    steps: Vec<f64>,
    norms: &Norms,
) -> Solution {
    let potential = GridPotential::new(cfg.half_width, cfg.n, v, Some(body.clone()));
    let minimizer = minimizer(&potential);
    Solution {
        potential,
        config: cfg.clone(),
        history,
        steps,
        ke_max: norms.ke,
        boundary_max: norms.boundary,
        rounding_limited: norms.rounding_limited,
        minimizer,
    }
}

/// Per-node `det D²_hΦ·e^Φ − 1` with the solver's stencils.
#[derive(Debug, Clone)]
pub struct KeResidual {
    /// Row-major like the grid; boundary and indefinite nodes hold NaN.
    pub values: Vec<f64>,
    pub max_abs: f64,
    pub indefinite: Vec<(usize, usize)>,
}

pub fn ke_residual(pot: &GridPotential) -> KeResidual {
    let n = pot.n;
    let h2 = pot.h() * pot.h();
    let mut values = vec![f64::NAN; n * n];
    let mut indefinite = Vec::new();
    let mut max_abs: f64 = 0.0;
    for j in 1..n - 1 {
        for i in 1..n - 1 {
            let c = pot.at(i, j);
            let xx = (pot.at(i + 1, j) - 2.0 * c + pot.at(i - 1, j)) / h2;
            let yy = (pot.at(i, j + 1) - 2.0 * c + pot.at(i, j - 1)) / h2;
            let xy = (pot.at(i + 1, j + 1) - pot.at(i + 1, j - 1) - pot.at(i - 1, j + 1)
                + pot.at(i - 1, j - 1))
                / (4.0 * h2);
            let det = xx * yy - xy * xy;
            if xx > 0.0 && det > 0.0 {
                let e = (det.ln() + c).exp_m1();
                values[j * n + i] = e;
                max_abs = max_abs.max(e.abs());
            } else {
                indefinite.push((i, j));
            }
        }
    }
    KeResidual {
        values,
        max_abs,
        indefinite,
    }
}

impl KeResidual {
    pub fn write_csv<W: std::io::Write>(&self, pot: &GridPotential, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["x", "y", "residual"])?;
        for j in 0..pot.n {
            for i in 0..pot.n {
                wr.write_record([
                    crate::io::fmt17(pot.coord(i)),
                    crate::io::fmt17(pot.coord(j)),
                    crate::io::fmt17(self.values[j * pot.n + i]),
                ])?;
            }
        }
        wr.flush()?;
        Ok(())
    }
}

/// Central-difference gradient at an interior node.
pub fn grid_gradient(pot: &GridPotential, i: usize, j: usize) -> [f64; 2] {
    let h = pot.h();
    [
        (pot.at(i + 1, j) - pot.at(i - 1, j)) / (2.0 * h),
        (pot.at(i, j + 1) - pot.at(i, j - 1)) / (2.0 * h),
    ]
}

/// Newton-refined location of the smallest node value.
pub fn minimizer(pot: &GridPotential) -> [f64; 2] {
    let n = pot.n;
    let k = (0..n * n)
        .min_by(|&a, &b| pot.values[a].total_cmp(&pot.values[b]))
        .unwrap_or(0);
    let (i, j) = ((k % n).clamp(1, n - 2), (k / n).clamp(1, n - 2));
    let g = grid_gradient(pot, i, j);
    let h2 = pot.h() * pot.h();
    let c = pot.at(i, j);
    let xx = (pot.at(i + 1, j) - 2.0 * c + pot.at(i - 1, j)) / h2;
    let yy = (pot.at(i, j + 1) - 2.0 * c + pot.at(i, j - 1)) / h2;
    let xy = (pot.at(i + 1, j + 1) - pot.at(i + 1, j - 1) - pot.at(i - 1, j + 1)
        + pot.at(i - 1, j - 1))
        / (4.0 * h2);
    let det = xx * yy - xy * xy;
    [
        pot.coord(i) - (yy * g[0] - xy * g[1]) / det,
        pot.coord(j) - (xx * g[1] - xy * g[0]) / det,
    ]
}

/// `Σ e^{−Φ} h²` over interior nodes; approximates `area(K)` for large `L`.
pub fn mass(pot: &GridPotential) -> f64 {
    let n = pot.n;
    let h2 = pot.h() * pot.h();
    let mut s = 0.0;
    for j in 1..n - 1 {
        for i in 1..n - 1 {
            s += (-pot.at(i, j)).exp() * h2;
        }
    }
    s
}

/// Smallest `s` with `p ∈ s·K` for a body containing the origin.
pub fn gauge(body: &ConvexBody, p: [f64; 2]) -> f64 {
    match body.facets2() {
        Some(f) => f
            .iter()
            .map(|(nu, off)| (nu[0] * p[0] + nu[1] * p[1]) / off)
            .fold(0.0, f64::max),
        None => match body.spec() {
            BodySpec::Disk { radius, center } => {
                let c = center.unwrap_or([0.0, 0.0]);
                // gauge of a disk around a point that is not its center
                let (a, b) = (p[0], p[1]);
                let pc = a * c[0] + b * c[1];
                let pp = a * a + b * b;
                let cc = c[0] * c[0] + c[1] * c[1];
                if pp == 0.0 {
                    0.0
                } else {
                    pp / (pc + (pc * pc + pp * (radius * radius - cc)).sqrt())
                }
            }
            _ => f64::NAN,
        },
    }
}

/// Largest gauge of the discrete gradient over interior nodes.
pub fn gradient_dilation(pot: &GridPotential, body: &ConvexBody) -> f64 {
    let n = pot.n;
    let mut worst: f64 = 0.0;
    for j in 1..n - 1 {
        for i in 1..n - 1 {
            worst = worst.max(gauge(body, grid_gradient(pot, i, j)));
        }
    }
    worst
}

/// The eight symmetries of the square grid, as maps of node indices.
fn grid_symmetries() -> [(&'static str, [[i32; 2]; 2]); 7] {
    [
        ("rot90", [[0, -1], [1, 0]]),
        ("rot180", [[-1, 0], [0, -1]]),
        ("rot270", [[0, 1], [-1, 0]]),
        ("flip_x", [[-1, 0], [0, 1]]),
        ("flip_y", [[1, 0], [0, -1]]),
        ("swap", [[0, 1], [1, 0]]),
        ("antiswap", [[0, -1], [-1, 0]]),
    ]
}

/// Grid symmetries that map the body to itself.
pub fn body_symmetries(body: &ConvexBody) -> Vec<(&'static str, [[i32; 2]; 2])> {
    let apply = |m: &[[i32; 2]; 2], v: [f64; 2]| {
        [
            m[0][0] as f64 * v[0] + m[0][1] as f64 * v[1],
            m[1][0] as f64 * v[0] + m[1][1] as f64 * v[1],
        ]
    };
    grid_symmetries()
        .into_iter()
        .filter(|(_, m)| match body.vertices2() {
            Some(vs) => vs.iter().all(|v| {
                let w = apply(m, *v);
                vs.iter()
                    .any(|u| (u[0] - w[0]).abs() + (u[1] - w[1]).abs() < 1e-12)
            }),
            None => match body.spec() {
                BodySpec::Disk { center, .. } => {
                    let c = center.unwrap_or([0.0, 0.0]);
                    let w = apply(m, c);
                    (w[0] - c[0]).abs() + (w[1] - c[1]).abs() < 1e-12
                }
                _ => false,
            },
        })
        .collect()
}

/// Largest `|Φ(σx) − Φ(x)|` over the body's grid symmetries `σ`.
pub fn symmetry_defect(pot: &GridPotential, body: &ConvexBody) -> Vec<(String, f64)> {
    let n = pot.n as i64;
    let c = (n - 1) / 2;
    body_symmetries(body)
        .into_iter()
        .map(|(name, m)| {
            let mut worst: f64 = 0.0;
            for j in 0..n {
                for i in 0..n {
                    let (p, q) = (i - c, j - c);
                    let a = m[0][0] as i64 * p + m[0][1] as i64 * q + c;
                    let b = m[1][0] as i64 * p + m[1][1] as i64 * q + c;
                    worst = worst.max(
                        (pot.at(a as usize, b as usize) - pot.at(i as usize, j as usize)).abs(),
                    );
                }
            }
            (name.to_string(), worst)
        })
        .collect()
}

/// Statistics of `λ` over analysis nodes.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct LambdaStats {
    pub min: f64,
    pub max: f64,
    pub mean: f64,
    pub count: usize,
}

/// `λ` at the analysis nodes within `frac·L` of the origin.
pub fn lambda_stats(pot: &GridPotential, frac: f64, stride: usize) -> LambdaStats {
    let mut vals = Vec::new();
    for (i, j) in pot.analysis_nodes(frac, stride) {
        if let Ok(g) = pot
            .jet_node(i, j, 3)
            .map_err(Error::from)
            .and_then(|jet| point_geometry(&jet))
        {
            vals.push(g.lambda);
        }
    }
    let count = vals.len();
    LambdaStats {
        min: vals.iter().copied().fold(f64::INFINITY, f64::min),
        max: vals.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        mean: vals.iter().sum::<f64>() / count.max(1) as f64,
        count,
    }
}

/// One row of a refinement study.
#[derive(Debug, Clone, Serialize)]
pub struct StudyRow {
    pub n: usize,
    pub half_width: f64,
    pub h: f64,
    pub iterations: usize,
    pub ke_max: f64,
    /// Max `|Φ − oracle|` on the window, when an oracle is given.
    pub error: Option<f64>,
    pub lambda: LambdaStats,
    pub minimizer: [f64; 2],
}

/// Solve once per config and tabulate. `window` is the half-width of the
/// comparison box; `oracle` gives the exact potential if known.
pub fn convergence_study(
    body: &ConvexBody,
    configs: &[SolverConfig],
    window: f64,
    oracle: Option<&dyn Fn(f64, f64) -> f64>,
) -> Result<Vec<(StudyRow, Solution)>> {
    configs
        .iter()
        .map(|cfg| {
            let sol = solve(body, cfg)?;
            let pot = &sol.potential;
            let error = oracle.map(|f| window_error(pot, window, f));
            let frac = (window / cfg.half_width).min(1.0);
            let row = StudyRow {
                n: cfg.n,
                half_width: cfg.half_width,
                h: cfg.h(),
                iterations: sol.steps.len(),
                ke_max: sol.ke_max,
                error,
                lambda: lambda_stats(pot, frac, ((cfg.n - 1) / 32).max(1)),
                minimizer: sol.minimizer,
            };
            Ok((row, sol))
        })
        .collect()
}

/// Max `|Φ − f|` over nodes with `|x|, |y| ≤ window`.
pub fn window_error(pot: &GridPotential, window: f64, f: &dyn Fn(f64, f64) -> f64) -> f64 {
    let lim = window + 1e-9 * pot.h();
    let mut worst: f64 = 0.0;
    for j in 0..pot.n {
        for i in 0..pot.n {
            let (x, y) = (pot.coord(i), pot.coord(j));
            if x.abs() <= lim && y.abs() <= lim {
                worst = worst.max((pot.at(i, j) - f(x, y)).abs());
            }
        }
    }
    worst
}

/// Write a study table as CSV.
pub fn write_study_csv<W: std::io::Write>(rows: &[StudyRow], w: W) -> Result<()> {
    use crate::io::fmt17;
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record([
        "n",
        "half_width",
        "h",
        "iterations",
        "ke_max",
        "error",
        "lambda_min",
        "lambda_max",
        "lambda_mean",
        "x_star",
        "y_star",
    ])?;
    for r in rows {
        wr.write_record([
            r.n.to_string(),
            fmt17(r.half_width),
            fmt17(r.h),
            r.iterations.to_string(),
            fmt17(r.ke_max),
            r.error.map(fmt17).unwrap_or_default(),
            fmt17(r.lambda.min),
            fmt17(r.lambda.max),
            fmt17(r.lambda.mean),
            fmt17(r.minimizer[0]),
            fmt17(r.minimizer[1]),
        ])?;
    }
    wr.flush()?;
    Ok(())
}
