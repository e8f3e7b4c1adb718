//! Geodesics, geodesic-ball areas and ball-example diagnostics for the
//! Hessian metric `h = Φ_ij dx^i dx^j` in the plane.
//!
//! Geodesics solve `γ″^k + Γ^k_ij γ′^i γ′^j = 0` with `Γ^k_ij = ½Φ^{kl}Φ_lij`.
//! Ball areas come from a fan of geodesics: the fan endpoints bound a region
//! star-shaped about the center, and `∫√det D²Φ` over it is computed in
//! Euclidean polar coordinates.

use std::cell::Cell;
use std::f64::consts::{PI, TAU};
use std::io::Write;

use ode_solvers::{Dop853, OutputType, System, Vector4};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::point_geometry;
use crate::io::fmt17;
use crate::potentials::{GridPotential, Potential, RadialProfile, GRID_MARGIN};

const ODE_TOL: f64 = 1e-12;
/// Gauss-Legendre nodes and weights on `[0, 1]`, 16 points.
const GL_POINTS: usize = 16;

/// Metric `Φ_ij` and third derivatives `Φ_ijk` at one point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricAt {
    /// `[Φ_xx, Φ_xy, Φ_yy]`
    pub g: [f64; 3],
    /// `[Φ_xxx, Φ_xxy, Φ_xyy, Φ_yyy]`
    pub t: [f64; 4],
}

impl MetricAt {
    pub fn det(&self) -> f64 {
        self.g[0] * self.g[2] - self.g[1] * self.g[1]
    }

    pub fn norm2(&self, v: [f64; 2]) -> f64 {
        self.g[0] * v[0] * v[0] + 2.0 * self.g[1] * v[0] * v[1] + self.g[2] * v[1] * v[1]
    }

    /// `−Γ^k_ij v^i v^j`.
    pub fn acceleration(&self, v: [f64; 2]) -> [f64; 2] {
        let [a, b, c, d] = self.t;
        let (x, y) = (v[0], v[1]);
        // Φ_lij v^i v^j for l = x, y
        let tx = a * x * x + 2.0 * b * x * y + c * y * y;
        let ty = b * x * x + 2.0 * c * x * y + d * y * y;
        let det = self.det();
        let ux = (self.g[2] * tx - self.g[1] * ty) / det;
        let uy = (self.g[0] * ty - self.g[1] * tx) / det;
        [-0.5 * ux, -0.5 * uy]
    }
}

/// A planar Hessian metric with third derivatives, defined on some region.
pub trait MetricField: Sync {
    /// `None` outside the supported region or where the metric degenerates.
    fn at(&self, x: [f64; 2]) -> Option<MetricAt>;
}

/// Metric from the jets of a potential.
pub struct JetMetric<'a>(pub &'a dyn Potential);

impl MetricField for JetMetric<'_> {
    fn at(&self, x: [f64; 2]) -> Option<MetricAt> {
        let j = self.0.jet(&x, 3).ok()?;
        Some(MetricAt {
            g: [j.d(&[0, 0]), j.d(&[0, 1]), j.d(&[1, 1])],
            t: [
                j.d(&[0, 0, 0]),
                j.d(&[0, 0, 1]),
                j.d(&[0, 1, 1]),
                j.d(&[1, 1, 1]),
            ],
        })
    }
}

/// Metric of the planar radial potential `Φ(x) = φ(|x|)` from `φ′, φ″, φ‴`.
pub struct RadialMetric<'a>(pub &'a RadialProfile);

impl MetricField for RadialMetric<'_> {
    fn at(&self, x: [f64; 2]) -> Option<MetricAt> {
        let p = self.0;
        let r = x[0].hypot(x[1]);
        if p.n() != 2 || r < p.config.r_min {
            return None;
        }
        let [_, d1, d2, d3] = p.derivatives3(r)?;
        // Φ_ij = a δ_ij + b x_i x_j
        let a = d1 / r;
        let b = (d2 - a) / (r * r);
        let da = b * r;
        let db = (d3 - d2 / r + d1 / (r * r)) / (r * r) - 2.0 * (d2 - a) / r.powi(3);
        let u = [x[0] / r, x[1] / r];
        let t = |i: usize, j: usize, k: usize| {
            let dij = if i == j { 1.0 } else { 0.0 };
            let dik = if i == k { 1.0 } else { 0.0 };
            let djk = if j == k { 1.0 } else { 0.0 };
            da * u[k] * dij + db * u[k] * x[i] * x[j] + b * (dik * x[j] + djk * x[i])
        };
        let m = MetricAt {
            g: [a + b * x[0] * x[0], b * x[0] * x[1], a + b * x[1] * x[1]],
            t: [t(0, 0, 0), t(0, 0, 1), t(0, 1, 1), t(1, 1, 1)],
        };
        (m.g[0] > 0.0 && m.det() > 0.0).then_some(m)
    }
}

/// Metric of a grid potential: finite-difference derivatives at the nodes,
/// interpolated by tensor-product Catmull-Rom cubics.
pub struct GridMetric {
    half_width: f64,
    n: usize,
    h: f64,
    lo: usize,
    hi: usize,
    fields: Vec<[f64; 7]>,
}

impl GridMetric {
    /// `step` is the stencil spacing in nodes, 1 or 2.
    pub fn new(pot: &GridPotential, step: usize) -> GridMetric {
        let n = pot.n;
        let (lo, hi) = (GRID_MARGIN, n - 1 - GRID_MARGIN);
        let fields = (0..n * n)
            .into_par_iter()
            .map(|k| {
                let (i, j) = (k % n, k / n);
                if i < lo || i > hi || j < lo || j > hi {
                    return [f64::NAN; 7];
                }
                let d = |a, b| pot.fd_derivative(i, j, a, b, step);
                [
                    d(2, 0),
                    d(1, 1),
                    d(0, 2),
                    d(3, 0),
                    d(2, 1),
                    d(1, 2),
                    d(0, 3),
                ]
            })
            .collect();
        GridMetric {
            half_width: pot.half_width,
            n,
            h: pot.h(),
            lo,
            hi,
            fields,
        }
    }

    /// Half-width of the square on which the interpolant is defined.
    pub fn supported_half_width(&self) -> f64 {
        self.half_width - (self.lo + 1) as f64 * self.h
    }
}

fn catmull_rom(t: f64) -> [f64; 4] {
    let (t2, t3) = (t * t, t * t * t);
    [
        0.5 * (-t3 + 2.0 * t2 - t),
        0.5 * (3.0 * t3 - 5.0 * t2 + 2.0),
        0.5 * (-3.0 * t3 + 4.0 * t2 + t),
        0.5 * (t3 - t2),
    ]
}

impl MetricField for GridMetric {
    fn at(&self, x: [f64; 2]) -> Option<MetricAt> {
        let s = (x[0] + self.half_width) / self.h;
        let t = (x[1] + self.half_width) / self.h;
        if !(s.is_finite() && t.is_finite()) {
            return None;
        }
        let (i, j) = (s.floor(), t.floor());
        let (lo, hi) = ((self.lo + 1) as f64, (self.hi - 2) as f64);
        if i < lo || i > hi || j < lo || j > hi {
            return None;
        }
        let (i, j) = (i as usize, j as usize);
        let (wx, wy) = (catmull_rom(s - i as f64), catmull_rom(t - j as f64));
        let mut f = [0.0; 7];
        for (q, wq) in wy.iter().enumerate() {
            for (p, wp) in wx.iter().enumerate() {
                let node = &self.fields[(j + q - 1) * self.n + i + p - 1];
                let w = wp * wq;
                for (acc, v) in f.iter_mut().zip(node) {
                    *acc += w * v;
                }
            }
        }
        let m = MetricAt {
            g: [f[0], f[1], f[2]],
            t: [f[3], f[4], f[5], f[6]],
        };
        (m.g[0] > 0.0 && m.det() > 0.0).then_some(m)
    }
}

/// Velocity of unit `h`-length in the Euclidean direction `dir`.
pub fn unit_vector(field: &dyn MetricField, x: [f64; 2], dir: [f64; 2]) -> Result<[f64; 2]> {
    let m = field.at(x).ok_or(Error::BallEscapes)?;
    let s = m.norm2(dir).sqrt();
    if !(s > 0.0) {
        return Err(Error::validation("zero direction"));
    }
    Ok([dir[0] / s, dir[1] / s])
}

/// Sampled unit-speed geodesic.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GeodesicPath {
    pub params: Vec<f64>,
    pub positions: Vec<[f64; 2]>,
    pub velocities: Vec<[f64; 2]>,
    /// `|γ′|_h` at each sample.
    pub speeds: Vec<f64>,
    /// The path left the supported region before reaching the requested length.
    pub truncated: bool,
}

impl GeodesicPath {
    pub fn end(&self) -> [f64; 2] {
        *self.positions.last().expect("path has samples")
    }

    pub fn speed_drift(&self) -> f64 {
        let s0 = self.speeds[0];
        self.speeds
            .iter()
            .map(|s| (s - s0).abs())
            .fold(0.0, f64::max)
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["s", "x", "y", "vx", "vy", "speed"])?;
        for k in 0..self.params.len() {
            let (p, v) = (self.positions[k], self.velocities[k]);
            wr.write_record([self.params[k], p[0], p[1], v[0], v[1], self.speeds[k]].map(fmt17))?;
        }
        wr.flush()?;
        Ok(())
    }
}

struct GeodesicOde<'a> {
    field: &'a dyn MetricField,
    escaped: &'a Cell<bool>,
}

impl System<f64, Vector4<f64>> for GeodesicOde<'_> {
    fn system(&self, _s: f64, y: &Vector4<f64>, dy: &mut Vector4<f64>) {
        match self.field.at([y[0], y[1]]) {
            Some(m) => {
                let a = m.acceleration([y[2], y[3]]);
                *dy = Vector4::new(y[2], y[3], a[0], a[1]);
            }
            None => {
                self.escaped.set(true);
                *dy = Vector4::zeros();
            }
        }
    }

    fn solout(&mut self, _s: f64, _y: &Vector4<f64>, _dy: &Vector4<f64>) -> bool {
        self.escaped.get()
    }
}

/// Unit-speed geodesic from `x0` with initial velocity `v0`, sampled at
/// `samples + 1` equally spaced parameters.
pub fn geodesic_sampled(
    field: &dyn MetricField,
    x0: [f64; 2],
    v0: [f64; 2],
    length: f64,
    samples: usize,
) -> Result<GeodesicPath> {
    if !(length > 0.0) || samples == 0 {
        return Err(Error::validation(
            "geodesic needs a positive length and at least one sample",
        ));
    }
    let m0 = field.at(x0).ok_or(Error::BallEscapes)?;
    let speed0 = m0.norm2(v0).sqrt();
    if (speed0 - 1.0).abs() > 1e-9 {
        return Err(Error::validation(format!(
            "initial velocity has h-length {speed0}, expected 1"
        )));
    }
    let mut path = GeodesicPath {
        params: vec![0.0],
        positions: vec![x0],
        velocities: vec![v0],
        speeds: vec![speed0],
        truncated: false,
    };
    // one integration per sample interval: the dense output of the crate's
    // Dop853 is inaccurate, while its step endpoints are not
    let ds = length / samples as f64;
    let mut y = Vector4::new(x0[0], x0[1], v0[0], v0[1]);
    for k in 0..samples {
        let (s0, s1) = (
            k as f64 * ds,
            if k + 1 == samples {
                length
            } else {
                (k + 1) as f64 * ds
            },
        );
        let escaped = Cell::new(false);
        let ode = GeodesicOde {
            field,
            escaped: &escaped,
        };
        let mut stepper = Dop853::new(ode, s0, s1, s1 - s0, y, ODE_TOL, ODE_TOL);
        stepper.set_output(OutputType::Sparse);
        let failed = stepper.integrate().is_err();
        let end = stepper.x_out().last().copied();
        let yn = stepper.y_out().last().copied();
        drop(stepper);
        let (Some(se), Some(yn)) = (end, yn) else {
            path.truncated = true;
            break;
        };
        let x = [yn[0], yn[1]];
        let m = field.at(x);
        if failed || escaped.get() || (se - s1).abs() > 1e-12 * length.max(1.0) || m.is_none() {
            path.truncated = true;
            break;
        }
        let v = [yn[2], yn[3]];
        path.params.push(s1);
        path.positions.push(x);
        path.velocities.push(v);
        path.speeds.push(m.expect("checked above").norm2(v).sqrt());
        y = yn;
    }
    Ok(path)
}

/// Unit-speed geodesic sampled at 100 steps.
pub fn geodesic(
    field: &dyn MetricField,
    x0: [f64; 2],
    v0: [f64; 2],
    length: f64,
) -> Result<GeodesicPath> {
    geodesic_sampled(field, x0, v0, length, 100)
}

fn gauss_legendre() -> &'static [(f64, f64)] {
    use std::sync::OnceLock;
    static GL: OnceLock<Vec<(f64, f64)>> = OnceLock::new();
    GL.get_or_init(|| {
        // Newton on P_n for each root, mapped to [0, 1]
        let n = GL_POINTS;
        (1..=n)
            .map(|k| {
                let mut z = (PI * (k as f64 - 0.25) / (n as f64 + 0.5)).cos();
                let mut dp = 0.0;
                for _ in 0..100 {
                    let (mut p0, mut p1) = (1.0, z);
                    for m in 2..=n {
                        let p2 = ((2 * m - 1) as f64 * z * p1 - (m - 1) as f64 * p0) / m as f64;
                        p0 = p1;
                        p1 = p2;
                    }
                    dp = n as f64 * (z * p1 - p0) / (z * z - 1.0);
                    let dz = p1 / dp;
                    z -= dz;
                    if dz.abs() < 1e-16 {
                        break;
                    }
                }
                let w = 2.0 / ((1.0 - z * z) * dp * dp);
                (0.5 * (1.0 - z), 0.5 * w)
            })
            .collect()
    })
}

/// Geodesic ball area with its fan.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BallArea {
    pub center: [f64; 2],
    pub radius: f64,
    pub rays: usize,
    pub area: f64,
    /// `|area − area from every other ray|`.
    pub quadrature_error: f64,
    /// Euclidean polar angle of each fan endpoint about the center increases
    /// strictly with the initial angle.
    pub embedded: bool,
    pub endpoints: Vec<[f64; 2]>,
}

fn polar_area(field: &dyn MetricField, x: [f64; 2], ends: &[[f64; 2]]) -> Result<(f64, bool)> {
    let m = ends.len();
    let gl = gauss_legendre();
    // unwrapped Euclidean angles and radii of the endpoints
    let mut psi: Vec<f64> = Vec::with_capacity(m);
    let mut rho = Vec::with_capacity(m);
    for e in ends {
        let (dx, dy) = (e[0] - x[0], e[1] - x[1]);
        rho.push(dx.hypot(dy));
        let a = dy.atan2(dx);
        let a = match psi.last() {
            None => a,
            Some(&prev) => prev + (a - prev + PI).rem_euclid(TAU) - PI,
        };
        psi.push(a);
    }
    let winding =
        (psi[m - 1] - psi[0] + (psi[0] + TAU - psi[m - 1] + PI).rem_euclid(TAU) - PI) / TAU;
    let mut embedded = (winding - 1.0).abs() < 1e-6;
    let dtheta = TAU / m as f64;
    let per: Vec<f64> = (0..m)
        .map(|k| psi[k] - psi[0] - k as f64 * dtheta)
        .collect();
    let dper = spectral_derivative(&per);
    let mut area = 0.0;
    for k in 0..m {
        let dpsi = 1.0 + dper[k];
        if dpsi <= 0.0 {
            embedded = false;
        }
        let (c, s) = (psi[k].cos(), psi[k].sin());
        let mut radial = 0.0;
        for &(u, w) in gl {
            let t = u * rho[k];
            let g = field
                .at([x[0] + t * c, x[1] + t * s])
                .ok_or(Error::BallEscapes)?;
            radial += w * g.det().sqrt() * t;
        }
        area += radial * rho[k] * dpsi * dtheta;
    }
    Ok((area, embedded))
}

/// Derivative of a periodic sequence sampled on `[0, 2π)`, by DFT.
fn spectral_derivative(f: &[f64]) -> Vec<f64> {
    let m = f.len();
    let w = TAU / m as f64;
    let half = m / 2;
    // coefficients c_q for |q| < m/2; the Nyquist mode has zero derivative
    let coeffs: Vec<(f64, f64)> = (0..half)
        .map(|q| {
            let (mut re, mut im) = (0.0, 0.0);
            for (k, v) in f.iter().enumerate() {
                let a = w * ((q * k) % m) as f64;
                re += v * a.cos();
                im -= v * a.sin();
            }
            (re / m as f64, im / m as f64)
        })
        .collect();
    (0..m)
        .map(|k| {
            let mut d = 0.0;
            for (q, &(re, im)) in coeffs.iter().enumerate().skip(1) {
                let a = w * ((q * k) % m) as f64;
                // 2 Re(i q c_q e^{iqθ}) pairs the mode with its conjugate
                d += -2.0 * q as f64 * (re * a.sin() + im * a.cos());
            }
            d
        })
        .collect()
}

/// Area of the geodesic ball `B(x, r)` from a fan of `rays` geodesics.
pub fn ball_area_with(
    field: &dyn MetricField,
    x: [f64; 2],
    r: f64,
    rays: usize,
) -> Result<BallArea> {
    if !(r > 0.0) || rays < 16 || !rays.is_multiple_of(2) {
        return Err(Error::validation(
            "ball area needs r > 0 and an even ray count of at least 16",
        ));
    }
    let m = field.at(x).ok_or(Error::BallEscapes)?;
    // h-orthonormal frame: e1 ∝ ∂x, e2 ⊥_h e1
    let e1 = [1.0 / m.g[0].sqrt(), 0.0];
    let e2 = {
        let s = (m.g[0] / m.det()).sqrt();
        [-m.g[1] / m.g[0] * s, s]
    };
    let ends: Vec<[f64; 2]> = (0..rays)
        .into_par_iter()
        .map(|k| {
            let th = TAU * k as f64 / rays as f64;
            let v = [
                th.cos() * e1[0] + th.sin() * e2[0],
                th.cos() * e1[1] + th.sin() * e2[1],
            ];
            let p = geodesic_sampled(field, x, v, r, 1)?;
            if p.truncated {
                return Err(Error::BallEscapes);
            }
            Ok(p.end())
        })
        .collect::<Result<_>>()?;
    let (area, embedded) = polar_area(field, x, &ends)?;
    let half: Vec<[f64; 2]> = ends.iter().step_by(2).copied().collect();
    let (coarse, _) = polar_area(field, x, &half)?;
    Ok(BallArea {
        center: x,
        radius: r,
        rays,
        area,
        quadrature_error: (area - coarse).abs(),
        embedded,
        endpoints: ends,
    })
}

/// Area of the geodesic ball `B(x, r)` from a fan of 360 geodesics.
pub fn ball_area(field: &dyn MetricField, x: [f64; 2], r: f64) -> Result<BallArea> {
    ball_area_with(field, x, r, 360)
}

/// Area of the geodesic ball of radius `r` on the sphere of radius `√12`.
pub fn cap_area(r: f64) -> f64 {
    24.0 * PI * (1.0 - (r / 12f64.sqrt()).cos())
}

/// `(12/πr⁴)(πr² − area)`, which tends to the sectional curvature as `r → 0`.
pub fn area_defect(r: f64, area: f64) -> f64 {
    12.0 / (PI * r.powi(4)) * (PI * r * r - area)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AreaRow {
    pub radius: f64,
    pub area: f64,
    pub quadrature_error: f64,
    pub defect: f64,
    pub cap_area: f64,
    /// `area − cap_area`
    pub cap_margin: f64,
    pub embedded: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CurvatureEstimate {
    pub center: [f64; 2],
    pub rows: Vec<AreaRow>,
    /// Limit of the defect at `r = 0`, extrapolated as a polynomial in `r²`.
    pub estimate: f64,
    /// Difference to the extrapolation that drops the largest radius.
    pub extrapolation_error: f64,
}

impl CurvatureEstimate {
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record([
            "radius",
            "area",
            "quadrature_error",
            "defect",
            "cap_area",
            "cap_margin",
            "embedded",
        ])?;
        for r in &self.rows {
            let mut rec: Vec<String> = [
                r.radius,
                r.area,
                r.quadrature_error,
                r.defect,
                r.cap_area,
                r.cap_margin,
            ]
            .map(fmt17)
            .to_vec();
            rec.push(r.embedded.to_string());
            wr.write_record(rec)?;
        }
        wr.flush()?;
        Ok(())
    }
}

/// Neville extrapolation of `(z_k, f_k)` to `z = 0`.
fn neville_at_zero(z: &[f64], f: &[f64]) -> f64 {
    let mut p = f.to_vec();
    let n = p.len();
    for m in 1..n {
        for i in 0..n - m {
            p[i] = (z[i + m] * p[i] - z[i] * p[i + 1]) / (z[i + m] - z[i]);
        }
    }
    p[0]
}

/// Sectional curvature at `x` from the area defects of geodesic balls.
pub fn curvature_from_areas(
    field: &dyn MetricField,
    x: [f64; 2],
    radii: &[f64],
) -> Result<CurvatureEstimate> {
    if radii.len() < 2 {
        return Err(Error::validation(
            "curvature from areas needs at least two radii",
        ));
    }
    let mut rows = Vec::with_capacity(radii.len());
    for &r in radii {
        let b = ball_area(field, x, r)?;
        let cap = cap_area(r);
        rows.push(AreaRow {
            radius: r,
            area: b.area,
            quadrature_error: b.quadrature_error,
            defect: area_defect(r, b.area),
            cap_area: cap,
            cap_margin: b.area - cap,
            embedded: b.embedded,
        });
    }
    let mut idx: Vec<usize> = (0..rows.len()).collect();
    idx.sort_by(|&a, &b| rows[a].radius.total_cmp(&rows[b].radius));
    let z: Vec<f64> = idx.iter().map(|&k| rows[k].radius.powi(2)).collect();
    let f: Vec<f64> = idx.iter().map(|&k| rows[k].defect).collect();
    let estimate = neville_at_zero(&z, &f);
    let m = z.len();
    let reduced = neville_at_zero(&z[..m - 1], &f[..m - 1]);
    Ok(CurvatureEstimate {
        center: x,
        rows,
        estimate,
        extrapolation_error: (estimate - reduced).abs(),
    })
}

/// Comparison of a geodesic ball with the cap of the sphere of radius `√12`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CapComparison {
    pub center: [f64; 2],
    pub radius: f64,
    pub area: f64,
    pub cap_area: f64,
    /// `area − cap_area`
    pub margin: f64,
    pub quadrature_error: f64,
    /// `|area − area on the reference metric|`, zero without a reference.
    pub metric_error: f64,
    pub embedded: bool,
}

impl CapComparison {
    pub fn tolerance(&self) -> f64 {
        self.quadrature_error + self.metric_error + 1e-12 * self.cap_area
    }

    pub fn pass(&self) -> bool {
        self.margin >= -self.tolerance()
    }
}

/// Ball area against the spherical cap. `reference` is a second
/// discretization of the same metric, e.g. the coarser-stencil grid metric,
/// whose area difference is counted as error.
pub fn cap_comparison(
    field: &dyn MetricField,
    reference: Option<&dyn MetricField>,
    x: [f64; 2],
    r: f64,
) -> Result<CapComparison> {
    let b = ball_area(field, x, r)?;
    let metric_error = match reference {
        Some(f) => (ball_area(f, x, r)?.area - b.area).abs(),
        None => 0.0,
    };
    let cap = cap_area(r);
    Ok(CapComparison {
        center: x,
        radius: r,
        area: b.area,
        cap_area: cap,
        margin: b.area - cap,
        quadrature_error: b.quadrature_error,
        metric_error,
        embedded: b.embedded,
    })
}

/// Sectional curvature of the ball metric at one radius.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CurvatureRow {
    pub r: f64,
    /// `−1/(2√(EG)) d/dr[G′/√(EG)]` with `E = φ″`, `G = rφ′`.
    pub h_direct: f64,
    /// Closed expansion using `φ′φ″ = re^{−φ}`.
    pub h_expanded: f64,
    /// Expansion with `+φ′/(2r³)` in place of `+e^φφ′/(2r³)`.
    pub h_misprint: f64,
    /// `λ/4` from the jets of `Φ` at `(r, 0)`.
    pub lambda_quarter: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SphereRow {
    /// Euclidean radius.
    pub r: f64,
    /// Riemannian distance to the origin, `∫₀^r √φ″`.
    pub distance: f64,
    /// `κ_n (rφ′(r))^{(n−1)/2}`
    pub sphere_size: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BallDiagnostics {
    pub n: usize,
    pub r_max: f64,
    /// `∫₀^{r_max} √φ″` plus the tail bound.
    pub diameter_radius: f64,
    pub quadrature_error: f64,
    /// Bound on `∫_{r_max}^∞ √φ″`, `(4/φ′(r_max)) e^{−φ(r_max)/4}`.
    pub tail_bound: f64,
    /// `e^{−φ/2}(r/φ′)^{(n−1)/2} ≤ e^{−φ/4}` holds at `r_max`, which the tail bound needs.
    pub tail_dominated: bool,
    pub spheres: Vec<SphereRow>,
    pub spheres_increasing: bool,
    pub curvature: Vec<CurvatureRow>,
    /// Largest `|h_direct − λ/4|` for `r ∈ [0.5, 5]`.
    pub max_curvature_mismatch: f64,
    /// Largest `|h_expanded − h_direct|` over all rows.
    pub max_expansion_mismatch: f64,
    /// Rows with `r ≥ 5` have decreasing `h_direct`.
    pub large_r_decreasing: bool,
    /// `h_direct < −1` at the largest radius.
    pub large_r_below_minus_one: bool,
}

fn kappa(n: usize) -> f64 {
    // n π^{n/2} / Γ(1 + n/2) by the recursion κ_{n+2} = 2π κ_n / n
    let (mut k, mut m) = if n.is_multiple_of(2) {
        (TAU, 2)
    } else {
        (2.0, 1)
    };
    while m < n {
        k *= TAU / m as f64;
        m += 2;
    }
    k
}

fn sqrt_phi2(p: &RadialProfile, r: f64) -> f64 {
    p.eval(r)[2].max(0.0).sqrt()
}

/// `∫_a^b √φ″` by composite Gauss-Legendre on `pieces` panels.
fn integrate_sqrt_phi2(p: &RadialProfile, a: f64, b: f64, pieces: usize) -> f64 {
    let gl = gauss_legendre();
    let w = (b - a) / pieces as f64;
    (0..pieces)
        .map(|k| {
            let lo = a + k as f64 * w;
            gl.iter()
                .map(|&(u, wt)| wt * sqrt_phi2(p, lo + u * w))
                .sum::<f64>()
                * w
        })
        .sum()
}

fn ball_curvature(p: &RadialProfile, r: f64) -> Result<CurvatureRow> {
    let c = p.taylor_coeffs(r, 3)?;
    let (phi, d1, d2, d3) = (c[0], c[1], 2.0 * c[2], 6.0 * c[3]);
    let eg = r * d1 * d2;
    // d/dr of (φ′ + rφ″)/√(EG)
    let num = d1 + r * d2;
    let dnum = 2.0 * d2 + r * d3;
    let deg = d1 * d2 + r * d2 * d2 + r * d1 * d3;
    let dq = dnum / eg.sqrt() - 0.5 * num * deg / eg.powf(1.5);
    let h_direct = -dq / (2.0 * eg.sqrt());
    let common = -d1 * d1 / (4.0 * r * r) * phi.exp() + 0.25 - 1.0 / (r * d1)
        + r / (2.0 * d1.powi(3)) * (-phi).exp();
    let h_expanded = common + phi.exp() * d1 / (2.0 * r.powi(3));
    let h_misprint = common + d1 / (2.0 * r.powi(3));
    let jet = p.jet(&[r, 0.0], 4)?;
    let lambda_quarter = point_geometry(&jet)?.lambda / 4.0;
    Ok(CurvatureRow {
        r,
        h_direct,
        h_expanded,
        h_misprint,
        lambda_quarter,
    })
}

/// Diameter, sphere sizes and curvature of the planar ball metric.
pub fn ball_diagnostics(p: &RadialProfile) -> Result<BallDiagnostics> {
    let n = p.n();
    let r_max = p.r_max();
    // panels of width ≤ 0.05 resolve the e^{−φ/2} decay easily
    let pieces = (r_max / 0.05).ceil() as usize;
    let body = integrate_sqrt_phi2(p, 0.0, r_max, pieces);
    let coarse = integrate_sqrt_phi2(p, 0.0, r_max, pieces.div_ceil(2));
    let [phi_max, dphi_max, _] = p.eval(r_max);
    let tail_bound = 4.0 / dphi_max * (-phi_max / 4.0).exp();
    let integrand = (-phi_max / 2.0).exp() * (r_max / dphi_max).powf((n as f64 - 1.0) / 2.0);
    let tail_dominated = integrand <= (-phi_max / 4.0).exp();

    let kn = kappa(n);
    let mut spheres = Vec::new();
    let mut dist = 0.0;
    let mut prev = 0.0;
    let mut r = 0.25;
    while r <= r_max + 1e-12 {
        dist += integrate_sqrt_phi2(p, prev, r, 8);
        let d1 = p.eval(r)[1];
        spheres.push(SphereRow {
            r,
            distance: dist,
            sphere_size: kn * (r * d1).powf((n as f64 - 1.0) / 2.0),
        });
        prev = r;
        r += 0.25;
    }
    let spheres_increasing = spheres
        .windows(2)
        .all(|w| w[1].sphere_size > w[0].sphere_size);

    let mut curvature = Vec::new();
    if n == 2 {
        let mut r = 0.5;
        while r <= 20.0 + 1e-12 {
            curvature.push(ball_curvature(p, r)?);
            r += 0.25;
        }
    }
    let max_curvature_mismatch = curvature
        .iter()
        .filter(|c| c.r <= 5.0 + 1e-12)
        .map(|c| (c.h_direct - c.lambda_quarter).abs())
        .fold(0.0, f64::max);
    let max_expansion_mismatch = curvature
        .iter()
        .map(|c| ((c.h_expanded - c.h_direct) / c.h_direct.abs().max(1.0)).abs())
        .fold(0.0, f64::max);
    let tail: Vec<&CurvatureRow> = curvature.iter().filter(|c| c.r >= 5.0).collect();
    let large_r_decreasing =
        !tail.is_empty() && tail.windows(2).all(|w| w[1].h_direct < w[0].h_direct);
    let large_r_below_minus_one = curvature.last().is_some_and(|c| c.h_direct < -1.0);

    Ok(BallDiagnostics {
        n,
        r_max,
        diameter_radius: body + tail_bound,
        quadrature_error: (body - coarse).abs(),
        tail_bound,
        tail_dominated,
        spheres,
        spheres_increasing,
        curvature,
        max_curvature_mismatch,
        max_expansion_mismatch,
        large_r_decreasing,
        large_r_below_minus_one,
    })
}

impl BallDiagnostics {
    pub fn write_json<W: Write>(&self, w: W) -> Result<()> {
        serde_json::to_writer_pretty(w, self)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::potentials::{ball_profile, BallProfileConfig, CubePotential, SimplexPotential};
    use proptest::prelude::*;
    use std::sync::OnceLock;

    fn profile() -> &'static RadialProfile {
        static P: OnceLock<RadialProfile> = OnceLock::new();
        P.get_or_init(|| ball_profile(BallProfileConfig::default()).unwrap())
    }

    #[test]
    fn gauss_legendre_integrates_polynomials() {
        let s: f64 = gauss_legendre().iter().map(|&(u, w)| w * u.powi(29)).sum();
        assert!((s - 1.0 / 30.0).abs() < 1e-15);
    }

    #[test]
    fn christoffel_acceleration_matches_formula() {
        // Γ^k_ij = ½Φ^{kl}Φ_lij with a diagonal metric
        let m = MetricAt {
            g: [2.0, 0.0, 4.0],
            t: [1.0, 2.0, 3.0, 4.0],
        };
        let a = m.acceleration([1.0, 0.0]);
        assert!((a[0] + 0.5 * 1.0 / 2.0).abs() < 1e-15);
        assert!((a[1] + 0.5 * 2.0 / 4.0).abs() < 1e-15);
    }

    #[test]
    fn cube_axis_geodesic_stays_on_axis() {
        let c = CubePotential::new(2);
        let f = JetMetric(&c);
        let v = unit_vector(&f, [0.0, 0.0], [1.0, 0.0]).unwrap();
        let p = geodesic(&f, [0.0, 0.0], v, 2.0).unwrap();
        assert!(!p.truncated);
        assert!(p.positions.iter().all(|x| x[1].abs() < 1e-14));
        assert!(p.speed_drift() < 1e-8);
    }

    #[test]
    fn radial_metric_matches_jets() {
        let (fast, slow) = (RadialMetric(profile()), JetMetric(profile()));
        for x in [[0.3, 0.4], [-1.2, 2.0], [4.0, -0.5], [0.02, 0.01]] {
            let (a, b) = (fast.at(x).unwrap(), slow.at(x).unwrap());
            for (u, v) in a.g.iter().chain(&a.t).zip(b.g.iter().chain(&b.t)) {
                assert!((u - v).abs() < 1e-9 * (1.0 + v.abs()), "{x:?}: {u} vs {v}");
            }
        }
    }

    #[test]
    fn ball_radial_ray_is_a_geodesic() {
        let f = RadialMetric(profile());
        let x0 = [0.3, 0.4];
        let v = unit_vector(&f, x0, [0.6, 0.8]).unwrap();
        let p = geodesic(&f, x0, v, 1.5).unwrap();
        assert!(!p.truncated);
        for x in &p.positions {
            assert!(
                (0.8 * x[0] - 0.6 * x[1]).abs() < 1e-9,
                "left the ray at {x:?}"
            );
        }
        assert!(p.speed_drift() < 1e-8);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        // the simplex metric is incomplete, so paths may end early far out
        #[test]
        fn speed_is_conserved_on_simplex(x in -0.5..0.5f64, y in -0.5..0.5f64, th in 0.0..TAU) {
            let s = SimplexPotential::new(2);
            let f = JetMetric(&s);
            let v = unit_vector(&f, [x, y], [th.cos(), th.sin()]).unwrap();
            let p = geodesic_sampled(&f, [x, y], v, 3.0, 60).unwrap();
            prop_assert!(p.speed_drift() < 1e-8, "drift {}", p.speed_drift());
            prop_assert!(*p.params.last().unwrap() > 1.5);
            if p.truncated {
                let e = p.end();
                prop_assert!(e[0].hypot(e[1]) > 5.0, "stopped at {e:?}");
            }
        }
    }

    #[test]
    fn cube_balls_are_euclidean() {
        let c = CubePotential::new(2);
        let f = JetMetric(&c);
        for r in [0.5, 1.0, 2.0] {
            let b = ball_area(&f, [0.0, 0.0], r).unwrap();
            assert!(
                (b.area / (PI * r * r) - 1.0).abs() < 1e-3,
                "r={r}: {}",
                b.area
            );
            assert!(b.embedded);
        }
    }

    #[test]
    fn simplex_balls_match_spherical_caps() {
        // constant curvature 1/12: geodesic balls have exactly the cap area
        let s = SimplexPotential::new(2);
        let f = JetMetric(&s);
        let b = ball_area(&f, [0.1, 0.2], 0.8).unwrap();
        assert!(
            (b.area - cap_area(0.8)).abs() < 1e-10,
            "{} vs {}",
            b.area,
            cap_area(0.8)
        );
        assert!(b.area < PI * 0.64);
    }

    #[test]
    fn curvature_from_simplex_areas() {
        let s = SimplexPotential::new(2);
        let est = curvature_from_areas(&JetMetric(&s), [0.0, 0.0], &[0.4, 0.6, 0.8]).unwrap();
        assert!((est.estimate - 1.0 / 12.0).abs() < 5e-3, "{}", est.estimate);
    }

    #[test]
    fn escaping_ball_is_an_error() {
        let f = RadialMetric(profile());
        assert!(matches!(
            ball_area_with(&f, [29.0, 0.0], 2.0, 16),
            Err(Error::BallEscapes)
        ));
    }

    #[test]
    fn area_grows_with_radius() {
        let s = SimplexPotential::new(2);
        let f = JetMetric(&s);
        let areas: Vec<f64> = [0.25, 0.5, 0.75, 1.0]
            .iter()
            .map(|&r| ball_area_with(&f, [0.3, 0.0], r, 64).unwrap().area)
            .collect();
        assert!(areas.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn grid_metric_reproduces_closed_form() {
        let c = CubePotential::new(2);
        let g = GridPotential::from_fn(4.0, 161, None, |x, y| c.value(&[x, y]));
        let gm = GridMetric::new(&g, 1);
        let x = [0.37, -0.81];
        let a = gm.at(x).unwrap();
        let b = JetMetric(&c).at(x).unwrap();
        for (u, v) in a.g.iter().zip(&b.g) {
            assert!((u - v).abs() < 1e-4);
        }
        for (u, v) in a.t.iter().zip(&b.t) {
            assert!((u - v).abs() < 5e-3);
        }
        assert!(gm.at([3.9, 0.0]).is_none());
    }

    #[test]
    fn cap_comparison_on_closed_forms() {
        let c = CubePotential::new(2);
        let flat = cap_comparison(&JetMetric(&c), None, [0.5, 0.0], 1.0).unwrap();
        assert!(flat.pass() && flat.margin > 0.02);
        let s = SimplexPotential::new(2);
        let sharp = cap_comparison(&JetMetric(&s), None, [0.0, 0.0], 1.0).unwrap();
        assert!(sharp.margin.abs() < 1e-10);
    }

    #[test]
    fn kappa_values() {
        assert!((kappa(2) - TAU).abs() < 1e-15);
        assert!((kappa(3) - 4.0 * PI).abs() < 1e-14);
    }

    #[test]
    fn ball_diagnostics_agree() {
        let d = ball_diagnostics(profile()).unwrap();
        assert!(
            d.max_curvature_mismatch < 1e-6,
            "{}",
            d.max_curvature_mismatch
        );
        assert!(
            d.max_expansion_mismatch < 1e-8,
            "{}",
            d.max_expansion_mismatch
        );
        assert!(d.large_r_decreasing && d.large_r_below_minus_one);
        assert!(d.spheres_increasing && d.tail_dominated);
        assert!(d.diameter_radius.is_finite() && d.quadrature_error < 1e-10);
    }
}
