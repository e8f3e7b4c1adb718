//! Radial potentials for the unit ball: `Φ(x) = φ(|x|)` with
//! `(φ'/r)^{n−1}·φ'' = e^{−φ}`, `φ'(0) = 0`, `φ'(∞) = 1`.

use std::io::Write;
use std::sync::OnceLock;

use ode_solvers::{Dop853, OutputType, System, Vector3};
use serde::{Deserialize, Serialize};

use super::{roundoff_error, Potential, Source};
use crate::error::{Error, JetError, Result};
use crate::series::Series;

/// Order of the local Taylor expansion used to move from a stored node to an
/// arbitrary radius.
const NODE_TAYLOR_ORDER: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BallProfileConfig {
    pub n: usize,
    pub r_max: f64,
    /// Required `1 − φ'(r_max)` bound.
    pub eps_far: f64,
    /// Bisection tolerance on `φ(0)`.
    pub tol: f64,
    /// Start radius of the numerical integration.
    pub r_start: f64,
    /// Smallest radius at which jets are produced.
    pub r_min: f64,
    /// Node spacing in the far region; near the origin the spacing is `r/10`.
    pub dr: f64,
}

impl Default for BallProfileConfig {
    fn default() -> Self {
        BallProfileConfig {
            n: 2,
            r_max: 30.0,
            eps_far: 1e-6,
            tol: 1e-12,
            r_start: 1e-3,
            r_min: 1e-3,
            dr: 0.01,
        }
    }
}

struct RadialOde {
    n: usize,
}

// The radius is carried as a third state component: the Dop853 tableau in
// ode_solvers evaluates its last stage at the wrong abscissa, which only
// matters for right-hand sides that depend on the independent variable.
impl System<f64, Vector3<f64>> for RadialOde {
    fn system(&self, _s: f64, y: &Vector3<f64>, dy: &mut Vector3<f64>) {
        dy[0] = y[1];
        dy[1] = (-y[0]).exp() * (y[2] / y[1]).powi(self.n as i32 - 1);
        dy[2] = 1.0;
    }

    fn solout(&mut self, _s: f64, y: &Vector3<f64>, _dy: &Vector3<f64>) -> bool {
        y[1] >= 1.0 || !y[1].is_finite() || !y[0].is_finite()
    }
}

fn integrate(n: usize, r0: f64, r1: f64, y0: [f64; 2]) -> Result<(f64, [f64; 2])> {
    let init = Vector3::new(y0[0], y0[1], r0);
    let mut stepper = Dop853::new(RadialOde { n }, r0, r1, r1 - r0, init, 1e-13, 1e-13);
    stepper.set_output(OutputType::Sparse);
    stepper.integrate().map_err(|e| Error::Shooting {
        message: format!("integration failed: {e}"),
        trace: Vec::new(),
    })?;
    let r = *stepper.x_out().last().expect("at least one output");
    let y = stepper.y_out().last().expect("at least one output");
    Ok((r, [y[0], y[1]]))
}

/// Series start `φ = a + s r²/2 + b r⁴/24` with `sⁿ = e^{−a}`, `b = −3s²/(n+2)`.
fn series_start(n: usize, a: f64, r: f64) -> [f64; 3] {
    let s = (-a / n as f64).exp();
    let b = -3.0 * s * s / (n as f64 + 2.0);
    [
        a + s * r * r / 2.0 + b * r.powi(4) / 24.0,
        s * r + b * r.powi(3) / 6.0,
        s + b * r * r / 2.0,
    ]
}

/// Taylor coefficients `φ^{(k)}(r0)/k!`, `k ≤ order`, of the solution through
/// `(φ, φ')(r0) = (phi0, dphi0)`, by the recursion `φ'' = e^{−φ}((r0+t)/φ')^{n−1}`.
pub fn ode_taylor(n: usize, r0: f64, phi0: f64, dphi0: f64, order: usize) -> Vec<f64> {
    let mut c = vec![0.0; order.max(1) + 1];
    c[0] = phi0;
    c[1] = dphi0;
    for k in 0..order.saturating_sub(1) {
        let y = Series::from_coeffs(1, k + 1, &c[..k + 2]);
        let yp = y.partial(0);
        let t = Series::variable(1, k, 0, r0);
        let ratio = &t / &yp;
        let mut f = (-y.truncate(k)).exp();
        for _ in 1..n {
            f = &f * &ratio;
        }
        c[k + 2] = f.coeffs()[k] / ((k + 2) * (k + 1)) as f64;
    }
    c.truncate(order + 1);
    c
}

fn eval_poly(c: &[f64], t: f64) -> [f64; 2] {
    let mut p = 0.0;
    let mut dp = 0.0;
    for (k, &ck) in c.iter().enumerate().rev() {
        p = p * t + ck;
        if k > 0 {
            dp = dp * t + k as f64 * ck;
        }
    }
    [p, dp]
}

/// Converged radial profile on a node grid covering `[r_start, r_max]`.
#[derive(Debug, Clone)]
pub struct RadialProfile {
    pub config: BallProfileConfig,
    /// `φ(0)`, the shooting parameter.
    pub phi0: f64,
    pub r: Vec<f64>,
    pub phi: Vec<f64>,
    pub dphi: Vec<f64>,
    pub d2phi: Vec<f64>,
    /// ODE residual at each node, from the expansion about the previous node.
    pub residual: Vec<f64>,
    /// Bisection history `(φ(0) trial, outcome)`.
    pub trace: Vec<(f64, String)>,
    node_series: OnceLock<Vec<Vec<f64>>>,
}

enum Shot {
    Overshoot(f64),
    Saturate(f64),
}

fn shoot(cfg: &BallProfileConfig, a: f64) -> Result<Shot> {
    let [p, dp, _] = series_start(cfg.n, a, cfg.r_start);
    let (r, y) = integrate(cfg.n, cfg.r_start, cfg.r_max, [p, dp])?;
    if y[1] >= 1.0 || !y[1].is_finite() {
        Ok(Shot::Overshoot(r))
    } else {
        Ok(Shot::Saturate(y[1]))
    }
}

/// Solve the radial equation by shooting on `φ(0)`.
pub fn ball_profile(cfg: BallProfileConfig) -> Result<RadialProfile> {
    if cfg.n < 2 {
        return Err(Error::validation("ball profile needs n >= 2"));
    }
    if !(cfg.r_max > cfg.r_start && cfg.r_start > 0.0 && cfg.tol > 0.0) {
        return Err(Error::validation("invalid ball profile configuration"));
    }
    let mut trace = Vec::new();
    let record = |a: f64, s: &Shot, trace: &mut Vec<(f64, String)>| {
        let msg = match s {
            Shot::Overshoot(r) => format!("overshoot at r={r:.6}"),
            Shot::Saturate(d) => format!("saturate with phi'={d:.15}"),
        };
        trace.push((a, msg));
    };
    // overshoot <=> φ(0) too small
    let (mut lo, mut hi) = (-5.0, 5.0);
    let mut expansions = 0;
    loop {
        let slo = shoot(&cfg, lo)?;
        record(lo, &slo, &mut trace);
        let shi = shoot(&cfg, hi)?;
        record(hi, &shi, &mut trace);
        match (slo, shi) {
            (Shot::Overshoot(_), Shot::Saturate(_)) => break,
            _ if expansions < 6 => {
                let w = hi - lo;
                lo -= w;
                hi += w;
                expansions += 1;
            }
            _ => {
                return Err(Error::Shooting {
                    message: "could not bracket phi(0)".into(),
                    trace,
                });
            }
        }
    }
    while hi - lo > cfg.tol {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let s = shoot(&cfg, mid)?;
        record(mid, &s, &mut trace);
        match s {
            Shot::Overshoot(_) => lo = mid,
            Shot::Saturate(_) => hi = mid,
        }
    }
    let a = hi;

    // node grid: spacing r/10 near the origin, cfg.dr further out
    let mut r = vec![cfg.r_start];
    while *r.last().unwrap() < cfg.r_max {
        let last = *r.last().unwrap();
        let next = (last + (0.1 * last).min(cfg.dr)).min(cfg.r_max);
        if cfg.r_max - next < 1e-9 {
            r.push(cfg.r_max);
            break;
        }
        r.push(next);
    }
    let [p0, dp0, _] = series_start(cfg.n, a, cfg.r_start);
    let mut phi = vec![p0];
    let mut dphi = vec![dp0];
    for k in 1..r.len() {
        let (rr, y) = integrate(cfg.n, r[k - 1], r[k], [phi[k - 1], dphi[k - 1]])?;
        if (rr - r[k]).abs() > 1e-12 || y[1] >= 1.0 {
            trace.push((
                a,
                format!("final profile left the admissible range at r={rr}"),
            ));
            return Err(Error::Shooting {
                message: "final profile overshoots".into(),
                trace,
            });
        }
        phi.push(y[0]);
        dphi.push(y[1]);
    }
    let n = cfg.n;
    let d2phi: Vec<f64> = (0..r.len())
        .map(|k| (-phi[k]).exp() * (r[k] / dphi[k]).powi(n as i32 - 1))
        .collect();
    let mut residual = vec![0.0; r.len()];
    for k in 1..r.len() {
        let c = ode_taylor(n, r[k - 1], phi[k - 1], dphi[k - 1], NODE_TAYLOR_ORDER);
        let t = r[k] - r[k - 1];
        let d2: f64 = c
            .iter()
            .enumerate()
            .skip(2)
            .rev()
            .fold(0.0, |acc, (j, &cj)| acc * t + (j * (j - 1)) as f64 * cj);
        residual[k] = ((dphi[k] / r[k]).powi(n as i32 - 1) * d2 - (-phi[k]).exp()).abs();
    }
    let far = *dphi.last().unwrap();
    if !(far > 1.0 - cfg.eps_far) {
        trace.push((a, format!("phi'(r_max) = {far}")));
        return Err(Error::Shooting {
            message: "far-field slope below 1 - eps_far".into(),
            trace,
        });
    }
    Ok(RadialProfile {
        config: cfg,
        phi0: a,
        r,
        phi,
        dphi,
        d2phi,
        residual,
        trace,
        node_series: OnceLock::new(),
    })
}

impl RadialProfile {
    pub fn n(&self) -> usize {
        self.config.n
    }

    pub fn r_max(&self) -> f64 {
        *self.r.last().unwrap()
    }

    pub fn max_residual(&self) -> f64 {
        self.residual.iter().copied().fold(0.0, f64::max)
    }

    /// Taylor coefficients of `φ` at radius `r` up to `order`.
    pub fn taylor_coeffs(&self, r: f64, order: usize) -> std::result::Result<Vec<f64>, JetError> {
        if !(r >= self.r[0] && r <= self.r_max()) {
            return Err(JetError::OutsideRegion { x: r, y: 0.0 });
        }
        let k = self.nearest_node(r);
        let n = self.n();
        let c = ode_taylor(n, self.r[k], self.phi[k], self.dphi[k], NODE_TAYLOR_ORDER);
        let [p, dp] = eval_poly(&c, r - self.r[k]);
        Ok(ode_taylor(n, r, p, dp, order))
    }

    fn nearest_node(&self, r: f64) -> usize {
        match self.r.binary_search_by(|p| p.total_cmp(&r)) {
            Ok(k) => k,
            Err(0) => 0,
            Err(k) if k == self.r.len() || r - self.r[k - 1] <= self.r[k] - r => k - 1,
            Err(k) => k,
        }
    }

    /// `[φ, φ′, φ″, φ‴]` at `r`, from cached node expansions.
    pub fn derivatives3(&self, r: f64) -> Option<[f64; 4]> {
        if !(r >= self.r[0] && r <= self.r_max()) {
            return None;
        }
        let series = self.node_series.get_or_init(|| {
            (0..self.r.len())
                .map(|k| {
                    ode_taylor(
                        self.n(),
                        self.r[k],
                        self.phi[k],
                        self.dphi[k],
                        NODE_TAYLOR_ORDER,
                    )
                })
                .collect()
        });
        let k = self.nearest_node(r);
        let t = r - self.r[k];
        let mut out = [0.0; 4];
        for (d, o) in out.iter_mut().enumerate() {
            // d-th derivative of Σ c_j t^j
            *o = series[k]
                .iter()
                .enumerate()
                .skip(d)
                .rev()
                .fold(0.0, |acc, (j, &cj)| {
                    let falling: f64 = (0..d).map(|m| (j - m) as f64).product();
                    acc * t + falling * cj
                });
        }
        Some(out)
    }

    /// `(φ, φ', φ'')` at `r`; below the first node the series start is used.
    pub fn eval(&self, r: f64) -> [f64; 3] {
        if r < self.r[0] {
            return series_start(self.n(), self.phi0, r);
        }
        let c = self
            .taylor_coeffs(r.min(self.r_max()), 2)
            .expect("inside profile range");
        [c[0], c[1], 2.0 * c[2]]
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["r", "phi", "dphi", "d2phi", "ode_residual"])?;
        for k in 0..self.r.len() {
            wr.write_record(
                [
                    self.r[k],
                    self.phi[k],
                    self.dphi[k],
                    self.d2phi[k],
                    self.residual[k],
                ]
                .iter()
                .map(|v| crate::io::fmt17(*v)),
            )?;
        }
        wr.flush()?;
        Ok(())
    }
}

impl Potential for RadialProfile {
    fn dim(&self) -> usize {
        self.n()
    }
    fn source(&self) -> Source {
        Source::Radial
    }
    fn max_order(&self) -> usize {
        super::MAX_JET_ORDER
    }
    fn name(&self) -> String {
        format!("radial:ball(n={})", self.n())
    }

    fn taylor(&self, x: &[f64], order: usize) -> std::result::Result<Series, JetError> {
        let r0 = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        if !(r0 >= self.config.r_min && r0 <= self.r_max()) {
            return Err(JetError::OutsideRegion {
                x: x[0],
                y: x.get(1).copied().unwrap_or(0.0),
            });
        }
        let c = self.taylor_coeffs(r0, order)?;
        let vars = Series::variables(x, order);
        let r2 = vars
            .iter()
            .fold(Series::zero(x.len(), order), |acc, v| acc + v * v);
        Ok(r2.sqrt().compose(&c))
    }

    fn error_estimate(&self, _x: &[f64], series: &Series) -> Vec<f64> {
        let floor = self.max_residual();
        roundoff_error(series, 1e-13)
            .into_iter()
            .map(|e| e.max(floor))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use std::sync::OnceLock;

    fn profile() -> &'static RadialProfile {
        static P: OnceLock<RadialProfile> = OnceLock::new();
        P.get_or_init(|| ball_profile(BallProfileConfig::default()).unwrap())
    }

    #[test]
    fn series_start_solves_the_ode_to_high_order() {
        // residual of the truncated start is O(r⁴)
        for a in [-1.0, 0.5, 2.0] {
            let r = 1e-3;
            let [p, dp, d2p] = series_start(2, a, r);
            let res = (dp / r) * d2p - (-p).exp();
            assert!(res.abs() < 1e-11, "residual {res}");
        }
    }

    #[test]
    fn taylor_recursion_matches_cube_profile_for_n1() {
        // with n = 1 the equation is φ'' = e^{−φ}, solved by log(2cosh²(t/2))
        let t0: f64 = 0.8;
        let h = t0 / 2.0;
        let phi = (2.0 * h.cosh().powi(2)).ln();
        let c = ode_taylor(1, t0, phi, h.tanh(), 6);
        let oracle = crate::potentials::cube_phi_series(&Series::variable(1, 6, 0, t0));
        for (a, b) in c.iter().zip(oracle.coeffs()) {
            assert_abs_diff_eq!(*a, *b, epsilon = 1e-13);
        }
    }

    #[test]
    fn converged_profile_invariants() {
        let p = profile();
        assert!(*p.dphi.last().unwrap() > 1.0 - 1e-6);
        assert!(p.dphi.last().copied().unwrap() < 1.0);
        assert!(p.dphi.windows(2).all(|w| w[1] > w[0]));
        assert!(p.max_residual() < 1e-10, "residual {}", p.max_residual());
        // φ''(0⁺) → e^{−φ(0)/n}
        let [_, _, d2] = p.eval(1e-4);
        assert_abs_diff_eq!(d2, (-p.phi0 / 2.0).exp(), epsilon = 1e-7);
    }

    #[test]
    fn radial_hessian_on_axis() {
        let p = profile();
        for r in [0.3, 1.0, 4.0] {
            let j = p.jet(&[r, 0.0], 2).unwrap();
            let [_, dphi, d2phi] = p.eval(r);
            assert_abs_diff_eq!(j.d(&[0, 0]), d2phi, epsilon = 1e-12);
            assert_abs_diff_eq!(j.d(&[1, 1]), dphi / r, epsilon = 1e-12);
            assert_abs_diff_eq!(j.d(&[0, 1]), 0.0, epsilon = 1e-14);
        }
    }

    #[test]
    fn jets_solve_the_equation() {
        let p = profile();
        for x in [[0.2, 0.1], [-1.0, 2.0], [3.0, -3.5], [0.0, 9.0]] {
            let j = p.jet(&x, 2).unwrap();
            let det = j.d(&[0, 0]) * j.d(&[1, 1]) - j.d(&[0, 1]).powi(2);
            assert_abs_diff_eq!(det * j.value().exp(), 1.0, epsilon = 1e-10);
        }
    }

    #[test]
    fn jets_outside_the_annulus_are_rejected() {
        let p = profile();
        assert!(matches!(
            p.jet(&[0.0, 0.0], 2),
            Err(JetError::OutsideRegion { .. })
        ));
        assert!(matches!(
            p.jet(&[40.0, 0.0], 2),
            Err(JetError::OutsideRegion { .. })
        ));
    }

    #[test]
    fn mass_equals_disk_area() {
        // 2π∫ r e^{−φ} dr = π φ'(∞)² for n = 2
        let p = profile();
        let mut m = 0.0;
        for k in 1..p.r.len() {
            let (a, b) = (p.r[k - 1], p.r[k]);
            let mid = 0.5 * (a + b);
            let f = |r: f64| r * (-p.eval(r)[0]).exp();
            m += (b - a) / 6.0 * (f(a) + 4.0 * f(mid) + f(b));
        }
        m += p.r[0] * p.r[0] / 2.0 * (-p.phi0).exp();
        assert_abs_diff_eq!(
            2.0 * std::f64::consts::PI * m,
            std::f64::consts::PI,
            epsilon = 1e-8
        );
    }
}
