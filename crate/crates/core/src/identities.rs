//! Residuals of the curvature identities and bounds at sample points.
//!
//! Each check evaluates both sides independently and records the result
//! in a [`Checks`] map keyed by check name. Identities pass when
//! `|lhs − rhs| ≤ tol·(1 + scale)`, where `scale` is the magnitude of the
//! largest term involved. Bounds read `lhs ≥ rhs` and pass when
//! `lhs − rhs ≥ −tol·(1 + scale)`. Info rows record a ratio and always pass.

use std::collections::BTreeMap;
use std::io::Write;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::{
    all_indices, weighted_laplacian_scalar_fd, Fields, LaplacianTarget, PointGeometry, Tensor,
};
use crate::io::fmt17;
use crate::potentials::{GridPotential, Jet, Potential, Source};

/// Per-source pass threshold for a check that uses derivatives up to `order`.
pub fn threshold(source: Source, order: usize) -> f64 {
    match source {
        Source::ClosedForm => 1e-8,
        Source::Radial if order >= 5 => 1e-5,
        Source::Radial => 1e-6,
        Source::Grid => 1e-2,
    }
}

/// Tolerance of the finite-difference Laplacian in [`check_third_max`].
pub const FD_TOLERANCE: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckKind {
    Identity,
    Bound,
    Info,
}

#[derive(Debug, Clone, Serialize)]
pub struct CheckValue {
    pub kind: CheckKind,
    pub lhs: f64,
    pub rhs: f64,
    /// `|lhs − rhs|` for identities, the violation `max(0, rhs − lhs)` for
    /// bounds, and `lhs / rhs` for info rows.
    pub abs: f64,
    pub rel: f64,
    pub scale: f64,
    pub tol: f64,
    pub pass: bool,
}

impl CheckValue {
    pub fn identity(lhs: f64, rhs: f64, scale: f64, tol: f64) -> CheckValue {
        let scale = scale.max(lhs.abs()).max(rhs.abs());
        let abs = (lhs - rhs).abs();
        CheckValue {
            kind: CheckKind::Identity,
            lhs,
            rhs,
            abs,
            rel: rel(abs, scale),
            scale,
            tol,
            pass: abs <= tol * (1.0 + scale),
        }
    }

    /// `lhs ≥ rhs` up to `allowance`.
    pub fn bound(lhs: f64, rhs: f64, scale: f64, allowance: f64) -> CheckValue {
        let scale = scale.max(lhs.abs()).max(rhs.abs());
        let margin = lhs - rhs;
        let abs = (-margin).max(0.0);
        CheckValue {
            kind: CheckKind::Bound,
            lhs,
            rhs,
            abs,
            rel: rel(abs, scale),
            scale,
            tol: allowance,
            pass: margin >= -allowance,
        }
    }

    pub fn info(lhs: f64, rhs: f64) -> CheckValue {
        let ratio = lhs / rhs;
        CheckValue {
            kind: CheckKind::Info,
            lhs,
            rhs,
            abs: ratio,
            rel: ratio,
            scale: lhs.abs(),
            tol: 0.0,
            pass: true,
        }
    }

    pub fn margin(&self) -> f64 {
        self.lhs - self.rhs
    }
}

fn rel(abs: f64, scale: f64) -> f64 {
    if scale > 0.0 {
        abs / scale
    } else {
        abs
    }
}

#[derive(Debug, Clone, Serialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum Entry {
    Checked(CheckValue),
    Skipped { reason: String },
}

impl Entry {
    pub fn value(&self) -> Option<&CheckValue> {
        match self {
            Entry::Checked(v) => Some(v),
            Entry::Skipped { .. } => None,
        }
    }
}

pub type Checks = BTreeMap<String, Entry>;

pub const SKIP_LOW_GRADIENT: &str = "low gradient";
pub const SKIP_DEGENERATE_FRAME: &str = "degenerate frame";
pub const SKIP_ORDER: &str = "order unavailable";
pub const SKIP_GRID: &str = "grid source";
pub const SKIP_NOT_2D: &str = "not two-dimensional";
pub const SKIP_DENOMINATOR: &str = "small denominator";
pub const SKIP_NON_UNIQUE: &str = "non-unique maximizer";

struct Recorder {
    source: Source,
    out: Checks,
}

impl Recorder {
    fn new(source: Source) -> Recorder {
        Recorder {
            source,
            out: Checks::new(),
        }
    }

    fn tol(&self, order: usize) -> f64 {
        threshold(self.source, order)
    }

    fn identity(&mut self, name: &str, order: usize, lhs: f64, rhs: f64, terms: &[f64]) {
        let scale = terms.iter().fold(0.0_f64, |m, t| m.max(t.abs()));
        let v = CheckValue::identity(lhs, rhs, scale, self.tol(order));
        self.out.insert(name.into(), Entry::Checked(v));
    }

    fn bound(&mut self, name: &str, order: usize, lhs: f64, rhs: f64, terms: &[f64]) {
        let scale = terms
            .iter()
            .fold(lhs.abs().max(rhs.abs()), |m, t| m.max(t.abs()));
        let allowance = self.tol(order) * (1.0 + scale);
        self.out.insert(
            name.into(),
            Entry::Checked(CheckValue::bound(lhs, rhs, scale, allowance)),
        );
    }

    fn bound_with(&mut self, name: &str, lhs: f64, rhs: f64, allowance: f64) {
        self.out.insert(
            name.into(),
            Entry::Checked(CheckValue::bound(lhs, rhs, 0.0, allowance)),
        );
    }

    fn info(&mut self, name: &str, lhs: f64, rhs: f64) {
        self.out
            .insert(name.into(), Entry::Checked(CheckValue::info(lhs, rhs)));
    }

    /// Componentwise comparison; records the worst component.
    fn tensor(&mut self, name: &str, order: usize, lhs: &Tensor, rhs: &Tensor, scale: f64) {
        let mut worst = (0.0, 0.0, -1.0);
        for (a, b) in lhs.data.iter().zip(&rhs.data) {
            let d = (a - b).abs();
            if d > worst.2 || d.is_nan() {
                worst = (*a, *b, d);
            }
        }
        let scale = scale.max(lhs.max_abs()).max(rhs.max_abs());
        self.identity(name, order, worst.0, worst.1, &[scale]);
    }

    fn skip(&mut self, names: &[&str], reason: &str) {
        for n in names {
            self.out.insert(
                (*n).into(),
                Entry::Skipped {
                    reason: reason.into(),
                },
            );
        }
    }
}

/// Jet, series fields and evaluated geometry at one point.
#[derive(Debug, Clone)]
pub struct PointData {
    pub jet: Jet,
    pub fields: Fields,
    pub geom: PointGeometry,
}

impl PointData {
    pub fn new(jet: Jet) -> Result<PointData> {
        let fields = Fields::from_jet(&jet)?;
        let geom = PointGeometry::from_fields(&fields, &jet.point);
        Ok(PointData { jet, fields, geom })
    }

    pub fn at(pot: &dyn Potential, x: &[f64], order: usize) -> Result<PointData> {
        PointData::new(pot.jet(x, order)?)
    }

    fn d3(&self) -> Tensor {
        self.fields.d[3].values()
    }

    fn grad_lambda(&self) -> Option<Vec<f64>> {
        let lam = &self.fields.lambda;
        (lam.order() >= 1).then(|| (0..self.fields.n).map(|i| lam.partial(i).value()).collect())
    }
}

/// Raise every slot from `from` onward with `inv`.
fn raise_from(t: &Tensor, inv: &Tensor, from: usize) -> Tensor {
    let mut cur = t.clone();
    for slot in from..t.rank {
        let next = Tensor::from_fn(t.n, t.rank, |idx| {
            let mut j = idx.to_vec();
            (0..t.n)
                .map(|m| {
                    j[slot] = m;
                    inv.get(&[idx[slot], m]) * cur.get(&j)
                })
                .sum()
        });
        cur = next;
    }
    cur
}

/// Contract all but the first `free` slots of `a` and `b` in the metric.
fn pair(a: &Tensor, b: &Tensor, inv: &Tensor, free: usize) -> Tensor {
    assert_eq!(a.rank, b.rank);
    let bu = raise_from(b, inv, free);
    let tails = all_indices(a.n, a.rank - free);
    Tensor::from_fn(a.n, 2 * free, |idx| {
        let (ia, ib) = idx.split_at(free);
        tails
            .iter()
            .map(|t| {
                let ka: Vec<usize> = ia.iter().chain(t).copied().collect();
                let kb: Vec<usize> = ib.iter().chain(t).copied().collect();
                a.get(&ka) * bu.get(&kb)
            })
            .sum()
    })
}

fn full(a: &Tensor, b: &Tensor, inv: &Tensor) -> f64 {
    pair(a, b, inv, 0).data[0]
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn mat2(t: &Tensor) -> [[f64; 2]; 2] {
    [
        [t.get(&[0, 0]), t.get(&[0, 1])],
        [t.get(&[1, 0]), t.get(&[1, 1])],
    ]
}

fn det2(m: [[f64; 2]; 2]) -> f64 {
    m[0][0] * m[1][1] - m[0][1] * m[1][0]
}

/// h-orthonormal frame from Gram-Schmidt on the coordinate axes.
fn coordinate_frame(metric: &Tensor) -> [[f64; 2]; 2] {
    let h = mat2(metric);
    let e = [1.0 / h[0][0].sqrt(), 0.0];
    let mut u = [-h[0][1] / h[0][0], 1.0];
    let nu = (u[0] * (h[0][0] * u[0] + h[0][1] * u[1]) + u[1] * (h[1][0] * u[0] + h[1][1] * u[1]))
        .sqrt();
    u = [u[0] / nu, u[1] / nu];
    [e, u]
}

pub const ALGEBRAIC_CHECKS: &[&str] = &[
    "trace_phi3",
    "trace_g_lambda",
    "trace_g_phi3",
    "ricci_g",
    "einstein",
    "bakry_emery",
    "hess_trace",
    "hess_hs_norm",
    "hess_det",
    "riemann_structure",
    "riemann_square",
    "lambda_lower",
    "frame_nn",
    "frame_vv",
    "frame_nv",
    "g_vv_expansion",
    "lambda_chain_upper",
    "lambda_chain_lower",
    "phi_eun",
];

const FRAME_NV_CHECKS: &[&str] = &[
    "frame_nn",
    "frame_vv",
    "frame_nv",
    "g_vv_expansion",
    "lambda_chain_upper",
    "lambda_chain_lower",
];

/// Trace, Ricci, Hessian and frame identities from third-order data.
pub fn check_algebraic(pd: &PointData) -> Checks {
    let g = &pd.geom;
    let n = pd.fields.n;
    let mut r = Recorder::new(g.source);
    let inv = &g.inverse;
    let d3 = pd.d3();
    let grad_sq = g.grad_sq;
    let lam = g.lambda;
    let scale3 = d3.max_abs() * d3.max_abs() + grad_sq;

    // Φ_abc Φ^{ab} = −Φ_c
    let lhs = Tensor::from_fn(n, 1, |c| {
        all_indices(n, 2)
            .iter()
            .map(|ab| d3.get(&[ab[0], ab[1], c[0]]) * inv.get(ab))
            .sum()
    });
    let rhs = Tensor::from_fn(n, 1, |c| -g.grad[c[0]]);
    r.tensor("trace_phi3", 3, &lhs, &rhs, d3.max_abs() * inv.max_abs());

    let tr_g: f64 = all_indices(n, 2)
        .iter()
        .map(|ij| inv.get(ij) * g.g.get(ij))
        .sum();
    let phi3_sq = full(&d3, &d3, inv);
    r.identity(
        "trace_g_lambda",
        3,
        2.0 * lam,
        tr_g - grad_sq,
        &[tr_g, grad_sq],
    );
    r.identity("trace_g_phi3", 3, tr_g, phi3_sq, &[]);

    // g_ij + Φ_ijkΦ^k
    let phi3n = Tensor::from_fn(n, 2, |ij| {
        (0..n)
            .map(|k| d3.get(&[ij[0], ij[1], k]) * g.grad_up[k])
            .sum()
    });
    let g_plus = Tensor::from_fn(n, 2, |ij| g.g.get(ij) + phi3n.get(ij));
    let four_ric = Tensor::from_fn(n, 2, |ij| 4.0 * g.ricci.get(ij));
    let scale = g.g.max_abs() + phi3n.max_abs();
    r.tensor("ricci_g", 3, &four_ric, &g_plus, scale);
    let lam_metric = Tensor::from_fn(n, 2, |ij| lam * g.metric.get(ij));
    r.tensor("einstein", 3, &g_plus, &lam_metric, scale);

    // Ric + ∇²(Φ/2) = ¼g + ½Φ_ij
    let be_l = Tensor::from_fn(n, 2, |ij| g.ricci.get(ij) + 0.5 * g.hess.get(ij));
    let be_r = Tensor::from_fn(n, 2, |ij| 0.25 * g.g.get(ij) + 0.5 * g.metric.get(ij));
    r.tensor("bakry_emery", 3, &be_l, &be_r, scale + g.metric.max_abs());

    let hess_tr: f64 = all_indices(n, 2)
        .iter()
        .map(|ij| inv.get(ij) * g.hess.get(ij))
        .sum();
    r.identity(
        "hess_trace",
        3,
        hess_tr,
        n as f64 + 0.5 * grad_sq,
        &[grad_sq],
    );

    let g_grad = g.g.apply(&[&g.grad_up, &g.grad_up]);
    if n == 2 {
        let hs = full(&g.hess, &g.hess, inv);
        r.identity(
            "hess_hs_norm",
            3,
            hs,
            2.0 + grad_sq + 0.25 * g_grad,
            &[grad_sq, g_grad],
        );
        let det = det2(mat2(&g.hess)) / det2(mat2(&g.metric));
        let rhs = 1.0 + 0.5 * grad_sq + 0.125 * (grad_sq * grad_sq - g_grad);
        r.identity("hess_det", 3, det, rhs, &[grad_sq * grad_sq, g_grad]);

        let rr = 0.25 * lam;
        let m = &g.metric;
        let model = Tensor::from_fn(2, 4, |q| {
            let (i, j, k, l) = (q[0], q[1], q[2], q[3]);
            rr * (m.get(&[i, k]) * m.get(&[j, l]) - m.get(&[i, l]) * m.get(&[j, k]))
        });
        r.tensor(
            "riemann_structure",
            3,
            &g.riemann,
            &model,
            scale3 * m.max_abs(),
        );
        let rsq = full(&g.riemann, &g.riemann, inv);
        r.identity(
            "riemann_square",
            3,
            rsq,
            0.25 * lam * lam,
            &[scale3 * scale3],
        );
    } else {
        r.skip(
            &[
                "hess_hs_norm",
                "hess_det",
                "riemann_structure",
                "riemann_square",
            ],
            SKIP_NOT_2D,
        );
    }

    r.bound("lambda_lower", 3, lam, -grad_sq / 8.0, &[g_grad]);

    match &g.nv {
        Some(f) => {
            let norm = grad_sq.sqrt();
            let (nn, vv) = (&f.n[..], &f.v[..]);
            let gnn = g.g.apply(&[nn, nn]);
            let gvv = g.g.apply(&[vv, vv]);
            let gnv = g.g.apply(&[nn, vv]);
            let p = |a: &[f64], b: &[f64], c: &[f64]| d3.apply(&[a, b, c]);
            let (nnn, vvn, vnn, vvv) = (p(nn, nn, nn), p(vv, vv, nn), p(vv, nn, nn), p(vv, vv, vv));
            r.identity("frame_nn", 3, gnn + nnn * norm, lam, &[gnn, nnn * norm]);
            r.identity("frame_vv", 3, gvv + vvn * norm, lam, &[gvv, vvn * norm]);
            r.identity("frame_nv", 3, gnv + vnn * norm, 0.0, &[gnv, vnn * norm]);
            r.identity(
                "g_vv_expansion",
                3,
                gvv,
                vvv * vvv + 2.0 * vvn * vvn + vnn * vnn,
                &[],
            );
            let chain = 2.0 * vvn * vvn + vvn * norm;
            r.bound("lambda_chain_upper", 3, lam, chain, &[gvv, vvn * norm]);
            r.bound("lambda_chain_lower", 3, chain, -grad_sq / 8.0, &[vvn * vvn]);
            match &g.eigenframe {
                Some(ef) => {
                    let eun = p(&ef.e, &ef.u, nn);
                    r.identity(
                        "phi_eun",
                        3,
                        eun,
                        0.0,
                        &[d3.max_abs() * inv.max_abs().powf(1.5)],
                    );
                }
                None => r.skip(&["phi_eun"], SKIP_DEGENERATE_FRAME),
            }
        }
        None if n == 2 => {
            r.skip(FRAME_NV_CHECKS, SKIP_LOW_GRADIENT);
            r.skip(&["phi_eun"], SKIP_LOW_GRADIENT);
        }
        None => {
            r.skip(FRAME_NV_CHECKS, SKIP_NOT_2D);
            r.skip(&["phi_eun"], SKIP_NOT_2D);
        }
    }
    r.out
}

pub const LAPLACIAN_CHECKS: &[&str] = &[
    "lap_phi_i_scalar",
    "lap_phi_i",
    "lap_phi_iab",
    "lap_g",
    "lap_grad_sq",
    "lap_trace_g",
    "trace_q",
    "grad_lambda_q",
];

/// Weighted Laplacians of `Φ_i`, `Φ_iab`, `g_ij`, `|∇Φ|²` and `Tr g`, and the
/// differentiated trace identities. Needs an order-5 closed-form or radial jet.
pub fn check_laplacian(pd: &PointData) -> Checks {
    let f = &pd.fields;
    let g = &pd.geom;
    let n = f.n;
    let mut r = Recorder::new(g.source);
    if g.source == Source::Grid {
        r.skip(LAPLACIAN_CHECKS, SKIP_GRID);
        return r.out;
    }
    if f.order() < 5 {
        r.skip(LAPLACIAN_CHECKS, SKIP_ORDER);
        return r.out;
    }
    let inv = &g.inverse;
    let d3 = pd.d3();
    let up3 = f.phi3_up.values();
    let grad_sq = g.grad_sq;
    let g_grad = g.g.apply(&[&g.grad_up, &g.grad_up]);

    let lap_scalar = Tensor::from_fn(n, 1, |i| f.laplacian_scalar(f.d[1].get(i)).value());
    let minus_grad = Tensor::from_fn(n, 1, |i| -g.grad[i[0]]);
    r.tensor("lap_phi_i_scalar", 5, &lap_scalar, &minus_grad, 0.0);

    // g_i^k Φ_k = g_ij Φ^j
    let g_grad_vec: Vec<f64> = (0..n)
        .map(|i| (0..n).map(|j| g.g.get(&[i, j]) * g.grad_up[j]).sum())
        .collect();
    let lphi = f
        .weighted_laplacian_tensor(LaplacianTarget::PhiI)
        .expect("order and source checked");
    let rhs = Tensor::from_fn(n, 1, |i| 0.5 * g.grad[i[0]] + 0.25 * g_grad_vec[i[0]]);
    r.tensor(
        "lap_phi_i",
        5,
        &lphi,
        &rhs,
        g_grad_vec.iter().fold(0.0, |m, v| m.max(v.abs())),
    );

    // g^k_i = Φ^{kj} g_ji
    let g_mixed = Tensor::from_fn(n, 2, |ki| {
        (0..n)
            .map(|j| inv.get(&[ki[0], j]) * g.g.get(&[j, ki[1]]))
            .sum()
    });
    let lphi3 = f
        .weighted_laplacian_tensor(LaplacianTarget::PhiIab)
        .expect("order and source checked");
    let cubic = Tensor::from_fn(n, 3, |q| {
        let (i, a, b) = (q[0], q[1], q[2]);
        let mut s = 0.0;
        for l in 0..n {
            for k in 0..n {
                for m in 0..n {
                    s += up3.get(&[l, i, k]) * up3.get(&[m, a, l]) * up3.get(&[k, b, m]);
                }
            }
        }
        s
    });
    let rhs = Tensor::from_fn(n, 3, |q| {
        let (i, a, b) = (q[0], q[1], q[2]);
        let mut gs = 0.0;
        for k in 0..n {
            gs += g_mixed.get(&[k, i]) * d3.get(&[k, a, b])
                + g_mixed.get(&[k, a]) * d3.get(&[k, i, b])
                + g_mixed.get(&[k, b]) * d3.get(&[k, i, a]);
        }
        0.5 * d3.get(q) - 0.5 * cubic.get(q) + 0.25 * gs
    });
    let sc = cubic.max_abs() + g_mixed.max_abs() * d3.max_abs();
    r.tensor("lap_phi_iab", 5, &lphi3, &rhs, sc);

    // ∇_pΦ_iab with the derivative index first, then moved to the back
    let dphi3 = f.covariant(&f.d[3]).values();
    let dphi3_i = Tensor::from_fn(n, 4, |q| dphi3.get(&[q[3], q[0], q[1], q[2]]));
    let dd = pair(&dphi3_i, &dphi3_i, inv, 1);
    let rr = pair(&g.riemann, &g.riemann, inv, 1);
    let gg = pair(&g.g, &g.g, inv, 1);
    let lg = f
        .weighted_laplacian_tensor(LaplacianTarget::G)
        .expect("order and source checked");
    let rhs = Tensor::from_fn(n, 2, |ij| {
        g.g.get(ij) + 0.5 * gg.get(ij) + 2.0 * dd.get(ij) + 8.0 * rr.get(ij)
    });
    r.tensor(
        "lap_g",
        5,
        &lg,
        &rhs,
        gg.max_abs() + 2.0 * dd.max_abs() + 8.0 * rr.max_abs(),
    );

    let l_grad_sq = f.laplacian_scalar(&f.grad_sq).value();
    let rhs = 2.0 * n as f64 + 3.0 * grad_sq + g_grad;
    r.identity("lap_grad_sq", 5, l_grad_sq, rhs, &[g_grad]);

    let tr_g_series = all_indices(n, 2)
        .iter()
        .fold(crate::series::Series::zero(n, f.g.order()), |s, ij| {
            s + f.inv.get(ij) * f.g.get(ij)
        });
    let l_tr_g = f.laplacian_scalar(&tr_g_series).value();
    let g_hs = full(&g.g, &g.g, inv);
    let riem_sq = full(&g.riemann, &g.riemann, inv);
    let dphi3_sq = full(&dphi3, &dphi3, inv);
    let rhs = tr_g_series.value() + 0.5 * g_hs + 8.0 * riem_sq + 2.0 * dphi3_sq;
    r.identity(
        "lap_trace_g",
        5,
        l_tr_g,
        rhs,
        &[g_hs, 8.0 * riem_sq, 2.0 * dphi3_sq],
    );

    // ∇_aΦ_bcd Φ^{cd} = −(∇²Φ)_ab
    let tq = Tensor::from_fn(n, 2, |ab| {
        all_indices(n, 2)
            .iter()
            .map(|cd| dphi3.get(&[ab[0], ab[1], cd[0], cd[1]]) * inv.get(cd))
            .sum()
    });
    let mhess = Tensor::from_fn(n, 2, |ab| -g.hess.get(ab));
    r.tensor("trace_q", 4, &tq, &mhess, dphi3.max_abs() * inv.max_abs());

    // (∇_pΦ_abc)Φ^{abc} = (∇²Φ)_pkΦ^k + ∇_pλ
    let up_all = raise_from(&d3, inv, 0);
    let lhs = Tensor::from_fn(n, 1, |p| {
        all_indices(n, 3)
            .iter()
            .map(|abc| dphi3.get(&[p[0], abc[0], abc[1], abc[2]]) * up_all.get(abc))
            .sum()
    });
    let dl = pd.grad_lambda().expect("order checked");
    let rhs = Tensor::from_fn(n, 1, |p| {
        (0..n)
            .map(|k| g.hess.get(&[p[0], k]) * g.grad_up[k])
            .sum::<f64>()
            + dl[p[0]]
    });
    r.tensor(
        "grad_lambda_q",
        4,
        &lhs,
        &rhs,
        dphi3.max_abs() * up_all.max_abs(),
    );
    r.out
}

pub const QFRAME_CHECKS: &[&str] = &[
    "q_trace_ee",
    "q_trace_eu",
    "q_trace_uu",
    "q_grad_lambda_e",
    "q_grad_lambda_u",
    "q_eeuu_closed",
    "q_eeeu_closed",
    "cd_norm",
    "lambda_frame_eigen",
    "lambda_frame_nv",
    "lambda_frame_coord",
    "lambda_phi_e",
    "lambda_phi_u",
    "lambda_gradient_balance",
    "q_square_identity",
    "abcd_expansion",
];

/// Eigenframe quantities shared by the Q-system and the curvature formula.
struct FrameData {
    e: [f64; 2],
    u: [f64; 2],
    le: f64,
    lu: f64,
    phi_e: f64,
    phi_u: f64,
    eee: f64,
    eeu: f64,
    euu: f64,
    uuu: f64,
    lam_e: f64,
    lam_u: f64,
}

impl FrameData {
    fn new(pd: &PointData) -> std::result::Result<FrameData, &'static str> {
        let g = &pd.geom;
        if pd.fields.n != 2 {
            return Err(SKIP_NOT_2D);
        }
        if pd.fields.order() < 4 {
            return Err(SKIP_ORDER);
        }
        if g.nv.is_none() {
            return Err(SKIP_LOW_GRADIENT);
        }
        let ef = g.eigenframe.as_ref().ok_or(SKIP_DEGENERATE_FRAME)?;
        let [le, lu] = g.eigenvalues.expect("2D geometry has eigenvalues");
        let d3 = pd.d3();
        let (e, u) = (ef.e, ef.u);
        let p3 = |a: &[f64], b: &[f64], c: &[f64]| d3.apply(&[a, b, c]);
        let dl = pd.grad_lambda().expect("order checked");
        Ok(FrameData {
            e,
            u,
            le,
            lu,
            phi_e: dot(&g.grad, &e),
            phi_u: dot(&g.grad, &u),
            eee: p3(&e, &e, &e),
            eeu: p3(&e, &e, &u),
            euu: p3(&e, &u, &u),
            uuu: p3(&u, &u, &u),
            lam_e: dot(&dl, &e),
            lam_u: dot(&dl, &u),
        })
    }

    /// `(A, B, C, D)` of the reduced Q-system.
    fn abcd(&self) -> [f64; 4] {
        [
            -self.euu * self.le + self.lam_e,
            -self.eeu * self.lu + self.lam_u,
            3.0 * self.euu - self.eee,
            3.0 * self.eeu - self.uuu,
        ]
    }
}

/// Q-system, closed-form Q components and the frame formulas for λ.
pub fn check_q_and_frame(pd: &PointData) -> Checks {
    let g = &pd.geom;
    let mut r = Recorder::new(g.source);
    let fd = match FrameData::new(pd) {
        Ok(fd) => fd,
        Err(reason) => {
            r.skip(QFRAME_CHECKS, reason);
            return r.out;
        }
    };
    let lam = g.lambda;
    let grad_sq = g.grad_sq;
    if (8.0 * lam + grad_sq).abs() < 1e-10 {
        r.skip(QFRAME_CHECKS, SKIP_DENOMINATOR);
        return r.out;
    }
    let (q, _) = pd.fields.q_tensor().expect("order checked");
    let q = q.values();
    let (e, u) = (&fd.e[..], &fd.u[..]);
    let q4 = |a: &[f64], b: &[f64], c: &[f64], d: &[f64]| q.apply(&[a, b, c, d]);
    let (eeee, eeeu, eeuu, euuu, uuuu) = (
        q4(e, e, e, e),
        q4(e, e, e, u),
        q4(e, e, u, u),
        q4(e, u, u, u),
        q4(u, u, u, u),
    );
    let qs = q.max_abs() * g.inverse.max_abs().powi(2);

    r.identity("q_trace_ee", 4, eeee + eeuu, -fd.le, &[qs]);
    r.identity("q_trace_eu", 4, eeeu + euuu, 0.0, &[qs]);
    r.identity("q_trace_uu", 4, eeuu + uuuu, -fd.lu, &[qs]);

    let s3 = fd
        .eee
        .abs()
        .max(fd.eeu.abs())
        .max(fd.euu.abs())
        .max(fd.uuu.abs());
    let lhs_e = eeee * fd.eee + 3.0 * eeeu * fd.eeu + 3.0 * eeuu * fd.euu + euuu * fd.uuu;
    let lhs_u = eeeu * fd.eee + 3.0 * eeuu * fd.eeu + 3.0 * euuu * fd.euu + uuuu * fd.uuu;
    r.identity(
        "q_grad_lambda_e",
        4,
        lhs_e,
        fd.le * fd.phi_e + fd.lam_e,
        &[qs * s3, fd.lam_e, fd.le * fd.phi_e],
    );
    r.identity(
        "q_grad_lambda_u",
        4,
        lhs_u,
        fd.lu * fd.phi_u + fd.lam_u,
        &[qs * s3, fd.lam_u, fd.lu * fd.phi_u],
    );

    let [a, b, c, d] = fd.abcd();
    let den = c * c + d * d;
    // relative to the largest frame component, not the projection itself
    let q_frame = [eeee, eeeu, eeuu, euuu, uuuu];
    r.identity("q_eeuu_closed", 4, eeuu, (a * c + b * d) / den, &q_frame);
    r.identity("q_eeeu_closed", 4, eeeu, (a * d - b * c) / den, &q_frame);

    let c2 = 4.0 * fd.euu + fd.phi_e;
    let d2 = 4.0 * fd.eeu + fd.phi_u;
    r.identity(
        "cd_norm",
        3,
        c2 * c2 + d2 * d2,
        8.0 * lam + grad_sq,
        &[8.0 * lam, grad_sq],
    );

    let frame_lambda = |e: &[f64], u: &[f64]| {
        let d3 = pd.d3();
        let (euu, eeu) = (d3.apply(&[e, u, u]), d3.apply(&[e, e, u]));
        let (pe, pu) = (dot(&g.grad, e), dot(&g.grad, u));
        let terms = [2.0 * (euu * euu + eeu * eeu), pe * euu, pu * eeu];
        (terms.iter().sum::<f64>(), terms)
    };
    let (v, t) = frame_lambda(e, u);
    r.identity("lambda_frame_eigen", 3, lam, v, &t);
    let nv = g.nv.as_ref().expect("checked in FrameData");
    let (v, t) = frame_lambda(&nv.n, &nv.v);
    r.identity("lambda_frame_nv", 3, lam, v, &t);
    let cf = coordinate_frame(&g.metric);
    let (v, t) = frame_lambda(&cf[0], &cf[1]);
    r.identity("lambda_frame_coord", 3, lam, v, &t);

    let gap = fd.le - fd.lu;
    r.identity("lambda_phi_e", 3, lam * fd.phi_e, 2.0 * fd.euu * gap, &[]);
    r.identity("lambda_phi_u", 3, lam * fd.phi_u, -2.0 * fd.eeu * gap, &[]);
    let (grad_lam_sq, mixed) = grad_lambda_products(pd);
    let lhs = -2.0 * (fd.lam_e * fd.euu - fd.lam_u * fd.eeu) * gap;
    r.identity(
        "lambda_gradient_balance",
        4,
        lhs,
        -lam * mixed,
        &[fd.lam_e * fd.euu * gap, fd.lam_u * fd.eeu * gap],
    );

    let w = 4.0 + grad_sq;
    let num = 16.0 * (a * a + b * b) + 2.0 * w * (a * c + b * d);
    let lhs = 16.0 * (eeuu * eeuu + eeeu * eeeu) + 2.0 * eeuu * w;
    r.identity(
        "q_square_identity",
        4,
        lhs,
        num / den,
        &[16.0 * eeuu * eeuu, 2.0 * eeuu * w],
    );

    let rhs = lam * (grad_sq * (lam - grad_sq) - 6.0 * grad_sq - 8.0)
        + 16.0 * grad_lam_sq
        + 2.0 * (4.0 * (1.0 - lam) + grad_sq) * mixed;
    let terms = [
        16.0 * a * a,
        16.0 * b * b,
        2.0 * w * a * c,
        2.0 * w * b * d,
        lam * grad_sq * grad_sq,
    ];
    r.identity("abcd_expansion", 4, num, rhs, &terms);
    r.out
}

/// `(|∇λ|², ⟨∇Φ, ∇λ⟩)` in the metric.
fn grad_lambda_products(pd: &PointData) -> (f64, f64) {
    let (sq, mixed) = pd.fields.grad_products(&pd.fields.lambda);
    (sq.value(), mixed.value())
}

pub const THEOREM_CHECKS: &[&str] = &["lap_lambda_q", "lap_lambda"];

/// The weighted Laplacian of λ against its Q-form and its closed formula.
pub fn check_theorem(pd: &PointData) -> Checks {
    let f = &pd.fields;
    let g = &pd.geom;
    let mut r = Recorder::new(g.source);
    if g.source == Source::Grid {
        r.skip(THEOREM_CHECKS, SKIP_GRID);
        return r.out;
    }
    if f.order() < 5 {
        r.skip(THEOREM_CHECKS, SKIP_ORDER);
        return r.out;
    }
    if f.n != 2 {
        r.skip(THEOREM_CHECKS, SKIP_NOT_2D);
        return r.out;
    }
    if g.nv.is_none() {
        r.skip(THEOREM_CHECKS, SKIP_LOW_GRADIENT);
        return r.out;
    }
    let lam = g.lambda;
    let gs = g.grad_sq;
    let den = 8.0 * lam + gs;
    if den.abs() < 1e-10 {
        r.skip(THEOREM_CHECKS, SKIP_DENOMINATOR);
        return r.out;
    }
    let two_l = 2.0 * f.laplacian_scalar(&f.lambda).value();
    let (grad_lam_sq, mixed) = grad_lambda_products(pd);

    match &g.eigenframe {
        Some(ef) => {
            let (q, _) = f.q_tensor().expect("order checked");
            let q = q.values();
            let (e, u) = (&ef.e[..], &ef.u[..]);
            let eeuu = q.apply(&[e, e, u, u]);
            let eeeu = q.apply(&[e, e, e, u]);
            let terms = [
                2.0 * lam,
                3.0 * lam * lam,
                lam * gs,
                16.0 * (eeuu * eeuu + eeeu * eeeu),
                2.0 * eeuu * (4.0 + gs),
            ];
            r.identity("lap_lambda_q", 5, two_l, terms.iter().sum(), &terms);
        }
        None => r.skip(&["lap_lambda_q"], SKIP_DEGENERATE_FRAME),
    }

    let terms = [
        (3.0 * lam - 1.0) * (lam + 1.0),
        gs / den * (3.0 * lam - 1.0).powi(2),
        16.0 * grad_lam_sq / den,
        2.0 * (4.0 * (1.0 - lam) + gs) * mixed / den,
    ];
    r.identity("lap_lambda", 5, two_l, terms.iter().sum(), &terms);
    r.out
}

/// Body and normalization data for the a-priori bounds.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct BoundsContext {
    /// Smallest `R` with `K ⊂ B_R(0)`.
    pub outer_radius: f64,
    /// `m = min Φ`.
    pub min_phi: f64,
    /// Exponent `α > 1` of the first- and third-order estimates.
    pub alpha: f64,
    /// Allowance on `λ ≤ 1/3`; the jet error of λ on grids, zero otherwise.
    pub lambda_slack: f64,
}

/// `α(n+4)n/(1−α)²`.
pub fn gradient_constant(alpha: f64, n: usize) -> f64 {
    let n = n as f64;
    alpha * (n + 4.0) * n / (1.0 - alpha).powi(2)
}

pub const BOUNDS_CHECKS: &[&str] = &[
    "lambda_upper",
    "hess_lower",
    "grad_rough",
    "grad_alpha",
    "grad_alpha_directional",
    "third_growth",
    "g_growth",
    "phi3_norm_growth",
];

/// Curvature upper bound, geodesic convexity and the gradient and third-order growth bounds.
pub fn check_bounds(pd: &PointData, ctx: &BoundsContext) -> Checks {
    let g = &pd.geom;
    let n = pd.fields.n;
    let mut r = Recorder::new(g.source);
    let lam = g.lambda;
    if g.source == Source::Grid {
        r.bound_with("lambda_upper", 1.0 / 3.0, lam, ctx.lambda_slack);
    } else {
        r.bound("lambda_upper", 3, 1.0 / 3.0, lam, &[g.g.max_abs()]);
    }
    if n == 2 {
        r.bound("hess_lower", 3, g.min_hess_eigenvalue(), 5.0 / 6.0, &[]);
    } else {
        r.skip(&["hess_lower"], SKIP_NOT_2D);
    }
    let gs = g.grad_sq;
    let rough = 2f64.powi(n as i32 - 1) * ctx.outer_radius.powi(2 * n as i32) * g.phi.exp();
    r.bound("grad_rough", 3, rough, gs, &[]);
    let growth = (ctx.alpha * (g.phi - ctx.min_phi)).exp();
    let c = gradient_constant(ctx.alpha, n);
    r.bound("grad_alpha", 3, c * growth, gs, &[]);

    if n == 2 {
        let mut worst: Option<(f64, f64)> = None;
        for k in 0..72 {
            let th = std::f64::consts::PI * k as f64 / 72.0;
            let e = [th.cos(), th.sin()];
            let pee = g.metric.apply(&[&e, &e]);
            let pe = dot(&g.grad, &e);
            let (lhs, rhs) = (pee * c * growth, pe * pe);
            if worst.is_none_or(|(l, r)| lhs - rhs < l - r) {
                worst = Some((lhs, rhs));
            }
        }
        let (lhs, rhs) = worst.expect("nonempty direction grid");
        r.bound("grad_alpha_directional", 3, lhs, rhs, &[]);
        let t = orthonormal_cubic(&pd.d3(), &g.metric);
        let f = cubic_max(&t).value;
        r.info("third_growth", f * f, growth);
        let gop = generalized_max_eigen(&g.g, &g.metric);
        r.info("g_growth", gop * gop, growth);
    } else {
        r.skip(
            &["grad_alpha_directional", "third_growth", "g_growth"],
            SKIP_NOT_2D,
        );
    }
    let phi3_sq = full(&pd.d3(), &pd.d3(), &g.inverse);
    r.info("phi3_norm_growth", phi3_sq, (g.phi - ctx.min_phi).exp());
    r.out
}

fn generalized_max_eigen(a: &Tensor, h: &Tensor) -> f64 {
    crate::geometry::generalized_eigen2(mat2(a), mat2(h)).0[0]
}

/// Components of a 2D 3-tensor in an h-orthonormal frame.
pub fn orthonormal_cubic(t: &Tensor, metric: &Tensor) -> Tensor {
    // h = L Lᵀ, frame vectors are the columns of L⁻ᵀ
    let h = mat2(metric);
    let l11 = h[0][0].sqrt();
    let l21 = h[1][0] / l11;
    let l22 = (h[1][1] - l21 * l21).sqrt();
    let cols = [[1.0 / l11, 0.0], [-l21 / (l11 * l22), 1.0 / l22]];
    Tensor::from_fn(2, 3, |q| t.apply(&[&cols[q[0]], &cols[q[1]], &cols[q[2]]]))
}

/// Maximizer of `T(e, e, e)` over the unit circle.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct CubicMax {
    pub v: [f64; 2],
    pub value: f64,
    /// `T(a, v, v)` for the unit `a ⊥ v`; zero at a critical point.
    pub first_order: f64,
    /// `T(v, v, v) − 2T(v, a, a)`.
    pub margin: f64,
    /// Distance from the global maximum to the next local maximum.
    pub gap: f64,
}

const CUBIC_GRID: usize = 720;

/// Global maximum of the cubic form of a symmetric 2D 3-tensor.
pub fn cubic_max(t: &Tensor) -> CubicMax {
    assert!(t.n == 2 && t.rank == 3);
    let at = |th: f64| [th.cos(), th.sin()];
    let perp = |th: f64| [-th.sin(), th.cos()];
    let p = |th: f64| {
        let v = at(th);
        t.apply(&[&v, &v, &v])
    };
    if t.max_abs() == 0.0 {
        return CubicMax {
            v: [1.0, 0.0],
            value: 0.0,
            first_order: 0.0,
            margin: 0.0,
            gap: 0.0,
        };
    }
    let step = std::f64::consts::TAU / CUBIC_GRID as f64;
    let vals: Vec<f64> = (0..CUBIC_GRID).map(|k| p(k as f64 * step)).collect();
    let mut maxima: Vec<(f64, f64)> = Vec::new();
    for k in 0..CUBIC_GRID {
        let (prev, next) = (
            vals[(k + CUBIC_GRID - 1) % CUBIC_GRID],
            vals[(k + 1) % CUBIC_GRID],
        );
        if vals[k] >= prev && vals[k] > next {
            let th = polish(t, k as f64 * step, step);
            maxima.push((p(th), th));
        }
    }
    maxima.sort_by(|a, b| b.0.total_cmp(&a.0));
    let (value, th) = maxima[0];
    let gap = maxima
        .iter()
        .skip(1)
        .find(|m| angle_distance(m.1, th) > 1e-6)
        .map_or(f64::INFINITY, |m| value - m.0);
    let (v, a) = (at(th), perp(th));
    CubicMax {
        v,
        value,
        first_order: t.apply(&[&a, &v, &v]),
        margin: value - 2.0 * t.apply(&[&v, &a, &a]),
        gap,
    }
}

fn angle_distance(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(std::f64::consts::TAU);
    d.min(std::f64::consts::TAU - d)
}

/// Newton iteration on `p′(θ) = 3T(a, v, v)`, kept within one grid step.
fn polish(t: &Tensor, th0: f64, step: f64) -> f64 {
    let mut th = th0;
    for _ in 0..50 {
        let (v, a) = ([th.cos(), th.sin()], [-th.sin(), th.cos()]);
        let d1 = 3.0 * t.apply(&[&a, &v, &v]);
        let d2 = 6.0 * t.apply(&[&a, &a, &v]) - 3.0 * t.apply(&[&v, &v, &v]);
        if d2 >= 0.0 {
            break;
        }
        let dt = (-d1 / d2).clamp(-step, step);
        th += dt;
        if dt.abs() < 1e-15 {
            break;
        }
    }
    th
}

/// `f = max_{|e|_h = 1} Φ_eee` at a jet.
pub fn third_max(jet: &Jet) -> Result<CubicMax> {
    if jet.dim() != 2 || jet.order() < 3 {
        return Err(Error::validation(
            "third-derivative maximum needs a 2D jet of order >= 3",
        ));
    }
    let metric = Tensor::from_fn(2, 2, |ij| jet.d(ij));
    let d3 = Tensor::from_fn(2, 3, |q| jet.d(q));
    Ok(cubic_max(&orthonormal_cubic(&d3, &metric)))
}

pub const THIRD_MAX_CHECK: &str = "third_max_lap";

/// `Lf ≥ ½f + ¼f³` for `f = max_e Φ_eee`, with `Lf` from centered differences
/// of `f` with step `eta` contracted against `Φ^{ij}`.
pub fn check_third_max(pot: &dyn Potential, x: &[f64], eta: f64) -> Result<Checks> {
    let source = pot.source();
    let mut r = Recorder::new(source);
    let jet = pot.jet(x, 3)?;
    let here = third_max(&jet)?;
    let f = here.value;
    if here.gap < 1e-6 * (1.0 + f.abs()) {
        r.skip(&[THIRD_MAX_CHECK], SKIP_NON_UNIQUE);
        return Ok(r.out);
    }
    let h = jet.hessian();
    let det = h[0][0] * h[1][1] - h[0][1] * h[1][0];
    let inv = Tensor::from_fn(2, 2, |ij| {
        let s = if ij[0] == ij[1] { 1.0 } else { -1.0 };
        s * h[1 - ij[0]][1 - ij[1]] / det
    });
    let fx = |y: &[f64]| {
        pot.jet(y, 3)
            .ok()
            .and_then(|j| third_max(&j).ok())
            .map(|c| c.value)
    };
    let lf = match weighted_laplacian_scalar_fd(&inv, x, eta, fx) {
        Some(v) => v,
        None => {
            r.skip(&[THIRD_MAX_CHECK], SKIP_ORDER);
            return Ok(r.out);
        }
    };
    let rhs = 0.5 * f + 0.25 * f.powi(3);
    let tol = if source == Source::Grid {
        threshold(source, 4)
    } else {
        FD_TOLERANCE
    };
    let scale = lf.abs().max(rhs.abs());
    r.bound_with(THIRD_MAX_CHECK, lf, rhs, tol * (1.0 + scale));
    Ok(r.out)
}

/// Error bar of λ at a grid node: the difference between stencils of spacing `h` and `2h`.
pub fn grid_lambda_error(grid: &GridPotential, i: usize, j: usize) -> Result<f64> {
    let fine = PointData::new(grid.jet_node_step(i, j, 3, 1)?)?;
    let coarse = PointData::new(grid.jet_node_step(i, j, 3, 2)?)?;
    Ok((fine.geom.lambda - coarse.geom.lambda).abs())
}

/// λ at one analysis node with its two error components.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct LambdaNode {
    pub x: [f64; 2],
    pub lambda: f64,
    /// Stencil error, [`grid_lambda_error`].
    pub stencil: f64,
    /// `|λ − λ_coarse|` against the solve with half the resolution.
    pub refinement: f64,
}

/// Error bar of λ over the analysis nodes of a solve.
#[derive(Debug, Clone, Serialize)]
pub struct LambdaErrorBar {
    pub nodes: Vec<LambdaNode>,
    /// `max (stencil + refinement)` over the nodes.
    pub bar: f64,
}

/// λ error bar of `fine` from its stencil errors and a second solve
/// `coarse` on the same box with `(n + 1)/2` nodes per side. `stride` must
/// be even so that the analysis nodes are shared.
pub fn lambda_error_bar(
    fine: &GridPotential,
    coarse: &GridPotential,
    frac: f64,
    stride: usize,
) -> Result<LambdaErrorBar> {
    if coarse.n * 2 - 1 != fine.n
        || coarse.half_width != fine.half_width
        || !stride.is_multiple_of(2)
    {
        return Err(Error::validation(
            "coarse grid must halve the resolution on the same box, with an even stride",
        ));
    }
    let mut nodes = Vec::new();
    for (i, j) in fine.analysis_nodes(frac, stride) {
        let Ok(f) = fine.jet_node(i, j, 3) else {
            continue;
        };
        let Ok(c) = coarse.jet_node(i / 2, j / 2, 3) else {
            continue;
        };
        let lambda = PointData::new(f)?.geom.lambda;
        let lc = PointData::new(c)?.geom.lambda;
        nodes.push(LambdaNode {
            x: [fine.coord(i), fine.coord(j)],
            lambda,
            stencil: grid_lambda_error(fine, i, j)?,
            refinement: (lambda - lc).abs(),
        });
    }
    let bar = nodes
        .iter()
        .map(|n| n.stencil + n.refinement)
        .fold(0.0, f64::max);
    Ok(LambdaErrorBar { nodes, bar })
}

/// One sample point of a report.
#[derive(Debug, Clone, Serialize)]
pub struct PointRecord {
    pub point: Vec<f64>,
    pub source: Source,
    pub phi: f64,
    pub checks: Checks,
}

/// Aggregate of one check over all points.
#[derive(Debug, Clone, Serialize)]
pub struct CheckSummary {
    pub kind: Option<CheckKind>,
    pub max_abs: f64,
    pub max_rel: f64,
    pub worst_point: Option<Vec<f64>>,
    pub n_checked: usize,
    pub n_skipped: usize,
    pub pass: bool,
    /// Smallest `lhs − rhs` for bounds.
    pub min_margin: Option<f64>,
    pub skip_reasons: BTreeMap<String, usize>,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct ResidualReport {
    pub records: Vec<PointRecord>,
}

impl ResidualReport {
    pub fn push(&mut self, point: Vec<f64>, source: Source, phi: f64, checks: Checks) {
        self.records.push(PointRecord {
            point,
            source,
            phi,
            checks,
        });
    }

    /// Add checks to the record at `point`, creating it if needed.
    pub fn merge(&mut self, point: &[f64], source: Source, phi: f64, checks: Checks) {
        match self
            .records
            .iter_mut()
            .find(|r| r.point == point && r.source == source)
        {
            Some(rec) => rec.checks.extend(checks),
            None => self.push(point.to_vec(), source, phi, checks),
        }
    }

    pub fn summary(&self) -> BTreeMap<String, CheckSummary> {
        let mut out: BTreeMap<String, CheckSummary> = BTreeMap::new();
        for rec in &self.records {
            for (name, entry) in &rec.checks {
                let s = out.entry(name.clone()).or_insert_with(|| CheckSummary {
                    kind: None,
                    max_abs: 0.0,
                    max_rel: 0.0,
                    worst_point: None,
                    n_checked: 0,
                    n_skipped: 0,
                    pass: true,
                    min_margin: None,
                    skip_reasons: BTreeMap::new(),
                });
                match entry {
                    Entry::Skipped { reason } => {
                        s.n_skipped += 1;
                        *s.skip_reasons.entry(reason.clone()).or_default() += 1;
                    }
                    Entry::Checked(v) => {
                        s.kind = Some(v.kind);
                        s.n_checked += 1;
                        s.pass &= v.pass;
                        let worse = !s.max_abs.is_nan() && (v.abs.is_nan() || v.abs > s.max_abs);
                        if worse || s.worst_point.is_none() {
                            s.max_abs = v.abs;
                            s.worst_point = Some(rec.point.clone());
                        }
                        s.max_rel = s.max_rel.max(v.rel);
                        if v.kind == CheckKind::Bound {
                            let m = v.margin();
                            s.min_margin = Some(s.min_margin.map_or(m, |o: f64| o.min(m)));
                        }
                    }
                }
            }
        }
        out
    }

    /// True iff no checked entry fails.
    pub fn all_pass(&self) -> bool {
        self.records
            .iter()
            .all(|r| r.checks.values().all(|e| e.value().is_none_or(|v| v.pass)))
    }

    pub fn failures(&self) -> Vec<String> {
        self.summary()
            .into_iter()
            .filter(|(_, s)| !s.pass)
            .map(|(k, _)| k)
            .collect()
    }

    /// Summary JSON: `{check: {max_abs, max_rel, worst_point, n_skipped, pass, …}}`.
    pub fn write_json<W: Write>(&self, w: W) -> Result<()> {
        serde_json::to_writer_pretty(w, &self.summary())?;
        Ok(())
    }

    /// One row per point and check.
    pub fn write_points_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record([
            "x", "y", "source", "phi", "check", "status", "lhs", "rhs", "abs", "rel", "pass",
            "reason",
        ])?;
        for rec in &self.records {
            let x = rec.point.first().copied().unwrap_or(f64::NAN);
            let y = rec.point.get(1).copied().unwrap_or(f64::NAN);
            for (name, entry) in &rec.checks {
                let mut row = vec![
                    fmt17(x),
                    fmt17(y),
                    rec.source.as_str().into(),
                    fmt17(rec.phi),
                    name.clone(),
                ];
                match entry {
                    Entry::Checked(v) => row.extend([
                        "checked".into(),
                        fmt17(v.lhs),
                        fmt17(v.rhs),
                        fmt17(v.abs),
                        fmt17(v.rel),
                        v.pass.to_string(),
                        String::new(),
                    ]),
                    Entry::Skipped { reason } => row.extend([
                        "skipped".into(),
                        "".into(),
                        "".into(),
                        "".into(),
                        "".into(),
                        "".into(),
                        reason.clone(),
                    ]),
                }
                wr.write_record(&row)?;
            }
        }
        wr.flush()?;
        Ok(())
    }

    /// Least-squares slope of `log(lhs)` against `Φ` for an info check.
    pub fn growth_exponent(&self, name: &str) -> Option<f64> {
        let pts: Vec<(f64, f64)> = self
            .records
            .iter()
            .filter_map(|r| {
                r.checks
                    .get(name)?
                    .value()
                    .filter(|v| v.lhs > 0.0)
                    .map(|v| (r.phi, v.lhs.ln()))
            })
            .collect();
        if pts.len() < 2 {
            return None;
        }
        let k = pts.len() as f64;
        let mx = pts.iter().map(|p| p.0).sum::<f64>() / k;
        let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
        let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
        let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        (sxx > 0.0).then(|| sxy / sxx)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::potentials::{CubePotential, SimplexPotential};
    use crate::sampling::disk_points;
    use proptest::prelude::*;

    fn assert_all_pass(c: &Checks, ctx: &str) {
        for (k, e) in c {
            if let Entry::Checked(v) = e {
                assert!(v.pass, "{ctx}: {k} failed: {v:?}");
            }
        }
    }

    #[test]
    fn lambda_error_bar_covers_sampled_simplex() {
        let pot = SimplexPotential::new(2);
        let f = |x: f64, y: f64| pot.value(&[x, y]);
        let fine = GridPotential::from_fn(4.0, 129, None, f);
        let coarse = GridPotential::from_fn(4.0, 65, None, f);
        let e = lambda_error_bar(&fine, &coarse, 0.5, 8).unwrap();
        assert!(!e.nodes.is_empty());
        for n in &e.nodes {
            assert!(
                (n.lambda - 1.0 / 3.0).abs() <= n.stencil + n.refinement,
                "{n:?}"
            );
        }
        assert!(e.bar < 1e-2, "{}", e.bar);
        assert!(lambda_error_bar(&fine, &fine, 0.5, 8).is_err());
        assert!(lambda_error_bar(&fine, &coarse, 0.5, 3).is_err());
    }

    #[test]
    fn simplex_identities_hold() {
        let pot = SimplexPotential::new(2);
        for p in disk_points(12, 4.0, 0) {
            let pd = PointData::at(&pot, &p, 5).unwrap();
            for c in [
                check_algebraic(&pd),
                check_laplacian(&pd),
                check_q_and_frame(&pd),
                check_theorem(&pd),
            ] {
                assert_all_pass(&c, &format!("simplex at {p:?}"));
            }
        }
    }

    #[test]
    fn cube_identities_hold() {
        let pot = CubePotential::new(2);
        for p in disk_points(12, 4.0, 0) {
            let pd = PointData::at(&pot, &p, 5).unwrap();
            for c in [
                check_algebraic(&pd),
                check_laplacian(&pd),
                check_theorem(&pd),
            ] {
                assert_all_pass(&c, &format!("cube at {p:?}"));
            }
        }
    }

    #[test]
    fn cube_origin_hessian_values_are_exact() {
        let pd = PointData::at(&CubePotential::new(2), &[0.0, 0.0], 5).unwrap();
        let c = check_algebraic(&pd);
        for (name, want) in [
            ("hess_trace", 2.0),
            ("hess_hs_norm", 2.0),
            ("hess_det", 1.0),
        ] {
            let v = c[name].value().unwrap();
            assert!(
                (v.lhs - want).abs() < 1e-15 && v.abs < 1e-15,
                "{name}: {v:?}"
            );
        }
        assert!(matches!(&c["frame_nn"], Entry::Skipped { reason } if reason == SKIP_LOW_GRADIENT));
        let t = check_theorem(&pd);
        assert!(matches!(&t["lap_lambda"], Entry::Skipped { .. }));
    }

    #[test]
    fn grid_jets_skip_the_laplacian_suite() {
        let grid =
            GridPotential::from_fn(4.0, 81, None, |x, y| CubePotential::new(2).value(&[x, y]));
        let pd = PointData::at(&grid, &[0.5, 0.5], 4).unwrap();
        let c = check_laplacian(&pd);
        assert!(c
            .values()
            .all(|e| matches!(e, Entry::Skipped { reason } if reason == SKIP_GRID)));
    }

    #[test]
    fn cubic_max_examples() {
        let mut t = Tensor::from_fn(2, 3, |_| 0.0);
        let c = cubic_max(&t);
        assert_eq!((c.value, c.first_order, c.margin), (0.0, 0.0, 0.0));
        t.data[0] = 1.0;
        let c = cubic_max(&t);
        assert!((c.v[0] - 1.0).abs() < 1e-12 && c.v[1].abs() < 1e-12);
        assert!((c.value - 1.0).abs() < 1e-14);
        assert!(c.first_order.abs() < 1e-14);
        assert!((c.margin - 1.0).abs() < 1e-14);
    }

    fn sym3(a: f64, b: f64, c: f64, d: f64) -> Tensor {
        Tensor::from_fn(2, 3, |q| [a, b, c, d][q.iter().sum::<usize>()])
    }

    proptest! {
        #[test]
        fn cubic_max_matches_brute_force(a in -1.0..1.0f64, b in -1.0..1.0f64, c in -1.0..1.0f64, d in -1.0..1.0f64) {
            let t = sym3(a, b, c, d);
            let m = cubic_max(&t);
            let brute = (0..100_000)
                .map(|k| {
                    let th = std::f64::consts::TAU * k as f64 / 100_000.0;
                    let v = [th.cos(), th.sin()];
                    t.apply(&[&v, &v, &v])
                })
                .fold(f64::NEG_INFINITY, f64::max);
            prop_assert!((m.value - brute).abs() < 1e-8);
            prop_assert!(m.value >= brute - 1e-14);
            prop_assert!(m.first_order.abs() < 1e-8);
            prop_assert!(m.margin >= -1e-10);
        }

        #[test]
        fn cubic_max_is_scale_equivariant(a in -1.0..1.0f64, b in -1.0..1.0f64, c in -1.0..1.0f64, d in -1.0..1.0f64, s in 0.1..10.0f64) {
            let t = sym3(a, b, c, d);
            let ts = sym3(s * a, s * b, s * c, s * d);
            let (m, ms) = (cubic_max(&t), cubic_max(&ts));
            prop_assume!(m.gap > 1e-6);
            prop_assert!((ms.value - s * m.value).abs() < 1e-10 * (1.0 + s));
            prop_assert!((ms.v[0] - m.v[0]).abs() < 1e-7 && (ms.v[1] - m.v[1]).abs() < 1e-7);
        }
    }

    #[test]
    fn third_max_inequality_on_closed_forms() {
        let simplex = SimplexPotential::new(2);
        for p in disk_points(5, 3.0, 1) {
            let c = check_third_max(&simplex, &p, 1e-3).unwrap();
            assert_all_pass(&c, "simplex third max");
        }
        let c = check_third_max(&CubePotential::new(2), &[0.0, 0.0], 1e-3).unwrap();
        assert!(c[THIRD_MAX_CHECK].value().is_none_or(|v| v.pass));
    }

    #[test]
    fn bounds_on_closed_forms() {
        let simplex = SimplexPotential::new(2);
        let ctx = BoundsContext {
            outer_radius: 5f64.sqrt(),
            min_phi: simplex.min_value(),
            alpha: 2.0,
            lambda_slack: 0.0,
        };
        for p in disk_points(10, 5.0, 2) {
            let pd = PointData::at(&simplex, &p, 3).unwrap();
            let c = check_bounds(&pd, &ctx);
            assert_all_pass(&c, "simplex bounds");
            assert!(c["lambda_upper"].value().unwrap().margin().abs() < 1e-12);
        }
        assert_eq!(gradient_constant(2.0, 2), 24.0);
    }

    #[test]
    fn ball_identities_hold() {
        use crate::potentials::{ball_profile, BallProfileConfig};
        let prof = ball_profile(BallProfileConfig::default()).unwrap();
        for (k, r) in [0.5, 1.0, 2.0, 3.0, 4.0].into_iter().enumerate() {
            let th = 0.3 + k as f64;
            let pd = PointData::at(&prof, &[r * th.cos(), r * th.sin()], 5).unwrap();
            for c in [
                check_algebraic(&pd),
                check_laplacian(&pd),
                check_q_and_frame(&pd),
                check_theorem(&pd),
            ] {
                assert_all_pass(&c, &format!("ball at r={r}"));
            }
            let t = check_theorem(&pd);
            assert!(t["lap_lambda"].value().unwrap().pass);
        }
    }

    #[test]
    fn report_summary_and_csv() {
        let pot = SimplexPotential::new(2);
        let mut rep = ResidualReport::default();
        for p in disk_points(4, 2.0, 0) {
            let pd = PointData::at(&pot, &p, 3).unwrap();
            rep.push(
                p.to_vec(),
                Source::ClosedForm,
                pd.geom.phi,
                check_algebraic(&pd),
            );
        }
        let s = rep.summary();
        assert_eq!(s["trace_phi3"].n_checked, 4);
        assert!(rep.all_pass());
        let mut buf = Vec::new();
        rep.write_points_csv(&mut buf).unwrap();
        assert!(String::from_utf8(buf)
            .unwrap()
            .starts_with("x,y,source,phi,check"));
    }
}
