//! Curvature of the Hessian metric `h = Φ_ij dx^i dx^j`.
//!
//! [`Fields`] holds every tensor as a Taylor series about the jet point, so
//! covariant derivatives and Laplacians of derived quantities (λ, `g`, `Φ_iab`)
//! are exact up to the jet's truncation. [`PointGeometry`] is the evaluated
//! package at the point, with frames and eigenvalues.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::error::{Error, JetError, Result};
use crate::potentials::{Jet, Source};
use crate::series::Series;

/// Below this `|∇Φ|` the `(n, v)` frame is undefined.
pub const DELTA_GRAD: f64 = 1e-8;
/// Below this eigenvalue gap the eigenframe is not unique.
pub const DELTA_EIGEN: f64 = 1e-8;

/// Every index tuple of length `rank` over `0..n`, row-major.
pub fn all_indices(n: usize, rank: usize) -> Vec<Vec<usize>> {
    let total = n.pow(rank as u32);
    (0..total)
        .map(|mut k| {
            let mut idx = vec![0; rank];
            for slot in (0..rank).rev() {
                idx[slot] = k % n;
                k /= n;
            }
            idx
        })
        .collect()
}

fn flat(n: usize, idx: &[usize]) -> usize {
    idx.iter().fold(0, |acc, &i| acc * n + i)
}

/// Tensor with Taylor-series components, row-major in its indices.
#[derive(Debug, Clone)]
pub struct STensor {
    pub n: usize,
    pub rank: usize,
    data: Vec<Series>,
}

impl STensor {
    pub fn from_fn(n: usize, rank: usize, mut f: impl FnMut(&[usize]) -> Series) -> STensor {
        let data = all_indices(n, rank).iter().map(|i| f(i)).collect();
        STensor { n, rank, data }
    }

    pub fn get(&self, idx: &[usize]) -> &Series {
        &self.data[flat(self.n, idx)]
    }

    pub fn order(&self) -> usize {
        self.data.iter().map(Series::order).min().unwrap_or(0)
    }

    pub fn values(&self) -> Tensor {
        Tensor {
            n: self.n,
            rank: self.rank,
            data: self.data.iter().map(Series::value).collect(),
        }
    }

    pub fn scalar(s: Series) -> STensor {
        STensor {
            n: s.dim(),
            rank: 0,
            data: vec![s],
        }
    }
}

/// Plain tensor of values, row-major in its indices.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub n: usize,
    pub rank: usize,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn from_fn(n: usize, rank: usize, mut f: impl FnMut(&[usize]) -> f64) -> Tensor {
        let data = all_indices(n, rank).iter().map(|i| f(i)).collect();
        Tensor { n, rank, data }
    }

    pub fn get(&self, idx: &[usize]) -> f64 {
        self.data[flat(self.n, idx)]
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn indices(&self) -> Vec<Vec<usize>> {
        all_indices(self.n, self.rank)
    }

    /// Components keyed by 1-based index strings, e.g. `"1212"`.
    pub fn to_map(&self) -> BTreeMap<String, f64> {
        self.indices()
            .into_iter()
            .map(|idx| {
                (
                    idx.iter().map(|i| (i + 1).to_string()).collect::<String>(),
                    self.get(&idx),
                )
            })
            .collect()
    }

    /// `T(a, b, …)` contraction of every slot with vectors.
    pub fn apply(&self, vecs: &[&[f64]]) -> f64 {
        assert_eq!(vecs.len(), self.rank);
        self.indices()
            .iter()
            .map(|idx| self.get(idx) * idx.iter().zip(vecs).map(|(&i, v)| v[i]).product::<f64>())
            .sum()
    }

    /// Largest deviation between the tensor and its index permutations.
    pub fn asymmetry(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for idx in self.indices() {
            let mut sorted = idx.clone();
            sorted.sort_unstable();
            worst = worst.max((self.get(&idx) - self.get(&sorted)).abs());
        }
        worst
    }
}

impl Serialize for Tensor {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.to_map().serialize(s)
    }
}

/// Inverse of a symmetric positive-definite matrix of series (Gauss-Jordan, no pivoting).
pub fn inverse_spd(m: &[Vec<Series>]) -> Vec<Vec<Series>> {
    let n = m.len();
    let order = m[0][0].order();
    let mut a: Vec<Vec<Series>> = m.to_vec();
    let mut inv: Vec<Vec<Series>> = (0..n)
        .map(|i| {
            (0..n)
                .map(|j| Series::constant(n_dim(m), order, if i == j { 1.0 } else { 0.0 }))
                .collect()
        })
        .collect();
    for k in 0..n {
        let p = a[k][k].recip();
        for j in 0..n {
            a[k][j] = &a[k][j] * &p;
            inv[k][j] = &inv[k][j] * &p;
        }
        for i in 0..n {
            if i == k {
                continue;
            }
            let f = a[i][k].clone();
            for j in 0..n {
                a[i][j] = &a[i][j] - &(&f * &a[k][j]);
                inv[i][j] = &inv[i][j] - &(&f * &inv[k][j]);
            }
        }
    }
    inv
}

fn n_dim(m: &[Vec<Series>]) -> usize {
    m[0][0].dim()
}

/// Which tensor the covariant weighted Laplacian is applied to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LaplacianTarget {
    PhiI,
    PhiIab,
    G,
}

/// All geometric tensors as Taylor series about the jet point.
#[derive(Debug, Clone)]
pub struct Fields {
    pub n: usize,
    pub source: Source,
    /// `d[k]` is the `k`-th derivative tensor of `Φ`, `k ≤ order`.
    pub d: Vec<STensor>,
    pub inv: STensor,
    /// `Γ^k_ij` stored with index order `(k, i, j)`.
    pub christoffel: STensor,
    /// `Φ^k_ij = Φ^{kl}Φ_lij`, index order `(k, i, j)`.
    pub phi3_up: STensor,
    pub riemann: STensor,
    pub ricci: STensor,
    pub g: STensor,
    /// `Φ^k = Φ^{kl}Φ_l`.
    pub grad_up: STensor,
    pub grad_sq: Series,
    pub lambda: Series,
    pub hess: STensor,
}

impl Fields {
    pub fn from_jet(jet: &Jet) -> Result<Fields> {
        if jet.order() < 3 {
            return Err(Error::validation(format!(
                "geometry needs a jet of order >= 3, got {}",
                jet.order()
            )));
        }
        let n = jet.dim();
        let order = jet.order();
        let mut d = vec![STensor::scalar(jet.series().clone())];
        for k in 1..=order {
            let prev = &d[k - 1];
            d.push(STensor::from_fn(n, k, |idx| {
                prev.get(&idx[1..]).partial(idx[0])
            }));
        }
        let h: Vec<Vec<Series>> = (0..n)
            .map(|i| (0..n).map(|j| d[2].get(&[i, j]).clone()).collect())
            .collect();
        if h[0][0].value() <= 0.0 {
            return Err(JetError::Degenerate.into());
        }
        let inv_m = inverse_spd(&h);
        let inv = STensor::from_fn(n, 2, |i| inv_m[i[0]][i[1]].clone());
        let d3 = &d[3];
        let sum = |terms: &mut dyn Iterator<Item = Series>, order: usize| {
            terms.fold(Series::zero(n, order), |a, b| a + b)
        };
        let o3 = d3.order();
        let phi3_up = STensor::from_fn(n, 3, |idx| {
            let (k, i, j) = (idx[0], idx[1], idx[2]);
            sum(
                &mut (0..n).map(|l| inv.get(&[k, l]) * d3.get(&[l, i, j])),
                o3,
            )
        });
        let christoffel = STensor::from_fn(n, 3, |idx| phi3_up.get(idx).scale(0.5));
        // Riem_ijkl = ¼(Φ_ila Φ^a_kj − Φ_ika Φ^a_jl)
        let riemann = STensor::from_fn(n, 4, |idx| {
            let (i, j, k, l) = (idx[0], idx[1], idx[2], idx[3]);
            let mut s = Series::zero(n, o3);
            for a in 0..n {
                s = s + d3.get(&[i, l, a]) * phi3_up.get(&[a, k, j])
                    - d3.get(&[i, k, a]) * phi3_up.get(&[a, j, l]);
            }
            s.scale(0.25)
        });
        let ricci = STensor::from_fn(n, 2, |idx| {
            let (j, l) = (idx[0], idx[1]);
            let mut s = Series::zero(n, o3);
            for i in 0..n {
                for k in 0..n {
                    s = s + inv.get(&[i, k]) * riemann.get(&[i, j, k, l]);
                }
            }
            s
        });
        // g_ij = Φ_iab Φ_j^{ab} = Φ^a_ic Φ^c_ja
        let g = STensor::from_fn(n, 2, |idx| {
            let (i, j) = (idx[0], idx[1]);
            let mut s = Series::zero(n, o3);
            for a in 0..n {
                for c in 0..n {
                    s = s + phi3_up.get(&[a, i, c]) * phi3_up.get(&[c, j, a]);
                }
            }
            s
        });
        let o1 = d[1].order();
        let grad_up = STensor::from_fn(n, 1, |idx| {
            sum(
                &mut (0..n).map(|l| inv.get(&[idx[0], l]) * d[1].get(&[l])),
                o1,
            )
        });
        let grad_sq = sum(&mut (0..n).map(|k| grad_up.get(&[k]) * d[1].get(&[k])), o1);
        let tr_ric = {
            let mut s = Series::zero(n, o3);
            for i in 0..n {
                for j in 0..n {
                    s = s + inv.get(&[i, j]) * ricci.get(&[i, j]);
                }
            }
            s
        };
        // Ric = (λ/4)Φ_ij projected in the metric inner product
        let lambda = tr_ric.scale(4.0 / n as f64);
        let hess = STensor::from_fn(n, 2, |idx| {
            let (i, j) = (idx[0], idx[1]);
            let mut s = d[2].get(&[i, j]).clone();
            for k in 0..n {
                s = s - christoffel.get(&[k, i, j]) * d[1].get(&[k]);
            }
            s
        });
        Ok(Fields {
            n,
            source: jet.source,
            d,
            inv,
            christoffel,
            phi3_up,
            riemann,
            ricci,
            g,
            grad_up,
            grad_sq,
            lambda,
            hess,
        })
    }

    pub fn order(&self) -> usize {
        self.d.len() - 1
    }

    /// `∇T` with the derivative index first: `(∇T)_{q i₁…} = ∂_q T_{i₁…} − Σ_s Γ^m_{q i_s} T_{…m…}`.
    pub fn covariant(&self, t: &STensor) -> STensor {
        let n = self.n;
        STensor::from_fn(n, t.rank + 1, |idx| {
            let q = idx[0];
            let rest = &idx[1..];
            let mut s = t.get(rest).partial(q);
            let mut slot_idx = rest.to_vec();
            for slot in 0..rest.len() {
                for m in 0..n {
                    slot_idx[slot] = m;
                    s = s - self.christoffel.get(&[m, q, rest[slot]]) * t.get(&slot_idx);
                }
                slot_idx[slot] = rest[slot];
            }
            s
        })
    }

    /// Weighted tensor Laplacian `LT = Φ^{pq}∇_p∇_qT − ½Φ^k∇_kT`.
    pub fn laplacian_tensor(&self, t: &STensor) -> STensor {
        let n = self.n;
        let dt = self.covariant(t);
        let ddt = self.covariant(&dt);
        STensor::from_fn(n, t.rank, |idx| {
            let o = ddt.order();
            let mut s = Series::zero(n, o);
            for p in 0..n {
                for q in 0..n {
                    let mut full = vec![p, q];
                    full.extend_from_slice(idx);
                    s = s + self.inv.get(&[p, q]) * ddt.get(&full);
                }
                let mut first = vec![p];
                first.extend_from_slice(idx);
                s = s - (self.grad_up.get(&[p]) * dt.get(&first)).scale(0.5);
            }
            s
        })
    }

    /// Scalar weighted Laplacian `Lf = Φ^{ij}f_ij`, as a series of order `f.order() − 2`.
    pub fn laplacian_scalar(&self, f: &Series) -> Series {
        let n = self.n;
        let mut s = Series::zero(n, f.order().saturating_sub(2));
        for i in 0..n {
            let fi = f.partial(i);
            for j in 0..n {
                s = s + self.inv.get(&[i, j]) * fi.partial(j);
            }
        }
        s
    }

    /// `|∇f|²_h` and `⟨∇Φ, ∇f⟩_h` as series.
    pub fn grad_products(&self, f: &Series) -> (Series, Series) {
        let n = self.n;
        let o = f.order().saturating_sub(1);
        let mut sq = Series::zero(n, o);
        let mut mixed = Series::zero(n, o);
        for i in 0..n {
            let fi = f.partial(i);
            for j in 0..n {
                let fj = f.partial(j);
                sq = sq + self.inv.get(&[i, j]) * &fi * &fj;
            }
            mixed = mixed + self.grad_up.get(&[i]) * &fi;
        }
        (sq, mixed)
    }

    /// `Q_abcd = Φ_abcd − ½(Φ^k_abΦ_kcd + Φ^k_acΦ_kbd + Φ^k_adΦ_kbc)`, symmetrized.
    pub fn q_tensor(&self) -> Result<(STensor, f64)> {
        if self.order() < 4 {
            return Err(Error::validation("Q needs a jet of order >= 4"));
        }
        let n = self.n;
        let d3 = &self.d[3];
        let d4 = &self.d[4];
        let raw = STensor::from_fn(n, 4, |idx| {
            let (a, b, c, dd) = (idx[0], idx[1], idx[2], idx[3]);
            let mut s = d4.get(idx).clone();
            for k in 0..n {
                let t = self.phi3_up.get(&[k, a, b]) * d3.get(&[k, c, dd])
                    + self.phi3_up.get(&[k, a, c]) * d3.get(&[k, b, dd])
                    + self.phi3_up.get(&[k, a, dd]) * d3.get(&[k, b, c]);
                s = s - t.scale(0.5);
            }
            s
        });
        let asym = raw.values().asymmetry();
        let perms = all_indices(4, 4)
            .into_iter()
            .filter(|p| {
                let mut q = p.clone();
                q.sort_unstable();
                q == [0, 1, 2, 3]
            })
            .collect::<Vec<_>>();
        let sym = STensor::from_fn(n, 4, |idx| {
            let o = raw.order();
            let mut s = Series::zero(n, o);
            for p in &perms {
                let j: Vec<usize> = p.iter().map(|&k| idx[k]).collect();
                s = s + raw.get(&j);
            }
            s.scale(1.0 / perms.len() as f64)
        });
        Ok((sym, asym))
    }

    /// Covariant weighted Laplacian of `Φ_i`, `Φ_iab` or `g_ij`.
    pub fn weighted_laplacian_tensor(&self, which: LaplacianTarget) -> Result<Tensor> {
        if self.source == Source::Grid {
            return Err(Error::validation(
                "tensor Laplacians are not computed from grid jets",
            ));
        }
        if self.order() < 5 {
            return Err(Error::validation("tensor Laplacians need a jet of order 5"));
        }
        let t = match which {
            LaplacianTarget::PhiI => self.d[1].clone(),
            LaplacianTarget::PhiIab => self.d[3].clone(),
            LaplacianTarget::G => self.g.clone(),
        };
        Ok(self.laplacian_tensor(&t).values())
    }
}

/// h-orthonormal frame with `n = ∇Φ/|∇Φ|`.
#[derive(Debug, Clone, Serialize)]
pub struct NvFrame {
    pub n: [f64; 2],
    pub v: [f64; 2],
}

/// h-orthonormal eigenframe of the Riemannian Hessian of `Φ`.
#[derive(Debug, Clone, Serialize)]
pub struct EigenFrame {
    pub e: [f64; 2],
    pub u: [f64; 2],
}

/// Generalized eigenpairs of `a x = Λ h x` for symmetric 2×2 `a` and SPD `h`,
/// largest first, with h-normalized eigenvectors.
pub fn generalized_eigen2(a: [[f64; 2]; 2], h: [[f64; 2]; 2]) -> ([f64; 2], [[f64; 2]; 2]) {
    // h = L Lᵀ
    let l11 = h[0][0].sqrt();
    let l21 = h[1][0] / l11;
    let l22 = (h[1][1] - l21 * l21).sqrt();
    // C = L⁻¹ a L⁻ᵀ
    let linv = [[1.0 / l11, 0.0], [-l21 / (l11 * l22), 1.0 / l22]];
    let mut c = [[0.0; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            for k in 0..2 {
                for m in 0..2 {
                    c[i][j] += linv[i][k] * a[k][m] * linv[j][m];
                }
            }
        }
    }
    let tr = c[0][0] + c[1][1];
    let diff = 0.5 * (c[0][0] - c[1][1]);
    let off = 0.5 * (c[0][1] + c[1][0]);
    let rad = diff.hypot(off);
    let lam = [0.5 * tr + rad, 0.5 * tr - rad];
    // eigenvector angle of the symmetric matrix
    let theta = 0.5 * off.atan2(diff);
    let y1 = [theta.cos(), theta.sin()];
    let y2 = [-theta.sin(), theta.cos()];
    // x = L⁻ᵀ y
    let back = |y: [f64; 2]| [linv[0][0] * y[0] + linv[1][0] * y[1], linv[1][1] * y[1]];
    (lam, [back(y1), back(y2)])
}

/// Evaluated geometry at one point.
#[derive(Debug, Clone, Serialize)]
pub struct PointGeometry {
    pub point: Vec<f64>,
    pub source: Source,
    pub phi: f64,
    pub grad: Vec<f64>,
    pub metric: Tensor,
    pub inverse: Tensor,
    pub christoffel: Tensor,
    pub riemann: Tensor,
    pub ricci: Tensor,
    pub lambda: f64,
    /// Max deviation of Ric from `(λ/4)Φ_ij`.
    pub anisotropy: f64,
    pub g: Tensor,
    pub grad_up: Vec<f64>,
    pub grad_sq: f64,
    /// Riemannian Hessian `∇²Φ`.
    pub hess: Tensor,
    /// Generalized eigenvalues `(Λ(e), Λ(u))` of `∇²Φ` against `Φ_ij` (2D only).
    pub eigenvalues: Option<[f64; 2]>,
    pub nv: Option<NvFrame>,
    pub eigenframe: Option<EigenFrame>,
}

impl PointGeometry {
    pub fn from_fields(f: &Fields, point: &[f64]) -> PointGeometry {
        let metric = f.d[2].values();
        let hess = f.hess.values();
        let grad = f.d[1].values().data;
        let grad_up = f.grad_up.values().data;
        let grad_sq = f.grad_sq.value();
        let ricci = f.ricci.values();
        let lambda = f.lambda.value();
        let anisotropy = ricci
            .indices()
            .iter()
            .map(|i| (ricci.get(i) - 0.25 * lambda * metric.get(i)).abs())
            .fold(0.0, f64::max);
        let mut eigenvalues = None;
        let mut nv = None;
        let mut eigenframe = None;
        if f.n == 2 {
            let m2 = |t: &Tensor| {
                [
                    [t.get(&[0, 0]), t.get(&[0, 1])],
                    [t.get(&[1, 0]), t.get(&[1, 1])],
                ]
            };
            let (lam, vecs) = generalized_eigen2(m2(&hess), m2(&metric));
            eigenvalues = Some(lam);
            let norm = grad_sq.max(0.0).sqrt();
            let h = m2(&metric);
            let hdot = |a: [f64; 2], b: [f64; 2]| {
                a[0] * (h[0][0] * b[0] + h[0][1] * b[1]) + a[1] * (h[1][0] * b[0] + h[1][1] * b[1])
            };
            if norm >= DELTA_GRAD {
                let n = [grad_up[0] / norm, grad_up[1] / norm];
                // v ⊥_h n iff v annihilates the covector h·n; det[n, v] = h(n, n) > 0
                let hn = [
                    h[0][0] * n[0] + h[0][1] * n[1],
                    h[1][0] * n[0] + h[1][1] * n[1],
                ];
                let mut v = [-hn[1], hn[0]];
                let vn = hdot(v, v).sqrt();
                v = [v[0] / vn, v[1] / vn];
                nv = Some(NvFrame { n, v });
            }
            if lam[0] - lam[1] >= DELTA_EIGEN {
                let mut e = vecs[0];
                let pe = grad[0] * e[0] + grad[1] * e[1];
                if pe < 0.0 || (pe.abs() < 1e-14 && e[0] < 0.0) {
                    e = [-e[0], -e[1]];
                }
                let mut u = vecs[1];
                // positively oriented (e, u)
                if e[0] * u[1] - e[1] * u[0] < 0.0 {
                    u = [-u[0], -u[1]];
                }
                eigenframe = Some(EigenFrame { e, u });
            }
        }
        PointGeometry {
            point: point.to_vec(),
            source: f.source,
            phi: f.d[0].get(&[]).value(),
            grad,
            metric,
            inverse: f.inv.values(),
            christoffel: f.christoffel.values(),
            riemann: f.riemann.values(),
            ricci,
            lambda,
            anisotropy,
            g: f.g.values(),
            grad_up,
            grad_sq,
            hess,
            eigenvalues,
            nv,
            eigenframe,
        }
    }

    /// Sectional curvature `R = λ/4`.
    pub fn sectional(&self) -> f64 {
        0.25 * self.lambda
    }

    /// `h(a, b)`.
    pub fn hdot(&self, a: &[f64], b: &[f64]) -> f64 {
        self.metric.apply(&[a, b])
    }

    /// Smallest generalized eigenvalue of `∇²Φ` against `Φ_ij` (NaN unless 2D).
    pub fn min_hess_eigenvalue(&self) -> f64 {
        self.eigenvalues.map_or(f64::NAN, |l| l[1])
    }
}

/// Full geometry package from a jet of order ≥ 3.
pub fn point_geometry(jet: &Jet) -> Result<PointGeometry> {
    let f = Fields::from_jet(jet)?;
    Ok(PointGeometry::from_fields(&f, &jet.point))
}

/// Fully symmetric `Q = ∇Φ_bcd` at the jet point, with the pre-symmetrization asymmetry.
pub fn covariant_q(jet: &Jet) -> Result<(Tensor, f64)> {
    let f = Fields::from_jet(jet)?;
    let (q, asym) = f.q_tensor()?;
    Ok((q.values(), asym))
}

/// `Φ^{ij} f_ij` at `x` from a scalar callback, by centered differences with step `eta`.
pub fn weighted_laplacian_scalar_fd(
    inv: &Tensor,
    x: &[f64],
    eta: f64,
    f: impl Fn(&[f64]) -> Option<f64>,
) -> Option<f64> {
    let n = x.len();
    let at = |dx: &[f64]| {
        let p: Vec<f64> = x.iter().zip(dx).map(|(a, b)| a + b).collect();
        f(&p)
    };
    let f0 = at(&vec![0.0; n])?;
    let mut s = 0.0;
    for i in 0..n {
        for j in 0..n {
            let fij = if i == j {
                let mut p = vec![0.0; n];
                p[i] = eta;
                let fp = at(&p)?;
                p[i] = -eta;
                let fm = at(&p)?;
                (fp - 2.0 * f0 + fm) / (eta * eta)
            } else {
                let mut vals = [0.0; 4];
                for (k, (si, sj)) in [(1.0, 1.0), (1.0, -1.0), (-1.0, 1.0), (-1.0, -1.0)]
                    .iter()
                    .enumerate()
                {
                    let mut p = vec![0.0; n];
                    p[i] = si * eta;
                    p[j] = sj * eta;
                    vals[k] = at(&p)?;
                }
                (vals[0] - vals[1] - vals[2] + vals[3]) / (4.0 * eta * eta)
            };
            s += inv.get(&[i, j]) * fij;
        }
    }
    Some(s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::potentials::{CubePotential, Potential, SimplexPotential};
    use approx::assert_abs_diff_eq;

    #[test]
    fn cube_is_flat() {
        let p = CubePotential::new(2);
        for x in [[0.0, 0.0], [1.3, -0.4], [-5.0, 2.0]] {
            let g = point_geometry(&p.jet(&x, 3).unwrap()).unwrap();
            assert!(g.riemann.max_abs() < 1e-14);
            assert!(g.lambda.abs() < 1e-14);
        }
    }

    #[test]
    fn simplex_has_constant_lambda() {
        let p = SimplexPotential::new(2);
        for x in [[0.0, 0.0], [0.7, -2.0], [3.0, 4.0]] {
            let g = point_geometry(&p.jet(&x, 3).unwrap()).unwrap();
            assert_abs_diff_eq!(g.lambda, 1.0 / 3.0, epsilon = 1e-12);
            assert!(g.anisotropy < 1e-12);
        }
    }

    #[test]
    fn simplex_n3_ricci_is_an_eighth_of_the_metric() {
        // (n−1)/(4(n+1)) = 1/8 for n = 3
        let p = SimplexPotential::new(3);
        let g = point_geometry(&p.jet(&[0.3, -0.2, 1.1], 3).unwrap()).unwrap();
        for idx in g.ricci.indices() {
            assert_abs_diff_eq!(g.ricci.get(&idx), g.metric.get(&idx) / 8.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn cube_hessian_eigenvalues() {
        // {1 + ½e^{φ}φ'², 1} at (t, 0)
        let p = CubePotential::new(2);
        for t in [0.5f64, 2.0, -3.0] {
            let g = point_geometry(&p.jet(&[t, 0.0], 3).unwrap()).unwrap();
            let phi = (2.0 * (t / 2.0).cosh().powi(2)).ln();
            let dphi = (t / 2.0).tanh();
            let lam = g.eigenvalues.unwrap();
            assert_abs_diff_eq!(lam[0], 1.0 + 0.5 * phi.exp() * dphi * dphi, epsilon = 1e-12);
            assert_abs_diff_eq!(lam[1], 1.0, epsilon = 1e-12);
            let ef = g.eigenframe.clone().unwrap();
            assert!(g.hdot(&ef.e, &g.grad_up) >= 0.0);
        }
    }

    #[test]
    fn metric_inverse_and_frames_are_orthonormal() {
        let p = SimplexPotential::new(2);
        let g = point_geometry(&p.jet(&[0.4, 1.9], 3).unwrap()).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                let s: f64 = (0..2)
                    .map(|k| g.inverse.get(&[i, k]) * g.metric.get(&[k, j]))
                    .sum();
                assert_abs_diff_eq!(s, if i == j { 1.0 } else { 0.0 }, epsilon = 1e-12);
            }
        }
        let nv = g.nv.clone().unwrap();
        assert_abs_diff_eq!(g.hdot(&nv.n, &nv.n), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(g.hdot(&nv.v, &nv.v), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(g.hdot(&nv.n, &nv.v), 0.0, epsilon = 1e-12);
        let ef = g.eigenframe.clone().unwrap();
        assert_abs_diff_eq!(g.hdot(&ef.e, &ef.e), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(g.hdot(&ef.e, &ef.u), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn cube_q_at_origin() {
        let p = CubePotential::new(2);
        let (q, asym) = covariant_q(&p.jet(&[0.0, 0.0], 4).unwrap()).unwrap();
        assert!(asym < 1e-14);
        assert_abs_diff_eq!(q.get(&[0, 0, 0, 0]), -0.25, epsilon = 1e-14);
        // Q_11cc Φ^{cc} = −1/4 · 2 = −1/2 = −(∇²Φ)_11
        let g = point_geometry(&p.jet(&[0.0, 0.0], 3).unwrap()).unwrap();
        let tr: f64 = (0..2)
            .flat_map(|c| (0..2).map(move |d| (c, d)))
            .map(|(c, d)| q.get(&[0, 0, c, d]) * g.inverse.get(&[c, d]))
            .sum();
        assert_abs_diff_eq!(tr, -0.5, epsilon = 1e-14);
        assert_abs_diff_eq!(g.hess.get(&[0, 0]), 0.5, epsilon = 1e-14);
    }

    #[test]
    fn scalar_laplacian_of_phi_is_dimension() {
        let p = SimplexPotential::new(2);
        let f = Fields::from_jet(&p.jet(&[0.3, 0.2], 5).unwrap()).unwrap();
        let l = f.laplacian_scalar(&f.d[0].get(&[]).clone());
        assert_abs_diff_eq!(l.value(), 2.0, epsilon = 1e-13);
        // LΦ_i = −Φ_i on the simplex
        for i in 0..2 {
            let li = f.laplacian_scalar(f.d[1].get(&[i]));
            assert_abs_diff_eq!(li.value(), -f.d[1].get(&[i]).value(), epsilon = 1e-12);
        }
    }

    #[test]
    fn fd_laplacian_matches_exact() {
        let p = CubePotential::new(2);
        let x = [0.4, -0.8];
        let f = Fields::from_jet(&p.jet(&x, 4).unwrap()).unwrap();
        let exact = f.laplacian_scalar(&f.grad_sq).value();
        let inv = f.inv.values();
        let fd = weighted_laplacian_scalar_fd(&inv, &x, 1e-3, |y| {
            let j = p.jet(y, 3).ok()?;
            Some(Fields::from_jet(&j).ok()?.grad_sq.value())
        })
        .unwrap();
        assert_abs_diff_eq!(fd, exact, epsilon = 1e-5);
    }

    #[test]
    fn rejects_low_order_and_grid_sources() {
        let p = CubePotential::new(2);
        assert!(point_geometry(&p.jet(&[0.0, 0.0], 2).unwrap()).is_err());
        let f = Fields::from_jet(&p.jet(&[0.0, 0.0], 4).unwrap()).unwrap();
        assert!(f.weighted_laplacian_tensor(LaplacianTarget::PhiI).is_err());
    }
}
