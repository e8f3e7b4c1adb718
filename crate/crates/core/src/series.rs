//! Truncated multivariate Taylor arithmetic.
//!
//! A [`Series`] holds the Taylor coefficients of a smooth function of `dim`
//! variables around a base point, truncated at total degree `order`. The
//! arithmetic is exact on the truncated polynomial ring, so evaluating a closed
//! form on [`Series::variable`] inputs yields every partial derivative up to
//! `order` to machine precision. Differentiating a series lowers its order by
//! one; binary operations on series of different orders truncate to the lower
//! one.
//!
//! Monomials are stored in graded order, and the layout of degree `d` monomials
//! is the same for every truncation order, so truncation is a prefix slice.

use std::collections::HashMap;
use std::fmt;
use std::ops::{Add, Div, Mul, Neg, Sub};
use std::sync::{Mutex, OnceLock};

/// Monomial table and product/derivative tables for one `(dim, order)` pair.
#[derive(Debug)]
pub struct Layout {
    dim: usize,
    order: usize,
    exps: Vec<Vec<u8>>,
    index: HashMap<Vec<u8>, usize>,
    // start offset of each degree block; deg_start[d+1] - deg_start[d] monomials of degree d
    deg_start: Vec<usize>,
    // (i, j, k) with exps[i] + exps[j] = exps[k], sorted by degree of k
    mul: Vec<(u32, u32, u32)>,
    // mul_end[d] = number of entries of `mul` whose product has degree <= d
    mul_end: Vec<usize>,
    // partial[var] = for each target monomial of order-1 layout: (source index, factor)
    partial: Vec<Vec<(u32, f64)>>,
    factorial_weight: Vec<f64>,
}

fn enumerate_degree(dim: usize, deg: usize) -> Vec<Vec<u8>> {
    // lexicographically descending in the first variable
    if dim == 1 {
        return vec![vec![deg as u8]];
    }
    let mut out = Vec::new();
    for first in (0..=deg).rev() {
        for mut rest in enumerate_degree(dim - 1, deg - first) {
            let mut e = Vec::with_capacity(dim);
            e.push(first as u8);
            e.append(&mut rest);
            out.push(e);
        }
    }
    out
}

impl Layout {
    fn build(dim: usize, order: usize) -> Layout {
        assert!(dim >= 1, "series dimension must be positive");
        let mut exps = Vec::new();
        let mut deg_start = Vec::with_capacity(order + 2);
        for d in 0..=order {
            deg_start.push(exps.len());
            exps.extend(enumerate_degree(dim, d));
        }
        deg_start.push(exps.len());
        let index: HashMap<Vec<u8>, usize> = exps
            .iter()
            .enumerate()
            .map(|(i, e)| (e.clone(), i))
            .collect();
        let deg = |e: &Vec<u8>| e.iter().map(|&x| x as usize).sum::<usize>();

        let mut mul = Vec::new();
        for (i, a) in exps.iter().enumerate() {
            for (j, b) in exps.iter().enumerate() {
                if deg(a) + deg(b) > order {
                    continue;
                }
                let s: Vec<u8> = a.iter().zip(b).map(|(x, y)| x + y).collect();
                mul.push((i as u32, j as u32, index[&s] as u32));
            }
        }
        mul.sort_by_key(|&(_, _, k)| k);
        let mut mul_end = vec![0; order + 1];
        for d in 0..=order {
            let limit = deg_start[d + 1] as u32;
            mul_end[d] = mul.partition_point(|&(_, _, k)| k < limit);
        }

        let mut partial = vec![Vec::new(); dim];
        if order >= 1 {
            for (var, table) in partial.iter_mut().enumerate() {
                for e in exps.iter().take(deg_start[order]) {
                    let mut s = e.clone();
                    s[var] += 1;
                    table.push((index[&s] as u32, s[var] as f64));
                }
            }
        }
        let factorial_weight = exps
            .iter()
            .map(|e| e.iter().map(|&k| factorial(k as usize)).product())
            .collect();
        Layout {
            dim,
            order,
            exps,
            index,
            deg_start,
            mul,
            mul_end,
            partial,
            factorial_weight,
        }
    }

    pub fn len(&self) -> usize {
        self.exps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.exps.is_empty()
    }

    pub fn exponents(&self) -> &[Vec<u8>] {
        &self.exps
    }
}

fn factorial(k: usize) -> f64 {
    (1..=k).map(|x| x as f64).product()
}

/// Shared layout for `(dim, order)`. Layouts are built once and never freed.
pub fn layout(dim: usize, order: usize) -> &'static Layout {
    static CACHE: OnceLock<Mutex<HashMap<(usize, usize), &'static Layout>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    let mut guard = cache.lock().expect("series layout cache poisoned");
    guard
        .entry((dim, order))
        .or_insert_with(|| Box::leak(Box::new(Layout::build(dim, order))))
}

/// Truncated Taylor polynomial in `dim` variables.
#[derive(Clone)]
pub struct Series {
    layout: &'static Layout,
    coeffs: Vec<f64>,
}

impl fmt::Debug for Series {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Series")
            .field("dim", &self.layout.dim)
            .field("order", &self.layout.order)
            .field("coeffs", &self.coeffs)
            .finish()
    }
}

impl Series {
    pub fn constant(dim: usize, order: usize, value: f64) -> Series {
        let layout = layout(dim, order);
        let mut coeffs = vec![0.0; layout.len()];
        coeffs[0] = value;
        Series { layout, coeffs }
    }

    pub fn zero(dim: usize, order: usize) -> Series {
        Series::constant(dim, order, 0.0)
    }

    /// The coordinate function `x_var` expanded around `x_var = base`.
    pub fn variable(dim: usize, order: usize, var: usize, base: f64) -> Series {
        assert!(var < dim, "variable index out of range");
        let mut s = Series::constant(dim, order, base);
        if order >= 1 {
            let mut e = vec![0u8; dim];
            e[var] = 1;
            let idx = s.layout.index[&e];
            s.coeffs[idx] = 1.0;
        }
        s
    }

    /// All coordinate functions around `point`.
    pub fn variables(point: &[f64], order: usize) -> Vec<Series> {
        let dim = point.len();
        (0..dim)
            .map(|i| Series::variable(dim, order, i, point[i]))
            .collect()
    }

    /// Build from partial derivatives `∂^α f` listed in layout order.
    pub fn from_derivatives(dim: usize, order: usize, derivs: &[f64]) -> Series {
        let layout = layout(dim, order);
        assert_eq!(derivs.len(), layout.len(), "derivative count mismatch");
        let coeffs = derivs
            .iter()
            .zip(&layout.factorial_weight)
            .map(|(d, w)| d / w)
            .collect();
        Series { layout, coeffs }
    }

    /// Build from raw Taylor coefficients in layout order.
    pub fn from_coeffs(dim: usize, order: usize, coeffs: &[f64]) -> Series {
        let layout = layout(dim, order);
        assert_eq!(coeffs.len(), layout.len(), "coefficient count mismatch");
        Series {
            layout,
            coeffs: coeffs.to_vec(),
        }
    }

    pub fn dim(&self) -> usize {
        self.layout.dim
    }

    pub fn order(&self) -> usize {
        self.layout.order
    }

    pub fn layout(&self) -> &'static Layout {
        self.layout
    }

    pub fn value(&self) -> f64 {
        self.coeffs[0]
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    /// Partial derivative `∂^α f(base)` for exponent vector `alpha`.
    pub fn derivative_exp(&self, alpha: &[u8]) -> Option<f64> {
        let idx = *self.layout.index.get(alpha)?;
        Some(self.coeffs[idx] * self.layout.factorial_weight[idx])
    }

    /// Partial derivative for a multi-index given as a list of variable
    /// indices, e.g. `[0, 0, 1]` for `∂_x ∂_x ∂_y`.
    pub fn deriv(&self, multi: &[usize]) -> f64 {
        let mut alpha = vec![0u8; self.dim()];
        for &i in multi {
            alpha[i] += 1;
        }
        self.derivative_exp(&alpha)
            .unwrap_or_else(|| panic!("multi-index {multi:?} exceeds series order"))
    }

    /// All partial derivatives in layout order.
    pub fn derivatives(&self) -> Vec<f64> {
        self.coeffs
            .iter()
            .zip(&self.layout.factorial_weight)
            .map(|(c, w)| c * w)
            .collect()
    }

    pub fn truncate(&self, order: usize) -> Series {
        let order = order.min(self.order());
        let layout = layout(self.dim(), order);
        Series {
            layout,
            coeffs: self.coeffs[..layout.len()].to_vec(),
        }
    }

    /// `∂_var` of the series; the result has order one less.
    pub fn partial(&self, var: usize) -> Series {
        assert!(self.order() >= 1, "cannot differentiate an order-0 series");
        let target = layout(self.dim(), self.order() - 1);
        let coeffs = self.layout.partial[var]
            .iter()
            .map(|&(src, f)| self.coeffs[src as usize] * f)
            .collect();
        Series {
            layout: target,
            coeffs,
        }
    }

    /// Evaluate the truncated polynomial at displacement `delta` from the base.
    pub fn eval_at(&self, delta: &[f64]) -> f64 {
        self.layout
            .exps
            .iter()
            .zip(&self.coeffs)
            .map(|(e, c)| {
                c * e
                    .iter()
                    .zip(delta)
                    .map(|(&k, d)| d.powi(k as i32))
                    .product::<f64>()
            })
            .sum()
    }

    fn binary_layout(&self, other: &Series) -> &'static Layout {
        assert_eq!(self.dim(), other.dim(), "series dimension mismatch");
        if self.order() <= other.order() {
            self.layout
        } else {
            other.layout
        }
    }

    fn mul_ref(&self, other: &Series) -> Series {
        let layout = self.binary_layout(other);
        let mut coeffs = vec![0.0; layout.len()];
        for &(i, j, k) in &layout.mul {
            coeffs[k as usize] += self.coeffs[i as usize] * other.coeffs[j as usize];
        }
        Series { layout, coeffs }
    }

    fn zip_with(&self, other: &Series, f: impl Fn(f64, f64) -> f64) -> Series {
        let layout = self.binary_layout(other);
        let coeffs = (0..layout.len())
            .map(|i| f(self.coeffs[i], other.coeffs[i]))
            .collect();
        Series { layout, coeffs }
    }

    fn map(&self, f: impl Fn(f64) -> f64) -> Series {
        Series {
            layout: self.layout,
            coeffs: self.coeffs.iter().map(|&c| f(c)).collect(),
        }
    }

    /// `Σ_k taylor[k] · (self - self(0))^k`, i.e. `g ∘ self` where `taylor`
    /// holds the Taylor coefficients `g^{(k)}(c0)/k!` of `g` at `c0 = self(0)`.
    pub fn compose(&self, taylor: &[f64]) -> Series {
        let order = self.order();
        let mut nil = self.clone();
        nil.coeffs[0] = 0.0;
        // Horner on the nilpotent part; powers above `order` vanish.
        let top = order.min(taylor.len().saturating_sub(1));
        let mut acc = Series::constant(self.dim(), order, taylor[top]);
        for k in (0..top).rev() {
            acc = acc.mul_ref(&nil);
            acc.coeffs[0] += taylor[k];
        }
        acc
    }

    pub fn exp(&self) -> Series {
        let c0 = self.value().exp();
        let mut t = Vec::with_capacity(self.order() + 1);
        let mut f = 1.0;
        for k in 0..=self.order() {
            if k > 0 {
                f *= k as f64;
            }
            t.push(c0 / f);
        }
        self.compose(&t)
    }

    pub fn ln(&self) -> Series {
        let c0 = self.value();
        assert!(
            c0 > 0.0,
            "logarithm of a series with non-positive constant term"
        );
        let mut t = vec![c0.ln()];
        for k in 1..=self.order() {
            let sign = if k % 2 == 1 { 1.0 } else { -1.0 };
            t.push(sign / (k as f64 * c0.powi(k as i32)));
        }
        self.compose(&t)
    }

    /// `self^p` for real `p`; requires a positive constant term unless `p` is a
    /// non-negative integer.
    pub fn powf(&self, p: f64) -> Series {
        let c0 = self.value();
        let mut t = Vec::with_capacity(self.order() + 1);
        let mut binom = 1.0;
        for k in 0..=self.order() {
            if k > 0 {
                binom *= (p - (k as f64 - 1.0)) / k as f64;
            }
            t.push(binom * c0.powf(p - k as f64));
        }
        self.compose(&t)
    }

    pub fn sqrt(&self) -> Series {
        self.powf(0.5)
    }

    pub fn recip(&self) -> Series {
        let c0 = self.value();
        assert!(c0 != 0.0, "reciprocal of a series with zero constant term");
        let t: Vec<f64> = (0..=self.order())
            .map(|k| {
                let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
                sign / c0.powi(k as i32 + 1)
            })
            .collect();
        self.compose(&t)
    }

    pub fn scale(&self, s: f64) -> Series {
        self.map(|c| c * s)
    }

    pub fn add_scalar(&self, s: f64) -> Series {
        let mut out = self.clone();
        out.coeffs[0] += s;
        out
    }
}

macro_rules! forward_binop {
    ($tr:ident, $method:ident, $body:expr) => {
        impl $tr<&Series> for &Series {
            type Output = Series;
            fn $method(self, rhs: &Series) -> Series {
                let f: fn(&Series, &Series) -> Series = $body;
                f(self, rhs)
            }
        }
        impl $tr<Series> for Series {
            type Output = Series;
            fn $method(self, rhs: Series) -> Series {
                (&self).$method(&rhs)
            }
        }
        impl $tr<&Series> for Series {
            type Output = Series;
            fn $method(self, rhs: &Series) -> Series {
                (&self).$method(rhs)
            }
        }
        impl $tr<Series> for &Series {
            type Output = Series;
            fn $method(self, rhs: Series) -> Series {
                self.$method(&rhs)
            }
        }
        impl $tr<f64> for &Series {
            type Output = Series;
            fn $method(self, rhs: f64) -> Series {
                let c = Series::constant(self.dim(), self.order(), rhs);
                self.$method(&c)
            }
        }
        impl $tr<f64> for Series {
            type Output = Series;
            fn $method(self, rhs: f64) -> Series {
                (&self).$method(rhs)
            }
        }
        impl $tr<&Series> for f64 {
            type Output = Series;
            fn $method(self, rhs: &Series) -> Series {
                let c = Series::constant(rhs.dim(), rhs.order(), self);
                (&c).$method(rhs)
            }
        }
        impl $tr<Series> for f64 {
            type Output = Series;
            fn $method(self, rhs: Series) -> Series {
                self.$method(&rhs)
            }
        }
    };
}

forward_binop!(Add, add, |a, b| a.zip_with(b, |x, y| x + y));
forward_binop!(Sub, sub, |a, b| a.zip_with(b, |x, y| x - y));
forward_binop!(Mul, mul, |a, b| a.mul_ref(b));
forward_binop!(Div, div, |a, b| a.mul_ref(&b.recip()));

impl Neg for &Series {
    type Output = Series;
    fn neg(self) -> Series {
        self.map(|c| -c)
    }
}

impl Neg for Series {
    type Output = Series;
    fn neg(self) -> Series {
        -&self
    }
}

impl Series {
    /// Product of only the degree-`<= d` part, used by the Taylor ODE recursion
    /// where higher coefficients are not yet known.
    pub fn mul_upto(&self, other: &Series, d: usize) -> Series {
        let layout = self.binary_layout(other);
        let d = d.min(layout.order);
        let mut coeffs = vec![0.0; layout.len()];
        for &(i, j, k) in &layout.mul[..layout.mul_end[d]] {
            coeffs[k as usize] += self.coeffs[i as usize] * other.coeffs[j as usize];
        }
        Series { layout, coeffs }
    }

    /// Number of monomials of degree exactly `d`.
    pub fn degree_block(&self, d: usize) -> std::ops::Range<usize> {
        self.layout.deg_start[d]..self.layout.deg_start[d + 1]
    }

    pub fn set_coeff(&mut self, idx: usize, value: f64) {
        self.coeffs[idx] = value;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn univariate_exp_coefficients() {
        let x = Series::variable(1, 5, 0, 0.0);
        let e = x.exp();
        let expected = [1.0, 1.0, 0.5, 1.0 / 6.0, 1.0 / 24.0, 1.0 / 120.0];
        for (c, want) in e.coeffs().iter().zip(expected) {
            assert_relative_eq!(*c, want, epsilon = 1e-15);
        }
    }

    #[test]
    fn ln_inverts_exp() {
        let v = Series::variables(&[0.3, -0.7], 5);
        let f = (&v[0] * &v[1]).add_scalar(2.0);
        let back = f.ln().exp();
        for (a, b) in back.coeffs().iter().zip(f.coeffs()) {
            assert_relative_eq!(*a, *b, epsilon = 1e-13);
        }
    }

    #[test]
    fn mixed_partials_of_product() {
        // f = x^2 y^3 at (1, 2): f_xy = 2x * 3y^2 = 24, f_xxyy = 2 * 6y = 24
        let v = Series::variables(&[1.0, 2.0], 5);
        let f = &v[0] * &v[0] * &v[1] * &v[1] * &v[1];
        assert_relative_eq!(f.deriv(&[0, 1]), 24.0, epsilon = 1e-12);
        assert_relative_eq!(f.deriv(&[0, 0, 1, 1]), 24.0, epsilon = 1e-12);
        assert_relative_eq!(f.deriv(&[1, 1, 1, 0, 0]), 12.0, epsilon = 1e-12);
    }

    #[test]
    fn partial_lowers_order() {
        let v = Series::variables(&[0.5, 0.25], 4);
        let f = (&v[0] * &v[1]).exp();
        let fx = f.partial(0);
        assert_eq!(fx.order(), 3);
        assert_relative_eq!(fx.deriv(&[1]), f.deriv(&[0, 1]), epsilon = 1e-13);
        assert_relative_eq!(
            fx.deriv(&[0, 0, 1]),
            f.deriv(&[0, 0, 0, 1]),
            epsilon = 1e-12
        );
    }

    #[test]
    fn powf_and_recip_agree() {
        let v = Series::variables(&[1.3], 5);
        let a = v[0].powf(-1.0);
        let b = v[0].recip();
        for (x, y) in a.coeffs().iter().zip(b.coeffs()) {
            assert_relative_eq!(*x, *y, epsilon = 1e-14);
        }
        let s = v[0].sqrt();
        let sq = &s * &s;
        for (x, y) in sq.coeffs().iter().zip(v[0].coeffs()) {
            assert_relative_eq!(*x, *y, epsilon = 1e-14);
        }
    }

    #[test]
    fn mixed_order_arithmetic_truncates() {
        let a = Series::variable(2, 5, 0, 1.0);
        let b = Series::variable(2, 2, 1, 1.0);
        assert_eq!((&a * &b).order(), 2);
        assert_eq!((&a + &b).order(), 2);
    }

    #[test]
    fn three_variable_layout_size() {
        assert_eq!(layout(3, 5).len(), 56);
        assert_eq!(layout(2, 5).len(), 21);
    }
}
