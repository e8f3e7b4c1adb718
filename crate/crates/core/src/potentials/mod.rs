//! Potentials `Φ` with derivatives at arbitrary points.
//!
//! Three sources sit behind the [`Potential`] trait: closed forms
//! ([`SimplexPotential`], [`CubePotential`]), the radial ball profile
//! ([`RadialProfile`]) and solved grids ([`GridPotential`]). Each produces a
//! [`Jet`], whose derivatives are stored as a truncated Taylor [`Series`].

mod closed;
mod grid;
mod radial;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

pub use closed::{cube_phi_series, CubePotential, SimplexPotential};
pub use grid::{GridPotential, GRID_MARGIN};
pub use radial::{ball_profile, ode_taylor, BallProfileConfig, RadialProfile};

use crate::error::JetError;
use crate::series::Series;

pub const MAX_JET_ORDER: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Source {
    ClosedForm,
    Radial,
    Grid,
}

impl Source {
    pub fn as_str(self) -> &'static str {
        match self {
            Source::ClosedForm => "closed_form",
            Source::Radial => "radial",
            Source::Grid => "grid",
        }
    }
}

/// All partial derivatives of `Φ` at a point up to `order`.
#[derive(Debug, Clone)]
pub struct Jet {
    pub point: Vec<f64>,
    pub source: Source,
    series: Series,
    /// Absolute error estimate per derivative order `0..=order`.
    pub est_error: Vec<f64>,
}

impl Jet {
    pub fn new(point: Vec<f64>, source: Source, series: Series, est_error: Vec<f64>) -> Jet {
        assert_eq!(point.len(), series.dim());
        assert_eq!(est_error.len(), series.order() + 1);
        Jet {
            point,
            source,
            series,
            est_error,
        }
    }

    pub fn order(&self) -> usize {
        self.series.order()
    }

    pub fn dim(&self) -> usize {
        self.series.dim()
    }

    /// `∂_{i₁}…∂_{i_k}Φ` at the jet point.
    pub fn d(&self, multi: &[usize]) -> f64 {
        self.series.deriv(multi)
    }

    pub fn value(&self) -> f64 {
        self.series.value()
    }

    pub fn gradient(&self) -> Vec<f64> {
        (0..self.dim()).map(|i| self.d(&[i])).collect()
    }

    pub fn hessian(&self) -> Vec<Vec<f64>> {
        let n = self.dim();
        (0..n)
            .map(|i| (0..n).map(|j| self.d(&[i, j])).collect())
            .collect()
    }

    /// The Taylor polynomial of `Φ` about the jet point.
    pub fn series(&self) -> &Series {
        &self.series
    }

    /// Largest error estimate over orders `lo..=hi`.
    pub fn error_upto(&self, hi: usize) -> f64 {
        self.est_error[..=hi.min(self.order())]
            .iter()
            .copied()
            .fold(0.0, f64::max)
    }

    /// Derivatives keyed by 1-based sorted multi-index strings (`""`, `"1"`, `"112"`, …).
    pub fn to_map(&self) -> BTreeMap<String, f64> {
        let layout = self.series.layout();
        let derivs = self.series.derivatives();
        layout
            .exponents()
            .iter()
            .zip(derivs)
            .map(|(e, v)| {
                let mut key = String::new();
                for (var, &k) in e.iter().enumerate() {
                    for _ in 0..k {
                        key.push_str(&(var + 1).to_string());
                    }
                }
                (key, v)
            })
            .collect()
    }
}

/// A source of potential jets.
pub trait Potential: Send + Sync {
    fn dim(&self) -> usize;
    fn source(&self) -> Source;
    fn max_order(&self) -> usize;
    fn name(&self) -> String;

    /// Taylor polynomial of `Φ` at `x` truncated at `order`, without checks.
    fn taylor(&self, x: &[f64], order: usize) -> Result<Series, JetError>;

    /// Per-order error estimate for a jet at `x` with the given Taylor data.
    fn error_estimate(&self, x: &[f64], series: &Series) -> Vec<f64>;

    /// Jet at `x`, validated: order within range and positive-definite Hessian.
    fn jet(&self, x: &[f64], order: usize) -> Result<Jet, JetError> {
        if order > self.max_order() {
            return Err(JetError::OrderTooHigh {
                requested: order,
                max: self.max_order(),
            });
        }
        if x.len() != self.dim() {
            return Err(JetError::OutsideRegion {
                x: x[0],
                y: x.get(1).copied().unwrap_or(0.0),
            });
        }
        let series = self.taylor(x, order)?;
        if order >= 2 && !hessian_is_pd(&series) {
            return Err(JetError::Degenerate);
        }
        let est = self.error_estimate(x, &series);
        Ok(Jet::new(x.to_vec(), self.source(), series, est))
    }
}

fn hessian_is_pd(s: &Series) -> bool {
    // Sylvester via Cholesky
    let n = s.dim();
    let mut a: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| s.deriv(&[i, j])).collect())
        .collect();
    for k in 0..n {
        let d = a[k][k];
        if !(d > 0.0) {
            return false;
        }
        for i in k + 1..n {
            let f = a[i][k] / d;
            for j in k..n {
                a[i][j] -= f * a[k][j];
            }
        }
    }
    true
}

/// Roundoff-level error model for exactly differentiated sources.
pub(crate) fn roundoff_error(series: &Series, rel: f64) -> Vec<f64> {
    let derivs = series.derivatives();
    let exps = series.layout().exponents();
    let mut out = vec![0.0; series.order() + 1];
    for (e, d) in exps.iter().zip(derivs) {
        let k: usize = e.iter().map(|&x| x as usize).sum();
        out[k] = f64::max(out[k], rel * d.abs().max(1.0));
    }
    out
}
