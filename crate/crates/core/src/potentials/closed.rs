use super::{roundoff_error, Potential, Source};
use crate::error::JetError;
use crate::series::Series;

/// `Φ = (n+1)·log(1 + Σe^{x_i}) − Σx_i − n·log(n+1)` on `ℝⁿ`, gradient image the simplex.
#[derive(Debug, Clone, Copy)]
pub struct SimplexPotential {
    pub n: usize,
}

impl SimplexPotential {
    pub fn new(n: usize) -> SimplexPotential {
        assert!(n >= 1);
        SimplexPotential { n }
    }

    /// The additive constant making `e^{−Φ} = det D²Φ` hold exactly.
    pub fn constant(&self) -> f64 {
        -(self.n as f64) * ((self.n + 1) as f64).ln()
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        self.taylor(x, 0).expect("closed form").value()
    }

    /// Minimum value, attained at the origin.
    pub fn min_value(&self) -> f64 {
        ((self.n + 1) as f64).ln()
    }
}

impl Potential for SimplexPotential {
    fn dim(&self) -> usize {
        self.n
    }
    fn source(&self) -> Source {
        Source::ClosedForm
    }
    fn max_order(&self) -> usize {
        super::MAX_JET_ORDER
    }
    fn name(&self) -> String {
        format!("closed:simplex(n={})", self.n)
    }

    fn taylor(&self, x: &[f64], order: usize) -> Result<Series, JetError> {
        let n = self.n;
        let vars = Series::variables(x, order);
        // factor out the largest exponent for overflow-free evaluation
        let m = x.iter().copied().fold(0.0f64, f64::max);
        let mut sum = Series::constant(n, order, (-m).exp());
        let mut lin = Series::zero(n, order);
        for v in &vars {
            sum = sum + (v - m).exp();
            lin = lin + v;
        }
        let phi = (sum.ln() + m) * (n + 1) as f64 - lin + self.constant();
        Ok(phi)
    }

    fn error_estimate(&self, _x: &[f64], series: &Series) -> Vec<f64> {
        roundoff_error(series, 1e-14)
    }
}

/// Taylor series of `φ(t) = log(2cosh²(t/2))` composed with `t`.
pub fn cube_phi_series(t: &Series) -> Series {
    let s = if t.value() >= 0.0 { 1.0 } else { -1.0 };
    let u = t * s;
    // φ(t) = |t| + 2·log(1 + e^{−|t|}) − log 2
    &u + ((-&u).exp() + 1.0).ln() * 2.0 - std::f64::consts::LN_2
}

/// `Φ(x) = Σ φ(x_i)` with `φ'' = e^{−φ}`; gradient image the cube `[−1,1]ⁿ`.
#[derive(Debug, Clone, Copy)]
pub struct CubePotential {
    pub n: usize,
}

impl CubePotential {
    pub fn new(n: usize) -> CubePotential {
        assert!(n >= 1);
        CubePotential { n }
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        self.taylor(x, 0).expect("closed form").value()
    }

    pub fn min_value(&self) -> f64 {
        self.n as f64 * std::f64::consts::LN_2
    }
}

impl Potential for CubePotential {
    fn dim(&self) -> usize {
        self.n
    }
    fn source(&self) -> Source {
        Source::ClosedForm
    }
    fn max_order(&self) -> usize {
        super::MAX_JET_ORDER
    }
    fn name(&self) -> String {
        format!("closed:cube(n={})", self.n)
    }

    fn taylor(&self, x: &[f64], order: usize) -> Result<Series, JetError> {
        let vars = Series::variables(x, order);
        Ok(vars.iter().fold(Series::zero(self.n, order), |acc, v| {
            acc + cube_phi_series(v)
        }))
    }

    fn error_estimate(&self, _x: &[f64], series: &Series) -> Vec<f64> {
        roundoff_error(series, 1e-14)
    }
}
