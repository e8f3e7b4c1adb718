//! Potentials sampled on a uniform square grid, differentiated by finite differences.

use std::io::{Read, Write};

use super::{Potential, Source};
use crate::bodies::ConvexBody;
use crate::error::{Error, JetError, Result};
use crate::series::{layout, Series};

/// Jets are only produced at nodes at least this many nodes from the boundary.
pub const GRID_MARGIN: usize = 5;

// weights at offsets -2..=2
const FOURTH: [[f64; 5]; 3] = [
    [0.0, 0.0, 1.0, 0.0, 0.0],
    [1.0 / 12.0, -8.0 / 12.0, 0.0, 8.0 / 12.0, -1.0 / 12.0],
    [
        -1.0 / 12.0,
        16.0 / 12.0,
        -30.0 / 12.0,
        16.0 / 12.0,
        -1.0 / 12.0,
    ],
];
const SECOND: [[f64; 5]; 5] = [
    [0.0, 0.0, 1.0, 0.0, 0.0],
    [0.0, -0.5, 0.0, 0.5, 0.0],
    [0.0, 1.0, -2.0, 1.0, 0.0],
    [-0.5, 1.0, 0.0, -1.0, 0.5],
    [1.0, -4.0, 6.0, -4.0, 1.0],
];

/// Values of `Φ` on the nodes `(−L + ih, −L + jh)`, `0 ≤ i, j < n`, `h = 2L/(n−1)`.
#[derive(Debug, Clone)]
pub struct GridPotential {
    pub half_width: f64,
    pub n: usize,
    /// Row-major: `values[j * n + i]` is the value at `(x_i, y_j)`.
    pub values: Vec<f64>,
    pub body: Option<ConvexBody>,
}

impl GridPotential {
    pub fn new(
        half_width: f64,
        n: usize,
        values: Vec<f64>,
        body: Option<ConvexBody>,
    ) -> GridPotential {
        assert_eq!(values.len(), n * n);
        GridPotential {
            half_width,
            n,
            values,
            body,
        }
    }

    /// Sample a function on the grid.
    pub fn from_fn(
        half_width: f64,
        n: usize,
        body: Option<ConvexBody>,
        f: impl Fn(f64, f64) -> f64,
    ) -> GridPotential {
        let h = 2.0 * half_width / (n - 1) as f64;
        let mut values = Vec::with_capacity(n * n);
        for j in 0..n {
            for i in 0..n {
                values.push(f(-half_width + i as f64 * h, -half_width + j as f64 * h));
            }
        }
        GridPotential::new(half_width, n, values, body)
    }

    pub fn h(&self) -> f64 {
        2.0 * self.half_width / (self.n - 1) as f64
    }

    pub fn coord(&self, i: usize) -> f64 {
        // symmetric formula keeps mirrored nodes exactly opposite
        let c = (self.n - 1) as f64 / 2.0;
        (i as f64 - c) * self.h()
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.values[j * self.n + i]
    }

    /// Index of the node at `x`, if `x` is a node up to `1e−9·h`.
    pub fn node_of(&self, x: &[f64]) -> Option<(usize, usize)> {
        let h = self.h();
        let idx = |c: f64| {
            let t = (c + self.half_width) / h;
            let r = t.round();
            ((t - r).abs() < 1e-9 && r >= 0.0 && r < self.n as f64).then_some(r as usize)
        };
        Some((idx(x[0])?, idx(x[1])?))
    }

    fn in_margin(&self, i: usize, j: usize, margin: usize) -> bool {
        i >= margin && j >= margin && i + margin < self.n && j + margin < self.n
    }

    /// `∂_x^a ∂_y^b Φ` at node `(i, j)` by tensor-product stencils with spacing `step·h`.
    pub fn fd_derivative(&self, i: usize, j: usize, a: usize, b: usize, step: usize) -> f64 {
        let (wa, wb) = if a + b <= 2 {
            (&FOURTH[a], &FOURTH[b])
        } else {
            (&SECOND[a], &SECOND[b])
        };
        let mut s = 0.0;
        for (p, &u) in wa.iter().enumerate() {
            if u == 0.0 {
                continue;
            }
            for (q, &v) in wb.iter().enumerate() {
                if v == 0.0 {
                    continue;
                }
                let ii = (i as isize + step as isize * (p as isize - 2)) as usize;
                let jj = (j as isize + step as isize * (q as isize - 2)) as usize;
                s += u * v * self.at(ii, jj);
            }
        }
        s / (step as f64 * self.h()).powi((a + b) as i32)
    }

    /// Jet at node `(i, j)`; error estimates are `|D_h − D_2h|` per order.
    pub fn jet_node(
        &self,
        i: usize,
        j: usize,
        order: usize,
    ) -> std::result::Result<super::Jet, JetError> {
        if order > 4 {
            return Err(JetError::OrderTooHigh {
                requested: order,
                max: 4,
            });
        }
        let x = [self.coord(i), self.coord(j)];
        if !self.in_margin(i, j, GRID_MARGIN) {
            return Err(JetError::OutsideRegion { x: x[0], y: x[1] });
        }
        let fine = self.node_series(i, j, order, 1);
        let coarse = self.node_series(i, j, order, 2);
        let mut est = vec![0.0; order + 1];
        for (e, (d1, d2)) in layout(2, order)
            .exponents()
            .iter()
            .zip(fine.derivatives().iter().zip(coarse.derivatives()))
        {
            let k = (e[0] + e[1]) as usize;
            if k > 0 {
                est[k] = f64::max(est[k], (d1 - d2).abs());
            }
        }
        if order >= 2 && !super::hessian_is_pd(&fine) {
            return Err(JetError::Degenerate);
        }
        Ok(super::Jet::new(x.to_vec(), Source::Grid, fine, est))
    }

    /// Jet at node `(i, j)` from stencils of spacing `step·h`, without error estimates.
    pub fn jet_node_step(
        &self,
        i: usize,
        j: usize,
        order: usize,
        step: usize,
    ) -> std::result::Result<super::Jet, JetError> {
        if order > 4 {
            return Err(JetError::OrderTooHigh {
                requested: order,
                max: 4,
            });
        }
        let x = [self.coord(i), self.coord(j)];
        if step == 0 || step > 2 || !self.in_margin(i, j, GRID_MARGIN) {
            return Err(JetError::OutsideRegion { x: x[0], y: x[1] });
        }
        let series = self.node_series(i, j, order, step);
        if order >= 2 && !super::hessian_is_pd(&series) {
            return Err(JetError::Degenerate);
        }
        Ok(super::Jet::new(
            x.to_vec(),
            Source::Grid,
            series,
            vec![0.0; order + 1],
        ))
    }

    fn node_series(&self, i: usize, j: usize, order: usize, step: usize) -> Series {
        let derivs: Vec<f64> = layout(2, order)
            .exponents()
            .iter()
            .map(|e| self.fd_derivative(i, j, e[0] as usize, e[1] as usize, step))
            .collect();
        Series::from_derivatives(2, order, &derivs)
    }

    /// Nodes with `|x|, |y| ≤ frac·L`, taken every `stride` nodes and
    /// symmetric about the origin, excluding the stencil margin.
    pub fn analysis_nodes(&self, frac: f64, stride: usize) -> Vec<(usize, usize)> {
        let c = (self.n - 1) / 2;
        let lim = frac * self.half_width + 1e-9 * self.h();
        let mut out = Vec::new();
        let steps = (c / stride.max(1)) as isize;
        for q in -steps..=steps {
            for p in -steps..=steps {
                let i = (c as isize + p * stride as isize) as usize;
                let j = (c as isize + q * stride as isize) as usize;
                if self.coord(i).abs() <= lim
                    && self.coord(j).abs() <= lim
                    && self.in_margin(i, j, GRID_MARGIN)
                {
                    out.push((i, j));
                }
            }
        }
        out
    }

    pub fn min_value(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["x", "y", "phi"])?;
        for j in 0..self.n {
            for i in 0..self.n {
                wr.write_record([
                    crate::io::fmt17(self.coord(i)),
                    crate::io::fmt17(self.coord(j)),
                    crate::io::fmt17(self.at(i, j)),
                ])?;
            }
        }
        wr.flush()?;
        Ok(())
    }

    /// Read the `x,y,phi` format written by [`GridPotential::write_csv`].
    pub fn read_csv<R: Read>(r: R, body: Option<ConvexBody>) -> Result<GridPotential> {
        let mut rd = csv::Reader::from_reader(r);
        let mut rows = Vec::new();
        for rec in rd.records() {
            let rec = rec?;
            if rec.len() < 3 {
                return Err(Error::validation("grid CSV rows need x, y, phi"));
            }
            let p = |k: usize| {
                rec[k]
                    .trim()
                    .parse::<f64>()
                    .map_err(|_| Error::validation(format!("bad number {:?}", &rec[k])))
            };
            rows.push((p(0)?, p(1)?, p(2)?));
        }
        let n = (rows.len() as f64).sqrt().round() as usize;
        if n * n != rows.len() || n < 3 {
            return Err(Error::validation("grid CSV is not a square grid"));
        }
        let half_width = rows.iter().map(|r| r.0.abs()).fold(0.0, f64::max);
        let grid = GridPotential::new(half_width, n, rows.iter().map(|r| r.2).collect(), body);
        for (k, row) in rows.iter().enumerate() {
            let (i, j) = (k % n, k / n);
            let tol = 1e-9 * grid.h();
            if (row.0 - grid.coord(i)).abs() > tol || (row.1 - grid.coord(j)).abs() > tol {
                return Err(Error::validation(
                    "grid CSV rows are not in row-major node order",
                ));
            }
        }
        Ok(grid)
    }
}

impl Potential for GridPotential {
    fn dim(&self) -> usize {
        2
    }
    fn source(&self) -> Source {
        Source::Grid
    }
    fn max_order(&self) -> usize {
        4
    }
    fn name(&self) -> String {
        format!("grid(L={}, N={})", self.half_width, self.n)
    }

    fn taylor(&self, x: &[f64], order: usize) -> std::result::Result<Series, JetError> {
        let (i, j) = self
            .node_of(x)
            .ok_or(JetError::OutsideRegion { x: x[0], y: x[1] })?;
        Ok(self.jet_node(i, j, order)?.series().clone())
    }

    fn error_estimate(&self, x: &[f64], series: &Series) -> Vec<f64> {
        match self
            .node_of(x)
            .and_then(|(i, j)| self.jet_node(i, j, series.order()).ok())
        {
            Some(j) => j.est_error,
            None => vec![f64::INFINITY; series.order() + 1],
        }
    }

    fn jet(&self, x: &[f64], order: usize) -> std::result::Result<super::Jet, JetError> {
        let (i, j) = self
            .node_of(x)
            .ok_or(JetError::OutsideRegion { x: x[0], y: x[1] })?;
        self.jet_node(i, j, order)
    }
}
