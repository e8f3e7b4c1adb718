//! Solve on a regular pentagon and bound λ with the grid error bar.

use kelab::bodies::{make_body, regular_polygon};
use kelab::identities::lambda_error_bar;
use kelab::solver::{gradient_dilation, mass, solve, SolverConfig};

fn main() -> kelab::Result<()> {
    let body = make_body(&regular_polygon(5, 1.0, 0.3))?.recenter();
    let fine = solve(&body, &SolverConfig::with(8.0, 257))?;
    let coarse = solve(&body, &SolverConfig::with(8.0, 129))?;
    println!(
        "iterations {}, ke residual {:.2e}",
        fine.steps.len(),
        fine.ke_max
    );
    println!(
        "mass {:.5} vs body area {:.5}",
        mass(&fine.potential),
        body.area()
    );
    println!(
        "gradient image dilation {:.5}",
        gradient_dilation(&fine.potential, &body)
    );
    println!(
        "minimizer ({:.2e}, {:.2e})",
        fine.minimizer[0], fine.minimizer[1]
    );

    let e = lambda_error_bar(&fine.potential, &coarse.potential, 0.5, 8)?;
    let max = e
        .nodes
        .iter()
        .map(|n| n.lambda)
        .fold(f64::NEG_INFINITY, f64::max);
    let min = e
        .nodes
        .iter()
        .map(|n| n.lambda)
        .fold(f64::INFINITY, f64::min);
    println!(
        "λ on {} nodes: [{min:.5}, {max:.5}], error bar {:.2e}",
        e.nodes.len(),
        e.bar
    );
    println!("λ ≤ 1/3 + bar: {}", max <= 1.0 / 3.0 + e.bar);
    Ok(())
}
