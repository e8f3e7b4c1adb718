//! Radial profile of the unit ball by shooting, and its curvature diagnostics.

use kelab::geometry::point_geometry;
use kelab::potentials::{ball_profile, BallProfileConfig, Potential};
use kelab::riemannian::ball_diagnostics;

fn main() -> kelab::Result<()> {
    let p = ball_profile(BallProfileConfig::default())?;
    println!("φ(0) = {:.15}", p.phi0);
    println!("φ'({}) = {:.12}", p.r_max(), p.dphi.last().unwrap());
    println!("max ODE residual {:.2e}", p.max_residual());

    let d = ball_diagnostics(&p)?;
    println!(
        "diameter radius D = {:.10} (tail bound {:.1e})",
        d.diameter_radius, d.tail_bound
    );
    println!(
        "max |H − λ/4| on [0.5, 5]: {:.2e}",
        d.max_curvature_mismatch
    );
    println!("{:>6} {:>14} {:>14}", "r", "H(r)", "λ/4");
    for row in d
        .curvature
        .iter()
        .filter(|c| (c.r * 4.0).round() % 8.0 == 0.0)
    {
        println!(
            "{:>6.2} {:>14.6e} {:>14.6e}",
            row.r, row.h_direct, row.lambda_quarter
        );
    }
    let g = point_geometry(&p.jet(&[1.0, 1.0], 3)?)?;
    println!("λ at (1, 1) from the tensor engine: {:.12}", g.lambda);
    Ok(())
}
