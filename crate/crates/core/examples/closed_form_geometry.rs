//! Curvature of the closed-form potentials: λ ≡ 1/3 on the simplex, flat cube.

use kelab::geometry::point_geometry;
use kelab::potentials::{CubePotential, Potential, SimplexPotential};

fn main() -> kelab::Result<()> {
    let pots: [&dyn Potential; 2] = [&SimplexPotential::new(2), &CubePotential::new(2)];
    for pot in pots {
        println!("{}", pot.name());
        println!(
            "{:>14} {:>12} {:>12} {:>12} {:>12}",
            "x", "Φ", "λ", "|∇Φ|²", "min Λ"
        );
        for x in [[0.0, 0.0], [1.0, -0.5], [-2.0, 1.5], [3.0, 3.0]] {
            let g = point_geometry(&pot.jet(&x, 3)?)?;
            println!(
                "{:>14} {:>12.6} {:>12.3e} {:>12.6} {:>12.6}",
                format!("({}, {})", x[0], x[1]),
                g.phi,
                g.lambda,
                g.grad_sq,
                g.min_hess_eigenvalue()
            );
        }
    }
    Ok(())
}
