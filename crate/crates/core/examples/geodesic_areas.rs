//! Geodesics and geodesic ball areas of the simplex metric, which has
//! constant curvature 1/12, against the spherical caps.

use kelab::potentials::SimplexPotential;
use kelab::riemannian::{
    ball_area, cap_area, curvature_from_areas, geodesic, unit_vector, JetMetric,
};

fn main() -> kelab::Result<()> {
    let pot = SimplexPotential::new(2);
    let field = JetMetric(&pot);
    let x0 = [0.0, 0.0];
    let v0 = unit_vector(&field, x0, [1.0, 0.5])?;
    let path = geodesic(&field, x0, v0, 2.0)?;
    let end = path.end();
    println!(
        "geodesic of length 2 ends at ({:.9}, {:.9}), speed drift {:.1e}",
        end[0],
        end[1],
        path.speed_drift()
    );

    println!(
        "{:>5} {:>16} {:>16} {:>10}",
        "r", "area", "cap area", "quad err"
    );
    for r in [0.25, 0.5, 1.0, 2.0] {
        let b = ball_area(&field, x0, r)?;
        println!(
            "{r:>5} {:>16.12} {:>16.12} {:>10.1e}",
            b.area,
            cap_area(r),
            b.quadrature_error
        );
    }
    let k = curvature_from_areas(&field, x0, &[0.25, 0.5, 0.75, 1.0])?;
    println!(
        "curvature from area defects {:.8} (exact 1/12 = {:.8})",
        k.estimate,
        1.0 / 12.0
    );
    Ok(())
}
