//! Convex bodies: area, barycenter, support function and recentering.

use kelab::bodies::{make_body, random_polygon, regular_polygon, BodySpec};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> kelab::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let specs = [
        ("simplex", BodySpec::Simplex { n: 2 }),
        (
            "square",
            BodySpec::Box {
                halfwidths: vec![1.0, 1.0],
                center: None,
            },
        ),
        (
            "disk",
            BodySpec::Disk {
                radius: 1.0,
                center: Some([0.2, 0.0]),
            },
        ),
        ("pentagon", regular_polygon(5, 1.0, 0.3)),
        ("hexagon", random_polygon(&mut rng, 6, 0.7, 1.3)),
    ];
    println!(
        "{:<9} {:>8} {:>22} {:>8} {:>8}",
        "body", "area", "barycenter", "h(1,0)", "R_out"
    );
    for (name, spec) in specs {
        let body = make_body(&spec)?;
        let b = body.barycenter();
        println!(
            "{name:<9} {:>8.4} {:>22} {:>8.4} {:>8.4}",
            body.area(),
            format!("({:.4}, {:.4})", b[0], b[1]),
            body.support(&[1.0, 0.0])?,
            body.outer_radius()
        );
        let c = body.recenter();
        let b = c.barycenter();
        assert!(b[0].abs() < 1e-12 && b[1].abs() < 1e-12);
    }
    Ok(())
}
