//! Refinement study of the Monge-Ampère solver on the square and the disk.
//!
//! Run with `cargo run --release --example convergence_study`.

use kelab::bodies::{make_body, BodySpec};
use kelab::potentials::{ball_profile, CubePotential};
use kelab::solver::{convergence_study, SolverConfig};

fn table(name: &str, spec: BodySpec, oracle: &dyn Fn(f64, f64) -> f64) -> kelab::Result<()> {
    let body = make_body(&spec)?;
    let configs: Vec<_> = [65, 129, 257]
        .iter()
        .map(|&n| SolverConfig::with(8.0, n))
        .collect();
    let rows = convergence_study(&body, &configs, 4.0, Some(oracle))?;
    println!("{name}");
    println!(
        "{:>5} {:>10} {:>5} {:>11} {:>11} {:>7}",
        "n", "h", "iter", "ke_max", "error", "ratio"
    );
    let mut prev: Option<f64> = None;
    for (row, _) in &rows {
        let err = row.error.unwrap_or(f64::NAN);
        let ratio = prev.map_or(String::from("-"), |p| format!("{:.3}", p / err));
        println!(
            "{:>5} {:>10.5} {:>5} {:>11.3e} {:>11.3e} {:>7}",
            row.n, row.h, row.iterations, row.ke_max, err, ratio
        );
        prev = Some(err);
    }
    Ok(())
}

fn main() -> kelab::Result<()> {
    let cube = CubePotential::new(2);
    table(
        "square [-1,1]^2 against the product potential",
        BodySpec::Box {
            halfwidths: vec![1.0, 1.0],
            center: None,
        },
        &|x, y| cube.value(&[x, y]),
    )?;
    let profile = ball_profile(Default::default())?;
    table(
        "unit disk against the radial profile",
        BodySpec::Disk {
            radius: 1.0,
            center: None,
        },
        &|x, y| profile.eval(x.hypot(y))[0],
    )?;
    Ok(())
}
