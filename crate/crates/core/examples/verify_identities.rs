//! Run every identity suite on the closed-form simplex and print the summary.

use kelab::cli::{verify, Case, Loaded, Suite};

fn main() -> kelab::Result<()> {
    let loaded = Loaded::load(&Case::Simplex)?;
    let points = loaded.sample(30, 0);
    let suites = [
        Suite::Algebraic,
        Suite::Laplacian,
        Suite::Qframe,
        Suite::Theorem,
        Suite::Bounds,
    ];
    let v = verify(&loaded, &points, &suites, 2.0)?;
    println!(
        "{:<26} {:>6} {:>8} {:>11}",
        "check", "status", "checked", "max_abs"
    );
    for (name, s) in v.report.summary() {
        let status = match (s.n_checked, s.pass) {
            (0, _) => "skip",
            (_, true) => "PASS",
            _ => "FAIL",
        };
        println!(
            "{name:<26} {status:>6} {:>8} {:>11.3e}",
            s.n_checked, s.max_abs
        );
    }
    println!("all pass: {}", v.report.all_pass());
    Ok(())
}
