use std::fs;
use std::path::Path;

use kelab::cli::{run, RunManifest, EXIT_SOLVER, EXIT_VALIDATION, EXIT_VERIFY};
use kelab::potentials::GridPotential;

fn kelab(args: &[&str]) -> i32 {
    let mut argv = vec!["kelab"];
    argv.extend_from_slice(args);
    run(argv)
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn outputs_without_manifest(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.file_name().unwrap() != "manifest.json")
        .map(|p| {
            let name = p.file_name().unwrap().to_string_lossy().into_owned();
            (name, fs::read(&p).unwrap())
        })
        .collect();
    files.sort();
    files
}

#[test]
fn solve_then_verify_grid_bounds() {
    let tmp = tempfile::tempdir().unwrap();
    let body = tmp.path().join("square.json");
    fs::write(&body, r#"{"kind": "box", "halfwidths": [1, 1]}"#).unwrap();
    let out = tmp.path().join("square");
    let code = kelab(&[
        "solve",
        "--body",
        path(&body),
        "--L",
        "8",
        "--n",
        "129",
        "--out",
        path(&out),
    ]);
    assert_eq!(code, 0);
    let manifest: RunManifest =
        serde_json::from_slice(&fs::read(out.join("manifest.json")).unwrap()).unwrap();
    let listed: Vec<_> = manifest.outputs.iter().map(|o| o.path.as_str()).collect();
    for f in ["body.json", "potential.csv", "residual.csv", "solve.json"] {
        assert!(listed.contains(&f), "{f} missing from {listed:?}");
        assert!(out.join(f).exists());
    }

    let report = tmp.path().join("bounds");
    let case = format!("grid:{}", path(&out));
    let code = kelab(&[
        "verify",
        "--case",
        &case,
        "--suite",
        "bounds",
        "--out",
        path(&report),
    ]);
    assert_eq!(code, 0);
    let summary: serde_json::Value =
        serde_json::from_slice(&fs::read(report.join("report.json")).unwrap()).unwrap();
    let lam = &summary["lambda_upper"];
    assert!(lam["pass"].as_bool().unwrap());
    assert!(lam["n_checked"].as_u64().unwrap() > 0);

    let text = kelab::cli::report_text(&report).unwrap();
    assert!(text.contains("lambda_upper") && text.contains("PASS"));
}

#[test]
fn repeated_runs_are_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let body = tmp.path().join("pentagon.json");
    fs::write(
        &body,
        r#"{"kind": "polygon", "vertices": [[1, 0], [0.309, 0.951], [-0.809, 0.588], [-0.809, -0.588], [0.309, -0.951]]}"#,
    )
    .unwrap();
    let dirs: Vec<_> = (0..2).map(|k| tmp.path().join(format!("run{k}"))).collect();
    for d in &dirs {
        let code = kelab(&[
            "solve",
            "--body",
            path(&body),
            "--n",
            "65",
            "--out",
            path(d),
        ]);
        assert_eq!(code, 0);
    }
    assert_eq!(
        outputs_without_manifest(&dirs[0]),
        outputs_without_manifest(&dirs[1])
    );

    let verified: Vec<_> = (0..2)
        .map(|k| tmp.path().join(format!("verify{k}")))
        .collect();
    for d in &verified {
        let code = kelab(&[
            "--seed",
            "3",
            "verify",
            "--case",
            "simplex",
            "--suite",
            "all",
            "--sample",
            "8",
            "--out",
            path(d),
        ]);
        assert_eq!(code, 0);
    }
    assert_eq!(
        outputs_without_manifest(&verified[0]),
        outputs_without_manifest(&verified[1])
    );
}

#[test]
fn failing_check_exits_with_verification_code() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("quadratic");
    fs::create_dir(&dir).unwrap();
    // convex but not a solution: the trace identity Φ^{ab}Φ_abi = Φ_i fails
    let grid = GridPotential::from_fn(4.0, 65, None, |x, y| 0.5 * (x * x + y * y));
    grid.write_csv(fs::File::create(dir.join("potential.csv")).unwrap())
        .unwrap();
    let out = tmp.path().join("report");
    let case = format!("grid:{}", path(&dir));
    let code = kelab(&[
        "verify",
        "--case",
        &case,
        "--suite",
        "algebraic",
        "--out",
        path(&out),
    ]);
    assert_eq!(code, EXIT_VERIFY);
    assert!(out.join("report.json").exists());
    let err: serde_json::Value =
        serde_json::from_slice(&fs::read(out.join("error.json")).unwrap()).unwrap();
    assert_eq!(err["error"]["exit_code"], EXIT_VERIFY);
}

#[test]
fn invalid_input_and_solver_failure_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("x");
    assert_eq!(
        kelab(&["verify", "--case", "nonsense", "--out", path(&out)]),
        EXIT_VALIDATION
    );
    let body = tmp.path().join("b.json");
    fs::write(&body, r#"{"kind": "box", "halfwidths": [1, 1]}"#).unwrap();
    assert_eq!(
        kelab(&[
            "solve",
            "--body",
            path(&body),
            "--n",
            "64",
            "--out",
            path(&out)
        ]),
        EXIT_VALIDATION
    );
    assert_eq!(
        kelab(&[
            "solve",
            "--body",
            path(&body),
            "--n",
            "33",
            "--max-iter",
            "1",
            "--out",
            path(&out)
        ]),
        EXIT_SOLVER
    );
    fs::write(
        &body,
        r#"{"kind": "polygon", "vertices": [[0, 0], [1, 0], [2, 0]]}"#,
    )
    .unwrap();
    assert_eq!(
        kelab(&["solve", "--body", path(&body), "--out", path(&out)]),
        EXIT_VALIDATION
    );
}
