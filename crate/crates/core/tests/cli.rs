use std::path::Path;
use std::process::Command;

use nfsolve::cli::{emit_plot_data, PlotKind, RunReport};
use nfsolve::io::read_tensor;

const MANUFACTURED: &str = r#"--source={"family":"helmholtz_manufactured","params":{"a":1,"c":1,"amplitude":1,"potential":{"family":"gaussian","params":{"beta":0.5,"c":1}}}}"#;

fn nfsolve(out: &Path, args: &[&str]) -> (i32, String) {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_nfsolve"));
    cmd.args(&args[..1]).arg("--out").arg(out).args(&args[1..]);
    let o = cmd.output().expect("binary runs");
    (o.status.code().expect("exit code"), String::from_utf8_lossy(&o.stderr).into_owned())
}

fn report(dir: &Path) -> RunReport {
    RunReport::from_json(&std::fs::read_to_string(dir.join("report.json")).unwrap()).unwrap()
}

#[test]
fn check_potential_passes_for_small_gaussian() {
    let dir = tempfile::tempdir().unwrap();
    let (code, _) = nfsolve(dir.path(), &["check-potential", "--potential.params.beta=1", "--grid.points_per_axis=12"]);
    assert_eq!(code, 0);
    let r = report(dir.path());
    assert!((r.stages.q_bound.unwrap().bound - 0.572).abs() < 1e-3);
    assert!(r.stages.assumptions.unwrap().passed);
}

#[test]
fn free_gaussian_is_not_solvable() {
    let dir = tempfile::tempdir().unwrap();
    let (code, _) = nfsolve(dir.path(), &["solve-h", r#"--potential={"family":"zero"}"#, "--grid.points_per_axis=16"]);
    assert_eq!(code, 2);
    let r = report(dir.path());
    let s = r.stages.solvability.unwrap();
    assert!((s.max_abs - 2f64.powf(-1.5) * (-0.25f64).exp()).abs() < 1e-3);
    assert!(r.stages.solution.is_none());
    let csv = std::fs::read_to_string(dir.path().join(PlotKind::SphereRestriction.file_name())).unwrap();
    assert_eq!(csv.lines().next(), Some("theta,phi,abs"));
}

#[test]
fn bad_config_exits_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let (code, err) = nfsolve(dir.path(), &["check-potential", "--solver.typo=1"]);
    assert_eq!(code, 1);
    assert!(err.contains("typo"), "{err}");
    let (code, _) = nfsolve(dir.path(), &["check-potential", "--grid.points_per_axis=-3"]);
    assert_eq!(code, 1);
}

#[test]
fn manufactured_separable_source_is_solved() {
    let dir = tempfile::tempdir().unwrap();
    let (code, _) = nfsolve(dir.path(), &["solve-separable"]);
    assert_eq!(code, 0);
    let r = report(dir.path());
    let s = r.stages.separable.unwrap();
    assert!(s.residual_l2.unwrap() < 1e-8);
    let m = r.stages.moments.unwrap();
    assert_eq!((m.zero_condition_count(), m.negative_condition_count()), (2, 2));
    let (shape, data) = read_tensor(&dir.path().join("solution.bin")).unwrap();
    assert_eq!(shape, vec![128, 160]);
    assert_eq!(data.len(), 128 * 160);
}

#[test]
fn first_moment_obstruction_exits_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let src = r#"--separable.source={"kind":"product","x":{"family":"poly_gaussian","params":{"terms":[{"coeff":1,"powers":[1]}],"c":1}},"level":1}"#;
    let (code, _) = nfsolve(dir.path(), &["solve-separable", src]);
    assert_eq!(code, 2);
    let r = report(dir.path());
    let failed = r.stages.separable.unwrap().failed_conditions;
    assert_eq!(failed, vec!["(g, x phi[N=2,k=1])".to_string()]);
}

#[test]
fn reports_are_deterministic_with_and_without_cache() {
    let out = tempfile::tempdir().unwrap();
    let cache = tempfile::tempdir().unwrap();
    let cache_arg = format!("--cache={}", cache.path().display());
    let args = ["solve-h", cache_arg.as_str(), "--grid.points_per_axis=16", "--grid.extent=5", MANUFACTURED];
    let (code, _) = nfsolve(out.path(), &args);
    assert_eq!(code, 0);
    let cold = std::fs::read(out.path().join("report.json")).unwrap();
    assert!(std::fs::read_dir(cache.path()).unwrap().count() > 0);
    let (code, _) = nfsolve(out.path(), &args);
    assert_eq!(code, 0);
    let warm = std::fs::read(out.path().join("report.json")).unwrap();
    assert_eq!(cold, warm);
    let (code, _) = nfsolve(out.path(), &[&args[..1], &args[2..]].concat());
    assert_eq!(code, 0);
    let r = report(out.path());
    assert!(r.stages.solution.unwrap().manufactured_error.unwrap() < 5e-2);
}

#[test]
fn witness_plot_has_inverse_root_slope() {
    let dir = tempfile::tempdir().unwrap();
    let (code, _) = nfsolve(dir.path(), &["witness", r#"--potential={"family":"zero"}"#, "--grid.points_per_axis=16"]);
    assert_eq!(code, 2);
    let r = report(dir.path());
    let path = emit_plot_data(&r, PlotKind::Witness, dir.path()).unwrap();
    let rows: Vec<(f64, f64)> = std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| {
            let mut it = l.split(',').map(|t| t.parse::<f64>().unwrap());
            (it.next().unwrap(), it.next().unwrap())
        })
        .collect();
    let (first, last) = (rows[0], rows[rows.len() - 1]);
    let slope = (last.1.ln() - first.1.ln()) / (last.0.ln() - first.0.ln());
    assert!((slope + 0.5).abs() < 0.08, "{slope}");
}

#[test]
fn spectrum_writes_ladder_and_patch() {
    let dir = tempfile::tempdir().unwrap();
    let (code, _) = nfsolve(dir.path(), &["spectrum"]);
    assert_eq!(code, 0);
    let ladder = std::fs::read_to_string(dir.path().join(PlotKind::EigenLadder.file_name())).unwrap();
    assert_eq!(ladder.lines().count(), 3);
    assert!(dir.path().join("eigenvector_j1_k1.csv").exists());
    assert!(dir.path().join("tuned_patch.json").exists());
    let (code, _) = nfsolve(dir.path(), &["spectrum", "--spectrum.tune=null"]);
    assert_eq!(code, 2);
}
