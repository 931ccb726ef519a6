use std::path::Path;
use std::process::{Command, Output};

fn dlm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dlm")).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

fn run_csv(dir: &Path, method: &str) -> String {
    let o = dlm(&["run", "--test", "1", "--method", method, "--levels", "4:16", "--quiet", "--out", dir.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    std::fs::read_to_string(dir.join(format!("test1_bp_{method}.csv"))).unwrap()
}

fn errors(csv: &str) -> Vec<Vec<f64>> {
    csv.lines().skip(1).map(|l| l.split(',').skip(3).take(7).map(|v| v.parse().unwrap()).collect()).collect()
}

/// Value printed after `label` in the overlay summary.
fn stat(out: &str, label: &str) -> f64 {
    let line = out.lines().find(|l| l.starts_with(label)).unwrap();
    line[label.len()..].trim().parse().unwrap()
}

#[test]
fn run_writes_reference_table() {
    let dir = tempfile::tempdir().unwrap();
    let csv = run_csv(dir.path(), "intersect");
    let mut lines = csv.lines();
    let header = lines.next().unwrap();
    assert!(header.starts_with("level,h_fluid,h_solid,err_p_L2,err_u_L2,err_u_H1,err_X_L2,err_X_H1,err_lam_L2,err_lam_H1,rate_"));
    let first = lines.next().unwrap();
    assert!(first.starts_with("0,2.500e-01,1.250e-01,2.102e-02,"), "{first}");
    assert_eq!(csv.lines().count(), 4);
    assert!(!csv.contains('\r'));
    assert!(csv.ends_with('\n'));

    // bitwise deterministic
    let again = tempfile::tempdir().unwrap();
    assert_eq!(run_csv(again.path(), "intersect"), csv);

    // matching meshes: the no-intersection table agrees to three digits
    let q2 = run_csv(dir.path(), "noint-q2");
    for (a, b) in errors(&csv).iter().zip(errors(&q2)) {
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() <= 1e-3 * x, "{x} vs {y}");
        }
    }
}

#[test]
fn configuration_errors_exit_with_one() {
    let o = dlm(&["run", "--test", "9", "--levels", "4:8"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("unknown test"));
    for bad in [
        vec!["run", "--test", "1", "--levels", "3:9"],
        vec!["run", "--test", "1", "--levels", "8:4"],
        vec!["run", "--test", "1", "--method", "exact"],
        vec!["run", "--test", "1", "--element", "p2"],
        vec!["overlay-stats", "--test", "0"],
        vec!["frobnicate"],
    ] {
        let o = dlm(&bad);
        assert_eq!(o.status.code(), Some(1), "{bad:?}: {}", stderr(&o));
    }
    assert_eq!(dlm(&["--help"]).status.code(), Some(0));
}

#[test]
fn overlay_stats_conserve_area() {
    let o = dlm(&["overlay-stats", "--test", "1", "--level", "2"]);
    assert!(o.status.success());
    let out = stdout(&o);
    assert!(stat(&out, "max area defect") <= 1e-10);
    assert_eq!(stat(&out, "covered area"), 4.0);
    // matching meshes: one cell per solid triangle
    assert_eq!(stat(&out, "overlay cells"), stat(&out, "solid triangles"));

    let o = dlm(&["overlay-stats", "--test", "3", "--level", "2", "--per-triangle"]);
    let out = stdout(&o);
    assert!((stat(&out, "covered area") - 4.0).abs() <= 1e-10);
    assert_eq!(out.lines().filter(|l| l.split(',').count() == 3).count(), 1 + 2 * 8 * 8);
}

#[test]
fn disk_overlay_area_matches_shoelace() {
    let dir = tempfile::tempdir().unwrap();
    let dump = dir.path().join("polygons.csv");
    let o = dlm(&["overlay-stats", "--test", "7", "--level", "2", "--dump", dump.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let area = stat(&stdout(&o), "mapped solid area");

    // straight-edge image of the boundary of the 8x8 mesh on [-1,1]^2
    let n = 8;
    let map = |x: f64, y: f64| (x * (1.0 - 0.5 * y * y).sqrt(), y * (1.0 - 0.5 * x * x).sqrt());
    let s = |k: usize| -1.0 + 2.0 * k as f64 / n as f64;
    let mut loop_pts = Vec::new();
    loop_pts.extend((0..n).map(|k| map(s(k), -1.0)));
    loop_pts.extend((0..n).map(|k| map(1.0, s(k))));
    loop_pts.extend((0..n).map(|k| map(s(n - k), 1.0)));
    loop_pts.extend((0..n).map(|k| map(-1.0, s(n - k))));
    let shoelace: f64 = (0..loop_pts.len())
        .map(|i| {
            let (a, b) = (loop_pts[i], loop_pts[(i + 1) % loop_pts.len()]);
            a.0 * b.1 - b.0 * a.1
        })
        .sum::<f64>()
        / 2.0;
    assert!((area - shoelace).abs() <= 1e-3);
    assert!(area < std::f64::consts::PI);

    let csv = std::fs::read_to_string(&dump).unwrap();
    assert!(csv.starts_with("solid_tri,fluid_tri,vertex,x,y\n"));
    assert!(csv.lines().skip(1).all(|l| l.split(',').count() == 5));
}

#[test]
fn solid_outside_fluid_is_a_coverage_error() {
    let o = dlm(&["overlay-stats", "--test", "3", "--level", "1", "--shift", "1.5,0"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("not covered"), "{}", stderr(&o));
}

#[test]
fn fixture_directory_override() {
    let src = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/meshes/unit_square_unstructured_h0.125.msh");
    let dir = tempfile::tempdir().unwrap();
    std::fs::copy(&src, dir.path().join("unit_square_unstructured_h0.125.msh")).unwrap();
    let run = |fixtures: &Path| {
        Command::new(env!("CARGO_BIN_EXE_dlm"))
            .args(["overlay-stats", "--test", "4", "--level", "2"])
            .env("FSI_FIXTURES", fixtures)
            .output()
            .unwrap()
    };
    let o = run(dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    assert!((stat(&stdout(&o), "covered area") - 4.0).abs() <= 1e-10);

    let empty = tempfile::tempdir().unwrap();
    let o = run(empty.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("fixture mesh not found"));
}
