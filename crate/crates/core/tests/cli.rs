use std::path::Path;
use std::process::{Command, Output};

use p1stab::mesh::load_mesh;
use serde_json::Value;

fn p1stab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_p1stab")).args(args).env_remove("P1STAB_THREADS").output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn analyze_json(args: &[&str]) -> Value {
    let mut all = vec!["analyze"];
    all.extend_from_slice(args);
    let o = p1stab(&all);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    serde_json::from_str(&stdout(&o)).unwrap()
}

#[test]
fn gen_uniform1d_writes_expected_mesh() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("u.mesh");
    let o = p1stab(&["gen", "--uniform1d", "64", "-o", path.to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    let m = load_mesh(&path).unwrap();
    assert_eq!((m.dim(), m.n_nodes(), m.n_elements(), m.n_free()), (1, 65, 64, 63));
}

#[test]
fn gen_grid_element_count() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("g.mesh");
    let o = p1stab(&["gen", "--grid", "32x32", "--diag", "alternating", "-o", path.to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    assert!(stdout(&o).contains("2048 elements"));
    assert_eq!(load_mesh(&path).unwrap().n_elements(), 2048);
}

#[test]
fn usage_errors_exit_1() {
    assert_eq!(code(&p1stab(&["gen", "--uniform1d", "4"])), 1);
    assert_eq!(code(&p1stab(&["gen", "--uniform1d", "4", "--grid", "2x2", "-o", "x"])), 1);
    assert_eq!(code(&p1stab(&["integrate", "--generate", "uniform1d:8", "--steps", "0"])), 1);
    assert_eq!(code(&p1stab(&["frobnicate"])), 1);
    assert_eq!(code(&p1stab(&["--help"])), 0);
}

#[test]
fn validation_errors_exit_2() {
    assert_eq!(code(&p1stab(&["analyze", "--mesh", "/nonexistent/mesh"])), 2);
    assert_eq!(code(&p1stab(&["analyze", "--generate", "grid:0x4"])), 2);
    assert_eq!(code(&p1stab(&["analyze", "--generate", "uniform1d:8", "--field", "no-such-field"])), 2);
    assert_eq!(code(&p1stab(&["experiment", "--name", "no-such-family"])), 2);
}

#[test]
fn analyze_small_1d_lumped_matches_closed_form() {
    let v = analyze_json(&["--generate", "uniform1d:4", "--lumped"]);
    // h = 1/4, lumped: A = tridiag(-1, 2, -1)/h, M = h I
    let h: f64 = 0.25;
    let want = (2.0 - 2.0 * (3.0 * std::f64::consts::PI / 4.0).cos()) / (h * h);
    let got = v["lambda_exact"].as_f64().unwrap();
    assert!((got - want).abs() <= 1e-10 * want, "{got} vs {want}");
    assert!((got - 54.6274).abs() < 1e-4);
    assert_eq!(v["n_nodes"].as_u64(), Some(5));
}

#[test]
fn check_estimate_below_lower_bound_exits_3() {
    let o = p1stab(&["analyze", "--generate", "uniform1d:4", "--lumped", "--check-estimate", "30"]);
    assert_eq!(code(&o), 3);
    let o = p1stab(&["analyze", "--generate", "uniform1d:4", "--lumped", "--check-estimate", "60"]);
    assert_eq!(code(&o), 0);
}

#[test]
fn json_and_csv_agree() {
    let args = ["--generate", "grid:6x6:alternating", "--field", "aniso2d:kappa=100"];
    let v = analyze_json(&args);
    let mut all = vec!["analyze"];
    all.extend_from_slice(&args);
    all.extend_from_slice(&["--format", "csv"]);
    let o = p1stab(&all);
    assert_eq!(code(&o), 0);
    let text = stdout(&o);
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("N,n_free,mass,method,tau_max_over_s2,tau_h_over_s2,ratio"));
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
    let num = |s: &str| s.parse::<f64>().unwrap();
    let diag = rows.iter().find(|r| r[3] == "diag").unwrap();
    assert_eq!(num(diag[0]), v["n_elements"].as_f64().unwrap());
    assert_eq!(num(diag[4]), v["tau_max_over_s2"].as_f64().unwrap());
    assert_eq!(num(diag[5]), v["tau_h_over_s2"].as_f64().unwrap());
    let geo = rows.iter().find(|r| r[3] == "geometric").unwrap();
    assert_eq!(num(geo[5]), v["tau_geo_over_s2"].as_f64().unwrap());
    let zd = rows.iter().find(|r| r[3] == "zhudu").unwrap();
    assert_eq!(num(zd[5]), v["tau_zhudu_over_s2"].as_f64().unwrap());
}

#[test]
fn lanczos_estimate_close_to_exact() {
    let exact = analyze_json(&["--generate", "grid:16x16"]);
    let est = analyze_json(&["--generate", "grid:16x16", "--lanczos", "5", "--security", "1.1"]);
    let t_max = exact["tau_max_over_s2"].as_f64().unwrap();
    let t_est = est["tau_max_over_s2"].as_f64().unwrap();
    let r = t_max / t_est;
    assert!((1.0..=1.15).contains(&r), "ratio {r}");
}

#[test]
fn export_writes_matrix_market() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().join("mtx");
    let o = p1stab(&["analyze", "--generate", "uniform1d:8", "--export", d.to_str().unwrap(), "-o", dir.path().join("r.json").to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    for f in ["mass.mtx", "lumped.mtx", "stiffness.mtx"] {
        let t = std::fs::read_to_string(d.join(f)).unwrap();
        assert!(t.starts_with("%%MatrixMarket matrix coordinate real symmetric"), "{f}");
    }
}

#[test]
fn integrate_pass_at_limit_and_fail_beyond() {
    let o = p1stab(&["integrate", "--generate", "grid:6x6", "--stages", "5", "--steps", "200"]);
    assert_eq!(code(&o), 0);
    assert!(stdout(&o).contains("PASS"));
    let o = p1stab(&[
        "integrate", "--generate", "grid:6x6", "--stages", "5", "--steps", "400", "--tau-frac", "1.02", "--seed-eigvec",
    ]);
    assert_eq!(code(&o), 3);
    assert!(stdout(&o).contains("FAIL"));
}

#[test]
fn integrate_lumped_pass_at_limit() {
    let o = p1stab(&["integrate", "--generate", "groundwater:4", "--lumped", "--stages", "2", "--steps", "200"]);
    assert_eq!(code(&o), 0, "{}", stdout(&o));
}

fn dir_contents(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), std::fs::read(e.path()).unwrap())
        })
        .collect();
    v.sort();
    v
}

#[test]
fn experiment_output_is_independent_of_threads() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("exp.toml");
    std::fs::write(
        &spec,
        "[[experiment]]\nname = \"per1d\"\nsizes = [16, 32, 64]\n\n\
         [[experiment]]\nname = \"zd2d\"\ngrids = [\"8x8\", \"2x32\"]\nbounds = [\"diag\", \"zhudu\", \"shewchuk\", \"lanczos\"]\n",
    )
    .unwrap();
    let mut outs = Vec::new();
    for threads in ["1", "4"] {
        let out = dir.path().join(format!("out-{threads}"));
        let o = p1stab(&["experiment", "--spec", spec.to_str().unwrap(), "--out", out.to_str().unwrap(), "--threads", threads]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
        outs.push(dir_contents(&out));
    }
    assert_eq!(outs[0], outs[1]);
    assert!(outs[0].iter().any(|(n, _)| n == "summary.json"));
    let csv = outs[0].iter().find(|(n, _)| n.starts_with("zd2d")).unwrap();
    let text = String::from_utf8_lossy(&csv.1);
    assert!(text.starts_with("experiment,mesh,N,n_free,mass,method,tau_max_over_s2,tau_h_over_s2,ratio,warning"));
    assert!(text.contains("lanczos"));
}

#[test]
fn experiment_missing_mesh_file_is_a_warning_row() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("exp.toml");
    std::fs::write(&spec, "[[experiment]]\nname = \"zd2d\"\ngrids = []\nmesh_files = [\"/nonexistent.mesh\"]\n").unwrap();
    let out = dir.path().join("out");
    let o = p1stab(&["experiment", "--spec", spec.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let files = dir_contents(&out);
    let csv = files.iter().find(|(n, _)| n.ends_with(".csv")).unwrap();
    assert!(String::from_utf8_lossy(&csv.1).contains("nonexistent"));
}
