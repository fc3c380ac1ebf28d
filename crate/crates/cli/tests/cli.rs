use std::path::Path;
use std::process::{Command, Output};

fn mmwlab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mmwlab")).args(args).output().expect("run mmwlab")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

/// Data rows: everything after the comment line and the column header.
fn rows(text: &str) -> Vec<Vec<String>> {
    text.lines()
        .filter(|l| !l.starts_with('#'))
        .skip(1)
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

fn column(text: &str, name: &str) -> usize {
    let header = text.lines().find(|l| !l.starts_with('#')).unwrap();
    header.split(',').position(|c| c == name).unwrap_or_else(|| panic!("no column {name}"))
}

fn write_config(dir: &Path, body: &str) -> String {
    let path = dir.join("scenario.cfg");
    std::fs::write(&path, body).unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn presets_table_rows() {
    let o = mmwlab(&["presets", "--csv"]);
    assert!(o.status.success());
    let text = stdout(&o);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "city,lambda_ell,d_l,d_w,los_distance_m");
    assert_eq!(lines[1], "Manhattan,1467,26.5,20.83,23.12");
    assert_eq!(lines[2], "Gangnam,1010,22.41,9.35,62.4");
    assert_eq!(lines[3], "Chicago,474,36.35,21.48,69.74");
    assert_eq!(lines.len(), 4);

    let header_only = stdout(&mmwlab(&["presets", "--csv", "--no-rows"]));
    assert_eq!(header_only.lines().count(), 1);
    let table = stdout(&mmwlab(&["presets"]));
    assert_eq!(table.lines().count(), 4);
}

#[test]
fn analytic_gangnam_los_distance() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "city = Gangnam\n");
    let o = mmwlab(&["analytic", "--config", &cfg, "--beta", "0"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    assert!(text.starts_with("# mmwlab "));
    let r = rows(&text);
    assert_eq!(r.len(), 1);
    let r_l: f64 = r[0][column(&text, "r_l")].parse().unwrap();
    assert!((r_l - 62.4).abs() < 1.0, "{r_l}");
}

#[test]
fn config_and_range_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "lambda_q = 3\n");
    let o = mmwlab(&["analytic", "--config", &cfg]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("lambda_q"));

    assert_eq!(mmwlab(&["analytic", "--beta", "1.5"]).status.code(), Some(2));
    assert_eq!(mmwlab(&["simulate", "--mode", "sideways"]).status.code(), Some(2));
}

#[test]
fn unwritable_output_exits_4() {
    let o = mmwlab(&["analytic", "--out", "/nonexistent-dir/out.csv"]);
    assert_eq!(o.status.code(), Some(4));
}

#[test]
fn optimal_beta_coverage_without_near_users_is_one() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "gamma_c = 0\n");
    let text = stdout(&mmwlab(&["optimal-beta", "--config", &cfg, "--objective", "coverage"]));
    let r = rows(&text);
    assert_eq!(r[0][0], "coverage");
    assert_eq!(r[0][1].parse::<f64>().unwrap(), 1.0);
}

#[test]
fn optimal_beta_rate_is_interior_for_reference_parameters() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "lambda_b = 200\nlambda_ell = 200\ntheta = 0.5235987755982988\nt = 10\ngamma_c = 0.6\n",
    );
    let text = stdout(&mmwlab(&["optimal-beta", "--config", &cfg]));
    let beta: f64 = rows(&text)[0][1].parse().unwrap();
    assert!(beta > 0.0 && beta < 1.0, "{beta}");
}

#[test]
fn beta_sweep_without_near_users_is_nondecreasing() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "gamma_c = 0\n");
    let text = stdout(&mmwlab(&["sweep", "--config", &cfg, "--key", "beta", "--start", "0", "--stop", "1", "--steps", "21"]));
    let s_col = column(&text, "s");
    let s: Vec<f64> = rows(&text).iter().map(|r| r[s_col].parse().unwrap()).collect();
    assert_eq!(s.len(), 21);
    assert!(s.windows(2).all(|w| w[1] >= w[0] - 1e-9), "{s:?}");
}

#[test]
fn two_step_sweep_has_two_rows_per_engine_in_grid_order() {
    let text = stdout(&mmwlab(&[
        "sweep", "--key", "theta", "--start", "0.3", "--stop", "0.6", "--steps", "2", "--engines", "analytic,sim-losball",
        "--drops", "50",
    ]));
    let r = rows(&text);
    let got: Vec<(&str, &str)> = r.iter().map(|x| (x[1].as_str(), x[2].as_str())).collect();
    assert_eq!(got, [("0.3", "analytic"), ("0.3", "sim-losball"), ("0.6", "analytic"), ("0.6", "sim-losball")]);
    assert!(r.iter().all(|x| x[3] == "ok"));
}

#[test]
fn sweep_records_per_point_failures() {
    // beta > 1 is invalid at the last grid point only.
    let o = mmwlab(&["sweep", "--key", "beta", "--start", "0.5", "--stop", "1.5", "--steps", "3"]);
    assert!(o.status.success());
    let r = rows(&stdout(&o));
    assert_eq!(r[0][3], "ok");
    assert!(r[2][3].starts_with("error"), "{:?}", r[2]);
}

#[test]
fn simulate_writes_trace_and_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let trace = dir.path().join("trace.csv");
    let args = ["simulate", "--mode", "losball", "--drops", "200", "--seed", "3", "--trace", trace.to_str().unwrap()];
    let a = mmwlab(&args);
    let b = mmwlab(&args);
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
    let text = stdout(&a);
    assert!(text.lines().next().unwrap().contains("seed=3"));
    let traced = std::fs::read_to_string(&trace).unwrap();
    assert_eq!(traced.lines().count(), 201);
}

#[test]
fn out_flag_writes_file() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("a.csv");
    let o = mmwlab(&["analytic", "--out", out.to_str().unwrap()]);
    assert!(o.status.success());
    assert!(o.stdout.is_empty());
    assert!(std::fs::read_to_string(&out).unwrap().contains("r_l"));
}
