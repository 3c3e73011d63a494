use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn biquad() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_biquad"));
    cmd.env_remove("BIQUAD_TOL");
    cmd
}

fn run(args: &[&str]) -> Output {
    biquad().args(args).output().expect("binary runs")
}

fn exit(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

fn fixture(dir: &TempDir, name: &str, body: &str) -> PathBuf {
    let path = dir.path().join(name);
    fs::write(&path, body).unwrap();
    path
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn simple_form(dir: &TempDir, m: usize, n: usize, k: usize) -> PathBuf {
    let path = dir.path().join(format!("p_{m}_{n}_{k}.json"));
    let out = run(&["gen-simple", &m.to_string(), &n.to_string(), &k.to_string(), "--out", s(&path)]);
    assert_eq!(exit(&out), 0);
    path
}

#[test]
fn zero_a_and_b_is_psd() {
    let dir = TempDir::new().unwrap();
    let f = fixture(&dir, "x.json", r#"{"m":3,"d":[1,1],"A":[[0,0],[0,0]],"B":[[0,0],[0,0]]}"#);
    let out = run(&["--json", "check-psd", s(&f)]);
    assert_eq!(exit(&out), 0);
    let v = json(&out);
    assert_eq!(v["status"], "ok");
    assert_eq!(v["payload"]["certificate"]["verdict"], "PSD");
    assert_eq!(v["payload"]["monic"], true);
}

#[test]
fn off_diagonal_a_is_not_psd_with_witness() {
    let dir = TempDir::new().unwrap();
    let f = fixture(&dir, "x.json", r#"{"m":3,"d":[1,1],"A":[[0,2],[2,0]],"B":[[0,0],[0,0]]}"#);
    let out = run(&["--json", "check-psd", s(&f)]);
    assert_eq!(exit(&out), 2);
    let v = json(&out);
    assert_eq!(v["status"], "not-psd");
    let w = &v["payload"]["certificate"]["witness"];
    let value = w["value"].as_f64().unwrap();
    assert!((value + 3.0).abs() < 1e-9, "witness value {value}");
}

#[test]
fn check_psd_rejects_general_forms() {
    let dir = TempDir::new().unwrap();
    let f = simple_form(&dir, 2, 2, 3);
    let out = run(&["check-psd", s(&f)]);
    assert_eq!(exit(&out), 3);
    assert!(String::from_utf8_lossy(&out.stderr).contains("sos-rank"));
}

#[test]
fn decompose_writes_a_verified_decomposition() {
    let dir = TempDir::new().unwrap();
    let f = fixture(&dir, "x.json", r#"{"m":3,"d":[1,1],"A":[[0.2,0],[0,0.1]],"B":[[0,0.3],[0.3,0]]}"#);
    let dest = dir.path().join("sos.json");
    for method in ["naive", "structured", "auto"] {
        let out = run(&["--json", "decompose", s(&f), "--method", method, "--out", s(&dest)]);
        assert_eq!(exit(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
        let v = json(&out);
        assert!(v["payload"]["max_residual"].as_f64().unwrap() < 1e-8);
        let written: Value = serde_json::from_str(&fs::read_to_string(&dest).unwrap()).unwrap();
        assert_eq!(written["m"], 3);
        assert_eq!(written["n"], 2);
        assert_eq!(written["factors"].as_array().unwrap().len(), v["payload"]["factors"].as_u64().unwrap() as usize);
    }
}

#[test]
fn decompose_of_non_psd_form_exits_2() {
    let dir = TempDir::new().unwrap();
    let f = fixture(&dir, "x.json", r#"{"m":3,"d":[1,1],"A":[[0,2],[2,0]],"B":[[0,0],[0,0]]}"#);
    let out = run(&["decompose", s(&f)]);
    assert_eq!(exit(&out), 2);
}

#[test]
fn gen_simple_reports_support_and_rank() {
    let dir = TempDir::new().unwrap();
    let support = dir.path().join("support.json");
    let out = run(&["--json", "gen-simple", "3", "3", "6", "--support-out", s(&support)]);
    assert_eq!(exit(&out), 0);
    let v = json(&out);
    assert_eq!(v["payload"]["sos_rank"]["kind"], "exact");
    assert_eq!(v["payload"]["sos_rank"]["value"], 6);
    let pairs: Value = serde_json::from_str(&fs::read_to_string(&support).unwrap()).unwrap();
    let expect = serde_json::json!([[1, 1], [2, 2], [3, 3], [1, 2], [2, 3], [3, 1]]);
    assert_eq!(pairs["pairs"], expect);
    assert_eq!(v["payload"]["support"]["pairs"], expect);
}

#[test]
fn gen_simple_rejects_out_of_range_s() {
    let out = run(&["gen-simple", "2", "2", "5"]);
    assert_eq!(exit(&out), 1);
}

#[test]
fn sos_rank_of_full_two_by_two_support_is_two() {
    let dir = TempDir::new().unwrap();
    let f = simple_form(&dir, 2, 2, 4);
    let out = run(&["--json", "sos-rank", s(&f)]);
    assert_eq!(exit(&out), 0);
    let v = json(&out);
    assert_eq!(v["payload"]["upper_bound"], 2);
    assert_eq!(v["payload"]["best"]["gamma"][0].as_f64().unwrap(), -1.0);
}

#[test]
fn sos_rank_is_exact_on_rectangle_free_supports() {
    let dir = TempDir::new().unwrap();
    for (m, n, k) in [(3, 3, 6), (4, 2, 5)] {
        let f = simple_form(&dir, m, n, k);
        let out = run(&["--json", "sos-rank", s(&f)]);
        assert_eq!(exit(&out), 0);
        let v = json(&out);
        assert_eq!(v["payload"]["exact"], k, "P_{{{m},{n},{k}}}");
        assert_eq!(v["payload"]["lower_bound"], k);
        assert_eq!(v["payload"]["universal_bound"], m * n - 1);
    }
}

#[test]
fn reduce_rank_reaches_the_boundary() {
    let dir = TempDir::new().unwrap();
    let f = fixture(&dir, "x.json", r#"{"m":2,"d":[1,1],"A":[[0.1,0],[0,0.1]],"B":[[0,0],[0,0]]}"#);
    let dest = dir.path().join("reduced.json");
    let out = run(&["--json", "reduce-rank", s(&f), "--out", s(&dest)]);
    assert_eq!(exit(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let v = json(&out);
    assert!(v["payload"]["result"]["rank"].as_u64().unwrap() <= 3);
    assert!(dest.exists());
}

#[test]
fn meig_finds_extreme_values_of_indefinite_form() {
    let dir = TempDir::new().unwrap();
    let f = fixture(&dir, "x.json", r#"{"m":3,"d":[1,1],"A":[[0,2],[2,0]],"B":[[0,0],[0,0]]}"#);
    let out = run(&["--json", "--restarts", "16", "meig", s(&f)]);
    assert_eq!(exit(&out), 0);
    let v = json(&out);
    let min = v["payload"]["min_lambda_upper_bound"].as_f64().unwrap();
    assert!((min + 3.0).abs() < 1e-8, "min lambda {min}");
}

#[test]
fn transpose_turns_y_symmetric_into_x_symmetric() {
    let dir = TempDir::new().unwrap();
    let f = fixture(&dir, "x.json", r#"{"m":2,"d":[1,1,1],"A":[[0,0,0],[0,0,0],[0,0,0]],"B":[[0,0,0],[0,0,0],[0,0,0]]}"#);
    let sos = dir.path().join("sos.json");
    assert_eq!(exit(&run(&["decompose", s(&f), "--out", s(&sos)])), 0);
    // The transpose of an x-symmetric form with A = 0 is x-symmetric in the other variable too.
    let out = run(&["--json", "check-psd", "--transpose", s(&f)]);
    assert_eq!(exit(&out), 0);
}

#[test]
fn repeated_runs_are_byte_identical() {
    let dir = TempDir::new().unwrap();
    let f = simple_form(&dir, 3, 3, 5);
    for cmd in ["sos-rank", "meig", "reduce-rank"] {
        let a = run(&["--json", "--seed", "7", cmd, s(&f)]);
        let b = run(&["--json", "--seed", "7", cmd, s(&f)]);
        assert_eq!(exit(&a), 0);
        assert_eq!(a.stdout, b.stdout, "{cmd}");
    }
}

#[test]
fn tolerance_comes_from_environment_and_flag() {
    let dir = TempDir::new().unwrap();
    // Q has eigenvalue -1e-7: PSD only under a loose tolerance.
    let f = fixture(&dir, "x.json", r#"{"m":2,"d":[1,1],"A":[[5e-8,-5e-8],[-5e-8,5e-8]],"B":[[0,1],[1,0]]}"#);
    assert_eq!(exit(&run(&["check-psd", s(&f)])), 2);
    let loose = biquad().env("BIQUAD_TOL", "1e-5").args(["check-psd", s(&f)]).output().unwrap();
    assert_eq!(exit(&loose), 0);
    let overridden = biquad().env("BIQUAD_TOL", "1e-5").args(["--tol", "1e-9", "check-psd", s(&f)]).output().unwrap();
    assert_eq!(exit(&overridden), 2);
}

#[test]
fn bad_inputs_exit_1() {
    let dir = TempDir::new().unwrap();
    let missing = dir.path().join("missing.json");
    assert_eq!(exit(&run(&["check-psd", s(&missing)])), 1);
    let garbage = fixture(&dir, "g.json", "not json");
    assert_eq!(exit(&run(&["sos-rank", s(&garbage)])), 1);
    let out = run(&["--json", "check-psd", s(&garbage)]);
    assert_eq!(json(&out)["status"], "error");
    assert_eq!(exit(&run(&["--tol=-1", "gen-simple", "2", "2", "2"])), 1);
    assert_eq!(exit(&run(&["check-psd"])), 1);
    assert_eq!(exit(&run(&["--help"])), 0);
}

#[test]
fn bench_reports_matching_grams() {
    let out = run(&["--json", "bench", "--m", "12", "--n", "4", "--trials", "2"]);
    assert_eq!(exit(&out), 0);
    let v = json(&out);
    for row in v["payload"]["trials"].as_array().unwrap() {
        assert!(row["gram_gap"].as_f64().unwrap() < 1e-9);
    }
}
