use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn brw(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_brw"))
        .args(args)
        .arg("--out-dir")
        .arg(dir)
        .env_remove("BRW_WORKERS")
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn model_file(dir: &Path, name: &str, body: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, body).unwrap();
    p.to_string_lossy().into_owned()
}

#[test]
fn validate_accepts_builtin_and_files() {
    let d = tempfile::tempdir().unwrap();
    assert_eq!(code(&brw(d.path(), &["validate", "special-0.8"])), 0);
    let f = model_file(
        d.path(),
        "ok.toml",
        "label = \"m\"\nmode = \"subcritical\"\njump = [{ offset = -1, p = \"1/2\" }, { offset = 1, p = \"1/2\" }]\noffspring = [{ count = 0, p = 0.2 }, { count = 1, p = 0.8 }]\n",
    );
    assert_eq!(code(&brw(d.path(), &["validate", &f])), 0);
}

#[test]
fn validate_names_the_mean_zero_invariant() {
    let d = tempfile::tempdir().unwrap();
    let f = model_file(
        d.path(),
        "drift.toml",
        "mode = \"subcritical\"\njump = [{ offset = -1, p = 0.45 }, { offset = 1, p = 0.55 }]\noffspring = [{ count = 0, p = 0.5 }, { count = 1, p = 0.5 }]\n",
    );
    let o = brw(d.path(), &["validate", &f]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("mean zero"), "{}", stderr(&o));
}

#[test]
fn validate_rejects_short_offspring_mass() {
    let d = tempfile::tempdir().unwrap();
    let f = model_file(
        d.path(),
        "short.toml",
        "mode = \"subcritical\"\njump = [{ offset = -1, p = 0.5 }, { offset = 1, p = 0.5 }]\noffspring = [{ count = 0, p = 0.3 }, { count = 1, p = 0.69 }]\n",
    );
    let o = brw(d.path(), &["validate", &f]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("sum to 0.99"));
}

#[test]
fn parse_errors_carry_line_and_column() {
    let d = tempfile::tempdir().unwrap();
    let f = model_file(d.path(), "broken.toml", "label = \"x\"\nmode = subcritical\n");
    let o = brw(d.path(), &["validate", &f]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("line 2, column"), "{}", stderr(&o));
}

#[test]
fn unknown_model_is_a_configuration_error() {
    let d = tempfile::tempdir().unwrap();
    assert_eq!(code(&brw(d.path(), &["solve", "no-such-model"])), 1);
}

fn csv_rows(text: &str) -> Vec<Vec<String>> {
    text.lines()
        .filter(|l| !l.starts_with('#'))
        .skip(1)
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

#[test]
fn solve_writes_the_geometric_tail() {
    let d = tempfile::tempdir().unwrap();
    let o = brw(d.path(), &["solve", "special-0.8", "--horizon", "1000", "--out", "t.csv"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let text = fs::read_to_string(d.path().join("t.csv")).unwrap();
    assert!(text.starts_with("# model:"));
    assert!(text.contains("\nn,u,ell,residual,bracket_gap\n"));
    assert!(text.contains("# N_rep: "));
    let rows = csv_rows(&text);
    let u10: f64 = rows[10][1].parse().unwrap();
    assert!((u10 - 0.0009765625).abs() < 1e-15);
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(d.path().join("t.csv.manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["command"], "solve");
    assert_eq!(manifest["config"]["horizon"], 1000);
    assert!(manifest["timestamp"].is_string());
}

#[test]
fn short_horizon_at_loose_tolerance() {
    // horizon 200 only certifies a window when the tolerance is loose
    let d = tempfile::tempdir().unwrap();
    assert_eq!(code(&brw(d.path(), &["solve", "special-0.8", "--horizon", "200"])), 1);
    let o = brw(d.path(), &["solve", "special-0.8", "--horizon", "200", "--tol", "1e-4", "--out", "s.csv"]);
    assert_eq!(code(&o), 0);
    let rows = csv_rows(&fs::read_to_string(d.path().join("s.csv")).unwrap());
    let u10: f64 = rows[10][1].parse().unwrap();
    assert!((u10 - 0.0009765625).abs() < 1e-4 * 0.0009765625);
}

#[test]
fn horizon_below_the_stencil_is_rejected() {
    let d = tempfile::tempdir().unwrap();
    let o = brw(d.path(), &["solve", "range2", "--horizon", "10"]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("4(L+R)"));
}

#[test]
fn solve_reruns_are_byte_identical() {
    let d = tempfile::tempdir().unwrap();
    let args = ["solve", "period2", "--horizon", "1000", "--tol", "1e-13", "--out", "p.csv"];
    assert_eq!(code(&brw(d.path(), &args)), 0);
    let first = fs::read(d.path().join("p.csv")).unwrap();
    assert_eq!(code(&brw(d.path(), &args)), 0);
    assert_eq!(first, fs::read(d.path().join("p.csv")).unwrap());
}

#[test]
fn solve_writes_first_passage_values() {
    let d = tempfile::tempdir().unwrap();
    let o = brw(d.path(), &["solve", "special-0.5", "--horizon", "600", "--passage-s", "0.5", "--passage-max", "5"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let text = fs::read_to_string(d.path().join("special_binary_m_0.5-passage.csv")).unwrap();
    assert!(text.contains("n,s,phi,depth,truncation_bound"));
    let rows = csv_rows(&text);
    assert_eq!(rows.len(), 6);
    // E(s^tau_1) = (1 - sqrt(1 - s^2)) / s
    let phi1: f64 = rows[1][2].parse().unwrap();
    assert!((phi1 - (1.0 - 0.75f64.sqrt()) / 0.5).abs() < 1e-10);
}

#[test]
fn simulate_output_does_not_depend_on_workers() {
    let d = tempfile::tempdir().unwrap();
    let base = ["simulate", "range2", "--reps", "5000", "--levels", "1..6"];
    let one = brw(d.path(), &[&base[..], &["--workers", "1", "--out", "w1.csv"]].concat());
    let eight = brw(d.path(), &[&base[..], &["--workers", "8", "--out", "w8.csv"]].concat());
    assert_eq!(code(&one), 0);
    assert_eq!(code(&eight), 0);
    let a = fs::read(d.path().join("w1.csv")).unwrap();
    assert_eq!(a, fs::read(d.path().join("w8.csv")).unwrap());
    let text = String::from_utf8(a).unwrap();
    assert!(text.contains("level,point,stderr,ci_low,ci_high,reps,successes,excluded"));
    assert_eq!(csv_rows(&text).len(), 6);
}

#[test]
fn simulate_handles_supercritical_and_g_modes() {
    let d = tempfile::tempdir().unwrap();
    let o = brw(d.path(), &["simulate", "supercritical", "--reps", "3000", "--pop-cap", "64", "--levels", "1,2", "--out", "s.csv"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(fs::read_to_string(d.path().join("s.csv")).unwrap().contains("# accepted:"));
    let o = brw(d.path(), &["simulate", "special-0.8", "--reps", "3000", "--c", "0.3", "--n", "10", "--out", "g.csv"]);
    assert_eq!(code(&o), 0);
    let rows = csv_rows(&fs::read_to_string(d.path().join("g.csv")).unwrap());
    assert_eq!(rows[0][0], "3");
}

#[test]
fn scan_classifies_the_special_model() {
    let d = tempfile::tempdir().unwrap();
    let o = brw(d.path(), &["scan", "special-0.8", "--c", "0.4,0.8", "--out", "scan.csv"]);
    assert_eq!(code(&o), 0);
    let text = fs::read_to_string(d.path().join("scan.csv")).unwrap();
    assert!(text.contains("c,n,g,stderr,class"));
    let threshold: f64 = text
        .lines()
        .find_map(|l| l.strip_prefix("# reference_threshold: "))
        .unwrap()
        .parse()
        .unwrap();
    assert!((threshold - 0.6).abs() < 1e-12);
    let rows = csv_rows(&text);
    assert_eq!(rows.len(), 6);
    assert!(rows[..3].iter().all(|r| r[4] == "plateau"));
    assert!(rows[3..].iter().all(|r| r[4] == "decay"));
}

#[test]
fn report_lists_every_claim() {
    let d = tempfile::tempdir().unwrap();
    let o = brw(d.path(), &["report", "supercritical", "--reps", "20000"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let out = String::from_utf8(o.stdout).unwrap();
    for tag in ["T1a", "T1b", "T1c", "T2a", "T2c", "P1.6"] {
        assert!(out.contains(tag), "{tag} missing from\n{out}");
    }
}

#[test]
fn verify_subset_passes() {
    let d = tempfile::tempdir().unwrap();
    let o = brw(d.path(), &["verify", "--only", "A1,A3,A5,A10"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stdout));
}

#[test]
fn verify_catches_a_negated_q() {
    let d = tempfile::tempdir().unwrap();
    let o = brw(d.path(), &["verify", "--only", "A1", "--inject-fault", "negate-q"]);
    assert_eq!(code(&o), 3);
    assert!(stderr(&o).contains("A1"));
    assert!(String::from_utf8(o.stdout).unwrap().contains("A1   FAIL"));
}

#[test]
fn verify_rejects_unknown_criteria() {
    let d = tempfile::tempdir().unwrap();
    assert_eq!(code(&brw(d.path(), &["verify", "--only", "A99"])), 1);
}
