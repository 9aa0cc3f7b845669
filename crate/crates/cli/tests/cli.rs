use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

const THREE_STATE: &str = r#"
name = "three-state"

[system]
k = 1
m = 2
speeds = [{ base = [1.0] }, { base = [1.0] }, { base = [2.0] }]
coupling = [[1.0, 2.0]]

[initial]
components = [{ sine = [1.0] }, { sine = [0.0, 0.5] }, { sine = [0.6] }]

[numerics]
nx = 101
cadence = 0.05
"#;

const SCALAR_LOOP: &str = r#"
name = "scalar-loop"
horizon = 2.5

[system]
k = 1
m = 1
speeds = [{ base = [1.0] }, { base = [1.0] }]
coupling = [[0.8]]

[initial]
components = [{ sine = [0.8] }, { sine = [1.0, 0.3] }]

[numerics]
nx = 81
snapshots = [0.5, 1.25]

[lyapunov]
q = [2.0]
lambda = [2.0]
"#;

const ZERO: &str = r#"
name = "zero"

[system]
k = 1
m = 1
speeds = [{ base = [1.0] }, { base = [1.5] }]
coupling = [[0.5]]

[initial]
components = [{}, {}]

[numerics]
nx = 51

[lyapunov]
gamma = 4.0
"#;

fn hypstab(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hypstab"))
        .args(args)
        .env("HYPSTAB_OUT_DIR", out)
        .output()
        .expect("binary runs")
}

fn scenario(dir: &TempDir, name: &str, body: &str) -> PathBuf {
    let path = dir.path().join(name);
    fs::write(&path, body).unwrap();
    path
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn synth_reports_the_single_map_and_optimal_time() {
    let dir = TempDir::new().unwrap();
    let path = scenario(&dir, "s.toml", THREE_STATE);
    let out = hypstab(&["synth", path.to_str().unwrap()], dir.path());
    assert!(out.status.success(), "{}", stderr(&out));
    let text = stdout(&out);
    // B = [1 2]: the last row solved for w_3 gives w_3 = -(1/2) w_2.
    assert!(text.contains("M_1 drives w_3(t, 1) from (w_2): [-0.500000]"), "{text}");
    // a_{2,3}(1) = λ_2 / λ_3.
    assert!(text.contains("a_{2,3}(1) = 0.500000"), "{text}");
    // τ = (1, 1, 1/2), T_opt = max(τ_1 + τ_3, τ_2).
    let t_opt = f64::max(1.0 + 0.5, 1.0);
    assert!(text.contains(&format!("T_opt = {t_opt:.6}")), "{text}");

    let json: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("three-state.synth.json")).unwrap()).unwrap();
    assert_eq!(json["class_member"], true);
    assert_eq!(json["t_opt"].as_f64().unwrap(), t_opt);
    assert_eq!(json["maps"][0]["row"][0].as_f64().unwrap(), -0.5);
    assert_eq!(json["maps"][0]["samples"][0]["a"].as_f64().unwrap(), 0.5);
}

#[test]
fn zero_data_gives_an_all_zero_trace() {
    let dir = TempDir::new().unwrap();
    let path = scenario(&dir, "z.toml", ZERO);
    let out = hypstab(&["simulate", path.to_str().unwrap()], dir.path());
    assert!(out.status.success(), "{}", stderr(&out));
    let csv = fs::read_to_string(dir.path().join("zero.trace.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("t,l1,l2,lq,linf,lyapunov,vnorm"));
    let mut rows = 0;
    for line in lines {
        for field in line.split(',').skip(1) {
            assert_eq!(field.parse::<f64>().unwrap(), 0.0, "{line}");
        }
        rows += 1;
    }
    assert!(rows > 10);
}

#[test]
fn simulate_output_is_byte_identical_across_runs() {
    let dir = TempDir::new().unwrap();
    let path = scenario(&dir, "s.toml", SCALAR_LOOP);
    let (a, b) = (TempDir::new().unwrap(), TempDir::new().unwrap());
    for out_dir in [&a, &b] {
        let out = hypstab(&["simulate", path.to_str().unwrap()], out_dir.path());
        assert!(out.status.success(), "{}", stderr(&out));
    }
    let files = [
        "scalar-loop.trace.csv",
        "scalar-loop.snapshot.t0.5.csv",
        "scalar-loop.snapshot.t1.25.csv",
    ];
    for f in files {
        let x = fs::read(a.path().join(f)).unwrap();
        let y = fs::read(b.path().join(f)).unwrap();
        assert!(!x.is_empty());
        assert_eq!(x, y, "{f} differs");
    }
    let snapshot = fs::read_to_string(a.path().join("scalar-loop.snapshot.t0.5.csv")).unwrap();
    assert!(snapshot.starts_with("x,w1,w2\n"));
    assert_eq!(snapshot.lines().count(), 1 + 81);
}

#[test]
fn snapshot_flag_overrides_the_scenario() {
    let dir = TempDir::new().unwrap();
    let path = scenario(&dir, "s.toml", SCALAR_LOOP);
    let out = hypstab(&["simulate", path.to_str().unwrap(), "--snapshots", "1,2"], dir.path());
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(dir.path().join("scalar-loop.snapshot.t1.csv").exists());
    assert!(dir.path().join("scalar-loop.snapshot.t2.csv").exists());
    assert!(!dir.path().join("scalar-loop.snapshot.t0.5.csv").exists());
}

#[test]
fn sweep_writes_one_trace_per_cell_and_a_summary() {
    let dir = TempDir::new().unwrap();
    let path = scenario(&dir, "s.toml", THREE_STATE);
    let args = ["sweep", path.to_str().unwrap(), "--lambda", "1,2", "--q", "1,2", "--nx", "41,81"];
    let out = hypstab(&args, dir.path());
    assert!(out.status.success(), "{}", stderr(&out));
    for l in [1, 2] {
        for q in [1, 2] {
            for nx in [41, 81] {
                assert!(dir.path().join(format!("three-state.sweep.L{l}.q{q}.nx{nx}.csv")).exists());
            }
        }
    }
    let summary = fs::read_to_string(dir.path().join("three-state.sweep.csv")).unwrap();
    assert_eq!(summary.lines().count(), 1 + 8);
    assert!(summary.lines().skip(1).all(|l| l.ends_with(",PASS")));

    let again = TempDir::new().unwrap();
    assert!(hypstab(&args, again.path()).status.success());
    assert_eq!(summary, fs::read_to_string(again.path().join("three-state.sweep.csv")).unwrap());
}

#[test]
fn failing_decay_exits_with_one_and_names_the_verdict() {
    let dir = TempDir::new().unwrap();
    // Γ = 1 is below the value the boundary terms need for Λ = 4.
    let body = THREE_STATE.replace("cadence = 0.05", "cadence = 0.05\nsolver = \"exact\"")
        + "\n[lyapunov]\ngamma = 1.0\nq = [2.0]\nlambda = [4.0]\n";
    let path = scenario(&dir, "s.toml", &body);
    let out = hypstab(&["simulate", path.to_str().unwrap()], dir.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("decay of V violated"), "{}", stderr(&out));
}

#[test]
fn input_errors_exit_with_two() {
    let dir = TempDir::new().unwrap();
    let missing = dir.path().join("missing.toml");
    assert_eq!(hypstab(&["synth", missing.to_str().unwrap()], dir.path()).status.code(), Some(2));

    let bad = scenario(&dir, "bad.toml", &THREE_STATE.replace("k = 1", "k = 0"));
    let out = hypstab(&["synth", bad.to_str().unwrap()], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("line"), "{}", stderr(&out));

    assert_eq!(hypstab(&["sweep"], dir.path()).status.code(), Some(2));
    assert_eq!(hypstab(&["verify", "--suite", "both"], dir.path()).status.code(), Some(2));
}

#[test]
fn nonlinear_feedback_rejects_incompatible_data() {
    let dir = TempDir::new().unwrap();
    let body = SCALAR_LOOP.replace("name = \"scalar-loop\"", "name = \"nl\"\nfeedback = \"nonlinear\"\ndelta = 0.2");
    let path = scenario(&dir, "nl.toml", &body);
    let out = hypstab(&["synth", path.to_str().unwrap()], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("compatible"), "{}", stderr(&out));
}

#[test]
fn scenario_output_dir_is_used_without_the_override() {
    let dir = TempDir::new().unwrap();
    let target = dir.path().join("results");
    let body = format!("output_dir = {:?}\n{ZERO}", target.to_str().unwrap());
    let path = scenario(&dir, "z.toml", &body);
    let out = Command::new(env!("CARGO_BIN_EXE_hypstab"))
        .args(["synth", path.to_str().unwrap()])
        .env_remove("HYPSTAB_OUT_DIR")
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(target.join("zero.synth.json").exists());
}

#[test]
fn shipped_scenarios_synthesize() {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios");
    let dir = TempDir::new().unwrap();
    let mut seen = 0;
    for entry in fs::read_dir(root).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "toml") {
            let out = hypstab(&["synth", path.to_str().unwrap()], dir.path());
            assert!(out.status.success(), "{}: {}", path.display(), stderr(&out));
            seen += 1;
        }
    }
    assert!(seen >= 4);
}
