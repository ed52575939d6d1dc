use std::path::Path;
use std::process::{Command, Output};

const SCENARIO: &str = r#"{
    "modes": [
        {"omega_m_GHz": 10, "kappa_MHz": 1, "T_mK": 30, "K_tilde_MHz": 1.5},
        {"omega_m_GHz": 10, "kappa_MHz": 1, "T_mK": 30}
    ],
    "coupling": {"gamma_R_MHz": 10, "D": 1, "kd": 0},
    "measurement": {"eta_L": 1, "eta_R": 1, "theta_L": "0.5pi", "theta_R": 0},
    "feedback": {"gains_MHz": [0, 0, 0, 0, 20, 20, 20, 20]},
    "sweep": {
        "axis": "gain_R1", "lo": 0, "hi": 40, "points": 5, "mpa": "asymmetric",
        "series": [{"label": "cascade"}]
    },
    "solver": {"trajectory": {"t_final_relax": 4, "burn_in_relax": 1, "dump": 2}}
}"#;

fn magsteer(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_magsteer")).args(args).current_dir(dir).output().unwrap()
}

fn setup() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("s.json"), SCENARIO).unwrap();
    dir
}

fn stdout(o: &Output) -> String {
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    String::from_utf8(o.stdout.clone()).unwrap()
}

#[test]
fn steady_prints_one_row() {
    let dir = setup();
    let text = stdout(&magsteer(&["steady", "--config", "s.json"], dir.path()));
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 2);
    assert!(lines[0].starts_with("series,axis,value,E_n"));
    assert!(lines[1].starts_with(",none,"));
}

#[test]
fn sweep_writes_csv_and_summary() {
    let dir = setup();
    let o = magsteer(&["sweep", "--config", "s.json", "--out", "t.csv", "--summary", "t.json"], dir.path());
    assert!(stdout(&o).is_empty());
    let csv = std::fs::read_to_string(dir.path().join("t.csv")).unwrap();
    assert_eq!(csv.lines().count(), 6);
    let summary: serde_json::Value = serde_json::from_slice(&std::fs::read(dir.path().join("t.json")).unwrap()).unwrap();
    assert_eq!(summary["command"], "sweep");
    assert_eq!(summary["rows"], 5);
}

#[test]
fn feedback_reports_fidelity() {
    let dir = setup();
    let text = stdout(&magsteer(&["feedback", "--config", "s.json"], dir.path()));
    let last = text.lines().last().unwrap();
    let f: f64 = last.rsplit(',').next().unwrap().parse().unwrap();
    assert!(f > 0.9 && f <= 1.0, "{last}");
}

#[test]
fn trajectory_dumps_are_deterministic() {
    let dir = setup();
    let run = |prefix: &str| {
        let report = stdout(&magsteer(&["trajectory", "--config", "s.json", "--n-traj", "4", "--seed", "9", "--out", prefix], dir.path()));
        let a = std::fs::read(dir.path().join(format!("{prefix}_0.csv"))).unwrap();
        let b = std::fs::read(dir.path().join(format!("{prefix}_1.csv"))).unwrap();
        assert!(!dir.path().join(format!("{prefix}_2.csv")).exists());
        (report, a, b)
    };
    let (r1, a1, b1) = run("x");
    let (r2, a2, b2) = run("y");
    assert_eq!((&r1, &a1, &b1), (&r2, &a2, &b2));
    assert_ne!(a1, b1);
    let header = String::from_utf8(a1).unwrap();
    assert!(header.starts_with("t,x1,p1,x2,p2,I_L,I_R\n"));
    let rep: serde_json::Value = serde_json::from_str(&r1).unwrap();
    assert_eq!(rep["n_traj"], 4);
    assert_eq!(rep["seed"], 9);
}

#[test]
fn preset_emits_a_config_that_runs() {
    let dir = setup();
    let o = magsteer(&["preset", "fig2a", "--out", "p.csv", "--emit-config", "p.json"], dir.path());
    stdout(&o);
    let preset_csv = std::fs::read_to_string(dir.path().join("p.csv")).unwrap();
    let sweep_csv = stdout(&magsteer(&["sweep", "--config", "p.json"], dir.path()));
    assert_eq!(preset_csv, sweep_csv);
}

#[test]
fn literal_flag_changes_measured_rows() {
    let dir = setup();
    let scenario = SCENARIO.replace("\"D\": 1", "\"D\": 0.5");
    std::fs::write(dir.path().join("half.json"), scenario).unwrap();
    let plain = stdout(&magsteer(&["steady", "--config", "half.json"], dir.path()));
    let literal = stdout(&magsteer(&["--literal-paper-C", "steady", "--config", "half.json"], dir.path()));
    let printed = stdout(&magsteer(&["--backaction", "full-rate", "steady", "--config", "half.json"], dir.path()));
    assert_ne!(plain, literal);
    assert_ne!(plain, printed);
}

#[test]
fn errors_name_the_problem() {
    let dir = setup();
    std::fs::write(dir.path().join("bad.json"), SCENARIO.replace("\"kd\"", "\"phase\"")).unwrap();
    let o = magsteer(&["steady", "--config", "bad.json"], dir.path());
    assert_eq!(o.status.code(), Some(1));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.starts_with("error:") && err.contains("phase"), "{err}");
    let o = magsteer(&["steady", "--config", "missing.json"], dir.path());
    assert_eq!(o.status.code(), Some(1));
    let o = magsteer(&["--threads", "0", "steady", "--config", "s.json"], dir.path());
    assert!(String::from_utf8_lossy(&o.stderr).contains("--threads"));
}
